from __future__ import annotations

import json
import subprocess
import sys

import pytest

from certchain.cli import export_audit, main
from conftest import REPO, SCENARIO


class Cli:
    def __init__(self, capsys, tmp_path, monkeypatch):
        self.capsys = capsys
        self.dir = tmp_path
        monkeypatch.setenv("CERTCHAIN_CHAIN", str(tmp_path / "chain.ndjson"))
        monkeypatch.setenv("CERTCHAIN_STORE", str(tmp_path / "store"))

    def __call__(self, *argv: str) -> tuple[int, str, str]:
        code = main(list(argv))
        out, err = self.capsys.readouterr()
        return code, out, err

    def ok(self, *argv: str):
        code, out, err = self(*argv)
        assert code == 0, err
        return json.loads(out) if out.strip() else None

    def key(self, name: str) -> str:
        path = self.dir / f"{name}.json"
        if not path.exists():
            self.ok("keygen", "--seed", f"cli/{name}", "--out", str(path))
        return str(path)

    def addr(self, name: str) -> str:
        return json.loads((self.dir / f"{name}.json").read_text())["address"]


@pytest.fixture
def cli(capsys, tmp_path, monkeypatch):
    c = Cli(capsys, tmp_path, monkeypatch)
    for who in ("root", "mfr", "disc", "stranger", "dev", "val"):
        c.key(who)
    genesis = {
        "allocations": [{"address": c.addr(w), "amount": 100} for w in ("root", "mfr", "disc", "stranger")],
        "validators": [c.addr("val")],
    }
    (tmp_path / "genesis.json").write_text(json.dumps(genesis))
    c.ok("chain", "init", "--genesis", str(tmp_path / "genesis.json"))
    return c


def _registry(cli) -> tuple[str, str, str]:
    root = cli.ok("identity", "deploy", "--key", cli.key("root"), "--name", "EU-ID-Service")["contract"]
    cli.ok("identity", "issue", "--key", cli.key("root"), "--contract", root, "--subject-name", "manufacturerA",
           "--subject-key", cli.key("mfr"), "--role", "Manufacturer")
    mfa = cli.ok("identity", "deploy", "--key", cli.key("mfr"), "--name", "manufacturerA")["contract"]
    reg = cli.ok("registry", "deploy", "--key", cli.key("mfr"), "--name", "manufacturerA", "--id-contract", mfa,
                 "--device-id", "temp-sensor-model1")["contract"]
    return root, mfa, reg


def test_keygen_seed_is_deterministic(cli):
    a = cli.ok("keygen", "--seed", "same")
    b = cli.ok("keygen", "--seed", "same")
    assert a == b and len(a["address"]) == 42


def test_chain_info_and_transfer(cli):
    info = cli.ok("chain", "info")
    assert info["height"] == 0
    out = cli.ok("chain", "transfer", "--key", cli.key("root"), "--to", cli.addr("disc"), "--amount", "7")
    assert out["receipt"]["status"] == "ok" and out["block"]["height"] == 1
    assert cli.ok("chain", "info")["balances"][cli.addr("disc")] == 107
    assert cli.ok("chain", "verify") == {"valid": True, "height": 1}


def test_transfer_beyond_balance_is_domain_error(cli):
    code, out, err = cli("chain", "transfer", "--key", cli.key("root"), "--to", cli.addr("disc"), "--amount", "1000")
    assert code == 1
    assert json.loads(err)["error"]["code"] == "InsufficientBalance"


def test_usage_error_exits_2(cli):
    with pytest.raises(SystemExit) as e:
        main(["registry", "register"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["no-such-command"])
    assert e.value.code == 2


def test_registry_register_and_query(cli):
    _, _, reg = _registry(cli)
    out = cli.ok("registry", "register", "--key", cli.key("mfr"), "--contract", reg, "--type", "MUD",
                 "--file", str(REPO / "fixtures" / "temp_sensor_mud.json"))
    assert out["receipt"]["events"][0]["fileType"] == "MUD"
    q = cli.ok("registry", "query", "--contract", reg, "--type", "MUD")
    assert q["deviceId"] == "temp-sensor-model1"
    assert q["latest"]["fileLocation"].startswith("store://")
    cli.capsys.readouterr()
    assert main(["registry", "events", "--contract", reg]) == 0
    lines = cli.capsys.readouterr().out.splitlines()
    assert [json.loads(ln)["fileType"] for ln in lines] == ["MUD"]


def test_unauthorized_register_exits_1(cli):
    _, _, reg = _registry(cli)
    code, out, err = cli("registry", "register", "--key", cli.key("stranger"), "--contract", reg, "--type", "MUD",
                         "--file", str(REPO / "fixtures" / "temp_sensor_mud.json"))
    assert code == 1
    assert json.loads(err)["error"]["code"] == "NotAuthorized"


def test_identity_verify_and_revoke(cli):
    root, mfa, _ = _registry(cli)
    cli.ok("identity", "issue", "--key", cli.key("mfr"), "--contract", mfa, "--subject-name", "dev-1",
           "--subject-key", cli.key("dev"))
    v = cli.ok("identity", "verify", "--root", root, "--subject", cli.addr("dev"), "--contract", mfa)
    assert v["verdict"] == "Valid" and len(v["chain"]) == 2
    cli.ok("identity", "revoke", "--key", cli.key("root"), "--contract", root, "--subject-name", "manufacturerA")
    code, _, err = cli("identity", "verify", "--root", root, "--subject", cli.addr("dev"), "--contract", mfa)
    assert code == 1 and json.loads(err)["error"]["verdict"] == "Revoked(1)"


def test_store_commands(cli, tmp_path):
    f = tmp_path / "blob.bin"
    f.write_bytes(b"blob")
    put = cli.ok("store", "put", str(f))
    got = tmp_path / "back.bin"
    cli.ok("store", "get", put["location"], "--out", str(got))
    assert got.read_bytes() == b"blob"
    assert cli.ok("store", "verify", str(f), "--hash", put["hash"]) == {"ok": True}
    f.write_bytes(b"blub")
    code, _, err = cli("store", "verify", str(f), "--hash", put["hash"])
    assert code == 1 and json.loads(err)["error"]["code"] == "HashMismatch"
    code, _, err = cli("store", "get", "store://" + "0" * 64)
    assert code == 1 and json.loads(err)["error"]["code"] == "NotFound"


def test_mud_check(cli):
    assert cli.ok("mud", "check", str(REPO / "fixtures" / "temp_sensor_mud.json"))["ok"] is True
    assert cli.ok("mud", "check", "fixture:temp_sensor_mud.json")["mfg-name"] == "manufacturerA"
    code, _, err = cli("mud", "check", "fixture:temp_sensor_mud_verbatim.json")
    assert code == 1 and json.loads(err)["error"]["violations"][0]["code"] == "DanglingAclName"
    bad = cli.dir / "bad.json"
    bad.write_text("{")
    code, _, err = cli("mud", "check", str(bad))
    assert code == 1 and json.loads(err)["error"]["code"] == "SyntaxError"


def test_mud_compile(cli, tmp_path):
    inv = tmp_path / "inv.json"
    inv.write_text(json.dumps({"0x" + "bb" * 20: "manufacturerA", "0x" + "cc" * 20: "manufacturerB"}))
    out = cli.ok("mud", "compile", "fixture:temp_sensor_mud.json", "--inventory", str(inv))
    assert [r["peers"] for r in out["rules"]] == [["0x" + "bb" * 20]] * 2


def test_vuln_workflow(cli, tmp_path):
    _, _, reg = _registry(cli)
    details = tmp_path / "vuln.txt"
    details.write_bytes(b"overflow in parser")
    did = cli.ok("vuln", "disclose", "--key", cli.key("disc"), "--registry", reg, "--details", str(details))["id"]
    code, _, err = cli("vuln", "publish", "--key", cli.key("disc"), "--registry", reg, "--id", did)
    assert code == 1 and json.loads(err)["error"]["code"] == "EmbargoActive"
    code, _, err = cli("vuln", "ack", "--key", cli.key("disc"), "--registry", reg, "--id", did)
    assert json.loads(err)["error"]["code"] == "NotManufacturer"
    cli.ok("vuln", "ack", "--key", cli.key("mfr"), "--registry", reg, "--id", did)
    cli.capsys.readouterr()
    assert main(["vuln", "decrypt", "--key", cli.key("mfr"), "--registry", reg, "--id", did]) == 0
    assert cli.capsys.readouterr().out == "overflow in parser"
    code, _, err = cli("vuln", "decrypt", "--key", cli.key("disc"), "--registry", reg, "--id", did)
    assert code == 1 and json.loads(err)["error"]["code"] == "DecryptionFailed"
    cli.ok("vuln", "remediate", "--key", cli.key("mfr"), "--registry", reg, "--id", did)
    out = cli.ok("vuln", "publish", "--key", cli.key("disc"), "--registry", reg, "--id", did)
    assert out["disclosure"]["status"] == "Published"
    feed = cli.ok("vuln", "feed")
    assert [e["id"] for e in feed] == [did]


def test_mine_empty_blocks(cli):
    assert cli.ok("chain", "mine", "--blocks", "3")["height"] == 3


def test_scenario_run_prints_decisions(cli, tmp_path):
    code, out, err = cli("scenario", "run", str(SCENARIO), "--chain-out", str(tmp_path / "s.ndjson"))
    assert code == 0, err
    decisions = [json.loads(ln) for ln in out.splitlines()]
    assert [d["decision"] for d in decisions] == ["Allow", "Deny", "Deny", "Allow"]
    assert decisions[0]["matched-rule-id"] == "mud-37547-v6fr/myman0-frdev"
    audit = export_audit(tmp_path / "s.ndjson")
    assert any(e["event"] == "RegisterFile" and e["fileType"] == "MUD" for e in audit)


def test_scenario_runs_are_reproducible(cli, tmp_path):
    runs = []
    for i in range(2):
        code, out, _ = cli("scenario", "run", str(SCENARIO), "--store", str(tmp_path / f"s{i}"),
                           "--chain-out", str(tmp_path / f"c{i}.ndjson"))
        runs.append(out)
    assert runs[0] == runs[1]
    assert (tmp_path / "c0.ndjson").read_bytes() == (tmp_path / "c1.ndjson").read_bytes()


def test_audit_of_empty_chain_is_empty(cli):
    code, out, err = cli("chain", "audit")
    assert (code, out) == (0, "")


def test_audit_reports_tampered_height(cli, tmp_path):
    cli("scenario", "run", str(SCENARIO), "--chain-out", str(tmp_path / "s.ndjson"))
    lines = (tmp_path / "s.ndjson").read_text().splitlines()
    block = json.loads(lines[4])
    block["timestamp"] += 1
    lines[4] = json.dumps(block, separators=(",", ":"))
    (tmp_path / "bad.ndjson").write_text("\n".join(lines) + "\n")
    code, out, err = cli("chain", "audit", "--chain", str(tmp_path / "bad.ndjson"))
    assert code != 0 and out == ""
    assert json.loads(err)["error"]["height"] == 4


def test_controller_run(cli, tmp_path):
    root, mfa, reg = _registry(cli)
    cli.ok("registry", "register", "--key", cli.key("mfr"), "--contract", reg, "--type", "MUD",
           "--file", str(REPO / "fixtures" / "temp_sensor_mud.json"))
    cli.ok("identity", "issue", "--key", cli.key("mfr"), "--contract", mfa, "--subject-name", "dev-1",
           "--subject-key", cli.key("dev"))
    peer = "0x" + "bb" * 20
    scenario = {
        "root": root,
        "inventory": {peer: "manufacturerA"},
        "devices": [{"key": "dev.json", "device-id": "dev-1", "registry": reg}],
        "flows": [
            {"src": cli.addr("dev"), "dst": peer, "protocol": 17, "src-port": 12, "dst-port": 33},
            {"src": cli.addr("dev"), "dst": peer, "protocol": 6, "src-port": 12, "dst-port": 33},
        ],
    }
    (tmp_path / "ctl.json").write_text(json.dumps(scenario))
    code, out, err = cli("controller", "run", "--scenario", str(tmp_path / "ctl.json"))
    assert code == 0, err
    lines = [json.loads(ln) for ln in out.splitlines()]
    assert lines[0]["status"] == "Onboarded"
    assert [ln["decision"] for ln in lines[1:]] == ["Allow", "Deny"]


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "certchain.cli", "mud", "check", "fixture:temp_sensor_mud.json"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and json.loads(r.stdout)["ok"] is True
