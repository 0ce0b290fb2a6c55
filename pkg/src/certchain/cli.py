"""``certchain`` command line.

Every command prints JSON on stdout. Failures print
``{"error": {"code": ..., "message": ...}}`` on stderr and exit 1; usage
errors exit 2. Mutating commands sign one transaction, mine it into a new
block and append that block to the chain file.

Defaults for ``--chain`` and ``--store`` come from ``CERTCHAIN_CHAIN`` and
``CERTCHAIN_STORE``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Callable

from certchain import identity, mudfile, registry, store, vulndisc
from certchain.chain import (
    BlockRejected,
    CallContract,
    ChainError,
    Client,
    DeployContract,
    GenesisConfig,
    KeyPair,
    Network,
    Node,
    NodeRole,
    append_block,
    derive_address,
    from_hex,
    generate_identity,
    load_chain,
    save_chain,
    to_hex,
    validate_chain,
)
from certchain.chain.block import ZERO_ADDRESS
from certchain.chain.tx import Payload, Transfer
from certchain.controller import AuthenticationError, Controller, PacketFlow, make_auth_proof
from certchain.scenario import ScenarioError, load_scenario, run_scenario


class CliError(Exception):
    def __init__(self, code: str, message: str = "", **extra: Any) -> None:
        self.code = code
        self.message = message
        self.extra = extra
        super().__init__(message or code)


def _emit(obj: Any) -> None:
    print(json.dumps(obj, indent=None, separators=(",", ":")))


# keys and chain plumbing


def _load_key(path: str) -> KeyPair:
    d = json.loads(Path(path).read_text())
    return KeyPair.from_private_key(from_hex(d["private_key"]))


def _key_json(kp: KeyPair) -> dict[str, str]:
    return {
        "address": to_hex(kp.address),
        "public_key": to_hex(kp.public_key),
        "private_key": to_hex(kp.private_key),
    }


class ChainSession:
    """A chain file loaded into a single-validator network."""

    def __init__(self, path: str, miner: str | None = None) -> None:
        self.path = path
        if not Path(path).exists():
            raise CliError("NoChain", f"chain file {path} does not exist; run 'chain init'")
        self.config, blocks = load_chain(path)
        if miner is not None:
            miner_addr = from_hex(miner)
        elif self.config.validators:
            miner_addr = self.config.validators[0]
        else:
            miner_addr = ZERO_ADDRESS
        self.validator = Node(self.config, NodeRole.VALIDATOR, "cli", miner=miner_addr)
        for b in blocks[1:]:
            self.validator.validate_and_append(b)
        self.network = Network([self.validator])

    @property
    def state(self):
        return self.validator.state

    def client(self, key: KeyPair) -> Client:
        return Client(key, self.network)

    def commit(self, client: Client, payload: Payload) -> dict[str, Any]:
        before = self.validator.height
        receipt = client.transact(payload, check=False)
        for b in self.validator.chain()[before + 1:]:
            append_block(self.path, b)
        out = {
            "block": {"height": self.validator.head.height, "hash": to_hex(self.validator.head.block_hash)},
            "receipt": receipt.to_dict(),
        }
        if not receipt.ok:
            raise CliError(receipt.error_code or "Reverted", receipt.error_message, **out)
        return out


def _session(args: argparse.Namespace) -> ChainSession:
    if not args.chain:
        raise CliError("NoChain", "pass --chain or set CERTCHAIN_CHAIN")
    return ChainSession(args.chain, getattr(args, "miner", None))


def _store(args: argparse.Namespace) -> store.ContentStore:
    if not args.store:
        raise CliError("NoStore", "pass --store or set CERTCHAIN_STORE")
    return store.ContentStore(args.store)


def export_audit(chain_file: str | Path) -> list[dict[str, Any]]:
    """Every contract event of a validated chain, in chain order."""
    config, blocks = load_chain(chain_file)
    _, receipts = validate_chain(config, blocks)
    out = []
    for block_receipts in receipts:
        for r in block_receipts:
            for ev in r.events:
                d = ev.to_dict()
                d["tx"] = to_hex(r.tx_hash)
                out.append(d)
    return out


# commands


def cmd_keygen(args: argparse.Namespace) -> Any:
    kp = KeyPair.from_seed(args.seed) if args.seed else generate_identity()
    data = _key_json(kp)
    if args.out:
        Path(args.out).write_text(json.dumps(data, indent=2) + "\n")
        os.chmod(args.out, 0o600)
    return {"address": data["address"], "public_key": data["public_key"]}


def cmd_chain_init(args: argparse.Namespace) -> Any:
    config = GenesisConfig.load(args.genesis)
    if Path(args.chain).exists() and not args.force:
        raise CliError("Exists", f"{args.chain} already exists")
    save_chain(args.chain, config, [])
    g = config.genesis_block()
    return {"genesis": to_hex(g.block_hash), "config": config.to_dict()}


def cmd_chain_info(args: argparse.Namespace) -> Any:
    s = _session(args)
    out = s.state.summary()
    out["head"] = to_hex(s.validator.head.block_hash)
    return out


def cmd_chain_verify(args: argparse.Namespace) -> Any:
    config, blocks = load_chain(args.chain)
    state, _ = validate_chain(config, blocks)
    return {"valid": True, "height": state.height}


def cmd_chain_transfer(args: argparse.Namespace) -> Any:
    s = _session(args)
    return s.commit(s.client(_load_key(args.key)), Transfer(from_hex(args.to), args.amount))


def cmd_chain_mine(args: argparse.Namespace) -> Any:
    s = _session(args)
    for _ in range(args.blocks):
        block = s.network.mine()
        append_block(s.path, block)
    return {"height": s.validator.height, "hash": to_hex(s.validator.head.block_hash)}


def cmd_chain_audit(args: argparse.Namespace) -> Any:
    for ev in export_audit(args.chain):
        _emit(ev)
    return None


def _call(s: ChainSession, key: str, contract: bytes, fn: str, *fargs: Any) -> dict[str, Any]:
    return s.commit(s.client(_load_key(key)), CallContract(contract, fn, tuple(fargs)))


def _deploy(s: ChainSession, key: str, kind: str, *dargs: Any) -> dict[str, Any]:
    out = s.commit(s.client(_load_key(key)), DeployContract(kind, tuple(dargs)))
    out["contract"] = out["receipt"]["contract"]
    return out


def cmd_identity_deploy(args: argparse.Namespace) -> Any:
    s = _session(args)
    return _deploy(s, args.key, identity.IdentificationAuthority.kind, args.name, args.certificate or "")


def cmd_identity_issue(args: argparse.Namespace) -> Any:
    s = _session(args)
    if args.certificate:
        cert = args.certificate
    elif args.subject_key:
        cert = identity.SubjectCertificate.for_keypair(
            _load_key(args.subject_key), identity.Role(args.role), args.metadata or ""
        ).encode()
    elif args.subject_public_key:
        pub = from_hex(args.subject_public_key)
        cert = identity.SubjectCertificate(derive_address(pub), pub, identity.Role(args.role), args.metadata or "").encode()
    else:
        raise CliError("Usage", "one of --certificate, --subject-key, --subject-public-key is required")
    return _call(s, args.key, from_hex(args.contract), "issueCertificate", args.subject_name, cert)


def cmd_identity_revoke(args: argparse.Namespace) -> Any:
    s = _session(args)
    return _call(s, args.key, from_hex(args.contract), "revokeCertificate", args.subject_name)


def cmd_identity_verify(args: argparse.Namespace) -> Any:
    s = _session(args)
    root = from_hex(args.root)
    leaf = identity.find_issuance(s.state, from_hex(args.subject), within=from_hex(args.contract) if args.contract else None)
    if leaf is None:
        raise CliError("NotIssued", "no issuance for this subject")
    chain = identity.resolve_chain(s.state, root, *leaf)
    verdict = identity.verify_chain(s.state, root, chain)
    out = {"valid": verdict.valid, "verdict": str(verdict), "chain": chain.to_dict()}
    if not verdict:
        raise CliError("ChainInvalid", str(verdict), **out)
    return out


def cmd_registry_deploy(args: argparse.Namespace) -> Any:
    s = _session(args)
    return _deploy(s, args.key, registry.DeviceRegistry.kind, args.name, from_hex(args.id_contract), args.device_id)


def cmd_registry_set_body(args: argparse.Namespace) -> Any:
    s = _session(args)
    return _call(s, args.key, from_hex(args.contract), "setAssessmentBody",
                 from_hex(args.body), args.body_name, from_hex(args.body_id_contract))


def cmd_registry_register(args: argparse.Namespace) -> Any:
    s = _session(args)
    if args.file:
        location, digest = _store(args).put(Path(args.file).read_bytes())
    elif args.location and args.hash:
        location, digest = args.location, from_hex(args.hash)
    else:
        raise CliError("Usage", "pass --file, or both --location and --hash")
    return _call(s, args.key, from_hex(args.contract), "registerFile", args.type, location, digest)


def cmd_registry_query(args: argparse.Namespace) -> Any:
    s = _session(args)
    reg = registry.registry(s.state, from_hex(args.contract))
    out: dict[str, Any] = {
        "manufacturer": to_hex(reg.manufacturer),
        "manufacturerName": reg.manufacturer_name,
        "manufacturerIdContract": to_hex(reg.manufacturer_id_contract),
        "deviceId": reg.device_id,
        "assessmentBody": to_hex(reg.assessment_body),
        "assessmentBodyName": reg.assessment_body_name,
        "assessmentBodyIdContract": to_hex(reg.assessment_body_id_contract),
    }
    if args.type:
        latest = reg.latest_file(args.type)
        out["latest"] = latest.to_dict() if latest else None
    return out


def cmd_registry_events(args: argparse.Namespace) -> Any:
    s = _session(args)
    for ev in registry.registry(s.state, from_hex(args.contract)).history(args.type):
        _emit(ev.to_dict())
    return None


def cmd_store_put(args: argparse.Namespace) -> Any:
    location, digest = _store(args).put(Path(args.file).read_bytes())
    return {"location": location, "hash": to_hex(digest)}


def cmd_store_get(args: argparse.Namespace) -> Any:
    data = _store(args).get(args.location)
    if args.out:
        Path(args.out).write_bytes(data)
        return {"location": args.location, "bytes": len(data)}
    sys.stdout.buffer.write(data)
    return None


def cmd_store_verify(args: argparse.Namespace) -> Any:
    ok = store.verify(Path(args.file).read_bytes(), from_hex(args.hash))
    if not ok:
        raise CliError("HashMismatch", args.file)
    return {"ok": True}


def _mud_bytes(spec: str) -> bytes:
    if spec.startswith("fixture:"):
        return mudfile.fixture(spec[len("fixture:"):])
    return Path(spec).read_bytes()


def cmd_mud_check(args: argparse.Namespace) -> Any:
    m = mudfile.parse(_mud_bytes(args.file))
    violations = mudfile.validate(m)
    if violations:
        raise CliError("MudInvalid", "; ".join(map(str, violations)),
                       violations=[{"code": v.code, "path": v.path, "message": v.message} for v in violations])
    return {
        "ok": True,
        "mud-url": m.mud_url,
        "mfg-name": m.mfg_name,
        "cache-validity": m.cache_validity,
        "from-device-policy": list(m.from_device_policy),
        "to-device-policy": list(m.to_device_policy),
    }


def cmd_mud_compile(args: argparse.Namespace) -> Any:
    m = mudfile.parse(_mud_bytes(args.file))
    inventory = {}
    if args.inventory:
        inventory = {from_hex(a): mfg for a, mfg in json.loads(Path(args.inventory).read_text()).items()}
    try:
        rules = mudfile.compile_rules(m, inventory)
    except mudfile.MudInvalid as e:
        raise CliError("MudInvalid", str(e)) from e
    return {"rules": [r.to_dict() for r in rules]}


def cmd_controller_run(args: argparse.Namespace) -> Any:
    """Onboard the scenario's devices against an existing chain and store, then filter its flows."""
    s = _session(args)
    doc = json.loads(Path(args.scenario).read_text())
    base = Path(args.scenario).parent
    ctl = Controller(s.validator, _store(args), from_hex(doc["root"]),
                     {from_hex(a): m for a, m in doc.get("inventory", {}).items()})
    for dev in doc.get("devices", []):
        kp = _load_key(str(base / dev["key"]))
        cred = dev.get("credential") or identity.SubjectCertificate.for_keypair(
            kp, identity.Role.DEVICE, dev.get("metadata", "")
        ).encode()
        proof = make_auth_proof(kp, dev["device-id"], cred, from_hex(dev["registry"]), ctl.issue_challenge())
        try:
            rec = ctl.onboard(proof)
            _emit({"onboard": to_hex(kp.address), "status": rec.status.value, "reason": rec.reason, "detail": rec.detail})
        except AuthenticationError as e:
            _emit({"onboard": to_hex(kp.address), "status": "Rejected", "reason": e.code})
    for f in doc.get("flows", []):
        flow = PacketFlow(from_hex(f["src"]), from_hex(f["dst"]), int(f["protocol"]), int(f["src-port"]), int(f["dst-port"]))
        entry = {"flow": flow.to_dict()}
        entry.update(ctl.decide(flow).to_dict())
        _emit(entry)
    return None


def _disclosure_call(args: argparse.Namespace, status: vulndisc.Status) -> Any:
    s = _session(args)
    out = _call(s, args.key, from_hex(args.registry), "setDisclosureStatus", from_hex(args.id), status.value)
    out["disclosure"] = vulndisc.get_disclosure(s.state, from_hex(args.registry), from_hex(args.id)).to_dict()
    return out


def cmd_vuln_disclose(args: argparse.Namespace) -> Any:
    s = _session(args)
    reg_addr = from_hex(args.registry)
    reg = registry.registry(s.state, reg_addr)
    if args.manufacturer_public_key:
        pub = from_hex(args.manufacturer_public_key)
    else:
        found = identity.find_issuance(s.state, reg.manufacturer)
        if found is None:
            raise CliError("NoManufacturerKey", "manufacturer has no on-chain certificate; pass --manufacturer-public-key")
        pub = identity.SubjectCertificate.parse(found[1].subject_certificate).public_key
    envelope = vulndisc.encrypt_for(pub, Path(args.details).read_bytes())
    location, digest = _store(args).put(envelope)
    out = _call(s, args.key, reg_addr, "discloseVulnerability", location, digest)
    out["id"] = out["receipt"]["events"][0]["id"]
    return out


def cmd_vuln_decrypt(args: argparse.Namespace) -> Any:
    s = _session(args)
    d = vulndisc.get_disclosure(s.state, from_hex(args.registry), from_hex(args.id))
    envelope = _store(args).get(d.ciphertext_location)
    if not store.verify(envelope, d.ciphertext_hash):
        raise CliError("HashMismatch", d.ciphertext_location)
    try:
        plain = vulndisc.decrypt_with(_load_key(args.key), envelope)
    except vulndisc.DecryptionError as e:
        raise CliError("DecryptionFailed", str(e)) from e
    sys.stdout.buffer.write(plain)
    return None


def cmd_vuln_feed(args: argparse.Namespace) -> Any:
    return vulndisc.export_feed(_session(args).state)


def cmd_scenario_run(args: argparse.Namespace) -> Any:
    doc = load_scenario(args.file)
    store_dir = args.store or tempfile.mkdtemp(prefix="certchain-store-")
    world, results = run_scenario(doc, store_dir, base=Path(args.file).parent)
    if args.chain_out:
        save_chain(args.chain_out, world.config, world.observer.chain())
    for r in results:
        if r and r["op"] == "filter":
            for entry in r["decisions"]:
                _emit(entry)
        elif r and args.verbose:
            _emit(r)
    return None


# parser


def _env(name: str) -> str | None:
    return os.environ.get(name) or None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="certchain", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def chain_opts(sp: argparse.ArgumentParser, miner: bool = False) -> None:
        sp.add_argument("--chain", default=_env("CERTCHAIN_CHAIN"), help="chain file (NDJSON)")
        if miner:
            sp.add_argument("--miner", help="validator address credited for the new block")

    def store_opts(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--store", default=_env("CERTCHAIN_STORE"), help="store directory")

    def group(name: str, help: str) -> argparse._SubParsersAction:
        g = sub.add_parser(name, help=help)
        return g.add_subparsers(dest="action", required=True)

    def add(parent: argparse._SubParsersAction, name: str, fn: Callable, help: str = "") -> argparse.ArgumentParser:
        sp = parent.add_parser(name, help=help)
        sp.set_defaults(fn=fn)
        return sp

    k = sub.add_parser("keygen", help="create a keypair file")
    k.add_argument("--out")
    k.add_argument("--seed", help="derive the key from a seed (testing only)")
    k.set_defaults(fn=cmd_keygen)

    ch = group("chain", "ledger operations")
    sp = add(ch, "init", cmd_chain_init, "create a chain file from a genesis config")
    sp.add_argument("--genesis", required=True)
    sp.add_argument("--force", action="store_true")
    chain_opts(sp)
    sp = add(ch, "info", cmd_chain_info)
    chain_opts(sp)
    sp = add(ch, "verify", cmd_chain_verify, "revalidate every block")
    chain_opts(sp)
    sp = add(ch, "transfer", cmd_chain_transfer)
    sp.add_argument("--key", required=True)
    sp.add_argument("--to", required=True)
    sp.add_argument("--amount", type=int, required=True)
    chain_opts(sp, miner=True)
    sp = add(ch, "mine", cmd_chain_mine, "mine empty blocks")
    sp.add_argument("--blocks", type=int, default=1)
    chain_opts(sp, miner=True)
    sp = add(ch, "audit", cmd_chain_audit, "export all contract events as JSON lines")
    chain_opts(sp)

    idg = group("identity", "identification authorities")
    sp = add(idg, "deploy", cmd_identity_deploy)
    sp.add_argument("--key", required=True)
    sp.add_argument("--name", required=True)
    sp.add_argument("--certificate")
    chain_opts(sp, miner=True)
    sp = add(idg, "issue", cmd_identity_issue)
    sp.add_argument("--key", required=True)
    sp.add_argument("--contract", required=True)
    sp.add_argument("--subject-name", required=True)
    sp.add_argument("--certificate")
    sp.add_argument("--subject-key")
    sp.add_argument("--subject-public-key")
    sp.add_argument("--role", choices=[r.value for r in identity.Role], default=identity.Role.DEVICE.value)
    sp.add_argument("--metadata")
    chain_opts(sp, miner=True)
    sp = add(idg, "revoke", cmd_identity_revoke)
    sp.add_argument("--key", required=True)
    sp.add_argument("--contract", required=True)
    sp.add_argument("--subject-name", required=True)
    chain_opts(sp, miner=True)
    sp = add(idg, "verify", cmd_identity_verify, "resolve and verify a subject's chain to the root")
    sp.add_argument("--root", required=True)
    sp.add_argument("--subject", required=True, help="subject address")
    sp.add_argument("--contract", help="authority that issued the subject's certificate")
    chain_opts(sp)

    rg = group("registry", "device registries")
    sp = add(rg, "deploy", cmd_registry_deploy)
    sp.add_argument("--key", required=True)
    sp.add_argument("--name", required=True)
    sp.add_argument("--id-contract", required=True)
    sp.add_argument("--device-id", required=True)
    chain_opts(sp, miner=True)
    sp = add(rg, "set-body", cmd_registry_set_body)
    sp.add_argument("--key", required=True)
    sp.add_argument("--contract", required=True)
    sp.add_argument("--body", required=True)
    sp.add_argument("--body-name", required=True)
    sp.add_argument("--body-id-contract", required=True)
    chain_opts(sp, miner=True)
    sp = add(rg, "register", cmd_registry_register)
    sp.add_argument("--key", required=True)
    sp.add_argument("--contract", required=True)
    sp.add_argument("--type", required=True)
    sp.add_argument("--file", help="store this file and register it")
    sp.add_argument("--location")
    sp.add_argument("--hash")
    chain_opts(sp, miner=True)
    store_opts(sp)
    sp = add(rg, "query", cmd_registry_query)
    sp.add_argument("--contract", required=True)
    sp.add_argument("--type")
    chain_opts(sp)
    sp = add(rg, "events", cmd_registry_events)
    sp.add_argument("--contract", required=True)
    sp.add_argument("--type")
    chain_opts(sp)

    st = group("store", "off-chain content store")
    sp = add(st, "put", cmd_store_put)
    sp.add_argument("file")
    store_opts(sp)
    sp = add(st, "get", cmd_store_get)
    sp.add_argument("location")
    sp.add_argument("--out")
    store_opts(sp)
    sp = add(st, "verify", cmd_store_verify)
    sp.add_argument("file")
    sp.add_argument("--hash", required=True)

    md = group("mud", "MUD files")
    mud_help = "MUD file path, or fixture:<name> for a bundled fixture"
    sp = add(md, "check", cmd_mud_check)
    sp.add_argument("file", help=mud_help)
    sp = add(md, "compile", cmd_mud_compile)
    sp.add_argument("file", help=mud_help)
    sp.add_argument("--inventory", help="JSON object mapping device address to mfg-name")

    ct = group("controller", "SDN controller")
    sp = add(ct, "run", cmd_controller_run)
    sp.add_argument("--scenario", required=True)
    chain_opts(sp)
    store_opts(sp)

    vg = group("vuln", "vulnerability disclosure")
    sp = add(vg, "disclose", cmd_vuln_disclose)
    sp.add_argument("--key", required=True)
    sp.add_argument("--registry", required=True)
    sp.add_argument("--details", required=True, help="file with the vulnerability report")
    sp.add_argument("--manufacturer-public-key")
    chain_opts(sp, miner=True)
    store_opts(sp)
    for name, status in (("ack", vulndisc.A), ("remediate", vulndisc.R), ("publish", vulndisc.P)):
        sp = add(vg, name, lambda a, s=status: _disclosure_call(a, s))
        sp.add_argument("--key", required=True)
        sp.add_argument("--registry", required=True)
        sp.add_argument("--id", required=True)
        chain_opts(sp, miner=True)
    sp = add(vg, "decrypt", cmd_vuln_decrypt)
    sp.add_argument("--key", required=True)
    sp.add_argument("--registry", required=True)
    sp.add_argument("--id", required=True)
    chain_opts(sp)
    store_opts(sp)
    sp = add(vg, "feed", cmd_vuln_feed, "published vulnerabilities as JSON")
    chain_opts(sp)

    sc = group("scenario", "scripted end-to-end runs")
    sp = add(sc, "run", cmd_scenario_run)
    sp.add_argument("file")
    sp.add_argument("--store", default=_env("CERTCHAIN_STORE"))
    sp.add_argument("--chain-out", help="write the resulting chain file here")
    sp.add_argument("--verbose", action="store_true", help="also print non-filter step results")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = args.fn(args)
    except CliError as e:
        _fail(e.code, e.message, **e.extra)
        return 1
    except BlockRejected as e:
        _fail(e.code, e.message, height=e.height)
        return 1
    except ChainError as e:
        _fail(e.code, e.message)
        return 1
    except (mudfile.MudError, store.StoreError, AuthenticationError) as e:
        _fail(getattr(e, "code", type(e).__name__), str(e))
        return 1
    except (ScenarioError, identity.CertificateError, FileNotFoundError, ValueError) as e:
        _fail(type(e).__name__, str(e))
        return 1
    if result is not None:
        _emit(result)
    return 0


def _fail(code: str, message: str, **extra: Any) -> None:
    err: dict[str, Any] = {"code": code, "message": message}
    err.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps({"error": err}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
