from __future__ import annotations

import itertools

import pytest

from certchain import registry, store, vulndisc
from certchain.chain import ContractReverted, KeyPair
from certchain.scenario import build_world, run_step
from certchain.vulndisc import A, D, P, PATH_EDGES, R, Status
from conftest import ACTORS, setup_steps

EMBARGO = 10
DETAILS = b"CVE-candidate: sensor accepts unauthenticated firmware over UDP/33"


def _disclose(world, details: bytes = DETAILS) -> vulndisc.Disclosure:
    return vulndisc.disclose(world.client("discoverer"), world.labels["registry"], details,
                             world.key("manufacturerA").public_key, world.store)


def _set(world, actor: str, d: vulndisc.Disclosure, status: Status) -> str:
    r = world.client(actor).call(world.labels["registry"], "setDisclosureStatus", d.id, status.value, check=False)
    return r.error_code or "ok"


def _get(world, d):
    return vulndisc.get_disclosure(world.state, world.labels["registry"], d.id)


def _mine_until(world, height: int) -> None:
    while world.validator.height < height:
        world.network.mine()


def _drive_to(world, status: Status) -> vulndisc.Disclosure:
    d = _disclose(world)
    path = {D: [], A: [A], R: [A, R], P: [A, R, P]}[status]
    for s in path:
        assert _set(world, "manufacturerA", d, s) == "ok"
    return _get(world, d)


def test_disclose_records_commitment(deployed):
    d = _disclose(deployed)
    assert d.status is D
    assert d.discoverer == deployed.key("discoverer").address
    envelope = deployed.store.get(d.ciphertext_location)
    assert store.verify(envelope, d.ciphertext_hash)
    assert DETAILS not in envelope


def test_manufacturer_decrypts(deployed):
    d = _disclose(deployed)
    envelope = deployed.store.get(d.ciphertext_location)
    assert vulndisc.decrypt_with(deployed.key("manufacturerA"), envelope) == DETAILS


def test_other_keys_cannot_decrypt(deployed):
    envelope = deployed.store.get(_disclose(deployed).ciphertext_location)
    for who in ("discoverer", "stranger", "cabItaly"):
        with pytest.raises(vulndisc.DecryptionError):
            vulndisc.decrypt_with(deployed.key(who), envelope)
    with pytest.raises(vulndisc.DecryptionError):
        vulndisc.decrypt_with(deployed.key("manufacturerA"), envelope[:-1] + bytes([envelope[-1] ^ 1]))
    with pytest.raises(vulndisc.DecryptionError):
        vulndisc.decrypt_with(deployed.key("manufacturerA"), b"short")


def test_encrypt_to_bad_key_fails():
    with pytest.raises(vulndisc.EncryptionFailure):
        vulndisc.encrypt_for(b"\x00" * 64, b"x")


def test_encryption_is_randomized():
    kp = KeyPair.from_seed("enc")
    assert vulndisc.encrypt_for(kp.public_key, b"x") != vulndisc.encrypt_for(kp.public_key, b"x")


def test_disclose_to_unknown_registry(deployed):
    with pytest.raises(ContractReverted) as e:
        vulndisc.disclose(deployed.client("discoverer"), b"\x01" * 20, DETAILS,
                          deployed.key("manufacturerA").public_key, deployed.store)
    assert e.value.code == "UnknownRegistry"


def test_acknowledge_by_manufacturer(deployed):
    d = _disclose(deployed)
    assert _set(deployed, "manufacturerA", d, A) == "ok"
    assert _get(deployed, d).status is A


def test_discoverer_cannot_acknowledge(deployed):
    d = _disclose(deployed)
    assert _set(deployed, "discoverer", d, A) == "NotManufacturer"
    assert _get(deployed, d).status is D


def test_skipping_to_remediated_is_illegal(deployed):
    d = _disclose(deployed)
    assert _set(deployed, "manufacturerA", d, R) == "IllegalTransition"


def test_unknown_disclosure(deployed):
    r = deployed.client("manufacturerA").call(deployed.labels["registry"], "setDisclosureStatus", b"\x00" * 32,
                                              A.value, check=False)
    assert r.error_code == "UnknownDisclosure"


def test_unknown_status_value(deployed):
    d = _disclose(deployed)
    r = deployed.client("manufacturerA").call(deployed.labels["registry"], "setDisclosureStatus", d.id,
                                              "Fixed", check=False)
    assert r.error_code == "BadArguments"


OFF_PATH = sorted(set(itertools.product(Status, Status)) - PATH_EDGES, key=lambda e: (e[0].value, e[1].value))
# Off-path edges tried before the embargo ends. D -> P is the only one that
# becomes legal later, so it is refused for the embargo rather than as illegal.
OFF_PATH_EXPECTED = {e: ("EmbargoActive" if e == (D, P) else "IllegalTransition") for e in OFF_PATH}


def off_path_outcome(world, old: Status, new: Status) -> tuple[str, Status]:
    d = _drive_to(world, old)
    code = _set(world, "manufacturerA", d, new)
    return code, _get(world, d).status


@pytest.mark.parametrize("old,new", OFF_PATH, ids=[f"{a.value}-{b.value}" for a, b in OFF_PATH])
def test_off_path_transitions_rejected(deployed, old, new):
    code, after = off_path_outcome(deployed, old, new)
    assert code == OFF_PATH_EXPECTED[(old, new)]
    assert after is old


def test_there_are_twelve_off_path_cases():
    assert len(OFF_PATH) == 12


def test_remediated_publishes_at_any_time(deployed):
    d = _drive_to(deployed, R)
    assert deployed.validator.height < d.disclosed_at + EMBARGO
    assert _set(deployed, "discoverer", d, P) == "ok"


def test_embargo_active_before_deadline(deployed):
    d = _disclose(deployed)
    assert _set(deployed, "discoverer", d, P) == "EmbargoActive"


def embargo_boundary(world) -> tuple[str, str]:
    """Outcome of publishing from Disclosed at disclosed-at + embargo - 1, then at + embargo."""
    d = _disclose(world)
    deadline = d.disclosed_at + world.config.embargo_blocks
    _mine_until(world, deadline - 2)  # the next transaction lands at deadline - 1
    early = _set(world, "discoverer", d, P)
    assert world.validator.height == deadline - 1
    on_time = _set(world, "discoverer", d, P)
    assert world.validator.height == deadline
    return early, on_time


def test_embargo_boundary_is_inclusive(deployed):
    assert deployed.config.embargo_blocks == EMBARGO
    assert embargo_boundary(deployed) == ("EmbargoActive", "ok")


def test_acknowledged_also_waits_for_embargo(deployed):
    d = _drive_to(deployed, A)
    assert _set(deployed, "discoverer", d, P) == "EmbargoActive"
    _mine_until(deployed, d.disclosed_at + EMBARGO - 1)
    assert _set(deployed, "discoverer", d, P) == "ok"


def test_only_parties_publish(deployed):
    d = _drive_to(deployed, R)
    assert _set(deployed, "stranger", d, P) == "NotParty"
    assert _set(deployed, "cabItaly", d, P) == "NotParty"


def test_publication_registers_vulnerability_file(deployed):
    d = _drive_to(deployed, P)
    ev = registry.latest_file(deployed.state, deployed.labels["registry"], registry.VULNERABILITY)
    assert ev is not None
    assert (ev.file_location, ev.file_hash) == (d.ciphertext_location, d.ciphertext_hash)
    assert ev.sender == deployed.key("manufacturerA").address


def test_status_log_is_append_only(deployed):
    d = _drive_to(deployed, P)
    log = [c.status for c in d.status_log]
    assert log == [D, A, R, P]
    heights = [c.height for c in d.status_log]
    assert heights == sorted(heights)


def test_report_to_ncca_publishes(deployed):
    d = _drive_to(deployed, R)
    out = vulndisc.report_to_ncca(deployed.client("discoverer"), deployed.labels["registry"], d.id)
    assert out.status is P


def test_feed_lists_only_published(deployed):
    assert vulndisc.export_feed(deployed.state) == []
    published = _drive_to(deployed, P)
    _disclose(deployed, b"another")
    feed = vulndisc.export_feed(deployed.state)
    assert [e["id"] for e in feed] == ["0x" + published.id.hex()]
    assert feed[0]["deviceId"] == "temp-sensor-model1"


def test_custom_embargo_from_genesis(tmp_path):
    world = build_world(tmp_path, ACTORS, seed="e", embargo_blocks=3)
    for step in setup_steps():
        run_step(world, step)
    assert embargo_boundary(world) == ("EmbargoActive", "ok")
