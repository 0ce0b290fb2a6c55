from __future__ import annotations

import pytest

from certchain import identity, registry, vulndisc
from certchain.chain import CallContract, ContractReverted, replay
from certchain.chain.encoding import sha256
from certchain.registry import CERTIFICATE, FIRMWARE, MUD

H1 = sha256(b"one")
H2 = sha256(b"two")


def _with_cab(world):
    reg = world.labels["registry"]
    cab_id = identity.deploy_authority(world.client("cabItaly"), "CAB-Italy", "")
    registry.set_assessment_body(world.client("manufacturerA"), reg, world.key("cabItaly").address, "CAB-Italy", cab_id)
    return reg, cab_id


def test_fresh_registry_fields(deployed):
    reg = registry.registry(deployed.state, deployed.labels["registry"])
    mfr = deployed.key("manufacturerA").address
    assert reg.device_id == "temp-sensor-model1"
    assert reg.manufacturer == mfr
    assert reg.manufacturer_name == "manufacturerA"
    assert reg.manufacturer_id_contract == deployed.labels["mfa_id"]
    assert reg.assessment_body == mfr


def test_deploy_needs_existing_id_contract(deployed):
    with pytest.raises(ContractReverted) as e:
        registry.deploy_registry(deployed.client("manufacturerA"), "manufacturerA", b"\x42" * 20, "x")
    assert e.value.code == "UnknownContract"


def test_two_device_types_are_independent(deployed):
    other = registry.deploy_registry(deployed.client("manufacturerA"), "manufacturerA", deployed.labels["mfa_id"],
                                     "smart-plug")
    registry.register_file(deployed.client("manufacturerA"), other, FIRMWARE, "fw://1", H1)
    assert registry.latest_file(deployed.state, other, FIRMWARE).file_hash == H1
    assert registry.latest_file(deployed.state, deployed.labels["registry"], FIRMWARE) is None


def test_designate_and_redesignate_assessment_body(deployed):
    reg, cab_id = _with_cab(deployed)
    state = registry.registry(deployed.state, reg)
    assert state.assessment_body == deployed.key("cabItaly").address
    assert state.assessment_body_name == "CAB-Italy"
    registry.set_assessment_body(deployed.client("manufacturerA"), reg, deployed.key("stranger").address, "Other", cab_id)
    assert registry.registry(deployed.state, reg).assessment_body == deployed.key("stranger").address


def test_cab_cannot_redesignate(deployed):
    reg, cab_id = _with_cab(deployed)
    with pytest.raises(ContractReverted) as e:
        registry.set_assessment_body(deployed.client("cabItaly"), reg, deployed.key("cabItaly").address, "me", cab_id)
    assert e.value.code == "NotManufacturer"


def test_cab_registers_certificate(deployed):
    reg, _ = _with_cab(deployed)
    ev = registry.register_file(deployed.client("cabItaly"), reg, CERTIFICATE, "cert://x", H1)
    assert ev.sender == deployed.key("cabItaly").address
    assert registry.latest_file(deployed.state, reg, CERTIFICATE) == ev


def test_stranger_cannot_register(deployed):
    with pytest.raises(ContractReverted) as e:
        registry.register_file(deployed.client("stranger"), deployed.labels["registry"], MUD, "x", H1)
    assert e.value.code == "NotAuthorized"


def test_replaced_body_loses_access(deployed):
    reg, cab_id = _with_cab(deployed)
    registry.set_assessment_body(deployed.client("manufacturerA"), reg, deployed.key("stranger").address, "New", cab_id)
    with pytest.raises(ContractReverted) as e:
        registry.register_file(deployed.client("cabItaly"), reg, CERTIFICATE, "x", H1)
    assert e.value.code == "NotAuthorized"


def test_bad_hash_length_and_file_type(deployed):
    reg = deployed.labels["registry"]
    c = deployed.client("manufacturerA")
    assert c.call(reg, "registerFile", MUD, "x", b"\x01" * 31, check=False).error_code == "BadHashLength"
    assert c.call(reg, "registerFile", "", "x", H1, check=False).error_code == "BadFileType"


def test_reverted_call_consumes_fee_but_not_state(deployed):
    reg = deployed.labels["registry"]
    who = deployed.key("stranger").address
    before = deployed.state.balance(who), deployed.state.next_nonce(who), len(registry.registry(deployed.state, reg).files)
    receipt = deployed.client("stranger").call(reg, "registerFile", MUD, "x", H1, check=False)
    assert receipt.status == "reverted"
    after = deployed.state.balance(who), deployed.state.next_nonce(who), len(registry.registry(deployed.state, reg).files)
    assert after == (before[0] - 1, before[1] + 1, before[2])


# OR semantics: registerFile accepts the manufacturer or the current assessment body.
EXPECTED = {
    ("setAssessmentBody", "manufacturerA"): "ok",
    ("setAssessmentBody", "cabItaly"): "NotManufacturer",
    ("setAssessmentBody", "stranger"): "NotManufacturer",
    ("registerFile", "manufacturerA"): "ok",
    ("registerFile", "cabItaly"): "ok",
    ("registerFile", "stranger"): "NotAuthorized",
    ("setDisclosureStatus", "manufacturerA"): "ok",
    ("setDisclosureStatus", "cabItaly"): "NotManufacturer",
    ("setDisclosureStatus", "stranger"): "NotManufacturer",
}


def registry_matrix_outcome(world, op: str, sender: str) -> str:
    reg, cab_id = _with_cab(world)
    c = world.client(sender)
    if op == "setAssessmentBody":
        r = c.call(reg, op, world.key("devB").address, "Body", cab_id, check=False)
    elif op == "registerFile":
        r = c.call(reg, op, CERTIFICATE, "cert://x", H1, check=False)
    else:
        d = vulndisc.disclose(world.client("discoverer"), reg, b"bug", world.key("manufacturerA").public_key, world.store)
        r = c.call(reg, op, d.id, vulndisc.A.value, check=False)
    return r.error_code or "ok"


@pytest.mark.parametrize("op,sender", sorted(EXPECTED))
def test_registry_authorization_matrix(deployed, op, sender):
    assert registry_matrix_outcome(deployed, op, sender) == EXPECTED[(op, sender)]


def test_latest_file_and_history(deployed):
    reg = deployed.labels["registry"]
    c = deployed.client("manufacturerA")
    first = registry.latest_file(deployed.state, reg, MUD)
    second = registry.register_file(c, reg, MUD, "mud://v2", H2)
    assert registry.latest_file(deployed.state, reg, MUD) == second
    assert registry.registry(deployed.state, reg).history(MUD) == [first, second]
    assert registry.latest_file(deployed.state, reg, "TEST_REPORT") is None


def test_new_registration_changes_only_its_type(deployed):
    reg = deployed.labels["registry"]
    c = deployed.client("manufacturerA")
    registry.register_file(c, reg, FIRMWARE, "fw://1", H1)
    mud_before = registry.latest_file(deployed.state, reg, MUD)
    registry.register_file(c, reg, FIRMWARE, "fw://2", H2)
    assert registry.latest_file(deployed.state, reg, MUD) == mud_before
    assert registry.latest_file(deployed.state, reg, FIRMWARE).file_location == "fw://2"


def test_same_block_registrations_later_wins(deployed):
    reg = deployed.labels["registry"]
    c = deployed.client("manufacturerA")
    c.send(registry_call(reg, "mud://a", H1))
    c.send(registry_call(reg, "mud://b", H2))
    deployed.network.mine()
    latest = registry.latest_file(deployed.state, reg, MUD)
    assert latest.file_location == "mud://b" and latest.tx_index == 1


def registry_call(reg, location, h):
    return CallContract(reg, "registerFile", (MUD, location, h))


def test_replayed_log_equals_live_log(deployed):
    reg = deployed.labels["registry"]
    registry.register_file(deployed.client("manufacturerA"), reg, FIRMWARE, "fw://1", H1)
    replayed = replay(deployed.config, deployed.observer.chain())
    assert registry.registry(replayed, reg).files == registry.registry(deployed.state, reg).files
