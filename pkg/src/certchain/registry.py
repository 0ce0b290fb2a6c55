"""Per-device-type registry of authoritative files.

Mirrors the DeviceRegistry contract: the deploying manufacturer may
designate an assessment body, and either of the two may register files
(MUD, firmware, certificates, test reports...) by location and SHA-256.
The contract also hosts the vulnerability disclosure functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from certchain import vulndisc
from certchain.chain.block import ZERO_ADDRESS
from certchain.chain.encoding import to_hex
from certchain.chain.errors import ContractReverted
from certchain.chain.network import Client
from certchain.chain.state import (
    ADDRESS,
    HASH32,
    CallContext,
    LedgerState,
    NativeContract,
    check_args,
    external,
    register_contract,
)
from certchain.identity import IdentificationAuthority

MUD = "MUD"
FIRMWARE = "FIRMWARE"
CERTIFICATE = "CERTIFICATE"
TEST_REPORT = "TEST_REPORT"
VULNERABILITY = "VULNERABILITY"


@dataclass(frozen=True)
class RegisterFile:
    contract: bytes
    sender: bytes
    device_id: str
    file_type: str
    file_location: str
    file_hash: bytes
    height: int
    tx_index: int

    name = "RegisterFile"

    def to_dict(self) -> dict[str, Any]:
        return {
            "event": self.name,
            "contract": to_hex(self.contract),
            "sender": to_hex(self.sender),
            "deviceId": self.device_id,
            "fileType": self.file_type,
            "fileLocation": self.file_location,
            "fileHash": to_hex(self.file_hash),
            "height": self.height,
            "txIndex": self.tx_index,
        }


@register_contract
@dataclass
class DeviceRegistry(NativeContract):
    kind = "DeviceRegistry"

    manufacturer: bytes
    manufacturer_name: str
    manufacturer_id_contract: bytes
    device_id: str
    assessment_body: bytes
    assessment_body_name: str = ""
    assessment_body_id_contract: bytes = ZERO_ADDRESS
    files: list[RegisterFile] = field(default_factory=list)
    disclosures: dict[bytes, vulndisc.Disclosure] = field(default_factory=dict)

    @classmethod
    def construct(cls, ctx: CallContext, *args: Any) -> DeviceRegistry:
        check_args(args, (str, ADDRESS, str))
        name, id_contract, device_id = args
        if ctx.state.contract(id_contract, IdentificationAuthority) is None:
            raise ContractReverted("UnknownContract", f"no identification authority at {to_hex(id_contract)}")
        return cls(
            manufacturer=ctx.sender,
            manufacturer_name=name,
            manufacturer_id_contract=id_contract,
            device_id=device_id,
            assessment_body=ctx.sender,
        )

    def _only_manufacturer(self, ctx: CallContext) -> None:
        if ctx.sender != self.manufacturer:
            raise ContractReverted("NotManufacturer", "sender is not the manufacturer")

    @external("setAssessmentBody", ADDRESS, str, ADDRESS)
    def set_assessment_body(self, ctx: CallContext, body: bytes, name: str, id_contract: bytes) -> None:
        self._only_manufacturer(ctx)
        self.assessment_body = body
        self.assessment_body_name = name
        self.assessment_body_id_contract = id_contract

    # Either the manufacturer or the designated assessment body may register.
    @external("registerFile", str, str, HASH32)
    def register_file(self, ctx: CallContext, file_type: str, location: str, file_hash: bytes) -> None:
        if ctx.sender not in (self.manufacturer, self.assessment_body):
            raise ContractReverted("NotAuthorized", "sender is neither manufacturer nor assessment body")
        if len(file_hash) != 32:
            raise ContractReverted("BadHashLength", f"file hash must be 32 bytes, got {len(file_hash)}")
        if not file_type:
            raise ContractReverted("BadFileType", "file type must be non-empty")
        self._append_file(ctx, ctx.sender, file_type, location, file_hash)

    def _append_file(self, ctx: CallContext, sender: bytes, file_type: str, location: str, file_hash: bytes) -> None:
        ev = RegisterFile(ctx.contract, sender, self.device_id, file_type, location, file_hash, ctx.height, ctx.tx_index)
        self.files.append(ev)
        ctx.emit(ev)

    @external("discloseVulnerability", str, HASH32)
    def disclose_vulnerability(self, ctx: CallContext, location: str, ciphertext_hash: bytes) -> None:
        if len(ciphertext_hash) != 32:
            raise ContractReverted("BadHashLength", "ciphertext hash must be 32 bytes")
        did = vulndisc.disclosure_id(ctx.contract, ctx.sender, location, ciphertext_hash, ctx.height, ctx.tx_index)
        d = vulndisc.Disclosure(did, ctx.contract, ctx.sender, location, ciphertext_hash, ctx.height)
        d.status_log.append(vulndisc.StatusChange(vulndisc.D, ctx.height, ctx.sender))
        self.disclosures[did] = d
        ctx.emit(vulndisc.VulnerabilityDisclosed(ctx.contract, did, ctx.sender, location, ciphertext_hash,
                                                 ctx.height, ctx.tx_index))

    @external("setDisclosureStatus", bytes, str)
    def set_disclosure_status(self, ctx: CallContext, disclosure: bytes, status: str) -> None:
        d = self.disclosures.get(disclosure)
        if d is None:
            raise ContractReverted("UnknownDisclosure", to_hex(disclosure))
        try:
            new = vulndisc.Status(status)
        except ValueError:
            raise ContractReverted("BadArguments", f"unknown status {status!r}") from None
        vulndisc.check_transition(d, new, ctx.sender, self.manufacturer, ctx.height, ctx.config.embargo_blocks)
        ctx.emit(vulndisc.apply_transition(d, ctx, new))
        if new is vulndisc.P:
            self._append_file(ctx, ctx.sender, VULNERABILITY, d.ciphertext_location, d.ciphertext_hash)

    def latest_file(self, file_type: str) -> RegisterFile | None:
        # files are appended in (height, tx_index) order, so the last match is the latest
        for ev in reversed(self.files):
            if ev.file_type == file_type:
                return ev
        return None

    def history(self, file_type: str | None = None) -> list[RegisterFile]:
        return [ev for ev in self.files if file_type is None or ev.file_type == file_type]


def registry(state: LedgerState, address: bytes) -> DeviceRegistry:
    c = state.contract(address, DeviceRegistry)
    if c is None:
        raise ContractReverted("UnknownContract", f"no device registry at {to_hex(address)}")
    return c


def deploy_registry(client: Client, manufacturer_name: str, manufacturer_id_contract: bytes, device_id: str) -> bytes:
    return client.deploy(DeviceRegistry.kind, manufacturer_name, manufacturer_id_contract, device_id)


def set_assessment_body(client: Client, contract: bytes, body: bytes, body_name: str, body_id_contract: bytes) -> None:
    client.call(contract, "setAssessmentBody", body, body_name, body_id_contract)


def register_file(client: Client, contract: bytes, file_type: str, location: str, file_hash: bytes) -> RegisterFile:
    receipt = client.call(contract, "registerFile", file_type, location, file_hash)
    return receipt.events[0]


def latest_file(state: LedgerState, contract: bytes, file_type: str) -> RegisterFile | None:
    return registry(state, contract).latest_file(file_type)
