"""Simulated SDN controller that onboards devices from ledger data.

Onboarding runs, in order: device authentication by challenge-response,
identity-chain verification up to the trusted root, MUD lookup in the
device registry, off-chain fetch and hash check, then parse, validate and
compile. Any failure quarantines the device with no rules installed.
Traffic is default-deny.
"""

from __future__ import annotations

import enum
import logging
import random
import secrets
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable

from certchain import mudfile, store
from certchain.chain import crypto
from certchain.chain.encoding import field as enc_field
from certchain.chain.encoding import to_hex
from certchain.chain.node import Node
from certchain.identity import CertificateError, Role, SubjectCertificate, find_issuance, resolve_chain, verify_chain
from certchain.registry import MUD, DeviceRegistry

log = logging.getLogger(__name__)

CHALLENGE_TTL = 60.0


class DeviceStatus(str, enum.Enum):
    PENDING = "Pending"
    ONBOARDED = "Onboarded"
    QUARANTINED = "Quarantined"


@dataclass(frozen=True)
class PacketFlow:
    src: bytes
    dst: bytes
    protocol: int
    src_port: int
    dst_port: int

    def __post_init__(self) -> None:
        if not 0 <= self.protocol <= 255:
            raise ValueError(f"protocol out of range: {self.protocol}")
        for p in (self.src_port, self.dst_port):
            if not 0 <= p <= 65535:
                raise ValueError(f"port out of range: {p}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "src": to_hex(self.src),
            "dst": to_hex(self.dst),
            "protocol": self.protocol,
            "src_port": self.src_port,
            "dst_port": self.dst_port,
        }


def challenge_message(challenge: bytes, device_address: bytes, device_id: str) -> bytes:
    return enc_field(b"certchain-auth-v1") + enc_field(challenge) + enc_field(device_address) + enc_field(device_id.encode())


@dataclass(frozen=True)
class AuthProof:
    device_address: bytes
    device_id: str
    credential: str
    registry: bytes
    challenge: bytes
    signature: bytes


def make_auth_proof(kp: crypto.KeyPair, device_id: str, credential: str | SubjectCertificate,
                    registry: bytes, challenge: bytes) -> AuthProof:
    """Device side of step 1: sign the controller's challenge."""
    if isinstance(credential, SubjectCertificate):
        credential = credential.encode()
    sig = kp.sign(challenge_message(challenge, kp.address, device_id))
    return AuthProof(kp.address, device_id, credential, registry, challenge, sig)


class AuthenticationError(Exception):
    def __init__(self, code: str, message: str = "") -> None:
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class OnboardingError(Exception):
    def __init__(self, code: str, detail: str = "") -> None:
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


@dataclass
class DeviceRecord:
    device_address: bytes
    device_id: str
    registry_contract: bytes
    credential: str
    mfg_name: str | None = None
    installed_rules: tuple[mudfile.AclRule, ...] = ()
    mud: mudfile.MudFile | None = None
    mud_hash: bytes | None = None
    mud_fetched_at: float | None = None
    status: DeviceStatus = DeviceStatus.PENDING
    reason: str | None = None
    detail: str = ""
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def snapshot(self) -> tuple[DeviceStatus, tuple[mudfile.AclRule, ...]]:
        with self.lock:
            return self.status, self.installed_rules

    def to_dict(self) -> dict[str, Any]:
        return {
            "device": to_hex(self.device_address),
            "device_id": self.device_id,
            "registry": to_hex(self.registry_contract),
            "status": self.status.value,
            "reason": self.reason,
            "detail": self.detail,
            "rules": [r.to_dict() for r in self.installed_rules],
        }


@dataclass(frozen=True)
class Decision:
    allow: bool
    rule_id: str | None = None
    reason: str | None = None

    def to_dict(self) -> dict[str, Any]:
        if self.allow:
            return {"decision": "Allow", "matched-rule-id": self.rule_id}
        return {"decision": "Deny", "reason": self.reason}


def rule_matches(rule: mudfile.AclRule, direction: mudfile.Direction, peer: bytes, flow: PacketFlow) -> bool:
    return (
        rule.direction is direction
        and rule.action == "accept"
        and (rule.peers is None or peer in rule.peers)
        and (rule.protocol is None or rule.protocol == flow.protocol)
        and (rule.src_port is None or rule.src_port == flow.src_port)
        and (rule.dst_port is None or rule.dst_port == flow.dst_port)
    )


@dataclass
class _Verified:
    mud: mudfile.MudFile
    mud_hash: bytes
    rules: tuple[mudfile.AclRule, ...]


class Controller:
    """Controller bound to a read-only ledger view, an off-chain store and a trust anchor."""

    def __init__(
        self,
        node: Node,
        content_store: store.ContentStore,
        root: bytes,
        inventory: dict[bytes, str] | None = None,
        clock: Callable[[], float] | None = None,
        rng: random.Random | None = None,
        challenge_ttl: float = CHALLENGE_TTL,
    ) -> None:
        self.node = node
        self.store = content_store
        self.root = root
        self.inventory: dict[bytes, str] = dict(inventory or {})
        self.clock = clock or time.time
        self.rng = rng
        self.challenge_ttl = challenge_ttl
        self.records: dict[bytes, DeviceRecord] = {}
        self._challenges: dict[bytes, float] = {}
        self._lock = threading.Lock()

    # step 1

    def issue_challenge(self) -> bytes:
        c = self.rng.randbytes(32) if self.rng is not None else secrets.token_bytes(32)
        with self._lock:
            self._challenges[c] = self.clock() + self.challenge_ttl
        return c

    def authenticate(self, proof: AuthProof) -> SubjectCertificate:
        with self._lock:
            expires = self._challenges.pop(proof.challenge, None)
        if expires is None or self.clock() > expires:
            raise AuthenticationError("StaleChallenge", "challenge unknown, used or expired")
        try:
            cred = SubjectCertificate.parse(proof.credential)
        except CertificateError as e:
            raise AuthenticationError("CredentialMismatch", str(e)) from e
        if cred.role is not Role.DEVICE or cred.subject_address != proof.device_address:
            raise AuthenticationError("CredentialMismatch", "credential does not name this device")
        msg = challenge_message(proof.challenge, proof.device_address, proof.device_id)
        if not crypto.verify(cred.public_key, msg, proof.signature):
            raise AuthenticationError("BadSignature")
        return cred

    # steps 2-4

    def _verify_device(self, record: DeviceRecord) -> _Verified:
        state = self.node.state
        reg = state.contract(record.registry_contract, DeviceRegistry)
        if reg is None:
            raise OnboardingError("ChainInvalid", "UnknownRegistry")
        leaf = find_issuance(state, record.device_address, within=reg.manufacturer_id_contract)
        if leaf is None or leaf[1].subject_certificate != record.credential:
            raise OnboardingError("ChainInvalid", "NotIssued")
        verdict = verify_chain(state, self.root, resolve_chain(state, self.root, *leaf))
        if not verdict:
            raise OnboardingError("ChainInvalid", str(verdict))
        id_owner = state.contracts[reg.manufacturer_id_contract].owner
        if id_owner != reg.manufacturer:
            raise OnboardingError("ChainInvalid", "RegistryNotOwnedByManufacturer")

        entry = reg.latest_file(MUD)
        if entry is None:
            raise OnboardingError("NoMudRegistered")
        try:
            content = self.store.get(entry.file_location)
        except store.NotFound as e:
            raise OnboardingError("FetchFailed", entry.file_location) from e
        if not store.verify(content, entry.file_hash):
            raise OnboardingError("HashMismatch", entry.file_location)

        try:
            mud = mudfile.parse(content)
        except mudfile.MudError as e:
            raise OnboardingError("MudInvalid", str(e)) from e
        violations = mudfile.validate(mud)
        if mud.mfg_name is not None and mud.mfg_name != reg.manufacturer_name:
            violations.append(mudfile.Violation("MfgNameMismatch", "mfg-name", mud.mfg_name))
        if violations:
            raise OnboardingError("MudInvalid", "; ".join(map(str, violations)))
        peers = {a: m for a, m in self.inventory.items() if a != record.device_address}
        return _Verified(mud, entry.file_hash, tuple(mudfile.compile_rules(mud, peers)))

    def _install(self, record: DeviceRecord, v: _Verified, now: float) -> None:
        with record.lock:
            record.mud = v.mud
            record.mud_hash = v.mud_hash
            record.mud_fetched_at = now
            record.mfg_name = v.mud.mfg_name
            record.installed_rules = v.rules
            record.status = DeviceStatus.ONBOARDED if v.rules else DeviceStatus.QUARANTINED
            record.reason = None if v.rules else "NoRules"
            record.detail = ""
        if v.rules and v.mud.mfg_name is not None:
            self.inventory[record.device_address] = v.mud.mfg_name

    def _quarantine(self, record: DeviceRecord, err: OnboardingError) -> None:
        log.warning("quarantining %s: %s", to_hex(record.device_address), err)
        with record.lock:
            record.installed_rules = ()
            record.status = DeviceStatus.QUARANTINED
            record.reason = err.code
            record.detail = err.detail
        self.inventory.pop(record.device_address, None)

    def onboard(self, proof: AuthProof) -> DeviceRecord:
        """Authenticate, verify and configure a joining device.

        Authentication failures raise AuthenticationError and create no
        record. Later failures return a Quarantined record.
        """
        self.authenticate(proof)
        record = DeviceRecord(proof.device_address, proof.device_id, proof.registry, proof.credential)
        self.records[proof.device_address] = record
        try:
            verified = self._verify_device(record)
        except OnboardingError as e:
            self._quarantine(record, e)
        else:
            self._install(record, verified, self.clock())
        return record

    def refresh(self, record: DeviceRecord, now: float | datetime | None = None) -> str:
        """Re-run verification once the cached MUD file is stale.

        Returns ``"unchanged"``, ``"re-onboarded"`` or ``"quarantined"``.
        """
        now_ts = self.clock() if now is None else (now.timestamp() if isinstance(now, datetime) else now)
        if (record.status is DeviceStatus.ONBOARDED and record.mud is not None
                and mudfile.is_fresh(record.mud, record.mud_fetched_at, now_ts)):
            return "unchanged"
        try:
            verified = self._verify_device(record)
        except OnboardingError as e:
            self._quarantine(record, e)
            return "quarantined"
        self._install(record, verified, now_ts)
        return "re-onboarded"

    # enforcement

    def filter(self, record: DeviceRecord, flow: PacketFlow) -> Decision:
        status, rules = record.snapshot()
        if status is not DeviceStatus.ONBOARDED:
            return Decision(False, reason="NotOnboarded")
        if flow.src == record.device_address:
            direction, peer = mudfile.Direction.FROM_DEVICE, flow.dst
        elif flow.dst == record.device_address:
            direction, peer = mudfile.Direction.TO_DEVICE, flow.src
        else:
            return Decision(False, reason="Unmatched")
        for r in rules:
            if rule_matches(r, direction, peer, flow):
                return Decision(True, rule_id=r.rule_id)
        return Decision(False, reason="Unmatched")

    def decide(self, flow: PacketFlow) -> Decision:
        """Filter a flow against whichever managed device it involves (source first)."""
        record = self.records.get(flow.src) or self.records.get(flow.dst)
        if record is None:
            return Decision(False, reason="NotOnboarded")
        return self.filter(record, flow)
