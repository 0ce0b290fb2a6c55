"""Identification authorities and the EU identification hierarchy.

An :class:`IdentificationAuthority` is a native contract owned by one
address. Only the owner may append to its issuance and revocation logs.
Authorities are chained EU service -> Member State authority ->
manufacturer / assessment body -> device or verified consumer; a chain is
trusted when every link is issued, unrevoked, and its subject owns the
next authority.

Subject certificates are canonical JSON with keys in the fixed order
``subject-address``, ``public-key``, ``role``, ``metadata`` and no
whitespace; hex values are ``0x``-prefixed lowercase.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from typing import Any

from certchain.chain import crypto
from certchain.chain.encoding import from_hex, to_hex
from certchain.chain.errors import ContractReverted
from certchain.chain.network import Client
from certchain.chain.state import (
    CallContext,
    LedgerState,
    NativeContract,
    check_args,
    external,
    register_contract,
)

MAX_DEPTH = 4


class Role(str, enum.Enum):
    MEMBER_STATE_AUTHORITY = "MemberStateAuthority"
    MANUFACTURER = "Manufacturer"
    ASSESSMENT_BODY = "ConformityAssessmentBody"
    DEVICE = "Device"
    VERIFIED_CONSUMER = "VerifiedConsumer"


class CertificateError(ValueError):
    pass


@dataclass(frozen=True)
class SubjectCertificate:
    subject_address: bytes
    public_key: bytes
    role: Role
    metadata: str = ""

    @classmethod
    def for_keypair(cls, kp: crypto.KeyPair, role: Role, metadata: str = "") -> SubjectCertificate:
        return cls(kp.address, kp.public_key, Role(role), metadata)

    def encode(self) -> str:
        return json.dumps(
            {
                "subject-address": to_hex(self.subject_address),
                "public-key": to_hex(self.public_key),
                "role": self.role.value,
                "metadata": self.metadata,
            },
            separators=(",", ":"),
            ensure_ascii=False,
        )

    @classmethod
    def parse(cls, s: str) -> SubjectCertificate:
        """Strict parse: the input must already be in canonical form."""
        try:
            d = json.loads(s)
            cert = cls(
                from_hex(d["subject-address"]),
                from_hex(d["public-key"]),
                Role(d["role"]),
                d["metadata"],
            )
        except (ValueError, KeyError, TypeError) as e:
            raise CertificateError(f"malformed subject certificate: {e}") from e
        if not isinstance(cert.metadata, str) or cert.encode() != s:
            raise CertificateError("subject certificate is not in canonical form")
        if crypto.derive_address(cert.public_key) != cert.subject_address:
            raise CertificateError("subject address does not match public key")
        return cert


@dataclass(frozen=True)
class CertificateIssued:
    contract: bytes
    owner: bytes
    owner_name: str
    subject_name: str
    subject_certificate: str
    height: int
    tx_index: int

    name = "CertificateIssued"

    def to_dict(self) -> dict[str, Any]:
        return {
            "event": self.name,
            "contract": to_hex(self.contract),
            "owner": to_hex(self.owner),
            "ownerName": self.owner_name,
            "subjectName": self.subject_name,
            "subjectCertificate": self.subject_certificate,
            "height": self.height,
            "txIndex": self.tx_index,
        }


@dataclass(frozen=True)
class CertificateRevoked:
    contract: bytes
    owner: bytes
    subject_name: str
    height: int
    tx_index: int

    name = "CertificateRevoked"

    def to_dict(self) -> dict[str, Any]:
        return {
            "event": self.name,
            "contract": to_hex(self.contract),
            "owner": to_hex(self.owner),
            "subjectName": self.subject_name,
            "height": self.height,
            "txIndex": self.tx_index,
        }


@register_contract
@dataclass
class IdentificationAuthority(NativeContract):
    kind = "IdentificationAuthority"

    owner: bytes
    owner_name: str
    owner_certificate: str
    issued: list[CertificateIssued] = field(default_factory=list)
    revoked: list[CertificateRevoked] = field(default_factory=list)

    @classmethod
    def construct(cls, ctx: CallContext, *args: Any) -> IdentificationAuthority:
        check_args(args, (str, str))
        owner_name, owner_certificate = args
        return cls(ctx.sender, owner_name, owner_certificate)

    def _only_owner(self, ctx: CallContext) -> None:
        if ctx.sender != self.owner:
            raise ContractReverted("NotOwner", "sender is not the authority owner")

    @external("issueCertificate", str, str)
    def issue_certificate(self, ctx: CallContext, subject_name: str, subject_certificate: str) -> None:
        self._only_owner(ctx)
        ev = CertificateIssued(
            ctx.contract, ctx.sender, self.owner_name, subject_name, subject_certificate, ctx.height, ctx.tx_index
        )
        self.issued.append(ev)
        ctx.emit(ev)

    @external("revokeCertificate", str)
    def revoke_certificate(self, ctx: CallContext, subject_name: str) -> None:
        self._only_owner(ctx)
        ev = CertificateRevoked(ctx.contract, ctx.sender, subject_name, ctx.height, ctx.tx_index)
        self.revoked.append(ev)
        ctx.emit(ev)

    def latest_issued(self, subject_name: str) -> CertificateIssued | None:
        for ev in reversed(self.issued):
            if ev.subject_name == subject_name:
                return ev
        return None

    def is_revoked(self, ev: CertificateIssued) -> bool:
        return any(r.subject_name == ev.subject_name and r.height >= ev.height for r in self.revoked)


def authority(state: LedgerState, address: bytes) -> IdentificationAuthority:
    c = state.contract(address, IdentificationAuthority)
    if c is None:
        raise ContractReverted("UnknownContract", f"no identification authority at {to_hex(address)}")
    return c


# client-side operations


def deploy_authority(client: Client, owner_name: str, owner_certificate: str | SubjectCertificate) -> bytes:
    if isinstance(owner_certificate, SubjectCertificate):
        owner_certificate = owner_certificate.encode()
    return client.deploy(IdentificationAuthority.kind, owner_name, owner_certificate)


def issue_certificate(
    client: Client, contract: bytes, subject_name: str, subject_certificate: str | SubjectCertificate
) -> CertificateIssued:
    if isinstance(subject_certificate, SubjectCertificate):
        subject_certificate = subject_certificate.encode()
    receipt = client.call(contract, "issueCertificate", subject_name, subject_certificate)
    return receipt.events[0]


def revoke_certificate(client: Client, contract: bytes, subject_name: str) -> CertificateRevoked:
    receipt = client.call(contract, "revokeCertificate", subject_name)
    return receipt.events[0]


def register_anonymous_consumer(
    manufacturer: Client, contract: bytes, device_id: str, rng: random.Random | None = None
) -> tuple[crypto.KeyPair, CertificateIssued]:
    """Certify a brand-new keypair as a verified consumer of ``device_id``.

    Nothing about the consumer's other identities is passed in, so nothing
    can leak into the event.
    """
    kp = crypto.generate_identity(rng)
    cert = SubjectCertificate.for_keypair(kp, Role.VERIFIED_CONSUMER, device_id)
    ev = issue_certificate(manufacturer, contract, "consumer:" + to_hex(kp.address), cert)
    return kp, ev


# verification


@dataclass(frozen=True)
class IdentityChain:
    """Links from the trusted root down to the leaf subject."""

    links: tuple[tuple[bytes, CertificateIssued], ...]

    def __len__(self) -> int:
        return len(self.links)

    @property
    def leaf(self) -> CertificateIssued:
        return self.links[-1][1]

    def to_dict(self) -> list[dict[str, Any]]:
        return [ev.to_dict() for _, ev in self.links]


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: str | None = None
    level: int | None = None

    def __bool__(self) -> bool:
        return self.valid

    def __str__(self) -> str:
        if self.valid:
            return "Valid"
        return f"{self.reason}({self.level})" if self.level is not None else str(self.reason)


VALID = Verdict(True)


def verify_chain(state: LedgerState, root: bytes, chain: IdentityChain) -> Verdict:
    """Check ``chain`` against the ledger. Levels count from 1 (the root's subject)."""
    links = chain.links
    if not links or len(links) > MAX_DEPTH:
        return Verdict(False, "BadLength")
    if links[0][0] != root:
        return Verdict(False, "BadRoot")
    for i, (addr, ev) in enumerate(links):
        level = i + 1
        auth = state.contract(addr, IdentificationAuthority)
        if auth is None or ev.contract != addr or auth.latest_issued(ev.subject_name) != ev:
            return Verdict(False, "NotIssued", level)
        if auth.is_revoked(ev):
            return Verdict(False, "Revoked", level)
        try:
            cert = SubjectCertificate.parse(ev.subject_certificate)
        except CertificateError:
            return Verdict(False, "BadCertificate", level)
        if i + 1 < len(links):
            nxt = state.contract(links[i + 1][0], IdentificationAuthority)
            if nxt is None or nxt.owner != cert.subject_address:
                return Verdict(False, "BrokenOwnership", level)
    return VALID


def _authorities(state: LedgerState) -> list[tuple[bytes, IdentificationAuthority]]:
    return sorted(
        (a, c) for a, c in state.contracts.items() if isinstance(c, IdentificationAuthority)
    )


def find_issuance(state: LedgerState, subject: bytes, within: bytes | None = None) -> tuple[bytes, CertificateIssued] | None:
    """Most recent issuance certifying address ``subject``, optionally in one authority."""
    best = None
    for addr, auth in _authorities(state):
        if within is not None and addr != within:
            continue
        for ev in auth.issued:
            if auth.latest_issued(ev.subject_name) is not ev:
                continue
            try:
                cert = SubjectCertificate.parse(ev.subject_certificate)
            except CertificateError:
                continue
            if cert.subject_address == subject and (best is None or (ev.height, ev.tx_index) > (best[1].height, best[1].tx_index)):
                best = (addr, ev)
    return best


def resolve_chain(state: LedgerState, root: bytes, leaf_contract: bytes, leaf: CertificateIssued) -> IdentityChain:
    """Walk upward from a leaf issuance towards ``root`` using the ledger alone.

    The result is not trusted; pass it to :func:`verify_chain`.
    """
    links = [(leaf_contract, leaf)]
    current = leaf_contract
    while current != root and len(links) < MAX_DEPTH:
        auth = state.contract(current, IdentificationAuthority)
        if auth is None:
            break
        parent = find_issuance(state, auth.owner)
        if parent is None:
            break
        links.insert(0, parent)
        current = parent[0]
    return IdentityChain(tuple(links))
