"""Coordinated vulnerability disclosure.

A discoverer encrypts the report to the manufacturer's key, puts the
ciphertext in the off-chain store and commits its location and hash to the
device registry. The status then moves along::

    Disclosed -> Acknowledged -> Remediated -> Published
    Acknowledged -> Published        (embargo elapsed)
    Disclosed    -> Published        (embargo elapsed)

Acknowledged and Remediated are set by the manufacturer only. Either party
may publish, which also records a ``VULNERABILITY`` file against the
registry. The embargo is counted in blocks and is inclusive:
publishing at exactly ``disclosed_at + embargo_blocks`` is allowed.

Encryption is ECIES on secp256k1: ephemeral ECDH, HKDF-SHA256, AES-256-GCM.
The envelope is ``ephemeral_pub(64) || nonce(12) || ciphertext+tag``.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from certchain.chain import crypto
from certchain.chain.encoding import field as enc_field
from certchain.chain.encoding import sha256, to_hex, u64
from certchain.chain.errors import ContractReverted
from certchain.chain.network import Client
from certchain.chain.state import CallContext, LedgerState

if TYPE_CHECKING:
    from certchain.store import ContentStore

_HKDF_INFO = b"certchain-disclosure-v1"


class DecryptionError(Exception):
    pass


class EncryptionFailure(Exception):
    pass


class Status(str, enum.Enum):
    DISCLOSED = "Disclosed"
    ACKNOWLEDGED = "Acknowledged"
    REMEDIATED = "Remediated"
    PUBLISHED = "Published"


D, A, R, P = Status.DISCLOSED, Status.ACKNOWLEDGED, Status.REMEDIATED, Status.PUBLISHED

# Edges of the declared happy path; (D, P) is additionally reachable once the embargo is over.
PATH_EDGES = frozenset({(D, A), (A, R), (R, P), (A, P)})
LEGAL_EDGES = PATH_EDGES | {(D, P)}
MANUFACTURER_ONLY = frozenset({A, R})


@dataclass(frozen=True)
class StatusChange:
    status: Status
    height: int
    sender: bytes


@dataclass
class Disclosure:
    id: bytes
    registry: bytes
    discoverer: bytes
    ciphertext_location: str
    ciphertext_hash: bytes
    disclosed_at: int
    status: Status = D
    status_log: list[StatusChange] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": to_hex(self.id),
            "registry": to_hex(self.registry),
            "discoverer": to_hex(self.discoverer),
            "ciphertextLocation": self.ciphertext_location,
            "ciphertextHash": to_hex(self.ciphertext_hash),
            "disclosedAt": self.disclosed_at,
            "status": self.status.value,
            "statusLog": [
                {"status": c.status.value, "height": c.height, "sender": to_hex(c.sender)} for c in self.status_log
            ],
        }


@dataclass(frozen=True)
class VulnerabilityDisclosed:
    contract: bytes
    id: bytes
    discoverer: bytes
    ciphertext_location: str
    ciphertext_hash: bytes
    height: int
    tx_index: int

    name = "VulnerabilityDisclosed"

    def to_dict(self) -> dict[str, Any]:
        return {
            "event": self.name,
            "contract": to_hex(self.contract),
            "id": to_hex(self.id),
            "discoverer": to_hex(self.discoverer),
            "ciphertextLocation": self.ciphertext_location,
            "ciphertextHash": to_hex(self.ciphertext_hash),
            "height": self.height,
            "txIndex": self.tx_index,
        }


@dataclass(frozen=True)
class DisclosureStatusChanged:
    contract: bytes
    id: bytes
    old: Status
    new: Status
    sender: bytes
    height: int
    tx_index: int

    name = "DisclosureStatusChanged"

    def to_dict(self) -> dict[str, Any]:
        return {
            "event": self.name,
            "contract": to_hex(self.contract),
            "id": to_hex(self.id),
            "from": self.old.value,
            "to": self.new.value,
            "sender": to_hex(self.sender),
            "height": self.height,
            "txIndex": self.tx_index,
        }


def disclosure_id(registry: bytes, discoverer: bytes, location: str, ciphertext_hash: bytes,
                  height: int, tx_index: int) -> bytes:
    return sha256(
        enc_field(b"certchain-disclosure")
        + enc_field(registry)
        + enc_field(discoverer)
        + enc_field(location.encode("utf-8"))
        + enc_field(ciphertext_hash)
        + u64(height)
        + u64(tx_index)
    )


def check_transition(d: Disclosure, new: Status, sender: bytes, manufacturer: bytes,
                     height: int, embargo_blocks: int) -> None:
    """Raise ContractReverted unless ``sender`` may move ``d`` to ``new`` at ``height``."""
    if (d.status, new) not in LEGAL_EDGES:
        raise ContractReverted("IllegalTransition", f"{d.status.value} -> {new.value}")
    if new in MANUFACTURER_ONLY and sender != manufacturer:
        raise ContractReverted("NotManufacturer", f"only the manufacturer may set {new.value}")
    if new is P:
        if sender not in (d.discoverer, manufacturer):
            raise ContractReverted("NotParty", "only the discoverer or manufacturer may publish")
        if d.status is not R and height < d.disclosed_at + embargo_blocks:
            raise ContractReverted(
                "EmbargoActive", f"embargo ends at height {d.disclosed_at + embargo_blocks}"
            )


def apply_transition(d: Disclosure, ctx: CallContext, new: Status) -> DisclosureStatusChanged:
    ev = DisclosureStatusChanged(ctx.contract, d.id, d.status, new, ctx.sender, ctx.height, ctx.tx_index)
    d.status = new
    d.status_log.append(StatusChange(new, ctx.height, ctx.sender))
    return ev


# encryption


def encrypt_for(public_key: bytes, plaintext: bytes) -> bytes:
    try:
        recipient = crypto.load_public_key(public_key)
    except ValueError as e:
        raise EncryptionFailure(str(e)) from e
    eph = ec.generate_private_key(crypto.CURVE)
    eph_pub = crypto._point_bytes(eph.public_key())
    key = _derive_key(eph.exchange(ec.ECDH(), recipient), eph_pub)
    nonce = os.urandom(12)
    return eph_pub + nonce + AESGCM(key).encrypt(nonce, plaintext, eph_pub)


def decrypt_with(kp: crypto.KeyPair, envelope: bytes) -> bytes:
    if len(envelope) < 64 + 12 + 16:
        raise DecryptionError("envelope too short")
    eph_pub, nonce, ct = envelope[:64], envelope[64:76], envelope[76:]
    try:
        shared = kp.crypto_key.exchange(ec.ECDH(), crypto.load_public_key(eph_pub))
        return AESGCM(_derive_key(shared, eph_pub)).decrypt(nonce, ct, eph_pub)
    except (InvalidTag, ValueError) as e:
        raise DecryptionError("cannot decrypt disclosure with this key") from e


def _derive_key(shared: bytes, eph_pub: bytes) -> bytes:
    return HKDF(hashes.SHA256(), 32, salt=eph_pub, info=_HKDF_INFO).derive(shared)


# client-side operations


def _registry(state: LedgerState, registry: bytes) -> Any:
    from certchain.registry import DeviceRegistry

    reg = state.contract(registry, DeviceRegistry)
    if reg is None:
        raise ContractReverted("UnknownRegistry", to_hex(registry))
    return reg


def disclose(discoverer: Client, registry: bytes, details: bytes, manufacturer_public_key: bytes,
             store: ContentStore) -> Disclosure:
    _registry(discoverer.state, registry)
    envelope = encrypt_for(manufacturer_public_key, details)
    location, digest = store.put(envelope)
    receipt = discoverer.call(registry, "discloseVulnerability", location, digest)
    ev = receipt.events[0]
    return get_disclosure(discoverer.state, registry, ev.id)


def get_disclosure(state: LedgerState, registry: bytes, disclosure: bytes) -> Disclosure:
    reg = _registry(state, registry)
    try:
        return reg.disclosures[disclosure]
    except KeyError:
        raise ContractReverted("UnknownDisclosure", to_hex(disclosure)) from None


def update_status(sender: Client, registry: bytes, disclosure: bytes, new: Status | str) -> Disclosure:
    sender.call(registry, "setDisclosureStatus", disclosure, Status(new).value)
    return get_disclosure(sender.state, registry, disclosure)


def report_to_ncca(sender: Client, registry: bytes, disclosure: bytes) -> Disclosure:
    return update_status(sender, registry, disclosure, P)


def export_feed(state: LedgerState) -> list[dict[str, Any]]:
    """Published disclosures across every registry, ordered by publication height."""
    from certchain.registry import DeviceRegistry

    feed = []
    for addr, c in sorted(state.contracts.items()):
        if not isinstance(c, DeviceRegistry):
            continue
        for d in c.disclosures.values():
            if d.status is P:
                entry = d.to_dict()
                entry["deviceId"] = c.device_id
                entry["manufacturerName"] = c.manufacturer_name
                entry["publishedAt"] = d.status_log[-1].height
                feed.append(entry)
    feed.sort(key=lambda e: (e["publishedAt"], e["id"]))
    return feed
