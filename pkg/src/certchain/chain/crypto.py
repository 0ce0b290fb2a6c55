"""Account keys, addresses and transaction signatures.

Keys live on secp256k1. The public key is the 64-byte uncompressed point
(X || Y, no SEC1 prefix byte) and an address is the last 20 bytes of its
SHA-256 digest. Signatures are deterministic ECDSA-SHA256 (RFC 6979),
encoded as 64 bytes r || s.
"""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

from certchain.chain.encoding import sha256

CURVE = ec.SECP256K1()
CURVE_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
ADDRESS_LEN = 20
PUBLIC_KEY_LEN = 64

_ECDSA = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)


def derive_address(public_key: bytes) -> bytes:
    return sha256(public_key)[-ADDRESS_LEN:]


def _point_bytes(pub: ec.EllipticCurvePublicKey) -> bytes:
    nums = pub.public_numbers()
    return nums.x.to_bytes(32, "big") + nums.y.to_bytes(32, "big")


def load_public_key(public_key: bytes) -> ec.EllipticCurvePublicKey:
    if len(public_key) != PUBLIC_KEY_LEN:
        raise ValueError("public key must be 64 bytes")
    return ec.EllipticCurvePublicKey.from_encoded_point(CURVE, b"\x04" + public_key)


@dataclass(frozen=True)
class KeyPair:
    secret: int = field(repr=False)
    public_key: bytes = field(init=False)
    address: bytes = field(init=False)
    _key: ec.EllipticCurvePrivateKey = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 1 <= self.secret < CURVE_ORDER:
            raise ValueError("private scalar out of range")
        key = ec.derive_private_key(self.secret, CURVE)
        pub = _point_bytes(key.public_key())
        object.__setattr__(self, "_key", key)
        object.__setattr__(self, "public_key", pub)
        object.__setattr__(self, "address", derive_address(pub))

    @property
    def private_key(self) -> bytes:
        return self.secret.to_bytes(32, "big")

    @property
    def crypto_key(self) -> ec.EllipticCurvePrivateKey:
        return self._key

    def sign(self, message: bytes) -> bytes:
        r, s = decode_dss_signature(self._key.sign(message, _ECDSA))
        return r.to_bytes(32, "big") + s.to_bytes(32, "big")

    @classmethod
    def from_private_key(cls, private_key: bytes) -> KeyPair:
        return cls(int.from_bytes(private_key, "big"))

    @classmethod
    def from_seed(cls, seed: bytes | str) -> KeyPair:
        """Deterministic key for reproducible runs. Never use for real keys."""
        if isinstance(seed, str):
            seed = seed.encode("utf-8")
        return cls(int.from_bytes(sha256(b"certchain-seed" + seed), "big") % (CURVE_ORDER - 1) + 1)


def generate_identity(rng: random.Random | None = None) -> KeyPair:
    """Fresh keypair; ``rng`` only for deterministic test and scenario runs."""
    if rng is None:
        return KeyPair(secrets.randbelow(CURVE_ORDER - 1) + 1)
    return KeyPair(rng.randrange(1, CURVE_ORDER))


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    if len(signature) != 64:
        return False
    try:
        pub = load_public_key(public_key)
    except ValueError:
        return False
    r = int.from_bytes(signature[:32], "big")
    s = int.from_bytes(signature[32:], "big")
    if not (0 < r < CURVE_ORDER and 0 < s < CURVE_ORDER):
        return False
    try:
        pub.verify(encode_dss_signature(r, s), message, _ECDSA)
    except InvalidSignature:
        return False
    return True
