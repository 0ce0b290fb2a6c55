"""Signed transactions.

Signing bytes::

    field(b"certchain-tx-v1") || field(sender) || field(public_key)
        || u64(nonce) || u64(fee) || payload

    Transfer        b"\\x01" || field(to) || u64(amount)
    DeployContract  b"\\x02" || field(utf8(kind)) || args
    CallContract    b"\\x03" || field(contract) || field(utf8(function)) || args

The transaction hash is ``sha256(signing_bytes || field(signature))``.
The public key travels with the transaction because an address is a
one-way digest of it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Union

from certchain.chain import crypto
from certchain.chain.encoding import (
    ArgValue,
    encode_args,
    field,
    from_hex,
    sha256,
    to_hex,
    u64,
    value_from_json,
    value_to_json,
)

TX_DOMAIN = b"certchain-tx-v1"


@dataclass(frozen=True)
class Transfer:
    to: bytes
    amount: int

    def encode(self) -> bytes:
        return b"\x01" + field(self.to) + u64(self.amount)


@dataclass(frozen=True)
class DeployContract:
    kind: str
    args: tuple[ArgValue, ...] = ()

    def encode(self) -> bytes:
        return b"\x02" + field(self.kind.encode("utf-8")) + encode_args(self.args)


@dataclass(frozen=True)
class CallContract:
    contract: bytes
    function: str
    args: tuple[ArgValue, ...] = ()

    def encode(self) -> bytes:
        return (
            b"\x03"
            + field(self.contract)
            + field(self.function.encode("utf-8"))
            + encode_args(self.args)
        )


Payload = Union[Transfer, DeployContract, CallContract]


def payload_to_dict(p: Payload) -> dict[str, Any]:
    if isinstance(p, Transfer):
        return {"type": "transfer", "to": to_hex(p.to), "amount": p.amount}
    if isinstance(p, DeployContract):
        return {"type": "deploy", "kind": p.kind, "args": [value_to_json(a) for a in p.args]}
    return {
        "type": "call",
        "contract": to_hex(p.contract),
        "function": p.function,
        "args": [value_to_json(a) for a in p.args],
    }


def payload_from_dict(d: dict[str, Any]) -> Payload:
    kind = d["type"]
    if kind == "transfer":
        return Transfer(from_hex(d["to"]), int(d["amount"]))
    if kind == "deploy":
        return DeployContract(d["kind"], tuple(value_from_json(a) for a in d["args"]))
    if kind == "call":
        return CallContract(
            from_hex(d["contract"]), d["function"], tuple(value_from_json(a) for a in d["args"])
        )
    raise ValueError(f"unknown payload type {kind!r}")


@dataclass(frozen=True)
class SignedTransaction:
    sender: bytes
    public_key: bytes
    nonce: int
    fee: int
    payload: Payload
    signature: bytes

    def signing_bytes(self) -> bytes:
        return _signing_bytes(self.sender, self.public_key, self.nonce, self.fee, self.payload)

    @cached_property
    def tx_hash(self) -> bytes:
        return sha256(self.signing_bytes() + field(self.signature))

    def verify_signature(self) -> bool:
        if crypto.derive_address(self.public_key) != self.sender:
            return False
        return crypto.verify(self.public_key, self.signing_bytes(), self.signature)

    def spend(self) -> int:
        """Currency leaving the sender if the transaction executes."""
        amount = self.payload.amount if isinstance(self.payload, Transfer) else 0
        return amount + self.fee

    def to_dict(self) -> dict[str, Any]:
        return {
            "sender": to_hex(self.sender),
            "public_key": to_hex(self.public_key),
            "nonce": self.nonce,
            "fee": self.fee,
            "payload": payload_to_dict(self.payload),
            "signature": to_hex(self.signature),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SignedTransaction:
        return cls(
            sender=from_hex(d["sender"]),
            public_key=from_hex(d["public_key"]),
            nonce=int(d["nonce"]),
            fee=int(d["fee"]),
            payload=payload_from_dict(d["payload"]),
            signature=from_hex(d["signature"]),
        )


def _signing_bytes(sender: bytes, public_key: bytes, nonce: int, fee: int, payload: Payload) -> bytes:
    return (
        field(TX_DOMAIN)
        + field(sender)
        + field(public_key)
        + u64(nonce)
        + u64(fee)
        + payload.encode()
    )


def sign_transaction(kp: crypto.KeyPair, payload: Payload, nonce: int, fee: int) -> SignedTransaction:
    sig = kp.sign(_signing_bytes(kp.address, kp.public_key, nonce, fee, payload))
    return SignedTransaction(kp.address, kp.public_key, nonce, fee, payload, sig)
