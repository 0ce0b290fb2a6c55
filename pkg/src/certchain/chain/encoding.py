"""Canonical byte encoding used for signing and hashing.

Every hashed or signed structure is a concatenation of the following
primitives, all big-endian:

    u32(n)     4 bytes, unsigned
    u64(n)     8 bytes, unsigned
    field(b)   u32(len(b)) || b

Contract-call arguments are self-describing values. Each is a one-byte
type tag followed by a field:

    str    b"s" || field(utf8(value))
    int    b"i" || field(u64(value))
    bytes  b"b" || field(value)

and an argument tuple is ``u32(count) || value_0 || value_1 ...``.
Booleans and negative integers are not representable on purpose.

External formats render hashes and addresses as ``0x`` lowercase hex.
"""

from __future__ import annotations

import hashlib
from typing import Any, Iterable, Union

ArgValue = Union[str, int, bytes]

U64_MAX = 2**64 - 1


def u32(n: int) -> bytes:
    if not 0 <= n < 2**32:
        raise ValueError(f"u32 out of range: {n}")
    return n.to_bytes(4, "big")


def u64(n: int) -> bytes:
    if isinstance(n, bool) or not 0 <= n <= U64_MAX:
        raise ValueError(f"u64 out of range: {n!r}")
    return n.to_bytes(8, "big")


def field(b: bytes) -> bytes:
    return u32(len(b)) + b


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def encode_value(value: ArgValue) -> bytes:
    if isinstance(value, bool):
        raise TypeError("booleans are not valid contract arguments")
    if isinstance(value, str):
        return b"s" + field(value.encode("utf-8"))
    if isinstance(value, int):
        return b"i" + field(u64(value))
    if isinstance(value, (bytes, bytearray)):
        return b"b" + field(bytes(value))
    raise TypeError(f"unsupported argument type: {type(value).__name__}")


def encode_args(args: Iterable[ArgValue]) -> bytes:
    args = tuple(args)
    return u32(len(args)) + b"".join(encode_value(a) for a in args)


def to_hex(b: bytes) -> str:
    return "0x" + bytes(b).hex()


def from_hex(s: str) -> bytes:
    if not isinstance(s, str) or not s.startswith("0x"):
        raise ValueError(f"expected 0x-prefixed hex, got {s!r}")
    return bytes.fromhex(s[2:])


def value_to_json(value: ArgValue) -> dict[str, Any]:
    if isinstance(value, bool):
        raise TypeError("booleans are not valid contract arguments")
    if isinstance(value, str):
        return {"s": value}
    if isinstance(value, int):
        return {"i": value}
    if isinstance(value, (bytes, bytearray)):
        return {"b": to_hex(bytes(value))}
    raise TypeError(f"unsupported argument type: {type(value).__name__}")


def value_from_json(obj: dict[str, Any]) -> ArgValue:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ValueError(f"malformed argument: {obj!r}")
    ((tag, v),) = obj.items()
    if tag == "s" and isinstance(v, str):
        return v
    if tag == "i" and isinstance(v, int) and not isinstance(v, bool):
        return v
    if tag == "b":
        return from_hex(v)
    raise ValueError(f"malformed argument: {obj!r}")
