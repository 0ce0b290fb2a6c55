"""Blocks and the proof-of-work puzzle.

Header bytes::

    field(b"certchain-block-v1") || u64(height) || field(parent_hash)
        || field(tx_root) || field(miner) || u64(nonce) || u64(timestamp)
        || field(extra)

    tx_root = sha256(u32(count) || tx_hash_0 || tx_hash_1 ...)

``extra`` is empty except in the genesis block, where it carries the
digest of the genesis configuration. The block hash is ``sha256`` of the
header bytes; a block meets difficulty ``d`` when that hash has at least
``d`` leading zero bits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any

from certchain.chain.encoding import field, from_hex, sha256, to_hex, u32, u64
from certchain.chain.tx import SignedTransaction

BLOCK_DOMAIN = b"certchain-block-v1"
ZERO_HASH = bytes(32)
ZERO_ADDRESS = bytes(20)


def leading_zero_bits(digest: bytes) -> int:
    return len(digest) * 8 - int.from_bytes(digest, "big").bit_length()


def compute_tx_root(transactions: tuple[SignedTransaction, ...]) -> bytes:
    return sha256(u32(len(transactions)) + b"".join(t.tx_hash for t in transactions))


@dataclass(frozen=True)
class Block:
    height: int
    parent_hash: bytes
    transactions: tuple[SignedTransaction, ...]
    miner: bytes
    nonce: int
    timestamp: int
    extra: bytes = b""

    @cached_property
    def tx_root(self) -> bytes:
        return compute_tx_root(self.transactions)

    def _header_parts(self) -> tuple[bytes, bytes]:
        head = (
            field(BLOCK_DOMAIN)
            + u64(self.height)
            + field(self.parent_hash)
            + field(self.tx_root)
            + field(self.miner)
        )
        tail = u64(self.timestamp) + field(self.extra)
        return head, tail

    def header_bytes(self) -> bytes:
        head, tail = self._header_parts()
        return head + u64(self.nonce) + tail

    @cached_property
    def block_hash(self) -> bytes:
        return sha256(self.header_bytes())

    def meets_difficulty(self, bits: int) -> bool:
        return leading_zero_bits(self.block_hash) >= bits

    def to_dict(self) -> dict[str, Any]:
        return {
            "height": self.height,
            "parent_hash": to_hex(self.parent_hash),
            "miner": to_hex(self.miner),
            "nonce": self.nonce,
            "timestamp": self.timestamp,
            "extra": to_hex(self.extra),
            "transactions": [t.to_dict() for t in self.transactions],
            "hash": to_hex(self.block_hash),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> Block:
        block = cls(
            height=int(d["height"]),
            parent_hash=from_hex(d["parent_hash"]),
            transactions=tuple(SignedTransaction.from_dict(t) for t in d["transactions"]),
            miner=from_hex(d["miner"]),
            nonce=int(d["nonce"]),
            timestamp=int(d["timestamp"]),
            extra=from_hex(d.get("extra", "0x")),
        )
        recorded = d.get("hash")
        if recorded is not None and from_hex(recorded) != block.block_hash:
            raise ValueError(f"recorded hash does not match header at height {block.height}")
        return block


def solve(template: Block, bits: int, start_nonce: int = 0) -> tuple[Block, int]:
    """Search nonces upward from ``start_nonce``; return the block and attempt count."""
    head, tail = template._header_parts()
    nonce = start_nonce
    attempts = 0
    while True:
        attempts += 1
        digest = sha256(head + u64(nonce) + tail)
        if leading_zero_bits(digest) >= bits:
            return replace(template, nonce=nonce), attempts
        nonce += 1
