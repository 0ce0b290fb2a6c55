"""Pre-agreed chain configuration and the genesis block it defines.

JSON form::

    {"difficulty-bits": 8, "reward": 2, "fee": 1, "embargo-blocks": 10,
     "timestamp": 0,
     "allocations": [{"address": "0x..", "amount": 1000}],
     "validators": ["0x.."]}

``embargo-blocks`` and ``timestamp`` are optional.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from certchain.chain.block import ZERO_ADDRESS, ZERO_HASH, Block
from certchain.chain.encoding import field as enc_field
from certchain.chain.encoding import from_hex, sha256, to_hex, u32, u64
from certchain.chain.state import LedgerState

DEFAULT_DIFFICULTY = 8
DEFAULT_REWARD = 2
DEFAULT_FEE = 1
# Block-height proxy for the disclosure embargo period.
DEFAULT_EMBARGO_BLOCKS = 10


@dataclass(frozen=True)
class GenesisConfig:
    allocations: tuple[tuple[bytes, int], ...] = ()
    validators: tuple[bytes, ...] = ()
    difficulty_bits: int = DEFAULT_DIFFICULTY
    reward: int = DEFAULT_REWARD
    fee: int = DEFAULT_FEE
    embargo_blocks: int = DEFAULT_EMBARGO_BLOCKS
    timestamp: int = 0
    _digest: bytes = field(init=False, repr=False, compare=False, default=b"")

    def __post_init__(self) -> None:
        if not 0 <= self.difficulty_bits <= 256:
            raise ValueError("difficulty-bits must be within [0, 256]")
        if self.reward < 0 or self.fee < 0:
            raise ValueError("reward and fee must be non-negative")
        if self.embargo_blocks <= 0:
            raise ValueError("embargo-blocks must be positive")
        addrs = [a for a, _ in self.allocations]
        if len(set(addrs)) != len(addrs):
            raise ValueError("duplicate allocation address")
        object.__setattr__(self, "_digest", sha256(self._encode()))

    def _encode(self) -> bytes:
        out = enc_field(b"certchain-genesis-v1")
        out += u64(self.difficulty_bits) + u64(self.reward) + u64(self.fee)
        out += u64(self.embargo_blocks) + u64(self.timestamp)
        out += u32(len(self.allocations))
        for addr, amount in self.allocations:
            out += enc_field(addr) + u64(amount)
        out += u32(len(self.validators))
        for v in self.validators:
            out += enc_field(v)
        return out

    @property
    def digest(self) -> bytes:
        return self._digest

    @property
    def total_allocation(self) -> int:
        return sum(amount for _, amount in self.allocations)

    def genesis_block(self) -> Block:
        return Block(
            height=0,
            parent_hash=ZERO_HASH,
            transactions=(),
            miner=ZERO_ADDRESS,
            nonce=0,
            timestamp=self.timestamp,
            extra=self.digest,
        )

    def initial_state(self) -> LedgerState:
        return LedgerState(balances={a: amt for a, amt in self.allocations})

    def to_dict(self) -> dict[str, Any]:
        return {
            "difficulty-bits": self.difficulty_bits,
            "reward": self.reward,
            "fee": self.fee,
            "embargo-blocks": self.embargo_blocks,
            "timestamp": self.timestamp,
            "allocations": [{"address": to_hex(a), "amount": amt} for a, amt in self.allocations],
            "validators": [to_hex(v) for v in self.validators],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> GenesisConfig:
        return cls(
            allocations=tuple((from_hex(a["address"]), int(a["amount"])) for a in d.get("allocations", [])),
            validators=tuple(from_hex(v) for v in d.get("validators", [])),
            difficulty_bits=int(d.get("difficulty-bits", DEFAULT_DIFFICULTY)),
            reward=int(d.get("reward", DEFAULT_REWARD)),
            fee=int(d.get("fee", DEFAULT_FEE)),
            embargo_blocks=int(d.get("embargo-blocks", DEFAULT_EMBARGO_BLOCKS)),
            timestamp=int(d.get("timestamp", 0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> GenesisConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")
