"""Ledger nodes: validation, block building and fork choice.

A node is a single-writer state machine guarded by one lock; readers get
immutable-by-convention :class:`LedgerState` snapshots, one per known block.
Fork choice is longest valid chain with first-seen tie breaking.
"""

from __future__ import annotations

import enum
import logging
import threading
import time
from typing import Callable, Iterable, Sequence

from certchain.chain.block import Block, solve
from certchain.chain.encoding import to_hex
from certchain.chain.errors import BlockRejected, TransactionRejected
from certchain.chain.genesis import GenesisConfig
from certchain.chain.state import LedgerState, Receipt, apply_transaction, apply_transactions, check_transaction
from certchain.chain.tx import SignedTransaction

log = logging.getLogger(__name__)


class NodeRole(enum.Enum):
    CLIENT = "client"
    OBSERVER = "observer"
    VALIDATOR = "validator"

    @property
    def full(self) -> bool:
        return self is not NodeRole.CLIENT


def check_header(config: GenesisConfig, block: Block, parent: Block) -> None:
    if block.height == 0:
        raise BlockRejected("BadGenesis", "cannot append a second genesis block", height=0)
    if block.height != parent.height + 1:
        raise BlockRejected("BadHeight", f"expected height {parent.height + 1}", height=block.height)
    if block.parent_hash != parent.block_hash:
        raise BlockRejected("BadParentHash", height=block.height)
    if not block.meets_difficulty(config.difficulty_bits):
        raise BlockRejected("BadProofOfWork", height=block.height)
    if config.validators and block.miner not in config.validators:
        raise BlockRejected("UnknownValidator", to_hex(block.miner), height=block.height)


def validate_chain(config: GenesisConfig, blocks: Sequence[Block]) -> tuple[LedgerState, list[list[Receipt]]]:
    """Validate ``blocks`` from genesis and return the final state plus per-block receipts.

    ``blocks`` may start with the genesis block or with height 1.
    """
    genesis = config.genesis_block()
    state = config.initial_state()
    receipts: list[list[Receipt]] = []
    blocks = list(blocks)
    if blocks and blocks[0].height == 0:
        if blocks[0].block_hash != genesis.block_hash:
            raise BlockRejected("BadGenesis", "genesis block does not match configuration", height=0)
        blocks = blocks[1:]
    parent = genesis
    for block in blocks:
        check_header(config, block, parent)
        receipts.append(apply_transactions(state, block, config))
        parent = block
    return state, receipts


def replay(config: GenesisConfig, blocks: Sequence[Block]) -> LedgerState:
    return validate_chain(config, blocks)[0]


class Node:
    def __init__(
        self,
        config: GenesisConfig,
        role: NodeRole = NodeRole.OBSERVER,
        name: str = "",
        miner: bytes | None = None,
        clock: Callable[[], int] | None = None,
    ) -> None:
        if role is NodeRole.VALIDATOR and miner is None:
            raise ValueError("a validator needs a miner address")
        self.config = config
        self.role = role
        self.name = name or role.value
        self.miner = miner
        self.clock = clock or (lambda: int(time.time()))
        self.mempool: list[SignedTransaction] = []
        self.received = 0
        self.rejections: list[BlockRejected] = []
        self.attempts: list[int] = []
        self._lock = threading.RLock()
        self._blocks: dict[bytes, Block] = {}
        self._states: dict[bytes, LedgerState] = {}
        self._receipts: dict[bytes, list[Receipt]] = {}
        self._chain_cache: tuple[bytes, list[Block]] | None = None
        if role.full:
            genesis = config.genesis_block()
            self._blocks[genesis.block_hash] = genesis
            self._states[genesis.block_hash] = config.initial_state()
            self._receipts[genesis.block_hash] = []
            self._head = genesis.block_hash

    def __repr__(self) -> str:
        return f"Node({self.name!r}, {self.role.value})"

    def _require_full(self) -> None:
        if not self.role.full:
            raise RuntimeError(f"{self.name} is a client node and holds no chain")

    @property
    def head(self) -> Block:
        self._require_full()
        return self._blocks[self._head]

    @property
    def height(self) -> int:
        return self.head.height

    @property
    def state(self) -> LedgerState:
        """Snapshot at the current head. Treat as read-only."""
        self._require_full()
        with self._lock:
            return self._states[self._head]

    def chain(self) -> list[Block]:
        """Canonical chain, genesis first."""
        self._require_full()
        with self._lock:
            if self._chain_cache is not None and self._chain_cache[0] == self._head:
                return list(self._chain_cache[1])
            out = []
            h = self._head
            while True:
                b = self._blocks[h]
                out.append(b)
                if b.height == 0:
                    break
                h = b.parent_hash
            out.reverse()
            self._chain_cache = (self._head, out)
            return list(out)

    def receipts(self) -> Iterable[Receipt]:
        for b in self.chain():
            yield from self._receipts[b.block_hash]

    def receipt(self, tx_hash: bytes) -> Receipt | None:
        for b in reversed(self.chain()):
            for r in self._receipts[b.block_hash]:
                if r.tx_hash == tx_hash:
                    return r
        return None

    # transactions

    def pending_nonce(self, address: bytes) -> int:
        with self._lock:
            pending = sum(1 for t in self.mempool if t.sender == address)
            return self.state.next_nonce(address) + pending

    def submit_transaction(self, tx: SignedTransaction) -> bytes:
        if self.role is not NodeRole.VALIDATOR:
            raise TransactionRejected("NotValidator", f"{self.name} does not accept transactions")
        with self._lock:
            state = self.state
            pending = [t for t in self.mempool if t.sender == tx.sender]
            check_transaction(
                state,
                tx,
                self.config,
                expected_nonce=state.next_nonce(tx.sender) + len(pending),
                spendable=state.balance(tx.sender) - sum(t.spend() for t in pending),
            )
            self.mempool.append(tx)
            return tx.tx_hash

    # blocks

    def build_block(self) -> Block:
        """Assemble valid mempool transactions, solve the puzzle and append locally."""
        if self.role is not NodeRole.VALIDATOR:
            raise RuntimeError("only validators build blocks")
        with self._lock:
            parent = self.head
            working = self.state.copy()
            included = []
            for tx in self.mempool:
                try:
                    apply_transaction(working, tx, self.config, parent.height + 1, len(included), self.miner)
                except TransactionRejected as e:
                    log.debug("dropping tx %s: %s", to_hex(tx.tx_hash), e.code)
                    continue
                included.append(tx)
            template = Block(
                height=parent.height + 1,
                parent_hash=parent.block_hash,
                transactions=tuple(included),
                miner=self.miner,
                nonce=0,
                timestamp=max(int(self.clock()), parent.timestamp),
            )
            block, attempts = solve(template, self.config.difficulty_bits)
            self.attempts.append(attempts)
            self.validate_and_append(block)
            return block

    def validate_and_append(self, block: Block) -> bool:
        """Store ``block`` if valid. Returns False for an already-known block."""
        self._require_full()
        with self._lock:
            h = block.block_hash
            if h in self._blocks:
                return False
            parent = self._blocks.get(block.parent_hash)
            if parent is None:
                code = "BadHeight" if block.height != self.height + 1 else "BadParentHash"
                raise BlockRejected(code, "unknown parent", height=block.height)
            check_header(self.config, block, parent)
            state = self._states[parent.block_hash].copy()
            receipts = apply_transactions(state, block, self.config)
            self._blocks[h] = block
            self._states[h] = state
            self._receipts[h] = receipts
            if block.height > self.height:
                self._head = h
                self._prune_mempool()
            return True

    def _prune_mempool(self) -> None:
        state = self.state
        self.mempool = [t for t in self.mempool if t.nonce >= state.next_nonce(t.sender)]
