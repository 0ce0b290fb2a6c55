"""Ledger state and the native contract runtime.

Contracts are typed state machines rather than bytecode: each contract kind
is a :class:`NativeContract` subclass registered under a kind name, whose
externally callable functions are declared with :func:`external`. A call
either completes or raises :class:`ContractReverted`; a reverted call leaves
the contract untouched but still consumes the sender's fee and nonce.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, ClassVar, Iterable

from certchain.chain.block import Block
from certchain.chain.encoding import field as enc_field
from certchain.chain.encoding import sha256, to_hex, u64
from certchain.chain.errors import BlockRejected, ContractReverted, TransactionRejected
from certchain.chain.tx import CallContract, DeployContract, SignedTransaction, Transfer

if TYPE_CHECKING:
    from certchain.chain.genesis import GenesisConfig

ADDRESS = "address"
HASH32 = "bytes32"

_TYPE_CHECKS: dict[Any, Callable[[Any], bool]] = {
    str: lambda v: isinstance(v, str),
    int: lambda v: isinstance(v, int) and not isinstance(v, bool),
    bytes: lambda v: isinstance(v, bytes),
    ADDRESS: lambda v: isinstance(v, bytes) and len(v) == 20,
    HASH32: lambda v: isinstance(v, bytes),
}


def check_args(args: tuple, types: tuple) -> None:
    if len(args) != len(types):
        raise ContractReverted("BadArguments", f"expected {len(types)} arguments, got {len(args)}")
    for i, (value, t) in enumerate(zip(args, types)):
        if not _TYPE_CHECKS[t](value):
            raise ContractReverted("BadArguments", f"argument {i} is not {getattr(t, '__name__', t)}")


def external(name: str, *types: Any) -> Callable:
    """Mark a method as an externally callable contract function."""

    def deco(fn: Callable) -> Callable:
        fn._external = (name, types)
        return fn

    return deco


@dataclass
class CallContext:
    sender: bytes
    height: int
    tx_index: int
    contract: bytes
    state: LedgerState
    config: GenesisConfig
    events: list = field(default_factory=list)

    def emit(self, event: Any) -> None:
        self.events.append(event)


class NativeContract:
    kind: ClassVar[str]
    constructor_args: ClassVar[tuple] = ()
    _externals: ClassVar[dict[str, tuple[Callable, tuple]]] = {}

    def __init_subclass__(cls, **kw: Any) -> None:
        super().__init_subclass__(**kw)
        table: dict[str, tuple[Callable, tuple]] = {}
        for klass in reversed(cls.__mro__):
            for attr in vars(klass).values():
                spec = getattr(attr, "_external", None)
                if spec is not None:
                    table[spec[0]] = (attr, spec[1])
        cls._externals = table

    @classmethod
    def construct(cls, ctx: CallContext, *args: Any) -> NativeContract:
        raise NotImplementedError

    def call(self, ctx: CallContext, function: str, args: tuple) -> None:
        try:
            fn, types = self._externals[function]
        except KeyError:
            raise ContractReverted("UnknownFunction", function) from None
        check_args(args, types)
        fn(self, ctx, *args)


CONTRACT_KINDS: dict[str, type[NativeContract]] = {}


def register_contract(cls: type[NativeContract]) -> type[NativeContract]:
    CONTRACT_KINDS[cls.kind] = cls
    return cls


def contract_address(sender: bytes, nonce: int) -> bytes:
    return sha256(enc_field(b"certchain-contract") + enc_field(sender) + u64(nonce))[-20:]


@dataclass
class LedgerState:
    balances: dict[bytes, int] = field(default_factory=dict)
    nonces: dict[bytes, int] = field(default_factory=dict)
    contracts: dict[bytes, NativeContract] = field(default_factory=dict)
    height: int = 0

    def balance(self, address: bytes) -> int:
        return self.balances.get(address, 0)

    def next_nonce(self, address: bytes) -> int:
        return self.nonces.get(address, 0)

    def contract(self, address: bytes, kind: type | None = None) -> NativeContract | None:
        c = self.contracts.get(address)
        if c is not None and kind is not None and not isinstance(c, kind):
            return None
        return c

    def total_supply(self) -> int:
        return sum(self.balances.values())

    def copy(self) -> LedgerState:
        return copy.deepcopy(self)

    def summary(self) -> dict[str, Any]:
        return {
            "height": self.height,
            "balances": {to_hex(a): v for a, v in sorted(self.balances.items())},
            "nonces": {to_hex(a): v for a, v in sorted(self.nonces.items())},
            "contracts": {to_hex(a): c.kind for a, c in sorted(self.contracts.items())},
        }


@dataclass(frozen=True)
class Receipt:
    tx_hash: bytes
    height: int
    index: int
    status: str
    error_code: str | None = None
    error_message: str = ""
    contract_address: bytes | None = None
    events: tuple = ()

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def raise_for_status(self) -> Receipt:
        if not self.ok:
            raise ContractReverted(self.error_code, self.error_message)
        return self

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "tx_hash": to_hex(self.tx_hash),
            "height": self.height,
            "index": self.index,
            "status": self.status,
        }
        if self.error_code:
            d["error"] = {"code": self.error_code, "message": self.error_message}
        if self.contract_address is not None:
            d["contract"] = to_hex(self.contract_address)
        if self.events:
            d["events"] = [e.to_dict() for e in self.events]
        return d


def check_transaction(state: LedgerState, tx: SignedTransaction, config: GenesisConfig,
                      expected_nonce: int | None = None, spendable: int | None = None) -> None:
    """Raise TransactionRejected unless ``tx`` can execute against ``state``."""
    if not tx.verify_signature():
        raise TransactionRejected("BadSignature")
    want = state.next_nonce(tx.sender) if expected_nonce is None else expected_nonce
    if tx.nonce != want:
        raise TransactionRejected("BadNonce", f"expected nonce {want}, got {tx.nonce}")
    if tx.fee < config.fee:
        raise TransactionRejected("FeeTooLow", f"minimum fee is {config.fee}")
    available = state.balance(tx.sender) if spendable is None else spendable
    if tx.spend() > available:
        raise TransactionRejected("InsufficientBalance", f"needs {tx.spend()}, has {available}")
    p = tx.payload
    if isinstance(p, CallContract) and p.contract not in state.contracts:
        raise TransactionRejected("UnknownContract", to_hex(p.contract))
    if isinstance(p, DeployContract) and p.kind not in CONTRACT_KINDS:
        raise TransactionRejected("UnknownContractKind", p.kind)


def apply_transaction(state: LedgerState, tx: SignedTransaction, config: GenesisConfig,
                      height: int, index: int, miner: bytes) -> Receipt:
    """Execute ``tx`` in place on ``state`` (which the caller owns)."""
    check_transaction(state, tx, config)
    sender = tx.sender
    state.balances[sender] = state.balance(sender) - tx.fee
    state.balances[miner] = state.balance(miner) + tx.fee
    state.nonces[sender] = tx.nonce + 1

    p = tx.payload
    if isinstance(p, Transfer):
        state.balances[sender] -= p.amount
        state.balances[p.to] = state.balance(p.to) + p.amount
        return Receipt(tx.tx_hash, height, index, "ok")

    if isinstance(p, DeployContract):
        addr = contract_address(sender, tx.nonce)
        ctx = CallContext(sender, height, index, addr, state, config)
        try:
            instance = CONTRACT_KINDS[p.kind].construct(ctx, *p.args)
        except ContractReverted as e:
            return Receipt(tx.tx_hash, height, index, "reverted", e.code, e.message)
        except TypeError as e:
            return Receipt(tx.tx_hash, height, index, "reverted", "BadArguments", str(e))
        state.contracts[addr] = instance
        return Receipt(tx.tx_hash, height, index, "ok", contract_address=addr, events=tuple(ctx.events))

    assert isinstance(p, CallContract)
    working = copy.deepcopy(state.contracts[p.contract])
    ctx = CallContext(sender, height, index, p.contract, state, config)
    try:
        working.call(ctx, p.function, p.args)
    except ContractReverted as e:
        return Receipt(tx.tx_hash, height, index, "reverted", e.code, e.message)
    state.contracts[p.contract] = working
    return Receipt(tx.tx_hash, height, index, "ok", events=tuple(ctx.events))


def apply_transactions(state: LedgerState, block: Block, config: GenesisConfig) -> list[Receipt]:
    """Apply all of ``block``'s transactions plus the block reward, in place."""
    receipts = []
    for i, tx in enumerate(block.transactions):
        try:
            receipts.append(apply_transaction(state, tx, config, block.height, i, block.miner))
        except TransactionRejected as e:
            raise BlockRejected(
                "InvalidTransaction", f"tx {i}: {e.code}", height=block.height, index=i
            ) from e
    state.balances[block.miner] = state.balance(block.miner) + config.reward
    state.height = block.height
    return receipts


def iter_events(receipts: Iterable[Receipt]) -> Iterable[Any]:
    for r in receipts:
        yield from r.events
