"""In-process simulated network and a thin transacting client."""

from __future__ import annotations

from typing import Any

from certchain.chain.block import Block
from certchain.chain.crypto import KeyPair
from certchain.chain.errors import BlockRejected, TransactionRejected
from certchain.chain.node import Node, NodeRole
from certchain.chain.state import LedgerState, Receipt
from certchain.chain.tx import CallContract, DeployContract, Payload, SignedTransaction, Transfer, sign_transaction


class Network:
    """Lossless, ordered, synchronous delivery between registered nodes."""

    def __init__(self, nodes: list[Node] | None = None) -> None:
        self.nodes: list[Node] = []
        for n in nodes or ():
            self.register(n)

    def register(self, node: Node) -> Node:
        self.nodes.append(node)
        return node

    @property
    def validators(self) -> list[Node]:
        return [n for n in self.nodes if n.role is NodeRole.VALIDATOR]

    @property
    def full_nodes(self) -> list[Node]:
        return [n for n in self.nodes if n.role.full]

    def view(self) -> Node:
        """A full node to read chain state from (observers preferred)."""
        for n in self.full_nodes:
            if n.role is NodeRole.OBSERVER:
                return n
        return self.full_nodes[0]

    def broadcast(self, block: Block, origin: Node | None = None) -> int:
        """Deliver ``block`` once to every full node other than ``origin``."""
        delivered = 0
        for n in self.full_nodes:
            if n is origin:
                continue
            n.received += 1
            delivered += 1
            try:
                n.validate_and_append(block)
            except BlockRejected as e:
                n.rejections.append(e)
        return delivered

    def broadcast_chain(self, origin: Node) -> None:
        for b in origin.chain()[1:]:
            self.broadcast(b, origin=origin)

    def submit(self, tx: SignedTransaction) -> bytes:
        """Submit to the first validator; gossip to the rest once accepted."""
        validators = self.validators
        if not validators:
            raise TransactionRejected("NotValidator", "no validator on the network")
        h = validators[0].submit_transaction(tx)
        for v in validators[1:]:
            try:
                v.submit_transaction(tx)
            except TransactionRejected:
                pass
        return h

    def mine(self, validator: Node | None = None) -> Block:
        v = validator or self.validators[0]
        block = v.build_block()
        self.broadcast(block, origin=v)
        return block


class Client:
    """Signs and submits transactions for one keypair.

    ``transact`` mines immediately, which is the desk-scale workflow used by
    the scenario runner and tests.
    """

    def __init__(self, keypair: KeyPair, network: Network, fee: int | None = None) -> None:
        self.keypair = keypair
        self.network = network
        self.fee = fee

    @property
    def address(self) -> bytes:
        return self.keypair.address

    @property
    def state(self) -> LedgerState:
        return self.network.view().state

    def _fee(self) -> int:
        return self.fee if self.fee is not None else self.network.validators[0].config.fee

    def sign(self, payload: Payload, nonce: int | None = None) -> SignedTransaction:
        if nonce is None:
            nonce = self.network.validators[0].pending_nonce(self.address)
        return sign_transaction(self.keypair, payload, nonce, self._fee())

    def send(self, payload: Payload) -> SignedTransaction:
        tx = self.sign(payload)
        self.network.submit(tx)
        return tx

    def transact(self, payload: Payload, check: bool = True) -> Receipt:
        tx = self.send(payload)
        self.network.mine()
        receipt = self.network.validators[0].receipt(tx.tx_hash)
        if receipt is None:
            raise TransactionRejected("NotIncluded", "transaction was dropped from the block")
        return receipt.raise_for_status() if check else receipt

    def transfer(self, to: bytes, amount: int) -> Receipt:
        return self.transact(Transfer(to, amount))

    def deploy(self, kind: str, *args: Any) -> bytes:
        receipt = self.transact(DeployContract(kind, tuple(args)))
        assert receipt.contract_address is not None
        return receipt.contract_address

    def call(self, contract: bytes, function: str, *args: Any, check: bool = True) -> Receipt:
        return self.transact(CallContract(contract, function, tuple(args)), check=check)
