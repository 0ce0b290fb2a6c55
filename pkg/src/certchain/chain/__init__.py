"""Minimal proof-of-work ledger with native contracts."""

from certchain.chain.block import Block, leading_zero_bits, solve
from certchain.chain.crypto import KeyPair, derive_address, generate_identity, verify
from certchain.chain.encoding import from_hex, sha256, to_hex
from certchain.chain.errors import BlockRejected, ChainError, ContractReverted, TransactionRejected
from certchain.chain.genesis import GenesisConfig
from certchain.chain.network import Client, Network
from certchain.chain.node import Node, NodeRole, replay, validate_chain
from certchain.chain.persist import append_block, load_chain, save_chain
from certchain.chain.state import LedgerState, NativeContract, Receipt, external, register_contract
from certchain.chain.tx import CallContract, DeployContract, SignedTransaction, Transfer, sign_transaction

__all__ = [
    "Block",
    "BlockRejected",
    "CallContract",
    "ChainError",
    "Client",
    "ContractReverted",
    "DeployContract",
    "GenesisConfig",
    "KeyPair",
    "LedgerState",
    "NativeContract",
    "Network",
    "Node",
    "NodeRole",
    "Receipt",
    "SignedTransaction",
    "Transfer",
    "TransactionRejected",
    "append_block",
    "derive_address",
    "external",
    "from_hex",
    "generate_identity",
    "leading_zero_bits",
    "load_chain",
    "register_contract",
    "replay",
    "save_chain",
    "sha256",
    "sign_transaction",
    "solve",
    "to_hex",
    "validate_chain",
    "verify",
]
