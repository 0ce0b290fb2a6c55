from __future__ import annotations


class ChainError(Exception):
    """Base class for ledger errors. ``code`` is a stable machine-readable reason."""

    code = "ChainError"

    def __init__(self, code: str | None = None, message: str = "") -> None:
        if code is not None:
            self.code = code
        self.message = message
        super().__init__(f"{self.code}: {message}" if message else self.code)


class TransactionRejected(ChainError):
    """Raised when a transaction cannot be accepted or executed at all.

    Codes: BadSignature, BadNonce, FeeTooLow, InsufficientBalance,
    UnknownContract, UnknownContractKind, NotValidator.
    """


class BlockRejected(ChainError):
    """Raised when a block fails validation.

    Codes: BadParentHash, BadProofOfWork, BadHeight, InvalidTransaction,
    UnknownValidator, BadGenesis.
    """

    def __init__(self, code: str, message: str = "", height: int | None = None, index: int | None = None) -> None:
        self.height = height
        self.index = index
        super().__init__(code, message)


class ContractReverted(ChainError):
    """A contract function refused the call; fee and nonce are still consumed."""
