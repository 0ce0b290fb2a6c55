"""Blockchain-backed sharing of IoT cybersecurity certification data.

Importing the package registers the native contract kinds
(``IdentificationAuthority``, ``DeviceRegistry``) with the ledger runtime.
"""

from certchain import chain, controller, identity, mudfile, registry, store, vulndisc

__version__ = "0.1.0"

__all__ = ["chain", "controller", "identity", "mudfile", "registry", "store", "vulndisc"]
