"""Content-addressed off-chain store.

Layout under the root directory::

    objects/<hh>/<64-hex sha256>

where ``<hh>`` is the first two hex digits. Locations have the form
``store://<64-hex sha256>``, so equal content always maps to the same
location. Writes go to a temporary file in the target directory and are
renamed into place, so readers never see a partial object.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import tempfile
from pathlib import Path

SCHEME = "store://"


class StoreError(Exception):
    code = "StoreError"


class EmptyContent(StoreError):
    code = "EmptyContent"


class NotFound(StoreError):
    code = "NotFound"


def digest(content: bytes) -> bytes:
    return hashlib.sha256(content).digest()


def verify(content: bytes, expected_hash: bytes) -> bool:
    """True iff ``content`` hashes to ``expected_hash``. Empty content is allowed."""
    return hmac.compare_digest(digest(content), expected_hash)


class ContentStore:
    def __init__(self, root: str | os.PathLike) -> None:
        self.root = Path(root)
        (self.root / "objects").mkdir(parents=True, exist_ok=True)

    def _path(self, location: str) -> Path:
        if not location.startswith(SCHEME):
            raise NotFound(location)
        h = location[len(SCHEME):]
        if len(h) != 64 or any(c not in "0123456789abcdef" for c in h):
            raise NotFound(location)
        return self.root / "objects" / h[:2] / h

    def put(self, content: bytes) -> tuple[str, bytes]:
        if not content:
            raise EmptyContent("refusing to store empty content")
        h = digest(content)
        location = SCHEME + h.hex()
        path = self._path(location)
        if path.exists():
            return location, h
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(content)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return location, h

    def get(self, location: str) -> bytes:
        path = self._path(location)
        try:
            return path.read_bytes()
        except FileNotFoundError:
            raise NotFound(location) from None

    def path_of(self, location: str) -> Path:
        """Filesystem path backing ``location`` (for inspection and tamper tests)."""
        return self._path(location)

    def __contains__(self, location: str) -> bool:
        try:
            return self._path(location).exists()
        except NotFound:
            return False
