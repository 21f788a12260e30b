"""Small shared helpers: seed derivation and atomic file writes."""

from __future__ import annotations

import hashlib
import os
import tempfile


def derive_seed(root_seed: int, label: str) -> int:
    """Stable 63-bit stream seed for a named consumer of the root seed."""
    digest = hashlib.blake2b(
        f"{root_seed}/{label}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") & 0x7FFF_FFFF_FFFF_FFFF


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write a file completely or not at all (tmp file + rename)."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
