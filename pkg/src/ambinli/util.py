"""Small shared helpers: error base class, seed derivation, file hashing."""

from __future__ import annotations

import hashlib
from pathlib import Path


class DataError(ValueError):
    """Base for data-validation failures (CLI maps these to exit code 3)."""


def derive_seed(base_seed: int, purpose: str) -> int:
    """Derive an independent sub-seed from a global seed and a purpose string.

    Every random stream in the package is seeded this way, so adding a new
    consumer never perturbs an existing one.
    """
    digest = hashlib.blake2b(
        f"{base_seed}:{purpose}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") % (2**63)


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def fmt_float(x: float) -> str:
    """Serialize a float with 17 significant digits (lossless round-trip)."""
    return format(float(x), ".17g")
