"""Deterministic seed derivation.

Every randomized unit of work (client shuffle, model init, round noise,
eval split, ...) derives its own seed from a root seed plus a stable
string identifier, so reruns are bit-reproducible and independent units
never share an RNG stream.
"""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *parts: object) -> int:
    """Hash (root, parts...) into a 63-bit seed."""
    tag = ":".join([str(int(root))] + [str(p) for p in parts])
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1
