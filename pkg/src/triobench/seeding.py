"""Stable seed derivation so every sampled artifact traces back to one run seed."""

import hashlib


def derive_seed(*parts) -> int:
    """Map (seed, label, ...) onto a 63-bit integer, stable across runs and platforms.

    Python's builtin ``hash`` is salted per process, so child seeds are derived
    from a SHA-256 digest of the stringified parts instead.
    """
    key = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
