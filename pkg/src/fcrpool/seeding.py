"""Deterministic derivation of independent RNG streams.

Child seeds are 64-bit digests of a structured key, so every sampling site
gets its own reproducible stream without sharing global RNG state.
"""

import hashlib


def _canon(part) -> str:
    if isinstance(part, float):
        return repr(part)
    if isinstance(part, bool):
        return "1" if part else "0"
    if isinstance(part, int):
        return repr(part)
    if isinstance(part, str):
        return part
    raise TypeError(f"unsupported seed key part: {part!r}")


def child_seed(*parts) -> int:
    """Derive a 64-bit seed from a master seed plus purpose tags.

    The same parts always give the same seed; any change to a part gives an
    unrelated stream.
    """
    key = "\x1f".join(_canon(p) for p in parts)
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")
