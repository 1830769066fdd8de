"""64-bit FNV-1a.

Used wherever a stable, language-independent hash of a short string is
needed: voice-pool assignment, deterministic tone frequencies, and enrolled
voice ids.  Offset basis 14695981039346656037, prime 1099511628211.
"""

_OFFSET = 0xCBF29CE484222325
_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = _OFFSET
    for b in data:
        h ^= b
        h = (h * _PRIME) & _MASK
    return h


def fnv1a_64_str(text: str) -> int:
    return fnv1a_64(text.encode("utf-8"))
