"""AES-128-CMAC (RFC 4493), backed by the ``cryptography`` package."""
from __future__ import annotations

import hmac

from cryptography.hazmat.primitives import cmac as _cmac
from cryptography.hazmat.primitives.ciphers import algorithms

from .errors import InvalidArgument

TAG_BYTES = 16
KEY_BYTES = 16


def cmac(key: bytes, message: bytes) -> bytes:
    key = bytes(key)
    if len(key) != KEY_BYTES:
        raise InvalidArgument(f"CMAC key must be exactly 128 bits, got {len(key) * 8}")
    c = _cmac.CMAC(algorithms.AES(key))
    c.update(bytes(message))
    return c.finalize()


def tags_equal(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(bytes(a), bytes(b))
