"""
Root keys taken straight from transformed bits, and the binary mask file.

Mask file, all integers little-endian::

    offset  size  field
    0       4     magic b"NFMK"
    4       1     version (1)
    5       1     method (0 = S-Norm, 1 = D-Norm)
    6       2     n       (u16)
    8       2     m       (u16, 1 for S-Norm)
    10      2     theta   (u16)
    12      4     entry count (u32)
    16      ...   entries
    end     0|16  optional AES-128-CMAC tag over every preceding byte

S-Norm entry: u32 group index. D-Norm entry: u32 block index, then u8 lower
and u8 higher designated group position within the block.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import Fingerprint, FingerprintMask, MemorySnapshot, Method, TransformParams, bits_to_bytes, enroll
from .crypto import TAG_BYTES, cmac, tags_equal
from .errors import (BadMagic, BadVersion, InvalidArgument, MaskFormatError, NonMonotonicOffsets,
                     TruncatedMask, YieldShortfall)

MAGIC = b"NFMK"
VERSION = 1
HEADER = struct.Struct("<4sBBHHHI")
SNORM_ENTRY = np.dtype("<u4")
DNORM_ENTRY = np.dtype([("offset", "<u4"), ("lo", "u1"), ("hi", "u1")])


@dataclass(frozen=True, eq=False)
class RootKey:
    bits: np.ndarray

    @property
    def k(self) -> int:
        return int(self.bits.size)

    def to_bytes(self) -> bytes:
        """Key bits packed LSB-first; k must be a multiple of 8."""
        return bits_to_bytes(self.bits)

    def mac_key(self) -> bytes:
        if self.k < 128:
            raise InvalidArgument(f"MAC key needs at least 128 bits, have {self.k}")
        return bits_to_bytes(self.bits[:128])

    def __eq__(self, other):
        if isinstance(other, RootKey):
            return np.array_equal(self.bits, other.bits)
        return NotImplemented

    __hash__ = None


def derive_key(snapshot: MemorySnapshot, params: TransformParams, k: int = 128):
    """Enroll and keep the first k transformed bits; returns (RootKey, truncated mask)."""
    if k < 1:
        raise InvalidArgument("key length must be positive")
    mask, fp = enroll(snapshot, params)
    if len(mask) < k:
        raise YieldShortfall(k, len(mask))
    return RootKey(fp.bits[:k].copy()), mask.truncate(k)


def key_from_fingerprint(fp: Fingerprint) -> RootKey:
    return RootKey(fp.bits.copy())


def _as_mac_key(key) -> bytes:
    if isinstance(key, RootKey):
        return key.mac_key()
    if isinstance(key, (bytes, bytearray)):
        if len(key) < 16:
            raise InvalidArgument("MAC key needs at least 128 bits")
        return bytes(key[:16])
    raise InvalidArgument(f"unsupported key type {type(key).__name__}")


def mask_mac(key, mask_bytes: bytes) -> bytes:
    return cmac(_as_mac_key(key), mask_bytes)


def verify_mask_mac(key, mask_bytes: bytes, tag: bytes) -> bool:
    return tags_equal(mask_mac(key, mask_bytes), tag)


def mask_body(mask: FingerprintMask) -> bytes:
    p = mask.params
    if max(p.n, p.m, p.theta) > 0xFFFF:
        raise InvalidArgument("n, m and theta must fit in 16 bits")
    if len(mask) and int(mask.offsets[-1]) > 0xFFFFFFFF:
        raise InvalidArgument("offsets must fit in 32 bits")
    if p.method is Method.DNORM and p.m > 256:
        raise InvalidArgument("inner offsets must fit in 8 bits (m <= 256)")
    head = HEADER.pack(MAGIC, VERSION, int(p.method), p.n, p.m, p.theta, len(mask))
    if p.method is Method.SNORM:
        entries = mask.offsets.astype(SNORM_ENTRY)
    else:
        entries = np.empty(len(mask), dtype=DNORM_ENTRY)
        entries["offset"] = mask.offsets
        entries["lo"] = mask.inner[:, 0]
        entries["hi"] = mask.inner[:, 1]
    return head + entries.tobytes()


def write_mask(mask: FingerprintMask, key=None) -> bytes:
    body = mask_body(mask)
    return body + mask_mac(key, body) if key is not None else body


def parse_mask_file(data: bytes) -> tuple[FingerprintMask, bytes | None]:
    """Parse a mask file into (mask, tag or None); the tag is not checked here."""
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < HEADER.size:
        raise TruncatedMask(f"header needs {HEADER.size} bytes, got {len(data)}")
    _, version, method, n, m, theta, count = HEADER.unpack_from(data)
    if version != VERSION:
        raise BadVersion(f"unsupported mask version {version}")
    if method not in (0, 1):
        raise MaskFormatError(f"unknown method byte {method}")
    dtype = SNORM_ENTRY if method == 0 else DNORM_ENTRY
    body_len = HEADER.size + count * dtype.itemsize
    if len(data) < body_len:
        raise TruncatedMask(f"{count} entries need {body_len} bytes, got {len(data)}")
    trailer = len(data) - body_len
    if trailer not in (0, TAG_BYTES):
        raise MaskFormatError(f"{trailer} trailing bytes; expected none or a {TAG_BYTES}-byte tag")
    entries = np.frombuffer(data, dtype=dtype, count=count, offset=HEADER.size)
    offsets = (entries if method == 0 else entries["offset"]).astype(np.int64)
    if count > 1 and np.any(np.diff(offsets) <= 0):
        raise NonMonotonicOffsets("outer offsets must be strictly increasing")
    try:
        params = TransformParams(Method(method), n, m, theta)
        inner = None if method == 0 else np.stack([entries["lo"], entries["hi"]], axis=1)
        mask = FingerprintMask(params, offsets, inner)
    except InvalidArgument as exc:
        raise MaskFormatError(str(exc)) from None
    return mask, (data[body_len:] if trailer else None)


def read_mask(data: bytes, key=None) -> FingerprintMask:
    """Parse a mask; if ``key`` is given a valid tag is required."""
    mask, tag = parse_mask_file(data)
    if key is not None:
        if tag is None:
            raise MaskFormatError("mask carries no MAC tag")
        if not verify_mask_mac(key, bytes(data[: len(data) - TAG_BYTES]), tag):
            raise MaskFormatError("mask MAC tag does not verify")
    return mask
