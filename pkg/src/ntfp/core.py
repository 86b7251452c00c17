"""
Bit-level primitives and the S-Norm / D-Norm transforms.

A raw fingerprint is a flat vector of memory bits. It is cut sequentially into
disjoint n-bit groups (S-Norm) or blocks of m such groups (D-Norm); tail bits
that do not fill a whole group/block are ignored. Memory bit ``i`` lives in
byte ``i // 8`` at bit position ``i % 8`` (LSB first).

Bit vectors are numpy ``uint8`` arrays holding 0/1 values.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .errors import InvalidArgument

BitsLike = Union[str, bytes, Iterable[int], np.ndarray]


def as_bits(value: BitsLike) -> np.ndarray:
    """Coerce a ``"0101"`` string or a 0/1 sequence into a uint8 bit vector.

    ``bytes`` are NOT unpacked here (use :func:`bytes_to_bits` for that); a
    ``bytes`` value is read as a sequence of 0/1 integers.
    """
    if isinstance(value, str):
        s = value.replace(" ", "").replace("_", "")
        if s.strip("01"):
            raise InvalidArgument(f"bit string may only contain 0 and 1: {value!r}")
        return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")
    arr = np.asarray(list(value) if not isinstance(value, np.ndarray) else value)
    if arr.ndim != 1:
        raise InvalidArgument("bit vector must be one-dimensional")
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise InvalidArgument("bit vector entries must be 0 or 1")
    return arr.astype(np.uint8, copy=False)


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")


def bits_to_bytes(bits: np.ndarray) -> bytes:
    bits = as_bits(bits)
    if bits.size % 8:
        raise InvalidArgument(f"bit length {bits.size} is not a whole number of bytes")
    return np.packbits(bits, bitorder="little").tobytes()


def bits_to_str(bits: np.ndarray) -> str:
    return (as_bits(bits) + ord("0")).tobytes().decode("ascii")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.uint8, copy=True)
    arr.flags.writeable = False
    return arr


class Method(enum.IntEnum):
    SNORM = 0
    DNORM = 1

    @classmethod
    def parse(cls, value) -> "Method":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().upper().replace("-", "").replace("_", "")
            if key in cls.__members__:
                return cls[key]
        try:
            return cls(int(value))
        except (TypeError, ValueError):
            raise InvalidArgument(f"unknown transform method {value!r}") from None


@dataclass(frozen=True)
class TransformParams:
    method: Method
    n: int
    m: int = 1
    theta: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        for name in ("n", "m", "theta"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise InvalidArgument(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.n < 1:
            raise InvalidArgument(f"n must be positive, got {self.n}")
        if self.theta < 0:
            raise InvalidArgument(f"theta must be non-negative, got {self.theta}")
        if self.method is Method.SNORM:
            if self.m != 1:
                raise InvalidArgument("S-Norm does not use m; it must be 1")
            if self.theta > self.n // 2:
                raise InvalidArgument(f"S-Norm theta must be <= floor(n/2) = {self.n // 2}")
        else:
            if self.m < 2:
                raise InvalidArgument(f"D-Norm needs m >= 2, got {self.m}")
            if self.theta > self.n:
                raise InvalidArgument(f"D-Norm theta must be <= n = {self.n}")

    @classmethod
    def snorm(cls, n: int, theta: int) -> "TransformParams":
        return cls(Method.SNORM, n, 1, theta)

    @classmethod
    def dnorm(cls, n: int, m: int, theta: int) -> "TransformParams":
        return cls(Method.DNORM, n, m, theta)

    @property
    def unit_bits(self) -> int:
        """Raw bits consumed per transformed bit (one group or one block)."""
        return self.n * self.m

    def __str__(self):
        if self.method is Method.SNORM:
            return f"S-Norm(n={self.n}, theta={self.theta})"
        return f"D-Norm(n={self.n}, m={self.m}, theta={self.theta})"


@dataclass(frozen=True, eq=False)
class MemorySnapshot:
    """One full bit image of a memory at one measurement instant."""

    bits: np.ndarray
    chip_id: str = ""
    condition: str = ""
    t_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bits", _frozen(as_bits(self.bits)))
        if self.t_index < 0:
            raise InvalidArgument("t_index must be non-negative")

    @classmethod
    def from_bytes(cls, data: bytes, **meta) -> "MemorySnapshot":
        return cls(bytes_to_bits(data), **meta)

    def to_bytes(self) -> bytes:
        return bits_to_bytes(self.bits)

    @property
    def size_bits(self) -> int:
        return int(self.bits.size)

    def __len__(self):
        return self.size_bits

    def __eq__(self, other):
        if not isinstance(other, MemorySnapshot):
            return NotImplemented
        return (self.chip_id, self.condition, self.t_index) == (
            other.chip_id, other.condition, other.t_index) and np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Fingerprint:
    """The ordered transformed bit string."""

    bits: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))

    def __post_init__(self):
        object.__setattr__(self, "bits", _frozen(as_bits(self.bits)))

    @property
    def k(self) -> int:
        return int(self.bits.size)

    def __len__(self):
        return self.k

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Fingerprint(self.bits[item])
        return int(self.bits[item])

    def __eq__(self, other):
        if isinstance(other, Fingerprint):
            return np.array_equal(self.bits, other.bits)
        return NotImplemented

    __hash__ = None

    def __str__(self):
        return bits_to_str(self.bits)


@dataclass(frozen=True, eq=False)
class FingerprintMask:
    """Positions of the selected groups/blocks; carries no fingerprint values.

    ``offsets`` are group indices (S-Norm) or block indices (D-Norm), strictly
    increasing. For D-Norm, ``inner`` holds per entry the two designated
    group positions inside the block, in ascending order. Which of the two
    held the highest norm at enrollment is exactly the fingerprint bit, so it
    is deliberately not recorded.
    """

    params: TransformParams
    offsets: np.ndarray
    inner: np.ndarray | None = None

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.int64).reshape(-1)
        if offsets.size and offsets.min() < 0:
            raise InvalidArgument("mask offsets must be non-negative")
        if offsets.size > 1 and np.any(np.diff(offsets) <= 0):
            raise InvalidArgument("mask offsets must be strictly increasing")
        offsets.flags.writeable = False
        object.__setattr__(self, "offsets", offsets)
        if self.params.method is Method.SNORM:
            if self.inner is not None:
                raise InvalidArgument("S-Norm masks have no inner offsets")
            return
        if self.inner is None:
            raise InvalidArgument("D-Norm masks need inner offsets")
        inner = np.asarray(self.inner, dtype=np.int64).reshape(-1, 2)
        if inner.shape[0] != offsets.size:
            raise InvalidArgument("one inner-offset pair is required per entry")
        if inner.size and (inner.min() < 0 or inner.max() >= self.params.m):
            raise InvalidArgument(f"inner offsets must lie in [0, {self.params.m})")
        if np.any(inner[:, 0] >= inner[:, 1]):
            raise InvalidArgument("inner offsets must be distinct and ascending")
        inner.flags.writeable = False
        object.__setattr__(self, "inner", inner)

    def __len__(self):
        return int(self.offsets.size)

    def truncate(self, k: int) -> "FingerprintMask":
        inner = None if self.inner is None else self.inner[:k]
        return FingerprintMask(self.params, self.offsets[:k], inner)

    def min_snapshot_bits(self) -> int:
        """Smallest snapshot length the mask can be applied to."""
        if not len(self):
            return 0
        return (int(self.offsets[-1]) + 1) * self.params.unit_bits

    def support(self) -> np.ndarray:
        """Indices of every raw bit that regeneration reads, shape (k, g, n).

        ``g`` is 1 for S-Norm and 2 for D-Norm (lower-address group first).
        """
        n, m = self.params.n, self.params.m
        lane = np.arange(n)
        if self.params.method is Method.SNORM:
            return (self.offsets[:, None] * n + lane)[:, None, :]
        starts = self.offsets[:, None] * (n * m) + self.inner * n
        return starts[:, :, None] + lane

    def __eq__(self, other):
        if not isinstance(other, FingerprintMask):
            return NotImplemented
        if self.params != other.params or not np.array_equal(self.offsets, other.offsets):
            return False
        if self.inner is None or other.inner is None:
            return self.inner is None and other.inner is None
        return np.array_equal(self.inner, other.inner)

    __hash__ = None


def l1_norm(group_bits: BitsLike) -> int:
    """Hamming weight of a non-empty bit group."""
    bits = as_bits(group_bits)
    if bits.size == 0:
        raise InvalidArgument("l1_norm of an empty bit group")
    return int(bits.sum(dtype=np.int64))


def fhd(a: BitsLike, b: BitsLike) -> float:
    """Fractional Hamming distance between two equal-length bit vectors."""
    a, b = _bits_of(a), _bits_of(b)
    if a.size != b.size:
        raise InvalidArgument(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise InvalidArgument("fhd of empty vectors")
    return int(np.count_nonzero(a != b)) / a.size


def uniformity(f) -> float:
    """Fraction of ones in a transformed fingerprint."""
    bits = _bits_of(f)
    if bits.size == 0:
        raise InvalidArgument("uniformity of an empty fingerprint")
    return int(bits.sum(dtype=np.int64)) / bits.size


def _bits_of(x) -> np.ndarray:
    if isinstance(x, (Fingerprint, MemorySnapshot)):
        return x.bits
    return as_bits(x)


def group_norms(bits: np.ndarray, n: int) -> np.ndarray:
    """Norms of the sequential n-bit groups of ``bits`` (tail ignored)."""
    g = bits.size // n
    return bits[: g * n].reshape(g, n).sum(axis=1, dtype=np.int64)


def _check_enrollment(snapshot: MemorySnapshot, params: TransformParams, method: Method):
    if params.method is not method:
        raise InvalidArgument(f"expected {method.name} parameters, got {params.method.name}")
    if snapshot.t_index != 0:
        raise InvalidArgument("enrollment requires the t_index 0 snapshot")
    if snapshot.size_bits < params.unit_bits:
        raise InvalidArgument(
            f"snapshot has {snapshot.size_bits} bits, fewer than one {params.unit_bits}-bit unit")


def snorm_enroll(snapshot: MemorySnapshot, params: TransformParams):
    """Select groups whose norm sits at least theta away from the middle.

    Returns ``(mask, fingerprint)``; bit 1 marks the high side. A norm of
    exactly n/2 (even n, theta 0) counts as the low side.
    """
    _check_enrollment(snapshot, params, Method.SNORM)
    n, theta = params.n, params.theta
    norms = group_norms(snapshot.bits, n)
    low = norms <= n // 2 - theta
    high = (norms >= (n + 1) // 2 + theta) & ~low
    sel = np.flatnonzero(low | high)
    return FingerprintMask(params, sel), Fingerprint(high[sel].astype(np.uint8))


def dnorm_enroll(snapshot: MemorySnapshot, params: TransformParams):
    """Select blocks whose highest and lowest group norms differ by >= theta.

    The bit is 1 when the highest-norm group sits at the lower address. Ties
    for highest or lowest go to the lowest group index; if all m norms are
    equal (only selectable at theta 0) the last group stands in as highest.
    """
    _check_enrollment(snapshot, params, Method.DNORM)
    n, m, theta = params.n, params.m, params.theta
    norms = group_norms(snapshot.bits, n)
    norms = norms[: (norms.size // m) * m].reshape(-1, m)
    hi_idx = norms.argmax(axis=1)
    lo_idx = norms.argmin(axis=1)
    flat = hi_idx == lo_idx
    hi_idx = np.where(flat, m - 1, hi_idx)
    lo_idx = np.where(flat, 0, lo_idx)
    spread = norms.max(axis=1) - norms.min(axis=1)
    sel = np.flatnonzero(spread >= theta)
    hi, lo = hi_idx[sel], lo_idx[sel]
    bits = (hi < lo).astype(np.uint8)
    inner = np.stack([np.minimum(hi, lo), np.maximum(hi, lo)], axis=1)
    return FingerprintMask(params, sel, inner), Fingerprint(bits)


def enroll(snapshot: MemorySnapshot, params: TransformParams):
    if params.method is Method.SNORM:
        return snorm_enroll(snapshot, params)
    return dnorm_enroll(snapshot, params)


def regenerate(snapshot: MemorySnapshot, mask: FingerprintMask) -> Fingerprint:
    """Recompute the transformed bits at the masked positions, no re-selection.

    S-Norm: 1 iff the group norm is strictly above n/2. D-Norm: 1 iff the
    lower-address designated group has a strictly higher norm than the other.
    """
    bits = snapshot.bits if isinstance(snapshot, MemorySnapshot) else as_bits(snapshot)
    if mask.min_snapshot_bits() > bits.size:
        raise InvalidArgument(
            f"mask reaches bit {mask.min_snapshot_bits()} but snapshot has {bits.size} bits")
    return Fingerprint(regenerate_bits(bits, mask))


def regenerate_bits(bits: np.ndarray, mask: FingerprintMask) -> np.ndarray:
    """Vectorised core of :func:`regenerate`; ``bits`` may carry leading batch axes."""
    norms = bits[..., mask.support()].sum(axis=-1, dtype=np.int64)
    if mask.params.method is Method.SNORM:
        return (2 * norms[..., 0] > mask.params.n).astype(np.uint8)
    return (norms[..., 0] > norms[..., 1]).astype(np.uint8)
