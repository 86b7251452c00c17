"""
Idealized random chip: iid unbiased enrollment bits, iid flips with a fixed
probability on every re-measurement. Monte Carlo harnesses on top of it.

Every random stream is a PCG64 generator derived from ``SeedSequence(seed)``
with a spawn key naming its purpose, so results are reproducible and do not
depend on how trials are split across workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta

from .core import FingerprintMask, MemorySnapshot, TransformParams, enroll
from .errors import InvalidArgument

RNG_ALGORITHM = "numpy.random.PCG64 via SeedSequence(seed, spawn_key)"

# spawn-key tags keep the streams for different purposes apart
_ENROLL, _REMEASURE, _TRIAL = 0, 1, 2
CHUNK_TRIALS = 64


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def flip_mask(rng: np.random.Generator, shape, p: float) -> np.ndarray:
    """Boolean array where each entry is True independently with probability p."""
    if p <= 0.0:
        return np.zeros(shape, dtype=bool)
    if p >= 1.0:
        return np.ones(shape, dtype=bool)
    return rng.random(shape, dtype=np.float32) < np.float32(p) if p > 1e-6 else _sparse_flips(rng, shape, p)


def _sparse_flips(rng, shape, p):
    # float32 cannot resolve tiny p; place flips by sampling their count directly
    size = int(np.prod(shape))
    out = np.zeros(size, dtype=bool)
    count = rng.binomial(size, p)
    if count:
        out[rng.choice(size, count, replace=False)] = True
    return out.reshape(shape)


@dataclass(frozen=True, eq=False)
class SimChip:
    size_bits: int
    ber_f: float
    seed: int
    enrollment: MemorySnapshot
    chip_id: str = "sim"

    @property
    def metadata(self) -> dict:
        return {"rng": RNG_ALGORITHM, "seed": self.seed, "ber_f": self.ber_f, "size_bits": self.size_bits}


def new_chip(size_bits: int, ber_f: float, seed: int, chip_id: str | None = None) -> SimChip:
    size_bits = int(size_bits)
    if size_bits <= 0:
        raise InvalidArgument("chip size must be positive")
    ber_f = float(ber_f)
    if not 0.0 <= ber_f <= 1.0:
        raise InvalidArgument(f"ber_f must lie in [0, 1], got {ber_f}")
    chip_id = chip_id or f"sim-{seed}"
    bits = _rng(seed, _ENROLL).integers(0, 2, size_bits, dtype=np.uint8)
    snap = MemorySnapshot(bits, chip_id=chip_id, condition="sim", t_index=0)
    return SimChip(size_bits, ber_f, int(seed), snap, chip_id)


def remeasure(chip: SimChip, t_index: int, sub_seed: int | None = None) -> MemorySnapshot:
    """A noisy re-read of the chip; ``sub_seed`` defaults to ``t_index``."""
    if t_index < 1:
        raise InvalidArgument("t_index 0 is reserved for enrollment")
    sub = t_index if sub_seed is None else sub_seed
    flips = flip_mask(_rng(chip.seed, _REMEASURE, int(sub)), chip.size_bits, chip.ber_f)
    bits = chip.enrollment.bits ^ flips.astype(np.uint8)
    return MemorySnapshot(bits, chip_id=chip.chip_id, condition="sim", t_index=t_index)


def clopper_pearson(errors: int, total: int, confidence: float = 0.99) -> tuple[float, float]:
    """One-sided exact binomial bounds (lower, upper) at the given confidence."""
    alpha = 1.0 - confidence
    lower = 0.0 if errors == 0 else float(beta.ppf(alpha, errors, total - errors + 1))
    upper = 1.0 if errors == total else float(beta.ppf(1.0 - alpha, errors + 1, total - errors))
    return lower, upper


@dataclass(frozen=True)
class MonteCarloResult:
    trials: int
    bit_evaluations: int
    errors: int
    selected_bits: int = 0
    empty: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def empirical_rate(self) -> float:
        return self.errors / self.bit_evaluations if self.bit_evaluations else 0.0

    @property
    def ci_lower_99(self) -> float:
        return clopper_pearson(self.errors, self.bit_evaluations)[0] if self.bit_evaluations else 0.0

    @property
    def ci_upper_99(self) -> float:
        return clopper_pearson(self.errors, self.bit_evaluations)[1] if self.bit_evaluations else 1.0

    def within_bound(self, predicted: float) -> bool:
        """True when the 99% one-sided upper bound on the rate does not exceed ``predicted``."""
        return not self.empty and self.ci_upper_99 <= predicted

    def to_record(self) -> dict:
        rec = {
            "trials": self.trials,
            "bit_evaluations": self.bit_evaluations,
            "errors": self.errors,
            "empirical_rate": self.empirical_rate,
            "ci_lower_99": self.ci_lower_99,
            "ci_upper_99": self.ci_upper_99,
            "selected_bits": self.selected_bits,
            "empty": self.empty,
        }
        rec.update(self.metadata)
        return rec


def _chunks(trials: int, size: int = CHUNK_TRIALS):
    for idx, start in enumerate(range(0, trials, size)):
        yield idx, min(size, trials - start)


def _run_chunks(work, trials: int, jobs: int) -> int:
    chunks = list(_chunks(trials))
    if jobs <= 1 or len(chunks) == 1:
        return sum(work(c) for c in chunks)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return sum(pool.map(work, chunks))


def _support_noise(mask: FingerprintMask, chip: SimChip, seed: int, idx: int, count: int):
    """Enrollment bits of the mask support with fresh noise, batch shape (count, support)."""
    support = mask.support().reshape(-1)
    base = chip.enrollment.bits[support]
    flips = flip_mask(_rng(seed, _TRIAL, idx), (count, support.size), chip.ber_f)
    return base[None, :] ^ flips.astype(np.uint8)


def _regenerate_compact(noisy: np.ndarray, mask: FingerprintMask) -> np.ndarray:
    """Regenerate from support bits laid out as (batch, k, groups * n)."""
    n = mask.params.n
    norms = noisy.reshape(noisy.shape[0], len(mask), -1, n).sum(axis=-1, dtype=np.int64)
    if mask.params.method.name == "SNORM":
        return (2 * norms[..., 0] > n).astype(np.uint8)
    return (norms[..., 0] > norms[..., 1]).astype(np.uint8)


def _trial_errors(chip: SimChip, mask: FingerprintMask, ref: np.ndarray, seed: int, per_trial_any: bool):
    def work(chunk):
        idx, count = chunk
        got = _regenerate_compact(_support_noise(mask, chip, seed, idx, count), mask)
        wrong = got != ref[None, :]
        return int(wrong.any(axis=1).sum()) if per_trial_any else int(wrong.sum())

    return work


def monte_carlo_ber(
    params: TransformParams,
    ber_f: float,
    chip_size: int,
    trials: int,
    seed: int = 0,
    jobs: int = 1,
    chip: SimChip | None = None,
) -> MonteCarloResult:
    """Enroll once, regenerate ``trials`` noisy re-reads, count wrong bits.

    Only the raw bits that regeneration reads are re-drawn per trial; the
    other cells cannot influence the result.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    chip = chip or new_chip(chip_size, ber_f, seed)
    mask, fp = enroll(chip.enrollment, params)
    meta = {"rng": RNG_ALGORITHM, "seed": seed, "params": str(params), "ber_f": float(chip.ber_f)}
    if len(mask) == 0:
        return MonteCarloResult(trials, 0, 0, 0, True, meta)
    errors = _run_chunks(_trial_errors(chip, mask, fp.bits, seed, False), trials, jobs)
    return MonteCarloResult(trials, trials * len(mask), errors, len(mask), False, meta)


def monte_carlo_keyfail(
    params: TransformParams,
    ber_f: float,
    k: int,
    trials: int,
    chip_size: int = 64 * 8192,
    seed: int = 0,
    jobs: int = 1,
    chip: SimChip | None = None,
) -> MonteCarloResult:
    """Fraction of trials in which any of the first k fingerprint bits flips.

    ``bit_evaluations`` counts trials here, so the interval is on the
    per-trial failure probability. Too little yield gives an empty result.
    """
    if trials < 1:
        raise InvalidArgument("trials must be >= 1")
    if k < 1:
        raise InvalidArgument("k must be >= 1")
    chip = chip or new_chip(chip_size, ber_f, seed)
    mask, fp = enroll(chip.enrollment, params)
    meta = {"rng": RNG_ALGORITHM, "seed": seed, "params": str(params), "ber_f": float(chip.ber_f), "k": k,
            "available_bits": len(mask)}
    if len(mask) < k:
        return MonteCarloResult(trials, 0, 0, len(mask), True, meta)
    mask = mask.truncate(k)
    failures = _run_chunks(_trial_errors(chip, mask, fp.bits[:k], seed, True), trials, jobs)
    return MonteCarloResult(trials, trials, failures, k, False, meta)


def expected_count_interval(groups: int, prob: float, sigmas: float = 3.0) -> tuple[float, float]:
    mean = groups * prob
    sd = math.sqrt(groups * prob * (1 - prob))
    return mean - sigmas * sd, mean + sigmas * sd
