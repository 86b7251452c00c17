"""
Closed-form reliability and yield models for the two transforms, plus the
grid searches built on top of them.

Binomial terms are evaluated in log space from exact log-binomial rows and
tails are accumulated from the far end with ``logaddexp`` so probabilities
far below 1e-16 keep full relative precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import Method, TransformParams
from .errors import InvalidArgument

BITS_PER_KIB = 8192
DEFAULT_GRID = (8, 16, 32, 64, 128)


def _check_prob(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise InvalidArgument(f"{name} must lie in [0, 1], got {p}")
    return p


def _check_int(v, name: str, lo: int | None = None, hi: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise InvalidArgument(f"{name} must be an integer, got {v!r}")
    v = int(v)
    if lo is not None and v < lo:
        raise InvalidArgument(f"{name} must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise InvalidArgument(f"{name} must be <= {hi}, got {v}")
    return v


@lru_cache(maxsize=None)
def _log_comb_row(n: int) -> np.ndarray:
    row = np.array([math.log(math.comb(n, i)) for i in range(n + 1)])
    row.flags.writeable = False
    return row


@lru_cache(maxsize=4096)
def _log_pmf_row(n: int, p: float) -> np.ndarray:
    x = np.arange(n + 1)
    if p == 0.0:
        row = np.full(n + 1, -np.inf)
        row[0] = 0.0
    elif p == 1.0:
        row = np.full(n + 1, -np.inf)
        row[n] = 0.0
    else:
        row = _log_comb_row(n) + x * math.log(p) + (n - x) * math.log1p(-p)
    row.flags.writeable = False
    return row


@lru_cache(maxsize=4096)
def _log_sf_row(n: int, p: float) -> np.ndarray:
    """``out[x + 1] = log P(X > x)`` for x = -1..n."""
    lp = _log_pmf_row(n, p)
    # tail-first accumulation: smallest terms of the upper tail are added first
    tail = np.logaddexp.accumulate(lp[::-1])[::-1]
    out = np.empty(n + 2)
    out[: n + 1] = tail
    out[n + 1] = -np.inf
    out.flags.writeable = False
    return out


def _log_sf(x: np.ndarray | int, n: int, p: float):
    idx = np.clip(np.asarray(x) + 1, 0, n + 1)
    return _log_sf_row(n, p)[idx]


def binom_pmf(x: int, n: int, p: float) -> float:
    n = _check_int(n, "n", 0)
    x = _check_int(x, "x", 0, n)
    p = _check_prob(p)
    return float(math.exp(_log_pmf_row(n, p)[x]))


def binom_sf(x: int, n: int, p: float) -> float:
    """P(X > x) for X ~ Binomial(n, p), summed from the tail inwards."""
    n = _check_int(n, "n", 0)
    x = _check_int(x, "x")
    p = _check_prob(p)
    if x < 0:
        return 1.0
    if x >= n:
        return 0.0
    return float(math.exp(_log_sf_row(n, p)[x + 1]))


def binom_cdf(x: int, n: int, p: float) -> float:
    n = _check_int(n, "n", 0)
    x = _check_int(x, "x")
    p = _check_prob(p)
    if x < 0:
        return 0.0
    if x >= n:
        return 1.0
    # the lower tail is the upper tail of the mirrored variable
    return float(math.exp(_log_sf_row(n, 1.0 - p)[n - x]))


def _fsum_exp(log_terms: np.ndarray) -> float:
    log_terms = log_terms[np.isfinite(log_terms)]
    if log_terms.size == 0:
        return 0.0
    top = float(log_terms.max())
    return math.exp(top) * math.fsum(np.exp(log_terms - top).tolist())


def snorm_ber(n: int, theta: int, ber_f: float) -> float:
    """Worst-case transformed-bit error rate of S-Norm."""
    n = _check_int(n, "n", 1)
    theta = _check_int(theta, "theta", 0, n // 2)
    p = _check_prob(ber_f, "ber_f")
    low_budget = n // 2 - theta
    high_side = (n + 1) // 2 + theta
    i = np.arange(low_budget + 1)
    terms = _log_sf(theta + i, high_side, p) + _log_pmf_row(low_budget, p)
    return min(1.0, _fsum_exp(terms))


def dnorm_ber(n: int, theta: int, ber_f: float) -> float:
    """Worst-case transformed-bit error rate of D-Norm; independent of m."""
    n = _check_int(n, "n", 1)
    theta = _check_int(theta, "theta", 0, n)
    p = _check_prob(ber_f, "ber_f")
    budget = n - theta
    i = np.arange(budget + 1)
    terms = _log_sf(theta + i - 1, n + theta, p) + _log_pmf_row(budget, p)
    return min(1.0, _fsum_exp(terms))


def ber(params: TransformParams, ber_f: float) -> float:
    if params.method is Method.SNORM:
        return snorm_ber(params.n, params.theta, ber_f)
    return dnorm_ber(params.n, params.theta, ber_f)


def snorm_select_probability(n: int, theta: int) -> Fraction:
    """Exact probability that an unbiased n-bit group passes S-Norm selection."""
    n = _check_int(n, "n", 1)
    theta = _check_int(theta, "theta", 0, n // 2)
    lo_max = n // 2 - theta
    hi_min = (n + 1) // 2 + theta
    count = sum(math.comb(n, w) for w in range(n + 1) if w <= lo_max or w >= hi_min)
    return Fraction(count, 1 << n)


def snorm_efficiency(n: int, theta: int) -> float:
    """Expected S-Norm bits per KiB on an unbiased memory."""
    prob = snorm_select_probability(n, theta)
    return float(prob * BITS_PER_KIB / n)


@lru_cache(maxsize=64)
def _dnorm_spread_numerators(n: int, m: int) -> tuple[tuple[int, ...], int]:
    """Exact numerators of P(max - min = d) for d = 0..n, with their common denominator.

    For an unbiased block, ``S(a, z)^m / 2^(n m)`` is the probability that all
    m group norms lie in [a, z]; inclusion-exclusion over the two edges gives
    the probability that the minimum is a and the maximum is z.
    """
    prefix = [0]
    for i in range(n + 1):
        prefix.append(prefix[-1] + math.comb(n, i))

    @lru_cache(maxsize=None)
    def q(a: int, z: int) -> int:
        if a > z or a > n or z < 0:
            return 0
        return (prefix[z + 1] - prefix[a]) ** m

    diag = [0] * (n + 1)
    for a in range(n + 1):
        for z in range(a, n + 1):
            diag[z - a] += q(a, z) - q(a, z - 1) - q(a + 1, z) + q(a + 1, z - 1)
    q.cache_clear()
    return tuple(diag), 1 << (n * m)


def dnorm_select_probability(n: int, m: int, theta: int) -> Fraction:
    n = _check_int(n, "n", 1)
    m = _check_int(m, "m", 2)
    theta = _check_int(theta, "theta", 0, n)
    diag, denom = _dnorm_spread_numerators(n, m)
    return Fraction(sum(diag[theta:]), denom)


def dnorm_efficiency(n: int, m: int, theta: int) -> float:
    """Expected D-Norm bits per KiB on an unbiased memory."""
    prob = dnorm_select_probability(n, m, theta)
    return float(prob * BITS_PER_KIB / (n * m))


def efficiency(params: TransformParams) -> float:
    if params.method is Method.SNORM:
        return snorm_efficiency(params.n, params.theta)
    return dnorm_efficiency(params.n, params.m, params.theta)


def key_failure(ber_F: float, k: int) -> float:
    """Probability that at least one of k independent key bits flips."""
    b = _check_prob(ber_F, "ber_F")
    k = _check_int(k, "k", 1)
    if b == 1.0:
        return 1.0
    return -math.expm1(k * math.log1p(-b))


def _theta_range(method: Method, n: int) -> range:
    return range(0, (n // 2 if method is Method.SNORM else n) + 1)


def min_theta(method, n: int, m: int, ber_f: float, k: int, target: float) -> int | None:
    """Smallest theta whose predicted key failure is strictly below ``target``."""
    method = Method.parse(method)
    target = float(target)
    if not 0.0 < target < 1.0:
        raise InvalidArgument(f"target must lie in (0, 1), got {target}")
    n = _check_int(n, "n", 1)
    if method is Method.DNORM:
        _check_int(m, "m", 2)
    for theta in _theta_range(method, n):
        b = snorm_ber(n, theta, ber_f) if method is Method.SNORM else dnorm_ber(n, theta, ber_f)
        if key_failure(b, k) < target:
            return theta
    return None


@dataclass(frozen=True)
class PredictionReport:
    params: TransformParams
    ber_f: float
    ber_F: float
    eta: float
    p_key_fail: float
    k: int
    mmr_kib: float | None

    def to_record(self) -> dict:
        return {
            "method": self.params.method.name.lower(),
            "n": self.params.n,
            "m": self.params.m,
            "theta": self.params.theta,
            "ber_f": self.ber_f,
            "ber_F": self.ber_F,
            "eta_bit_per_kib": self.eta,
            "k": self.k,
            "p_key_fail": self.p_key_fail,
            "mmr_kib": self.mmr_kib,
        }


def predict(params: TransformParams, ber_f: float, k: int = 128) -> PredictionReport:
    b = ber(params, ber_f)
    eta = efficiency(params)
    return PredictionReport(
        params=params,
        ber_f=float(ber_f),
        ber_F=b,
        eta=eta,
        p_key_fail=key_failure(b, k),
        k=int(k),
        mmr_kib=(k / eta) if eta > 0 else None,
    )


@dataclass(frozen=True)
class SearchResult:
    mode: str
    feasible: bool
    best: PredictionReport | None
    expected_yield: float | None = None
    optima: tuple[TransformParams, ...] = field(default_factory=tuple)
    evaluated: int = 0

    def to_record(self) -> dict:
        rec = {"mode": self.mode, "feasible": self.feasible, "evaluated": self.evaluated}
        if self.best is not None:
            rec.update(self.best.to_record())
            rec["expected_yield_bits"] = self.expected_yield
            rec["optima"] = [[p.n, p.m, p.theta] for p in self.optima]
        return rec


YieldFn = Callable[[TransformParams], float]

MODES = ("lowest_pfail", "max_yield")


def _normalize_mode(mode: str) -> str:
    mode = mode.replace("-", "_").lower()
    if mode not in MODES:
        raise InvalidArgument(f"unknown search mode {mode!r}; choose from {MODES}")
    return mode


def param_search(
    ber_f: float,
    memory_kib: float,
    k: int = 128,
    mode: str = "lowest_pfail",
    target: float = 1e-6,
    grid_n: Sequence[int] = DEFAULT_GRID,
    grid_m: Sequence[int] = DEFAULT_GRID,
    theta_min: int = 1,
    yield_fn: YieldFn | None = None,
) -> SearchResult:
    """Grid search over D-Norm (n, m, theta).

    ``lowest_pfail`` minimizes predicted key failure among points whose
    expected yield covers k bits. ``max_yield`` maximizes expected yield among
    points whose key failure is below ``target``. ``yield_fn`` replaces the
    predicted yield (efficiency times memory size) with, say, a measured one.
    Ties go to the lexicographically smallest (n, m, theta).
    """
    mode = _normalize_mode(mode)
    p = _check_prob(ber_f, "ber_f")
    k = _check_int(k, "k", 1)
    memory_kib = float(memory_kib)
    if memory_kib <= 0:
        raise InvalidArgument("memory size must be positive")
    if yield_fn is None:
        def yield_fn(tp: TransformParams) -> float:
            return dnorm_efficiency(tp.n, tp.m, tp.theta) * memory_kib

    candidates = []
    evaluated = 0
    for n in sorted(set(grid_n)):
        bers = [dnorm_ber(n, t, p) for t in range(n + 1)]
        for m in sorted(set(grid_m)):
            for theta in range(max(theta_min, 0), n + 1):
                evaluated += 1
                tp = TransformParams.dnorm(n, m, theta)
                pk = key_failure(bers[theta], k)
                if mode == "max_yield" and not pk < target:
                    continue
                y = yield_fn(tp)
                if mode == "lowest_pfail" and y < k:
                    continue
                score = pk if mode == "lowest_pfail" else -y
                candidates.append((score, (n, m, theta), tp, y))

    if not candidates:
        return SearchResult(mode, False, None, evaluated=evaluated)
    best_score = min(c[0] for c in candidates)
    ties = sorted((c for c in candidates if c[0] == best_score), key=lambda c: c[1])
    _, _, tp, y = ties[0]
    return SearchResult(
        mode=mode,
        feasible=True,
        best=predict(tp, p, k),
        expected_yield=y,
        optima=tuple(c[2] for c in ties),
        evaluated=evaluated,
    )


def mmr(ber_f: float, k: int = 128, target: float = 1e-6, **grid) -> float | None:
    """Minimum memory (KiB) for a k-bit key: k over the best feasible efficiency."""
    res = param_search(ber_f, 1.0, k, "max_yield", target, **grid)
    if not res.feasible:
        return None
    return k / res.best.eta


def mmr_at(n: int, m: int, theta: int, k: int = 128) -> float | None:
    eta = dnorm_efficiency(n, m, theta)
    return k / eta if eta > 0 else None


def theta_sweep(method, n: int, m: int, ber_f: float, thetas: Iterable[int], k: int = 128):
    """PredictionReports for a range of theta at fixed geometry."""
    method = Method.parse(method)
    out = []
    for t in thetas:
        tp = TransformParams.snorm(n, t) if method is Method.SNORM else TransformParams.dnorm(n, m, t)
        out.append(predict(tp, ber_f, k))
    return out
