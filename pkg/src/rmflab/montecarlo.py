"""
Probability estimators over the random multiplicative model.

Every estimator runs in one of two modes. ``monte_carlo`` draws trial ``t``
from the seed ``derive_seed(seed, t)``; ``exhaustive`` enumerates every sign
pattern of the free primes. Trials are processed in fixed-size chunks whose
results are integer counts, so the output does not depend on how many worker
threads ran the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .arith import factorize, prime_table
from .randmult import FactorIndex, derive_seeds, negative_bits, squarefree_rough
from .smooth import SmoothContext, psi_star

EXHAUSTIVE_MAX_FREE = 22
CHUNK = 1024
DEVIATION_MAX_X = 10**6


@dataclass(frozen=True)
class Estimate:
    p_hat: float
    successes: int
    trials: int
    ci_low: float
    ci_high: float
    seed: Optional[int]
    mode: str

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SiegelConfig:
    """Exceptional-zero switch. ``e0 = 0`` (the default) removes the term."""

    e0: int = 0
    beta1: Optional[float] = None

    def __post_init__(self):
        if self.e0 not in (0, 1):
            raise ValueError("e0 must be 0 or 1")
        if self.e0 == 0 and self.beta1 is not None:
            raise ValueError("beta1 is only meaningful when e0 = 1")
        if self.e0 == 1 and not (self.beta1 is not None and 0 < self.beta1 < 1):
            raise ValueError("e0 = 1 needs beta1 in (0, 1)")

    def factor(self, x: float) -> float:
        """E0 * int_x^{2x} u^(beta1-1)/log u du / (Li(2x) - Li(x))."""
        if self.e0 == 0:
            return 0.0
        u = np.linspace(x, 2 * x, 4001)
        h = u[1] - u[0]
        w = np.ones(len(u))
        w[1:-1:2], w[2:-1:2] = 4, 2
        num = h / 3 * np.dot(w, u ** (self.beta1 - 1) / np.log(u))
        den = h / 3 * np.dot(w, 1 / np.log(u))
        return float(num / den)


@dataclass(frozen=True)
class CovarianceEstimate:
    value: float
    std_error: float
    trials: int
    d: int
    seed: Optional[int]
    mode: str
    siegel_term: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clipped to [0, 1]."""
    if trials < 1 or not 0 <= successes <= trials or z <= 0:
        raise ValueError("need 0 <= successes <= trials, trials >= 1, z > 0")
    n = trials
    p = successes / n
    z2 = z * z
    denom = 1 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    low = 0.0 if successes == 0 else max(0.0, min(p, center - half))
    high = 1.0 if successes == trials else min(1.0, max(p, center + half))
    return low, high


# -- shared trial machinery ---------------------------------------------------

def _free_count(primes: np.ndarray, forced_y: Optional[int]) -> int:
    if forced_y is None:
        return len(primes)
    return int(np.count_nonzero(primes > forced_y))


def _chunks(total: int, size: int):
    return [(a, min(a + size, total)) for a in range(0, total, size)]


def _neg_for_trials(primes, forced_y, seed, a, b) -> np.ndarray:
    neg = negative_bits(derive_seeds(seed, np.arange(a, b, dtype=np.uint64)), primes)
    if forced_y is not None:
        neg[primes <= forced_y] = 0
    return neg


def _neg_for_patterns(primes, forced_y, a, b) -> np.ndarray:
    free = np.flatnonzero(primes > (forced_y if forced_y is not None else 0))
    j = np.arange(a, b, dtype=np.int64)
    neg = np.zeros((len(primes), b - a), dtype=np.uint8)
    for bit, row in enumerate(free):
        neg[row] = (j >> bit) & 1
    return neg


def _run(
    primes: np.ndarray,
    forced_y: Optional[int],
    trials: Optional[int],
    seed: Optional[int],
    exhaustive: bool,
    threads: int,
    evaluate: Callable[[np.ndarray], np.ndarray],
):
    """Apply ``evaluate`` (sign bits -> per-trial integer vector) over all
    trials and return (stacked integer totals, trial count, mode)."""
    if exhaustive:
        nfree = _free_count(primes, forced_y)
        if nfree > EXHAUSTIVE_MAX_FREE:
            raise ValueError(f"exhaustive mode needs <= {EXHAUSTIVE_MAX_FREE} free primes, got {nfree}")
        total = 1 << nfree
        jobs = _chunks(total, 4 * CHUNK)

        def work(ab):
            return evaluate(_neg_for_patterns(primes, forced_y, *ab)).sum(axis=-1)

        mode = "exhaustive"
    else:
        if trials is None or trials < 1:
            raise ValueError("trials must be >= 1")
        if seed is None:
            raise ValueError("a seed is required in monte_carlo mode")
        total = int(trials)
        jobs = _chunks(total, CHUNK)

        def work(ab):
            return evaluate(_neg_for_trials(primes, forced_y, seed, *ab)).sum(axis=-1)

        mode = "monte_carlo"
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(ab) for ab in jobs]
    acc = parts[0].astype(object) if parts else 0
    for part in parts[1:]:
        acc = acc + part.astype(object)
    return acc, total, mode


def _estimate(successes: int, trials: int, seed, mode: str, z: float) -> Estimate:
    successes = int(successes)
    p = successes / trials
    if mode == "exhaustive":
        lo = hi = p
    else:
        lo, hi = wilson_interval(successes, trials, z)
    return Estimate(p, successes, trials, lo, hi, seed, mode)


def _batch_context(x: int):
    return FactorIndex(x, prime_table(max(x, 2)))


# -- estimators ---------------------------------------------------------------

def estimate_conditional_lplus(x: int, y: int, trials: Optional[int] = None, seed: Optional[int] = None, *,
                               exhaustive: bool = False, threads: int = 1, z: float = 1.96) -> Estimate:
    """P(all partial sums of f up to x are >= 0 | f(p) = 1 for p <= y)."""
    x, y = int(x), int(y)
    if not 2 <= y or x < 2:
        raise ValueError("need x >= 2 and y >= 2")
    fi = _batch_context(x)

    def evaluate(neg):
        s = np.cumsum(fi.f_batch(neg), axis=0, dtype=np.int32)
        return np.atleast_2d((s.min(axis=0) >= 0).astype(np.int64))

    acc, total, mode = _run(fi.primes, y, trials, seed, exhaustive, threads, evaluate)
    return _estimate(acc[0], total, seed, mode, z)


def _harmonic_weights(x: int) -> np.ndarray:
    return 1.0 / np.arange(1, x + 1, dtype=float)


def estimate_negative_harmonic(x: int, trials: Optional[int] = None, seed: Optional[int] = None, *,
                               exhaustive: bool = False, threads: int = 1, z: float = 1.96) -> Estimate:
    """P(sum_{n<=x} f(n)/n < 0)."""
    x = int(x)
    if x < 2:
        raise ValueError("x must be >= 2")
    fi = _batch_context(x)
    w = _harmonic_weights(x)

    def evaluate(neg):
        return np.atleast_2d((w @ fi.f_batch(neg) < 0).astype(np.int64))

    acc, total, mode = _run(fi.primes, None, trials, seed, exhaustive, threads, evaluate)
    return _estimate(acc[0], total, seed, mode, z)


def _event_a(fi: FactorIndex, w: np.ndarray, neg: np.ndarray) -> np.ndarray:
    s = np.cumsum(fi.f_batch(neg) * w[:, None], axis=0)
    return s.min(axis=0) > 0


def estimate_event_A(cutoff: int, trials: Optional[int] = None, seed: Optional[int] = None, *,
                     exhaustive: bool = False, threads: int = 1, z: float = 1.96) -> Estimate:
    """P(sum_{n<=t} f(n)/n > 0 for every t <= cutoff).

    The event only looks at t <= cutoff, so it contains the untruncated event
    and the estimate overstates P. Nested cutoffs under one seed reuse the
    same models, which makes the estimate nonincreasing in the cutoff.
    """
    cutoff = int(cutoff)
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if cutoff == 1:
        total = 1 if exhaustive else int(trials or 0)
        if total < 1:
            raise ValueError("trials must be >= 1")
        return _estimate(total, total, seed, "exhaustive" if exhaustive else "monte_carlo", z)
    fi = _batch_context(cutoff)
    w = _harmonic_weights(cutoff)

    def evaluate(neg):
        return np.atleast_2d(_event_a(fi, w, neg).astype(np.int64))

    acc, total, mode = _run(fi.primes, None, trials, seed, exhaustive, threads, evaluate)
    return _estimate(acc[0], total, seed, mode, z)


def estimate_cov_A_fd(d: int, cutoff: int, trials: Optional[int] = None, seed: Optional[int] = None, *,
                      exhaustive: bool = False, threads: int = 1, siegel: SiegelConfig = SiegelConfig(),
                      x: Optional[float] = None) -> CovarianceEstimate:
    """Cov(1_A, f(d)) = E[1_A f(d)] for square-free d > 1, with A truncated at
    ``cutoff``. ``siegel_term`` is the value times the configured Siegel
    factor at ``x`` (zero unless ``siegel.e0 = 1``)."""
    d, cutoff = int(d), int(cutoff)
    fac = factorize(d)
    if d < 1 or any(e > 1 for _, e in fac):
        raise ValueError(f"d = {d} is not square-free")
    if d == 1:
        mode = "exhaustive" if exhaustive else "monte_carlo"
        return CovarianceEstimate(0.0, 0.0, 1 if exhaustive else int(trials or 1), d, seed, mode, 0.0)
    top = max(cutoff, d, 2)
    fi = _batch_context(top)
    w = _harmonic_weights(cutoff)
    d_idx = np.searchsorted(fi.primes, [p for p, _ in fac])

    def evaluate(neg):
        if cutoff >= 2:
            ev = _event_a(_Truncated(fi, cutoff), w, neg)
        else:
            ev = np.ones(neg.shape[1], dtype=bool)
        fd = 1 - 2 * (np.bitwise_xor.reduce(neg[d_idx], axis=0).astype(np.int64))
        v = ev.astype(np.int64) * fd
        return np.vstack([v, v * v])

    primes = fi.primes
    if exhaustive:
        # only the primes that can influence the statistic are free
        relevant = np.union1d(primes[primes <= cutoff], primes[d_idx])
        if len(relevant) > EXHAUSTIVE_MAX_FREE:
            raise ValueError(f"exhaustive mode needs <= {EXHAUSTIVE_MAX_FREE} free primes, got {len(relevant)}")
        keep = np.searchsorted(primes, relevant)

        def evaluate_sub(sub):
            full = np.zeros((len(primes), sub.shape[1]), dtype=np.uint8)
            full[keep] = sub
            return evaluate(full)

        acc, total, mode = _run(relevant, None, None, None, True, threads, evaluate_sub)
    else:
        acc, total, mode = _run(primes, None, trials, seed, False, threads, evaluate)
    s1, s2 = int(acc[0]), int(acc[1])
    mean = s1 / total
    if mode == "exhaustive":
        se = 0.0
    else:
        var = (s2 - s1 * s1 / total) / (total - 1) if total > 1 else 0.0
        se = math.sqrt(max(var, 0.0) / total)
    term = mean * siegel.factor(x) if (siegel.e0 and x) else 0.0
    return CovarianceEstimate(mean, se, total, d, seed, mode, term)


class _Truncated:
    """View of a FactorIndex restricted to n <= cutoff."""

    def __init__(self, fi: FactorIndex, cutoff: int):
        self.fi, self.cutoff = fi, cutoff

    def f_batch(self, neg):
        return self.fi.f_batch(neg, rows=np.arange(1, self.cutoff + 1))


def deviation_terms(x: int, ctx: SmoothContext) -> tuple[np.ndarray, np.ndarray, int]:
    """Square-free y-rough n in (1, x], their weights Psi*(x/n, y), and Psi*(x, y)."""
    ns = squarefree_rough(x, ctx.y)
    cache: dict[int, int] = {}
    w = np.empty(len(ns), dtype=np.int64)
    for i, n in enumerate(ns.tolist()):
        q = x // n
        if q not in cache:
            cache[q] = psi_star(q, ctx)
        w[i] = cache[q]
    return ns, w, psi_star(x, ctx)


def estimate_deviation(x: int, y: int, delta: float, trials: Optional[int] = None, seed: Optional[int] = None, *,
                       exhaustive: bool = False, threads: int = 1, z: float = 1.96) -> Estimate:
    """P(|sum_flat_{p(n)>y, 1<n<=x} f(n) Psi*(x/n, y)| > delta Psi*(x, y)),
    with f(p) = 1 forced for p <= y."""
    x, y = int(x), int(y)
    if x > DEVIATION_MAX_X:
        raise ValueError(f"x exceeds the deviation budget {DEVIATION_MAX_X}")
    if y < 2 or x < 1 or delta < 0:
        raise ValueError("need y >= 2, x >= 1, delta >= 0")
    ctx = SmoothContext.for_bound(y)
    ns, w, base = deviation_terms(x, ctx)
    threshold = delta * base
    fi = _batch_context(max(x, 2))

    def evaluate(neg):
        if not len(ns):
            return np.zeros((1, neg.shape[1]), dtype=np.int64)
        s = w @ fi.f_batch(neg, rows=ns).astype(np.int64)
        return np.atleast_2d((np.abs(s) > threshold).astype(np.int64))

    acc, total, mode = _run(fi.primes, y, trials, seed, exhaustive, threads, evaluate)
    return _estimate(acc[0], total, seed, mode, z)
