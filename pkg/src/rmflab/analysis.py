"""
Exact expectations over finite prime sets, and the inequality oracles built
on them: Bonami-Halasz, Hoeffding, Halasz's L(x), smooth-supported ratio
statistics and moments of partial sums.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .arith import factorize, greatest_prime_factor_array, prime_table
from .randmult import FactorIndex, SignModel, derive_seeds, f_values, negative_bits

ENUM_MAX_PRIMES = 22
CROSSCHECK_RTOL = 1e-12


@dataclass(frozen=True)
class CoefficientSeq:
    """Finitely supported real coefficients with |b(n)| <= 1."""

    values: Mapping[int, float]

    def __post_init__(self):
        vals = {int(n): float(v) for n, v in dict(self.values).items()}
        for n, v in vals.items():
            if n < 1:
                raise ValueError(f"support must be positive integers, got {n}")
            if not abs(v) <= 1:
                raise ValueError(f"|b({n})| = {abs(v)} exceeds 1")
        object.__setattr__(self, "values", vals)

    @classmethod
    def indicator(cls, support: Iterable[int]) -> "CoefficientSeq":
        return cls({int(n): 1.0 for n in support})

    @property
    def support(self) -> list[int]:
        return sorted(self.values)


@dataclass(frozen=True)
class FinitePrimeModel:
    """Random signs on a finite prime set Q; pattern bit i is f(Q[i]) = -1."""

    primes: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ps = tuple(sorted({int(p) for p in self.primes}))
        for p in ps:
            fac = factorize(p)
            if fac != [(p, 1)]:
                raise ValueError(f"{p} is not prime")
        object.__setattr__(self, "primes", ps)
        object.__setattr__(self, "_index", {p: i for i, p in enumerate(ps)})

    @classmethod
    def covering(cls, bs: Sequence[CoefficientSeq]) -> "FinitePrimeModel":
        return cls(tuple({p for b in bs for n in b.support for p, _ in factorize(n)}))

    def mask(self, n: int) -> int:
        """Bit mask of the primes dividing n to an odd power."""
        m = 0
        for p, e in factorize(n):
            if p not in self._index:
                raise ValueError(f"{n} has prime factor {p} outside Q")
            if e % 2:
                m |= 1 << self._index[p]
        return m


def _terms(b: CoefficientSeq, Q: FinitePrimeModel) -> list[tuple[int, float]]:
    return [(Q.mask(n), v) for n, v in b.values.items() if v != 0]


def expectation_by_enumeration(bs: Sequence[CoefficientSeq], Q: FinitePrimeModel) -> float:
    """Average of prod_j sum_n b_j(n) f(n) over all 2^|Q| sign patterns."""
    k = len(Q.primes)
    if k > ENUM_MAX_PRIMES:
        raise ValueError(f"enumeration needs |Q| <= {ENUM_MAX_PRIMES}, got {k}")
    pat = np.arange(1 << k, dtype=np.uint32)
    prod = np.ones(len(pat))
    for b in bs:
        s = np.zeros(len(pat))
        for m, v in _terms(b, Q):
            s += v * (1 - 2 * (np.bitwise_count(pat & np.uint32(m)) & 1).astype(float))
        prod *= s
    return math.fsum(prod.tolist()) / len(pat)


def expectation_by_squares(bs: Sequence[CoefficientSeq], Q: FinitePrimeModel) -> float:
    """Multilinear expansion keeping only tuples with square product."""
    acc = {0: 1.0}
    for b in bs:
        terms = _terms(b, Q)
        nxt: dict[int, float] = {}
        for m0, w in acc.items():
            for m, v in terms:
                key = m0 ^ m
                nxt[key] = nxt.get(key, 0.0) + w * v
        acc = nxt
    return acc.get(0, 0.0)


def _scale(bs: Sequence[CoefficientSeq]) -> float:
    return math.prod(sum(abs(v) for v in b.values.values()) for b in bs)


def exact_expectation_product(bs: Sequence[CoefficientSeq], Q: Optional[FinitePrimeModel] = None) -> float:
    """E[prod_j sum_n b_j(n) f(n)], computed by the square-product expansion
    and, when |Q| <= 22, cross-checked against full enumeration."""
    Q = Q or FinitePrimeModel.covering(bs)
    val = expectation_by_squares(bs, Q)
    if len(Q.primes) <= ENUM_MAX_PRIMES:
        other = expectation_by_enumeration(bs, Q)
        if abs(val - other) > CROSSCHECK_RTOL * max(1.0, _scale(bs)):
            raise RuntimeError(f"expectation methods disagree: {val!r} vs {other!r}")
    return val


class BonamiHalasz(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def _squarefree(n: int) -> bool:
    return all(e == 1 for _, e in factorize(n))


def bonami_halasz_check(bs: Sequence[CoefficientSeq], m: Optional[int] = None,
                        Q: Optional[FinitePrimeModel] = None) -> BonamiHalasz:
    """|E prod_j S_j| against (prod_j sum_n |b_j(n)|^2 (m-1)^omega(n))^(1/2)."""
    m = len(bs) if m is None else int(m)
    if m != len(bs) or m < 1:
        raise ValueError("m must equal the number of coefficient sequences")
    for b in bs:
        bad = [n for n in b.support if not _squarefree(n)]
        if bad:
            raise ValueError(f"supports must be square-free, got {bad[:3]}")
    lhs = abs(exact_expectation_product(bs, Q))
    rhs = math.sqrt(math.prod(
        math.fsum(v * v * (m - 1) ** len(factorize(n)) for n, v in b.values.items()) for b in bs
    ))
    return BonamiHalasz(lhs, rhs, lhs <= rhs + 1e-12)


# -- Hoeffding ------------------------------------------------------------------

def hoeffding_bound(ranges: Sequence[tuple[float, float]], t: float) -> float:
    """2 exp(-2 t^2 / sum (b_i - a_i)^2), or 0 when every range is a point."""
    if t <= 0:
        raise ValueError("t must be positive")
    width = 0.0
    for a, b in ranges:
        if b < a:
            raise ValueError("each range needs b >= a")
        width += (b - a) ** 2
    if width == 0:
        return 0.0
    return min(2.0, 2 * math.exp(-2 * t * t / width))


class TailCheck(NamedTuple):
    exceed: int
    trials: int
    frequency: float
    bound: float
    holds: bool


def hoeffding_tail_check(primes: np.ndarray, weights: np.ndarray, t: float, trials: int, seed: int,
                         threads: int = 1, chunk: int = 4096) -> TailCheck:
    """Frequency of |sum_p w_p f(p)| >= t over seeded models, next to the
    Hoeffding bound with ranges [-|w_p|, |w_p|]."""
    primes = np.asarray(primes, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    bound = hoeffding_bound([(-abs(w), abs(w)) for w in weights.tolist()], t)

    def work(ab):
        a, b = ab
        neg = negative_bits(derive_seeds(seed, np.arange(a, b, dtype=np.uint64)), primes)
        s = weights @ (1 - 2 * neg.astype(float))
        return int(np.count_nonzero(np.abs(s) >= t))

    jobs = [(a, min(a + chunk, trials)) for a in range(0, trials, chunk)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            exceed = sum(pool.map(work, jobs))
    else:
        exceed = sum(map(work, jobs))
    freq = exceed / trials
    return TailCheck(exceed, trials, freq, bound, freq <= bound)


def hoeffding_events(x: int = 10**4, v0: float = 2.0) -> dict:
    """The two standard test events: unit-weight signs on p <= 100 with t = 10,
    and sum f(p)/p over x^(1/v0) <= p <= x with t = 0.1."""
    ps100 = prime_table(100).primes_upto(100)
    lo = x ** (1 / v0)
    psx = prime_table(x).primes_upto(x)
    psx = psx[psx >= lo]
    return {
        "unit_p100": (ps100, np.ones(len(ps100)), 10.0),
        "harmonic_tail": (psx, 1.0 / psx, 0.1),
    }


# -- Halasz ---------------------------------------------------------------------

def _signed_primes(model: SignModel, x: float, cutoff: Optional[float] = None):
    ps = prime_table(x).primes_upto(x)
    s = model.signs(ps).astype(float)
    if cutoff is not None:
        s[ps > cutoff] = 0.0
    return ps, s


def halasz_F(model: SignModel, x: float, t) -> complex | np.ndarray:
    """F_x(1+it) = prod_{p<=x} (1 - f(p) p^{-1-it})^{-1}; vectorised over t."""
    if x < 2:
        raise ValueError("x must be >= 2")
    ps, s = _signed_primes(model, x)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    lp = np.log(ps.astype(float))
    z = (s / ps)[None, :] * np.exp(-1j * tt[:, None] * lp[None, :])
    out = np.exp(-np.log1p(-z).sum(axis=1))
    return complex(out[0]) if np.ndim(t) == 0 else out


class HalaszL(NamedTuple):
    value: float
    n_max: int
    resolution: float
    sup_at_zero: float


def halasz_L(model: SignModel, x: float, grid_resolution: float = 1 / 64) -> HalaszL:
    """Grid lower bound for L(x): each sup over |t - N| <= 1/2 is a max over
    a grid of step ``grid_resolution`` (1/resolution must be an integer)."""
    if x < 2:
        raise ValueError("x must be >= 2")
    steps = round(1 / grid_resolution)
    if grid_resolution > 1 / 16 or abs(steps * grid_resolution - 1) > 1e-12:
        raise ValueError("grid_resolution must be 1/k for an integer k >= 16")
    n_max = math.floor(math.log(x) ** 2 + 1)
    offsets = np.arange(-steps // 2, steps // 2 + 1) / steps
    total = []
    sup0 = 0.0
    for N in range(-n_max, n_max + 1):
        sup = float(np.max(np.abs(halasz_F(model, x, N + offsets)) ** 2))
        if N == 0:
            sup0 = math.sqrt(sup)
        total.append(sup / (N * N + 1))
    return HalaszL(math.sqrt(math.fsum(total)), n_max, grid_resolution, sup0)


class RatioChecks(NamedTuple):
    ratio_099: float
    ratio_eps: float


def _restricted_ratio(model: SignModel, x: int, cut: float, fv: np.ndarray, gpf: np.ndarray) -> tuple[int, float]:
    num = int(fv[1:][gpf[1:] <= cut].sum(dtype=np.int64))
    ps, s = _signed_primes(model, x, cutoff=cut)
    return num, math.exp(math.fsum((s / ps).tolist()))


def ratio_checks(model: SignModel, x: int, eps: float) -> RatioChecks:
    """Smooth-supported partial sums against x exp(sum f(p)/p).

    f is zeroed above x^0.99 (first ratio) or x^eps (second ratio) in both
    the numerator and the prime sum. Values are reported, never asserted.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    x = int(x)
    if x < 3:
        raise ValueError("x must be >= 3")
    table = prime_table(x)
    fv = f_values(model, x, table)
    gpf = greatest_prime_factor_array(x, table)
    gpf[1] = 1
    n1, e1 = _restricted_ratio(model, x, x**0.99, fv, gpf)
    n2, e2 = _restricted_ratio(model, x, x**eps, fv, gpf)
    return RatioChecks(n1 / (x * e1), n2 / (x / math.log(math.log(x)) * e2))


# -- moments --------------------------------------------------------------------

EXACT_MAX_X = 30
EXACT_MAX_Q = 6


class Moment(NamedTuple):
    qnorm: float
    moment: float
    std_error: float
    trials: int
    mode: str


def square_tuple_count(x: int, q: int) -> int:
    """#{(n_1..n_q) : n_i <= x, n_1...n_q a square}, via a Walsh-Hadamard
    transform over parity masks."""
    if x < 1:
        return 0
    ps = [int(p) for p in prime_table(max(x, 2)).primes_upto(x)]
    Q = FinitePrimeModel(tuple(ps)) if ps else None
    size = 1 << len(ps)
    c = np.zeros(size, dtype=object)
    for n in range(1, x + 1):
        c[Q.mask(n) if Q else 0] += 1
    h = 1
    while h < size:
        for i in range(0, size, 2 * h):
            a, b = c[i : i + h].copy(), c[i + h : i + 2 * h].copy()
            c[i : i + h], c[i + h : i + 2 * h] = a + b, a - b
        h *= 2
    total = sum(int(v) ** q for v in c)
    assert total % size == 0
    return total // size


def moment_qnorm(x: int, q: int, mode: str = "exact", trials: Optional[int] = None,
                 seed: Optional[int] = None, threads: int = 1, chunk: int = 1024) -> Moment:
    """E[(sum_{n<=x} f(n))^q]^(1/q)."""
    x, q = int(x), int(q)
    if q < 2 or q % 2:
        raise ValueError("q must be a positive even integer")
    if x < 1:
        raise ValueError("x must be >= 1")
    if mode == "exact":
        if x > EXACT_MAX_X or q > EXACT_MAX_Q:
            raise ValueError(f"exact mode needs x <= {EXACT_MAX_X} and q <= {EXACT_MAX_Q}")
        e = square_tuple_count(x, q)
        return Moment(e ** (1 / q), float(e), 0.0, 0, "exact")
    if mode != "monte_carlo":
        raise ValueError("mode must be 'exact' or 'monte_carlo'")
    if not trials or trials < 2 or seed is None:
        raise ValueError("monte_carlo mode needs trials >= 2 and a seed")
    fi = FactorIndex(max(x, 2))
    primes = fi.primes

    def work(ab):
        a, b = ab
        neg = negative_bits(derive_seeds(seed, np.arange(a, b, dtype=np.uint64)), primes)
        s = fi.f_batch(neg, rows=np.arange(1, x + 1)).sum(axis=0, dtype=np.int64).astype(float)
        v = s**q
        return math.fsum(v.tolist()), math.fsum((v * v).tolist())

    jobs = [(a, min(a + chunk, trials)) for a in range(0, trials, chunk)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = list(map(work, jobs))
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    mean = s1 / trials
    var = max(s2 / trials - mean * mean, 0.0) * trials / (trials - 1)
    return Moment(mean ** (1 / q), mean, math.sqrt(var / trials), trials, "monte_carlo")
