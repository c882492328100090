"""
Quadratic characters: symbols, prime scans and reciprocity residue classes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .arith import factorize, prime_table
from .randmult import blocked_cumsum

Y0_CAP = 10**8
SCAN_MAX_X = 10**7
SCAN_WORK_BUDGET = 2 * 10**9
RESIDUE_MAX_N = 43
RESIDUE_MATERIALIZE_CAP = 10**7


def _require_odd_prime(p: int) -> int:
    p = int(p)
    if p < 3 or p % 2 == 0 or len(factorize(p)) != 1 or factorize(p)[0][1] != 1:
        raise ValueError(f"{p} is not an odd prime")
    return p


def jacobi_symbol(a: int, n: int) -> int:
    """Jacobi symbol (a/n) by the binary reciprocity algorithm.

    >>> jacobi_symbol(2, 7), jacobi_symbol(3, 7)
    (1, -1)
    """
    a, n = int(a), int(n)
    if n < 1 or n % 2 == 0:
        raise ValueError("n must be odd and positive")
    a %= n
    result = 1
    while a:
        tz = (a & -a).bit_length() - 1
        a >>= tz
        if tz & 1 and n % 8 in (3, 5):
            result = -result
        if a % 4 == 3 and n % 4 == 3:
            result = -result
        a, n = n % a, a
    return result if n == 1 else 0


def extended_symbol(m: int, n: int) -> int:
    """Product of (m/p)^alpha over p^alpha || n, where (m/2) = 1 for odd m
    and 0 for even m. This is not the Kronecker symbol at 2."""
    m, n = int(m), int(n)
    if n < 1:
        raise ValueError("n must be positive")
    out = 1
    for p, e in factorize(n):
        s = (1 if m % 2 else 0) if p == 2 else jacobi_symbol(m, p)
        out *= s**e
        if out == 0:
            break
    return out


@dataclass(frozen=True, eq=False)
class CharacterContext:
    """chi_p as a dense table over one period."""

    p: int
    table: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, p: int) -> "CharacterContext":
        p = _require_odd_prime(p)
        t = np.full(p, -1, dtype=np.int8)
        t[(np.arange(1, p, dtype=np.int64) ** 2) % p] = 1
        t[0] = 0
        t.setflags(write=False)
        return cls(p, t)

    def chi(self, n: int) -> int:
        return int(self.table[int(n) % self.p])

    def values(self, y: int) -> np.ndarray:
        """chi_p(n) for n = 1..y."""
        return self.table[np.arange(1, y + 1, dtype=np.int64) % self.p]


def lplus_member(p: int, ctx: Optional[CharacterContext] = None) -> tuple[bool, int, int]:
    """Whether every partial sum of chi_p is >= 0.

    The sum over a full period vanishes, so the partial sums are p-periodic
    and one period decides every t.
    """
    ctx = ctx or CharacterContext.build(p)
    s = np.cumsum(ctx.values(ctx.p), dtype=np.int64)
    i = int(np.argmin(s))
    return bool(s[i] >= 0), int(s[i]), i + 1


@dataclass(frozen=True)
class HarmonicCertificate:
    flag: bool
    certified: bool
    min_hsum: float
    argmin: int
    y0: int
    s_y0: float
    tail_bound: float
    rounding_bound: float

    def as_dict(self) -> dict:
        return asdict(self)


def _default_y0(p: int) -> int:
    return math.isqrt(16 * p**3 - 1) + 1  # ceil(4 p^{3/2})


def harmonic_positive_certified(p: int, y0: Optional[int] = None, y0_cap: int = Y0_CAP,
                                ctx: Optional[CharacterContext] = None) -> HarmonicCertificate:
    """Scan sum_{n<=y} chi_p(n)/n for y <= y0 and certify the tail.

    By partial summation and Polya-Vinogradov, S(y) >= S(y0) - 2 sqrt(p) ln p / y0
    for all y > y0. When that margin is not positive y0 grows tenfold up to
    ``y0_cap``; an uncertified result comes back with ``certified=False``.
    """
    ctx = ctx or CharacterContext.build(p)
    p = ctx.p
    y0 = _default_y0(p) if y0 is None else int(y0)
    if y0 < 1:
        raise ValueError("y0 must be >= 1")
    while True:
        n = np.arange(1, y0 + 1, dtype=float)
        s, err = blocked_cumsum(ctx.values(y0) / n)
        i = int(np.argmin(s))
        tail = 2 * math.sqrt(p) * math.log(p) / y0
        certified = bool(s[-1] - err > tail)
        if certified or y0 * 10 > y0_cap:
            break
        y0 *= 10
    positive = bool(s[i] - err > 0)
    return HarmonicCertificate(positive and certified, certified, float(s[i]), i + 1, y0,
                               float(s[-1]), tail, err)


def least_qnr(p: int, ctx: Optional[CharacterContext] = None) -> int:
    """Smallest n >= 2 with chi_p(n) = -1."""
    ctx = ctx or CharacterContext.build(p)
    return int(np.argmax(ctx.table[2:] == -1)) + 2


@dataclass(frozen=True)
class ScanRecord:
    p: int
    in_lplus: bool
    harmonic_positive: bool
    certified: bool
    least_qnr: int
    min_fsum: int
    min_hsum: float

    FIELDS = ("p", "in_lplus", "harmonic_positive", "certified", "least_qnr", "min_fsum", "min_hsum")

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}


@dataclass(frozen=True)
class ScanResult:
    records: list
    count: int
    p_tilde: float
    lplus_fraction: float
    certified_fraction: float


def scan_prime(p: int, y0_cap: int = Y0_CAP) -> ScanRecord:
    ctx = CharacterContext.build(p)
    flag, min_f, _ = lplus_member(p, ctx)
    cert = harmonic_positive_certified(p, y0_cap=y0_cap, ctx=ctx)
    return ScanRecord(ctx.p, flag, cert.flag, cert.certified, least_qnr(p, ctx), min_f, cert.min_hsum)


def scan_primes(x: int, y0_cap: int = Y0_CAP, threads: int = 1) -> ScanResult:
    """One record per prime in (x, 2x] plus aggregate fractions."""
    x = int(x)
    if x < 1 or 2 * x > SCAN_MAX_X:
        raise ValueError(f"2x must lie in [2, {SCAN_MAX_X}]")
    ps = prime_table(2 * x).primes_between(x, 2 * x)
    ps = [int(p) for p in ps if p > 2]
    work = sum(min(_default_y0(p), y0_cap) for p in ps)
    if work > SCAN_WORK_BUDGET:
        raise ValueError(f"scan needs ~{work:.3g} character evaluations, over budget {SCAN_WORK_BUDGET}")
    if threads > 1 and len(ps) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            recs = list(pool.map(lambda p: scan_prime(p, y0_cap), ps))
    else:
        recs = [scan_prime(p, y0_cap) for p in ps]
    n = len(recs)
    frac = (lambda k: k / n) if n else (lambda k: 0.0)
    return ScanResult(
        recs,
        n,
        frac(sum(r.harmonic_positive for r in recs)),
        frac(sum(r.in_lplus for r in recs)),
        frac(sum(r.certified for r in recs)),
    )


# -- residue classes ------------------------------------------------------------

@dataclass(frozen=True)
class ResidueSpec:
    """Prescribed values of (-1/p) and (q/p) for primes q <= N."""

    N: int
    signs: Mapping[int, int]

    def __post_init__(self):
        if not 3 <= int(self.N) <= RESIDUE_MAX_N:
            raise ValueError(f"N must lie in [3, {RESIDUE_MAX_N}]")
        want = {-1} | set(self.primes)
        got = set(self.signs)
        if got != want:
            missing, extra = sorted(want - got), sorted(got - want)
            raise ValueError(f"signs must be keyed on -1 and primes <= N (missing {missing}, extra {extra})")
        if any(v not in (1, -1) for v in self.signs.values()):
            raise ValueError("signs must be +1 or -1")

    @property
    def primes(self) -> list[int]:
        return [int(q) for q in prime_table(self.N).primes_upto(self.N)]

    @property
    def k(self) -> int:
        return 8 * math.prod(q for q in self.primes if q > 2)


def residue_count(spec: ResidueSpec) -> int:
    """|S| = phi(k) / 2^(pi(N)+1), i.e. the product of (q-1)/2 over odd q."""
    return math.prod((q - 1) // 2 for q in spec.primes if q > 2)


def _class_mod8(s_minus1: int, s2: int) -> int:
    # (-1/p) = +1 iff p = 1 mod 4; (2/p) = +1 iff p = +-1 mod 8
    for c in (1, 3, 5, 7):
        if (1 if c % 4 == 1 else -1) == s_minus1 and (1 if c in (1, 7) else -1) == s2:
            return c
    raise AssertionError


def residue_set(spec: ResidueSpec, cap: int = RESIDUE_MATERIALIZE_CAP) -> np.ndarray:
    """Sorted residues l mod k such that every prime p = l (mod k) has the
    prescribed symbols, built by reciprocity and CRT without sampling primes."""
    size = residue_count(spec)
    if size > cap:
        raise ValueError(f"residue set has {size} elements, above cap {cap}; use residue_count")
    c8 = _class_mod8(spec.signs[-1], spec.signs[2])
    res = np.array([c8], dtype=np.int64)
    m = 8
    for q in spec.primes:
        if q == 2:
            continue
        # (q/p) = (p/q) * (-1)^{(p-1)/2 (q-1)/2}, and p mod 4 is fixed by c8
        flip = -1 if (c8 % 4 == 3 and q % 4 == 3) else 1
        target = spec.signs[q] * flip
        sq = {(i * i) % q for i in range(1, q)}
        allowed = np.array([r for r in range(1, q) if (1 if r in sq else -1) == target], dtype=np.int64)
        inv = pow(m, -1, q)
        r = res[:, None]
        t = ((allowed[None, :] - r % q) * inv) % q
        res = (r + m * t).ravel()
        m *= q
    res.sort()
    return res.astype(np.uint64)


# -- character moments ------------------------------------------------------------

Coeffs = Union[Callable[[int], float], Sequence[float]]


def empirical_char_moment(x: int, y: int, coeffs: Coeffs, q: int) -> float:
    """Mean over primes p in (x, 2x] of (sum_{n<=y} a(n) chi_p(n))^q.

    ``coeffs`` is either a callable n -> a(n) or a sequence with a(n) at
    index n - 1. Integer coefficients give an exactly rounded result.
    """
    x, y, q = int(x), int(y), int(q)
    if q < 0 or q % 2:
        raise ValueError("q must be a nonnegative even integer")
    if y < 1 or x < 1:
        raise ValueError("need x, y >= 1")
    a = [coeffs(n) for n in range(1, y + 1)] if callable(coeffs) else list(coeffs[:y])
    if len(a) < y:
        raise ValueError("coeffs shorter than y")
    if any(abs(v) > 1 for v in a):
        raise ValueError("coefficients must satisfy |a(n)| <= 1")
    ps = [int(p) for p in prime_table(2 * x).primes_between(x, 2 * x) if p > 2]
    if not ps:
        raise ValueError("no odd primes in (x, 2x]")
    exact = all(isinstance(v, (int, np.integer)) for v in a)
    total = Fraction(0) if exact else 0.0
    vals = []
    for p in ps:
        chi = CharacterContext.build(p).values(y)
        if exact:
            s = sum(int(c) * v for c, v in zip(chi.tolist(), a))
            total += s**q
        else:
            vals.append(math.fsum(float(c) * v for c, v in zip(chi.tolist(), a)) ** q)
    if exact:
        return float(total / len(ps))
    return math.fsum(vals) / len(ps)
