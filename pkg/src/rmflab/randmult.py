"""
The Rademacher random completely multiplicative function and its partial sums.

A sample is a :class:`SignModel`: the sign at each prime is a pure function
of ``(seed, p)`` computed with a 64-bit avalanche hash, so signs can be
evaluated in any order, for any subset of primes, in parallel, and always
agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple, Optional

import numpy as np

from .arith import PrimeTable, factorize, prime_table
from .smooth import SmoothContext, _rough_upto, psi_star

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finaliser."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= np.uint64(_M1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_M2)
    z ^= z >> np.uint64(31)
    return z


def derive_seed(seed: int, trial: int) -> int:
    """Seed of trial ``trial`` under master ``seed``."""
    return mix64(mix64(seed) ^ ((trial * GOLDEN + 1) & MASK64))


def derive_seeds(seed: int, trials: np.ndarray) -> np.ndarray:
    t = trials.astype(np.uint64) * np.uint64(GOLDEN) + np.uint64(1)
    return mix64_array(np.uint64(mix64(seed)) ^ t)


def negative_bits(seeds: np.ndarray, primes: np.ndarray) -> np.ndarray:
    """uint8 matrix (len(primes), len(seeds)); 1 where f(p) = -1."""
    keys = mix64_array(np.asarray(seeds, dtype=np.uint64))
    h = mix64_array(keys[None, :] ^ np.asarray(primes, dtype=np.uint64)[:, None])
    return (h & np.uint64(1)).astype(np.uint8)


def _is_prime(n: int) -> bool:
    return n >= 2 and factorize(n) == [(n, 1)]


@dataclass(frozen=True)
class SignModel:
    """One realisation of the random completely multiplicative function.

    Precedence for the sign at a prime: ``overrides``, then the forced prefix
    (+1 for p <= ``forced_prefix_y``), then ``fixed_sign`` if set, then the
    hashed bit of ``(seed, p)``. ``sign_minus_one`` is the value attached to
    the formal symbol -1; it never enters f(n) for n >= 1.
    """

    seed: int = 0
    forced_prefix_y: Optional[int] = None
    overrides: Mapping[int, int] = field(default_factory=dict)
    sign_minus_one: int = 1
    fixed_sign: Optional[int] = None

    def __post_init__(self):
        for p, s in self.overrides.items():
            if s not in (1, -1):
                raise ValueError(f"override for {p} must be +1 or -1")
            if not _is_prime(int(p)):
                raise ValueError(f"override key {p} is not prime")
        if self.sign_minus_one not in (1, -1):
            raise ValueError("sign_minus_one must be +1 or -1")
        if self.fixed_sign not in (None, 1, -1):
            raise ValueError("fixed_sign must be None, +1 or -1")
        object.__setattr__(self, "overrides", MappingProxyType(dict(self.overrides)))

    def __hash__(self):
        return hash((self.seed, self.forced_prefix_y, tuple(sorted(self.overrides.items())),
                     self.sign_minus_one, self.fixed_sign))

    def sign(self, p: int) -> int:
        p = int(p)
        if p in self.overrides:
            return self.overrides[p]
        if self.forced_prefix_y is not None and p <= self.forced_prefix_y:
            return 1
        if self.fixed_sign is not None:
            return self.fixed_sign
        return -1 if mix64(mix64(self.seed) ^ p) & 1 else 1

    def negative_bits(self, primes: np.ndarray) -> np.ndarray:
        primes = np.asarray(primes, dtype=np.int64)
        if self.fixed_sign is not None:
            bits = np.full(len(primes), self.fixed_sign == -1, dtype=np.uint8)
        else:
            bits = negative_bits(np.array([self.seed], dtype=np.uint64), primes)[:, 0].copy()
        if self.forced_prefix_y is not None:
            bits[primes <= self.forced_prefix_y] = 0
        if self.overrides:
            pos = {int(p): i for i, p in enumerate(primes.tolist())} if len(self.overrides) > 8 else None
            for p, s in self.overrides.items():
                if pos is not None:
                    i = pos.get(p)
                    if i is not None:
                        bits[i] = s == -1
                else:
                    bits[primes == p] = s == -1
        return bits

    def signs(self, primes) -> np.ndarray:
        """f(p) for an array of primes, as int8."""
        return (1 - 2 * self.negative_bits(np.asarray(primes))).astype(np.int8)


def sample_model(seed: int, forced_prefix_y: Optional[int] = None,
                 overrides: Optional[Mapping[int, int]] = None, sign_minus_one: int = 1) -> SignModel:
    return SignModel(seed=int(seed) & MASK64, forced_prefix_y=forced_prefix_y,
                     overrides=dict(overrides or {}), sign_minus_one=sign_minus_one)


def constant_model(sign: int) -> SignModel:
    """f(p) = sign at every prime; sign = -1 gives the Liouville function."""
    return SignModel(fixed_sign=sign)


def f_at(model: SignModel, n: int, table: Optional[PrimeTable] = None) -> int:
    if n < 1:
        raise ValueError("n must be >= 1")
    out = 1
    for p, e in factorize(n, table):
        if e % 2:
            out *= model.sign(p)
    return out


def f_values(model: SignModel, x: int, table: Optional[PrimeTable] = None) -> np.ndarray:
    """int8 array ``F`` with ``F[n] = f(n)`` for ``1 <= n <= x`` (``F[0] = 0``)."""
    x = int(x)
    table = table or prime_table(max(x, 2))
    neg = np.zeros(x + 1, dtype=np.uint8)
    ps = table.primes_upto(x)
    neg[ps] = model.negative_bits(ps)
    parity = np.zeros(x + 1, dtype=np.uint8)
    idx = np.arange(2, x + 1, dtype=np.int64)
    rem = idx.copy()
    spf = table.spf
    while idx.size:
        p = spf[rem]
        parity[idx] ^= neg[p]
        rem //= p
        keep = rem > 1
        idx, rem = idx[keep], rem[keep]
    out = (1 - 2 * parity.astype(np.int8)).astype(np.int8)
    out[0] = 0
    return out


class FactorIndex:
    """For each n <= x, indices of the primes dividing n to an odd power.

    ``cols`` has shape (depth, x + 1); unused slots point at a sentinel row.
    Evaluating f on [1, x] for a batch of sign patterns is then one XOR per
    slot over fancy-indexed rows.
    """

    def __init__(self, x: int, table: Optional[PrimeTable] = None):
        self.x = x = int(x)
        table = table or prime_table(max(x, 2))
        self.primes = table.primes_upto(x)
        sentinel = len(self.primes)
        pindex = np.full(x + 1, sentinel, dtype=np.int32)
        pindex[self.primes] = np.arange(len(self.primes), dtype=np.int32)
        cols = []
        idx = np.arange(2, x + 1, dtype=np.int64)
        rem = idx.copy()
        spf = table.spf
        while idx.size:
            p = spf[rem].astype(np.int64)
            odd = np.zeros(len(idx), dtype=bool)
            hit = rem % p == 0
            while hit.any():
                rem[hit] //= p[hit]
                odd[hit] ^= True
                hit = (rem % p == 0) & (rem > 1)
            col = np.full(x + 1, sentinel, dtype=np.int32)
            col[idx[odd]] = pindex[p[odd]]
            cols.append(col)
            keep = rem > 1
            idx, rem = idx[keep], rem[keep]
        self.cols = np.array(cols, dtype=np.int32).reshape(len(cols), x + 1)
        self.sentinel = sentinel

    def f_batch(self, neg: np.ndarray, rows: Optional[np.ndarray] = None) -> np.ndarray:
        """f(n) for n in ``rows`` (default 1..x) under each column of ``neg``.

        ``neg`` has shape (len(primes), T); result is int8 of shape (len(rows), T).
        """
        T = neg.shape[1]
        ext = np.concatenate([neg.astype(np.uint8), np.zeros((1, T), dtype=np.uint8)])
        rows = np.arange(1, self.x + 1) if rows is None else np.asarray(rows)
        parity = np.zeros((len(rows), T), dtype=np.uint8)
        for col in self.cols:
            parity ^= ext[col[rows]]
        return (1 - 2 * parity.astype(np.int8)).astype(np.int8)


# -- scans --------------------------------------------------------------------

_BLOCK = 1024
_EPS = 2.0**-53


def blocked_cumsum(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Prefix sums of ``a`` with an explicit bound on the rounding error.

    Within blocks of 1024 terms ordinary cumulative sums are used; block
    totals are pairwise sums carried forward by Neumaier compensation.
    """
    a = np.asarray(a, dtype=float)
    n = len(a)
    if n == 0:
        return np.zeros(0), 0.0
    nb = -(-n // _BLOCK)
    pad = np.zeros(nb * _BLOCK)
    pad[:n] = a
    blocks = pad.reshape(nb, _BLOCK)
    inner = np.cumsum(blocks, axis=1)
    totals = blocks.sum(axis=1)
    offsets = np.empty(nb)
    s = c = 0.0
    for i, t in enumerate(totals.tolist()):
        offsets[i] = s + c
        u = s + t
        c += (s - u) + t if abs(s) >= abs(t) else (t - u) + s
        s = u
    out = (inner + offsets[:, None]).ravel()[:n]
    bound = (_BLOCK + 64) * _EPS * float(np.abs(a).sum())
    return out, bound


class PrefixScan(NamedTuple):
    x: int
    final_sum: float
    min_prefix: float
    argmin: int
    all_nonneg: bool
    all_positive: bool
    error_bound: float = 0.0  # zero for exact integer scans


def prefix_scan(model: SignModel, x: int, table: Optional[PrimeTable] = None) -> PrefixScan:
    """Exact partial sums of f(n) for t <= x."""
    if x < 1:
        raise ValueError("x must be >= 1")
    f = f_values(model, x, table)[1:]
    s = np.cumsum(f, dtype=np.int64)
    i = int(np.argmin(s))
    m = int(s[i])
    return PrefixScan(x, int(s[-1]), m, i + 1, m >= 0, m > 0)


def harmonic_scan(model: SignModel, x: int, table: Optional[PrimeTable] = None) -> PrefixScan:
    """Partial sums of f(n)/n for t <= x with a rounding-error bound."""
    if x < 1:
        raise ValueError("x must be >= 1")
    f = f_values(model, x, table)[1:]
    terms = f / np.arange(1, x + 1, dtype=float)
    s, bound = blocked_cumsum(terms)
    i = int(np.argmin(s))
    m = float(s[i])
    return PrefixScan(x, float(s[-1]), m, i + 1, m >= 0, m > 0, bound)


class ElementaryDecomposition(NamedTuple):
    harmonic: float
    g_sum: int
    frac_sum: float
    residual: float
    prime_lower: int  # sum over p <= x of (1 + f(p)), a lower bound for g_sum


def elementary_decomposition(model: SignModel, x: int, table: Optional[PrimeTable] = None) -> ElementaryDecomposition:
    """sum f(n)/n against (sum g(n) + sum f(n){x/n}) / x where g = f * 1."""
    if x < 1:
        raise ValueError("x must be >= 1")
    x = int(x)
    table = table or prime_table(max(x, 2))
    f = f_values(model, x, table)[1:].astype(np.int64)
    n = np.arange(1, x + 1, dtype=np.int64)
    harmonic = math.fsum((f / n).tolist())
    g_sum = int(np.dot(f, x // n))
    frac_sum = math.fsum((f * ((x % n) / n)).tolist())
    residual = abs(harmonic - (g_sum + frac_sum) / x)
    ps = table.primes_upto(x)
    prime_lower = int(len(ps) + model.signs(ps).astype(np.int64).sum())
    return ElementaryDecomposition(harmonic, g_sum, frac_sum, residual, prime_lower)


def g_values(model: SignModel, x: int, table: Optional[PrimeTable] = None) -> np.ndarray:
    """g(n) = sum_{d | n} f(d) for n <= x (index 0 unused)."""
    f = f_values(model, x, table).astype(np.int64)
    g = np.zeros(x + 1, dtype=np.int64)
    for d in range(1, x + 1):
        g[d::d] += f[d]
    return g


def squarefree_rough(x: int, y: int) -> np.ndarray:
    """Square-free n in (1, x] with every prime factor > y."""
    rough = _rough_upto(int(x), int(y))[1:]
    if not len(rough):
        return rough
    table = prime_table(max(int(x), 2))
    sqfree = np.ones(int(x) + 1, dtype=bool)
    for p in table.primes_upto(math.isqrt(int(x))).tolist():
        sqfree[p * p :: p * p] = False
    return rough[sqfree[rough]]


class RoughDecomposition(NamedTuple):
    lhs: int
    rhs: int


def rough_decomposition(model: SignModel, x: int, ctx: SmoothContext) -> RoughDecomposition:
    """sum_{n<=x} f(n) against Psi*(x,y) + sum_flat_{p(n)>y, n>1} f(n) Psi*(x/n, y).

    Requires f(p) = +1 for every p <= y.
    """
    x = int(x)
    if len(ctx.smooth_primes) and np.any(model.signs(ctx.smooth_primes) != 1):
        raise ValueError("rough decomposition needs f(p) = +1 for all p <= y")
    lhs = prefix_scan(model, x).final_sum
    ns = squarefree_rough(x, ctx.y)
    rhs = psi_star(x, ctx)
    if len(ns):
        fn = f_values(model, x)[ns].astype(np.int64)
        cache: dict[int, int] = {}
        for n, s in zip(ns.tolist(), fn.tolist()):
            q = x // n
            v = cache.get(q)
            if v is None:
                v = cache[q] = psi_star(q, ctx)
            rhs += s * v
    return RoughDecomposition(int(lhs), int(rhs))
