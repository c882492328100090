"""
Prime tables, factorization and elementary multiplicative invariants.

Everything here is built on a smallest-prime-factor sieve stored as a numpy
array. Tables are immutable once constructed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

MAX_LIMIT = 2**31
U64_MAX = 2**64 - 1


class InsufficientTableError(ValueError):
    """Raised when a prime table is too small to certify a factorization."""


@dataclass(frozen=True, eq=False)
class PrimeTable:
    """Primes and smallest prime factors up to ``limit``.

    ``spf[n]`` is the least prime dividing ``n`` for ``2 <= n <= limit``;
    ``spf[0] == spf[1] == 0`` is the "none" sentinel.
    """

    limit: int
    primes: np.ndarray
    spf: np.ndarray

    def is_prime(self, n: int) -> bool:
        if n > self.limit:
            raise InsufficientTableError(f"{n} exceeds table limit {self.limit}")
        return n >= 2 and int(self.spf[n]) == n

    def primes_upto(self, x: float) -> np.ndarray:
        """Primes ``p <= x`` (a view into the table)."""
        x = math.floor(x)
        if x > self.limit:
            raise InsufficientTableError(f"{x} exceeds table limit {self.limit}")
        return self.primes[: np.searchsorted(self.primes, x, side="right")]

    def primes_between(self, lo: float, hi: float) -> np.ndarray:
        """Primes ``lo < p <= hi``."""
        ps = self.primes_upto(hi)
        return ps[np.searchsorted(ps, math.floor(lo), side="right"):]

    def pi(self, x: float) -> int:
        return len(self.primes_upto(x))


def build_prime_table(limit: int) -> PrimeTable:
    """Sieve of Eratosthenes recording the smallest prime factor.

    >>> build_prime_table(10).primes.tolist()
    [2, 3, 5, 7]
    """
    limit = int(limit)
    if not 2 <= limit <= MAX_LIMIT:
        raise ValueError(f"limit must lie in [2, 2^31], got {limit}")
    spf = np.zeros(limit + 1, dtype=np.uint32)
    spf[2::2] = 2
    for p in range(3, math.isqrt(limit) + 1, 2):
        if spf[p] == 0:
            block = spf[p * p :: p]
            block[block == 0] = p
    unmarked = np.flatnonzero(spf == 0)
    unmarked = unmarked[unmarked >= 2]
    spf[unmarked] = unmarked
    primes = np.flatnonzero(spf[2:] == np.arange(2, limit + 1)) + 2
    primes = primes.astype(np.int64)
    spf.setflags(write=False)
    primes.setflags(write=False)
    return PrimeTable(limit=limit, primes=primes, spf=spf)


@lru_cache(maxsize=8)
def _cached_table(limit: int) -> PrimeTable:
    return build_prime_table(limit)


def prime_table(limit: float) -> PrimeTable:
    """Shared table covering at least ``limit`` (rounded up to a power of two)."""
    need = max(int(math.floor(limit)), 2)
    if need > MAX_LIMIT:
        raise ValueError(f"limit must lie in [2, 2^31], got {need}")
    size = 1 << max(12, (need - 1).bit_length())
    return _cached_table(min(size, MAX_LIMIT))


Factorization = list  # list[tuple[int, int]], primes increasing


def factorize(n: int, table: Optional[PrimeTable] = None) -> list[tuple[int, int]]:
    """Factor ``n`` as ``[(p, e), ...]`` with increasing primes.

    Beyond ``table.limit`` the table primes are used for trial division; if
    the cofactor left over cannot be certified prime the call fails with
    :class:`InsufficientTableError` rather than guess.
    """
    n = int(n)
    if n < 1 or n > U64_MAX:
        raise ValueError(f"n must lie in [1, 2^64), got {n}")
    if table is None:
        table = prime_table(max(2, min(n, 1 << 20)))
    out: list[tuple[int, int]] = []
    if n <= table.limit:
        spf = table.spf
        while n > 1:
            p = int(spf[n])
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
        return out
    for p in table.primes:
        p = int(p)
        if p * p > n:
            break
        if n % p == 0:
            e = 0
            while n % p == 0:
                n //= p
                e += 1
            out.append((p, e))
            if n <= table.limit:
                return out + factorize(n, table)
    else:
        if n > 1 and math.isqrt(n) > table.limit:
            raise InsufficientTableError(
                f"cofactor {n} has no prime factor <= {table.limit} and cannot be certified prime"
            )
    if n > 1:
        out.append((n, 1))
    return out


class Invariants(NamedTuple):
    omega: int
    big_omega: int
    liouville: int
    least_pf: Optional[int]
    greatest_pf: Optional[int]


def multiplicative_invariants(n: int, table: Optional[PrimeTable] = None) -> Invariants:
    """omega, Omega, Liouville lambda and the extreme prime factors of ``n``."""
    fac = factorize(n, table)
    big = sum(e for _, e in fac)
    return Invariants(
        omega=len(fac),
        big_omega=big,
        liouville=-1 if big % 2 else 1,
        least_pf=fac[0][0] if fac else None,
        greatest_pf=fac[-1][0] if fac else None,
    )


def big_omega_array(x: int, table: Optional[PrimeTable] = None) -> np.ndarray:
    """Omega(n) for ``0 <= n <= x`` (entries 0 and 1 are zero)."""
    table = table or prime_table(x)
    out = np.zeros(x + 1, dtype=np.int8)
    idx = np.arange(2, x + 1, dtype=np.int64)
    rem = idx.copy()
    while idx.size:
        rem //= table.spf[rem]
        out[idx] += 1
        keep = rem > 1
        idx, rem = idx[keep], rem[keep]
    return out


def greatest_prime_factor_array(x: int, table: Optional[PrimeTable] = None) -> np.ndarray:
    """P(n) for ``0 <= n <= x`` with 0 as the sentinel for n = 0, 1."""
    table = table or prime_table(x)
    out = np.zeros(x + 1, dtype=np.int64)
    idx = np.arange(2, x + 1, dtype=np.int64)
    rem = idx.copy()
    while idx.size:
        p = table.spf[rem].astype(np.int64)
        out[idx] = np.maximum(out[idx], p)
        rem //= p
        keep = rem > 1
        idx, rem = idx[keep], rem[keep]
    return out


def prime_recip_sum(model, x: float, table: Optional[PrimeTable] = None) -> float:
    """Sum of f(p)/p over primes p <= x, with exactly rounded summation."""
    if x < 2:
        raise ValueError("x must be >= 2")
    table = table or prime_table(x)
    ps = table.primes_upto(x)
    signs = model.signs(ps)
    return math.fsum((signs / ps).tolist())
