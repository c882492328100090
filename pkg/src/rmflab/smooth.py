"""
Smooth and rough numbers: Psi, Psi*, the signed count Psi_f, the saddle point
alpha(x, y), Dickman's rho, and residuals of the identities they satisfy.
"""

from __future__ import annotations

import math
import sys
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .arith import PrimeTable, prime_table

ENUMERATION_BUDGET = 10**8


class BudgetExceededError(ValueError):
    pass


@dataclass(eq=False)
class SmoothContext:
    """The smoothness bound ``y`` together with the primes up to it.

    Psi values are memoised per context, keyed on ``(floor(x), k)`` where
    ``k`` indexes the largest admissible prime.
    """

    y: int
    smooth_primes: np.ndarray
    _memo: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._plist = [int(p) for p in self.smooth_primes]

    @classmethod
    def for_bound(cls, y: float, table: Optional[PrimeTable] = None) -> "SmoothContext":
        y = int(math.floor(y))
        if y < 1:
            raise ValueError("y must be >= 1")
        if y < 2:
            return cls(y=y, smooth_primes=np.zeros(0, dtype=np.int64))
        table = table or prime_table(y)
        return cls(y=y, smooth_primes=table.primes_upto(y))


def _as_int(x) -> int:
    if x < 0:
        raise ValueError("x must be >= 0")
    return int(math.floor(x))


# -- the saddle point ---------------------------------------------------------

def _alpha_lhs(alpha: float, logs: np.ndarray, ps: np.ndarray) -> float:
    return float(np.sum(logs / np.expm1(alpha * logs)))


def solve_alpha(x: float, y: float, tol: float = 1e-12, table: Optional[PrimeTable] = None) -> float:
    """Root alpha of  sum_{p<=y} log p / (p^alpha - 1) = log x  by bisection.

    The left side decreases strictly in alpha, so the root is unique.
    """
    if x <= 1 or y < 2 or tol <= 0:
        raise ValueError("need x > 1, y >= 2, tol > 0")
    ps = (table or prime_table(y)).primes_upto(y).astype(float)
    logs = np.log(ps)
    target = math.log(x)
    lo, hi = 1e-9, 2.0
    while _alpha_lhs(hi, logs, ps) > target:
        hi *= 2
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = _alpha_lhs(mid, logs, ps)
        if abs(val - target) <= tol * target:
            break
        if val > target:
            lo = mid
        else:
            hi = mid
    return mid


def alpha_asymptotic(x: float, y: float) -> float:
    """Main term log(1 + y/log x) / log y of the saddle point."""
    if not x >= y >= 2:
        raise ValueError("need x >= y >= 2")
    return math.log1p(y / math.log(x)) / math.log(y)


# -- counting -----------------------------------------------------------------

def psi(x: float, ctx: SmoothContext) -> int:
    """Number of y-smooth integers in [1, x]; 1 counts."""
    n = _as_int(x)
    k = int(np.searchsorted(ctx.smooth_primes, n, side="right"))
    need = k + 64
    if need > sys.getrecursionlimit() - 100:
        sys.setrecursionlimit(need + 1000)
    return _psi_rec(n, k, ctx._plist, ctx.y, ctx._memo)


def _psi_rec(n: int, k: int, ps: list, y: int, memo: dict) -> int:
    # counts m <= n whose prime factors lie among ps[:k]
    if n < 2:
        return n
    if k and ps[k - 1] > n:
        k = bisect_right(ps, n, 0, k)
    if k == 0:
        return 1
    if (k < len(ps) and ps[k] > n) or (k == len(ps) and y >= n):
        return n
    if k == 1:
        return n.bit_length()
    key = (n, k)
    hit = memo.get(key)
    if hit is not None:
        return hit
    p = ps[k - 1]
    if p * p > n:
        # each prime q in (sqrt n, p] adds exactly floor(n/q) members
        j = bisect_right(ps, math.isqrt(n), 0, k)
        val = _psi_rec(n, j, ps, y, memo) + sum(n // q for q in ps[j:k])
    else:
        val = _psi_rec(n, k - 1, ps, y, memo) + _psi_rec(n // p, k, ps, y, memo)
    memo[key] = val
    return val


def psi_table(n: int, ctx: SmoothContext) -> np.ndarray:
    """Array ``T`` with ``T[t] = Psi(t, y)`` for ``0 <= t <= n``."""
    vals = enumerate_smooth(n, ctx)
    ind = np.zeros(n + 1, dtype=np.int64)
    ind[vals] = 1
    return np.cumsum(ind)


def _smooth_products(n: int, primes: Sequence[int], signs: Optional[Sequence[int]] = None):
    vals = np.ones(1, dtype=np.int64)
    sg = np.ones(1, dtype=np.int8)
    for i, p in enumerate(primes):
        if p > n:
            break
        s = 1 if signs is None else int(signs[i])
        parts_v, parts_s = [vals], [sg]
        cur_v, cur_s = vals, sg
        while True:
            keep = cur_v <= n // p
            if not keep.any():
                break
            cur_v = cur_v[keep] * p
            cur_s = cur_s[keep] * s
            parts_v.append(cur_v)
            parts_s.append(cur_s)
        vals = np.concatenate(parts_v)
        sg = np.concatenate(parts_s)
    order = np.argsort(vals, kind="stable")
    return vals[order], sg[order]


def enumerate_smooth(x: float, ctx: SmoothContext) -> np.ndarray:
    """Sorted y-smooth integers in [1, x]."""
    n = _as_int(x)
    if n < 1:
        return np.zeros(0, dtype=np.int64)
    if psi(n, ctx) > ENUMERATION_BUDGET:
        raise BudgetExceededError(f"Psi({n}, {ctx.y}) exceeds the enumeration budget")
    return _smooth_products(n, ctx._plist)[0]


def smooth_with_signs(x: float, ctx: SmoothContext, model) -> tuple[np.ndarray, np.ndarray]:
    """Sorted y-smooth integers up to x with the values f(n) of ``model``."""
    n = _as_int(x)
    if n < 1:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int8)
    if psi(n, ctx) > ENUMERATION_BUDGET:
        raise BudgetExceededError(f"Psi({n}, {ctx.y}) exceeds the enumeration budget")
    signs = model.signs(ctx.smooth_primes) if len(ctx.smooth_primes) else []
    return _smooth_products(n, ctx._plist, signs)


def _rough_upto(n: int, y: int) -> np.ndarray:
    """Integers m in [1, n] with every prime factor > y (m = 1 included)."""
    if n < 1:
        return np.zeros(0, dtype=np.int64)
    table = prime_table(max(n, 2))
    ms = np.arange(1, n + 1, dtype=np.int64)
    mask = table.spf[ms] > y
    mask[0] = True
    return ms[mask]


def psi_star(x: float, ctx: SmoothContext) -> int:
    """Sum of Psi(x/m^2, y) over m >= 1 whose prime factors all exceed y."""
    n = _as_int(x)
    if n < 1:
        return 0
    return sum(psi(n // (m * m), ctx) for m in _rough_upto(math.isqrt(n), ctx.y).tolist())


def psi_f(x: float, ctx: SmoothContext, model) -> int:
    """Signed count: sum of f(n) over y-smooth n <= x."""
    _, sg = smooth_with_signs(x, ctx, model)
    return int(sg.sum(dtype=np.int64))


class BuchstabResiduals(NamedTuple):
    unsigned_residual: float
    signed_residual: float
    scale: float  # max(1, Psi(x,y) log x); divide for relative residuals


def buchstab_residuals(x: float, ctx: SmoothContext, model=None) -> BuchstabResiduals:
    """Residuals of  Psi log x = int_1^x Psi(t)/t dt + sum_{p^m<=x, p<=y} Psi(x/p^m) log p
    and of its f-weighted analogue.

    The integral is evaluated exactly as sum_{n in S(x,y)} log(x/n). The
    prime-power side of the unsigned identity goes through :func:`psi`, the
    signed side through a prefix sum of the enumerated f-values.
    """
    if x < 1:
        raise ValueError("x must be >= 1")
    n = _as_int(x)
    logx = math.log(x)
    if model is None:
        vals = enumerate_smooth(n, ctx)
        sg = np.ones(len(vals), dtype=np.int8)
        psign = [1] * len(ctx._plist)
    else:
        vals, sg = smooth_with_signs(n, ctx, model)
        psign = [int(s) for s in model.signs(ctx.smooth_primes)] if ctx._plist else []
    count = len(vals)
    logs_n = np.log(vals.astype(float))

    integral = math.fsum((logx - logs_n).tolist())
    prime_side = []
    for p in ctx._plist:
        if p > n:
            break
        lp = math.log(p)
        q = p
        while q <= n:
            prime_side.append(psi(n // q, ctx) * lp)
            q *= p
    unsigned = abs(math.fsum([count * logx, -integral] + [-t for t in prime_side]))

    csum = np.concatenate([[0], np.cumsum(sg, dtype=np.int64)])

    def psi_f_at(t: int) -> int:
        return int(csum[np.searchsorted(vals, t, side="right")])

    s_integral = math.fsum((sg * (logx - logs_n)).tolist())
    s_prime = []
    for p, s in zip(ctx._plist, psign):
        if p > n:
            break
        lp = math.log(p)
        q, fq = p, s
        while q <= n:
            s_prime.append(fq * psi_f_at(n // q) * lp)
            q *= p
            fq *= s
    total_f = int(sg.sum(dtype=np.int64))
    signed = abs(math.fsum([total_f * logx, -s_integral] + [-t for t in s_prime]))
    return BuchstabResiduals(unsigned, signed, max(1.0, count * logx))


# -- Dickman's function -------------------------------------------------------

_SERIES_DEGREE = 64


class DickmanTable:
    """Dickman's rho on [0, u_max].

    On each unit interval [k, k+1] rho is expanded in powers of
    s = u - (k + 1/2). The delay equation  u rho'(u) = -rho(u-1)  fixes every
    coefficient but the constant from the previous interval's series. The nearest singularity of the
    piece on [k, k+1] is at u = k-1, so the series converges like 3^-n.
    The constant term comes from the integral form of the equation rather
    than continuity at u = k, which would cancel catastrophically once rho
    is small.

    ``values`` holds rho on the grid ``step * i``; :meth:`integral` runs
    composite Simpson over that grid.
    """

    def __init__(self, u_max: float = 50.0, step: float = 2.0**-10):
        if u_max < 1:
            raise ValueError("u_max must be >= 1")
        self.u_max = float(u_max)
        self.step = float(step)
        nint = int(math.ceil(u_max))
        coeffs = np.zeros((nint + 1, _SERIES_DEGREE + 1))
        coeffs[0, 0] = 1.0
        i = np.arange(_SERIES_DEGREE + 1)
        right = 0.5 ** (i + 1) / (i + 1)  # int_0^{1/2} s^i ds
        left = (-1.0) ** i * right  # int_{-1/2}^0 s^i ds
        for k in range(1, nint + 1):
            b = coeffs[k - 1]
            c = k + 0.5
            a = np.zeros(_SERIES_DEGREE + 1)
            for j in range(_SERIES_DEGREE):
                a[j + 1] = -(b[j] + j * a[j]) / (c * (j + 1))
            # constant term from u rho(u) = int_{u-1}^u rho at u = c; every
            # contribution is positive, so relative accuracy survives large u
            a[0] = (float(np.dot(b, right)) + float(np.dot(a[1:], left[1:]))) / k
            coeffs[k] = a
        self._coeffs = coeffs
        self._nint = nint
        n = int(round(self.u_max / self.step))
        self.grid = np.arange(n + 1) * self.step
        self.values = self.rho(self.grid)
        self.values.setflags(write=False)

    def rho(self, u):
        """Vectorised rho(u) for 0 <= u <= u_max."""
        arr = np.asarray(u, dtype=float)
        if np.any(arr < 0) or np.any(arr > self.u_max):
            raise ValueError(f"u must lie in [0, {self.u_max}]")
        k = np.minimum(np.floor(arr).astype(int), self._nint - 1)
        k = np.maximum(k, 0)
        s = arr - (k + 0.5)
        out = np.zeros_like(arr)
        for i in range(_SERIES_DEGREE, -1, -1):
            out = out * s + self._coeffs[k, i]
        out = np.where(arr <= 1.0, 1.0, out)
        return out if out.ndim else float(out)

    def _on_grid(self, t: float) -> Optional[int]:
        i = t / self.step
        r = round(i)
        return int(r) if abs(i - r) < 1e-9 else None

    def integral(self, a: float, b: float) -> float:
        """Integral of rho over [a, b], split at integers, composite Simpson."""
        if b < a:
            return -self.integral(b, a)
        cuts = [a] + [float(k) for k in range(math.floor(a) + 1, math.ceil(b))] + [b]
        total = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            if hi - lo <= 0:
                continue
            i0, i1 = self._on_grid(lo), self._on_grid(hi)
            if i0 is not None and i1 is not None and i1 - i0 >= 2:
                ys = self.values[i0 : i1 + 1]
                h = self.step
            else:
                m = max(2, 2 * math.ceil((hi - lo) / (2 * self.step)))
                h = (hi - lo) / m
                ys = self.rho(lo + h * np.arange(m + 1))
            total.append(_composite(ys, h))
        return math.fsum(total)


def _composite(ys: np.ndarray, h: float) -> float:
    n = len(ys) - 1
    if n == 1:
        return h * (ys[0] + ys[1]) / 2
    if n % 2 == 1:
        # Simpson 3/8 on the last three panels
        head = _composite(ys[: n - 2], h)
        t = ys[n - 3 :]
        return head + 3 * h / 8 * (t[0] + 3 * t[1] + 3 * t[2] + t[3])
    return h / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-1:2].sum())


@lru_cache(maxsize=4)
def dickman_table(u_max: float = 50.0) -> DickmanTable:
    return DickmanTable(u_max)


def dickman_rho(u: float, u_max: float = 50.0) -> float:
    """Dickman's function; exactly 1 on [0, 1]."""
    if u < 0 or u > u_max:
        raise ValueError(f"u must lie in [0, {u_max}]")
    if u <= 1:
        return 1.0
    return float(dickman_table(u_max).rho(u))


def dickman_identity_residual(u: float, table: Optional[DickmanTable] = None) -> float:
    """|u rho(u) - int_{u-1}^u rho(t) dt| with the integral by table quadrature."""
    if u < 1:
        raise ValueError("u must be >= 1")
    table = table or dickman_table()
    return abs(u * float(table.rho(u)) - table.integral(u - 1, u))


# -- inequalities -------------------------------------------------------------

def konyagin_bound(x: float, y: float) -> float:
    """x^(1 - log log x / log y)."""
    return x ** (1 - math.log(math.log(x)) / math.log(y))


def bound_checks(
    x: float,
    ctx: SmoothContext,
    pairs: Optional[Iterable[tuple[float, float]]] = None,
    t_grid: Optional[Sequence[float]] = None,
) -> dict:
    """Triangle inequality for Psi on (x, z) pairs, the Konyagin-Pomerance
    lower bound at (x, y), and the ratio sup_t Psi(x/t) t^alpha / Psi(x)."""
    n = _as_int(x)
    if pairs is None:
        pairs = [(n, z) for z in (1, 2, 10, max(1, n // 2), n)]
    triangle = []
    for a, z in pairs:
        lhs = psi(a + z, ctx) - psi(a, ctx)
        rhs = psi(z, ctx) + 1
        triangle.append({"x": a, "z": z, "lhs": lhs, "rhs": rhs, "holds": lhs <= rhs})
    report = {"triangle": triangle}
    y = ctx.y
    if n >= 4 and 2 <= y <= n:
        bound = konyagin_bound(n, y)
        report["konyagin"] = {"psi": psi(n, ctx), "bound": bound, "holds": psi(n, ctx) >= bound}
    if n >= 2 and y >= 2:
        alpha = solve_alpha(max(x, 1.0 + 1e-12), y) if x > 1 else 1.0
        if t_grid is None:
            t_grid = np.unique(np.concatenate([[1.0], np.geomspace(1.0, float(n), 64)]))
        base = psi(n, ctx)
        ratios = [psi(x / t, ctx) * t**alpha / base for t in t_grid]
        i = int(np.argmax(ratios))
        report["alpha"] = alpha
        report["ratio_sup"] = float(ratios[i])
        report["ratio_argsup"] = float(t_grid[i])
    return report
