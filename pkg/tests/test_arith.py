import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rmflab.arith import (
    InsufficientTableError,
    big_omega_array,
    build_prime_table,
    factorize,
    greatest_prime_factor_array,
    multiplicative_invariants,
    prime_recip_sum,
    prime_table,
)
from rmflab.randmult import constant_model


def trial_division_primes(n):
    return [p for p in range(2, n + 1) if all(p % d for d in range(2, math.isqrt(p) + 1))]


def test_small_tables():
    assert build_prime_table(10).primes.tolist() == [2, 3, 5, 7]
    assert len(build_prime_table(100).primes) == 25
    assert build_prime_table(2000).primes.tolist() == trial_division_primes(2000)


@pytest.mark.parametrize("bad", [1, 0, -5, 2**31 + 1])
def test_limit_rejected(bad):
    with pytest.raises(ValueError):
        build_prime_table(bad)


def test_spf_invariant():
    t = build_prime_table(5000)
    for n in range(2, 5001):
        p = int(t.spf[n])
        assert n % p == 0
        assert all(n % q for q in range(2, p))


def test_table_is_read_only():
    t = prime_table(100)
    with pytest.raises(ValueError):
        t.spf[5] = 1


def test_factorize_examples():
    assert factorize(12) == [(2, 2), (3, 1)]
    assert factorize(1) == []
    with pytest.raises(InsufficientTableError):
        factorize(9991, build_prime_table(10))
    # beyond the table, but certifiable by trial division
    assert factorize(9991, build_prime_table(200)) == [(97, 1), (103, 1)]
    assert factorize(999999999989, prime_table(2**20)) == [(999999999989, 1)]


def test_factorize_range():
    with pytest.raises(ValueError):
        factorize(0)
    with pytest.raises(ValueError):
        factorize(2**64)


def test_round_trip_to_1e6():
    x = 10**6
    t = prime_table(x)
    # vectorised recomposition over the spf chain
    n = np.arange(2, x + 1, dtype=np.int64)
    rem, prod = n.copy(), np.ones_like(n)
    while (rem > 1).any():
        p = t.spf[rem].astype(np.int64)
        p[rem == 1] = 1
        prod *= p
        rem //= p
    assert np.array_equal(prod, n)
    for m in random.Random(1).sample(range(1, x + 1), 300):
        assert math.prod(p**e for p, e in factorize(m, t)) == m


@given(st.integers(min_value=1, max_value=10**12))
@settings(max_examples=200, deadline=None)
def test_factorize_property(n):
    fac = factorize(n, prime_table(2**20))
    assert math.prod(p**e for p, e in fac) == n
    assert [p for p, _ in fac] == sorted({p for p, _ in fac})
    for p, _ in fac:
        assert p == 2 or pow(2, p - 1, p) == 1


def test_invariants_examples():
    assert multiplicative_invariants(12)[:3] == (2, 3, -1)
    assert multiplicative_invariants(30)[:3] == (3, 3, -1)
    inv = multiplicative_invariants(1)
    assert inv[:3] == (0, 0, 1) and inv.least_pf is None and inv.greatest_pf is None
    assert multiplicative_invariants(360).least_pf == 2
    assert multiplicative_invariants(360).greatest_pf == 5


def test_liouville_completely_multiplicative():
    rng = random.Random(7)
    lam = lambda n: multiplicative_invariants(n).liouville
    for _ in range(10**4):
        m, n = rng.randint(1, 10**5), rng.randint(1, 10**5)
        assert lam(m * n) == lam(m) * lam(n)


def test_arrays_match_scalar():
    x = 3000
    om = big_omega_array(x)
    gp = greatest_prime_factor_array(x)
    for n in range(2, x + 1):
        inv = multiplicative_invariants(n)
        assert om[n] == inv.big_omega and gp[n] == inv.greatest_pf


def test_prime_recip_sum():
    assert prime_recip_sum(constant_model(1), 10) == pytest.approx(1 / 2 + 1 / 3 + 1 / 5 + 1 / 7, abs=1e-15)
    assert prime_recip_sum(constant_model(-1), 10) == pytest.approx(-1.176190476, abs=1e-9)
    assert prime_recip_sum(constant_model(-1), 2) == -0.5
    with pytest.raises(ValueError):
        prime_recip_sum(constant_model(1), 1.5)


@pytest.mark.parametrize("x", [10**3, 10**4, 10**5, 10**6])
def test_mertens_envelope(x):
    gap = prime_recip_sum(constant_model(1), x) - math.log(math.log(x))
    assert 0.2 <= gap <= 0.4
