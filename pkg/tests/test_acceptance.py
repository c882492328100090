"""Acceptance criteria 1-14, each at its stated tolerance."""

import itertools
import json
import math
import time

import numpy as np
import pytest

from rmflab import cli
from rmflab.analysis import (
    CoefficientSeq,
    FinitePrimeModel,
    bonami_halasz_check,
    hoeffding_events,
    hoeffding_tail_check,
    moment_qnorm,
)
from rmflab.arith import factorize, prime_table
from rmflab.characters import (
    CharacterContext,
    ResidueSpec,
    harmonic_positive_certified,
    lplus_member,
    residue_set,
    scan_primes,
)
from rmflab.montecarlo import estimate_conditional_lplus, estimate_event_A, estimate_negative_harmonic
from rmflab.randmult import (
    constant_model,
    elementary_decomposition,
    harmonic_scan,
    rough_decomposition,
    sample_model,
)
from rmflab.smooth import (
    DickmanTable,
    SmoothContext,
    buchstab_residuals,
    dickman_identity_residual,
    enumerate_smooth,
    psi,
    psi_star,
)

crit = pytest.mark.criterion


# -- 1 ----------------------------------------------------------------------------

def brute_smooth_count(x, y):
    n = np.arange(1, x + 1, dtype=np.int64)
    rem = n.copy()
    for p in range(2, y + 1):
        if all(p % d for d in range(2, p)):
            while True:
                hit = rem % p == 0
                if not hit.any():
                    break
                rem[hit] //= p
    return int(np.count_nonzero(rem == 1))


@crit(1, "smooth counts")
def test_c1_smooth_counts(report):
    t0 = time.perf_counter()
    assert psi(100, SmoothContext.for_bound(5)) == 34 == brute_smooth_count(100, 5)
    star_oracle = sum(brute_smooth_count(100 // (m * m), 5) for m in range(1, 11) if math.gcd(m, 30) == 1)
    assert psi_star(100, SmoothContext.for_bound(5)) == 36 == star_oracle
    for y in (2, 5, 11, 101):
        ctx = SmoothContext.for_bound(y)
        enum = enumerate_smooth(10**4, ctx)
        counts = np.searchsorted(enum, np.arange(1, 10**4 + 1), side="right")
        got = np.array([psi(x, ctx) for x in range(1, 10**4 + 1)])
        assert np.array_equal(got, counts), y
    elapsed = time.perf_counter() - t0
    report(f"psi == enumerate_smooth for all x <= 1e4, y in {{2,5,11,101}}; {elapsed:.2f} s")
    assert elapsed < 10


# -- 2 ----------------------------------------------------------------------------

@crit(2, "Dickman rho")
def test_c2_dickman(report):
    t0 = time.perf_counter()
    table = DickmanTable(u_max=50)
    assert abs(float(table.rho(2.0)) - (1 - math.log(2))) <= 1e-9
    grid = np.arange(1.0, 10.0 + 1e-12, 1 / 128)
    worst = max(dickman_identity_residual(u, table) for u in grid)
    elapsed = time.perf_counter() - t0
    report(f"sup residual on [1,10] (step 1/128) = {worst:.3e}; {elapsed:.2f} s")
    assert worst <= 1e-7
    assert elapsed < 5


# -- 3 ----------------------------------------------------------------------------

@crit(3, "Buchstab identities")
def test_c3_buchstab(report):
    t0 = time.perf_counter()
    worst_u = worst_s = 0.0
    for x, y in ((10**4, 20), (10**5, 50)):
        ctx = SmoothContext.for_bound(y)
        r = buchstab_residuals(x, ctx)
        worst_u = max(worst_u, r.unsigned_residual / r.scale)
        for seed in range(100):
            r = buchstab_residuals(x, ctx, sample_model(seed))
            worst_s = max(worst_s, r.signed_residual / r.scale)
    elapsed = time.perf_counter() - t0
    report(f"worst relative residual unsigned {worst_u:.3e}, signed {worst_s:.3e}; {elapsed:.2f} s")
    assert worst_u <= 1e-9 and worst_s <= 1e-9
    assert elapsed < 60


# -- 4 ----------------------------------------------------------------------------

@crit(4, "elementary decomposition")
def test_c4_elementary(report):
    worst = 0.0
    table = prime_table(10**5)
    for seed in range(100):
        r = elementary_decomposition(sample_model(seed), 10**5, table)
        worst = max(worst, r.residual)
        assert r.g_sum >= 0
        assert r.g_sum >= r.prime_lower
    report(f"worst residual over 100 seeds at x = 1e5: {worst:.3e}")
    assert worst <= 1e-9


def test_c4_prime_lower_is_the_prime_sum():
    m = sample_model(3)
    ps = prime_table(10**4).primes_upto(10**4)
    r = elementary_decomposition(m, 10**4)
    assert r.prime_lower == int(np.sum(1 + m.signs(ps).astype(np.int64)))


# -- 5 ----------------------------------------------------------------------------

@crit(5, "rough decomposition")
def test_c5_rough():
    ctx = SmoothContext.for_bound(10)
    for seed in range(50):
        r = rough_decomposition(sample_model(seed, forced_prefix_y=10), 10**4, ctx)
        assert isinstance(r.lhs, int) and isinstance(r.rhs, int)
        assert r.lhs == r.rhs


# -- 6 ----------------------------------------------------------------------------

def specs(N):
    keys = [-1] + [int(q) for q in prime_table(N).primes_upto(N)]
    for sg in itertools.product((1, -1), repeat=len(keys)):
        yield ResidueSpec(N, dict(zip(keys, sg)))


def legendre(a, p):
    return CharacterContext.build(p).chi(a)


@crit(6, "residue sets")
def test_c6_residues():
    all24 = list(specs(3))
    assert len(all24) == 8 and all(len(residue_set(s)) == 1 for s in all24)
    all120 = list(specs(5))
    assert len(all120) == 16 and all(len(residue_set(s)) == 2 for s in all120)
    for N in (3, 5, 7):
        sets = [residue_set(s).tolist() for s in specs(N)]
        k = next(specs(N)).k
        flat = sorted(itertools.chain.from_iterable(sets))
        assert flat == [l for l in range(k) if math.gcd(l, k) == 1]
        assert len(flat) == len(set(flat))
    for N in (3, 5):
        for s in specs(N):
            for l in residue_set(s).tolist():
                p, found = l, 0
                while found < 20:
                    if p > N and factorize(p) == [(p, 1)]:
                        assert (1 if p % 4 == 1 else -1) == s.signs[-1]
                        assert (1 if p % 8 in (1, 7) else -1) == s.signs[2]
                        for q in s.primes[1:]:
                            assert legendre(q, p) == s.signs[q]
                        found += 1
                    p += s.k


# -- 7 ----------------------------------------------------------------------------

@crit(7, "Liouville harmonic positivity to 1e7")
def test_c7_liouville(report):
    t0 = time.perf_counter()
    s = harmonic_scan(constant_model(-1), 10**7)
    elapsed = time.perf_counter() - t0
    report(f"min prefix {s.min_prefix:.6e} at t = {s.argmin} (rounding bound {s.error_bound:.1e}); {elapsed:.1f} s")
    assert s.min_prefix - s.error_bound > 0 and s.all_positive
    assert elapsed < 120


# -- 8 ----------------------------------------------------------------------------

@crit(8, "L+ scan ground truth")
def test_c8_lplus():
    assert {p for p in (3, 5, 7) if lplus_member(p)[0]} == {3, 7}
    for p in prime_table(499).primes_upto(499).tolist():
        if p == 2:
            continue
        ctx = CharacterContext.build(p)
        direct = int(np.cumsum(ctx.values(10 * p)).min()) >= 0
        assert lplus_member(p, ctx)[0] == direct, p


# -- 9 ----------------------------------------------------------------------------

@crit(9, "Monte Carlo vs exhaustive")
def test_c9_mc_vs_exhaustive():
    ex = estimate_conditional_lplus(5, 2, exhaustive=True)
    assert ex.p_hat == 1.0 and ex.ci_low == ex.ci_high == 1.0
    neg = estimate_negative_harmonic(4, exhaustive=True)
    assert neg.p_hat == 0.0 and neg.ci_low == neg.ci_high == 0.0
    mc = estimate_conditional_lplus(5, 2, trials=10**4, seed=1)
    assert ex.ci_low <= mc.p_hat <= ex.ci_high
    mc = estimate_negative_harmonic(4, trials=10**4, seed=1)
    assert neg.ci_low <= mc.p_hat <= neg.ci_high
    for x, y in ((10, 10), (30, 50), (1000, 1000)):
        assert estimate_conditional_lplus(x, y, trials=200, seed=2).p_hat == 1.0
    assert estimate_conditional_lplus(30, 30, exhaustive=True).p_hat == 1.0


# -- 10 ---------------------------------------------------------------------------

SQF30 = [n for n in range(1, 31) if all(e == 1 for _, e in factorize(n))]


def _sign_vectors(universe, max_support):
    vecs = [np.zeros(len(universe))]
    for k in range(1, max_support + 1):
        for idx in itertools.combinations(range(len(universe)), k):
            for signs in itertools.product((1, -1), repeat=k):
                v = np.zeros(len(universe))
                v[list(idx)] = signs
                vecs.append(v)
    return np.array(vecs)


def _char_matrix(universe, primes):
    Q = FinitePrimeModel(tuple(primes))
    pat = np.arange(1 << len(primes), dtype=np.uint32)
    masks = np.array([Q.mask(n) for n in universe], dtype=np.uint32)
    return 1 - 2 * (np.bitwise_count(masks[:, None] & pat[None, :]) & 1).astype(float)


def _omega_weights(universe, m):
    return np.array([(m - 1) ** len(factorize(n)) for n in universe], dtype=float)


@crit(10, "Bonami-Halasz sweep")
def test_c10_bonami_halasz(report):
    # equality case
    r = bonami_halasz_check([CoefficientSeq.indicator([2, 3])] * 2)
    assert r.lhs == r.rhs == 2 and r.holds

    # m = 2: every pair of {-1,0,1} vectors with support <= 2 on the square-free n <= 30
    primes = [int(p) for p in prime_table(30).primes_upto(30)]
    F = _char_matrix(SQF30, primes)
    B = _sign_vectors(SQF30, 2)
    S = B @ F
    E = S @ S.T / F.shape[1]
    w = (B * B) @ _omega_weights(SQF30, 2)
    rhs = np.sqrt(np.outer(w, w))
    assert np.all(np.abs(E) <= rhs + 1e-12)
    n2 = E.size

    # m = 3: support <= 1 on all of them, and support <= 2 on square-free n <= 15
    n3 = 0
    for universe, max_support in ((SQF30, 1), ([n for n in SQF30 if n <= 15], 2)):
        ps = [p for p in primes if p <= max(universe)]
        F = _char_matrix(universe, ps)
        B = _sign_vectors(universe, max_support)
        S = B @ F
        w = (B * B) @ _omega_weights(universe, 3)
        for i in range(len(B)):
            E = (S[i] * S) @ S.T / F.shape[1]
            rhs = np.sqrt(w[i] * np.outer(w, w))
            assert np.all(np.abs(E) <= rhs + 1e-12)
        n3 += len(B) ** 3

    # the library path on random full-support instances
    rng = np.random.default_rng(10)
    for m in (2, 3):
        for _ in range(150):
            bs = [CoefficientSeq({n: int(v) for n, v in zip(SQF30, rng.integers(-1, 2, len(SQF30))) if v})
                  for _ in range(m)]
            assert bonami_halasz_check(bs, m).holds
    report(f"instances: m=2 {n2}, m=3 {n3}, plus 300 random full-support cases")


# -- 11 ---------------------------------------------------------------------------

@crit(11, "moment oracle")
def test_c11_moments():
    assert moment_qnorm(4, 2).moment == 6
    for x in range(1, 31):
        pairs = sum(1 for a in range(1, x + 1) for b in range(1, x + 1) if math.isqrt(a * b) ** 2 == a * b)
        m = moment_qnorm(x, 2, "exact")
        assert m.moment == pairs
        assert round(m.qnorm**2) == pairs and abs(m.qnorm**2 - pairs) <= 1e-9 * pairs


# -- 12 ---------------------------------------------------------------------------

@crit(12, "Hoeffding dominance")
def test_c12_hoeffding(report):
    for name, (ps, w, t) in hoeffding_events().items():
        r = hoeffding_tail_check(ps, w, t, 10**5, seed=12)
        report(f"{name}: frequency {r.frequency:.5f} <= bound {r.bound:.5f}")
        assert r.frequency <= r.bound


# -- 13 ---------------------------------------------------------------------------

@crit(13, "certified character positivity")
def test_c13_certified(report):
    scan = scan_primes(100)
    assert [r.p for r in scan.records] == prime_table(200).primes_between(100, 200).tolist()
    for rec in scan.records:
        c = harmonic_positive_certified(rec.p)
        tail = 2 * math.sqrt(rec.p) * math.log(rec.p) / c.y0
        report(f"p={rec.p}: S(y0={c.y0}) = {c.s_y0:.6f} > {tail:.6f}")
        assert c.certified and c.flag and c.s_y0 > tail
        assert rec.certified and rec.harmonic_positive
    p_trunc = estimate_event_A(1000, trials=10**4, seed=13).p_hat
    report(f"empirical P~_100 = {scan.p_tilde}; P_truncated(cutoff 1e3, 1e4 trials) = {p_trunc}; "
           f"|difference| = {abs(scan.p_tilde - p_trunc):.6f}")
    assert scan.p_tilde == sum(r.harmonic_positive for r in scan.records) / scan.count


# -- 14 ---------------------------------------------------------------------------

STOCHASTIC = [
    ["simulate", "lplus", "--x", "2000", "--y", "10", "--trials", "3000", "--seed", "14"],
    ["simulate", "harmonic-negative", "--x", "1000", "--trials", "3000", "--seed", "14"],
    ["simulate", "event-a", "--cutoff", "1000", "--trials", "3000", "--seed", "14"],
    ["simulate", "covariance", "--d", "6", "--cutoff", "1000", "--trials", "3000", "--seed", "14"],
    ["simulate", "deviation", "--x", "2000", "--y", "10", "--delta", "0.3", "--trials", "3000", "--seed", "14"],
    ["moments", "--x", "30", "--q", "4", "--mode", "monte_carlo", "--trials", "5000", "--seed", "14"],
    ["halasz", "--x", "1000", "--seed", "14"],
    ["ratios", "--x", "10000", "--eps", "0.3", "--seed", "14"],
    ["scan", "--x", "200"],
]


def _payloads(capsys, argv, threads):
    cli.run(argv + ["--threads", str(threads)])
    rec = json.loads(capsys.readouterr().out)
    rec.pop("runtime")
    js = cli.to_json(rec).encode()
    cli.run(argv + ["--threads", str(threads), "--format", "csv"])
    return js, capsys.readouterr().out.encode()


@crit(14, "determinism across thread counts")
@pytest.mark.parametrize("argv", STOCHASTIC, ids=lambda a: " ".join(a[:2]))
def test_c14_determinism(capsys, argv):
    base = _payloads(capsys, argv, 1)
    for threads in (4, 8):
        assert _payloads(capsys, argv, threads) == base
