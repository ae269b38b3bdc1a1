import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.stats import binom

from unitriwalk import certify, exact
from unitriwalk.certify import (CertificateReport, Certifier, certified_tv_upper, clopper_pearson,
                                estimate_span_failure, exact_group_tv, last_column_zeros,
                                lezaud_tail_check, lower_bound_from_stats, occupation_fraction,
                                span_event_check, span_times, span_vectors, tv_lower_statistic)
from unitriwalk.walk import EventLog, inner_chain, sample_event_log, sample_event_log_backward


def make_log(n, q, T, events):
    times, clocks, scalars = zip(*events) if events else ((), (), ())
    return EventLog(n, q, T, np.array(times, dtype=float), np.array(clocks), np.array(scalars))


def n3_failure(q, T):
    """P(no span by T) at n = 3 from a 4-state absorbing chain.

    v_k = (y, 1) where y is refreshed uniformly at rate 1 by clock 1; span needs two
    distinct y values seen at clock-2 rings. States: nothing seen, current y seen,
    current y unseen, spanned.
    """
    L = np.array([
        [-1.0, 1.0, 0.0, 0.0],
        [0.0, -(q - 1) / q, (q - 1) / q, 0.0],
        [0.0, 1 / q, -(1 / q + 1.0), 1.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    return 1 - expm(L * T)[0, 3]


# confidence intervals

def test_clopper_pearson_closed_forms():
    ci = clopper_pearson(0, 100, 0.99, side="upper")
    assert ci.upper == pytest.approx(1 - 0.01 ** (1 / 100), rel=1e-10)
    assert ci.lower == 0.0
    ci = clopper_pearson(100, 100, 0.99, side="lower")
    assert ci.lower == pytest.approx(0.01 ** (1 / 100), rel=1e-10)


@settings(max_examples=50)
@given(st.integers(1, 500), st.data())
def test_clopper_pearson_tail_identity(N, data):
    k = data.draw(st.integers(0, N - 1))
    ci = clopper_pearson(k, N, 0.95)
    # the upper limit p solves P(Bin(N, p) <= k) = 0.025
    assert binom.cdf(k, N, ci.upper) == pytest.approx(0.025, rel=1e-6)
    assert ci.lower <= k / N <= ci.upper


def test_clopper_pearson_needs_samples():
    with pytest.raises(ValueError):
        clopper_pearson(0, 0)


# span event

def test_span_n2():
    assert span_event_check(make_log(2, 3, 1.0, [(0.5, 1, 0)]).split()).spanned
    rec = span_event_check(make_log(2, 3, 1.0, []).split())
    assert not rec.spanned and rec.rank_path == []


def test_span_no_last_row_events():
    rec = span_event_check(make_log(4, 2, 3.0, [(0.5, 1, 1), (1.0, 2, 1)]).split())
    assert not rec.spanned and rec.first_span_time is None


def test_span_hand_built():
    # Y_{T-s1} e2 = e2 (the two clock-1 rings cancel), Y_{T-s2} e2 = e1 + e2
    log = make_log(3, 2, 1.0, [(0.2, 2, 0), (0.4, 1, 1), (0.6, 2, 1), (0.8, 1, 1)])
    vecs = span_vectors(log.split())
    assert [v.tolist() for v in vecs] == [[0, 1], [1, 1]]
    rec = span_event_check(log.split())
    assert rec.spanned and rec.first_span_time == 0.6
    assert [r for _, r in rec.rank_path] == [1, 2]


@settings(max_examples=40)
@given(st.integers(2, 7), st.sampled_from([2, 3, 5]), st.integers(0, 2**40))
def test_span_vectors_live_in_first_coordinates(n, q, seed):
    split = sample_event_log(n, q, 4.0, seed).split()
    from unitriwalk.walk import BackwardPath
    for Y in BackwardPath(split).at_last_events():
        assert Y.entries[n - 1, n - 2] == 0
        assert Y.entries[n - 2, n - 2] == 1
    for v in span_vectors(split):
        assert v.shape == (n - 1,)


def test_span_monotone_under_extension():
    for seed in range(30):
        short = span_event_check(sample_event_log_backward(4, 3, 3.0, seed).split())
        long = span_event_check(sample_event_log_backward(4, 3, 8.0, seed).split())
        assert long.spanned or not short.spanned


@pytest.mark.parametrize("q", [2, 3, 5])
def test_batch_engine_matches_n3_chain(q):
    N = 50_000
    times = span_times(3, q, N, seed=q, horizon=10.0)
    for T in (1.0, 3.0, 6.0):
        p = n3_failure(q, T)
        est = np.mean(times > T)
        assert abs(est - p) <= 4 * math.sqrt(p * (1 - p) / N)


def test_batch_engine_matches_scalar_check():
    # same law for the vectorized engine and the per-log rank check
    n, q, T, N = 5, 3, 6.0, 3000
    scalar = np.mean([not span_event_check(sample_event_log(n, q, T, s).split()).spanned
                      for s in range(N)])
    batch = np.mean(span_times(n, q, 20_000, seed=1, horizon=T) > T)
    se = math.sqrt(batch * (1 - batch) * (1 / N + 1 / 20_000))
    assert abs(scalar - batch) < 4 * se


def test_span_failure_examples():
    ci = estimate_span_failure(2, 2, 2.0, 100_000, seed=3)
    p = math.exp(-2)
    assert abs(ci.point - p) <= 3 * math.sqrt(p * (1 - p) / 100_000)
    zero = estimate_span_failure(3, 2, 0.0, 500, seed=1)
    assert zero.point == 1.0 and zero.upper == 1.0
    a = estimate_span_failure(4, 2, 5.0, 5000, seed=2)
    b = estimate_span_failure(4, 2, 10.0, 5000, seed=2)
    assert b.point <= a.point


# certificate

def test_exact_group_tv():
    assert exact_group_tv(1, 5, 1.0) == 0.0
    assert exact_group_tv(2, 2, 1.0) == pytest.approx(math.exp(-1) / 2)


def test_certificate_base_only():
    rep = certified_tv_upper(3, 2, 2.0, n0=3)
    assert rep.levels == [] and rep.bound == rep.base_tv == exact_group_tv(3, 2, 2.0)


def test_certificate_large_T():
    rep = certified_tv_upper(3, 2, 50.0, n0=2, samples=10_000, seed=1)
    assert rep.base_tv == pytest.approx(math.exp(-50) / 2, rel=1e-6)
    assert rep.levels[0].failures == 0
    assert rep.bound <= 1e-6 + rep.levels[0].ci_upper


def test_certificate_monotone_in_T():
    cert = Certifier(5, 2, n0=2, samples=5000, seed=4, horizon=80.0)
    bounds = [cert.report(T).bound for T in (5.0, 10.0, 20.0, 40.0, 80.0)]
    assert np.all(np.diff(bounds) <= 0)
    with pytest.raises(ValueError):
        cert.report(81.0)


def test_certificate_bonferroni():
    cert = Certifier(6, 2, n0=2, samples=1000, delta=0.02, seed=1, horizon=10.0)
    assert cert.level_confidence() == pytest.approx(1 - 0.02 / 4)
    rep = cert.report(10.0)
    assert [lv.i for lv in rep.levels] == [3, 4, 5, 6]
    assert rep.bound == pytest.approx(rep.base_tv + sum(lv.ci_upper for lv in rep.levels))


def test_certificate_json_roundtrip():
    rep = certified_tv_upper(4, 3, 6.0, samples=800, seed=2)
    data = json.loads(rep.to_json())
    assert set(data) == {"n", "q", "T", "base_n0", "base_tv", "levels", "bound", "delta"}
    assert set(data["levels"][0]) == {"i", "samples", "failures", "ci_upper"}
    assert CertificateReport.from_json(rep.to_json()) == rep


def test_certificate_cache_shared():
    cache = {}
    a = Certifier(5, 2, samples=500, seed=3, horizon=20.0, cache=cache)
    b = Certifier(4, 2, samples=500, seed=3, horizon=20.0, cache=cache)
    assert len(cache) == 3
    # same span samples; only the Bonferroni level differs between n = 5 and n = 4
    assert [lv.failures for lv in a.report(7.0).levels[:2]] == \
        [lv.failures for lv in b.report(7.0).levels]


def test_certificate_argument_checks():
    with pytest.raises(ValueError):
        Certifier(3, 2, n0=4)
    with pytest.raises(ValueError):
        Certifier(3, 2, delta=1.5)
    with pytest.raises(exact.CapExceeded):
        Certifier(9, 2, n0=8)


def test_certificate_covers_truth_small():
    for seed in range(5):
        rep = certified_tv_upper(4, 2, 5.0, samples=5000, seed=seed)
        assert rep.bound >= exact_group_tv(4, 2, 5.0)


# lower bound

def test_zero_statistic_law():
    # under the exact law at time T the zero count has the distribution implied by the generator
    n, q, T, N = 3, 2, 1.0, 100_000
    stats = last_column_zeros(n, q, T, N, seed=1)
    rm = exact.build_generator(exact.enumerate_space("group", n, q=q))
    mu = exact.propagate(rm, exact.point_mass(rm.size), T)
    X = rm.space.matrices()
    zeros = np.count_nonzero(X[:, : n - 1, n - 1] == 0, axis=1)
    for z in range(n):
        p = mu[zeros == z].sum()
        assert abs(np.mean(stats == z) - p) <= 4 * math.sqrt(p * (1 - p) / N) + 1e-12


def test_zero_statistic_general_q_path():
    n, q, T, N = 3, 3, 0.7, 60_000
    stats = last_column_zeros(n, q, T, N, seed=2)
    rm = exact.build_generator(exact.enumerate_space("group", n, q=q))
    mu = exact.propagate(rm, exact.point_mass(rm.size), T)
    X = rm.space.matrices()
    zeros = np.count_nonzero(X[:, : n - 1, n - 1] == 0, axis=1)
    p = mu[zeros == n - 1].sum()
    assert abs(np.mean(stats == n - 1) - p) <= 4 * math.sqrt(p * (1 - p) / N)


def test_lower_bound_at_zero():
    n, q = 6, 2
    b = tv_lower_statistic(n, q, 0.0, 10_000, seed=1)
    assert b.threshold == n - 1
    target = 1 - q ** -(n - 1)
    assert target - 0.01 <= b.lower <= target


def test_lower_bound_mixed():
    assert tv_lower_statistic(3, 2, 100.0, 10_000, seed=2).lower == 0.0


def test_lower_bound_null():
    n, q = 8, 3
    rng = np.random.default_rng(0)
    stats = rng.binomial(n - 1, 1 / q, size=100_000)
    assert lower_bound_from_stats(stats, n, q).lower == 0.0


def test_lower_below_upper():
    for n, T in [(3, 1.0), (4, 2.0), (6, 4.0), (6, 30.0)]:
        low = tv_lower_statistic(n, 2, T, 10_000, seed=5)
        up = certified_tv_upper(n, 2, T, samples=10_000, seed=5)
        assert low.lower <= up.bound
        if n <= 4:
            assert low.lower <= exact_group_tv(n, 2, T)


# occupation and concentration

def test_occupation_constant():
    from unitriwalk.east import EastParams, east_simulate
    traj = east_simulate(EastParams(4, "binary", p=0.5, T=10.0), seed=1)
    assert occupation_fraction(traj, lambda h: True) == 1.0


def test_occupation_matches_grid():
    from unitriwalk.east import EastParams, east_simulate
    traj = east_simulate(EastParams(5, "qstate", q=3, T=20.0), seed=3)
    pred = lambda h: h[2] != 0  # noqa: E731
    grid = np.arange(0, 20.0, 1e-4) + 5e-5
    riemann = np.mean([pred(traj.state_at(t)) for t in grid[::10]])
    assert abs(occupation_fraction(traj, pred) - riemann) < 1e-3 + 2e-3


def test_occupation_on_inner_chain():
    # P(fraction of time with Z . e_{n-1} != 0 is <= 1/3) decays exponentially in T
    n, q, N = 4, 2, 2000
    probs = []
    for T in (40.0, 80.0, 160.0, 320.0):
        low = 0
        for s in range(N):
            z = inner_chain(np.eye(n, dtype=np.int64)[0], sample_event_log(n, q, T, s).split())
            low += occupation_fraction(z, lambda v: v[n - 2] != 0) <= 1 / 3
        probs.append(low / N)
    assert np.all(np.diff(probs) < 0)
    assert probs[-1] < 0.03


def test_lezaud_examples():
    space = exact.enumerate_space("east-binary", 3, p=0.5)
    r = lezaud_tail_check(space, lambda h: h[-1] == 1, 20.0, 0.3, samples=10_000, seed=1)
    assert r.passed and r.nu_A == pytest.approx(0.5)
    group = exact.enumerate_space("group", 3, q=2)
    r = lezaud_tail_check(group, lambda x: not x.any(), 30.0, 0.2, samples=10_000, seed=2)
    assert r.passed and r.nu_A == pytest.approx(1 / 8)
    r = lezaud_tail_check(space, lambda h: h[-1] == 1, 5.0, 1.0, samples=2000, seed=3)
    assert r.passed and r.empirical == 0.0


def test_lezaud_occupation_mean():
    # started stationary, E[occupation] = t nu(A)
    space = exact.enumerate_space("east-binary", 3, p=0.3)
    rm = exact.build_generator(space)
    nu = exact.stationary(space)
    in_set = (space.states[:, -1] == 1).astype(float)
    rng = np.random.default_rng(0)
    starts = rng.choice(space.size, size=20_000, p=nu)
    occ = certify.simulate_occupation(rm, in_set, starts, 5.0, rng)
    assert abs(occ.mean() / 5.0 - 0.3) < 4 * occ.std() / 5.0 / math.sqrt(20_000)


def test_lezaud_subset_shape():
    space = exact.enumerate_space("east-binary", 3, p=0.3)
    with pytest.raises(ValueError):
        lezaud_tail_check(space, [True, False], 1.0, 0.5, samples=10)
