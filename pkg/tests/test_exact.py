import io
import math

import numpy as np
import pytest
from scipy.linalg import expm

from unitriwalk import exact
from unitriwalk.exact import (CapExceeded, NotLumpable, build_generator, column_partition,
                              enumerate_space, exact_tmix, gap_table, lump_check, point_mass,
                              propagate, psi_partition, spectral_gap, stationarity_residual,
                              stationary, tv_curve, tv_distance)

ALL_SMALL = [("group", 2, 2, None), ("group", 3, 2, None), ("group", 2, 5, None),
             ("group", 3, 3, None), ("group", 4, 2, None),
             ("east-binary", 4, None, 0.3), ("east-binary", 6, None, 0.5),
             ("east-q", 4, 3, None), ("east-q", 3, 5, None)]


def chain(model, n, q=None, p=None):
    space = enumerate_space(model, n, q=q, p=p)
    return build_generator(space), stationary(space)


def test_state_counts():
    assert enumerate_space("group", 2, q=2).size == 2
    assert enumerate_space("group", 3, q=2).size == 8
    assert enumerate_space("east-q", 4, q=3).size == 27


def test_cap():
    with pytest.raises(CapExceeded):
        enumerate_space("group", 7, q=2)
    with pytest.raises(CapExceeded):
        enumerate_space("group", 4, q=3, cap=100)
    assert enumerate_space("group", 4, q=3, cap=10**6).size == 729


def test_bad_model():
    with pytest.raises(ValueError):
        enumerate_space("torus", 3, q=2)
    with pytest.raises(ValueError):
        enumerate_space("east-binary", 3)


@pytest.mark.parametrize("q", [2, 3, 5, 7])
def test_g2_rates(q):
    rm, _ = chain("group", 2, q=q)
    L = rm.dense()
    off = L[~np.eye(q, dtype=bool)]
    assert np.allclose(off, 1 / q)
    assert np.allclose(-np.diag(L), (q - 1) / q)


def test_binary_east_n2_rates():
    rm, _ = chain("east-binary", 2, p=0.3)
    assert rm.dense()[0, 1] == pytest.approx(0.3)
    assert rm.dense()[1, 0] == pytest.approx(0.7)


def test_group_generator_by_hand():
    # independent construction for G_3(2) from explicit matrix products
    rm, _ = chain("group", 3, q=2)
    space = rm.space
    L = np.zeros((8, 8))
    for x, X in enumerate(space.matrices()):
        for i in (1, 2):
            Y = X.copy()
            Y[i - 1] = (Y[i - 1] + Y[i]) % 2
            iu = np.triu_indices(3, 1)
            y = space.index(Y[iu])
            L[x, y] += 0.5
            L[x, x] -= 0.5
    assert np.array_equal(rm.dense(), L)


@pytest.mark.parametrize("model,n,q,p", ALL_SMALL)
def test_generator_valid(model, n, q, p):
    rm, pi = chain(model, n, q, p)
    L = rm.dense()
    assert np.abs(L.sum(axis=1)).max() < 1e-12
    assert (L - np.diag(np.diag(L)) >= 0).all()
    res = stationarity_residual(rm, pi)
    assert res.stationarity < 1e-12 and res.reversibility < 1e-12


def test_group_stationary_is_uniform():
    _, pi = chain("group", 3, q=3)
    assert np.allclose(pi, 1 / 27)


def test_perturbed_measure_detected():
    rm, pi = chain("group", 3, q=2)
    bad = pi.copy()
    bad[0] += 0.01
    bad /= bad.sum()
    assert stationarity_residual(rm, bad).stationarity > 1e-4


def test_tv_at_zero():
    for n, q in [(2, 3), (3, 2), (3, 3)]:
        rm, pi = chain("group", n, q=q)
        assert tv_curve(rm, point_mass(rm.size), [0.0])[0] == pytest.approx(1 - q ** -(n * (n - 1) // 2))


@pytest.mark.parametrize("q", [2, 3, 5])
def test_g2_closed_form(q):
    rm, pi = chain("group", 2, q=q)
    ts = [0.1, 0.5, 1.0, 3.0, 10.0]
    curve = tv_curve(rm, point_mass(q), ts, pi)
    assert np.allclose(curve, np.exp(-np.array(ts)) * (1 - 1 / q), rtol=0, atol=1e-13)


def test_propagate_matches_expm():
    rm, pi = chain("east-binary", 5, p=0.4)
    mu0 = point_mass(rm.size)
    for t in (0.3, 2.0, 7.5):
        oracle = expm(rm.dense().T * t) @ mu0
        assert np.abs(propagate(rm, mu0, t) - oracle).max() < 1e-12


def test_truncation_stable():
    rm, pi = chain("group", 3, q=3)
    ts = [0.5, 2.0, 8.0]
    a = tv_curve(rm, point_mass(rm.size), ts, pi)
    b = tv_curve(rm, point_mass(rm.size), ts, pi, extra_terms=10)
    assert np.abs(np.array(a) - np.array(b)).max() <= 1e-10


def test_tv_monotone_and_mixed():
    rm, pi = chain("group", 3, q=2)
    ts = np.linspace(0, 30, 61)
    curve = np.array(tv_curve(rm, point_mass(rm.size), ts, pi))
    assert np.all(np.diff(curve) <= 1e-14)
    assert tv_curve(rm, point_mass(rm.size), [200.0], pi)[0] < 1e-10


def test_tmix_closed_forms():
    rm, pi = chain("group", 2, q=2)
    assert exact_tmix(rm, pi, tol=1e-9) == pytest.approx(1.0, abs=1e-7)
    rm, pi = chain("group", 2, q=3)
    assert exact_tmix(rm, pi, tol=1e-9) == pytest.approx(1 + math.log(4 / 3), abs=1e-7)


def test_tmix_monotone_in_eps():
    rm, pi = chain("group", 3, q=2)
    assert exact_tmix(rm, pi, eps=0.1) >= exact_tmix(rm, pi, eps=0.3)


def test_discrete_curve_matches_matrix_power():
    rm, pi = chain("group", 3, q=2)
    P = np.eye(rm.size) + rm.dense() / 2
    mu = np.linalg.matrix_power(P.T, 7) @ point_mass(rm.size)
    assert exact.discrete_tv_curve(rm, point_mass(rm.size), [7], 2, pi)[0] == \
        pytest.approx(tv_distance(mu, pi), abs=1e-13)


@pytest.mark.parametrize("q", [2, 3, 5, 7])
def test_gap_two_state_cases(q):
    rm, pi = chain("group", 2, q=q)
    assert spectral_gap(rm, pi).gap == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_gap_binary_east_n2(p):
    rm, pi = chain("east-binary", 2, p=p)
    assert spectral_gap(rm, pi).gap == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("model,n,q,p", [c for c in ALL_SMALL if c[1] > 1])
def test_relaxation_below_mixing(model, n, q, p):
    rm, pi = chain(model, n, q, p)
    assert 1 / spectral_gap(rm, pi).gap <= exact_tmix(rm, pi)


def test_iterative_gap_matches_dense(monkeypatch):
    rm, pi = chain("east-q", 7, q=3)
    dense = spectral_gap(rm, pi)
    monkeypatch.setattr(exact, "DENSE_LIMIT", 10)
    it = spectral_gap(rm, pi)
    assert it.method == "iterative" and dense.method == "dense-eigen"
    assert it.gap == pytest.approx(dense.gap, abs=1e-9)
    assert it.residual < 1e-8


def test_gap_needs_reversibility():
    rm, pi = chain("group", 3, q=2)
    with pytest.raises(exact.NotReversible):
        spectral_gap(rm, np.r_[pi[:-1] * 1.01, 0.0] / (pi[:-1] * 1.01).sum())


@pytest.mark.parametrize("q", [2, 3, 5])
def test_psi_lumping(q):
    for n in range(2, 6):
        rm, _ = chain("east-q", n, q=q)
        lumped = lump_check(rm, psi_partition(rm.space))
        target = chain("east-binary", n, p=(q - 1) / q)[0].dense()
        assert np.abs(lumped - target).max() <= 1e-12


@pytest.mark.parametrize("q", [2, 3])
def test_column_lumping(q):
    for n in range(2, 5):
        rm, _ = chain("group", n, q=q)
        for j in range(1, n + 1):
            lumped = lump_check(rm, column_partition(rm.space, j))
            target = chain("east-q", j, q=q)[0].dense()
            assert np.abs(lumped - target).max() <= 1e-12


def test_random_partition_not_lumpable():
    rm, _ = chain("group", 3, q=2)
    with pytest.raises(NotLumpable) as err:
        lump_check(rm, [0, 1, 1, 0, 0, 0, 1, 1])
    assert "class" in str(err.value)


def test_lumped_gap_agrees_with_direct():
    rm, _ = chain("group", 4, q=2)
    lumped = lump_check(rm, column_partition(rm.space, 4))
    east = enumerate_space("east-q", 4, q=2)
    direct = spectral_gap(build_generator(east), stationary(east)).gap
    w = np.sort(np.linalg.eigvals(-lumped).real)
    assert abs(w[1] - direct) < 1e-10


def test_gap_table():
    rows = gap_table("qstate", 3, range(2, 7))
    assert rows[0].result.gap == pytest.approx(1.0, abs=1e-10)
    assert all(r.result.gap > 0 for r in rows)
    assert [r.running_inf for r in rows] == list(np.minimum.accumulate([r.result.gap for r in rows]))


def test_binary_gap_nonincreasing():
    rows = gap_table("binary", 0.5, range(2, 13))
    gaps = np.array([r.result.gap for r in rows])
    assert np.all(np.diff(gaps) <= 1e-10)


def test_summary_csv():
    rows = exact.summarize("group", 3, q=2)
    buf = io.StringIO()
    exact.write_csv(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "model,n,q_or_p,quantity,value,residual"
    quantities = {r.quantity: r.value for r in rows}
    assert quantities["states"] == 8
    assert quantities["gap"] == pytest.approx(1 - 1 / math.sqrt(2), abs=1e-12)
