import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from perftwin.errors import DegenerateInput, DegenerateSample, EmptyInput, ZeroBandwidth, ZeroMean, ZeroStd
from perftwin.metrics import (
    apply_scaler,
    bootstrap_summary,
    fit_scaler,
    frechet_distance,
    frechet_from_moments,
    load_metrics,
    median_bandwidth,
    mmd_rbf,
    pearson,
    pem,
    pes,
    scaled_pair,
)

clouds = arrays(np.float64, st.tuples(st.integers(2, 12), st.just(2)),
                elements=st.floats(-50, 50, allow_nan=False, width=32))


def _fd_2x2_closed_form(mu1, c1, mu2, c2):
    """tr sqrt(M) = sqrt(tr M + 2 sqrt(det M)) for 2x2 M = C1 C2 (real eigenvalues >= 0)."""
    m = c1 @ c2
    tr_sqrt = math.sqrt(np.trace(m) + 2 * math.sqrt(max(np.linalg.det(m), 0.0)))
    return float(np.sum((mu1 - mu2) ** 2) + np.trace(c1) + np.trace(c2) - 2 * tr_sqrt)


def test_pem_hand_cases():
    obs = np.array([[90.0, 1.0], [110.0, 3.0]])
    pred = np.array([[104.0, 2.5], [104.0, 2.5]])
    np.testing.assert_array_equal(pem(obs, pred), [4.0, 25.0])
    np.testing.assert_array_equal(pem(obs, obs), [0.0, 0.0])
    with pytest.raises(ZeroMean):
        pem(np.array([[1.0, 0.0], [-1.0, 0.0]]), obs)


def test_pes_hand_cases():
    # obs std 2, pred std 3 (Bessel corrected, 2 points)
    obs = np.array([[10.0, 0.0], [10.0 + 2 * math.sqrt(2), 1.0]])
    pred = np.array([[0.0, 0.0], [3 * math.sqrt(2), 5.0]])
    np.testing.assert_allclose(pes(obs, pred), [50.0, 400.0], rtol=1e-14)
    np.testing.assert_array_equal(pes(obs, obs), [0.0, 0.0])
    with pytest.raises(ZeroStd):
        pes(np.ones((3, 2)), obs)
    with pytest.raises(DegenerateSample):
        pes(obs[:1], obs)


def test_pem_pes_exact_integer_case():
    obs = np.array([[2.0, 10.0], [4.0, 20.0], [6.0, 30.0]])  # mean (4, 20), std (2, 10)
    pred = np.array([[3.0, 22.0], [6.0, 22.0], [9.0, 22.0]])  # mean (6, 22), std (3, 0)
    np.testing.assert_array_equal(pem(obs, pred), [50.0, 10.0])
    np.testing.assert_array_equal(pes(obs, pred), [50.0, 100.0])


def test_scaler(rng):
    obs = rng.normal(5, 2, size=(500, 2))
    p = fit_scaler(obs)
    s = apply_scaler(p, obs)
    np.testing.assert_allclose(s.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(s.std(axis=0), 1, rtol=1e-12)
    const = np.c_[np.full(4, 7.0), np.arange(4.0)]
    np.testing.assert_array_equal(apply_scaler(fit_scaler(const), const)[:, 0], 0.0)
    pred = rng.normal(0, 10, size=(50, 2))
    _, sp = scaled_pair(obs, pred)
    np.testing.assert_allclose(sp, (pred - obs.mean(axis=0)) / obs.std(axis=0))


def test_frechet_closed_forms():
    I = np.eye(2)
    assert abs(frechet_from_moments([0, 0], I, [1, 0], I) - 1.0) <= 1e-9
    assert abs(frechet_from_moments([0, 0], 4 * I, [0, 0], I) - 2.0) <= 1e-9
    assert frechet_from_moments([3, 1], I * 0.3, [3, 1], I * 0.3) <= 1e-12


def test_frechet_against_2x2_closed_form(rng):
    for _ in range(200):
        a, b = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        c1, c2 = a @ a.T + 0.01 * np.eye(2), b @ b.T + 0.01 * np.eye(2)
        mu1, mu2 = rng.normal(size=2), rng.normal(size=2)
        got = frechet_from_moments(mu1, c1, mu2, c2)
        assert got == pytest.approx(_fd_2x2_closed_form(mu1, c1, mu2, c2), rel=1e-9, abs=1e-9)


def test_frechet_samples(rng):
    a = rng.normal(size=(50, 2))
    assert frechet_distance(a, a) <= 1e-12
    b = rng.normal(size=(70, 2)) * [1, 3]
    assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), abs=1e-9)
    want = _fd_2x2_closed_form(a.mean(0), np.cov(a.T), b.mean(0), np.cov(b.T))
    assert frechet_distance(a, b) == pytest.approx(want, rel=1e-9)
    with pytest.raises(DegenerateSample):
        frechet_distance(a[:1], b)


def test_mmd_singletons():
    got = mmd_rbf(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
    assert abs(got - (2 - 2 * math.exp(-0.5))) <= 1e-9


def test_mmd_identical_is_exactly_zero(rng):
    a = rng.normal(size=(60, 2))
    assert mmd_rbf(a, a) == 0.0
    assert mmd_rbf(a, a[rng.permutation(60)]) == 0.0


def test_mmd_bandwidth():
    with pytest.raises(ZeroBandwidth):
        mmd_rbf(np.ones((3, 2)), np.ones((2, 2)))
    # more than half of the pairs coincide: median of the non-zero distances
    a = np.zeros((5, 2))
    b = np.array([[1.0, 0.0]])
    assert median_bandwidth(a, b) == 1.0
    with pytest.raises(DegenerateSample):
        median_bandwidth(np.zeros((1, 2)), np.zeros((0, 2)))


def _mmd_double_sum(a, b, sigma):
    k = lambda u, v: math.exp(-float(np.sum((u - v) ** 2)) / (2 * sigma * sigma))
    xx = sum(k(u, v) for u in a for v in a) / len(a) ** 2
    yy = sum(k(u, v) for u in b for v in b) / len(b) ** 2
    xy = sum(k(u, v) for u in a for v in b) / (len(a) * len(b))
    return xx + yy - 2 * xy


@settings(max_examples=60, deadline=None)
@given(clouds, clouds)
def test_mmd_properties(a, b):
    both = np.vstack([a, b])
    if np.all(both == both[0]):
        return
    got = mmd_rbf(a, b)
    assert got >= 0.0
    sigma = median_bandwidth(a, b)
    assert got == pytest.approx(max(_mmd_double_sum(a, b, sigma), 0.0), abs=1e-9)
    assert mmd_rbf(a[::-1], b[::-1]) == got


@settings(max_examples=60, deadline=None)
@given(clouds, clouds)
def test_order_invariance_and_fd_symmetry(a, b):
    assume(np.all(np.abs(a.mean(axis=0)) > 1e-3) and np.all(a.std(axis=0) > 1e-3))
    # the matrix square root is not Lipschitz at zero eigenvalues, so the
    # 1e-9 symmetry bound only holds for non-degenerate covariances
    for c in (np.cov(a.T), np.cov(b.T)):
        w = np.linalg.eigvalsh(c)
        assume(w[0] > 1e-6 * max(w[1], 1e-300))
    np.testing.assert_allclose(pem(a[::-1], b[::-1]), pem(a, b), rtol=1e-12)
    np.testing.assert_allclose(pes(a[::-1], b[::-1]), pes(a, b), rtol=1e-12)
    assert frechet_distance(a, b) == pytest.approx(frechet_distance(b, a), abs=1e-9 * (1 + frechet_distance(a, b)))


def test_affine_invariance_of_scaled_metrics(rng):
    obs = rng.normal(size=(40, 2)) * [5, 0.1] + [100, 1]
    pred = rng.normal(size=(40, 2)) * [6, 0.12] + [103, 1.02]
    m1 = load_metrics(obs, pred)
    scale, shift = np.array([3.0, 0.5]), np.array([-7.0, 2.0])
    so, sp = scaled_pair(obs * scale + shift, pred * scale + shift)
    so0, sp0 = scaled_pair(obs, pred)
    assert frechet_distance(so, sp) == pytest.approx(m1["fd"], rel=1e-9)
    assert mmd_rbf(so, sp) == pytest.approx(m1["mmd"], rel=1e-9)
    np.testing.assert_allclose(so, so0, atol=1e-12)


def test_load_metrics_identity(rng):
    obs = rng.uniform(1, 2, size=(30, 2))
    m = load_metrics(obs, obs)
    assert m["pem_iops"] == m["pem_lat"] == m["pes_iops"] == m["pes_lat"] == 0
    assert m["mmd"] == 0.0 and m["fd"] <= 1e-12


def test_bootstrap_basics():
    s = bootstrap_summary([2.5] * 17, seed=3)
    assert s.mean == 2.5 and s.std == 0.0 and s.rounds == 100
    assert bootstrap_summary([1, 5, 2], seed=9) == bootstrap_summary([1, 5, 2], seed=9)
    with pytest.raises(EmptyInput):
        bootstrap_summary([])


def test_bootstrap_exact_expectation():
    # values {0, 1} over n = 4: round mean ~ Binomial(4, 1/2) / 4 exactly
    values = [0.0, 1.0, 0.0, 1.0]
    n = len(values)
    means = [np.mean(c) for c in itertools.product(values, repeat=n)]
    exp_mean, exp_std = np.mean(means), np.std(means)
    assert exp_mean == 0.5 and exp_std == pytest.approx(0.25)
    s = bootstrap_summary(values, rounds=20000, seed=1)
    assert abs(s.mean - exp_mean) < 4 * exp_std / math.sqrt(20000)
    assert s.std == pytest.approx(exp_std, rel=0.03)


def test_pearson():
    a = np.arange(10.0)
    assert pearson(a, a) == 1.0
    assert pearson(a, -a) == -1.0
    with pytest.raises(DegenerateInput):
        pearson(a, np.ones(10))
    with pytest.raises(DegenerateInput):
        pearson([1.0], [2.0])
