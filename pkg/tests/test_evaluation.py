import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from conceft.evaluation import (EvaluationError, RenderSpec, closed_form_c, exact_c, cap_ratio_moments,
                                normalize_tvps, ot_distance, omega_spread_check, render, render_levels,
                                slice_ot)
from conceft.squeeze import TvPS


def lp_transport(p, q, x):
    """Minimum-cost transport between two unit-mass histograms, as a linear program."""
    n = len(p)
    cost = np.abs(x[:, None] - x[None, :]).ravel()
    A = np.zeros((2 * n, n * n))
    for i in range(n):
        A[i, i * n:(i + 1) * n] = 1
        A[n + i, i::n] = 1
    res = linprog(cost, A_eq=A, b_eq=np.concatenate([p, q]), bounds=(0, None), method="highs")
    return res.fun


def test_ot_matches_lp_oracle():
    rng = np.random.default_rng(7)
    x = np.arange(12) * 0.5
    for _ in range(100):
        p, q = rng.random(12), rng.random(12)
        p /= p.sum()
        q /= q.sum()
        assert abs(slice_ot(p, q, 0.5) - lp_transport(p, q, x)) < 1e-9


def test_ot_spikes_distance():
    p = np.zeros((1, 20))
    q = np.zeros((1, 20))
    p[0, 3] = 2.0
    q[0, 11] = 5.0
    assert ot_distance(p, q).mean == pytest.approx(8.0)
    fg = np.linspace(0, 19 * 0.25, 20)
    r = ot_distance(TvPS(p, fg, np.zeros(1)), TvPS(q, fg, np.zeros(1)))
    assert r.mean == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_ot_metric_properties(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.random((3, 16)) + 1e-3 for _ in range(3))
    dab, dba = ot_distance(a, b).per_time, ot_distance(b, a).per_time
    assert np.allclose(dab, dba, atol=1e-12)
    assert np.all(dab <= ot_distance(a, c).per_time + ot_distance(c, b).per_time + 1e-12)
    assert np.allclose(ot_distance(a, a).per_time, 0)
    # scale invariance per slice
    assert np.allclose(ot_distance(3 * a, b).per_time, dab)


def test_ot_mask_skip_and_alpha():
    a = np.ones((4, 5))
    b = np.ones((4, 5))
    b[1] = 0
    r = ot_distance(a, b)
    assert r.skipped_slices == 1 and r.per_time.size == 3
    r = ot_distance(a, b, time_mask=np.array([True, False, True, False]))
    assert r.per_time.size == 2
    b2 = np.ones((2, 5))
    b2[1] *= 3
    r = ot_distance(np.ones((2, 5)), b2, alpha=0.5)
    # after global rescaling both slices carry mass 10 vs 5 and 15
    assert r.per_time == pytest.approx([0.5 * 5 / 15, 0.5 * 5 / 25])
    with pytest.raises(EvaluationError):
        ot_distance(a, b, alpha=2)
    with pytest.raises(EvaluationError):
        ot_distance(a, np.ones((4, 6)))


def test_normalize_tvps():
    P = np.random.default_rng(0).random((10, 8))
    assert normalize_tvps(P, 5.0).mean() == pytest.approx(5.0)
    with pytest.raises(EvaluationError):
        normalize_tvps(np.zeros((2, 2)))


def test_render_levels_and_percentile():
    P = np.random.default_rng(1).exponential(size=(50, 30))
    R, q = render_levels(P, RenderSpec(theta=None, q_mode="quantile", q=99.8))
    # linear-interpolation percentile oracle
    s = np.sort(P.ravel())
    pos = 0.998 * (s.size - 1)
    lo = int(np.floor(pos))
    assert q == pytest.approx(s[lo] + (pos - lo) * (s[lo + 1] - s[lo]), rel=1e-12)
    assert R.max() == pytest.approx(np.log1p(q))
    img = render(P, RenderSpec(theta=None, q_mode="quantile", q=99.8))
    assert img.size == (50, 30) and img.mode == "L"
    arr = np.asarray(img)
    # frequency increases upward: the last frequency row of P is the top image row
    assert np.array_equal(arr[0], np.rint(255 * (1 - R[:, -1] / np.log1p(q))).astype(np.uint8))
    with pytest.raises(EvaluationError):
        RenderSpec(q_mode="quantile", q=150)


def test_render_excluded_columns_blank():
    P = np.ones((6, 4))
    mask = np.array([False, True, True, True, True, False])
    arr = np.asarray(render(P, RenderSpec(excluded=True), mask))
    assert np.all(arr[:, 0] == 255) and np.all(arr[:, -1] == 255)
    assert np.all(arr[:, 1] < 255)


def test_cap_ratio_parallel_and_orthogonal():
    v = np.array([0.0, 0.0, 2.0])
    # v is normalized inside, so u = v gives r.u / r.v_hat = ||v|| for every sample
    r = cap_ratio_moments(v, v, 0.2, M=20000, seed=1)
    assert r["mean"][0] == pytest.approx(2.0, abs=1e-12)
    assert r["second_moment"] == pytest.approx(4.0, abs=1e-12)
    assert r["mean_dev_se"] == 0.0
    u = np.array([1.0, 0.0, 0.0])
    r = cap_ratio_moments(u, v, 0.2, M=200000, seed=2)
    # orthogonal u: mean zero, second moment c/(J-1) with the exact constant
    assert r["mean_dev_se"] < 4
    assert r["second_moment_dev_se"]["exact"] < 4


def test_c_constants_sanity():
    # exact c is a conditional expectation, so it is finite and positive; for kappa -> 1 it vanishes
    assert exact_c(3, 0.2) == pytest.approx(4.0, rel=1e-9)   # J=3: (1/kappa - 2 + kappa) / (1 - kappa)
    assert exact_c(5, 0.999) < 1e-2
    assert closed_form_c(3, 0.2) > 0


def test_omega_spread_noiseless():
    Q = np.array([1.0, 2.0, 2.0])
    r = omega_spread_check(Q, np.zeros(3), np.zeros(3), 5.0, 0.3, 0.2, M=5000, seed=0)
    assert r["variance"] < 1e-20
    assert r["bias_error"] < 1e-12
    with pytest.raises(EvaluationError):
        omega_spread_check(Q, np.ones(3), np.zeros(3), 5.0, 0.0, 0.2)
