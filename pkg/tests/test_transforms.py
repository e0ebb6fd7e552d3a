import numpy as np
import pytest

from conceft.reference import hermite_windows, morse_wavelets
from conceft.signal_model import SampledSignal
from conceft.transforms import (AxisKind, ScaleGrid, TFMatrix, TransformError, cwt, d_transform,
                                default_stft_grid, stft)

MORSE = morse_wavelets(30, 9, 2)
HERM = hermite_windows(3, 5 / 16)


def _direct_cwt(x, rate, fam, k, a, b_idx):
    """Quadrature of <f, psi^{(a,b)}> with psi built from its Fourier profile."""
    n = len(x)
    t = (np.arange(n) - b_idx) / rate
    xi = np.arange(1, 200001) / 200000 * 40.0
    prof = fam.profile(a * xi, [k])[0]
    # psi^{(a,b)}(t) conj: a^{1/2} int psi_hat(a xi) e^{i 2 pi xi (t - b)} d xi, conjugated
    kern = (np.sqrt(a) * (prof[None, :] * np.exp(2j * np.pi * np.outer(-t, xi)))).sum(axis=1) * (xi[1] - xi[0])
    return (x * kern).sum() / rate


def test_scale_grid():
    g = ScaleGrid.from_band(0.5, 40, 32)
    assert g.frequencies.max() == pytest.approx(40)
    assert g.frequencies.min() <= 0.5
    r = g.scales[1:] / g.scales[:-1]
    assert np.abs(r - g.ratio).max() < 1e-12
    with pytest.raises(TransformError):
        ScaleGrid(np.array([1.0, 0.5]), 2.0)
    ref = g.refined()
    assert np.allclose(ref.scales[::2], g.scales, rtol=1e-12)


def test_cwt_matches_quadrature_oracle():
    rate, n = 32.0, 512
    t = np.arange(n) / rate
    x = np.cos(2 * np.pi * 3.0 * t) * np.exp(-((t - 8) / 3) ** 2)
    s = SampledSignal(x, rate)
    g = ScaleGrid.from_band(2.7, 3.3, 8)
    W = cwt(s, MORSE, 0, g)
    for i in (0, len(g.scales) // 2, len(g.scales) - 1):
        for b in (200, 256, 300):
            ref = _direct_cwt(x, rate, MORSE, 0, g.scales[i], b)
            assert abs(W.values[b, i] - ref) < 1e-6 * abs(ref) + 1e-9


def test_cwt_tone_analytic_form(tone):
    # W(a, b) = 1/2 sqrt(a) psi_hat(a xi0) e^{i 2 pi xi0 b} for an (effectively) endless tone
    s = tone(5.0, duration=60.0)
    g = ScaleGrid.from_band(3, 8, 16)
    W = cwt(s, MORSE, 0, g)
    b = 4800
    expected = 0.5 * np.sqrt(g.scales) * MORSE.profile(g.scales * 5.0, [0])[0] * np.exp(2j * np.pi * 5 * s.times[b])
    np.testing.assert_allclose(W.values[b], expected, rtol=0, atol=1e-6 * np.abs(expected).max())


def test_cwt_support_decay(tone):
    s = tone(5.0, duration=60.0)
    g = ScaleGrid.from_band(2, 40, 16)
    W = np.abs(cwt(s, MORSE, 0, g).values[2400:7200])
    far = np.abs(g.scales * 5.0 - 1) > 0.6
    assert W[:, far].max() < 1e-3 * W.max()


def test_cwt_linearity_and_combination(tone):
    s1, s2 = tone(5.0), tone(7.0, amp=0.3)
    g = ScaleGrid.from_band(1, 20, 8)
    W1, W2 = cwt(s1, MORSE, 0, g), cwt(s2, MORSE, 0, g)
    W12 = cwt(SampledSignal(s1.samples + s2.samples, 160.0), MORSE, 0, g)
    assert np.abs(W12.values - (W1 + W2).values).max() < 1e-10
    W3 = cwt(SampledSignal(3 * s1.samples, 160.0), MORSE, 0, g)
    assert np.abs(W3.values - 3 * W1.values).max() < 1e-12
    r = np.array([0.6, -0.8])
    comb = cwt(s1, MORSE, r, g).values
    parts = r[0] * W1.values + r[1] * cwt(s1, MORSE, 1, g).values
    assert np.abs(comb - parts).max() < 1e-10


def test_cwt_zero_signal_and_constant():
    g = ScaleGrid.from_band(1, 20, 8)
    z = SampledSignal(np.zeros(800), 160.0)
    assert np.all(cwt(z, MORSE, 0, g).values == 0)
    # zero padding turns a constant into a boxcar, so check away from the edges
    c = SampledSignal(np.full(9600, 2.5), 160.0)
    dW = d_transform(c, MORSE, 0, g)
    inner = dW.interior_mask(3.0)
    assert np.abs(dW.values[inner]).max() < 1e-10


def test_cwt_rows_above_nyquist_flagged():
    g = ScaleGrid.from_band(1, 100, 4)
    s = SampledSignal(np.random.default_rng(0).standard_normal(400), 160.0)
    W = cwt(s, MORSE, 0, g)
    assert W.flagged_rows
    assert np.all(W.values[:, list(W.flagged_rows)] == 0)


def test_grid_refinement_stability(tone):
    s = tone(5.0)
    g = ScaleGrid.from_band(2, 10, 8)
    a = cwt(s, MORSE, 0, g).values
    b = cwt(s, MORSE, 0, g.refined()).values[:, ::2]
    assert np.abs(a - b).max() < 1e-12


def test_cwt_derivative_ratio_and_fd(tone):
    s = tone(5.0)
    g = ScaleGrid.from_band(2, 10, 16)
    W = cwt(s, MORSE, 0, g).values
    dW = d_transform(s, MORSE, 0, g).values
    i = np.argmax(np.abs(W[800]))
    assert (-1j * dW[800, i] / (2 * np.pi * W[800, i])).real == pytest.approx(5.0, rel=1e-2)
    # smooth toy signal: central difference in b
    # slow toy signal so the O(dt^2) central-difference error stays far below 1e-3
    t = np.arange(4800) / 160.0
    x = np.exp(-((t - 15) / 5) ** 2) * np.cos(2 * np.pi * (0.8 * t + 0.01 * t ** 2))
    sm = SampledSignal(x, 160.0)
    g = ScaleGrid.from_band(0.6, 1.6, 16)
    W = cwt(sm, MORSE, 0, g).values
    dW = d_transform(sm, MORSE, 0, g).values
    fd = (W[2:] - W[:-2]) * 80.0
    mid = dW[1:-1]
    sl = slice(800, 4000)
    assert (np.abs(fd[sl] - mid[sl]).max() / np.abs(mid[sl]).max()) < 1e-3


def test_stft_quadrature_oracle():
    rate, n = 64.0, 512
    t = np.arange(n) / rate
    x = np.cos(2 * np.pi * 6.0 * t) + 0.3 * np.sin(2 * np.pi * 11.0 * t)
    s = SampledSignal(x, rate)
    fam = hermite_windows(2, 0.25)
    grid = np.linspace(0, 16, 33)
    for j in (0, 1):
        V = stft(s, fam, j, grid).values
        for tn in (200, 256, 300):
            for k in (4, 12, 22):
                win = fam.window(t[tn] - t, [j])[0]
                ref = (x * win * np.exp(2j * np.pi * grid[k] * (t[tn] - t))).sum() / rate
                assert abs(V[tn, k] - ref) < 1e-10


def test_stft_peak_and_ratio(tone):
    s = tone(5.0)
    grid = default_stft_grid()
    V = stft(s, HERM, 0, grid).values
    dV = d_transform(s, HERM, 0, grid).values
    for tn in (400, 800, 1200):
        k = np.argmax(np.abs(V[tn]))
        assert k == np.argmin(np.abs(grid - 5.0))
        assert (-1j * dV[tn, k] / (2 * np.pi * V[tn, k])).real == pytest.approx(5.0, rel=1e-2)


def test_stft_linearity_and_errors(tone):
    s1, s2 = tone(5.0), tone(3.0)
    grid = np.linspace(0, 10, 21)
    V = stft(SampledSignal(s1.samples + s2.samples, 160.0), HERM, 0, grid).values
    assert np.abs(V - stft(s1, HERM, 0, grid).values - stft(s2, HERM, 0, grid).values).max() < 1e-10
    assert np.all(stft(SampledSignal(np.zeros(1600), 160.0), HERM, 0, grid).values == 0)
    with pytest.raises(TransformError):
        stft(SampledSignal(np.zeros(50), 160.0), HERM, 0, grid)
    with pytest.raises(TransformError):
        stft(s1, HERM, 0, np.array([0.0, 100.0]))
    with pytest.raises(TransformError):
        cwt(s1, HERM, 0, ScaleGrid.from_band(1, 2, 4))


def test_tfmatrix_io(tmp_path, tone):
    g = ScaleGrid.from_band(2, 10, 4)
    W = cwt(tone(5.0, duration=1.0), MORSE, 0, g)
    W.write_bin(tmp_path / "w.cft2")
    R = TFMatrix.read_bin(tmp_path / "w.cft2")
    assert np.array_equal(R.values, W.values) and R.axis_kind is AxisKind.SCALE
    assert (tmp_path / "w.cft2").read_bytes()[:4] == b"CFT2"
    W.write_csv(tmp_path / "w.csv")
    data = np.loadtxt(tmp_path / "w.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 1] + 1j * data[:, 2], W.values[:, 0])


def test_interior_mask(tone):
    g = ScaleGrid.from_band(1, 10, 4)
    W = cwt(tone(5.0), MORSE, 0, g)
    m = W.interior_mask()
    # low frequencies (large scales) lose more of the edges
    assert m[:, -1].sum() < m[:, 0].sum()
    assert not m[0].any() and not m[-1].any()
