import numpy as np
import pytest

from conceft import _core_py, _kernels

core = pytest.importorskip("conceft._core")


def _case(seed, nt=300, na=40, nb=128):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((nt, na)) + 1j * rng.standard_normal((nt, na))
    W[rng.random((nt, na)) < 0.1] = 0
    dW = 2j * np.pi * rng.uniform(-2, 25, (nt, na)) * W + 0.1 * rng.standard_normal((nt, na))
    weights = rng.uniform(0.1, 1, na)
    return W, dW, weights, nb


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("flip", [0, 1])
def test_compiled_matches_fallback(seed, flip):
    W, dW, weights, nb = _case(seed)
    outs, tallies = [], []
    for fn in (core.squeeze_nearest, _core_py.squeeze_nearest):
        out = np.zeros((W.shape[0], nb), dtype=complex)
        tallies.append(fn(W, dW, weights, 0.5, 0.0, 20.0 / (nb - 1), out, 0.25, flip))
        outs.append(out)
    np.testing.assert_allclose(outs[0], outs[1], rtol=1e-12, atol=1e-14)
    assert tallies[0][2] == tallies[1][2]
    np.testing.assert_allclose(tallies[0][:2], tallies[1][:2], rtol=1e-12)


def test_backend_selected():
    assert _kernels.BACKEND in ("cython", "python")
