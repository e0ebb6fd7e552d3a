"""Time the compiled squeeze kernel against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. Inputs mimic one default
CWT transform (9600 samples x 204 scales) of a noisy signal.
"""
import argparse
import timeit

import numpy as np

from conceft import _core_py

try:
    from conceft import _core
except ImportError:
    _core = None


def make_inputs(nt, na, seed=0):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((nt, na)) + 1j * rng.standard_normal((nt, na))
    dW = 2j * np.pi * rng.uniform(0, 25, (nt, na)) * W
    return W, dW, rng.uniform(0.1, 1, na)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=9600)
    ap.add_argument("--scales", type=int, default=204)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    W, dW, w = make_inputs(args.samples, args.scales)
    out = np.zeros((args.samples, 1024), dtype=complex)
    kernels = [("numpy", _core_py.squeeze_nearest)]
    if _core is not None:
        kernels.insert(0, ("cython", _core.squeeze_nearest))
    else:
        print("compiled extension not built; timing the fallback only")
    times = {}
    for name, fn in kernels:
        t = min(timeit.repeat(lambda: fn(W, dW, w, 1e-3, 0.0, 20 / 1023, out), number=1, repeat=args.repeat))
        times[name] = t
        print(f"{name:7s} {t * 1e3:9.1f} ms per call  ({W.size / t / 1e6:.1f} M coeff/s)")
    if len(times) == 2:
        print(f"speed-up {times['numpy'] / times['cython']:.1f}x")


if __name__ == "__main__":
    main()
