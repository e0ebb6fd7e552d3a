# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled synchrosqueezing accumulation kernel."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs, sqrt, M_PI

cnp.import_array()


def squeeze_nearest(const double complex[:, ::1] W, const double complex[:, ::1] dW,
                    const double[::1] weights, double gamma, double lo, double step,
                    double complex[:, ::1] out, double scale=1.0, int flip=0):
    """Add ``scale * weight * W`` into the nearest frequency bin of the reassigned Omega.

    Points with ``|W| <= gamma`` are skipped. With ``flip`` set, coefficients
    whose real part is negative are negated first. Returns
    (accumulated_abs, dropped_abs, passing_count).
    """
    cdef Py_ssize_t nt = W.shape[0], na = W.shape[1], nb = out.shape[1]
    cdef Py_ssize_t t, a, k
    cdef double complex w, d, c
    cdef double mag2, omega, pos, g2 = gamma * gamma, amag
    cdef double acc = 0.0, drop = 0.0
    cdef long long passing = 0
    if dW.shape[0] != nt or dW.shape[1] != na or weights.shape[0] != na or out.shape[0] != nt:
        raise ValueError("shape mismatch")
    with nogil:
        for t in range(nt):
            for a in range(na):
                w = W[t, a]
                mag2 = w.real * w.real + w.imag * w.imag
                if mag2 <= g2 or mag2 == 0.0:
                    continue
                passing += 1
                d = dW[t, a]
                # Re(-i d / (2 pi w)) = Im(d conj(w)) / (2 pi |w|^2)
                omega = (d.imag * w.real - d.real * w.imag) / (2.0 * M_PI * mag2)
                c = w * (scale * weights[a])
                if flip and w.real < 0:
                    c = -c
                amag = sqrt(c.real * c.real + c.imag * c.imag)
                pos = floor((omega - lo) / step + 0.5)
                if pos >= 0 and pos < nb:
                    k = <Py_ssize_t>pos
                    out[t, k] = out[t, k] + c
                    acc += amag
                else:
                    drop += amag
    return acc, drop, passing
