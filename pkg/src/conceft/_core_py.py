"""Numpy fallback for the compiled kernels in ``_core``."""
import numpy as np


def squeeze_nearest(W, dW, weights, gamma, lo, step, out, scale=1.0, flip=0):
    """Same contract as the compiled ``squeeze_nearest``."""
    W = np.asarray(W)
    dW = np.asarray(dW)
    nt, na = W.shape
    nb = out.shape[1]
    if dW.shape != W.shape or len(weights) != na or out.shape[0] != nt:
        raise ValueError("shape mismatch")
    mag2 = W.real ** 2 + W.imag ** 2
    keep = (mag2 > gamma * gamma) & (mag2 != 0)
    ti, ai = np.nonzero(keep)
    w = W[ti, ai]
    d = dW[ti, ai]
    m2 = mag2[ti, ai]
    omega = (d.imag * w.real - d.real * w.imag) / (2.0 * np.pi * m2)
    c = w * (scale * np.asarray(weights)[ai])
    if flip:
        c = np.where(w.real < 0, -c, c)
    amag = np.abs(c)
    pos = np.floor((omega - lo) / step + 0.5)
    inside = (pos >= 0) & (pos < nb)
    flat = ti[inside] * nb + pos[inside].astype(np.int64)
    ci = c[inside]
    view = out.reshape(-1)
    view.real += np.bincount(flat, weights=ci.real, minlength=nt * nb)
    view.imag += np.bincount(flat, weights=ci.imag, minlength=nt * nb)
    return float(amag[inside].sum()), float(amag[~inside].sum()), int(ti.size)
