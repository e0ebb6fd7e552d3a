"""STFT and CWT against reference tapers, computed row by row with FFTs.

All matrices are laid out (time x axis). Times and scales are in seconds,
frequencies in Hz. Signals are zero-padded to a power of two at least twice
their length, so the transforms are linear convolutions, not circular ones.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import fft as sfft

from .formats import pack_tf, unpack_tf, atomic_write_bytes
from .reference import FamilyKind, ReferenceFamily
from .signal_model import SampledSignal

log = logging.getLogger(__name__)


class TransformError(ValueError):
    pass


class AxisKind(enum.IntEnum):
    FREQUENCY = 0
    SCALE = 1


@dataclass(frozen=True)
class ScaleGrid:
    """Geometric scale grid in seconds (pseudo-frequency = 1 / scale)."""
    scales: np.ndarray
    ratio: float

    def __post_init__(self):
        a = np.asarray(self.scales, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise TransformError("scale grid needs at least two scales")
        if np.any(a <= 0) or np.any(np.diff(a) <= 0):
            raise TransformError("scales must be positive and strictly increasing")
        r = a[1:] / a[:-1]
        if np.abs(r / self.ratio - 1).max() > 1e-12:
            raise TransformError("scale grid is not geometric")
        a.setflags(write=False)
        object.__setattr__(self, "scales", a)

    @classmethod
    def from_band(cls, f_lo: float = 0.5, f_hi: float = 40.0, voices: int = 32) -> "ScaleGrid":
        """Scales covering pseudo-frequencies [f_lo, f_hi] with ``voices`` per octave."""
        if not 0 < f_lo < f_hi:
            raise TransformError("need 0 < f_lo < f_hi")
        n = int(np.ceil(voices * np.log2(f_hi / f_lo))) + 1
        ratio = 2.0 ** (1.0 / voices)
        return cls((1.0 / f_hi) * ratio ** np.arange(n), ratio)

    @property
    def frequencies(self) -> np.ndarray:
        return 1.0 / self.scales

    @property
    def log_step(self) -> float:
        return float(np.log(self.ratio))

    def refined(self) -> "ScaleGrid":
        """Twice the voices; every original scale is kept."""
        r = np.sqrt(self.ratio)
        a = self.scales[0] * r ** np.arange(2 * len(self.scales) - 1)
        return ScaleGrid(a, r)


@dataclass(frozen=True)
class TFMatrix:
    values: np.ndarray
    time_grid: np.ndarray
    axis_grid: np.ndarray
    axis_kind: AxisKind
    # per-axis-row effective half-width in seconds, for the boundary mask
    halfwidth: Optional[np.ndarray] = None
    flagged_rows: tuple = ()

    def __post_init__(self):
        v = self.values
        if v.shape != (len(self.time_grid), len(self.axis_grid)):
            raise TransformError(f"matrix shape {v.shape} does not match grids")
        if not np.all(np.isfinite(v)):
            raise TransformError("non-finite transform values")

    def interior_mask(self, factor: float = 1.0) -> np.ndarray:
        """True where the taper, widened by ``factor``, stays inside the signal."""
        t = self.time_grid
        if self.halfwidth is None:
            return np.ones(self.values.shape, dtype=bool)
        hw = factor * self.halfwidth[None, :]
        return (t[:, None] - t[0] >= hw) & (t[-1] - t[:, None] >= hw)

    def __add__(self, other: "TFMatrix") -> "TFMatrix":
        return TFMatrix(self.values + other.values, self.time_grid, self.axis_grid,
                        self.axis_kind, self.halfwidth, self.flagged_rows)

    def write_bin(self, path):
        atomic_write_bytes(path, pack_tf(self.values, self.time_grid, self.axis_grid,
                                         int(self.axis_kind)))

    @classmethod
    def read_bin(cls, path) -> "TFMatrix":
        with open(path, "rb") as fh:
            v, tg, ag, code = unpack_tf(fh.read())
        return cls(v, tg, ag, AxisKind(code))

    def write_csv(self, path):
        from .formats import atomic_write_text
        import io
        buf = io.StringIO()
        cols = ["t"]
        for x in self.axis_grid:
            cols += [f"re_{x:.10g}", f"im_{x:.10g}"]
        buf.write(",".join(cols) + "\n")
        inter = np.empty((self.values.shape[0], 2 * self.values.shape[1]))
        inter[:, 0::2] = self.values.real
        inter[:, 1::2] = self.values.imag
        np.savetxt(buf, np.column_stack([self.time_grid, inter]), delimiter=",", fmt="%.17g")
        atomic_write_text(path, buf.getvalue())


def _padded_length(n: int) -> int:
    return sfft.next_fast_len(2 * n)


Weights = Union[int, Sequence[float], np.ndarray]


def _order_weights(family: ReferenceFamily, which: Weights) -> np.ndarray:
    """Taper index or coefficient vector -> coefficient vector of length J."""
    if np.isscalar(which):
        k = int(which)
        if not 0 <= k < family.J:
            raise TransformError(f"taper index {k} outside family of size {family.J}")
        w = np.zeros(family.J)
        w[k] = 1.0
        return w
    w = np.asarray(which, dtype=float)
    if w.shape != (family.J,):
        raise TransformError("coefficient vector length must equal family size")
    return w


def _cwt_rows(s: SampledSignal, family: ReferenceFamily, which: Weights, grid: ScaleGrid,
              derivative: bool, hop: int = 1):
    if family.kind is not FamilyKind.MORSE:
        raise TransformError("cwt needs a Morse (wavelet) family")
    w = _order_weights(family, which)
    n = len(s.samples)
    npad = _padded_length(n)
    F = sfft.rfft(s.samples, npad)
    xi = np.arange(len(F)) * (s.rate_hz / npad)
    nyq = s.rate_hz / 2
    hw = family.time_halfwidth() * grid.scales
    out = np.zeros((len(grid.scales), (n + hop - 1) // hop), dtype=complex)
    flagged = []
    orders = [k for k in range(family.J) if w[k] != 0]
    spec = np.zeros(npad, dtype=complex)
    for i, a in enumerate(grid.scales):
        if 1.0 / a > nyq:
            flagged.append(i)
            continue
        prof = np.sqrt(a) * np.tensordot(w[orders], family.profile(a * xi, orders), axes=1)
        if derivative:
            prof = prof * (2j * np.pi * xi)
        spec[:len(F)] = F * prof
        out[i] = sfft.ifft(spec)[:n:hop]
    if flagged:
        log.warning("cwt: %d scale rows above Nyquist zeroed", len(flagged))
    tg = s.times[::hop]
    return TFMatrix(np.ascontiguousarray(out.T), tg, grid.scales.copy(), AxisKind.SCALE,
                    hw, tuple(flagged))


def cwt(s: SampledSignal, family: ReferenceFamily, which: Weights, grid: ScaleGrid,
        hop: int = 1) -> TFMatrix:
    """Analytic CWT ``W(a, b) = int f^(xi) sqrt(a) psi^(a xi) e^{i2 pi xi b} dxi``.

    ``which`` is a taper index or a coefficient vector over the family, in which
    case the transform of the combined wavelet is returned.
    """
    return _cwt_rows(s, family, which, grid, False, hop)


def _stft_rows(s: SampledSignal, family: ReferenceFamily, which: Weights, freq_grid,
               derivative: bool, hop: int = 1):
    if family.kind is not FamilyKind.HERMITE:
        raise TransformError("stft needs a Hermite (window) family")
    w = _order_weights(family, which)
    freq_grid = np.asarray(freq_grid, dtype=float)
    n = len(s.samples)
    if family.grid[-1] - family.grid[0] > s.duration:
        raise TransformError("taper is longer than the signal")
    if np.any(np.abs(freq_grid) > s.rate_hz / 2):
        raise TransformError("frequency grid exceeds Nyquist")
    npad = _padded_length(n)
    dt = s.dt
    m = int(np.ceil(family.grid[-1] / dt))
    u = np.arange(-m, m + 1) * dt
    win = np.tensordot(w, family.window(u), axes=1)
    dwin = np.tensordot(w, family.window(u, derivative=True), axes=1) if derivative else None
    F = sfft.fft(s.samples, npad)
    out = np.empty((len(freq_grid), (n + hop - 1) // hop), dtype=complex)
    buf = np.zeros(npad, dtype=complex)
    for i, eta in enumerate(freq_grid):
        mod = np.exp(2j * np.pi * eta * u)
        g = win * mod
        if derivative:
            g = dwin * mod + 2j * np.pi * eta * g
        buf[:] = 0
        buf[:m + 1] = g[m:]
        buf[npad - m:] = g[:m]
        out[i] = sfft.ifft(F * sfft.fft(buf))[:n:hop] * dt
    hw = np.full(len(freq_grid), family.time_halfwidth())
    return TFMatrix(np.ascontiguousarray(out.T), s.times[::hop], freq_grid.copy(),
                    AxisKind.FREQUENCY, hw)


def stft(s: SampledSignal, family: ReferenceFamily, which: Weights, freq_grid,
         hop: int = 1) -> TFMatrix:
    """Modulated STFT ``V(t, eta) = int f(s) h(t-s) e^{+i2 pi eta (t-s)} ds``.

    With this sign a positive-frequency tone at ``xi`` peaks at ``eta = xi`` and
    the reassignment rule ``-i dV / (2 pi V)`` returns ``+xi``.
    """
    return _stft_rows(s, family, which, freq_grid, False, hop)


def d_transform(s: SampledSignal, family: ReferenceFamily, which: Weights, grid,
                hop: int = 1) -> TFMatrix:
    """Time derivative of :func:`cwt` or :func:`stft` through the derivative taper.

    ``grid`` is a :class:`ScaleGrid` for wavelet families and a frequency array
    for window families.
    """
    if family.kind is FamilyKind.MORSE:
        return _cwt_rows(s, family, which, grid, True, hop)
    return _stft_rows(s, family, which, grid, True, hop)


def default_stft_grid(f_hi: float = 20.0, bins: int = 256) -> np.ndarray:
    return np.linspace(0.0, f_hi, bins)
