"""Synchrosqueezing: reassignment, SST for CWT/STFT, multi-taper and ConceFT averages."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import _kernels
from .formats import atomic_write_bytes, pack_tf, unpack_tf
from .reference import FamilyKind, ProjectionSet, ReferenceFamily
from .signal_model import SampledSignal
from .transforms import (AxisKind, ScaleGrid, TFMatrix, TransformError, cwt, d_transform,
                         default_stft_grid, stft)

log = logging.getLogger(__name__)

SENTINEL = -np.inf


class SqueezeError(ValueError):
    pass


class ThresholdMode(str, enum.Enum):
    ABSOLUTE = "absolute"
    RELATIVE = "relative_to_max"
    QUANTILE = "quantile"


@dataclass(frozen=True)
class Threshold:
    mode: ThresholdMode = ThresholdMode.RELATIVE
    value: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "mode", ThresholdMode(self.mode))
        if self.mode is ThresholdMode.QUANTILE and not 0 < self.value < 1:
            raise SqueezeError("quantile threshold must lie in (0, 1)")
        if self.value < 0:
            raise SqueezeError("threshold must be nonnegative")

    def resolve(self, magnitude: np.ndarray) -> float:
        """Absolute Gamma for a given |W| matrix."""
        if self.mode is ThresholdMode.ABSOLUTE:
            return float(self.value)
        if self.mode is ThresholdMode.RELATIVE:
            return float(self.value * magnitude.max()) if magnitude.size else 0.0
        return float(np.quantile(magnitude, self.value))


@dataclass(frozen=True)
class SqueezeConfig:
    threshold: Threshold = field(default_factory=Threshold)
    freq_bins: int = 1024
    freq_range: tuple = (0.0, 20.0)
    kernel: str = "nearest"          # or "gaussian"
    alpha: Optional[float] = None     # Gaussian kernel width parameter, Hz^2

    def __post_init__(self):
        lo, hi = self.freq_range
        if not hi > lo or self.freq_bins < 2:
            raise SqueezeError("need freq_range hi > lo and at least two bins")
        if self.kernel not in ("nearest", "gaussian"):
            raise SqueezeError(f"unknown kernel {self.kernel!r}")
        if self.kernel == "gaussian" and not (self.alpha and self.alpha > 0):
            raise SqueezeError("gaussian kernel needs alpha > 0")

    @property
    def freq_grid(self) -> np.ndarray:
        return np.linspace(self.freq_range[0], self.freq_range[1], self.freq_bins)

    @property
    def step(self) -> float:
        return (self.freq_range[1] - self.freq_range[0]) / (self.freq_bins - 1)


@dataclass
class SqueezedTF:
    """Squeezed coefficients on a (time x frequency-bin) grid.

    ``recon_constant`` turns band sums into signal values: the real signal is
    ``2 / recon_constant * Re(sum over bins)``. The taper half-width at
    frequency ``xi`` is ``hw_const + hw_inverse / xi`` seconds.
    """
    values: np.ndarray
    freq_grid: np.ndarray
    time_grid: np.ndarray
    recon_constant: float = 1.0
    hw_const: float = 0.0
    hw_inverse: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.time_grid), len(self.freq_grid)):
            raise SqueezeError("values do not match grids")
        if not np.all(np.isfinite(self.values)):
            raise SqueezeError("non-finite squeezed values")

    def halfwidth_at(self, freq: float) -> float:
        return self.hw_const + (self.hw_inverse / freq if self.hw_inverse else 0.0)

    def interior_times(self, f_min: float, factor: float = 2.0) -> np.ndarray:
        """Time mask excluding ``factor`` half-widths (taken at ``f_min``) at both ends."""
        hw = factor * self.halfwidth_at(f_min)
        t = self.time_grid
        return (t - t[0] >= hw) & (t[-1] - t >= hw)

    def tvps(self) -> "TvPS":
        return TvPS(np.abs(self.values) ** 2, self.freq_grid, self.time_grid)

    def write_bin(self, path):
        atomic_write_bytes(path, pack_tf(self.values, self.time_grid, self.freq_grid, 0))


@dataclass
class TvPS:
    values: np.ndarray
    freq_grid: np.ndarray
    time_grid: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.time_grid), len(self.freq_grid)):
            raise SqueezeError("values do not match grids")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise SqueezeError("tvPS must be finite and nonnegative")
        self.values = v

    def write_bin(self, path):
        atomic_write_bytes(path, pack_tf(self.values, self.time_grid, self.freq_grid, 0))

    @classmethod
    def read_bin(cls, path) -> "TvPS":
        with open(path, "rb") as fh:
            v, tg, fg, _ = unpack_tf(fh.read())
        if np.iscomplexobj(v):
            raise SqueezeError(f"{path}: complex payload is not a tvPS")
        return cls(v, fg, tg)

    def write_csv(self, path):
        from .formats import atomic_write_text
        import io
        buf = io.StringIO()
        buf.write(",".join(["t"] + [f"{x:.10g}" for x in self.freq_grid]) + "\n")
        np.savetxt(buf, np.column_stack([self.time_grid, self.values]), delimiter=",", fmt="%.17g")
        atomic_write_text(path, buf.getvalue())


def reassignment_rule(W: TFMatrix, dW: TFMatrix, gamma: float) -> np.ndarray:
    """Omega = Re(-i dW / (2 pi W)) where |W| > gamma, ``SENTINEL`` elsewhere."""
    w = W.values if isinstance(W, TFMatrix) else np.asarray(W)
    d = dW.values if isinstance(dW, TFMatrix) else np.asarray(dW)
    if w.shape != d.shape:
        raise SqueezeError(f"shape mismatch {w.shape} vs {d.shape}")
    mag2 = np.abs(w) ** 2
    keep = (mag2 > gamma * gamma) & (mag2 > 0)
    out = np.full(w.shape, SENTINEL)
    out[keep] = (d[keep] * np.conj(w[keep])).imag / (2 * np.pi * mag2[keep])
    return out


def _measure(W: TFMatrix) -> np.ndarray:
    """Per-axis-row integration weight: a^{-3/2} da for scales, d eta for frequencies."""
    g = W.axis_grid
    if W.axis_kind is AxisKind.SCALE:
        ratio = g[1] / g[0]
        return g ** -0.5 * np.log(ratio)
    if len(g) < 2:
        return np.ones(1)
    return np.full(len(g), g[1] - g[0])


def _accumulate(w: np.ndarray, dw: np.ndarray, weights, gamma: float, cfg: SqueezeConfig,
                out: np.ndarray, scale: float, flip: bool):
    lo = cfg.freq_range[0]
    if cfg.kernel == "nearest":
        return _kernels.squeeze_nearest(w, dw, weights, gamma, lo, cfg.step, out, scale, int(flip))
    return _accumulate_gaussian(w, dw, weights, gamma, cfg, out, scale, flip)


def _accumulate_gaussian(w, dw, weights, gamma, cfg, out, scale, flip):
    """Kernel-weighted accumulation with g(x) = exp(-x^2/alpha) / sqrt(pi alpha)."""
    omega = reassignment_rule(w, dw, gamma)
    ti, ai = np.nonzero(np.isfinite(omega))
    c = w[ti, ai] * (scale * weights[ai])
    if flip:
        c = np.where(w[ti, ai].real < 0, -c, c)
    om = omega[ti, ai]
    step, lo, nb, alpha = cfg.step, cfg.freq_range[0], cfg.freq_bins, cfg.alpha
    reach = int(np.ceil(6 * np.sqrt(alpha) / step))
    centre = np.floor((om - lo) / step + 0.5).astype(np.int64)
    acc = 0.0
    view = out.reshape(-1)
    for off in range(-reach, reach + 1):
        k = centre + off
        ok = (k >= 0) & (k < nb)
        g = np.exp(-(lo + k[ok] * step - om[ok]) ** 2 / alpha) / np.sqrt(np.pi * alpha) * step
        contrib = c[ok] * g
        flat = ti[ok] * nb + k[ok]
        view.real += np.bincount(flat, contrib.real, minlength=view.size)
        view.imag += np.bincount(flat, contrib.imag, minlength=view.size)
        acc += np.abs(contrib).sum()
    total = float(np.abs(c).sum())
    return acc, max(total - acc, 0.0), int(ti.size)


def _squeeze(W: TFMatrix, dW: TFMatrix, cfg: SqueezeConfig, recon: float,
             hw_const: float, hw_inverse: float) -> SqueezedTF:
    if W.values.shape != dW.values.shape:
        raise SqueezeError("W and dW are not congruent")
    out = np.zeros((len(W.time_grid), cfg.freq_bins), dtype=complex)
    gamma = cfg.threshold.resolve(np.abs(W.values))
    acc, drop, passing = _accumulate(W.values, dW.values, _measure(W), gamma, cfg, out, 1.0, False)
    diag = {"gamma": gamma, "accumulated_abs": acc, "dropped_abs": drop, "passing": passing}
    return SqueezedTF(out, cfg.freq_grid, W.time_grid.copy(), recon, hw_const, hw_inverse, diag)


def sst_cwt(W: TFMatrix, dW: TFMatrix, cfg: SqueezeConfig, grid: Optional[ScaleGrid] = None,
            recon_constant: float = 1.0, halfwidth_per_scale: float = 0.0) -> SqueezedTF:
    """Squeeze a CWT: accumulate ``W a^{-3/2} da`` into the bin nearest Omega."""
    if W.axis_kind is not AxisKind.SCALE:
        raise SqueezeError("sst_cwt needs a scale-axis transform")
    if grid is not None and not np.allclose(grid.scales, W.axis_grid, rtol=1e-12, atol=0):
        raise SqueezeError("scale grid does not match transform")
    return _squeeze(W, dW, cfg, recon_constant, 0.0, halfwidth_per_scale)


def sst_stft(V: TFMatrix, dV: TFMatrix, cfg: SqueezeConfig, recon_constant: float = 1.0,
             halfwidth: float = 0.0) -> SqueezedTF:
    """Squeeze an STFT with unit measure d eta."""
    if V.axis_kind is not AxisKind.FREQUENCY:
        raise SqueezeError("sst_stft needs a frequency-axis transform")
    return _squeeze(V, dV, cfg, recon_constant, halfwidth, 0.0)


def mtsst(ssts: Sequence[SqueezedTF]) -> SqueezedTF:
    """Entrywise mean of congruent squeezed transforms."""
    if not ssts:
        raise SqueezeError("mtsst needs at least one input")
    first = ssts[0]
    for s in ssts[1:]:
        if s.values.shape != first.values.shape or not np.array_equal(s.freq_grid, first.freq_grid):
            raise SqueezeError("mtsst inputs are not congruent")
    if len(ssts) == 1:
        vals = first.values.copy()
    else:
        vals = np.zeros_like(first.values)
        for s in ssts:
            vals += s.values
        vals /= len(ssts)
    recon = float(np.mean([s.recon_constant for s in ssts]))
    return SqueezedTF(vals, first.freq_grid.copy(), first.time_grid.copy(), recon,
                      first.hw_const, first.hw_inverse,
                      {"members": [s.diagnostics for s in ssts]})


# ---------------------------------------------------------------------------
# per-family transform bundles

def stft_recon_constants(family: ReferenceFamily) -> np.ndarray:
    """Window values at zero: integrating V over eta returns f(t) h(0)."""
    return family.window(np.array([0.0]))[:, 0]


@dataclass
class TaperTransforms:
    """Transforms of one signal against every taper of a family, plus metadata."""
    W: np.ndarray          # (J, time, axis)
    dW: np.ndarray
    time_grid: np.ndarray
    axis_grid: np.ndarray
    axis_kind: AxisKind
    recon_constants: np.ndarray
    hw_const: float
    hw_inverse: float

    @property
    def J(self) -> int:
        return self.W.shape[0]

    def matrix(self, j: int, derivative: bool = False) -> TFMatrix:
        src = self.dW if derivative else self.W
        return TFMatrix(src[j], self.time_grid, self.axis_grid, self.axis_kind)


def taper_transforms(s: SampledSignal, family: ReferenceFamily, grid=None, hop: int = 1) -> TaperTransforms:
    """CWT (Morse) or STFT (Hermite) of ``s`` against every taper of ``family``."""
    if family.kind is FamilyKind.MORSE:
        grid = ScaleGrid.from_band() if grid is None else grid
        fwd, recon = cwt, family.reconstruction_constants()
        hw_c, hw_i = 0.0, family.time_halfwidth()
    else:
        grid = default_stft_grid() if grid is None else grid
        fwd, recon = stft, stft_recon_constants(family)
        hw_c, hw_i = family.time_halfwidth(), 0.0
    Ws, dWs = [], []
    for j in range(family.J):
        m = fwd(s, family, j, grid, hop)
        Ws.append(m.values)
        dWs.append(d_transform(s, family, j, grid, hop).values)
    return TaperTransforms(np.stack(Ws), np.stack(dWs), m.time_grid, m.axis_grid, m.axis_kind,
                           recon, hw_c, hw_i)


def sst_single(tt: TaperTransforms, j: int, cfg: SqueezeConfig) -> SqueezedTF:
    """Plain SST with taper ``j`` of a precomputed bundle."""
    return _squeeze(tt.matrix(j), tt.matrix(j, True), cfg, float(tt.recon_constants[j]),
                    tt.hw_const, tt.hw_inverse)


def mtsst_from(tt: TaperTransforms, cfg: SqueezeConfig, J: Optional[int] = None) -> SqueezedTF:
    J = tt.J if J is None else J
    return mtsst([sst_single(tt, j, cfg) for j in range(J)])


FLIP_MODES = ("point", "vector", "none")


def conceft_from(tt: TaperTransforms, proj: ProjectionSet, cfg: SqueezeConfig,
                 flip: str = "point"):
    """ConceFT average over the projections of a precomputed taper bundle.

    ``flip`` selects the sign convention: ``"point"`` negates every passing
    coefficient with negative real part, ``"vector"`` orients each r so that
    its combined reconstruction constant is positive, ``"none"`` uses r as drawn.
    Returns (SqueezedTF, TvPS).
    """
    if flip not in FLIP_MODES:
        raise SqueezeError(f"flip must be one of {FLIP_MODES}")
    if proj.J != tt.J:
        raise SqueezeError(f"projection dimension {proj.J} != family size {tt.J}")
    N = len(proj)
    m = TFMatrix(tt.W[0], tt.time_grid, tt.axis_grid, tt.axis_kind)
    weights = _measure(m)
    out = np.zeros((len(tt.time_grid), cfg.freq_bins), dtype=complex)
    acc = drop = 0.0
    passing = 0
    gammas = []
    consts = []
    for r in proj.vectors:
        cr = float(r @ tt.recon_constants)
        if flip == "vector" and cr < 0:
            r, cr = -r, -cr
        consts.append(abs(cr) if flip != "none" else cr)
        w = np.tensordot(r, tt.W, axes=1)
        dw = np.tensordot(r, tt.dW, axes=1)
        gamma = cfg.threshold.resolve(np.abs(w))
        gammas.append(gamma)
        a, d, p = _accumulate(w, dw, weights, gamma, cfg, out, 1.0 / N, flip == "point")
        acc += a
        drop += d
        passing += p
    diag = {"gamma": gammas, "accumulated_abs": acc, "dropped_abs": drop, "passing": passing,
            "N": N, "flip": flip}
    S = SqueezedTF(out, cfg.freq_grid, tt.time_grid.copy(), float(np.mean(consts)),
                   tt.hw_const, tt.hw_inverse, diag)
    return S, S.tvps()


def conceft(s: SampledSignal, family: ReferenceFamily, proj: ProjectionSet,
            cfg: SqueezeConfig = SqueezeConfig(), grid=None, flip: str = "point", hop: int = 1):
    """ConceFT of a signal: transforms against every taper, then :func:`conceft_from`."""
    if proj.J != family.J:
        raise SqueezeError(f"projection dimension {proj.J} != family size {family.J}")
    return conceft_from(taper_transforms(s, family, grid, hop), proj, cfg, flip)


# ---------------------------------------------------------------------------
# reconstruction and ridges

def reconstruct_amplitude(S: SqueezedTF, if_track, band_halfwidth: float) -> np.ndarray:
    """Amplitude from the band of ``S`` around ``if_track``: ``2 |sum| / constant``."""
    track = np.asarray(if_track, dtype=float)
    if track.shape != S.time_grid.shape:
        raise SqueezeError("track length must match the time grid")
    fg = S.freq_grid
    if np.any(track < fg[0]) or np.any(track > fg[-1]):
        raise SqueezeError("IF track leaves the frequency range")
    inband = np.abs(fg[None, :] - track[:, None]) <= band_halfwidth
    total = np.where(inband, S.values, 0).sum(axis=1)
    return 2.0 * np.abs(total) / S.recon_constant


def _viterbi_ridge(E: np.ndarray, penalty: float, max_jump: int) -> np.ndarray:
    """Path maximizing sum of E minus penalty * jump^2, jumps bounded by max_jump."""
    nt, nb = E.shape
    offs = np.arange(-max_jump, max_jump + 1)
    cost = penalty * offs.astype(float) ** 2
    score = E[0].copy()
    back = np.empty((nt, nb), dtype=np.int32)
    idx = np.arange(nb)
    for t in range(1, nt):
        # candidates[k, o] = score[k + o] - cost[o]
        src = idx[:, None] + offs[None, :]
        valid = (src >= 0) & (src < nb)
        cand = np.where(valid, score[np.clip(src, 0, nb - 1)] - cost[None, :], -np.inf)
        best = np.argmax(cand, axis=1)
        back[t] = src[idx, best]
        score = cand[idx, best] + E[t]
    path = np.empty(nt, dtype=np.int64)
    path[-1] = int(np.argmax(score))
    for t in range(nt - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def extract_ridges(P: TvPS, count: int, penalty: float = 1e-3, max_jump: int = 8,
                   exclusion_bins: int = 6) -> List[np.ndarray]:
    """``count`` ridge tracks (Hz), one per pass with the previous ridges masked out.

    Each pass runs a dynamic program over the log-tvPS with a quadratic jump
    penalty. Tracks are returned sorted by mean frequency; fewer are returned
    (with a warning) when the remaining energy is negligible.
    """
    if count < 1:
        raise SqueezeError("ridge count must be >= 1")
    V = P.values.astype(float)
    scale = V.max()
    if scale <= 0:
        log.warning("extract_ridges: empty tvPS")
        return []
    E = np.log(V / scale + 1e-12)
    total = V.sum()
    tracks = []
    nb = V.shape[1]
    for _ in range(count):
        path = _viterbi_ridge(E, penalty, max_jump)
        energy = V[np.arange(len(path)), path].sum()
        if energy < 1e-6 * total:
            log.warning("extract_ridges: only %d ridges found", len(tracks))
            break
        tracks.append(P.freq_grid[path])
        for t, k in enumerate(path):
            lo, hi = max(k - exclusion_bins, 0), min(k + exclusion_bins + 1, nb)
            E[t, lo:hi] = np.log(1e-12)
            V[t, lo:hi] = 0.0
    tracks.sort(key=lambda x: float(np.mean(x)))
    return tracks
