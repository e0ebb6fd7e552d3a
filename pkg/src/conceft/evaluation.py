"""Fidelity metrics, rendering, and Monte Carlo checks of the projection moments."""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy import integrate
from scipy.special import gammaln

from .formats import atomic_write_bytes, atomic_write_text
from .squeeze import TvPS


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# optimal transport

@dataclass
class OTReport:
    per_time: np.ndarray
    times: np.ndarray
    mean: float
    alpha: float = 0.0
    normalization: Optional[float] = None   # theta, or None
    skipped_slices: int = 0

    def summary(self) -> dict:
        return {"mean": self.mean, "alpha": self.alpha, "normalization": self.normalization,
                "skipped_slices": self.skipped_slices, "evaluated_slices": int(self.per_time.size)}

    def write(self, csv_path, json_path):
        buf = io.StringIO()
        buf.write("t,distance\n")
        np.savetxt(buf, np.column_stack([self.times, self.per_time]), delimiter=",", fmt="%.17g")
        atomic_write_text(csv_path, buf.getvalue())
        atomic_write_text(json_path, json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def slice_ot(p: np.ndarray, q: np.ndarray, step: float) -> float:
    """1-D transport cost between two nonnegative vectors on a uniform grid."""
    cp = np.cumsum(p / p.sum())
    cq = np.cumsum(q / q.sum())
    return float(np.abs(cp - cq).sum() * step)


def ot_distance(P, Q, alpha: float = 0.0, time_mask: Optional[np.ndarray] = None,
                theta: Optional[float] = None) -> OTReport:
    """Per-time-slice optimal transport between two spectra on a shared frequency grid.

    Each slice is normalized to unit mass and compared through its CDF. With
    ``alpha > 0`` the score mixes in ``|mP - mQ| / (mP + mQ)`` of the slice
    masses, after scaling P so both spectra carry the same total mass.
    Slices where either side has no mass are skipped and counted.
    """
    if not 0 <= alpha <= 1:
        raise EvaluationError("alpha must lie in [0, 1]")
    p_vals, fg, tg = _unpack(P)
    q_vals, fg2, _ = _unpack(Q)
    if p_vals.shape != q_vals.shape or fg.shape != fg2.shape or not np.allclose(fg, fg2, rtol=0, atol=1e-12):
        raise EvaluationError("spectra are not on the same grid")
    if theta is not None:
        p_vals = normalize_tvps(p_vals, theta)
    step = float(fg[1] - fg[0])
    rows = np.arange(p_vals.shape[0]) if time_mask is None else np.flatnonzero(time_mask)
    if alpha > 0:
        tq = q_vals[rows].sum()
        tp = p_vals[rows].sum()
        if tp > 0:
            p_vals = p_vals * (tq / tp)
    mp = p_vals[rows].sum(axis=1)
    mq = q_vals[rows].sum(axis=1)
    ok = (mp > 0) & (mq > 0)
    keep = rows[ok]
    cp = np.cumsum(p_vals[keep], axis=1) / mp[ok, None]
    cq = np.cumsum(q_vals[keep], axis=1) / mq[ok, None]
    dist = np.abs(cp - cq).sum(axis=1) * step
    if alpha > 0:
        mass = np.abs(mp[ok] - mq[ok]) / (mp[ok] + mq[ok])
        dist = alpha * mass + (1 - alpha) * dist
    mean = float(dist.mean()) if dist.size else float("nan")
    return OTReport(dist, tg[keep], mean, alpha, theta, int((~ok).sum()))


def _unpack(P):
    if isinstance(P, TvPS):
        return P.values, np.asarray(P.freq_grid), np.asarray(P.time_grid)
    v = np.asarray(P, dtype=float)
    return v, np.arange(v.shape[1], dtype=float), np.arange(v.shape[0], dtype=float)


def normalize_tvps(P, theta: float = 5.0):
    """Scale so the mean entry equals ``theta``. Accepts a TvPS or an array."""
    vals = P.values if isinstance(P, TvPS) else np.asarray(P, dtype=float)
    total = vals.mean()
    if not total > 0:
        raise EvaluationError("cannot normalize a spectrum with zero mass")
    out = vals * (theta / total)
    if isinstance(P, TvPS):
        return TvPS(out, P.freq_grid, P.time_grid)
    return out


# ---------------------------------------------------------------------------
# rendering

@dataclass(frozen=True)
class RenderSpec:
    theta: Optional[float] = 5.0        # None: no normalization
    q_mode: str = "fixed"               # "fixed" or "quantile"
    q: float = 5.718                    # cut-off, or percentile in (0, 100)
    excluded: bool = False              # blank boundary columns

    def __post_init__(self):
        if self.theta is not None and not self.theta > 0:
            raise EvaluationError("theta must be positive")
        if self.q_mode not in ("fixed", "quantile"):
            raise EvaluationError("q_mode must be 'fixed' or 'quantile'")
        if self.q_mode == "quantile" and not 0 < self.q < 100:
            raise EvaluationError("quantile must lie in (0, 100)")
        if self.q_mode == "fixed" and not self.q > 0:
            raise EvaluationError("fixed cut-off must be positive")


def render_levels(P, spec: RenderSpec, time_mask: Optional[np.ndarray] = None):
    """Compressed levels ``log(1 + min(P, q))`` and the cut-off used.

    Returned in (time x freq) layout, like the input.
    """
    vals = P.values if isinstance(P, TvPS) else np.asarray(P, dtype=float)
    if spec.theta is not None and vals.sum() > 0:
        vals = normalize_tvps(vals, spec.theta)
    q = spec.q if spec.q_mode == "fixed" else float(np.percentile(vals, spec.q))
    R = np.log1p(np.minimum(vals, q))
    if spec.excluded and time_mask is not None:
        R = np.where(np.asarray(time_mask)[:, None], R, 0.0)
    return R, q


def render(P, spec: RenderSpec = RenderSpec(), time_mask: Optional[np.ndarray] = None) -> Image.Image:
    """8-bit grayscale image: white is zero, black is ``log(1 + q)``.

    Time runs left to right and frequency bottom to top.
    """
    R, q = render_levels(P, spec, time_mask)
    top = np.log1p(q)
    frac = R / top if top > 0 else np.zeros_like(R)
    gray = np.rint(255.0 * (1.0 - frac)).astype(np.uint8)
    return Image.fromarray(np.ascontiguousarray(gray.T[::-1]), mode="L")


def compose_panels(images: Sequence[Image.Image], gap: int = 4) -> Image.Image:
    """Side-by-side panel of equally tall images on a white background."""
    h = max(im.height for im in images)
    w = sum(im.width for im in images) + gap * (len(images) - 1)
    out = Image.new("L", (w, h), 255)
    x = 0
    for im in images:
        out.paste(im, (x, 0))
        x += im.width + gap
    return out


def save_png(img: Image.Image, path):
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False)
    atomic_write_bytes(path, buf.getvalue())


def write_levels_csv(R: np.ndarray, P: TvPS, path):
    buf = io.StringIO()
    buf.write(",".join(["t"] + [f"{x:.10g}" for x in P.freq_grid]) + "\n")
    np.savetxt(buf, np.column_stack([P.time_grid, R]), delimiter=",", fmt="%.17g")
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# Monte Carlo checks over sphere caps

def closed_form_c(J: int, kappa: float) -> float:
    """Moment constant in the printed closed form (gamma-ratio times cap integral)."""
    ratio = np.exp(gammaln((J - 1) / 2) - gammaln(J / 2))
    val = integrate.quad(lambda x: (1 - x * x) ** ((J - 1) / 2) / x ** 2, kappa, 1)[0]
    return float(2 * ratio / np.sqrt(np.pi) * val)


def asymptotic_c(J: int, kappa: float) -> float:
    return float(2 * np.sqrt(2) / (np.sqrt(np.pi * J) * kappa))


def exact_c(J: int, kappa: float) -> float:
    """``E[(1 - r1^2) / r1^2 | r1 > kappa]`` for r uniform on the unit sphere in R^J."""
    num = integrate.quad(lambda x: (1 - x * x) ** ((J - 1) / 2) / x ** 2, kappa, 1)[0]
    den = integrate.quad(lambda x: (1 - x * x) ** ((J - 3) / 2), kappa, 1)[0]
    return float(num / den)


class SamplingError(RuntimeError):
    pass


def sample_cap(J: int, accept, M: int, rng: np.random.Generator, batch: int = 200_000,
               min_rate: float = 1e-4):
    """``M`` uniform unit vectors satisfying ``accept(R) -> bool mask``, by rejection.

    Returns (samples, acceptance_rate). Batches are drawn in a fixed order so
    the result depends only on the generator state.
    """
    got, drawn, n = [], 0, 0
    while n < M:
        g = rng.standard_normal((batch, J))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        keep = g[accept(g)]
        drawn += batch
        got.append(keep)
        n += len(keep)
        if drawn >= 10 * batch and n / drawn < min_rate:
            raise SamplingError(f"rejection sampling starved: acceptance rate {n / drawn:.2e}")
    return np.concatenate(got)[:M], n / drawn


def _mean_se(x: np.ndarray):
    return complex(x.mean()) if np.iscomplexobj(x) else float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x)))


def cap_ratio_moments(u, v, kappa: float, M: int = 1_000_000, seed: int = 0) -> dict:
    """Monte Carlo moments of ``r.u / r.v`` for r uniform on the cap ``r.v > kappa``.

    ``v`` is normalized to unit length first; the cap and the projection are
    defined for unit ``v``. Returns estimates, predictions (closed-form and
    exact constants), standard errors and deviations in SE units.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=float)
    J = len(v)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise EvaluationError("v must be nonzero")
    v = v / nv
    if not 0 < kappa < 1:
        raise EvaluationError("kappa must lie in (0, ||v||) = (0, 1) after normalization")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(31,)))
    R, rate = sample_cap(J, lambda g: g @ v > kappa, M, rng)
    X = (R @ u) / (R @ v)
    proj = complex(v @ u)
    perp2 = float(np.linalg.norm(u - proj * v) ** 2)
    m1, se1 = _mean_se(X)
    m2, se2 = _mean_se(np.abs(X) ** 2)
    c_closed, c_exact, c_asym = closed_form_c(J, kappa), exact_c(J, kappa), asymptotic_c(J, kappa)
    pred2 = {k: abs(proj) ** 2 + c * perp2 / (J - 1) if J > 1 else abs(proj) ** 2
             for k, c in (("closed_form", c_closed), ("exact", c_exact))}
    # complex mean: SE of real and imaginary parts separately
    se1_re = float(X.real.std(ddof=1) / np.sqrt(M))
    se1_im = float(X.imag.std(ddof=1) / np.sqrt(M))
    dev1 = max(abs(m1.real - proj.real) / max(se1_re, 1e-300) if se1_re > 0 else abs(m1.real - proj.real) * np.inf,
               abs(m1.imag - proj.imag) / max(se1_im, 1e-300) if se1_im > 0 else abs(m1.imag - proj.imag) * np.inf)
    dev1 = 0.0 if np.isnan(dev1) else float(dev1)

    def z(pred):
        if se2 == 0:
            return 0.0 if abs(m2 - pred) < 1e-12 * max(1.0, abs(pred)) else float("inf")
        return float(abs(m2 - pred) / se2)

    return {
        "J": J, "kappa": kappa, "M": M, "seed": seed, "acceptance_rate": rate,
        "mean": [m1.real, m1.imag], "mean_se": [se1_re, se1_im], "mean_pred": [proj.real, proj.imag],
        "mean_dev_se": dev1,
        "second_moment": m2, "second_moment_se": se2,
        "second_moment_pred": pred2,
        "second_moment_dev_se": {k: z(p) for k, p in pred2.items()},
        "c_closed_form": c_closed, "c_exact": c_exact, "c_asymptotic": c_asym,
        "c_asymptotic_rel_diff": abs(c_asym - c_closed) / c_closed,
    }


def omega_spread_bounds(Q, V, J: int, kappa: float):
    """Printed bias and variance bounds from ``V = a - phi' b`` and unit ``Q``."""
    c = closed_form_c(J, kappa)
    Q = np.asarray(Q, dtype=float) / np.linalg.norm(Q)
    pv = abs(complex(Q @ V)) ** 2
    nv = float(np.linalg.norm(V) ** 2)
    inner = (1 - c / (J - 1)) * pv + c * nv / (J - 1)
    return 0.5 * np.sqrt(max(inner, 0.0)), 2.5 * inner, c


def omega_spread_check(Q, eps_b, eps_a, freq: float, phase: float, kappa: float,
                      M: int = 20_000, seed: int = 0) -> dict:
    """Monte Carlo of ``omega(r) = r.(freq B + a) / r.(B + b)`` with ``B = e^{i2pi phase} Q``.

    ``eps_b`` is the noise in the transform (``epsilon + sigma Phi``) and
    ``eps_a`` the noise in the derivative transform. ``r`` is drawn from the
    phase-aligned region ``Re(e^{-i2pi phase} r.(B + b)) > 2 kappa``.
    Reports the empirical mean error against the first-order correction, the
    empirical variance, and the printed bounds.
    """
    Q = np.asarray(Q, dtype=float)
    Q = Q / np.linalg.norm(Q)
    J = len(Q)
    b = np.asarray(eps_b, dtype=complex)
    a = np.asarray(eps_a, dtype=complex)
    cond = float(np.linalg.norm(b) ** 2)
    if not cond < kappa:
        raise EvaluationError(f"norm condition fails: ||b||^2 = {cond:.3g} >= kappa = {kappa}")
    rot = np.exp(-2j * np.pi * phase)
    B = Q / rot
    den_vec = B + b
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(41,)))
    R, rate = sample_cap(J, lambda g: (rot * (g @ den_vec)).real > 2 * kappa, M, rng)
    omega = (R @ (freq * B + a)) / (R @ den_vec)
    V = a - freq * b
    correction = rot * complex(Q @ V)
    mean = complex(omega.mean())
    var = float(np.mean(np.abs(omega - mean) ** 2))
    e1_bound, var_bound, c = omega_spread_bounds(Q, V, J, kappa)
    return {
        "J": J, "kappa": kappa, "M": M, "acceptance_rate": rate, "norm_condition": cond,
        "mean": [mean.real, mean.imag], "freq": freq,
        "bias_error": abs(mean - freq - correction), "bias_bound": e1_bound,
        "variance": var, "variance_bound": var_bound, "c": c,
        "variance_ok": var <= var_bound, "bias_ok": abs(mean - freq - correction) <= e1_bound,
    }


def write_json(obj: dict, path):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")
