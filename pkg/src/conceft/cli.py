"""Command-line driver: simulate, analyze, evaluate, sweep, render.

Every command reads one TOML config. Results go to files in the output
directory; progress and diagnostics go to stderr as JSON lines.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from . import evaluation as ev
from .formats import FormatError, atomic_write_text
from .reference import ConstructionError, hermite_windows, morse_wavelets, random_unit_vectors
from .signal_model import (GroundTruth, InvalidParameter, NoiseKind, NoiseSpec, SampledSignal,
                           add_noise, deterministic_signal, ideal_tvps, make_class_c_signal,
                           read_ground_truth_csv, read_signal_bin, snr_db,
                           write_ground_truth_csv, write_signal_bin, write_signal_csv)
from .squeeze import (SqueezeConfig, SqueezeError, SqueezedTF, Threshold, TvPS, conceft_from,
                      mtsst_from, sst_single, taper_transforms)
from .transforms import ScaleGrid, TransformError, default_stft_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def emit(event: str, **kw):
    """One JSON line on stderr."""
    rec = {"event": event, **kw}
    sys.stderr.write(json.dumps(rec, sort_keys=True, default=float) + "\n")
    sys.stderr.flush()


# ---------------------------------------------------------------------------
# configuration

@dataclass
class SignalCfg:
    kind: str = "class_c"            # class_c | deterministic | file
    seed: int = 0
    path: str = ""
    ground_truth: str = ""
    rate: float = 160.0
    duration: float = 60.0
    separation_d: float = 0.05


@dataclass
class NoiseCfg:
    kind: str = "gaussian"           # gaussian | arma11 | poisson | student_t4 | none
    snr_db: float = 0.0
    seed: int = 0


@dataclass
class MethodCfg:
    name: str = "conceft"            # sst | mtsst | conceft
    backend: str = "cwt"             # cwt | stft
    beta: float = 30.0
    gamma: float = 9.0
    sigma: float = 5.0 / 16.0
    J: int = 0                       # 0 selects the backend default (cwt 2, stft 4)
    N: int = 20
    projection_seed: int = 0
    flip: str = "point"              # point | vector | none

    def resolved_J(self) -> int:
        if self.J:
            return self.J
        return 2 if self.backend == "cwt" else 4


@dataclass
class TransformCfg:
    f_lo: float = 0.5
    f_hi: float = 40.0
    voices: int = 32
    stft_bins: int = 256
    stft_f_hi: float = 20.0
    hop: int = 1


@dataclass
class SqueezeCfg:
    threshold_mode: str = "relative_to_max"
    threshold: float = 1e-6
    freq_bins: int = 1024
    freq_lo: float = 0.0
    freq_hi: float = 20.0
    kernel: str = "nearest"
    alpha: float = 0.0


@dataclass
class EvalCfg:
    alpha: float = 0.0
    exclude_boundary: bool = True
    boundary_factor: float = 2.0
    compare: List[str] = field(default_factory=list)


@dataclass
class RenderCfg:
    theta: float = 5.0               # 0 disables normalization
    q_mode: str = "fixed"
    q: float = 5.718
    excluded: bool = False


@dataclass
class SweepCfg:
    axis: str = "N"                  # N | grid | snr
    N_values: List[int] = field(default_factory=lambda: [1, 5, 10, 20, 50])
    repeats: int = 10
    betas: List[float] = field(default_factory=lambda: [20.0, 30.0, 40.0, 50.0, 60.0, 70.0])
    gammas: List[float] = field(default_factory=lambda: [3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0])
    Js: List[int] = field(default_factory=lambda: [1, 2, 3, 4])
    grid_N: int = 10
    snr_values: List[float] = field(default_factory=lambda: [float(x) for x in range(-7, 8)])
    noise_kinds: List[str] = field(default_factory=lambda: ["gaussian", "arma11", "poisson"])
    methods: List[str] = field(default_factory=lambda: ["sst", "mtsst", "conceft"])


_SECTIONS = {"signal": SignalCfg, "noise": NoiseCfg, "method": MethodCfg,
             "transform": TransformCfg, "squeeze": SqueezeCfg, "evaluate": EvalCfg,
             "render": RenderCfg, "sweep": SweepCfg}


@dataclass
class RunConfig:
    signal: SignalCfg = field(default_factory=SignalCfg)
    noise: NoiseCfg = field(default_factory=NoiseCfg)
    method: MethodCfg = field(default_factory=MethodCfg)
    transform: TransformCfg = field(default_factory=TransformCfg)
    squeeze: SqueezeCfg = field(default_factory=SqueezeCfg)
    evaluate: EvalCfg = field(default_factory=EvalCfg)
    render: RenderCfg = field(default_factory=RenderCfg)
    sweep: SweepCfg = field(default_factory=SweepCfg)
    output: str = "out"

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "RunConfig":
        unknown = set(d) - set(_SECTIONS) - {"output"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kw = {}
        for name, typ in _SECTIONS.items():
            sub = d.get(name, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"[{name}] must be a table")
            known = {f.name: f for f in fields(typ)}
            bad = set(sub) - set(known)
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            vals = {}
            for k, v in sub.items():
                default = getattr(typ(), k)
                vals[k] = _coerce(name, k, v, default)
            kw[name] = typ(**vals)
        cfg = cls(**kw, output=str(d.get("output", "out")))
        cfg.validate(base_dir)
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self, base_dir: Optional[Path] = None):
        s, m, q = self.signal, self.method, self.squeeze
        if s.kind not in ("class_c", "deterministic", "file"):
            raise ConfigError(f"signal.kind {s.kind!r} not recognized")
        if s.kind == "file":
            for p in (s.path,) + ((s.ground_truth,) if s.ground_truth else ()):
                full = Path(p) if base_dir is None else base_dir / p
                if not p or not full.exists():
                    raise ConfigError(f"referenced file does not exist: {p!r}")
        if self.noise.kind != "none":
            try:
                NoiseKind(self.noise.kind)
            except ValueError:
                raise ConfigError(f"noise.kind {self.noise.kind!r} not recognized") from None
        if m.name not in ("sst", "mtsst", "conceft"):
            raise ConfigError(f"method.name {m.name!r} not recognized")
        if m.backend not in ("cwt", "stft"):
            raise ConfigError(f"method.backend {m.backend!r} not recognized")
        if m.flip not in ("point", "vector", "none"):
            raise ConfigError(f"method.flip {m.flip!r} not recognized")
        if m.J < 0 or m.N < 1:
            raise ConfigError("method.J must be >= 0 and method.N >= 1")
        if q.threshold_mode not in ("absolute", "relative_to_max", "quantile"):
            raise ConfigError(f"squeeze.threshold_mode {q.threshold_mode!r} not recognized")
        if q.kernel not in ("nearest", "gaussian"):
            raise ConfigError(f"squeeze.kernel {q.kernel!r} not recognized")
        if self.render.q_mode not in ("fixed", "quantile"):
            raise ConfigError("render.q_mode must be 'fixed' or 'quantile'")
        if self.sweep.axis not in ("N", "grid", "snr"):
            raise ConfigError("sweep.axis must be N, grid or snr")
        for name in self.evaluate.compare + self.sweep.methods:
            if name not in ("sst", "mtsst", "conceft"):
                raise ConfigError(f"unknown method {name!r} in comparison list")
        try:
            self.squeeze_config()
        except SqueezeError as e:
            raise ConfigError(str(e)) from None

    def squeeze_config(self) -> SqueezeConfig:
        q = self.squeeze
        return SqueezeConfig(Threshold(q.threshold_mode, q.threshold), q.freq_bins,
                             (q.freq_lo, q.freq_hi), q.kernel, q.alpha or None)

    def render_spec(self) -> ev.RenderSpec:
        r = self.render
        return ev.RenderSpec(r.theta or None, r.q_mode, r.q, r.excluded)


def _coerce(section, key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{section}.{key} must be a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{section}.{key} must be a list")
        proto = default[0] if default else None
        if isinstance(proto, (int, float, str)) and not isinstance(proto, bool):
            return [_coerce(section, key, v, proto) for v in value]
        return list(value)
    return value


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return RunConfig.from_dict(data, path.parent)


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


# ---------------------------------------------------------------------------
# pipeline pieces shared by the commands

def build_signal(cfg: RunConfig, base_dir: Path = Path(".")):
    s = cfg.signal
    if s.kind == "class_c":
        return make_class_c_signal(s.seed, s.rate, s.duration, s.separation_d)
    if s.kind == "deterministic":
        return deterministic_signal(s.rate, s.duration)
    sig = read_signal_bin(base_dir / s.path)
    gt = read_ground_truth_csv(base_dir / s.ground_truth, sig.rate_hz) if s.ground_truth else None
    return sig, gt


def build_family(m: MethodCfg, J: Optional[int] = None):
    J = m.resolved_J() if J is None else J
    if m.backend == "cwt":
        return morse_wavelets(m.beta, m.gamma, J)
    return hermite_windows(J, m.sigma)


def transform_grid(cfg: RunConfig):
    t = cfg.transform
    if cfg.method.backend == "cwt":
        return ScaleGrid.from_band(t.f_lo, t.f_hi, t.voices)
    return default_stft_grid(t.stft_f_hi, t.stft_bins)


def noisy_version(cfg: RunConfig, clean: SampledSignal, noise: Optional[NoiseCfg] = None):
    n = cfg.noise if noise is None else noise
    if n.kind == "none":
        return clean, 0.0
    return add_noise(clean, NoiseSpec(NoiseKind(n.kind), n.snr_db, n.seed))


def analyze_signal(cfg: RunConfig, y: SampledSignal, method: Optional[str] = None, tt=None):
    """Run the configured method on ``y``; returns (SqueezedTF, TvPS)."""
    m = cfg.method
    method = m.name if method is None else method
    sq = cfg.squeeze_config()
    if tt is None:
        tt = taper_transforms(y, build_family(m), transform_grid(cfg), cfg.transform.hop)
    if method == "sst":
        S = sst_single(tt, 0, sq)
    elif method == "mtsst":
        S = mtsst_from(tt, sq)
    else:
        return conceft_from(tt, random_unit_vectors(m.N, tt.J, m.projection_seed), sq, m.flip)
    return S, S.tvps()


def eval_mask(cfg: RunConfig, S_like, gt: GroundTruth, hw=None):
    if not cfg.evaluate.exclude_boundary:
        return None
    f_min = min(float(c.if_hz[c.alive(gt.times)].min()) for c in gt.components)
    hw_const, hw_inverse = hw if hw is not None else (S_like.hw_const, S_like.hw_inverse)
    half = cfg.evaluate.boundary_factor * (hw_const + hw_inverse / f_min)
    t = S_like.time_grid
    return (t - t[0] >= half) & (t[-1] - t >= half)


def evaluate_tvps(cfg: RunConfig, P: TvPS, gt: GroundTruth, hw) -> ev.OTReport:
    ideal = ideal_tvps(gt, P.freq_grid, P.time_grid)
    mask = eval_mask(cfg, P, gt, hw)
    return ev.ot_distance(P, TvPS(ideal, P.freq_grid, P.time_grid), cfg.evaluate.alpha, mask)


def _hw(S: SqueezedTF):
    return S.hw_const, S.hw_inverse


# ---------------------------------------------------------------------------
# commands

def cmd_simulate(cfg: RunConfig, out: Path, base: Path):
    out.mkdir(parents=True, exist_ok=True)
    clean, gt = build_signal(cfg, base)
    if gt is None:
        raise ConfigError("simulate needs a generated signal or a ground-truth file")
    noisy, sigma = noisy_version(cfg, clean)
    realized = snr_db(clean.samples, (noisy.samples - clean.samples) / sigma, sigma) if sigma else None
    write_signal_bin(out / "clean.bin", clean)
    write_signal_bin(out / "noisy.bin", noisy)
    write_signal_csv(out / "noisy.csv", noisy)
    write_ground_truth_csv(out / "ground_truth.csv", gt)
    manifest = {"config": cfg.to_dict(),
                "realized": {"sigma": sigma, "snr_db": realized if realized is not None else "inf",
                             "n_samples": len(clean.samples), "components": len(gt.components)}}
    atomic_write_text(out / "manifest.toml", tomli_w.dumps(manifest))
    emit("simulate.done", sigma=sigma, snr_db=realized, out=str(out))


def _load_analysis_input(cfg: RunConfig, out: Path, base: Path):
    if cfg.signal.kind == "file":
        return read_signal_bin(base / cfg.signal.path)
    p = out / "noisy.bin"
    if not p.exists():
        raise FileNotFoundError(f"{p}: run simulate first or set signal.kind = 'file'")
    return read_signal_bin(p)


def cmd_analyze(cfg: RunConfig, out: Path, base: Path):
    y = _load_analysis_input(cfg, out, base)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    S, P = analyze_signal(cfg, y)
    S.write_bin(out / "squeezed.cft2")
    P.write_bin(out / "tvps.cft2")
    diag = {"method": cfg.method.name, "backend": cfg.method.backend,
            "J": cfg.method.resolved_J(), "N": cfg.method.N if cfg.method.name == "conceft" else None,
            "hw_const": S.hw_const, "hw_inverse": S.hw_inverse, "recon_constant": S.recon_constant,
            **{k: v for k, v in S.diagnostics.items() if k != "members"}}
    if "members" in S.diagnostics:
        diag["members"] = S.diagnostics["members"]
    ev.write_json(diag, out / "diagnostics.json")
    emit("analyze.done", seconds=round(time.perf_counter() - t0, 3), method=cfg.method.name,
         dropped_abs=diag.get("dropped_abs"))


def _read_diag(out: Path) -> dict:
    with open(out / "diagnostics.json") as fh:
        return json.load(fh)


def _ground_truth(cfg: RunConfig, out: Path, base: Path, rate: float) -> GroundTruth:
    if cfg.signal.kind == "file":
        if not cfg.signal.ground_truth:
            raise ConfigError("evaluate needs signal.ground_truth for file signals")
        return read_ground_truth_csv(base / cfg.signal.ground_truth, rate)
    return read_ground_truth_csv(out / "ground_truth.csv", rate)


def cmd_evaluate(cfg: RunConfig, out: Path, base: Path):
    P = TvPS.read_bin(out / "tvps.cft2")
    d = _read_diag(out)
    rate = 1.0 / (P.time_grid[1] - P.time_grid[0]) * cfg.transform.hop
    gt = _ground_truth(cfg, out, base, rate)
    rep = evaluate_tvps(cfg, P, gt, (d["hw_const"], d["hw_inverse"]))
    rep.write(out / "ot.csv", out / "ot.json")
    emit("evaluate.done", mean_ot=rep.mean, skipped=rep.skipped_slices)
    if cfg.evaluate.compare:
        y = _load_analysis_input(cfg, out, base)
        tt = taper_transforms(y, build_family(cfg.method), transform_grid(cfg), cfg.transform.hop)
        rows = []
        for name in cfg.evaluate.compare:
            S, Pm = analyze_signal(cfg, y, name, tt)
            r = evaluate_tvps(cfg, Pm, gt, _hw(S))
            rows.append((name, r.mean))
            emit("evaluate.compare", method=name, mean_ot=r.mean)
        text = "method,mean_ot\n" + "".join(f"{n},{v:.17g}\n" for n, v in rows)
        atomic_write_text(out / "comparison.csv", text)


def cmd_render(cfg: RunConfig, out: Path, base: Path):
    P = TvPS.read_bin(out / "tvps.cft2")
    spec = cfg.render_spec()
    mask = None
    if spec.excluded:
        d = _read_diag(out)
        rate = 1.0 / (P.time_grid[1] - P.time_grid[0]) * cfg.transform.hop
        gt = _ground_truth(cfg, out, base, rate)
        mask = eval_mask(cfg, P, gt, (d["hw_const"], d["hw_inverse"]))
    R, q = ev.render_levels(P, spec, mask)
    img = ev.render(P, spec, mask)
    ev.save_png(img, out / "tvps.png")
    ev.write_levels_csv(R, P, out / "tvps_levels.csv")
    panels = [img]
    gt_path = out / "ground_truth.csv"
    if gt_path.exists() or cfg.signal.ground_truth:
        rate = 1.0 / (P.time_grid[1] - P.time_grid[0]) * cfg.transform.hop
        gt = _ground_truth(cfg, out, base, rate)
        ideal = TvPS(ideal_tvps(gt, P.freq_grid, P.time_grid), P.freq_grid, P.time_grid)
        gimg = ev.render(ideal, spec)
        ev.save_png(gimg, out / "itvps.png")
        panels = [gimg, img]
    ev.save_png(ev.compose_panels(panels), out / "panel.png")
    emit("render.done", q=q, out=str(out / "tvps.png"))


# -- sweeps ----------------------------------------------------------------

def _cell_elbow(args):
    cfg_dict, base, repeat = args
    cfg = RunConfig.from_dict(cfg_dict)
    clean, gt = build_signal(cfg, Path(base))
    noise = dataclasses.replace(cfg.noise, seed=cfg.noise.seed + repeat)
    y, _ = noisy_version(cfg, clean, noise)
    tt = taper_transforms(y, build_family(cfg.method), transform_grid(cfg), cfg.transform.hop)
    res = []
    for N in cfg.sweep.N_values:
        proj = random_unit_vectors(N, tt.J, _mix(cfg.method.projection_seed, repeat, N))
        S, P = conceft_from(tt, proj, cfg.squeeze_config(), cfg.method.flip)
        res.append(evaluate_tvps(cfg, P, gt, _hw(S)).mean)
    return res


def _cell_grid(args):
    cfg_dict, base, beta, gamma, J = args
    cfg = RunConfig.from_dict(cfg_dict)
    m = dataclasses.replace(cfg.method, beta=beta, gamma=gamma, J=J, backend="cwt")
    try:
        fam = build_family(m)
    except ConstructionError as e:
        return {"beta": beta, "gamma": gamma, "J": J, "error": str(e)}
    clean, gt = build_signal(cfg, Path(base))
    y, _ = noisy_version(cfg, clean)
    tt = taper_transforms(y, fam, transform_grid(cfg), cfg.transform.hop)
    vals = []
    for rep in range(cfg.sweep.repeats):
        proj = random_unit_vectors(cfg.sweep.grid_N, J, _mix(cfg.method.projection_seed, rep, J))
        S, P = conceft_from(tt, proj, cfg.squeeze_config(), cfg.method.flip)
        vals.append(evaluate_tvps(cfg, P, gt, _hw(S)).mean)
    return {"beta": beta, "gamma": gamma, "J": J, "mean_ot": float(np.mean(vals))}


def _cell_snr(args):
    cfg_dict, base, kind, snr, seed = args
    cfg = RunConfig.from_dict(cfg_dict)
    clean, gt = build_signal(cfg, Path(base))
    noise = NoiseCfg(kind, snr, seed)
    y, _ = noisy_version(cfg, clean, noise)
    tt = taper_transforms(y, build_family(cfg.method), transform_grid(cfg), cfg.transform.hop)
    out = {}
    for name in cfg.sweep.methods:
        S, P = analyze_signal(cfg, y, name, tt)
        out[name] = evaluate_tvps(cfg, P, gt, _hw(S)).mean
    return out


def _mix(*parts) -> int:
    return int(np.random.SeedSequence(list(int(p) for p in parts)).generate_state(1)[0])


def grid_x(beta: float, gamma: float) -> int:
    """Position on the heat-map x axis: beta cycles fastest within each gamma."""
    return int(round(6 * (gamma - 3) + (beta - 20) / 10 + 1))


def _pool_map(fn, jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def cmd_sweep(cfg: RunConfig, out: Path, base: Path, threads: int = 1):
    out.mkdir(parents=True, exist_ok=True)
    sw = cfg.sweep
    cd = cfg.to_dict()
    if sw.axis == "N":
        jobs = [(cd, str(base), r) for r in range(sw.repeats)]
        res = np.array(_pool_map(_cell_elbow, jobs, threads))
        raw = io.StringIO()
        raw.write("repeat," + ",".join(f"N{n}" for n in sw.N_values) + "\n")
        np.savetxt(raw, np.column_stack([np.arange(sw.repeats), res]), delimiter=",", fmt="%.17g")
        atomic_write_text(out / "elbow_raw.csv", raw.getvalue())
        sd = res.std(axis=0, ddof=1) if sw.repeats > 1 else np.zeros(res.shape[1])
        lines = ["N,mean_ot,sd,se"] + [
            f"{n},{m:.17g},{s:.17g},{s / np.sqrt(sw.repeats):.17g}"
            for n, m, s in zip(sw.N_values, res.mean(axis=0), sd)]
        atomic_write_text(out / "elbow.csv", "\n".join(lines) + "\n")
        emit("sweep.done", axis="N", means=list(res.mean(axis=0)))
    elif sw.axis == "grid":
        jobs = [(cd, str(base), b, g, J) for J in sw.Js for g in sw.gammas for b in sw.betas]
        res = _pool_map(_cell_grid, jobs, threads)
        lines = ["J,gamma,beta,x,mean_ot"]
        for r in res:
            if "error" in r:
                emit("sweep.cell_infeasible", **r)
                val = float("nan")
            else:
                val = r["mean_ot"]
            lines.append(f"{r['J']},{r['gamma']:g},{r['beta']:g},{grid_x(r['beta'], r['gamma'])},{val:.17g}")
        atomic_write_text(out / "heatmap.csv", "\n".join(lines) + "\n")
        xs = sorted({grid_x(b, g) for g in sw.gammas for b in sw.betas})
        M = np.full((len(sw.Js), len(xs)), np.nan)
        for r in res:
            if "mean_ot" in r:
                M[sw.Js.index(r["J"]), xs.index(grid_x(r["beta"], r["gamma"]))] = r["mean_ot"]
        _save_heatmap(M, out / "heatmap.png")
        emit("sweep.done", axis="grid", cells=len(res))
    else:
        jobs = [(cd, str(base), k, snr, cfg.noise.seed + i)
                for k in sw.noise_kinds for snr in sw.snr_values for i in range(sw.repeats)]
        res = _pool_map(_cell_snr, jobs, threads)
        lines = ["noise,snr_db,method,mean_ot,sd"]
        i = 0
        for k in sw.noise_kinds:
            for snr in sw.snr_values:
                block = res[i:i + sw.repeats]
                i += sw.repeats
                for name in sw.methods:
                    v = np.array([b[name] for b in block])
                    sd = v.std(ddof=1) if len(v) > 1 else 0.0
                    lines.append(f"{k},{snr:g},{name},{v.mean():.17g},{sd:.17g}")
        atomic_write_text(out / "snr_table.csv", "\n".join(lines) + "\n")
        emit("sweep.done", axis="snr", cells=len(res))


def _save_heatmap(M: np.ndarray, path, cell: int = 12):
    """Lighter cells mean smaller OT distance; missing cells are mid gray."""
    finite = np.isfinite(M)
    lo, hi = (M[finite].min(), M[finite].max()) if finite.any() else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    g = np.where(finite, 255 * (1 - (M - lo) / span), 128)
    img = np.kron(np.rint(g[::-1]).astype(np.uint8), np.ones((cell, cell), dtype=np.uint8))
    from PIL import Image
    ev.save_png(Image.fromarray(img, mode="L"), path)


# ---------------------------------------------------------------------------
# entry point

COMMANDS = ("simulate", "analyze", "evaluate", "sweep", "render")


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("CONCEFT_THREADS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ConfigError(f"CONCEFT_THREADS={env!r} is not an integer") from None


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="conceft", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="output directory (overrides config 'output')")
    ap.add_argument("--seed", type=int, help="overrides signal.seed and noise.seed")
    ap.add_argument("--threads", type=int, help="worker processes for sweeps")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.signal.seed = args.seed
            cfg.noise.seed = args.seed
        base = Path(args.config).resolve().parent
        out = Path(args.out) if args.out else base / cfg.output
        threads = _threads(args.threads)
        emit("start", command=args.command, config=str(args.config), out=str(out))
        if args.command == "sweep":
            cmd_sweep(cfg, out, base, threads)
        else:
            {"simulate": cmd_simulate, "analyze": cmd_analyze, "evaluate": cmd_evaluate,
             "render": cmd_render}[args.command](cfg, out, base)
        return EXIT_OK
    except (ConfigError, InvalidParameter) as e:
        emit("error", kind="config", message=str(e))
        return EXIT_CONFIG
    except (OSError, FormatError) as e:
        emit("error", kind="io", message=str(e))
        return EXIT_IO
    except (SqueezeError, TransformError, ConstructionError, ev.EvaluationError,
            FloatingPointError, np.linalg.LinAlgError) as e:
        emit("error", kind="numerical", message=str(e))
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
