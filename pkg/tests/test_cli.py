import json
import sys
from pathlib import Path

import numpy as np
import pytest

from conceft import cli
from conceft.squeeze import TvPS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SMALL = """
output = "run"
[signal]
kind = "class_c"
seed = 3
duration = 20.0
[noise]
kind = "gaussian"
snr_db = 0.0
seed = 11
[method]
name = "{method}"
J = {J}
N = 4
[transform]
voices = 12
f_lo = 1.0
[squeeze]
freq_bins = 256
"""


def write_cfg(tmp_path, method="conceft", J=0, extra="", name="run.toml"):
    p = tmp_path / name
    p.write_text(SMALL.format(method=method, J=J) + extra)
    return p


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_defaults_mirror_calibrated_values():
    cfg = cli.RunConfig.from_dict({})
    assert (cfg.method.beta, cfg.method.gamma, cfg.method.resolved_J(), cfg.method.N) == (30.0, 9.0, 2, 20)
    stft = cli.RunConfig.from_dict({"method": {"backend": "stft"}})
    assert stft.method.sigma == 5 / 16 and stft.method.resolved_J() == 4
    assert cfg.render.theta == 5.0 and cfg.render.q == 5.718
    assert cfg.evaluate.alpha == 0.0


def test_config_round_trip(tmp_path):
    cfg = cli.load_config(write_cfg(tmp_path))
    again = cli.RunConfig.from_dict(tomllib.loads(cli.dump_config(cfg)))
    assert again == cfg


@pytest.mark.parametrize("body,code", [
    ("[method]\nname = 'wavelet'\n", 2),
    ("[bogus]\nx = 1\n", 2),
    ("[method]\nN = 'many'\n", 2),
    ("not toml at all [", 2),
    ("[signal]\nkind = 'file'\npath = 'missing.bin'\n", 2),
])
def test_config_errors_exit_2(tmp_path, body, code):
    p = tmp_path / "bad.toml"
    p.write_text(body)
    assert run("simulate", "--config", p) == code


def test_missing_input_exit_4(tmp_path):
    assert run("analyze", "--config", write_cfg(tmp_path)) == 4


def test_numerical_failure_exit_3(tmp_path):
    # STFT grid above Nyquist is a numerical/transform error
    p = write_cfg(tmp_path, extra="", name="a.toml")
    text = p.read_text().replace("[transform]", "[transform]\nstft_f_hi = 100.0").replace(
        "[method]", "[method]\nbackend = \"stft\"")
    p.write_text(text)
    assert run("simulate", "--config", p) == 0
    assert run("analyze", "--config", p) == 3


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipe")
    p = write_cfg(tmp)
    for c in ("simulate", "analyze", "evaluate", "render"):
        assert run(c, "--config", p) == 0
    return tmp, p


def test_simulate_manifest(pipeline):
    tmp, p = pipeline
    man = tomllib.loads((tmp / "run" / "manifest.toml").read_text())
    assert abs(man["realized"]["snr_db"]) < 1e-9
    assert cli.RunConfig.from_dict(man["config"]) == cli.load_config(p)
    for f in ("clean.bin", "noisy.bin", "noisy.csv", "ground_truth.csv", "squeezed.cft2", "tvps.cft2",
              "diagnostics.json", "ot.csv", "ot.json", "tvps.png", "itvps.png", "panel.png"):
        assert (tmp / "run" / f).exists(), f


def test_pipeline_is_byte_reproducible(pipeline, tmp_path):
    tmp, _ = pipeline
    p = write_cfg(tmp_path)
    for c in ("simulate", "analyze", "evaluate", "render"):
        assert run(c, "--config", p) == 0
    for f in sorted((tmp / "run").iterdir()):
        assert f.read_bytes() == (tmp_path / "run" / f.name).read_bytes(), f.name


def test_diagnostics_report_threshold_and_drops(pipeline):
    tmp, _ = pipeline
    d = json.loads((tmp / "run" / "diagnostics.json").read_text())
    assert d["J"] == 2 and d["N"] == 4
    assert "dropped_abs" in d and len(d["gamma"]) == 4


def test_deterministic_signal_has_three_components(tmp_path):
    p = tmp_path / "det.toml"
    p.write_text('[signal]\nkind = "deterministic"\nduration = 10.0\n[noise]\nkind = "none"\n')
    assert run("simulate", "--config", p) == 0
    man = tomllib.loads((tmp_path / "out" / "manifest.toml").read_text())
    assert man["realized"]["components"] == 3


def test_mtsst_one_taper_equals_sst(tmp_path):
    outs = {}
    for m, J in (("mtsst", 1), ("sst", 0)):
        d = tmp_path / m
        d.mkdir()
        p = write_cfg(d, m, J)
        assert run("simulate", "--config", p) == 0
        assert run("analyze", "--config", p) == 0
        outs[m] = (d / "run" / "squeezed.cft2").read_bytes()
    assert outs["mtsst"] == outs["sst"]


def test_evaluate_ideal_against_itself_is_zero(pipeline):
    tmp, p = pipeline
    from conceft.signal_model import ideal_tvps, read_ground_truth_csv
    P = TvPS.read_bin(tmp / "run" / "tvps.cft2")
    gt = read_ground_truth_csv(tmp / "run" / "ground_truth.csv", 160.0)
    ideal = TvPS(ideal_tvps(gt, P.freq_grid, P.time_grid), P.freq_grid, P.time_grid)
    cfg = cli.load_config(p)
    assert cli.evaluate_tvps(cfg, ideal, gt, (0.0, 16.0)).mean == 0.0


def test_render_twice_identical(pipeline):
    tmp, p = pipeline
    first = (tmp / "run" / "tvps.png").read_bytes()
    assert run("render", "--config", p) == 0
    assert (tmp / "run" / "tvps.png").read_bytes() == first


def test_single_cell_sweep_matches_analyze_evaluate(pipeline, tmp_path):
    tmp, p = pipeline
    sweep = tmp_path / "sweep.toml"
    sweep.write_text(p.read_text() + "[sweep]\naxis = \"N\"\nN_values = [4]\nrepeats = 1\n")
    assert run("sweep", "--config", sweep) == 0
    # the elbow cell draws projections from a per-(repeat, N) seed; replay it through the library
    cfg = cli.load_config(sweep)
    clean, gt = cli.build_signal(cfg)
    y, _ = cli.noisy_version(cfg, clean)
    cfg.method.projection_seed = cli._mix(0, 0, 4)
    S, P = cli.analyze_signal(cfg, y)
    want = cli.evaluate_tvps(cfg, P, gt, (S.hw_const, S.hw_inverse)).mean
    row = (tmp_path / "run" / "elbow.csv").read_text().splitlines()[1].split(",")
    assert float(row[1]) == want


def test_grid_sweep_size_and_layout():
    cfg = cli.RunConfig()
    sw = cfg.sweep
    cells = [(b, g, J) for J in sw.Js for g in sw.gammas for b in sw.betas]
    assert len(cells) == 192
    xs = sorted({cli.grid_x(b, g) for b, g, _ in cells})
    assert xs == list(range(1, 49))
