import json
import os

import numpy as np
import pytest

from kdlight.config import load_scenario
from kdlight.harness import io
from kdlight.harness import sweep as sweep_mod
from kdlight.harness.cli import main
from kdlight.harness.sweep import parse_axis, sweep_cells
from kdlight.tdse import NumericalInstabilityError

HERE = os.path.dirname(__file__)
DESK = os.path.join(HERE, "..", "src", "kdlight", "harness", "scenarios", "desk")

TINY = """
name: tiny
description: small pulsed standing wave used by the harness tests
config:
  beams:
    - {mode_n: 0, wavelength: 300, waist: 300, pulse_sigma: 2, peak_field: 5, direction: 1}
    - {mode_n: 0, wavelength: 300, waist: 300, pulse_sigma: 2, peak_field: 5, direction: -1}
  electron: {kinetic_energy: 1000, width_longitudinal: 30, width_transverse: 30, center: [0, 0]}
  grid_schrodinger: {nx: 64, ny: 64, spacing: 6, center: [0, 0]}
  start_time: -6
  total_time: 12
  polarization: y
analysis:
  transverse: true
  orders: true
  longitudinal: true
  energy: true
  energy_range: [-1.0, 1.0]
  momentum_map: true
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY)
    return str(p)


def _checksums(run_dir):
    with open(os.path.join(run_dir, "manifest.json")) as fh:
        return {f["path"]: f["sha256"] for f in json.load(fh)["files"]}


def test_validate_bundled_scenarios(capsys):
    paths = sorted(os.path.join(DESK, f) for f in os.listdir(DESK))
    assert main(["validate", *paths]) == 0
    assert main(["validate", "-v", os.path.join(DESK, "free.yaml")]) == 0
    assert "n_steps" in capsys.readouterr().out


def test_corrupted_scenario_exits_2_with_location(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text(TINY.replace("waist: 300, pulse_sigma: 2", "waist: [300, pulse_sigma: 2", 1))
    assert main(["validate", str(p)]) == 2
    assert main(["run", str(p), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "line" in err and "column" in err


def test_invalid_value_exits_2(tmp_path, capsys):
    p = tmp_path / "neg.yaml"
    p.write_text(TINY.replace("kinetic_energy: 1000", "kinetic_energy: -1000"))
    assert main(["run", str(p), "--out", str(tmp_path)]) == 2
    assert "kinetic_energy" in capsys.readouterr().err


def test_missing_file_exits_4(tmp_path):
    assert main(["run", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 4
    assert main(["plot", str(tmp_path / "nothing")]) == 4


def test_instability_exits_3(tiny, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NumericalInstabilityError(7, 1.0, 0.5, 0.1)

    monkeypatch.setattr("kdlight.harness.cli.run_scenario", boom)
    assert main(["run", tiny, "--out", str(tmp_path)]) == 3


def test_empty_scenario_keeps_norm(tmp_path, capsys):
    assert main(["run", os.path.join(DESK, "empty.yaml"), "--out", str(tmp_path), "-q"]) == 0
    summary = json.loads(capsys.readouterr().out)
    v = summary["variants"]["main"]
    assert v["final_norm"] + v["absorbed_fraction"] == pytest.approx(1.0, abs=1e-9)
    assert os.path.exists(tmp_path / "empty" / "manifest.json")


def test_run_outputs_and_reproducibility(tiny, tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", tiny, "--out", str(a), "-q"]) == 0
    assert main(["run", tiny, "--out", str(b), "-q"]) == 0
    ca, cb = _checksums(a / "tiny"), _checksums(b / "tiny")
    assert ca == cb
    for name in ("config.json", "spectrum_transverse.csv", "orders.csv", "energy_gain.csv", "momentum_map.f64", "summary.json"):
        assert name in ca
    with open(a / "tiny" / "manifest.json") as fh:
        man = json.load(fh)
    assert len(man["config_hash"]) == 64 and "numpy" in man["versions"]
    dens, meta = io.read_array2d(str(a / "tiny" / "momentum_map.f64"))
    assert dens.shape == tuple(meta["shape"]) and np.all(dens >= 0)


def test_env_var_sets_output_root(tiny, tmp_path, monkeypatch):
    monkeypatch.setenv("KDLIGHT_OUTPUT_ROOT", str(tmp_path / "env"))
    assert main(["run", tiny, "-q"]) == 0
    assert os.path.exists(tmp_path / "env" / "tiny" / "manifest.json")


def test_plot_is_idempotent(tiny, tmp_path):
    assert main(["run", tiny, "--out", str(tmp_path), "-q", "--plot"]) == 0
    run = tmp_path / "tiny"
    pngs = sorted(p for p in os.listdir(run) if p.endswith(".png"))
    assert pngs
    first = {p: io.sha256_file(str(run / p)) for p in os.listdir(run) if p.startswith("plot_")}
    assert main(["plot", str(run)]) == 0
    second = {p: io.sha256_file(str(run / p)) for p in os.listdir(run) if p.startswith("plot_")}
    assert first == second


def test_plot_reports_missing_inputs(tiny, tmp_path, capsys):
    assert main(["run", tiny, "--out", str(tmp_path), "-q"]) == 0
    os.remove(tmp_path / "tiny" / "orders.csv")
    assert main(["plot", str(tmp_path / "tiny"), "--kind", "orders"]) == 4
    assert "orders.csv" in capsys.readouterr().err


def test_parse_axis_forms():
    a = parse_axis("beams.*.pulse_sigma=2,4,6")
    assert a.values == (2, 4, 6) and a.overrides(4) == {"beams.*.pulse_sigma": 4}
    z = parse_axis("electron.kinetic_energy|electron.center.0=1000|-5,4000|-9.5")
    assert z.values == ((1000, -5), (4000, -9.5))
    assert z.overrides((1000, -5)) == {"electron.kinetic_energy": 1000, "electron.center.0": -5}
    for bad in ("nopath", "a=", "a|b=1,2|3", "a=nan"):
        with pytest.raises(ValueError):
            parse_axis(bad)


def test_job_cap(tiny, tmp_path):
    scn = load_scenario(tiny)
    with pytest.raises(ValueError):
        sweep_cells(scn, [parse_axis("total_time=" + ",".join(str(10 + i) for i in range(70)))])
    assert main(["sweep", tiny, "--axis", "total_time=10,11,12", "--job-cap", "2", "--out", str(tmp_path)]) == 2


def test_single_point_sweep_matches_run_and_resumes(tiny, tmp_path, capsys):
    assert main(["run", tiny, "--out", str(tmp_path / "run"), "-q"]) == 0
    camp = tmp_path / "camp"
    assert main(["sweep", tiny, "--axis", "total_time=12", "--out", str(camp), "--workers", "1", "-q"]) == 0
    run_sums = _checksums(tmp_path / "run" / "tiny")
    cell_sums = _checksums(camp / "cells" / "cell_0000")
    for name in ("orders.csv", "spectrum_transverse.csv", "energy_gain.csv", "summary.json", "config.json"):
        assert run_sums[name] == cell_sums[name]
    capsys.readouterr()
    assert main(["sweep", tiny, "--axis", "total_time=12", "--out", str(camp), "--workers", "1"]) == 0
    assert "already complete" in capsys.readouterr().err
    lines = (camp / "campaign_index.jsonl").read_text().splitlines()
    assert len(lines) == 1
    rows = io.read_table(str(camp / "aggregate.csv"))
    assert rows[0]["status"] == "ok" and rows[0]["total_time"] == "12"


def test_failed_cells_exit_1(tiny, tmp_path, monkeypatch):
    real = sweep_mod.run_scenario

    def flaky(scn, root, *a, **k):
        if scn.config.total_time > 11.5:
            raise NumericalInstabilityError(1, 0.0, 1.0, 0.1)
        return real(scn, root, *a, **k)

    monkeypatch.setattr(sweep_mod, "run_scenario", flaky)
    camp = tmp_path / "camp"
    assert main(["sweep", tiny, "--axis", "total_time=11,12", "--out", str(camp), "--workers", "1", "-q"]) == 1
    recs = [json.loads(x) for x in (camp / "campaign_index.jsonl").read_text().splitlines()]
    assert sorted(r["status"] for r in recs) == ["failed", "ok"]
    # resuming reruns only the failed cell
    monkeypatch.setattr(sweep_mod, "run_scenario", real)
    assert main(["sweep", tiny, "--axis", "total_time=11,12", "--out", str(camp), "--workers", "1", "-q"]) == 0
    assert len((camp / "campaign_index.jsonl").read_text().splitlines()) == 3


def test_zipped_axis_sweep(tiny, tmp_path):
    camp = tmp_path / "z"
    axis = "electron.kinetic_energy|total_time=1000|10,2000|8"
    assert main(["sweep", tiny, "--axis", axis, "--out", str(camp), "--workers", "1", "-q"]) == 0
    rows = io.read_table(str(camp / "aggregate.csv"))
    assert [r["electron.kinetic_energy|total_time"] for r in rows] == ["1000|10", "2000|8"]
    with open(camp / "cells" / "cell_0001" / "config.json") as fh:
        cfg = json.load(fh)
    assert cfg["electron"]["kinetic_energy"] == 2000 and cfg["total_time"] == 8


@pytest.mark.parametrize(
    "argv, files",
    [
        (["volkov-cw", "--e0", "2,5"], ["volkov.csv", "volkov_counts.csv", "plot_volkov.png"]),
        (["volkov-pulsed"], ["volkov.csv", "volkov_counts.csv"]),
        (["compton", "--nv", "20", "--ntau", "15"], ["compton_map.f64", "plot_compton.png"]),
        (["convolve"], ["convolution.csv", "convolution_summary.json"]),
        (["rho", "--nw", "11", "--ne", "31"], ["rho_map.f64", "rho_unity_locus.csv", "rho_summary.json"]),
    ],
)
def test_oracles(argv, files, tmp_path, capsys):
    out = tmp_path / argv[0]
    assert main(["oracle", *argv, "--out", str(out), "--plot"]) == 0
    for f in files:
        assert os.path.exists(out / f), f


def test_oracle_rejects_bad_parameters(tmp_path):
    assert main(["oracle", "volkov-cw", "--waist", "-600", "--out", str(tmp_path)]) == 2
    assert main(["oracle", "volkov-pulsed", "--tau", "0", "--out", str(tmp_path)]) == 2
