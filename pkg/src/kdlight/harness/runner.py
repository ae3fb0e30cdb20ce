"""Run orchestration: scenario -> interaction runs -> analysed outputs on disk."""

from __future__ import annotations

import hashlib
import math
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy

from .. import __version__
from .. import diagnostics as dg
from ..config import Scenario, config_hash, config_to_dict
from ..model import SimulationConfig
from ..tdse import AtTimes, WavefunctionState, run_interaction
from ..volkov import populated_order_count
from . import io

__all__ = ["OUTPUT_ROOT_ENV", "output_root", "VariantResult", "run_scenario", "analyse_state", "write_manifest"]

OUTPUT_ROOT_ENV = "KDLIGHT_OUTPUT_ROOT"


def output_root(default: str = "runs") -> str:
    return os.environ.get(OUTPUT_ROOT_ENV, default)


def versions() -> dict:
    return {
        "kdlight": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


@dataclass
class VariantResult:
    name: str
    directory: str
    config_hash: str
    summary: dict
    files: list = field(default_factory=list)
    transverse: Optional[dg.Spectrum] = None


def _k_ph(cfg: SimulationConfig) -> float:
    """Reference photon wavenumber: the longest active wavelength."""
    beams = cfg.active_beams
    return min(b.k for b in beams) if beams else 0.0


def _clean(v):
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    return v


def analyse_state(state: WavefunctionState, cfg: SimulationConfig, analysis, out_dir: str, chash: str) -> tuple[dict, list, Optional[dg.Spectrum]]:
    """Write every requested diagnostic of ``state``; returns (summary, files, transverse)."""
    files: list[tuple[str, str]] = []
    summary: dict = {}
    trans = None
    k_ph = _k_ph(cfg)
    if analysis.transverse or analysis.orders or analysis.compare:
        trans = dg.momentum_spectrum(state, "transverse", pad=analysis.pad_transverse)
        if analysis.transverse:
            files.append((io.write_spectrum_csv(os.path.join(out_dir, "spectrum_transverse.csv"), trans), "spectrum"))
    if analysis.orders and k_ph > 0:
        orders, weights = dg.order_populations(trans, k_ph, analysis.order_spacing_multiple)
        files.append(
            (io.write_table(os.path.join(out_dir, "orders.csv"), ["order", "probability"], list(zip(orders.tolist(), weights))), "table")
        )
        summary["order_count"] = populated_order_count(weights, analysis.rel_threshold, orders)
        summary["order_spacing_multiple"] = analysis.order_spacing_multiple
    if analysis.longitudinal or analysis.energy:
        lon = dg.momentum_spectrum(state, "longitudinal", pad=analysis.pad_longitudinal)
        if analysis.longitudinal:
            files.append((io.write_spectrum_csv(os.path.join(out_dir, "spectrum_longitudinal.csv"), lon), "spectrum"))
        if analysis.energy:
            es = dg.energy_gain_spectrum(lon, cfg.electron, analysis.energy_step, tuple(analysis.energy_range), constants=cfg.constants)
            files.append((io.write_spectrum_csv(os.path.join(out_dir, "energy_gain.csv"), es), "spectrum"))
            level = analysis.rel_threshold * es.density.max()
            populated = es.axis[es.density >= level]
            summary["energy_extent"] = [float(populated[0]), float(populated[-1])] if populated.size else None
            summary["energy_clipped_weight"] = es.clipped_weight
    if analysis.sidebands and k_ph > 0:
        per_order = dg.order_energy_spectra(
            state,
            cfg.electron,
            k_ph,
            analysis.order_spacing_multiple,
            pad_x=analysis.pad_longitudinal,
            energy_step=analysis.energy_step,
            energy_range=tuple(analysis.energy_range),
            constants=cfg.constants,
        )
        scat = dg.scattered_energy_spectrum(per_order, analysis.sideband_min_order)
        files.append((io.write_spectrum_csv(os.path.join(out_dir, "energy_gain_scattered.csv"), scat), "spectrum"))
        stats = dg.detect_sidebands(scat, analysis.rel_threshold)
        rows = [(i, float(p)) for i, p in enumerate(stats.peaks)]
        files.append((io.write_table(os.path.join(out_dir, "sidebands.csv"), ["index", "energy_gain_eV"], rows), "table"))
        summary["sidebands"] = {
            "count": stats.count,
            "mean_spacing_eV": stats.mean_spacing,
            "standard_error_eV": stats.standard_error,
            "median_spacing_eV": stats.median_spacing,
            "low_confidence": stats.low_confidence,
            "min_order": analysis.sideband_min_order,
        }
    if analysis.momentum_map and cfg.output.momentum_map:
        mm = dg.momentum_map(state, pad_x=1, crop=1e-8)
        path = os.path.join(out_dir, "momentum_map.f64")
        p, side = io.write_array2d(
            path,
            mm.density,
            ("k_longitudinal", "k_transverse"),
            (mm.dkx, mm.dky),
            (mm.kx[0], mm.ky[0]),
            ("rad/nm", "rad/nm"),
            "nm^2",
            chash,
        )
        files += [(p, "array2d"), (side, "sidecar")]
    return _clean(summary), files, trans


def _norm_history(path: str, state: WavefunctionState) -> str:
    hist = state.norm_history
    stride = max(1, len(hist) // 2000)
    rows = [(float(t), float(n)) for t, n in hist[::stride]]
    if hist and rows[-1][0] != hist[-1][0]:
        rows.append((float(hist[-1][0]), float(hist[-1][1])))
    return io.write_table(path, ["t_fs", "norm"], rows)


def write_manifest(directory: str, name: str, chash: str, files, started: float, finished: float, audit: dict, extra=None) -> str:
    index = []
    for path, kind in files:
        index.append({"path": os.path.relpath(path, directory), "kind": kind, "sha256": io.sha256_file(path)})
    man = {
        "scenario": name,
        "config_hash": chash,
        "versions": versions(),
        "started_unix": started,
        "finished_unix": finished,
        "files": sorted(index, key=lambda r: r["path"]),
        "norm_audit": audit,
    }
    if extra:
        man.update(extra)
    return io.write_json(os.path.join(directory, "manifest.json"), man)


def run_variant(scenario: Scenario, vname: str, cfg: SimulationConfig, out_dir: str, log=None) -> VariantResult:
    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    started = time.time()
    files: list[tuple[str, str]] = []
    io.write_json(os.path.join(out_dir, "config.json"), config_to_dict(cfg))
    files.append((os.path.join(out_dir, "config.json"), "config"))
    snap_dir = os.path.join(out_dir, "snapshots")

    def spectrum_obs(state):
        os.makedirs(snap_dir, exist_ok=True)
        s = dg.momentum_spectrum(state, "transverse", pad=scenario.analysis.pad_transverse)
        p = io.write_spectrum_csv(os.path.join(snap_dir, f"spectrum_transverse_t{state.step:07d}.csv"), s)
        files.append((p, "spectrum"))

    def snapshot_obs(state):
        os.makedirs(snap_dir, exist_ok=True)
        g = state.grid
        p, side = io.write_array2d(
            os.path.join(snap_dir, f"density_t{state.step:07d}.f64"),
            np.abs(state.psi) ** 2,
            ("x_comoving", "y"),
            (g.dx, g.dy),
            g.origin,
            ("nm", "nm"),
            "nm^-2",
            chash,
            {"t_fs": state.t, "frame_shift_nm": state.frame_shift},
        )
        files.extend([(p, "array2d"), (side, "sidecar")])

    observers = []
    if scenario.observers.spectrum_times:
        observers.append(AtTimes(scenario.observers.spectrum_times, spectrum_obs))
    if scenario.observers.snapshot_times:
        observers.append(AtTimes(scenario.observers.snapshot_times, snapshot_obs))
    if log:
        log(f"[{scenario.name}/{vname}] {cfg.n_steps} steps at dt = {cfg.dt:.5g} fs")
    result = run_interaction(cfg, observers)
    state = result.state
    summary, afiles, trans = analyse_state(state, cfg, scenario.analysis, out_dir, chash)
    files += afiles
    files.append((_norm_history(os.path.join(out_dir, "norm_history.csv"), state), "table"))
    audit = {"final_norm": state.norm, "absorbed_fraction": state.absorbed_fraction, "steps": result.steps, "dt_fs": result.dt}
    summary.update({"variant": vname, "config_hash": chash, "final_norm": state.norm, "absorbed_fraction": state.absorbed_fraction})
    summary = _clean(summary)
    files.append((io.write_json(os.path.join(out_dir, "summary.json"), summary), "summary"))
    write_manifest(out_dir, f"{scenario.name}/{vname}", chash, files, started, time.time(), _clean(audit), {"wall_seconds": result.wall_seconds})
    if log:
        log(f"[{scenario.name}/{vname}] done in {result.wall_seconds:.1f} s; norm {state.norm:.10f}")
    return VariantResult(vname, out_dir, chash, summary, files, trans)


def run_scenario(scenario: Scenario, out_root: Optional[str] = None, only: Optional[list] = None, log=None) -> dict:
    """Run every variant of ``scenario`` into ``out_root/<name>``; returns the scenario summary."""
    root = os.path.join(out_root or output_root(), scenario.name)
    os.makedirs(root, exist_ok=True)
    started = time.time()
    results = {}
    for vname, cfg in scenario.variant_configs().items():
        if only and vname not in only:
            continue
        vdir = root if vname == "main" else os.path.join(root, vname)
        results[vname] = run_variant(scenario, vname, cfg, vdir, log)
    files = []
    comparison = []
    if scenario.analysis.compare == "l1" and len(results) >= 2:
        names = list(results)
        for i, a in enumerate(names):
            for b in names[i + 1 :]:
                d = dg.l1_distance(results[a].transverse, results[b].transverse)
                comparison.append((a, b, d))
        files.append((io.write_table(os.path.join(root, "comparison.csv"), ["variant_a", "variant_b", "l1_distance"], comparison), "table"))
    summary = {
        "scenario": scenario.name,
        "variants": {k: v.summary for k, v in results.items()},
        "comparison": [{"a": a, "b": b, "l1_distance": d} for a, b, d in comparison],
        "expected": scenario.expected,
    }
    if "main" not in results:
        files.append((io.write_json(os.path.join(root, "scenario_summary.json"), _clean(summary)), "summary"))
        audit = {k: {"final_norm": v.summary["final_norm"], "absorbed_fraction": v.summary["absorbed_fraction"]} for k, v in results.items()}
        extra = {"variants": {k: os.path.relpath(v.directory, root) for k, v in results.items()}}
        # the scenario-level hash covers every variant that was run
        combined = hashlib.sha256("\n".join(f"{k}:{v.config_hash}" for k, v in sorted(results.items())).encode()).hexdigest()
        write_manifest(root, scenario.name, combined, files, started, time.time(), audit, extra)
    return _clean(summary)
