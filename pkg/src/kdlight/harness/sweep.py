"""Parameter sweeps over a scenario template.

Every grid point ("cell") is an independent run in its own directory. A
cell is complete once its manifest exists, so an interrupted campaign
resumes by skipping those cells. Completed and failed cells are appended to
``campaign_index.jsonl`` under an exclusive file lock.
"""

from __future__ import annotations

import fcntl
import itertools
import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Optional

from ..config import Scenario, ScenarioError, apply_overrides, config_from_dict, config_to_dict
from ..model import ConfigIssue
from . import io
from .runner import run_scenario

__all__ = ["SweepAxis", "parse_axis", "sweep_cells", "run_sweep", "default_workers", "DEFAULT_JOB_CAP"]

DEFAULT_JOB_CAP = 64
INDEX_NAME = "campaign_index.jsonl"


@dataclass(frozen=True)
class SweepAxis:
    """One sweep dimension.

    ``path`` is a dotted config path (``*`` addresses every list item). Paths
    joined by ``|`` are zipped: each value is then a tuple with one entry per
    path, so quantities that must change together form a single axis.
    """

    path: str
    values: tuple

    @property
    def paths(self) -> list[str]:
        return self.path.split("|")

    def overrides(self, value) -> dict:
        paths = self.paths
        if len(paths) == 1:
            return {paths[0]: value}
        return dict(zip(paths, value))


def _scalar(text: str):
    t = text.strip()
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    if t.lower() in ("inf", "cw"):
        return "inf"
    if t.lower() in ("true", "false"):
        return t.lower() == "true"
    return t


def parse_axis(text: str) -> SweepAxis:
    """``path=v1,v2,...`` or ``p1|p2=a1|b1,a2|b2`` -> SweepAxis."""
    if "=" not in text:
        raise ValueError(f"axis {text!r} must look like path=v1,v2")
    path, vals = text.split("=", 1)
    path = path.strip()
    width = len(path.split("|"))
    values = []
    for item in (v for v in vals.split(",") if v.strip()):
        parts = tuple(_scalar(x) for x in item.split("|"))
        if len(parts) != width:
            raise ValueError(f"axis {path!r} needs {width} '|'-separated entries per value, got {item!r}")
        for x in parts:
            if isinstance(x, float) and not math.isfinite(x):
                raise ValueError(f"axis {path!r} has a non-finite value")
        values.append(parts[0] if width == 1 else parts)
    if not values:
        raise ValueError(f"axis {path!r} has no values")
    return SweepAxis(path, tuple(values))


def default_workers() -> int:
    return max(1, (os.cpu_count() or 1) - 1)


def sweep_cells(template: Scenario, axes: list[SweepAxis], job_cap: int = DEFAULT_JOB_CAP):
    """[(cell_id, params, scenario)] for the cartesian product of ``axes``."""
    n = 1
    for a in axes:
        n *= len(a.values)
    if n > job_cap:
        raise ScenarioError([ConfigIssue("axes", f"{n} cells exceed the job cap {job_cap}")])
    base = config_to_dict(template.config)
    cells = []
    for i, combo in enumerate(itertools.product(*[a.values for a in axes])):
        params = {a.path: v for a, v in zip(axes, combo)}
        over: dict = {}
        for a, v in zip(axes, combo):
            over.update(a.overrides(v))
        cfg = config_from_dict(apply_overrides(base, over), "config")
        scn = Scenario(
            name=f"cell_{i:04d}",
            config=cfg,
            observers=template.observers,
            analysis=template.analysis,
            expected=template.expected,
            variants=template.variants,
            description=template.description,
            source=template.source,
        )
        scn.variant_configs()
        cells.append((scn.name, params, scn))
    return cells


def _append_index(path: str, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def _cell_done(cell_dir: str) -> bool:
    return os.path.exists(os.path.join(cell_dir, "manifest.json"))


def _run_cell(scn: Scenario, cells_root: str) -> dict:
    os.environ.setdefault("KDLIGHT_FFT_WORKERS", "1")
    try:
        summary = run_scenario(scn, cells_root)
        return {"status": "ok", "summary": summary}
    except Exception as exc:  # recorded per cell; the campaign continues
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}


def _cellval(v):
    return "|".join(str(x) for x in v) if isinstance(v, tuple) else v


def _rows(cell_id, params, keys, result) -> list:
    rows = []
    if result.get("status") != "ok":
        return [[cell_id, *[_cellval(params[k]) for k in keys], "", "failed", "", "", "", ""]]
    for vname, s in result["summary"]["variants"].items():
        sb = s.get("sidebands") or {}
        ext = s.get("energy_extent") or [None, None]
        width = ext[1] - ext[0] if ext[0] is not None else ""
        rows.append(
            [
                cell_id,
                *[_cellval(params[k]) for k in keys],
                vname,
                "ok",
                s.get("order_count", ""),
                sb.get("mean_spacing_eV", "") if sb.get("mean_spacing_eV") is not None else "",
                sb.get("count", ""),
                width,
            ]
        )
    return rows


def run_sweep(
    template: Scenario,
    axes: list[SweepAxis],
    campaign_dir: str,
    workers: Optional[int] = None,
    job_cap: int = DEFAULT_JOB_CAP,
    log=None,
) -> dict:
    """Run (or resume) a campaign; returns {"cells": ..., "failed": [...]}."""
    cells = sweep_cells(template, axes, job_cap)
    os.makedirs(campaign_dir, exist_ok=True)
    cells_root = os.path.join(campaign_dir, "cells")
    os.makedirs(cells_root, exist_ok=True)
    index_path = os.path.join(campaign_dir, INDEX_NAME)
    keys = [a.path for a in axes]
    io.write_json(
        os.path.join(campaign_dir, "campaign.json"),
        {"template": template.name, "axes": {a.path: list(a.values) for a in axes}, "cells": [c[0] for c in cells]},
    )
    results: dict[str, dict] = {}
    todo = []
    for cid, params, scn in cells:
        cdir = os.path.join(cells_root, cid)
        if _cell_done(cdir):
            with open(os.path.join(cdir, "scenario_summary.json" if scn.variants else "summary.json"), encoding="utf-8") as fh:
                s = json.load(fh)
            summary = s if scn.variants else {"scenario": cid, "variants": {"main": s}}
            results[cid] = {"status": "ok", "summary": summary, "resumed": True}
            if log:
                log(f"[sweep] {cid} already complete, skipped")
        else:
            todo.append((cid, params, scn))
    n_workers = workers or default_workers()
    if n_workers <= 1 or len(todo) <= 1:
        for cid, params, scn in todo:
            res = _run_cell(scn, cells_root)
            results[cid] = res
            _append_index(index_path, {"cell": cid, "params": params, "status": res["status"], "error": res.get("error")})
            if log:
                log(f"[sweep] {cid} {res['status']}")
    else:
        with ProcessPoolExecutor(max_workers=min(n_workers, len(todo))) as pool:
            futs = {pool.submit(_run_cell, scn, cells_root): (cid, params) for cid, params, scn in todo}
            for fut in as_completed(futs):
                cid, params = futs[fut]
                res = fut.result()
                results[cid] = res
                _append_index(index_path, {"cell": cid, "params": params, "status": res["status"], "error": res.get("error")})
                if log:
                    log(f"[sweep] {cid} {res['status']}")
    rows = []
    for cid, params, _ in cells:
        rows += _rows(cid, params, keys, results[cid])
    header = ["cell", *keys, "variant", "status", "order_count", "sideband_mean_spacing_eV", "sideband_count", "energy_extent_eV"]
    io.write_table(os.path.join(campaign_dir, "aggregate.csv"), header, rows)
    failed = [cid for cid, r in results.items() if r["status"] != "ok"]
    return {"cells": results, "failed": failed, "rows": rows, "header": header}
