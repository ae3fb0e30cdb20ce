"""YAML scenario files: parsing, validation, serialization and hashing.

A scenario file holds one simulation config plus the observer schedule,
analysis directives, optional expected-result annotations and optional
named variants (overrides applied on top of the base config)::

    name: fig2a
    config:
      electron: {kinetic_energy: 1000, width_longitudinal: 100, ...}
      beams:
        - {mode_n: 0, wavelength: 300, waist: 600, pulse_sigma: .inf, ...}
      grid_schrodinger: {nx: 224, ny: 128, spacing: 6.0, center: [-2400, 0]}
      total_time: 256.0
    variants:
      hg00: {}
      hg10: {beams.*.mode_n: 1}
    analysis: {transverse: true, orders: true, compare: l1}

Unknown keys are errors, and every error names the file position it came
from.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields, is_dataclass
from typing import Any, Optional

import yaml

from .model import (
    AbsorberSpec,
    BeamSpec,
    ConfigIssue,
    ElectronSpec,
    GridSpec,
    OutputSpec,
    SimulationConfig,
    validate_config,
)

__all__ = [
    "ScenarioError",
    "Scenario",
    "ObserverSchedule",
    "AnalysisDirectives",
    "load_scenario",
    "parse_scenario",
    "scenario_to_dict",
    "dump_scenario",
    "config_from_dict",
    "config_to_dict",
    "config_hash",
    "apply_overrides",
]


class ScenarioError(ValueError):
    """Unreadable or invalid scenario; ``issues`` carries every problem found."""

    def __init__(self, issues, source: str = "<scenario>"):
        self.issues = list(issues)
        self.source = source
        super().__init__(f"{source}: " + "; ".join(str(i) for i in self.issues))


@dataclass(frozen=True)
class ObserverSchedule:
    snapshot_times: tuple[float, ...] = ()
    spectrum_times: tuple[float, ...] = ()


@dataclass(frozen=True)
class AnalysisDirectives:
    transverse: bool = True
    longitudinal: bool = True
    energy: bool = True
    orders: bool = True
    sidebands: bool = False
    momentum_map: bool = True
    order_spacing_multiple: int = 2
    sideband_min_order: int = 1
    energy_step: float = 0.002
    energy_range: tuple[float, float] = (-1.0, 1.0)
    rel_threshold: float = 1e-3
    pad_transverse: int = 4
    pad_longitudinal: int = 8
    compare: Optional[str] = None  # "l1" compares the transverse spectra of all variants


@dataclass
class Scenario:
    name: str
    config: SimulationConfig
    observers: ObserverSchedule = field(default_factory=ObserverSchedule)
    analysis: AnalysisDirectives = field(default_factory=AnalysisDirectives)
    expected: dict = field(default_factory=dict)
    variants: dict = field(default_factory=dict)
    description: str = ""
    source: str = "<scenario>"

    def variant_configs(self) -> dict[str, SimulationConfig]:
        """Config per variant; a scenario without variants runs once as ``main``."""
        if not self.variants:
            return {"main": self.config}
        base = config_to_dict(self.config)
        out = {}
        for vname, over in self.variants.items():
            d = apply_overrides(base, over or {})
            out[vname] = config_from_dict(d, f"variants.{vname}")
        return out


# --- YAML with positions -----------------------------------------------------


class _Marks(dict):
    """path -> 'line L, column C' for every node of a composed document."""


def _to_python(node, path: str, marks: _Marks):
    marks[path] = f"line {node.start_mark.line + 1}, column {node.start_mark.column + 1}"
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = yaml.safe_load(yaml.serialize(k)) if not isinstance(k, yaml.ScalarNode) else k.value
            sub = f"{path}.{key}" if path else str(key)
            if key in out:
                raise ScenarioError([ConfigIssue(sub, f"duplicate key at {marks.get(path, '?')}")])
            out[key] = _to_python(v, sub, marks)
            marks[sub] = f"line {k.start_mark.line + 1}, column {k.start_mark.column + 1}"
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_to_python(v, f"{path}[{i}]", marks) for i, v in enumerate(node.value)]
    return yaml.safe_load(yaml.serialize(node))


def _compose(text: str, source: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        m = exc.problem_mark
        where = f"line {m.line + 1}, column {m.column + 1}" if m is not None else "unknown position"
        raise ScenarioError([ConfigIssue("<yaml>", f"parse error at {where}: {exc.problem}")], source) from exc
    except yaml.YAMLError as exc:
        raise ScenarioError([ConfigIssue("<yaml>", f"parse error: {exc}")], source) from exc
    if node is None:
        raise ScenarioError([ConfigIssue("<yaml>", "empty document")], source)
    marks = _Marks()
    try:
        data = _to_python(node, "", marks)
    except yaml.YAMLError as exc:
        raise ScenarioError([ConfigIssue("<yaml>", f"parse error: {exc}")], source) from exc
    return data, marks


# --- dict <-> dataclass ----------------------------------------------------------


def _float(v, path, issues):
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "cw", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        issues.append(ConfigIssue(path, f"expected a number, got {v!r}"))
        return float("nan")
    return float(v)


def _int(v, path, issues):
    if isinstance(v, bool) or not isinstance(v, int):
        issues.append(ConfigIssue(path, f"expected an integer, got {v!r}"))
        return 0
    return v


def _pair(v, path, issues):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        issues.append(ConfigIssue(path, f"expected a pair [a, b], got {v!r}"))
        return (0.0, 0.0)
    return (_float(v[0], f"{path}[0]", issues), _float(v[1], f"{path}[1]", issues))


def _check_keys(d, allowed, path, issues):
    if not isinstance(d, dict):
        issues.append(ConfigIssue(path, f"expected a mapping, got {type(d).__name__}"))
        return False
    for k in d:
        if k not in allowed:
            issues.append(ConfigIssue(f"{path}.{k}" if path else str(k), "unknown key"))
    return True


_FLOAT_FIELDS = {
    BeamSpec: {"wavelength", "waist", "pulse_sigma", "peak_field", "arrival", "power_reference_waist"},
    ElectronSpec: {"kinetic_energy", "width_longitudinal", "width_transverse"},
    AbsorberSpec: {"pml_reflection", "mask_fraction", "mask_exponent"},
}
_INT_FIELDS = {
    BeamSpec: {"mode_n", "direction", "mode_m"},
    AbsorberSpec: {"pml_cells", "pml_order"},
    OutputSpec: {"energy_padding"},
}
_PAIR_FIELDS = {BeamSpec: {"focus"}, ElectronSpec: {"center"}}


def _simple(cls, d, path, issues):
    names = [f.name for f in fields(cls)]
    if not _check_keys(d, names, path, issues):
        return cls()
    kw = {}
    for k, v in d.items():
        if k not in names:
            continue
        p = f"{path}.{k}"
        if k in _FLOAT_FIELDS.get(cls, ()):
            kw[k] = None if v is None and k == "power_reference_waist" else _float(v, p, issues)
        elif k in _INT_FIELDS.get(cls, ()):
            kw[k] = _int(v, p, issues)
        elif k in _PAIR_FIELDS.get(cls, ()):
            kw[k] = _pair(v, p, issues)
        elif isinstance(getattr(cls(), k), bool):
            if not isinstance(v, bool):
                issues.append(ConfigIssue(p, f"expected true/false, got {v!r}"))
            kw[k] = bool(v)
        else:
            kw[k] = v
    return cls(**kw)


def _grid(d, path, issues, role):
    keys = {"nx", "ny", "dx", "dy", "origin", "spacing", "center", "role"}
    if not _check_keys(d, keys, path, issues):
        return None
    for req in ("nx", "ny"):
        if req not in d:
            issues.append(ConfigIssue(f"{path}.{req}", "missing"))
    nx = _int(d.get("nx", 0), f"{path}.nx", issues)
    ny = _int(d.get("ny", 0), f"{path}.ny", issues)
    role = d.get("role", role)
    if "spacing" in d:
        if "dx" in d or "dy" in d or "origin" in d:
            issues.append(ConfigIssue(path, "use either spacing/center or dx/dy/origin"))
        h = _float(d["spacing"], f"{path}.spacing", issues)
        center = _pair(d.get("center", (0.0, 0.0)), f"{path}.center", issues)
        return GridSpec.centered(nx, ny, h, center, role)
    if "dx" not in d:
        issues.append(ConfigIssue(f"{path}.dx", "missing (or give spacing)"))
    dx = _float(d.get("dx", 1.0), f"{path}.dx", issues)
    dy = _float(d.get("dy", dx), f"{path}.dy", issues)
    origin = _pair(d.get("origin", (0.0, 0.0)), f"{path}.origin", issues)
    return GridSpec(nx, ny, dx, dy, origin, role)


_CONFIG_KEYS = {f.name for f in fields(SimulationConfig)} - {"constants"}


def _build_config(d: dict, path: str, issues: list) -> SimulationConfig:
    if not _check_keys(d, _CONFIG_KEYS, path, issues):
        return SimulationConfig()
    kw: dict[str, Any] = {}
    p = f"{path}." if path else ""
    if "beams" in d:
        if not isinstance(d["beams"], list):
            issues.append(ConfigIssue(f"{p}beams", "expected a list"))
        else:
            kw["beams"] = tuple(_simple(BeamSpec, b, f"{p}beams[{i}]", issues) for i, b in enumerate(d["beams"]))
    if "electron" in d:
        kw["electron"] = _simple(ElectronSpec, d["electron"], f"{p}electron", issues)
    if "grid_schrodinger" in d:
        kw["grid_schrodinger"] = _grid(d["grid_schrodinger"], f"{p}grid_schrodinger", issues, "schrodinger")
    if d.get("grid_maxwell") is not None:
        kw["grid_maxwell"] = _grid(d["grid_maxwell"], f"{p}grid_maxwell", issues, "maxwell")
    if "absorber" in d:
        kw["absorber"] = _simple(AbsorberSpec, d["absorber"], f"{p}absorber", issues)
    if "output" in d:
        kw["output"] = _simple(OutputSpec, d["output"], f"{p}output", issues)
    for k in ("total_time", "start_time", "courant"):
        if k in d:
            kw[k] = _float(d[k], f"{p}{k}", issues)
    for k in ("dt_tdse", "max_wall_seconds"):
        if d.get(k) is not None:
            kw[k] = _float(d[k], f"{p}{k}", issues)
    for k in ("field_provider", "frame", "polarization", "gouy"):
        if k in d:
            kw[k] = str(d[k])
    if "retarded_envelope" in d:
        kw["retarded_envelope"] = bool(d["retarded_envelope"])
    kw = {k: v for k, v in kw.items() if v is not None}
    return SimulationConfig(**kw)


def config_from_dict(d: dict, path: str = "config") -> SimulationConfig:
    """Build and validate a config; raises ScenarioError listing every issue."""
    issues: list[ConfigIssue] = []
    cfg = _build_config(d, path, issues)
    if not issues:
        issues.extend(ConfigIssue(f"{path}.{i.path}", i.message) for i in validate_config(cfg))
    if issues:
        raise ScenarioError(issues)
    return cfg


def _plain(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def _spec_dict(obj) -> dict:
    floats = _FLOAT_FIELDS.get(type(obj), set()) | ({"dx", "dy"} if isinstance(obj, GridSpec) else set())
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if f.name in floats and v is not None:
            v = float(v)
        out[f.name] = _plain(v)
    return out


def config_to_dict(cfg: SimulationConfig) -> dict:
    """Plain-data form of ``cfg``; ``config_from_dict`` inverts it exactly."""
    out: dict[str, Any] = {}
    for f in fields(cfg):
        if f.name == "constants":
            continue
        v = getattr(cfg, f.name)
        if f.name == "beams":
            out["beams"] = [_spec_dict(b) for b in v]
        elif is_dataclass(v):
            out[f.name] = _spec_dict(v)
        elif isinstance(v, int) and not isinstance(v, bool) and f.name != "courant":
            out[f.name] = float(v) if f.name in ("total_time", "start_time", "dt_tdse", "max_wall_seconds") else v
        else:
            out[f.name] = _plain(float(v) if f.name == "courant" else v)
    return out


def config_hash(cfg: SimulationConfig) -> str:
    """sha256 of the canonical JSON form of the config."""
    text = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


# --- overrides -------------------------------------------------------------------


def _set_path(d, parts, value):
    head, rest = parts[0], parts[1:]
    if isinstance(d, list):
        idx = range(len(d)) if head == "*" else [int(head)]
        for i in idx:
            if rest:
                _set_path(d[i], rest, value)
            else:
                d[i] = value
        return
    if not rest:
        d[head] = value
        return
    if head not in d or d[head] is None:
        raise KeyError(".".join(parts))
    _set_path(d[head], rest, value)


def apply_overrides(base: dict, overrides: dict) -> dict:
    """Copy of ``base`` with dotted-path overrides; ``*`` addresses every list item."""
    out = copy.deepcopy(base)
    for key, value in overrides.items():
        try:
            _set_path(out, str(key).split("."), copy.deepcopy(value))
        except (KeyError, IndexError, ValueError) as exc:
            raise ScenarioError([ConfigIssue(str(key), f"override path does not exist ({exc})")]) from exc
    return out


# --- scenarios ---------------------------------------------------------------------


_SCENARIO_KEYS = {"name", "description", "config", "observers", "analysis", "expected", "variants"}


def _dataclass_from(cls, d, path, issues):
    if d is None:
        return cls()
    names = {f.name: f for f in fields(cls)}
    if not _check_keys(d, names, path, issues):
        return cls()
    kw = {}
    defaults = cls()
    for k, v in d.items():
        if k not in names:
            continue
        dv = getattr(defaults, k)
        p = f"{path}.{k}"
        if isinstance(dv, bool):
            if not isinstance(v, bool):
                issues.append(ConfigIssue(p, f"expected true/false, got {v!r}"))
            kw[k] = bool(v)
        elif isinstance(dv, int):
            kw[k] = _int(v, p, issues)
        elif isinstance(dv, float):
            kw[k] = _float(v, p, issues)
        elif isinstance(dv, tuple):
            if not isinstance(v, list):
                issues.append(ConfigIssue(p, "expected a list"))
                continue
            kw[k] = tuple(_float(x, f"{p}[{i}]", issues) for i, x in enumerate(v))
        else:
            kw[k] = v
    return cls(**kw)


def _locate(issues, marks):
    out = []
    for i in issues:
        path = i.path
        # walk up until a recorded position is found
        probe = path
        while probe and probe not in marks:
            probe = probe.rsplit(".", 1)[0] if "." in probe else ""
        where = marks.get(probe)
        out.append(ConfigIssue(i.path, f"{i.message} ({where})" if where else i.message))
    return out


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    data, marks = _compose(text, source)
    issues: list[ConfigIssue] = []
    if not isinstance(data, dict):
        raise ScenarioError([ConfigIssue("<root>", "scenario must be a mapping")], source)
    _check_keys(data, _SCENARIO_KEYS, "", issues)
    name = data.get("name")
    if not isinstance(name, str) or not name:
        issues.append(ConfigIssue("name", "a non-empty scenario name is required"))
    if "config" not in data:
        issues.append(ConfigIssue("config", "missing"))
    observers = _dataclass_from(ObserverSchedule, data.get("observers"), "observers", issues)
    analysis = _dataclass_from(AnalysisDirectives, data.get("analysis"), "analysis", issues)
    expected = data.get("expected") or {}
    variants = data.get("variants") or {}
    if not isinstance(variants, dict):
        issues.append(ConfigIssue("variants", "expected a mapping of name -> overrides"))
        variants = {}
    if issues:
        raise ScenarioError(_locate(issues, marks), source)
    try:
        cfg = config_from_dict(data["config"], "config")
        scn = Scenario(name, cfg, observers, analysis, dict(expected), dict(variants), data.get("description", ""), source)
        scn.variant_configs()  # validates every variant
    except ScenarioError as exc:
        raise ScenarioError(_locate(exc.issues, marks), source) from exc
    return scn


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file; unreadable files raise OSError."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_scenario(text, str(path))


def scenario_to_dict(s: Scenario) -> dict:
    out = {"name": s.name}
    if s.description:
        out["description"] = s.description
    out["config"] = config_to_dict(s.config)
    out["observers"] = {k: list(v) for k, v in dataclasses.asdict(s.observers).items()}
    out["analysis"] = {k: _plain(v) for k, v in dataclasses.asdict(s.analysis).items()}
    if s.expected:
        out["expected"] = s.expected
    if s.variants:
        out["variants"] = s.variants
    return out


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False, default_flow_style=None)
