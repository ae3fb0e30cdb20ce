"""Bit-specified output formats.

* 1D spectra: CSV, two comment lines (``# axis: <kind> [<units>]`` and
  ``# normalization: <name>``) followed by ``axis,value`` rows written with
  17 significant digits.
* 2D arrays: raw little-endian float64, row-major, plus a JSON sidecar with
  shape, spacings, origins, units and the config hash.
* Tables: CSV with a single header row.
* Manifests: JSON with sorted keys.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from typing import Optional, Sequence

import numpy as np

from ..diagnostics import Spectrum

__all__ = [
    "write_spectrum_csv",
    "read_spectrum_csv",
    "write_array2d",
    "read_array2d",
    "write_table",
    "read_table",
    "write_json",
    "sha256_file",
]

_FMT = "%.17g"


def _fmt(v) -> str:
    return _FMT % v


def write_spectrum_csv(path: str, s: Spectrum, value_name: str = "density") -> str:
    lines = [
        f"# axis: {s.axis_kind} [{s.units}]",
        f"# normalization: {s.normalization}",
    ]
    lines += [f"{_fmt(a)},{_fmt(d)}" for a, d in zip(s.axis, s.density)]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_spectrum_csv(path: str) -> Spectrum:
    with open(path, encoding="ascii") as fh:
        l1 = fh.readline()
        l2 = fh.readline()
    kind = l1.split(":", 1)[1].split("[")[0].strip()
    norm = l2.split(":", 1)[1].strip()
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    return Spectrum(data[:, 0].copy(), data[:, 1].copy(), kind, norm)


def write_array2d(
    path: str,
    array: np.ndarray,
    axes: Sequence[str],
    spacings: Sequence[float],
    origins: Sequence[float],
    units: Sequence[str],
    value_units: str,
    config_hash: Optional[str] = None,
    extra: Optional[dict] = None,
) -> tuple[str, str]:
    """Write ``array`` to ``path`` (raw <f8) and ``path + '.json'``; returns both paths."""
    a = np.ascontiguousarray(array, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(a.tobytes(order="C"))
    meta = {
        "dtype": "float64",
        "byte_order": "little",
        "layout": "row-major",
        "shape": list(a.shape),
        "axes": list(axes),
        "spacings": [float(v) for v in spacings],
        "origins": [float(v) for v in origins],
        "axis_units": list(units),
        "value_units": value_units,
        "config_hash": config_hash,
    }
    if extra:
        meta.update(extra)
    side = path + ".json"
    write_json(side, meta)
    return path, side


def read_array2d(path: str) -> tuple[np.ndarray, dict]:
    with open(path + ".json", encoding="utf-8") as fh:
        meta = json.load(fh)
    a = np.fromfile(path, dtype="<f8").reshape(meta["shape"])
    return a, meta


def write_table(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def read_table(path: str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(path: str, obj) -> str:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
