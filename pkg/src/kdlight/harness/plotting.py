"""Plot-ready data and PNG figures from run or oracle directories.

Every figure kind writes max-normalized CSV files (the curves as drawn)
next to a PNG rendered with the Agg backend. Re-emission is deterministic,
so repeated calls produce byte-identical files.
"""

from __future__ import annotations

import json
import os
from typing import Callable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..diagnostics import Spectrum  # noqa: E402
from . import io  # noqa: E402

__all__ = ["FIGURE_KINDS", "MissingInputsError", "emit_plot_data", "detect_kind", "run_members"]

_PNG_META = {"Software": None}


class MissingInputsError(FileNotFoundError):
    def __init__(self, directory: str, kind: str, expected):
        self.expected = list(expected)
        super().__init__(f"{directory}: figure kind {kind!r} needs " + ", ".join(self.expected))


def run_members(run_dir: str) -> dict[str, str]:
    """{variant: directory} for a single run or a multi-variant scenario directory."""
    man = os.path.join(run_dir, "manifest.json")
    if os.path.exists(man):
        with open(man, encoding="utf-8") as fh:
            m = json.load(fh)
        if "variants" in m:
            return {k: os.path.join(run_dir, v) for k, v in sorted(m["variants"].items())}
    return {"main": run_dir}


def _require(run_dir, kind, names):
    members = run_members(run_dir)
    missing = [os.path.join(os.path.relpath(d, run_dir), n) for d in members.values() for n in names if not os.path.exists(os.path.join(d, n))]
    if missing or not members:
        raise MissingInputsError(run_dir, kind, missing or names)
    return members


def _save(fig, path):
    fig.savefig(path, dpi=110, metadata=_PNG_META)
    plt.close(fig)
    return path


def _normalized(s: Spectrum) -> Spectrum:
    return s.max_normalized()


def _offset_lines(run_dir, kind, fname, xlabel, out_prefix, log_scale=False, k_ph=None):
    members = _require(run_dir, kind, [fname])
    out = []
    fig, ax = plt.subplots(figsize=(6, 1.6 + 1.2 * len(members)))
    for i, (name, d) in enumerate(members.items()):
        s = _normalized(io.read_spectrum_csv(os.path.join(d, fname)))
        out.append(io.write_spectrum_csv(os.path.join(run_dir, f"{out_prefix}_{name}.csv"), s))
        x = s.axis / (k_ph if k_ph else 1.0)
        if log_scale:
            ax.semilogy(x, np.maximum(s.density, 1e-12) * 10.0 ** (3 * i), lw=0.9, label=name)
        else:
            ax.plot(x, s.density + 1.1 * i, lw=0.9, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("P / P_max (offset)")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    out.append(_save(fig, os.path.join(run_dir, f"{out_prefix}.png")))
    return out


def _k_ph(run_dir: str):
    for d in run_members(run_dir).values():
        p = os.path.join(d, "config.json")
        if os.path.exists(p):
            with open(p, encoding="utf-8") as fh:
                beams = [b for b in json.load(fh).get("beams", []) if b.get("enabled", True)]
            if beams:
                return 2 * np.pi / max(float(b["wavelength"]) for b in beams)
    return None


def plot_transverse(run_dir: str) -> list[str]:
    k = _k_ph(run_dir)
    label = "k_y / k_ph" if k else "k_y (rad/nm)"
    return _offset_lines(run_dir, "transverse", "spectrum_transverse.csv", label, "plot_transverse", k_ph=k)


def plot_energy(run_dir: str) -> list[str]:
    return _offset_lines(run_dir, "energy", "energy_gain.csv", "energy gain (eV)", "plot_energy", log_scale=True)


def plot_fig4(run_dir: str) -> list[str]:
    names = ["momentum_map.f64", "spectrum_transverse.csv", "energy_gain.csv"]
    members = _require(run_dir, "fig4", names)
    out = []
    k = _k_ph(run_dir) or 1.0
    fig, axes = plt.subplots(len(members), 3, figsize=(12, 3.4 * len(members)), squeeze=False)
    for row, (name, d) in zip(axes, members.items()):
        dens, meta = io.read_array2d(os.path.join(d, "momentum_map.f64"))
        dens = dens / dens.max()
        kx = meta["origins"][0] + meta["spacings"][0] * np.arange(dens.shape[0])
        ky = meta["origins"][1] + meta["spacings"][1] * np.arange(dens.shape[1])
        p, side = io.write_array2d(
            os.path.join(run_dir, f"plot_map_{name}.f64"),
            dens,
            meta["axes"],
            meta["spacings"],
            meta["origins"],
            meta["axis_units"],
            "unit_max",
            meta.get("config_hash"),
        )
        out += [p, side]
        kc = 0.5 * (kx[0] + kx[-1])
        row[0].pcolormesh((ky / k), (kx - kc), np.log10(np.maximum(dens, 1e-8)), shading="auto", cmap="magma", vmin=-6, vmax=0)
        row[0].set_xlabel("k_y / k_ph")
        row[0].set_ylabel("k_x - k_c (rad/nm)")
        row[0].set_title(f"{name}: log10 P/P_max")
        t = _normalized(io.read_spectrum_csv(os.path.join(d, "spectrum_transverse.csv")))
        e = _normalized(io.read_spectrum_csv(os.path.join(d, "energy_gain.csv")))
        out.append(io.write_spectrum_csv(os.path.join(run_dir, f"plot_transverse_{name}.csv"), t))
        out.append(io.write_spectrum_csv(os.path.join(run_dir, f"plot_energy_{name}.csv"), e))
        row[1].plot(t.axis / k, t.density, lw=0.9)
        row[1].set_xlabel("k_y / k_ph")
        row[2].semilogy(e.axis, np.maximum(e.density, 1e-12), lw=0.9, label="all orders")
        scat = os.path.join(d, "energy_gain_scattered.csv")
        if os.path.exists(scat):
            s = _normalized(io.read_spectrum_csv(scat))
            out.append(io.write_spectrum_csv(os.path.join(run_dir, f"plot_energy_scattered_{name}.csv"), s))
            row[2].semilogy(s.axis, np.maximum(s.density, 1e-12), lw=0.9, label="|m| >= 1")
            sb = os.path.join(d, "sidebands.csv")
            if os.path.exists(sb):
                rows = io.read_table(sb)
                io.write_table(os.path.join(run_dir, f"plot_sidebands_{name}.csv"), ["index", "energy_gain_eV"], [(r["index"], r["energy_gain_eV"]) for r in rows])
                out.append(os.path.join(run_dir, f"plot_sidebands_{name}.csv"))
                for r in rows:
                    row[2].axvline(float(r["energy_gain_eV"]), color="0.6", lw=0.5)
        row[2].set_ylim(1e-6, 2)
        row[2].set_xlabel("energy gain (eV)")
        row[2].legend(fontsize=8)
    fig.tight_layout()
    out.append(_save(fig, os.path.join(run_dir, "plot_fig4.png")))
    return out


def plot_orders(run_dir: str) -> list[str]:
    members = _require(run_dir, "orders", ["orders.csv"])
    out = []
    fig, ax = plt.subplots(figsize=(6, 3.2))
    width = 0.8 / len(members)
    for i, (name, d) in enumerate(members.items()):
        rows = io.read_table(os.path.join(d, "orders.csv"))
        m = np.array([int(r["order"]) for r in rows])
        p = np.array([float(r["probability"]) for r in rows])
        p = p / p.max()
        out.append(io.write_table(os.path.join(run_dir, f"plot_orders_{name}.csv"), ["order", "probability_unit_max"], list(zip(m.tolist(), p))))
        ax.bar(m + (i - 0.5 * (len(members) - 1)) * width, p, width=width, label=name)
    ax.set_xlabel("diffraction order m")
    ax.set_ylabel("P_m / P_max")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out.append(_save(fig, os.path.join(run_dir, "plot_orders.png")))
    return out


def plot_volkov(run_dir: str) -> list[str]:
    path = os.path.join(run_dir, "volkov.csv")
    if not os.path.exists(path):
        raise MissingInputsError(run_dir, "volkov", ["volkov.csv"])
    rows = io.read_table(path)
    labels = sorted({r["label"] for r in rows}, key=lambda s: [float(x) if x.replace(".", "").isdigit() else x for x in s.split("_")])
    fig, ax = plt.subplots(figsize=(6, 1.4 + 0.9 * len(labels)))
    for i, lab in enumerate(labels):
        sel = [r for r in rows if r["label"] == lab]
        m = np.array([int(r["order"]) for r in sel])
        p = np.array([float(r["probability"]) for r in sel])
        ax.vlines(m, 1.2 * i, 1.2 * i + p / p.max(), lw=2)
        ax.text(m.min(), 1.2 * i + 0.6, lab, fontsize=7)
    ax.set_xlabel("diffraction order m")
    ax.set_ylabel("P_m / P_max (offset)")
    fig.tight_layout()
    return [_save(fig, os.path.join(run_dir, "plot_volkov.png"))]


def plot_rho(run_dir: str) -> list[str]:
    path = os.path.join(run_dir, "rho_map.f64")
    if not os.path.exists(path):
        raise MissingInputsError(run_dir, "rho", ["rho_map.f64"])
    rho, meta = io.read_array2d(path)
    energies = np.array(meta["energies_eV"])
    waists = np.array(meta["waists_nm"])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    mesh = ax.pcolormesh(waists / meta["wavelength_nm"], energies, np.log10(rho), shading="auto", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="log10 rho")
    locus = os.path.join(run_dir, "rho_unity_locus.csv")
    if os.path.exists(locus):
        rows = io.read_table(locus)
        w = np.array([float(r["waist_nm"]) for r in rows]) / meta["wavelength_nm"]
        e = np.array([float(r["kinetic_energy_eV"]) for r in rows])
        ax.plot(w, e, "k-", lw=1.2, label="rho = 1")
        ax.set_ylim(energies.min(), energies.max())
        ax.legend(fontsize=8)
    ax.set_xlabel("w0 / lambda")
    ax.set_ylabel("kinetic energy (eV)")
    ax.set_yscale("log")
    fig.tight_layout()
    return [_save(fig, os.path.join(run_dir, "plot_rho.png"))]


def plot_convolve(run_dir: str) -> list[str]:
    path = os.path.join(run_dir, "convolution.csv")
    if not os.path.exists(path):
        raise MissingInputsError(run_dir, "convolve", ["convolution.csv"])
    s = io.read_spectrum_csv(path)
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(s.axis, s.density / np.abs(s.density).max(), lw=1)
    ax.axhline(0, color="0.7", lw=0.5)
    ax.set_xlabel("k_perp (rad/nm)")
    ax.set_ylabel("normalized amplitude")
    fig.tight_layout()
    return [_save(fig, os.path.join(run_dir, "plot_convolution.png"))]


def plot_compton(run_dir: str) -> list[str]:
    path = os.path.join(run_dir, "compton_map.f64")
    if not os.path.exists(path):
        raise MissingInputsError(run_dir, "compton", ["compton_map.f64"])
    cmap, meta = io.read_array2d(path)
    (t0, v0), (dt, dv) = meta["origins"], meta["spacings"]
    taus = t0 + dt * np.arange(cmap.shape[0])
    vs = v0 + dv * np.arange(cmap.shape[1])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.pcolormesh(vs, taus, cmap, shading="auto", cmap="Greys", vmin=0, vmax=1)
    ax.set_xlabel("electron velocity (nm/fs)")
    ax.set_ylabel("pulse sigma (fs)")
    fig.tight_layout()
    return [_save(fig, os.path.join(run_dir, "plot_compton.png"))]


FIGURE_KINDS: dict[str, Callable[[str], list[str]]] = {
    "transverse": plot_transverse,
    "energy": plot_energy,
    "orders": plot_orders,
    "fig4": plot_fig4,
    "volkov": plot_volkov,
    "rho": plot_rho,
    "convolve": plot_convolve,
    "compton": plot_compton,
}


def detect_kind(run_dir: str) -> list[str]:
    """Figure kinds whose inputs are present in ``run_dir``."""
    kinds = []
    for kind, fn in FIGURE_KINDS.items():
        try:
            if kind == "fig4":
                _require(run_dir, kind, ["momentum_map.f64", "spectrum_transverse.csv", "energy_gain.csv"])
            elif kind in ("transverse", "energy", "orders"):
                _require(run_dir, kind, [{"transverse": "spectrum_transverse.csv", "energy": "energy_gain.csv", "orders": "orders.csv"}[kind]])
            else:
                name = {"volkov": "volkov.csv", "rho": "rho_map.f64", "convolve": "convolution.csv", "compton": "compton_map.f64"}[kind]
                if not os.path.exists(os.path.join(run_dir, name)):
                    continue
            kinds.append(kind)
        except MissingInputsError:
            continue
    return kinds


def emit_plot_data(run_dir: str, kind: str = "auto") -> list[str]:
    if not os.path.isdir(run_dir):
        raise MissingInputsError(run_dir, kind, ["a run directory"])
    if kind == "auto":
        kinds = detect_kind(run_dir)
        if not kinds:
            raise MissingInputsError(
                run_dir,
                kind,
                ["spectrum_transverse.csv", "energy_gain.csv", "orders.csv", "momentum_map.f64", "volkov.csv", "rho_map.f64", "convolution.csv", "compton_map.f64"],
            )
        out = []
        for k in kinds:
            out += FIGURE_KINDS[k](run_dir)
        return out
    if kind not in FIGURE_KINDS:
        raise ValueError(f"unknown figure kind {kind!r}; choose from {sorted(FIGURE_KINDS)}")
    return FIGURE_KINDS[kind](run_dir)
