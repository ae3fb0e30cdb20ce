"""Command line interface: ``kdlight run|sweep|oracle|plot|validate``.

Exit codes: 0 success, 1 failed sweep cells, 2 invalid configuration,
3 numerical instability, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .. import beams as bm
from .. import volkov
from ..config import ScenarioError, load_scenario
from ..maxwell import FieldInstabilityError
from ..model import BeamSpec, ConfigError, ConfigIssue, ElectronSpec, derived_quantities
from ..tdse import NumericalInstabilityError
from ..diagnostics import Spectrum
from . import io
from .plotting import MissingInputsError, emit_plot_data
from .runner import OUTPUT_ROOT_ENV, output_root, run_scenario
from .sweep import DEFAULT_JOB_CAP, parse_axis, run_sweep

EXIT_OK = 0
EXIT_CELLS_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _log(quiet: bool):
    if quiet:
        return None
    return lambda msg: print(msg, file=sys.stderr, flush=True)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


# --- subcommands ---------------------------------------------------------------


def cmd_validate(args) -> int:
    status = EXIT_OK
    for path in args.scenarios:
        try:
            scn = load_scenario(path)
        except ScenarioError as exc:
            print(f"INVALID {path}", file=sys.stderr)
            for issue in exc.issues:
                print(f"  {issue}", file=sys.stderr)
            status = EXIT_CONFIG
            continue
        print(f"ok {path} ({scn.name})")
        if args.verbose:
            for vname, cfg in scn.variant_configs().items():
                print(json.dumps({"variant": vname, **derived_quantities(cfg)}, indent=2, default=float))
    return status


def cmd_run(args) -> int:
    scn = load_scenario(args.scenario)
    out_root = args.out or output_root()
    summary = run_scenario(scn, out_root, args.variant, _log(args.quiet))
    run_dir = os.path.join(out_root, scn.name)
    if args.plot:
        emit_plot_data(run_dir, "auto")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    scn = load_scenario(args.scenario)
    try:
        axes = [parse_axis(a) for a in args.axis]
    except ValueError as exc:
        raise ScenarioError([ConfigIssue("axis", str(exc))], args.scenario) from exc
    campaign = args.out or os.path.join(output_root(), f"{scn.name}_sweep")
    res = run_sweep(scn, axes, campaign, args.workers, args.job_cap, _log(args.quiet))
    print(",".join(res["header"]))
    for row in res["rows"]:
        print(",".join(str(v) for v in row))
    if res["failed"]:
        print(f"failed cells: {', '.join(res['failed'])}", file=sys.stderr)
        return EXIT_CELLS_FAILED
    return EXIT_OK


def cmd_plot(args) -> int:
    files = emit_plot_data(args.run_dir, args.kind)
    for f in files:
        print(f)
    return EXIT_OK


# --- oracles ---------------------------------------------------------------------


def _oracle_dir(args, name: str) -> str:
    d = args.out or os.path.join(output_root(), f"oracle_{name}")
    os.makedirs(d, exist_ok=True)
    return d


def oracle_volkov_cw(args) -> int:
    d = _oracle_dir(args, "volkov_cw")
    v = ElectronSpec(kinetic_energy=args.energy).velocity
    rows, counts = [], []
    for e0 in _floats(args.e0):
        dist = volkov.cw_orders(e0, args.waist, args.wavelength, v, field_kind=args.field_kind)
        label = f"E{e0:g}"
        rows += [(label, int(m), p) for m, p in zip(dist.orders, dist.probability)]
        counts.append((e0, dist.eta, volkov.populated_order_count(dist, args.threshold)))
    io.write_table(os.path.join(d, "volkov.csv"), ["label", "order", "probability"], rows)
    io.write_table(os.path.join(d, "volkov_counts.csv"), ["e0_V_per_nm", "eta", "order_count"], counts)
    if args.plot:
        emit_plot_data(d, "volkov")
    print(d)
    return EXIT_OK


def oracle_volkov_pulsed(args) -> int:
    d = _oracle_dir(args, "volkov_pulsed")
    rows, counts = [], []
    for e0 in _floats(args.e0):
        for tau in _floats(args.tau):
            dist = volkov.pulsed_orders(e0, args.wavelength, tau)
            label = f"E{e0:g}_tau{tau:g}"
            rows += [(label, int(m), p) for m, p in zip(dist.orders, dist.probability)]
            counts.append((e0, tau, dist.eta, volkov.populated_order_count(dist, args.threshold)))
    io.write_table(os.path.join(d, "volkov.csv"), ["label", "order", "probability"], rows)
    io.write_table(os.path.join(d, "volkov_counts.csv"), ["e0_V_per_nm", "pulse_sigma_fs", "eta", "order_count"], counts)
    if args.plot:
        emit_plot_data(d, "volkov")
    print(d)
    return EXIT_OK


def oracle_compton(args) -> int:
    d = _oracle_dir(args, "compton")
    beam = BeamSpec(mode_n=args.mode, wavelength=args.wavelength, waist=args.waist_ratio * args.wavelength)
    v = np.linspace(args.v_min, args.v_max, args.nv)
    taus = np.linspace(args.tau_min, args.tau_max, args.ntau)
    cmap = bm.compton_map(beam, v, pulse_sigmas=taus, multiplier=args.multiplier)
    io.write_array2d(
        os.path.join(d, "compton_map.f64"),
        cmap.astype(float),
        ("pulse_sigma", "velocity"),
        (taus[1] - taus[0] if taus.size > 1 else 0.0, v[1] - v[0] if v.size > 1 else 0.0),
        (taus[0], v[0]),
        ("fs", "nm/fs"),
        "1 = condition satisfied",
        extra={"mode_n": args.mode, "wavelength_nm": args.wavelength, "multiplier": args.multiplier},
    )
    if args.plot:
        emit_plot_data(d, "compton")
    print(d)
    return EXIT_OK


def oracle_convolve(args) -> int:
    d = _oracle_dir(args, "convolve")
    modes = [int(m) for m in args.modes.split(",")]
    waists = _floats(args.waists)
    if len(modes) != 2 or len(waists) != 2:
        raise ScenarioError(["--modes and --waists need two comma-separated values"])
    a = BeamSpec(mode_n=modes[0], wavelength=args.wavelength, waist=waists[0])
    b = BeamSpec(mode_n=modes[1], wavelength=args.wavelength, waist=waists[1])
    kmax = args.k_max if args.k_max else 8.0 / min(waists)
    k = np.linspace(-kmax, kmax, args.nk)
    spec = bm.convolve_spectra(a, b, k)
    s = Spectrum(k, np.real(spec.amplitude), "k_transverse", "closed_form")
    io.write_spectrum_csv(os.path.join(d, "convolution.csv"), s)
    kp = bm.characteristic_kperp(a, b)
    v = ElectronSpec(kinetic_energy=args.energy).velocity
    io.write_json(
        os.path.join(d, "convolution_summary.json"),
        {
            "modes": modes,
            "waists_nm": waists,
            "k_perp_characteristic": kp,
            "predicted_sideband_spacing_eV": bm.predicted_sideband_spacing(v, kp),
            "provenance": spec.provenance,
        },
    )
    if args.plot:
        emit_plot_data(d, "convolve")
    print(d)
    return EXIT_OK


def oracle_rho(args) -> int:
    d = _oracle_dir(args, "rho")
    lam = args.wavelength
    waists = np.linspace(args.waist_min, args.waist_max, args.nw) * lam
    energies = np.logspace(math.log10(args.e_min), math.log10(args.e_max), args.ne)
    rho = bm.regime_map(waists, energies, lam)
    io.write_array2d(
        os.path.join(d, "rho_map.f64"),
        rho,
        ("kinetic_energy", "waist"),
        (0.0, waists[1] - waists[0] if waists.size > 1 else 0.0),
        (energies[0], waists[0]),
        ("eV (log-spaced, see energies_eV)", "nm"),
        "dimensionless",
        extra={"energies_eV": energies.tolist(), "waists_nm": waists.tolist(), "wavelength_nm": lam},
    )
    locus = bm.rho_unity_locus(waists, lam)
    io.write_table(os.path.join(d, "rho_unity_locus.csv"), ["waist_nm", "kinetic_energy_eV"], list(zip(waists, locus)))
    v_ref = ElectronSpec(kinetic_energy=args.energy).velocity
    reports = [bm.regime_rho(w, v_ref, lam) for w in waists]
    io.write_json(
        os.path.join(d, "rho_summary.json"),
        {
            "reference_energy_eV": args.energy,
            "rho_max_at_reference": max(r.rho for r in reports),
            "classifications": sorted({r.classification for r in reports}),
        },
    )
    if args.plot:
        emit_plot_data(d, "rho")
    print(d)
    return EXIT_OK


# --- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kdlight",
        description="Electron scattering by structured standing light waves.",
        epilog=f"Outputs go to --out or ${OUTPUT_ROOT_ENV} (default ./runs).",
    )
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check scenario files against the config schema")
    v.add_argument("scenarios", nargs="+")
    v.add_argument("-v", "--verbose", action="store_true", help="print derived quantities")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run a scenario and write its outputs")
    r.add_argument("scenario")
    r.add_argument("--out", help="output root (scenario outputs go to OUT/<name>)")
    r.add_argument("--variant", action="append", help="run only this variant (repeatable)")
    r.add_argument("--plot", action="store_true", help="also render figures")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    s.add_argument("scenario")
    s.add_argument("--axis", action="append", required=True, help="path=v1,v2,... e.g. beams.*.pulse_sigma=2,4,6")
    s.add_argument("--out", help="campaign directory")
    s.add_argument("--workers", type=int, default=None, help="parallel cells (default: cores - 1)")
    s.add_argument("--job-cap", type=int, default=DEFAULT_JOB_CAP)
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("plot", help="emit plot data and figures for a run directory")
    pl.add_argument("run_dir")
    pl.add_argument("--kind", default="auto")
    pl.set_defaults(func=cmd_plot)

    o = sub.add_parser("oracle", help="closed-form reference data")
    osub = o.add_subparsers(dest="oracle", required=True)

    def common(q):
        q.add_argument("--out")
        q.add_argument("--plot", action="store_true")

    q = osub.add_parser("volkov-cw", help="CW standing-wave order populations")
    q.add_argument("--e0", default="5", help="HG00 reference peak field(s), V/nm")
    q.add_argument("--waist", type=float, default=600.0)
    q.add_argument("--wavelength", type=float, default=300.0)
    q.add_argument("--energy", type=float, default=1000.0, help="electron kinetic energy, eV")
    q.add_argument("--field-kind", choices=["peak", "power_normalized"], default="peak")
    q.add_argument("--threshold", type=float, default=1e-3)
    common(q)
    q.set_defaults(func=oracle_volkov_cw)

    q = osub.add_parser("volkov-pulsed", help="pulsed plane-wave order populations")
    q.add_argument("--e0", default="10,15,20")
    q.add_argument("--tau", default="2,4,6,8,10")
    q.add_argument("--wavelength", type=float, default=300.0)
    q.add_argument("--threshold", type=float, default=1e-3)
    common(q)
    q.set_defaults(func=oracle_volkov_pulsed)

    q = osub.add_parser("compton", help="inelastic Compton condition map")
    q.add_argument("--mode", type=int, default=1)
    q.add_argument("--wavelength", type=float, default=500.0)
    q.add_argument("--waist-ratio", type=float, default=2.0)
    q.add_argument("--v-min", type=float, default=1.0)
    q.add_argument("--v-max", type=float, default=60.0)
    q.add_argument("--nv", type=int, default=120)
    q.add_argument("--tau-min", type=float, default=1.0)
    q.add_argument("--tau-max", type=float, default=50.0)
    q.add_argument("--ntau", type=int, default=100)
    q.add_argument("--multiplier", type=float, default=2.0 * math.sqrt(2.0 * math.log(2.0)))
    common(q)
    q.set_defaults(func=oracle_compton)

    q = osub.add_parser("convolve", help="closed-form convolution of two beam spectra")
    q.add_argument("--modes", default="1,1")
    q.add_argument("--waists", default="600,600")
    q.add_argument("--wavelength", type=float, default=300.0)
    q.add_argument("--energy", type=float, default=1000.0)
    q.add_argument("--k-max", type=float, default=None)
    q.add_argument("--nk", type=int, default=1601)
    common(q)
    q.set_defaults(func=oracle_convolve)

    q = osub.add_parser("rho", help="Bragg/diffraction regime map")
    q.add_argument("--wavelength", type=float, default=300.0)
    q.add_argument("--waist-min", type=float, default=1.5, help="in wavelengths")
    q.add_argument("--waist-max", type=float, default=4.0, help="in wavelengths")
    q.add_argument("--nw", type=int, default=51)
    q.add_argument("--e-min", type=float, default=1e-3, help="eV")
    q.add_argument("--e-max", type=float, default=3e4, help="eV")
    q.add_argument("--ne", type=int, default=121)
    q.add_argument("--energy", type=float, default=1000.0, help="reference energy for the summary")
    common(q)
    q.set_defaults(func=oracle_rho)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args))
    except (ScenarioError, ConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalInstabilityError, FieldInstabilityError) as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MissingInputsError, OSError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, volkov.TruncationError) as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
