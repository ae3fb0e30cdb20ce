"""Domain types shared by every module.

Internal unit system: lengths in nm, times in fs, energies in eV, electric
fields in V/nm (numerically equal to GV/m), vector potentials in V*fs/nm.
With the electron charge counted as 1 (energies in eV), e*A is a momentum in
eV*fs/nm and hbar*k uses hbar in eV*fs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

__all__ = [
    "PhysicalConstants",
    "CODATA2018",
    "BeamSpec",
    "ElectronSpec",
    "GridSpec",
    "AbsorberSpec",
    "OutputSpec",
    "SimulationConfig",
    "ConfigIssue",
    "ConfigError",
    "electron_velocity",
    "validate_config",
    "check_config",
    "derived_quantities",
    "max_vector_potential",
    "tdse_energy_bound",
    "default_dt_tdse",
]

MAX_BETA = 0.2
COURANT_LIMIT_2D = 1.0 / math.sqrt(2.0)
# largest edge density (relative to the peak) accepted for the initial wavepacket
CLIP_LEVEL = 1e-6


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA-2018 constants in SI, with accessors in the internal units."""

    hbar: float = 1.054571817e-34  # J s
    m0: float = 9.1093837015e-31  # kg
    q_e: float = 1.602176634e-19  # C
    c: float = 299792458.0  # m/s

    @property
    def hbar_evfs(self) -> float:
        return self.hbar / self.q_e * 1e15

    @property
    def m0_ev(self) -> float:
        """Electron mass in eV*fs^2/nm^2."""
        return self.m0 / self.q_e * 1e12

    @property
    def c_nmfs(self) -> float:
        return self.c * 1e-6

    @property
    def rest_energy_ev(self) -> float:
        return self.m0 * self.c**2 / self.q_e

    @property
    def hbar2_2m(self) -> float:
        """hbar^2 / (2 m0) in eV*nm^2."""
        return self.hbar_evfs**2 / (2.0 * self.m0_ev)


CODATA2018 = PhysicalConstants()


class ConfigError(ValueError):
    """Raised when a configuration is not runnable; carries every issue found."""

    def __init__(self, issues):
        self.issues = list(issues)
        lines = [f"{i.path}: {i.message}" for i in self.issues]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class ConfigIssue:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class BeamSpec:
    """One pulsed Hermite-Gaussian beam.

    ``pulse_sigma`` is the parameter of the amplitude envelope
    ``exp(-(t - t0)**2 / (4 pulse_sigma**2))``; ``math.inf`` means CW.
    ``peak_field`` is the peak electric field an HG00 beam of the same power
    reaches at ``power_reference_waist`` (defaults to ``waist``), so an HG10
    beam configured with 5 V/nm peaks at sqrt(2/e)*5 = 4.29 V/nm.
    """

    mode_n: int = 0
    wavelength: float = 300.0
    waist: float = 600.0
    pulse_sigma: float = 10.0
    peak_field: float = 1.0
    direction: int = 1
    arrival: float = 0.0
    enabled: bool = True
    focus: tuple[float, float] = (0.0, 0.0)
    power_reference_waist: Optional[float] = None
    mode_m: int = 0

    def __post_init__(self):
        object.__setattr__(self, "focus", tuple(float(v) for v in self.focus))

    # Derived quantities are recomputed on every access.
    @property
    def omega(self) -> float:
        return 2.0 * math.pi * CODATA2018.c_nmfs / self.wavelength

    @property
    def k(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @property
    def rayleigh_range(self) -> float:
        return math.pi * self.waist**2 / self.wavelength

    @property
    def is_cw(self) -> bool:
        return math.isinf(self.pulse_sigma)

    @property
    def intensity_fwhm(self) -> float:
        """Intensity FWHM of the temporal envelope, 2*sqrt(2 ln 2)*pulse_sigma."""
        return 2.0 * math.sqrt(2.0 * math.log(2.0)) * self.pulse_sigma

    @property
    def reference_waist(self) -> float:
        return self.waist if self.power_reference_waist is None else self.power_reference_waist

    @property
    def power_amplitude(self) -> float:
        """Power-normalized vector-potential amplitude A0 (V*fs/nm * sqrt(nm))."""
        a_peak = self.peak_field / self.omega
        return a_peak * math.sqrt(self.reference_waist) * (math.pi / 2.0) ** 0.25

    @property
    def peak_vector_potential(self) -> float:
        """Largest |A| of this beam's spatial profile at its focus."""
        a00 = self.power_amplitude * (2.0 / math.pi) ** 0.25 / math.sqrt(self.waist)
        if self.mode_n == 0:
            return a00
        if self.mode_n == 1:
            return a00 * math.sqrt(2.0 / math.e)
        # Hermite-Gaussian peaks for n > 1 are bounded by the n = 0 value times sqrt(2^n n!)
        return a00 * math.sqrt(2.0**self.mode_n * math.factorial(self.mode_n))

    @property
    def mode_peak_field(self) -> float:
        return self.peak_vector_potential * self.omega


@dataclass(frozen=True)
class ElectronSpec:
    kinetic_energy: float = 1000.0  # eV
    width_longitudinal: float = 250.0  # nm, W_L
    width_transverse: float = 60.0  # nm, W_T
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))

    @property
    def velocity(self) -> float:
        return electron_velocity(self)

    @property
    def k_central(self) -> float:
        c = CODATA2018
        return c.m0_ev * self.velocity / c.hbar_evfs


@dataclass(frozen=True)
class GridSpec:
    """Uniform square-cell grid; node i sits at ``origin[0] + i*dx``."""

    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float] = (0.0, 0.0)
    role: str = "schrodinger"

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.dy * np.arange(self.ny)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the node positions."""
        return (
            self.origin[0],
            self.origin[0] + (self.nx - 1) * self.dx,
            self.origin[1],
            self.origin[1] + (self.ny - 1) * self.dy,
        )

    @classmethod
    def centered(cls, nx, ny, spacing, center=(0.0, 0.0), role="schrodinger"):
        origin = (center[0] - 0.5 * (nx - 1) * spacing, center[1] - 0.5 * (ny - 1) * spacing)
        return cls(nx=nx, ny=ny, dx=spacing, dy=spacing, origin=origin, role=role)


@dataclass(frozen=True)
class AbsorberSpec:
    pml_cells: int = 10
    pml_order: int = 4
    pml_reflection: float = 1e-8
    mask_fraction: float = 0.08
    mask_exponent: float = 0.125
    periodic_x: bool = False


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "runs"
    momentum_map: bool = True
    energy_padding: int = 8
    field_snapshots: bool = False


@dataclass(frozen=True)
class SimulationConfig:
    beams: tuple[BeamSpec, ...] = ()
    electron: ElectronSpec = field(default_factory=ElectronSpec)
    grid_schrodinger: GridSpec = field(
        default_factory=lambda: GridSpec.centered(256, 256, 3.0)
    )
    grid_maxwell: Optional[GridSpec] = None
    field_provider: str = "analytic"
    total_time: float = 100.0
    start_time: float = 0.0
    dt_tdse: Optional[float] = None
    courant: float = 0.5
    frame: str = "comoving"
    polarization: str = "y"
    retarded_envelope: bool = True
    gouy: str = "3d"
    absorber: AbsorberSpec = field(default_factory=AbsorberSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    max_wall_seconds: Optional[float] = None
    constants: PhysicalConstants = CODATA2018

    def __post_init__(self):
        object.__setattr__(self, "beams", tuple(self.beams))

    @property
    def active_beams(self) -> tuple[BeamSpec, ...]:
        return tuple(b for b in self.beams if b.enabled)

    @property
    def dt(self) -> float:
        """Effective TDSE step: configured value or the default half stability bound."""
        return self.dt_tdse if self.dt_tdse is not None else default_dt_tdse(self)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.total_time / self.dt - 1e-9))

    @property
    def frame_velocity(self) -> float:
        return self.electron.velocity if self.frame == "comoving" else 0.0

    @property
    def carrier_k(self) -> float:
        return self.electron.k_central if self.frame == "comoving" else 0.0


def electron_velocity(e: ElectronSpec, c: PhysicalConstants = CODATA2018) -> float:
    """Nonrelativistic speed sqrt(2 E / m0) in nm/fs."""
    if not e.kinetic_energy > 0:
        raise ValueError("kinetic energy must be positive")
    v = math.sqrt(2.0 * e.kinetic_energy / c.m0_ev)
    if v / c.c_nmfs >= MAX_BETA:
        raise ValueError(
            f"kinetic energy {e.kinetic_energy} eV gives v/c = {v / c.c_nmfs:.3f} >= {MAX_BETA}; "
            "outside the nonrelativistic model"
        )
    return v


def max_vector_potential(cfg: SimulationConfig) -> float:
    """Upper bound of |A| over space and time for the configured beams."""
    return sum(b.peak_vector_potential for b in cfg.active_beams)


def tdse_energy_bound(cfg: SimulationConfig) -> float:
    """Bound on the spectral radius of the discrete Hamiltonian (eV)."""
    c = cfg.constants
    g = cfg.grid_schrodinger
    kmax_x, kmax_y = math.pi / g.dx, math.pi / g.dy
    kinetic = c.hbar2_2m * (kmax_x**2 + kmax_y**2)
    a = max_vector_potential(cfg)
    pond = a**2 / (2.0 * c.m0_ev)
    coupling = c.hbar_evfs * a * math.hypot(kmax_x, kmax_y) / c.m0_ev
    if cfg.frame == "comoving" and cfg.polarization == "x":
        coupling += cfg.electron.velocity * a
    elif cfg.frame == "comoving" and cfg.field_provider == "fdtd":
        # the FDTD field carries both in-plane components
        coupling += cfg.electron.velocity * a
    return kinetic + pond + coupling


def default_dt_tdse(cfg: SimulationConfig) -> float:
    bound = 0.5 * cfg.constants.hbar_evfs / tdse_energy_bound(cfg)
    # keep the carrier of the fastest beam sampled at >= 40 points per cycle
    omegas = [b.omega for b in cfg.active_beams]
    if omegas:
        bound = min(bound, 2.0 * math.pi / max(omegas) / 40.0)
    return bound


def derived_quantities(cfg: SimulationConfig) -> dict:
    """Derived values reported with a validated config."""
    out = {
        "electron_velocity_nm_per_fs": cfg.electron.velocity,
        "electron_k_nm^-1": cfg.electron.k_central,
        "dt_tdse_fs": cfg.dt,
        "n_steps": cfg.n_steps,
        "beams": [
            {
                "omega_rad_per_fs": b.omega,
                "k_nm^-1": b.k,
                "rayleigh_range_nm": b.rayleigh_range,
                "mode_peak_field_V_per_nm": b.mode_peak_field,
            }
            for b in cfg.beams
        ],
    }
    return out


def _positive(issues, path, value, what):
    try:
        ok = value > 0
    except TypeError:
        ok = False
    if not ok:
        issues.append(ConfigIssue(path, f"{what} must be positive"))


def _schrodinger_sweep(cfg: SimulationConfig) -> tuple[float, float, float, float]:
    g = cfg.grid_schrodinger
    xmin, xmax, ymin, ymax = g.extent
    # the moving frame is anchored at start_time
    v = cfg.frame_velocity
    shifts = (0.0, v * cfg.total_time)
    return xmin + min(shifts), xmax + max(shifts), ymin, ymax


def validate_config(cfg: SimulationConfig) -> list[ConfigIssue]:
    """Check every invariant; the returned list is empty iff ``cfg`` is runnable."""
    issues: list[ConfigIssue] = []
    for i, b in enumerate(cfg.beams):
        p = f"beams[{i}]"
        _positive(issues, f"{p}.wavelength", b.wavelength, "wavelength")
        _positive(issues, f"{p}.waist", b.waist, "waist")
        _positive(issues, f"{p}.pulse_sigma", b.pulse_sigma, "pulse duration")
        if not (b.peak_field >= 0):
            issues.append(ConfigIssue(f"{p}.peak_field", "peak field must be non-negative"))
        if b.mode_n not in (0, 1):
            issues.append(ConfigIssue(f"{p}.mode_n", f"unsupported Hermite order {b.mode_n}"))
        if b.mode_m != 0:
            issues.append(ConfigIssue(f"{p}.mode_m", "mode_m is fixed to 0 in two dimensions"))
        if b.direction not in (1, -1):
            issues.append(ConfigIssue(f"{p}.direction", "direction must be +1 or -1"))
        if b.power_reference_waist is not None:
            _positive(issues, f"{p}.power_reference_waist", b.power_reference_waist, "reference waist")
    e = cfg.electron
    _positive(issues, "electron.width_longitudinal", e.width_longitudinal, "W_L")
    _positive(issues, "electron.width_transverse", e.width_transverse, "W_T")
    if not e.kinetic_energy > 0:
        issues.append(ConfigIssue("electron.kinetic_energy", "kinetic energy must be positive"))
    else:
        try:
            electron_velocity(e, cfg.constants)
        except ValueError as exc:
            issues.append(ConfigIssue("electron.kinetic_energy", str(exc)))

    grids = [("grid_schrodinger", cfg.grid_schrodinger)]
    if cfg.grid_maxwell is not None:
        grids.append(("grid_maxwell", cfg.grid_maxwell))
    for name, g in grids:
        if g.nx < 4 or g.ny < 4:
            issues.append(ConfigIssue(f"{name}", "grid needs at least 4 nodes per axis"))
        _positive(issues, f"{name}.dx", g.dx, "grid spacing")
        if g.dx > 0 and not math.isclose(g.dx, g.dy, rel_tol=1e-12):
            issues.append(ConfigIssue(f"{name}.dy", "cells must be square (dx == dy)"))
    if cfg.grid_schrodinger.role != "schrodinger":
        issues.append(ConfigIssue("grid_schrodinger.role", "role must be 'schrodinger'"))

    if cfg.field_provider not in ("analytic", "fdtd"):
        issues.append(ConfigIssue("field_provider", "must be 'analytic' or 'fdtd'"))
    if cfg.frame not in ("comoving", "lab"):
        issues.append(ConfigIssue("frame", "must be 'comoving' or 'lab'"))
    if cfg.gouy not in ("3d", "2d"):
        issues.append(ConfigIssue("gouy", "must be '3d' or '2d'"))
    if cfg.polarization not in ("x", "y"):
        issues.append(ConfigIssue("polarization", "must be 'x' or 'y'"))
    _positive(issues, "total_time", cfg.total_time, "total time")
    if cfg.dt_tdse is not None:
        _positive(issues, "dt_tdse", cfg.dt_tdse, "dt_tdse")
    if not (0 < cfg.courant <= COURANT_LIMIT_2D):
        issues.append(
            ConfigIssue("courant", f"Courant number {cfg.courant} outside (0, 1/sqrt(2)] for 2D FDTD")
        )
    ab = cfg.absorber
    if not (0 <= ab.mask_fraction < 0.5):
        issues.append(ConfigIssue("absorber.mask_fraction", "must lie in [0, 0.5)"))
    if ab.pml_cells < 8:
        issues.append(ConfigIssue("absorber.pml_cells", "PML needs at least 8 cells"))

    if issues:
        return issues

    # checks that need a consistent config
    if cfg.dt_tdse is not None:
        limit = cfg.constants.hbar_evfs / tdse_energy_bound(cfg)
        if cfg.dt_tdse >= limit:
            issues.append(
                ConfigIssue("dt_tdse", f"dt_tdse {cfg.dt_tdse} fs violates the stability bound {limit:.4g} fs")
            )
    if cfg.field_provider == "fdtd":
        if cfg.grid_maxwell is None:
            issues.append(ConfigIssue("grid_maxwell", "required for the fdtd field provider"))
        else:
            gm = cfg.grid_maxwell
            if gm.role != "maxwell":
                issues.append(ConfigIssue("grid_maxwell.role", "role must be 'maxwell'"))
            xmin, xmax, ymin, ymax = _schrodinger_sweep(cfg)
            mx0, mx1, my0, my1 = gm.extent
            if xmin < mx0 or xmax > mx1 or ymin < my0 or ymax > my1:
                issues.append(
                    ConfigIssue("grid_schrodinger", "Schrodinger grid is not inside the Maxwell grid")
                )
    g = cfg.grid_schrodinger
    for name, coord, c0, w in (("width_longitudinal", g.x, e.center[0], e.width_longitudinal), ("width_transverse", g.y, e.center[1], e.width_transverse)):
        if w < 4 * g.dx:
            issues.append(ConfigIssue(f"electron.{name}", f"{w} nm spans fewer than 4 grid cells"))
            continue
        dens = np.exp(-((coord - c0) ** 2) / (2.0 * w**2))
        edge = max(dens[0], dens[-1]) / dens.max()
        if edge > CLIP_LEVEL:
            issues.append(
                ConfigIssue(f"electron.{name}", f"wavepacket clipped by the grid (edge density {edge:.2e} of peak)")
            )
    lam_db = 2.0 * math.pi / max(abs(e.k_central - cfg.carrier_k), 1e-300)
    if lam_db / g.dx < 4.0:
        issues.append(
            ConfigIssue(
                "grid_schrodinger.dx",
                f"spacing {g.dx} nm does not resolve the de Broglie wavelength {lam_db:.4g} nm "
                "(use frame: comoving)",
            )
        )
    return issues


def check_config(cfg: SimulationConfig) -> SimulationConfig:
    issues = validate_config(cfg)
    if issues:
        raise ConfigError(issues)
    return cfg


def field_names(cls) -> list[str]:
    return [f.name for f in fields(cls)]
