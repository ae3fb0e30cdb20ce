"""Minimal-coupling Schrodinger propagation with spectral derivatives and SOD time stepping.

The wavefunction lives on a 2D grid indexed ``psi[i, j]`` at ``(x_i, y_j)``
with x along the electron velocity. In the co-moving frame the stored
envelope ``phi`` relates to the lab wavefunction by

    psi(x, y, t) = phi(x - v (t - t_origin), y, t) * exp(i (k_c x - omega_c t))

with ``hbar k_c = m v``. The envelope obeys the lab equation plus the scalar
term ``e v A_x``, and the fields are sampled at the lab position
``x' + v (t - t_origin)``.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import fft as sfft

from .beams import gouy_factor, temporal_envelope
from .model import CLIP_LEVEL, CODATA2018, ElectronSpec, GridSpec, PhysicalConstants, SimulationConfig, check_config

__all__ = [
    "WavefunctionState",
    "SpectralOperators",
    "NumericalInstabilityError",
    "WallClockExceeded",
    "AnalyticProvider",
    "NullProvider",
    "FdtdProvider",
    "make_provider",
    "absorbing_mask",
    "init_wavepacket",
    "apply_hamiltonian",
    "step_sod",
    "bootstrap_previous",
    "propagate",
    "time_reversed",
    "Every",
    "AtTimes",
    "InteractionResult",
    "run_interaction",
    "save_checkpoint",
    "load_checkpoint",
]

NORM_JUMP_LIMIT = 1e-4


class NumericalInstabilityError(RuntimeError):
    def __init__(self, step: int, t: float, drift: float, dt: float):
        self.step, self.t, self.drift, self.dt = step, t, drift, dt
        super().__init__(
            f"norm changed by {drift:.3e} in step {step} (t = {t:.4g} fs); "
            f"reduce dt_tdse below {dt:.4g} fs"
        )


class WallClockExceeded(RuntimeError):
    pass


@dataclass
class WavefunctionState:
    """Complex envelope on the Schrodinger grid plus bookkeeping.

    ``psi_prev`` holds the previous SOD level. ``carrier_k`` and
    ``frame_velocity`` describe the Galilean frame (both 0 in the lab frame).
    """

    psi: np.ndarray
    grid: GridSpec
    t: float
    step: int = 0
    psi_prev: Optional[np.ndarray] = None
    norm_history: list = field(default_factory=list)
    absorbed_fraction: float = 0.0
    carrier_k: float = 0.0
    frame_velocity: float = 0.0
    t_origin: float = 0.0

    @property
    def cell_area(self) -> float:
        return self.grid.dx * self.grid.dy

    @property
    def norm(self) -> float:
        return norm_of(self.psi, self.grid)

    @property
    def frame_shift(self) -> float:
        """Lab x of the co-moving origin at the current time."""
        return self.frame_velocity * (self.t - self.t_origin)

    def copy(self) -> "WavefunctionState":
        return WavefunctionState(
            self.psi.copy(),
            self.grid,
            self.t,
            self.step,
            None if self.psi_prev is None else self.psi_prev.copy(),
            list(self.norm_history),
            self.absorbed_fraction,
            self.carrier_k,
            self.frame_velocity,
            self.t_origin,
        )


def norm_of(psi: np.ndarray, grid: GridSpec) -> float:
    return float(np.vdot(psi, psi).real * grid.dx * grid.dy)


class SpectralOperators:
    """FFT wavenumbers and the kinetic multiplier for one grid."""

    def __init__(self, grid: GridSpec, constants: PhysicalConstants = CODATA2018, workers: Optional[int] = None):
        self.grid = grid
        self.constants = constants
        # sweep cells pin this to 1 through the environment to avoid oversubscription
        self.workers = workers if workers is not None else int(os.environ.get("KDLIGHT_FFT_WORKERS", "-1"))
        self.kx = 2.0 * np.pi * sfft.fftfreq(grid.nx, d=grid.dx)
        self.ky = 2.0 * np.pi * sfft.fftfreq(grid.ny, d=grid.dy)
        self.kinetic = constants.hbar2_2m * (self.kx[:, None] ** 2 + self.ky[None, :] ** 2)
        self.coupling = constants.hbar_evfs / (2.0 * constants.m0_ev)
        self.inv_2m = 1.0 / (2.0 * constants.m0_ev)

    def fft2(self, a):
        return sfft.fft2(a, workers=self.workers)

    def ifft2(self, a):
        return sfft.ifft2(a, workers=self.workers)


def apply_hamiltonian(
    psi: np.ndarray,
    ax: Optional[np.ndarray],
    ay: Optional[np.ndarray],
    ops: SpectralOperators,
    frame_velocity: float = 0.0,
) -> np.ndarray:
    """H psi for H = (p + eA)^2 / 2m (+ e v A_x in the co-moving frame).

    The linear term is evaluated in the symmetric form
    ``(hbar/2m) (A.k psi + k.(A psi))`` so that the discrete operator is
    Hermitian for any sampled A. ``ax`` or ``ay`` may be None.
    """
    psi_k = ops.fft2(psi)
    acc_k = ops.kinetic * psi_k
    out = np.zeros_like(psi)
    potential = None
    c = ops.coupling
    for a, kvec, is_x in ((ax, ops.kx, True), (ay, ops.ky, False)):
        if a is None:
            continue
        kk = kvec[:, None] if is_x else kvec[None, :]
        acc_k += c * kk * ops.fft2(a * psi)
        out += c * a * ops.ifft2(kk * psi_k)
        term = a * a * ops.inv_2m
        if is_x and frame_velocity != 0.0:
            term = term + frame_velocity * a
        potential = term if potential is None else potential + term
    out += ops.ifft2(acc_k)
    if potential is not None:
        out += potential * psi
    return out


def absorbing_mask(grid: GridSpec, fraction: float = 0.08, exponent: float = 0.125) -> np.ndarray:
    """Separable cos^exponent ramp over the outer ``fraction`` of each axis."""

    def ramp(n):
        m = np.ones(n)
        width = int(round(fraction * n))
        if width < 1:
            return m
        u = (np.arange(width, 0, -1)) / (width + 1.0)  # 1 at the edge, -> 0 inside
        edge = np.cos(0.5 * np.pi * u) ** exponent
        m[:width] = edge
        m[n - width :] = edge[::-1]
        return m

    return ramp(grid.nx)[:, None] * ramp(grid.ny)[None, :]


def init_wavepacket(
    e: ElectronSpec,
    grid: GridSpec,
    carrier_k: Optional[float] = None,
    t: float = 0.0,
    frame_velocity: float = 0.0,
    constants: PhysicalConstants = CODATA2018,
) -> WavefunctionState:
    """Gaussian packet with |psi|^2 widths W_L along x and W_T along y.

    ``carrier_k`` is the frame wavenumber removed from the plane-wave factor;
    it defaults to 0 (lab frame, full carrier ``exp(i k_el x)``).
    """
    wl, wt = e.width_longitudinal, e.width_transverse
    if wl < 4 * grid.dx or wt < 4 * grid.dy:
        raise ValueError(f"wavepacket widths ({wl}, {wt}) nm must be at least 4 grid cells")
    k_el = constants.m0_ev * e.velocity / constants.hbar_evfs
    kc = 0.0 if carrier_k is None else carrier_k
    k_res = k_el - kc
    if k_res != 0.0 and 2.0 * np.pi / abs(k_res) < 4.0 * grid.dx:
        raise ValueError(
            f"grid spacing {grid.dx} nm does not resolve the wavelength {2 * np.pi / abs(k_res):.4g} nm"
        )
    x, y = grid.x, grid.y
    x0, y0 = e.center
    gx = np.exp(-((x - x0) ** 2) / (4.0 * wl**2))
    gy = np.exp(-((y - y0) ** 2) / (4.0 * wt**2))
    # density on the boundary relative to the peak (the envelope may be off-centre)
    edge = max(max(gx[0], gx[-1]) ** 2 / gx.max() ** 2, max(gy[0], gy[-1]) ** 2 / gy.max() ** 2)
    if edge > CLIP_LEVEL:
        raise ValueError(f"wavepacket clipped by the grid: edge density {edge:.2e} of peak exceeds {CLIP_LEVEL:g}")
    psi = (gx * np.exp(1j * k_res * x))[:, None] * gy[None, :]
    psi = psi.astype(complex)
    psi /= math.sqrt(norm_of(psi, grid))
    return WavefunctionState(
        psi=psi,
        grid=grid,
        t=t,
        carrier_k=kc,
        frame_velocity=frame_velocity,
        t_origin=t,
        norm_history=[(t, 1.0)],
    )


# --- field providers -------------------------------------------------------


class NullProvider:
    polarization = "y"

    def __call__(self, t: float):
        return None, None


class AnalyticProvider:
    """Closed-form superposed beams sampled on a (possibly moving) Schrodinger grid.

    All y-dependent factors are precomputed; each call costs one real exp and
    one cosine per beam and grid point.
    """

    def __init__(
        self,
        beams,
        grid: GridSpec,
        polarization: str = "y",
        frame_velocity: float = 0.0,
        t_origin: float = 0.0,
        retarded: bool = True,
        constants: PhysicalConstants = CODATA2018,
        gouy: str = "3d",
    ):
        self.polarization = polarization
        self.grid = grid
        self.v = frame_velocity
        self.t_origin = t_origin
        self.retarded = retarded
        self.c = constants.c_nmfs
        self.x = grid.x
        y = grid.y
        self._beams = []
        for b in beams:
            if not b.enabled or b.peak_field == 0:
                continue
            eta = b.direction * (y - b.focus[1])
            yr = b.rayleigh_range
            w = b.waist * np.sqrt(1.0 + (eta / yr) ** 2)
            inv_r = eta / (eta**2 + yr**2)
            n = b.mode_n
            norm = b.power_amplitude * (2.0 / math.pi) ** 0.25 / math.sqrt(2.0**n * math.factorial(n))
            pref = norm / np.sqrt(w)
            if n == 1:
                pref = pref * 2.0 * math.sqrt(2.0) / w  # H_1(sqrt2 x / W) = 2 sqrt2 x / W
            elif n != 0:
                raise ValueError("only Hermite orders 0 and 1 are supported on the fast path")
            self._beams.append(
                dict(
                    beam=b,
                    eta=eta,
                    re_q=-1.0 / w**2,
                    im_q=0.5 * b.k * inv_r,
                    pref=pref,
                    phase_y=b.k * eta - gouy_factor(n, gouy) * np.arctan(eta / yr),
                )
            )

    def lab_x(self, t: float) -> np.ndarray:
        return self.x + self.v * (t - self.t_origin)

    def scalar(self, t: float) -> Optional[np.ndarray]:
        if not self._beams:
            return None
        xl = self.lab_x(t)
        total = np.zeros((self.grid.nx, self.grid.ny))
        for d in self._beams:
            b = d["beam"]
            tau = t - b.arrival - (d["eta"] / self.c if self.retarded else 0.0)
            env = temporal_envelope(b, tau) * d["pref"]
            xr = (xl - b.focus[0])[:, None]
            x2 = xr * xr
            val = np.exp(x2 * d["re_q"][None, :]) * np.cos(x2 * d["im_q"][None, :] + (d["phase_y"] - b.omega * t)[None, :])
            if b.mode_n == 1:
                val *= xr
            total += val * env[None, :]
        return total

    def __call__(self, t: float):
        a = self.scalar(t)
        if a is None:
            return None, None
        return (a, None) if self.polarization == "x" else (None, a)


class FdtdProvider:
    """Drives an FDTD solver forward and samples its accumulated A."""

    polarization = "xy"

    def __init__(self, solver, grid: GridSpec, frame_velocity: float = 0.0, t_origin: float = 0.0):
        self.solver = solver
        self.grid = grid
        self.v = frame_velocity
        self.t_origin = t_origin

    def __call__(self, t: float):
        self.solver.advance_to(t)
        shift = (self.v * (t - self.t_origin), 0.0)
        return self.solver.sample_vector_potential(self.grid, t, shift=shift)


def make_provider(cfg: SimulationConfig):
    g = cfg.grid_schrodinger
    if not cfg.active_beams:
        return NullProvider()
    if cfg.field_provider == "analytic":
        return AnalyticProvider(
            cfg.active_beams,
            g,
            cfg.polarization,
            cfg.frame_velocity,
            cfg.start_time,
            cfg.retarded_envelope,
            cfg.constants,
            cfg.gouy,
        )
    from .maxwell import FdtdSolver

    solver = FdtdSolver(
        cfg.grid_maxwell,
        cfg.active_beams,
        courant=cfg.courant,
        absorber=cfg.absorber,
        t_start=cfg.start_time,
        retarded=cfg.retarded_envelope,
        constants=cfg.constants,
        gouy=cfg.gouy,
    )
    return FdtdProvider(solver, g, cfg.frame_velocity, cfg.start_time)


# --- time stepping ---------------------------------------------------------


def _rhs(psi, fields, ops, v):
    return (-1j / ops.constants.hbar_evfs) * apply_hamiltonian(psi, fields[0], fields[1], ops, v)


def bootstrap_previous(state: WavefunctionState, provider, ops: SpectralOperators, dt: float) -> np.ndarray:
    """psi(t - dt) from one fourth-order Runge-Kutta step taken backwards."""
    v = state.frame_velocity
    t = state.t
    h = -dt
    f0 = provider(t)
    fm = provider(t + 0.5 * h)
    f1 = provider(t + h)
    k1 = _rhs(state.psi, f0, ops, v)
    k2 = _rhs(state.psi + 0.5 * h * k1, fm, ops, v)
    k3 = _rhs(state.psi + 0.5 * h * k2, fm, ops, v)
    k4 = _rhs(state.psi + h * k3, f1, ops, v)
    return state.psi + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step_sod(psi_prev, psi_curr, fields, ops: SpectralOperators, dt: float, frame_velocity: float = 0.0):
    """psi(t + dt) = psi(t - dt) - (2 i dt / hbar) H(t) psi(t)."""
    h_psi = apply_hamiltonian(psi_curr, fields[0], fields[1], ops, frame_velocity)
    return psi_prev - (2j * dt / ops.constants.hbar_evfs) * h_psi


def propagate(
    state: WavefunctionState,
    n_steps: int,
    dt: float,
    provider=None,
    ops: Optional[SpectralOperators] = None,
    mask: Optional[np.ndarray] = None,
    observers: Sequence[Callable] = (),
    check_norm: bool = True,
    deadline: Optional[float] = None,
) -> WavefunctionState:
    """Advance ``state`` in place by ``n_steps`` SOD steps and return it.

    A missing previous level is bootstrapped. ``mask`` multiplies both SOD
    levels after every step; the norm it removes is added to
    ``absorbed_fraction``.
    """
    provider = provider or NullProvider()
    ops = ops or SpectralOperators(state.grid)
    v = state.frame_velocity
    if state.psi_prev is None:
        state.psi_prev = bootstrap_previous(state, provider, ops, dt)
    area = state.cell_area
    # Re<psi_{n+1}|psi_n> is exactly conserved by SOD for any Hermitian H(t),
    # whereas |psi_n|^2 swings by O((V dt / hbar)^2) under strong potentials.
    # The guard tracks the invariant plus the part removed by the mask.
    removed = 0.0
    last_total = float(np.vdot(state.psi, state.psi_prev).real) * area
    for _ in range(n_steps):
        fields = provider(state.t)
        nxt = step_sod(state.psi_prev, state.psi, fields, ops, dt, v)
        if mask is not None:
            inv_before = float(np.vdot(nxt, state.psi).real) * area
            nxt *= mask
            state.psi *= mask
            loss = inv_before - float(np.vdot(nxt, state.psi).real) * area
            # the invariant, not |psi|^2, is what the unmasked step conserves
            state.absorbed_fraction += loss
            removed += loss
        state.psi_prev, state.psi = state.psi, nxt
        state.t += dt
        state.step += 1
        nrm = float(np.vdot(nxt, nxt).real) * area
        if not np.isfinite(nrm):
            raise NumericalInstabilityError(state.step, state.t, float("inf"), dt)
        total = float(np.vdot(nxt, state.psi_prev).real) * area + removed
        if check_norm and abs(total - last_total) > NORM_JUMP_LIMIT:
            raise NumericalInstabilityError(state.step, state.t, abs(total - last_total), dt)
        last_total = total
        state.norm_history.append((state.t, nrm))
        for obs in observers:
            obs(state)
        if deadline is not None and time.monotonic() > deadline:
            raise WallClockExceeded(f"wall-clock budget exceeded at step {state.step}")
    return state


def time_reversed(state: WavefunctionState) -> WavefunctionState:
    """Swap and conjugate the two SOD levels (exact reversal when H is real)."""
    if state.psi_prev is None:
        raise ValueError("time reversal needs both SOD levels")
    out = state.copy()
    out.psi, out.psi_prev = np.conj(state.psi_prev), np.conj(state.psi)
    return out


# --- observers -------------------------------------------------------------


class Every:
    """Call ``fn(state)`` every ``n`` steps."""

    def __init__(self, n: int, fn: Callable):
        self.n, self.fn = max(1, int(n)), fn

    def __call__(self, state):
        if state.step % self.n == 0:
            self.fn(state)


class AtTimes:
    """Call ``fn(state)`` at the first step reaching each requested time."""

    def __init__(self, times, fn: Callable):
        self.pending = sorted(float(t) for t in times)
        self.fn = fn

    def __call__(self, state):
        while self.pending and state.t >= self.pending[0] - 1e-9:
            self.pending.pop(0)
            self.fn(state)


# --- driver ----------------------------------------------------------------


@dataclass
class InteractionResult:
    state: WavefunctionState
    status: str  # "completed" or "checkpointed"
    steps: int
    dt: float
    wall_seconds: float
    checkpoint: Optional[str] = None


def save_checkpoint(path: str, state: WavefunctionState) -> None:
    hist = np.asarray(state.norm_history, dtype=float).reshape(-1, 2)
    np.savez(
        path,
        psi=state.psi,
        psi_prev=state.psi_prev if state.psi_prev is not None else np.zeros(0, complex),
        t=state.t,
        step=state.step,
        absorbed=state.absorbed_fraction,
        norm_history=hist,
        carrier_k=state.carrier_k,
        frame_velocity=state.frame_velocity,
        t_origin=state.t_origin,
    )


def load_checkpoint(path: str, grid: GridSpec) -> WavefunctionState:
    with np.load(path) as z:
        prev = z["psi_prev"]
        return WavefunctionState(
            psi=z["psi"].copy(),
            grid=grid,
            t=float(z["t"]),
            step=int(z["step"]),
            psi_prev=prev.copy() if prev.size else None,
            norm_history=[tuple(r) for r in z["norm_history"]],
            absorbed_fraction=float(z["absorbed"]),
            carrier_k=float(z["carrier_k"]),
            frame_velocity=float(z["frame_velocity"]),
            t_origin=float(z["t_origin"]),
        )


def initial_state(cfg: SimulationConfig) -> WavefunctionState:
    return init_wavepacket(
        cfg.electron,
        cfg.grid_schrodinger,
        carrier_k=cfg.carrier_k,
        t=cfg.start_time,
        frame_velocity=cfg.frame_velocity,
        constants=cfg.constants,
    )


def run_interaction(
    cfg: SimulationConfig,
    observers: Sequence[Callable] = (),
    provider=None,
    resume: Optional[str] = None,
    checkpoint_path: Optional[str] = None,
) -> InteractionResult:
    """Propagate the configured wavepacket through the configured fields.

    With ``cfg.max_wall_seconds`` set, a run that exceeds the budget writes
    a checkpoint to ``checkpoint_path`` (if given) and returns with status
    ``"checkpointed"``; pass that file as ``resume`` to continue.
    """
    check_config(cfg)
    start = time.monotonic()
    grid = cfg.grid_schrodinger
    if resume is not None:
        state = load_checkpoint(resume, grid)
    else:
        state = initial_state(cfg)
    provider = provider or make_provider(cfg)
    ops = SpectralOperators(grid, cfg.constants)
    mask = absorbing_mask(grid, cfg.absorber.mask_fraction, cfg.absorber.mask_exponent)
    dt = cfg.dt
    n_total = cfg.n_steps
    remaining = n_total - state.step
    deadline = start + cfg.max_wall_seconds if cfg.max_wall_seconds else None
    status, ckpt = "completed", None
    try:
        propagate(state, remaining, dt, provider, ops, mask, observers, deadline=deadline)
    except WallClockExceeded:
        status = "checkpointed"
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, state)
            ckpt = checkpoint_path
    return InteractionResult(state, status, state.step, dt, time.monotonic() - start, ckpt)
