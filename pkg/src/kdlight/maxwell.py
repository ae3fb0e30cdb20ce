"""2D FDTD solver for the TE set (Ex, Ey, Bz) on a Yee grid.

Staggering on a grid with nodes ``(x_i, y_j)``:

    Ex[i, j] at (x_i + dx/2, y_j)
    Ey[i, j] at (x_i, y_j + dy/2)
    Hz[i, j] at (x_i + dx/2, y_j + dy/2)

``Hz`` stores c*Bz so that every field is in V/nm; E lives on integer time
levels and Hz on half-integer ones. The absorbing boundary is a split-field
PML (Hz = Hzx + Hzy) with polynomially graded conductivity and exponential
time differencing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from .beams import electric_field_analytic
from .model import CODATA2018, COURANT_LIMIT_2D, AbsorberSpec, BeamSpec, GridSpec, PhysicalConstants

__all__ = [
    "FieldState",
    "PlaneWaveSource",
    "FdtdSolver",
    "CourantError",
    "FieldInstabilityError",
    "pml_profile",
    "step_fdtd",
    "absorbing_boundary",
    "sample_vector_potential",
    "field_energy",
    "curl_a",
]


class CourantError(ValueError):
    pass


class FieldInstabilityError(RuntimeError):
    pass


@dataclass
class FieldState:
    grid: GridSpec
    ex: np.ndarray
    ey: np.ndarray
    hz: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    t: float = 0.0
    step: int = 0
    hzx: Optional[np.ndarray] = None
    hzy: Optional[np.ndarray] = None
    hz_prev: Optional[np.ndarray] = None
    ax_prev: Optional[np.ndarray] = None
    ay_prev: Optional[np.ndarray] = None
    ex_prev: Optional[np.ndarray] = None
    ey_prev: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, grid: GridSpec, t: float = 0.0) -> "FieldState":
        shape = (grid.nx, grid.ny)
        z = lambda: np.zeros(shape)  # noqa: E731
        return cls(grid, z(), z(), z(), z(), z(), t, 0, z(), z(), z(), z(), z(), z(), z())

    def bz(self, constants: PhysicalConstants = CODATA2018) -> np.ndarray:
        """Bz in V*fs/nm^2."""
        return self.hz / constants.c_nmfs

    def positions(self, name: str):
        """Coordinates of the staggered samples of ``ex``, ``ey`` or ``hz``."""
        g = self.grid
        x, y = g.x, g.y
        if name in ("ex", "ax"):
            return x + 0.5 * g.dx, y
        if name in ("ey", "ay"):
            return x, y + 0.5 * g.dy
        if name == "hz":
            return x + 0.5 * g.dx, y + 0.5 * g.dy
        raise KeyError(name)


@dataclass(frozen=True)
class PlaneWaveSource:
    """x-polarized plane pulse along +-y; CW when ``pulse_sigma`` is inf.

    ``ramp`` (fs) switches a CW source on smoothly.
    """

    wavelength: float
    amplitude: float = 1.0
    pulse_sigma: float = math.inf
    arrival: float = 0.0
    direction: int = 1
    ramp: float = 0.0
    y_ref: float = 0.0

    def field(self, x, y, t, constants: PhysicalConstants = CODATA2018):
        c = constants.c_nmfs
        k = 2.0 * math.pi / self.wavelength
        w = k * c
        eta = self.direction * (np.asarray(y, float) - self.y_ref)
        tau = np.asarray(t, float) - self.arrival - eta / c
        phase = k * eta - w * np.asarray(t, float)
        env = np.ones_like(tau) if math.isinf(self.pulse_sigma) else np.exp(-(tau**2) / (4 * self.pulse_sigma**2))
        if self.ramp > 0:
            tr = np.asarray(t, float) - eta / c
            env = env * np.where(tr <= 0, 0.0, np.where(tr >= self.ramp, 1.0, np.sin(0.5 * np.pi * np.clip(tr, 0, self.ramp) / self.ramp) ** 2))
        # E = -dA/dt of A = (amp/w) sin(phase)... written directly as a field
        return self.amplitude * env * np.cos(phase) * np.ones_like(np.asarray(x, float))


def pml_profile(n: int, cells: int, order: int, sigma_max: float, offset: float) -> np.ndarray:
    """Conductivity at positions ``i + offset`` (in cells) of an n-point axis."""
    if cells <= 0:
        return np.zeros(n)
    pos = np.arange(n) + offset
    left = np.clip((cells - pos) / cells, 0.0, None)
    right = np.clip((pos - (n - 1 - cells)) / cells, 0.0, None)
    depth = np.clip(np.maximum(left, right), 0.0, 1.0)
    return sigma_max * depth**order


def _decay(sigma: np.ndarray, dt: float):
    """Exponential-differencing coefficients (a, b) with f <- a f + b rhs."""
    a = np.exp(-sigma * dt)
    with np.errstate(invalid="ignore", divide="ignore"):
        b = np.where(sigma > 0, (1.0 - a) / np.where(sigma > 0, sigma, 1.0), dt)
    return a, b


class FdtdSolver:
    """Leapfrog Yee solver with soft line sources for the configured beams.

    Each beam is injected on the Ex row just inside the PML on the side it
    enters from: a beam travelling along +y is added at the low-y row, one
    along -y at the high-y row. The injected increment is
    ``2 * (c dt / dy) * E_target`` per step, which launches the target field
    forward while the backward copy dies in the PML.
    """

    def __init__(
        self,
        grid: GridSpec,
        sources: Sequence = (),
        courant: float = 0.5,
        absorber: AbsorberSpec = AbsorberSpec(),
        t_start: float = 0.0,
        retarded: bool = True,
        constants: PhysicalConstants = CODATA2018,
        pml: bool = True,
        source_offset: int = 2,
        gouy: str = "2d",
    ):
        if not (0 < courant <= COURANT_LIMIT_2D):
            raise CourantError(f"Courant number {courant} must lie in (0, 1/sqrt(2)]")
        if not math.isclose(grid.dx, grid.dy, rel_tol=1e-12):
            raise ValueError("FDTD grid needs square cells")
        self.grid = grid
        self.constants = constants
        self.c = constants.c_nmfs
        self.dt = courant * grid.dx / self.c
        self.courant = courant
        self.sources = list(sources)
        self.retarded = retarded
        self.gouy = gouy
        self.periodic_x = absorber.periodic_x
        self.state = FieldState.zeros(grid, t_start)
        nx, ny = grid.nx, grid.ny
        cells = absorber.pml_cells if pml else 0
        self.pml_cells = cells
        smax = 0.0
        if cells:
            thick = cells * grid.dx
            smax = -(absorber.pml_order + 1) * math.log(absorber.pml_reflection) * self.c / (2.0 * thick)
        cx = 0 if self.periodic_x else cells
        sx_int = pml_profile(nx, cx, absorber.pml_order, smax, 0.0)
        sx_half = pml_profile(nx, cx, absorber.pml_order, smax, 0.5)
        sy_int = pml_profile(ny, cells, absorber.pml_order, smax, 0.0)
        sy_half = pml_profile(ny, cells, absorber.pml_order, smax, 0.5)
        dt = self.dt
        # Ex at (i+1/2, j): damped by sigma_y(j); Ey at (i, j+1/2): sigma_x(i)
        self.ex_a, self.ex_b = (v[None, :] for v in _decay(sy_int, dt))
        self.ey_a, self.ey_b = (v[:, None] for v in _decay(sx_int, dt))
        self.hzx_a, self.hzx_b = (v[:, None] for v in _decay(sx_half, dt))
        self.hzy_a, self.hzy_b = (v[None, :] for v in _decay(sy_half, dt))
        k = self.c / grid.dx
        self.ex_k, self.ey_k = self.ex_b * k, self.ey_b * k
        self.hzx_k, self.hzy_k = self.hzx_b * k, self.hzy_b * k
        self._w1 = np.zeros((nx, ny))
        self._w2 = np.zeros((nx, ny))
        self._lines = []
        xe = grid.x + 0.5 * grid.dx
        for s in self.sources:
            if isinstance(s, BeamSpec) and not (s.enabled and s.peak_field != 0):
                continue
            direction = s.direction
            j = cells + source_offset if direction == 1 else ny - 1 - cells - source_offset
            self._lines.append((s, j, xe, grid.y[j]))

    # -- sources -------------------------------------------------------------

    def _target(self, src, x, y, t):
        if isinstance(src, BeamSpec):
            return electric_field_analytic([src], x, y, t, self.retarded, self.constants, self.gouy)
        if isinstance(src, PlaneWaveSource):
            return src.field(x, y, t, self.constants)
        return src(x, y, t)

    # -- stepping ------------------------------------------------------------

    def step(self) -> FieldState:
        s = self.state
        c, dt, d = self.c, self.dt, self.grid.dx
        w1, w2 = self._w1, self._w2
        # H from n-1/2 to n+1/2
        if self.periodic_x:
            np.subtract(np.roll(s.ey, -1, axis=0), s.ey, out=w1)
        else:
            np.subtract(s.ey[1:], s.ey[:-1], out=w1[:-1])
            np.negative(s.ey[-1], out=w1[-1])
        np.subtract(s.ex[:, 1:], s.ex[:, :-1], out=w2[:, :-1])
        np.negative(s.ex[:, -1], out=w2[:, -1])
        s.hz_prev[...] = s.hz
        s.hzx *= self.hzx_a
        w1 *= self.hzx_k
        s.hzx -= w1
        s.hzy *= self.hzy_a
        w2 *= self.hzy_k
        s.hzy += w2
        np.add(s.hzx, s.hzy, out=s.hz)
        # E from n to n+1; the trapezoid for A needs the old E
        s.ax_prev[...] = s.ax
        s.ay_prev[...] = s.ay
        half = 0.5 * dt
        s.ax -= half * s.ex
        s.ay -= half * s.ey
        np.subtract(s.hz[:, 1:], s.hz[:, :-1], out=w1[:, 1:])
        w1[:, 0] = s.hz[:, 0]
        if self.periodic_x:
            np.subtract(s.hz, np.roll(s.hz, 1, axis=0), out=w2)
        else:
            np.subtract(s.hz[1:], s.hz[:-1], out=w2[1:])
            w2[0] = s.hz[0]
        s.ex_prev[...] = s.ex
        s.ey_prev[...] = s.ey
        s.ex *= self.ex_a
        w1 *= self.ex_k
        s.ex += w1
        s.ey *= self.ey_a
        w2 *= self.ey_k
        s.ey -= w2
        t_half = s.t + half
        gain = 2.0 * c * dt / d
        for src, j, xe, yj in self._lines:
            s.ex[:, j] += gain * self._target(src, xe, yj, t_half)
        s.ax -= half * s.ex
        s.ay -= half * s.ey
        s.t += dt
        s.step += 1
        if s.step % 64 == 0 and not np.isfinite(s.hz).all():
            raise FieldInstabilityError(f"non-finite field at step {s.step} (t = {s.t:.4g} fs)")
        return s

    def run(self, n_steps: int, callback: Optional[Callable] = None) -> FieldState:
        for _ in range(n_steps):
            self.step()
            if callback is not None:
                callback(self.state)
        return self.state

    def advance_to(self, t: float) -> FieldState:
        """Step until the state time is at least ``t``."""
        while self.state.t < t - 1e-12 * max(1.0, abs(t)):
            self.step()
        return self.state

    def sample_vector_potential(self, target: GridSpec, t_query: float, shift=(0.0, 0.0)):
        return sample_vector_potential(self.state, target, t_query, self.dt, shift)


def step_fdtd(solver: FdtdSolver, n_steps: int = 1) -> FieldState:
    """Advance ``solver`` by ``n_steps`` leapfrog steps."""
    return solver.run(n_steps)


def absorbing_boundary(state: FieldState) -> FieldState:
    """The PML is built into the update coefficients; a field of zeros stays zero."""
    return state


def _interp(arr: np.ndarray, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    return map_coordinates(arr, [ix, iy], order=1, mode="nearest", prefilter=False)


def sample_vector_potential(
    state: FieldState,
    target: GridSpec,
    t_query: float,
    dt: Optional[float] = None,
    shift=(0.0, 0.0),
):
    """(Ax, Ay) on ``target`` nodes displaced by ``shift`` at time ``t_query``.

    Bilinear in space from each component's staggered positions and linear
    in time between the last two Maxwell levels.
    """
    g = state.grid
    tx = target.x + shift[0]
    ty = target.y + shift[1]
    xmin, xmax, ymin, ymax = g.extent
    tol = 1e-9 * g.dx
    if tx[0] < xmin - tol or tx[-1] > xmax + tol or ty[0] < ymin - tol or ty[-1] > ymax + tol:
        raise ValueError("target grid lies outside the Maxwell domain")
    if dt is None:
        dt = 0.0
    if dt > 0:
        w = (state.t - t_query) / dt
        if w < -1e-9 or w > 1.0 + 1e-9:
            raise ValueError(f"t_query {t_query} outside the last Maxwell step [{state.t - dt}, {state.t}]")
        w = min(max(w, 0.0), 1.0)
    else:
        w = 0.0
    X, Y = np.meshgrid(tx, ty, indexing="ij")
    out = []
    for cur, prev, offx, offy in (
        (state.ax, state.ax_prev, 0.5, 0.0),
        (state.ay, state.ay_prev, 0.0, 0.5),
    ):
        ix = (X - g.origin[0]) / g.dx - offx
        iy = (Y - g.origin[1]) / g.dy - offy
        arr = cur if w == 0.0 else (1.0 - w) * cur + w * prev
        out.append(_interp(arr, ix, iy))
    return out[0], out[1]


def field_energy(state: FieldState) -> float:
    """Discretely conserved energy (eps0 = 1 units).

    Leapfrog conserves ``|H^(n+1/2)|^2 + E^n . E^(n+1)`` exactly in a lossless
    box, so E enters through the product of its last two levels.
    """
    g = state.grid
    e2 = np.sum(state.ex * state.ex_prev) + np.sum(state.ey * state.ey_prev)
    h2 = np.sum(state.hz**2)
    return 0.5 * float(e2 + h2) * g.dx * g.dy


def curl_a(state: FieldState) -> np.ndarray:
    """Discrete z-curl of A at the Hz positions (interior only; last row/column zero)."""
    g = state.grid
    out = np.zeros_like(state.hz)
    out[:-1, :-1] = (state.ay[1:, :-1] - state.ay[:-1, :-1]) / g.dx - (
        state.ax[:-1, 1:] - state.ax[:-1, :-1]
    ) / g.dy
    return out
