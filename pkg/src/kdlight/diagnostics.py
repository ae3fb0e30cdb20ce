"""Momentum- and energy-space analysis of wavefunction states.

Axis convention: longitudinal is the electron propagation axis x, transverse
is the optical axis y. Momentum densities are |psi~|^2 with the unitary
transform ``psi~ = FFT(psi) dx dy / (2 pi)``, so they integrate to the norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import fft as sfft
from scipy.signal import find_peaks

from .model import CODATA2018, ElectronSpec, PhysicalConstants
from .tdse import WavefunctionState

__all__ = [
    "Spectrum",
    "SidebandStats",
    "MomentumMap",
    "ResolutionError",
    "momentum_density",
    "momentum_map",
    "momentum_spectrum",
    "energy_gain_spectrum",
    "detect_sidebands",
    "order_populations",
    "order_energy_spectra",
    "scattered_energy_spectrum",
    "spacing_statistics",
    "l1_distance",
]


class ResolutionError(ValueError):
    pass


@dataclass
class Spectrum:
    axis: np.ndarray
    density: np.ndarray
    axis_kind: str  # k_transverse, k_longitudinal or energy_gain
    normalization: str = "unit_integral"
    clipped_weight: float = 0.0

    @property
    def step(self) -> float:
        return float(self.axis[1] - self.axis[0])

    @property
    def units(self) -> str:
        return "eV" if self.axis_kind == "energy_gain" else "rad/nm"

    def integral(self) -> float:
        return float(self.density.sum() * self.step)

    def max_normalized(self) -> "Spectrum":
        peak = self.density.max()
        dens = self.density / peak if peak > 0 else self.density.copy()
        return Spectrum(self.axis.copy(), dens, self.axis_kind, "unit_max", self.clipped_weight)

    def mean(self) -> float:
        w = self.density.sum()
        return float((self.axis * self.density).sum() / w) if w > 0 else float("nan")


@dataclass
class SidebandStats:
    peaks: np.ndarray
    count: int
    mean_spacing: float = float("nan")
    standard_error: float = float("nan")
    median_spacing: float = float("nan")
    low_confidence: bool = True
    spacings: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class MomentumMap:
    kx: np.ndarray  # lab longitudinal wavenumber
    ky: np.ndarray
    density: np.ndarray  # |psi~|^2, indexed [kx, ky]

    @property
    def dkx(self) -> float:
        return float(self.kx[1] - self.kx[0])

    @property
    def dky(self) -> float:
        return float(self.ky[1] - self.ky[0])

    def marginal(self, axis: str) -> Spectrum:
        if axis == "longitudinal":
            return Spectrum(self.kx.copy(), self.density.sum(axis=1) * self.dky, "k_longitudinal")
        if axis == "transverse":
            return Spectrum(self.ky.copy(), self.density.sum(axis=0) * self.dkx, "k_transverse")
        raise ValueError(f"unknown axis {axis!r}")

    def cropped(self, rel_level: float = 1e-6, margin: int = 4) -> "MomentumMap":
        """Restrict to the rectangle where the density exceeds ``rel_level`` of its peak."""
        mask = self.density >= rel_level * self.density.max()
        ii = np.flatnonzero(mask.any(axis=1))
        jj = np.flatnonzero(mask.any(axis=0))
        i0, i1 = max(ii[0] - margin, 0), min(ii[-1] + margin + 1, self.kx.size)
        j0, j1 = max(jj[0] - margin, 0), min(jj[-1] + margin + 1, self.ky.size)
        return MomentumMap(self.kx[i0:i1].copy(), self.ky[j0:j1].copy(), self.density[i0:i1, j0:j1].copy())


def momentum_density(state: WavefunctionState, pad_x: int = 1, pad_y: int = 1):
    """(kx_lab, ky, |psi~|^2) with optional zero padding for finer k sampling."""
    g = state.grid
    nx, ny = g.nx * pad_x, g.ny * pad_y
    psik = sfft.fftshift(sfft.fft2(state.psi, s=(nx, ny)))
    dens = np.abs(psik) ** 2 * (g.dx * g.dy / (2.0 * math.pi)) ** 2
    kx = 2.0 * math.pi * sfft.fftshift(sfft.fftfreq(nx, d=g.dx)) + state.carrier_k
    ky = 2.0 * math.pi * sfft.fftshift(sfft.fftfreq(ny, d=g.dy))
    return kx, ky, dens


def momentum_map(state: WavefunctionState, pad_x: int = 1, crop: Optional[float] = None) -> MomentumMap:
    kx, ky, dens = momentum_density(state, pad_x)
    m = MomentumMap(kx, ky, dens)
    return m.cropped(crop) if crop else m


def momentum_spectrum(state: WavefunctionState, axis: str = "transverse", pad: int = 1) -> Spectrum:
    """Marginal |psi~|^2 along ``axis`` ("longitudinal" = x, "transverse" = y)."""
    if axis == "longitudinal":
        return momentum_map(state, pad_x=pad).marginal(axis)
    if axis == "transverse":
        kx, ky, dens = momentum_density(state, 1, pad)
        return Spectrum(ky, dens.sum(axis=0) * (kx[1] - kx[0]), "k_transverse")
    raise ValueError(f"unknown axis {axis!r}")


def _cdf_remap(edges_src: np.ndarray, weights: np.ndarray, edges_dst: np.ndarray) -> np.ndarray:
    """Redistribute bin weights onto new bin edges, linear inside each source bin."""
    cdf = np.concatenate([[0.0], np.cumsum(weights)])
    at = np.interp(edges_dst, edges_src, cdf, left=0.0, right=cdf[-1])
    return np.diff(at)


def energy_gain_spectrum(
    spectrum: Spectrum,
    e: ElectronSpec,
    energy_step: Optional[float] = None,
    energy_range: Optional[tuple[float, float]] = None,
    linearized: bool = False,
    constants: PhysicalConstants = CODATA2018,
) -> Spectrum:
    """Map a longitudinal k spectrum onto energy gain E(k) - E_kin.

    ``E(k) = hbar^2 k^2 / 2m`` (or ``hbar v (k - k_el)`` with ``linearized``).
    The probability in each k bin is spread uniformly over its image, which
    is the Jacobian rescaling done bin-conservatively. Weight at k <= 0 is
    dropped and reported as ``clipped_weight``.
    """
    if spectrum.axis_kind != "k_longitudinal":
        raise ValueError("energy mapping needs a longitudinal spectrum")
    k = spectrum.axis
    dk = spectrum.step
    w = spectrum.density * dk
    edges = np.concatenate([k - 0.5 * dk, [k[-1] + 0.5 * dk]])
    k_el = constants.m0_ev * e.velocity / constants.hbar_evfs
    if linearized:
        e_edges = constants.hbar_evfs * e.velocity * (edges - k_el)
        keep = np.ones(k.size, bool)
    else:
        keep = edges[:-1] >= 0.0
        e_edges = constants.hbar2_2m * edges**2 - e.kinetic_energy
    clipped = float(w[~keep].sum())
    src_edges = e_edges[np.concatenate([keep, [True]])] if keep.any() else e_edges[-1:]
    src_w = w[keep]
    if energy_step is None:
        energy_step = float(np.min(np.diff(src_edges)))
    if energy_range is None:
        lo, hi = src_edges[0], src_edges[-1]
    else:
        lo, hi = energy_range
    # an explicit range is honoured exactly; the default one is covered fully
    span = (hi - lo) / energy_step
    n = int(math.floor(span)) if energy_range is not None else int(math.ceil(span - 1e-9))
    dst = lo + energy_step * np.arange(n + 1)
    dens = _cdf_remap(src_edges, src_w, dst) / energy_step
    centers = 0.5 * (dst[1:] + dst[:-1])
    return Spectrum(centers, dens, "energy_gain", "unit_integral", clipped)


def spacing_statistics(peaks: np.ndarray) -> SidebandStats:
    peaks = np.sort(np.asarray(peaks, dtype=float))
    n = peaks.size
    out = SidebandStats(peaks=peaks, count=n, low_confidence=n < 3)
    if n >= 2:
        d = np.diff(peaks)
        out.spacings = d
        out.mean_spacing = float(d.mean())
        out.median_spacing = float(np.median(d))
        out.standard_error = float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0
    return out


def detect_sidebands(
    s: Spectrum,
    rel_threshold: float = 1e-3,
    min_separation: Optional[float] = None,
    predicted_spacing: Optional[float] = None,
    rel_prominence: float = 0.0,
    window: Optional[tuple[float, float]] = None,
) -> SidebandStats:
    """Local maxima above ``rel_threshold * max`` and their spacing statistics.

    Peaks closer than ``min_separation`` (default: half of
    ``predicted_spacing`` when given, else 3 bins) are merged by keeping the
    higher one.
    """
    axis, dens = s.axis, s.density
    if window is not None:
        sel = (axis >= window[0]) & (axis <= window[1])
        axis, dens = axis[sel], dens[sel]
    if dens.size == 0 or dens.max() <= 0:
        return spacing_statistics(np.zeros(0))
    step = s.step
    if min_separation is None:
        min_separation = 0.5 * predicted_spacing if predicted_spacing else 3 * step
    distance = max(1, int(round(min_separation / step)))
    peak = dens.max()
    kwargs = dict(height=rel_threshold * peak, distance=distance)
    if rel_prominence > 0:
        kwargs["prominence"] = rel_prominence * peak
    idx, _ = find_peaks(dens, **kwargs)
    # sub-bin refinement by a parabola through the three samples around each maximum
    pos = axis[idx].astype(float)
    inner = (idx > 0) & (idx < dens.size - 1)
    i = idx[inner]
    y0, y1, y2 = dens[i - 1], dens[i], dens[i + 1]
    den = y0 - 2 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(den != 0, 0.5 * (y0 - y2) / den, 0.0)
    pos[inner] += np.clip(off, -0.5, 0.5) * step
    return spacing_statistics(pos)


def order_populations(s: Spectrum, k_ph: float, spacing_multiple: int = 2, max_order: Optional[int] = None):
    """Weight in bins of width ``spacing_multiple * k_ph`` centred on each order.

    Returns ``(orders, weights)``; the bins partition the axis, so the
    weights sum to the spectrum's integral.
    """
    if s.axis_kind != "k_transverse":
        raise ValueError("order populations need a transverse spectrum")
    step = s.step
    width = spacing_multiple * k_ph
    if step >= k_ph:
        raise ResolutionError(f"spectrum bin {step:.4g} rad/nm is not finer than k_ph = {k_ph:.4g}")
    dk = s.step
    edges_src = np.concatenate([s.axis - 0.5 * dk, [s.axis[-1] + 0.5 * dk]])
    if max_order is None:
        max_order = int(math.ceil(max(abs(edges_src[0]), abs(edges_src[-1])) / width))
    orders = np.arange(-max_order, max_order + 1)
    dst = (np.concatenate([orders - 0.5, [orders[-1] + 0.5]])) * width
    # widen the outermost bins so every sample is counted
    dst[0] = min(dst[0], edges_src[0])
    dst[-1] = max(dst[-1], edges_src[-1])
    weights = _cdf_remap(edges_src, s.density * dk, dst)
    return orders, weights


def order_energy_spectra(
    state: WavefunctionState,
    e: ElectronSpec,
    k_ph: float,
    spacing_multiple: int = 2,
    max_order: Optional[int] = None,
    pad_x: int = 8,
    energy_step: float = 0.002,
    energy_range: tuple[float, float] = (-1.0, 1.0),
    constants: PhysicalConstants = CODATA2018,
) -> dict[int, Spectrum]:
    """Energy-gain spectra restricted to each transverse diffraction order.

    Order |m| collects the transverse band ``| |k_y| - m w | < w / 2`` with
    ``w = spacing_multiple * k_ph`` (both signs). Densities keep their
    absolute probability scale, so the spectra of all orders sum to the
    full energy spectrum.
    """
    kx, ky, dens = momentum_density(state, pad_x, 1)
    dky = ky[1] - ky[0]
    width = spacing_multiple * k_ph
    if dky >= k_ph:
        raise ResolutionError(f"transverse bin {dky:.4g} rad/nm is not finer than k_ph = {k_ph:.4g}")
    m_of = np.rint(np.abs(ky) / width).astype(int)
    if max_order is None:
        max_order = int(m_of.max())
    out = {}
    for m in range(max_order + 1):
        sel = m_of == m
        if not sel.any():
            continue
        sp = Spectrum(kx, dens[:, sel].sum(axis=1) * dky, "k_longitudinal")
        out[m] = energy_gain_spectrum(sp, e, energy_step, energy_range, constants=constants)
    return out


def scattered_energy_spectrum(spectra: dict[int, Spectrum], min_order: int = 1) -> Spectrum:
    """Sum of order-resolved energy spectra with |m| >= ``min_order``."""
    keys = [m for m in sorted(spectra) if m >= min_order]
    if not keys:
        raise ValueError(f"no orders with |m| >= {min_order}")
    first = spectra[keys[0]]
    dens = np.sum([spectra[m].density for m in keys], axis=0)
    clipped = float(sum(spectra[m].clipped_weight for m in keys))
    return Spectrum(first.axis.copy(), dens, "energy_gain", "probability", clipped)


def l1_distance(a: Spectrum, b: Spectrum, normalize: str = "max") -> float:
    """L1 distance of two spectra on a common axis after normalization.

    ``normalize="max"`` compares max-normalized curves and divides the summed
    absolute difference by the mean summed curve, which makes the result
    dimensionless and independent of the sampling (0 = identical, 2 =
    disjoint). ``"integral"`` returns the L1 distance of the unit-integral
    densities, also in [0, 2].
    """
    if a.axis.shape != b.axis.shape or not np.allclose(a.axis, b.axis):
        db = np.interp(a.axis, b.axis, b.density, left=0.0, right=0.0)
    else:
        db = b.density
    da = a.density
    if normalize == "integral":
        step = a.step
        return float(np.abs(da / (da.sum() * step) - db / (db.sum() * step)).sum() * step)
    if normalize != "max":
        raise ValueError(f"unknown normalization {normalize!r}")
    na, nb = da / da.max(), db / db.max()
    return float(np.abs(na - nb).sum() / (0.5 * (na.sum() + nb.sum())))
