"""Closed-form pulsed Hermite-Gaussian optics in two dimensions.

Beams propagate along +y or -y and their transverse coordinate is x. The
electron moves along x, so a beam's transverse wavenumber k_perp is the
longitudinal momentum the electron can exchange with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import brentq

from .model import CODATA2018, BeamSpec, PhysicalConstants

__all__ = [
    "TransverseSpectrum",
    "RegimeReport",
    "UnsupportedOrderError",
    "hermite",
    "gouy_factor",
    "hg_envelope",
    "temporal_envelope",
    "vector_potential_analytic",
    "electric_field_analytic",
    "transverse_spectrum",
    "spectrum_coefficient",
    "convolve_spectra",
    "convolution_peak",
    "characteristic_kperp",
    "compton_condition",
    "compton_map",
    "predicted_sideband_spacing",
    "regime_rho",
    "regime_map",
    "rho_unity_locus",
    "exposure_window",
]

MAX_ORDER = 1


class UnsupportedOrderError(ValueError):
    pass


@dataclass
class TransverseSpectrum:
    """Complex amplitude sampled on a symmetric k_perp axis (rad/nm)."""

    k: np.ndarray
    amplitude: np.ndarray
    provenance: str

    def __post_init__(self):
        self.k = np.asarray(self.k, dtype=float)
        self.amplitude = np.asarray(self.amplitude)
        if self.k.shape != self.amplitude.shape:
            raise ValueError("axis and amplitude shapes differ")

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def normalized(self) -> np.ndarray:
        """Amplitude divided by its largest magnitude."""
        peak = np.max(np.abs(self.amplitude))
        return self.amplitude / peak if peak > 0 else self.amplitude


@dataclass(frozen=True)
class RegimeReport:
    rho: float
    recoil_shift: float  # eV
    energy_uncertainty: float  # eV
    classification: str
    bragg_angle: float = field(default=float("nan"))  # rad, recorded only


def hermite(n: int, u):
    """Physicists' Hermite polynomial H_n by the three-term recurrence."""
    u = np.asarray(u, dtype=float)
    h_prev = np.ones_like(u)
    if n == 0:
        return h_prev
    h = 2.0 * u
    for j in range(1, n):
        h_prev, h = h, 2.0 * u * h - 2.0 * j * h_prev
    return h


def _check_order(n: int) -> None:
    if n < 0 or n > MAX_ORDER:
        raise UnsupportedOrderError(f"Hermite order {n} is not supported (0..{MAX_ORDER})")


def gouy_factor(n: int, gouy: str = "3d") -> float:
    """Gouy phase multiplier: 1 + n as printed for 3D beams, n + 1/2 for a true 2D beam."""
    if gouy == "3d":
        return 1.0 + n
    if gouy == "2d":
        return n + 0.5
    raise ValueError(f"unknown Gouy convention {gouy!r}")


def hg_envelope(beam: BeamSpec, x, y, gouy: str = "3d"):
    """Power-normalized complex spatial factor of a beam's vector potential.

    ``y`` is the lab coordinate; it is measured along the propagation
    direction from the focus (mirrored for ``direction == -1``). The result
    multiplies ``exp(i(k*eta - omega*t))`` and carries the Gouy phase
    ``(1 + n) * arctan(eta / y_r)`` (``gouy="2d"``: ``n + 1/2``) and the
    wavefront curvature.
    Its squared magnitude integrates over x to ``power_amplitude**2``.
    """
    _check_order(beam.mode_n)
    x = np.asarray(x, dtype=float) - beam.focus[0]
    eta = beam.direction * (np.asarray(y, dtype=float) - beam.focus[1])
    yr = beam.rayleigh_range
    w0 = beam.waist
    n = beam.mode_n
    ratio = eta / yr
    w = w0 * np.sqrt(1.0 + ratio**2)
    # 1/R written so the focal plane needs no special case
    inv_r = eta / (eta**2 + yr**2)
    norm = beam.power_amplitude * (2.0 / math.pi) ** 0.25 / math.sqrt(2.0**n * math.factorial(n))
    amp = norm / np.sqrt(w) * hermite(n, math.sqrt(2.0) * x / w) * np.exp(-(x**2) / w**2)
    phase = 0.5 * beam.k * x**2 * inv_r - gouy_factor(n, gouy) * np.arctan(ratio)
    return amp * np.exp(1j * phase)


def temporal_envelope(beam: BeamSpec, tau):
    """Amplitude envelope exp(-tau^2 / (4 sigma^2)); unity for CW beams."""
    tau = np.asarray(tau, dtype=float)
    if beam.is_cw:
        return np.ones_like(tau)
    return np.exp(-(tau**2) / (4.0 * beam.pulse_sigma**2))


def _beam_terms(beam: BeamSpec, x, y, t, retarded: bool, c: PhysicalConstants, gouy: str):
    eta = beam.direction * (np.asarray(y, dtype=float) - beam.focus[1])
    tau = np.asarray(t, dtype=float) - beam.arrival
    if retarded:
        tau = tau - eta / c.c_nmfs
    spatial = hg_envelope(beam, x, y, gouy) * np.exp(1j * (beam.k * eta - beam.omega * np.asarray(t, dtype=float)))
    return spatial, tau


def vector_potential_analytic(
    beams: Iterable[BeamSpec],
    x,
    y,
    t,
    retarded: bool = True,
    constants: PhysicalConstants = CODATA2018,
    gouy: str = "3d",
):
    """Scalar vector-potential amplitude of the superposed beams (V*fs/nm).

    Each beam contributes ``Re[U(x, y) exp(i(k*eta - omega*t))] * env``.
    With ``retarded`` the envelope is evaluated at the retarded time
    ``t - t0 - eta/c`` so that the pulse travels with the carrier; otherwise
    it is centred on ``t0`` everywhere. Inputs broadcast against each other.
    """
    x, y, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(t, float))
    total = np.zeros(x.shape, dtype=float)
    for b in beams:
        if not b.enabled or b.peak_field == 0:
            continue
        spatial, tau = _beam_terms(b, x, y, t, retarded, constants, gouy)
        total += np.real(spatial) * temporal_envelope(b, tau)
    return total


def electric_field_analytic(
    beams: Iterable[BeamSpec],
    x,
    y,
    t,
    retarded: bool = True,
    constants: PhysicalConstants = CODATA2018,
    gouy: str = "3d",
):
    """E = -dA/dt including the envelope derivative."""
    x, y, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(t, float))
    total = np.zeros(x.shape, dtype=float)
    for b in beams:
        if not b.enabled or b.peak_field == 0:
            continue
        spatial, tau = _beam_terms(b, x, y, t, retarded, constants, gouy)
        env = temporal_envelope(b, tau)
        d_env = np.zeros_like(env) if b.is_cw else -tau / (2.0 * b.pulse_sigma**2) * env
        d_spatial = -1j * b.omega * spatial
        total -= np.real(d_spatial) * env + np.real(spatial) * d_env
    return total


def spectrum_coefficient(beam: BeamSpec) -> float:
    """Real prefactor c with spectrum c * (-i k)^n * exp(-k^2 w0^2 / 4)."""
    _check_order(beam.mode_n)
    a0, w0 = beam.power_amplitude, beam.waist
    return a0 * w0 ** (0.5 + beam.mode_n) / (2.0 * math.pi) ** 0.25


def transverse_spectrum(beam: BeamSpec, k_grid) -> TransverseSpectrum:
    """Unitary Fourier transform of the focal-plane profile along x.

    Convention: ``F(k) = (2 pi)^-1/2 * integral f(x) exp(-i k x) dx``.
    HG00 gives a real positive Gaussian and HG10 an odd, purely imaginary one.
    """
    k = np.asarray(k_grid, dtype=float)
    c = spectrum_coefficient(beam)
    gauss = np.exp(-(k**2) * beam.waist**2 / 4.0)
    if beam.mode_n == 0:
        amp = c * gauss + 0j
    else:
        amp = -1j * c * k * gauss
    return TransverseSpectrum(k, amp, f"hg{beam.mode_n}0")


def _pair_params(a: BeamSpec, b: BeamSpec) -> tuple[int, int, float, float]:
    _check_order(a.mode_n)
    _check_order(b.mode_n)
    na, nb = a.mode_n, b.mode_n
    # a short-wavelength HG10 partner of a beam at twice its wavelength is
    # treated as HG00 of the same waist
    if na == 1 and nb == 1:
        ratio = a.wavelength / b.wavelength
        if math.isclose(ratio, 2.0, rel_tol=1e-9):
            nb = 0
        elif math.isclose(ratio, 0.5, rel_tol=1e-9):
            na = 0
    return na, nb, a.waist**2 / 4.0, b.waist**2 / 4.0


def convolve_spectra(a: BeamSpec, b: BeamSpec, k_grid) -> TransverseSpectrum:
    """Closed-form convolution of two real transverse profiles.

    The profiles are ``c * k^n * exp(-k^2 w^2 / 4)`` with the ``(-i)^n``
    phase stripped. The (1, 1) result is negative at k = 0.
    """
    k = np.asarray(k_grid, dtype=float)
    na, nb, al, be = _pair_params(a, b)
    ca = a.power_amplitude * a.waist ** (0.5 + na) / (2.0 * math.pi) ** 0.25
    cb = b.power_amplitude * b.waist ** (0.5 + nb) / (2.0 * math.pi) ** 0.25
    s = al + be
    base = ca * cb * math.sqrt(math.pi / s) * np.exp(-al * be * k**2 / s)
    if na == 0 and nb == 0:
        amp = base
    elif na == 1 and nb == 0:
        amp = base * (be / s) * k
    elif na == 0 and nb == 1:
        amp = base * (al / s) * k
    else:
        amp = base * (al * be * k**2 / s**2 - 0.5 / s)
    return TransverseSpectrum(k, amp.astype(complex), f"convolution(hg{na}0,hg{nb}0)")


def convolution_peak(w1: float, w2: float) -> float:
    """k_perp maximizing the odd-times-even convolution k * exp(-w1^2 w2^2 k^2 / (4(w1^2 + w2^2)))."""
    return math.sqrt(2.0 * (w1**2 + w2**2)) / (w1 * w2)


def characteristic_kperp(a: BeamSpec, b: Optional[BeamSpec] = None) -> float:
    """Dominant transverse wavenumber of a beam or of a beam pair.

    Odd convolutions use the location of the maximum; even ones use the
    half width at half maximum of the central lobe. A single beam returns
    the maximum of |spectrum|, which is 0 for HG00.
    """
    if b is None:
        _check_order(a.mode_n)
        return math.sqrt(2.0) / a.waist if a.mode_n == 1 else 0.0
    na, nb, al, be = _pair_params(a, b)
    s = al + be
    g = al * be / s  # Gaussian exponent coefficient
    if na + nb == 1:
        return convolution_peak(a.waist, b.waist)
    if na == 0 and nb == 0:
        return math.sqrt(math.log(2.0) / g)
    # (1, 1): |(2 g u - 1) exp(-u)| with u = g k^2 falls to half its centre value
    u = brentq(lambda u: (1.0 - 2.0 * u) * math.exp(-u) - 0.5, 0.0, 0.5)
    return math.sqrt(u / g)


def compton_condition(v_el, k_perp_1, k_perp_2, omega1, omega2, tolerance):
    """Inelastic Compton matching |(w1 - w2) - v (k1 - k2)| <= tolerance (rad/fs)."""
    mismatch = (np.asarray(omega1) - np.asarray(omega2)) - np.asarray(v_el) * (
        np.asarray(k_perp_1) - np.asarray(k_perp_2)
    )
    return np.abs(mismatch) <= tolerance


def _bandwidth(pulse_sigma, multiplier: float):
    sigma = np.asarray(pulse_sigma, dtype=float)
    with np.errstate(divide="ignore"):
        return multiplier / (2.0 * sigma)


def compton_map(
    beam: BeamSpec,
    velocities,
    pulse_sigmas=None,
    wavelengths=None,
    multiplier: float = 2.0 * math.sqrt(2.0 * math.log(2.0)),
    waist_per_wavelength: Optional[float] = None,
):
    """Boolean map of the stimulated Compton condition for counter-propagating copies of ``beam``.

    Rows follow ``pulse_sigmas`` (or ``wavelengths``), columns follow
    ``velocities`` (nm/fs). A cell is true when the Doppler mismatch
    ``v * 2 k_perp_max`` fits inside the pulse bandwidth
    ``multiplier / (2 sigma)``. Along a wavelength axis the waist scales as
    ``waist_per_wavelength * lambda`` (default: the beam's own ratio).
    """
    v = np.asarray(velocities, dtype=float)
    if (pulse_sigmas is None) == (wavelengths is None):
        raise ValueError("give exactly one of pulse_sigmas or wavelengths")
    if pulse_sigmas is not None:
        kp = characteristic_kperp(beam)
        tol = _bandwidth(pulse_sigmas, multiplier)[:, None]
        return compton_condition(v[None, :], kp, -kp, 0.0, 0.0, tol)
    lam = np.asarray(wavelengths, dtype=float)
    ratio = waist_per_wavelength if waist_per_wavelength is not None else beam.waist / beam.wavelength
    kp = np.array([characteristic_kperp(_with(beam, wavelength=l, waist=ratio * l)) for l in lam])
    tol = float(_bandwidth(beam.pulse_sigma, multiplier))
    return compton_condition(v[None, :], kp[:, None], -kp[:, None], 0.0, 0.0, tol)


def _with(beam: BeamSpec, **changes) -> BeamSpec:
    return replace(beam, **changes)


def predicted_sideband_spacing(v_el, k_perp, constants: PhysicalConstants = CODATA2018):
    """Energy spacing 2 hbar v k_perp in eV (v in nm/fs, k in rad/nm)."""
    k_perp = np.asarray(k_perp, dtype=float)
    if np.any(k_perp < 0):
        raise ValueError("k_perp must be non-negative")
    out = 2.0 * constants.hbar_evfs * np.asarray(v_el, dtype=float) * k_perp
    return float(out) if out.ndim == 0 else out


def _classify(rho: float) -> str:
    if rho < 0.1:
        return "diffraction"
    if rho > 10.0:
        return "bragg"
    return "intermediate"


def regime_rho(w0: float, v_el: float, wavelength: float, constants: PhysicalConstants = CODATA2018) -> RegimeReport:
    """Bragg versus diffraction classifier rho = delta_D / delta_E."""
    for name, val in (("w0", w0), ("v_el", v_el), ("wavelength", wavelength)):
        if not val > 0:
            raise ValueError(f"{name} must be positive")
    hbar = constants.hbar_evfs
    k_ph = 2.0 * math.pi / wavelength
    delta_d = (2.0 * hbar * k_ph) ** 2 / (2.0 * constants.m0_ev)
    delta_e = hbar * v_el / (4.0 * w0)
    rho = delta_d / delta_e
    # Bragg angle for the 2 k_ph grating at the electron wavenumber
    k_el = constants.m0_ev * v_el / hbar
    theta = math.asin(min(1.0, k_ph / k_el))
    return RegimeReport(rho, delta_d, delta_e, _classify(rho), theta)


def regime_map(waists, kinetic_energies, wavelength: float, constants: PhysicalConstants = CODATA2018):
    """rho on a (kinetic energy, waist) grid; rows follow energies (eV)."""
    w = np.asarray(waists, dtype=float)
    e = np.asarray(kinetic_energies, dtype=float)
    v = np.sqrt(2.0 * e / constants.m0_ev)
    hbar = constants.hbar_evfs
    k_ph = 2.0 * math.pi / wavelength
    delta_d = (2.0 * hbar * k_ph) ** 2 / (2.0 * constants.m0_ev)
    return delta_d * 4.0 * w[None, :] / (hbar * v[:, None])


def rho_unity_locus(waists, wavelength: float, constants: PhysicalConstants = CODATA2018):
    """Kinetic energy (eV) at which rho = 1 for each waist."""
    w = np.asarray(waists, dtype=float)
    hbar = constants.hbar_evfs
    k_ph = 2.0 * math.pi / wavelength
    delta_d = (2.0 * hbar * k_ph) ** 2 / (2.0 * constants.m0_ev)
    v_star = 4.0 * w * delta_d / hbar
    return 0.5 * constants.m0_ev * v_star**2


def exposure_window(
    beam: BeamSpec,
    window: float,
    samples_per_cycle: int = 64,
    constants: PhysicalConstants = CODATA2018,
) -> float:
    """Integral of |A| over a window centred on the arrival time, at the field maximum.

    The point of peak field sits at the focus for HG00 and at x = w0/sqrt(2)
    for HG10. Units: V*fs^2/nm.
    """
    if window <= 0:
        return 0.0
    x_peak = beam.focus[0] + (beam.waist / math.sqrt(2.0) if beam.mode_n == 1 else 0.0)
    period = 2.0 * math.pi / beam.omega
    n = max(2001, int(math.ceil(window / period * samples_per_cycle)) | 1)
    t = beam.arrival + np.linspace(-0.5 * window, 0.5 * window, n)
    a = vector_potential_analytic([beam], x_peak, beam.focus[1], t, retarded=False, constants=constants)
    return float(simpson(np.abs(a), x=t))


def standing_wave_pair(beam: BeamSpec, partner: Optional[BeamSpec] = None) -> Sequence[BeamSpec]:
    """The beam plus a counter-propagating copy (or ``partner`` flipped to face it)."""
    other = partner if partner is not None else beam
    return (beam, _with(other, direction=-beam.direction))
