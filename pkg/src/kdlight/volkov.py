"""Kapitza-Dirac diffraction probabilities from the ponderomotive Volkov phase.

A standing wave of two counter-propagating beams imprints the phase
``eta * cos(2 k y)`` on the electron, so order m is populated with
probability ``J_m(eta)**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .beams import hg_envelope
from .model import CODATA2018, BeamSpec, PhysicalConstants

__all__ = [
    "DiffractionDistribution",
    "TruncationError",
    "bessel_j_orders",
    "cw_argument",
    "cw_argument_quadrature",
    "pulsed_argument",
    "distribution",
    "cw_orders",
    "pulsed_orders",
    "populated_order_count",
    "default_order_cutoff",
]

TAIL_LIMIT = 1e-12


class TruncationError(ValueError):
    pass


@dataclass(frozen=True)
class DiffractionDistribution:
    orders: np.ndarray
    probability: np.ndarray
    eta: float
    variant: str

    @property
    def total(self) -> float:
        return float(self.probability.sum())

    def as_dict(self) -> dict:
        return {int(m): float(p) for m, p in zip(self.orders, self.probability)}


def default_order_cutoff(eta: float) -> int:
    return int(math.ceil(abs(eta))) + 40


def bessel_j_orders(x: float, m_max: int) -> np.ndarray:
    """J_0(x) .. J_{m_max}(x) by Miller's downward recurrence.

    The recurrence starts well above both ``m_max`` and ``x`` and is
    normalized with ``J_0 + 2 * sum_k J_2k = 1``.
    """
    if m_max < 0:
        raise ValueError("m_max must be non-negative")
    ax = abs(float(x))
    out = np.zeros(m_max + 1)
    if ax < 1e-100:
        # leading series term (x/2)^m / m!; the recurrence would overflow
        m = np.arange(m_max + 1)
        with np.errstate(under="ignore"):
            out[:] = np.exp(m * (math.log(ax) - math.log(2.0)) - gammaln(m + 1.0)) if ax > 0 else (m == 0)
        out[0] = 1.0
        if x < 0:
            out[1::2] *= -1.0
        return out
    start = max(m_max, int(ax)) + 20 + int(math.sqrt(40.0 * (max(m_max, ax) + 10)))
    start += start % 2
    j_next, j_cur = 0.0, 1e-300
    vals = np.zeros(start + 1)
    for m in range(start, 0, -1):
        j_prev = 2.0 * m / ax * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        vals[m - 1] = j_cur
        scale = abs(j_cur)
        if scale > 1e10:
            # rescale early: for tiny x one step can grow by 2m/x ~ 1e75
            vals[m - 1 :] /= scale
            j_next /= scale
            j_cur /= scale
    vals[start] = 0.0
    even_sum = vals[0] + 2.0 * vals[2::2].sum()
    out[:] = vals[: m_max + 1] / even_sum
    if x < 0:
        out[1::2] *= -1.0
    return out


def _require_positive(**values) -> None:
    for name, v in values.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def cw_argument(
    e0: float,
    w0: float,
    wavelength: float,
    v_el: float,
    field_kind: str = "peak",
    constants: PhysicalConstants = CODATA2018,
) -> float:
    """Bessel argument e^2 E^2 / (8 hbar m v omega^2) of a CW standing wave.

    ``E`` must be the power-normalized standing-wave amplitude (V/nm * nm^1/2).
    With ``field_kind="peak"`` the input ``e0`` is the per-beam HG00 peak field
    at waist ``w0`` and is converted first; this adds the factor
    ``4 * w0 * sqrt(pi/2)`` and is the same for every Hermite order at equal
    power. ``field_kind="power_normalized"`` uses ``e0`` as given.
    """
    _require_positive(waist=w0, wavelength=wavelength, velocity=v_el)
    omega = 2.0 * math.pi * constants.c_nmfs / wavelength
    if field_kind == "peak":
        e_pn = 2.0 * e0 * math.sqrt(w0) * (math.pi / 2.0) ** 0.25
    elif field_kind == "power_normalized":
        e_pn = e0
    else:
        raise ValueError(f"unknown field_kind {field_kind!r}")
    return e_pn**2 / (8.0 * constants.hbar_evfs * constants.m0_ev * v_el * omega**2)


def cw_argument_quadrature(beam: BeamSpec, v_el: float, constants: PhysicalConstants = CODATA2018) -> float:
    """Bessel argument from direct quadrature of the ponderomotive phase.

    For a standing wave made of ``beam`` and its mirror image the modulated
    part of ``|A|^2`` is ``|U(x)|^2 cos(2 k y)`` (time averaged), giving
    ``eta = integral |U|^2 dx / (2 hbar m v)``.
    """
    w = beam.waist

    def integrand(x):
        return abs(complex(hg_envelope(beam, x, beam.focus[1]))) ** 2

    x0 = beam.focus[0]
    val, _ = quad(integrand, x0 - 40 * w, x0 + 40 * w, epsabs=0.0, epsrel=1e-13, limit=400, points=[x0])
    return val / (2.0 * constants.hbar_evfs * constants.m0_ev * v_el)


def pulsed_argument(e0: float, wavelength: float, pulse_sigma: float, constants: PhysicalConstants = CODATA2018) -> float:
    """sqrt(pi/2) e^2 E0^2 sigma / (hbar m omega^2) with E0 the per-beam peak field."""
    _require_positive(wavelength=wavelength, pulse_sigma=pulse_sigma)
    omega = 2.0 * math.pi * constants.c_nmfs / wavelength
    return math.sqrt(math.pi / 2.0) * e0**2 * pulse_sigma / (constants.hbar_evfs * constants.m0_ev * omega**2)


def distribution(eta: float, m_cut: Optional[int] = None, variant: str = "cw") -> DiffractionDistribution:
    """P_m = J_m(eta)^2 for m in -M..M."""
    if m_cut is None:
        m_cut = default_order_cutoff(eta)
    j = bessel_j_orders(eta, m_cut)
    if j[-1] ** 2 >= TAIL_LIMIT:
        raise TruncationError(f"M = {m_cut} leaves J_M^2 = {j[-1] ** 2:.3g} for eta = {eta:.4g}; raise M")
    p_pos = j**2
    probs = np.concatenate([p_pos[:0:-1], p_pos])
    orders = np.arange(-m_cut, m_cut + 1)
    return DiffractionDistribution(orders, probs, float(eta), variant)


def cw_orders(
    e0: float,
    w0: float,
    wavelength: float,
    v_el: float,
    m_cut: Optional[int] = None,
    field_kind: str = "peak",
    constants: PhysicalConstants = CODATA2018,
) -> DiffractionDistribution:
    """CW standing-wave order populations; independent of the Hermite order at equal power."""
    eta = cw_argument(e0, w0, wavelength, v_el, field_kind, constants)
    return distribution(eta, m_cut, "cw")


def pulsed_orders(
    e0: float,
    wavelength: float,
    pulse_sigma: float,
    m_cut: Optional[int] = None,
    constants: PhysicalConstants = CODATA2018,
) -> DiffractionDistribution:
    """Pulsed plane-wave standing-wave order populations."""
    eta = pulsed_argument(e0, wavelength, pulse_sigma, constants)
    return distribution(eta, m_cut, "pulsed")


def populated_order_count(probability, threshold: float = 1e-3, orders=None, rule: str = "envelope") -> int:
    """Number of populated diffraction orders.

    ``rule="envelope"`` returns ``2 * m_max + 1`` where ``m_max`` is the
    largest |m| with ``P_m >= threshold * max(P)``; it ignores accidental
    Bessel zeros inside the populated band. ``rule="count"`` counts the
    qualifying orders directly.
    """
    if isinstance(probability, DiffractionDistribution):
        orders = probability.orders
        probability = probability.probability
    p = np.asarray(probability, dtype=float)
    if orders is None:
        half = (p.size - 1) // 2
        orders = np.arange(-half, half + 1)
    orders = np.asarray(orders)
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    mask = p >= threshold * p.max()
    if rule == "count":
        return int(mask.sum())
    if rule != "envelope":
        raise ValueError(f"unknown rule {rule!r}")
    return 2 * int(np.abs(orders[mask]).max()) + 1
