import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.hermite import hermval
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from kdlight import beams as bm
from kdlight.model import BeamSpec

from oracles import V_1KEV, hg_profile, relative_linf, trapezoid_fourier

waists = st.floats(min_value=150.0, max_value=2400.0)


def beam(n=0, w=600.0, lam=300.0, **kw):
    return BeamSpec(mode_n=n, wavelength=lam, waist=w, pulse_sigma=kw.pop("pulse_sigma", math.inf), peak_field=5.0, **kw)


def test_hermite_matches_numpy():
    u = np.linspace(-3, 3, 41)
    for n in range(6):
        coef = np.zeros(n + 1)
        coef[n] = 1.0
        assert np.allclose(bm.hermite(n, u), hermval(u, coef), rtol=1e-13, atol=1e-10)


def test_gouy_conventions():
    assert bm.gouy_factor(0) == 1.0 and bm.gouy_factor(1) == 2.0
    assert bm.gouy_factor(0, "2d") == 0.5 and bm.gouy_factor(1, "2d") == 1.5
    with pytest.raises(ValueError):
        bm.gouy_factor(0, "4d")


def test_unsupported_order():
    with pytest.raises(bm.UnsupportedOrderError):
        bm.hg_envelope(beam(n=bm.MAX_ORDER + 1), 0.0, 0.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=1), waists, st.floats(min_value=-3e4, max_value=3e4))
def test_power_normalization_any_plane(n, w, y):
    b = beam(n=n, w=w)
    wy = w * math.sqrt(1 + (y / b.rayleigh_range) ** 2)
    val, _ = quad(lambda x: abs(complex(bm.hg_envelope(b, x, y))) ** 2, -12 * wy, 12 * wy, limit=400, points=[0.0])
    assert val == pytest.approx(b.power_amplitude**2, rel=1e-8)


def test_equal_power_peak_ratio():
    b0, b1 = beam(0), beam(1)
    x = np.linspace(-2000, 2000, 40001)
    p0 = np.abs(bm.hg_envelope(b0, x, 0.0)).max()
    p1 = np.abs(bm.hg_envelope(b1, x, 0.0)).max()
    assert p1 / p0 == pytest.approx(math.sqrt(2.0 / math.e), rel=1e-6)
    assert b1.mode_peak_field == pytest.approx(5.0 * math.sqrt(2.0 / math.e), rel=1e-12)


@pytest.mark.parametrize("n", [0, 1])
@pytest.mark.parametrize("w", [450.0, 600.0, 1200.0])
def test_transverse_spectrum_vs_trapezoid_fourier(n, w):
    b = beam(n=n, w=w)
    x = np.linspace(-12 * w, 12 * w, 6001)
    k = np.linspace(-8 / w, 8 / w, 401)
    ref = trapezoid_fourier(hg_profile(n, x, w, b.power_amplitude), x, k)
    ours = bm.transverse_spectrum(b, k).amplitude
    assert relative_linf(ours, ref) < 1e-6
    # absolute scale agrees as well
    assert np.max(np.abs(ours - ref)) / np.max(np.abs(ref)) < 1e-6


def _discrete_convolution(a: BeamSpec, b: BeamSpec):
    """Brute force: trapezoid Fourier of both profiles, then a Riemann sum convolution."""
    w = min(a.waist, b.waist)
    x = np.linspace(-14 * max(a.waist, b.waist), 14 * max(a.waist, b.waist), 4001)
    q = np.linspace(-10 / w, 10 / w, 1201)
    fa = trapezoid_fourier(hg_profile(a.mode_n, x, a.waist, a.power_amplitude), x, q) * (1j**a.mode_n)
    fb = trapezoid_fourier(hg_profile(b.mode_n, x, b.waist, b.power_amplitude), x, q) * (1j**b.mode_n)
    conv = np.convolve(fa.real, fb.real) * (q[1] - q[0])
    k = np.linspace(2 * q[0], 2 * q[-1], conv.size)
    return k, conv


@pytest.mark.parametrize("pair", [(0, 0), (1, 0), (0, 1), (1, 1)])
@pytest.mark.parametrize("ws", [(600.0, 600.0), (450.0, 1200.0)])
def test_convolution_vs_brute_force(pair, ws):
    a, b = beam(pair[0], ws[0]), beam(pair[1], ws[1])
    k, ref = _discrete_convolution(a, b)
    sel = np.abs(k) < 8 / min(ws)
    ours = bm.convolve_spectra(a, b, k[sel]).amplitude.real
    assert relative_linf(ours, ref[sel]) < 1e-6


def test_hg10_pair_convolution_shape():
    b = beam(1)
    k = np.linspace(-0.02, 0.02, 2001)
    amp = bm.convolve_spectra(b, b, k).amplitude.real
    assert amp[1000] < 0
    assert np.allclose(amp, amp[::-1], rtol=0, atol=1e-14 * np.abs(amp).max())


@settings(max_examples=50, deadline=None)
@given(waists, waists)
def test_convolution_peak_formula(w1, w2):
    ref = math.sqrt(2 * (w1**2 + w2**2)) / (w1 * w2)
    assert abs(bm.convolution_peak(w1, w2) - ref) <= 1e-10 * ref
    # it is the maximum of the odd x even convolution
    a, b = beam(1, w1), beam(0, w2)
    f = lambda kk: -float(bm.convolve_spectra(a, b, [kk]).amplitude.real[0])  # noqa: E731
    res = minimize_scalar(f, bounds=(0.1 * ref, 3 * ref), method="bounded", options={"xatol": 1e-12 * ref})
    assert res.x == pytest.approx(ref, rel=1e-5)


def test_characteristic_kperp_cases():
    assert bm.characteristic_kperp(beam(0)) == 0.0
    assert bm.characteristic_kperp(beam(1)) == pytest.approx(math.sqrt(2) / 600.0)
    assert bm.characteristic_kperp(beam(1), beam(0)) == pytest.approx(bm.convolution_peak(600.0, 600.0))
    # two-colour HG10 pair: the short-wavelength partner counts as HG00
    two = bm.characteristic_kperp(beam(1, lam=300.0), beam(1, lam=150.0))
    assert two == pytest.approx(bm.convolution_peak(600.0, 600.0))
    # HG10 x HG10: half width of the central lobe of |convolution|
    b = beam(1)
    kp = bm.characteristic_kperp(b, b)
    c0 = abs(bm.convolve_spectra(b, b, [0.0]).amplitude[0])
    ck = abs(bm.convolve_spectra(b, b, [kp]).amplitude[0])
    assert ck / c0 == pytest.approx(0.5, rel=1e-9)


def test_predicted_sideband_spacing():
    s = bm.predicted_sideband_spacing(V_1KEV, bm.convolution_peak(600.0, 600.0))
    assert s == pytest.approx(0.0823, abs=2e-4)
    with pytest.raises(ValueError):
        bm.predicted_sideband_spacing(V_1KEV, -1.0)


def test_compton_map_monotone_in_pulse_duration():
    b = beam(1, pulse_sigma=10.0)
    v = np.linspace(0.5, 60, 50)
    taus = np.linspace(1, 50, 30)
    m = bm.compton_map(b, v, pulse_sigmas=taus)
    assert m.shape == (30, 50) and m.dtype == bool
    # satisfied cells shrink as the bandwidth narrows, and slower electrons qualify first
    assert np.all(np.diff(m.sum(axis=1)) <= 0)
    assert np.all(np.diff(m.astype(int), axis=1) <= 0)
    with pytest.raises(ValueError):
        bm.compton_map(b, v)
    lam = bm.compton_map(b, v, wavelengths=[300.0, 600.0, 900.0])
    assert lam.shape == (3, 50)


def test_regime_diffraction_at_1kev():
    v = V_1KEV
    for w in np.linspace(450, 1200, 11):
        r = bm.regime_rho(w, v, 300.0)
        assert r.rho < 0.1 and r.classification == "diffraction"
    with pytest.raises(ValueError):
        bm.regime_rho(-1.0, v, 300.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=300.0, max_value=1500.0))
def test_rho_unity_locus_is_unity(w):
    e = float(bm.rho_unity_locus([w], 300.0)[0])
    v = math.sqrt(2 * e / 5.685630103565723)
    assert bm.regime_rho(w, v, 300.0).rho == pytest.approx(1.0, rel=1e-10)
    assert float(bm.regime_map([w], [e], 300.0)[0, 0]) == pytest.approx(1.0, rel=1e-10)


def test_electric_field_is_minus_time_derivative():
    b = beam(1, pulse_sigma=5.0)
    x, y = 300.0, 40.0
    t = np.linspace(-6, 6, 13)
    h = 1e-4
    num = -(bm.vector_potential_analytic([b], x, y, t + h) - bm.vector_potential_analytic([b], x, y, t - h)) / (2 * h)
    ana = bm.electric_field_analytic([b], x, y, t)
    assert np.max(np.abs(num - ana)) < 1e-6 * np.max(np.abs(ana))


def test_standing_wave_pair_has_nodes():
    b = beam(0)
    pair = bm.standing_wave_pair(b)
    assert pair[1].direction == -1
    y = np.linspace(-150, 150, 3001)
    # time-averaged |A|^2 vanishes at the nodes of cos(k y) at the focus
    ts = np.linspace(0, 2 * math.pi / b.omega, 64, endpoint=False)
    a2 = np.mean([bm.vector_potential_analytic(pair, 0.0, y, t, gouy="2d") ** 2 for t in ts], axis=0)
    assert a2.min() < 1e-6 * a2.max()
