import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdlight.model import CODATA2018, BeamSpec, ElectronSpec, GridSpec, SimulationConfig
from kdlight.tdse import (
    AtTimes,
    Every,
    NumericalInstabilityError,
    SpectralOperators,
    absorbing_mask,
    apply_hamiltonian,
    init_wavepacket,
    load_checkpoint,
    norm_of,
    propagate,
    run_interaction,
    save_checkpoint,
    time_reversed,
)

from oracles import free_gaussian_sigma

GRID = GridSpec.centered(64, 64, 2.0)


def _k_el(e: ElectronSpec) -> float:
    return CODATA2018.m0_ev * e.velocity / CODATA2018.hbar_evfs


def _sigma(psi, grid, axis):
    d = np.abs(psi) ** 2
    coord = grid.y if axis == 1 else grid.x
    marg = d.sum(axis=1 - axis)
    marg = marg / marg.sum()
    mu = (coord * marg).sum()
    return math.sqrt(((coord - mu) ** 2 * marg).sum())


def _packet(grid=GRID, wl=10.0, wt=9.0, kinetic=1000.0):
    e = ElectronSpec(kinetic, wl, wt)
    return e, init_wavepacket(e, grid, carrier_k=_k_el(e))


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1), st.booleans())
def test_hamiltonian_is_hermitian(seed, moving):
    rng = np.random.default_rng(seed)
    ops = SpectralOperators(GRID)
    shape = (GRID.nx, GRID.ny)
    psi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    phi = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    ax, ay = rng.normal(size=shape), rng.normal(size=shape)
    v = 18.7 if moving else 0.0
    lhs = np.vdot(phi, apply_hamiltonian(psi, ax, ay, ops, v))
    rhs = np.vdot(apply_hamiltonian(phi, ax, ay, ops, v), psi)
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_free_hamiltonian_is_kinetic_energy():
    ops = SpectralOperators(GRID)
    k = 2 * math.pi * 3 / (GRID.nx * GRID.dx)
    psi = np.exp(1j * k * GRID.x)[:, None] * np.ones(GRID.ny)[None, :]
    h = apply_hamiltonian(psi, None, None, ops)
    assert np.allclose(h, CODATA2018.hbar2_2m * k**2 * psi, atol=1e-12)


def test_uniform_potential_adds_ponderomotive_shift():
    ops = SpectralOperators(GRID)
    psi = np.ones((GRID.nx, GRID.ny), complex)
    a = np.full(psi.shape, 0.3)
    h = apply_hamiltonian(psi, None, a, ops)
    assert np.allclose(h, 0.09 / (2 * CODATA2018.m0_ev) * psi, atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=6.0, max_value=11.0), st.floats(min_value=6.0, max_value=11.0))
def test_initial_packet_is_normalized_with_requested_widths(wl, wt):
    e = ElectronSpec(1000.0, wl, wt)
    grid = GridSpec.centered(128, 128, 1.0)
    s = init_wavepacket(e, grid, carrier_k=_k_el(e))
    assert s.norm == pytest.approx(1.0, abs=1e-12)
    assert _sigma(s.psi, grid, 0) == pytest.approx(wl, rel=1e-5)
    assert _sigma(s.psi, grid, 1) == pytest.approx(wt, rel=1e-5)


def test_clipped_or_unresolved_packets_are_rejected():
    with pytest.raises(ValueError, match="clipped"):
        e = ElectronSpec(1000.0, 14.0, 9.0)
        init_wavepacket(e, GRID, carrier_k=_k_el(e))
    with pytest.raises(ValueError, match="resolve"):
        init_wavepacket(ElectronSpec(1000.0, 12.0, 10.0), GRID, carrier_k=0.0)


def test_free_spreading_and_norm():
    grid = GridSpec.centered(96, 256, 1.0)
    e, s = _packet(grid, wl=8.0, wt=5.0)
    dt, n = 0.25, 2400
    propagate(s, n, dt)
    expect = free_gaussian_sigma(5.0, n * dt)
    assert _sigma(s.psi, grid, 1) == pytest.approx(expect, rel=5e-3)
    assert abs(s.norm - 1.0) < 1e-6


def test_second_order_convergence_against_exact_free_evolution():
    e, s0 = _packet()
    ops = SpectralOperators(GRID)
    t_end = 200.0
    phase = np.exp(-1j * ops.kinetic * t_end / CODATA2018.hbar_evfs)
    exact = ops.ifft2(phase * ops.fft2(s0.psi))
    errs = []
    for dt in (1.0, 0.5, 0.25):
        s = s0.copy()
        propagate(s, int(round(t_end / dt)), dt, ops=ops)
        errs.append(math.sqrt(norm_of(s.psi - exact, GRID)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5
    assert 3.5 <= errs[1] / errs[2] <= 4.5


def test_time_reversal_recovers_initial_state():
    e, s0 = _packet()
    s = s0.copy()
    propagate(s, 300, 0.5)
    back = time_reversed(s)
    propagate(back, 299, 0.5)
    assert np.max(np.abs(np.conj(back.psi) - s0.psi)) < 1e-8 * np.max(np.abs(s0.psi))


def test_time_reversal_needs_two_levels():
    _, s = _packet()
    with pytest.raises(ValueError):
        time_reversed(s)


def test_mask_shape_and_absorption_bookkeeping():
    m = absorbing_mask(GRID, fraction=0.1)
    assert m.shape == (GRID.nx, GRID.ny)
    assert m.max() == 1.0 and m.min() > 0.0
    assert np.all(m[GRID.nx // 2 - 5 : GRID.nx // 2 + 5, GRID.ny // 2 - 5 : GRID.ny // 2 + 5] == 1.0)
    assert np.allclose(m, m[::-1, ::-1])
    # a packet pushed into the edge loses weight that is recorded
    e = ElectronSpec(1000.0, 5.0, 5.0, center=(0.0, 0.0))
    grid = GridSpec.centered(64, 64, 1.0)
    s = init_wavepacket(e, grid, carrier_k=_k_el(e) - 1.5)
    propagate(s, 2000, 0.2, mask=absorbing_mask(grid))
    assert s.absorbed_fraction > 0.01
    assert s.norm + s.absorbed_fraction == pytest.approx(1.0, abs=5e-3)


def test_unstable_step_raises():
    _, s = _packet()
    with pytest.raises(NumericalInstabilityError) as exc:
        propagate(s, 50, 20.0)
    assert "dt_tdse" in str(exc.value)


def test_observers():
    _, s = _packet()
    seen, stamps = [], []
    propagate(s, 10, 0.5, observers=[Every(3, lambda st: seen.append(st.step)), AtTimes([1.0, 2.2], lambda st: stamps.append(st.t))])
    assert seen == [3, 6, 9]
    assert stamps == pytest.approx([1.0, 2.5])


def test_checkpoint_round_trip(tmp_path):
    _, s = _packet()
    propagate(s, 5, 0.5)
    path = str(tmp_path / "ck.npz")
    save_checkpoint(path, s)
    r = load_checkpoint(path, GRID)
    assert np.array_equal(r.psi, s.psi) and np.array_equal(r.psi_prev, s.psi_prev)
    assert (r.t, r.step, r.carrier_k) == (s.t, s.step, s.carrier_k)
    a, b = s.copy(), r
    propagate(a, 5, 0.5)
    propagate(b, 5, 0.5)
    assert np.array_equal(a.psi, b.psi)


def _cfg(**kw):
    base = dict(
        beams=(BeamSpec(wavelength=300.0, waist=600.0, pulse_sigma=4.0, peak_field=2.0),),
        electron=ElectronSpec(1000.0, 40.0, 25.0, center=(-150.0, 0.0)),
        grid_schrodinger=GridSpec.centered(96, 64, 5.0, center=(-150.0, 0.0)),
        start_time=-8.0,
        total_time=16.0,
        polarization="y",
    )
    base.update(kw)
    return SimulationConfig(**base)


def test_run_interaction_is_deterministic():
    a = run_interaction(_cfg())
    b = run_interaction(_cfg())
    assert a.status == "completed" and a.steps == _cfg().n_steps
    assert np.array_equal(a.state.psi, b.state.psi)
    assert abs(a.state.norm - 1.0) < 1e-6


def test_field_free_run_preserves_norm():
    r = run_interaction(_cfg(beams=()))
    assert abs(r.state.norm + r.state.absorbed_fraction - 1.0) < 1e-10
