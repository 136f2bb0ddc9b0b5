import math
import struct
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kvnlab import kvn_propagator as kvn
from kvnlab.polynomial import Poly, p, q

from oracles import gaussian_density_closed_form, hamilton_dop853, harmonic_rotation

Sep = kvn.SeparableClassicalHamiltonian
HARMONIC = Sep.harmonic(1.0, 1.0)
FREE = Sep(p**2 / 2, Poly())


def peak(psi):
    i, j = np.unravel_index(np.argmax(psi.density), psi.grid.shape)
    return psi.grid.q[i], psi.grid.p[j]


# --- grid and wavefunction types ----------------------------------------------------

def test_grid_defaults_and_spacing():
    g = kvn.PhaseSpaceGrid()
    assert g.shape == (256, 256)
    assert g.dq == pytest.approx(16 / 256)
    assert g.q[0] == -8 and g.q[-1] == pytest.approx(8 - g.dq)


@pytest.mark.parametrize("kw", [dict(nq=100), dict(np_=4), dict(q_min=1, q_max=1),
                                dict(p_min=2, p_max=-2)])
def test_grid_invariants(kw):
    with pytest.raises(ValueError):
        kvn.PhaseSpaceGrid(**kw)


def test_gaussian_wavefunction_normalized(grid256):
    psi = kvn.gaussian_wavefunction(grid256, 2.0, -1.0, 0.5, 0.6)
    assert psi.norm == pytest.approx(1.0, abs=1e-10)
    assert psi.boundary_max() < 1e-12
    Qg, Pg = grid256.mesh()
    np.testing.assert_allclose(psi.density,
                               gaussian_density_closed_form(Qg, Pg, 2, -1, 0.5, 0.6),
                               atol=1e-12)


def test_tail_warning(grid64):
    with pytest.warns(kvn.BoundaryTailWarning):
        psi = kvn.gaussian_wavefunction(grid64, 6.5, 0.0, 1.0, 1.0)
        assert not psi.check_tails()


# --- Liouvillian --------------------------------------------------------------------

def test_liouville_free_particle(grid256):
    psi = kvn.gaussian_wavefunction(grid256, 0.0, 0.0, 0.7, 0.7)
    Qg, Pg = grid256.mesh()
    # analytic d/dq of the Gaussian amplitude
    dpsi_dq = -(Qg / (2 * 0.7**2)) * psi.values
    np.testing.assert_allclose(kvn.liouville_apply(FREE, psi), -1j * Pg * dpsi_dq, atol=1e-12)


def test_liouville_zero(grid64):
    psi = kvn.gaussian_wavefunction(grid64, sigma_q=0.5, sigma_p=0.5)
    assert np.all(kvn.liouville_apply(Sep(Poly(), Poly()), psi) == 0)


def test_liouville_plane_wave(grid256):
    L = 16.0
    kq, kp = 2 * math.pi * 3 / L, -2 * math.pi * 2 / L
    Qg, Pg = grid256.mesh()
    vals = np.exp(1j * (kq * Qg + kp * Pg))
    psi = kvn.ClassicalWavefunction(grid256, vals)
    got = kvn.liouville_apply(HARMONIC, psi)
    want = 1j * (Qg * 1j * kp - Pg * 1j * kq) * vals
    rng = np.random.default_rng(3)
    idx = rng.integers(0, 256, size=(16, 2))
    for i, j in idx:
        assert abs(got[i, j] - want[i, j]) < 1e-10


# --- stepping -----------------------------------------------------------------------

def test_step_rejects_bad_dt(grid64):
    psi = kvn.gaussian_wavefunction(grid64, sigma_q=0.5, sigma_p=0.5)
    for dt in (0.0, -0.1):
        with pytest.raises(ValueError):
            kvn.kvn_step(HARMONIC, psi, dt)


def test_free_particle_exact_shear(grid256):
    psi0 = kvn.gaussian_wavefunction(grid256, -1.0, 0.0, 0.5, 0.25)
    t = 1.5
    out = kvn.kvn_evolve(FREE, psi0, t, 0.05)
    Qg, Pg = grid256.mesh()
    want = gaussian_density_closed_form(Qg - Pg * t, Pg, -1.0, 0.0, 0.5, 0.25)
    # spectral shear is exact up to aliasing at the sub-1e-12 level
    np.testing.assert_allclose(out.density, want, atol=1e-10)
    # one big step equals many small ones
    once = kvn.kvn_evolve(FREE, psi0, t, t)
    np.testing.assert_allclose(once.values, out.values, atol=1e-11)


def test_linear_potential_step_exact(grid256):
    H = Sep(p**2 / 2, 3 * q / 10)
    psi0 = kvn.gaussian_wavefunction(grid256, 0.0, 0.2, 0.5, 0.3)
    coarse = kvn.kvn_evolve(H, psi0, 1.0, 0.25)
    fine = kvn.kvn_evolve(H, psi0, 1.0, 0.01)
    np.testing.assert_allclose(coarse.values, fine.values, atol=1e-10)
    # uniform force -0.3: q(t) = q0 + p0 t - 0.15 t^2, p(t) = p0 - 0.3 t
    qt, pt = 0.2 - 0.15, 0.2 - 0.3
    m = kvn.moments(coarse)
    assert m["q_mean"] == pytest.approx(qt, abs=1e-9)
    assert m["p_mean"] == pytest.approx(pt, abs=1e-9)


def test_harmonic_quarter_and_half_period(grid256):
    psi0 = kvn.gaussian_wavefunction(grid256, 2.0, 0.0, 0.5, 0.5)
    dt = math.pi / 2000
    quarter = kvn.kvn_evolve(HARMONIC, psi0, 1000 * dt, dt)
    qp = peak(quarter)
    assert abs(qp[0] - 0.0) <= grid256.dq and abs(qp[1] + 2.0) <= grid256.dp
    half = kvn.kvn_evolve(HARMONIC, quarter, 1000 * dt, dt)
    hp = peak(half)
    assert abs(hp[0] + 2.0) <= grid256.dq and abs(hp[1]) <= grid256.dp


def test_norm_drift(grid256):
    psi = kvn.gaussian_wavefunction(grid256, 0.5, 0.0, 0.7, 0.7)
    out = kvn.kvn_evolve(HARMONIC, psi, 1000 * 2 * math.pi / 2000, 2 * math.pi / 2000)
    assert abs(out.norm - 1.0) < 1e-10


def test_trajectory_stride(grid64):
    psi = kvn.gaussian_wavefunction(grid64, 0.5, 0.0, 0.5, 0.5)
    frames = list(kvn.kvn_trajectory(HARMONIC, psi, 1.0, 0.01, stride=25))
    times = [f.time for f in frames]
    np.testing.assert_allclose(times, [0, 0.25, 0.5, 0.75, 1.0], atol=1e-12)
    final = kvn.kvn_evolve(HARMONIC, psi, 1.0, 0.01)
    np.testing.assert_allclose(frames[-1].values, final.values, atol=1e-13)


def test_step_count_must_be_integral(grid64):
    psi = kvn.gaussian_wavefunction(grid64, sigma_q=0.5, sigma_p=0.5)
    with pytest.raises(ValueError):
        kvn.kvn_evolve(HARMONIC, psi, 1.0, 0.3)


# --- oracles ----------------------------------------------------------------------------

def test_characteristics_examples():
    qt, pt = kvn.characteristics_flow(HARMONIC, (1.0, 0.0), math.pi / 2)
    assert qt == pytest.approx(0.0, abs=1e-9) and pt == pytest.approx(-1.0, abs=1e-9)
    assert kvn.characteristics_flow(HARMONIC, (0.3, 0.2), 0.0) == (0.3, 0.2)
    qt, pt = kvn.characteristics_flow(FREE, (0.0, 1.0), 3.0)
    assert qt == pytest.approx(3.0, abs=1e-12) and pt == pytest.approx(1.0, abs=1e-12)


def test_characteristics_vs_dop853():
    H = Sep(p**4 / 40 + p**2 / 2, q**2 / 2 - q**3 / 30)
    got = kvn.characteristics_flow(H, (0.7, -0.2), 4.0, max_step=1e-3)
    want = hamilton_dop853(H.dH_dq.compile(), H.dH_dp.compile(), 0.7, -0.2, 4.0)
    np.testing.assert_allclose(got, want, atol=1e-10)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-6, 6))
def test_characteristics_harmonic_rotation(q0, p0, t):
    got = kvn.characteristics_flow(HARMONIC, (q0, p0), t)
    np.testing.assert_allclose(got, harmonic_rotation(q0, p0, t), atol=1e-9)


def test_oracle_identity_and_rotation(grid256):
    rho0 = kvn.gaussian_density(2.0, 0.0, 0.5, 0.5)
    Qg, Pg = grid256.mesh()
    np.testing.assert_allclose(kvn.transport_density_oracle(HARMONIC, rho0, 0.0, grid256),
                               rho0(Qg, Pg), atol=0)
    rot = kvn.transport_density_oracle(HARMONIC, rho0, math.pi, grid256)
    np.testing.assert_allclose(rot, gaussian_density_closed_form(Qg, Pg, -2, 0, 0.5, 0.5),
                               atol=1e-9)


def test_oracle_free_shear(grid64):
    rho0 = kvn.gaussian_density(0.3, -0.5, 0.8, 0.6)
    Qg, Pg = grid64.mesh()
    got = kvn.transport_density_oracle(FREE, rho0, 1.7, grid64)
    np.testing.assert_allclose(got, rho0(Qg - Pg * 1.7, Pg), atol=1e-12)


def test_oracle_equivalence_and_order(grid256):
    T = 2 * math.pi
    psi0 = kvn.gaussian_wavefunction(grid256, 0.5, 0.0, 0.7, 0.7)
    oracle = kvn.transport_density_oracle(HARMONIC, kvn.gaussian_density(0.5, 0, 0.7, 0.7),
                                          T, grid256)
    e1 = kvn.l2_distance(kvn.kvn_evolve(HARMONIC, psi0, T, T / 2000).density, oracle, grid256)
    e2 = kvn.l2_distance(kvn.kvn_evolve(HARMONIC, psi0, T, T / 4000).density, oracle, grid256)
    assert e1 < 1e-6
    assert 3.0 <= e1 / e2 <= 5.0


def test_liouville_stationarity():
    # exp(-H) is wide, so widen the box to keep the tails below 1e-12
    grid = kvn.PhaseSpaceGrid(256, 256, -12, 12, -12, 12)
    psi0 = kvn.wavefunction_from_density(
        grid, lambda a, b: np.exp(-(a**2 + b**2) / 2) / (2 * math.pi))
    T = 2 * math.pi
    out = kvn.kvn_evolve(HARMONIC, psi0, T, T / 2000)
    assert kvn.l2_distance(out.density, psi0.density, grid) < 1e-8


def test_expectation_consistency(grid256):
    T = 2 * math.pi
    psi0 = kvn.gaussian_wavefunction(grid256, 0.5, 0.3, 0.7, 0.7)
    for frame in kvn.kvn_trajectory(HARMONIC, psi0, T, T / 4000, stride=500):
        m = kvn.moments(frame)
        qt, pt = harmonic_rotation(0.5, 0.3, frame.time)
        assert abs(m["q_mean"] - qt) < 1e-6
        assert abs(m["p_mean"] - pt) < 1e-6


# --- observables --------------------------------------------------------------------

def test_density_and_expectation_examples(grid256):
    psi = kvn.gaussian_wavefunction(grid256, 2.0, -1.0, 0.5, 0.5)
    rho, one = kvn.density_and_expectation(psi, Poly.const(1))
    assert one == pytest.approx(1.0, abs=1e-10)
    assert np.all(rho >= 0)
    assert kvn.density_and_expectation(psi, q)[1] == pytest.approx(2.0, abs=1e-8)
    assert kvn.density_and_expectation(psi, p)[1] == pytest.approx(-1.0, abs=1e-8)
    std = kvn.gaussian_wavefunction(grid256, 0.0, 0.0, math.sqrt(0.5), 0.5)
    assert kvn.density_and_expectation(std, q**2)[1] == pytest.approx(0.5, abs=1e-8)


def test_density_and_expectation_rejects_hidden(grid64):
    from kvnlab.polynomial import Q
    with pytest.raises(ValueError):
        kvn.density_and_expectation(kvn.gaussian_wavefunction(grid64, sigma_q=0.5, sigma_p=0.5), Q)


def test_phase_decoupling(grid256):
    psi0 = kvn.gaussian_wavefunction(grid256, 0.5, 0.0, 0.7, 0.7)
    T = 2 * math.pi
    assert kvn.phase_decoupling_error(HARMONIC, psi0, lambda a, b: 0 * a, T, T / 2000) == 0.0
    const = kvn.phase_decoupling_error(HARMONIC, psi0, lambda a, b: 1.3 + 0 * a, T, T / 2000)
    assert const < 1e-14
    assert kvn.phase_decoupling_error(HARMONIC, psi0, lambda a, b: 0.3 * a * b, T,
                                      T / 2000) <= 1e-8


# --- snapshots ----------------------------------------------------------------------

def test_snapshot_roundtrip_and_layout(tmp_path, grid64):
    psi = kvn.gaussian_wavefunction(grid64, 0.4, 0.1, 0.5, 0.5, phase=lambda a, b: 0.2 * a)
    path = tmp_path / "s.bin"
    kvn.write_snapshot(path, psi, hbar=0.5)
    raw = path.read_bytes()
    nq, np_, q0, q1, p0, p1, t, hbar = struct.unpack_from("<qq6d", raw)
    assert (nq, np_, q0, q1, p0, p1, t, hbar) == (64, 64, -8, 8, -8, 8, 0.0, 0.5)
    body = np.frombuffer(raw[struct.calcsize("<qq6d"):], dtype="<f8")
    np.testing.assert_array_equal(body[0::2].reshape(64, 64), psi.values.real)
    np.testing.assert_array_equal(body[1::2].reshape(64, 64), psi.values.imag)
    back, hb = kvn.read_snapshot(path)
    assert hb == 0.5
    np.testing.assert_array_equal(back.values, psi.values)
    assert back.grid == psi.grid


def test_snapshot_truncated(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x00" * 10)
    with pytest.raises(ValueError):
        kvn.read_snapshot(path)
