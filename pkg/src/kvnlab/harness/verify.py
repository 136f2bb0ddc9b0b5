"""Single-command verification of every acceptance criterion.

Each criterion becomes one or more checks named ``C<n>.<label>`` in the
report. Randomized inputs draw from ``numpy.random.default_rng(seed)`` in a
fixed order, so two runs with the same config produce identical reports apart
from runtime fields.
"""
from __future__ import annotations

import math
import time
import warnings
from typing import Callable, List

import numpy as np

from .. import gaussian_dynamics as gd
from .. import kvn_propagator as kvn
from .. import perturbation_lab as lab
from .. import sudarshan_doubling as sd
from ..polynomial import Poly
from .config import ExperimentConfig
from .experiments import (Artifacts, grid_of, harmonic_of, initial_density,
                          initial_wavefunction)
from .report import RunReport

RUNTIME_BUDGET = 300.0


def random_wavepackets(grid: kvn.PhaseSpaceGrid, rng: np.random.Generator,
                       count: int) -> List[kvn.ClassicalWavefunction]:
    """Sums of three localized Gaussian packets with random phase gradients."""
    out = []
    Qg, Pg = grid.mesh()
    for _ in range(count):
        vals = np.zeros(grid.shape, dtype=complex)
        for _ in range(3):
            cq, cp = rng.uniform(-1.5, 1.5, size=2)
            wq, wp = rng.uniform(0.4, 0.6, size=2)
            kq, kp = rng.uniform(-2.0, 2.0, size=2)
            amp = rng.normal() + 1j * rng.normal()
            vals += amp * np.exp(-(Qg - cq) ** 2 / (4 * wq**2) - (Pg - cp) ** 2 / (4 * wp**2)
                                 + 1j * (kq * Qg + kp * Pg))
        out.append(kvn.ClassicalWavefunction(grid, vals).normalized())
    return out


def hamiltonian_test_set(m: float, omega: float) -> List[kvn.SeparableClassicalHamiltonian]:
    q, p, _, _ = Poly.symbols()
    S = kvn.SeparableClassicalHamiltonian
    return [
        S.harmonic(m, omega),
        S(p**2 / 2, Poly()),
        S(p**2 / 2, 3 * q / 10),
        S(p**2 / 2, q**2 / 2 + q**4 / 20),
        S(p**4 / 40 + p**2 / 2, q**2 / 2 - q**3 / 30),
    ]


def _criterion_1(cfg, report):
    ph = cfg.physics
    T = gd.qmfs_transform(ph.hbar)
    res = gd.symplectic_residual(T)
    H = gd.qmfs_hamiltonian(ph.m, ph.omega, ph.hbar)
    self_coupling = float(np.max(np.abs(np.diag(H.M))))
    report.metrics["C1.symplectic_residual"] = res
    report.metrics["C1.self_coupling_max"] = self_coupling
    report.check("C1.symplectic", "QMFS transform is canonical", res, res < 1e-12, "< 1e-12")
    report.check("C1.cross_form", "transformed pair Hamiltonian has no self-couplings",
                 self_coupling, self_coupling == 0.0, "== 0 exactly")


def _criterion_2(cfg, report):
    ph = cfg.physics
    H = gd.qmfs_hamiltonian(ph.m, ph.omega, ph.hbar)
    lay = H.layout
    q, p, _, _ = Poly.symbols()
    closes, H_cl = gd.check_qmfs_integrability(
        gd.GeneratorTriple(p / ph.m, ph.m * ph.omega**2 * q))
    sep = kvn.SeparableClassicalHamiltonian.from_poly(H_cl)
    mean = np.zeros(4)
    mean[lay.index("q")], mean[lay.index("p")] = 1.0, 0.5
    mean[lay.index("Q")], mean[lay.index("P")] = -0.3, 0.7
    s0 = gd.GaussianState(mean, gd.qmfs_transform(ph.hbar).apply_state(
        gd.vacuum_state(gd.bare_layout(ph.hbar))).cov, lay)
    T = ph.period
    times = np.linspace(0.0, 10 * T, 81)
    y = (1.0, 0.5)
    err = 0.0
    for t0, t1 in zip(times[:-1], times[1:]):
        y = kvn.characteristics_flow(sep, y, t1 - t0, max_step=T / 4000)
        st = gd.evolve_gaussian(H, s0, t1)
        err = max(err, abs(st.expectation("q") - y[0]), abs(st.expectation("p") - y[1]))
    report.metrics["C2.classical_flow_error"] = err
    report.check("C2.classicality", "<q>, <p> follow H_cl over 10 periods", err,
                 closes and err < 1e-10, "< 1e-10")


def _criterion_3(cfg, report):
    ph = cfg.physics
    H = gd.qmfs_hamiltonian(ph.m, ph.omega, ph.hbar)
    s0 = gd.qmfs_transform(ph.hbar).apply_state(gd.vacuum_state(gd.bare_layout(ph.hbar)))
    bare_H = gd.oscillator_pair_hamiltonian(ph.m, ph.omega, ph.hbar)
    bare0 = gd.vacuum_state(bare_H.layout)
    t = ph.period / 3
    qp, ctrl = [], []
    for sigma in cfg.measurement.sigma_list:
        qp.append(gd.back_action_deviation(H, s0, "q", "p", t, sigma, t))
        got = gd.back_action_deviation(bare_H, bare0, "q1", "p1", t, sigma, t)
        ctrl.append(abs(got - ph.hbar**2 / (4 * sigma**2)))
    report.metrics["C3.back_action_qp"] = qp
    report.metrics["C3.control_error"] = ctrl
    report.check("C3.evasion", "q readout leaves Var(p) unchanged", max(qp), max(qp) < 1e-12,
                 "< 1e-12")
    report.check("C3.control", "q1 readout adds hbar^2/(4 sigma^2) to Var(p1)", max(ctrl),
                 max(ctrl) < 1e-12, "|diff| < 1e-12")


def _criterion_4(cfg, report):
    grid = grid_of(cfg)
    H = harmonic_of(cfg)
    psi0 = initial_wavefunction(cfg, grid)
    T = cfg.physics.period
    dt = cfg.resolved_dt()
    oracle = kvn.transport_density_oracle(H, initial_density(cfg), T, grid)
    errs = []
    for step in (dt, dt / 2):
        final = kvn.kvn_evolve(H, psi0, T, step)
        errs.append(kvn.l2_distance(final.density, oracle, grid))
    ratio = errs[0] / errs[1] if errs[1] > 0 else math.inf
    report.metrics["C4.oracle_l2_error"] = errs[0]
    report.metrics["C4.oracle_l2_error_half_dt"] = errs[1]
    report.metrics["C4.convergence_ratio"] = ratio
    report.check("C4.oracle", "KvN density vs characteristics after one period", errs[0],
                 errs[0] < 1e-6, "< 1e-6")
    report.check("C4.order", "halving dt improves error ~4x", ratio, 3.0 <= ratio <= 5.0,
                 "in [3, 5]")


def _criterion_5(cfg, report, rng):
    grid = grid_of(cfg)
    hbar = cfg.physics.hbar
    fields = random_wavepackets(grid, rng, 20)
    diff = 0.0
    for H_cl in hamiltonian_test_set(cfg.physics.m, cfg.physics.omega):
        Hd = sd.sudarshan_hamiltonian(H_cl)
        for psi in fields:
            diff = max(diff, float(np.max(np.abs(
                Hd.apply(psi, hbar) - hbar * kvn.liouville_apply(H_cl, psi)))))
    H = harmonic_of(cfg)
    psi0 = initial_wavefunction(cfg, grid)
    dt = cfg.resolved_dt()
    doubled = sd.evolve_doubled(sd.sudarshan_hamiltonian(H), psi0, 500 * dt, dt, hbar)
    stepped = psi0
    for _ in range(500):
        stepped = kvn.kvn_step(H, stepped, dt)
    evo = float(np.max(np.abs(doubled.values - stepped.values)))
    report.metrics["C5.operator_identity_max_diff"] = diff
    report.metrics["C5.evolution_max_diff"] = evo
    report.check("C5.identity", "doubled Hamiltonian equals hbar * Liouvillian", diff,
                 diff < 1e-12, "< 1e-12")
    report.check("C5.evolution", "500-step doubled evolution equals KvN stepping", evo,
                 evo < 1e-12, "< 1e-12")


def _criterion_6(cfg, report, rng):
    grid = grid_of(cfg)
    q, p, Q, P = Poly.symbols()
    fields = random_wavepackets(grid, rng, 3)
    observables = [q, p, q * p**2, q**2 + p**2, 1 + q**3]
    phases: List[Callable] = [
        lambda a, b: 0.7 * a,
        lambda a, b: np.sin(a) * np.cos(b),
        lambda a, b: 0.3 * a * b,
    ]
    res = max(sd.superselection_residual(psi, f, th)
              for psi in fields for f in observables for th in phases)
    H = harmonic_of(cfg)
    psi0 = initial_wavefunction(cfg, grid)
    dec = kvn.phase_decoupling_error(H, psi0, lambda a, b: 0.3 * a * b,
                                     cfg.physics.period, cfg.resolved_dt())
    try:
        sd.superselection_residual(psi0, Q, phases[0])
        rejected = False
    except sd.NotClassicalObservable:
        rejected = True
    report.metrics["C6.superselection_residual"] = res
    report.metrics["C6.phase_decoupling_error"] = dec
    report.check("C6.expectations", "classical expectations are phase-blind", res,
                 res < 1e-12, "< 1e-12")
    report.check("C6.decoupling", "evolved density independent of local phase", dec,
                 dec <= 1e-8, "<= 1e-8")
    report.check("C6.rejects_Q", "<Q> refused as a classical observable", rejected, rejected,
                 "raises")


def _criterion_7(cfg, report, rng):
    grid = grid_of(cfg)
    worst = {}
    for psi in random_wavepackets(grid, rng, 5):
        for k, v in sd.commutator_suite(psi, cfg.physics.hbar).items():
            worst[k] = max(worst.get(k, 0.0), v)
    report.metrics["C7.commutator_residuals"] = worst
    report.check("C7.commutators", "six canonical commutators", max(worst.values()),
                 max(worst.values()) < 1e-9, "< 1e-9")


def _criterion_8(cfg, report):
    ph = cfg.physics
    params = lab.FockParams(ph.m, ph.omega, ph.hbar)
    st = cfg.state
    t_final = 4 * math.pi / ph.omega
    lams = (5.0, 10.0, 20.0, 40.0, 80.0, math.inf)
    D = lab.stabilizer_deviation(st.alpha1, st.alpha2, lams, t_final, n_trunc=st.n_trunc,
                                 params=params)
    finite = [D[k] for k in lams[:-1]]
    monotone = all(a >= b for a, b in zip(finite, finite[1:]))
    neutral = lab.eigenstate_neutrality(st.alpha1, 1, 5.0, np.linspace(0, t_final, 101),
                                        st.n_trunc, params)
    report.metrics["C8.D"] = {("inf" if math.isinf(k) else k): v for k, v in D.items()}
    report.metrics["C8.D40_over_D80"] = D[40.0] / D[80.0]
    report.metrics["C8.neutrality"] = neutral
    report.check("C8.unperturbed", "D(Lambda = inf)", D[math.inf], D[math.inf] < 1e-10,
                 "< 1e-10")
    report.check("C8.monotone", "D non-increasing over Lambda in {5..80}", finite, monotone,
                 "non-increasing")
    report.check("C8.neutrality", "mode-2 number state makes the stabilizer a global phase",
                 neutral, neutral < 1e-12, "< 1e-12")


def _criterion_9(cfg, report):
    grid = grid_of(cfg)
    H = harmonic_of(cfg)
    psi0 = initial_wavefunction(cfg, grid)
    eps = (0.0, 0.01, 0.05, 0.1)
    values, _ = lab.deformation_scan(H, psi0, eps, cfg.physics.period, cfg.resolved_dt(),
                                     cfg.physics.hbar, initial_density(cfg))
    seq = [values[e] for e in eps]
    increasing = all(a < b for a, b in zip(seq, seq[1:]))
    report.metrics["C9.violation"] = {str(e): v for e, v in values.items()}
    report.check("C9.increasing", "violation strictly increasing in epsilon", seq, increasing,
                 "strictly increasing")
    report.check("C9.baseline", "epsilon = 0 baseline", seq[0], seq[0] < 1e-6, "< 1e-6")


def verify_suite(cfg: ExperimentConfig) -> RunReport:
    report = RunReport("verify", cfg.echo())
    out = Artifacts(cfg, "verify")
    rng = np.random.default_rng(cfg.run.seed)
    t0 = time.perf_counter()
    steps = [
        lambda: _criterion_1(cfg, report),
        lambda: _criterion_2(cfg, report),
        lambda: _criterion_3(cfg, report),
        lambda: _criterion_4(cfg, report),
        lambda: _criterion_5(cfg, report, rng),
        lambda: _criterion_6(cfg, report, rng),
        lambda: _criterion_7(cfg, report, rng),
        lambda: _criterion_8(cfg, report),
        lambda: _criterion_9(cfg, report),
    ]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", kvn.BoundaryTailWarning)
        for i, step in enumerate(steps, start=1):
            try:
                step()
            except (ValueError, ArithmeticError) as exc:
                report.errors.append(f"C{i}: {type(exc).__name__}: {exc}")
                report.check(f"C{i}.error", "criterion raised", str(exc), False, "no error")
    for w in caught:
        if issubclass(w.category, kvn.BoundaryTailWarning):
            report.warnings.append(str(w.message))
    elapsed = time.perf_counter() - t0
    report.check("C10.runtime", "full suite wall time (runtime field)", elapsed,
                 elapsed < RUNTIME_BUDGET, f"< {RUNTIME_BUDGET:g} s")
    report.runtime_seconds = elapsed
    out.report(report)
    return report
