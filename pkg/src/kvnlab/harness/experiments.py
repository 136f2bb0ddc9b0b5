"""Experiment dispatch: each experiment fills a RunReport and writes artifacts."""
from __future__ import annotations

import math
import time
import warnings
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from .. import gaussian_dynamics as gd
from .. import kvn_propagator as kvn
from .. import perturbation_lab as lab
from .. import sudarshan_doubling as sd
from ..polynomial import Poly
from .config import ExperimentConfig
from .report import (SCAN_COLUMNS, RunReport, output_root, series_columns, write_csv,
                     write_json)


class Artifacts:
    """Per-run output directory; files are only created on request."""

    def __init__(self, cfg: ExperimentConfig, name: str):
        self.dir = output_root(cfg.io.output_dir) / name
        self.formats = set(cfg.io.formats)

    def _ensure(self) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir

    def csv(self, report: RunReport, key: str, filename: str, columns, rows) -> None:
        if "csv" in self.formats:
            write_csv(self._ensure() / filename, columns, rows)
            report.series[key] = filename

    def snapshot(self, report: RunReport, key: str, filename: str, psi, hbar) -> None:
        if "binary" in self.formats:
            kvn.write_snapshot(self._ensure() / filename, psi, hbar)
            report.series[key] = filename

    def report(self, report: RunReport) -> None:
        # the run report is always written; ``formats`` only governs data files
        write_json(self._ensure() / "report.json", report.as_dict())


def grid_of(cfg: ExperimentConfig) -> kvn.PhaseSpaceGrid:
    g = cfg.grid
    return kvn.PhaseSpaceGrid(g.nq, g.np, g.q_min, g.q_max, g.p_min, g.p_max)


def harmonic_of(cfg: ExperimentConfig) -> kvn.SeparableClassicalHamiltonian:
    return kvn.SeparableClassicalHamiltonian.harmonic(cfg.physics.m, cfg.physics.omega)


def initial_wavefunction(cfg: ExperimentConfig, grid=None) -> kvn.ClassicalWavefunction:
    s = cfg.state
    k = s.phase_kp
    phase = (lambda qq, pp: k * pp) if k else None
    return kvn.gaussian_wavefunction(grid or grid_of(cfg), s.q0, s.p0, s.sigma_q, s.sigma_p,
                                     phase)


def initial_density(cfg: ExperimentConfig):
    s = cfg.state
    return kvn.gaussian_density(s.q0, s.p0, s.sigma_q, s.sigma_p)


def grid_row(psi: kvn.ClassicalWavefunction, hbar: float) -> Dict[str, float]:
    row = kvn.moments(psi)
    row["time"] = psi.time
    row["Q_mean"] = sd.hidden_expectation(psi, "Q", hbar)
    row["P_mean"] = sd.hidden_expectation(psi, "P", hbar)
    return row


# ---------------------------------------------------------------------------

def run_gaussian(cfg: ExperimentConfig, report: RunReport, out: Artifacts) -> None:
    ph = cfg.physics
    T = gd.qmfs_transform(ph.hbar)
    H = gd.qmfs_hamiltonian(ph.m, ph.omega, ph.hbar)
    lay = H.layout
    vac = T.apply_state(gd.vacuum_state(gd.bare_layout(ph.hbar)))
    mean = np.zeros(4)
    mean[lay.index("q")] = cfg.state.q0
    mean[lay.index("p")] = cfg.state.p0
    s0 = gd.GaussianState(mean, vac.cov, lay)

    dt, t_final = cfg.resolved_dt(), cfg.resolved_t_final()
    n = int(round(t_final / dt))
    stride = cfg.run.sample_stride
    times = [i * dt for i in range(0, n + 1, stride)]
    if times[-1] != n * dt:
        times.append(n * dt)
    rows = []
    for t in times:
        st = gd.evolve_gaussian(H, s0, t)
        rows.append({"time": t, "q_mean": st.expectation("q"), "p_mean": st.expectation("p"),
                     "q_var": st.variance("q"), "p_var": st.variance("p"),
                     "Q_mean": st.expectation("Q"), "P_mean": st.expectation("P"),
                     "norm": 1.0, "uncertainty_min_eig": gd.uncertainty_min_eigenvalue(st)})
    # classical reference from the reconstructed H_cl
    q_, p_, _, _ = Poly.symbols()
    closes, H_cl = gd.check_qmfs_integrability(
        gd.GeneratorTriple(p_ / ph.m, ph.m * ph.omega**2 * q_))
    sep = kvn.SeparableClassicalHamiltonian.from_poly(H_cl)
    flow_err = 0.0
    y = (cfg.state.q0, cfg.state.p0)
    prev = 0.0
    for row in rows:
        y = kvn.characteristics_flow(sep, y, row["time"] - prev,
                                     max_step=ph.period / 4000)
        prev = row["time"]
        row["q_classical"], row["p_classical"] = y
        flow_err = max(flow_err, abs(y[0] - row["q_mean"]), abs(y[1] - row["p_mean"]))
    out.csv(report, "series", "series.csv",
            series_columns(["q_classical", "p_classical", "uncertainty_min_eig"]), rows)

    blocks = gd.sector_blocks(H)
    ba_qp = max(gd.back_action_deviation(H, s0, "q", "p", t_final, s, t_final)
                for s in cfg.measurement.sigma_list)
    ba_qp_free = max(gd.back_action_deviation(H, s0, "q", "p", 0.0, s, t_final,
                                              selective=False)
                     for s in cfg.measurement.sigma_list)
    bare_H = gd.oscillator_pair_hamiltonian(ph.m, ph.omega, ph.hbar)
    bare0 = gd.vacuum_state(bare_H.layout)
    sm = cfg.measurement.sigma_m
    ba_bare = gd.back_action_deviation(bare_H, bare0, "q1", "p1", t_final, sm, t_final)
    expected_bare = ph.hbar**2 / (4 * sm**2)
    report.metrics.update({
        "integrability_closes": closes,
        "H_cl": repr(H_cl),
        "symplectic_residual": gd.symplectic_residual(T),
        "sector_self_coupling_max": float(np.max(np.abs(np.diag(H.M)))),
        "classical_from_hidden_max": float(np.max(np.abs(blocks["classical_from_hidden"]))),
        "classical_flow_error": flow_err,
        "back_action_qp": ba_qp,
        "back_action_qp_nonselective": ba_qp_free,
        "back_action_q1p1": ba_bare,
        "back_action_q1p1_expected": expected_bare,
        "min_uncertainty_eigenvalue": min(r["uncertainty_min_eig"] for r in rows),
    })
    report.check("symplectic", "S Omega S^T = Omega", gd.symplectic_residual(T),
                 gd.symplectic_residual(T) < 1e-12, "< 1e-12")
    report.check("closure", "classical block has no hidden coupling",
                 report.metrics["classical_from_hidden_max"],
                 report.metrics["classical_from_hidden_max"] == 0.0, "== 0")
    report.check("classical_flow", "QMFS means follow H_cl flow", flow_err,
                 flow_err < 1e-10, "< 1e-10")
    report.check("back_action_qp", "q readout leaves Var(p) unchanged", ba_qp,
                 ba_qp < 1e-12, "< 1e-12")
    report.check("back_action_q1p1", "q1 readout kicks Var(p1) by hbar^2/4 sigma^2",
                 abs(ba_bare - expected_bare), abs(ba_bare - expected_bare) < 1e-12,
                 "|diff| < 1e-12")
    report.check("uncertainty", "states stay uncertainty-valid",
                 report.metrics["min_uncertainty_eigenvalue"],
                 report.metrics["min_uncertainty_eigenvalue"] >= -1e-10, ">= -1e-10")


def run_kvn(cfg: ExperimentConfig, report: RunReport, out: Artifacts) -> None:
    grid = grid_of(cfg)
    H = harmonic_of(cfg)
    hbar = cfg.physics.hbar
    psi0 = initial_wavefunction(cfg, grid)
    dt, t_final = cfg.resolved_dt(), cfg.resolved_t_final()
    rows = []
    final = psi0
    for final in kvn.kvn_trajectory(H, psi0, t_final, dt, cfg.run.sample_stride):
        rows.append(grid_row(final, hbar))
    tails_ok = final.check_tails()
    oracle = kvn.transport_density_oracle(H, initial_density(cfg), t_final, grid)
    err = kvn.l2_distance(final.density, oracle, grid)
    # means follow the characteristics of the initial means (linear flow)
    m0 = rows[0]
    mean_err = 0.0
    for row in rows:
        qc, pc = kvn.characteristics_flow(H, (m0["q_mean"], m0["p_mean"]), row["time"])
        row["q_characteristic"], row["p_characteristic"] = qc, pc
        mean_err = max(mean_err, abs(qc - row["q_mean"]), abs(pc - row["p_mean"]))
    norm_drift = max(abs(r["norm"] - 1.0) for r in rows)
    out.csv(report, "series", "series.csv",
            series_columns(["q_characteristic", "p_characteristic"]), rows)
    out.snapshot(report, "snapshot", "final.bin", final, hbar)
    if "csv" in out.formats:
        Qg, Pg = grid.mesh()
        dens_rows = [{"q": a, "p": b, "rho": r, "rho_oracle": o} for a, b, r, o in
                     zip(Qg.ravel(), Pg.ravel(), final.density.ravel(), oracle.ravel())]
        out.csv(report, "density", "density.csv", ["q", "p", "rho", "rho_oracle"], dens_rows)
    report.metrics.update({
        "oracle_l2_error": err, "norm_drift": norm_drift, "mean_flow_error": mean_err,
        "boundary_max": final.boundary_max(), "steps": int(round(t_final / dt)),
        "grid": grid.describe(),
    })
    report.check("oracle_l2", "KvN density vs transport oracle", err, err < 1e-6, "< 1e-6")
    report.check("norm", "norm drift", norm_drift, norm_drift < 1e-10, "< 1e-10")
    report.check("tails", "boundary tails", final.boundary_max(), tails_ok, "< 1e-12")


def _hidden_shape(cfg: ExperimentConfig):
    return lab.default_hidden_shape()


def run_doubled(cfg: ExperimentConfig, report: RunReport, out: Artifacts) -> None:
    grid = grid_of(cfg)
    H = harmonic_of(cfg)
    hbar = cfg.physics.hbar
    eps = cfg.perturbation.epsilon if cfg.perturbation.kind == "hidden_coupling" else 0.0
    Hd = sd.DoubledHamiltonian(H, _hidden_shape(cfg) if eps else None, eps)
    psi0 = initial_wavefunction(cfg, grid)
    dt, t_final = cfg.resolved_dt(), cfg.resolved_t_final()
    rows = []
    final = psi0
    for final in sd.doubled_trajectory(Hd, psi0, t_final, dt, cfg.run.sample_stride, hbar):
        rows.append(grid_row(final, hbar))
    oracle = kvn.transport_density_oracle(H, initial_density(cfg), t_final, grid)
    violation = kvn.l2_distance(final.density, oracle, grid)
    for r in rows:
        r["violation"] = math.nan
    rows[-1]["violation"] = violation
    out.csv(report, "series", "series.csv", series_columns(["violation"]), rows)
    out.snapshot(report, "snapshot", "final.bin", final, hbar)
    Q_series = [r["Q_mean"] for r in rows]
    report.metrics.update({
        "epsilon": eps, "violation": violation,
        "Q_range": max(Q_series) - min(Q_series),
        "norm_drift": max(abs(r["norm"] - 1) for r in rows),
    })
    if eps == 0:
        reference = kvn.kvn_evolve(H, psi0, t_final, dt, check_tails=False)
        diff = float(np.max(np.abs(reference.values - final.values)))
        report.metrics["kvn_equivalence_max_diff"] = diff
        report.check("equivalence", "doubled evolution equals KvN", diff, diff < 1e-12,
                     "< 1e-12")
        report.check("oracle_l2", "density vs transport oracle", violation, violation < 1e-6,
                     "< 1e-6")
    else:
        report.check("violation", "deformation breaks Liouville transport", violation,
                     violation > 1e-6, "> 1e-6")
    report.check("norm", "norm drift", report.metrics["norm_drift"],
                 report.metrics["norm_drift"] < 1e-10, "< 1e-10")


def run_stabilizer(cfg: ExperimentConfig, report: RunReport, out: Artifacts) -> None:
    ph = cfg.physics
    params = lab.FockParams(ph.m, ph.omega, ph.hbar)
    st = cfg.state
    t_final = cfg.resolved_t_final()
    lams = cfg.perturbation.lambda_list
    runtimes, D = {}, {}
    for lam in lams:
        t0 = time.perf_counter()
        D.update(lab.stabilizer_deviation(st.alpha1, st.alpha2, [lam], t_final,
                                          n_trunc=st.n_trunc, params=params))
        runtimes[lam] = time.perf_counter() - t0
    desc = f"fock n_trunc={st.n_trunc}"
    out.csv(report, "scan", "scan.csv", SCAN_COLUMNS,
            lab.scan_rows("lambda", D, t_final, desc, runtimes))
    # trajectory at the configured Lambda
    lam = cfg.perturbation.lam
    s0 = lab.coherent_pair_state(st.alpha1, st.alpha2, st.n_trunc, params)
    m0 = lab.pair_moments(s0)
    n = max(1, int(round(t_final / cfg.resolved_dt())))
    stride = cfg.run.sample_stride
    ts = [i * t_final / n for i in range(0, n + 1, stride)]
    if ts[-1] != t_final:
        ts.append(t_final)
    rows = lab.evolve_fock_trajectory(s0, lab.PerturbationSpec("quartic_stabilizer", lam=lam),
                                      ts)
    for r in rows:
        r["q_classical"] = float(lab.classical_q(m0["q_mean"], m0["p_mean"], r["time"], params))
        r["deviation"] = abs(r["q_mean"] - r["q_classical"])
    out.csv(report, "series", "series.csv", series_columns(["q_classical", "deviation"]), rows)

    finite = [lam for lam in lams if not math.isinf(lam)]
    ordered = sorted(finite)
    monotone = all(D[a] >= D[b] for a, b in zip(ordered, ordered[1:]))
    neutral = lab.eigenstate_neutrality(st.alpha1, 1, min(finite) if finite else 5.0,
                                        np.linspace(0, t_final, 101), st.n_trunc, params)
    report.metrics.update({f"D_lambda={k}": v for k, v in D.items()})
    report.metrics["eigenstate_neutrality"] = neutral
    if 40.0 in D and 80.0 in D and D[80.0] > 0:
        ratio = D[40.0] / D[80.0]
        report.metrics["D40_over_D80"] = ratio
        report.metrics["D40_over_D80_in_band"] = 1.6 <= ratio <= 2.4
    if math.inf in D:
        report.check("unperturbed", "D(inf)", D[math.inf], D[math.inf] < 1e-10, "< 1e-10")
    report.check("monotone", "D non-increasing in Lambda", [D[k] for k in ordered], monotone,
                 "non-increasing")
    report.check("neutrality", "mode-2 number state neutrality", neutral, neutral < 1e-12,
                 "< 1e-12")
    report.check("norm", "norm conservation",
                 max(abs(r["norm"] - 1) for r in rows),
                 max(abs(r["norm"] - 1) for r in rows) < 1e-13, "< 1e-13")


def run_deformation(cfg: ExperimentConfig, report: RunReport, out: Artifacts) -> None:
    grid = grid_of(cfg)
    H = harmonic_of(cfg)
    psi0 = initial_wavefunction(cfg, grid)
    dt, t_final = cfg.resolved_dt(), cfg.resolved_t_final()
    eps_list = cfg.perturbation.epsilon_list
    values, runtimes = lab.deformation_scan(H, psi0, eps_list, t_final, dt, cfg.physics.hbar,
                                            initial_density(cfg), _hidden_shape(cfg))
    out.csv(report, "scan", "scan.csv", SCAN_COLUMNS,
            lab.scan_rows("epsilon", values, t_final, grid.describe(), runtimes))
    ordered = sorted(values)
    increasing = all(values[a] < values[b] for a, b in zip(ordered, ordered[1:]))
    report.metrics.update({f"violation_eps={k}": v for k, v in values.items()})
    report.check("increasing", "violation strictly increasing in epsilon",
                 [values[k] for k in ordered], increasing, "strictly increasing")
    if 0.0 in values:
        report.check("baseline", "epsilon = 0 baseline", values[0.0], values[0.0] < 1e-6,
                     "< 1e-6")


RUNNERS: Dict[str, Callable[[ExperimentConfig, RunReport, Artifacts], None]] = {
    "gaussian": run_gaussian,
    "kvn": run_kvn,
    "doubled": run_doubled,
    "stabilizer": run_stabilizer,
    "deformation": run_deformation,
}


def run_experiment(cfg: ExperimentConfig) -> RunReport:
    """Dispatch one experiment; the report is written even when checks fail."""
    if cfg.experiment == "verify":
        from .verify import verify_suite
        return verify_suite(cfg)
    report = RunReport(cfg.experiment, cfg.echo())
    out = Artifacts(cfg, cfg.experiment)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", kvn.BoundaryTailWarning)
        try:
            RUNNERS[cfg.experiment](cfg, report, out)
        except (ValueError, ArithmeticError) as exc:
            report.errors.append(f"{type(exc).__name__}: {exc}")
    for w in caught:
        if issubclass(w.category, kvn.BoundaryTailWarning):
            report.warnings.append(str(w.message))
    if report.warnings:
        report.check("tail_warnings", "no boundary-tail warnings", len(report.warnings), False,
                     "== 0")
    report.runtime_seconds = time.perf_counter() - t0
    out.report(report)
    return report
