"""Classicality-violation experiments.

Two families:

* the quartic stabilizer (1/2 Lambda) h2^2 added to the oscillator pair, where
  h2 is the (positive) energy of mode 2. Every term is a function of the two
  number operators, so evolution in the truncated product number basis is a
  pure phase per basis state;
* hidden-sector deformations epsilon * O(Q, P) of the doubled Hamiltonian,
  scored against Liouville transport on the phase-space grid.
"""
from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .kvn_propagator import (ClassicalWavefunction, SeparableClassicalHamiltonian,
                             l2_distance, transport_density_oracle)
from .polynomial import Poly
from .sudarshan_doubling import DoubledHamiltonian, evolve_doubled

INF = math.inf
DEFAULT_LAMBDAS = (5.0, 10.0, 20.0, 40.0, 80.0, INF)
DEFAULT_EPSILONS = (0.0, 0.01, 0.05, 0.1)
TRUNCATION_TOL = 1e-8
DEFAULT_N_TRUNC = 32


class TruncationError(ValueError):
    """The number-basis cutoff is too small for the requested state."""

    def __init__(self, message: str, required: int):
        super().__init__(f"{message}; need n_trunc >= {required}")
        self.required = required


def default_hidden_shape() -> Poly:
    _, _, Q, P = Poly.symbols()
    return (Q**2 + P**2) / 2


@dataclass(frozen=True)
class PerturbationSpec:
    kind: str
    lam: float = INF
    epsilon: float = 0.0
    hidden_shape: Optional[Poly] = None

    def __post_init__(self):
        if self.kind not in ("quartic_stabilizer", "hidden_coupling"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if not (self.lam > 0):
            raise ValueError("lambda must be positive (or inf)")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.kind == "hidden_coupling" and self.hidden_shape is None:
            object.__setattr__(self, "hidden_shape", default_hidden_shape())


@dataclass(frozen=True)
class FockParams:
    m: float = 1.0
    omega: float = 1.0
    hbar: float = 1.0


@dataclass(frozen=True)
class FockPairState:
    amplitudes: np.ndarray
    params: FockParams = field(default_factory=FockParams)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 2 or amps.shape[0] != amps.shape[1]:
            raise ValueError("amplitudes must be a square matrix")
        object.__setattr__(self, "amplitudes", amps)
        if abs(self.norm - 1) > 1e-12:
            raise ValueError(f"state is not normalized (norm {self.norm!r})")

    @property
    def n_trunc(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def top_population(self) -> float:
        """Largest population held in the top two levels of either mode."""
        pop = np.abs(self.amplitudes) ** 2
        return float(max(pop[-2:, :].sum(), pop[:, -2:].sum()))

    @property
    def truncation_ok(self) -> bool:
        return self.top_population() < TRUNCATION_TOL


def fock_energy(n1, n2, m: float = 1.0, omega: float = 1.0, lam: float = INF,
                hbar: float = 1.0):
    """hbar w (n1 + 1/2) - hbar w (n2 + 1/2) + (hbar w (n2 + 1/2))^2 / (2 Lambda).

    The mass drops out of the spectrum; it is accepted for signature symmetry.
    """
    n1 = np.asarray(n1)
    n2 = np.asarray(n2)
    if np.any(n1 < 0) or np.any(n2 < 0):
        raise ValueError("quantum numbers must be non-negative")
    if not lam > 0:
        raise ValueError("lambda must be positive (or inf)")
    e1 = hbar * omega * (n1 + 0.5)
    e2 = hbar * omega * (n2 + 0.5)
    stab = 0.0 if math.isinf(lam) else e2**2 / (2 * lam)
    out = e1 - e2 + stab
    return float(out) if np.ndim(out) == 0 else out


def coherent_amplitudes(alpha: complex, n_trunc: int) -> np.ndarray:
    """e^{-|a|^2/2} a^n / sqrt(n!) for n < n_trunc (not renormalized)."""
    n = np.arange(n_trunc)
    if alpha == 0:
        out = np.zeros(n_trunc, dtype=complex)
        out[0] = 1.0
        return out
    log_mag = -abs(alpha) ** 2 / 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(alpha))


def number_amplitudes(n: int, n_trunc: int) -> np.ndarray:
    out = np.zeros(n_trunc, dtype=complex)
    out[n] = 1.0
    return out


def product_state(mode1: np.ndarray, mode2: np.ndarray,
                  params: FockParams = FockParams(), strict: bool = True) -> FockPairState:
    amps = np.outer(mode1, mode2)
    amps = amps / math.sqrt(np.sum(np.abs(amps) ** 2))
    state = FockPairState(amps, params)
    if strict and not state.truncation_ok:
        raise TruncationError(
            f"top-level population {state.top_population():.2e} exceeds {TRUNCATION_TOL}",
            state.n_trunc + 8)
    return state


def _required_trunc(alpha: complex) -> int:
    # smallest n with 4|alpha|^2 < n, then grown until the tail is negligible
    n = max(8, math.floor(4 * abs(alpha) ** 2) + 1)
    while True:
        pop = np.abs(coherent_amplitudes(alpha, n)) ** 2
        if pop[-2:].sum() < TRUNCATION_TOL:
            return n
        n += 1


def coherent_pair_state(alpha1: complex, alpha2: complex, n_trunc: int = DEFAULT_N_TRUNC,
                        params: FockParams = FockParams()) -> FockPairState:
    for a in (alpha1, alpha2):
        if 4 * abs(a) ** 2 >= n_trunc:
            raise TruncationError(f"|alpha|={abs(a):g} too large for n_trunc={n_trunc}",
                                  _required_trunc(a))
    state = product_state(coherent_amplitudes(alpha1, n_trunc),
                          coherent_amplitudes(alpha2, n_trunc), params, strict=False)
    if not state.truncation_ok:
        need = max(_required_trunc(alpha1), _required_trunc(alpha2))
        raise TruncationError(
            f"top-level population {state.top_population():.2e} exceeds {TRUNCATION_TOL}", need)
    return state


# ---------------------------------------------------------------------------
# observables

def _ladder(n: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n)), k=1)


def _quadratures(n: int, params: FockParams):
    """q, p and their squares for one mode; squares use one extra level."""
    a = _ladder(n + 1)
    ad = a.T
    xs = math.sqrt(params.hbar / (2 * params.m * params.omega))
    ps = math.sqrt(params.hbar * params.m * params.omega / 2)
    qop = xs * (a + ad)
    pop = 1j * ps * (ad - a)
    return (qop[:n, :n], pop[:n, :n], (qop @ qop)[:n, :n], (pop @ pop)[:n, :n])


def _expect(C: np.ndarray, A: Optional[np.ndarray], B: Optional[np.ndarray]) -> complex:
    """<A (x) B> for amplitudes C[n1, n2]; None means identity."""
    X = C if A is None else A @ C
    X = X if B is None else X @ B.T
    return complex(np.sum(np.conj(C) * X))


def pair_moments(state: FockPairState) -> Dict[str, float]:
    """Moments of q = q1 + q2 and p = p1 - p2, plus the hidden means."""
    C = state.amplitudes
    q1, p1, q1q1, p1p1 = _quadratures(state.n_trunc, state.params)
    q_mean = (_expect(C, q1, None) + _expect(C, None, q1)).real
    p_mean = (_expect(C, p1, None) - _expect(C, None, p1)).real
    q2 = (_expect(C, q1q1, None) + 2 * _expect(C, q1, q1) + _expect(C, None, q1q1)).real
    p2 = (_expect(C, p1p1, None) - 2 * _expect(C, p1, p1) + _expect(C, None, p1p1)).real
    # hidden pair Q = (q1 - q2)/2, P = (p1 + p2)/2
    Q_mean = 0.5 * (_expect(C, q1, None) - _expect(C, None, q1)).real
    P_mean = 0.5 * (_expect(C, p1, None) + _expect(C, None, p1)).real
    return {"q_mean": q_mean, "p_mean": p_mean,
            "q_var": q2 - q_mean**2, "p_var": p2 - p_mean**2,
            "Q_mean": Q_mean, "P_mean": P_mean, "norm": state.norm}


def evolve_fock(state: FockPairState, lam: float, t: float) -> FockPairState:
    n = np.arange(state.n_trunc)
    pr = state.params
    E = fock_energy(n[:, None], n[None, :], pr.m, pr.omega, lam, pr.hbar)
    return FockPairState(state.amplitudes * np.exp(-1j * E * t / pr.hbar), pr)


def evolve_fock_trajectory(s0: FockPairState, spec: PerturbationSpec,
                           t_samples: Sequence[float]) -> List[Dict[str, float]]:
    if spec.kind != "quartic_stabilizer":
        raise ValueError("fock trajectories need a quartic_stabilizer perturbation")
    rows = []
    for t in t_samples:
        row = pair_moments(s0 if t == 0 else evolve_fock(s0, spec.lam, t))
        row["time"] = float(t)
        rows.append(row)
    return rows


def classical_q(q0: float, p0: float, t, params: FockParams = FockParams()):
    """q(t) of H_cl = p^2/2m + m w^2 q^2/2."""
    w, m = params.omega, params.m
    t = np.asarray(t, dtype=float)
    return q0 * np.cos(w * t) + p0 / (m * w) * np.sin(w * t)


def stabilizer_deviation(alpha1: complex, alpha2: complex, lambda_list: Iterable[float],
                         t_final: float, n_samples: int = 801,
                         n_trunc: int = DEFAULT_N_TRUNC,
                         params: FockParams = FockParams()) -> Dict[float, float]:
    """D(Lambda) = max_t |<q>_Lambda(t) - q_cl(t)| on a uniform time sample."""
    if alpha2 == 0:
        raise ValueError("alpha2 must be non-zero, otherwise the stabilizer is a global phase")
    s0 = coherent_pair_state(alpha1, alpha2, n_trunc, params)
    m0 = pair_moments(s0)
    ts = np.linspace(0.0, t_final, n_samples)
    q_cl = classical_q(m0["q_mean"], m0["p_mean"], ts, params)
    out = {}
    for lam in lambda_list:
        rows = evolve_fock_trajectory(s0, PerturbationSpec("quartic_stabilizer", lam=lam), ts)
        qs = np.array([r["q_mean"] for r in rows])
        out[lam] = float(np.max(np.abs(qs - q_cl)))
    return out


def eigenstate_neutrality(alpha1: complex, n2: int, lam: float, t_samples: Sequence[float],
                          n_trunc: int = DEFAULT_N_TRUNC,
                          params: FockParams = FockParams()) -> float:
    """Max change of any (q, p) moment caused by the stabilizer when mode 2 is |n2>."""
    s0 = product_state(coherent_amplitudes(alpha1, n_trunc),
                       number_amplitudes(n2, n_trunc), params)
    a = evolve_fock_trajectory(s0, PerturbationSpec("quartic_stabilizer", lam=lam), t_samples)
    b = evolve_fock_trajectory(s0, PerturbationSpec("quartic_stabilizer", lam=INF), t_samples)
    keys = ("q_mean", "p_mean", "q_var", "p_var")
    return max(abs(ra[k] - rb[k]) for ra, rb in zip(a, b) for k in keys)


# ---------------------------------------------------------------------------
# hidden-sector deformations on the grid

def deformation_violation(H_cl: SeparableClassicalHamiltonian, psi0: ClassicalWavefunction,
                          spec: PerturbationSpec, t: float, dt: float,
                          hbar: float = 1.0, rho0=None) -> float:
    """L2 distance between the deformed density and exact Liouville transport.

    ``rho0`` is the initial density as an evaluable function; when omitted the
    trigonometric interpolant of psi0 is used.
    """
    if spec.kind != "hidden_coupling":
        raise ValueError("deformation needs a hidden_coupling perturbation")
    Hd = DoubledHamiltonian(H_cl, spec.hidden_shape, spec.epsilon)
    final = evolve_doubled(Hd, psi0, t, dt, hbar)
    if rho0 is None:
        rho0 = _spectral_density_function(psi0)
    exact = transport_density_oracle(H_cl, rho0, t, psi0.grid)
    return l2_distance(final.density, exact, psi0.grid)


def _spectral_density_function(psi: ClassicalWavefunction):
    """Trigonometric interpolant of psi, returned as an evaluable |psi|^2."""
    grid = psi.grid
    coeffs = np.fft.fft2(psi.values) / psi.values.size
    kq, kp = grid.kq, grid.kp

    def rho(qq, pp):
        qq, pp = np.broadcast_arrays(np.asarray(qq, dtype=float), np.asarray(pp, dtype=float))
        flat_q, flat_p = qq.ravel(), pp.ravel()
        out = np.empty(flat_q.size)
        for lo in range(0, flat_q.size, 4096):
            sl = slice(lo, lo + 4096)
            eq = np.exp(1j * np.multiply.outer(flat_q[sl] - grid.q_min, kq))
            ep = np.exp(1j * np.multiply.outer(flat_p[sl] - grid.p_min, kp))
            out[sl] = np.abs(np.sum((eq @ coeffs) * ep, axis=1)) ** 2
        return out.reshape(qq.shape)
    return rho


def scan_rows(parameter: str, results: Dict[float, float], t_final: float,
              descriptor: str, runtimes: Dict[float, float]) -> List[dict]:
    return [{"parameter": f"{parameter}={k}", "metric": v, "t_final": t_final,
             "descriptor": descriptor, "runtime_seconds": runtimes.get(k, 0.0)}
            for k, v in results.items()]


def deformation_scan(H_cl: SeparableClassicalHamiltonian, psi0: ClassicalWavefunction,
                     epsilons: Iterable[float], t: float, dt: float, hbar: float = 1.0,
                     rho0=None, shape: Optional[Poly] = None):
    """Violation for each epsilon; returns (values, runtimes)."""
    values, runtimes = {}, {}
    for eps in epsilons:
        t0 = _time.perf_counter()
        spec = PerturbationSpec("hidden_coupling", epsilon=eps, hidden_shape=shape)
        values[eps] = deformation_violation(H_cl, psi0, spec, t, dt, hbar, rho0)
        runtimes[eps] = _time.perf_counter() - t0
    return values, runtimes
