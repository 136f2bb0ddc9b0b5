"""Exact linear dynamics of the positive/negative-mass oscillator pair.

Canonical vectors are 4-component. Two layouts are used:

* ``BARE`` -- (q1, p1, q2, p2), the two physical oscillators;
* ``QMFS`` -- (q, P, Q, p), with conjugate pairs (q, P) and (Q, p) adjacent so
  the classical sector is components 0 and 3.

Both have Omega = diag(J, J), J = [[0, 1], [-1, 0]], where the commutator of
variables i and j is i*hbar*Omega[i, j]. Hamiltonians are quadratic,
``H = r.M.r / 2 + c.r + h0``, so the flow ``dr/dt = Omega (M r + c)`` is solved
exactly with a matrix exponential.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .polynomial import Poly

_J = np.array([[0.0, 1.0], [-1.0, 0.0]])
UNCERTAINTY_TOL = 1e-10
SYMPLECTIC_TOL = 1e-12


@dataclass(frozen=True)
class CanonicalLayout:
    ordering: Tuple[str, str, str, str]
    omega_matrix: np.ndarray = field(repr=False)
    hbar: float = 1.0

    def __post_init__(self):
        om = np.asarray(self.omega_matrix, dtype=float)
        if om.shape != (4, 4) or len(self.ordering) != 4:
            raise ValueError("layout must describe exactly 4 canonical variables")
        if not np.array_equal(om, -om.T):
            raise ValueError("omega_matrix must be antisymmetric")
        if abs(np.linalg.det(om)) < 1e-12:
            raise ValueError("omega_matrix must be invertible")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        object.__setattr__(self, "omega_matrix", om)
        object.__setattr__(self, "ordering", tuple(self.ordering))

    def index(self, name: str | int) -> int:
        if isinstance(name, (int, np.integer)):
            if not 0 <= name < 4:
                raise IndexError(name)
            return int(name)
        return self.ordering.index(name)

    def with_hbar(self, hbar: float) -> "CanonicalLayout":
        return CanonicalLayout(self.ordering, self.omega_matrix, hbar)

    def compatible(self, other: "CanonicalLayout") -> bool:
        return (self.ordering == other.ordering
                and np.array_equal(self.omega_matrix, other.omega_matrix)
                and self.hbar == other.hbar)


def _block_omega() -> np.ndarray:
    om = np.zeros((4, 4))
    om[:2, :2] = _J
    om[2:, 2:] = _J
    return om


def bare_layout(hbar: float = 1.0) -> CanonicalLayout:
    return CanonicalLayout(("q1", "p1", "q2", "p2"), _block_omega(), hbar)


def qmfs_layout(hbar: float = 1.0) -> CanonicalLayout:
    return CanonicalLayout(("q", "P", "Q", "p"), _block_omega(), hbar)


@dataclass(frozen=True)
class QuadraticHamiltonian:
    M: np.ndarray
    c: np.ndarray
    h0: float
    layout: CanonicalLayout

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if M.shape != (4, 4) or c.shape != (4,):
            raise ValueError("M must be 4x4 and c a 4-vector")
        if not np.all(np.isfinite(M)) or np.max(np.abs(M - M.T)) > 1e-12 * max(
                1.0, float(np.max(np.abs(M)))):
            raise ValueError("M must be finite and symmetric")
        # remove roundoff asymmetry left by congruence transforms
        object.__setattr__(self, "M", 0.5 * (M + M.T))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "h0", float(self.h0))

    def energy(self, r) -> float:
        r = np.asarray(r, dtype=float)
        return float(0.5 * r @ self.M @ r + self.c @ r + self.h0)

    def generator(self) -> np.ndarray:
        """Matrix Omega.M of the mean flow dr/dt = Omega.M r + Omega.c."""
        return self.layout.omega_matrix @ self.M


@dataclass(frozen=True)
class GaussianState:
    mean: np.ndarray
    cov: np.ndarray
    layout: CanonicalLayout

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape != (4,) or cov.shape != (4, 4):
            raise ValueError("mean must be a 4-vector and cov 4x4")
        if not np.allclose(cov, cov.T, atol=1e-12, rtol=0):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))
        if uncertainty_min_eigenvalue(self) < -UNCERTAINTY_TOL:
            raise ValueError("covariance violates the uncertainty relation")

    def variance(self, var) -> float:
        i = self.layout.index(var)
        return float(self.cov[i, i])

    def expectation(self, var) -> float:
        return float(self.mean[self.layout.index(var)])


def uncertainty_min_eigenvalue(s: GaussianState) -> float:
    """Smallest eigenvalue of cov + (i hbar / 2) Omega."""
    herm = s.cov + 0.5j * s.layout.hbar * s.layout.omega_matrix
    return float(np.linalg.eigvalsh(herm).min())


def vacuum_state(layout: CanonicalLayout, mean=None) -> GaussianState:
    """Minimum-uncertainty state with cov = (hbar/2) I in the given layout."""
    mean = np.zeros(4) if mean is None else mean
    return GaussianState(mean, 0.5 * layout.hbar * np.eye(4), layout)


@dataclass(frozen=True)
class CanonicalTransform:
    S: np.ndarray
    source: CanonicalLayout
    target: CanonicalLayout

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if S.shape != (4, 4):
            raise ValueError("S must be 4x4")
        object.__setattr__(self, "S", S)
        if symplectic_residual(self) > SYMPLECTIC_TOL:
            raise ValueError("transform is not canonical")

    def apply(self, r) -> np.ndarray:
        return self.S @ np.asarray(r, dtype=float)

    def apply_state(self, s: GaussianState) -> GaussianState:
        if not s.layout.compatible(self.source):
            raise ValueError("state layout does not match transform source")
        return GaussianState(self.S @ s.mean, self.S @ s.cov @ self.S.T, self.target)


def symplectic_residual(T: CanonicalTransform) -> float:
    """max |S Omega_old S^T - Omega_new|."""
    lhs = T.S @ T.source.omega_matrix @ T.S.T
    return float(np.max(np.abs(lhs - T.target.omega_matrix)))


def oscillator_pair_hamiltonian(m: float = 1.0, omega: float = 1.0,
                                hbar: float = 1.0) -> QuadraticHamiltonian:
    """p1^2/2m + m w^2 q1^2/2 - p2^2/2m - m w^2 q2^2/2 in the bare layout."""
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m}")
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    k = m * omega**2
    M = np.diag([k, 1.0 / m, -k, -1.0 / m])
    return QuadraticHamiltonian(M, np.zeros(4), 0.0, bare_layout(hbar))


def qmfs_transform(hbar: float = 1.0) -> CanonicalTransform:
    """(q1, p1, q2, p2) -> (q, P, Q, p) with q = q1+q2, P = (p1+p2)/2,
    Q = (q1-q2)/2, p = p1-p2."""
    S = np.array([
        [1.0, 0.0, 1.0, 0.0],
        [0.0, 0.5, 0.0, 0.5],
        [0.5, 0.0, -0.5, 0.0],
        [0.0, 1.0, 0.0, -1.0],
    ])
    return CanonicalTransform(S, bare_layout(hbar), qmfs_layout(hbar))


def identity_transform(layout: CanonicalLayout) -> CanonicalTransform:
    return CanonicalTransform(np.eye(4), layout, layout)


def transform_hamiltonian(T: CanonicalTransform,
                          H: QuadraticHamiltonian) -> QuadraticHamiltonian:
    if not H.layout.compatible(T.source):
        raise ValueError("Hamiltonian layout does not match transform source")
    if abs(np.linalg.det(T.S)) < 1e-14:
        raise ValueError("transform matrix is singular")
    S_inv = np.linalg.inv(T.S)
    M_new = S_inv.T @ H.M @ S_inv
    # entries that are zero up to roundoff are zero in exact arithmetic here
    M_new[np.abs(M_new) < 1e-15 * max(1.0, np.abs(M_new).max())] = 0.0
    return QuadraticHamiltonian(M_new, S_inv.T @ H.c, H.h0, T.target)


def qmfs_hamiltonian(m: float = 1.0, omega: float = 1.0,
                     hbar: float = 1.0) -> QuadraticHamiltonian:
    """The pair Hamiltonian rewritten as p P / m + m w^2 q Q."""
    return transform_hamiltonian(qmfs_transform(hbar),
                                 oscillator_pair_hamiltonian(m, omega, hbar))


# ---------------------------------------------------------------------------
# integrability of f P + g Q + h

@dataclass(frozen=True)
class GeneratorTriple:
    """Time-independent polynomial generators of H = f(q,p) P + g(q,p) Q + h(q,p)."""
    f: Poly
    g: Poly
    h: Poly = Poly()
    max_degree: int = 12

    def __post_init__(self):
        for name in ("f", "g", "h"):
            poly = getattr(self, name)
            if not isinstance(poly, Poly) or not poly.is_classical:
                raise ValueError(f"{name} must be a polynomial in q and p only")
            if poly.degree > self.max_degree:
                raise ValueError(f"{name} exceeds the maximum degree {self.max_degree}")


def check_qmfs_integrability(gen: GeneratorTriple,
                             atol: float = 1e-12) -> Tuple[bool, Optional[Poly]]:
    """Return (closes, H_cl) with dH_cl/dp = f and dH_cl/dq = g when they close.

    Closure is df/dq == dg/dp; exact coefficients are compared exactly.
    """
    if not gen.f.diff("q").isclose(gen.g.diff("p"), atol=atol):
        return False, None
    h_p = gen.f.integrate("p")
    remainder = gen.g - h_p.diff("q")
    # remainder depends on q only once the closure condition holds
    remainder = Poly({e: c for e, c in remainder.terms.items() if e[1] == 0})
    return True, h_p + remainder.integrate("q")


# ---------------------------------------------------------------------------
# evolution and measurement

def flow_matrix(H: QuadraticHamiltonian, t: float) -> np.ndarray:
    """S_t = exp(Omega M t)."""
    return expm(H.generator() * t)


def evolve_gaussian(H: QuadraticHamiltonian, s: GaussianState, t: float) -> GaussianState:
    if not H.layout.compatible(s.layout):
        raise ValueError("Hamiltonian and state layouts differ")
    if not np.array_equal(H.M, H.M.T):
        raise ValueError("Hamiltonian matrix must be symmetric")
    if t == 0:
        return s
    # affine flow via the augmented generator [[A, b], [0, 0]]
    aug = np.zeros((5, 5))
    aug[:4, :4] = H.generator()
    aug[:4, 4] = H.layout.omega_matrix @ H.c
    E = expm(aug * t)
    S_t = E[:4, :4]
    mean = S_t @ s.mean + E[:4, 4]
    return GaussianState(mean, S_t @ s.cov @ S_t.T, s.layout)


def measure_variable(s: GaussianState, idx, sigma_m: float, outcome: float | None = None,
                     selective: bool = True):
    """Noisy readout of one canonical variable.

    Returns ``(posterior, (outcome_mean, outcome_variance))``. The posterior
    covariance is the Gaussian conditional covariance (it does not depend on
    the recorded value) plus the back-action term
    ``hbar^2 |Omega[u, v]|^2 / (4 sigma_m^2)`` on every variance Var(v).
    ``outcome`` shifts the posterior mean; by default the mean is left at the
    prior mean, i.e. the most likely record. With ``selective=False`` the
    readout is discarded and only the back-action term is applied.
    """
    if not sigma_m > 0:
        raise ValueError(f"sigma_m must be positive, got {sigma_m}")
    u = s.layout.index(idx)
    var_u = s.cov[u, u]
    out_var = var_u + sigma_m**2
    mean, cov = s.mean.copy(), s.cov.copy()
    if selective:
        gain = s.cov[:, u] / out_var
        cov = cov - np.outer(gain, s.cov[u, :])
        if outcome is not None:
            mean = mean + gain * (outcome - s.mean[u])
    hbar = s.layout.hbar
    kick = hbar**2 * s.layout.omega_matrix[u, :] ** 2 / (4.0 * sigma_m**2)
    cov = cov + np.diag(kick)
    return GaussianState(mean, cov, s.layout), (float(s.mean[u]), float(out_var))


def back_action_deviation(H: QuadraticHamiltonian, s0: GaussianState, probe, target,
                          t_meas: float, sigma_m: float, t_final: float,
                          selective: bool = True) -> float:
    """|Var(target)(t_final) with a probe readout at t_meas - without it|."""
    if not 0 <= t_meas <= t_final:
        raise ValueError("need 0 <= t_meas <= t_final")
    mid = evolve_gaussian(H, s0, t_meas)
    measured, _ = measure_variable(mid, probe, sigma_m, selective=selective)
    free = evolve_gaussian(H, mid, t_final - t_meas)
    kicked = evolve_gaussian(H, measured, t_final - t_meas)
    return abs(kicked.variance(target) - free.variance(target))


def classical_rhs(H_cl: Poly):
    """Hamilton's vector field (dH/dp, -dH/dq) for a classical polynomial."""
    dq, dp = H_cl.diff("p"), -H_cl.diff("q")

    def rhs(y):
        return np.array([dq(y[0], y[1]), dp(y[0], y[1])], dtype=float)
    return rhs


def sector_blocks(H: QuadraticHamiltonian) -> dict:
    """Split the mean-flow generator of a QMFS-layout Hamiltonian into sectors.

    ``classical_from_hidden`` must vanish for a quantum-mechanics-free subsystem.
    """
    A = H.generator()
    lay = H.layout
    cl = [lay.index("q"), lay.index("p")]
    hid = [lay.index("Q"), lay.index("P")]
    return {
        "classical": A[np.ix_(cl, cl)],
        "classical_from_hidden": A[np.ix_(cl, hid)],
        "hidden_from_classical": A[np.ix_(hid, cl)],
        "hidden": A[np.ix_(hid, hid)],
    }


def as_json(obj) -> dict:
    """Row-major JSON-ready dump of a Hamiltonian, state or transform."""
    if isinstance(obj, QuadraticHamiltonian):
        return {"ordering": list(obj.layout.ordering), "M": obj.M.tolist(),
                "c": obj.c.tolist(), "h0": obj.h0, "hbar": obj.layout.hbar}
    if isinstance(obj, GaussianState):
        return {"ordering": list(obj.layout.ordering), "mean": obj.mean.tolist(),
                "cov": obj.cov.tolist(), "hbar": obj.layout.hbar}
    if isinstance(obj, CanonicalTransform):
        return {"source": list(obj.source.ordering), "target": list(obj.target.ordering),
                "S": obj.S.tolist()}
    raise TypeError(type(obj))


def sequence_means(H: QuadraticHamiltonian, s0: GaussianState,
                   times: Sequence[float]) -> np.ndarray:
    """Means at each requested time, shape (len(times), 4)."""
    return np.array([evolve_gaussian(H, s0, t).mean for t in times])
