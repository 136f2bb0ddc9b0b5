"""Doubled-space reading of KvN: hidden operators Q = i hbar d/dp, P = -i hbar d/dq.

With these, hbar times the Liouvillian becomes H = (dH_cl/dq) Q + (dH_cl/dp) P,
a Schroedinger operator for two canonical pairs (q, P) and (Q, p) in which q
and p act diagonally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import fft as sfft

from .kvn_propagator import (ClassicalWavefunction, SeparableClassicalHamiltonian,
                             _Stepper, _step_counts, density_and_expectation,
                             kvn_evolve, spectral_derivative)
from .polynomial import Poly

HiddenOperator = Poly


class NotClassicalObservable(ValueError):
    """Raised when an operator containing Q or P is used as a classical observable."""


class UnsupportedOperator(ValueError):
    """Perturbation mixes (q, p) and (Q, P) factors in one monomial."""


def _number(c):
    return c if isinstance(c, complex) else float(c)


def _real_coefficients(op: Poly) -> bool:
    return all(not isinstance(c, complex) or c.imag == 0 for c in op.terms.values())


def apply_hidden_operator(op: HiddenOperator, psi: ClassicalWavefunction,
                          hbar: float = 1.0, max_degree: int = 12) -> np.ndarray:
    """Apply a normal-ordered polynomial: derivatives first, then multiplication."""
    if op.degree > max_degree:
        raise ValueError(f"operator degree {op.degree} exceeds {max_degree}")
    grid = psi.grid
    Qg, Pg = grid.mesh()
    out = np.zeros(grid.shape, dtype=complex)
    for (c, d), prefactor in op.split_hidden():
        v = psi.values
        for _ in range(c):
            v = 1j * hbar * spectral_derivative(v, grid, 1)
        for _ in range(d):
            v = -1j * hbar * spectral_derivative(v, grid, 0)
        for (a, b, _, _), coef in prefactor:
            out += _number(coef) * Qg**a * Pg**b * v
    return out


@dataclass(frozen=True)
class DoubledHamiltonian:
    """(dH_cl/dq) Q + (dH_cl/dp) P + epsilon * perturbation."""
    base: SeparableClassicalHamiltonian
    perturbation: Optional[HiddenOperator] = None
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")

    @property
    def operator(self) -> HiddenOperator:
        _, _, Q, P = Poly.symbols()
        op = self.base.dH_dq * Q + self.base.dH_dp * P
        if self.perturbation is not None and self.epsilon:
            op = op + self.epsilon * self.perturbation
        return op

    @property
    def unperturbed(self) -> bool:
        return self.perturbation is None or self.epsilon == 0

    def apply(self, psi: ClassicalWavefunction, hbar: float = 1.0) -> np.ndarray:
        return apply_hidden_operator(self.operator, psi, hbar)


def sudarshan_hamiltonian(H_cl: SeparableClassicalHamiltonian) -> DoubledHamiltonian:
    return DoubledHamiltonian(H_cl)


def with_perturbation(Hd: DoubledHamiltonian, shape: HiddenOperator,
                      epsilon: float) -> DoubledHamiltonian:
    return DoubledHamiltonian(Hd.base, shape, epsilon)


def _perturbation_phase(op: HiddenOperator, psi: ClassicalWavefunction, hbar: float,
                        scale: float) -> tuple[str, np.ndarray]:
    """Phase factor exp(-i scale op / hbar) in the representation where op is diagonal."""
    if not _real_coefficients(op):
        raise UnsupportedOperator("perturbation coefficients must be real")
    grid = psi.grid
    if op.is_classical:
        Qg, Pg = grid.mesh()
        return "node", np.exp(-1j * scale * op(Qg, Pg) / hbar)
    if op.is_hidden_only:
        # on exp(i kq q + i kp p): Q -> -hbar kp, P -> hbar kq
        KQ, KP = np.meshgrid(grid.kq, grid.kp, indexing="ij")
        sym = np.zeros(grid.shape)
        for (_, _, c, d), coef in op:
            sym = sym + float(coef) * (-hbar * KP) ** c * (hbar * KQ) ** d
        return "freq", np.exp(-1j * scale * sym / hbar)
    raise UnsupportedOperator(
        "perturbation must be a polynomial in (q, p) alone or in (Q, P) alone")


def evolve_doubled(Hd: DoubledHamiltonian, psi: ClassicalWavefunction, t: float, dt: float,
                   hbar: float = 1.0) -> ClassicalWavefunction:
    """Integrate i hbar psi_t = H psi.

    Without a perturbation this is exactly the KvN split-operator evolution.
    Otherwise each step is drift(dt/2) kick(dt/2) pert(dt) kick(dt/2) drift(dt/2).
    """
    if Hd.unperturbed:
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        return kvn_evolve(Hd.base, psi, t, dt, check_tails=False)
    n = _step_counts(t, dt)
    kind, phase = _perturbation_phase(Hd.perturbation, psi, hbar, Hd.epsilon * dt)
    st = _Stepper(Hd.base, psi.grid)
    v = psi.values
    for _ in range(n):
        v = st.drift(v, dt / 2)
        v = st.kick(v, dt / 2)
        if kind == "node":
            v = phase * v
        else:
            v = sfft.ifft2(phase * sfft.fft2(v))
        v = st.kick(v, dt / 2)
        v = st.drift(v, dt / 2)
    return psi.with_values(v, psi.time + n * dt)


def doubled_trajectory(Hd: DoubledHamiltonian, psi: ClassicalWavefunction, t: float,
                       dt: float, stride: int, hbar: float = 1.0):
    """Yield the state at t=0 and every ``stride`` steps thereafter."""
    n = _step_counts(t, dt)
    yield psi
    done = 0
    while done < n:
        k = min(stride, n - done)
        psi = evolve_doubled(Hd, psi, k * dt, dt, hbar)
        done += k
        yield psi


def superselection_residual(psi: ClassicalWavefunction, f: Poly,
                            theta: Callable) -> float:
    """|<f>_psi - <f>_{exp(i theta) psi}| for a classical observable f."""
    if not f.is_classical:
        raise NotClassicalObservable(f"{f!r} contains Q or P and is not a classical observable")
    Qg, Pg = psi.grid.mesh()
    twisted = psi.with_values(psi.values * np.exp(1j * np.asarray(theta(Qg, Pg), dtype=float)))
    return abs(density_and_expectation(psi, f)[1] - density_and_expectation(twisted, f)[1])


def hidden_expectation(psi: ClassicalWavefunction, which: str, hbar: float = 1.0) -> float:
    """Re <psi|O psi> on the grid for O = Q or P."""
    if which not in ("Q", "P"):
        raise ValueError("which must be 'Q' or 'P'")
    op = Poly.symbols()[2 if which == "Q" else 3]
    applied = apply_hidden_operator(op, psi, hbar)
    return float(np.real(np.sum(np.conj(psi.values) * applied)) * psi.grid.cell)


def commutator_residual(A: HiddenOperator, B: HiddenOperator, expected,
                        psi: ClassicalWavefunction, hbar: float = 1.0) -> float:
    """max |(A B - B A) psi - expected psi|, applying the operators in sequence."""
    def ab(x, y):
        inner = psi.with_values(apply_hidden_operator(y, psi, hbar))
        return apply_hidden_operator(x, inner, hbar)
    comm = ab(A, B) - ab(B, A)
    return float(np.max(np.abs(comm - expected * psi.values)))


def commutator_suite(psi: ClassicalWavefunction, hbar: float = 1.0) -> dict:
    """Residuals of the six canonical commutators of (q, P), (Q, p)."""
    q, p, Q, P = Poly.symbols()
    ih = 1j * hbar
    cases = {
        "[q,P]": (q, P, ih), "[Q,p]": (Q, p, ih), "[q,p]": (q, p, 0),
        "[Q,P]": (Q, P, 0), "[q,Q]": (q, Q, 0), "[p,P]": (p, P, 0),
    }
    return {k: commutator_residual(a, b, e, psi, hbar) for k, (a, b, e) in cases.items()}
