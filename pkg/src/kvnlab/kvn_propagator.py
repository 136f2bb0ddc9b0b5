"""Koopman-von Neumann propagation of a classical wavefunction psi(q, p).

The grid is periodic in both directions; axis 0 is q and axis 1 is p.
Derivatives are spectral. Time stepping is Strang splitting of the separable
Liouvillian: each advection sub-flow is a pure phase in a mixed
node/frequency representation, so every step is unitary to roundoff.
"""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from typing import Callable, Iterator, Optional, Tuple

import numpy as np
from scipy import fft as sfft

from .polynomial import Poly

NORM_TOL = 1e-10
TAIL_TOL = 1e-12


class BoundaryTailWarning(RuntimeWarning):
    """The wavefunction is not negligible at the edge of the periodic domain."""


@dataclass(frozen=True)
class PhaseSpaceGrid:
    nq: int = 256
    np_: int = 256
    q_min: float = -8.0
    q_max: float = 8.0
    p_min: float = -8.0
    p_max: float = 8.0

    def __post_init__(self):
        for name, n in (("nq", self.nq), ("np", self.np_)):
            if int(n) != n or n < 8 or (int(n) & (int(n) - 1)):
                raise ValueError(f"{name} must be a power of two >= 8, got {n}")
        if not self.q_max > self.q_min:
            raise ValueError("q_max must exceed q_min")
        if not self.p_max > self.p_min:
            raise ValueError("p_max must exceed p_min")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nq, self.np_)

    @property
    def dq(self) -> float:
        return (self.q_max - self.q_min) / self.nq

    @property
    def dp(self) -> float:
        return (self.p_max - self.p_min) / self.np_

    @property
    def cell(self) -> float:
        return self.dq * self.dp

    @property
    def q(self) -> np.ndarray:
        return self.q_min + self.dq * np.arange(self.nq)

    @property
    def p(self) -> np.ndarray:
        return self.p_min + self.dp * np.arange(self.np_)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.q, self.p, indexing="ij")

    @property
    def kq(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.nq, d=self.dq)

    @property
    def kp(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.np_, d=self.dp)

    def describe(self) -> str:
        return (f"{self.nq}x{self.np_}[{self.q_min:g},{self.q_max:g}]"
                f"x[{self.p_min:g},{self.p_max:g}]")


@dataclass(frozen=True)
class ClassicalWavefunction:
    grid: PhaseSpaceGrid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", vals)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell)

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def boundary_max(self) -> float:
        v = np.abs(self.values)
        return float(max(v[0, :].max(), v[-1, :].max(), v[:, 0].max(), v[:, -1].max()))

    def check_tails(self, tol: float = TAIL_TOL) -> bool:
        ok = self.boundary_max() < tol
        if not ok:
            warnings.warn(
                f"|psi| reaches {self.boundary_max():.3e} on the domain boundary "
                f"at t={self.time:g}; periodic wraparound may corrupt results",
                BoundaryTailWarning, stacklevel=3)
        return ok

    def with_values(self, values, time=None) -> "ClassicalWavefunction":
        return ClassicalWavefunction(self.grid, values, self.time if time is None else time)

    def normalized(self) -> "ClassicalWavefunction":
        return self.with_values(self.values / math.sqrt(self.norm))


def gaussian_wavefunction(grid: PhaseSpaceGrid, q0: float = 0.0, p0: float = 0.0,
                          sigma_q: float = 1.0, sigma_p: float = 1.0,
                          phase: Optional[Callable] = None) -> ClassicalWavefunction:
    """psi ~ exp(-(q-q0)^2/4 sq^2 - (p-p0)^2/4 sp^2 + i phase(q, p)), normalized.

    The density |psi|^2 then has standard deviations sigma_q and sigma_p.
    """
    if not (sigma_q > 0 and sigma_p > 0):
        raise ValueError("widths must be positive")
    Qg, Pg = grid.mesh()
    amp = np.exp(-(Qg - q0) ** 2 / (4 * sigma_q**2) - (Pg - p0) ** 2 / (4 * sigma_p**2))
    vals = amp.astype(complex)
    if phase is not None:
        vals = vals * np.exp(1j * np.asarray(phase(Qg, Pg), dtype=float))
    psi = ClassicalWavefunction(grid, vals).normalized()
    psi.check_tails()
    return psi


def wavefunction_from_density(grid: PhaseSpaceGrid, rho0: Callable) -> ClassicalWavefunction:
    """psi = sqrt(rho0) sampled on the grid and normalized."""
    Qg, Pg = grid.mesh()
    rho = np.asarray(rho0(Qg, Pg), dtype=float)
    if np.any(rho < 0):
        raise ValueError("density must be non-negative")
    return ClassicalWavefunction(grid, np.sqrt(rho).astype(complex)).normalized()


@dataclass(frozen=True)
class SeparableClassicalHamiltonian:
    """H_cl(q, p) = T(p) + V(q)."""
    T: Poly
    V: Poly
    max_degree: int = 12

    def __post_init__(self):
        if not (self.T.is_classical and not self.T.uses("q")):
            raise ValueError("kinetic part T must depend on p only")
        if not (self.V.is_classical and not self.V.uses("p")):
            raise ValueError("potential part V must depend on q only")
        for name, poly in (("T", self.T), ("V", self.V)):
            if poly.degree > self.max_degree:
                raise ValueError(f"{name} exceeds the maximum degree {self.max_degree}")
            if any(isinstance(c, complex) for c in poly.terms.values()):
                raise ValueError(f"{name} must have real coefficients")

    @classmethod
    def from_poly(cls, H: Poly) -> "SeparableClassicalHamiltonian":
        T, V = {}, {}
        for (a, b, c, d), coef in H.terms.items():
            if c or d:
                raise ValueError("classical Hamiltonian cannot contain Q or P")
            if a and b:
                raise ValueError("non-separable term q^a p^b is not supported")
            (V if a else T)[(a, b, 0, 0)] = coef
        return cls(Poly(T), Poly(V))

    @classmethod
    def harmonic(cls, m: float = 1.0, omega: float = 1.0) -> "SeparableClassicalHamiltonian":
        q, p, _, _ = Poly.symbols()
        return cls(p**2 / (2 * m), m * omega**2 * q**2 / 2)

    @property
    def H(self) -> Poly:
        return self.T + self.V

    @property
    def dH_dq(self) -> Poly:
        return self.V.diff("q")

    @property
    def dH_dp(self) -> Poly:
        return self.T.diff("p")

    def __call__(self, q, p):
        return self.H(q, p)

    def characteristic_period(self) -> float:
        """2 pi / sqrt(T''(0) V''(0)) when positive, else 2 pi."""
        curv = float(self.T.diff("p").diff("p")(0.0, 0.0)) * float(
            self.V.diff("q").diff("q")(0.0, 0.0))
        return 2 * math.pi / math.sqrt(curv) if curv > 0 else 2 * math.pi


# ---------------------------------------------------------------------------
# spectral derivatives

def spectral_derivative(values: np.ndarray, grid: PhaseSpaceGrid, axis: int) -> np.ndarray:
    """d/dq (axis 0) or d/dp (axis 1); the Nyquist mode is dropped."""
    n = values.shape[axis]
    k = (grid.kq if axis == 0 else grid.kp).copy()
    k[n // 2] = 0.0
    shape = [1, 1]
    shape[axis] = n
    return sfft.ifft(1j * k.reshape(shape) * sfft.fft(values, axis=axis), axis=axis)


def liouville_apply(H_cl: SeparableClassicalHamiltonian,
                    psi: ClassicalWavefunction) -> np.ndarray:
    """L psi = i (dH/dq d psi/dp - dH/dp d psi/dq)."""
    Qg, Pg = psi.grid.mesh()
    out = np.zeros(psi.grid.shape, dtype=complex)
    if not H_cl.dH_dq.is_zero:
        out += H_cl.dH_dq(Qg, Pg) * spectral_derivative(psi.values, psi.grid, 1)
    if not H_cl.dH_dp.is_zero:
        out -= H_cl.dH_dp(Qg, Pg) * spectral_derivative(psi.values, psi.grid, 0)
    return 1j * out


# ---------------------------------------------------------------------------
# split-operator stepping

class _Stepper:
    """Precomputed phase factors for the two advection sub-flows."""

    def __init__(self, H_cl: SeparableClassicalHamiltonian, grid: PhaseSpaceGrid):
        self.grid = grid
        # q-advection with velocity T'(p): multiplier exp(-i kq T'(p) tau)
        self._kq_vel = np.outer(grid.kq, H_cl.dH_dp(np.zeros_like(grid.p), grid.p)
                                * np.ones(grid.np_))
        # p-advection with velocity -V'(q): multiplier exp(+i kp V'(q) tau)
        self._kp_force = np.outer(H_cl.dH_dq(grid.q, np.zeros_like(grid.q))
                                  * np.ones(grid.nq), grid.kp)
        self._drift = not H_cl.dH_dp.is_zero
        self._kick = not H_cl.dH_dq.is_zero
        self._cache = {}

    def _phase(self, which: str, tau: float) -> np.ndarray:
        key = (which, tau)
        if key not in self._cache:
            base = self._kq_vel if which == "drift" else self._kp_force
            sign = -1.0 if which == "drift" else 1.0
            self._cache[key] = np.exp(sign * 1j * tau * base)
        return self._cache[key]

    def drift(self, v: np.ndarray, tau: float) -> np.ndarray:
        if not self._drift or tau == 0:
            return v
        return sfft.ifft(self._phase("drift", tau) * sfft.fft(v, axis=0), axis=0)

    def kick(self, v: np.ndarray, tau: float) -> np.ndarray:
        if not self._kick or tau == 0:
            return v
        return sfft.ifft(self._phase("kick", tau) * sfft.fft(v, axis=1), axis=1)


def kvn_step(H_cl: SeparableClassicalHamiltonian, psi: ClassicalWavefunction,
             dt: float) -> ClassicalWavefunction:
    """One Strang step: half drift, full kick, half drift."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    st = _Stepper(H_cl, psi.grid)
    v = st.drift(psi.values, dt / 2)
    v = st.kick(v, dt)
    v = st.drift(v, dt / 2)
    return psi.with_values(v, psi.time + dt)


def _step_counts(t: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    n = int(round(t / dt))
    if not math.isclose(n * dt, t, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"t={t} is not an integer multiple of dt={dt}")
    return n


def kvn_trajectory(H_cl: SeparableClassicalHamiltonian, psi: ClassicalWavefunction,
                   t: float, dt: float, stride: int = 0
                   ) -> Iterator[ClassicalWavefunction]:
    """Yield the state every ``stride`` steps (and always the final one).

    Adjacent half drifts are fused, which equals repeated kvn_step to roundoff.
    """
    n = _step_counts(t, dt)
    st = _Stepper(H_cl, psi.grid)
    v = psi.values
    t0 = psi.time
    if stride:
        yield psi
    if n == 0:
        if not stride:
            yield psi
        return
    v = st.drift(v, dt / 2)
    for i in range(1, n + 1):
        v = st.kick(v, dt)
        emit = i == n or (stride and i % stride == 0)
        if emit:
            out = st.drift(v, dt / 2)
            yield psi.with_values(out, t0 + i * dt)
            if i < n:
                v = st.drift(out, dt / 2)
        else:
            v = st.drift(v, dt)


def kvn_evolve(H_cl: SeparableClassicalHamiltonian, psi: ClassicalWavefunction,
               t: float, dt: float, check_tails: bool = True) -> ClassicalWavefunction:
    final = psi
    for final in kvn_trajectory(H_cl, psi, t, dt):
        pass
    if check_tails:
        final.check_tails()
    return final


# ---------------------------------------------------------------------------
# characteristics and the transport oracle

def characteristics_flow(H_cl: SeparableClassicalHamiltonian, point, t: float,
                         max_step: Optional[float] = None):
    """Integrate dq/dt = dH/dp, dp/dt = -dH/dq with classic RK4.

    ``point`` may be a pair of scalars or a pair of equal-shape arrays (all
    points are integrated together). Negative ``t`` runs the flow backwards.
    """
    q0, p0 = point
    scalar = np.ndim(q0) == 0 and np.ndim(p0) == 0
    q_ = np.array(q0, dtype=float)
    p_ = np.array(p0, dtype=float)
    if t == 0:
        return (float(q_), float(p_)) if scalar else (q_, p_)
    if max_step is None:
        max_step = 1e-3 * H_cl.characteristic_period()
    n = max(1, math.ceil(abs(t) / max_step))
    h = t / n
    fq, fp = H_cl.dH_dp.compile(), H_cl.dH_dq.compile()

    def rhs(a, b):
        return fq(a, b), -fp(a, b)

    for _ in range(n):
        k1 = rhs(q_, p_)
        k2 = rhs(q_ + 0.5 * h * k1[0], p_ + 0.5 * h * k1[1])
        k3 = rhs(q_ + 0.5 * h * k2[0], p_ + 0.5 * h * k2[1])
        k4 = rhs(q_ + h * k3[0], p_ + h * k3[1])
        q_ = q_ + (h / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        p_ = p_ + (h / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return (float(q_), float(p_)) if scalar else (q_, p_)


def transport_density_oracle(H_cl: SeparableClassicalHamiltonian, rho0: Callable,
                             t: float, grid: PhaseSpaceGrid,
                             max_step: Optional[float] = None) -> np.ndarray:
    """rho(x, t) = rho0(Phi_{-t}(x)) sampled on the grid nodes."""
    Qg, Pg = grid.mesh()
    qb, pb = characteristics_flow(H_cl, (Qg, Pg), -t, max_step)
    return np.asarray(rho0(qb, pb), dtype=float)


def gaussian_density(q0: float, p0: float, sigma_q: float, sigma_p: float) -> Callable:
    """Normalized bivariate normal density, the exact |psi|^2 of gaussian_wavefunction."""
    norm = 1.0 / (2 * math.pi * sigma_q * sigma_p)

    def rho(qq, pp):
        return norm * np.exp(-(qq - q0) ** 2 / (2 * sigma_q**2)
                             - (pp - p0) ** 2 / (2 * sigma_p**2))
    return rho


def l2_distance(a: np.ndarray, b: np.ndarray, grid: PhaseSpaceGrid) -> float:
    """Continuum L2 norm of a - b, sum |a-b|^2 dq dp under a square root."""
    return float(math.sqrt(np.sum(np.abs(a - b) ** 2) * grid.cell))


def density_and_expectation(psi: ClassicalWavefunction, f: Poly) -> Tuple[np.ndarray, float]:
    if not f.is_classical:
        raise ValueError("observable must be a polynomial in q and p only")
    rho = psi.density
    Qg, Pg = psi.grid.mesh()
    fv = np.broadcast_to(f(Qg, Pg), rho.shape)
    return rho, float(np.sum(fv * rho) * psi.grid.cell)


def moments(psi: ClassicalWavefunction) -> dict:
    """Means and variances of q and p plus the norm."""
    q, p, _, _ = Poly.symbols()
    rho = psi.density
    cell = psi.grid.cell
    Qg, Pg = psi.grid.mesh()
    norm = float(np.sum(rho) * cell)
    qm = float(np.sum(Qg * rho) * cell)
    pm = float(np.sum(Pg * rho) * cell)
    return {
        "q_mean": qm,
        "p_mean": pm,
        "q_var": float(np.sum((Qg - qm) ** 2 * rho) * cell),
        "p_var": float(np.sum((Pg - pm) ** 2 * rho) * cell),
        "norm": norm,
    }


def phase_decoupling_error(H_cl: SeparableClassicalHamiltonian, psi0: ClassicalWavefunction,
                           theta: Callable, t: float, dt: float) -> float:
    """L2 distance between the evolved densities of psi0 and exp(i theta) psi0."""
    Qg, Pg = psi0.grid.mesh()
    twisted = psi0.with_values(psi0.values * np.exp(1j * np.asarray(theta(Qg, Pg), dtype=float)))
    a = kvn_evolve(H_cl, psi0, t, dt, check_tails=False)
    b = kvn_evolve(H_cl, twisted, t, dt, check_tails=False)
    return l2_distance(a.density, b.density, psi0.grid)


# ---------------------------------------------------------------------------
# snapshot files

_HEADER = struct.Struct("<qq6d")


def write_snapshot(path, psi: ClassicalWavefunction, hbar: float = 1.0) -> None:
    """Little-endian header (nq, np, q_min, q_max, p_min, p_max, time, hbar)
    followed by row-major interleaved re/im float64 values."""
    g = psi.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.nq, g.np_, g.q_min, g.q_max, g.p_min, g.p_max,
                              psi.time, hbar))
        fh.write(np.ascontiguousarray(psi.values, dtype="<c16").tobytes())


def read_snapshot(path) -> Tuple[ClassicalWavefunction, float]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    nq, np_, q0, q1, p0, p1, time, hbar = _HEADER.unpack_from(raw)
    grid = PhaseSpaceGrid(nq, np_, q0, q1, p0, p1)
    body = raw[_HEADER.size:]
    if len(body) != nq * np_ * 16:
        raise ValueError(f"{path}: expected {nq * np_ * 16} data bytes, found {len(body)}")
    vals = np.frombuffer(body, dtype="<c16").reshape(nq, np_).astype(complex)
    return ClassicalWavefunction(grid, vals, time), hbar
