"""Numerical laboratory for doubled phase-space (QMFS) and Koopman-von Neumann dynamics."""
from .polynomial import Poly, P, Q, p, q
from .gaussian_dynamics import (
    CanonicalLayout, CanonicalTransform, GaussianState, QuadraticHamiltonian,
    bare_layout, back_action_deviation, evolve_gaussian, measure_variable,
    oscillator_pair_hamiltonian, qmfs_hamiltonian, qmfs_layout, qmfs_transform,
)
from .kvn_propagator import (
    BoundaryTailWarning, ClassicalWavefunction, PhaseSpaceGrid, SeparableClassicalHamiltonian,
    gaussian_wavefunction, kvn_evolve, kvn_step, read_snapshot, write_snapshot,
)
from .sudarshan_doubling import (
    DoubledHamiltonian, NotClassicalObservable, UnsupportedOperator, apply_hidden_operator,
    evolve_doubled, sudarshan_hamiltonian,
)
from .perturbation_lab import (
    FockPairState, PerturbationSpec, TruncationError, coherent_pair_state,
    deformation_violation, fock_energy, stabilizer_deviation,
)

__version__ = "0.1.0"
