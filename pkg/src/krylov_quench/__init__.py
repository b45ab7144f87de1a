"""Krylov-space analysis of quench dynamics in the Lipkin-Meshkov-Glick model."""
__version__ = "0.1.0"

from .spin_model import (Basis, ModelParams, StateVector, build_hamiltonian_x,
                         build_hamiltonian_z, classify_phase, ground_state, initial_state,
                         spin_expectations, spinodal_g)
from .krylov import (KrylovDecomposition, TridiagonalHamiltonian, appendix_check,
                     domain_structure, dos_estimate, lanczos, slope_check, spectrum_bounds)
from .propagator import (ObservableSeries, complexity, eigendecompose, entropy, evolve_direct,
                         evolve_krylov, rate_function, simulate, time_average)
from .analysis import (detect_dqpt, exact_rate_g0, g0_convergence, krylov_dimension,
                       metastability_report, sweep)

__all__ = [
    "Basis", "ModelParams", "StateVector", "build_hamiltonian_x", "build_hamiltonian_z",
    "classify_phase", "ground_state", "initial_state", "spin_expectations", "spinodal_g",
    "KrylovDecomposition", "TridiagonalHamiltonian", "appendix_check", "domain_structure",
    "dos_estimate", "lanczos", "slope_check", "spectrum_bounds", "ObservableSeries",
    "complexity", "eigendecompose", "entropy", "evolve_direct", "evolve_krylov",
    "rate_function", "simulate", "time_average", "detect_dqpt", "exact_rate_g0",
    "g0_convergence", "krylov_dimension", "metastability_report", "sweep",
]
