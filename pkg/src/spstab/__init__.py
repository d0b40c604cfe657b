"""Steady states and nonlinear stability diagnostics for the 1-D
Schrodinger-Poisson system with homogeneous Dirichlet walls.

The package solves the self-consistent steady problem by maximizing a
strictly concave dual functional, propagates mixed-state ensembles with a
conservative Crank-Nicolson scheme, and audits the energy-Casimir
stability bound along the resulting trajectories.
"""

from .eos import (EquationOfState, F_eval, F_many, Fstar_eval, boltzmann,
                  casimir_sum, f_eval, f_inverse, f_many, fermi_dirac,
                  fstar_many, power_cutoff, shifted, validate_casimir_class)
from .errors import (AuditError, ConfigError, DegenerateSpectrumError,
                     InfeasibleChargeError, NonConvergenceError,
                     NumericalError, QuadratureError, TruncationError)
from .evolution import (EnsembleState, EvolutionTrace, density, energy,
                        energy_casimir, ensemble_from_steady, evolve,
                        perturb, potential, step)
from .grid import (GridSpec, grad_norm_sq, inner, laplacian_apply, norm_l2,
                   poisson_solve)
from .spectral import (Hamiltonian, SpectralData, apply_hamiltonian,
                       eigensolve, kinetic_energy, trace_F, trace_f,
                       trace_tail)
from .stability import (StabilityReport, haar_unitary, jensen_check,
                        random_ensemble, run_stability_experiment,
                        stability_audit, trace_inequality_check)
from .steady import (DualPoint, SolverOptions, SteadyState, phi_eval,
                     phi_gradient, solve_fermi_level, solve_steady)

__version__ = "0.1.0"

__all__ = [
    "AuditError",
    "ConfigError",
    "DegenerateSpectrumError",
    "DualPoint",
    "EnsembleState",
    "EquationOfState",
    "EvolutionTrace",
    "F_eval",
    "F_many",
    "Fstar_eval",
    "GridSpec",
    "Hamiltonian",
    "InfeasibleChargeError",
    "NonConvergenceError",
    "NumericalError",
    "QuadratureError",
    "SolverOptions",
    "SpectralData",
    "StabilityReport",
    "SteadyState",
    "TruncationError",
    "apply_hamiltonian",
    "boltzmann",
    "casimir_sum",
    "density",
    "eigensolve",
    "energy",
    "energy_casimir",
    "ensemble_from_steady",
    "evolve",
    "f_eval",
    "f_inverse",
    "f_many",
    "fermi_dirac",
    "fstar_many",
    "grad_norm_sq",
    "haar_unitary",
    "inner",
    "jensen_check",
    "kinetic_energy",
    "laplacian_apply",
    "norm_l2",
    "perturb",
    "phi_eval",
    "phi_gradient",
    "poisson_solve",
    "potential",
    "power_cutoff",
    "random_ensemble",
    "run_stability_experiment",
    "shifted",
    "solve_fermi_level",
    "solve_steady",
    "stability_audit",
    "step",
    "trace_F",
    "trace_f",
    "trace_inequality_check",
    "trace_tail",
    "validate_casimir_class",
]
