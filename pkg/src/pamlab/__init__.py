"""pamlab: a numerical laboratory for the parabolic Anderson model on the
hypercube with i.i.d. random potential.

The heat equation dv/dt = kappa * Laplacian v + xi v on {-1,+1}^n is studied
through four cooperating toolboxes: matrix-free operator application
(`hypercube`), random potential fields and their extreme-value structure
(`potential`), principal eigenpairs of restricted operators (`spectral`),
overflow-safe time evolution (`evolution`), a Feynman-Kac Monte Carlo oracle
(`fkmc`), and an experiment harness with a CLI (`harness`, `cli`).
"""

from .hypercube import (
    HamiltonianOperator,
    dense_hamiltonian,
    hamiltonian_apply,
    hamming,
    laplacian_apply,
    neighbors,
)
from .potential import (
    AssumptionLReport,
    LevelSetGeometry,
    PotentialField,
    TailModel,
    TieError,
    check_assumption_L,
    gap_limit,
    level_set_geometry,
    omega_delta,
    psi_rem,
    sample_coupled,
    sample_rem,
)
from .spectral import (
    EigenBoundReport,
    EigenfunctionProfile,
    NonConvergenceError,
    PerronViolationError,
    SpectralResult,
    dense_oracle,
    eigen_bound_check,
    eigenfunction_profile,
    principal_eig,
    principal_eig_raw,
    spectral_gap,
    spectral_gap_raw,
)
from .evolution import (
    EvolutionState,
    GrowthRecord,
    NegativityError,
    StiffnessError,
    growth_exponent,
    mutation_selection,
    propagate,
    solve_flat,
    solve_from_delta,
)
from .fkmc import (
    MCEstimate,
    WalkPath,
    estimate_eigenfunction,
    estimate_endpoint,
    estimate_total_mass,
    simulate_walk,
)
from .harness import (
    ExperimentConfig,
    LocalizationRow,
    SweepRow,
    run_lemma_checks,
    run_localization_sweep,
    run_phase_sweep,
)

__version__ = "0.1.0"
