"""Particle in a driven, lossy cavity lattice: band structure, mean-field
branches and stability, and quantum trajectories."""

from ._core import (
    BandCache,
    BandSummary,
    Branch,
    ConvergenceError,
    DomainError,
    EnsembleStats,
    Geometry,
    HeatingCheck,
    LatticeProblem,
    Params,
    StabilityReport,
    TrajectoryConfig,
    TrajectoryRecord,
    band_summary,
    bloch_energies,
    bunching_parameter,
    derive_seed,
    field_steady_state,
    harmonic_bunching,
    heating_condition,
    integrate_master_equation,
    run_ensemble,
    run_trajectory,
    solve_harmonic,
    solve_wannier,
    stability,
    window_average,
)

__all__ = [name for name in dir() if not name.startswith("_")]
