//! The nonlinear limit on a uniform 1-D grid: invariant measures, functionals
//! and the McKean–Vlasov evolution.

mod chaos;
mod finite_n;
mod fixed_point;
mod functionals;
mod grid;
mod pde;

pub use chaos::{
    chaos_check, chaos_replica, chaos_row_from_samples, pde_solution, replica_key, replicas_for, ChaosOptions, ChaosRow, ChaosTable,
};
pub use finite_n::{
    finite_n_entropy_check, finite_n_fisher_check, fisher_gap_decreasing, Density1d, EntropyCheck, FisherCheck, FisherCheckOptions,
};
pub use fixed_point::{find_fixed_points, solve_invariant, InvariantOptions, InvariantSolution, IterationRecord, FACTOR_STEP_FLOOR};
pub use functionals::{
    fisher_information, free_energy, interaction_energy, mean_field_entropy, relative_entropy, wasserstein1_1d, wasserstein2_1d,
    FisherInformation, DENSITY_FLOOR,
};
pub use pde::{evolve_and_trace, mckv_step, DecayTrace, EvolveOptions, RateFit, TracePoint, CHECK_FLOOR, MASS_TOLERANCE};
pub use grid::{
    convolve_density, effective_potential, interaction_convolution, phi_map, potential_on_grid, reference_measure, Convolution, Grid,
    GridMeasure, InverseCdf, BOUNDARY_MASS_LIMIT,
};
