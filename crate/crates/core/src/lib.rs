//! Linear Rayleigh-Taylor instability of a viscous, capillary, stratified fluid
//! in a horizontally periodic slab: characteristic values, normal modes,
//! evolution and nonlinear-instability planning.

pub mod dispersion;
pub mod error;
pub mod evolution;
pub mod instability;
pub mod linalg;
pub mod mesh;
pub mod modes;
pub mod profile;
pub mod spectrum;

pub use error::{Error, Result};
pub use profile::{
    characteristic_length, lambda_upper_bound, make_profile, CharacteristicLength, DensityProfile,
    PhysicalParams, ProfileKind,
};
pub use dispersion::{
    dispersion_curve, solve_lambda_j, solve_lambdas, unstable_set, CharacteristicValue, DispersionRow,
    FixedPointOptions, UnstableSet, WaveVector,
};
pub use evolution::{assemble_evolution, measure_growth, sharp_rate_check, trajectory, EvolutionOperators, ModeState};
pub use instability::{build_plan, InstabilityPlan, ModeCombination, ModeProfile};
pub use mesh::{build_mesh, Constraint, Mesh};
pub use modes::{reconstruct_mode, ModeDocument, NormalMode, Provenance};
pub use spectrum::{gamma_spectrum, sigma_critical, sigma_critical_k, OperatorBlocks};
