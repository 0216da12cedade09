//! Standalone numerical checks of the supporting inequalities: parameter
//! arithmetic, anti-concentration of quadratic forms, trace-norm bounds and
//! the quantum-only memory bound.

pub mod anticoncentration;
pub mod dependency;
pub mod inequalities;
pub mod params;

pub use anticoncentration::{anticoncentration_estimate, calibrate_constant, closed_form_qubit, AntiConcentration, CALIBRATED_C};
pub use dependency::{
    entropies, extractor_strength, lemma_c1_check, mutual_information, random_cq_state, theorem_c_bound_check, xi_dependency,
    xi_qubit_grid, Dependency, ExtractorStrength, GridOracle, InformationCheck, SuccessBound,
};
pub use inequalities::{fvdg_variant_check, projection_distance_check, Check};
pub use params::{parameter_check, parse_rational, ParameterReport, ParameterSet};
