//! Brute-force and enumeration oracles, independent of the production
//! paths they check.

mod density;
mod enumeration;
mod grid;
pub mod verify;

pub use density::density_loss_oracle;
pub use enumeration::{
    conditional_fisher_identity, cramer_rao_check, cyclic_rule, mle_estimator, scheme_rule,
    single_axis_estimator, true_false_counterexample, true_false_rule, CramerRao,
    EnumeratedDesign, History, Moments, OracleError, Probe, SequenceEntry, TrueFalseReport,
    MAX_ENUMERATED_TRIALS, SINGULAR_FISHER,
};
pub use grid::{direct_objective, grid_objective_min, SphereGrid};
