//! Adaptive A-optimal measurement design for single-qubit state estimation.

pub mod cli;
pub mod designs;
pub mod estimator;
pub mod fisher;
pub mod linalg3;
pub mod measurement;
pub mod montecarlo;
pub mod oracles;
pub mod states;
