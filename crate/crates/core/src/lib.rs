//! Rate and fidelity model for entanglement distribution through a chain of
//! satellites carrying multimode atomic memories.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod chain;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod link_budget;
pub mod monte_carlo;
pub mod numerics;
pub mod quantum_model;
pub mod rate_model;
pub mod scenario;
