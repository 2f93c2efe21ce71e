//! Numerical checks of a Liouville-type criterion for
//! `L = ½ Σ q_ij D_ij + Σ b_i D_i`: drift dispersion and the resulting
//! threshold test, Dini modulus and escape integral, reflection-coupling
//! simulation, and exact harmonic functions in one dimension.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficients;
pub mod config;
pub mod coupling;
pub mod criterion;
pub mod error;
pub mod expr;
pub mod harmonic;
pub mod matrix;
pub mod quadrature;
pub mod report;
pub mod rng;

pub use coefficients::{
    catalogue, estimate_ellipticity, field_from_expressions, make_log_example, make_standard_fields,
    CoefficientField, EllipticityBounds, FieldSpec,
};
pub use config::RunConfig;
pub use coupling::{coupled_step, martingale_check, simulate_coupling, space_time_residual, CouplingConfig, CouplingStats};
pub use criterion::{evaluate_liouville_criterion, CriterionConfig, CriterionReport, Verdict};
pub use error::{Error, Result};
pub use harmonic::{harmonic_1d, liouville_verdict_1d, oscillation_bound, HarmonicProfile};
pub use report::{emit, run, Consistency, VerdictBundle};
