//! n-variable means from k-variable means by barycentric power iteration.
//!
//! The [`engine`] module is generic over any [`engine::MetricSpace`]; the
//! remaining modules instantiate it on the positive reals ([`scalar`]) and on
//! symmetric positive-definite matrices under the Thompson metric
//! ([`linalg`], [`opmeans`], [`iterated`]). [`diagnostics`] holds the job
//! configuration, file formats and property audits driven by the CLI.

// `!(x <= t)` is used on purpose so that NaN counts as a failure
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod iterated;
pub mod linalg;
pub mod opmeans;
pub mod scalar;

pub use engine::{
    barycentric_step, barycentric_step_star, beta_extend, beta_invariance_residual, extend_tower,
    homomorphism_residual, power_converge, product_mean, stable_extension_residual, stable_reduce, tower_mean,
    ConvergeOptions, ConvergenceReport, MeanSpec, MetricSpace, ProductSpace, Variant,
};
pub use error::{LinalgError, MeanError, ReduceError};
