//! Desk-scale laboratory for noise-injected group-relative policy
//! optimization. The crate covers the full loop: a synthetic grounded-QA
//! environment, forward-diffusion observation noising, rule-based rewards,
//! Bayesian advantage estimation, the clipped-surrogate objective with its
//! exact gradient, a small trainer, and statistical diagnostics for the
//! noise-estimation residuals.

pub mod advantage;
pub mod diagnostics;
pub mod error;
pub mod group_stats;
pub mod noise;
pub mod reward;
pub mod surrogate;
pub mod toyenv;
pub mod trainer;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits so a round-trip through text
/// reproduces the exact bit pattern.
pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}
