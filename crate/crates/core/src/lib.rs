//! Branching Brownian motion with critical drift −√2.
//!
//! The crate builds the fixed-point point processes of the critical BBM flow,
//! evolves point configurations under that flow, solves the associated FKPP
//! equation in the √2-traveling frame and runs Monte Carlo invariance
//! experiments against those deterministic oracles.
//!
//! Modules:
//! - [`point_process`]: truncated point configurations, step functions, PPP samplers.
//! - [`bbm_engine`]: event-driven BBM with barrier pruning.
//! - [`extremal_sampler`]: conditioned decorations and the decorated PPP `Ē∞`.
//! - [`fkpp`]: FKPP solver, traveling waves, `C(f)`, `C_M`, Bramson's ψ.
//! - [`invariance_lab`]: Laplace-functional estimates and invariance tests.
//! - [`verify`]: the acceptance criteria as runnable checks.

// `!(x > 0.0)` deliberately rejects NaN alongside non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bbm_engine;
pub mod error;
pub mod extremal_sampler;
pub mod fkpp;
pub mod invariance_lab;
pub mod point_process;
pub mod seeds;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};

/// √2, the critical speed.
pub const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Front centering `m(t) = √2 t − (3/(2√2)) log₊ t`.
pub fn m_of_t(t: f64) -> f64 {
    SQRT2 * t - 1.5 / SQRT2 * t.max(1.0).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centering_values() {
        assert_eq!(m_of_t(1.0), SQRT2);
        assert!((m_of_t(std::f64::consts::E.powi(2)) - 8.32838).abs() < 1e-5);
        assert_eq!(m_of_t(0.5), SQRT2 * 0.5);
    }
}
