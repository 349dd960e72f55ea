//! Shared fixtures for the solver benchmarks.

use qtm_core::integral_equations::{dressed_suite, DressedSuite};
use qtm_core::{validate_params, ModelParams, RawParams};

/// ζ = 1.3, J = 1, h = 2 at temperature `t`.
pub fn params(t: f64, trotter_n: Option<i64>) -> ModelParams {
    validate_params(&RawParams { j: 1.0, zeta: 1.3, h: 2.0, t, trotter_n, m: None, c_d: None })
        .expect("benchmark parameters are in range")
}

pub fn suite(order: usize) -> DressedSuite {
    dressed_suite(&params(0.1, None), order).expect("dressed suite")
}
