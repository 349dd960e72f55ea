pub mod bethe_check;
pub mod contours;
pub mod core_types;
pub mod error;
pub mod excitations;
pub mod integral_equations;
pub mod nlie;
pub mod observables;
pub mod quadrature;
pub mod special_functions;

pub use core_types::*;
pub use error::{QtmError, Result};

#[cfg(test)]
pub(crate) mod test_support {
    use crate::core_types::{validate_params, ModelParams, RawParams};

    pub fn params(zeta: f64, h: f64) -> ModelParams {
        validate_params(&RawParams { j: 1.0, zeta, h, t: 0.1, trotter_n: None, m: None, c_d: None }).unwrap()
    }
}
