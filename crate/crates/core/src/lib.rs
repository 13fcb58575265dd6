//! Numerical experiments for backward parabolic equations with coefficients
//! that are only log-Lipschitz in time: dyadic decompositions, paraproducts,
//! weighted energy estimates and conditional-stability reconstruction.

pub mod coefficients;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod fmt;
pub mod ledger;
pub mod littlewood_paley;
pub mod paraproduct;
pub mod probes;
pub mod quadrature;
pub mod reconstruction;
pub mod spectral;
pub mod weights;

pub use error::{Error, Result};
