//! Weighted transforms that remove the drift from divergence-form elliptic
//! operators, together with the P1 finite element machinery used to build and
//! check them numerically.

pub mod assembly;
pub mod certify;
pub mod coeff;
pub mod config;
pub mod constants;
pub mod divsolve;
pub mod error;
pub mod estimates;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod transform;

pub use error::{Error, Result};
