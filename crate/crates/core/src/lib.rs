//! Equivariant neural operator for scalar fields on R³.
//!
//! Atom-centred Gaussian-type basis functions carry spherical-tensor
//! coefficients that are refined by tensor-product message passing; a
//! residual operator adds an invariant correction at each query point.

pub mod basis;
pub mod checks;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod grad;
pub mod io;
pub mod layers;
pub mod model;
pub mod quadrature;
pub mod so3;

pub use error::{Error, Result};
