//! Integral operators `(T_W f)(x) = ∫ W(x, y) f(y) dy` on `[0,1]` and
//! `[0,1]²`: quadrature application, powers, Nyström eigenpairs, spectral
//! filters and the first-order Chebyshev filter.

pub mod demo;
pub mod kernel;
pub mod operator;
pub mod quadrature;

pub use demo::{run_demo, DemoReport};
pub use kernel::{Eigenpair, GraphonKernel};
pub use operator::{
    apply_operator, chebyshev_filter, coefficient_convolution_check, kernel_matrix, nystrom_eigs,
    power_apply, spectral_filter, SpectralDecomposition,
};
pub use quadrature::QuadratureGrid;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
