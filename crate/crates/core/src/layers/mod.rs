//! Network layers: radial nets, tensor-product convolution, norm gate and
//! the residual operator.

pub mod conv;
pub mod gate;
pub mod radial;
pub mod residual;

pub use conv::{ConvCache, ConvLayer, OpCount, Path, PathTable, TpMode};
pub use gate::{Gate, NormGate, ScalarActivation};
pub use radial::{RadialCache, RadialNet};
pub use residual::{ResidualCache, ResidualLayer};
