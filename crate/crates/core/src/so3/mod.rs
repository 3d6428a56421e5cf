//! SO(3) representation machinery: real spherical harmonics, Wigner blocks,
//! Clebsch-Gordan coupling and spherical tensors.

pub mod cg;
pub mod rotation;
pub mod sh;
pub mod tensor;
pub mod wigner;

use rand::Rng;
use rand_distr::StandardNormal;

pub use cg::{cg_table, CgCache, CgTable};
pub use rotation::RotationMatrix;
pub use sh::{eval_real_sh, sh_index, sh_len, solid_harmonics};
pub use tensor::{rotate_tensor, tensor_product, IrrepLayout, SphericalTensor, TensorField};
pub use wigner::{wigner_block, wigner_blocks, WignerBlock};

/// Uniform direction on the unit sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-8 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}
