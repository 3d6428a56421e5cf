//! Wigner D-matrices for the real harmonic basis.
//!
//! `D^ℓ(R)` satisfies `Y_ℓ(R r̂) = D^ℓ(R) Y_ℓ(r̂)`, hence `D(R₁R₂) = D(R₁)D(R₂)`
//! and `Y_ℓ(R⁻¹ r̂) = D^ℓ(R)ᵀ Y_ℓ(r̂)`. Blocks are built upward from the ℓ=1
//! block by recoupling `D^{ℓ-1} ⊗ D^1 → D^ℓ`, no Euler angles involved.

use nalgebra::DMatrix;

use super::cg::cg_table;
use super::rotation::RotationMatrix;

/// One orthogonal `(2ℓ+1) × (2ℓ+1)` block.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerBlock {
    pub degree: usize,
    pub d: DMatrix<f64>,
}

impl WignerBlock {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = 2 * self.degree + 1;
        debug_assert_eq!(v.len(), n);
        (0..n)
            .map(|i| (0..n).map(|j| self.d[(i, j)] * v[j]).sum())
            .collect()
    }
}

pub fn wigner_block(l: usize, r: &RotationMatrix) -> WignerBlock {
    wigner_blocks(l, r).pop().expect("at least one block")
}

/// Blocks for every degree `0..=lmax`.
pub fn wigner_blocks(lmax: usize, r: &RotationMatrix) -> Vec<WignerBlock> {
    let mut blocks = Vec::with_capacity(lmax + 1);
    blocks.push(WignerBlock {
        degree: 0,
        d: DMatrix::from_element(1, 1, 1.0),
    });
    if lmax == 0 {
        return blocks;
    }
    // ℓ=1 components are ordered (y, z, x).
    let perm = [1usize, 2, 0];
    let m = r.matrix();
    let d1 = DMatrix::from_fn(3, 3, |a, b| m[(perm[a], perm[b])]);
    blocks.push(WignerBlock {
        degree: 1,
        d: d1.clone(),
    });

    for l in 2..=lmax {
        let q = DMatrix::from_row_slice(
            2 * l + 1,
            3 * (2 * l - 1),
            &cg_table(l - 1, 1, l).expect("triangle").to_dense(),
        );
        let prev = &blocks[l - 1].d;
        let kron = prev.kronecker(&d1);
        let d = &q * kron * q.transpose();
        blocks.push(WignerBlock { degree: l, d });
    }
    blocks
}
