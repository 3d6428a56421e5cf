use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{Eigenpair, GraphonKernel};
use crate::quadrature::QuadratureGrid;
use crate::{Error, Result};

/// Relative asymmetry tolerated in an assembled kernel matrix.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// `K_ij = W(x_i, x_j)`, rows assembled in parallel.
pub fn kernel_matrix(w: &GraphonKernel, grid: &QuadratureGrid) -> Result<DMatrix<f64>> {
    if w.dim != grid.dim {
        return Err(Error::Domain(format!(
            "kernel on dimension {} applied to a {}-d grid",
            w.dim, grid.dim
        )));
    }
    let n = grid.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| w.eval(grid.node(i), grid.node(j))).collect())
        .collect();
    let k = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (k[(i, j)], k[(j, i)]);
            if (a - b).abs() > SYMMETRY_TOLERANCE * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::Domain(format!(
                    "kernel {} is not symmetric at nodes ({i}, {j})",
                    w.name
                )));
            }
        }
    }
    Ok(k)
}

fn check_len(f: &[f64], grid: &QuadratureGrid) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::Domain(format!(
            "{} samples on a grid of {}",
            f.len(),
            grid.len()
        )));
    }
    Ok(())
}

fn apply_matrix(k: &DMatrix<f64>, f: &[f64], grid: &QuadratureGrid) -> Vec<f64> {
    let wf: Vec<f64> = f.iter().zip(&grid.weights).map(|(a, w)| a * w).collect();
    (0..k.nrows())
        .map(|i| k.row(i).iter().zip(&wf).map(|(a, b)| a * b).sum())
        .collect()
}

/// `(T_W f)(x_i) = Σ_j w_j W(x_i, x_j) f(x_j)`
pub fn apply_operator(w: &GraphonKernel, f: &[f64], grid: &QuadratureGrid) -> Result<Vec<f64>> {
    check_len(f, grid)?;
    let k = kernel_matrix(w, grid)?;
    Ok(apply_matrix(&k, f, grid))
}

/// `T_W^n f`, with `T_W⁰ = I`.
pub fn power_apply(
    w: &GraphonKernel,
    f: &[f64],
    n: usize,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    check_len(f, grid)?;
    let mut out = f.to_vec();
    if n == 0 {
        return Ok(out);
    }
    let k = kernel_matrix(w, grid)?;
    for _ in 0..n {
        out = apply_matrix(&k, &out, grid);
    }
    Ok(out)
}

/// Eigenpairs of the discretized operator. Eigenfunctions are sampled on
/// the grid and orthonormal under the quadrature inner product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecomposition {
    /// Sorted by decreasing magnitude.
    pub values: Vec<f64>,
    /// `grid.len() × values.len()`.
    pub functions: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn function(&self, k: usize) -> Vec<f64> {
        self.functions.column(k).iter().copied().collect()
    }

    /// `max |⟨φ_k, φ_l⟩ - δ_kl|`
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..=a {
                let ip: f64 = (0..self.functions.nrows())
                    .map(|i| self.weights[i] * self.functions[(i, a)] * self.functions[(i, b)])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }
}

/// Top-`k` eigenpairs of `diag(√w) K diag(√w)`, mapped back to function
/// samples by `φ = v / √w`.
pub fn nystrom_eigs(
    w: &GraphonKernel,
    grid: &QuadratureGrid,
    k: usize,
) -> Result<SpectralDecomposition> {
    let n = grid.len();
    if k > n {
        return Err(Error::Domain(format!(
            "requested {k} eigenpairs from a grid of {n} nodes"
        )));
    }
    let km = kernel_matrix(w, grid)?;
    let sw: Vec<f64> = grid.weights.iter().map(|v| v.sqrt()).collect();
    let b = DMatrix::from_fn(n, n, |i, j| sw[i] * km[(i, j)] * sw[j]);
    let b = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| {
        eig.eigenvalues[c]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
    });
    order.truncate(k);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let functions = DMatrix::from_fn(n, k, |i, c| eig.eigenvectors[(i, order[c])] / sw[i]);
    Ok(SpectralDecomposition {
        values,
        functions,
        weights: grid.weights.clone(),
    })
}

/// `Σ_k F(λ_k) ⟨φ_k, f⟩ φ_k`
pub fn spectral_filter(
    decomp: &SpectralDecomposition,
    transform: impl Fn(f64) -> f64,
    f: &[f64],
) -> Result<Vec<f64>> {
    let n = decomp.functions.nrows();
    if f.len() != n {
        return Err(Error::Domain(format!(
            "{} samples for a decomposition on {n} nodes",
            f.len()
        )));
    }
    let mut out = vec![0.0; n];
    for (k, &lambda) in decomp.values.iter().enumerate() {
        let col = decomp.functions.column(k);
        let coeff: f64 = (0..n).map(|i| decomp.weights[i] * col[i] * f[i]).sum();
        let s = transform(lambda) * coeff;
        for i in 0..n {
            out[i] += s * col[i];
        }
    }
    Ok(out)
}

/// `θ₁ f + θ₂ T_W f`
pub fn chebyshev_filter(
    w: &GraphonKernel,
    f: &[f64],
    theta1: f64,
    theta2: f64,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    let tf = apply_operator(w, f, grid)?;
    Ok(f.iter()
        .zip(tf)
        .map(|(a, b)| theta1 * a + theta2 * b)
        .collect())
}

/// `W_ij = λ_j ∫_D φ_i(x) φ_j(x - r) dx`, with each `φ` extended by zero
/// outside `D`, evaluated on `grid`.
pub fn coefficient_convolution_check(
    pairs: &[Eigenpair],
    r: &[f64],
    grid: &QuadratureGrid,
) -> Result<DMatrix<f64>> {
    if r.len() != grid.dim {
        return Err(Error::Domain(
            "displacement dimension differs from the grid".into(),
        ));
    }
    let n = pairs.len();
    let mut m = DMatrix::zeros(n, n);
    let mut shifted = vec![0.0; grid.dim];
    for q in 0..grid.len() {
        let x = grid.node(q);
        for d in 0..grid.dim {
            shifted[d] = x[d] - r[d];
        }
        if shifted.iter().any(|s| !(0.0..=1.0).contains(s)) {
            continue;
        }
        let a: Vec<f64> = pairs.iter().map(|p| (p.function)(x)).collect();
        let b: Vec<f64> = pairs.iter().map(|p| (p.function)(&shifted)).collect();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += grid.weights[q] * a[i] * b[j];
            }
        }
    }
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] *= pairs[j].value;
        }
    }
    Ok(m)
}
