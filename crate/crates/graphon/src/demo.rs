//! The full set of spatial/spectral equivalence checks as one report.

use serde::{Deserialize, Serialize};

use crate::kernel::GraphonKernel;
use crate::operator::{
    apply_operator, chebyshev_filter, coefficient_convolution_check, nystrom_eigs, power_apply,
    spectral_filter,
};
use crate::quadrature::QuadratureGrid;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            passed: value < tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub kernel: String,
    pub k: usize,
    pub numeric: f64,
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub nodes: usize,
    pub checks: Vec<Check>,
    pub decay: Vec<DecayRow>,
}

impl DemoReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn decay_csv(&self) -> String {
        let mut s = String::from("kernel,k,numeric,exact\n");
        for r in &self.decay {
            let exact = r.exact.map_or(String::new(), |v| format!("{v:.16e}"));
            s.push_str(&format!(
                "{},{},{:.16e},{}\n",
                r.kernel, r.k, r.numeric, exact
            ));
        }
        s
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest absolute error of the first `k` Nyström eigenvalues against the
/// closed-form ones.
pub fn eigenvalue_error(kernel: &GraphonKernel, nodes: usize, k: usize) -> Result<f64> {
    let grid = QuadratureGrid::midpoint(kernel.dim, nodes)?;
    let d = nystrom_eigs(kernel, &grid, k)?;
    let exact = kernel.eigenpairs.as_ref().expect("closed-form kernel");
    Ok(d.values
        .iter()
        .zip(exact)
        .map(|(a, e)| (a - e.value).abs())
        .fold(0.0, f64::max))
}

pub fn run_demo(nodes: usize) -> Result<DemoReport> {
    let grid = QuadratureGrid::midpoint(1, nodes)?;
    let f = grid.sample(|x| (-(x[0] - 0.3).powi(2) * 8.0).exp() + 0.5 * x[0]);
    let rank3 = GraphonKernel::fourier_rank3(1, [0.5, 0.2, 0.1]);
    let full = nystrom_eigs(&rank3, &grid, nodes)?;
    let mut checks = Vec::new();

    let (t1, t2) = (0.7, -1.3);
    let cheb = chebyshev_filter(&rank3, &f, t1, t2, &grid)?;
    let spec = spectral_filter(&full, |l| t1 + t2 * l, &f)?;
    checks.push(Check::new(
        "chebyshev_vs_spectral",
        max_abs_diff(&cheb, &spec),
        1e-8,
    ));

    let p2 = power_apply(&rank3, &f, 2, &grid)?;
    let s2 = spectral_filter(&full, |l| l * l, &f)?;
    checks.push(Check::new(
        "power2_vs_spectral_square",
        max_abs_diff(&p2, &s2),
        1e-8,
    ));

    let tf = apply_operator(&rank3, &f, &grid)?;
    let s1 = spectral_filter(&full, |l| l, &f)?;
    checks.push(Check::new(
        "apply_vs_spectral_identity",
        max_abs_diff(&tf, &s1),
        1e-8,
    ));

    let tail = full.values[3..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    checks.push(Check::new("rank3_tail_eigenvalues", tail, 1e-8));
    checks.push(Check::new(
        "rank3_orthonormality",
        nystrom_eigs(&rank3, &grid, 3)?.orthonormality_error(),
        1e-8,
    ));

    let g = grid.sample(|x| (5.0 * x[0]).cos());
    let min = GraphonKernel::min_kernel(8);
    let tg = apply_operator(&min, &g, &grid)?;
    let tf_min = apply_operator(&min, &f, &grid)?;
    checks.push(Check::new(
        "self_adjoint",
        (grid.inner(&tf_min, &g) - grid.inner(&f, &tg)).abs(),
        1e-10,
    ));

    let mut decay = Vec::new();
    for kernel in [
        GraphonKernel::min_kernel(8),
        GraphonKernel::brownian_bridge(8),
    ] {
        let err = eigenvalue_error(&kernel, 256, 5)?;
        checks.push(Check::new(
            &format!("nystrom_{}_256", kernel.name),
            err,
            1e-4,
        ));
        let d = nystrom_eigs(&kernel, &grid, 8)?;
        let exact = kernel.eigenpairs.clone().unwrap_or_default();
        for (k, v) in d.values.iter().enumerate() {
            decay.push(DecayRow {
                kernel: kernel.name.clone(),
                k: k + 1,
                numeric: *v,
                exact: exact.get(k).map(|e| e.value),
            });
        }
    }
    let gauss = GraphonKernel::gaussian(1, 0.2);
    for (k, v) in nystrom_eigs(&gauss, &grid, 12)?.values.iter().enumerate() {
        decay.push(DecayRow {
            kernel: gauss.name.clone(),
            k: k + 1,
            numeric: *v,
            exact: None,
        });
    }

    let pairs = rank3.eigenpairs.clone().unwrap_or_default();
    let m = coefficient_convolution_check(&pairs, &[0.0], &grid)?;
    let mut diag_err: f64 = 0.0;
    for i in 0..pairs.len() {
        for j in 0..pairs.len() {
            let target = if i == j { pairs[i].value } else { 0.0 };
            diag_err = diag_err.max((m[(i, j)] - target).abs());
        }
    }
    checks.push(Check::new(
        "coefficient_convolution_diagonal",
        diag_err,
        1e-8,
    ));

    Ok(DemoReport {
        nodes,
        checks,
        decay,
    })
}
