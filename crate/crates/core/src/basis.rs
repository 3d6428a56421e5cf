//! Atom-centred Gaussian-type basis `ψ_{nℓm}(r) = c_{nℓ} e^{-a_n r²} r^ℓ Y_ℓ^m(r̂)`.
//!
//! Basis values for one centre are laid out like node features
//! (`IrrepLayout::uniform(L, n)`): degree-major, then radial index, then order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::sh::{sh_len, solid_harmonics_into};
use crate::so3::{IrrepLayout, TensorField};

pub type CoefficientField = TensorField;

/// How characteristic radii are spread between `r_min` and `r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Geometric,
}

/// Exponents `a_k = 1/(2 r_k²)` for radii `r_k` spread over `[r_min, r_max]`.
pub fn make_exponents(r_min: f64, r_max: f64, n: usize, spacing: Spacing) -> Result<Vec<f64>> {
    if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) || n < 2 {
        return Err(Error::domain(format!(
            "need 0 < r_min < r_max and n ≥ 2 (got r_min={r_min}, r_max={r_max}, n={n})"
        )));
    }
    let last = (n - 1) as f64;
    let radii = (0..n).map(|k| {
        let t = k as f64 / last;
        match spacing {
            Spacing::Linear => r_min + t * (r_max - r_min),
            Spacing::Geometric => r_min * (r_max / r_min).powf(t),
        }
    });
    Ok(radii.map(|r| 1.0 / (2.0 * r * r)).collect())
}

/// `c = sqrt(2 (2a)^{ℓ+3/2} / Γ(ℓ+3/2))`, so that `∫|ψ|² dV = 1`.
pub fn normalization_constant(a: f64, l: usize) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::domain(format!("exponent must be positive, got {a}")));
    }
    let power = l as f64 + 1.5;
    Ok((2.0 * (2.0 * a).powf(power) / gamma_half_integer(l)).sqrt())
}

/// `Γ(ℓ + 3/2) = (2ℓ+1)!! √π / 2^{ℓ+1}`
fn gamma_half_integer(l: usize) -> f64 {
    let mut g = std::f64::consts::PI.sqrt() / 2.0;
    for t in 1..=l {
        g *= t as f64 + 0.5;
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialBasisSpec {
    pub exponents: Vec<f64>,
    pub max_degree: usize,
}

impl RadialBasisSpec {
    pub fn new(exponents: Vec<f64>, max_degree: usize) -> Result<Self> {
        if exponents.is_empty() {
            return Err(Error::domain("basis needs at least one exponent"));
        }
        if exponents.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::domain("exponents must be finite and positive"));
        }
        let increasing = exponents.windows(2).all(|w| w[1] > w[0]);
        let decreasing = exponents.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::domain("exponents must be strictly monotone"));
        }
        Ok(Self {
            exponents,
            max_degree,
        })
    }

    /// 16 exponents over 0.5–5.0 Bohr, degrees up to 7.
    pub fn standard() -> Self {
        Self::new(
            make_exponents(0.5, 5.0, 16, Spacing::Linear).expect("valid range"),
            7,
        )
        .expect("valid spec")
    }

    pub fn count(&self) -> usize {
        self.exponents.len()
    }
}

/// Basis with precomputed normalization constants `c[n][ℓ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    spec: RadialBasisSpec,
    norms: Vec<Vec<f64>>,
    layout: IrrepLayout,
}

impl BasisSet {
    pub fn new(spec: RadialBasisSpec) -> Result<Self> {
        let norms = spec
            .exponents
            .iter()
            .map(|&a| {
                (0..=spec.max_degree)
                    .map(|l| normalization_constant(a, l))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let layout = IrrepLayout::uniform(spec.max_degree, spec.count());
        Ok(Self {
            spec,
            norms,
            layout,
        })
    }

    pub fn spec(&self) -> &RadialBasisSpec {
        &self.spec
    }

    pub fn layout(&self) -> &IrrepLayout {
        &self.layout
    }

    pub fn norm(&self, n: usize, l: usize) -> f64 {
        self.norms[n][l]
    }

    /// Flat index of `(n, ℓ, m)` within one centre's block.
    pub fn index(&self, n: usize, l: usize, m: i64) -> usize {
        self.spec.count() * l * l + n * (2 * l + 1) + (l as i64 + m) as usize
    }

    /// All `ψ_{nℓm}(x - center)`; at `x = center` only ℓ=0 survives.
    pub fn eval_basis_block(&self, center: [f64; 3], x: [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.dim()];
        let mut scratch = BasisScratch::new(self);
        self.eval_into(center, x, &mut scratch, &mut out);
        out
    }

    pub(crate) fn eval_into(
        &self,
        center: [f64; 3],
        x: [f64; 3],
        scratch: &mut BasisScratch,
        out: &mut [f64],
    ) {
        let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let lmax = self.spec.max_degree;
        solid_harmonics_into(lmax, d, &mut scratch.solid);
        for (g, a) in scratch.gauss.iter_mut().zip(&self.spec.exponents) {
            *g = (-a * r2).exp();
        }
        let nrad = self.spec.count();
        let mut o = 0;
        for l in 0..=lmax {
            let sh = &scratch.solid[l * l..(l + 1) * (l + 1)];
            for n in 0..nrad {
                let radial = self.norms[n][l] * scratch.gauss[n];
                for s in sh {
                    out[o] = radial * s;
                    o += 1;
                }
            }
        }
    }
}

pub(crate) struct BasisScratch {
    solid: Vec<f64>,
    gauss: Vec<f64>,
}

impl BasisScratch {
    pub(crate) fn new(basis: &BasisSet) -> Self {
        Self {
            solid: vec![0.0; sh_len(basis.spec.max_degree)],
            gauss: vec![0.0; basis.spec.count()],
        }
    }
}

fn check_field(basis: &BasisSet, coeffs: &CoefficientField, centers: &[[f64; 3]]) -> Result<()> {
    if coeffs.layout() != basis.layout() {
        return Err(Error::layout("coefficient layout does not match the basis"));
    }
    if coeffs.nodes() != centers.len() {
        return Err(Error::layout(format!(
            "{} coefficient tensors for {} centres",
            coeffs.nodes(),
            centers.len()
        )));
    }
    Ok(())
}

/// `ρ̂(x) = Σ_u Σ_{nℓm} f_{u,nℓm} ψ_{nℓm}(x - r_u)`
pub fn expand_density(
    basis: &BasisSet,
    coeffs: &CoefficientField,
    centers: &[[f64; 3]],
    queries: &[[f64; 3]],
) -> Result<Vec<f64>> {
    check_field(basis, coeffs, centers)?;
    let mut scratch = BasisScratch::new(basis);
    let mut psi = vec![0.0; basis.layout.dim()];
    let out = queries
        .iter()
        .map(|&x| {
            let mut acc = 0.0;
            for (u, &c) in centers.iter().enumerate() {
                basis.eval_into(c, x, &mut scratch, &mut psi);
                acc += coeffs
                    .node(u)
                    .iter()
                    .zip(&psi)
                    .map(|(f, p)| f * p)
                    .sum::<f64>();
            }
            acc
        })
        .collect();
    Ok(out)
}

/// Adjoint of [`expand_density`] with respect to the coefficients.
pub fn expand_density_backward(
    basis: &BasisSet,
    centers: &[[f64; 3]],
    queries: &[[f64; 3]],
    grad_out: &[f64],
) -> Result<CoefficientField> {
    if grad_out.len() != queries.len() {
        return Err(Error::layout("gradient length differs from query count"));
    }
    let mut grad = CoefficientField::zeros(basis.layout.clone(), centers.len());
    let mut scratch = BasisScratch::new(basis);
    let mut psi = vec![0.0; basis.layout.dim()];
    for (&x, &g) in queries.iter().zip(grad_out) {
        if g == 0.0 {
            continue;
        }
        for (u, &c) in centers.iter().enumerate() {
            basis.eval_into(c, x, &mut scratch, &mut psi);
            for (dst, p) in grad.node_mut(u).iter_mut().zip(&psi) {
                *dst += g * p;
            }
        }
    }
    Ok(grad)
}

/// Basis function index `(n, ℓ, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisIndex {
    pub n: usize,
    pub l: usize,
    pub m: i64,
}

impl BasisIndex {
    pub fn new(n: usize, l: usize, m: i64) -> Self {
        Self { n, l, m }
    }
}

/// Trapezoid tensor grid for the overlap oracle.
#[derive(Debug, Clone, Copy)]
pub struct OverlapQuadrature {
    /// Grid points per standard deviation of the narrower function.
    pub points_per_sigma: f64,
    /// Half-width of the box around each centre, in standard deviations of
    /// the wider function.
    pub extent_sigmas: f64,
    pub tolerance: f64,
    /// How many times the spacing may be halved before giving up.
    pub max_refinements: usize,
}

impl Default for OverlapQuadrature {
    fn default() -> Self {
        Self {
            points_per_sigma: 3.0,
            extent_sigmas: 6.0,
            tolerance: 1e-6,
            max_refinements: 2,
        }
    }
}

/// `S_ij(r) = ∫ ψ_i(x) ψ_j(x - r) dx` on a tensor trapezoid grid.
///
/// The error estimate is the difference to the nested grid of twice the
/// spacing. The spacing is halved while the estimate exceeds
/// `quad.tolerance`; if refinements run out that is an accuracy error.
pub fn overlap_integral_numeric(
    basis: &BasisSet,
    i: BasisIndex,
    j: BasisIndex,
    r: [f64; 3],
    quad: &OverlapQuadrature,
) -> Result<f64> {
    for idx in [i, j] {
        if idx.n >= basis.spec.count()
            || idx.l > basis.spec.max_degree
            || idx.m.unsigned_abs() as usize > idx.l
        {
            return Err(Error::domain(format!("basis index {idx:?} out of range")));
        }
    }
    let sigma = |n: usize| 1.0 / (2.0 * basis.spec.exponents[n]).sqrt();
    let (s_i, s_j) = (sigma(i.n), sigma(j.n));
    let wide = s_i.max(s_j);
    let narrow = s_i.min(s_j);
    let mut h_target = narrow / quad.points_per_sigma;
    let mut estimated = f64::INFINITY;
    for _ in 0..=quad.max_refinements {
        let (fine, coarse) = trapezoid_pair(basis, i, j, r, quad.extent_sigmas * wide, h_target);
        estimated = (fine - coarse).abs();
        if estimated <= quad.tolerance {
            return Ok(fine);
        }
        h_target /= 2.0;
    }
    Err(Error::Accuracy {
        estimated,
        tolerance: quad.tolerance,
    })
}

/// Trapezoid sums on the grid of spacing ≈ `h_target` and its nested
/// sub-grid of twice the spacing.
fn trapezoid_pair(
    basis: &BasisSet,
    i: BasisIndex,
    j: BasisIndex,
    r: [f64; 3],
    margin: f64,
    h_target: f64,
) -> (f64, f64) {
    let mut axes = Vec::with_capacity(3);
    for ax in 0..3 {
        let lo = 0.0f64.min(r[ax]) - margin;
        let hi = 0.0f64.max(r[ax]) + margin;
        // odd point count so the coarse grid nests
        let half = ((hi - lo) / (2.0 * h_target)).ceil().max(2.0) as usize;
        let npts = 2 * half + 1;
        let h = (hi - lo) / (npts - 1) as f64;
        axes.push((lo, h, npts));
    }

    let single = |idx: BasisIndex, d: [f64; 3], solid: &mut [f64]| -> f64 {
        solid_harmonics_into(idx.l, d, solid);
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let a = basis.spec.exponents[idx.n];
        basis.norms[idx.n][idx.l]
            * (-a * r2).exp()
            * solid[idx.l * idx.l + (idx.l as i64 + idx.m) as usize]
    };

    let trap_w = |k: usize, n: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let mut solid = vec![0.0; sh_len(i.l.max(j.l))];
    let (mut fine, mut coarse) = (0.0, 0.0);
    let (x_ax, y_ax, z_ax) = (axes[0], axes[1], axes[2]);
    for a in 0..x_ax.2 {
        let x = x_ax.0 + a as f64 * x_ax.1;
        for b in 0..y_ax.2 {
            let y = y_ax.0 + b as f64 * y_ax.1;
            for c in 0..z_ax.2 {
                let z = z_ax.0 + c as f64 * z_ax.1;
                let v = single(i, [x, y, z], &mut solid)
                    * single(j, [x - r[0], y - r[1], z - r[2]], &mut solid);
                if v == 0.0 {
                    continue;
                }
                fine += trap_w(a, x_ax.2) * trap_w(b, y_ax.2) * trap_w(c, z_ax.2) * v;
                if a % 2 == 0 && b % 2 == 0 && c % 2 == 0 {
                    let (na, nb, nc) = ((x_ax.2 + 1) / 2, (y_ax.2 + 1) / 2, (z_ax.2 + 1) / 2);
                    coarse += trap_w(a / 2, na) * trap_w(b / 2, nb) * trap_w(c / 2, nc) * v;
                }
            }
        }
    }
    let cell = x_ax.1 * y_ax.1 * z_ax.1;
    fine *= cell;
    coarse *= 8.0 * cell;
    (fine, coarse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::composite_gauss;
    use crate::so3::sh::sh_len;

    #[test]
    fn two_exponents_at_the_endpoints() {
        let a = make_exponents(0.5, 5.0, 2, Spacing::Linear).unwrap();
        assert_eq!(a, vec![2.0, 0.02]);
    }

    #[test]
    fn sixteen_exponents_decrease() {
        let a = make_exponents(0.5, 5.0, 16, Spacing::Linear).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(a[0], 2.0);
        assert!((a[15] - 0.02).abs() < 1e-15);
        assert!(a.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        let g = make_exponents(0.5, 5.0, 16, Spacing::Geometric).unwrap();
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!((g[15] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        assert!(make_exponents(0.0, 5.0, 4, Spacing::Linear).is_err());
        assert!(make_exponents(5.0, 0.5, 4, Spacing::Linear).is_err());
        assert!(make_exponents(0.5, 5.0, 1, Spacing::Linear).is_err());
        assert!(normalization_constant(0.0, 0).is_err());
        assert!(normalization_constant(-1.0, 2).is_err());
        assert!(RadialBasisSpec::new(vec![1.0, 2.0, 1.5], 2).is_err());
    }

    /// `∫₀^∞ c² r^{2ℓ+2} e^{-2ar²} dr`, angular part integrates to one.
    fn radial_norm_quadrature(a: f64, l: usize, c: f64) -> f64 {
        let r_hi = (60.0 / (2.0 * a)).sqrt() + 3.0 * ((l as f64 + 1.0) / a).sqrt();
        let (xs, ws) = composite_gauss(0.0, r_hi, 400, 8);
        xs.iter()
            .zip(&ws)
            .map(|(r, w)| w * c * c * r.powi(2 * l as i32 + 2) * (-2.0 * a * r * r).exp())
            .sum()
    }

    #[test]
    fn closed_form_normalization_matches_quadrature() {
        let c = normalization_constant(0.5, 0).unwrap();
        assert!((c - 1.502_251_089).abs() < 1e-8, "{c}");
        assert!((radial_norm_quadrature(0.5, 0, c) - 1.0).abs() < 1e-10);
        let c7 = normalization_constant(1.0, 7).unwrap();
        assert!(c7.is_finite() && c7 > 0.0);
        assert!((radial_norm_quadrature(1.0, 7, c7) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalization_scaling_law() {
        for l in 0..=7 {
            let ratio = normalization_constant(4.0 * 0.3, l).unwrap()
                / normalization_constant(0.3, l).unwrap();
            let expected = 4f64.powf((l as f64 + 1.5) / 2.0);
            assert!((ratio / expected - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn only_s_functions_survive_at_the_centre() {
        let basis = BasisSet::new(RadialBasisSpec::standard()).unwrap();
        let v = basis.eval_basis_block([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]);
        for l in 0..=7usize {
            for n in 0..16 {
                for m in -(l as i64)..=(l as i64) {
                    let x = v[basis.index(n, l, m)];
                    if l == 0 {
                        let expected = basis.norm(n, 0) * 0.5 / std::f64::consts::PI.sqrt();
                        assert!((x - expected).abs() < 1e-14 * expected);
                    } else {
                        assert_eq!(x, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn reflection_flips_odd_degrees() {
        let basis = BasisSet::new(RadialBasisSpec::standard()).unwrap();
        let c = [0.3, -0.2, 0.5];
        let d = [0.7, 0.4, -0.9];
        let plus = basis.eval_basis_block(c, [c[0] + d[0], c[1] + d[1], c[2] + d[2]]);
        let minus = basis.eval_basis_block(c, [c[0] - d[0], c[1] - d[1], c[2] - d[2]]);
        for l in 0..=7usize {
            let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
            for n in 0..16 {
                for m in -(l as i64)..=(l as i64) {
                    let i = basis.index(n, l, m);
                    assert!((minus[i] - sign * plus[i]).abs() <= 1e-12 * plus[i].abs().max(1e-300));
                }
            }
        }
    }

    #[test]
    fn expansion_of_zero_coefficients_is_zero() {
        let basis = BasisSet::new(RadialBasisSpec::new(vec![1.0, 0.5], 2).unwrap()).unwrap();
        let f = CoefficientField::zeros(basis.layout().clone(), 2);
        let out = expand_density(
            &basis,
            &f,
            &[[0.0; 3], [1.0, 0.0, 0.0]],
            &[[0.2, 0.1, 0.0], [3.0, 0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn unit_s_coefficient_reproduces_basis_value() {
        let basis = BasisSet::new(RadialBasisSpec::new(vec![1.0, 0.5, 0.25], 3).unwrap()).unwrap();
        let mut f = CoefficientField::zeros(basis.layout().clone(), 1);
        let idx = basis.index(1, 0, 0);
        f.node_mut(0)[idx] = 1.0;
        let c = [0.5, 0.5, 0.5];
        let x = [1.1, 0.2, -0.4];
        let rho = expand_density(&basis, &f, &[c], &[x]).unwrap()[0];
        assert!((rho - basis.eval_basis_block(c, x)[idx]).abs() < 1e-15);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let basis = BasisSet::new(RadialBasisSpec::new(vec![1.0, 0.5], 2).unwrap()).unwrap();
        let wrong = CoefficientField::zeros(IrrepLayout::uniform(1, 2), 1);
        assert!(expand_density(&basis, &wrong, &[[0.0; 3]], &[[0.0; 3]]).is_err());
        let right = CoefficientField::zeros(basis.layout().clone(), 2);
        assert!(expand_density(&basis, &right, &[[0.0; 3]], &[[0.0; 3]]).is_err());
    }

    #[test]
    fn backward_is_the_transpose_of_expansion() {
        let basis = BasisSet::new(RadialBasisSpec::new(vec![1.3, 0.6, 0.2], 2).unwrap()).unwrap();
        let centers = [[0.0, 0.0, 0.0], [1.2, -0.3, 0.4]];
        let queries = [[0.3, 0.2, 0.1], [1.0, 1.0, -1.0], [-0.5, 0.0, 0.7]];
        let dim = basis.layout().dim();
        let f_data: Vec<f64> = (0..2 * dim)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0)
            .collect();
        let f = CoefficientField::from_flat(basis.layout().clone(), 2, f_data).unwrap();
        let g = [0.7, -1.1, 0.4];
        let out = expand_density(&basis, &f, &centers, &queries).unwrap();
        let lhs: f64 = out.iter().zip(&g).map(|(a, b)| a * b).sum();
        let grad = expand_density_backward(&basis, &centers, &queries, &g).unwrap();
        let rhs: f64 = grad
            .as_slice()
            .iter()
            .zip(f.as_slice())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-12);
        let _ = sh_len(2);
    }

    #[test]
    fn coarse_overlap_grid_reports_accuracy_error() {
        let basis = BasisSet::new(RadialBasisSpec::new(vec![1.0, 0.5], 2).unwrap()).unwrap();
        let quad = OverlapQuadrature {
            points_per_sigma: 0.6,
            extent_sigmas: 6.0,
            tolerance: 1e-8,
            max_refinements: 0,
        };
        let res = overlap_integral_numeric(
            &basis,
            BasisIndex::new(0, 2, 1),
            BasisIndex::new(0, 2, 1),
            [0.0; 3],
            &quad,
        );
        assert!(matches!(res, Err(Error::Accuracy { .. })), "{res:?}");
    }
}
