//! End-to-end checks shared by the CLI and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{cell_center, grid_coordinates, sample_queries, MolecularGraph};
use crate::grad::{check_gradient, GradCheckReport};
use crate::model::{nmae, DensityInstance, Model};
use crate::so3::{wigner_blocks, RotationMatrix, WignerBlock};

pub const EQUIVARIANCE_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub rotations: usize,
    /// `max |ρ(R x; R G) - ρ(x; G)| / max |ρ|`
    pub max_density_deviation: f64,
    /// `max |f(R G) - D(R) f(G)| / max |f|` over the final coefficients.
    pub max_coefficient_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Two-branch rotation test: transform the input and compare with the
/// transformed output. `blocks` supplies the Wigner blocks used to rotate the
/// coefficients, so a corrupted table can be injected.
pub fn equivariance_check_with(
    model: &Model,
    params: &[f64],
    graph: &MolecularGraph,
    queries: &[[f64; 3]],
    rotations: usize,
    seed: u64,
    blocks: &dyn Fn(usize, &RotationMatrix) -> Vec<WignerBlock>,
) -> Result<EquivarianceReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (base_coeffs, _) = model.encode(params, graph)?;
    let base = model.predict_from_coefficients(params, graph, &base_coeffs, queries)?;
    let rho_scale = max_abs(&base).max(f64::MIN_POSITIVE);
    let f_scale = max_abs(base_coeffs.as_slice()).max(f64::MIN_POSITIVE);
    let lmax = model.config().max_degree;
    let cc = model.config().channels;
    let center = graph
        .atom_coord
        .iter()
        .fold([0.0; 3], |a, x| [a[0] + x[0], a[1] + x[1], a[2] + x[2]]);
    let center = center.map(|v| v / graph.atoms().max(1) as f64);
    let mut dens: f64 = 0.0;
    let mut coef: f64 = 0.0;
    for _ in 0..rotations {
        let r = RotationMatrix::random(&mut rng);
        let rg = graph.rotated(&r, center)?;
        let rq: Vec<[f64; 3]> = queries.iter().map(|x| r.apply_about(*x, center)).collect();
        let (coeffs, _) = model.encode(params, &rg)?;
        let out = model.predict_from_coefficients(params, &rg, &coeffs, &rq)?;
        dens = dens.max(
            out.iter()
                .zip(&base)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / rho_scale,
        );
        let d = blocks(lmax, &r);
        for u in 0..graph.atoms() {
            let src = base_coeffs.node(u);
            let dst = coeffs.node(u);
            for (l, block) in d.iter().enumerate() {
                for c in 0..cc {
                    let o = cc * l * l + c * (2 * l + 1);
                    let rotated = block.apply(&src[o..o + 2 * l + 1]);
                    for (a, b) in rotated.iter().zip(&dst[o..o + 2 * l + 1]) {
                        coef = coef.max((a - b).abs() / f_scale);
                    }
                }
            }
        }
    }
    let passed = dens < EQUIVARIANCE_TOLERANCE && coef < EQUIVARIANCE_TOLERANCE;
    Ok(EquivarianceReport {
        rotations,
        max_density_deviation: dens,
        max_coefficient_deviation: coef,
        tolerance: EQUIVARIANCE_TOLERANCE,
        passed,
    })
}

pub fn equivariance_check(
    model: &Model,
    params: &[f64],
    graph: &MolecularGraph,
    queries: &[[f64; 3]],
    rotations: usize,
    seed: u64,
) -> Result<EquivarianceReport> {
    equivariance_check_with(model, params, graph, queries, rotations, seed, &|l, r| {
        wigner_blocks(l, r)
    })
}

/// NMAE with the molecule rotated about the cell centre and the queries
/// rotated with it, so the targets are exact without resampling.
pub fn rotated_nmae_analytic(
    model: &Model,
    params: &[f64],
    inst: &DensityInstance,
    r: &RotationMatrix,
) -> Result<(f64, f64)> {
    let center = cell_center(&inst.grid);
    let points = grid_coordinates(&inst.grid)?;
    let plain = nmae(
        &model.predict(params, &inst.graph, &points)?,
        &inst.grid.values,
    )?;
    let rg = inst.graph.rotated(r, center)?;
    let rq: Vec<[f64; 3]> = points.iter().map(|x| r.apply_about(*x, center)).collect();
    let rotated = nmae(&model.predict(params, &rg, &rq)?, &inst.grid.values)?;
    Ok((plain, rotated))
}

/// Finite-difference check of the training loss on `k` sampled voxels.
/// The step is 1e-4: with a loss of order ten, smaller steps let round-off
/// dominate the entries near the floor.
pub fn gradcheck(
    model: &Model,
    params: &[f64],
    inst: &DensityInstance,
    queries: usize,
    n_sampled: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = sample_queries(&inst.grid, queries.min(inst.grid.len()), rng.gen())?;
    let weight = inst.grid.voxel_volume() * inst.grid.len() as f64 / sample.len() as f64;
    let lg = model.loss_and_grad(params, &inst.graph, &sample, weight)?;
    let loss = |p: &[f64]| Ok(model.loss_and_grad(p, &inst.graph, &sample, weight)?.loss);
    let scale = max_abs(&lg.grad);
    check_gradient(
        loss,
        params,
        &lg.grad,
        n_sampled,
        1e-4,
        1e-6 * scale.max(1e-12),
        rng.gen(),
    )
}
