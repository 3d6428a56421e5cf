//! Molecular graphs, voxel grids and query sampling.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::so3::RotationMatrix;

/// Directed edge `u → v` with displacement `x_v - x_u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub r: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    pub atom_type: Vec<usize>,
    pub atom_coord: Vec<[f64; 3]>,
    pub edges: Vec<Edge>,
    pub cutoff: f64,
}

impl MolecularGraph {
    pub fn new(atom_type: Vec<usize>, atom_coord: Vec<[f64; 3]>, cutoff: f64) -> Result<Self> {
        if atom_type.len() != atom_coord.len() {
            return Err(Error::layout(format!(
                "{} atom types for {} coordinates",
                atom_type.len(),
                atom_coord.len()
            )));
        }
        let edges = build_radius_graph(&atom_coord, cutoff)?;
        Ok(Self {
            atom_type,
            atom_coord,
            edges,
            cutoff,
        })
    }

    pub fn atoms(&self) -> usize {
        self.atom_coord.len()
    }

    /// Same atoms moved by `x ↦ R(x - c) + c`, edges rebuilt.
    pub fn rotated(&self, r: &RotationMatrix, center: [f64; 3]) -> Result<Self> {
        let coords = self
            .atom_coord
            .iter()
            .map(|&x| r.apply_about(x, center))
            .collect();
        Self::new(self.atom_type.clone(), coords, self.cutoff)
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// All ordered pairs `u ≠ v` with `|x_v - x_u| ≤ cutoff`, sorted by `(u, v)`.
pub fn build_radius_graph(coords: &[[f64; 3]], cutoff: f64) -> Result<Vec<Edge>> {
    if !(cutoff > 0.0) {
        return Err(Error::domain(format!(
            "cutoff must be positive, got {cutoff}"
        )));
    }
    let mut edges = Vec::new();
    for (u, &xu) in coords.iter().enumerate() {
        for (v, &xv) in coords.iter().enumerate() {
            if u == v {
                continue;
            }
            let r = sub(xv, xu);
            if norm(r) <= cutoff {
                edges.push(Edge { u, v, r });
            }
        }
    }
    Ok(edges)
}

/// Scalar field on a parallelepiped. Flat index `i + N_x (j + N_y k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub shape: [usize; 3],
    /// Cell vectors as rows.
    pub cell: [[f64; 3]; 3],
    pub origin: [f64; 3],
    pub values: Vec<f64>,
    #[serde(default)]
    pub pbc: bool,
    /// Grid point `i` sits at fraction `i/(N-1)` instead of `i/N`.
    #[serde(default)]
    pub endpoint_inclusive: bool,
}

impl VoxelGrid {
    pub fn new(
        shape: [usize; 3],
        cell: [[f64; 3]; 3],
        origin: [f64; 3],
        values: Vec<f64>,
    ) -> Result<Self> {
        let grid = Self {
            shape,
            cell,
            origin,
            values,
            pbc: false,
            endpoint_inclusive: false,
        };
        grid.check_shape()?;
        Ok(grid)
    }

    pub fn with_pbc(mut self, pbc: bool) -> Self {
        self.pbc = pbc;
        self
    }

    pub fn with_endpoint_inclusive(mut self, inclusive: bool) -> Self {
        self.endpoint_inclusive = inclusive;
        self
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_shape(&self) -> Result<()> {
        if self.shape.iter().any(|&n| n == 0) {
            return Err(Error::domain(format!(
                "grid shape {:?} has an empty axis",
                self.shape
            )));
        }
        if self.values.len() != self.len() {
            return Err(Error::layout(format!(
                "{} values for grid shape {:?}",
                self.values.len(),
                self.shape
            )));
        }
        Ok(())
    }

    /// Cell matrix with the cell vectors as columns, so `x = origin + M f`.
    fn cell_columns(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.cell[j][i])
    }

    fn inverse_cell(&self) -> Result<Matrix3<f64>> {
        let m = self.cell_columns();
        let scale = self.cell.iter().map(|row| norm(*row)).fold(0.0, f64::max);
        if !(m.determinant().abs() > 1e-12 * scale.powi(3)) {
            return Err(Error::domain("grid cell is singular"));
        }
        m.try_inverse()
            .ok_or_else(|| Error::domain("grid cell is singular"))
    }

    fn steps(&self) -> [f64; 3] {
        std::array::from_fn(|a| {
            let n = self.shape[a];
            if self.endpoint_inclusive && n > 1 {
                (n - 1) as f64
            } else {
                n as f64
            }
        })
    }

    /// Volume element per grid point.
    pub fn voxel_volume(&self) -> f64 {
        let s = self.steps();
        self.cell_columns().determinant().abs() / (s[0] * s[1] * s[2])
    }

    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.shape[0] * (j + self.shape[1] * k)
    }

    pub fn unflatten(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.shape[0];
        let rest = idx / self.shape[0];
        [i, rest % self.shape[1], rest / self.shape[1]]
    }

    fn point(&self, idx: usize, steps: [f64; 3]) -> [f64; 3] {
        let ijk = self.unflatten(idx);
        let f: [f64; 3] = std::array::from_fn(|a| ijk[a] as f64 / steps[a]);
        std::array::from_fn(|d| {
            self.origin[d]
                + f[0] * self.cell[0][d]
                + f[1] * self.cell[1][d]
                + f[2] * self.cell[2][d]
        })
    }

    /// Fractional coordinates of a Cartesian point.
    pub fn fractional(&self, x: [f64; 3]) -> Result<[f64; 3]> {
        let inv = self.inverse_cell()?;
        let f = inv * Vector3::from(sub(x, self.origin));
        Ok([f[0], f[1], f[2]])
    }
}

/// Cartesian coordinates of every grid point, x fastest.
pub fn grid_coordinates(grid: &VoxelGrid) -> Result<Vec<[f64; 3]>> {
    grid.check_shape()?;
    grid.inverse_cell()?;
    let steps = grid.steps();
    Ok((0..grid.len()).map(|idx| grid.point(idx, steps)).collect())
}

/// Query points with target values and the volume element per point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySample {
    pub indices: Vec<usize>,
    pub points: Vec<[f64; 3]>,
    pub targets: Vec<f64>,
    pub weight: f64,
}

impl QuerySample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn gather(grid: &VoxelGrid, indices: Vec<usize>) -> QuerySample {
    let steps = grid.steps();
    let points = indices.iter().map(|&i| grid.point(i, steps)).collect();
    let targets = indices.iter().map(|&i| grid.values[i]).collect();
    QuerySample {
        indices,
        points,
        targets,
        weight: grid.voxel_volume(),
    }
}

/// `k` distinct voxels drawn uniformly without replacement.
pub fn sample_queries(grid: &VoxelGrid, k: usize, seed: u64) -> Result<QuerySample> {
    grid.check_shape()?;
    grid.inverse_cell()?;
    let total = grid.len();
    if k == 0 || k > total {
        return Err(Error::domain(format!(
            "cannot sample {k} of {total} voxels"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = rand::seq::index::sample(&mut rng, total, k).into_vec();
    Ok(gather(grid, indices))
}

/// Consecutive batches covering every voxel once, in flat order.
pub fn partition_grid(grid: &VoxelGrid, batch_size: usize) -> Result<Vec<QuerySample>> {
    grid.check_shape()?;
    grid.inverse_cell()?;
    if batch_size == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    let total = grid.len();
    Ok((0..total)
        .step_by(batch_size)
        .map(|start| gather(grid, (start..(start + batch_size).min(total)).collect()))
        .collect())
}

/// Trilinear interpolation in fractional coordinates. Points outside the
/// cell wrap when the grid is periodic and are clamped otherwise.
pub fn trilinear_sample(grid: &VoxelGrid, points: &[[f64; 3]]) -> Result<Vec<f64>> {
    grid.check_shape()?;
    let inv = grid.inverse_cell()?;
    let steps = grid.steps();
    let n = grid.shape;
    points
        .iter()
        .map(|&x| {
            let f = inv * Vector3::from(sub(x, grid.origin));
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            let mut t = [0.0; 3];
            for a in 0..3 {
                let u = f[a] * steps[a];
                if !u.is_finite() {
                    return Err(Error::NonFinite {
                        op: "trilinear_sample".into(),
                    });
                }
                if grid.pbc {
                    let u = u.rem_euclid(n[a] as f64);
                    let base = (u.floor() as usize).min(n[a] - 1);
                    lo[a] = base;
                    hi[a] = (base + 1) % n[a];
                    t[a] = u - base as f64;
                } else {
                    let u = u.clamp(0.0, (n[a] - 1) as f64);
                    let base = (u.floor() as usize).min(n[a].saturating_sub(2));
                    lo[a] = base;
                    hi[a] = (base + 1).min(n[a] - 1);
                    t[a] = u - base as f64;
                }
            }
            let mut acc = 0.0;
            for corner in 0..8 {
                let pick = |a: usize| corner >> a & 1 == 1;
                let w: f64 = (0..3)
                    .map(|a| if pick(a) { t[a] } else { 1.0 - t[a] })
                    .product();
                if w == 0.0 {
                    continue;
                }
                let idx: [usize; 3] = std::array::from_fn(|a| if pick(a) { hi[a] } else { lo[a] });
                acc += w * grid.values[grid.flat_index(idx[0], idx[1], idx[2])];
            }
            Ok(acc)
        })
        .collect()
}

/// Rotates a (molecule, density) pair about `center`: atoms move by
/// `x ↦ R(x - c) + c` and the density on the unchanged grid becomes
/// `ρ'(x) = ρ(R⁻¹(x - c) + c)`, resampled trilinearly.
pub fn rotate_instance(
    graph: &MolecularGraph,
    grid: &VoxelGrid,
    r: &RotationMatrix,
    center: [f64; 3],
) -> Result<(MolecularGraph, VoxelGrid)> {
    let rotated_graph = graph.rotated(r, center)?;
    let inv = r.inverse();
    let back: Vec<[f64; 3]> = grid_coordinates(grid)?
        .into_iter()
        .map(|x| inv.apply_about(x, center))
        .collect();
    let mut rotated_grid = grid.clone();
    rotated_grid.values = trilinear_sample(grid, &back)?;
    Ok((rotated_graph, rotated_grid))
}

/// Centre of the cell parallelepiped.
pub fn cell_center(grid: &VoxelGrid) -> [f64; 3] {
    std::array::from_fn(|d| {
        grid.origin[d] + 0.5 * (grid.cell[0][d] + grid.cell[1][d] + grid.cell[2][d])
    })
}
