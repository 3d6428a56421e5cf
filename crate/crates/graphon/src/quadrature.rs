use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Nodes and positive weights on `[0,1]^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub dim: usize,
    /// Row-major `len × dim`.
    nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(dim: usize, nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || nodes.len() != dim * weights.len() {
            return Err(Error::Domain(
                "node array does not match dim × weights".into(),
            ));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain("quadrature weights must be positive".into()));
        }
        Ok(Self {
            dim,
            nodes,
            weights,
        })
    }

    /// Tensor midpoint rule with `n` points per axis.
    pub fn midpoint(dim: usize, n: usize) -> Result<Self> {
        if n == 0 || !(1..=2).contains(&dim) {
            return Err(Error::Domain(
                "midpoint grids support dim 1 or 2 and n ≥ 1".into(),
            ));
        }
        let axis: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let total = n.pow(dim as u32);
        let mut nodes = Vec::with_capacity(total * dim);
        if dim == 1 {
            nodes.extend_from_slice(&axis);
        } else {
            for &y in &axis {
                for &x in &axis {
                    nodes.push(x);
                    nodes.push(y);
                }
            }
        }
        let w = 1.0 / total as f64;
        Self::new(dim, nodes, vec![w; total])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.node(i))).collect()
    }

    /// `Σ_i w_i f_i g_i`
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(f)
            .zip(g)
            .map(|((w, a), b)| w * a * b)
            .sum()
    }

    pub fn measure(&self) -> f64 {
        self.weights.iter().sum()
    }
}
