//! Norm gate: scalars through `σ₀`, higher-degree blocks scaled by
//! `σ(sqrt(‖f‖² + ε))`.

use serde::{Deserialize, Serialize};

use super::radial::{sigmoid, silu, silu_grad};
use crate::error::{Error, Result};
use crate::so3::TensorField;

pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarActivation {
    Identity,
    Silu,
}

/// Factor applied to a degree-ℓ block as a function of its norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormGate {
    /// Factor 1: blocks pass through.
    Identity,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub scalar: ScalarActivation,
    pub norm: NormGate,
}

impl Default for Gate {
    fn default() -> Self {
        Self {
            scalar: ScalarActivation::Silu,
            norm: NormGate::Sigmoid,
        }
    }
}

fn scalar_fwd(act: ScalarActivation, x: f64) -> f64 {
    match act {
        ScalarActivation::Identity => x,
        ScalarActivation::Silu => silu(x),
    }
}

fn scalar_grad(act: ScalarActivation, x: f64) -> f64 {
    match act {
        ScalarActivation::Identity => 1.0,
        ScalarActivation::Silu => silu_grad(x),
    }
}

fn gate_value(gate: NormGate, n: f64) -> (f64, f64) {
    match gate {
        NormGate::Identity => (1.0, 0.0),
        NormGate::Sigmoid => {
            let s = sigmoid(n);
            (s, s * (1.0 - s))
        }
    }
}

/// Blocks of every node: `(offset, degree)` for a uniform layout.
fn for_each_block(f: &TensorField, mut visit: impl FnMut(usize, usize, usize)) {
    for (i, &(l, channels)) in f.layout().entries().iter().enumerate() {
        for c in 0..channels {
            let o = f.layout().block_offset(i, c);
            for u in 0..f.nodes() {
                visit(u, o, l);
            }
        }
    }
}

impl Gate {
    pub fn forward(&self, f: &TensorField) -> Result<TensorField> {
        let mut out = f.clone();
        let dim = f.layout().dim();
        let src = f.as_slice();
        let dst = out.as_mut_slice();
        for_each_block(f, |u, o, l| {
            let base = u * dim + o;
            if l == 0 {
                dst[base] = scalar_fwd(self.scalar, src[base]);
                return;
            }
            let x = &src[base..base + 2 * l + 1];
            let n = (x.iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt();
            let (s, _) = gate_value(self.norm, n);
            for m in 0..2 * l + 1 {
                dst[base + m] = s * x[m];
            }
        });
        if out.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { op: "gate".into() });
        }
        Ok(out)
    }

    /// `∂L/∂f` given the gate input and `∂L/∂out`.
    pub fn backward(&self, f: &TensorField, g: &TensorField) -> Result<TensorField> {
        if g.layout() != f.layout() || g.nodes() != f.nodes() {
            return Err(Error::layout("gate gradient does not match its input"));
        }
        let mut out = f.clone();
        let dim = f.layout().dim();
        let (src, gs) = (f.as_slice(), g.as_slice());
        let dst = out.as_mut_slice();
        for_each_block(f, |u, o, l| {
            let base = u * dim + o;
            if l == 0 {
                dst[base] = scalar_grad(self.scalar, src[base]) * gs[base];
                return;
            }
            let x = &src[base..base + 2 * l + 1];
            let gb = &gs[base..base + 2 * l + 1];
            let n = (x.iter().map(|v| v * v).sum::<f64>() + NORM_EPS).sqrt();
            let (s, ds) = gate_value(self.norm, n);
            let xg: f64 = x.iter().zip(gb).map(|(a, b)| a * b).sum();
            for m in 0..2 * l + 1 {
                dst[base + m] = s * gb[m] + ds * xg / n * x[m];
            }
        });
        Ok(out)
    }
}
