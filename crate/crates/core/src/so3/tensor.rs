use serde::{Deserialize, Serialize};

use super::cg::cg_table;
use super::rotation::RotationMatrix;
use super::wigner::wigner_blocks;
use crate::error::{Error, Result};

/// Ordered `(degree, channels)` list. Data is stored degree-major, then
/// channel, then order `m = -ℓ..=ℓ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(usize, usize)>", into = "Vec<(usize, usize)>")]
pub struct IrrepLayout {
    entries: Vec<(usize, usize)>,
    offsets: Vec<usize>,
}

impl TryFrom<Vec<(usize, usize)>> for IrrepLayout {
    type Error = Error;

    fn try_from(entries: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<IrrepLayout> for Vec<(usize, usize)> {
    fn from(layout: IrrepLayout) -> Self {
        layout.entries
    }
}

impl IrrepLayout {
    pub fn new(entries: Vec<(usize, usize)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::layout("degrees must be distinct and ascending"));
            }
        }
        if entries.iter().any(|&(_, c)| c == 0) {
            return Err(Error::layout("channel counts must be positive"));
        }
        let mut offsets = Vec::with_capacity(entries.len() + 1);
        let mut acc = 0;
        for &(l, c) in &entries {
            offsets.push(acc);
            acc += c * (2 * l + 1);
        }
        offsets.push(acc);
        Ok(Self { entries, offsets })
    }

    /// Degrees `0..=lmax`, each with `channels` copies.
    pub fn uniform(lmax: usize, channels: usize) -> Self {
        Self::new((0..=lmax).map(|l| (l, channels)).collect()).expect("valid uniform layout")
    }

    pub fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }

    /// Offset of the block for entry `i`, channel `c`.
    pub fn block_offset(&self, i: usize, c: usize) -> usize {
        let (l, _) = self.entries[i];
        self.offsets[i] + c * (2 * l + 1)
    }

    pub fn entry_for_degree(&self, l: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.0 == l)
    }
}

impl Default for IrrepLayout {
    fn default() -> Self {
        Self::new(Vec::new()).unwrap()
    }
}

/// Coefficients for an [`IrrepLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalTensor {
    layout: IrrepLayout,
    data: Vec<f64>,
}

impl SphericalTensor {
    pub fn zeros(layout: IrrepLayout) -> Self {
        let data = vec![0.0; layout.dim()];
        Self { layout, data }
    }

    pub fn from_flat(layout: IrrepLayout, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.dim() {
            return Err(Error::layout(format!(
                "flat length {} does not match layout dimension {}",
                data.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, data })
    }

    /// Single block of degree `l` with one channel.
    pub fn single(l: usize, block: Vec<f64>) -> Result<Self> {
        Self::from_flat(IrrepLayout::new(vec![(l, 1)])?, block)
    }

    pub fn layout(&self) -> &IrrepLayout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn block(&self, entry: usize, c: usize) -> &[f64] {
        let l = self.layout.entries[entry].0;
        let o = self.layout.block_offset(entry, c);
        &self.data[o..o + 2 * l + 1]
    }

    pub fn block_mut(&mut self, entry: usize, c: usize) -> &mut [f64] {
        let l = self.layout.entries[entry].0;
        let o = self.layout.block_offset(entry, c);
        &mut self.data[o..o + 2 * l + 1]
    }

    /// Projection onto degrees `≤ lmax`.
    pub fn truncate(&self, lmax: usize) -> SphericalTensor {
        let entries: Vec<_> = self
            .layout
            .entries
            .iter()
            .copied()
            .filter(|e| e.0 <= lmax)
            .collect();
        let layout = IrrepLayout::new(entries).expect("subset of a valid layout");
        let end = layout.dim();
        Self {
            layout,
            data: self.data[..end].to_vec(),
        }
    }
}

/// One spherical tensor per graph node, all sharing a layout; stored
/// node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    layout: IrrepLayout,
    nodes: usize,
    data: Vec<f64>,
}

impl TensorField {
    pub fn zeros(layout: IrrepLayout, nodes: usize) -> Self {
        let data = vec![0.0; layout.dim() * nodes];
        Self {
            layout,
            nodes,
            data,
        }
    }

    pub fn from_flat(layout: IrrepLayout, nodes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.dim() * nodes {
            return Err(Error::layout(format!(
                "field holds {} values, expected {} nodes × {}",
                data.len(),
                nodes,
                layout.dim()
            )));
        }
        Ok(Self {
            layout,
            nodes,
            data,
        })
    }

    pub fn from_tensors(tensors: &[SphericalTensor]) -> Result<Self> {
        let layout = match tensors.first() {
            Some(t) => t.layout.clone(),
            None => return Err(Error::layout("cannot infer a layout from zero tensors")),
        };
        let mut data = Vec::with_capacity(layout.dim() * tensors.len());
        for t in tensors {
            if t.layout != layout {
                return Err(Error::layout("tensors in a field must share one layout"));
            }
            data.extend_from_slice(&t.data);
        }
        Ok(Self {
            layout,
            nodes: tensors.len(),
            data,
        })
    }

    pub fn layout(&self) -> &IrrepLayout {
        &self.layout
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let d = self.layout.dim();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.layout.dim();
        &mut self.data[i * d..(i + 1) * d]
    }

    pub fn tensor(&self, i: usize) -> SphericalTensor {
        SphericalTensor {
            layout: self.layout.clone(),
            data: self.node(i).to_vec(),
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rotate(&self, r: &RotationMatrix) -> TensorField {
        let tensors: Vec<_> = (0..self.nodes)
            .map(|i| rotate_tensor(&self.tensor(i), r))
            .collect();
        let mut out = self.clone();
        for (i, t) in tensors.iter().enumerate() {
            out.node_mut(i).copy_from_slice(t.as_slice());
        }
        out
    }
}

/// `C_{Jm} = Σ a_{ℓm₁} b_{km₂} ⟨ℓm₁ km₂|Jm⟩` for single-block tensors.
pub fn tensor_product(
    a: &SphericalTensor,
    b: &SphericalTensor,
    j: usize,
) -> Result<SphericalTensor> {
    let single = |t: &SphericalTensor| match t.layout.entries() {
        [(l, 1)] => Ok(*l),
        _ => Err(Error::layout(
            "tensor product expects single-block, single-channel tensors",
        )),
    };
    let (l, k) = (single(a)?, single(b)?);
    let table = cg_table(l, k, j)?;
    let mut out = vec![0.0; 2 * j + 1];
    for &(m1, m2, m, c) in &table.entries {
        out[m] += c * a.data[m1] * b.data[m2];
    }
    SphericalTensor::single(j, out)
}

/// Left-multiplies every block by its Wigner block.
pub fn rotate_tensor(f: &SphericalTensor, r: &RotationMatrix) -> SphericalTensor {
    let lmax = f.layout.max_degree().unwrap_or(0);
    let blocks = wigner_blocks(lmax, r);
    rotate_tensor_with(f, |l, v| blocks[l].apply(v))
}

/// Rotation with caller-supplied per-degree action (used for negative
/// controls with deliberately wrong matrices).
pub fn rotate_tensor_with(
    f: &SphericalTensor,
    mut act: impl FnMut(usize, &[f64]) -> Vec<f64>,
) -> SphericalTensor {
    let mut out = f.clone();
    for (i, &(l, channels)) in f.layout.entries.iter().enumerate() {
        for c in 0..channels {
            let rotated = act(l, f.block(i, c));
            out.block_mut(i, c).copy_from_slice(&rotated);
        }
    }
    out
}
