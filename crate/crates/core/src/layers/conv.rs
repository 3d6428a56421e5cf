//! Tensor-product message passing with self-interaction.
//!
//! Features use `IrrepLayout::uniform(L, C)`: block `(ℓ, c)` starts at
//! `C ℓ² + c (2ℓ+1)`. The message from `v` into `u` along a path `(ℓ, k, J)` is
//! `φ_{p,c}(|r|) · (f_v^{k,c} ⊗ Y_J(r̂))_ℓ` with `r = x_v - x_u`.

use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::radial::{row, RadialCache, RadialNet};
use crate::error::{Error, Result};
use crate::geometry::Edge;
use crate::so3::sh::{direction_harmonics_into, sh_len};
use crate::so3::{cg_table, CgTable, IrrepLayout, TensorField};

/// Output degree `l`, input degree `k`, filter degree `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub l: usize,
    pub k: usize,
    pub j: usize,
}

/// Every `(ℓ, k, J)` with `ℓ, k ≤ L` and `|ℓ-k| ≤ J ≤ min(ℓ+k, J_max)`.
#[derive(Debug, Clone)]
pub struct PathTable {
    max_degree: usize,
    filter_degree: usize,
    paths: Vec<Path>,
    tables: Vec<CgTable>,
}

impl PathTable {
    /// `filter_degree = None` keeps every `J ≤ ℓ+k`.
    pub fn new(max_degree: usize, filter_degree: Option<usize>) -> Self {
        let jmax = filter_degree.unwrap_or(2 * max_degree);
        let mut paths = Vec::new();
        let mut tables = Vec::new();
        for l in 0..=max_degree {
            for k in 0..=max_degree {
                for j in l.abs_diff(k)..=(l + k).min(jmax) {
                    paths.push(Path { l, k, j });
                    tables.push(cg_table(k, j, l).expect("triangle holds by construction"));
                }
            }
        }
        let filter_degree = paths.iter().map(|p| p.j).max().unwrap_or(0);
        Self {
            max_degree,
            filter_degree,
            paths,
            tables,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Largest filter degree present.
    pub fn filter_degree(&self) -> usize {
        self.filter_degree
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TpMode {
    /// Radial channels never mix.
    #[default]
    ChannelWise,
    /// Dense `(c_out, c_in)` weights per path.
    FullyConnected,
}

/// Multiplies spent in the tensor-product stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    pub tensor_product: u64,
}

#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub max_degree: usize,
    pub channels: usize,
    pub mode: TpMode,
    pub radial: RadialNet,
    pub paths: Arc<PathTable>,
}

/// Quantities from the forward pass needed by the backward pass.
#[derive(Debug, Clone)]
pub struct ConvCache {
    phi: Array2<f64>,
    radial: RadialCache,
    sh: Vec<f64>,
}

pub(crate) fn block(channels: usize, l: usize, c: usize) -> usize {
    channels * l * l + c * (2 * l + 1)
}

impl ConvLayer {
    pub fn new(
        max_degree: usize,
        channels: usize,
        mode: TpMode,
        paths: Arc<PathTable>,
        embed: usize,
        hidden: usize,
        cutoff: f64,
    ) -> Result<Self> {
        if paths.max_degree() != max_degree {
            return Err(Error::domain("path table built for a different degree"));
        }
        if channels == 0 {
            return Err(Error::domain("at least one channel is required"));
        }
        let per_path = match mode {
            TpMode::ChannelWise => channels,
            TpMode::FullyConnected => channels * channels,
        };
        let radial = RadialNet::new(embed, hidden, paths.len() * per_path, cutoff)?;
        Ok(Self {
            max_degree,
            channels,
            mode,
            radial,
            paths,
        })
    }

    pub fn layout(&self) -> IrrepLayout {
        IrrepLayout::uniform(self.max_degree, self.channels)
    }

    pub fn self_weight_count(&self) -> usize {
        (self.max_degree + 1) * self.channels
    }

    /// Self weights `[L+1, C]` followed by the radial net block.
    pub fn param_count(&self) -> usize {
        self.self_weight_count() + self.radial.param_count()
    }

    fn check(&self, p: &[f64], f: &TensorField) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::layout(format!(
                "conv layer expects {} parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        if f.layout() != &self.layout() {
            return Err(Error::domain("feature layout does not match the layer"));
        }
        Ok(())
    }

    fn edge_harmonics(&self, edges: &[Edge]) -> Vec<f64> {
        let ns = sh_len(self.paths.filter_degree());
        let mut sh = vec![0.0; edges.len() * ns];
        for (e, edge) in edges.iter().enumerate() {
            direction_harmonics_into(
                self.paths.filter_degree(),
                edge.r,
                &mut sh[e * ns..(e + 1) * ns],
            );
        }
        sh
    }

    /// `A[m, m1] = Σ_{m2} Q[m; m1, m2] Y_J[m2]`, returns multiplies spent.
    fn coupling_matrix(&self, pi: usize, y: &[f64], a: &mut [f64]) -> u64 {
        let Path { l, k, j } = self.paths.paths[pi];
        let cols = 2 * k + 1;
        a[..(2 * l + 1) * cols].fill(0.0);
        let yj = &y[j * j..(j + 1) * (j + 1)];
        let table = &self.paths.tables[pi];
        for &(m1, m2, m, c) in &table.entries {
            a[m * cols + m1] += c * yj[m2];
        }
        table.entries.len() as u64
    }

    pub fn forward(
        &self,
        p: &[f64],
        edges: &[Edge],
        f: &TensorField,
        mut counter: Option<&mut OpCount>,
    ) -> Result<(TensorField, ConvCache)> {
        self.check(p, f)?;
        let (w_self, radial_p) = p.split_at(self.self_weight_count());
        let dist: Vec<f64> = edges
            .iter()
            .map(|e| (e.r[0] * e.r[0] + e.r[1] * e.r[1] + e.r[2] * e.r[2]).sqrt())
            .collect();
        let (phi, radial_cache) = self.radial.forward(radial_p, &dist)?;
        let sh = self.edge_harmonics(edges);
        let ns = sh_len(self.paths.filter_degree());
        let cc = self.channels;

        let mut out = TensorField::zeros(self.layout(), f.nodes());
        for u in 0..f.nodes() {
            let (src, dst) = (f.node(u), out.node_mut(u));
            for l in 0..=self.max_degree {
                for c in 0..cc {
                    let w = w_self[l * cc + c];
                    let o = block(cc, l, c);
                    for m in 0..2 * l + 1 {
                        dst[o + m] = w * src[o + m];
                    }
                }
            }
        }

        let dmax = 2 * self.max_degree + 1;
        let mut a = vec![0.0; dmax * dmax];
        let mut t = vec![0.0; cc * dmax];
        let mut ops = 0u64;
        for (e, edge) in edges.iter().enumerate() {
            let y = &sh[e * ns..(e + 1) * ns];
            let phi_e = row(&phi, e);
            let fv = f.node(edge.v);
            let dst = out.node_mut(edge.u);
            for (pi, path) in self.paths.paths.iter().enumerate() {
                ops += self.coupling_matrix(pi, y, &mut a);
                let (nl, nk) = (2 * path.l + 1, 2 * path.k + 1);
                // t[c][m] = Σ_{m1} A[m, m1] f_v[k, c, m1]
                for c in 0..cc {
                    let x = &fv[block(cc, path.k, c)..][..nk];
                    for m in 0..nl {
                        let arow = &a[m * nk..(m + 1) * nk];
                        t[c * nl + m] = arow.iter().zip(x).map(|(p, q)| p * q).sum();
                    }
                }
                ops += (cc * nl * nk) as u64;
                match self.mode {
                    TpMode::ChannelWise => {
                        for c in 0..cc {
                            let s = phi_e[pi * cc + c];
                            let o = block(cc, path.l, c);
                            for m in 0..nl {
                                dst[o + m] += s * t[c * nl + m];
                            }
                        }
                        ops += (cc * nl) as u64;
                    }
                    TpMode::FullyConnected => {
                        for co in 0..cc {
                            let o = block(cc, path.l, co);
                            let wrow = &phi_e[(pi * cc + co) * cc..][..cc];
                            for (ci, &s) in wrow.iter().enumerate() {
                                for m in 0..nl {
                                    dst[o + m] += s * t[ci * nl + m];
                                }
                            }
                        }
                        ops += (cc * cc * nl) as u64;
                    }
                }
            }
        }
        if let Some(cnt) = counter.as_deref_mut() {
            cnt.tensor_product += ops;
        }
        if out.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                op: "conv_forward".into(),
            });
        }
        Ok((
            out,
            ConvCache {
                phi,
                radial: radial_cache,
                sh,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂f`.
    pub fn backward(
        &self,
        p: &[f64],
        edges: &[Edge],
        f: &TensorField,
        cache: &ConvCache,
        g: &TensorField,
        grad: &mut [f64],
    ) -> Result<TensorField> {
        self.check(p, f)?;
        if g.layout() != f.layout() || g.nodes() != f.nodes() {
            return Err(Error::layout("output gradient does not match the features"));
        }
        let (w_self, radial_p) = p.split_at(self.self_weight_count());
        let (g_self, g_radial) = grad.split_at_mut(self.self_weight_count());
        let cc = self.channels;
        let ns = sh_len(self.paths.filter_degree());

        let mut df = TensorField::zeros(self.layout(), f.nodes());
        for u in 0..f.nodes() {
            let (x, gu) = (f.node(u), g.node(u));
            let dst = df.node_mut(u);
            for l in 0..=self.max_degree {
                for c in 0..cc {
                    let o = block(cc, l, c);
                    let w = w_self[l * cc + c];
                    let mut acc = 0.0;
                    for m in 0..2 * l + 1 {
                        acc += gu[o + m] * x[o + m];
                        dst[o + m] = w * gu[o + m];
                    }
                    g_self[l * cc + c] += acc;
                }
            }
        }

        let mut dphi = Array2::<f64>::zeros(cache.phi.dim());
        let dmax = 2 * self.max_degree + 1;
        let mut a = vec![0.0; dmax * dmax];
        let mut t = vec![0.0; cc * dmax];
        let mut s = vec![0.0; cc * dmax];
        for (e, edge) in edges.iter().enumerate() {
            let y = &cache.sh[e * ns..(e + 1) * ns];
            let phi_e = row(&cache.phi, e);
            let dphi_e = dphi.row_mut(e).into_slice().expect("contiguous row");
            let fv = f.node(edge.v);
            let gu = g.node(edge.u);
            let mut dfv = vec![0.0; fv.len()];
            for (pi, path) in self.paths.paths.iter().enumerate() {
                self.coupling_matrix(pi, y, &mut a);
                let (nl, nk) = (2 * path.l + 1, 2 * path.k + 1);
                for c in 0..cc {
                    let x = &fv[block(cc, path.k, c)..][..nk];
                    for m in 0..nl {
                        let arow = &a[m * nk..(m + 1) * nk];
                        t[c * nl + m] = arow.iter().zip(x).map(|(p, q)| p * q).sum();
                    }
                }
                // s[c_in][m]: gradient reaching t
                match self.mode {
                    TpMode::ChannelWise => {
                        for c in 0..cc {
                            let go = &gu[block(cc, path.l, c)..][..nl];
                            let tc = &t[c * nl..(c + 1) * nl];
                            dphi_e[pi * cc + c] +=
                                go.iter().zip(tc).map(|(p, q)| p * q).sum::<f64>();
                            let w = phi_e[pi * cc + c];
                            for m in 0..nl {
                                s[c * nl + m] = w * go[m];
                            }
                        }
                    }
                    TpMode::FullyConnected => {
                        s[..cc * nl].fill(0.0);
                        for co in 0..cc {
                            let go = &gu[block(cc, path.l, co)..][..nl];
                            let base = (pi * cc + co) * cc;
                            for ci in 0..cc {
                                let tc = &t[ci * nl..(ci + 1) * nl];
                                dphi_e[base + ci] +=
                                    go.iter().zip(tc).map(|(p, q)| p * q).sum::<f64>();
                                let w = phi_e[base + ci];
                                for m in 0..nl {
                                    s[ci * nl + m] += w * go[m];
                                }
                            }
                        }
                    }
                }
                for c in 0..cc {
                    let o = block(cc, path.k, c);
                    for m in 0..nl {
                        let sm = s[c * nl + m];
                        if sm == 0.0 {
                            continue;
                        }
                        let arow = &a[m * nk..(m + 1) * nk];
                        for m1 in 0..nk {
                            dfv[o + m1] += arow[m1] * sm;
                        }
                    }
                }
            }
            for (d, v) in df.node_mut(edge.v).iter_mut().zip(&dfv) {
                *d += v;
            }
        }
        self.radial
            .backward(radial_p, &cache.radial, dphi.view(), g_radial);
        Ok(df)
    }
}
