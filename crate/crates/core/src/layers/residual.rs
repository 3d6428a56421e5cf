//! Invariant correction at query points:
//! `z(x) = Σ_{|x_v - x| ≤ cutoff} Σ_{k,c} φ_{k,c}(d) q_k Σ_m f_v[k,c,m] Y_k^m(unit(x_v - x))`,
//! where `q_k` is the `k ⊗ k → 0` coupling.

use ndarray::Array2;

use super::conv::block;
use super::radial::{row, RadialCache, RadialNet};
use crate::error::{Error, Result};
use crate::so3::sh::{direction_harmonics_into, sh_len};
use crate::so3::{cg_table, IrrepLayout, TensorField};

#[derive(Debug, Clone)]
pub struct ResidualLayer {
    pub max_degree: usize,
    pub channels: usize,
    pub radial: RadialNet,
    /// `Q(k,k→0)[0; m, m]` per degree and order.
    coupling: Vec<Vec<f64>>,
}

/// Query-atom pairs inside the cutoff and their intermediates.
#[derive(Debug, Clone)]
pub struct ResidualCache {
    pairs: Vec<(usize, usize)>,
    sh: Vec<f64>,
    phi: Array2<f64>,
    radial: Option<RadialCache>,
}

impl ResidualLayer {
    pub fn new(
        max_degree: usize,
        channels: usize,
        embed: usize,
        hidden: usize,
        cutoff: f64,
    ) -> Result<Self> {
        let radial = RadialNet::new(embed, hidden, (max_degree + 1) * channels, cutoff)?;
        let coupling = (0..=max_degree)
            .map(|k| {
                let t = cg_table(k, k, 0).expect("k ⊗ k contains 0");
                let mut q = vec![0.0; 2 * k + 1];
                for &(m1, m2, _, c) in &t.entries {
                    debug_assert_eq!(m1, m2);
                    q[m1] = c;
                }
                q
            })
            .collect();
        Ok(Self {
            max_degree,
            channels,
            radial,
            coupling,
        })
    }

    pub fn param_count(&self) -> usize {
        self.radial.param_count()
    }

    pub fn layout(&self) -> IrrepLayout {
        IrrepLayout::uniform(self.max_degree, self.channels)
    }

    fn check(&self, p: &[f64], coords: &[[f64; 3]], f: &TensorField) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::layout(
                "residual parameter block has the wrong length",
            ));
        }
        if f.layout() != &self.layout() || f.nodes() != coords.len() {
            return Err(Error::domain(
                "residual features do not match the atoms or layout",
            ));
        }
        Ok(())
    }

    pub fn forward(
        &self,
        p: &[f64],
        coords: &[[f64; 3]],
        f: &TensorField,
        queries: &[[f64; 3]],
    ) -> Result<(Vec<f64>, ResidualCache)> {
        self.check(p, coords, f)?;
        let ns = sh_len(self.max_degree);
        let mut pairs = Vec::new();
        let mut dist = Vec::new();
        let mut sh = Vec::new();
        for (qi, x) in queries.iter().enumerate() {
            for (v, xv) in coords.iter().enumerate() {
                let d = [xv[0] - x[0], xv[1] - x[1], xv[2] - x[2]];
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if r <= self.radial.cutoff {
                    pairs.push((qi, v));
                    dist.push(r);
                    let o = sh.len();
                    sh.resize(o + ns, 0.0);
                    direction_harmonics_into(self.max_degree, d, &mut sh[o..]);
                }
            }
        }
        let mut z = vec![0.0; queries.len()];
        if pairs.is_empty() {
            let phi = Array2::zeros((0, self.radial.out));
            return Ok((
                z,
                ResidualCache {
                    pairs,
                    sh,
                    phi,
                    radial: None,
                },
            ));
        }
        let (phi, radial) = self.radial.forward(p, &dist)?;
        let cc = self.channels;
        for (pi, &(qi, v)) in pairs.iter().enumerate() {
            let y = &sh[pi * ns..(pi + 1) * ns];
            let fv = f.node(v);
            let phi_p = row(&phi, pi);
            let mut acc = 0.0;
            for k in 0..=self.max_degree {
                let yk = &y[k * k..(k + 1) * (k + 1)];
                let q = &self.coupling[k];
                for c in 0..cc {
                    let x = &fv[block(cc, k, c)..][..2 * k + 1];
                    let inner: f64 = (0..2 * k + 1).map(|m| q[m] * x[m] * yk[m]).sum();
                    acc += phi_p[k * cc + c] * inner;
                }
            }
            z[qi] += acc;
        }
        Ok((
            z,
            ResidualCache {
                pairs,
                sh,
                phi,
                radial: Some(radial),
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and feature gradients
    /// into `df`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        p: &[f64],
        coords: &[[f64; 3]],
        f: &TensorField,
        cache: &ResidualCache,
        gz: &[f64],
        grad: &mut [f64],
        df: &mut TensorField,
    ) -> Result<()> {
        self.check(p, coords, f)?;
        let Some(radial_cache) = &cache.radial else {
            return Ok(());
        };
        let ns = sh_len(self.max_degree);
        let cc = self.channels;
        let mut dphi = Array2::<f64>::zeros(cache.phi.dim());
        for (pi, &(qi, v)) in cache.pairs.iter().enumerate() {
            let g = gz[qi];
            if g == 0.0 {
                continue;
            }
            let y = &cache.sh[pi * ns..(pi + 1) * ns];
            let fv = f.node(v);
            let phi_p = row(&cache.phi, pi);
            let dst = df.node_mut(v);
            for k in 0..=self.max_degree {
                let yk = &y[k * k..(k + 1) * (k + 1)];
                let q = &self.coupling[k];
                for c in 0..cc {
                    let o = block(cc, k, c);
                    let x = &fv[o..o + 2 * k + 1];
                    let inner: f64 = (0..2 * k + 1).map(|m| q[m] * x[m] * yk[m]).sum();
                    dphi[(pi, k * cc + c)] = g * inner;
                    let s = g * phi_p[k * cc + c];
                    for m in 0..2 * k + 1 {
                        dst[o + m] += s * q[m] * yk[m];
                    }
                }
            }
        }
        self.radial.backward(p, radial_cache, dphi.view(), grad);
        Ok(())
    }
}
