//! Distance-only MLP: Gaussian distance embedding, two SiLU layers, affine head.
//!
//! Parameters of one net are contiguous: `w1 [embed×hidden]`, `b1`,
//! `w2 [hidden×hidden]`, `b2`, `w3 [hidden×out]`, `b3`. Matrices are row-major
//! with the input index first. Weights are stored at unit scale and applied
//! as `X·W/√fan_in + b`.

use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

use crate::error::{Error, Result};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialNet {
    pub embed: usize,
    pub hidden: usize,
    pub out: usize,
    pub cutoff: f64,
}

/// Activations kept from the forward pass.
#[derive(Debug, Clone)]
pub struct RadialCache {
    r: Vec<f64>,
    e: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
}

struct Views<'a> {
    w1: ArrayView2<'a, f64>,
    b1: ArrayView1<'a, f64>,
    w2: ArrayView2<'a, f64>,
    b2: ArrayView1<'a, f64>,
    w3: ArrayView2<'a, f64>,
    b3: ArrayView1<'a, f64>,
}

struct ViewsMut<'a> {
    w1: ArrayViewMut2<'a, f64>,
    b1: ArrayViewMut1<'a, f64>,
    w2: ArrayViewMut2<'a, f64>,
    b2: ArrayViewMut1<'a, f64>,
    w3: ArrayViewMut2<'a, f64>,
    b3: ArrayViewMut1<'a, f64>,
}

impl RadialNet {
    pub fn new(embed: usize, hidden: usize, out: usize, cutoff: f64) -> Result<Self> {
        if embed < 2 || hidden == 0 || out == 0 {
            return Err(Error::domain(
                "radial net needs embed ≥ 2 and positive widths",
            ));
        }
        if !(cutoff > 0.0 && cutoff.is_finite()) {
            return Err(Error::domain(format!(
                "cutoff must be positive, got {cutoff}"
            )));
        }
        Ok(Self {
            embed,
            hidden,
            out,
            cutoff,
        })
    }

    /// `(name, shape)` of the six parameter slots in storage order.
    pub fn slots(&self) -> [(&'static str, Vec<usize>); 6] {
        [
            ("w1", vec![self.embed, self.hidden]),
            ("b1", vec![self.hidden]),
            ("w2", vec![self.hidden, self.hidden]),
            ("b2", vec![self.hidden]),
            ("w3", vec![self.hidden, self.out]),
            ("b3", vec![self.out]),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.slots()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    fn split<'a>(&self, p: &'a [f64]) -> Views<'a> {
        assert_eq!(p.len(), self.param_count(), "radial parameter block length");
        let (e, h, o) = (self.embed, self.hidden, self.out);
        let (w1, rest) = p.split_at(e * h);
        let (b1, rest) = rest.split_at(h);
        let (w2, rest) = rest.split_at(h * h);
        let (b2, rest) = rest.split_at(h);
        let (w3, b3) = rest.split_at(h * o);
        Views {
            w1: ArrayView2::from_shape((e, h), w1).unwrap(),
            b1: ArrayView1::from(b1),
            w2: ArrayView2::from_shape((h, h), w2).unwrap(),
            b2: ArrayView1::from(b2),
            w3: ArrayView2::from_shape((h, o), w3).unwrap(),
            b3: ArrayView1::from(b3),
        }
    }

    fn split_mut<'a>(&self, p: &'a mut [f64]) -> ViewsMut<'a> {
        assert_eq!(p.len(), self.param_count(), "radial gradient block length");
        let (e, h, o) = (self.embed, self.hidden, self.out);
        let (w1, rest) = p.split_at_mut(e * h);
        let (b1, rest) = rest.split_at_mut(h);
        let (w2, rest) = rest.split_at_mut(h * h);
        let (b2, rest) = rest.split_at_mut(h);
        let (w3, b3) = rest.split_at_mut(h * o);
        ViewsMut {
            w1: ArrayViewMut2::from_shape((e, h), w1).unwrap(),
            b1: ArrayViewMut1::from(b1),
            w2: ArrayViewMut2::from_shape((h, h), w2).unwrap(),
            b2: ArrayViewMut1::from(b2),
            w3: ArrayViewMut2::from_shape((h, o), w3).unwrap(),
            b3: ArrayViewMut1::from(b3),
        }
    }

    /// Unit-variance uniform hidden weights, zero biases and a zero head.
    pub fn init(&self, rng: &mut impl Rng, p: &mut [f64]) {
        let mut v = self.split_mut(p);
        let a = 3f64.sqrt();
        v.w1.mapv_inplace(|_| rng.gen_range(-a..a));
        v.w2.mapv_inplace(|_| rng.gen_range(-a..a));
        v.b1.fill(0.0);
        v.b2.fill(0.0);
        v.w3.fill(0.0);
        v.b3.fill(0.0);
    }

    /// Random head whose effective weights lie in `±scale`, for tests that
    /// need non-zero filters.
    pub fn randomize_head(&self, rng: &mut impl Rng, scale: f64, p: &mut [f64]) {
        let mut v = self.split_mut(p);
        let stored = scale * (self.hidden as f64).sqrt();
        v.w3.mapv_inplace(|_| rng.gen_range(-stored..stored));
        v.b3.mapv_inplace(|_| rng.gen_range(-scale..scale));
    }

    fn norms(&self) -> (f64, f64) {
        (
            1.0 / (self.embed as f64).sqrt(),
            1.0 / (self.hidden as f64).sqrt(),
        )
    }

    fn centers(&self) -> (f64, f64) {
        let spacing = self.cutoff / (self.embed - 1) as f64;
        (spacing, spacing)
    }

    fn embedding(&self, r: &[f64]) -> Array2<f64> {
        let (spacing, width) = self.centers();
        Array2::from_shape_fn((r.len(), self.embed), |(i, k)| {
            let t = (r[i] - k as f64 * spacing) / width;
            (-t * t).exp()
        })
    }

    /// Outputs `[r.len() × out]`.
    pub fn forward(&self, p: &[f64], r: &[f64]) -> Result<(Array2<f64>, RadialCache)> {
        let limit = self.cutoff * (1.0 + 1e-12);
        if let Some(bad) = r.iter().find(|&&x| !(x >= 0.0 && x <= limit)) {
            return Err(Error::domain(format!(
                "distance {bad} outside [0, {}]",
                self.cutoff
            )));
        }
        let v = self.split(p);
        let (ne, nh) = self.norms();
        let e = self.embedding(r);
        let a1 = e.dot(&v.w1) * ne + &v.b1;
        let h1 = a1.mapv(silu);
        let a2 = h1.dot(&v.w2) * nh + &v.b2;
        let h2 = a2.mapv(silu);
        let out = h2.dot(&v.w3) * nh + &v.b3;
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                op: "radial_forward".into(),
            });
        }
        Ok((
            out,
            RadialCache {
                r: r.to_vec(),
                e,
                a1,
                h1,
                a2,
                h2,
            },
        ))
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂r`.
    pub fn backward(
        &self,
        p: &[f64],
        cache: &RadialCache,
        g: ArrayView2<f64>,
        grad: &mut [f64],
    ) -> Vec<f64> {
        let v = self.split(p);
        let (ne, nh) = self.norms();
        let mut gv = self.split_mut(grad);
        gv.w3.scaled_add(nh, &cache.h2.t().dot(&g));
        gv.b3.scaled_add(1.0, &g.sum_axis(Axis(0)));
        let dh2 = g.dot(&v.w3.t()) * nh;
        let da2 = dh2 * cache.a2.mapv(silu_grad);
        gv.w2.scaled_add(nh, &cache.h1.t().dot(&da2));
        gv.b2.scaled_add(1.0, &da2.sum_axis(Axis(0)));
        let dh1 = da2.dot(&v.w2.t()) * nh;
        let da1 = dh1 * cache.a1.mapv(silu_grad);
        gv.w1.scaled_add(ne, &cache.e.t().dot(&da1));
        gv.b1.scaled_add(1.0, &da1.sum_axis(Axis(0)));
        let de = da1.dot(&v.w1.t()) * ne;
        let (spacing, width) = self.centers();
        (0..cache.r.len())
            .map(|i| {
                let row = de.slice(s![i, ..]);
                let emb = cache.e.slice(s![i, ..]);
                (0..self.embed)
                    .map(|k| {
                        row[k]
                            * emb[k]
                            * (-2.0 * (cache.r[i] - k as f64 * spacing) / (width * width))
                    })
                    .sum()
            })
            .collect()
    }
}

/// Row `i` of an output matrix as a slice.
pub(crate) fn row(a: &Array2<f64>, i: usize) -> &[f64] {
    let n = a.ncols();
    &a.as_slice().expect("standard layout")[i * n..(i + 1) * n]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(out: usize) -> (RadialNet, Vec<f64>) {
        let net = RadialNet::new(16, 12, out, 3.0).unwrap();
        let mut p = vec![0.0; net.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        net.init(&mut rng, &mut p);
        net.randomize_head(&mut rng, 0.5, &mut p);
        (net, p)
    }

    #[test]
    fn repeated_distance_gives_identical_rows() {
        let (net, p) = random_net(5);
        let (out, _) = net.forward(&p, &[1.3, 1.3, 0.2]).unwrap();
        assert_eq!(row(&out, 0), row(&out, 1));
    }

    #[test]
    fn zero_head_gives_zero_output() {
        let net = RadialNet::new(64, 128, 7, 3.0).unwrap();
        let mut p = vec![0.0; net.param_count()];
        net.init(&mut ChaCha8Rng::seed_from_u64(1), &mut p);
        let (out, _) = net.forward(&p, &[0.0, 1.0, 3.0]).unwrap();
        assert!(out.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn distance_beyond_cutoff_is_rejected() {
        let (net, p) = random_net(2);
        assert!(matches!(net.forward(&p, &[3.5]), Err(Error::Domain(_))));
        assert!(net.forward(&p, &[-0.1]).is_err());
    }

    #[test]
    fn distance_derivative_matches_central_differences() {
        let (net, p) = random_net(4);
        let probe = [0.7, -1.2, 0.4, 2.0];
        for r in [0.0, 0.35, 1.1, 2.4, 2.9] {
            let (_, cache) = net.forward(&p, &[r]).unwrap();
            let g = Array2::from_shape_vec((1, 4), probe.to_vec()).unwrap();
            let mut scratch = vec![0.0; net.param_count()];
            let analytic = net.backward(&p, &cache, g.view(), &mut scratch)[0];
            let h = 1e-4 * r.max(1.0);
            let f = |x: f64| {
                let (o, _) = net.forward(&p, &[x]).unwrap();
                o.iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
            };
            let (lo, hi) = ((r - h).max(0.0), (r + h).min(3.0));
            let numeric = (f(hi) - f(lo)) / (hi - lo);
            let rel = (analytic - numeric).abs() / numeric.abs().max(1e-8);
            // one-sided at the ends of the domain
            let tol = if lo == r || hi == r { 1e-3 } else { 1e-5 };
            assert!(rel < tol, "r={r}: {analytic} vs {numeric}");
        }
    }

    #[test]
    fn parameter_gradient_matches_central_differences() {
        let (net, p) = random_net(3);
        let r = [0.4, 1.7, 2.2];
        let probe = Array2::from_shape_fn((3, 3), |(i, j)| ((i * 3 + j) as f64 * 0.37).sin());
        let loss = |q: &[f64]| {
            let (o, _) = net.forward(q, &r).unwrap();
            (&o * &probe).sum()
        };
        let (_, cache) = net.forward(&p, &r).unwrap();
        let mut grad = vec![0.0; net.param_count()];
        net.backward(&p, &cache, probe.view(), &mut grad);
        for idx in (0..p.len()).step_by(7) {
            let h = 1e-5 * p[idx].abs().max(1.0);
            let mut q = p.clone();
            q[idx] += h;
            let up = loss(&q);
            q[idx] -= 2.0 * h;
            let down = loss(&q);
            let numeric = (up - down) / (2.0 * h);
            assert!(
                (numeric - grad[idx]).abs() < 1e-7 * (1.0 + numeric.abs()),
                "param {idx}"
            );
        }
    }
}
