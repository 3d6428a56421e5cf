use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

pub type Eval2 = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type Eval1 = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Eigenvalue with its L²-normalized eigenfunction.
#[derive(Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub function: Eval1,
}

impl fmt::Debug for Eigenpair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Eigenpair")
            .field("value", &self.value)
            .finish_non_exhaustive()
    }
}

/// Symmetric kernel `W : D × D → R` on `D = [0,1]^dim`.
#[derive(Clone)]
pub struct GraphonKernel {
    pub name: String,
    pub dim: usize,
    pub symmetric: bool,
    eval: Eval2,
    /// Known leading eigenpairs, sorted by decreasing `|λ|`.
    pub eigenpairs: Option<Vec<Eigenpair>>,
    /// Whether `eigenpairs` spans the whole kernel.
    pub exact_rank: Option<usize>,
}

impl fmt::Debug for GraphonKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphonKernel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("symmetric", &self.symmetric)
            .field("exact_rank", &self.exact_rank)
            .finish_non_exhaustive()
    }
}

impl GraphonKernel {
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        (self.eval)(x, y)
    }

    /// Black-box kernel.
    pub fn from_fn(
        name: &str,
        dim: usize,
        symmetric: bool,
        f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            symmetric,
            eval: Arc::new(f),
            eigenpairs: None,
            exact_rank: None,
        }
    }

    /// `Σ_j λ_j φ_j(x) φ_j(y)` from orthonormal `φ_j`.
    pub fn low_rank(name: &str, dim: usize, pairs: Vec<Eigenpair>) -> Self {
        let terms = pairs.clone();
        let eval: Eval2 = Arc::new(move |x, y| {
            terms
                .iter()
                .map(|p| p.value * (p.function)(x) * (p.function)(y))
                .sum()
        });
        let rank = pairs.len();
        let mut sorted = pairs;
        sorted.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()));
        Self {
            name: name.into(),
            dim,
            symmetric: true,
            eval,
            eigenpairs: Some(sorted),
            exact_rank: Some(rank),
        }
    }

    /// `W ≡ 0`.
    pub fn zero(dim: usize) -> Self {
        Self {
            exact_rank: Some(0),
            eigenpairs: Some(Vec::new()),
            ..Self::from_fn("zero", dim, true, |_, _| 0.0)
        }
    }

    /// Rank-3 kernel on trigonometric eigenfunctions: `1`, `√2 cos 2πx₁` and
    /// `√2 sin 2πx₁` in one dimension; in two dimensions the last two use
    /// `x₁` and `x₂` respectively.
    pub fn fourier_rank3(dim: usize, lambda: [f64; 3]) -> Self {
        let s2 = 2f64.sqrt();
        let f0: Eval1 = Arc::new(|_| 1.0);
        let f1: Eval1 = Arc::new(move |x| s2 * (2.0 * PI * x[0]).cos());
        let f2: Eval1 = if dim == 1 {
            Arc::new(move |x| s2 * (2.0 * PI * x[0]).sin())
        } else {
            Arc::new(move |x| s2 * (2.0 * PI * x[1]).cos())
        };
        let pairs = vec![
            Eigenpair {
                value: lambda[0],
                function: f0,
            },
            Eigenpair {
                value: lambda[1],
                function: f1,
            },
            Eigenpair {
                value: lambda[2],
                function: f2,
            },
        ];
        Self::low_rank("fourier-rank3", dim, pairs)
    }

    /// `min(x, y)` on `[0,1]`: `λ_k = 1/((k - ½)²π²)`, `φ_k = √2 sin((k - ½)πx)`.
    pub fn min_kernel(terms: usize) -> Self {
        let pairs = (1..=terms)
            .map(|k| {
                let w = (k as f64 - 0.5) * PI;
                let function: Eval1 = Arc::new(move |x| 2f64.sqrt() * (w * x[0]).sin());
                Eigenpair {
                    value: 1.0 / (w * w),
                    function,
                }
            })
            .collect();
        Self {
            eigenpairs: Some(pairs),
            ..Self::from_fn("min", 1, true, |x, y| x[0].min(y[0]))
        }
    }

    /// `min(x, y) - xy` on `[0,1]`: `λ_k = 1/(k²π²)`, `φ_k = √2 sin(kπx)`.
    pub fn brownian_bridge(terms: usize) -> Self {
        let pairs = (1..=terms)
            .map(|k| {
                let w = k as f64 * PI;
                let function: Eval1 = Arc::new(move |x| 2f64.sqrt() * (w * x[0]).sin());
                Eigenpair {
                    value: 1.0 / (w * w),
                    function,
                }
            })
            .collect();
        Self {
            eigenpairs: Some(pairs),
            ..Self::from_fn("brownian-bridge", 1, true, |x, y| {
                x[0].min(y[0]) - x[0] * y[0]
            })
        }
    }

    /// `exp(-|x - y|² / (2σ²))`.
    pub fn gaussian(dim: usize, sigma: f64) -> Self {
        Self::from_fn("gaussian", dim, true, move |x, y| {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        })
    }
}
