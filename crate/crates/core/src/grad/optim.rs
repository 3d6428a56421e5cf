use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    GradientDescent,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Method {
    pub fn adam() -> Self {
        Method::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub method: Method,
    pub lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn new(method: Method, lr: f64, n: usize) -> Self {
        let moments = matches!(method, Method::Adam { .. });
        let len = if moments { n } else { 0 };
        Self {
            method,
            lr,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::layout(
                "gradient length differs from parameter length",
            ));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                op: format!("optimizer step (gradient entry {i})"),
            });
        }
        self.t += 1;
        match self.method {
            Method::GradientDescent => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            Method::Adam { beta1, beta2, eps } => {
                if self.m.len() != params.len() {
                    return Err(Error::layout(
                        "moment accumulators do not match the parameters",
                    ));
                }
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= self.lr * mh / (vh.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Multiplies the step size by `factor` after `patience` validations
/// without improvement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            min_lr: 0.0,
            best: f64::INFINITY,
            stale: 0,
        }
    }

    /// Records a validation metric; returns true when the step size was cut.
    pub fn observe(&mut self, metric: f64, opt: &mut Optimizer) -> bool {
        if metric < self.best {
            self.best = metric;
            self.stale = 0;
            return false;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            self.stale = 0;
            opt.lr = (opt.lr * self.factor).max(self.min_lr);
            return true;
        }
        false
    }
}
