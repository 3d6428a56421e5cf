use std::io::Write;
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{Method, Optimizer, PlateauScheduler};
use crate::error::{Error, Result};
use crate::geometry::sample_queries;
use crate::model::{evaluate_grid, DensityInstance, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    /// Molecules per step.
    pub batch: usize,
    /// Query points sampled per molecule per step.
    pub train_sample: usize,
    /// Query points per evaluation batch.
    pub inf_sample: usize,
    pub lr: f64,
    pub lr_decay: f64,
    /// Validations without improvement before the step size is cut.
    pub patience: usize,
    /// Steps between validations; 0 disables validation.
    pub val_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 40_000,
            batch: 64,
            train_sample: 1024,
            inf_sample: 4096,
            lr: 1e-3,
            lr_decay: 0.5,
            patience: 10,
            val_every: 100,
            seed: 0,
        }
    }
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub nmae_val: Option<f64>,
    pub lr: f64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<LogRecord>,
    pub final_loss: f64,
    pub final_nmae_val: Option<f64>,
    pub best_nmae_val: Option<f64>,
    /// Parameters at the best validation.
    #[serde(skip)]
    pub best_params: Option<Vec<f64>>,
    /// Set when a non-finite value stopped training; the parameters are left
    /// at the last finite step.
    pub aborted: Option<String>,
    pub wall_ms: u64,
}

/// Mean per-molecule NMAE over full grids.
pub fn validate(
    model: &Model,
    params: &[f64],
    set: &[DensityInstance],
    batch: usize,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::UndefinedMetric("validation set is empty".into()));
    }
    let mut total = 0.0;
    for inst in set {
        total += evaluate_grid(model, params, &inst.graph, &inst.grid, batch)?.0;
    }
    Ok(total / set.len() as f64)
}

/// Adam on the Monte-Carlo grid loss with a plateau schedule on the
/// validation NMAE. Each molecule's loss is `|Ω| / k · Σ (ρ̂ - ρ)²` over `k`
/// sampled voxels, averaged over the batch.
pub fn train(
    model: &Model,
    params: &mut [f64],
    train_set: &[DensityInstance],
    val_set: &[DensityInstance],
    config: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    if config.batch == 0 || config.train_sample == 0 {
        return Err(Error::domain("batch and train_sample must be positive"));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Optimizer::new(Method::adam(), config.lr, params.len());
    let mut sched = PlateauScheduler::new(config.lr_decay, config.patience);
    let mut records = Vec::new();
    let mut final_loss = f64::NAN;
    let mut final_nmae = None;
    let mut best: Option<f64> = None;
    let mut best_params = None;
    let mut aborted = None;
    let batch = config.batch.min(train_set.len());

    for step in 1..=config.steps {
        let chosen = sample(&mut rng, train_set.len(), batch).into_vec();
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for &i in &chosen {
            let inst = &train_set[i];
            let k = config.train_sample.min(inst.grid.len());
            let qs = sample_queries(&inst.grid, k, rng.gen())?;
            let weight = inst.grid.voxel_volume() * inst.grid.len() as f64 / k as f64;
            match model.loss_and_grad(params, &inst.graph, &qs, weight) {
                Ok(lg) => {
                    loss += lg.loss;
                    for (a, b) in grad.iter_mut().zip(&lg.grad) {
                        *a += b;
                    }
                }
                Err(e @ Error::NonFinite { .. }) => {
                    aborted = Some(format!("step {step}: {e}"));
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if aborted.is_none() && !loss.is_finite() {
            aborted = Some(format!("step {step}: non-finite loss"));
        }
        if aborted.is_some() {
            break;
        }
        let scale = 1.0 / batch as f64;
        loss *= scale;
        grad.iter_mut().for_each(|g| *g *= scale);
        if let Err(e) = opt.step(params, &grad) {
            aborted = Some(format!("step {step}: {e}"));
            break;
        }
        final_loss = loss;

        let validate_now = config.val_every > 0
            && !val_set.is_empty()
            && (step % config.val_every == 0 || step == config.steps);
        let nmae_val = if validate_now {
            let v = validate(model, params, val_set, config.inf_sample)?;
            sched.observe(v, &mut opt);
            if best.is_none_or(|b| v < b) {
                best = Some(v);
                best_params = Some(params.to_vec());
            }
            final_nmae = Some(v);
            Some(v)
        } else {
            None
        };
        let rec = LogRecord {
            step,
            loss,
            nmae_val,
            lr: opt.lr,
            wall_ms: start.elapsed().as_millis() as u64,
        };
        if let Some(w) = log.as_deref_mut() {
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")
                .map_err(|e| Error::io("<training log>", e))?;
        }
        records.push(rec);
    }
    Ok(TrainReport {
        records,
        final_loss,
        final_nmae_val: final_nmae,
        best_nmae_val: best,
        best_params,
        aborted,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}
