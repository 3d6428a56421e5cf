//! Parameter registry, finite-difference gradient checks, optimizers and the
//! training loop.

pub mod optim;
pub mod train;

use std::ops::Range;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use optim::{Method, Optimizer, PlateauScheduler};
pub use train::{train, LogRecord, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlot {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered named slots over one flat parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRegistry {
    slots: Vec<ParamSlot>,
    total: usize,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a slot and returns its offset.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>) -> Result<usize> {
        let name = name.into();
        if self.slots.iter().any(|s| s.name == name) {
            return Err(Error::layout(format!("duplicate parameter slot {name}")));
        }
        let offset = self.total;
        let slot = ParamSlot {
            name,
            shape,
            offset,
        };
        self.total += slot.len();
        self.slots.push(slot);
        Ok(offset)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn get(&self, name: &str) -> Option<&ParamSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn range(&self, name: &str) -> Result<Range<usize>> {
        self.get(name)
            .map(ParamSlot::range)
            .ok_or_else(|| Error::layout(format!("no parameter slot {name}")))
    }

    /// Slot containing a flat index.
    pub fn slot_of(&self, index: usize) -> Option<&ParamSlot> {
        self.slots.iter().find(|s| s.range().contains(&index))
    }

    /// Splits a flat vector into named pieces.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Vec<(String, Vec<f64>)>> {
        if flat.len() != self.total {
            return Err(Error::layout(format!(
                "{} parameters for a registry of {}",
                flat.len(),
                self.total
            )));
        }
        Ok(self
            .slots
            .iter()
            .map(|s| (s.name.clone(), flat[s.range()].to_vec()))
            .collect())
    }

    /// Inverse of [`unflatten`](Self::unflatten); pieces must come in slot order.
    pub fn flatten(&self, pieces: &[(String, Vec<f64>)]) -> Result<Vec<f64>> {
        if pieces.len() != self.slots.len() {
            return Err(Error::layout("piece count differs from slot count"));
        }
        let mut flat = Vec::with_capacity(self.total);
        for (slot, (name, values)) in self.slots.iter().zip(pieces) {
            if &slot.name != name || values.len() != slot.len() {
                return Err(Error::layout(format!(
                    "piece {name} does not match slot {}",
                    slot.name
                )));
            }
            flat.extend_from_slice(values);
        }
        Ok(flat)
    }
}

/// One finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradEntry>,
    pub max_rel_error: f64,
    pub median_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences with step `h·max(1, |θ_i|)` on `n_sampled` random
/// coordinates (all of them when `n_sampled ≥ len`).
///
/// `floor` bounds the denominator of the relative error so that gradients
/// at round-off level do not dominate the report.
pub fn check_gradient(
    loss: impl Fn(&[f64]) -> Result<f64>,
    params: &[f64],
    analytic: &[f64],
    n_sampled: usize,
    h: f64,
    floor: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if params.len() != analytic.len() {
        return Err(Error::layout(
            "gradient length differs from parameter length",
        ));
    }
    let indices: Vec<usize> = if n_sampled >= params.len() {
        (0..params.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = sample(&mut rng, params.len(), n_sampled).into_vec();
        v.sort_unstable();
        v
    };
    let mut work = params.to_vec();
    let mut entries = Vec::with_capacity(indices.len());
    for &i in &indices {
        let step = h * params[i].abs().max(1.0);
        work[i] = params[i] + step;
        let up = loss(&work)?;
        work[i] = params[i] - step;
        let down = loss(&work)?;
        work[i] = params[i];
        let numeric = (up - down) / (2.0 * step);
        entries.push(GradEntry {
            index: i,
            analytic: analytic[i],
            numeric,
            rel_error: relative_error(analytic[i], numeric, floor),
        });
    }
    let mut errs: Vec<f64> = entries.iter().map(|e| e.rel_error).collect();
    errs.sort_by(f64::total_cmp);
    let max_rel_error = errs.last().copied().unwrap_or(0.0);
    let median_rel_error = if errs.is_empty() {
        0.0
    } else {
        errs[errs.len() / 2]
    };
    Ok(GradCheckReport {
        entries,
        max_rel_error,
        median_rel_error,
        tolerance: GRADCHECK_TOLERANCE,
        passed: max_rel_error < GRADCHECK_TOLERANCE,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trip() {
        let mut r = ParamRegistry::new();
        assert_eq!(r.push("a", vec![2, 3]).unwrap(), 0);
        assert_eq!(r.push("b", vec![4]).unwrap(), 6);
        assert!(r.push("a", vec![1]).is_err());
        let flat: Vec<f64> = (0..10).map(f64::from).collect();
        let pieces = r.unflatten(&flat).unwrap();
        assert_eq!(pieces[1].1, vec![6.0, 7.0, 8.0, 9.0]);
        assert_eq!(r.flatten(&pieces).unwrap(), flat);
        assert_eq!(r.slot_of(7).unwrap().name, "b");
        assert!(r.unflatten(&flat[..9]).is_err());
    }

    #[test]
    fn quadratic_gradient_is_exact_to_rounding() {
        let a = [3.0, -1.0, 0.5, 2.0];
        let loss =
            |p: &[f64]| -> Result<f64> { Ok(p.iter().zip(&a).map(|(x, c)| c * x * x + x).sum()) };
        let p = [0.3, -1.2, 4.0, 0.0];
        let g: Vec<f64> = p.iter().zip(&a).map(|(x, c)| 2.0 * c * x + 1.0).collect();
        let report = check_gradient(loss, &p, &g, 10, 1e-5, 1e-12, 0).unwrap();
        assert!(report.max_rel_error < 1e-9, "{}", report.max_rel_error);
        assert!(report.passed);
    }

    #[test]
    fn wrong_gradient_fails() {
        let loss = |p: &[f64]| -> Result<f64> { Ok(p[0] * p[0]) };
        let report = check_gradient(loss, &[1.0], &[3.0], 1, 1e-5, 1e-12, 0).unwrap();
        assert!(!report.passed);
    }
}
