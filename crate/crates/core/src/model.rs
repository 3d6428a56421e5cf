//! The full predictor: atom embeddings, stacked tensor-product convolutions
//! with gates, basis expansion at the query points and the residual operator.

use std::fs;
use std::io::{Read, Write};
use std::path::Path as FsPath;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{
    expand_density, expand_density_backward, make_exponents, BasisSet, CoefficientField,
    RadialBasisSpec, Spacing,
};
use crate::error::{Error, Result};
use crate::geometry::{MolecularGraph, QuerySample, VoxelGrid};
use crate::grad::ParamRegistry;
use crate::layers::conv::block;
use crate::layers::{ConvCache, ConvLayer, Gate, OpCount, PathTable, ResidualLayer, TpMode};
use crate::so3::{IrrepLayout, TensorField};

/// Queries evaluated per parallel task; fixed so reductions are reproducible.
pub const QUERY_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub max_degree: usize,
    /// Radial channels, equal to the number of radial basis functions.
    pub channels: usize,
    pub layers: usize,
    pub cutoff: f64,
    pub vocab: usize,
    pub residual: bool,
    pub mode: TpMode,
    /// Largest filter degree `J`; `None` keeps every `J ≤ ℓ + k`.
    pub filter_degree: Option<usize>,
    pub radial_embed: usize,
    pub radial_hidden: usize,
    pub basis_r_min: f64,
    pub basis_r_max: f64,
    pub basis_spacing: Spacing,
    pub gate: Gate,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            max_degree: 7,
            channels: 16,
            layers: 3,
            cutoff: 3.0,
            vocab: 10,
            residual: true,
            mode: TpMode::ChannelWise,
            filter_degree: None,
            radial_embed: 64,
            radial_hidden: 128,
            basis_r_min: 0.5,
            basis_r_max: 5.0,
            basis_spacing: Spacing::Linear,
            gate: Gate::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels < 2 || self.layers == 0 || self.vocab == 0 {
            return Err(Error::domain(
                "channels ≥ 2, layers ≥ 1 and a non-empty vocabulary are required",
            ));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(Error::domain(format!(
                "cutoff must be positive, got {}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// A molecule and its density grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityInstance {
    pub id: String,
    pub graph: MolecularGraph,
    pub grid: VoxelGrid,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    basis: BasisSet,
    convs: Vec<ConvLayer>,
    residual: Option<ResidualLayer>,
    registry: ParamRegistry,
    embedding_offset: usize,
    conv_offsets: Vec<usize>,
    residual_offset: usize,
}

/// Intermediates of the convolution stack.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    inputs: Vec<TensorField>,
    pre_gate: Vec<TensorField>,
    convs: Vec<ConvCache>,
}

/// Loss, predictions and the gradient with respect to every parameter.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub pred: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let exponents = make_exponents(
            config.basis_r_min,
            config.basis_r_max,
            config.channels,
            config.basis_spacing,
        )?;
        let basis = BasisSet::new(RadialBasisSpec::new(exponents, config.max_degree)?)?;
        let paths = Arc::new(PathTable::new(config.max_degree, config.filter_degree));
        let mut registry = ParamRegistry::new();
        let embedding_offset = registry.push("embedding", vec![config.vocab, config.channels])?;
        let mut convs = Vec::new();
        let mut conv_offsets = Vec::new();
        for i in 0..config.layers {
            let conv = ConvLayer::new(
                config.max_degree,
                config.channels,
                config.mode,
                paths.clone(),
                config.radial_embed,
                config.radial_hidden,
                config.cutoff,
            )?;
            conv_offsets.push(registry.push(
                format!("conv{i}.self"),
                vec![config.max_degree + 1, config.channels],
            )?);
            for (name, shape) in conv.radial.slots() {
                registry.push(format!("conv{i}.radial.{name}"), shape)?;
            }
            convs.push(conv);
        }
        let residual_offset = registry.total();
        let residual = if config.residual {
            let res = ResidualLayer::new(
                config.max_degree,
                config.channels,
                config.radial_embed,
                config.radial_hidden,
                config.cutoff,
            )?;
            for (name, shape) in res.radial.slots() {
                registry.push(format!("residual.radial.{name}"), shape)?;
            }
            Some(res)
        } else {
            None
        };
        Ok(Self {
            config,
            basis,
            convs,
            residual,
            registry,
            embedding_offset,
            conv_offsets,
            residual_offset,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn basis(&self) -> &BasisSet {
        &self.basis
    }

    pub fn registry(&self) -> &ParamRegistry {
        &self.registry
    }

    pub fn param_count(&self) -> usize {
        self.registry.total()
    }

    pub fn layout(&self) -> IrrepLayout {
        IrrepLayout::uniform(self.config.max_degree, self.config.channels)
    }

    pub fn convs(&self) -> &[ConvLayer] {
        &self.convs
    }

    fn conv_params<'a>(&self, params: &'a [f64], i: usize) -> &'a [f64] {
        let o = self.conv_offsets[i];
        &params[o..o + self.convs[i].param_count()]
    }

    fn residual_params<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        let n = self.residual.as_ref().map_or(0, |r| r.param_count());
        &params[self.residual_offset..self.residual_offset + n]
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::layout(format!(
                "model expects {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Unit-variance embeddings, unit self weights, variance-preserving radial
    /// layers and zero radial heads.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = vec![0.0; self.param_count()];
        let emb = self.config.vocab * self.config.channels;
        for v in &mut p[self.embedding_offset..self.embedding_offset + emb] {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        for (i, conv) in self.convs.iter().enumerate() {
            let o = self.conv_offsets[i];
            let ns = conv.self_weight_count();
            p[o..o + ns].fill(1.0);
            conv.radial
                .init(&mut rng, &mut p[o + ns..o + conv.param_count()]);
        }
        if let Some(res) = &self.residual {
            res.radial.init(
                &mut rng,
                &mut p[self.residual_offset..self.residual_offset + res.param_count()],
            );
        }
        p
    }

    /// Replaces every radial head by uniform noise of the given scale, so the
    /// convolution and residual paths are active.
    pub fn randomize_heads(&self, params: &mut [f64], seed: u64, scale: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, conv) in self.convs.iter().enumerate() {
            let o = self.conv_offsets[i] + conv.self_weight_count();
            conv.radial.randomize_head(
                &mut rng,
                scale,
                &mut params[o..o + conv.radial.param_count()],
            );
        }
        if let Some(res) = &self.residual {
            let o = self.residual_offset;
            res.radial
                .randomize_head(&mut rng, scale, &mut params[o..o + res.param_count()]);
        }
    }

    /// Degree-0 blocks from the embedding table, everything else zero.
    pub fn init_features(&self, params: &[f64], atom_types: &[usize]) -> Result<TensorField> {
        self.check_params(params)?;
        let cc = self.config.channels;
        let mut f = TensorField::zeros(self.layout(), atom_types.len());
        for (u, &t) in atom_types.iter().enumerate() {
            if t >= self.config.vocab {
                return Err(Error::domain(format!(
                    "atom type {t} outside vocabulary of {}",
                    self.config.vocab
                )));
            }
            let row = &params[self.embedding_offset + t * cc..self.embedding_offset + (t + 1) * cc];
            let node = f.node_mut(u);
            for (c, &v) in row.iter().enumerate() {
                node[block(cc, 0, c)] = v;
            }
        }
        Ok(f)
    }

    fn check_graph(&self, graph: &MolecularGraph) -> Result<()> {
        if graph.cutoff > self.config.cutoff * (1.0 + 1e-12) {
            return Err(Error::domain(format!(
                "graph built with cutoff {} exceeds the model cutoff {}",
                graph.cutoff, self.config.cutoff
            )));
        }
        Ok(())
    }

    /// Final per-atom basis coefficients.
    pub fn encode(
        &self,
        params: &[f64],
        graph: &MolecularGraph,
    ) -> Result<(CoefficientField, EncodeCache)> {
        self.encode_counted(params, graph, None)
    }

    fn encode_counted(
        &self,
        params: &[f64],
        graph: &MolecularGraph,
        mut counter: Option<&mut OpCount>,
    ) -> Result<(CoefficientField, EncodeCache)> {
        self.check_graph(graph)?;
        let mut x = self.init_features(params, &graph.atom_type)?;
        let mut cache = EncodeCache {
            inputs: Vec::new(),
            pre_gate: Vec::new(),
            convs: Vec::new(),
        };
        for (i, conv) in self.convs.iter().enumerate() {
            let (pre, cc) = conv.forward(
                self.conv_params(params, i),
                &graph.edges,
                &x,
                counter.as_deref_mut(),
            )?;
            let next = self.config.gate.forward(&pre)?;
            cache.inputs.push(x);
            cache.pre_gate.push(pre);
            cache.convs.push(cc);
            x = next;
        }
        Ok((x, cache))
    }

    /// Multiplies spent in the tensor-product stage of one forward pass.
    pub fn count_ops(&self, params: &[f64], graph: &MolecularGraph) -> Result<OpCount> {
        let mut count = OpCount::default();
        self.encode_counted(params, graph, Some(&mut count))?;
        Ok(count)
    }

    fn query_values(
        &self,
        params: &[f64],
        graph: &MolecularGraph,
        coeffs: &CoefficientField,
        queries: &[[f64; 3]],
    ) -> Result<Vec<f64>> {
        let mut rho = expand_density(&self.basis, coeffs, &graph.atom_coord, queries)?;
        if let Some(res) = &self.residual {
            let (z, _) = res.forward(
                self.residual_params(params),
                &graph.atom_coord,
                coeffs,
                queries,
            )?;
            for (r, zi) in rho.iter_mut().zip(z) {
                *r += zi;
            }
        }
        Ok(rho)
    }

    /// Predicted density at the query points.
    pub fn predict(
        &self,
        params: &[f64],
        graph: &MolecularGraph,
        queries: &[[f64; 3]],
    ) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let (coeffs, _) = self.encode(params, graph)?;
        self.predict_from_coefficients(params, graph, &coeffs, queries)
    }

    pub fn predict_from_coefficients(
        &self,
        params: &[f64],
        graph: &MolecularGraph,
        coeffs: &CoefficientField,
        queries: &[[f64; 3]],
    ) -> Result<Vec<f64>> {
        let chunks: Vec<Result<Vec<f64>>> = queries
            .par_chunks(QUERY_CHUNK)
            .map(|q| self.query_values(params, graph, coeffs, q))
            .collect();
        let mut out = Vec::with_capacity(queries.len());
        for c in chunks {
            out.extend(c?);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "predict_density".into(),
            });
        }
        Ok(out)
    }

    /// `Σ w (ρ̂ - ρ)²` over the sample and its exact gradient.
    pub fn loss_and_grad(
        &self,
        params: &[f64],
        graph: &MolecularGraph,
        sample: &QuerySample,
        weight: f64,
    ) -> Result<LossGrad> {
        self.check_params(params)?;
        if sample.points.len() != sample.targets.len() {
            return Err(Error::domain("sample points and targets differ in length"));
        }
        let (coeffs, cache) = self.encode(params, graph)?;
        let res_len = self.residual.as_ref().map_or(0, |r| r.param_count());

        struct Part {
            loss: f64,
            pred: Vec<f64>,
            df: CoefficientField,
            dres: Vec<f64>,
        }
        let parts: Vec<Result<Part>> = sample
            .points
            .par_chunks(QUERY_CHUNK)
            .zip(sample.targets.par_chunks(QUERY_CHUNK))
            .map(|(q, t)| {
                let mut pred = expand_density(&self.basis, &coeffs, &graph.atom_coord, q)?;
                let res_out = match &self.residual {
                    Some(res) => {
                        let (z, rc) = res.forward(
                            self.residual_params(params),
                            &graph.atom_coord,
                            &coeffs,
                            q,
                        )?;
                        for (p, zi) in pred.iter_mut().zip(&z) {
                            *p += zi;
                        }
                        Some(rc)
                    }
                    None => None,
                };
                if pred.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        op: "predict_density".into(),
                    });
                }
                let diff: Vec<f64> = pred.iter().zip(t).map(|(p, y)| p - y).collect();
                let loss = weight * diff.iter().map(|d| d * d).sum::<f64>();
                let gr: Vec<f64> = diff.iter().map(|d| 2.0 * weight * d).collect();
                let mut df = expand_density_backward(&self.basis, &graph.atom_coord, q, &gr)?;
                let mut dres = vec![0.0; res_len];
                if let (Some(res), Some(rc)) = (&self.residual, &res_out) {
                    res.backward(
                        self.residual_params(params),
                        &graph.atom_coord,
                        &coeffs,
                        rc,
                        &gr,
                        &mut dres,
                        &mut df,
                    )?;
                }
                Ok(Part {
                    loss,
                    pred,
                    df,
                    dres,
                })
            })
            .collect();

        let mut loss = 0.0;
        let mut pred = Vec::with_capacity(sample.len());
        let mut grad = vec![0.0; self.param_count()];
        let mut g = TensorField::zeros(self.layout(), graph.atoms());
        for part in parts {
            let part = part?;
            loss += part.loss;
            pred.extend(part.pred);
            for (a, b) in g.as_mut_slice().iter_mut().zip(part.df.as_slice()) {
                *a += b;
            }
            for (a, b) in grad[self.residual_offset..self.residual_offset + res_len]
                .iter_mut()
                .zip(&part.dres)
            {
                *a += b;
            }
        }
        self.backward_encode(params, graph, &cache, g, &mut grad)?;
        if let Some(i) = grad.iter().position(|v| !v.is_finite()) {
            let name = self.registry.slot_of(i).map_or("?", |s| s.name.as_str());
            return Err(Error::NonFinite {
                op: format!("backward ({name})"),
            });
        }
        Ok(LossGrad { loss, pred, grad })
    }

    /// Back-propagates `∂L/∂coefficients` through the gates, convolutions and
    /// embeddings, accumulating into `grad`.
    pub fn backward_encode(
        &self,
        params: &[f64],
        graph: &MolecularGraph,
        cache: &EncodeCache,
        mut g: TensorField,
        grad: &mut [f64],
    ) -> Result<()> {
        for i in (0..self.convs.len()).rev() {
            let conv = &self.convs[i];
            let gp = self.config.gate.backward(&cache.pre_gate[i], &g)?;
            let o = self.conv_offsets[i];
            let slot = &mut grad[o..o + conv.param_count()];
            g = conv.backward(
                self.conv_params(params, i),
                &graph.edges,
                &cache.inputs[i],
                &cache.convs[i],
                &gp,
                slot,
            )?;
        }
        let cc = self.config.channels;
        for (u, &t) in graph.atom_type.iter().enumerate() {
            let node = g.node(u);
            for c in 0..cc {
                grad[self.embedding_offset + t * cc + c] += node[block(cc, 0, c)];
            }
        }
        Ok(())
    }

    /// Writes a checkpoint: magic line, header length, JSON header, then the
    /// parameters as little-endian f64.
    pub fn save_checkpoint(&self, path: &FsPath, params: &[f64]) -> Result<()> {
        self.check_params(params)?;
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            layout: self.layout(),
            exponents: self.basis.spec().exponents.clone(),
            registry: self.registry.clone(),
            count: params.len(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(16 + json.len() + 8 * params.len());
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&json);
        for v in params {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &FsPath) -> Result<(Model, Vec<f64>)> {
        let mut buf = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        let corrupt = |message: &str| Error::Corrupt {
            path: path.to_path_buf(),
            message: message.into(),
        };
        let n = CHECKPOINT_MAGIC.len();
        if buf.len() < n + 8 || &buf[..n] != CHECKPOINT_MAGIC {
            return Err(corrupt("missing checkpoint magic"));
        }
        let hlen = u64::from_le_bytes(buf[n..n + 8].try_into().unwrap()) as usize;
        let body = &buf[n + 8..];
        if body.len() < hlen {
            return Err(corrupt("truncated header"));
        }
        let header: CheckpointHeader = serde_json::from_slice(&body[..hlen])
            .map_err(|e| corrupt(&format!("bad header: {e}")))?;
        let blob = &body[hlen..];
        if blob.len() != 8 * header.count {
            return Err(corrupt(
                "parameter blob length differs from the header count",
            ));
        }
        let model = Model::new(header.config)?;
        if model.registry != header.registry || model.basis.spec().exponents != header.exponents {
            return Err(corrupt(
                "header registry or exponents disagree with the configuration",
            ));
        }
        let params: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if params.len() != model.param_count() {
            return Err(corrupt("parameter count differs from the model"));
        }
        Ok((model, params))
    }
}

const CHECKPOINT_MAGIC: &[u8] = b"INFGCN-CKPT\n";
const CHECKPOINT_FORMAT: &str = "infgcn-checkpoint-v1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    config: ModelConfig,
    layout: IrrepLayout,
    exponents: Vec<f64>,
    registry: ParamRegistry,
    count: usize,
}

/// `Σ w (pred - target)²`
pub fn loss_l2(pred: &[f64], target: &[f64], weight: f64) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::domain(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    Ok(weight
        * pred
            .iter()
            .zip(target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>())
}

/// Sums needed for the normalized mean absolute error, so batches can be
/// combined before dividing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NmaeAccumulator {
    pub abs_err: f64,
    pub abs_target: f64,
}

impl NmaeAccumulator {
    pub fn add(&mut self, pred: &[f64], target: &[f64]) -> Result<()> {
        if pred.len() != target.len() {
            return Err(Error::domain(format!(
                "{} predictions for {} targets",
                pred.len(),
                target.len()
            )));
        }
        for (p, t) in pred.iter().zip(target) {
            self.abs_err += (p - t).abs();
            self.abs_target += t.abs();
        }
        Ok(())
    }

    pub fn percent(&self) -> Result<f64> {
        if !(self.abs_target > 0.0) {
            return Err(Error::UndefinedMetric("NMAE of an all-zero target".into()));
        }
        Ok(100.0 * self.abs_err / self.abs_target)
    }
}

/// `100 · Σ|pred - target| / Σ|target|`
pub fn nmae(pred: &[f64], target: &[f64]) -> Result<f64> {
    let mut acc = NmaeAccumulator::default();
    acc.add(pred, target)?;
    acc.percent()
}

/// NMAE over the full grid, evaluated in consecutive batches.
pub fn evaluate_grid(
    model: &Model,
    params: &[f64],
    graph: &MolecularGraph,
    grid: &VoxelGrid,
    batch_size: usize,
) -> Result<(f64, Vec<f64>)> {
    let (coeffs, _) = model.encode(params, graph)?;
    let mut acc = NmaeAccumulator::default();
    let mut pred = Vec::with_capacity(grid.len());
    for batch in crate::geometry::partition_grid(grid, batch_size)? {
        let p = model.predict_from_coefficients(params, graph, &coeffs, &batch.points)?;
        acc.add(&p, &batch.targets)?;
        pred.extend(p);
    }
    Ok((acc.percent()?, pred))
}
