//! Skip-gram with negative sampling, trained by RMSProp.
//!
//! The model keeps two matrices: `center` rows are the exported node
//! embeddings and `context` rows score candidate neighbors. For a pair
//! `(c, o)` with negatives `n_1..n_k` the loss is the binary cross-entropy
//!
//! ```text
//! L = -ln σ(u_c·v_o) - Σ_i ln(1 - σ(u_c·v_{n_i}))
//! ```
//!
//! and each step updates only the rows it touched.

use std::io::{BufRead, Write};
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;

use crate::diagnet::NodeId;
use crate::error::{Error, Result};
use crate::matrix::{dot, sigmoid, softplus, Matrix};
use crate::seed::{derive_rng, Rng};
use crate::walker::{SkipGramPair, Walk};

/// Half-width of the uniform initialization range.
pub const INIT_BOUND: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub center: Matrix,
    pub context: Matrix,
}

impl EmbeddingModel {
    pub fn num_nodes(&self) -> usize {
        self.center.rows()
    }

    pub fn dim(&self) -> usize {
        self.center.cols()
    }
}

pub fn init_model(num_nodes: usize, dim: usize, rng: &mut Rng) -> Result<EmbeddingModel> {
    if num_nodes == 0 || dim == 0 {
        return Err(Error::argument(format!(
            "embedding shape must be nonzero, got {num_nodes}x{dim}"
        )));
    }
    let center = Matrix::uniform(num_nodes, dim, INIT_BOUND, rng);
    let context = Matrix::uniform(num_nodes, dim, INIT_BOUND, rng);
    Ok(EmbeddingModel { center, context })
}

/// RMSProp hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp {
            lr: 0.001,
            rho: 0.9,
            eps: 1e-7,
        }
    }
}

impl RmsProp {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.rho > 0.0 && self.rho < 1.0 && self.eps >= 0.0) {
            return Err(Error::argument(format!(
                "invalid RMSProp settings {self:?}"
            )));
        }
        Ok(())
    }

    /// One update of `params` in place:
    /// `a <- rho*a + (1-rho)*g^2`, `x <- x - lr*g/(sqrt(a)+eps)`.
    ///
    /// `step` is reported back if the gradient is not finite; nothing is
    /// modified in that case.
    pub fn apply(
        &self,
        params: &mut [f64],
        accum: &mut [f64],
        grad: &[f64],
        step: usize,
    ) -> Result<()> {
        assert_eq!(params.len(), grad.len(), "gradient shape mismatch");
        assert_eq!(params.len(), accum.len(), "accumulator shape mismatch");
        if let Some(bad) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::Training {
                step,
                message: format!("non-finite gradient component {bad}"),
            });
        }
        for ((x, a), &g) in params.iter_mut().zip(accum.iter_mut()).zip(grad) {
            *a = self.rho * *a + (1.0 - self.rho) * g * g;
            let denom = a.sqrt() + self.eps;
            if denom > 0.0 {
                *x -= self.lr * g / denom;
            }
        }
        Ok(())
    }
}

/// Per-matrix RMSProp accumulators, same shape as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsPropState {
    pub center: Matrix,
    pub context: Matrix,
}

impl RmsPropState {
    pub fn for_model(model: &EmbeddingModel) -> Self {
        RmsPropState {
            center: Matrix::zeros(model.num_nodes(), model.dim()),
            context: Matrix::zeros(model.num_nodes(), model.dim()),
        }
    }
}

/// Negative-sampling noise law: node frequency in the corpus to the 3/4.
#[derive(Debug, Clone)]
pub struct NoiseDistribution {
    probs: Vec<f64>,
    sampler: WeightedIndex<f64>,
}

impl NoiseDistribution {
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::argument(
                "noise distribution needs a nonempty corpus",
            ));
        }
        let probs = weights.iter().map(|w| w / total).collect();
        let sampler = WeightedIndex::new(&weights)
            .map_err(|e| Error::argument(format!("noise distribution: {e}")))?;
        Ok(NoiseDistribution { probs, sampler })
    }

    pub fn prob(&self, v: NodeId) -> f64 {
        self.probs.get(v.index()).copied().unwrap_or(0.0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample(&self, rng: &mut Rng) -> NodeId {
        NodeId(self.sampler.sample(rng) as u32)
    }

    /// Nodes with nonzero mass.
    pub fn support(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }
}

pub fn noise_distribution(corpus: &[Walk], num_nodes: usize) -> Result<NoiseDistribution> {
    let mut counts = vec![0u64; num_nodes];
    for walk in corpus {
        for v in walk {
            let slot = counts
                .get_mut(v.index())
                .ok_or_else(|| Error::lookup(format!("node id {} out of range", v.0)))?;
            *slot += 1;
        }
    }
    NoiseDistribution::from_counts(&counts)
}

/// Loss and sparse gradients of one skip-gram example.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGrads {
    pub loss: f64,
    pub center: NodeId,
    pub center_grad: Vec<f64>,
    /// Distinct context rows with their accumulated gradients; the positive
    /// context row comes first.
    pub context_grads: Vec<(NodeId, Vec<f64>)>,
}

pub fn pair_loss_and_grads(
    model: &EmbeddingModel,
    pair: SkipGramPair,
    negatives: &[NodeId],
) -> Result<PairGrads> {
    let n = model.num_nodes();
    for v in std::iter::once(pair.center)
        .chain(std::iter::once(pair.context))
        .chain(negatives.iter().copied())
    {
        if v.index() >= n {
            return Err(Error::lookup(format!(
                "node id {} out of range ({n} rows)",
                v.0
            )));
        }
    }
    if negatives.contains(&pair.context) {
        return Err(Error::argument(
            "negatives must exclude the positive context node",
        ));
    }

    let u = model.center.row(pair.center.index());
    let dim = model.dim();
    let mut center_grad = vec![0.0; dim];
    let mut context_grads: Vec<(NodeId, Vec<f64>)> = Vec::with_capacity(1 + negatives.len());

    // (target, label): positive context has label 1, negatives 0
    let targets = std::iter::once((pair.context, 1.0)).chain(negatives.iter().map(|&v| (v, 0.0)));
    let mut loss = 0.0;
    for (v, label) in targets {
        let ctx = model.context.row(v.index());
        let score = dot(u, ctx);
        loss += if label == 1.0 {
            softplus(-score)
        } else {
            softplus(score)
        };
        let coef = sigmoid(score) - label;
        for (g, &c) in center_grad.iter_mut().zip(ctx) {
            *g += coef * c;
        }
        let slot = match context_grads.iter().position(|(id, _)| *id == v) {
            Some(i) => i,
            None => {
                context_grads.push((v, vec![0.0; dim]));
                context_grads.len() - 1
            }
        };
        for (g, &x) in context_grads[slot].1.iter_mut().zip(u) {
            *g += coef * x;
        }
    }
    Ok(PairGrads {
        loss,
        center: pair.center,
        center_grad,
        context_grads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedConfig {
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub optimizer: RmsProp,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 100,
            negatives: 5,
            epochs: 1,
            optimizer: RmsProp::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub pairs_seen: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
    /// Mean loss over each tenth of the run, in order.
    pub loss_deciles: Vec<f64>,
}

// rejection attempts per negative slot before giving up on it
const MAX_NEGATIVE_DRAWS: usize = 64;

pub fn train_embeddings(
    pairs: &[SkipGramPair],
    num_nodes: usize,
    noise: &NoiseDistribution,
    config: &EmbedConfig,
) -> Result<(EmbeddingModel, TrainReport)> {
    if pairs.is_empty() {
        return Err(Error::argument("no skip-gram pairs to train on"));
    }
    config.optimizer.validate()?;
    let started = Instant::now();
    let mut model = init_model(
        num_nodes,
        config.dim,
        &mut derive_rng(config.seed, "embed-init", &[]),
    )?;
    let mut state = RmsPropState::for_model(&model);
    let mut order_rng = derive_rng(config.seed, "embed-order", &[]);
    let mut neg_rng = derive_rng(config.seed, "embed-negatives", &[]);

    let total_steps = pairs.len() * config.epochs;
    let mut decile_sum = [0.0f64; 10];
    let mut decile_n = [0usize; 10];
    let mut loss_sum = 0.0;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut negatives = Vec::with_capacity(config.negatives);
    let mut step = 0;

    for _ in 0..config.epochs {
        order.shuffle(&mut order_rng);
        for &i in &order {
            let pair = pairs[i];
            negatives.clear();
            for _ in 0..config.negatives {
                let drawn = (0..MAX_NEGATIVE_DRAWS)
                    .map(|_| noise.sample(&mut neg_rng))
                    .find(|&v| v != pair.context);
                if let Some(v) = drawn {
                    negatives.push(v);
                }
            }
            let grads = pair_loss_and_grads(&model, pair, &negatives)?;
            if !grads.loss.is_finite() {
                return Err(Error::Training {
                    step,
                    message: format!("non-finite loss {}", grads.loss),
                });
            }
            apply_pair(&mut model, &mut state, &grads, &config.optimizer, step)?;

            loss_sum += grads.loss;
            let bucket = (step * 10 / total_steps).min(9);
            decile_sum[bucket] += grads.loss;
            decile_n[bucket] += 1;
            step += 1;
        }
    }

    let report = TrainReport {
        pairs_seen: step,
        mean_loss: loss_sum / step as f64,
        wall_seconds: started.elapsed().as_secs_f64(),
        loss_deciles: decile_sum
            .iter()
            .zip(&decile_n)
            .filter(|(_, &n)| n > 0)
            .map(|(s, &n)| s / n as f64)
            .collect(),
    };
    Ok((model, report))
}

fn apply_pair(
    model: &mut EmbeddingModel,
    state: &mut RmsPropState,
    grads: &PairGrads,
    opt: &RmsProp,
    step: usize,
) -> Result<()> {
    let all_finite = grads.center_grad.iter().all(|g| g.is_finite())
        && grads
            .context_grads
            .iter()
            .all(|(_, g)| g.iter().all(|x| x.is_finite()));
    if !all_finite {
        return Err(Error::Training {
            step,
            message: "non-finite gradient".into(),
        });
    }
    let c = grads.center.index();
    opt.apply(
        model.center.row_mut(c),
        state.center.row_mut(c),
        &grads.center_grad,
        step,
    )?;
    for (v, g) in &grads.context_grads {
        let r = v.index();
        opt.apply(model.context.row_mut(r), state.context.row_mut(r), g, step)?;
    }
    Ok(())
}

/// Writes the center matrix: header `<rows> <dim>`, then `key v_1 .. v_dim`.
pub fn export_embeddings<W: Write, S: AsRef<str>>(
    matrix: &Matrix,
    keys: &[S],
    mut sink: W,
) -> Result<()> {
    if keys.len() != matrix.rows() {
        return Err(Error::argument(format!(
            "{} keys for {} embedding rows",
            keys.len(),
            matrix.rows()
        )));
    }
    writeln!(sink, "{} {}", matrix.rows(), matrix.cols())?;
    for (r, key) in keys.iter().enumerate() {
        write!(sink, "{}", key.as_ref())?;
        for v in matrix.row(r) {
            write!(sink, " {v}")?;
        }
        writeln!(sink)?;
    }
    sink.flush()?;
    Ok(())
}

pub fn import_embeddings<R: BufRead>(source: R) -> Result<(Vec<String>, Matrix)> {
    let mut lines = source.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header"))??;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Error::parse(1, e.to_string()))
        })
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(Error::parse(1, "header must be `<rows> <dim>`"));
    };
    let mut keys = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * cols);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let key = fields.next().unwrap_or_default().to_string();
        let before = data.len();
        for f in fields {
            data.push(
                f.parse::<f64>()
                    .map_err(|e| Error::parse(lineno, format!("{f:?}: {e}")))?,
            );
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                lineno,
                format!("expected {cols} values, found {}", data.len() - before),
            ));
        }
        keys.push(key);
    }
    if keys.len() != rows {
        return Err(Error::parse(
            0,
            format!("expected {rows} rows, found {}", keys.len()),
        ));
    }
    Ok((keys, Matrix::from_vec(rows, cols, data)))
}
