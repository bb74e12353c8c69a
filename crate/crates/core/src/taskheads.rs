//! Downstream networks: an embedding layer followed by one sigmoid layer.
//!
//! The node classifier looks up one embedding row and is trained with summed
//! binary cross-entropy against a one-hot class vector. The disease predictor
//! pools the rows of a symptom set and is trained with mean squared error
//! against a one-hot disease vector. Both train with RMSProp, one example per
//! update, and fine-tune the embedding unless frozen.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;

use crate::diagnet::NodeId;
use crate::embed::{EmbeddingModel, RmsProp, INIT_BOUND};
use crate::error::{Error, Result};
use crate::matrix::{sigmoid, Matrix};
use crate::seed::{derive_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledNode {
    pub node: NodeId,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientCase {
    pub disease: NodeId,
    /// Sorted, distinct symptom-occurrence ids.
    pub symptoms: Vec<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    #[default]
    Mean,
    Sum,
}

/// Dense sigmoid layer: `σ(x·W + b)` with `W` of shape dim × classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmoidLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl SigmoidLayer {
    pub fn new(dim: usize, classes: usize, rng: &mut Rng) -> Self {
        SigmoidLayer {
            weights: Matrix::uniform(dim, classes, INIT_BOUND, rng),
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (zc, w) in z.iter_mut().zip(self.weights.row(j)) {
                *zc += xj * w;
            }
        }
        z
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.logits(x).into_iter().map(sigmoid).collect()
    }

    /// Gradients given `delta = dL/dz`; returns `dL/dx`.
    fn backward(&self, x: &[f64], delta: &[f64], grads: &mut LayerGrads) -> Vec<f64> {
        for (j, &xj) in x.iter().enumerate() {
            for (g, d) in grads.weights.row_mut(j).iter_mut().zip(delta) {
                *g += xj * d;
            }
        }
        for (g, d) in grads.bias.iter_mut().zip(delta) {
            *g += d;
        }
        (0..x.len())
            .map(|j| {
                self.weights
                    .row(j)
                    .iter()
                    .zip(delta)
                    .map(|(w, d)| w * d)
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Loss and gradients for one example. Embedding gradients are sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub loss: f64,
    pub embedding: Vec<(NodeId, Vec<f64>)>,
    pub layer: LayerGrads,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub embedding: Matrix,
    pub output: SigmoidLayer,
}

impl ClassifierModel {
    /// Classifier over a freshly initialized embedding (no pretraining).
    pub fn random(num_nodes: usize, dim: usize, classes: usize, rng: &mut Rng) -> Result<Self> {
        if num_nodes == 0 || dim == 0 {
            return Err(Error::argument("embedding shape must be nonzero"));
        }
        let embedding = Matrix::uniform(num_nodes, dim, INIT_BOUND, rng);
        Self::with_embedding(embedding, classes, rng)
    }

    pub fn from_pretrained(
        pretrained: &EmbeddingModel,
        classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::with_embedding(pretrained.center.clone(), classes, rng)
    }

    pub fn with_embedding(embedding: Matrix, classes: usize, rng: &mut Rng) -> Result<Self> {
        if classes == 0 {
            return Err(Error::argument("classifier needs at least one class"));
        }
        let output = SigmoidLayer::new(embedding.cols(), classes, rng);
        Ok(ClassifierModel { embedding, output })
    }

    pub fn classes(&self) -> usize {
        self.output.classes()
    }

    fn row(&self, node: NodeId) -> Result<&[f64]> {
        if node.index() >= self.embedding.rows() {
            return Err(Error::lookup(format!(
                "node id {} outside embedding of {} rows",
                node.0,
                self.embedding.rows()
            )));
        }
        Ok(self.embedding.row(node.index()))
    }

    pub fn forward(&self, node: NodeId) -> Result<Vec<f64>> {
        Ok(self.output.forward(self.row(node)?))
    }

    /// Summed binary cross-entropy against the one-hot vector of `label`.
    pub fn loss_and_grads(&self, example: LabeledNode) -> Result<HeadGrads> {
        let x = self.row(example.node)?;
        if example.label >= self.classes() {
            return Err(Error::argument(format!(
                "label {} out of range for {} classes",
                example.label,
                self.classes()
            )));
        }
        let z = self.output.logits(x);
        let mut loss = 0.0;
        let mut delta = Vec::with_capacity(z.len());
        for (c, &zc) in z.iter().enumerate() {
            let y = if c == example.label { 1.0 } else { 0.0 };
            // -[y ln σ(z) + (1-y) ln(1-σ(z))] = softplus(z) - y z
            loss += crate::matrix::softplus(zc) - y * zc;
            delta.push(sigmoid(zc) - y);
        }
        let mut layer = LayerGrads {
            weights: Matrix::zeros(x.len(), self.classes()),
            bias: vec![0.0; self.classes()],
        };
        let dx = self.output.backward(x, &delta, &mut layer);
        Ok(HeadGrads {
            loss,
            embedding: vec![(example.node, dx)],
            layer,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub embedding: Matrix,
    pub output: SigmoidLayer,
    /// Disease node for each output slot.
    pub diseases: Vec<NodeId>,
    pub pooling: Pooling,
}

impl PredictorModel {
    pub fn with_embedding(embedding: Matrix, diseases: Vec<NodeId>, rng: &mut Rng) -> Result<Self> {
        if diseases.is_empty() {
            return Err(Error::argument("predictor needs at least one disease"));
        }
        let output = SigmoidLayer::new(embedding.cols(), diseases.len(), rng);
        Ok(PredictorModel {
            embedding,
            output,
            diseases,
            pooling: Pooling::Mean,
        })
    }

    pub fn random(
        num_nodes: usize,
        dim: usize,
        diseases: Vec<NodeId>,
        rng: &mut Rng,
    ) -> Result<Self> {
        if num_nodes == 0 || dim == 0 {
            return Err(Error::argument("embedding shape must be nonzero"));
        }
        let embedding = Matrix::uniform(num_nodes, dim, INIT_BOUND, rng);
        Self::with_embedding(embedding, diseases, rng)
    }

    pub fn from_pretrained(
        pretrained: &EmbeddingModel,
        diseases: Vec<NodeId>,
        rng: &mut Rng,
    ) -> Result<Self> {
        Self::with_embedding(pretrained.center.clone(), diseases, rng)
    }

    pub fn classes(&self) -> usize {
        self.output.classes()
    }

    /// Output slot of a disease node.
    pub fn class_of(&self, disease: NodeId) -> Option<usize> {
        self.diseases.iter().position(|&d| d == disease)
    }

    fn pool(&self, symptoms: &[NodeId]) -> Result<Vec<f64>> {
        if symptoms.is_empty() {
            return Err(Error::argument("symptom set is empty"));
        }
        let mut pooled = vec![0.0; self.embedding.cols()];
        for &s in symptoms {
            if s.index() >= self.embedding.rows() {
                return Err(Error::lookup(format!("node id {} outside embedding", s.0)));
            }
            for (p, v) in pooled.iter_mut().zip(self.embedding.row(s.index())) {
                *p += v;
            }
        }
        if self.pooling == Pooling::Mean {
            let m = symptoms.len() as f64;
            pooled.iter_mut().for_each(|p| *p /= m);
        }
        Ok(pooled)
    }

    pub fn forward(&self, symptoms: &[NodeId]) -> Result<Vec<f64>> {
        Ok(self.output.forward(&self.pool(symptoms)?))
    }

    /// Mean squared error over all outputs against the one-hot target.
    pub fn loss_and_grads(&self, symptoms: &[NodeId], target: usize) -> Result<HeadGrads> {
        if target >= self.classes() {
            return Err(Error::argument(format!("target {target} out of range")));
        }
        let x = self.pool(symptoms)?;
        let out = self.output.forward(&x);
        let c = out.len() as f64;
        let mut loss = 0.0;
        let delta: Vec<f64> = out
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let y = if k == target { 1.0 } else { 0.0 };
                loss += (p - y) * (p - y) / c;
                2.0 * (p - y) / c * p * (1.0 - p)
            })
            .collect();
        let mut layer = LayerGrads {
            weights: Matrix::zeros(x.len(), self.classes()),
            bias: vec![0.0; self.classes()],
        };
        let dx = self.output.backward(&x, &delta, &mut layer);
        let scale = match self.pooling {
            Pooling::Mean => 1.0 / symptoms.len() as f64,
            Pooling::Sum => 1.0,
        };
        let mut embedding: Vec<(NodeId, Vec<f64>)> = Vec::with_capacity(symptoms.len());
        for &s in symptoms {
            match embedding.iter_mut().find(|(id, _)| *id == s) {
                Some((_, g)) => g.iter_mut().zip(&dx).for_each(|(g, d)| *g += scale * d),
                None => embedding.push((s, dx.iter().map(|d| scale * d).collect())),
            }
        }
        Ok(HeadGrads {
            loss,
            embedding,
            layer,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub epochs: usize,
    pub optimizer: RmsProp,
    pub freeze_embedding: bool,
    /// Symptom pooling used by predictors built from this config.
    pub pooling: Pooling,
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            epochs: 10,
            optimizer: RmsProp::default(),
            freeze_embedding: false,
            pooling: Pooling::Mean,
            seed: 0,
        }
    }
}

/// RMSProp accumulators for one head.
struct HeadState {
    embedding: Matrix,
    weights: Matrix,
    bias: Vec<f64>,
}

impl HeadState {
    fn new(embedding: &Matrix, layer: &SigmoidLayer) -> Self {
        HeadState {
            embedding: Matrix::zeros(embedding.rows(), embedding.cols()),
            weights: Matrix::zeros(layer.weights.rows(), layer.weights.cols()),
            bias: vec![0.0; layer.bias.len()],
        }
    }

    fn apply(
        &mut self,
        embedding: &mut Matrix,
        layer: &mut SigmoidLayer,
        grads: &HeadGrads,
        config: &HeadConfig,
        step: usize,
    ) -> Result<()> {
        if !grads.loss.is_finite() {
            return Err(Error::Training {
                step,
                message: format!("non-finite loss {}", grads.loss),
            });
        }
        let opt = &config.optimizer;
        opt.apply(
            layer.weights.as_mut_slice(),
            self.weights.as_mut_slice(),
            grads.layer.weights.as_slice(),
            step,
        )?;
        opt.apply(&mut layer.bias, &mut self.bias, &grads.layer.bias, step)?;
        if !config.freeze_embedding {
            for (v, g) in &grads.embedding {
                let r = v.index();
                opt.apply(embedding.row_mut(r), self.embedding.row_mut(r), g, step)?;
            }
        }
        Ok(())
    }
}

/// Mean training loss of each epoch.
pub type EpochLosses = Vec<f64>;

pub fn train_classifier(
    mut model: ClassifierModel,
    data: &[LabeledNode],
    config: &HeadConfig,
) -> Result<(ClassifierModel, EpochLosses)> {
    if data.is_empty() {
        return Err(Error::argument("no labeled nodes to train on"));
    }
    config.optimizer.validate()?;
    let mut rng = derive_rng(config.seed, "classifier-order", &[]);
    let mut state = HeadState::new(&model.embedding, &model.output);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let grads = model.loss_and_grads(data[i])?;
            total += grads.loss;
            state.apply(
                &mut model.embedding,
                &mut model.output,
                &grads,
                config,
                step,
            )?;
            step += 1;
        }
        losses.push(total / data.len() as f64);
    }
    Ok((model, losses))
}

pub fn train_predictor(
    mut model: PredictorModel,
    cases: &[PatientCase],
    config: &HeadConfig,
) -> Result<(PredictorModel, EpochLosses)> {
    if cases.is_empty() {
        return Err(Error::argument("no patient cases to train on"));
    }
    config.optimizer.validate()?;
    let targets = cases
        .iter()
        .map(|c| {
            model.class_of(c.disease).ok_or_else(|| {
                Error::lookup(format!("disease node {} has no output slot", c.disease.0))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = derive_rng(config.seed, "predictor-order", &[]);
    let mut state = HeadState::new(&model.embedding, &model.output);
    let mut order: Vec<usize> = (0..cases.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let grads = model.loss_and_grads(&cases[i].symptoms, targets[i])?;
            total += grads.loss;
            state.apply(
                &mut model.embedding,
                &mut model.output,
                &grads,
                config,
                step,
            )?;
            step += 1;
        }
        losses.push(total / cases.len() as f64);
    }
    Ok((model, losses))
}

/// Index of the largest probability; ties go to the lowest index.
pub fn predict(probabilities: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probabilities.iter().enumerate().skip(1) {
        if p > probabilities[best] {
            best = i;
        }
    }
    best
}

fn write_row<W: Write>(sink: &mut W, row: &[f64]) -> Result<()> {
    let text: Vec<String> = row.iter().map(|v| v.to_string()).collect();
    writeln!(sink, "{}", text.join(" "))?;
    Ok(())
}

fn write_layer<W: Write>(sink: &mut W, embedding: &Matrix, layer: &SigmoidLayer) -> Result<()> {
    for r in 0..embedding.rows() {
        write_row(sink, embedding.row(r))?;
    }
    for r in 0..layer.weights.rows() {
        write_row(sink, layer.weights.row(r))?;
    }
    write_row(sink, &layer.bias)
}

struct Reader<R> {
    lines: std::io::Lines<R>,
    lineno: usize,
}

impl<R: BufRead> Reader<R> {
    fn line(&mut self) -> Result<String> {
        self.lineno += 1;
        match self.lines.next() {
            Some(l) => Ok(l?),
            None => Err(Error::parse(self.lineno, "unexpected end of checkpoint")),
        }
    }

    fn numbers<T: std::str::FromStr>(&mut self, expect: usize) -> Result<Vec<T>> {
        let line = self.line()?;
        let out = line
            .split_whitespace()
            .map(|t| {
                t.parse::<T>()
                    .map_err(|_| Error::parse(self.lineno, format!("bad number {t:?}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if out.len() != expect {
            return Err(Error::parse(
                self.lineno,
                format!("expected {expect} values, found {}", out.len()),
            ));
        }
        Ok(out)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.numbers::<f64>(cols)?);
        }
        Ok(Matrix::from_vec(rows, cols, data))
    }

    fn header(&mut self, tag: &str) -> Result<Vec<String>> {
        let line = self.line()?;
        let mut fields = line.split_whitespace().map(str::to_string);
        if fields.next().as_deref() != Some(tag) {
            return Err(Error::parse(
                self.lineno,
                format!("expected a `{tag}` checkpoint"),
            ));
        }
        Ok(fields.collect())
    }
}

fn parse_dims(fields: &[String], n: usize, lineno: usize) -> Result<Vec<usize>> {
    let dims = fields
        .iter()
        .take(n)
        .map(|f| {
            f.parse::<usize>()
                .map_err(|_| Error::parse(lineno, format!("bad size {f:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if dims.len() != n {
        return Err(Error::parse(lineno, "truncated header"));
    }
    Ok(dims)
}

impl ClassifierModel {
    /// Header `classifier <rows> <dim> <classes>`, then embedding rows,
    /// weight rows and the bias row.
    pub fn save<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(
            sink,
            "classifier {} {} {}",
            self.embedding.rows(),
            self.embedding.cols(),
            self.classes()
        )?;
        write_layer(&mut sink, &self.embedding, &self.output)?;
        sink.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        let mut rd = Reader {
            lines: source.lines(),
            lineno: 0,
        };
        let fields = rd.header("classifier")?;
        let d = parse_dims(&fields, 3, 1)?;
        let embedding = rd.matrix(d[0], d[1])?;
        let weights = rd.matrix(d[1], d[2])?;
        let bias = rd.numbers::<f64>(d[2])?;
        Ok(ClassifierModel {
            embedding,
            output: SigmoidLayer { weights, bias },
        })
    }
}

impl PredictorModel {
    /// Header `predictor <rows> <dim> <classes> <mean|sum>`, a line of
    /// disease ids, then embedding rows, weight rows and the bias row.
    pub fn save<W: Write>(&self, mut sink: W) -> Result<()> {
        let pooling = match self.pooling {
            Pooling::Mean => "mean",
            Pooling::Sum => "sum",
        };
        writeln!(
            sink,
            "predictor {} {} {} {pooling}",
            self.embedding.rows(),
            self.embedding.cols(),
            self.classes()
        )?;
        let ids: Vec<String> = self.diseases.iter().map(|d| d.0.to_string()).collect();
        writeln!(sink, "{}", ids.join(" "))?;
        write_layer(&mut sink, &self.embedding, &self.output)?;
        sink.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        let mut rd = Reader {
            lines: source.lines(),
            lineno: 0,
        };
        let fields = rd.header("predictor")?;
        let d = parse_dims(&fields, 3, 1)?;
        let pooling = match fields.get(3).map(String::as_str) {
            Some("mean") => Pooling::Mean,
            Some("sum") => Pooling::Sum,
            _ => return Err(Error::parse(1, "unknown pooling")),
        };
        let diseases = rd.numbers::<u32>(d[2])?.into_iter().map(NodeId).collect();
        let embedding = rd.matrix(d[0], d[1])?;
        let weights = rd.matrix(d[1], d[2])?;
        let bias = rd.numbers::<f64>(d[2])?;
        Ok(PredictorModel {
            embedding,
            output: SigmoidLayer { weights, bias },
            diseases,
            pooling,
        })
    }
}
