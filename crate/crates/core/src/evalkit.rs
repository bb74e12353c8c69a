//! Experiment orchestration: F1 metrics, k-fold cross-validation, the
//! missing-label classification sweep, patient-case generation on trimmed
//! networks with the disease-prediction sweep, and a synthetic diagnostic
//! network generator with planted group structure.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rayon::prelude::*;

use crate::diagnet::{
    build_network, node_key, removal_count, trim_network, HetNet, NodeId, NodeType, Triplet,
};
use crate::embed::{noise_distribution, train_embeddings, EmbedConfig, EmbeddingModel, INIT_BOUND};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{derive_rng, derive_seed, Rng};
use crate::taskheads::{
    predict, train_classifier, train_predictor, ClassifierModel, HeadConfig, LabeledNode,
    PatientCase, PredictorModel,
};
use crate::walker::{extract_skipgrams, generate_corpus, MetaPath, Strategy, WalkParams};

/// Validation cases generated per disease from the untrimmed network.
pub const VALIDATION_CASES_PER_DISEASE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
}

/// Micro and macro F1 of single-label predictions over `classes` classes.
///
/// Classes with no support and no predictions count as F1 = 0 in the macro
/// average.
pub fn f1_scores(predictions: &[usize], truths: &[usize], classes: usize) -> Result<F1Scores> {
    if predictions.len() != truths.len() {
        return Err(Error::argument(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() || classes == 0 {
        return Err(Error::argument(
            "f1 needs at least one example and one class",
        ));
    }
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fn_ = vec![0usize; classes];
    for (&p, &t) in predictions.iter().zip(truths) {
        if p >= classes || t >= classes {
            return Err(Error::argument(format!(
                "class index out of range ({p}, {t})"
            )));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let f1 = |tp: usize, fp: usize, fn_: usize| {
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    let micro = f1(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let macro_ = (0..classes).map(|c| f1(tp[c], fp[c], fn_[c])).sum::<f64>() / classes as f64;
    Ok(F1Scores { micro, macro_ })
}

/// Shuffled partition into `k` folds whose sizes differ by at most one.
pub fn kfold_split<T: Clone>(items: &[T], k: usize, rng: &mut Rng) -> Result<Vec<Vec<T>>> {
    if k == 0 || k > items.len() {
        return Err(Error::argument(format!(
            "cannot split {} items into {k} folds",
            items.len()
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(rng);
    let base = items.len() / k;
    let extra = items.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut it = order.into_iter();
    for f in 0..k {
        let size = base + usize::from(f < extra);
        folds.push(it.by_ref().take(size).map(|i| items[i].clone()).collect());
    }
    Ok(folds)
}

/// Removes `floor(pct/100 * n)` items uniformly; survivors keep their order.
pub fn drop_fraction<T: Clone>(items: &[T], pct: f64, rng: &mut Rng) -> Result<Vec<T>> {
    if !(0.0..100.0).contains(&pct) {
        return Err(Error::argument(format!(
            "drop percentage must lie in [0, 100), got {pct}"
        )));
    }
    let remove = removal_count(items.len(), pct);
    let mut dropped = vec![false; items.len()];
    for i in index::sample(rng, items.len(), remove) {
        dropped[i] = true;
    }
    Ok(items
        .iter()
        .zip(dropped)
        .filter(|(_, d)| !d)
        .map(|(x, _)| x.clone())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseGenSpec {
    pub cases_per_disease: usize,
    pub max_symptoms: usize,
    pub alpha: f64,
}

impl Default for CaseGenSpec {
    fn default() -> Self {
        CaseGenSpec {
            cases_per_disease: 10,
            max_symptoms: 10,
            alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedCases {
    /// The trimmed network the cases were drawn from.
    pub trimmed: HetNet,
    /// Cases with node ids of the input (untrimmed) network.
    pub cases: Vec<PatientCase>,
}

/// Trims the network by `alpha` percent, then draws `n` cases for every
/// surviving disease that still has symptom occurrences. Each case takes a
/// uniform count in `1..=min(h, |S|)` and samples that many distinct
/// symptom occurrences adjacent to the disease.
pub fn generate_cases(net: &HetNet, spec: &CaseGenSpec, rng: &mut Rng) -> Result<GeneratedCases> {
    if spec.cases_per_disease == 0 || spec.max_symptoms == 0 {
        return Err(Error::argument(
            "cases per disease and max symptoms must be at least 1",
        ));
    }
    let trimmed = trim_network(net, spec.alpha, rng)?;
    let original = |v: NodeId| {
        net.id_of(trimmed.key(v))
            .expect("trimmed nodes exist in the source network")
    };
    let mut cases = Vec::new();
    for d in trimmed.nodes_of_type(NodeType::Disease) {
        let symptoms = trimmed.neighbors_of_type(d, NodeType::SymptomOccurrence)?;
        if symptoms.is_empty() {
            continue;
        }
        let cap = spec.max_symptoms.min(symptoms.len());
        for _ in 0..spec.cases_per_disease {
            let count = rng.gen_range(1..=cap);
            let mut picked: Vec<NodeId> = index::sample(rng, symptoms.len(), count)
                .into_iter()
                .map(|i| original(symptoms[i]))
                .collect();
            picked.sort_unstable();
            cases.push(PatientCase {
                disease: original(d),
                symptoms: picked,
            });
        }
    }
    if cases.is_empty() {
        return Err(Error::EmptyCases(format!(
            "no disease keeps a symptom at alpha={}",
            spec.alpha
        )));
    }
    Ok(GeneratedCases { trimmed, cases })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PretrainMethod {
    None,
    Node2vec,
    MetaPath,
    MultiMetaPath,
}

impl PretrainMethod {
    pub const ALL: [PretrainMethod; 4] = [
        PretrainMethod::None,
        PretrainMethod::Node2vec,
        PretrainMethod::MetaPath,
        PretrainMethod::MultiMetaPath,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PretrainMethod::None => "none",
            PretrainMethod::Node2vec => "node2vec",
            PretrainMethod::MetaPath => "metapath",
            PretrainMethod::MultiMetaPath => "multimetapath",
        }
    }

    fn ordinal(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for PretrainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PretrainMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PretrainMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::argument(format!("unknown pretraining method {s:?}")))
    }
}

/// `D-S-N-S-W-S-D`, the single long meta-path.
pub fn single_metapath() -> MetaPath {
    "D,S,N,S,W,S,D".parse().expect("valid meta-path")
}

/// `D-S-N-S-D` and `D-S-W-S-D`.
pub fn multi_metapaths() -> Vec<MetaPath> {
    vec![
        "D,S,N,S,D".parse().expect("valid meta-path"),
        "D,S,W,S,D".parse().expect("valid meta-path"),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub walk: WalkParams,
    pub window: usize,
    /// Skip-gram pairs used for training; `None` keeps the whole pool.
    pub pair_budget: Option<usize>,
    pub embed: EmbedConfig,
    /// Overrides the default meta-paths of the meta-path methods.
    pub single_path: Option<MetaPath>,
    pub multi_paths: Option<Vec<MetaPath>>,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            walk: WalkParams::default(),
            window: 5,
            pair_budget: Some(1_000_000),
            embed: EmbedConfig::default(),
            single_path: None,
            multi_paths: None,
        }
    }
}

impl PretrainConfig {
    pub fn strategy(&self, method: PretrainMethod) -> Option<Strategy> {
        match method {
            PretrainMethod::None => None,
            PretrainMethod::Node2vec => Some(Strategy::Node2vec {
                p: self.walk.p,
                q: self.walk.q,
            }),
            PretrainMethod::MetaPath => Some(Strategy::MetaPaths(vec![self
                .single_path
                .clone()
                .unwrap_or_else(single_metapath)])),
            PretrainMethod::MultiMetaPath => Some(Strategy::MetaPaths(
                self.multi_paths.clone().unwrap_or_else(multi_metapaths),
            )),
        }
    }
}

/// Walks, extracts pairs and trains skip-gram embeddings on `net`.
pub fn pretrain(
    net: &HetNet,
    strategy: &Strategy,
    config: &PretrainConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    let corpus = generate_corpus(
        net,
        strategy,
        &config.walk,
        derive_seed(seed, "corpus", &[]),
    )?;
    let mut pair_rng = derive_rng(seed, "pairs", &[]);
    let pairs = extract_skipgrams(
        &corpus.walks,
        config.window,
        config.pair_budget,
        &mut pair_rng,
    )?;
    let noise = noise_distribution(&corpus.walks, net.node_count())?;
    let embed = EmbedConfig {
        seed: derive_seed(seed, "sgns", &[]),
        ..config.embed
    };
    let (model, _) = train_embeddings(&pairs, net.node_count(), &noise, &embed)?;
    Ok(model)
}

/// The embedding layer a task head starts from: pretrained center rows, or
/// a uniform random matrix for `PretrainMethod::None`.
pub fn initial_embedding(
    net: &HetNet,
    method: PretrainMethod,
    config: &PretrainConfig,
    seed: u64,
) -> Result<Matrix> {
    match config.strategy(method) {
        None => {
            if net.node_count() == 0 || config.embed.dim == 0 {
                return Err(Error::argument("embedding shape must be nonzero"));
            }
            Ok(Matrix::uniform(
                net.node_count(),
                config.embed.dim,
                INIT_BOUND,
                &mut derive_rng(seed, "random-embedding", &[]),
            ))
        }
        Some(strategy) => Ok(pretrain(net, &strategy, config, seed)?.center),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub levels: Vec<f64>,
    /// Folds for classification, repeats for prediction.
    pub repeats: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::argument("sweep needs at least one level"));
        }
        if self.repeats == 0 {
            return Err(Error::argument("sweep repeats must be at least 1"));
        }
        if self.levels.iter().any(|l| !(0.0..100.0).contains(l)) {
            return Err(Error::argument("sweep levels must lie in [0, 100)"));
        }
        if self.levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::argument("sweep levels must be strictly increasing"));
        }
        Ok(())
    }
}

/// Levels `start, start+step, ..` up to and including `end`.
pub fn level_range(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || end < start {
        return Err(Error::argument(format!(
            "bad level range {start}:{end}:{step}"
        )));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Classify,
    Predict,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Classify => "classify",
            TaskKind::Predict => "predict",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: String,
    pub task: TaskKind,
    pub level: f64,
    pub f1_micro: f64,
    pub f1_micro_std: f64,
    pub f1_macro: f64,
    pub f1_macro_std: f64,
    /// Folds or repeats averaged; 0 marks a skipped level.
    pub repeats: usize,
}

impl MetricRow {
    fn from_scores(
        method: PretrainMethod,
        task: TaskKind,
        level: f64,
        scores: &[F1Scores],
    ) -> Self {
        let micro: Vec<f64> = scores.iter().map(|s| s.micro).collect();
        let macro_: Vec<f64> = scores.iter().map(|s| s.macro_).collect();
        let (m1, s1) = mean_std(&micro);
        let (m2, s2) = mean_std(&macro_);
        MetricRow {
            method: method.name().to_string(),
            task,
            level,
            f1_micro: m1,
            f1_micro_std: s1,
            f1_macro: m2,
            f1_macro_std: s2,
            repeats: scores.len(),
        }
    }

    fn skipped(method: PretrainMethod, task: TaskKind, level: f64) -> Self {
        MetricRow {
            method: method.name().to_string(),
            task,
            level,
            f1_micro: f64::NAN,
            f1_micro_std: f64::NAN,
            f1_macro: f64::NAN,
            f1_macro_std: f64::NAN,
            repeats: 0,
        }
    }

    pub fn is_skipped(&self) -> bool {
        self.repeats == 0
    }
}

/// Mean and sample standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn level_coord(level: f64) -> u64 {
    level.to_bits()
}

/// Missing-label node classification sweep.
///
/// For each level the embedding is pretrained once on the full network; the
/// labeled nodes are split into `sweep.repeats` folds, each training split
/// loses `level` percent of its items, and the untouched test fold is scored.
/// Fold assignment and label dropping depend only on the master seed and the
/// level, so methods are compared on identical splits.
pub fn run_classification_sweep(
    net: &HetNet,
    labels: &[LabeledNode],
    method: PretrainMethod,
    sweep: &SweepSpec,
    pretrain_cfg: &PretrainConfig,
    head_cfg: &HeadConfig,
) -> Result<Vec<MetricRow>> {
    sweep.validate()?;
    if labels.is_empty() {
        return Err(Error::argument("no labeled nodes"));
    }
    let classes = labels.iter().map(|l| l.label).max().unwrap_or(0) + 1;
    let k = sweep.repeats;
    let master = sweep.seed;

    let mut rows = Vec::with_capacity(sweep.levels.len());
    for &level in &sweep.levels {
        let lc = level_coord(level);
        let embedding = initial_embedding(
            net,
            method,
            pretrain_cfg,
            derive_seed(master, "pretrain", &[lc, method.ordinal()]),
        )?;
        let folds = kfold_split(labels, k, &mut derive_rng(master, "folds", &[lc]))?;
        let cells: Vec<Option<F1Scores>> = (0..k)
            .into_par_iter()
            .map(|f| {
                let train_full: Vec<LabeledNode> = folds
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != f)
                    .flat_map(|(_, fold)| fold.iter().copied())
                    .collect();
                let mut drop_rng = derive_rng(master, "drop", &[lc, f as u64]);
                let train = drop_fraction(&train_full, level, &mut drop_rng)?;
                if train.is_empty() {
                    return Ok(None);
                }
                let mut init_rng = derive_rng(master, "head-init", &[lc, f as u64]);
                let model =
                    ClassifierModel::with_embedding(embedding.clone(), classes, &mut init_rng)?;
                let cfg = HeadConfig {
                    seed: derive_seed(master, "head-train", &[lc, f as u64]),
                    ..*head_cfg
                };
                let (model, _) = train_classifier(model, &train, &cfg)?;
                let test = &folds[f];
                let preds = test
                    .iter()
                    .map(|ex| model.forward(ex.node).map(|p| predict(&p)))
                    .collect::<Result<Vec<_>>>()?;
                let truths: Vec<usize> = test.iter().map(|ex| ex.label).collect();
                f1_scores(&preds, &truths, classes).map(Some)
            })
            .collect::<Result<_>>()?;
        if cells.iter().any(Option::is_none) {
            rows.push(MetricRow::skipped(method, TaskKind::Classify, level));
        } else {
            let scores: Vec<F1Scores> = cells.into_iter().flatten().collect();
            rows.push(MetricRow::from_scores(
                method,
                TaskKind::Classify,
                level,
                &scores,
            ));
        }
    }
    Ok(rows)
}

/// Disease-prediction sweep over trim levels.
///
/// For each level and repeat, training cases come from the network trimmed
/// by `level` percent and validation cases from the whole network; the
/// predictor has one output per disease of the untrimmed network.
pub fn run_prediction_sweep(
    net: &HetNet,
    method: PretrainMethod,
    sweep: &SweepSpec,
    casegen: &CaseGenSpec,
    pretrain_cfg: &PretrainConfig,
    head_cfg: &HeadConfig,
) -> Result<Vec<MetricRow>> {
    sweep.validate()?;
    let diseases = net.nodes_of_type(NodeType::Disease);
    if diseases.len() < 2 {
        return Err(Error::argument(
            "disease prediction needs at least two diseases",
        ));
    }
    let master = sweep.seed;
    let mut rows = Vec::with_capacity(sweep.levels.len());
    for &level in &sweep.levels {
        let lc = level_coord(level);
        let embedding = initial_embedding(
            net,
            method,
            pretrain_cfg,
            derive_seed(master, "pretrain", &[lc, method.ordinal()]),
        )?;
        let cells: Vec<Option<F1Scores>> = (0..sweep.repeats)
            .into_par_iter()
            .map(|r| {
                let r = r as u64;
                let train_spec = CaseGenSpec {
                    alpha: level,
                    ..*casegen
                };
                let train = match generate_cases(
                    net,
                    &train_spec,
                    &mut derive_rng(master, "cases-train", &[lc, r]),
                ) {
                    Ok(g) => g.cases,
                    Err(Error::EmptyCases(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                let val_spec = CaseGenSpec {
                    cases_per_disease: VALIDATION_CASES_PER_DISEASE,
                    max_symptoms: casegen.max_symptoms,
                    alpha: 0.0,
                };
                let val = generate_cases(
                    net,
                    &val_spec,
                    &mut derive_rng(master, "cases-val", &[lc, r]),
                )?
                .cases;
                let mut init_rng = derive_rng(master, "head-init", &[lc, r]);
                let mut model = PredictorModel::with_embedding(
                    embedding.clone(),
                    diseases.clone(),
                    &mut init_rng,
                )?;
                model.pooling = head_cfg.pooling;
                let cfg = HeadConfig {
                    seed: derive_seed(master, "head-train", &[lc, r]),
                    ..*head_cfg
                };
                let (model, _) = train_predictor(model, &train, &cfg)?;
                let mut preds = Vec::with_capacity(val.len());
                let mut truths = Vec::with_capacity(val.len());
                for case in &val {
                    preds.push(predict(&model.forward(&case.symptoms)?));
                    truths.push(
                        model
                            .class_of(case.disease)
                            .expect("validation disease has a slot"),
                    );
                }
                f1_scores(&preds, &truths, diseases.len()).map(Some)
            })
            .collect::<Result<_>>()?;
        let scores: Vec<F1Scores> = cells.into_iter().flatten().collect();
        if scores.is_empty() {
            rows.push(MetricRow::skipped(method, TaskKind::Predict, level));
        } else {
            rows.push(MetricRow::from_scores(
                method,
                TaskKind::Predict,
                level,
                &scores,
            ));
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str =
    "method,task,level,f1_micro,f1_micro_std,f1_macro,f1_macro_std,repeats";

/// Results table; skipped levels leave the metric fields empty.
pub fn write_results_csv<W: Write>(rows: &[MetricRow], mut sink: W) -> Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for r in rows {
        if r.is_skipped() {
            writeln!(sink, "{},{},{},,,,,0", r.method, r.task.name(), r.level)?;
        } else {
            writeln!(
                sink,
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
                r.method,
                r.task.name(),
                r.level,
                r.f1_micro,
                r.f1_micro_std,
                r.f1_macro,
                r.f1_macro_std,
                r.repeats
            )?;
        }
    }
    sink.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    F1Micro,
    F1Macro,
}

/// Tab-separated `level` column plus one column per method.
pub fn write_plot_data<W: Write>(rows: &[MetricRow], metric: Metric, mut sink: W) -> Result<()> {
    let mut methods: Vec<&str> = Vec::new();
    let mut levels: Vec<f64> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !levels.contains(&r.level) {
            levels.push(r.level);
        }
    }
    levels.sort_by(f64::total_cmp);
    writeln!(sink, "level\t{}", methods.join("\t"))?;
    for level in levels {
        write!(sink, "{level}")?;
        for m in &methods {
            let cell = rows
                .iter()
                .find(|r| r.method == *m && r.level == level && !r.is_skipped())
                .map(|r| match metric {
                    Metric::F1Micro => format!("{:.6}", r.f1_micro),
                    Metric::F1Macro => format!("{:.6}", r.f1_macro),
                })
                .unwrap_or_else(|| "nan".to_string());
            write!(sink, "\t{cell}")?;
        }
        writeln!(sink)?;
    }
    sink.flush()?;
    Ok(())
}

/// Parameters of the synthetic diagnostic network.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub groups: usize,
    pub diseases_per_group: usize,
    pub names_per_group: usize,
    /// Size of the symptom-value vocabulary shared by all groups.
    pub values: usize,
    /// Chance that a disease shows a given symptom name of its own group.
    pub overlap: f64,
    /// Chance that a disease shows a given symptom name of another group.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            groups: 10,
            diseases_per_group: 5,
            names_per_group: 20,
            values: 5,
            overlap: 0.3,
            noise: 0.01,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.groups == 0
            || self.diseases_per_group == 0
            || self.names_per_group == 0
            || self.values == 0
        {
            return Err(Error::argument("synthetic spec counts must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.overlap) || !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::argument(
                "synthetic spec probabilities must lie in [0, 1]",
            ));
        }
        Ok(())
    }

    /// Disease classes followed by symptom-name classes.
    pub fn class_names(&self) -> Vec<String> {
        (0..self.groups)
            .map(|g| format!("D{g}"))
            .chain((0..self.groups).map(|g| format!("N{g}")))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub triplets: Vec<Triplet>,
    pub net: HetNet,
    pub labels: Vec<LabeledNode>,
    pub class_names: Vec<String>,
}

/// Generates triplets with planted group structure.
///
/// Each disease shows each symptom name of its own group with probability
/// `overlap` and each foreign name with probability `noise`, paired with a
/// uniformly drawn value. Every disease gets at least one own-group name and
/// every name at least one own-group disease. Diseases are labeled with their
/// group; names with the group of most of their diseases (ties go to the
/// name's home group).
pub fn synth_network(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = derive_rng(spec.seed, "synth", &[]);
    let g = spec.groups;
    let disease = |grp: usize, i: usize| format!("g{grp}_d{i}");
    let name = |grp: usize, j: usize| format!("g{grp}_n{j}");

    // links[(disease group, disease idx)] = list of (name group, name idx)
    let mut links: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g * spec.diseases_per_group];
    for dg in 0..g {
        for di in 0..spec.diseases_per_group {
            let slot = &mut links[dg * spec.diseases_per_group + di];
            for ng in 0..g {
                let prob = if ng == dg { spec.overlap } else { spec.noise };
                for nj in 0..spec.names_per_group {
                    if rng.gen::<f64>() < prob {
                        slot.push((ng, nj));
                    }
                }
            }
            if !slot.iter().any(|&(ng, _)| ng == dg) {
                slot.push((dg, rng.gen_range(0..spec.names_per_group)));
            }
        }
    }
    for ng in 0..g {
        for nj in 0..spec.names_per_group {
            let own = (0..spec.diseases_per_group)
                .any(|di| links[ng * spec.diseases_per_group + di].contains(&(ng, nj)));
            if !own {
                let di = rng.gen_range(0..spec.diseases_per_group);
                links[ng * spec.diseases_per_group + di].push((ng, nj));
            }
        }
    }

    let mut triplets = Vec::new();
    let mut name_votes: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for dg in 0..g {
        for di in 0..spec.diseases_per_group {
            let slot = &mut links[dg * spec.diseases_per_group + di];
            slot.sort_unstable();
            for &(ng, nj) in slot.iter() {
                let value = format!("v{}", rng.gen_range(0..spec.values));
                triplets.push(Triplet::new(&disease(dg, di), &name(ng, nj), &value));
                name_votes.entry((ng, nj)).or_insert_with(|| vec![0; g])[dg] += 1;
            }
        }
    }

    let net = build_network(&triplets)?;
    let mut labels = Vec::new();
    for v in net.node_ids() {
        let key = net.key(v);
        match net.kind(v) {
            NodeType::Disease => {
                let grp = parse_group(&key[2..]);
                labels.push(LabeledNode {
                    node: v,
                    label: grp,
                });
            }
            NodeType::SymptomName => {
                let raw = &key[2..];
                let home = parse_group(raw);
                let j: usize = raw
                    .rsplit('n')
                    .next()
                    .and_then(|s| s.parse().ok())
                    .expect("synthetic name");
                let votes = &name_votes[&(home, j)];
                let best = votes.iter().copied().max().unwrap_or(0);
                let dominant = if votes[home] == best {
                    home
                } else {
                    votes.iter().position(|&c| c == best).unwrap_or(home)
                };
                labels.push(LabeledNode {
                    node: v,
                    label: g + dominant,
                });
            }
            _ => {}
        }
    }
    Ok(SynthData {
        triplets,
        net,
        labels,
        class_names: spec.class_names(),
    })
}

fn parse_group(raw: &str) -> usize {
    raw[1..]
        .split('_')
        .next()
        .and_then(|s| s.parse().ok())
        .expect("synthetic key has a group prefix")
}

/// `node_key<TAB>class_name` per line.
pub fn write_labels<W: Write>(
    net: &HetNet,
    labels: &[LabeledNode],
    class_names: &[String],
    mut sink: W,
) -> Result<()> {
    for l in labels {
        let class = class_names
            .get(l.label)
            .ok_or_else(|| Error::lookup(format!("no name for class {}", l.label)))?;
        writeln!(sink, "{}\t{}", net.key(l.node), class)?;
    }
    sink.flush()?;
    Ok(())
}

/// Reads a labels file; classes are numbered by first appearance.
pub fn read_labels<R: BufRead>(net: &HetNet, source: R) -> Result<(Vec<LabeledNode>, Vec<String>)> {
    let mut classes: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, class) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(i + 1, "expected `node_key<TAB>class_name`"))?;
        let node = net
            .id_of(key)
            .ok_or_else(|| Error::parse(i + 1, format!("unknown node key {key:?}")))?;
        let label = match classes.iter().position(|c| c == class) {
            Some(p) => p,
            None => {
                classes.push(class.to_string());
                classes.len() - 1
            }
        };
        labels.push(LabeledNode { node, label });
    }
    Ok((labels, classes))
}

/// Looks a raw disease name up in a built network.
pub fn disease_id(net: &HetNet, raw: &str) -> Option<NodeId> {
    net.id_of(&node_key(NodeType::Disease, raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use std::collections::HashSet;

    #[test]
    fn perfect_predictions() {
        let s = f1_scores(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!((s.micro, s.macro_), (1.0, 1.0));
    }

    #[test]
    fn hand_confusion_case() {
        let s = f1_scores(&[0, 1, 1, 1], &[0, 0, 1, 1], 2).unwrap();
        assert!((s.micro - 0.75).abs() < 1e-15);
        assert!((s.macro_ - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_predictions_micro_is_accuracy() {
        let truths = [0, 1, 2, 3, 0, 1, 2, 3];
        let s = f1_scores(&[2; 8], &truths, 4).unwrap();
        assert!((s.micro - 0.25).abs() < 1e-15);
        assert!(f1_scores(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn kfold_sizes() {
        let items: Vec<u32> = (0..100).collect();
        let folds = kfold_split(&items, 10, &mut rng_from(0)).unwrap();
        assert!(folds.iter().all(|f| f.len() == 10));

        let items: Vec<u32> = (0..101).collect();
        let folds = kfold_split(&items, 10, &mut rng_from(0)).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [10, 10, 10, 10, 10, 10, 10, 10, 10, 11]);
        let union: HashSet<u32> = folds.iter().flatten().copied().collect();
        assert_eq!(union.len(), 101);
        assert!(kfold_split(&items[..5], 10, &mut rng_from(0)).is_err());
    }

    #[test]
    fn drop_counts() {
        let items: Vec<u32> = (0..200).collect();
        assert_eq!(drop_fraction(&items, 0.0, &mut rng_from(1)).unwrap(), items);
        assert_eq!(
            drop_fraction(&items, 90.0, &mut rng_from(1)).unwrap().len(),
            20
        );
        assert_eq!(
            drop_fraction(&items, 99.0, &mut rng_from(1)).unwrap().len(),
            2
        );
        let a = drop_fraction(&items, 37.0, &mut rng_from(4)).unwrap();
        assert_eq!(a, drop_fraction(&items, 37.0, &mut rng_from(4)).unwrap());
    }

    #[test]
    fn level_ranges() {
        assert_eq!(level_range(0.0, 90.0, 10.0).unwrap().len(), 10);
        let fine = level_range(90.0, 99.0, 1.0).unwrap();
        assert_eq!(fine.first(), Some(&90.0));
        assert_eq!(fine.last(), Some(&99.0));
        assert_eq!(fine.len(), 10);
    }

    #[test]
    fn one_triplet_cases() {
        let net = build_network(&[Triplet::new("d1", "n1", "w1")]).unwrap();
        let spec = CaseGenSpec {
            cases_per_disease: 2,
            max_symptoms: 10,
            alpha: 0.0,
        };
        let g = generate_cases(&net, &spec, &mut rng_from(0)).unwrap();
        let s = net.id_of("s:n1|w1").unwrap();
        let d = net.id_of("d:d1").unwrap();
        let expected = PatientCase {
            disease: d,
            symptoms: vec![s],
        };
        assert_eq!(g.cases, vec![expected.clone(), expected]);
    }

    #[test]
    fn bounded_case_sizes() {
        let ts: Vec<Triplet> = (0..3)
            .map(|i| Triplet::new("d", &format!("n{i}"), "w"))
            .collect();
        let net = build_network(&ts).unwrap();
        let spec = CaseGenSpec::default();
        let g = generate_cases(&net, &spec, &mut rng_from(3)).unwrap();
        assert_eq!(g.cases.len(), 10);
        for c in &g.cases {
            assert!((1..=3).contains(&c.symptoms.len()));
            for &s in &c.symptoms {
                assert!(net.has_edge(c.disease, s));
            }
        }
    }

    #[test]
    fn synth_counts_and_limit_case() {
        let spec = SynthSpec::default();
        let data = synth_network(&spec).unwrap();
        assert_eq!(data.net.stats().node_count(NodeType::Disease), 50);
        let classes: HashSet<usize> = data.labels.iter().map(|l| l.label).collect();
        assert_eq!(classes.len(), 20);
        assert_eq!(data.class_names.len(), 20);

        let strict = SynthSpec {
            overlap: 1.0,
            noise: 0.0,
            ..SynthSpec::default()
        };
        let data = synth_network(&strict).unwrap();
        let net = &data.net;
        let names_of = |d: NodeId| -> HashSet<NodeId> {
            net.neighbors_of_type(d, NodeType::SymptomOccurrence)
                .unwrap()
                .iter()
                .flat_map(|&s| {
                    net.neighbors_of_type(s, NodeType::SymptomName)
                        .unwrap()
                        .to_vec()
                })
                .collect()
        };
        let diseases = net.nodes_of_type(NodeType::Disease);
        for &a in &diseases {
            for &b in &diseases {
                if a == b {
                    continue;
                }
                let same_group = parse_group(&net.key(a)[2..]) == parse_group(&net.key(b)[2..]);
                let shared = names_of(a).intersection(&names_of(b)).count();
                if same_group {
                    assert!(shared >= 1);
                } else {
                    assert_eq!(shared, 0);
                }
            }
        }
        assert!(synth_network(&SynthSpec {
            groups: 0,
            ..SynthSpec::default()
        })
        .is_err());
    }

    #[test]
    fn labels_file_round_trip() {
        let data = synth_network(&SynthSpec {
            groups: 3,
            diseases_per_group: 2,
            names_per_group: 4,
            ..SynthSpec::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_labels(&data.net, &data.labels, &data.class_names, &mut buf).unwrap();
        let (labels, classes) = read_labels(&data.net, buf.as_slice()).unwrap();
        assert_eq!(labels.len(), data.labels.len());
        for (a, b) in labels.iter().zip(&data.labels) {
            assert_eq!(a.node, b.node);
            assert_eq!(classes[a.label], data.class_names[b.label]);
        }
    }

    #[test]
    fn csv_schema() {
        let rows = vec![
            MetricRow::from_scores(
                PretrainMethod::None,
                TaskKind::Classify,
                50.0,
                &[F1Scores {
                    micro: 0.5,
                    macro_: 0.25,
                }],
            ),
            MetricRow::skipped(PretrainMethod::None, TaskKind::Classify, 99.0),
        ];
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(
            lines[1],
            "none,classify,50,0.500000,0.000000,0.250000,0.000000,1"
        );
        assert_eq!(lines[2], "none,classify,99,,,,,0");

        let mut buf = Vec::new();
        write_plot_data(&rows, Metric::F1Micro, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "level\tnone\n50\t0.500000\n99\tnan\n"
        );
    }

    #[test]
    fn sweep_spec_validation() {
        let ok = SweepSpec {
            levels: vec![0.0, 10.0],
            repeats: 10,
            seed: 0,
        };
        assert!(ok.validate().is_ok());
        assert!(SweepSpec {
            levels: vec![10.0, 0.0],
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SweepSpec {
            levels: vec![100.0],
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(SweepSpec { repeats: 0, ..ok }.validate().is_err());
    }
}
