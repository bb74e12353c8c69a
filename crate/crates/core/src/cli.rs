//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime/training
//! error. All randomness flows from `--seed` through labeled derivation.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::diagnet::{build_network, load_triplets, write_triplets, HetNet};
use crate::embed::{export_embeddings, noise_distribution, train_embeddings, EmbedConfig, RmsProp};
use crate::error::Error;
use crate::evalkit::{
    level_range, read_labels, run_classification_sweep, run_prediction_sweep, synth_network,
    write_labels, write_plot_data, write_results_csv, CaseGenSpec, Metric, PretrainConfig,
    PretrainMethod, SweepSpec, SynthSpec,
};
use crate::seed::{derive_rng, derive_seed};
use crate::taskheads::{HeadConfig, Pooling};
use crate::walker::{
    extract_skipgrams, generate_corpus, read_corpus, write_corpus, write_pairs, MetaPath, Strategy,
    WalkParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "hetmed",
    version,
    about = "Diagnostic heterogeneous networks and node embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a network from a triplet file and print per-type counts.
    Build(BuildArgs),
    /// Generate a random-walk corpus from a graph dump.
    Walk(WalkArgs),
    /// Train skip-gram embeddings on a walk corpus.
    Embed(EmbedArgs),
    /// Run a missing-data evaluation sweep.
    Experiment(ExperimentArgs),
    /// Write a synthetic triplet file and its node labels.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Triplet file: `disease<TAB>name<TAB>value` per line.
    #[arg(long)]
    pub triplets: PathBuf,
    /// Graph dump output; written to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct WalkFlags {
    /// Walks per node.
    #[arg(short = 'r', long = "walks-per-node", default_value_t = 10)]
    pub walks_per_node: usize,
    /// Walk length in nodes.
    #[arg(short = 'l', long = "walk-length", default_value_t = 80)]
    pub walk_length: usize,
    /// Return parameter of the biased walk.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// In-out parameter of the biased walk.
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
}

impl WalkFlags {
    fn params(&self) -> WalkParams {
        WalkParams {
            walks_per_node: self.walks_per_node,
            walk_length: self.walk_length,
            p: self.p,
            q: self.q,
        }
    }
}

#[derive(Debug, Args)]
pub struct WalkArgs {
    /// Graph dump produced by `build`.
    #[arg(long)]
    pub graph: PathBuf,
    /// Use biased second-order walks.
    #[arg(long, conflicts_with = "metapath")]
    pub node2vec: bool,
    /// Meta-path as comma-separated type letters (D,S,N,W); repeat for
    /// multi-meta-path walks.
    #[arg(long)]
    pub metapath: Vec<String>,
    #[command(flatten)]
    pub walk: WalkFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corpus output: one walk per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EmbedFlags {
    /// Embedding dimension.
    #[arg(long, default_value_t = 100)]
    pub dim: usize,
    /// Skip-gram context window.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    /// Skip-gram pairs used for training.
    #[arg(long, default_value_t = 1_000_000)]
    pub pairs: usize,
    /// Negative samples per pair.
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    /// Passes over the pairs.
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    /// RMSProp learning rate.
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// RMSProp decay.
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    /// RMSProp epsilon.
    #[arg(long, default_value_t = 1e-7)]
    pub eps: f64,
}

impl EmbedFlags {
    fn config(&self, seed: u64) -> EmbedConfig {
        EmbedConfig {
            dim: self.dim,
            negatives: self.negatives,
            epochs: self.epochs,
            optimizer: RmsProp {
                lr: self.lr,
                rho: self.rho,
                eps: self.eps,
            },
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Walk corpus produced by `walk`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Graph dump giving the node key to row mapping.
    #[arg(long)]
    pub graph: PathBuf,
    #[command(flatten)]
    pub embed: EmbedFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embedding output (`<rows> <dim>` header, then `key values..`).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional dump of the sampled skip-gram pairs.
    #[arg(long)]
    pub pairs_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthFlags {
    #[arg(long, default_value_t = 10)]
    pub groups: usize,
    #[arg(long, default_value_t = 5)]
    pub diseases_per_group: usize,
    #[arg(long, default_value_t = 20)]
    pub names_per_group: usize,
    /// Size of the shared symptom-value vocabulary.
    #[arg(long, default_value_t = 5)]
    pub values: usize,
    /// Probability of a disease showing an own-group symptom name.
    #[arg(long, default_value_t = 0.3)]
    pub overlap: f64,
    /// Probability of a disease showing a foreign symptom name.
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
}

impl SynthFlags {
    fn spec(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            groups: self.groups,
            diseases_per_group: self.diseases_per_group,
            names_per_group: self.names_per_group,
            values: self.values,
            overlap: self.overlap,
            noise: self.noise,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub synth: SynthFlags,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub triplets_out: PathBuf,
    #[arg(long)]
    pub labels_out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classify,
    Predict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    None,
    Node2vec,
    Metapath,
    Multimetapath,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolingArg {
    Mean,
    Sum,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Mean => Pooling::Mean,
            PoolingArg::Sum => Pooling::Sum,
        }
    }
}

impl From<MethodArg> for PretrainMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::None => PretrainMethod::None,
            MethodArg::Node2vec => PretrainMethod::Node2vec,
            MethodArg::Metapath => PretrainMethod::MetaPath,
            MethodArg::Multimetapath => PretrainMethod::MultiMetaPath,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Pretraining method; repeat to compare several. Defaults to all four.
    #[arg(long, value_enum)]
    pub method: Vec<MethodArg>,
    /// Missing-data levels as `start:end:step` percentages.
    #[arg(long, default_value = "0:90:10")]
    pub levels: String,
    /// Cross-validation folds (classify) or repeats (predict).
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    /// Triplet file; a synthetic network is generated when omitted.
    #[arg(long, requires = "labels")]
    pub triplets: Option<PathBuf>,
    /// Node labels (`node_key<TAB>class_name`) for the classify task.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub synth: SynthFlags,
    #[command(flatten)]
    pub walk: WalkFlags,
    #[command(flatten)]
    pub embed: EmbedFlags,
    /// Task-head training epochs.
    #[arg(long, default_value_t = 10)]
    pub head_epochs: usize,
    /// Task-head RMSProp learning rate.
    #[arg(long, default_value_t = 0.001)]
    pub head_lr: f64,
    /// Keep the embedding layer fixed while training the task head.
    #[arg(long)]
    pub freeze_embedding: bool,
    /// How the predictor combines symptom embeddings (predict).
    #[arg(long, value_enum, default_value_t = PoolingArg::Mean)]
    pub pooling: PoolingArg,
    /// Patient cases per disease (predict).
    #[arg(long, default_value_t = 10)]
    pub cases: usize,
    /// Maximum symptoms per case (predict).
    #[arg(long, default_value_t = 10)]
    pub max_symptoms: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Results CSV; plot-data files are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Argument(_) => EXIT_USAGE,
            Error::Parse { .. } | Error::Lookup(_) | Error::EmptyCases(_) | Error::Io(_) => {
                EXIT_DATA
            }
            Error::Training { .. } => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

fn load_graph(path: &Path) -> Result<HetNet, Failure> {
    HetNet::read_dump(open(path)?).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", path.display()),
    })
}

/// Parses and runs a command line, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(cli.command, &mut out) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn execute<W: Write>(command: Command, out: &mut W) -> Result<i32, Failure> {
    match command {
        Command::Build(a) => cmd_build(&a, out),
        Command::Walk(a) => cmd_walk(&a, out),
        Command::Embed(a) => cmd_embed(&a, out),
        Command::Experiment(a) => cmd_experiment(&a, out),
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

fn io_err(e: io::Error) -> Failure {
    Error::Io(e).into()
}

pub fn cmd_build<W: Write>(args: &BuildArgs, out: &mut W) -> Result<i32, Failure> {
    let triplets = load_triplets(open(&args.triplets)?).map_err(|e| Failure {
        code: EXIT_DATA,
        message: format!("{}: {e}", args.triplets.display()),
    })?;
    let net = build_network(&triplets).map_err(|e| Failure {
        code: EXIT_DATA,
        message: e.to_string(),
    })?;
    match &args.out {
        Some(path) => net.write_dump(create(path)?)?,
        None => net.write_dump(&mut *out)?,
    }
    writeln!(out, "{}", net.stats()).map_err(io_err)?;
    Ok(EXIT_OK)
}

fn parse_metapaths(specs: &[String]) -> Result<Vec<MetaPath>, Failure> {
    specs
        .iter()
        .map(|s| {
            s.parse::<MetaPath>()
                .map_err(|e| usage(format!("--metapath {s}: {e}")))
        })
        .collect()
}

pub fn cmd_walk<W: Write>(args: &WalkArgs, out: &mut W) -> Result<i32, Failure> {
    let strategy = if args.node2vec {
        Strategy::Node2vec {
            p: args.walk.p,
            q: args.walk.q,
        }
    } else if !args.metapath.is_empty() {
        Strategy::MetaPaths(parse_metapaths(&args.metapath)?)
    } else {
        return Err(usage("choose --node2vec or at least one --metapath"));
    };
    let params = args.walk.params();
    params.validate()?;
    let net = load_graph(&args.graph)?;
    let corpus = generate_corpus(
        &net,
        &strategy,
        &params,
        derive_seed(args.seed, "walk", &[]),
    )?;
    write_corpus(&net, &corpus.walks, create(&args.out)?)?;
    writeln!(
        out,
        "walks: {} truncated: {}",
        corpus.walks.len(),
        corpus.truncated
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

pub fn cmd_embed<W: Write>(args: &EmbedArgs, out: &mut W) -> Result<i32, Failure> {
    let net = load_graph(&args.graph)?;
    let walks = read_corpus(&net, open(&args.corpus)?)?;
    let mut pair_rng = derive_rng(args.seed, "pairs", &[]);
    let pairs = extract_skipgrams(
        &walks,
        args.embed.window,
        Some(args.embed.pairs),
        &mut pair_rng,
    )?;
    if let Some(path) = &args.pairs_out {
        write_pairs(&net, &pairs, create(path)?)?;
    }
    let noise = noise_distribution(&walks, net.node_count())?;
    let config = args.embed.config(derive_seed(args.seed, "sgns", &[]));
    let (model, report) = train_embeddings(&pairs, net.node_count(), &noise, &config)?;
    let keys: Vec<&str> = net.nodes().iter().map(|n| n.key.as_str()).collect();
    export_embeddings(&model.center, &keys, create(&args.out)?)?;
    writeln!(
        out,
        "pairs seen: {} mean loss: {:.6} wall time: {:.2}s",
        report.pairs_seen, report.mean_loss, report.wall_seconds
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

fn parse_levels(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| usage(format!("--levels {spec:?}: expected start:end:step")))?;
    match nums[..] {
        [single] => Ok(vec![single]),
        [start, end, step] => Ok(level_range(start, end, step)?),
        _ => Err(usage(format!("--levels {spec:?}: expected start:end:step"))),
    }
}

fn plot_path(csv: &Path, metric: &str) -> PathBuf {
    let stem = csv
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("results");
    csv.with_file_name(format!("{stem}.{metric}.tsv"))
}

pub fn cmd_experiment<W: Write>(args: &ExperimentArgs, out: &mut W) -> Result<i32, Failure> {
    let levels = parse_levels(&args.levels)?;
    let sweep = SweepSpec {
        levels,
        repeats: args.repeats,
        seed: args.seed,
    };
    sweep.validate()?;
    args.walk.params().validate()?;
    let methods: Vec<PretrainMethod> = if args.method.is_empty() {
        PretrainMethod::ALL.to_vec()
    } else {
        args.method.iter().map(|&m| m.into()).collect()
    };

    let (net, labels) = match (&args.triplets, &args.labels) {
        (Some(t), Some(l)) => {
            let triplets = load_triplets(open(t)?)?;
            let net = build_network(&triplets)?;
            let (labels, _) = read_labels(&net, open(l)?)?;
            (net, labels)
        }
        _ => {
            let data = synth_network(&args.synth.spec(derive_seed(args.seed, "synth", &[])))?;
            (data.net, data.labels)
        }
    };

    let pretrain = PretrainConfig {
        walk: args.walk.params(),
        window: args.embed.window,
        pair_budget: Some(args.embed.pairs),
        embed: args.embed.config(0),
        ..PretrainConfig::default()
    };
    let head = HeadConfig {
        epochs: args.head_epochs,
        optimizer: RmsProp {
            lr: args.head_lr,
            ..RmsProp::default()
        },
        freeze_embedding: args.freeze_embedding,
        pooling: args.pooling.into(),
        seed: 0,
    };
    let casegen = CaseGenSpec {
        cases_per_disease: args.cases,
        max_symptoms: args.max_symptoms,
        alpha: 0.0,
    };

    let mut rows = Vec::new();
    for method in methods {
        let result = match args.task {
            TaskArg::Classify => {
                run_classification_sweep(&net, &labels, method, &sweep, &pretrain, &head)?
            }
            TaskArg::Predict => {
                run_prediction_sweep(&net, method, &sweep, &casegen, &pretrain, &head)?
            }
        };
        for r in &result {
            if r.is_skipped() {
                writeln!(out, "{} level {}: skipped", r.method, r.level).map_err(io_err)?;
            } else {
                writeln!(
                    out,
                    "{} level {}: f1_micro {:.4} f1_macro {:.4}",
                    r.method, r.level, r.f1_micro, r.f1_macro
                )
                .map_err(io_err)?;
            }
        }
        rows.extend(result);
    }
    write_results_csv(&rows, create(&args.out)?)?;
    write_plot_data(
        &rows,
        Metric::F1Micro,
        create(&plot_path(&args.out, "f1_micro"))?,
    )?;
    write_plot_data(
        &rows,
        Metric::F1Macro,
        create(&plot_path(&args.out, "f1_macro"))?,
    )?;
    if rows.iter().all(|r| r.is_skipped()) {
        return Err(Failure {
            code: EXIT_RUNTIME,
            message: "every level was skipped".into(),
        });
    }
    Ok(EXIT_OK)
}

pub fn cmd_synth<W: Write>(args: &SynthArgs, out: &mut W) -> Result<i32, Failure> {
    let data = synth_network(&args.synth.spec(args.seed))?;
    write_triplets(&data.triplets, create(&args.triplets_out)?)?;
    write_labels(
        &data.net,
        &data.labels,
        &data.class_names,
        create(&args.labels_out)?,
    )?;
    writeln!(
        out,
        "triplets: {} labels: {} classes: {} {}",
        data.triplets.len(),
        data.labels.len(),
        data.class_names.len(),
        data.net.stats()
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}
