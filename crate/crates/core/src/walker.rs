//! Random-walk engines and skip-gram pair extraction.
//!
//! Three samplers share one corpus driver: the second-order biased walk with
//! return parameter `p` and in-out parameter `q`, the meta-path walk that only
//! steps to neighbors of the next required node type, and the multi-meta-path
//! scheme that splits the per-node walk budget `r` over several short paths.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;

use crate::diagnet::{EdgeType, HetNet, NodeId, NodeType};
use crate::error::{Error, Result};
use crate::seed::{derive_rng, Rng};

pub type Walk = Vec<NodeId>;

/// Cyclic sequence of node types whose first and last entries coincide.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaPath {
    types: Vec<NodeType>,
}

impl MetaPath {
    pub fn new(types: Vec<NodeType>) -> Result<Self> {
        if types.len() < 3 {
            return Err(Error::argument(format!(
                "meta-path needs at least 3 types, got {}",
                types.len()
            )));
        }
        if types.first() != types.last() {
            return Err(Error::argument(format!(
                "meta-path must start and end with the same type: {}",
                display_types(&types)
            )));
        }
        for w in types.windows(2) {
            if EdgeType::between(w[0], w[1]).is_none() {
                return Err(Error::argument(format!(
                    "meta-path step {}-{} is not an edge of the schema",
                    w[0], w[1]
                )));
            }
        }
        Ok(MetaPath { types })
    }

    pub fn types(&self) -> &[NodeType] {
        &self.types
    }

    pub fn head(&self) -> NodeType {
        self.types[0]
    }

    /// Length of one cycle; the repeated terminal type is not counted twice.
    pub fn period(&self) -> usize {
        self.types.len() - 1
    }

    /// Type required at walk position `pos` of the infinite cyclic extension.
    pub fn type_at(&self, pos: usize) -> NodeType {
        self.types[pos % self.period()]
    }
}

fn display_types(types: &[NodeType]) -> String {
    types
        .iter()
        .map(|t| t.letter().to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl fmt::Display for MetaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&display_types(&self.types))
    }
}

impl FromStr for MetaPath {
    type Err = Error;

    /// Parses comma- or dash-separated type letters, e.g. `D,S,N,S,D`.
    fn from_str(s: &str) -> Result<Self> {
        let types = s
            .split([',', '-'])
            .map(|tok| {
                let tok = tok.trim();
                let mut chars = tok.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => NodeType::from_letter(c),
                    _ => None,
                }
                .ok_or_else(|| Error::argument(format!("unknown node type {tok:?} in meta-path")))
            })
            .collect::<Result<Vec<_>>>()?;
        MetaPath::new(types)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkParams {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub p: f64,
    pub q: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            walks_per_node: 10,
            walk_length: 80,
            p: 1.0,
            q: 1.0,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node < 1 {
            return Err(Error::argument("walks per node must be at least 1"));
        }
        if self.walk_length < 2 {
            return Err(Error::argument("walk length must be at least 2"));
        }
        check_pq(self.p, self.q)
    }
}

fn check_pq(p: f64, q: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite() && q > 0.0 && q.is_finite()) {
        return Err(Error::argument(format!(
            "p and q must be positive and finite, got p={p} q={q}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    Node2vec { p: f64, q: f64 },
    MetaPaths(Vec<MetaPath>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SkipGramPair {
    pub center: NodeId,
    pub context: NodeId,
}

/// One biased step from `cur`, given the previously visited node.
///
/// Unnormalized weights are `1/p` for returning to `prev`, `1` for
/// candidates adjacent to `prev` and `1/q` otherwise. Without a previous
/// node the step is uniform. Returns `None` at a dead end.
pub fn node2vec_step(
    net: &HetNet,
    prev: Option<NodeId>,
    cur: NodeId,
    p: f64,
    q: f64,
    rng: &mut Rng,
) -> Option<NodeId> {
    let candidates = net.neighbors(cur);
    if candidates.is_empty() {
        return None;
    }
    let Some(prev) = prev else {
        return Some(candidates[rng.gen_range(0..candidates.len())]);
    };
    let prev_neighbors = net.neighbors(prev);
    let weight = |x: NodeId| {
        if x == prev {
            1.0 / p
        } else if prev_neighbors.binary_search(&x).is_ok() {
            1.0
        } else {
            1.0 / q
        }
    };
    let total: f64 = candidates.iter().map(|&x| weight(x)).sum();
    let mut target = rng.gen::<f64>() * total;
    for &x in candidates {
        target -= weight(x);
        if target < 0.0 {
            return Some(x);
        }
    }
    candidates.last().copied()
}

pub fn node2vec_walk(
    net: &HetNet,
    start: NodeId,
    length: usize,
    p: f64,
    q: f64,
    rng: &mut Rng,
) -> Result<Walk> {
    net.node(start)?;
    if length < 2 {
        return Err(Error::argument("walk length must be at least 2"));
    }
    check_pq(p, q)?;
    let mut walk = Vec::with_capacity(length);
    walk.push(start);
    let mut prev = None;
    let mut cur = start;
    while walk.len() < length {
        let Some(next) = node2vec_step(net, prev, cur, p, q, rng) else {
            break;
        };
        walk.push(next);
        prev = Some(cur);
        cur = next;
    }
    Ok(walk)
}

/// Uniform step to a neighbor of the required type; `None` if there is none.
pub fn metapath_step(
    net: &HetNet,
    cur: NodeId,
    required: NodeType,
    rng: &mut Rng,
) -> Option<NodeId> {
    let candidates = net.neighbors_of_type(cur, required).ok()?;
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.gen_range(0..candidates.len())])
    }
}

pub fn metapath_walk(
    net: &HetNet,
    start: NodeId,
    length: usize,
    path: &MetaPath,
    rng: &mut Rng,
) -> Result<Walk> {
    let kind = net.node(start)?.kind;
    if kind != path.head() {
        return Err(Error::argument(format!(
            "walk starts at a {kind} node but meta-path {path} begins with {}",
            path.head()
        )));
    }
    if length < 2 {
        return Err(Error::argument("walk length must be at least 2"));
    }
    let mut walk = Vec::with_capacity(length);
    walk.push(start);
    let mut cur = start;
    while walk.len() < length {
        let required = path.type_at(walk.len());
        let Some(next) = metapath_step(net, cur, required, rng) else {
            break;
        };
        walk.push(next);
        cur = next;
    }
    Ok(walk)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WalkCorpus {
    pub walks: Vec<Walk>,
    /// Walks that hit a dead end before reaching the requested length.
    pub truncated: usize,
    /// Number of rounds over the node set.
    pub rounds: usize,
}

enum Task<'a> {
    Biased { start: NodeId },
    Guided { start: NodeId, path: &'a MetaPath },
}

/// Generates the walk corpus.
///
/// The biased strategy runs `r` rounds over every node. The meta-path
/// strategy runs `floor(r / |M|)` rounds; in each round every node starts
/// one walk per meta-path whose head type matches the node's type. Each walk
/// draws from its own stream derived from `seed` and its task index, so the
/// corpus does not depend on thread scheduling.
pub fn generate_corpus(
    net: &HetNet,
    strategy: &Strategy,
    params: &WalkParams,
    seed: u64,
) -> Result<WalkCorpus> {
    params.validate()?;
    let n = net.node_count();
    let mut tasks: Vec<(u64, Task)> = Vec::new();
    let rounds = match strategy {
        Strategy::Node2vec { p, q } => {
            check_pq(*p, *q)?;
            for round in 0..params.walks_per_node {
                for v in net.node_ids() {
                    let idx = (round * n + v.index()) as u64;
                    tasks.push((idx, Task::Biased { start: v }));
                }
            }
            params.walks_per_node
        }
        Strategy::MetaPaths(paths) => {
            if paths.is_empty() {
                return Err(Error::argument("at least one meta-path is required"));
            }
            let rounds = params.walks_per_node / paths.len();
            if rounds == 0 {
                return Err(Error::argument(format!(
                    "walks per node ({}) is smaller than the number of meta-paths ({})",
                    params.walks_per_node,
                    paths.len()
                )));
            }
            let m = paths.len();
            for round in 0..rounds {
                for v in net.node_ids() {
                    for (pi, path) in paths.iter().enumerate() {
                        if net.kind(v) != path.head() {
                            continue;
                        }
                        let idx = ((round * n + v.index()) * m + pi) as u64;
                        tasks.push((idx, Task::Guided { start: v, path }));
                    }
                }
            }
            rounds
        }
    };

    let l = params.walk_length;
    let walks = tasks
        .par_iter()
        .map(|(idx, task)| {
            let mut rng = derive_rng(seed, "walk", &[*idx]);
            match task {
                Task::Biased { start } => match strategy {
                    Strategy::Node2vec { p, q } => node2vec_walk(net, *start, l, *p, *q, &mut rng),
                    Strategy::MetaPaths(_) => unreachable!(),
                },
                Task::Guided { start, path } => metapath_walk(net, *start, l, path, &mut rng),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let truncated = walks.iter().filter(|w| w.len() < l).count();
    Ok(WalkCorpus {
        walks,
        truncated,
        rounds,
    })
}

fn for_each_pair(walk: &[NodeId], window: usize, mut f: impl FnMut(NodeId, NodeId)) {
    for (i, &center) in walk.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(walk.len() - 1);
        for (j, &context) in walk.iter().enumerate().take(hi + 1).skip(lo) {
            if j != i && center != context {
                f(center, context);
            }
        }
    }
}

/// Number of skip-gram pairs a walk contributes.
pub fn pair_count(walk: &[NodeId], window: usize) -> usize {
    let mut n = 0;
    for_each_pair(walk, window, |_, _| n += 1);
    n
}

/// Extracts `(center, context)` pairs within `window` positions of each other.
///
/// Pairs whose endpoints are the same node (a walk revisiting a node) are
/// skipped. With a `limit`, a larger pool is subsampled uniformly without
/// replacement, preserving corpus order; a smaller pool is emitted in full and
/// topped up with draws with replacement.
pub fn extract_skipgrams(
    walks: &[Walk],
    window: usize,
    limit: Option<usize>,
    rng: &mut Rng,
) -> Result<Vec<SkipGramPair>> {
    if window < 1 {
        return Err(Error::argument("window size must be at least 1"));
    }
    let walks: Vec<&Walk> = walks.iter().filter(|w| !w.is_empty()).collect();
    let Some(limit) = limit else {
        let mut out = Vec::new();
        for w in &walks {
            for_each_pair(w, window, |center, context| {
                out.push(SkipGramPair { center, context })
            });
        }
        return Ok(out);
    };

    let total: usize = walks.iter().map(|w| pair_count(w, window)).sum();
    let mut out = Vec::with_capacity(limit);
    if total > limit {
        // selection sampling: keep each pair with probability needed/remaining
        let mut remaining = total;
        let mut needed = limit;
        for w in &walks {
            if needed == 0 {
                break;
            }
            for_each_pair(w, window, |center, context| {
                if needed > 0 && rng.gen_range(0..remaining) < needed {
                    out.push(SkipGramPair { center, context });
                    needed -= 1;
                }
                remaining -= 1;
            });
        }
    } else {
        for w in &walks {
            for_each_pair(w, window, |center, context| {
                out.push(SkipGramPair { center, context })
            });
        }
        let pool = out.len();
        if pool == 0 && limit > 0 {
            return Err(Error::argument("walk corpus yields no skip-gram pairs"));
        }
        while out.len() < limit {
            out.push(out[rng.gen_range(0..pool)]);
        }
    }
    Ok(out)
}

/// One walk per line, space-separated node keys.
pub fn write_corpus<W: Write>(net: &HetNet, walks: &[Walk], mut sink: W) -> Result<()> {
    for w in walks {
        let keys: Vec<&str> = w.iter().map(|&v| net.key(v)).collect();
        writeln!(sink, "{}", keys.join(" "))?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_corpus<R: BufRead>(net: &HetNet, source: R) -> Result<Vec<Walk>> {
    let mut walks = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let walk = line
            .split_whitespace()
            .map(|k| {
                net.id_of(k)
                    .ok_or_else(|| Error::parse(i + 1, format!("unknown node key {k:?}")))
            })
            .collect::<Result<Walk>>()?;
        walks.push(walk);
    }
    Ok(walks)
}

/// `center<TAB>context` per line.
pub fn write_pairs<W: Write>(net: &HetNet, pairs: &[SkipGramPair], mut sink: W) -> Result<()> {
    for p in pairs {
        writeln!(sink, "{}\t{}", net.key(p.center), net.key(p.context))?;
    }
    sink.flush()?;
    Ok(())
}
