//! Typed heterogeneous network of diagnostic data.
//!
//! Four node types (disease, symptom occurrence, symptom name, symptom value)
//! and three undirected edge types, all incident to a symptom occurrence.
//! Networks are built from `<disease, name, value>` triplets: each distinct
//! `(name, value)` pair becomes one symptom-occurrence node joined to the
//! name, the value and every disease it was observed with.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::index;

use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeType {
    Disease,
    SymptomOccurrence,
    SymptomName,
    SymptomValue,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::Disease,
        NodeType::SymptomOccurrence,
        NodeType::SymptomName,
        NodeType::SymptomValue,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn letter(self) -> char {
        match self {
            NodeType::Disease => 'D',
            NodeType::SymptomOccurrence => 'S',
            NodeType::SymptomName => 'N',
            NodeType::SymptomValue => 'W',
        }
    }

    pub fn from_letter(c: char) -> Option<NodeType> {
        match c.to_ascii_uppercase() {
            'D' => Some(NodeType::Disease),
            'S' => Some(NodeType::SymptomOccurrence),
            'N' => Some(NodeType::SymptomName),
            'W' => Some(NodeType::SymptomValue),
            _ => None,
        }
    }

    fn key_prefix(self) -> &'static str {
        match self {
            NodeType::Disease => "d:",
            NodeType::SymptomOccurrence => "s:",
            NodeType::SymptomName => "n:",
            NodeType::SymptomValue => "w:",
        }
    }

    /// Recovers the type from a namespaced node key.
    pub fn of_key(key: &str) -> Option<NodeType> {
        NodeType::ALL
            .into_iter()
            .find(|t| key.starts_with(t.key_prefix()) && key.len() > 2)
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeType {
    SD,
    SN,
    SW,
}

impl EdgeType {
    pub const ALL: [EdgeType; 3] = [EdgeType::SD, EdgeType::SN, EdgeType::SW];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The edge type joining two node types, if the schema allows one.
    pub fn between(a: NodeType, b: NodeType) -> Option<EdgeType> {
        use NodeType::*;
        let other = match (a, b) {
            (SymptomOccurrence, o) | (o, SymptomOccurrence) => o,
            _ => return None,
        };
        match other {
            Disease => Some(EdgeType::SD),
            SymptomName => Some(EdgeType::SN),
            SymptomValue => Some(EdgeType::SW),
            SymptomOccurrence => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::SD => "SD",
            EdgeType::SN => "SN",
            EdgeType::SW => "SW",
        }
    }

    pub fn parse(s: &str) -> Option<EdgeType> {
        EdgeType::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub disease: String,
    pub name: String,
    pub value: String,
}

impl Triplet {
    pub fn new(disease: &str, name: &str, value: &str) -> Self {
        Triplet {
            disease: disease.to_string(),
            name: name.to_string(),
            value: value.to_string(),
        }
    }
}

/// Dense node index within one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub kind: NodeType,
    pub key: String,
}

/// Undirected edge, stored once with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub kind: EdgeType,
}

/// Undirected heterogeneous network with type-indexed adjacency.
#[derive(Debug, Clone, Default)]
pub struct HetNet {
    nodes: Vec<Node>,
    index: HashMap<String, NodeId>,
    edges: Vec<Edge>,
    edge_set: HashSet<(NodeId, NodeId)>,
    // adjacency[v][t]: neighbors of v with type t, ascending id.
    adjacency: Vec<[Vec<NodeId>; 4]>,
    // all neighbors of v, ascending id.
    neighbors: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NetStats {
    pub nodes: [usize; 4],
    pub edges: [usize; 3],
}

impl NetStats {
    pub fn node_count(&self, t: NodeType) -> usize {
        self.nodes[t.index()]
    }

    pub fn edge_count(&self, t: EdgeType) -> usize {
        self.edges[t.index()]
    }
}

impl fmt::Display for NetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let nodes: Vec<String> = NodeType::ALL
            .iter()
            .map(|t| format!("{}:{}", t, self.node_count(*t)))
            .collect();
        let edges: Vec<String> = EdgeType::ALL
            .iter()
            .map(|t| format!("{}:{}", t, self.edge_count(*t)))
            .collect();
        write!(f, "{} {}", nodes.join(" "), edges.join(" "))
    }
}

/// Namespaced key for a node of the given type.
pub fn node_key(kind: NodeType, raw: &str) -> String {
    format!("{}{}", kind.key_prefix(), raw)
}

fn occurrence_key(name: &str, value: &str) -> String {
    format!("s:{name}|{value}")
}

impl HetNet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn node(&self, v: NodeId) -> Result<&Node> {
        self.nodes
            .get(v.index())
            .ok_or_else(|| Error::lookup(format!("node id {} not in network", v.0)))
    }

    pub fn kind(&self, v: NodeId) -> NodeType {
        self.nodes[v.index()].kind
    }

    pub fn key(&self, v: NodeId) -> &str {
        &self.nodes[v.index()].key
    }

    pub fn id_of(&self, key: &str) -> Option<NodeId> {
        self.index.get(key).copied()
    }

    /// Ids of all nodes of one type, ascending.
    pub fn nodes_of_type(&self, t: NodeType) -> Vec<NodeId> {
        self.node_ids().filter(|&v| self.kind(v) == t).collect()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.nodes.len()
    }

    /// Neighbors of `v` of type `t`, in ascending id order.
    pub fn neighbors_of_type(&self, v: NodeId, t: NodeType) -> Result<&[NodeId]> {
        self.node(v)?;
        Ok(&self.adjacency[v.index()][t.index()])
    }

    /// All neighbors of `v`, ascending. Panics on unknown ids.
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.neighbors[v.index()]
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.edge_set.contains(&ordered(u, v))
    }

    /// Returns the id of the node with this key, creating it if needed.
    pub fn add_node(&mut self, kind: NodeType, key: String) -> NodeId {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = NodeId(self.nodes.len() as u32);
        self.index.insert(key.clone(), id);
        self.nodes.push(Node { kind, key });
        self.adjacency.push(Default::default());
        self.neighbors.push(Vec::new());
        id
    }

    /// Adds an undirected edge. Returns `Ok(false)` when it already exists.
    pub fn add_edge(&mut self, u: NodeId, v: NodeId) -> Result<bool> {
        let (ku, kv) = (self.node(u)?.kind, self.node(v)?.kind);
        if u == v {
            return Err(Error::argument(format!("self-loop on {}", self.key(u))));
        }
        let kind = EdgeType::between(ku, kv)
            .ok_or_else(|| Error::argument(format!("no edge type joins {ku} and {kv}")))?;
        let (a, b) = ordered(u, v);
        if !self.edge_set.insert((a, b)) {
            return Ok(false);
        }
        self.edges.push(Edge { a, b, kind });
        insert_sorted(&mut self.adjacency[u.index()][kv.index()], v);
        insert_sorted(&mut self.adjacency[v.index()][ku.index()], u);
        insert_sorted(&mut self.neighbors[u.index()], v);
        insert_sorted(&mut self.neighbors[v.index()], u);
        Ok(true)
    }

    pub fn stats(&self) -> NetStats {
        let mut s = NetStats::default();
        for n in &self.nodes {
            s.nodes[n.kind.index()] += 1;
        }
        for e in &self.edges {
            s.edges[e.kind.index()] += 1;
        }
        s
    }

    /// Writes one edge per line: `type<TAB>key_u<TAB>key_v`.
    pub fn write_dump<W: Write>(&self, mut sink: W) -> Result<()> {
        for e in &self.edges {
            // symptom occurrence first, matching construction order
            let (u, v) = if self.kind(e.a) == NodeType::SymptomOccurrence {
                (e.a, e.b)
            } else {
                (e.b, e.a)
            };
            writeln!(sink, "{}\t{}\t{}", e.kind, self.key(u), self.key(v))?;
        }
        sink.flush()?;
        Ok(())
    }

    /// Reads a network back from its edge dump. Node ids follow first
    /// appearance, so a dump of a built network reloads with identical ids.
    pub fn read_dump<R: BufRead>(source: R) -> Result<HetNet> {
        let mut net = HetNet::new();
        for (i, line) in source.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    lineno,
                    format!("expected 3 tab-separated fields, found {}", fields.len()),
                ));
            }
            let kind = EdgeType::parse(fields[0]).ok_or_else(|| {
                Error::parse(lineno, format!("unknown edge type {:?}", fields[0]))
            })?;
            let mut ids = [NodeId(0); 2];
            for (slot, key) in ids.iter_mut().zip(&fields[1..]) {
                let t = NodeType::of_key(key)
                    .ok_or_else(|| Error::parse(lineno, format!("bad node key {key:?}")))?;
                *slot = net.add_node(t, key.to_string());
            }
            let found = EdgeType::between(net.kind(ids[0]), net.kind(ids[1]));
            if found != Some(kind) {
                return Err(Error::parse(
                    lineno,
                    format!("edge type {kind} inconsistent with its endpoints"),
                ));
            }
            net.add_edge(ids[0], ids[1])
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
        }
        Ok(net)
    }

    /// Subnetwork induced by the nodes for which `keep` is true. Surviving
    /// nodes are renumbered densely, preserving their relative order.
    pub fn induced<F: Fn(NodeId) -> bool>(&self, keep: F) -> HetNet {
        let mut out = HetNet::new();
        let mut remap = vec![None; self.nodes.len()];
        for v in self.node_ids() {
            if keep(v) {
                let n = &self.nodes[v.index()];
                remap[v.index()] = Some(out.add_node(n.kind, n.key.clone()));
            }
        }
        for e in &self.edges {
            if let (Some(a), Some(b)) = (remap[e.a.index()], remap[e.b.index()]) {
                out.add_edge(a, b).expect("edge valid in source network");
            }
        }
        out
    }
}

fn ordered(u: NodeId, v: NodeId) -> (NodeId, NodeId) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

fn insert_sorted(list: &mut Vec<NodeId>, v: NodeId) {
    if let Err(pos) = list.binary_search(&v) {
        list.insert(pos, v);
    }
}

/// Parses tab-separated triplets; skips blank lines and `#` comments.
pub fn load_triplets<R: BufRead>(source: R) -> Result<Vec<Triplet>> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        if let Some(pos) = fields.iter().position(|f| f.is_empty()) {
            return Err(Error::parse(lineno, format!("field {} is empty", pos + 1)));
        }
        out.push(Triplet::new(fields[0], fields[1], fields[2]));
    }
    Ok(out)
}

pub fn write_triplets<W: Write>(triplets: &[Triplet], mut sink: W) -> Result<()> {
    for t in triplets {
        writeln!(sink, "{}\t{}\t{}", t.disease, t.name, t.value)?;
    }
    sink.flush()?;
    Ok(())
}

/// Builds the diagnostic network. One symptom-occurrence node is created per
/// distinct `(name, value)` pair.
pub fn build_network(triplets: &[Triplet]) -> Result<HetNet> {
    if triplets.is_empty() {
        return Err(Error::argument("cannot build a network from zero triplets"));
    }
    let mut net = HetNet::new();
    for t in triplets {
        if t.disease.is_empty() || t.name.is_empty() || t.value.is_empty() {
            return Err(Error::argument(format!("triplet with empty field: {t:?}")));
        }
        let s = net.add_node(
            NodeType::SymptomOccurrence,
            occurrence_key(&t.name, &t.value),
        );
        let d = net.add_node(NodeType::Disease, node_key(NodeType::Disease, &t.disease));
        net.add_edge(s, d)?;
        let n = net.add_node(
            NodeType::SymptomName,
            node_key(NodeType::SymptomName, &t.name),
        );
        net.add_edge(s, n)?;
        let w = net.add_node(
            NodeType::SymptomValue,
            node_key(NodeType::SymptomValue, &t.value),
        );
        net.add_edge(s, w)?;
    }
    Ok(net)
}

/// Removes `floor(alpha/100 * |V|)` nodes chosen uniformly at random, with
/// their incident edges. The input network is left untouched.
pub fn trim_network(net: &HetNet, alpha: f64, rng: &mut Rng) -> Result<HetNet> {
    if !(0.0..100.0).contains(&alpha) {
        return Err(Error::argument(format!(
            "trim percentage must lie in [0, 100), got {alpha}"
        )));
    }
    let n = net.node_count();
    let remove = removal_count(n, alpha);
    if remove == 0 {
        return Ok(net.clone());
    }
    let mut dropped = vec![false; n];
    for i in index::sample(rng, n, remove) {
        dropped[i] = true;
    }
    Ok(net.induced(|v| !dropped[v.index()]))
}

/// `floor(pct/100 * n)`, robust to binary rounding of exact products.
pub(crate) fn removal_count(n: usize, pct: f64) -> usize {
    let raw = pct * n as f64 / 100.0;
    let rounded = raw.round();
    if (raw - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        raw.floor() as usize
    }
}
