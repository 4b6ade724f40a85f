//! Heterogeneous graph data model, ingestion, and type-sorted indexing.
//!
//! Nodes are indexed globally in type-sorted order: every node of the first
//! declared type, then every node of the second, and so on, with the local
//! order inside a type taken from the files. Undirected edges are stored once
//! and expanded on demand.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeType {
    pub id: usize,
    pub name: String,
    pub count: usize,
    /// 0 when the type carries no features.
    pub feature_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub type_id: usize,
    pub local: usize,
}

impl NodeRef {
    pub fn new(type_id: usize, local: usize) -> Self {
        NodeRef { type_id, local }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Relation {
    pub id: usize,
    pub name: String,
    pub src_type: usize,
    pub dst_type: usize,
    pub edge_count: usize,
}

impl Relation {
    pub fn is_intra(&self) -> bool {
        self.src_type == self.dst_type
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub relation: usize,
    pub src: NodeRef,
    pub dst: NodeRef,
}

/// Encoder input for one node type.
#[derive(Debug, Clone, PartialEq)]
pub enum TypeInput {
    Dense(Array2<f64>),
    /// One-hot identity features for a featureless type with this many nodes.
    Identity(usize),
}

impl TypeInput {
    pub fn input_dim(&self) -> usize {
        match self {
            TypeInput::Dense(x) => x.ncols(),
            TypeInput::Identity(n) => *n,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            TypeInput::Dense(x) => x.nrows(),
            TypeInput::Identity(n) => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    types: Vec<NodeType>,
    relations: Vec<Relation>,
    edges: Vec<Edge>,
    features: Vec<Option<Array2<f64>>>,
    offsets: Vec<usize>,
    directed: bool,
}

impl HeteroGraph {
    pub fn types(&self) -> &[NodeType] {
        &self.types
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn num_nodes(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn type_id(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t.name == name)
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn offset(&self, type_id: usize) -> usize {
        self.offsets[type_id]
    }

    /// Global index range occupied by a type.
    pub fn type_range(&self, type_id: usize) -> std::ops::Range<usize> {
        self.offsets[type_id]..self.offsets[type_id + 1]
    }

    pub fn type_ranges(&self) -> Vec<std::ops::Range<usize>> {
        (0..self.types.len()).map(|t| self.type_range(t)).collect()
    }

    pub fn global_index(&self, node: NodeRef) -> Result<usize> {
        let ty = self
            .types
            .get(node.type_id)
            .ok_or_else(|| Error::invalid(format!("unknown node type id {}", node.type_id)))?;
        if node.local >= ty.count {
            return Err(Error::invalid(format!(
                "local index {} out of range for type `{}` ({} nodes)",
                node.local, ty.name, ty.count
            )));
        }
        Ok(self.offsets[node.type_id] + node.local)
    }

    pub fn node_ref(&self, global: usize) -> NodeRef {
        assert!(global < self.num_nodes(), "global index {global} out of range");
        let type_id = self.offsets.partition_point(|&o| o <= global) - 1;
        NodeRef::new(type_id, global - self.offsets[type_id])
    }

    pub fn type_of(&self, global: usize) -> usize {
        self.node_ref(global).type_id
    }

    /// Global type id per node.
    pub fn node_types(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_nodes());
        for t in &self.types {
            out.extend(std::iter::repeat_n(t.id, t.count));
        }
        out
    }

    /// Edges as `(relation, src global, dst global)`.
    pub fn global_edges(&self) -> Vec<(usize, usize, usize)> {
        self.edges
            .iter()
            .map(|e| {
                (
                    e.relation,
                    self.offsets[e.src.type_id] + e.src.local,
                    self.offsets[e.dst.type_id] + e.dst.local,
                )
            })
            .collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes()];
        for (_, u, v) in self.global_edges() {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn degree(&self, node: NodeRef) -> Result<usize> {
        let g = self.global_index(node)?;
        Ok(self
            .global_edges()
            .iter()
            .filter(|&&(_, u, v)| u == g || v == g)
            .count())
    }

    /// Binary adjacency matrix, symmetric for undirected graphs.
    pub fn adjacency(&self) -> CsrMatrix {
        let n = self.num_nodes();
        let mut t = Vec::with_capacity(2 * self.edges.len());
        for (_, u, v) in self.global_edges() {
            t.push((u, v, 1.0));
            if !self.directed {
                t.push((v, u, 1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    pub fn features(&self, type_id: usize) -> Option<&Array2<f64>> {
        self.features[type_id].as_ref()
    }

    /// Per-type encoder inputs; featureless types get one-hot identity rows.
    pub fn inputs(&self) -> Vec<TypeInput> {
        self.types
            .iter()
            .map(|t| match &self.features[t.id] {
                Some(x) => TypeInput::Dense(x.clone()),
                None => TypeInput::Identity(t.count),
            })
            .collect()
    }

    /// Stable fingerprint of the schema (types, counts, feature dims, relations).
    pub fn schema_hash(&self) -> u64 {
        let mut s = String::new();
        for t in &self.types {
            let _ = writeln!(s, "T\t{}\t{}\t{}", t.name, t.count, t.feature_dim);
        }
        for r in &self.relations {
            let _ = writeln!(
                s,
                "R\t{}\t{}\t{}",
                r.name, self.types[r.src_type].name, self.types[r.dst_type].name
            );
        }
        let digest = Sha256::digest(s.as_bytes());
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(b)
    }
}

fn pair_key(u: usize, v: usize) -> (usize, usize) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Incremental, validating graph constructor.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    types: Vec<NodeType>,
    relations: Vec<Relation>,
    edges: Vec<Edge>,
    features: Vec<Option<Array2<f64>>>,
    seen: HashSet<(usize, usize)>,
    offsets: Vec<usize>,
    directed: bool,
    dedup: bool,
    dropped_duplicates: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            offsets: vec![0],
            ..Default::default()
        }
    }

    pub fn directed(mut self, directed: bool) -> Self {
        self.directed = directed;
        self
    }

    /// Silently drop repeated edges instead of rejecting them.
    pub fn dedup(mut self, dedup: bool) -> Self {
        self.dedup = dedup;
        self
    }

    pub fn add_type(&mut self, name: &str, count: usize, feature_dim: usize) -> Result<usize> {
        if !self.edges.is_empty() {
            return Err(Error::invalid("node types must be declared before edges"));
        }
        if count == 0 {
            return Err(Error::invalid(format!("node type `{name}` has zero nodes")));
        }
        if self.types.iter().any(|t| t.name == name) {
            return Err(Error::invalid(format!("duplicate node type `{name}`")));
        }
        let id = self.types.len();
        self.types.push(NodeType {
            id,
            name: name.to_string(),
            count,
            feature_dim,
        });
        self.features.push(None);
        let last = *self.offsets.last().unwrap();
        self.offsets.push(last + count);
        Ok(id)
    }

    pub fn add_relation(&mut self, name: &str, src_type: usize, dst_type: usize) -> Result<usize> {
        if src_type >= self.types.len() || dst_type >= self.types.len() {
            return Err(Error::invalid(format!("relation `{name}` references an unknown type")));
        }
        if self.relations.iter().any(|r| r.name == name) {
            return Err(Error::invalid(format!("duplicate relation `{name}`")));
        }
        let key = pair_key(src_type, dst_type);
        if let Some(r) = self
            .relations
            .iter()
            .find(|r| pair_key(r.src_type, r.dst_type) == key)
        {
            return Err(Error::invalid(format!(
                "relation `{name}` joins the same type pair as `{}`",
                r.name
            )));
        }
        let id = self.relations.len();
        self.relations.push(Relation {
            id,
            name: name.to_string(),
            src_type,
            dst_type,
            edge_count: 0,
        });
        Ok(id)
    }

    /// Adds an edge. Returns `Ok(false)` when a duplicate was dropped in
    /// dedup mode.
    pub fn add_edge(&mut self, relation: usize, src_local: usize, dst_local: usize) -> Result<bool> {
        let rel = self
            .relations
            .get(relation)
            .ok_or_else(|| Error::invalid(format!("unknown relation id {relation}")))?;
        let (st, dt) = (rel.src_type, rel.dst_type);
        for (local, t) in [(src_local, st), (dst_local, dt)] {
            if local >= self.types[t].count {
                return Err(Error::invalid(format!(
                    "endpoint {local} out of range for type `{}` ({} nodes)",
                    self.types[t].name, self.types[t].count
                )));
            }
        }
        let u = self.offsets[st] + src_local;
        let v = self.offsets[dt] + dst_local;
        if u == v {
            return Err(Error::invalid(format!("self-loop on node {src_local} of relation `{}`", rel.name)));
        }
        let key = if self.directed { (u, v) } else { pair_key(u, v) };
        if !self.seen.insert(key) {
            if self.dedup {
                self.dropped_duplicates += 1;
                return Ok(false);
            }
            return Err(Error::invalid(format!(
                "duplicate edge ({src_local}, {dst_local}) in relation `{}`",
                rel.name
            )));
        }
        self.relations[relation].edge_count += 1;
        self.edges.push(Edge {
            relation,
            src: NodeRef::new(st, src_local),
            dst: NodeRef::new(dt, dst_local),
        });
        Ok(true)
    }

    pub fn set_features(&mut self, type_id: usize, x: Array2<f64>) -> Result<()> {
        let t = self
            .types
            .get(type_id)
            .ok_or_else(|| Error::invalid(format!("unknown node type id {type_id}")))?;
        if x.nrows() != t.count || x.ncols() != t.feature_dim {
            return Err(Error::Shape(format!(
                "features for `{}` are {}x{}, expected {}x{}",
                t.name,
                x.nrows(),
                x.ncols(),
                t.count,
                t.feature_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("features of `{}`", t.name)));
        }
        self.features[type_id] = Some(x);
        Ok(())
    }

    pub fn type_id(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t.name == name)
    }

    pub fn relation_id(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn dropped_duplicates(&self) -> usize {
        self.dropped_duplicates
    }

    pub fn build(self) -> Result<HeteroGraph> {
        if self.types.is_empty() {
            return Err(Error::invalid("graph has no node types"));
        }
        if let Some(r) = self.relations.iter().find(|r| r.edge_count == 0) {
            return Err(Error::invalid(format!("relation `{}` has no edges", r.name)));
        }
        Ok(HeteroGraph {
            types: self.types,
            relations: self.relations,
            edges: self.edges,
            features: self.features,
            offsets: self.offsets,
            directed: self.directed,
        })
    }
}

/// Class assignments for the target node type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment {
    pub target_type: usize,
    pub num_classes: usize,
    pub multi_label: bool,
    labels: Vec<Option<Vec<usize>>>,
}

impl LabelAssignment {
    pub fn new(target_type: usize, target_count: usize, num_classes: usize, multi_label: bool) -> Self {
        LabelAssignment {
            target_type,
            num_classes,
            multi_label,
            labels: vec![None; target_count],
        }
    }

    pub fn target_count(&self) -> usize {
        self.labels.len()
    }

    pub fn set(&mut self, local: usize, mut classes: Vec<usize>) -> Result<()> {
        if local >= self.labels.len() {
            return Err(Error::invalid(format!(
                "label for local index {local} but the target type has {} nodes",
                self.labels.len()
            )));
        }
        classes.sort_unstable();
        classes.dedup();
        if classes.is_empty() {
            return Err(Error::invalid(format!("empty label set for node {local}")));
        }
        if let Some(&c) = classes.iter().find(|&&c| c >= self.num_classes) {
            return Err(Error::invalid(format!(
                "class {c} out of range ({} classes)",
                self.num_classes
            )));
        }
        if !self.multi_label && classes.len() != 1 {
            return Err(Error::invalid(format!(
                "node {local} has {} classes in single-label mode",
                classes.len()
            )));
        }
        self.labels[local] = Some(classes);
        Ok(())
    }

    pub fn get(&self, local: usize) -> Option<&[usize]> {
        self.labels.get(local).and_then(|l| l.as_deref())
    }

    pub fn labeled_locals(&self) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i].is_some())
            .collect()
    }

    pub fn num_labeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.num_labeled() == 0
    }

    /// Binary label row of length `num_classes`.
    pub fn row(&self, local: usize) -> Option<Vec<bool>> {
        self.get(local).map(|cs| {
            let mut row = vec![false; self.num_classes];
            for &c in cs {
                row[c] = true;
            }
            row
        })
    }

    /// Per-node labeled mask over all N nodes.
    pub fn labeled_mask(&self, graph: &HeteroGraph) -> Vec<bool> {
        let mut mask = vec![false; graph.num_nodes()];
        let off = graph.offset(self.target_type);
        for l in self.labeled_locals() {
            mask[off + l] = true;
        }
        mask
    }

    /// The indicator column J.
    pub fn indicator(&self, graph: &HeteroGraph) -> Vec<f64> {
        self.labeled_mask(graph)
            .into_iter()
            .map(|m| if m { 1.0 } else { 0.0 })
            .collect()
    }

    fn with_locals(&self, keep: &[usize]) -> LabelAssignment {
        let mut out = LabelAssignment::new(self.target_type, self.labels.len(), self.num_classes, self.multi_label);
        for &l in keep {
            out.labels[l] = self.labels[l].clone();
        }
        out
    }

    /// Retains exactly `ceil(rate * labeled)` labels chosen uniformly under `seed`.
    pub fn subsample(&self, rate: f64, seed: u64) -> Result<LabelAssignment> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::invalid(format!("label rate {rate} outside (0, 1]")));
        }
        let labeled = self.labeled_locals();
        if labeled.is_empty() {
            return Err(Error::invalid("no labels to subsample"));
        }
        // Tolerate representation error such as 0.07 * 100 = 7.000000000000001.
        let k = ((rate * labeled.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        let k = k.min(labeled.len());
        let mut rng = seed::rng_for(seed, "labels", 0);
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, labeled.len(), k)
            .into_iter()
            .map(|i| labeled[i])
            .collect();
        picked.sort_unstable();
        Ok(self.with_locals(&picked))
    }

    /// Labels present here but not in `other`.
    pub fn difference(&self, other: &LabelAssignment) -> LabelAssignment {
        let keep: Vec<usize> = self
            .labeled_locals()
            .into_iter()
            .filter(|&l| other.get(l).is_none())
            .collect();
        self.with_locals(&keep)
    }

    /// `(train, test)` where train is a seeded subsample and test the rest.
    pub fn split(&self, rate: f64, seed: u64) -> Result<(LabelAssignment, LabelAssignment)> {
        let train = self.subsample(rate, seed)?;
        let test = self.difference(&train);
        Ok((train, test))
    }

    pub fn is_disjoint(&self, other: &LabelAssignment) -> bool {
        self.labeled_locals().iter().all(|&l| other.get(l).is_none())
    }

    /// Dense label-class id per labeled node: nodes with identical label
    /// vectors share an id.
    pub fn label_groups(&self) -> Vec<(usize, usize)> {
        let mut ids: BTreeMap<&[usize], usize> = BTreeMap::new();
        let mut out = Vec::new();
        for l in self.labeled_locals() {
            let key = self.labels[l].as_deref().unwrap();
            let next = ids.len();
            let id = *ids.entry(key).or_insert(next);
            out.push((l, id));
        }
        out
    }
}

/// Input locations for [`load_graph`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataPaths {
    pub schema: PathBuf,
    pub edges: PathBuf,
    /// Feature file per type name.
    pub features: BTreeMap<String, PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadOptions {
    pub directed: bool,
    pub dedup: bool,
    /// Defaults to the first declared type.
    pub target_type: Option<String>,
    /// Inferred as `max class + 1` when absent.
    pub num_classes: Option<usize>,
    /// Inferred from the presence of multi-class rows when absent.
    pub multi_label: Option<bool>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim_end_matches('\r');
        let t = l.trim();
        if t.is_empty() || t.starts_with('#') {
            None
        } else {
            Some((i + 1, l))
        }
    })
}

fn parse_usize(path: &Path, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("{what} `{field}` is not a non-negative integer")))
}

/// Parses the schema file into a fresh builder.
pub fn parse_schema(path: &Path, text: &str, opts: &LoadOptions) -> Result<GraphBuilder> {
    let mut b = GraphBuilder::new().directed(opts.directed).dedup(opts.dedup);
    for (ln, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, ln, format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        if fields[1].trim().parse::<usize>().is_ok() {
            let count = parse_usize(path, ln, fields[1], "count")?;
            let dim = parse_usize(path, ln, fields[2], "feature_dim")?;
            b.add_type(fields[0].trim(), count, dim)
                .map_err(|e| Error::parse(path, ln, e.to_string()))?;
        } else {
            let src = b
                .type_id(fields[1].trim())
                .ok_or_else(|| Error::parse(path, ln, format!("unknown type `{}`", fields[1])))?;
            let dst = b
                .type_id(fields[2].trim())
                .ok_or_else(|| Error::parse(path, ln, format!("unknown type `{}`", fields[2])))?;
            b.add_relation(fields[0].trim(), src, dst)
                .map_err(|e| Error::parse(path, ln, e.to_string()))?;
        }
    }
    Ok(b)
}

pub fn parse_edges(path: &Path, text: &str, b: &mut GraphBuilder) -> Result<()> {
    for (ln, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(Error::parse(path, ln, "expected `rel<TAB>src<TAB>dst`"));
        }
        let rel = b
            .relation_id(fields[0].trim())
            .ok_or_else(|| Error::parse(path, ln, format!("unknown relation `{}`", fields[0])))?;
        let s = parse_usize(path, ln, fields[1], "source index")?;
        let d = parse_usize(path, ln, fields[2], "destination index")?;
        b.add_edge(rel, s, d).map_err(|e| Error::parse(path, ln, e.to_string()))?;
    }
    Ok(())
}

pub fn parse_features(path: &Path, text: &str, rows: usize, dim: usize) -> Result<Array2<f64>> {
    let mut x = Array2::zeros((rows, dim));
    let mut r = 0;
    for (ln, line) in data_lines(text) {
        if r >= rows {
            return Err(Error::parse(path, ln, format!("more than {rows} feature rows")));
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != dim {
            return Err(Error::parse(path, ln, format!("expected {dim} values, got {}", vals.len())));
        }
        for (c, v) in vals.iter().enumerate() {
            x[[r, c]] = v
                .parse()
                .map_err(|_| Error::parse(path, ln, format!("`{v}` is not a number")))?;
        }
        r += 1;
    }
    if r != rows {
        return Err(Error::parse(path, 0, format!("expected {rows} feature rows, got {r}")));
    }
    Ok(x)
}

fn parse_label_rows(path: &Path, text: &str) -> Result<Vec<(usize, usize, Vec<usize>)>> {
    let mut rows = Vec::new();
    for (ln, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(path, ln, "expected `local_index<TAB>c1,c2,...`"));
        }
        let local = parse_usize(path, ln, fields[0], "node index")?;
        let classes = fields[1]
            .split(',')
            .map(|c| parse_usize(path, ln, c, "class"))
            .collect::<Result<Vec<_>>>()?;
        rows.push((ln, local, classes));
    }
    Ok(rows)
}

/// Loads a labels file against an existing graph.
pub fn load_labels(graph: &HeteroGraph, path: &Path, opts: &LoadOptions) -> Result<LabelAssignment> {
    let text = read_text(path)?;
    let rows = parse_label_rows(path, &text)?;
    let target = match &opts.target_type {
        Some(name) => graph
            .type_id(name)
            .ok_or_else(|| Error::invalid(format!("unknown target type `{name}`")))?,
        None => 0,
    };
    let num_classes = match opts.num_classes {
        Some(c) => c,
        None => rows
            .iter()
            .flat_map(|(_, _, cs)| cs.iter().copied())
            .max()
            .map_or(0, |m| m + 1),
    };
    let multi = opts
        .multi_label
        .unwrap_or_else(|| rows.iter().any(|(_, _, cs)| cs.len() > 1));
    let mut la = LabelAssignment::new(target, graph.types()[target].count, num_classes, multi);
    for (ln, local, classes) in rows {
        if la.get(local).is_some() {
            return Err(Error::parse(path, ln, format!("node {local} labeled twice")));
        }
        la.set(local, classes)
            .map_err(|e| Error::parse(path, ln, format!("{e} (labels apply to target type `{}` only)", graph.types()[target].name)))?;
    }
    Ok(la)
}

/// Loads and validates a graph and, when given, its labels.
pub fn load_graph(paths: &DataPaths, opts: &LoadOptions) -> Result<(HeteroGraph, Option<LabelAssignment>)> {
    let schema_text = read_text(&paths.schema)?;
    let mut b = parse_schema(&paths.schema, &schema_text, opts)?;
    let edge_text = read_text(&paths.edges)?;
    parse_edges(&paths.edges, &edge_text, &mut b)?;
    if b.dropped_duplicates() > 0 {
        log::warn!("dropped {} duplicate edges from {}", b.dropped_duplicates(), paths.edges.display());
    }
    for (name, fpath) in &paths.features {
        let t = b
            .type_id(name)
            .ok_or_else(|| Error::invalid(format!("features given for unknown type `{name}`")))?;
        let (count, dim) = (b.types[t].count, b.types[t].feature_dim);
        let x = parse_features(fpath, &read_text(fpath)?, count, dim)?;
        b.set_features(t, x)?;
    }
    let graph = b.build()?;
    let labels = match &paths.labels {
        Some(p) => Some(load_labels(&graph, p, opts)?),
        None => None,
    };
    Ok((graph, labels))
}

pub fn format_schema(graph: &HeteroGraph) -> String {
    let mut s = String::new();
    for t in graph.types() {
        let _ = writeln!(s, "{}\t{}\t{}", t.name, t.count, t.feature_dim);
    }
    for r in graph.relations() {
        let _ = writeln!(
            s,
            "{}\t{}\t{}",
            r.name,
            graph.types()[r.src_type].name,
            graph.types()[r.dst_type].name
        );
    }
    s
}

pub fn format_edges(graph: &HeteroGraph) -> String {
    let mut s = String::new();
    for e in graph.edges() {
        let _ = writeln!(s, "{}\t{}\t{}", graph.relations()[e.relation].name, e.src.local, e.dst.local);
    }
    s
}

pub fn format_labels(labels: &LabelAssignment) -> String {
    let mut s = String::new();
    for l in labels.labeled_locals() {
        let cs: Vec<String> = labels.get(l).unwrap().iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "{l}\t{}", cs.join(","));
    }
    s
}

pub fn format_features(x: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in x.rows() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(s, "{}", vals.join(" "));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        let a = b.add_type("author", 10, 0).unwrap();
        let p = b.add_type("paper", 5, 0).unwrap();
        let r = b.add_relation("writes", a, p).unwrap();
        b.add_edge(r, 0, 0).unwrap();
        b.add_edge(r, 1, 0).unwrap();
        b.add_edge(r, 2, 0).unwrap();
        b.add_edge(r, 3, 0).unwrap();
        b.add_edge(r, 3, 4).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn global_index_offsets() {
        let g = toy();
        assert_eq!(g.global_index(NodeRef::new(0, 0)).unwrap(), 0);
        assert_eq!(g.global_index(NodeRef::new(1, 3)).unwrap(), 13);
        assert!(g.global_index(NodeRef::new(2, 0)).is_err());
        assert!(g.global_index(NodeRef::new(1, 5)).is_err());
    }

    #[test]
    fn global_round_trip_is_identity() {
        let g = toy();
        for i in 0..g.num_nodes() {
            assert_eq!(g.global_index(g.node_ref(i)).unwrap(), i);
        }
    }

    #[test]
    fn star_and_isolated_degrees() {
        let g = toy();
        assert_eq!(g.degree(NodeRef::new(1, 0)).unwrap(), 4);
        assert_eq!(g.degree(NodeRef::new(0, 9)).unwrap(), 0);
        assert_eq!(g.degrees().iter().sum::<usize>(), 2 * g.num_edges());
    }

    #[test]
    fn builder_rejections() {
        let mut b = GraphBuilder::new();
        let a = b.add_type("a", 3, 0).unwrap();
        let r = b.add_relation("aa", a, a).unwrap();
        assert!(b.add_edge(r, 1, 1).is_err(), "self-loop");
        b.add_edge(r, 0, 1).unwrap();
        assert!(b.add_edge(r, 1, 0).is_err(), "reverse duplicate");
        assert!(b.add_edge(r, 0, 3).is_err(), "out of range");
        assert!(b.add_relation("aa2", a, a).is_err(), "same type pair");

        let mut b = GraphBuilder::new().dedup(true);
        let a = b.add_type("a", 3, 0).unwrap();
        let r = b.add_relation("aa", a, a).unwrap();
        assert!(b.add_edge(r, 0, 1).unwrap());
        assert!(!b.add_edge(r, 1, 0).unwrap());
        assert_eq!(b.dropped_duplicates(), 1);
    }

    #[test]
    fn empty_relation_is_rejected() {
        let mut b = GraphBuilder::new();
        let a = b.add_type("a", 3, 0).unwrap();
        b.add_relation("aa", a, a).unwrap();
        assert!(b.build().is_err());
    }

    #[test]
    fn subsample_counts_and_determinism() {
        let mut la = LabelAssignment::new(0, 100, 3, false);
        for i in 0..100 {
            la.set(i, vec![i % 3]).unwrap();
        }
        assert_eq!(la.subsample(1.0, 3).unwrap(), la);
        let half = la.subsample(0.5, 3).unwrap();
        assert_eq!(half.num_labeled(), 50);
        assert_eq!(half, la.subsample(0.5, 3).unwrap());
        assert_eq!(la.subsample(0.07, 3).unwrap().num_labeled(), 7);
        assert!(la.subsample(0.0, 3).is_err());
        assert!(la.subsample(1.5, 3).is_err());

        let (train, test) = la.split(0.3, 9).unwrap();
        assert!(train.is_disjoint(&test));
        assert_eq!(train.num_labeled() + test.num_labeled(), 100);
    }

    #[test]
    fn single_label_rows_need_one_class() {
        let mut la = LabelAssignment::new(0, 4, 3, false);
        assert!(la.set(0, vec![0, 1]).is_err());
        assert!(la.set(0, vec![3]).is_err());
        let mut ml = LabelAssignment::new(0, 4, 3, true);
        ml.set(0, vec![2, 0]).unwrap();
        assert_eq!(ml.row(0).unwrap(), vec![true, false, true]);
    }
}
