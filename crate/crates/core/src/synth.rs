//! Seeded synthetic heterogeneous graphs with planted classes.
//!
//! Every node gets a latent class and a position on a unit ring. Edges join
//! nodes whose ring positions lie within `locality` of each other, connecting
//! same-class endpoints with probability `homophily`. Typed features are a
//! class centroid plus Gaussian noise. With `skew` set, revealed training
//! labels are drawn from the ring arc `[0, skew_region)` only.

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::hetgraph::{GraphBuilder, HeteroGraph, LabelAssignment};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthType {
    pub name: String,
    pub count: usize,
    /// 0 for a featureless type.
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRelation {
    pub name: String,
    pub src: usize,
    pub dst: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub types: Vec<SynthType>,
    pub relations: Vec<SynthRelation>,
    pub target_type: usize,
    pub num_classes: usize,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    pub feature_noise: f64,
    /// Fraction of target nodes whose labels are revealed for training.
    pub label_rate: f64,
    /// Half-width of the ring window edges are drawn from, in `(0, 0.5]`.
    pub locality: f64,
    pub skew: bool,
    /// Length of the ring arc that holds the revealed labels under `skew`.
    pub skew_region: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// A three-type graph of 1200 nodes: papers with features, featureless
    /// authors, and subjects.
    fn default() -> Self {
        let t = |name: &str, count, feature_dim| SynthType {
            name: name.into(),
            count,
            feature_dim,
        };
        let r = |name: &str, src, dst, edges| SynthRelation {
            name: name.into(),
            src,
            dst,
            edges,
        };
        SynthSpec {
            types: vec![t("paper", 600, 16), t("author", 450, 0), t("subject", 150, 8)],
            relations: vec![
                r("cites", 0, 0, 900),
                r("written_by", 0, 1, 1500),
                r("about", 0, 2, 600),
            ],
            target_type: 0,
            num_classes: 4,
            homophily: 0.95,
            feature_noise: 4.0,
            label_rate: 0.05,
            locality: 0.08,
            skew: true,
            skew_region: 0.25,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() {
            return Err(Error::invalid("no node types"));
        }
        if self.target_type >= self.types.len() {
            return Err(Error::invalid(format!("target type {} out of range", self.target_type)));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if let Some(t) = self.types.iter().find(|t| t.count < self.num_classes) {
            return Err(Error::invalid(format!(
                "type `{}` has {} nodes for {} classes",
                t.name, t.count, self.num_classes
            )));
        }
        if !(0.0..=1.0).contains(&self.homophily) {
            return Err(Error::invalid(format!("homophily {} outside [0, 1]", self.homophily)));
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return Err(Error::invalid("feature_noise must be non-negative"));
        }
        if !(self.label_rate > 0.0 && self.label_rate <= 1.0) {
            return Err(Error::invalid(format!("label_rate {} outside (0, 1]", self.label_rate)));
        }
        if !(self.locality > 0.0 && self.locality <= 0.5) {
            return Err(Error::invalid(format!("locality {} outside (0, 0.5]", self.locality)));
        }
        if !(self.skew_region > 0.0 && self.skew_region <= 1.0) {
            return Err(Error::invalid(format!("skew_region {} outside (0, 1]", self.skew_region)));
        }
        for r in &self.relations {
            if r.src >= self.types.len() || r.dst >= self.types.len() {
                return Err(Error::invalid(format!("relation `{}` references an unknown type", r.name)));
            }
            let (a, b) = (self.types[r.src].count, self.types[r.dst].count);
            let capacity = if r.src == r.dst { a * (a - 1) / 2 } else { a * b };
            if r.edges == 0 || r.edges > capacity {
                return Err(Error::invalid(format!(
                    "relation `{}` asks for {} edges, capacity is {capacity}",
                    r.name, r.edges
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthGraph {
    pub graph: HeteroGraph,
    pub train: LabelAssignment,
    pub test: LabelAssignment,
    /// Latent class of every node, per type.
    pub classes: Vec<Vec<usize>>,
}

impl SynthGraph {
    /// All target labels, train and test together.
    pub fn all_labels(&self) -> LabelAssignment {
        let t = &self.classes[self.train.target_type];
        let mut out = LabelAssignment::new(self.train.target_type, t.len(), self.train.num_classes, false);
        for (i, &c) in t.iter().enumerate() {
            out.set(i, vec![c]).expect("class in range");
        }
        out
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthGraph> {
    spec.validate()?;
    let mut rng = seed::rng_for(spec.seed, "synth", 0);
    let c = spec.num_classes;

    let classes: Vec<Vec<usize>> = spec
        .types
        .iter()
        .map(|t| {
            let mut cls: Vec<usize> = (0..t.count).map(|i| i % c).collect();
            cls.shuffle(&mut rng);
            cls
        })
        .collect();
    let position = |t: usize, i: usize| i as f64 / spec.types[t].count as f64;

    let mut b = GraphBuilder::new();
    for t in &spec.types {
        b.add_type(&t.name, t.count, t.feature_dim)?;
    }
    for r in &spec.relations {
        b.add_relation(&r.name, r.src, r.dst)?;
    }
    for (rid, r) in spec.relations.iter().enumerate() {
        let (ns, nd) = (spec.types[r.src].count, spec.types[r.dst].count);
        let window = ((spec.locality * nd as f64).ceil() as usize).max(1);
        let mut seen = HashSet::new();
        let mut attempts = 0usize;
        let budget = 200 * r.edges + 1000;
        let mut sources: Vec<usize> = Vec::new();
        while seen.len() < r.edges {
            attempts += 1;
            if attempts > budget {
                return Err(Error::invalid(format!(
                    "could only place {} of {} edges for relation `{}`",
                    seen.len(),
                    r.edges,
                    r.name
                )));
            }
            if sources.is_empty() {
                sources = (0..ns).collect();
                sources.shuffle(&mut rng);
            }
            let u = sources.pop().unwrap();
            let same = rng.gen::<f64>() < spec.homophily;
            let centre = (position(r.src, u) * nd as f64).round() as i64;
            let mut found = None;
            for _ in 0..64 {
                let off = rng.gen_range(-(window as i64)..=window as i64);
                let v = (centre + off).rem_euclid(nd as i64) as usize;
                if (classes[r.src][u] == classes[r.dst][v]) == same {
                    found = Some(v);
                    break;
                }
            }
            let Some(v) = found else { continue };
            if r.src == r.dst && u == v {
                continue;
            }
            let key = if r.src == r.dst { (u.min(v), u.max(v)) } else { (u, v) };
            if seen.insert(key) {
                b.add_edge(rid, u, v)?;
            }
        }
    }

    for (tid, t) in spec.types.iter().enumerate() {
        if t.feature_dim == 0 {
            continue;
        }
        let centroids = Array2::from_shape_simple_fn((c, t.feature_dim), || rng.sample::<f64, _>(StandardNormal));
        let mut x = Array2::zeros((t.count, t.feature_dim));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                *v = centroids[[classes[tid][i], j]] + spec.feature_noise * noise;
            }
        }
        b.set_features(tid, x)?;
    }
    let graph = b.build()?;

    let n_target = spec.types[spec.target_type].count;
    let k = ((spec.label_rate * n_target as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut pool: Vec<usize> = (0..n_target).collect();
    pool.shuffle(&mut rng);
    if spec.skew {
        pool.sort_by_key(|&i| position(spec.target_type, i) >= spec.skew_region);
    }
    let revealed: HashSet<usize> = pool.into_iter().take(k).collect();

    let tt = spec.target_type;
    let mut train = LabelAssignment::new(tt, n_target, c, false);
    let mut test = LabelAssignment::new(tt, n_target, c, false);
    for i in 0..n_target {
        let dest = if revealed.contains(&i) { &mut train } else { &mut test };
        dest.set(i, vec![classes[tt][i]])?;
    }
    Ok(SynthGraph {
        graph,
        train,
        test,
        classes,
    })
}

/// Fraction of edges whose endpoints share a latent class.
pub fn same_class_fraction(synth: &SynthGraph) -> f64 {
    let edges = synth.graph.edges();
    let same = edges
        .iter()
        .filter(|e| synth.classes[e.src.type_id][e.src.local] == synth.classes[e.dst.type_id][e.dst.local])
        .count();
    same as f64 / edges.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        let mut s = SynthSpec::default();
        s.types[0].count = 120;
        s.types[1].count = 80;
        s.types[2].count = 40;
        s.relations[0].edges = 150;
        s.relations[1].edges = 200;
        s.relations[2].edges = 120;
        s.locality = 0.1;
        s
    }

    #[test]
    fn edge_counts_are_exact() {
        let g = generate(&small()).unwrap();
        let mut counts = vec![0usize; 3];
        for e in g.graph.edges() {
            counts[e.relation] += 1;
        }
        assert_eq!(counts, vec![150, 200, 120]);
        assert_eq!(g.graph.num_nodes(), 240);
    }

    #[test]
    fn same_seed_same_graph() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.train, b.train);
        let c = generate(&SynthSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn full_homophily_links_same_classes() {
        let g = generate(&SynthSpec { homophily: 1.0, feature_noise: 0.0, ..small() }).unwrap();
        assert_eq!(same_class_fraction(&g), 1.0);
    }

    #[test]
    fn label_rate_one_reveals_everything() {
        let g = generate(&SynthSpec { label_rate: 1.0, ..small() }).unwrap();
        assert_eq!(g.train.num_labeled(), 120);
        assert!(g.test.is_empty());
    }

    #[test]
    fn skewed_labels_stay_in_region() {
        let g = generate(&SynthSpec { label_rate: 0.1, ..small() }).unwrap();
        assert_eq!(g.train.num_labeled(), 12);
        assert!(g.train.labeled_locals().iter().all(|&i| (i as f64) / 120.0 < 0.25));
        assert!(g.train.is_disjoint(&g.test));
        assert_eq!(g.train.num_labeled() + g.test.num_labeled(), 120);
    }

    #[test]
    fn infeasible_edge_count_rejected() {
        let mut s = small();
        s.relations[2].edges = 120 * 40 + 1;
        assert!(generate(&s).is_err());
    }
}
