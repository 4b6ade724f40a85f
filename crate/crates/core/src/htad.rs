//! Topology-aware augmentation.
//!
//! The candidate space holds every original edge plus, per relation, a fixed
//! number of uniformly drawn non-edges with the same type signature. Each
//! epoch keeps a candidate `(u, v)` with probability
//!
//! * `1 - (1 - p0) exp(-lambda |delta|)` when it is an original edge,
//! * `1 - exp(-lambda |delta|)` otherwise,
//!
//! where `delta = hlid(u) - hlid(v)`. Pairs with a large impact gap are the
//! most likely to be linked, and original edges are kept with probability at
//! least `p0`.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::hetgraph::HeteroGraph;
use crate::hlid::HlidScores;
use crate::seed::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Density scale of the exponential threshold.
    pub lambda: f64,
    /// Retention floor for original edges.
    pub p0: f64,
    /// Non-edge candidates per relation, as a multiple of its edge count.
    pub neg_multiplier: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            lambda: 50.0,
            p0: 0.5,
            neg_multiplier: 1.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::invalid(format!("p0 must lie in [0, 1], got {}", self.p0)));
        }
        if !(self.neg_multiplier >= 0.0 && self.neg_multiplier.is_finite()) {
            return Err(Error::invalid(format!(
                "neg_multiplier must be non-negative, got {}",
                self.neg_multiplier
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Original,
    Generated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Original => "original",
            Provenance::Generated => "generated",
        }
    }
}

/// A node pair of a declared relation, in global indices with `u` of the
/// relation's source type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub relation: usize,
    pub u: usize,
    pub v: usize,
    pub in_graph: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpace {
    pub candidates: Vec<Candidate>,
    /// Non-edges requested but not found.
    pub shortfall: usize,
}

impl SampleSpace {
    pub fn num_original(&self) -> usize {
        self.candidates.iter().filter(|c| c.in_graph).count()
    }

    /// Builds a space from explicit candidates, checking each one against the
    /// graph.
    pub fn from_candidates(graph: &HeteroGraph, candidates: Vec<Candidate>) -> Result<Self> {
        let existing = edge_keys(graph);
        let mut seen = HashSet::new();
        for c in &candidates {
            let rel = graph
                .relations()
                .get(c.relation)
                .ok_or_else(|| Error::invalid(format!("unknown relation {}", c.relation)))?;
            if !graph.type_range(rel.src_type).contains(&c.u) || !graph.type_range(rel.dst_type).contains(&c.v) {
                return Err(Error::invalid(format!(
                    "candidate ({}, {}) does not match relation `{}`",
                    c.u, c.v, rel.name
                )));
            }
            if c.u == c.v {
                return Err(Error::invalid("self-pair candidate"));
            }
            let key = key(c.u, c.v);
            if existing.contains(&key) != c.in_graph {
                return Err(Error::invalid(format!("candidate ({}, {}) has the wrong edge flag", c.u, c.v)));
            }
            if !seen.insert(key) {
                return Err(Error::invalid(format!("duplicate candidate ({}, {})", c.u, c.v)));
            }
        }
        Ok(SampleSpace {
            candidates,
            shortfall: 0,
        })
    }
}

fn key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

fn edge_keys(graph: &HeteroGraph) -> HashSet<(usize, usize)> {
    graph.global_edges().into_iter().map(|(_, u, v)| key(u, v)).collect()
}

/// Original edges plus `ceil(k |E_r|)` sampled non-edges per relation.
pub fn build_sample_space(graph: &HeteroGraph, config: &AugmentConfig, rng: &mut Rng) -> Result<SampleSpace> {
    config.validate()?;
    let mut taken = edge_keys(graph);
    let mut candidates: Vec<Candidate> = graph
        .global_edges()
        .into_iter()
        .map(|(relation, u, v)| Candidate {
            relation,
            u,
            v,
            in_graph: true,
        })
        .collect();
    let mut shortfall = 0;
    for rel in graph.relations() {
        let src = graph.type_range(rel.src_type);
        let dst = graph.type_range(rel.dst_type);
        let pairs = if rel.is_intra() {
            src.len() * (src.len() - 1) / 2
        } else {
            src.len() * dst.len()
        };
        let available = pairs.saturating_sub(rel.edge_count);
        let wanted = (config.neg_multiplier * rel.edge_count as f64).ceil() as usize;
        let target = wanted.min(available);
        if target < wanted {
            log::warn!(
                "relation `{}` only has {available} non-edges, sampling {target} of {wanted}",
                rel.name
            );
        }
        let mut found = 0;
        let mut attempts = 0;
        let budget = 20 * target + 100;
        while found < target && attempts < budget {
            attempts += 1;
            let u = rng.gen_range(src.clone());
            let v = rng.gen_range(dst.clone());
            if u == v || !taken.insert(key(u, v)) {
                continue;
            }
            candidates.push(Candidate {
                relation: rel.id,
                u,
                v,
                in_graph: false,
            });
            found += 1;
        }
        if found < target {
            log::warn!(
                "relation `{}` is too dense: found {found} of {target} non-edges after {attempts} draws",
                rel.name
            );
        }
        shortfall += wanted - found;
    }
    Ok(SampleSpace { candidates, shortfall })
}

/// Closed-form retention probability.
pub fn reserve_probability(delta: f64, in_graph: bool, config: &AugmentConfig) -> f64 {
    if in_graph {
        config.p0 + (1.0 - config.p0) * -(-config.lambda * delta.abs()).exp_m1()
    } else {
        -(-config.lambda * delta.abs()).exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentedEdge {
    pub relation: usize,
    pub u: usize,
    pub v: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedEdgeSet {
    pub edges: Vec<AugmentedEdge>,
}

impl AugmentedEdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.edges.iter().filter(|e| e.provenance == provenance).count()
    }

    /// Edge-file lines with a trailing provenance column.
    pub fn format(&self, graph: &HeteroGraph) -> String {
        let mut s = String::new();
        for e in &self.edges {
            let rel = &graph.relations()[e.relation];
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                rel.name,
                e.u - graph.offset(rel.src_type),
                e.v - graph.offset(rel.dst_type),
                e.provenance.as_str()
            );
        }
        s
    }
}

/// Fixed candidate space with per-candidate probabilities; draws a fresh
/// edge set per epoch.
#[derive(Debug, Clone)]
pub struct HtadSampler {
    space: SampleSpace,
    probabilities: Vec<f64>,
    seed: u64,
}

impl HtadSampler {
    pub fn new(space: SampleSpace, hlid: &HlidScores, config: &AugmentConfig) -> Result<Self> {
        config.validate()?;
        let probabilities = space
            .candidates
            .iter()
            .map(|c| {
                let delta = hlid.z[c.u] - hlid.z[c.v];
                if !delta.is_finite() {
                    return Err(Error::NonFinite(format!("hlid gap between {} and {}", c.u, c.v)));
                }
                Ok(reserve_probability(delta, c.in_graph, config))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HtadSampler {
            space,
            probabilities,
            seed: config.seed,
        })
    }

    pub fn space(&self) -> &SampleSpace {
        &self.space
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Closed-form expected size of a draw.
    pub fn expected_size(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Draws the edge set for `epoch`; identical `(seed, epoch)` pairs give
    /// identical sets.
    pub fn sample(&self, epoch: u64) -> AugmentedEdgeSet {
        let mut rng = seed::rng_for(self.seed, "htad-epoch", epoch);
        let edges = self
            .space
            .candidates
            .iter()
            .zip(&self.probabilities)
            .filter(|&(_, &p)| rng.gen::<f64>() < p)
            .map(|(c, _)| AugmentedEdge {
                relation: c.relation,
                u: c.u,
                v: c.v,
                provenance: if c.in_graph {
                    Provenance::Original
                } else {
                    Provenance::Generated
                },
            })
            .collect();
        AugmentedEdgeSet { edges }
    }

    /// Number of candidates evaluated per draw.
    pub fn work_per_draw(&self) -> usize {
        self.space.candidates.len()
    }
}

/// Builds the candidate space and draws the edge set for one epoch.
pub fn sample_augmented_graph(
    graph: &HeteroGraph,
    hlid: &HlidScores,
    config: &AugmentConfig,
    epoch: u64,
) -> Result<AugmentedEdgeSet> {
    let mut rng = seed::rng_for(config.seed, "htad-space", 0);
    let space = build_sample_space(graph, config, &mut rng)?;
    Ok(HtadSampler::new(space, hlid, config)?.sample(epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::GraphBuilder;

    fn bipartite(n: usize, edges: usize) -> HeteroGraph {
        let mut b = GraphBuilder::new();
        let a = b.add_type("a", n, 0).unwrap();
        let p = b.add_type("p", n, 0).unwrap();
        let r = b.add_relation("ap", a, p).unwrap();
        for i in 0..edges {
            b.add_edge(r, i % n, (i * 7 + i / n) % n).unwrap();
        }
        b.build().unwrap()
    }

    fn ramp_hlid(n: usize) -> HlidScores {
        HlidScores {
            z: (0..n).map(|i| i as f64 / n as f64).collect(),
            iterations_used: 0,
            final_residual: 0.0,
        }
    }

    #[test]
    fn closed_form_edge_cases() {
        let cfg = AugmentConfig { lambda: 2.0, p0: 0.3, ..Default::default() };
        assert_eq!(reserve_probability(0.0, true, &cfg), 0.3);
        assert_eq!(reserve_probability(0.0, false, &cfg), 0.0);
        let half = reserve_probability(std::f64::consts::LN_2 / 2.0, false, &cfg);
        assert!((half - 0.5).abs() < 1e-15);
        assert!(reserve_probability(-10.0, true, &cfg) >= 0.3);
    }

    #[test]
    fn zero_multiplier_keeps_only_edges() {
        let g = bipartite(100, 10);
        let cfg = AugmentConfig { neg_multiplier: 0.0, ..Default::default() };
        let space = build_sample_space(&g, &cfg, &mut seed::rng_for(1, "t", 0)).unwrap();
        assert_eq!(space.candidates.len(), 10);
        assert!(space.candidates.iter().all(|c| c.in_graph));
    }

    #[test]
    fn unit_multiplier_doubles_candidates() {
        let g = bipartite(100, 10);
        let cfg = AugmentConfig { neg_multiplier: 1.0, ..Default::default() };
        let space = build_sample_space(&g, &cfg, &mut seed::rng_for(1, "t", 0)).unwrap();
        assert_eq!(space.num_original(), 10);
        assert_eq!(space.candidates.len(), 20);
        assert_eq!(space.shortfall, 0);
    }

    #[test]
    fn dense_block_reports_shortfall() {
        let g = bipartite(3, 8);
        let cfg = AugmentConfig { neg_multiplier: 1.0, ..Default::default() };
        let space = build_sample_space(&g, &cfg, &mut seed::rng_for(1, "t", 0)).unwrap();
        assert_eq!(space.candidates.len(), 9);
        assert_eq!(space.shortfall, 7);
    }

    #[test]
    fn floor_one_keeps_the_graph() {
        let g = bipartite(20, 30);
        let cfg = AugmentConfig { p0: 1.0, neg_multiplier: 0.0, ..Default::default() };
        for epoch in 0..5 {
            let e = sample_augmented_graph(&g, &ramp_hlid(40), &cfg, epoch).unwrap();
            let got: Vec<_> = e.edges.iter().map(|x| (x.relation, x.u, x.v)).collect();
            assert_eq!(got, g.global_edges());
        }
    }

    #[test]
    fn draws_replay_per_epoch() {
        let g = bipartite(20, 30);
        let cfg = AugmentConfig { lambda: 2.0, ..Default::default() };
        let a = sample_augmented_graph(&g, &ramp_hlid(40), &cfg, 3).unwrap();
        let b = sample_augmented_graph(&g, &ramp_hlid(40), &cfg, 3).unwrap();
        let c = sample_augmented_graph(&g, &ramp_hlid(40), &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn explicit_candidates_are_checked() {
        let g = bipartite(5, 3);
        let edges = g.global_edges();
        let (r, u, v) = edges[0];
        assert!(SampleSpace::from_candidates(&g, vec![Candidate { relation: r, u, v, in_graph: true }]).is_ok());
        assert!(SampleSpace::from_candidates(&g, vec![Candidate { relation: r, u, v, in_graph: false }]).is_err());
        assert!(SampleSpace::from_candidates(&g, vec![Candidate { relation: r, u: v, v: u, in_graph: true }]).is_err());
    }
}
