//! Meta-weighted adjacency.
//!
//! Each meta-relation block of the adjacency matrix is scaled by a single
//! factor `R[i][j] = 1 + eta1 * [i == j] + eta2 / |E(i, j)|`, where `|E(i, j)|`
//! counts the undirected edges joining types `i` and `j`. Intra-type blocks are
//! amplified by `eta1`; sparse relations are boosted by `eta2`.

use crate::error::{Error, Result};
use crate::hetgraph::HeteroGraph;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaWeightConfig {
    /// Self-amplification of intra-type relations.
    pub eta1: f64,
    /// Regulation by inverse relation size.
    pub eta2: f64,
}

impl Default for MetaWeightConfig {
    fn default() -> Self {
        MetaWeightConfig { eta1: 3.0, eta2: 1.0 }
    }
}

impl MetaWeightConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta1", self.eta1), ("eta2", self.eta2)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Symmetric `|T| x |T|` block-weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationMatrix {
    n: usize,
    values: Vec<f64>,
}

impl RelationMatrix {
    pub fn ones(n: usize) -> Self {
        RelationMatrix {
            n,
            values: vec![1.0; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Builds `R` from the edge counts of every declared type pair.
pub fn relation_matrix(graph: &HeteroGraph, config: &MetaWeightConfig) -> Result<RelationMatrix> {
    config.validate()?;
    let n = graph.types().len();
    let mut counts = vec![0usize; n * n];
    let mut declared = vec![false; n * n];
    for r in graph.relations() {
        let (i, j) = (r.src_type.min(r.dst_type), r.src_type.max(r.dst_type));
        declared[i * n + j] = true;
    }
    for e in graph.edges() {
        let (i, j) = (e.src.type_id.min(e.dst.type_id), e.src.type_id.max(e.dst.type_id));
        counts[i * n + j] += 1;
    }
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let base = 1.0 + if i == j { config.eta1 } else { 0.0 };
            let v = if declared[i * n + j] {
                let c = counts[i * n + j];
                if c == 0 {
                    return Err(Error::invalid(format!(
                        "relation between `{}` and `{}` has no edges",
                        graph.types()[i].name,
                        graph.types()[j].name
                    )));
                }
                base + config.eta2 / c as f64
            } else {
                base
            };
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(RelationMatrix { n, values })
}

/// The meta-weighted adjacency `B`, stored on the support of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAdjacency {
    pub matrix: CsrMatrix,
}

impl WeightedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.matrix.rows()
    }
}

pub fn meta_weighted_adjacency(graph: &HeteroGraph, r: &RelationMatrix) -> Result<WeightedAdjacency> {
    if r.size() != graph.types().len() {
        return Err(Error::Shape(format!(
            "relation matrix is {0}x{0} but the graph has {1} types",
            r.size(),
            graph.types().len()
        )));
    }
    let n = graph.num_nodes();
    let mut t = Vec::with_capacity(2 * graph.num_edges());
    for e in graph.edges() {
        let w = r.get(e.src.type_id, e.dst.type_id);
        let u = graph.offset(e.src.type_id) + e.src.local;
        let v = graph.offset(e.dst.type_id) + e.dst.local;
        t.push((u, v, w));
        if !graph.is_directed() {
            t.push((v, u, w));
        }
    }
    Ok(WeightedAdjacency {
        matrix: CsrMatrix::from_triplets(n, n, &t),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::GraphBuilder;

    fn toy() -> HeteroGraph {
        let mut b = GraphBuilder::new();
        let p = b.add_type("paper", 4, 0).unwrap();
        let a = b.add_type("author", 4, 0).unwrap();
        let pp = b.add_relation("cites", p, p).unwrap();
        let pa = b.add_relation("writes", a, p).unwrap();
        b.add_edge(pp, 0, 1).unwrap();
        for i in 0..4 {
            b.add_edge(pa, i, i).unwrap();
        }
        b.build().unwrap()
    }

    #[test]
    fn zero_etas_give_all_ones() {
        let g = toy();
        let r = relation_matrix(&g, &MetaWeightConfig { eta1: 0.0, eta2: 0.0 }).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(r.get(i, j), 1.0);
            }
        }
        let b = meta_weighted_adjacency(&g, &r).unwrap();
        assert_eq!(b.matrix, g.adjacency());
    }

    #[test]
    fn hand_evaluated_entries() {
        let g = toy();
        let r = relation_matrix(&g, &MetaWeightConfig { eta1: 3.0, eta2: 2.0 }).unwrap();
        // 4 inter-type edges: 1 + 2/4
        assert_eq!(r.get(0, 1), 1.5);
        assert_eq!(r.get(1, 0), 1.5);
        let r = relation_matrix(&g, &MetaWeightConfig { eta1: 3.0, eta2: 1.0 }).unwrap();
        // 1 intra-type edge: 1 + 3 + 1/1
        assert_eq!(r.get(0, 0), 5.0);
    }

    #[test]
    fn negative_eta_rejected() {
        let g = toy();
        assert!(relation_matrix(&g, &MetaWeightConfig { eta1: -1.0, eta2: 0.0 }).is_err());
        assert!(relation_matrix(&g, &MetaWeightConfig { eta1: f64::NAN, eta2: 0.0 }).is_err());
    }
}
