//! Heterogeneous label impact degree.
//!
//! The impact matrix is the personalized-PageRank kernel
//! `Q = alpha * (I - (1 - alpha) P)^-1` with `P = D^-1/2 (I + B) D^-1/2`.
//! Scores are `z = Q J` for the labeled-node indicator `J`, solved here by the
//! fixed-point iteration `z <- (1 - alpha) P z + alpha J` rather than by
//! inversion. [`impact_matrix_dense`] keeps the explicit inverse around as a
//! small-graph oracle.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hetgraph::{HeteroGraph, LabelAssignment};
use crate::metaweight::{meta_weighted_adjacency, relation_matrix, MetaWeightConfig, WeightedAdjacency};
use crate::sparse::CsrMatrix;

pub const DENSE_ORACLE_MAX_NODES: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactConfig {
    /// Teleport probability.
    pub alpha: f64,
    /// Stop once the L-infinity residual drops to this value.
    pub tol: f64,
    /// Iteration cap; derived from `alpha` and `tol` when `None`.
    pub max_iter: Option<usize>,
}

impl Default for ImpactConfig {
    fn default() -> Self {
        ImpactConfig {
            alpha: 0.15,
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl ImpactConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == Some(0) {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }

    /// `10 * ceil(ln(tol) / ln(1 - alpha))`, at least 1.
    pub fn effective_max_iter(&self) -> usize {
        if let Some(m) = self.max_iter {
            return m;
        }
        let contraction = 1.0 - self.alpha;
        if contraction <= 0.0 {
            return 1;
        }
        let k = (self.tol.ln() / contraction.ln()).ceil();
        (10.0 * k).max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HlidScores {
    pub z: Vec<f64>,
    pub iterations_used: usize,
    pub final_residual: f64,
}

/// `P = D^-1/2 (I + B) D^-1/2` with `D_ii = sum_j (I + B)_ij`.
pub fn normalized_propagation(b: &WeightedAdjacency) -> CsrMatrix {
    let n = b.num_nodes();
    let deg: Vec<f64> = b.matrix.row_sums().iter().map(|d| d + 1.0).collect();
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut t = Vec::with_capacity(b.matrix.nnz() + n);
    for i in 0..n {
        t.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
    }
    for (i, j, w) in b.matrix.triplets() {
        t.push((i, j, inv_sqrt[i] * w * inv_sqrt[j]));
    }
    CsrMatrix::from_triplets(n, n, &t)
}

/// Solves `(I - (1 - alpha) P) z = alpha J` by fixed-point iteration from
/// `z = alpha J`.
pub fn hlid_scores(p: &CsrMatrix, j: &[f64], config: &ImpactConfig) -> Result<HlidScores> {
    config.validate()?;
    let n = p.rows();
    if j.len() != n {
        return Err(Error::Shape(format!("indicator has length {}, graph has {n} nodes", j.len())));
    }
    if let Some(bad) = j.iter().find(|&&x| x != 0.0 && x != 1.0) {
        return Err(Error::invalid(format!("indicator must be binary, found {bad}")));
    }
    let alpha = config.alpha;
    let damp = 1.0 - alpha;
    let source: Vec<f64> = j.iter().map(|x| alpha * x).collect();
    let mut z = source.clone();
    let mut next = vec![0.0; n];
    let max_iter = config.effective_max_iter();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        p.matvec_into(&z, &mut next);
        residual = 0.0;
        for i in 0..n {
            let v = damp * next[i] + source[i];
            residual = f64::max(residual, (v - z[i]).abs());
            next[i] = v;
        }
        std::mem::swap(&mut z, &mut next);
        if residual <= config.tol {
            return Ok(HlidScores {
                z,
                iterations_used: it,
                final_residual: residual,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Dense `Q = alpha (I - (1 - alpha) P)^-1`. Only for small graphs.
pub fn impact_matrix_dense(p: &CsrMatrix, alpha: f64) -> Result<DMatrix<f64>> {
    let n = p.rows();
    if n > DENSE_ORACLE_MAX_NODES {
        return Err(Error::invalid(format!(
            "dense impact matrix limited to {DENSE_ORACLE_MAX_NODES} nodes, got {n}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let mut m = DMatrix::<f64>::identity(n, n);
    for (i, j, v) in p.triplets() {
        m[(i, j)] -= (1.0 - alpha) * v;
    }
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::invalid("impact system is singular"))?;
    Ok(inv * alpha)
}

/// Full pipeline from graph and training labels to HLID scores.
pub fn compute_hlid(
    graph: &HeteroGraph,
    labels: &LabelAssignment,
    meta: &MetaWeightConfig,
    impact: &ImpactConfig,
) -> Result<HlidScores> {
    let r = relation_matrix(graph, meta)?;
    let b = meta_weighted_adjacency(graph, &r)?;
    let p = normalized_propagation(&b);
    hlid_scores(&p, &labels.indicator(graph), impact)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn adjacency(n: usize, edges: &[(usize, usize)]) -> WeightedAdjacency {
        let mut t = Vec::new();
        for &(u, v) in edges {
            t.push((u, v, 1.0));
            t.push((v, u, 1.0));
        }
        WeightedAdjacency {
            matrix: CsrMatrix::from_triplets(n, n, &t),
        }
    }

    #[test]
    fn isolated_node_propagation_is_one() {
        let p = normalized_propagation(&adjacency(1, &[]));
        assert_eq!(p.to_dense()[[0, 0]], 1.0);
    }

    #[test]
    fn single_edge_propagation() {
        let p = normalized_propagation(&adjacency(2, &[(0, 1)])).to_dense();
        for v in p.iter() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_one_returns_indicator() {
        let p = normalized_propagation(&adjacency(4, &[(0, 1), (1, 2), (2, 3)]));
        let j = vec![0.0, 1.0, 0.0, 1.0];
        let cfg = ImpactConfig { alpha: 1.0, ..Default::default() };
        assert_eq!(hlid_scores(&p, &j, &cfg).unwrap().z, j);
        let q = impact_matrix_dense(&p, 1.0).unwrap();
        assert_eq!(q, DMatrix::identity(4, 4));
    }

    #[test]
    fn no_labels_no_impact() {
        let p = normalized_propagation(&adjacency(3, &[(0, 1), (1, 2)]));
        let s = hlid_scores(&p, &[0.0; 3], &ImpactConfig::default()).unwrap();
        assert_eq!(s.z, vec![0.0; 3]);
    }

    #[test]
    fn non_convergence_reports_residual() {
        let p = normalized_propagation(&adjacency(3, &[(0, 1), (1, 2)]));
        let cfg = ImpactConfig { alpha: 0.05, tol: 1e-14, max_iter: Some(3) };
        match hlid_scores(&p, &[1.0, 0.0, 0.0], &cfg) {
            Err(Error::NoConvergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-14);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = normalized_propagation(&adjacency(2, &[(0, 1)]));
        assert!(hlid_scores(&p, &[0.5, 0.0], &ImpactConfig::default()).is_err());
        assert!(hlid_scores(&p, &[1.0], &ImpactConfig::default()).is_err());
        let cfg = ImpactConfig { alpha: 0.0, ..Default::default() };
        assert!(hlid_scores(&p, &[1.0, 0.0], &cfg).is_err());
        let big = CsrMatrix::from_triplets(501, 501, &[]);
        assert!(impact_matrix_dense(&big, 0.5).is_err());
    }

    #[test]
    fn default_iteration_cap() {
        let cfg = ImpactConfig::default();
        let k = (1e-10f64.ln() / 0.85f64.ln()).ceil() as usize;
        assert_eq!(cfg.effective_max_iter(), 10 * k);
    }
}
