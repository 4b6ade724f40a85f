//! Contrastive, label, and combined objectives with analytic gradients.
//!
//! Similarities are temperature-scaled cosines. Every loss returns its value
//! together with the gradient with respect to both embedding views so the
//! encoder can back-propagate without a tape.

use std::ops::Range;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::hetgraph::{HeteroGraph, LabelAssignment};
use crate::seed;

/// Probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub tau: f64,
    /// Weight of the general contrastive loss.
    pub lambda1: f64,
    /// Weight of the target-specific contrastive loss.
    pub lambda2: f64,
    /// Add the positive pair to the general loss denominator (canonical
    /// NT-Xent). Off by default.
    pub include_positive_in_denominator: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 1.0,
            lambda1: 0.3,
            lambda2: 0.15,
            include_positive_in_denominator: false,
        }
    }
}

impl LossConfig {
    /// Weights may be zero, which switches the corresponding term off.
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Local and augmented embeddings, rows aligned by global index.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingViews<'a> {
    pub h: ArrayView2<'a, f64>,
    pub h_hat: ArrayView2<'a, f64>,
}

impl<'a> EmbeddingViews<'a> {
    pub fn new(h: ArrayView2<'a, f64>, h_hat: ArrayView2<'a, f64>) -> Result<Self> {
        if h.dim() != h_hat.dim() {
            return Err(Error::Shape(format!("views are {:?} and {:?}", h.dim(), h_hat.dim())));
        }
        if h.iter().chain(h_hat.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        Ok(EmbeddingViews { h, h_hat })
    }
}

/// Loss value with gradients for both views.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub d_h: Array2<f64>,
    pub d_h_hat: Array2<f64>,
    /// Similarity evaluations performed.
    pub pairs: usize,
}

/// `cos(h, g) / tau`.
pub fn similarity(h: ArrayView1<'_, f64>, g: ArrayView1<'_, f64>, tau: f64) -> Result<f64> {
    let nh = h.dot(&h).sqrt();
    let ng = g.dot(&g).sqrt();
    if nh == 0.0 {
        return Err(Error::ZeroNorm(0));
    }
    if ng == 0.0 {
        return Err(Error::ZeroNorm(1));
    }
    Ok(h.dot(&g) / (nh * ng) / tau)
}

struct UnitRows {
    unit: Array2<f64>,
    norms: Vec<f64>,
}

fn unit_rows(x: ArrayView2<'_, f64>, row_offset: usize) -> Result<UnitRows> {
    let mut unit = x.to_owned();
    let mut norms = Vec::with_capacity(x.nrows());
    for (i, mut row) in unit.axis_iter_mut(Axis(0)).enumerate() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 {
            return Err(Error::ZeroNorm(row_offset + i));
        }
        row /= n;
        norms.push(n);
    }
    Ok(UnitRows { unit, norms })
}

/// Maps a gradient w.r.t. unit rows back to the raw rows.
fn through_normalization(d_unit: &Array2<f64>, u: &UnitRows) -> Array2<f64> {
    let mut out = d_unit.clone();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let ui = u.unit.row(i);
        let proj = row.dot(&ui);
        row.scaled_add(-proj, &ui);
        row /= u.norms[i];
    }
    out
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// General contrastive loss over explicit node-type ranges.
///
/// For node `u` of type `t` the positive is `(h_u, h_hat_u)` and the
/// denominator sums `exp(S(h_u, h_hat_v))` over same-type `v != u` (or all
/// same-type `v` with `include_positive`). The total is divided by the node
/// count.
pub fn general_contrastive_by_ranges(
    views: &EmbeddingViews<'_>,
    ranges: &[Range<usize>],
    tau: f64,
    include_positive: bool,
) -> Result<LossGrad> {
    let (n_rows, dim) = views.h.dim();
    let total: usize = ranges.iter().map(|r| r.len()).sum();
    let mut d_h = Array2::zeros((n_rows, dim));
    let mut d_h_hat = Array2::zeros((n_rows, dim));
    let mut value = 0.0;
    let mut pairs = 0;
    for (t, range) in ranges.iter().enumerate() {
        if range.len() < 2 {
            return Err(Error::DegenerateType(format!("#{t}")));
        }
    }
    let scale = 1.0 / total as f64;
    for range in ranges {
        let n = range.len();
        let u = unit_rows(views.h.slice(ndarray::s![range.clone(), ..]), range.start)?;
        let v = unit_rows(views.h_hat.slice(ndarray::s![range.clone(), ..]), range.start)?;
        let sim = u.unit.dot(&v.unit.t()) / tau;
        pairs += n * n;
        let mut d_sim = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            let row = sim.row(i);
            let members = (0..n).filter(|&j| include_positive || j != i);
            let lse = log_sum_exp(members.clone().map(|j| row[j]));
            value += lse - row[i];
            for j in members {
                d_sim[[i, j]] = (row[j] - lse).exp() * scale;
            }
            d_sim[[i, i]] -= scale;
        }
        let d_u = d_sim.dot(&v.unit) / tau;
        let d_v = d_sim.t().dot(&u.unit) / tau;
        d_h.slice_mut(ndarray::s![range.clone(), ..])
            .assign(&through_normalization(&d_u, &u));
        d_h_hat
            .slice_mut(ndarray::s![range.clone(), ..])
            .assign(&through_normalization(&d_v, &v));
    }
    Ok(LossGrad {
        value: value * scale,
        d_h,
        d_h_hat,
        pairs,
    })
}

pub fn general_contrastive_loss(views: &EmbeddingViews<'_>, graph: &HeteroGraph, config: &LossConfig) -> Result<f64> {
    general_contrastive_grad(views, graph, config).map(|g| g.value)
}

pub fn general_contrastive_grad(
    views: &EmbeddingViews<'_>,
    graph: &HeteroGraph,
    config: &LossConfig,
) -> Result<LossGrad> {
    general_contrastive_by_ranges(views, &graph.type_ranges(), config.tau, config.include_positive_in_denominator)
        .map_err(|e| match e {
            Error::DegenerateType(t) => {
                let idx: usize = t.trim_start_matches('#').parse().unwrap_or(0);
                Error::DegenerateType(graph.types()[idx].name.clone())
            }
            e => e,
        })
}

/// Target-specific contrastive loss over labeled anchors.
///
/// `anchors` lists `(row, label group)` pairs. For anchor `u` the numerator
/// sums over anchors sharing its group (itself included) and the denominator
/// over anchors of other groups. Anchors without a differently labeled peer
/// are skipped.
pub fn target_contrastive_by_rows(
    views: &EmbeddingViews<'_>,
    anchors: &[(usize, usize)],
    tau: f64,
) -> Result<LossGrad> {
    let (n_rows, dim) = views.h.dim();
    let rows: Vec<usize> = anchors.iter().map(|a| a.0).collect();
    let groups: Vec<usize> = anchors.iter().map(|a| a.1).collect();
    let n = rows.len();
    let usable: Vec<usize> = (0..n)
        .filter(|&i| groups.iter().any(|&g| g != groups[i]))
        .collect();
    if usable.is_empty() {
        return Err(Error::NoAnchors);
    }
    if usable.len() < n {
        log::warn!("skipping {} anchors with no differently labeled peer", n - usable.len());
    }
    let u = unit_rows(views.h.select(Axis(0), &rows).view(), 0)?;
    let v = unit_rows(views.h_hat.select(Axis(0), &rows).view(), 0)?;
    let sim = u.unit.dot(&v.unit.t()) / tau;
    let scale = 1.0 / usable.len() as f64;
    let mut d_sim = Array2::<f64>::zeros((n, n));
    let mut value = 0.0;
    for &i in &usable {
        let row = sim.row(i);
        let pos = (0..n).filter(|&j| groups[j] == groups[i]);
        let neg = (0..n).filter(|&j| groups[j] != groups[i]);
        let lse_pos = log_sum_exp(pos.clone().map(|j| row[j]));
        let lse_neg = log_sum_exp(neg.clone().map(|j| row[j]));
        value += lse_neg - lse_pos;
        for j in pos {
            d_sim[[i, j]] = -(row[j] - lse_pos).exp() * scale;
        }
        for j in neg {
            d_sim[[i, j]] = (row[j] - lse_neg).exp() * scale;
        }
    }
    let d_u = through_normalization(&(d_sim.dot(&v.unit) / tau), &u);
    let d_v = through_normalization(&(d_sim.t().dot(&u.unit) / tau), &v);
    let mut d_h = Array2::zeros((n_rows, dim));
    let mut d_h_hat = Array2::zeros((n_rows, dim));
    for (k, &r) in rows.iter().enumerate() {
        let mut a = d_h.row_mut(r);
        a += &d_u.row(k);
        let mut b = d_h_hat.row_mut(r);
        b += &d_v.row(k);
    }
    Ok(LossGrad {
        value: value * scale,
        d_h,
        d_h_hat,
        pairs: usable.len() * n,
    })
}

/// `(global row, label group)` for every labeled target node.
pub fn label_anchors(graph: &HeteroGraph, labels: &LabelAssignment) -> Vec<(usize, usize)> {
    let off = graph.offset(labels.target_type);
    labels
        .label_groups()
        .into_iter()
        .map(|(local, g)| (off + local, g))
        .collect()
}

pub fn target_contrastive_loss(
    views: &EmbeddingViews<'_>,
    graph: &HeteroGraph,
    labels: &LabelAssignment,
    tau: f64,
) -> Result<f64> {
    target_contrastive_by_rows(views, &label_anchors(graph, labels), tau).map(|g| g.value)
}

/// Summed cross-entropy between probability rows and binary targets.
///
/// Single-label mode uses `-sum Y log p`; multi-label mode adds the
/// complementary `(1 - Y) log(1 - p)` term. Probabilities are clamped to
/// [`PROB_FLOOR`].
pub fn label_loss(probs: ArrayView2<'_, f64>, y: &Array2<bool>, multi_label: bool) -> Result<f64> {
    if probs.dim() != y.dim() {
        return Err(Error::Shape(format!("outputs are {:?}, labels are {:?}", probs.dim(), y.dim())));
    }
    let mut clamped = 0usize;
    let mut log_clamped = |p: f64| {
        if p < PROB_FLOOR {
            clamped += 1;
            PROB_FLOOR.ln()
        } else {
            p.ln()
        }
    };
    let mut total = 0.0;
    for (p, &t) in probs.iter().zip(y.iter()) {
        if t {
            total -= log_clamped(*p);
        } else if multi_label {
            total -= log_clamped(1.0 - *p);
        }
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} probabilities at {PROB_FLOOR:e}");
    }
    Ok(total)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Label loss from raw classifier scores, with the gradient w.r.t. them.
/// Softmax in single-label mode, element-wise sigmoid otherwise.
pub fn label_loss_logits(logits: ArrayView2<'_, f64>, y: &Array2<bool>, multi_label: bool) -> Result<(f64, Array2<f64>)> {
    if logits.dim() != y.dim() {
        return Err(Error::Shape(format!("outputs are {:?}, labels are {:?}", logits.dim(), y.dim())));
    }
    let floor = PROB_FLOOR.ln();
    let mut grad = Array2::zeros(logits.dim());
    let mut total = 0.0;
    let mut clamped = 0usize;
    for ((z, t), mut g) in logits.rows().into_iter().zip(y.rows()).zip(grad.rows_mut()) {
        if multi_label {
            for j in 0..z.len() {
                let (lp, lq) = (-softplus(-z[j]), -softplus(z[j]));
                let p = 1.0 / (1.0 + (-z[j]).exp());
                let logp = if t[j] { lp } else { lq };
                if logp < floor {
                    clamped += 1;
                    total -= floor;
                } else {
                    total -= logp;
                    g[j] = if t[j] { p - 1.0 } else { p };
                }
            }
        } else {
            let lse = log_sum_exp(z.iter().copied());
            for k in (0..z.len()).filter(|&k| t[k]) {
                let logp = z[k] - lse;
                if logp < floor {
                    clamped += 1;
                    total -= floor;
                    continue;
                }
                total -= logp;
                for j in 0..z.len() {
                    g[j] += (z[j] - lse).exp();
                }
                g[k] -= 1.0;
            }
        }
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} probabilities at {PROB_FLOOR:e}");
    }
    Ok((total, grad))
}

/// `l_lb + lambda1 l_cl1 + lambda2 l_cl2`.
pub fn overall_loss(label: f64, general: f64, target: f64, config: &LossConfig) -> f64 {
    label + config.lambda1 * general + config.lambda2 * target
}

/// Relative errors below this magnitude are measured against it instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares `analytic` against central differences of `f` at `x`.
///
/// With `max_coords` set, a seeded random subset of coordinates is probed.
pub fn grad_check<F>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    eps: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> f64,
{
    if x.len() != analytic.len() {
        return Err(Error::Shape(format!("{} parameters, {} gradient entries", x.len(), analytic.len())));
    }
    let coords: Vec<usize> = match max_coords {
        Some(k) if k < x.len() => {
            let mut rng = seed::rng_for(seed, "grad-check", 0);
            let mut c = index::sample(&mut rng, x.len(), k).into_vec();
            c.sort_unstable();
            c
        }
        _ => (0..x.len()).collect(),
    };
    let mut probe = x.to_vec();
    let mut worst = (0.0, 0);
    for &i in &coords {
        let orig = probe[i];
        probe[i] = orig + eps;
        let fp = f(&probe);
        probe[i] = orig - eps;
        let fm = f(&probe);
        probe[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("loss at probe of coordinate {i}")));
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheck {
        max_rel_error: worst.0,
        worst_index: worst.1,
        checked: coords.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn similarity_basics() {
        let h = array![1.0, 2.0, -1.0];
        assert!((similarity(h.view(), h.view(), 1.0).unwrap() - 1.0).abs() < 1e-15);
        let a = array![1.0, 0.0];
        let b = array![0.0, 3.0];
        assert_eq!(similarity(a.view(), b.view(), 1.0).unwrap(), 0.0);
        let g = array![0.5, 1.0, 2.0];
        let s1 = similarity(h.view(), g.view(), 1.0).unwrap();
        let s2 = similarity(h.view(), g.view(), 0.5).unwrap();
        assert!((s2 - 2.0 * s1).abs() < 1e-15);
        assert!(matches!(similarity(h.view(), array![0.0, 0.0, 0.0].view(), 1.0), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn general_loss_identical_embeddings_is_zero() {
        let h = array![[1.0, 2.0], [1.0, 2.0]];
        let views = EmbeddingViews::new(h.view(), h.view()).unwrap();
        let g = general_contrastive_by_ranges(&views, &[0..2], 1.0, false).unwrap();
        assert!(g.value.abs() < 1e-15);
        let swapped = array![[1.0, 2.0], [1.0, 2.0]];
        let views = EmbeddingViews::new(h.view(), swapped.view()).unwrap();
        assert!(general_contrastive_by_ranges(&views, &[0..2], 1.0, false).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn general_loss_rejects_singleton_type() {
        let h = array![[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]];
        let views = EmbeddingViews::new(h.view(), h.view()).unwrap();
        assert!(matches!(
            general_contrastive_by_ranges(&views, &[0..2, 2..3], 1.0, false),
            Err(Error::DegenerateType(_))
        ));
    }

    #[test]
    fn target_loss_identical_embeddings_is_zero() {
        let h = array![[1.0, 0.5], [1.0, 0.5], [1.0, 0.5], [1.0, 0.5]];
        let views = EmbeddingViews::new(h.view(), h.view()).unwrap();
        let anchors = [(0, 0), (1, 0), (2, 1), (3, 1)];
        assert!(target_contrastive_by_rows(&views, &anchors, 1.0).unwrap().value.abs() < 1e-15);
    }

    #[test]
    fn target_loss_needs_two_groups() {
        let h = array![[1.0, 0.5], [0.0, 1.0]];
        let views = EmbeddingViews::new(h.view(), h.view()).unwrap();
        assert!(matches!(
            target_contrastive_by_rows(&views, &[(0, 0), (1, 0)], 1.0),
            Err(Error::NoAnchors)
        ));
    }

    #[test]
    fn target_loss_drops_when_positive_pair_aligns() {
        let h = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let anchors = [(0, 0), (1, 0), (2, 1)];
        let far = array![[1.0, 0.0], [-1.0, 0.2], [1.0, 1.0]];
        let near = array![[1.0, 0.0], [1.0, 0.2], [1.0, 1.0]];
        let l_far = target_contrastive_by_rows(&EmbeddingViews::new(h.view(), far.view()).unwrap(), &anchors, 1.0)
            .unwrap()
            .value;
        let l_near = target_contrastive_by_rows(&EmbeddingViews::new(h.view(), near.view()).unwrap(), &anchors, 1.0)
            .unwrap()
            .value;
        assert!(l_near < l_far);
    }

    #[test]
    fn label_loss_hand_values() {
        let y = array![[true, false, false, false], [false, false, true, false]];
        let uniform = Array2::from_elem((2, 4), 0.25);
        let l = label_loss(uniform.view(), &y, false).unwrap();
        assert!((l - 2.0 * 4f64.ln()).abs() < 1e-12);
        let perfect = y.mapv(|b| if b { 1.0 } else { 0.0 });
        assert!(label_loss(perfect.view(), &y, false).unwrap() <= 1e-11);

        let (ll, _) = label_loss_logits(Array2::zeros((2, 4)).view(), &y, false).unwrap();
        assert!((ll - 2.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_loss_clamps_zero_probability() {
        let y = array![[true, false]];
        let p = array![[0.0, 1.0]];
        let l = label_loss(p.view(), &y, false).unwrap();
        assert!((l + PROB_FLOOR.ln()).abs() < 1e-12);
        let lm = label_loss(p.view(), &y, true).unwrap();
        assert!((lm + 2.0 * PROB_FLOOR.ln()).abs() < 1e-12);
    }

    #[test]
    fn overall_loss_weights() {
        let cfg = LossConfig { lambda1: 0.3, lambda2: 0.15, ..Default::default() };
        assert!((overall_loss(1.0, 2.0, 3.0, &cfg) - 2.05).abs() < 1e-15);
        let off = LossConfig { lambda1: 0.0, lambda2: 0.0, ..Default::default() };
        assert_eq!(overall_loss(1.25, 7.0, 9.0, &off), 1.25);
        let a = overall_loss(0.0, 1.0, 0.0, &LossConfig { lambda1: 0.2, ..cfg });
        let b = overall_loss(0.0, 1.0, 0.0, &LossConfig { lambda1: 0.4, ..cfg });
        assert!((b - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn grad_check_quadratic() {
        let x = [0.3, -1.2, 2.5];
        let analytic: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let r = grad_check(|p| p.iter().map(|v| v * v).sum(), &x, &analytic, 1e-5, None, 0).unwrap();
        assert!(r.max_rel_error <= 1e-9, "{r:?}");
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn grad_check_flags_wrong_gradient() {
        let x = [1.0, 2.0];
        let r = grad_check(|p| p[0] * p[1], &x, &[2.0, 2.0], 1e-5, None, 0).unwrap();
        assert!(r.max_rel_error > 0.4);
        assert_eq!(r.worst_index, 1);
    }
}
