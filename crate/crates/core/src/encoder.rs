//! Per-relation graph convolution encoder with a two-view classifier head.
//!
//! Layer `l` computes `Z_l = H_{l-1} S_l + sum_r A_r H_{l-1} W_{r,l}` where
//! `A_r` is the symmetrically normalized adjacency of relation `r` (both
//! directions, no self-loop). Hidden layers apply ReLU; the final layer is
//! standardized per dimension over all nodes with a learnable scale and
//! shift. The classifier maps `[h, h_hat]` to class scores.
//!
//! Gradients are derived by hand and checked against finite differences in
//! the tests.

use std::io::{Read, Write};
use std::ops::Range;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::biasmetrics::{bucket_report, f1_scores, node_accuracy, AccuracyMode, BucketReport};
use crate::error::{Error, Result};
use crate::hetgraph::{HeteroGraph, LabelAssignment, TypeInput};
use crate::hlid::HlidScores;
use crate::htad::{build_sample_space, AugmentConfig, AugmentedEdgeSet, HtadSampler};
use crate::losses::{
    general_contrastive_by_ranges, label_anchors, label_loss_logits, overall_loss, target_contrastive_by_rows,
    LossConfig,
};
use crate::seed;

const NORM_EPS: f64 = 1e-5;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub multi_label: bool,
    pub threshold: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 2,
            hidden_dim: 64,
            epochs: 50,
            learning_rate: 5e-3,
            weight_decay: 0.0,
            seed: 0,
            multi_label: false,
            threshold: 0.5,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.layers) {
            return Err(Error::invalid(format!("layers must be 1 or 2, got {}", self.layers)));
        }
        if self.hidden_dim == 0 {
            return Err(Error::invalid("hidden_dim must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::invalid(format!("threshold must lie in (0, 1), got {}", self.threshold)));
        }
        Ok(())
    }
}

/// All trainable tensors. Vectors are stored as single-row matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// Per node type, `d_t x hidden`.
    pub input: Vec<Array2<f64>>,
    /// Per layer, `hidden x hidden`.
    pub self_weights: Vec<Array2<f64>>,
    /// Per layer, per relation, `hidden x hidden`.
    pub relation_weights: Vec<Vec<Array2<f64>>>,
    pub norm_scale: Array2<f64>,
    pub norm_shift: Array2<f64>,
    /// `2 hidden x C`.
    pub classifier: Array2<f64>,
    pub bias: Array2<f64>,
}

fn glorot(rows: usize, cols: usize, rng: &mut seed::Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-a..a))
}

impl EncoderParams {
    pub fn init(graph: &HeteroGraph, config: &EncoderConfig, num_classes: usize) -> Result<Self> {
        config.validate()?;
        if num_classes == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        let h = config.hidden_dim;
        let mut rng = seed::rng_for(config.seed, "init", 0);
        let input = graph
            .inputs()
            .iter()
            .map(|x| glorot(x.input_dim(), h, &mut rng))
            .collect();
        let mut self_weights = Vec::new();
        let mut relation_weights = Vec::new();
        for _ in 0..config.layers {
            self_weights.push(glorot(h, h, &mut rng));
            relation_weights.push(
                (0..graph.relations().len())
                    .map(|_| glorot(h, h, &mut rng))
                    .collect(),
            );
        }
        Ok(EncoderParams {
            input,
            self_weights,
            relation_weights,
            norm_scale: Array2::ones((1, h)),
            norm_shift: Array2::zeros((1, h)),
            classifier: glorot(2 * h, num_classes, &mut rng),
            bias: Array2::zeros((1, num_classes)),
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.norm_scale.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.bias.ncols()
    }

    pub fn layers(&self) -> usize {
        self.self_weights.len()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Tensors in serialization order.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out: Vec<&Array2<f64>> = self.input.iter().collect();
        for l in 0..self.self_weights.len() {
            out.push(&self.self_weights[l]);
            out.extend(self.relation_weights[l].iter());
        }
        out.extend([&self.norm_scale, &self.norm_shift, &self.classifier, &self.bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = self.input.iter_mut().collect();
        for (s, rel) in self.self_weights.iter_mut().zip(self.relation_weights.iter_mut()) {
            out.push(s);
            out.extend(rel.iter_mut());
        }
        out.extend([
            &mut self.norm_scale,
            &mut self.norm_shift,
            &mut self.classifier,
            &mut self.bias,
        ]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut it = flat.iter();
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &EncoderParams) -> f64 {
        self.to_flat()
            .iter()
            .zip(other.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn check_shapes(&self, graph: &HeteroGraph) -> Result<()> {
        let h = self.hidden_dim();
        let inputs = graph.inputs();
        if self.input.len() != inputs.len() {
            return Err(Error::Shape(format!(
                "{} input projections for {} node types",
                self.input.len(),
                inputs.len()
            )));
        }
        for (w, x) in self.input.iter().zip(&inputs) {
            if w.dim() != (x.input_dim(), h) {
                return Err(Error::Shape(format!("input projection {:?}, expected {:?}", w.dim(), (x.input_dim(), h))));
            }
        }
        for (s, rel) in self.self_weights.iter().zip(&self.relation_weights) {
            if rel.len() != graph.relations().len() {
                return Err(Error::Shape(format!(
                    "{} relation weights for {} relations",
                    rel.len(),
                    graph.relations().len()
                )));
            }
            if s.dim() != (h, h) || rel.iter().any(|w| w.dim() != (h, h)) {
                return Err(Error::Shape("layer weights must be hidden x hidden".into()));
            }
        }
        if self.classifier.nrows() != 2 * h || self.classifier.ncols() != self.num_classes() {
            return Err(Error::Shape(format!("classifier is {:?}", self.classifier.dim())));
        }
        Ok(())
    }
}

/// Which edge set a message graph was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSource {
    Original,
    Augmented,
}

/// Normalized per-relation propagation matrices over all `N` nodes.
#[derive(Debug, Clone)]
pub struct MessageGraph {
    pub relations: Vec<crate::sparse::CsrMatrix>,
    pub source: EdgeSource,
}

impl MessageGraph {
    pub fn original(graph: &HeteroGraph) -> Self {
        Self::build(graph, graph.global_edges().into_iter(), EdgeSource::Original)
    }

    pub fn augmented(graph: &HeteroGraph, edges: &AugmentedEdgeSet) -> Self {
        Self::build(
            graph,
            edges.edges.iter().map(|e| (e.relation, e.u, e.v)),
            EdgeSource::Augmented,
        )
    }

    fn build(graph: &HeteroGraph, edges: impl Iterator<Item = (usize, usize, usize)>, source: EdgeSource) -> Self {
        let n = graph.num_nodes();
        let mut per_rel: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); graph.relations().len()];
        for (r, u, v) in edges {
            per_rel[r].push((u, v, 1.0));
            per_rel[r].push((v, u, 1.0));
        }
        let relations = per_rel
            .into_iter()
            .map(|t| {
                let a = crate::sparse::CsrMatrix::from_triplets(n, n, &t);
                let inv: Vec<f64> = a
                    .row_sums()
                    .iter()
                    .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
                    .collect();
                let scaled: Vec<(usize, usize, f64)> = a.triplets().map(|(i, j, w)| (i, j, inv[i] * w * inv[j])).collect();
                crate::sparse::CsrMatrix::from_triplets(n, n, &scaled)
            })
            .collect();
        MessageGraph { relations, source }
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub source: EdgeSource,
    layer_inputs: Vec<Array2<f64>>,
    messages: Vec<Vec<Array2<f64>>>,
    pre_activations: Vec<Array2<f64>>,
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    /// Final embeddings, `N x hidden`.
    pub output: Array2<f64>,
}

/// Graph-specific encoder inputs.
#[derive(Debug, Clone)]
pub struct Encoder {
    inputs: Vec<TypeInput>,
    ranges: Vec<Range<usize>>,
    num_nodes: usize,
}

impl Encoder {
    pub fn new(graph: &HeteroGraph) -> Self {
        Encoder {
            inputs: graph.inputs(),
            ranges: graph.type_ranges(),
            num_nodes: graph.num_nodes(),
        }
    }

    pub fn forward(&self, params: &EncoderParams, msg: &MessageGraph) -> Result<ForwardCache> {
        let h = params.hidden_dim();
        if params.input.len() != self.inputs.len() {
            return Err(Error::Shape("parameters do not match the node types".into()));
        }
        if params.relation_weights.iter().any(|r| r.len() != msg.relations.len()) {
            return Err(Error::Shape("parameters do not match the relations".into()));
        }
        let mut x = Array2::zeros((self.num_nodes, h));
        for ((input, w), range) in self.inputs.iter().zip(&params.input).zip(&self.ranges) {
            let mut block = x.slice_mut(s![range.clone(), ..]);
            match input {
                TypeInput::Dense(f) => block.assign(&f.dot(w)),
                TypeInput::Identity(_) => block.assign(w),
            }
        }
        let layers = params.layers();
        let mut layer_inputs = Vec::with_capacity(layers);
        let mut messages = Vec::with_capacity(layers);
        let mut pre_activations = Vec::with_capacity(layers);
        for l in 0..layers {
            let mut z = x.dot(&params.self_weights[l]);
            let mut msgs = Vec::with_capacity(msg.relations.len());
            for (a, w) in msg.relations.iter().zip(&params.relation_weights[l]) {
                let m = a.matmul_dense(x.view());
                z += &m.dot(w);
                msgs.push(m);
            }
            let next = if l + 1 < layers { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            layer_inputs.push(std::mem::replace(&mut x, next));
            messages.push(msgs);
            pre_activations.push(z);
        }
        let n = self.num_nodes as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let centered = &x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
        let inv_std = var.mapv(|v| 1.0 / (v + NORM_EPS).sqrt());
        let normalized = centered * &inv_std;
        let output = &normalized * &params.norm_scale.row(0) + params.norm_shift.row(0);
        Ok(ForwardCache {
            source: msg.source,
            layer_inputs,
            messages,
            pre_activations,
            normalized,
            inv_std,
            output,
        })
    }

    /// Accumulates into `grads` the gradient of a scalar whose derivative
    /// w.r.t. the cached output is `d_out`.
    pub fn backward(
        &self,
        params: &EncoderParams,
        msg: &MessageGraph,
        cache: &ForwardCache,
        d_out: &Array2<f64>,
        grads: &mut EncoderParams,
    ) {
        let n = self.num_nodes as f64;
        let xhat = &cache.normalized;
        {
            let mut gs = grads.norm_scale.row_mut(0);
            gs += &(d_out * xhat).sum_axis(Axis(0));
            let mut gb = grads.norm_shift.row_mut(0);
            gb += &d_out.sum_axis(Axis(0));
        }
        let d_xhat = d_out * &params.norm_scale.row(0);
        let sum_d = d_xhat.sum_axis(Axis(0));
        let sum_dx = (&d_xhat * xhat).sum_axis(Axis(0));
        let mut d_z = (&d_xhat * n - &sum_d - &(xhat * &sum_dx)) * &(&cache.inv_std / n);

        for l in (0..params.layers()).rev() {
            if l + 1 < params.layers() {
                d_z.zip_mut_with(&cache.pre_activations[l], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            let x = &cache.layer_inputs[l];
            grads.self_weights[l] += &x.t().dot(&d_z);
            let mut d_x = d_z.dot(&params.self_weights[l].t());
            for (r, a) in msg.relations.iter().enumerate() {
                grads.relation_weights[l][r] += &cache.messages[l][r].t().dot(&d_z);
                let d_m = d_z.dot(&params.relation_weights[l][r].t());
                d_x += &a.transpose().matmul_dense(d_m.view());
            }
            d_z = d_x;
        }
        for ((input, g), range) in self.inputs.iter().zip(grads.input.iter_mut()).zip(&self.ranges) {
            let block = d_z.slice(s![range.clone(), ..]);
            match input {
                TypeInput::Dense(f) => *g += &f.t().dot(&block),
                TypeInput::Identity(_) => *g += &block,
            }
        }
    }
}

/// Classifier scores for `[h, h_hat]` rows.
pub fn classifier_scores(params: &EncoderParams, h: ArrayView2<'_, f64>, h_hat: ArrayView2<'_, f64>) -> Array2<f64> {
    let hd = params.hidden_dim();
    h.dot(&params.classifier.slice(s![..hd, ..])) + h_hat.dot(&params.classifier.slice(s![hd.., ..])) + params.bias.row(0)
}

/// One evaluation of the training objective with gradients.
#[derive(Debug, Clone)]
pub struct Objective {
    pub total: f64,
    pub label: f64,
    pub general: f64,
    pub target: f64,
    pub grads: EncoderParams,
    /// Similarity evaluations spent in the contrastive terms.
    pub loss_pairs: usize,
}

/// Training inputs that stay fixed across epochs.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub encoder: Encoder,
    pub original: MessageGraph,
    /// Global rows of labeled target nodes.
    pub rows: Vec<usize>,
    pub targets: Array2<bool>,
    pub anchors: Vec<(usize, usize)>,
    pub multi_label: bool,
}

impl TrainingSet {
    pub fn new(graph: &HeteroGraph, labels: &LabelAssignment) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("no training labels"));
        }
        let off = graph.offset(labels.target_type);
        let locals = labels.labeled_locals();
        let mut targets = Array2::from_elem((locals.len(), labels.num_classes), false);
        for (i, &l) in locals.iter().enumerate() {
            for (j, v) in labels.row(l).unwrap().into_iter().enumerate() {
                targets[[i, j]] = v;
            }
        }
        Ok(TrainingSet {
            encoder: Encoder::new(graph),
            original: MessageGraph::original(graph),
            rows: locals.iter().map(|l| off + l).collect(),
            targets,
            anchors: label_anchors(graph, labels),
            multi_label: labels.multi_label,
        })
    }

    /// Overall objective and its gradient. Without `augmented` the second
    /// view is the original graph's embedding.
    pub fn objective(
        &self,
        params: &EncoderParams,
        augmented: Option<&MessageGraph>,
        loss: &LossConfig,
    ) -> Result<Objective> {
        let cache = self.encoder.forward(params, &self.original)?;
        let aug_cache = match augmented {
            Some(m) => Some(self.encoder.forward(params, m)?),
            None => None,
        };
        let h = &cache.output;
        let h_hat = aug_cache.as_ref().map_or(h, |c| &c.output);
        let hd = params.hidden_dim();

        let h_rows = h.select(Axis(0), &self.rows);
        let hat_rows = h_hat.select(Axis(0), &self.rows);
        let logits = classifier_scores(params, h_rows.view(), hat_rows.view());
        let (label, d_logits) = label_loss_logits(logits.view(), &self.targets, self.multi_label)?;

        let mut grads = params.zeros_like();
        grads.classifier.slice_mut(s![..hd, ..]).assign(&h_rows.t().dot(&d_logits));
        grads.classifier.slice_mut(s![hd.., ..]).assign(&hat_rows.t().dot(&d_logits));
        grads.bias.row_mut(0).assign(&d_logits.sum_axis(Axis(0)));

        let mut d_h = Array2::zeros(h.dim());
        let mut d_hat = Array2::zeros(h.dim());
        let d_h_rows = d_logits.dot(&params.classifier.slice(s![..hd, ..]).t());
        let d_hat_rows = d_logits.dot(&params.classifier.slice(s![hd.., ..]).t());
        for (k, &r) in self.rows.iter().enumerate() {
            let mut a = d_h.row_mut(r);
            a += &d_h_rows.row(k);
            let mut b = d_hat.row_mut(r);
            b += &d_hat_rows.row(k);
        }

        let views = crate::losses::EmbeddingViews::new(h.view(), h_hat.view())?;
        let mut general = 0.0;
        let mut target = 0.0;
        let mut loss_pairs = 0;
        if loss.lambda1 > 0.0 {
            let g = general_contrastive_by_ranges(
                &views,
                &self.encoder.ranges,
                loss.tau,
                loss.include_positive_in_denominator,
            )?;
            general = g.value;
            loss_pairs += g.pairs;
            d_h.scaled_add(loss.lambda1, &g.d_h);
            d_hat.scaled_add(loss.lambda1, &g.d_h_hat);
        }
        if loss.lambda2 > 0.0 {
            let g = target_contrastive_by_rows(&views, &self.anchors, loss.tau)?;
            target = g.value;
            loss_pairs += g.pairs;
            d_h.scaled_add(loss.lambda2, &g.d_h);
            d_hat.scaled_add(loss.lambda2, &g.d_h_hat);
        }

        self.encoder.backward(params, &self.original, &cache, &d_h, &mut grads);
        match (&aug_cache, augmented) {
            (Some(c), Some(m)) => self.encoder.backward(params, m, c, &d_hat, &mut grads),
            _ => self.encoder.backward(params, &self.original, &cache, &d_hat, &mut grads),
        }
        Ok(Objective {
            total: overall_loss(label, general, target, loss),
            label,
            general,
            target,
            grads,
            loss_pairs,
        })
    }
}

/// Adaptive-moment optimizer with L2 decay folded into the gradient.
#[derive(Debug, Clone)]
pub struct Adam {
    m: EncoderParams,
    v: EncoderParams,
    step: i32,
    lr: f64,
    decay: f64,
}

impl Adam {
    pub fn new(params: &EncoderParams, lr: f64, decay: f64) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr,
            decay,
        }
    }

    pub fn step(&mut self, params: &mut EncoderParams, grads: &EncoderParams) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let (lr, decay) = (self.lr, self.decay);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g + decay * *p;
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total: f64,
    pub label: f64,
    pub general: f64,
    pub target: f64,
    pub augmented_edges: usize,
}

/// Work done by the sampler and the contrastive losses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkCounter {
    pub sampling: u64,
    pub loss_pairs: u64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub params: EncoderParams,
    pub history: Vec<EpochMetrics>,
    pub work: WorkCounter,
}

fn run_training(
    graph: &HeteroGraph,
    labels: &LabelAssignment,
    config: &EncoderConfig,
    loss: &LossConfig,
    sampler: Option<&HtadSampler>,
) -> Result<TrainResult> {
    config.validate()?;
    loss.validate()?;
    let set = TrainingSet::new(graph, labels)?;
    let mut params = EncoderParams::init(graph, config, labels.num_classes)?;
    params.check_shapes(graph)?;
    let mut adam = Adam::new(&params, config.learning_rate, config.weight_decay);
    let mut history = Vec::with_capacity(config.epochs);
    let mut work = WorkCounter::default();
    for epoch in 0..config.epochs {
        let (obj, augmented_edges) = match sampler {
            Some(s) => {
                let drawn = s.sample(epoch as u64);
                work.sampling += s.work_per_draw() as u64;
                let msg = MessageGraph::augmented(graph, &drawn);
                (set.objective(&params, Some(&msg), loss)?, drawn.len())
            }
            None => (set.objective(&params, None, loss)?, graph.num_edges()),
        };
        work.loss_pairs += obj.loss_pairs as u64;
        if !obj.total.is_finite() || obj.grads.to_flat().iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "epoch {epoch}: loss {} (label {}, general {}, target {})",
                obj.total, obj.label, obj.general, obj.target
            )));
        }
        history.push(EpochMetrics {
            epoch,
            total: obj.total,
            label: obj.label,
            general: obj.general,
            target: obj.target,
            augmented_edges,
        });
        adam.step(&mut params, &obj.grads);
    }
    Ok(TrainResult { params, history, work })
}

/// Trains with a fresh augmented edge set per epoch.
pub fn train(
    graph: &HeteroGraph,
    labels: &LabelAssignment,
    hlid: &HlidScores,
    config: &EncoderConfig,
    augment: &AugmentConfig,
    loss: &LossConfig,
) -> Result<TrainResult> {
    let mut rng = seed::rng_for(augment.seed, "htad-space", 0);
    let space = build_sample_space(graph, augment, &mut rng)?;
    let sampler = HtadSampler::new(space, hlid, augment)?;
    run_training(graph, labels, config, loss, Some(&sampler))
}

/// Label loss only, both classifier slots fed by the original graph.
pub fn train_supervised(graph: &HeteroGraph, labels: &LabelAssignment, config: &EncoderConfig) -> Result<TrainResult> {
    let loss = LossConfig {
        lambda1: 0.0,
        lambda2: 0.0,
        ..LossConfig::default()
    };
    run_training(graph, labels, config, &loss, None)
}

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Classifier scores for every target node.
    pub scores: Array2<f64>,
    pub labels: Array2<bool>,
    /// Edge set the embeddings were computed from.
    pub source: EdgeSource,
}

/// Turns score rows into label rows: argmax in single-label mode, sigmoid
/// above `threshold` in multi-label mode.
pub fn decide(scores: ArrayView2<'_, f64>, multi_label: bool, threshold: f64) -> Array2<bool> {
    let mut out = Array2::from_elem(scores.dim(), false);
    for (row, mut o) in scores.rows().into_iter().zip(out.rows_mut()) {
        if multi_label {
            for (j, &z) in row.iter().enumerate() {
                o[j] = 1.0 / (1.0 + (-z).exp()) > threshold;
            }
        } else if !row.is_empty() {
            let mut best = 0;
            for (j, &z) in row.iter().enumerate() {
                if z > row[best] {
                    best = j;
                }
            }
            o[best] = true;
        }
    }
    out
}

/// Predicts labels for every node of `target_type` from the original graph.
pub fn predict(graph: &HeteroGraph, target_type: usize, params: &EncoderParams, config: &EncoderConfig) -> Result<Prediction> {
    params.check_shapes(graph)?;
    let msg = MessageGraph::original(graph);
    let cache = Encoder::new(graph).forward(params, &msg)?;
    let h = cache.output.slice(s![graph.type_range(target_type), ..]);
    let scores = classifier_scores(params, h, h);
    let labels = decide(scores.view(), config.multi_label, config.threshold);
    Ok(Prediction {
        scores,
        labels,
        source: cache.source,
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub micro_f1: f64,
    pub macro_f1: f64,
    /// Target-local indices of the test nodes.
    pub test_nodes: Vec<usize>,
    pub accuracy: Vec<f64>,
    /// Buckets on HLID.
    pub hlid_report: BucketReport,
    /// Buckets on degree.
    pub degree_report: BucketReport,
}

impl Evaluation {
    pub fn total_variance(&self) -> f64 {
        self.hlid_report.total_variance
    }

    pub fn bucket_variance(&self) -> f64 {
        self.hlid_report.bucket_variance
    }
}

/// Scores predictions on the test labels and buckets them by projection.
pub fn evaluate_predictions(
    graph: &HeteroGraph,
    test: &LabelAssignment,
    predicted: &Array2<bool>,
    hlid: &HlidScores,
    n_buckets: usize,
) -> Result<Evaluation> {
    let test_nodes = test.labeled_locals();
    if test_nodes.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if predicted.nrows() != test.target_count() || predicted.ncols() != test.num_classes {
        return Err(Error::Shape(format!(
            "predictions are {:?}, expected ({}, {})",
            predicted.dim(),
            test.target_count(),
            test.num_classes
        )));
    }
    let mut truth = Array2::from_elem((test_nodes.len(), test.num_classes), false);
    for (i, &l) in test_nodes.iter().enumerate() {
        for (j, v) in test.row(l).unwrap().into_iter().enumerate() {
            truth[[i, j]] = v;
        }
    }
    let pred = predicted.select(Axis(0), &test_nodes);
    let (micro_f1, macro_f1) = f1_scores(&pred, &truth)?;
    let mode = if test.multi_label {
        AccuracyMode::MultiLabel
    } else {
        AccuracyMode::SingleLabel
    };
    let accuracy = node_accuracy(&pred, &truth, mode)?;
    let off = graph.offset(test.target_type);
    let degrees = graph.degrees();
    let z: Vec<f64> = test_nodes.iter().map(|&l| hlid.z[off + l]).collect();
    let deg: Vec<f64> = test_nodes.iter().map(|&l| degrees[off + l] as f64).collect();
    Ok(Evaluation {
        micro_f1,
        macro_f1,
        hlid_report: bucket_report(&z, &accuracy, n_buckets)?,
        degree_report: bucket_report(&deg, &accuracy, n_buckets)?,
        test_nodes,
        accuracy,
    })
}

pub fn evaluate(
    graph: &HeteroGraph,
    test: &LabelAssignment,
    hlid: &HlidScores,
    params: &EncoderParams,
    config: &EncoderConfig,
    n_buckets: usize,
) -> Result<Evaluation> {
    let pred = predict(graph, test.target_type, params, config)?;
    evaluate_predictions(graph, test, &pred.labels, hlid, n_buckets)
}

const MODEL_MAGIC: &[u8; 8] = b"HBMODEL1";

/// Writes the magic, schema hash, tensor count, shapes, then row-major
/// little-endian values.
pub fn write_model(out: &mut impl Write, params: &EncoderParams, schema_hash: u64) -> std::io::Result<()> {
    out.write_all(MODEL_MAGIC)?;
    out.write_all(&schema_hash.to_le_bytes())?;
    out.write_all(&(params.layers() as u32).to_le_bytes())?;
    out.write_all(&(params.input.len() as u32).to_le_bytes())?;
    out.write_all(&(params.relation_weights.first().map_or(0, |r| r.len()) as u32).to_le_bytes())?;
    let tensors = params.tensors();
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in &tensors {
        out.write_all(&(t.nrows() as u64).to_le_bytes())?;
        out.write_all(&(t.ncols() as u64).to_le_bytes())?;
    }
    for t in &tensors {
        for v in t.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::invalid(format!("truncated model: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|e| Error::invalid(format!("truncated model: {e}")))?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a model written by [`write_model`], returning it with its schema hash.
pub fn read_model(r: &mut impl Read) -> Result<(EncoderParams, u64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::invalid(format!("truncated model: {e}")))?;
    if &magic != MODEL_MAGIC {
        return Err(Error::invalid("not a model file"));
    }
    let hash = read_u64(r)?;
    let layers = read_u32(r)? as usize;
    let types = read_u32(r)? as usize;
    let relations = read_u32(r)? as usize;
    let count = read_u32(r)? as usize;
    if count != types + layers * (1 + relations) + 4 {
        return Err(Error::invalid(format!("model header lists {count} tensors")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        shapes.push((read_u64(r)? as usize, read_u64(r)? as usize));
    }
    let mut tensors = Vec::with_capacity(count);
    for &(rows, cols) in &shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_bits(read_u64(r)?));
        }
        tensors.push(Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Shape(e.to_string()))?);
    }
    let mut it = tensors.into_iter();
    let input = it.by_ref().take(types).collect();
    let mut self_weights = Vec::new();
    let mut relation_weights = Vec::new();
    for _ in 0..layers {
        self_weights.push(it.next().unwrap());
        relation_weights.push(it.by_ref().take(relations).collect());
    }
    let params = EncoderParams {
        input,
        self_weights,
        relation_weights,
        norm_scale: it.next().unwrap(),
        norm_shift: it.next().unwrap(),
        classifier: it.next().unwrap(),
        bias: it.next().unwrap(),
    };
    Ok((params, hash))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetgraph::GraphBuilder;
    use crate::losses::grad_check;
    use ndarray::array;

    fn small_graph(seed: u64) -> (HeteroGraph, LabelAssignment) {
        let mut rng = seed::rng_for(seed, "test-graph", 0);
        let mut b = GraphBuilder::new().dedup(true);
        let p = b.add_type("paper", 12, 3).unwrap();
        let a = b.add_type("author", 10, 0).unwrap();
        let s = b.add_type("subject", 8, 2).unwrap();
        let pp = b.add_relation("cites", p, p).unwrap();
        let pa = b.add_relation("writes", p, a).unwrap();
        let ps = b.add_relation("about", p, s).unwrap();
        for _ in 0..12 {
            let (u, v) = (rng.gen_range(0..12), rng.gen_range(0..12));
            if u != v {
                b.add_edge(pp, u, v).unwrap();
            }
        }
        for i in 0..12 {
            b.add_edge(pa, i, rng.gen_range(0..10)).unwrap();
            b.add_edge(ps, i, rng.gen_range(0..8)).unwrap();
        }
        b.add_edge(pp, 0, 1).ok();
        b.set_features(p, Array2::from_shape_simple_fn((12, 3), || rng.gen_range(-1.0..1.0)))
            .unwrap();
        b.set_features(s, Array2::from_shape_simple_fn((8, 2), || rng.gen_range(-1.0..1.0)))
            .unwrap();
        let g = b.build().unwrap();
        let mut labels = LabelAssignment::new(p, 12, 3, false);
        for i in 0..12 {
            labels.set(i, vec![i % 3]).unwrap();
        }
        (g, labels)
    }

    fn cfg(layers: usize) -> EncoderConfig {
        EncoderConfig {
            layers,
            hidden_dim: 5,
            epochs: 3,
            ..Default::default()
        }
    }

    #[test]
    fn decide_rules() {
        let single = decide(array![[2.0, -1.0, 0.3]].view(), false, 0.5);
        assert_eq!(single, array![[true, false, false]]);
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let multi = decide(array![[logit(0.6), logit(0.4), logit(0.51)]].view(), true, 0.5);
        assert_eq!(multi, array![[true, false, true]]);
    }

    #[test]
    fn zero_weights_give_shift() {
        let (g, _) = small_graph(1);
        let mut p = EncoderParams::init(&g, &cfg(2), 3).unwrap();
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        p.norm_shift = Array2::from_shape_fn((1, 5), |(_, j)| j as f64 - 2.0);
        let out = Encoder::new(&g).forward(&p, &MessageGraph::original(&g)).unwrap().output;
        for row in out.rows() {
            assert_eq!(row, p.norm_shift.row(0));
        }
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        for layers in [1, 2] {
            let (g, labels) = small_graph(layers as u64);
            let p = EncoderParams::init(&g, &cfg(layers), 3).unwrap();
            let set = TrainingSet::new(&g, &labels).unwrap();
            let loss = LossConfig::default();
            let obj = set.objective(&p, None, &loss).unwrap();
            let flat = p.to_flat();
            let mut probe = p.clone();
            let r = grad_check(
                |x| {
                    probe.assign_flat(x).unwrap();
                    set.objective(&probe, None, &loss).unwrap().total
                },
                &flat,
                &obj.grads.to_flat(),
                1e-5,
                Some(150),
                7,
            )
            .unwrap();
            assert!(r.max_rel_error <= 1e-4, "layers {layers}: {r:?}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (g, labels) = small_graph(3);
        let a = train_supervised(&g, &labels, &cfg(2)).unwrap();
        let b = train_supervised(&g, &labels, &cfg(2)).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn prediction_reads_original_edges() {
        let (g, labels) = small_graph(4);
        let r = train_supervised(&g, &labels, &cfg(1)).unwrap();
        let pred = predict(&g, 0, &r.params, &cfg(1)).unwrap();
        assert_eq!(pred.source, EdgeSource::Original);
        assert_eq!(pred.labels.dim(), (12, 3));
    }

    #[test]
    fn model_round_trip() {
        let (g, _) = small_graph(5);
        let p = EncoderParams::init(&g, &cfg(2), 3).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &p, g.schema_hash()).unwrap();
        let (q, hash) = read_model(&mut buf.as_slice()).unwrap();
        assert_eq!(hash, g.schema_hash());
        assert_eq!(p, q);
        assert!(read_model(&mut &buf[..20]).is_err());
    }
}
