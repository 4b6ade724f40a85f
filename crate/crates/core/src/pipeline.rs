//! Subcommand implementations shared by the binary and the tests.
//!
//! Every command takes an [`ExperimentConfig`] plus a root seed and returns
//! report text. Reports are tab-separated with `#` header lines carrying the
//! config hash, the seed, and the column names.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Projection};
use crate::encoder::{self, EncoderParams, Evaluation, TrainResult};
use crate::error::{Error, Result, StageExt};
use crate::hetgraph::{self, HeteroGraph, LabelAssignment, LoadOptions};
use crate::hlid::{compute_hlid, HlidScores};
use crate::htad::{build_sample_space, AugmentedEdgeSet, HtadSampler};
use crate::biasmetrics::BucketReport;
use crate::seed;
use crate::synth;

/// Sentinel written where a correlation is undefined.
pub const CONSTANT_SENTINEL: &str = "constant";

/// A graph with disjoint training and test labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: HeteroGraph,
    pub train: LabelAssignment,
    pub test: LabelAssignment,
}

/// Loads the configured files, or generates the synthetic graph when no
/// files are configured. `label_rate` overrides the configured rate.
pub fn load_dataset(cfg: &ExperimentConfig, seed: u64, label_rate: Option<f64>) -> Result<Dataset> {
    if !cfg.data.has_graph() {
        let mut spec = cfg.synth_for(seed);
        if let Some(r) = label_rate {
            spec.label_rate = r;
        }
        let s = synth::generate(&spec)?;
        return Ok(Dataset {
            graph: s.graph,
            train: s.train,
            test: s.test,
        });
    }
    let opts = cfg.data.load_options();
    let (graph, labels) = hetgraph::load_graph(&cfg.data.paths()?, &opts)?;
    let labels = labels.ok_or_else(|| Error::invalid("data.labels is not set"))?;
    let (train, test) = match &cfg.data.test_labels {
        Some(p) => {
            let test_opts = LoadOptions {
                num_classes: Some(labels.num_classes),
                multi_label: Some(labels.multi_label),
                ..opts
            };
            let test = hetgraph::load_labels(&graph, p, &test_opts)?;
            let train = match label_rate {
                Some(r) => labels.subsample(r, seed)?,
                None => labels,
            };
            (train, test)
        }
        None => labels.split(label_rate.unwrap_or(cfg.data.label_rate), seed)?,
    };
    if !train.is_disjoint(&test) {
        return Err(Error::invalid("training and test labels overlap"));
    }
    Ok(Dataset { graph, train, test })
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| CONSTANT_SENTINEL.to_string(), fmt_f64)
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s == CONSTANT_SENTINEL {
        Ok(None)
    } else {
        s.parse()
            .map(Some)
            .map_err(|_| Error::invalid(format!("bad number `{s}`")))
    }
}

/// Header lines shared by all reports.
pub fn report_header(command: &str, cfg: &ExperimentConfig, seed: u64, extra: &[(&str, String)], columns: &[&str]) -> String {
    let mut s = format!("# hetbias {command}\n# config_hash={}\tseed={seed}\n", cfg.hash());
    for (k, v) in extra {
        let _ = writeln!(s, "# {k}={v}");
    }
    let _ = writeln!(s, "# {}", columns.join("\t"));
    s
}

pub fn cmd_ingest(cfg: &ExperimentConfig, seed: u64) -> Result<String> {
    let (graph, labels) = hetgraph::load_graph(&cfg.data.paths()?, &cfg.data.load_options()).stage("ingest")?;
    let labeled = labels.map_or(0, |l| l.num_labeled());
    let mut s = report_header(
        "ingest",
        cfg,
        seed,
        &[
            ("nodes", graph.num_nodes().to_string()),
            ("edges", graph.num_edges().to_string()),
            ("labeled", labeled.to_string()),
            ("schema_hash", format!("{:016x}", graph.schema_hash())),
        ],
        &["kind", "name", "src", "dst", "count", "feature_dim", "offset"],
    );
    for t in graph.types() {
        let _ = writeln!(
            s,
            "type\t{}\t-\t-\t{}\t{}\t{}",
            t.name,
            t.count,
            t.feature_dim,
            graph.offset(t.id)
        );
    }
    for r in graph.relations() {
        let _ = writeln!(
            s,
            "relation\t{}\t{}\t{}\t{}\t-\t-",
            r.name,
            graph.types()[r.src_type].name,
            graph.types()[r.dst_type].name,
            r.edge_count
        );
    }
    Ok(s)
}

/// Writes a synthetic dataset into `dir` along with `experiment.cfg`, which
/// reads it back. Returns that config with its paths joined onto `dir`.
pub fn cmd_synth(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<ExperimentConfig> {
    let s = synth::generate(&cfg.synth_for(seed)).stage("synth")?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("schema.tsv", hetgraph::format_schema(&s.graph))?;
    write("edges.tsv", hetgraph::format_edges(&s.graph))?;
    write("labels.tsv", hetgraph::format_labels(&s.train))?;
    write("test_labels.tsv", hetgraph::format_labels(&s.test))?;
    let mut out = cfg.clone();
    out.seed = seed;
    out.data.schema = Some("schema.tsv".into());
    out.data.edges = Some("edges.tsv".into());
    out.data.labels = Some("labels.tsv".into());
    out.data.test_labels = Some("test_labels.tsv".into());
    out.data.features.clear();
    for t in s.graph.types() {
        if let Some(x) = s.graph.features(t.id) {
            let name = format!("features_{}.tsv", t.name);
            write(&name, hetgraph::format_features(x))?;
            out.data.features.insert(t.name.clone(), name.into());
        }
    }
    out.data.target_type = Some(s.graph.types()[s.train.target_type].name.clone());
    out.data.num_classes = Some(s.train.num_classes);
    out.data.multi_label = false;
    write("experiment.cfg", out.emit())?;
    out.data.resolve_against(dir);
    Ok(out)
}

fn hlid_for(cfg: &ExperimentConfig, data: &Dataset) -> Result<HlidScores> {
    compute_hlid(&data.graph, &data.train, &cfg.meta, &cfg.impact).stage("hlid")
}

pub fn cmd_hlid(cfg: &ExperimentConfig, seed: u64) -> Result<String> {
    let data = load_dataset(cfg, seed, None).stage("load")?;
    let z = hlid_for(cfg, &data)?;
    let mut s = report_header(
        "hlid",
        cfg,
        seed,
        &[
            ("iterations", z.iterations_used.to_string()),
            ("residual", format!("{:e}", z.final_residual)),
        ],
        &["global_index", "hlid"],
    );
    for (i, v) in z.z.iter().enumerate() {
        let _ = writeln!(s, "{i}\t{v:.11e}");
    }
    Ok(s)
}

/// Draws the augmented edge set of `epoch` and returns it with its report.
pub fn cmd_augment(cfg: &ExperimentConfig, seed: u64, epoch: u64) -> Result<(AugmentedEdgeSet, String)> {
    let data = load_dataset(cfg, seed, None).stage("load")?;
    let z = hlid_for(cfg, &data)?;
    let aug = cfg.augment_for(seed);
    let mut rng = seed::rng_for(aug.seed, "htad-space", 0);
    let space = build_sample_space(&data.graph, &aug, &mut rng).stage("augment")?;
    let sampler = HtadSampler::new(space, &z, &aug).stage("augment")?;
    let edges = sampler.sample(epoch);
    let mut s = report_header(
        "augment",
        cfg,
        seed,
        &[
            ("epoch", epoch.to_string()),
            ("candidates", sampler.work_per_draw().to_string()),
            ("kept", edges.len().to_string()),
        ],
        &["relation", "src_local", "dst_local", "provenance"],
    );
    s.push_str(&edges.format(&data.graph));
    Ok((edges, s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Base,
    Htad,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Htad => "base+htad",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Method::Base),
            "htad" | "base+htad" => Ok(Method::Htad),
            other => Err(Error::invalid(format!("unknown method `{other}` (base | htad)"))),
        }
    }
}

fn train_method(cfg: &ExperimentConfig, data: &Dataset, z: &HlidScores, seed: u64, method: Method) -> Result<TrainResult> {
    let enc = cfg.encoder_for(seed, data.train.multi_label);
    match method {
        Method::Base => encoder::train_supervised(&data.graph, &data.train, &enc).stage("train-base"),
        Method::Htad => {
            encoder::train(&data.graph, &data.train, z, &enc, &cfg.augment_for(seed), &cfg.loss).stage("train-htad")
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub result: TrainResult,
    pub schema_hash: u64,
    /// Per-epoch loss table.
    pub report: String,
}

pub fn cmd_train(cfg: &ExperimentConfig, seed: u64, method: Method) -> Result<Trained> {
    cfg.validate()?;
    let data = load_dataset(cfg, seed, None).stage("load")?;
    let z = hlid_for(cfg, &data)?;
    let result = train_method(cfg, &data, &z, seed, method)?;
    let mut s = report_header(
        "train",
        cfg,
        seed,
        &[
            ("method", method.as_str().to_string()),
            ("schema_hash", format!("{:016x}", data.graph.schema_hash())),
        ],
        &["epoch", "total", "label", "general", "target", "augmented_edges"],
    );
    for m in &result.history {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            m.epoch,
            fmt_f64(m.total),
            fmt_f64(m.label),
            fmt_f64(m.general),
            fmt_f64(m.target),
            m.augmented_edges
        );
    }
    Ok(Trained {
        result,
        schema_hash: data.graph.schema_hash(),
        report: s,
    })
}

pub fn save_model(path: &Path, params: &EncoderParams, graph_hash: u64) -> Result<()> {
    let mut buf = Vec::new();
    encoder::write_model(&mut buf, params, graph_hash).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path, graph: &HeteroGraph) -> Result<EncoderParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (params, hash) = encoder::read_model(&mut bytes.as_slice())?;
    if hash != graph.schema_hash() {
        return Err(Error::invalid(format!(
            "model {} was trained on a different schema",
            path.display()
        )));
    }
    Ok(params)
}

/// Evaluates a trained model on the test labels. Returns the evaluation, a
/// metrics report, and the predictions in labels-file format.
pub fn cmd_eval(cfg: &ExperimentConfig, seed: u64, model: &Path) -> Result<(Evaluation, String, String)> {
    let data = load_dataset(cfg, seed, None).stage("load")?;
    let z = hlid_for(cfg, &data)?;
    let params = load_model(model, &data.graph).stage("eval")?;
    let enc = cfg.encoder_for(seed, data.train.multi_label);
    let pred = encoder::predict(&data.graph, data.test.target_type, &params, &enc).stage("eval")?;
    let ev = encoder::evaluate_predictions(&data.graph, &data.test, &pred.labels, &z, cfg.buckets).stage("eval")?;
    let mut s = report_header("eval", cfg, seed, &[("test_nodes", ev.test_nodes.len().to_string())], &["metric", "value"]);
    let main = projection_report(&ev, cfg.projection);
    for (k, v) in [
        ("micro_f1", fmt_f64(ev.micro_f1)),
        ("macro_f1", fmt_f64(ev.macro_f1)),
        ("var", fmt_f64(main.total_variance)),
        ("var_b", fmt_f64(main.bucket_variance)),
        ("rs_hlid", fmt_opt(ev.hlid_report.bucket_spearman)),
        ("rs_degree", fmt_opt(ev.degree_report.bucket_spearman)),
    ] {
        let _ = writeln!(s, "{k}\t{v}");
    }
    Ok((ev, s, format_predictions(&pred.labels)))
}

/// Labels-file lines for every row with at least one predicted class.
pub fn format_predictions(pred: &Array2<bool>) -> String {
    let mut s = String::new();
    for (i, row) in pred.rows().into_iter().enumerate() {
        let cs: Vec<String> = row
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(c, _)| c.to_string())
            .collect();
        if !cs.is_empty() {
            let _ = writeln!(s, "{i}\t{}", cs.join(","));
        }
    }
    s
}

fn projection_report(ev: &Evaluation, p: Projection) -> &BucketReport {
    match p {
        Projection::Hlid => &ev.hlid_report,
        Projection::Degree => &ev.degree_report,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub bucket: usize,
    pub size: usize,
    pub lower: f64,
    pub upper: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasSection {
    pub label_rate: f64,
    pub projection: Projection,
    pub buckets: Vec<BucketRow>,
    pub bucket_spearman: Option<f64>,
    pub node_spearman: Option<f64>,
    pub total_variance: f64,
    pub bucket_variance: f64,
}

impl BiasSection {
    pub fn from_report(label_rate: f64, projection: Projection, r: &BucketReport) -> Self {
        BiasSection {
            label_rate,
            projection,
            buckets: (0..r.bucketing.num_buckets)
                .map(|b| BucketRow {
                    bucket: b,
                    size: r.bucketing.sizes[b],
                    lower: r.bucketing.bounds[b].0,
                    upper: r.bucketing.bounds[b].1,
                    mean_accuracy: r.bucket_means[b],
                })
                .collect(),
            bucket_spearman: r.bucket_spearman,
            node_spearman: r.node_spearman,
            total_variance: r.total_variance,
            bucket_variance: r.bucket_variance,
        }
    }
}

pub const BIAS_COLUMNS: [&str; 8] = ["label_rate", "projection", "record", "bucket", "size", "lower", "upper", "value"];

/// Bucket tables and correlations per label rate and projection.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub config_hash: String,
    pub seed: u64,
    pub sections: Vec<BiasSection>,
}

impl BiasReport {
    pub fn emit(&self) -> String {
        let mut s = format!(
            "# hetbias bias-report\n# config_hash={}\tseed={}\n# {}\n",
            self.config_hash,
            self.seed,
            BIAS_COLUMNS.join("\t")
        );
        for sec in &self.sections {
            let prefix = format!("{}\t{}", fmt_f64(sec.label_rate), sec.projection.as_str());
            for b in &sec.buckets {
                let _ = writeln!(
                    s,
                    "{prefix}\tbucket\t{}\t{}\t{}\t{}\t{}",
                    b.bucket,
                    b.size,
                    fmt_f64(b.lower),
                    fmt_f64(b.upper),
                    fmt_f64(b.mean_accuracy)
                );
            }
            for (record, value) in [
                ("bucket_spearman", fmt_opt(sec.bucket_spearman)),
                ("node_spearman", fmt_opt(sec.node_spearman)),
                ("total_variance", fmt_f64(sec.total_variance)),
                ("bucket_variance", fmt_f64(sec.bucket_variance)),
            ] {
                let _ = writeln!(s, "{prefix}\t{record}\t-\t-\t-\t-\t{value}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |ln: usize, m: &str| Error::parse("<bias-report>", ln, m);
        let mut config_hash = None;
        let mut seed = None;
        let mut sections: Vec<BiasSection> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            if let Some(h) = line.strip_prefix("# config_hash=") {
                let (hash, rest) = h.split_once('\t').ok_or_else(|| bad(ln, "malformed header"))?;
                config_hash = Some(hash.to_string());
                seed = Some(
                    rest.strip_prefix("seed=")
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad(ln, "malformed seed"))?,
                );
                continue;
            }
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != BIAS_COLUMNS.len() {
                return Err(bad(ln, "wrong column count"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(ln, "bad number"));
            let int = |s: &str| s.parse::<usize>().map_err(|_| bad(ln, "bad integer"));
            let rate = num(f[0])?;
            let projection: Projection = f[1].parse()?;
            let start = sections
                .last()
                .is_none_or(|s| s.label_rate.to_bits() != rate.to_bits() || s.projection != projection);
            if start {
                sections.push(BiasSection {
                    label_rate: rate,
                    projection,
                    buckets: Vec::new(),
                    bucket_spearman: None,
                    node_spearman: None,
                    total_variance: 0.0,
                    bucket_variance: 0.0,
                });
            }
            let sec = sections.last_mut().unwrap();
            match f[2] {
                "bucket" => sec.buckets.push(BucketRow {
                    bucket: int(f[3])?,
                    size: int(f[4])?,
                    lower: num(f[5])?,
                    upper: num(f[6])?,
                    mean_accuracy: num(f[7])?,
                }),
                "bucket_spearman" => sec.bucket_spearman = parse_opt(f[7])?,
                "node_spearman" => sec.node_spearman = parse_opt(f[7])?,
                "total_variance" => sec.total_variance = num(f[7])?,
                "bucket_variance" => sec.bucket_variance = num(f[7])?,
                other => return Err(bad(ln, &format!("unknown record `{other}`"))),
            }
        }
        Ok(BiasReport {
            config_hash: config_hash.ok_or_else(|| bad(0, "missing header"))?,
            seed: seed.unwrap_or(0),
            sections,
        })
    }
}

/// Where the bias report gets its predictions.
#[derive(Debug, Clone)]
pub enum PredictionSource<'a> {
    /// Train a base model per label rate.
    Train,
    Model(&'a Path),
    Predictions(&'a Path),
}

pub fn cmd_bias_report(cfg: &ExperimentConfig, seed: u64, source: PredictionSource<'_>) -> Result<BiasReport> {
    cfg.validate()?;
    let sweep = matches!(source, PredictionSource::Train) && !cfg.label_rates.is_empty();
    let rates: Vec<Option<f64>> = if sweep {
        cfg.label_rates.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    let mut sections = Vec::new();
    for requested in rates {
        let data = load_dataset(cfg, seed, requested).stage("load")?;
        let rate = requested.unwrap_or_else(|| {
            let train = data.train.num_labeled() as f64;
            train / (train + data.test.num_labeled() as f64)
        });
        let z = hlid_for(cfg, &data)?;
        let enc = cfg.encoder_for(seed, data.train.multi_label);
        let predicted = match source {
            PredictionSource::Train => {
                let r = encoder::train_supervised(&data.graph, &data.train, &enc).stage("train-base")?;
                encoder::predict(&data.graph, data.test.target_type, &r.params, &enc)?.labels
            }
            PredictionSource::Model(p) => {
                let params = load_model(p, &data.graph).stage("bias-report")?;
                encoder::predict(&data.graph, data.test.target_type, &params, &enc)?.labels
            }
            PredictionSource::Predictions(p) => {
                if !p.exists() {
                    return Err(Error::invalid(format!("missing predictions file {}", p.display())));
                }
                let opts = LoadOptions {
                    target_type: Some(data.graph.types()[data.test.target_type].name.clone()),
                    num_classes: Some(data.test.num_classes),
                    multi_label: Some(true),
                    ..Default::default()
                };
                let la = hetgraph::load_labels(&data.graph, p, &opts).stage("bias-report")?;
                let mut m = Array2::from_elem((la.target_count(), la.num_classes), false);
                for l in la.labeled_locals() {
                    for &c in la.get(l).unwrap() {
                        m[[l, c]] = true;
                    }
                }
                m
            }
        };
        let ev = encoder::evaluate_predictions(&data.graph, &data.test, &predicted, &z, cfg.buckets).stage("eval")?;
        sections.push(BiasSection::from_report(rate, Projection::Degree, &ev.degree_report));
        sections.push(BiasSection::from_report(rate, Projection::Hlid, &ev.hlid_report));
    }
    Ok(BiasReport {
        config_hash: cfg.hash(),
        seed,
        sections,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub method: Method,
    /// `None` on the mean rows.
    pub seed: Option<u64>,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub total_variance: f64,
    pub bucket_variance: f64,
    /// Bucket-level Spearman of the HLID buckets.
    pub rs_hlid: Option<f64>,
    /// Bucket-level Spearman of the degree buckets.
    pub rs_degree: Option<f64>,
}

pub const EXPERIMENT_COLUMNS: [&str; 8] =
    ["method", "seed", "micro_f1", "macro_f1", "var", "var_b", "rs_hlid", "rs_degree"];

fn row_for(method: Method, seed: u64, ev: &Evaluation, p: Projection) -> ExperimentRow {
    let main = projection_report(ev, p);
    ExperimentRow {
        method,
        seed: Some(seed),
        micro_f1: ev.micro_f1,
        macro_f1: ev.macro_f1,
        total_variance: main.total_variance,
        bucket_variance: main.bucket_variance,
        rs_hlid: ev.hlid_report.bucket_spearman,
        rs_degree: ev.degree_report.bucket_spearman,
    }
}

fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<[ExperimentRow; 2]> {
    let data = load_dataset(cfg, seed, None).stage("load")?;
    let z = hlid_for(cfg, &data)?;
    let enc = cfg.encoder_for(seed, data.train.multi_label);
    let mut rows = Vec::with_capacity(2);
    for method in [Method::Base, Method::Htad] {
        let trained = train_method(cfg, &data, &z, seed, method)?;
        let ev = encoder::evaluate(&data.graph, &data.test, &z, &trained.params, &enc, cfg.buckets).stage("eval")?;
        rows.push(row_for(method, seed, &ev, cfg.projection));
    }
    Ok([rows[0].clone(), rows[1].clone()])
}

fn mean_opt(vals: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = vals.flatten().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Base and HTAD rows for every seed in `cfg.seeds`, then one mean row per
/// method. Seeds run in parallel; row order is fixed.
pub fn cmd_run_experiment(cfg: &ExperimentConfig) -> Result<(Vec<ExperimentRow>, String)> {
    cfg.validate()?;
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("experiment.seeds is empty"));
    }
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<ExperimentRow> = per_seed.iter().flat_map(|r| r.iter().cloned()).collect();
    for method in [Method::Base, Method::Htad] {
        let of: Vec<&ExperimentRow> = rows.iter().filter(|r| r.method == method).collect();
        let n = of.len() as f64;
        let mean = |f: fn(&ExperimentRow) -> f64| of.iter().map(|r| f(r)).sum::<f64>() / n;
        rows.push(ExperimentRow {
            method,
            seed: None,
            micro_f1: mean(|r| r.micro_f1),
            macro_f1: mean(|r| r.macro_f1),
            total_variance: mean(|r| r.total_variance),
            bucket_variance: mean(|r| r.bucket_variance),
            rs_hlid: mean_opt(of.iter().map(|r| r.rs_hlid)),
            rs_degree: mean_opt(of.iter().map(|r| r.rs_degree)),
        });
    }
    let seeds: Vec<String> = cfg.seeds.iter().map(|s| s.to_string()).collect();
    let mut s = report_header(
        "run-experiment",
        cfg,
        cfg.seed,
        &[("seeds", seeds.join(","))],
        &EXPERIMENT_COLUMNS,
    );
    for r in &rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.method.as_str(),
            r.seed.map_or_else(|| "mean".to_string(), |v| v.to_string()),
            fmt_f64(r.micro_f1),
            fmt_f64(r.macro_f1),
            fmt_f64(r.total_variance),
            fmt_f64(r.bucket_variance),
            fmt_opt(r.rs_hlid),
            fmt_opt(r.rs_degree)
        );
    }
    Ok((rows, s))
}
