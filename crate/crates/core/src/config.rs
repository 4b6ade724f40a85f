//! Flat `section.key=value` experiment configuration.
//!
//! Every key has a default, so a config file only needs the keys it changes.
//! [`ExperimentConfig::emit`] writes every key in a fixed order and
//! [`ExperimentConfig::parse`] reads it back to an equal value. Module seeds
//! are not part of the file; they derive from `experiment.seed` at run time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::hetgraph::{DataPaths, LoadOptions};
use crate::hlid::ImpactConfig;
use crate::htad::AugmentConfig;
use crate::losses::LossConfig;
use crate::metaweight::MetaWeightConfig;
use crate::synth::{SynthRelation, SynthSpec, SynthType};

/// Node ordering used to build accuracy buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Hlid,
    Degree,
}

impl Projection {
    pub fn as_str(self) -> &'static str {
        match self {
            Projection::Hlid => "hlid",
            Projection::Degree => "degree",
        }
    }
}

impl FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hlid" => Ok(Projection::Hlid),
            "degree" => Ok(Projection::Degree),
            other => Err(Error::invalid(format!("unknown projection `{other}` (hlid | degree)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataConfig {
    pub schema: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub features: BTreeMap<String, PathBuf>,
    /// Training labels, or all labels when `test_labels` is absent.
    pub labels: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Share of `labels` kept for training when no test file is given.
    pub label_rate: f64,
    pub target_type: Option<String>,
    pub num_classes: Option<usize>,
    pub multi_label: bool,
    pub directed: bool,
    pub dedup: bool,
}

impl DataConfig {
    pub fn paths(&self) -> Result<DataPaths> {
        let schema = self.schema.clone().ok_or_else(|| Error::invalid("data.schema is not set"))?;
        let edges = self.edges.clone().ok_or_else(|| Error::invalid("data.edges is not set"))?;
        Ok(DataPaths {
            schema,
            edges,
            features: self.features.clone(),
            labels: self.labels.clone(),
        })
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            directed: self.directed,
            dedup: self.dedup,
            target_type: self.target_type.clone(),
            num_classes: self.num_classes,
            multi_label: Some(self.multi_label),
        }
    }

    pub fn has_graph(&self) -> bool {
        self.schema.is_some()
    }

    /// Joins every relative data path onto `base`.
    pub fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.schema, &mut self.edges, &mut self.labels, &mut self.test_labels]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        self.features.values_mut().for_each(fix);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub meta: MetaWeightConfig,
    pub impact: ImpactConfig,
    pub augment: AugmentConfig,
    pub loss: LossConfig,
    pub encoder: EncoderConfig,
    pub synth: SynthSpec,
    pub buckets: usize,
    pub projection: Projection,
    /// Label rates swept by the bias report; empty means `data.label_rate`.
    pub label_rates: Vec<f64>,
    pub seed: u64,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataConfig {
                label_rate: 0.05,
                ..Default::default()
            },
            meta: MetaWeightConfig::default(),
            impact: ImpactConfig::default(),
            augment: AugmentConfig::default(),
            loss: LossConfig::default(),
            encoder: EncoderConfig::default(),
            synth: SynthSpec::default(),
            buckets: 7,
            projection: Projection::Hlid,
            label_rates: Vec::new(),
            seed: 0,
            seeds: vec![0, 1, 42],
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    /// Applies one `key=value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        if let Some(t) = key.strip_prefix("data.features.") {
            if v.is_empty() {
                self.data.features.remove(t);
            } else {
                self.data.features.insert(t.to_string(), PathBuf::from(v));
            }
            return Ok(());
        }
        match key {
            "data.schema" => self.data.schema = opt_path(v),
            "data.edges" => self.data.edges = opt_path(v),
            "data.labels" => self.data.labels = opt_path(v),
            "data.test_labels" => self.data.test_labels = opt_path(v),
            "data.label_rate" => self.data.label_rate = parse_value(key, v)?,
            "data.target_type" => self.data.target_type = (!v.is_empty()).then(|| v.to_string()),
            "data.num_classes" => {
                self.data.num_classes = if v.is_empty() { None } else { Some(parse_value(key, v)?) }
            }
            "data.multi_label" => self.data.multi_label = parse_value(key, v)?,
            "data.directed" => self.data.directed = parse_value(key, v)?,
            "data.dedup" => self.data.dedup = parse_value(key, v)?,
            "meta.eta1" => self.meta.eta1 = parse_value(key, v)?,
            "meta.eta2" => self.meta.eta2 = parse_value(key, v)?,
            "hlid.alpha" => self.impact.alpha = parse_value(key, v)?,
            "hlid.tol" => self.impact.tol = parse_value(key, v)?,
            "hlid.max_iter" => {
                self.impact.max_iter = if v.is_empty() { None } else { Some(parse_value(key, v)?) }
            }
            "augment.lambda" => self.augment.lambda = parse_value(key, v)?,
            "augment.p0" => self.augment.p0 = parse_value(key, v)?,
            "augment.neg_multiplier" => self.augment.neg_multiplier = parse_value(key, v)?,
            "loss.tau" => self.loss.tau = parse_value(key, v)?,
            "loss.lambda1" => self.loss.lambda1 = parse_value(key, v)?,
            "loss.lambda2" => self.loss.lambda2 = parse_value(key, v)?,
            "loss.include_positive_in_denominator" => self.loss.include_positive_in_denominator = parse_value(key, v)?,
            "encoder.layers" => self.encoder.layers = parse_value(key, v)?,
            "encoder.hidden_dim" => self.encoder.hidden_dim = parse_value(key, v)?,
            "encoder.epochs" => self.encoder.epochs = parse_value(key, v)?,
            "encoder.learning_rate" => self.encoder.learning_rate = parse_value(key, v)?,
            "encoder.weight_decay" => self.encoder.weight_decay = parse_value(key, v)?,
            "encoder.threshold" => self.encoder.threshold = parse_value(key, v)?,
            "synth.types" => self.synth.types = parse_synth_types(v)?,
            "synth.relations" => self.synth.relations = parse_synth_relations(v, &self.synth.types)?,
            "synth.target_type" => {
                self.synth.target_type = self
                    .synth
                    .types
                    .iter()
                    .position(|t| t.name == v)
                    .ok_or_else(|| Error::invalid(format!("synth.target_type `{v}` is not in synth.types")))?
            }
            "synth.num_classes" => self.synth.num_classes = parse_value(key, v)?,
            "synth.homophily" => self.synth.homophily = parse_value(key, v)?,
            "synth.feature_noise" => self.synth.feature_noise = parse_value(key, v)?,
            "synth.label_rate" => self.synth.label_rate = parse_value(key, v)?,
            "synth.locality" => self.synth.locality = parse_value(key, v)?,
            "synth.skew" => self.synth.skew = parse_value(key, v)?,
            "synth.skew_region" => self.synth.skew_region = parse_value(key, v)?,
            "report.buckets" => self.buckets = parse_value(key, v)?,
            "report.projection" => self.projection = v.parse()?,
            "report.label_rates" => self.label_rates = parse_list(key, v)?,
            "experiment.seed" => self.seed = parse_value(key, v)?,
            "experiment.seeds" => self.seeds = parse_list(key, v)?,
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, path: &Path, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::parse(path, i + 1, "expected `key=value`"))?;
            self.set(k.trim(), v).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        c.apply_text(Path::new("<config>"), text)?;
        Ok(c)
    }

    /// Reads a config file. Relative data paths are taken relative to the
    /// directory holding the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = ExperimentConfig::default();
        c.apply_text(path, &text)?;
        c.data.resolve_against(path.parent().unwrap_or(Path::new("")));
        Ok(c)
    }

    pub fn emit(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        let d = &self.data;
        kv("data.schema", show_path(&d.schema));
        kv("data.edges", show_path(&d.edges));
        for (t, p) in &d.features {
            kv(&format!("data.features.{t}"), p.display().to_string());
        }
        kv("data.labels", show_path(&d.labels));
        kv("data.test_labels", show_path(&d.test_labels));
        kv("data.label_rate", d.label_rate.to_string());
        kv("data.target_type", d.target_type.clone().unwrap_or_default());
        kv("data.num_classes", d.num_classes.map(|c| c.to_string()).unwrap_or_default());
        kv("data.multi_label", d.multi_label.to_string());
        kv("data.directed", d.directed.to_string());
        kv("data.dedup", d.dedup.to_string());
        kv("meta.eta1", self.meta.eta1.to_string());
        kv("meta.eta2", self.meta.eta2.to_string());
        kv("hlid.alpha", self.impact.alpha.to_string());
        kv("hlid.tol", self.impact.tol.to_string());
        kv("hlid.max_iter", self.impact.max_iter.map(|m| m.to_string()).unwrap_or_default());
        kv("augment.lambda", self.augment.lambda.to_string());
        kv("augment.p0", self.augment.p0.to_string());
        kv("augment.neg_multiplier", self.augment.neg_multiplier.to_string());
        kv("loss.tau", self.loss.tau.to_string());
        kv("loss.lambda1", self.loss.lambda1.to_string());
        kv("loss.lambda2", self.loss.lambda2.to_string());
        kv(
            "loss.include_positive_in_denominator",
            self.loss.include_positive_in_denominator.to_string(),
        );
        let e = &self.encoder;
        kv("encoder.layers", e.layers.to_string());
        kv("encoder.hidden_dim", e.hidden_dim.to_string());
        kv("encoder.epochs", e.epochs.to_string());
        kv("encoder.learning_rate", e.learning_rate.to_string());
        kv("encoder.weight_decay", e.weight_decay.to_string());
        kv("encoder.threshold", e.threshold.to_string());
        let sy = &self.synth;
        kv("synth.types", format_synth_types(&sy.types));
        kv("synth.relations", format_synth_relations(&sy.relations, &sy.types));
        kv(
            "synth.target_type",
            sy.types.get(sy.target_type).map(|t| t.name.clone()).unwrap_or_default(),
        );
        kv("synth.num_classes", sy.num_classes.to_string());
        kv("synth.homophily", sy.homophily.to_string());
        kv("synth.feature_noise", sy.feature_noise.to_string());
        kv("synth.label_rate", sy.label_rate.to_string());
        kv("synth.locality", sy.locality.to_string());
        kv("synth.skew", sy.skew.to_string());
        kv("synth.skew_region", sy.skew_region.to_string());
        kv("report.buckets", self.buckets.to_string());
        kv("report.projection", self.projection.as_str().to_string());
        kv("report.label_rates", join(&self.label_rates));
        kv("experiment.seed", self.seed.to_string());
        kv("experiment.seeds", join(&self.seeds));
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::emit`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.emit().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Cross-field checks beyond the per-module ones.
    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        self.impact.validate()?;
        self.augment.validate()?;
        self.loss.validate()?;
        self.encoder.validate()?;
        if self.buckets == 0 {
            return Err(Error::invalid("report.buckets must be positive"));
        }
        if !(self.data.label_rate > 0.0 && self.data.label_rate <= 1.0) {
            return Err(Error::invalid(format!("data.label_rate {} outside (0, 1]", self.data.label_rate)));
        }
        if let Some(r) = self.label_rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::invalid(format!("report.label_rates entry {r} outside (0, 1]")));
        }
        if self.data.schema.is_some() != self.data.edges.is_some() {
            return Err(Error::invalid("data.schema and data.edges must be set together"));
        }
        if self.data.test_labels.is_some() && self.data.labels.is_none() {
            return Err(Error::invalid("data.test_labels requires data.labels"));
        }
        Ok(())
    }

    /// The encoder settings with the run seed and label mode filled in.
    pub fn encoder_for(&self, seed: u64, multi_label: bool) -> EncoderConfig {
        EncoderConfig {
            seed,
            multi_label,
            ..self.encoder
        }
    }

    pub fn augment_for(&self, seed: u64) -> AugmentConfig {
        AugmentConfig { seed, ..self.augment }
    }

    pub fn synth_for(&self, seed: u64) -> SynthSpec {
        SynthSpec {
            seed,
            ..self.synth.clone()
        }
    }
}

fn parse_synth_types(v: &str) -> Result<Vec<SynthType>> {
    v.split(',')
        .map(|item| {
            let f: Vec<&str> = item.trim().split(':').collect();
            if f.len() != 3 {
                return Err(Error::invalid(format!("synth type `{item}` is not name:count:feature_dim")));
            }
            Ok(SynthType {
                name: f[0].to_string(),
                count: parse_value("synth.types", f[1])?,
                feature_dim: parse_value("synth.types", f[2])?,
            })
        })
        .collect()
}

fn parse_synth_relations(v: &str, types: &[SynthType]) -> Result<Vec<SynthRelation>> {
    let find = |name: &str| {
        types
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::invalid(format!("synth relation uses unknown type `{name}`")))
    };
    v.split(',')
        .map(|item| {
            let f: Vec<&str> = item.trim().split(':').collect();
            if f.len() != 4 {
                return Err(Error::invalid(format!("synth relation `{item}` is not name:src:dst:edges")));
            }
            Ok(SynthRelation {
                name: f[0].to_string(),
                src: find(f[1])?,
                dst: find(f[2])?,
                edges: parse_value("synth.relations", f[3])?,
            })
        })
        .collect()
}

fn format_synth_types(types: &[SynthType]) -> String {
    types
        .iter()
        .map(|t| format!("{}:{}:{}", t.name, t.count, t.feature_dim))
        .collect::<Vec<_>>()
        .join(",")
}

fn format_synth_relations(rels: &[SynthRelation], types: &[SynthType]) -> String {
    rels.iter()
        .map(|r| format!("{}:{}:{}:{}", r.name, types[r.src].name, types[r.dst].name, r.edges))
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        let text = c.emit();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
        assert_eq!(ExperimentConfig::parse(&text).unwrap().emit(), text);
    }

    #[test]
    fn edited_config_round_trips() {
        let mut c = ExperimentConfig::default();
        c.set("hlid.alpha", "0.3").unwrap();
        c.set("hlid.max_iter", "77").unwrap();
        c.set("data.features.paper", "/tmp/p.txt").unwrap();
        c.set("data.num_classes", "3").unwrap();
        c.set("loss.lambda1", "0.1").unwrap();
        c.set("report.label_rates", "0.05,0.1").unwrap();
        c.set("experiment.seeds", "3,4").unwrap();
        c.set("synth.types", "a:10:2,b:5:0").unwrap();
        c.set("synth.relations", "ab:a:b:12").unwrap();
        c.set("synth.target_type", "b").unwrap();
        let back = ExperimentConfig::parse(&c.emit()).unwrap();
        assert_eq!(back, c);
        assert_ne!(back.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = ExperimentConfig::parse("hlid.alpha=0.2\nbogus.key=1\n").unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(ExperimentConfig::parse("hlid.alpha").is_err());
    }

    proptest::proptest! {
        #[test]
        fn numeric_settings_round_trip(
            alpha in 1e-6f64..=1.0,
            eta1 in 0.0f64..1e3,
            lambda in 1e-9f64..1e6,
            p0 in 0.0f64..=1.0,
            tau in 1e-3f64..10.0,
            rates in proptest::collection::vec(1e-4f64..=1.0, 0..4),
            seeds in proptest::collection::vec(proptest::num::u64::ANY, 1..5),
        ) {
            let mut c = ExperimentConfig::default();
            c.impact.alpha = alpha;
            c.meta.eta1 = eta1;
            c.augment.lambda = lambda;
            c.augment.p0 = p0;
            c.loss.tau = tau;
            c.label_rates = rates;
            c.seeds = seeds;
            let back = ExperimentConfig::parse(&c.emit()).unwrap();
            proptest::prop_assert_eq!(back, c);
        }
    }

    #[test]
    fn hash_is_stable() {
        let a = ExperimentConfig::default().hash();
        assert_eq!(a, ExperimentConfig::default().hash());
        assert_eq!(a.len(), 16);
    }
}
