use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hetbias::config::ExperimentConfig;
use hetbias::pipeline::{self, Method, PredictionSource};

#[derive(Parser)]
#[command(name = "hetbias", version, about = "Topological bias auditing and debiasing for heterogeneous graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config file of `section.key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed; overrides `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Extra `key=value` overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a graph, then summarise its types and relations.
    Ingest(Common),
    /// Write a synthetic dataset and a config that reads it into `--out`.
    Synth(Common),
    /// Per-node label impact scores.
    Hlid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Sample one augmented edge set.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        p0: Option<f64>,
        #[arg(long)]
        neg_multiplier: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 0)]
        epoch: u64,
    },
    /// Train an encoder and write the model to `--out`.
    Train {
        #[command(flatten)]
        common: Common,
        /// `base` or `htad`.
        #[arg(long, default_value = "htad")]
        method: String,
        /// Per-epoch loss report; stdout when omitted.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Score a trained model on the test labels.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        predictions_out: Option<PathBuf>,
    },
    /// Bucketed accuracy and rank correlations per projection and label rate.
    BiasReport {
        #[command(flatten)]
        common: Common,
        #[arg(long, conflicts_with = "predictions")]
        model: Option<PathBuf>,
        /// Predicted labels in the labels-file format.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Base and HTAD rows for every seed plus their means. `--seed` runs that seed alone.
    RunExperiment(Common),
}

fn load_config(c: &Common) -> Result<(ExperimentConfig, u64)> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for o in &c.overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("override `{o}` is not KEY=VALUE"))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let seed = cfg.seed;
    Ok((cfg, seed))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(c) => {
            let (cfg, seed) = load_config(&c)?;
            emit(c.out.as_deref(), &pipeline::cmd_ingest(&cfg, seed)?)
        }
        Command::Synth(c) => {
            let (cfg, seed) = load_config(&c)?;
            let Some(dir) = &c.out else { bail!("synth needs --out <dir>") };
            pipeline::cmd_synth(&cfg, seed, dir)?;
            log::info!("wrote {}", dir.join("experiment.cfg").display());
            Ok(())
        }
        Command::Hlid { mut common, alpha } => {
            if let Some(a) = alpha {
                common.overrides.push(format!("hlid.alpha={a}"));
            }
            let (cfg, seed) = load_config(&common)?;
            emit(common.out.as_deref(), &pipeline::cmd_hlid(&cfg, seed)?)
        }
        Command::Augment {
            mut common,
            p0,
            neg_multiplier,
            lambda,
            epoch,
        } => {
            for (k, v) in [("p0", p0), ("neg_multiplier", neg_multiplier), ("lambda", lambda)] {
                if let Some(v) = v {
                    common.overrides.push(format!("augment.{k}={v}"));
                }
            }
            let (cfg, seed) = load_config(&common)?;
            let (_, text) = pipeline::cmd_augment(&cfg, seed, epoch)?;
            emit(common.out.as_deref(), &text)
        }
        Command::Train { common, method, history } => {
            let (cfg, seed) = load_config(&common)?;
            let Some(model) = &common.out else { bail!("train needs --out <model>") };
            let method: Method = method.parse()?;
            let trained = pipeline::cmd_train(&cfg, seed, method)?;
            pipeline::save_model(model, &trained.result.params, trained.schema_hash)?;
            let text = trained.report;
            emit(history.as_deref(), &text)
        }
        Command::Eval {
            common,
            model,
            predictions_out,
        } => {
            let (cfg, seed) = load_config(&common)?;
            let (_, text, preds) = pipeline::cmd_eval(&cfg, seed, &model)?;
            if let Some(p) = predictions_out {
                emit(Some(&p), &preds)?;
            }
            emit(common.out.as_deref(), &text)
        }
        Command::BiasReport {
            common,
            model,
            predictions,
        } => {
            let (cfg, seed) = load_config(&common)?;
            let source = match (&model, &predictions) {
                (Some(m), _) => PredictionSource::Model(m),
                (None, Some(p)) => PredictionSource::Predictions(p),
                (None, None) => PredictionSource::Train,
            };
            let report = pipeline::cmd_bias_report(&cfg, seed, source)?;
            emit(common.out.as_deref(), &report.emit())
        }
        Command::RunExperiment(c) => {
            let (mut cfg, _) = load_config(&c)?;
            if let Some(s) = c.seed {
                cfg.seeds = vec![s];
            }
            let (_, text) = pipeline::cmd_run_experiment(&cfg)?;
            emit(c.out.as_deref(), &text)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
