//! Run configuration: defaults, then a `--config` JSON file, then flags and
//! `EMOBLEND_*` environment variables.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::Args;
use emoblend::harness::{DataFormat, ExperimentConfig, Mode};
use emoblend::model::BlendMode;
use emoblend::{Error, Result};
use serde::{Deserialize, Serialize};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub format: Option<DataFormat>,
    /// Builtin manifest name or path to a manifest JSON.
    pub manifest: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = File::create(dir.join(RUN_CONFIG_FILE))?;
        serde_json::to_writer_pretty(&mut f, self)?;
        Ok(())
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset.as_deref().ok_or_else(|| {
            Error::Config("no dataset given (use --dataset or EMOBLEND_DATASET)".into())
        })
    }

    pub fn format(&self) -> Result<DataFormat> {
        Ok(self
            .format
            .unwrap_or(DataFormat::from_path(self.dataset()?)))
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Labeled dataset (CSV or JSONL).
    #[arg(long, env = "EMOBLEND_DATASET")]
    pub dataset: Option<PathBuf>,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    pub format: Option<DataFormat>,
    /// `github`, `stackoverflow` or a manifest JSON file.
    #[arg(long, env = "EMOBLEND_MANIFEST")]
    pub manifest: Option<String>,
}

impl DataArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if self.format.is_some() {
            cfg.format = self.format;
        }
        if let Some(m) = &self.manifest {
            cfg.manifest = Some(m.clone());
        }
    }
}

fn parse_format(s: &str) -> Result<DataFormat> {
    s.parse()
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Run configuration JSON (for example a saved run_config.json).
    #[arg(long, env = "EMOBLEND_CONFIG")]
    pub config: Option<PathBuf>,
    /// SentiWordNet-format lexicon; required in polarity mode.
    #[arg(long, env = "EMOBLEND_LEXICON")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, env = "EMOBLEND_TAU")]
    pub tau: Option<f64>,
    #[arg(long, env = "EMOBLEND_MODE", value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// pooled-concat or attention-keys (polarity mode only).
    #[arg(long, env = "EMOBLEND_BLEND", value_parser = parse_blend)]
    pub blend: Option<BlendMode>,
    #[arg(long)]
    pub w_primary: Option<f64>,
    #[arg(long)]
    pub w_polarity: Option<f64>,
    #[arg(long, env = "EMOBLEND_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub validation_frac: Option<f64>,
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub min_freq: Option<usize>,
    #[arg(long)]
    pub max_vocab: Option<usize>,
}

fn parse_mode(s: &str) -> Result<Mode> {
    s.parse()
}

fn parse_blend(s: &str) -> Result<BlendMode> {
    s.parse()
}

impl ModelArgs {
    /// Starts from `--config` (or defaults) and overlays the given flags.
    pub fn resolve(&self, data: &DataArgs) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        data.apply(&mut cfg);
        if let Some(l) = &self.lexicon {
            cfg.lexicon = Some(l.clone());
        }
        let x = &mut cfg.experiment;
        set(&mut x.text.tau, self.tau);
        set(&mut x.mode, self.mode);
        set(&mut x.blend.mode, self.blend);
        match (self.w_primary, self.w_polarity) {
            (Some(p), Some(s)) => (x.blend.w_primary, x.blend.w_polarity) = (p, s),
            (Some(p), None) => (x.blend.w_primary, x.blend.w_polarity) = (p, 1.0 - p),
            (None, Some(s)) => (x.blend.w_primary, x.blend.w_polarity) = (1.0 - s, s),
            (None, None) => {}
        }
        set(&mut x.train.epochs, self.epochs);
        set(&mut x.train.batch_size, self.batch_size);
        set(&mut x.train.learning_rate, self.learning_rate);
        set(&mut x.train.patience, self.patience);
        set(&mut x.train.validation_frac, self.validation_frac);
        set(&mut x.train_frac, self.train_frac);
        set(&mut x.encoder.d_model, self.d_model);
        set(&mut x.encoder.n_layers, self.layers);
        set(&mut x.encoder.n_heads, self.heads);
        set(&mut x.encoder.d_ff, self.d_ff);
        set(&mut x.text.max_len, self.max_len);
        set(&mut x.encoder.dropout_rate, self.dropout);
        set(&mut x.text.min_freq, self.min_freq);
        set(&mut x.text.max_vocab, self.max_vocab);
        if x.train.patience > x.train.epochs {
            x.train.patience = x.train.epochs;
        }
        if cfg.experiment.dataset.is_empty() {
            cfg.experiment.dataset = dataset_name(&cfg);
        }
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Manifest name when one is given, else the dataset file stem.
fn dataset_name(cfg: &RunConfig) -> String {
    if let Some(m) = &cfg.manifest {
        if !m.ends_with(".json") {
            return m.clone();
        }
    }
    cfg.dataset
        .as_deref()
        .and_then(Path::file_stem)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct T {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
    }

    fn resolve(args: &[&str]) -> RunConfig {
        let t = T::parse_from(std::iter::once("t").chain(args.iter().copied()));
        t.model.resolve(&t.data).unwrap()
    }

    #[test]
    fn flags_override_defaults() {
        let cfg = resolve(&[
            "--dataset",
            "x/gh.csv",
            "--mode",
            "polarity",
            "--w-primary",
            "0.6",
            "--epochs",
            "3",
        ]);
        assert_eq!(cfg.experiment.mode, Mode::Polarity);
        assert!((cfg.experiment.blend.w_polarity - 0.4).abs() < 1e-12);
        assert_eq!(cfg.experiment.train.epochs, 3);
        assert_eq!(cfg.experiment.train.patience, 3);
        assert_eq!(cfg.experiment.dataset, "gh");
        assert_eq!(cfg.format().unwrap(), DataFormat::Csv);
    }

    #[test]
    fn config_file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(
            &p,
            r#"{"experiment": {"train": {"epochs": 7}, "encoder": {"d_model": 16}}}"#,
        )
        .unwrap();
        let cfg = resolve(&["--config", p.to_str().unwrap(), "--d-model", "32"]);
        assert_eq!(cfg.experiment.train.epochs, 7);
        assert_eq!(cfg.experiment.train.batch_size, 16);
        assert_eq!(cfg.experiment.encoder.d_model, 32);
    }

    #[test]
    fn saved_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = resolve(&[
            "--dataset",
            "a.jsonl",
            "--manifest",
            "github",
            "--blend",
            "attention-keys",
        ]);
        cfg.save(dir.path()).unwrap();
        assert_eq!(
            RunConfig::load(&dir.path().join(RUN_CONFIG_FILE)).unwrap(),
            cfg
        );
        assert_eq!(cfg.experiment.dataset, "github");
    }
}
