//! Full pipeline per seed: split, vocabulary, features, training, prediction
//! and evaluation, plus aggregation over seeds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::{build_vocab, Featurizer, TextConfig};
use super::predict::{predict, ModelSidecar, PredictionMatrix, BUNDLE_FORMAT_VERSION};
use super::split::{stratified_split, SplitAssignment, DEFAULT_TRAIN_FRAC};
use super::train::{train_one_vs_all, OneVsAll, TrainConfig};
use super::Utterance;
use crate::emotion::{Labels, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::eval::{EvalReport, ReportMeta};
use crate::lexicon::PolarityLexicon;
use crate::model::{BlendConfig, BlendMode, EncoderConfig};
use crate::text::{TokenizedPair, Vocabulary};

/// Seed offset for the validation carve-out, so it does not replay the
/// train/test shuffle.
const VALIDATION_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Polarity,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Polarity => "polarity",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "polarity" => Ok(Mode::Polarity),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected baseline or polarity)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub mode: Mode,
    /// Used in polarity mode; baseline always runs with blend mode `none`.
    pub blend: BlendConfig,
    /// `vocab_size` and `max_len` are filled in per run.
    pub encoder: EncoderConfig,
    /// `seed` is replaced by each run's seed.
    pub train: TrainConfig,
    pub text: TextConfig,
    pub train_frac: f64,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: String::new(),
            mode: Mode::Baseline,
            blend: BlendConfig::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            text: TextConfig::default(),
            train_frac: DEFAULT_TRAIN_FRAC,
            seeds: vec![0],
        }
    }
}

impl ExperimentConfig {
    /// The blend actually used for `mode`.
    pub fn effective_blend(&self) -> Result<BlendConfig> {
        match self.mode {
            Mode::Baseline => Ok(BlendConfig::baseline()),
            Mode::Polarity => {
                if self.blend.mode == BlendMode::None {
                    return Err(Error::Config(
                        "polarity mode needs a blend other than `none`".into(),
                    ));
                }
                self.blend.validate()?;
                Ok(self.blend)
            }
        }
    }

    /// Hex sha256 of the JSON form of this configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub struct SeedRun {
    pub seed: u64,
    pub split: SplitAssignment,
    pub vocab: Vocabulary,
    pub models: OneVsAll,
    pub sidecar: ModelSidecar,
    pub test: Vec<Utterance>,
    pub predictions: PredictionMatrix,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary {
            mean,
            std,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    pub micro_f1: Summary,
    pub macro_f1: Summary,
    pub per_emotion_f1_mean: [f64; NUM_EMOTIONS],
}

impl Aggregate {
    pub fn of(reports: &[EvalReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Input("no reports to aggregate".into()));
        }
        let micro: Vec<f64> = reports.iter().map(|r| r.micro_f1).collect();
        let macro_: Vec<f64> = reports.iter().map(|r| r.macro_f1).collect();
        let per_emotion_f1_mean = std::array::from_fn(|i| {
            reports.iter().map(|r| r.per_emotion[i].f1).sum::<f64>() / reports.len() as f64
        });
        Ok(Aggregate {
            runs: reports.len(),
            micro_f1: Summary::of(&micro),
            macro_f1: Summary::of(&macro_),
            per_emotion_f1_mean,
        })
    }
}

pub struct ExperimentResult {
    pub runs: Vec<SeedRun>,
    pub aggregate: Aggregate,
}

impl ExperimentResult {
    pub fn reports(&self) -> Vec<&EvalReport> {
        self.runs.iter().map(|r| &r.report).collect()
    }
}

/// Train/validation/test material for one seed.
pub struct PreparedSplit {
    pub split: SplitAssignment,
    pub vocab: Vocabulary,
    pub fit: Vec<Utterance>,
    pub val: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

/// Split, carve off validation (same stratification) and build the
/// vocabulary from the training portion.
pub fn prepare_split(
    data: &[Utterance],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<PreparedSplit> {
    let split = stratified_split(data, cfg.train_frac, seed)?;
    let (train, test) = split.partition(data)?;
    if train.is_empty() {
        return Err(Error::Input("training split is empty".into()));
    }
    let vocab = build_vocab(&train, &cfg.text)?;
    let (fit, val) = if cfg.train.validation_frac > 0.0 && train.len() > 1 {
        let inner = stratified_split(
            &train,
            1.0 - cfg.train.validation_frac,
            seed ^ VALIDATION_SEED_SALT,
        )?;
        inner.partition(&train)?
    } else {
        (train, Vec::new())
    };
    Ok(PreparedSplit {
        split,
        vocab,
        fit,
        val,
        test,
    })
}

fn labels_of(data: &[Utterance]) -> Vec<Labels> {
    data.iter().map(|u| u.labels).collect()
}

pub fn run_seed(
    data: &[Utterance],
    cfg: &ExperimentConfig,
    lexicon: Option<&PolarityLexicon>,
    seed: u64,
) -> Result<SeedRun> {
    let blend = cfg.effective_blend()?;
    let lexicon = match cfg.mode {
        Mode::Baseline => None,
        Mode::Polarity => {
            Some(lexicon.ok_or_else(|| Error::Config("polarity mode needs a lexicon".into()))?)
        }
    };
    let prepared = prepare_split(data, cfg, seed)?;
    let featurizer = Featurizer {
        vocab: &prepared.vocab,
        lexicon,
        text: &cfg.text,
    };
    let fit_pairs: Vec<TokenizedPair> = featurizer.pairs(&prepared.fit);
    let val_pairs: Vec<TokenizedPair> = featurizer.pairs(&prepared.val);
    let encoder = EncoderConfig {
        vocab_size: prepared.vocab.len(),
        max_len: cfg.text.max_len,
        ..cfg.encoder.clone()
    };
    let train = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let models = train_one_vs_all(
        &fit_pairs,
        &labels_of(&prepared.fit),
        &val_pairs,
        &labels_of(&prepared.val),
        &encoder,
        &blend,
        &train,
        None,
    )?;
    let predictions = predict(models.classifiers(), &blend, &prepared.test, &featurizer)?;
    let vocab_hash = prepared.vocab.hash();
    let meta = ReportMeta {
        dataset: cfg.dataset.clone(),
        mode: cfg.mode.to_string(),
        blend: Some(blend.mode.to_string()),
        seed: Some(seed),
        config_hash: Some(cfg.hash()),
        vocab_hash: Some(vocab_hash.clone()),
    };
    let report =
        EvalReport::from_predictions(meta, &labels_of(&prepared.test), &predictions.labels())?;
    let sidecar = ModelSidecar {
        format_version: BUNDLE_FORMAT_VERSION,
        encoder,
        blend,
        text: cfg.text.clone(),
        vocab_hash,
        seed,
        emotion_seeds: models.seeds,
        uses_lexicon: lexicon.is_some(),
    };
    Ok(SeedRun {
        seed,
        split: prepared.split,
        vocab: prepared.vocab,
        models,
        sidecar,
        test: prepared.test,
        predictions,
        report,
    })
}

/// One run per seed, in seed order, plus mean/std over runs.
pub fn run_experiment(
    data: &[Utterance],
    cfg: &ExperimentConfig,
    lexicon: Option<&PolarityLexicon>,
) -> Result<ExperimentResult> {
    if cfg.seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let runs = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(data, cfg, lexicon, s))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    let aggregate = Aggregate::of(&reports)?;
    Ok(ExperimentResult { runs, aggregate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub seed: u64,
    pub baseline_macro_f1: f64,
    pub polarity_macro_f1: f64,
    pub delta: f64,
}

/// Per-seed macro-F1 differences between two experiments over the same
/// seeds.
pub fn paired_deltas(baseline: &[EvalReport], polarity: &[EvalReport]) -> Result<Vec<PairedDelta>> {
    if baseline.len() != polarity.len() {
        return Err(Error::Input(format!(
            "{} baseline reports vs {} polarity reports",
            baseline.len(),
            polarity.len()
        )));
    }
    baseline
        .iter()
        .zip(polarity)
        .map(|(b, p)| {
            if b.meta.seed != p.meta.seed {
                return Err(Error::Input(format!(
                    "seed mismatch: {:?} vs {:?}",
                    b.meta.seed, p.meta.seed
                )));
            }
            Ok(PairedDelta {
                seed: b.meta.seed.unwrap_or_default(),
                baseline_macro_f1: b.macro_f1,
                polarity_macro_f1: p.macro_f1,
                delta: p.macro_f1 - b.macro_f1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[0.5, 0.7, 0.6]);
        assert!((s.mean - 0.6).abs() < 1e-12);
        assert!((s.std - 0.1).abs() < 1e-12);
        assert_eq!((s.min, s.max), (0.5, 0.7));
        assert_eq!(Summary::of(&[0.4]).std, 0.0);
    }

    #[test]
    fn baseline_ignores_configured_blend() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.effective_blend().unwrap().mode, BlendMode::None);
        let pol = ExperimentConfig {
            mode: Mode::Polarity,
            blend: BlendConfig::baseline(),
            ..Default::default()
        };
        assert!(pol.effective_blend().is_err());
    }

    #[test]
    fn polarity_without_lexicon_is_config_error() {
        let data = vec![Utterance::new(
            "a",
            "x y",
            [true, false, false, false, false, false],
        )];
        let cfg = ExperimentConfig {
            mode: Mode::Polarity,
            ..Default::default()
        };
        assert!(matches!(
            run_seed(&data, &cfg, None, 0),
            Err(Error::Config(_))
        ));
    }
}
