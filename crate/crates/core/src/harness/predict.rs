//! Batch prediction, prediction CSV files and on-disk classifier bundles.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{Featurizer, TextConfig};
use super::train::OneVsAll;
use super::Utterance;
use crate::emotion::{Emotion, Labels, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::eval::ModelPredictions;
use crate::model::{decide, logit, sigmoid, BlendConfig, EncoderConfig, EncoderParams};
use crate::tensor::{read_checkpoint, write_checkpoint};
use crate::text::Vocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub probabilities: [f64; NUM_EMOTIONS],
    pub labels: Labels,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionMatrix {
    pub rows: Vec<PredictionRow>,
}

impl PredictionMatrix {
    pub fn labels(&self) -> Vec<Labels> {
        self.rows.iter().map(|r| r.labels).collect()
    }

    pub fn to_model_predictions(&self, name: impl Into<String>) -> ModelPredictions {
        ModelPredictions::new(name, self.rows.iter().map(|r| (r.id.clone(), r.labels)))
    }

    fn header() -> Vec<String> {
        let mut h = vec!["id".to_string()];
        h.extend(Emotion::ALL.iter().map(|e| format!("p_{}", e.key())));
        h.extend(Emotion::ALL.iter().map(|e| e.key().to_string()));
        h
    }

    /// Columns: `id`, six `p_<emotion>` probabilities, six 0/1 labels.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(Self::header())?;
        for r in &self.rows {
            let mut rec = vec![r.id.clone()];
            rec.extend(r.probabilities.iter().map(f64::to_string));
            rec.extend(
                r.labels
                    .iter()
                    .map(|&l| if l { "1" } else { "0" }.to_string()),
            );
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != Self::header() {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected prediction header `{}`", header.join(",")),
            });
        }
        let mut rows = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let bad = |m: String| Error::Parse { line, message: m };
            let mut probabilities = [0.0; NUM_EMOTIONS];
            let mut labels = [false; NUM_EMOTIONS];
            for i in 0..NUM_EMOTIONS {
                probabilities[i] = record[1 + i]
                    .parse()
                    .map_err(|_| bad(format!("bad probability `{}`", &record[1 + i])))?;
                labels[i] = match &record[1 + NUM_EMOTIONS + i] {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad(format!("bad label `{other}`"))),
                };
            }
            rows.push(PredictionRow {
                id: record[0].to_string(),
                probabilities,
                labels,
            });
        }
        Ok(PredictionMatrix { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?))
    }
}

/// Sigmoid probabilities and 0.5-threshold decisions for every utterance and
/// emotion. Utterances are processed in parallel on the current rayon pool;
/// output order follows `data`.
pub fn predict<'p>(
    classifiers: impl IntoIterator<Item = &'p EncoderParams>,
    blend: &BlendConfig,
    data: &[Utterance],
    featurizer: &Featurizer<'_>,
) -> Result<PredictionMatrix> {
    let classifiers: Vec<&EncoderParams> = classifiers.into_iter().collect();
    if classifiers.len() != NUM_EMOTIONS {
        return Err(Error::Input(format!(
            "expected {NUM_EMOTIONS} classifiers, got {}",
            classifiers.len()
        )));
    }
    let vocab_size = featurizer.vocab.len();
    if let Some(c) = classifiers
        .iter()
        .find(|c| c.config.vocab_size != vocab_size)
    {
        return Err(Error::Compatibility(format!(
            "classifier expects a vocabulary of {} tokens, got {vocab_size}",
            c.config.vocab_size
        )));
    }
    let rows: Result<Vec<PredictionRow>> = data
        .par_iter()
        .map(|u| {
            let pair = featurizer.pair(u);
            let mut probabilities = [0.0; NUM_EMOTIONS];
            for (p, c) in probabilities.iter_mut().zip(&classifiers) {
                *p = sigmoid(logit(c, &pair, blend)?);
            }
            Ok(PredictionRow {
                id: u.id.clone(),
                probabilities,
                labels: probabilities.map(decide),
            })
        })
        .collect();
    Ok(PredictionMatrix { rows: rows? })
}

pub const SIDECAR_FILE: &str = "model.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

/// Everything besides the weights needed to reuse a trained bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub format_version: u32,
    pub encoder: EncoderConfig,
    pub blend: BlendConfig,
    pub text: TextConfig,
    pub vocab_hash: String,
    pub seed: u64,
    pub emotion_seeds: [u64; NUM_EMOTIONS],
    pub uses_lexicon: bool,
}

pub fn checkpoint_file(e: Emotion) -> String {
    format!("{}.ckpt", e.key())
}

/// A loaded set of six classifiers with their sidecar.
pub struct ClassifierBundle {
    pub sidecar: ModelSidecar,
    pub vocab: Vocabulary,
    pub classifiers: Vec<EncoderParams>,
}

/// Writes `dir/model.json`, `dir/vocab.txt` and one checkpoint per emotion.
pub fn save_bundle(
    dir: &Path,
    models: &OneVsAll,
    vocab: &Vocabulary,
    sidecar: &ModelSidecar,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    vocab.write(BufWriter::new(File::create(dir.join(VOCAB_FILE))?))?;
    for run in &models.runs {
        let mut w = BufWriter::new(File::create(dir.join(checkpoint_file(run.emotion)))?);
        write_checkpoint(&mut w, &run.params.set)?;
        w.flush()?;
    }
    let mut w = BufWriter::new(File::create(dir.join(SIDECAR_FILE))?);
    serde_json::to_writer_pretty(&mut w, sidecar)?;
    w.flush()?;
    Ok(())
}

/// Loads a bundle. The vocabulary file must hash to the value recorded in the
/// sidecar, or the load fails with a compatibility error.
pub fn load_bundle(dir: &Path) -> Result<ClassifierBundle> {
    let sidecar: ModelSidecar =
        serde_json::from_reader(BufReader::new(File::open(dir.join(SIDECAR_FILE))?))?;
    if sidecar.format_version != BUNDLE_FORMAT_VERSION {
        return Err(Error::Compatibility(format!(
            "bundle format {} is not supported (expected {BUNDLE_FORMAT_VERSION})",
            sidecar.format_version
        )));
    }
    let vocab = Vocabulary::read(BufReader::new(File::open(dir.join(VOCAB_FILE))?))?;
    check_vocab(&sidecar, &vocab)?;
    let classifiers = Emotion::ALL
        .iter()
        .map(|&e| {
            let set = read_checkpoint(BufReader::new(File::open(dir.join(checkpoint_file(e)))?))?;
            EncoderParams::from_set(&sidecar.encoder, set)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassifierBundle {
        sidecar,
        vocab,
        classifiers,
    })
}

pub fn check_vocab(sidecar: &ModelSidecar, vocab: &Vocabulary) -> Result<()> {
    let got = vocab.hash();
    if got != sidecar.vocab_hash {
        return Err(Error::Compatibility(format!(
            "vocabulary hash {got} does not match checkpoint sidecar {}",
            sidecar.vocab_hash
        )));
    }
    Ok(())
}
