//! Adam, single-emotion binary training with early stopping, and the
//! six-way one-vs-all driver.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::error::{Error, Result};
use crate::eval::{f1, ConfusionCounts};
use crate::model::{
    decide, forward, logit, sigmoid, BlendConfig, EncoderConfig, EncoderParams, ForwardOptions,
};
use crate::tensor::{Gradients, ParamSet, Tape};
use crate::text::TokenizedPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of the training set held out for early stopping.
    pub validation_frac: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            patience: 5,
            validation_frac: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "epochs, batch_size and patience must be positive".into(),
            ));
        }
        if self.patience > self.epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || self.adam_eps.is_nan()
            || self.adam_eps <= 0.0
        {
            return Err(Error::Config(
                "learning_rate and adam_eps must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.validation_frac) {
            return Err(Error::Config("validation_frac must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Seed of each emotion's classifier, derived from the run seed.
    pub fn emotion_seeds(&self) -> [u64; NUM_EMOTIONS] {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(self.seed);
        std::array::from_fn(|_| rand::Rng::random(&mut rng))
    }
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: &TrainConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update from `grads` multiplied by `scale`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &GradBuffer, scale: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let data = params.get_mut(id).data_mut();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, &g) in grads.0[i].iter().enumerate() {
                let g = g * scale;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                data[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Per-parameter gradient sums over a mini-batch.
pub struct GradBuffer(Vec<Vec<f64>>);

impl GradBuffer {
    pub fn new(params: &ParamSet) -> Self {
        GradBuffer(params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect())
    }

    pub fn clear(&mut self) {
        self.0.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn add(&mut self, grads: &Gradients) {
        for (id, g) in grads.iter() {
            for (a, b) in self.0[id.index()].iter_mut().zip(g) {
                *a += b;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub emotion: Emotion,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_f1: Option<f64>,
    pub improved: bool,
}

pub struct BinaryRun {
    pub emotion: Emotion,
    pub seed: u64,
    pub params: EncoderParams,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub best_val_f1: Option<f64>,
}

/// Binary examples: shared inputs and this emotion's targets.
#[derive(Clone, Copy)]
pub struct BinarySet<'a> {
    pub pairs: &'a [TokenizedPair],
    pub targets: &'a [bool],
}

fn bce(z: f64, y: bool) -> f64 {
    let y = if y { 1.0 } else { 0.0 };
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn diverged(emotion: Emotion, epoch: usize, message: impl Into<String>) -> Error {
    Error::Training {
        emotion: emotion.key().to_string(),
        epoch,
        message: message.into(),
    }
}

/// Validation loss and F1 of the positive class.
pub fn evaluate_binary(
    params: &EncoderParams,
    blend: &BlendConfig,
    set: BinarySet<'_>,
) -> Result<(f64, f64)> {
    let mut counts = ConfusionCounts::default();
    let mut loss = 0.0;
    for (pair, &y) in set.pairs.iter().zip(set.targets) {
        let z = logit(params, pair, blend)?;
        loss += bce(z, y);
        counts.record(y, decide(sigmoid(z)));
    }
    Ok((loss / set.pairs.len().max(1) as f64, f1(&counts).f1))
}

/// Trains one binary classifier. With a non-empty validation set the
/// parameters of the best epoch are kept: higher F1, ties broken by lower
/// validation loss. Without one, training runs all epochs and keeps the last.
pub fn train_binary(
    emotion: Emotion,
    train: BinarySet<'_>,
    val: BinarySet<'_>,
    encoder: &EncoderConfig,
    blend: &BlendConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<BinaryRun> {
    cfg.validate()?;
    if train.pairs.is_empty() {
        return Err(Error::Input(format!("no training examples for {emotion}")));
    }
    let mut params = EncoderParams::init(encoder, seed)?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    rng.long_jump();
    let mut adam = Adam::new(cfg, &params.set);
    let mut buf = GradBuffer::new(&params.set);
    let mut order: Vec<usize> = (0..train.pairs.len()).collect();
    let mut log = Vec::new();
    let monitor = !val.pairs.is_empty();
    let mut best: Option<(f64, f64, usize, ParamSet)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            buf.clear();
            for &i in batch {
                let mut tape = Tape::with_params(&params.set);
                let mut opts = ForwardOptions::training(encoder.dropout_rate, &mut rng);
                let out = forward(&mut tape, &params, &train.pairs[i], blend, &mut opts)
                    .map_err(|e| diverged(emotion, epoch, e.to_string()))?;
                let target = if train.targets[i] { 1.0 } else { 0.0 };
                let loss = tape.bce_loss(out.logit, target)?;
                let value = tape.scalar(loss);
                if !value.is_finite() {
                    return Err(diverged(emotion, epoch, format!("loss is {value}")));
                }
                total += value;
                buf.add(&tape.backward(loss)?);
            }
            adam.step(&mut params.set, &buf, 1.0 / batch.len() as f64);
            if !params.all_finite() {
                return Err(diverged(
                    emotion,
                    epoch,
                    "non-finite parameters after update",
                ));
            }
        }
        let train_loss = total / train.pairs.len() as f64;

        let (val_loss, val_f1, improved) = if monitor {
            let (vl, vf) = evaluate_binary(&params, blend, val)?;
            let better = match &best {
                None => true,
                Some((bf, bl, _, _)) => vf > *bf || (vf == *bf && vl < *bl),
            };
            if better {
                best = Some((vf, vl, epoch, params.set.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
            (Some(vl), Some(vf), better)
        } else {
            (None, None, true)
        };
        log.push(EpochRecord {
            emotion,
            epoch,
            train_loss,
            val_loss,
            val_f1,
            improved,
        });
        if monitor && stale >= cfg.patience {
            break;
        }
    }

    let (best_epoch, best_val_f1) = match best {
        Some((f, _, epoch, set)) => {
            params.set = set;
            (epoch, Some(f))
        }
        None => (log.len(), None),
    };
    Ok(BinaryRun {
        emotion,
        seed,
        params,
        log,
        best_epoch,
        best_val_f1,
    })
}

/// Six classifiers, one per emotion, in emotion order.
pub struct OneVsAll {
    pub runs: Vec<BinaryRun>,
    pub blend: BlendConfig,
    pub seeds: [u64; NUM_EMOTIONS],
}

impl OneVsAll {
    pub fn classifiers(&self) -> impl Iterator<Item = &EncoderParams> {
        self.runs.iter().map(|r| &r.params)
    }

    /// All epoch records, emotion-major.
    pub fn log(&self) -> impl Iterator<Item = &EpochRecord> {
        self.runs.iter().flat_map(|r| r.log.iter())
    }
}

/// Runs `f` inside a rayon pool of `jobs` threads; 0 means rayon's default.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// Trains the six emotions independently. `labels[i]` is the label vector of
/// `train.pairs[i]`; the same holds for `val`. `seeds` overrides the seeds
/// derived from `cfg.seed`. Work is spread over the current rayon pool.
#[allow(clippy::too_many_arguments)]
pub fn train_one_vs_all(
    train_pairs: &[TokenizedPair],
    train_labels: &[crate::emotion::Labels],
    val_pairs: &[TokenizedPair],
    val_labels: &[crate::emotion::Labels],
    encoder: &EncoderConfig,
    blend: &BlendConfig,
    cfg: &TrainConfig,
    seeds: Option<[u64; NUM_EMOTIONS]>,
) -> Result<OneVsAll> {
    encoder.validate()?;
    blend.validate()?;
    cfg.validate()?;
    let seeds = seeds.unwrap_or_else(|| cfg.emotion_seeds());
    let runs: Result<Vec<BinaryRun>> = Emotion::ALL
        .par_iter()
        .map(|&e| {
            let tt: Vec<bool> = train_labels.iter().map(|l| l[e.index()]).collect();
            let vt: Vec<bool> = val_labels.iter().map(|l| l[e.index()]).collect();
            train_binary(
                e,
                BinarySet {
                    pairs: train_pairs,
                    targets: &tt,
                },
                BinarySet {
                    pairs: val_pairs,
                    targets: &vt,
                },
                encoder,
                blend,
                cfg,
                seeds[e.index()],
            )
        })
        .collect();
    Ok(OneVsAll {
        runs: runs?,
        blend: *blend,
        seeds,
    })
}
