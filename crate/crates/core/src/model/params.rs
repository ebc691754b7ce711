use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamSet, Tensor};

/// Standard deviation of the normal initializer.
pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: ParamId,
    pub ln1_bias: ParamId,
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub ln2_gain: ParamId,
    pub ln2_bias: ParamId,
    pub ff_w1: ParamId,
    pub ff_b1: ParamId,
    pub ff_w2: ParamId,
    pub ff_b2: ParamId,
}

/// Every trainable tensor of one encoder + classifier, with typed handles.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub set: ParamSet,
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub segment_offset: ParamId,
    pub layers: Vec<LayerParams>,
    pub final_ln_gain: ParamId,
    pub final_ln_bias: ParamId,
    pub pool_query: ParamId,
    pub polarity_pool_query: ParamId,
    pub classifier_weight: ParamId,
    pub classifier_bias: ParamId,
}

enum Init {
    Normal,
    Zeros,
    Ones,
}

struct Builder {
    set: ParamSet,
    rng: Xoshiro256PlusPlus,
    normal: Normal<f64>,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> ParamId {
        let t = match init {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::filled(shape, 1.0),
            Init::Normal => {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| self.normal.sample(&mut self.rng)).collect();
                Tensor::new(shape, data).expect("shape and data agree")
            }
        };
        self.set.insert(name, t)
    }
}

impl EncoderParams {
    /// Deterministic initialization: weights ~ N(0, 0.02²) drawn from
    /// xoshiro256++ seeded with `seed` (via SplitMix64), in declaration
    /// order; layer-norm gains 1, all biases 0.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (d, ff) = (config.d_model, config.d_ff);
        let mut b = Builder {
            set: ParamSet::new(),
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            normal: Normal::new(0.0, INIT_STD).expect("valid std"),
        };
        let token_embedding = b.add(
            "token_embedding".into(),
            vec![config.vocab_size, d],
            Init::Normal,
        );
        let position_embedding = b.add(
            "position_embedding".into(),
            vec![config.max_len, d],
            Init::Normal,
        );
        let segment_offset = b.add("segment_offset".into(), vec![d], Init::Normal);
        let layers = (0..config.n_layers)
            .map(|i| LayerParams {
                ln1_gain: b.add(format!("layer{i}.ln1.gain"), vec![d], Init::Ones),
                ln1_bias: b.add(format!("layer{i}.ln1.bias"), vec![d], Init::Zeros),
                wq: b.add(format!("layer{i}.attn.wq"), vec![d, d], Init::Normal),
                wk: b.add(format!("layer{i}.attn.wk"), vec![d, d], Init::Normal),
                wv: b.add(format!("layer{i}.attn.wv"), vec![d, d], Init::Normal),
                wo: b.add(format!("layer{i}.attn.wo"), vec![d, d], Init::Normal),
                ln2_gain: b.add(format!("layer{i}.ln2.gain"), vec![d], Init::Ones),
                ln2_bias: b.add(format!("layer{i}.ln2.bias"), vec![d], Init::Zeros),
                ff_w1: b.add(format!("layer{i}.ff.w1"), vec![d, ff], Init::Normal),
                ff_b1: b.add(format!("layer{i}.ff.b1"), vec![ff], Init::Zeros),
                ff_w2: b.add(format!("layer{i}.ff.w2"), vec![ff, d], Init::Normal),
                ff_b2: b.add(format!("layer{i}.ff.b2"), vec![d], Init::Zeros),
            })
            .collect();
        let final_ln_gain = b.add("final_ln.gain".into(), vec![d], Init::Ones);
        let final_ln_bias = b.add("final_ln.bias".into(), vec![d], Init::Zeros);
        let pool_query = b.add("pool.query".into(), vec![d, 1], Init::Normal);
        let polarity_pool_query = b.add("pool.polarity_query".into(), vec![d, 1], Init::Normal);
        let classifier_weight = b.add("classifier.weight".into(), vec![2 * d, 1], Init::Normal);
        let classifier_bias = b.add("classifier.bias".into(), vec![1], Init::Zeros);

        Ok(EncoderParams {
            config: config.clone(),
            set: b.set,
            token_embedding,
            position_embedding,
            segment_offset,
            layers,
            final_ln_gain,
            final_ln_bias,
            pool_query,
            polarity_pool_query,
            classifier_weight,
            classifier_bias,
        })
    }

    /// Rebinds a loaded parameter set (e.g. from a checkpoint) to the layout
    /// implied by `config`, checking every name and shape.
    pub fn from_set(config: &EncoderConfig, set: ParamSet) -> Result<Self> {
        let template = Self::init(config, 0)?;
        if set.len() != template.set.len() {
            return Err(Error::Compatibility(format!(
                "checkpoint has {} tensors, config implies {}",
                set.len(),
                template.set.len()
            )));
        }
        for ((name, t), (want_name, want)) in set.iter().zip(template.set.iter()) {
            if name != want_name || t.shape() != want.shape() {
                return Err(Error::Compatibility(format!(
                    "tensor `{name}` {:?} does not match expected `{want_name}` {:?}",
                    t.shape(),
                    want.shape()
                )));
            }
        }
        Ok(EncoderParams { set, ..template })
    }

    pub fn all_finite(&self) -> bool {
        self.set.all_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 50,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = EncoderParams::init(&cfg(), 7).unwrap();
        let b = EncoderParams::init(&cfg(), 7).unwrap();
        assert_eq!(a.set, b.set);
        let c = EncoderParams::init(&cfg(), 8).unwrap();
        assert_ne!(a.set, c.set);
    }

    #[test]
    fn layer_norm_and_bias_init() {
        let p = EncoderParams::init(&cfg(), 1).unwrap();
        assert!(p
            .set
            .get(p.layers[0].ln1_gain)
            .data()
            .iter()
            .all(|&v| v == 1.0));
        assert!(p
            .set
            .get(p.layers[1].ff_b1)
            .data()
            .iter()
            .all(|&v| v == 0.0));
        assert!(p
            .set
            .get(p.classifier_bias)
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn init_std_matches() {
        let big = EncoderConfig {
            vocab_size: 200,
            d_model: 64,
            ..Default::default()
        };
        let p = EncoderParams::init(&big, 3).unwrap();
        let data = p.set.get(p.token_embedding).data();
        assert!(data.len() >= 10_000);
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let std = (data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!((std - 0.02).abs() < 0.002, "std {std}");
    }

    #[test]
    fn from_set_checks_layout() {
        let p = EncoderParams::init(&cfg(), 1).unwrap();
        let back = EncoderParams::from_set(&cfg(), p.set.clone()).unwrap();
        assert_eq!(back, p);
        let other = EncoderConfig {
            vocab_size: 51,
            ..cfg()
        };
        assert!(matches!(
            EncoderParams::from_set(&other, p.set),
            Err(Error::Compatibility(_))
        ));
    }
}
