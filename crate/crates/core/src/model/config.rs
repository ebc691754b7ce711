use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_len: 64,
            vocab_size: 3,
            dropout_rate: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_model", self.d_model),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} must be in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlendMode {
    /// Baseline encoder, polarity stream ignored.
    None,
    /// Separate attention pooling over primary and polarity states, each
    /// pooled vector scaled by its weight, then concatenated.
    PooledConcat,
    /// Final-layer keys/values are the primary states followed by the
    /// polarity states, with each block softmaxed separately and scaled.
    AttentionKeys,
}

impl BlendMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BlendMode::None => "none",
            BlendMode::PooledConcat => "pooled-concat",
            BlendMode::AttentionKeys => "attention-keys",
        }
    }
}

impl fmt::Display for BlendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "baseline" => Ok(BlendMode::None),
            "pooled-concat" => Ok(BlendMode::PooledConcat),
            "attention-keys" => Ok(BlendMode::AttentionKeys),
            other => Err(Error::Config(format!(
                "unknown blend mode `{other}` (expected none, pooled-concat or attention-keys)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlendConfig {
    pub mode: BlendMode,
    pub w_primary: f64,
    pub w_polarity: f64,
}

impl Default for BlendConfig {
    fn default() -> Self {
        BlendConfig {
            mode: BlendMode::PooledConcat,
            w_primary: 0.75,
            w_polarity: 0.25,
        }
    }
}

impl BlendConfig {
    pub fn baseline() -> Self {
        BlendConfig {
            mode: BlendMode::None,
            ..Default::default()
        }
    }

    pub fn with_mode(mode: BlendMode) -> Self {
        BlendConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |w: f64| (0.0..=1.0).contains(&w);
        if !in_unit(self.w_primary) || !in_unit(self.w_polarity) {
            return Err(Error::Config(format!(
                "blend weights must lie in [0, 1], got {} / {}",
                self.w_primary, self.w_polarity
            )));
        }
        if (self.w_primary + self.w_polarity - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "blend weights must sum to 1, got {} + {}",
                self.w_primary, self.w_polarity
            )));
        }
        Ok(())
    }

    pub fn uses_polarity(&self) -> bool {
        self.mode != BlendMode::None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        EncoderConfig::default().validate().unwrap();
        BlendConfig::default().validate().unwrap();
        assert_eq!(BlendConfig::default().w_primary, 0.75);
        assert_eq!(BlendConfig::default().w_polarity, 0.25);
    }

    #[test]
    fn heads_must_divide_width() {
        let cfg = EncoderConfig {
            n_heads: 3,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn blend_weights_checked() {
        let bad = BlendConfig {
            w_primary: 0.8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = BlendConfig {
            w_primary: 1.5,
            w_polarity: -0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unknown_mode_is_config_error() {
        assert!(matches!(
            "sideways".parse::<BlendMode>(),
            Err(Error::Config(_))
        ));
        assert_eq!(
            "attention-keys".parse::<BlendMode>().unwrap(),
            BlendMode::AttentionKeys
        );
        assert_eq!(
            serde_json::to_string(&BlendMode::PooledConcat).unwrap(),
            "\"pooled-concat\""
        );
    }
}
