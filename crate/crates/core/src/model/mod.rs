//! Toy transformer encoder with baseline and polarity-blended variants.

mod config;
mod encoder;
mod params;

pub use config::{BlendConfig, BlendMode, EncoderConfig};
pub use encoder::{
    attention_rows, blend_attention_row, blend_pool, classify, decide, encode_polarity,
    encode_primary, forward, logit, sigmoid, AttentionBlocks, Dropout, ForwardOptions, KeyBlend,
    ModelOutput, PrimaryStates, DECISION_THRESHOLD, LAYER_NORM_EPS, MASK_SCORE,
};
pub use params::{EncoderParams, LayerParams, INIT_STD};
