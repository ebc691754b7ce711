//! Emotion classification workbench: a from-scratch transformer encoder with
//! polarity-blended attention, trained one-vs-all over six emotions.

pub mod emotion;
pub mod error;
pub mod eval;
pub mod harness;
pub mod lexicon;
pub mod model;
pub mod synthetic;
pub mod tensor;
pub mod text;

pub use emotion::{Emotion, Labels, NUM_EMOTIONS};
pub use error::{Error, Result};
