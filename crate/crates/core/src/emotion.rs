use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub const NUM_EMOTIONS: usize = 6;

/// The six basic emotions, in the fixed column order used everywhere
/// (datasets, predictions, reports).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger,
    Love,
    Fear,
    Joy,
    Sadness,
    Surprise,
}

impl Emotion {
    pub const ALL: [Emotion; NUM_EMOTIONS] = [
        Emotion::Anger,
        Emotion::Love,
        Emotion::Fear,
        Emotion::Joy,
        Emotion::Sadness,
        Emotion::Surprise,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn key(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Love => "love",
            Emotion::Fear => "fear",
            Emotion::Joy => "joy",
            Emotion::Sadness => "sadness",
            Emotion::Surprise => "surprise",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Emotion::Anger => "Anger",
            Emotion::Love => "Love",
            Emotion::Fear => "Fear",
            Emotion::Joy => "Joy",
            Emotion::Sadness => "Sadness",
            Emotion::Surprise => "Surprise",
        }
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.title())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Emotion::ALL
            .into_iter()
            .find(|e| e.key().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Lookup {
                key: s.to_string(),
                available: Emotion::ALL.iter().map(|e| e.key().to_string()).collect(),
            })
    }
}

/// Multi-hot label vector; all-false means neutral.
pub type Labels = [bool; NUM_EMOTIONS];
