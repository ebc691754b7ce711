use serde::{Deserialize, Serialize};

use super::Utterance;
use crate::error::Result;
use crate::lexicon::{polarity_words_for_tokens, PolarityLexicon, PolarityWord, DEFAULT_TAU};
use crate::text::{
    encode_with_cap, preprocess, tokenize, TokenizedPair, Vocabulary, DEFAULT_MAX_LEN,
    DEFAULT_MAX_VOCAB, DEFAULT_MIN_FREQ, DEFAULT_POLARITY_CAP,
};

/// Text pipeline settings shared by vocabulary building and encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextConfig {
    pub max_len: usize,
    pub min_freq: usize,
    pub max_vocab: usize,
    pub polarity_cap: usize,
    pub tau: f64,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            max_len: DEFAULT_MAX_LEN,
            min_freq: DEFAULT_MIN_FREQ,
            max_vocab: DEFAULT_MAX_VOCAB,
            polarity_cap: DEFAULT_POLARITY_CAP,
            tau: DEFAULT_TAU,
        }
    }
}

pub fn utterance_tokens(u: &Utterance) -> Vec<String> {
    tokenize(&preprocess(&u.text))
}

/// Vocabulary from the training utterances only.
pub fn build_vocab(train: &[Utterance], cfg: &TextConfig) -> Result<Vocabulary> {
    let corpus: Vec<Vec<String>> = train.iter().map(utterance_tokens).collect();
    Vocabulary::build(&corpus, cfg.min_freq, cfg.max_vocab)
}

/// Turns utterances into model inputs. Without a lexicon the polarity list is
/// always empty.
pub struct Featurizer<'a> {
    pub vocab: &'a Vocabulary,
    pub lexicon: Option<&'a PolarityLexicon>,
    pub text: &'a TextConfig,
}

impl Featurizer<'_> {
    pub fn polarity_words(&self, tokens: &[String]) -> Vec<PolarityWord> {
        match self.lexicon {
            Some(lex) => polarity_words_for_tokens(tokens, lex, self.text.tau),
            None => Vec::new(),
        }
    }

    pub fn pair(&self, u: &Utterance) -> TokenizedPair {
        let tokens = utterance_tokens(u);
        let words: Vec<String> = self
            .polarity_words(&tokens)
            .into_iter()
            .map(|w| w.word)
            .collect();
        encode_with_cap(
            &tokens,
            self.vocab,
            &words,
            self.text.max_len,
            self.text.polarity_cap,
        )
    }

    pub fn pairs(&self, data: &[Utterance]) -> Vec<TokenizedPair> {
        data.iter().map(|u| self.pair(u)).collect()
    }
}
