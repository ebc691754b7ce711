//! Preprocessing, word tokenization and vocabulary management.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;
pub const RESERVED_TOKENS: [&str; 3] = ["<pad>", "<unk>", "<cls>"];

pub const DEFAULT_MAX_LEN: usize = 64;
pub const DEFAULT_POLARITY_CAP: usize = 16;
pub const DEFAULT_MIN_FREQ: usize = 2;
pub const DEFAULT_MAX_VOCAB: usize = 8000;

/// Lowercases, drops C0 control characters other than `\n` and `\t`,
/// collapses whitespace runs to one space and trims.
pub fn preprocess(text: &str) -> String {
    let lowered = text.to_lowercase();
    let kept: String = lowered
        .chars()
        .filter(|&c| c >= ' ' || c == '\n' || c == '\t')
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_shortcode(s: &str) -> bool {
    let wrapped =
        (s.starts_with(':') && s.ends_with(':')) || (s.starts_with('{') && s.ends_with('}'));
    if s.len() < 3 || !wrapped {
        return false;
    }
    s[1..s.len() - 1]
        .chars()
        .all(|c| c.is_alphanumeric() || matches!(c, '-' | '_' | '+'))
}

/// Splits on whitespace and peels leading/trailing ASCII punctuation into
/// one-character tokens. Emoji shortcodes (`:name:`, `{name}`) stay whole.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut core = chunk;
        let mut trailing = Vec::new();
        loop {
            if core.is_empty() || is_shortcode(core) {
                break;
            }
            let first = core.chars().next().unwrap();
            if first.is_ascii_punctuation() {
                out.push(first.to_string());
                core = &core[1..];
                continue;
            }
            let last = core.chars().next_back().unwrap();
            if last.is_ascii_punctuation() {
                trailing.push(last.to_string());
                core = &core[..core.len() - 1];
                continue;
            }
            break;
        }
        if !core.is_empty() {
            out.push(core.to_string());
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Builds from training-split token lists. Tokens with count >= `min_freq`
    /// are ranked by descending count, ties broken lexicographically, and at
    /// most `max_size` non-reserved entries are kept.
    pub fn build(corpus: &[Vec<String>], min_freq: usize, max_size: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Config(
                "cannot build a vocabulary from an empty corpus".into(),
            ));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for tok in corpus.iter().flatten() {
            *counts.entry(tok.as_str()).or_default() += 1;
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq && !RESERVED_TOKENS.contains(t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);

        let tokens = RESERVED_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t.to_string()))
            .collect();
        Ok(Self::from_tokens(tokens))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(RESERVED_TOKENS[UNK]).to_string())
            .collect()
    }

    /// One token per line; the line number is the id.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let tokens = r.lines().collect::<std::io::Result<Vec<_>>>()?;
        for (i, want) in RESERVED_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(want) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected reserved token {want}"),
                });
            }
        }
        let vocab = Self::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::Parse {
                line: 0,
                message: "duplicate tokens in vocabulary file".into(),
            });
        }
        Ok(vocab)
    }

    /// Hex SHA-256 of the serialized vocabulary file.
    pub fn hash(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        Sha256::digest(&buf)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Primary and polarity id sequences for one utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedPair {
    /// `[CLS]` + token ids, padded with `PAD` to the configured length.
    pub primary_ids: Vec<usize>,
    pub primary_len: usize,
    pub polarity_ids: Vec<usize>,
    pub polarity_len: usize,
}

impl TokenizedPair {
    pub fn real_primary_ids(&self) -> &[usize] {
        &self.primary_ids[..self.primary_len]
    }
}

pub fn encode(
    tokens: &[String],
    vocab: &Vocabulary,
    polarity_words: &[String],
    max_len: usize,
) -> TokenizedPair {
    encode_with_cap(tokens, vocab, polarity_words, max_len, DEFAULT_POLARITY_CAP)
}

/// Polarity words are mapped to ids (OOV words become `UNK`), deduplicated by
/// id in first-occurrence order and capped at `polarity_cap`.
pub fn encode_with_cap(
    tokens: &[String],
    vocab: &Vocabulary,
    polarity_words: &[String],
    max_len: usize,
    polarity_cap: usize,
) -> TokenizedPair {
    let max_len = max_len.max(1);
    let mut primary_ids = Vec::with_capacity(max_len);
    primary_ids.push(CLS);
    primary_ids.extend(tokens.iter().take(max_len - 1).map(|t| vocab.id(t)));
    let primary_len = primary_ids.len();
    primary_ids.resize(max_len, PAD);

    let mut polarity_ids: Vec<usize> = Vec::new();
    for w in polarity_words {
        if polarity_ids.len() >= polarity_cap {
            break;
        }
        let id = vocab.id(w);
        if !polarity_ids.contains(&id) {
            polarity_ids.push(id);
        }
    }
    let polarity_len = polarity_ids.len();
    TokenizedPair {
        primary_ids,
        primary_len,
        polarity_ids,
        polarity_len,
    }
}
