//! SentiWordNet-format lexicon parsing, a small rule-based POS tagger, and
//! per-utterance polarity word extraction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{preprocess, tokenize};

/// Default minimum of `max(pos_score, neg_score)` for a word to count as a
/// polarity word.
pub const DEFAULT_TAU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adjective,
    #[serde(rename = "r")]
    Adverb,
}

impl Pos {
    /// SentiWordNet POS letter; satellite adjectives (`s`) fold into `a`.
    pub fn from_letter(s: &str) -> Option<Pos> {
        match s {
            "n" => Some(Pos::Noun),
            "v" => Some(Pos::Verb),
            "a" | "s" => Some(Pos::Adjective),
            "r" => Some(Pos::Adverb),
            _ => None,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Pos::Noun => 'n',
            Pos::Verb => 'v',
            Pos::Adjective => 'a',
            Pos::Adverb => 'r',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PosTag {
    #[serde(rename = "n")]
    Noun,
    #[serde(rename = "v")]
    Verb,
    #[serde(rename = "a")]
    Adjective,
    #[serde(rename = "r")]
    Adverb,
    #[serde(rename = "other")]
    Other,
}

impl PosTag {
    pub fn pos(self) -> Option<Pos> {
        match self {
            PosTag::Noun => Some(Pos::Noun),
            PosTag::Verb => Some(Pos::Verb),
            PosTag::Adjective => Some(Pos::Adjective),
            PosTag::Adverb => Some(Pos::Adverb),
            PosTag::Other => None,
        }
    }
}

impl From<Pos> for PosTag {
    fn from(p: Pos) -> Self {
        match p {
            Pos::Noun => PosTag::Noun,
            Pos::Verb => PosTag::Verb,
            Pos::Adjective => PosTag::Adjective,
            Pos::Adverb => PosTag::Adverb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub word: String,
    pub pos: Pos,
    pub pos_score: f64,
    pub neg_score: f64,
}

#[derive(Debug, Clone, Default)]
struct Accum {
    pos: f64,
    neg: f64,
    weight: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PolarityLexicon {
    entries: HashMap<(String, Pos), LexiconEntry>,
    by_word: HashMap<String, (f64, f64)>,
    pos_by_word: HashMap<String, Vec<Pos>>,
}

impl PolarityLexicon {
    /// Parses the SentiWordNet 3.0 TSV layout:
    /// `POS \t ID \t PosScore \t NegScore \t SynsetTerms \t Gloss`.
    ///
    /// Each `word#rank` term contributes its synset's scores with weight
    /// `1/rank`; the per-(word, POS) score is the weighted mean.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut acc: BTreeMap<(String, Pos), Accum> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = trimmed.splitn(6, '\t').collect();
            if cols.iter().all(|c| c.trim().is_empty()) {
                continue;
            }
            if cols.len() != 6 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 6 tab-separated columns, found {}", cols.len()),
                });
            }
            let pos = Pos::from_letter(cols[0].trim()).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("unknown POS `{}`", cols[0]),
            })?;
            let score = |s: &str, what: &str| -> Result<f64> {
                let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("non-numeric {what} `{s}`"),
                })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("{what} {v} outside [0, 1]"),
                    });
                }
                Ok(v)
            };
            let ps = score(cols[2], "PosScore")?;
            let ns = score(cols[3], "NegScore")?;
            for term in cols[4].split_whitespace() {
                let (word, rank) = match term.rsplit_once('#') {
                    Some((w, r)) => (w, r),
                    None => (term, "1"),
                };
                let rank: u32 = rank.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad sense rank in `{term}`"),
                })?;
                let w = 1.0 / rank.max(1) as f64;
                let a = acc.entry((word.to_lowercase(), pos)).or_default();
                a.pos += w * ps;
                a.neg += w * ns;
                a.weight += w;
            }
        }
        Ok(Self::from_accumulated(acc))
    }

    fn from_accumulated(acc: BTreeMap<(String, Pos), Accum>) -> Self {
        let entries: Vec<LexiconEntry> = acc
            .into_iter()
            .map(|((word, pos), a)| LexiconEntry {
                word,
                pos,
                pos_score: a.pos / a.weight,
                neg_score: a.neg / a.weight,
            })
            .collect();
        Self::from_entries(entries)
    }

    /// Builds directly from already-aggregated entries.
    pub fn from_entries(entries: impl IntoIterator<Item = LexiconEntry>) -> Self {
        let mut lex = PolarityLexicon::default();
        let mut sums: HashMap<String, (f64, f64, usize)> = HashMap::new();
        for e in entries {
            let s = sums.entry(e.word.clone()).or_default();
            s.0 += e.pos_score;
            s.1 += e.neg_score;
            s.2 += 1;
            let poses = lex.pos_by_word.entry(e.word.clone()).or_default();
            if !poses.contains(&e.pos) {
                poses.push(e.pos);
            }
            lex.entries.insert((e.word.clone(), e.pos), e);
        }
        lex.by_word = sums
            .into_iter()
            .map(|(w, (p, n, c))| (w, (p / c as f64, n / c as f64)))
            .collect();
        lex
    }

    /// Number of (word, POS) entries.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &LexiconEntry> {
        self.entries.values()
    }

    pub fn get(&self, word: &str, pos: Pos) -> Option<&LexiconEntry> {
        self.entries.get(&(word.to_string(), pos))
    }

    /// `(pos_score, neg_score)` for `(word, pos)`, falling back to the
    /// word-level average over all of the word's POS entries.
    pub fn lookup(&self, word: &str, pos: Pos) -> Option<(f64, f64)> {
        self.get(word, pos)
            .map(|e| (e.pos_score, e.neg_score))
            .or_else(|| self.by_word.get(word).copied())
    }

    pub fn has_pos(&self, word: &str, pos: Pos) -> bool {
        self.entries.contains_key(&(word.to_string(), pos))
    }

    /// The word's POS if it appears under exactly one.
    pub fn unique_pos(&self, word: &str) -> Option<Pos> {
        match self.pos_by_word.get(word).map(Vec::as_slice) {
            Some([p]) => Some(*p),
            _ => None,
        }
    }
}

fn stoplist() -> &'static HashSet<&'static str> {
    static STOP: OnceLock<HashSet<&'static str>> = OnceLock::new();
    STOP.get_or_init(|| {
        [
            "a", "an", "the", "this", "that", "these", "those", "i", "me", "my", "mine", "you",
            "your", "yours", "he", "him", "his", "she", "her", "hers", "it", "its", "we", "us",
            "our", "ours", "they", "them", "their", "theirs", "who", "whom", "whose", "which",
            "what", "and", "or", "but", "nor", "so", "yet", "if", "then", "than", "because", "as",
            "of", "in", "on", "at", "by", "for", "with", "about", "against", "between", "into",
            "through", "during", "before", "after", "above", "below", "to", "from", "up", "down",
            "out", "off", "over", "under", "is", "am", "are", "was", "were", "be", "been", "being",
            "have", "has", "had", "do", "does", "did", "will", "would", "shall", "should", "can",
            "could", "may", "might", "must", "not", "no", "there", "here", "when", "where", "why",
            "how", "all", "any", "both", "each", "some", "such", "own", "same", "too", "very",
            "just", "i'm", "it's", "don't", "didn't", "doesn't", "isn't", "can't", "won't",
        ]
        .into_iter()
        .collect()
    })
}

fn ed_stems(w: &str) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(s) = w.strip_suffix("ied") {
        out.push(format!("{s}y"));
    }
    if let Some(s) = w.strip_suffix("ed") {
        out.push(s.to_string());
        let b = s.as_bytes();
        if b.len() >= 2 && b[b.len() - 1] == b[b.len() - 2] {
            out.push(s[..s.len() - 1].to_string());
        }
    }
    if let Some(s) = w.strip_suffix('d') {
        out.push(s.to_string());
    }
    out
}

fn ing_stems(w: &str) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(s) = w.strip_suffix("ing") {
        out.push(s.to_string());
        out.push(format!("{s}e"));
        let b = s.as_bytes();
        if b.len() >= 2 && b[b.len() - 1] == b[b.len() - 2] {
            out.push(s[..s.len() - 1].to_string());
        }
    }
    out
}

fn tag_word(word: &str, lexicon: &PolarityLexicon) -> PosTag {
    if stoplist().contains(word) {
        return PosTag::Other;
    }
    let n = word.chars().count();
    if n >= 5 && word.ends_with("ly") {
        return PosTag::Adverb;
    }
    if n >= 5 && (word.ends_with("ed") || word.ends_with("ing")) {
        let stems = if word.ends_with("ing") {
            ing_stems(word)
        } else {
            ed_stems(word)
        };
        if stems
            .iter()
            .any(|s| s.len() >= 2 && lexicon.has_pos(s, Pos::Verb))
        {
            return PosTag::Verb;
        }
    }
    for suffix in ["ous", "ful", "ive", "able", "al"] {
        if n >= suffix.len() + 3 && word.ends_with(suffix) {
            return PosTag::Adjective;
        }
    }
    if let Some(p) = lexicon.unique_pos(word) {
        return p.into();
    }
    PosTag::Noun
}

/// Rule tagger: closed-class stoplist, then suffix rules (`-ly`; `-ed`/`-ing`
/// over a known verb stem; `-ous/-ful/-ive/-able/-al`), then a unique lexicon
/// POS, else noun.
pub fn pos_tag(tokens: &[String], lexicon: &PolarityLexicon) -> Vec<PosTag> {
    tokens.iter().map(|t| tag_word(t, lexicon)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Pos,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityWord {
    pub word: String,
    pub sign: Sign,
    /// `max(pos_score, neg_score)`.
    pub score: f64,
}

/// Tokens whose looked-up `max(pos, neg)` reaches `tau`, deduplicated in
/// first-occurrence order.
pub fn extract_polarity_words(
    tokens: &[String],
    tags: &[PosTag],
    lexicon: &PolarityLexicon,
    tau: f64,
) -> Vec<PolarityWord> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (tok, tag) in tokens.iter().zip(tags) {
        let Some(pos) = tag.pos() else { continue };
        let Some((ps, ns)) = lexicon.lookup(tok, pos) else {
            continue;
        };
        let score = ps.max(ns);
        if score >= tau && seen.insert(tok.as_str()) {
            out.push(PolarityWord {
                word: tok.clone(),
                sign: if ps >= ns { Sign::Pos } else { Sign::Neg },
                score,
            });
        }
    }
    out
}

/// Tags and extracts in one step from already-tokenized text.
pub fn polarity_words_for_tokens(
    tokens: &[String],
    lexicon: &PolarityLexicon,
    tau: f64,
) -> Vec<PolarityWord> {
    let tags = pos_tag(tokens, lexicon);
    extract_polarity_words(tokens, &tags, lexicon, tau)
}

/// Preprocesses and tokenizes raw text, then extracts.
pub fn polarity_words_for_text(
    text: &str,
    lexicon: &PolarityLexicon,
    tau: f64,
) -> Vec<PolarityWord> {
    polarity_words_for_tokens(&tokenize(&preprocess(text)), lexicon, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolarityStats {
    pub utterances: usize,
    pub mean_words: f64,
    /// Fraction of utterances with at least one polarity word.
    pub coverage: f64,
}

impl PolarityStats {
    pub fn from_lists(lists: &[Vec<PolarityWord>]) -> Self {
        if lists.is_empty() {
            return Self::default();
        }
        let n = lists.len() as f64;
        PolarityStats {
            utterances: lists.len(),
            mean_words: lists.iter().map(Vec::len).sum::<usize>() as f64 / n,
            coverage: lists.iter().filter(|l| !l.is_empty()).count() as f64 / n,
        }
    }
}

pub fn polarity_stats(
    corpus: &[Vec<String>],
    lexicon: &PolarityLexicon,
    tau: f64,
) -> PolarityStats {
    let lists: Vec<_> = corpus
        .iter()
        .map(|toks| polarity_words_for_tokens(toks, lexicon, tau))
        .collect();
    PolarityStats::from_lists(&lists)
}

/// One line of the extraction JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityRecord {
    pub id: String,
    pub polarity_words: Vec<PolarityWord>,
}
