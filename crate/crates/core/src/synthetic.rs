//! Generated corpora with known structure, a small lexicon fixture, and
//! count-matching stand-ins for the published datasets.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::emotion::{Labels, NUM_EMOTIONS};
use crate::harness::{DatasetManifest, Utterance};
use crate::lexicon::PolarityLexicon;

/// Lexicon in SentiWordNet layout covering the cue words below.
pub const FIXTURE_LEXICON: &str = include_str!("../resources/fixture_lexicon.tsv");

pub fn fixture_lexicon() -> PolarityLexicon {
    PolarityLexicon::parse(FIXTURE_LEXICON.as_bytes()).expect("fixture lexicon parses")
}

/// One planted cue per emotion, in emotion order. Each scores ≥ 0.5 in the
/// fixture lexicon.
pub const CUE_WORDS: [&str; NUM_EMOTIONS] = [
    "furious",
    "adore",
    "terrified",
    "delighted",
    "heartbroken",
    "astonished",
];

/// Neutral filler, none of it in the fixture lexicon.
pub const FILLER_WORDS: [&str; 48] = [
    "function", "module", "branch", "issue", "patch", "release", "version", "config", "server",
    "client", "docs", "readme", "review", "pipeline", "deploy", "cache", "query", "schema",
    "index", "thread", "socket", "buffer", "parser", "compiler", "runtime", "package", "library",
    "script", "update", "change", "line", "file", "error", "output", "input", "request",
    "response", "method", "class", "field", "type", "value", "option", "flag", "table", "column",
    "row", "loop",
];

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub size: usize,
    pub neutral_frac: f64,
    /// Share of emotional utterances carrying a second emotion.
    pub two_label_frac: f64,
    /// Inclusive range of filler tokens per utterance.
    pub filler: (usize, usize),
    pub seed: u64,
}

impl CorpusSpec {
    /// 600 utterances, 20% neutral, short texts.
    pub fn separable(seed: u64) -> Self {
        CorpusSpec {
            size: 600,
            neutral_frac: 0.2,
            two_label_frac: 0.15,
            filler: (3, 8),
            seed,
        }
    }

    /// Same label structure with long filler runs, so the cue is a small
    /// fraction of the text and often sits past a short `max_len`.
    pub fn diluted(seed: u64) -> Self {
        CorpusSpec {
            size: 600,
            neutral_frac: 0.2,
            two_label_frac: 0.15,
            filler: (24, 48),
            seed,
        }
    }
}

/// Utterances whose labels are exactly the set of cue words they contain.
/// Neutral utterances hold filler only; emotional ones place each cue at a
/// random position.
pub fn cue_corpus(spec: &CorpusSpec) -> Vec<Utterance> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
    let n_neutral = (spec.size as f64 * spec.neutral_frac).round() as usize;
    let mut is_neutral: Vec<bool> = (0..spec.size).map(|i| i < n_neutral).collect();
    is_neutral.shuffle(&mut rng);
    is_neutral
        .into_iter()
        .enumerate()
        .map(|(i, neutral)| {
            let mut labels = [false; NUM_EMOTIONS];
            if !neutral {
                labels[i % NUM_EMOTIONS] = true;
                if rng.random::<f64>() < spec.two_label_frac {
                    let other =
                        (i % NUM_EMOTIONS + rng.random_range(1..NUM_EMOTIONS)) % NUM_EMOTIONS;
                    labels[other] = true;
                }
            }
            let len = rng.random_range(spec.filler.0..=spec.filler.1);
            let mut words: Vec<&str> = (0..len)
                .map(|_| *FILLER_WORDS.choose(&mut rng).expect("non-empty"))
                .collect();
            for (e, &on) in labels.iter().enumerate() {
                if on {
                    let at = rng.random_range(0..=words.len());
                    words.insert(at, CUE_WORDS[e]);
                }
            }
            Utterance::new(format!("syn-{i:04}"), words.join(" "), labels)
        })
        .collect()
}

pub fn separable_corpus(seed: u64) -> Vec<Utterance> {
    cue_corpus(&CorpusSpec::separable(seed))
}

pub fn diluted_corpus(seed: u64) -> Vec<Utterance> {
    cue_corpus(&CorpusSpec::diluted(seed))
}

/// Random utterances whose total and per-emotion counts equal the manifest.
pub fn manifest_standin(manifest: &DatasetManifest, seed: u64) -> Vec<Utterance> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let n = manifest.expected_total;
    let mut labels: Vec<Labels> = vec![[false; NUM_EMOTIONS]; n];
    let mut idx: Vec<usize> = (0..n).collect();
    for e in 0..NUM_EMOTIONS {
        idx.shuffle(&mut rng);
        for &i in &idx[..manifest.expected_counts[e].min(n)] {
            labels[i][e] = true;
        }
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let len = rng.random_range(3..12);
            let text: Vec<&str> = (0..len)
                .map(|_| *FILLER_WORDS.choose(&mut rng).expect("non-empty"))
                .collect();
            Utterance::new(format!("{}-{i:05}", manifest.name), text.join(" "), l)
        })
        .collect()
}

/// Same texts with label vectors permuted across utterances.
pub fn shuffle_labels(data: &[Utterance], seed: u64) -> Vec<Utterance> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut labels: Vec<Labels> = data.iter().map(|u| u.labels).collect();
    labels.shuffle(&mut rng);
    data.iter()
        .zip(labels)
        .map(|(u, l)| Utterance::new(u.id.clone(), u.text.clone(), l))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::label_counts;
    use crate::lexicon::{polarity_words_for_text, DEFAULT_TAU};

    #[test]
    fn separable_shape() {
        let data = separable_corpus(1);
        assert_eq!(data.len(), 600);
        assert_eq!(data.iter().filter(|u| u.is_neutral()).count(), 120);
        for u in &data {
            for (e, cue) in CUE_WORDS.iter().enumerate() {
                assert_eq!(
                    u.text.split(' ').any(|w| w == *cue),
                    u.labels[e],
                    "{}",
                    u.text
                );
            }
        }
        assert_eq!(data, separable_corpus(1));
    }

    #[test]
    fn cues_clear_tau_and_fillers_do_not() {
        let lex = fixture_lexicon();
        for cue in CUE_WORDS {
            let words = polarity_words_for_text(cue, &lex, DEFAULT_TAU);
            assert_eq!(words.len(), 1, "{cue}");
            assert!(words[0].score >= 0.5);
        }
        let filler = FILLER_WORDS.join(" ");
        assert!(polarity_words_for_text(&filler, &lex, DEFAULT_TAU).is_empty());
    }

    #[test]
    fn standin_matches_manifest() {
        for m in [DatasetManifest::github(), DatasetManifest::stackoverflow()] {
            let data = manifest_standin(&m, 4);
            m.validate(&data).unwrap();
            assert_eq!(label_counts(&data), m.expected_counts);
        }
    }

    #[test]
    fn shuffled_labels_keep_counts() {
        let data = separable_corpus(2);
        let s = shuffle_labels(&data, 3);
        assert_eq!(label_counts(&data), label_counts(&s));
        assert_ne!(data, s);
    }
}
