use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::emotion::{Emotion, Labels, NUM_EMOTIONS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn record(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut c = Self::default();
        for (g, p) in pairs {
            c.record(g, p);
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    fn merged(self, other: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            tn: self.tn + other.tn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and their harmonic mean. Any 0/0 is taken as 0.
pub fn f1(counts: &ConfusionCounts) -> Prf {
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

/// Micro pools TP/FP/FN over every (utterance, emotion) decision; macro is
/// the unweighted mean of the six per-emotion F1 scores.
pub fn micro_macro(counts: &[ConfusionCounts; NUM_EMOTIONS]) -> (f64, f64) {
    let pooled = counts
        .iter()
        .fold(ConfusionCounts::default(), |a, &c| a.merged(c));
    let macro_f1 = counts.iter().map(|c| f1(c).f1).sum::<f64>() / NUM_EMOTIONS as f64;
    (f1(&pooled).f1, macro_f1)
}

pub fn confusion_by_emotion(
    gold: &[Labels],
    predicted: &[Labels],
) -> Result<[ConfusionCounts; NUM_EMOTIONS]> {
    if gold.len() != predicted.len() {
        return Err(Error::Input(format!(
            "{} gold rows vs {} predicted rows",
            gold.len(),
            predicted.len()
        )));
    }
    let mut counts = [ConfusionCounts::default(); NUM_EMOTIONS];
    for (g, p) in gold.iter().zip(predicted) {
        for (e, c) in counts.iter_mut().enumerate() {
            c.record(g[e], p[e]);
        }
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionScore {
    pub emotion: Emotion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset: String,
    pub mode: String,
    #[serde(default)]
    pub blend: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub vocab_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub per_emotion: Vec<EmotionScore>,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

impl EvalReport {
    pub fn from_counts(meta: ReportMeta, counts: &[ConfusionCounts; NUM_EMOTIONS]) -> Self {
        let per_emotion = Emotion::ALL
            .iter()
            .map(|&e| {
                let c = counts[e.index()];
                let s = f1(&c);
                EmotionScore {
                    emotion: e,
                    precision: s.precision,
                    recall: s.recall,
                    f1: s.f1,
                    counts: c,
                }
            })
            .collect();
        let (micro_f1, macro_f1) = micro_macro(counts);
        EvalReport {
            meta,
            per_emotion,
            micro_f1,
            macro_f1,
        }
    }

    pub fn from_predictions(
        meta: ReportMeta,
        gold: &[Labels],
        predicted: &[Labels],
    ) -> Result<Self> {
        Ok(Self::from_counts(
            meta,
            &confusion_by_emotion(gold, predicted)?,
        ))
    }

    pub fn emotion_f1(&self, e: Emotion) -> f64 {
        self.per_emotion[e.index()].f1
    }

    /// Six per-emotion F1 scores followed by micro and macro.
    pub fn f1_row(&self) -> [f64; NUM_EMOTIONS + 2] {
        let mut row = [0.0; NUM_EMOTIONS + 2];
        for (slot, s) in row.iter_mut().zip(&self.per_emotion) {
            *slot = s.f1;
        }
        row[NUM_EMOTIONS] = self.micro_f1;
        row[NUM_EMOTIONS + 1] = self.macro_f1;
        row
    }

    /// Plain-text table: one F1 row plus precision and recall rows.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let label = format!("{} / {}", self.meta.dataset, self.meta.mode);
        let _ = writeln!(out, "{}", table_header(label.len().max(10)));
        let width = label.len().max(10);
        let _ = writeln!(
            out,
            "{}",
            table_row(&label, width, &self.f1_row().map(Some))
        );
        let mut p = [None; NUM_EMOTIONS + 2];
        let mut r = [None; NUM_EMOTIONS + 2];
        for (i, s) in self.per_emotion.iter().enumerate() {
            p[i] = Some(s.precision);
            r[i] = Some(s.recall);
        }
        let _ = writeln!(out, "{}", table_row("  precision", width, &p));
        let _ = write!(out, "{}", table_row("  recall", width, &r));
        out
    }
}

pub const TABLE_COLUMNS: [&str; NUM_EMOTIONS + 2] = [
    "Anger", "Love", "Fear", "Joy", "Sadness", "Surprise", "Micro", "Macro",
];

pub(crate) fn table_header(width: usize) -> String {
    let mut s = format!("{:<width$}", "Model");
    for c in TABLE_COLUMNS {
        let _ = write!(s, " {c:>8}");
    }
    s
}

pub(crate) fn table_row(label: &str, width: usize, values: &[Option<f64>]) -> String {
    let mut s = format!("{label:<width$}");
    for v in values {
        match v {
            Some(v) => {
                let _ = write!(s, " {v:>8.3}");
            }
            None => s.push_str(&format!(" {:>8}", "")),
        }
    }
    s.trim_end().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_fixture() {
        let s = f1(&ConfusionCounts {
            tp: 3,
            fp: 1,
            fn_: 1,
            tn: 0,
        });
        assert_eq!((s.precision, s.recall, s.f1), (0.75, 0.75, 0.75));
    }

    #[test]
    fn zero_over_zero_is_zero() {
        let s = f1(&ConfusionCounts::default());
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn perfect_predictions() {
        let c = ConfusionCounts::from_pairs([(true, true), (false, false), (true, true)]);
        assert_eq!(f1(&c).f1, 1.0);
    }

    #[test]
    fn identical_classes_make_micro_equal_macro() {
        let c = ConfusionCounts {
            tp: 4,
            fp: 2,
            fn_: 3,
            tn: 11,
        };
        let (micro, macro_) = micro_macro(&[c; 6]);
        assert!((micro - f1(&c).f1).abs() < 1e-15);
        assert!((macro_ - f1(&c).f1).abs() < 1e-15);
    }

    #[test]
    fn macro_of_half_and_one() {
        let half = ConfusionCounts {
            tp: 1,
            fp: 1,
            fn_: 1,
            tn: 1,
        };
        let one = ConfusionCounts {
            tp: 2,
            fp: 0,
            fn_: 0,
            tn: 2,
        };
        assert_eq!(f1(&half).f1, 0.5);
        let mean = (f1(&half).f1 + f1(&one).f1) / 2.0;
        assert_eq!(mean, 0.75);
    }

    #[test]
    fn macro_ignores_support_but_micro_does_not() {
        let small = ConfusionCounts {
            tp: 1,
            fp: 1,
            fn_: 1,
            tn: 0,
        };
        let large = ConfusionCounts {
            tp: 10,
            fp: 10,
            fn_: 10,
            tn: 0,
        };
        let perfect = ConfusionCounts {
            tp: 5,
            fp: 0,
            fn_: 0,
            tn: 0,
        };
        let a = [small, perfect, perfect, perfect, perfect, perfect];
        let b = [large, perfect, perfect, perfect, perfect, perfect];
        let (micro_a, macro_a) = micro_macro(&a);
        let (micro_b, macro_b) = micro_macro(&b);
        assert_eq!(macro_a, macro_b);
        assert!(micro_b < micro_a);
    }

    #[test]
    fn report_table_has_all_columns() {
        let gold = vec![[true, false, false, false, false, false]; 3];
        let r = EvalReport::from_predictions(ReportMeta::default(), &gold, &gold).unwrap();
        let t = r.to_table();
        for c in TABLE_COLUMNS {
            assert!(t.contains(c));
        }
        assert_eq!(r.per_emotion[0].f1, 1.0);
        assert_eq!(r.per_emotion[1].f1, 0.0);
    }
}
