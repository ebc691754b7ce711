//! Unanimous-error extraction and human-annotated category reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::emotion::{Emotion, Labels, NUM_EMOTIONS};
use crate::error::{Error, Result};

/// One model's boolean predictions keyed by utterance id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelPredictions {
    pub name: String,
    pub labels: BTreeMap<String, Labels>,
}

impl ModelPredictions {
    pub fn new(name: impl Into<String>, rows: impl IntoIterator<Item = (String, Labels)>) -> Self {
        ModelPredictions {
            name: name.into(),
            labels: rows.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    FalsePositive,
    FalseNegative,
}

/// Closed error taxonomy for manual annotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    GeneralError,
    ImplicitSentimentPolarity,
    FigurativeLanguage,
    Pragmatics,
    Politeness,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::GeneralError,
        Category::ImplicitSentimentPolarity,
        Category::FigurativeLanguage,
        Category::Pragmatics,
        Category::Politeness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::GeneralError => "General Error",
            Category::ImplicitSentimentPolarity => "Implicit Sentiment Polarity",
            Category::FigurativeLanguage => "Figurative Language",
            Category::Pragmatics => "Pragmatics",
            Category::Politeness => "Politeness",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Category::GeneralError => "general-error",
            Category::ImplicitSentimentPolarity => "implicit-sentiment-polarity",
            Category::FigurativeLanguage => "figurative-language",
            Category::Pragmatics => "pragmatics",
            Category::Politeness => "politeness",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    /// Accepts the display name or its kebab-case form, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Category::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s) || c.slug().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown error category `{s}` (expected one of: {})",
                    Category::ALL.map(Category::name).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCase {
    /// `<utterance id>:<emotion key>`, the key used by annotation files.
    pub case_id: String,
    pub utterance_id: String,
    pub emotion: Emotion,
    pub gold: Labels,
    /// Each model's value for `emotion`, in model order. All equal by
    /// construction.
    pub predictions: Vec<bool>,
    pub direction: Direction,
    #[serde(default)]
    pub category: Option<Category>,
}

pub fn case_id(utterance_id: &str, emotion: Emotion) -> String {
    format!("{utterance_id}:{}", emotion.key())
}

fn check_coverage(gold: &BTreeMap<String, Labels>, models: &[ModelPredictions]) -> Result<()> {
    if models.is_empty() {
        return Err(Error::Input(
            "at least one prediction set is required".into(),
        ));
    }
    let ids: BTreeSet<&String> = gold.keys().collect();
    for m in models {
        let got: BTreeSet<&String> = m.labels.keys().collect();
        if got != ids {
            let missing = ids.difference(&got).count();
            let extra = got.difference(&ids).count();
            return Err(Error::Input(format!(
                "predictions `{}` do not cover the gold ids ({missing} missing, {extra} unknown)",
                m.name
            )));
        }
    }
    Ok(())
}

/// Every (utterance, emotion) where all models agree and the shared value
/// contradicts gold. Cases come out grouped per utterance (id order), then in
/// emotion order.
pub fn unanimous_errors(
    gold: &BTreeMap<String, Labels>,
    models: &[ModelPredictions],
) -> Result<Vec<ErrorCase>> {
    check_coverage(gold, models)?;
    let mut cases = Vec::new();
    for (id, g) in gold {
        for e in Emotion::ALL {
            let i = e.index();
            let preds: Vec<bool> = models.iter().map(|m| m.labels[id][i]).collect();
            let first = preds[0];
            if preds.iter().all(|&p| p == first) && first != g[i] {
                cases.push(ErrorCase {
                    case_id: case_id(id, e),
                    utterance_id: id.clone(),
                    emotion: e,
                    gold: *g,
                    predictions: preds,
                    direction: if first {
                        Direction::FalsePositive
                    } else {
                        Direction::FalseNegative
                    },
                    category: None,
                });
            }
        }
    }
    Ok(cases)
}

/// Cases grouped per utterance id.
pub fn group_by_utterance(cases: &[ErrorCase]) -> BTreeMap<&str, Vec<&ErrorCase>> {
    let mut out: BTreeMap<&str, Vec<&ErrorCase>> = BTreeMap::new();
    for c in cases {
        out.entry(c.utterance_id.as_str()).or_default().push(c);
    }
    out
}

/// Human-assigned categories keyed by case id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Annotations(pub BTreeMap<String, Category>);

impl Annotations {
    /// CSV with header `case_id,category`.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header != ["case_id", "category"] {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "expected header `case_id,category`, got `{}`",
                    header.join(",")
                ),
            });
        }
        let mut map = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 2 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let category: Category = record[1].parse()?;
            map.insert(record[0].trim().to_string(), category);
        }
        Ok(Annotations(map))
    }

    pub fn get(&self, case_id: &str) -> Option<Category> {
        self.0.get(case_id).copied()
    }

    /// Copies of `cases` with their `category` filled in where annotated.
    pub fn apply(&self, cases: &[ErrorCase]) -> Vec<ErrorCase> {
        cases
            .iter()
            .map(|c| ErrorCase {
                category: self.get(&c.case_id).or(c.category),
                ..c.clone()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: Category,
    pub count: usize,
    /// Percentage of annotated cases.
    pub percent_of_annotated: f64,
    pub by_emotion: [usize; NUM_EMOTIONS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub total: usize,
    pub annotated: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub cases_by_emotion: [usize; NUM_EMOTIONS],
    pub rows: Vec<CategoryRow>,
    pub unannotated: Vec<String>,
}

impl CategoryReport {
    pub fn row(&self, c: Category) -> &CategoryRow {
        &self.rows[Category::ALL
            .iter()
            .position(|&x| x == c)
            .expect("closed taxonomy")]
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} unanimous error cases ({} false positives, {} false negatives), {} annotated\n",
            self.total, self.false_positives, self.false_negatives, self.annotated
        );
        out.push_str(&format!("{:<28} {:>6} {:>8}", "Category", "Count", "Share"));
        for e in Emotion::ALL {
            out.push_str(&format!(" {:>8}", e.title()));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{:<28} {:>3}/{:<2} {:>7.1}%",
                r.category.name(),
                r.count,
                self.total,
                r.percent_of_annotated
            ));
            for (e, n) in Emotion::ALL.iter().zip(r.by_emotion) {
                out.push_str(&format!(
                    " {:>8}",
                    format!("{n}/{}", self.cases_by_emotion[e.index()])
                ));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "{:<28} {:>3}",
            "unannotated",
            self.unannotated.len()
        ));
        out
    }
}

/// Counts per category and per emotion. Categories come only from the
/// annotation sidecar; cases without an entry are listed as unannotated.
pub fn category_report(cases: &[ErrorCase], annotations: &Annotations) -> CategoryReport {
    let mut rows: Vec<CategoryRow> = Category::ALL
        .iter()
        .map(|&category| CategoryRow {
            category,
            count: 0,
            percent_of_annotated: 0.0,
            by_emotion: [0; NUM_EMOTIONS],
        })
        .collect();
    let mut unannotated = Vec::new();
    let mut cases_by_emotion = [0; NUM_EMOTIONS];
    let mut fp = 0;
    for c in cases {
        cases_by_emotion[c.emotion.index()] += 1;
        if c.direction == Direction::FalsePositive {
            fp += 1;
        }
        match annotations.get(&c.case_id).or(c.category) {
            Some(cat) => {
                let row = &mut rows[Category::ALL
                    .iter()
                    .position(|&x| x == cat)
                    .expect("closed taxonomy")];
                row.count += 1;
                row.by_emotion[c.emotion.index()] += 1;
            }
            None => unannotated.push(c.case_id.clone()),
        }
    }
    let annotated = cases.len() - unannotated.len();
    for r in &mut rows {
        r.percent_of_annotated = if annotated == 0 {
            0.0
        } else {
            r.count as f64 / annotated as f64 * 100.0
        };
    }
    CategoryReport {
        total: cases.len(),
        annotated,
        false_positives: fp,
        false_negatives: cases.len() - fp,
        cases_by_emotion,
        rows,
        unannotated,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResolution {
    pub category: Category,
    pub total: usize,
    pub resolved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionReport {
    pub total: usize,
    pub resolved: Vec<String>,
    pub persistent: Vec<String>,
    pub by_category: Vec<CategoryResolution>,
}

impl ResolutionReport {
    pub fn category(&self, c: Category) -> &CategoryResolution {
        &self.by_category[Category::ALL
            .iter()
            .position(|&x| x == c)
            .expect("closed taxonomy")]
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} of {} prior cases resolved, {} persistent\n",
            self.resolved.len(),
            self.total,
            self.persistent.len()
        );
        for r in &self.by_category {
            out.push_str(&format!(
                "{:<28} {:>3}/{:<3}\n",
                r.category.name(),
                r.resolved,
                r.total
            ));
        }
        out.trim_end().to_string()
    }
}

/// A prior case is resolved when at least one model in `after` now predicts
/// the gold value for its (utterance, emotion).
pub fn resolved_errors(
    before: &[ErrorCase],
    after: &[ModelPredictions],
    annotations: Option<&Annotations>,
) -> Result<ResolutionReport> {
    if after.is_empty() {
        return Err(Error::Input(
            "at least one prediction set is required".into(),
        ));
    }
    let mut resolved = Vec::new();
    let mut persistent = Vec::new();
    let mut by_category: Vec<CategoryResolution> = Category::ALL
        .iter()
        .map(|&category| CategoryResolution {
            category,
            total: 0,
            resolved: 0,
        })
        .collect();
    for c in before {
        let i = c.emotion.index();
        let mut fixed = false;
        for m in after {
            let p = m.labels.get(&c.utterance_id).ok_or_else(|| {
                Error::Input(format!(
                    "predictions `{}` lack utterance `{}`",
                    m.name, c.utterance_id
                ))
            })?;
            fixed |= p[i] == c.gold[i];
        }
        let cat = annotations.and_then(|a| a.get(&c.case_id)).or(c.category);
        if let Some(cat) = cat {
            let row = &mut by_category[Category::ALL
                .iter()
                .position(|&x| x == cat)
                .expect("closed taxonomy")];
            row.total += 1;
            row.resolved += usize::from(fixed);
        }
        if fixed {
            resolved.push(c.case_id.clone());
        } else {
            persistent.push(c.case_id.clone());
        }
    }
    Ok(ResolutionReport {
        total: before.len(),
        resolved,
        persistent,
        by_category,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: [bool; 6] = [false; 6];

    fn labels(on: &[usize]) -> Labels {
        let mut l = N;
        for &i in on {
            l[i] = true;
        }
        l
    }

    fn gold() -> BTreeMap<String, Labels> {
        [
            ("a", labels(&[0])),
            ("b", labels(&[])),
            ("c", labels(&[3, 4])),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    fn model(name: &str, rows: &[(&str, Labels)]) -> ModelPredictions {
        ModelPredictions::new(name, rows.iter().map(|(k, v)| (k.to_string(), *v)))
    }

    #[test]
    fn disagreement_emits_nothing() {
        let g = gold();
        let m1 = model(
            "m1",
            &[("a", labels(&[])), ("b", N), ("c", labels(&[3, 4]))],
        );
        let m2 = model(
            "m2",
            &[("a", labels(&[0])), ("b", N), ("c", labels(&[3, 4]))],
        );
        assert!(unanimous_errors(&g, &[m1, m2]).unwrap().is_empty());
    }

    #[test]
    fn shared_false_positive() {
        let g = gold();
        let m1 = model(
            "m1",
            &[
                ("a", labels(&[0])),
                ("b", labels(&[1])),
                ("c", labels(&[3, 4])),
            ],
        );
        let m2 = m1.clone();
        let cases = unanimous_errors(&g, &[m1, m2]).unwrap();
        assert_eq!(cases.len(), 1);
        assert_eq!(cases[0].case_id, "b:love");
        assert_eq!(cases[0].direction, Direction::FalsePositive);
    }

    #[test]
    fn single_model_lists_its_errors() {
        let g = gold();
        let m = model("only", &[("a", N), ("b", N), ("c", labels(&[3]))]);
        let cases = unanimous_errors(&g, &[m]).unwrap();
        let ids: Vec<_> = cases.iter().map(|c| c.case_id.as_str()).collect();
        assert_eq!(ids, ["a:anger", "c:sadness"]);
        assert!(cases
            .iter()
            .all(|c| c.direction == Direction::FalseNegative));
    }

    #[test]
    fn coverage_mismatch_is_input_error() {
        let g = gold();
        let m = model("m", &[("a", N)]);
        assert!(matches!(unanimous_errors(&g, &[m]), Err(Error::Input(_))));
    }

    #[test]
    fn annotations_parse_and_reject_unknown() {
        let ok = "case_id,category\na:anger,General Error\nc:sadness,implicit-sentiment-polarity\n";
        let a = Annotations::read(ok.as_bytes()).unwrap();
        assert_eq!(a.get("a:anger"), Some(Category::GeneralError));
        assert_eq!(
            a.get("c:sadness"),
            Some(Category::ImplicitSentimentPolarity)
        );
        let bad = "case_id,category\na:anger,Sarcasm\n";
        assert!(matches!(
            Annotations::read(bad.as_bytes()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn report_without_annotations() {
        let g = gold();
        let m = model("only", &[("a", N), ("b", N), ("c", labels(&[3]))]);
        let cases = unanimous_errors(&g, &[m]).unwrap();
        let r = category_report(&cases, &Annotations::default());
        assert_eq!(r.unannotated.len(), 2);
        assert_eq!(r.annotated, 0);
        assert!(r.rows.iter().all(|r| r.count == 0));
    }

    #[test]
    fn resolution_partitions_cases() {
        let g = gold();
        let m = model("only", &[("a", N), ("b", N), ("c", labels(&[3]))]);
        let cases = unanimous_errors(&g, std::slice::from_ref(&m)).unwrap();
        let same = resolved_errors(&cases, &[m], None).unwrap();
        assert!(same.resolved.is_empty());
        let better = model("new", &[("a", labels(&[0])), ("b", N), ("c", labels(&[3]))]);
        let r = resolved_errors(&cases, &[better], None).unwrap();
        assert_eq!(r.resolved, ["a:anger"]);
        assert_eq!(r.resolved.len() + r.persistent.len(), r.total);
    }
}
