//! Published full-scale F1 scores, bundled as JSON, and delta tables against
//! them.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{table_header, table_row, EvalReport};
use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::error::{Error, Result};

const BUNDLED: &str = include_str!("../../resources/reference_tables.json");

pub const COMPARISON_LABEL: &str =
    "desk-scale model vs. published full-scale result; not a reproduction claim";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionF1 {
    pub anger: f64,
    pub love: f64,
    pub fear: f64,
    pub joy: f64,
    pub sadness: f64,
    pub surprise: f64,
}

impl EmotionF1 {
    pub fn get(&self, e: Emotion) -> f64 {
        match e {
            Emotion::Anger => self.anger,
            Emotion::Love => self.love,
            Emotion::Fear => self.fear,
            Emotion::Joy => self.joy,
            Emotion::Sadness => self.sadness,
            Emotion::Surprise => self.surprise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub key: String,
    pub model: String,
    pub dataset: String,
    pub variant: String,
    pub f1: EmotionF1,
    pub micro: f64,
    #[serde(rename = "macro")]
    pub macro_: f64,
    pub citation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ReferenceRow {
    pub fn values(&self) -> [f64; NUM_EMOTIONS + 2] {
        let mut v = [0.0; NUM_EMOTIONS + 2];
        for e in Emotion::ALL {
            v[e.index()] = self.f1.get(e);
        }
        v[NUM_EMOTIONS] = self.micro;
        v[NUM_EMOTIONS + 1] = self.macro_;
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub version: u32,
    #[serde(default)]
    pub description: String,
    pub rows: Vec<ReferenceRow>,
}

impl ReferenceTable {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled reference table is valid JSON")
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let t: ReferenceTable = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        Ok(t)
    }

    pub fn keys(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.key.clone()).collect()
    }

    pub fn get(&self, key: &str) -> Result<&ReferenceRow> {
        self.rows
            .iter()
            .find(|r| r.key == key)
            .ok_or_else(|| Error::Lookup {
                key: key.to_string(),
                available: self.keys(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    pub metric: String,
    pub ours: f64,
    pub reference: f64,
    /// `(ours − reference) / reference · 100`; `None` when the reference is 0.
    pub delta_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub ours_name: String,
    pub reference: ReferenceRow,
    pub cells: Vec<DeltaCell>,
}

pub fn format_delta(pct: Option<f64>) -> String {
    match pct {
        Some(p) => format!("{p:+.2}%"),
        None => "n/a".into(),
    }
}

impl Comparison {
    pub fn to_table(&self) -> String {
        let label_width = self
            .ours_name
            .len()
            .max(self.reference.model.len() + 12)
            .max(12);
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.label);
        let _ = writeln!(out, "{}", table_header(label_width));
        let ours: Vec<_> = self.cells.iter().map(|c| Some(c.ours)).collect();
        let refs: Vec<_> = self.cells.iter().map(|c| Some(c.reference)).collect();
        let _ = writeln!(out, "{}", table_row(&self.ours_name, label_width, &ours));
        let ref_label = format!("{} (published)", self.reference.model);
        let _ = writeln!(out, "{}", table_row(&ref_label, label_width, &refs));
        let mut s = format!(
            "{:<label_width$}",
            format!("{} (+/-)", self.reference.model)
        );
        for c in &self.cells {
            let _ = write!(s, " {:>8}", format_delta(c.delta_pct));
        }
        out.push_str(&s);
        out
    }
}

pub fn compare_to_reference(
    report: &EvalReport,
    table: &ReferenceTable,
    key: &str,
) -> Result<Comparison> {
    let reference = table.get(key)?.clone();
    let metrics = Emotion::ALL
        .iter()
        .map(|e| e.title().to_string())
        .chain(["Micro".to_string(), "Macro".to_string()]);
    let cells = metrics
        .zip(report.f1_row())
        .zip(reference.values())
        .map(|((metric, ours), r)| DeltaCell {
            metric,
            ours,
            reference: r,
            delta_pct: (r != 0.0).then(|| (ours - r) / r * 100.0),
        })
        .collect();
    let ours_name = if report.meta.mode.is_empty() {
        "ours".to_string()
    } else {
        format!("ours ({})", report.meta.mode)
    };
    Ok(Comparison {
        label: COMPARISON_LABEL.to_string(),
        ours_name,
        reference,
        cells,
    })
}
