//! Dataset files (CSV or JSONL) and the per-emotion count manifests used to
//! validate them.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::emotion::{Emotion, Labels, NUM_EMOTIONS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub labels: Labels,
}

impl Utterance {
    pub fn new(id: impl Into<String>, text: impl Into<String>, labels: Labels) -> Self {
        Utterance {
            id: id.into(),
            text: text.into(),
            labels,
        }
    }

    pub fn is_neutral(&self) -> bool {
        self.labels.iter().all(|&l| !l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    /// `.jsonl` / `.json` → JSONL, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => DataFormat::Jsonl,
            _ => DataFormat::Csv,
        }
    }
}

impl FromStr for DataFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DataFormat::Csv),
            "jsonl" => Ok(DataFormat::Jsonl),
            other => Err(Error::Config(format!(
                "unknown format `{other}` (expected csv or jsonl)"
            ))),
        }
    }
}

pub const CSV_HEADER: [&str; 8] = [
    "id", "text", "anger", "love", "fear", "joy", "sadness", "surprise",
];

fn parse_flag(raw: &str, line: usize, column: &str) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            line,
            message: format!("column `{column}` must be 0 or 1, got `{other}`"),
        }),
    }
}

fn check_duplicate(seen: &mut HashSet<String>, id: &str, line: usize) -> Result<()> {
    if id.is_empty() {
        return Err(Error::Parse {
            line,
            message: "empty id".into(),
        });
    }
    if !seen.insert(id.to_string()) {
        return Err(Error::Parse {
            line,
            message: format!("duplicate id `{id}`"),
        });
    }
    Ok(())
}

/// Reads `id,text,anger,love,fear,joy,sadness,surprise` with RFC 4180 quoting.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<Utterance>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, got `{}`",
                CSV_HEADER.join(","),
                got.join(",")
            ),
        });
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != CSV_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    CSV_HEADER.len(),
                    record.len()
                ),
            });
        }
        let mut labels = [false; NUM_EMOTIONS];
        for (i, slot) in labels.iter_mut().enumerate() {
            *slot = parse_flag(&record[i + 2], line, CSV_HEADER[i + 2])?;
        }
        check_duplicate(&mut seen, &record[0], line)?;
        out.push(Utterance::new(&record[0], &record[1], labels));
    }
    Ok(out)
}

/// One object per line: `{"id": .., "text": .., "anger": 0|1|bool, ...}`.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let v: Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let field_str = |k: &str| {
            v.get(k)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or_else(|| bad(format!("missing string field `{k}`")))
        };
        let id = field_str("id")?;
        let text = field_str("text")?;
        let mut labels = [false; NUM_EMOTIONS];
        for e in Emotion::ALL {
            labels[e.index()] = match v.get(e.key()) {
                Some(Value::Bool(b)) => *b,
                Some(Value::Number(n)) if n.as_u64() == Some(0) => false,
                Some(Value::Number(n)) if n.as_u64() == Some(1) => true,
                _ => {
                    return Err(bad(format!(
                        "field `{}` must be 0, 1 or a boolean",
                        e.key()
                    )))
                }
            };
        }
        check_duplicate(&mut seen, &id, line_no)?;
        out.push(Utterance::new(id, text, labels));
    }
    Ok(out)
}

pub fn write_csv<W: Write>(writer: W, data: &[Utterance]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for u in data {
        let flags = u.labels.map(|l| if l { "1" } else { "0" });
        w.write_record([u.id.as_str(), u.text.as_str()].into_iter().chain(flags))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write>(mut writer: W, data: &[Utterance]) -> Result<()> {
    for u in data {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), Value::from(u.id.clone()));
        obj.insert("text".into(), Value::from(u.text.clone()));
        for e in Emotion::ALL {
            obj.insert(e.key().into(), Value::from(u8::from(u.labels[e.index()])));
        }
        writeln!(writer, "{}", Value::Object(obj))?;
    }
    Ok(())
}

/// Loads a dataset file and, when a manifest is given, checks its counts.
pub fn load_dataset(
    path: &Path,
    format: DataFormat,
    manifest: Option<&DatasetManifest>,
) -> Result<Vec<Utterance>> {
    let file = File::open(path)?;
    let data = match format {
        DataFormat::Csv => read_csv(BufReader::new(file))?,
        DataFormat::Jsonl => read_jsonl(BufReader::new(file))?,
    };
    if let Some(m) = manifest {
        m.validate(&data)?;
    }
    Ok(data)
}

pub fn save_dataset(path: &Path, format: DataFormat, data: &[Utterance]) -> Result<()> {
    let file = std::io::BufWriter::new(File::create(path)?);
    match format {
        DataFormat::Csv => write_csv(file, data),
        DataFormat::Jsonl => write_jsonl(file, data),
    }
}

pub fn label_counts(data: &[Utterance]) -> [usize; NUM_EMOTIONS] {
    let mut counts = [0; NUM_EMOTIONS];
    for u in data {
        for (c, &l) in counts.iter_mut().zip(&u.labels) {
            *c += usize::from(l);
        }
    }
    counts
}

/// Expected size and per-emotion positive counts of a published dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub expected_total: usize,
    /// In emotion order: anger, love, fear, joy, sadness, surprise.
    pub expected_counts: [usize; NUM_EMOTIONS],
}

impl DatasetManifest {
    pub const BUILTIN: [&'static str; 2] = ["github", "stackoverflow"];

    pub fn github() -> Self {
        DatasetManifest {
            name: "github".into(),
            expected_total: 2000,
            expected_counts: [340, 220, 198, 422, 274, 328],
        }
    }

    pub fn stackoverflow() -> Self {
        DatasetManifest {
            name: "stackoverflow".into(),
            expected_total: 4800,
            expected_counts: [882, 1220, 106, 491, 230, 45],
        }
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "github" => Ok(Self::github()),
            "stackoverflow" => Ok(Self::stackoverflow()),
            other => Err(Error::Lookup {
                key: other.to_string(),
                available: Self::BUILTIN.iter().map(|s| s.to_string()).collect(),
            }),
        }
    }

    /// A built-in name, or a path to a JSON manifest file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let path = Path::new(name_or_path);
        if path.is_file() {
            let m: DatasetManifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
            m.check()?;
            Ok(m)
        } else {
            Self::builtin(name_or_path)
        }
    }

    pub fn check(&self) -> Result<()> {
        if let Some(e) = Emotion::ALL
            .into_iter()
            .find(|e| self.expected_counts[e.index()] > self.expected_total)
        {
            return Err(Error::Config(format!(
                "manifest `{}`: {} count {} exceeds total {}",
                self.name,
                e,
                self.expected_counts[e.index()],
                self.expected_total
            )));
        }
        Ok(())
    }

    /// Exact match of the total and all six counts; the error lists every
    /// mismatch as expected vs found.
    pub fn validate(&self, data: &[Utterance]) -> Result<()> {
        let mut problems = Vec::new();
        if data.len() != self.expected_total {
            problems.push(format!(
                "total: expected {}, found {}",
                self.expected_total,
                data.len()
            ));
        }
        let found = label_counts(data);
        for e in Emotion::ALL {
            let (want, got) = (self.expected_counts[e.index()], found[e.index()]);
            if want != got {
                problems.push(format!("{e}: expected {want}, found {got}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "dataset does not match manifest `{}`: {}",
                self.name,
                problems.join("; ")
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "id,text,anger,love,fear,joy,sadness,surprise\n\
        a1,\"Hello, \"\"world\"\"\",0,1,0,0,0,0\n\
        a2,plain,0,0,0,0,0,0\n";

    #[test]
    fn reads_quoted_csv() {
        let data = read_csv(SAMPLE.as_bytes()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data[0].text, "Hello, \"world\"");
        assert_eq!(data[0].labels, [false, true, false, false, false, false]);
        assert!(data[1].is_neutral());
    }

    #[test]
    fn malformed_row_reports_line() {
        let bad =
            "id,text,anger,love,fear,joy,sadness,surprise\nx,t,0,0,0,0,0,0\ny,t,0,2,0,0,0,0\n";
        match read_csv(bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "id,text,anger,love,fear,joy,sadness,surprise\nx,t,0,0\n";
        assert!(matches!(
            read_csv(short.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn header_only_is_empty() {
        let data = read_csv("id,text,anger,love,fear,joy,sadness,surprise\n".as_bytes()).unwrap();
        assert!(data.is_empty());
        assert!(DatasetManifest::github().validate(&data).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dup =
            "id,text,anger,love,fear,joy,sadness,surprise\nx,t,0,0,0,0,0,0\nx,u,0,0,0,0,0,0\n";
        assert!(matches!(
            read_csv(dup.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn jsonl_round_trip_matches_csv() {
        let data = read_csv(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &data).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), data);
        let mut csv_buf = Vec::new();
        write_csv(&mut csv_buf, &data).unwrap();
        assert_eq!(read_csv(csv_buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn jsonl_accepts_booleans() {
        let line = r#"{"id":"q","text":"t","anger":true,"love":false,"fear":0,"joy":1,"sadness":0,"surprise":0}"#;
        let data = read_jsonl(line.as_bytes()).unwrap();
        assert_eq!(data[0].labels, [true, false, false, true, false, false]);
        let bad = r#"{"id":"q","text":"t"}"#;
        assert!(matches!(
            read_jsonl(bad.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn manifest_mismatch_lists_expected_and_found() {
        let m = DatasetManifest {
            name: "toy".into(),
            expected_total: 2,
            expected_counts: [0, 2, 0, 0, 0, 0],
        };
        let data = read_csv(SAMPLE.as_bytes()).unwrap();
        let msg = m.validate(&data).unwrap_err().to_string();
        assert!(msg.contains("Love: expected 2, found 1"), "{msg}");
        assert!(!msg.contains("total"));
    }

    #[test]
    fn builtin_manifests() {
        let g = DatasetManifest::github();
        assert_eq!(g.expected_total, 2000);
        assert_eq!(g.expected_counts, [340, 220, 198, 422, 274, 328]);
        let s = DatasetManifest::stackoverflow();
        assert_eq!(s.expected_total, 4800);
        assert_eq!(s.expected_counts, [882, 1220, 106, 491, 230, 45]);
        assert!(matches!(
            DatasetManifest::builtin("reddit"),
            Err(Error::Lookup { .. })
        ));
    }
}
