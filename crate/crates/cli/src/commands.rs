use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use emoblend::eval::{
    category_report, compare_to_reference, resolved_errors, unanimous_errors, Annotations,
    Comparison, EvalReport, ModelPredictions, ReferenceTable, ReportMeta, TABLE_COLUMNS,
};
use emoblend::harness::{
    label_counts, load_bundle, load_dataset, predict, run_experiment, run_seed, save_bundle,
    save_dataset, utterance_tokens, DataFormat, DatasetManifest, Featurizer, Mode,
    PredictionMatrix, SeedRun, SplitAssignment, Utterance,
};
use emoblend::lexicon::{
    polarity_words_for_tokens, PolarityLexicon, PolarityRecord, PolarityStats,
};
use emoblend::model::BlendMode;
use emoblend::synthetic::{diluted_corpus, manifest_standin, separable_corpus, FIXTURE_LEXICON};
use emoblend::{Emotion, Error, Labels, Result};
use serde::Serialize;

use crate::config::RunConfig;
use crate::{
    CompareArgs, ErrorsArgs, EvaluateArgs, ExperimentArgs, ExtractArgs, PrepareArgs, SynthArgs,
    TrainArgs,
};

fn load_data(cfg: &RunConfig) -> Result<Vec<Utterance>> {
    let manifest = cfg
        .manifest
        .as_deref()
        .map(DatasetManifest::resolve)
        .transpose()?;
    load_dataset(cfg.dataset()?, cfg.format()?, manifest.as_ref())
}

fn read_lexicon(path: &Path) -> Result<PolarityLexicon> {
    PolarityLexicon::parse(BufReader::new(File::open(path)?))
}

fn lexicon_for(cfg: &RunConfig) -> Result<Option<PolarityLexicon>> {
    match (cfg.experiment.mode, &cfg.lexicon) {
        (Mode::Baseline, _) => Ok(None),
        (Mode::Polarity, Some(p)) => read_lexicon(p).map(Some),
        (Mode::Polarity, None) => Err(Error::Config(
            "polarity mode needs --lexicon (or EMOBLEND_LEXICON)".into(),
        )),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    items: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    fs::write(dir.join("report.txt"), report.to_table() + "\n")?;
    Ok(())
}

/// model/, split.json, train_log.jsonl, predictions.csv and the report.
fn write_run(dir: &Path, run: &SeedRun) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_bundle(&dir.join("model"), &run.models, &run.vocab, &run.sidecar)?;
    write_json(&dir.join("split.json"), &run.split)?;
    write_jsonl(&dir.join("train_log.jsonl"), run.models.log())?;
    run.predictions.save(&dir.join("predictions.csv"))?;
    write_report(dir, &run.report)
}

pub fn prepare(a: &PrepareArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    a.data.apply(&mut cfg);
    let data = load_data(&cfg)?;
    let counts = label_counts(&data);
    let neutral = data.iter().filter(|u| u.is_neutral()).count();
    println!("{} utterances ({} neutral)", data.len(), neutral);
    for e in Emotion::ALL {
        println!("  {:<9} {}", e.title(), counts[e.index()]);
    }
    if cfg.manifest.is_some() {
        println!("manifest check passed");
    }
    if let Some(out) = &a.out {
        save_dataset(out, DataFormat::from_path(out), &data)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

pub fn extract_polarity(a: &ExtractArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    a.data.apply(&mut cfg);
    let data = load_data(&cfg)?;
    let lexicon = read_lexicon(&a.lexicon)?;
    let records: Vec<PolarityRecord> = data
        .iter()
        .map(|u| PolarityRecord {
            id: u.id.clone(),
            polarity_words: polarity_words_for_tokens(&utterance_tokens(u), &lexicon, a.tau),
        })
        .collect();
    write_jsonl(&a.out, &records)?;
    let lists: Vec<_> = records.into_iter().map(|r| r.polarity_words).collect();
    let stats = PolarityStats::from_lists(&lists);
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let mut cfg = a.model.resolve(&a.data)?;
    if let Some(s) = a.seed {
        cfg.experiment.seeds = vec![s];
    }
    let seed = match cfg.experiment.seeds.as_slice() {
        [s] => *s,
        other => {
            return Err(Error::Config(format!(
                "train takes exactly one seed, got {}; use `experiment` for several",
                other.len()
            )))
        }
    };
    let data = load_data(&cfg)?;
    let lexicon = lexicon_for(&cfg)?;
    cfg.save(&a.out)?;
    let run = run_seed(&data, &cfg.experiment, lexicon.as_ref(), seed)?;
    write_run(&a.out, &run)?;
    println!("{}", run.report.to_table());
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn experiment(a: &ExperimentArgs) -> Result<()> {
    let mut cfg = a.model.resolve(&a.data)?;
    if let Some(s) = &a.seeds {
        cfg.experiment.seeds = s.clone();
    }
    let data = load_data(&cfg)?;
    let lexicon = lexicon_for(&cfg)?;
    cfg.save(&a.out)?;
    let result = run_experiment(&data, &cfg.experiment, lexicon.as_ref())?;
    for run in &result.runs {
        write_run(&a.out.join(format!("seed-{}", run.seed)), run)?;
    }
    write_json(&a.out.join("aggregate.json"), &result.aggregate)?;
    let agg = &result.aggregate;
    for run in &result.runs {
        println!(
            "seed {:<6} micro {:.3}  macro {:.3}",
            run.seed, run.report.micro_f1, run.report.macro_f1
        );
    }
    println!(
        "{} runs: micro {:.3} ± {:.3}, macro {:.3} ± {:.3}",
        agg.runs, agg.micro_f1.mean, agg.micro_f1.std, agg.macro_f1.mean, agg.macro_f1.std
    );
    Ok(())
}

fn gold_map(data: &[Utterance]) -> BTreeMap<String, Labels> {
    data.iter().map(|u| (u.id.clone(), u.labels)).collect()
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    a.data.apply(&mut cfg);
    let data = load_data(&cfg)?;
    let data = match &a.split {
        Some(p) => {
            let split: SplitAssignment = serde_json::from_reader(BufReader::new(File::open(p)?))?;
            split.partition(&data)?.1
        }
        None => data,
    };
    let dataset = cfg
        .manifest
        .clone()
        .or_else(|| {
            cfg.dataset
                .as_deref()
                .and_then(Path::file_stem)
                .map(|s| s.to_string_lossy().into_owned())
        })
        .unwrap_or_default();
    let (predictions, meta) = match (&a.model, &a.predictions) {
        (Some(dir), _) => {
            let bundle = load_bundle(dir)?;
            let lexicon = match (bundle.sidecar.uses_lexicon, &a.lexicon) {
                (false, _) => None,
                (true, Some(p)) => Some(read_lexicon(p)?),
                (true, None) => {
                    return Err(Error::Config(
                        "this model was trained with a lexicon; pass --lexicon".into(),
                    ))
                }
            };
            let featurizer = Featurizer {
                vocab: &bundle.vocab,
                lexicon: lexicon.as_ref(),
                text: &bundle.sidecar.text,
            };
            let blend = bundle.sidecar.blend;
            let preds = predict(&bundle.classifiers, &blend, &data, &featurizer)?;
            let meta = ReportMeta {
                dataset,
                mode: if blend.mode == BlendMode::None {
                    Mode::Baseline
                } else {
                    Mode::Polarity
                }
                .to_string(),
                blend: Some(blend.mode.to_string()),
                seed: Some(bundle.sidecar.seed),
                config_hash: None,
                vocab_hash: Some(bundle.sidecar.vocab_hash.clone()),
            };
            (preds, meta)
        }
        (None, Some(p)) => {
            let preds = PredictionMatrix::load(p)?;
            let meta = ReportMeta {
                dataset,
                mode: "external".into(),
                blend: None,
                seed: None,
                config_hash: None,
                vocab_hash: None,
            };
            (preds, meta)
        }
        (None, None) => return Err(Error::Config("pass --model or --predictions".into())),
    };
    let by_id: BTreeMap<&str, Labels> = predictions
        .rows
        .iter()
        .map(|r| (r.id.as_str(), r.labels))
        .collect();
    let predicted = data
        .iter()
        .map(|u| {
            by_id
                .get(u.id.as_str())
                .copied()
                .ok_or_else(|| Error::Input(format!("no prediction for utterance `{}`", u.id)))
        })
        .collect::<Result<Vec<Labels>>>()?;
    let gold: Vec<Labels> = data.iter().map(|u| u.labels).collect();
    let report = EvalReport::from_predictions(meta, &gold, &predicted)?;
    fs::create_dir_all(&a.out)?;
    if a.model.is_some() {
        predictions.save(&a.out.join("predictions.csv"))?;
    }
    write_report(&a.out, &report)?;
    println!("{}", report.to_table());
    Ok(())
}

fn report_label(r: &EvalReport) -> String {
    let mut s = format!("{}/{}", r.meta.dataset, r.meta.mode);
    if let Some(seed) = r.meta.seed {
        s.push_str(&format!("/seed {seed}"));
    }
    s
}

#[derive(Serialize)]
struct ReportDelta {
    report: String,
    /// Differences from the first report, in F1 points.
    delta: Vec<(String, f64)>,
}

#[derive(Serialize)]
struct CompareOutput {
    deltas: Vec<ReportDelta>,
    references: Vec<Comparison>,
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    let table = match &a.reference_file {
        Some(p) => ReferenceTable::from_file(p)?,
        None => ReferenceTable::bundled(),
    };
    if a.list_references {
        for k in table.keys() {
            println!("{k}");
        }
        return Ok(());
    }
    if a.reports.is_empty() {
        return Err(Error::Input("no reports given".into()));
    }
    if let Some(key) = &a.reference {
        table.get(key)?;
    }
    let reports = a
        .reports
        .iter()
        .map(|p| Ok(serde_json::from_reader(BufReader::new(File::open(p)?))?))
        .collect::<Result<Vec<EvalReport>>>()?;
    let mut out = CompareOutput {
        deltas: Vec::new(),
        references: Vec::new(),
    };
    let labels: Vec<String> = reports.iter().map(report_label).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(0).max(12) + 2;
    let mut header = format!("{:<width$}", "");
    for c in TABLE_COLUMNS {
        header.push_str(&format!(" {c:>8}"));
    }
    println!("{header}");
    let first = reports[0].f1_row();
    for (r, label) in reports.iter().zip(&labels) {
        let row = r.f1_row();
        let mut line = format!("{label:<width$}");
        for v in row {
            line.push_str(&format!(" {v:>8.3}"));
        }
        println!("{line}");
        if !std::ptr::eq(r, &reports[0]) {
            let mut line = format!("{:<width$}", "  vs first");
            let mut delta = Vec::new();
            for ((c, v), f) in TABLE_COLUMNS.iter().zip(row).zip(first) {
                line.push_str(&format!(" {:>+8.3}", v - f));
                delta.push((c.to_string(), v - f));
            }
            println!("{line}");
            out.deltas.push(ReportDelta {
                report: label.clone(),
                delta,
            });
        }
    }
    if let Some(key) = &a.reference {
        for r in &reports {
            let mut c = compare_to_reference(r, &table, key)?;
            c.ours_name = report_label(r);
            println!();
            println!("{}", c.to_table());
            out.references.push(c);
        }
    }
    if let Some(p) = &a.out {
        write_json(p, &out)?;
    }
    Ok(())
}

fn load_predictions(paths: &[std::path::PathBuf]) -> Result<Vec<ModelPredictions>> {
    paths
        .iter()
        .map(|p| {
            let name = p.display().to_string();
            Ok(PredictionMatrix::load(p)?.to_model_predictions(name))
        })
        .collect()
}

pub fn errors(a: &ErrorsArgs) -> Result<()> {
    let mut cfg = RunConfig::default();
    a.data.apply(&mut cfg);
    let data = load_data(&cfg)?;
    let models = load_predictions(&a.predictions)?;
    // Gold restricted to the utterances the first model scored (a test split).
    let mut gold = gold_map(&data);
    if let Some(m) = models.first() {
        gold.retain(|id, _| m.labels.contains_key(id));
    }
    let annotations = match &a.annotations {
        Some(p) => Annotations::read(BufReader::new(File::open(p)?))?,
        None => Annotations::default(),
    };
    let cases = annotations.apply(&unanimous_errors(&gold, &models)?);
    fs::create_dir_all(&a.out)?;
    write_jsonl(&a.out.join("cases.jsonl"), &cases)?;
    let report = category_report(&cases, &annotations);
    write_json(&a.out.join("categories.json"), &report)?;
    println!("{}", report.to_text());
    if !a.after.is_empty() {
        let after = load_predictions(&a.after)?;
        let resolution = resolved_errors(&cases, &after, Some(&annotations))?;
        write_json(&a.out.join("resolution.json"), &resolution)?;
        println!();
        println!("{}", resolution.to_text());
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let data = match a.kind.as_str() {
        "lexicon" => {
            fs::write(&a.out, FIXTURE_LEXICON)?;
            println!("wrote {}", a.out.display());
            return Ok(());
        }
        "separable" => separable_corpus(a.seed),
        "diluted" => diluted_corpus(a.seed),
        other => match DatasetManifest::builtin(other) {
            Ok(m) => manifest_standin(&m, a.seed),
            Err(_) => {
                return Err(Error::Lookup {
                    key: other.to_string(),
                    available: ["separable", "diluted", "github", "stackoverflow", "lexicon"]
                        .map(String::from)
                        .to_vec(),
                })
            }
        },
    };
    save_dataset(&a.out, DataFormat::from_path(&a.out), &data)?;
    println!("wrote {} utterances to {}", data.len(), a.out.display());
    Ok(())
}
