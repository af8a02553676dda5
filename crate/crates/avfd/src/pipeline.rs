//! End-to-end runs over manifests: training, scoring and diagnostics.

use std::fmt::Write as _;
use std::path::Path;

use avfd_core::data::{Label, Split};
use avfd_core::evaluation::{self, DiagnosticReport, MetricsTable, ScoreReport};
use avfd_core::linalg::Matrix;
use avfd_core::perturb::Corruption;
use avfd_core::training::{self, TrainingSet};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{self, Error, Result};
use crate::features::{self, Encoders};
use crate::manifest;
use crate::prompts::PromptSet;

/// Trains on the manifest's train split.
pub fn train(manifest_path: &Path, config: &RunConfig) -> Result<Checkpoint> {
    config.validate()?;
    let m = manifest::load(manifest_path)?;
    let root = manifest::root_of(manifest_path);
    let prompts = PromptSet::load(config.prompts.as_deref())?;
    let enc = Encoders::build(config)?;
    let records: Vec<_> = m.split(Split::Train).collect();
    // Labels are checked before any feature is computed.
    for r in &records {
        if r.label != Label::Real {
            return Err(avfd_core::Error::Validation(format!(
                "sample `{}` is fake; training accepts real samples only",
                r.id
            ))
            .into());
        }
    }
    let clips = records
        .iter()
        .map(|r| Ok((r.id.clone(), r.label, features::extract_raw(r, &root, &enc, None)?)))
        .collect::<Result<Vec<_>>>()?;
    let set = TrainingSet::new(clips)?;
    let init = Checkpoint::initial(config.clone(), prompts)?;
    let out = training::train(init.detector, &set, &config.train_config(), &enc.text)?;
    Ok(Checkpoint { detector: out.detector, epochs: out.epochs, history: out.history, ..init })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub corruption: Option<Corruption>,
    pub reports: Vec<ScoreReport>,
    pub metrics: MetricsTable,
}

/// Scores every record of `split`, sorted by sample id.
pub fn score_split(
    manifest_path: &Path,
    ck: &Checkpoint,
    split: Split,
    corruption: Option<&Corruption>,
) -> Result<Vec<ScoreReport>> {
    let m = manifest::load(manifest_path)?;
    let root = manifest::root_of(manifest_path);
    let enc = Encoders::build(&ck.config)?;
    let scorer = ck.detector.scorer(&enc.text)?;
    let mut reports = Vec::new();
    for r in m.split(split) {
        let clip = features::extract_raw(r, &root, &enc, corruption)?;
        let s = scorer.score(&clip)?;
        reports.push(ScoreReport {
            sample_id: r.id.clone(),
            features: s.fused_features(),
            frame_scores: s.frame_scores,
            video_score: s.video_score,
            weights: s.weights,
            label: r.label,
            scenario: r.scenario,
        });
    }
    reports.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    Ok(reports)
}

pub fn evaluate(
    manifest_path: &Path,
    ck: &Checkpoint,
    split: Split,
    corruption: Option<Corruption>,
) -> Result<Evaluation> {
    let reports = score_split(manifest_path, ck, split, corruption.as_ref())?;
    let metrics = evaluation::metrics_table(&reports)?;
    Ok(Evaluation { corruption, reports, metrics })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Plain-text metrics table.
pub fn metrics_text(evals: &[Evaluation]) -> String {
    let mut s = String::from("condition\tscope\tcount\tAP(%)\tAUC(%)\n");
    for e in evals {
        let cond = e.corruption.map_or_else(|| "clean".to_string(), |c| c.to_string());
        let o = &e.metrics.overall;
        let _ = writeln!(s, "{cond}\tall\t{}\t{}\t{}", o.real + o.fake, pct(o.ap), pct(o.auc));
        for sc in &e.metrics.per_scenario {
            match &sc.metrics {
                Some(m) => {
                    let _ = writeln!(s, "{cond}\t{}\t{}\t{}\t{}", sc.scenario, sc.count, pct(m.ap), pct(m.auc));
                }
                None => {
                    let _ = writeln!(s, "{cond}\t{}\t{}\t-\t-", sc.scenario, sc.count);
                }
            }
        }
    }
    s
}

pub fn metrics_json(evals: &[Evaluation]) -> String {
    let rows: Vec<serde_json::Value> = evals
        .iter()
        .map(|e| {
            serde_json::json!({
                "condition": e.corruption.map_or_else(|| "clean".to_string(), |c| c.to_string()),
                "metrics": e.metrics,
            })
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("metrics serialise") + "\n"
}

pub fn reports_jsonl(reports: &[ScoreReport]) -> String {
    reports.iter().map(|r| serde_json::to_string(r).expect("report serialises") + "\n").collect()
}

/// Writes `metrics.txt`, `metrics.json` and one `reports*.jsonl` per condition.
pub fn write_evaluation(dir: &Path, evals: &[Evaluation]) -> Result<()> {
    error::write(&dir.join("metrics.txt"), metrics_text(evals))?;
    error::write(&dir.join("metrics.json"), metrics_json(evals))?;
    for e in evals {
        let name = match &e.corruption {
            None => "reports.jsonl".to_string(),
            Some(c) => format!("reports-{}.jsonl", c.kind()),
        };
        error::write(&dir.join(name), reports_jsonl(&e.reports))?;
    }
    Ok(())
}

pub fn read_reports(path: &Path) -> Result<Vec<ScoreReport>> {
    let text = error::read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Whitespace-separated numbers, one sample per line.
pub fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = error::read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: format!("not a number: `{t}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn rows_to_matrix(rows: &[Vec<f64>], path: &Path) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(avfd_core::Error::TooFewSamples { needed: 2, got: 0 }.into());
    }
    Matrix::from_rows(rows).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "rows have different lengths".into(),
    })
}

/// Real-versus-fake diagnostics over score reports: overlap of video scores
/// and MMD² between the two groups' fused features.
pub fn diagnose_reports(reports: &[ScoreReport], bins: usize) -> Result<DiagnosticReport> {
    let group = |l: Label| reports.iter().filter(move |r| r.label == l);
    let real: Vec<f64> = group(Label::Real).map(|r| r.video_score).collect();
    let fake: Vec<f64> = group(Label::Fake).map(|r| r.video_score).collect();
    DiagnosticReport::new(bins)
        .with_overlap(&real, &fake)?
        .with_mmd(&evaluation::feature_matrix(group(Label::Real)), &evaluation::feature_matrix(group(Label::Fake)))
        .map_err(Into::into)
}

pub fn diagnostics_text(d: &DiagnosticReport) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6e}"));
    format!(
        "mmd2\t{}\nmmd2_raw\t{}\nbandwidth\t{}\noverlap\t{}\nbins\t{}\n",
        opt(d.mmd2),
        opt(d.mmd2_raw),
        opt(d.bandwidth),
        d.overlap.map_or_else(|| "-".to_string(), |x| format!("{x:.6}")),
        d.bins
    )
}

pub fn write_diagnostics(dir: &Path, d: &DiagnosticReport) -> Result<()> {
    error::write(&dir.join("diagnostics.txt"), diagnostics_text(d))?;
    error::write(&dir.join("diagnostics.json"), serde_json::to_string_pretty(d).expect("diagnostics serialise") + "\n")
}

/// Per-step loss log: `epoch step total av ft`.
pub fn loss_log(ck: &Checkpoint) -> String {
    let mut s = String::from("epoch\tstep\ttotal\tav\tft\n");
    for r in &ck.history {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.epoch, r.step, r.loss.total, r.loss.av, r.loss.ft);
    }
    s
}
