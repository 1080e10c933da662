//! Deterministic rendering of experiment artifacts.
//!
//! Directory layout: `report.txt`, `confusion.csv`, `confidence_trace.csv`,
//! `discovery_timeline.csv`, `rules.txt`, `rules.json`, `features.csv`.
//! Floats are written in shortest round-trip form, so identical runs yield
//! byte-identical files.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use crate::experiment::ExperimentReport;

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// `report.txt`: key/value summary, one entry per line.
pub fn render_report_txt(r: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str("protoclass experiment report\n");
    out.push_str("============================\n");
    out.push_str(&format!("primed_classes: {}\n", r.primed_classes.join(",")));
    out.push_str(&format!("primed_samples: {}\n", r.primed_samples));
    out.push_str(&format!("streamed_samples: {}\n", r.streamed_samples));
    out.push_str(&format!("holdout_samples: {}\n", r.holdout_samples));
    out.push_str(&format!("events_absorbed: {}\n", r.events_absorbed));
    out.push_str(&format!("events_buffered: {}\n", r.events_buffered));
    out.push_str(&format!("events_new_class: {}\n", r.events_new_class));
    out.push_str(&format!(
        "events_outlier_skipped: {}\n",
        r.events_outlier_skipped
    ));
    out.push_str(&format!("final_class_count: {}\n", r.model.class_count()));
    out.push_str(&format!("discovered_classes: {}\n", r.discovered.join(",")));
    let mapping: Vec<String> = r
        .mapping
        .iter()
        .map(|(from, to)| format!("{from}->{to}"))
        .collect();
    out.push_str(&format!("label_mapping: {}\n", mapping.join(";")));
    out.push_str(&format!(
        "holdout_accuracy: {}\n",
        r.holdout_accuracy
            .map(|a| format!("{a:.6}"))
            .unwrap_or_else(|| "n/a".into())
    ));
    out
}

/// `confusion.csv`: truth rows × aligned-prediction columns.
pub fn render_confusion_csv(r: &ExperimentReport) -> String {
    let c = &r.confusion;
    let mut out = String::from("truth\\predicted");
    for p in &c.predicted_labels {
        out.push(',');
        out.push_str(p);
    }
    out.push('\n');
    for (i, t) in c.truth_labels.iter().enumerate() {
        out.push_str(t);
        for j in 0..c.predicted_labels.len() {
            out.push_str(&format!(",{}", c.matrix[i][j]));
        }
        out.push('\n');
    }
    out
}

/// `confidence_trace.csv`: per-sample confidence, band and decision.
pub fn render_trace_csv(r: &ExperimentReport) -> String {
    let mut out =
        String::from("seq,lambda,tracker_mean,threshold,decision,known_classes,density\n");
    for row in &r.trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.seq,
            opt(row.lambda),
            row.tracker_mean,
            opt(row.threshold),
            row.decision,
            row.known_classes,
            opt(row.density),
        ));
    }
    out
}

/// `discovery_timeline.csv`: class count over the stream.
pub fn render_timeline_csv(r: &ExperimentReport) -> String {
    let mut out = String::from("samples_seen,known_classes,added\n");
    for row in &r.timeline {
        out.push_str(&format!(
            "{},{},{}\n",
            row.samples_seen,
            row.known_classes,
            row.added.join(";")
        ));
    }
    out
}

/// `features.csv`: per-class Λ ranking and mask.
pub fn render_features_csv(r: &ExperimentReport) -> String {
    let mut out = String::from("class,feature,lambda,selected\n");
    for row in &r.features {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.class, row.feature, row.lambda, row.selected
        ));
    }
    out
}

/// Write every artifact into `dir`, creating it if needed.
pub fn write_report(dir: impl AsRef<Path>, r: &ExperimentReport) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)
        .with_context(|| format!("cannot create report directory {}", dir.display()))?;
    fs::write(dir.join("report.txt"), render_report_txt(r))?;
    fs::write(dir.join("confusion.csv"), render_confusion_csv(r))?;
    fs::write(dir.join("confidence_trace.csv"), render_trace_csv(r))?;
    fs::write(dir.join("discovery_timeline.csv"), render_timeline_csv(r))?;
    fs::write(dir.join("features.csv"), render_features_csv(r))?;
    fs::write(dir.join("rules.txt"), r.rules.to_text())?;
    fs::write(dir.join("rules.json"), r.rules.to_json()?)?;
    Ok(())
}
