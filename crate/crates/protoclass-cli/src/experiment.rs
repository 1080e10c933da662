//! Prime → stream → evaluate experiment harness.
//!
//! A schedule is an ordered list of phases; each phase draws samples from a
//! set of classes and sends a fraction of them, with labels, to the priming
//! set, streaming the rest unlabeled. A per-class holdout is reserved up
//! front for final evaluation. Discovered classes are aligned to ground
//! truth by majority vote over the streamed (training) samples, never over
//! the holdout.
//!
//! Everything is driven by one seed: the same dataset, schedule, config and
//! seed reproduce every report artifact byte for byte.

use std::collections::VecDeque;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use protoclass::{Classifier, Config, RuleDocument, StreamEvent};

use crate::dataset::Dataset;

/// One step of the experiment protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    /// Classes this phase draws from (round-robin in listed order).
    pub classes: Vec<String>,
    /// Fraction of drawn samples that keep their labels (go to priming).
    pub labeled_fraction: f64,
    /// Samples to draw.
    pub count: usize,
}

/// Ordered experiment phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSchedule {
    pub phases: Vec<Phase>,
}

impl StreamSchedule {
    pub fn from_json(text: &str) -> Result<Self> {
        let schedule: Self = serde_json::from_str(text).context("malformed schedule JSON")?;
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases.is_empty() {
            bail!("schedule has no phases");
        }
        for (i, phase) in self.phases.iter().enumerate() {
            if phase.classes.is_empty() {
                bail!("phase {i}: class set is empty");
            }
            if !(0.0..=1.0).contains(&phase.labeled_fraction) {
                bail!("phase {i}: labeled_fraction must lie in [0, 1]");
            }
            if phase.count == 0 {
                bail!("phase {i}: count must be positive");
            }
        }
        Ok(())
    }

    /// Default protocol: prime on the first class with 80% of its available
    /// samples, then stream the remaining samples unlabeled, one class per
    /// phase (each unseen class arrives as a burst, as in a staged
    /// presentation of held-back data).
    pub fn default_protocol(dataset: &Dataset, holdout_fraction: f64) -> Result<Self> {
        let labels = dataset.label_set();
        if labels.is_empty() {
            bail!("dataset has no labels; cannot derive a schedule");
        }
        let per_class_available = |label: &str| -> usize {
            let total = dataset
                .labels
                .as_ref()
                .map(|ls| ls.iter().filter(|l| l.as_str() == label).count())
                .unwrap_or(0);
            total - holdout_count(total, holdout_fraction)
        };
        let first = labels[0].clone();
        let prime_count = (per_class_available(&first) as f64 * 0.8).floor() as usize;
        if prime_count == 0 {
            bail!("first class '{first}' has too few samples to prime on");
        }
        let mut phases = vec![Phase {
            classes: vec![first.clone()],
            labeled_fraction: 1.0,
            count: prime_count,
        }];
        for label in labels {
            let available = per_class_available(&label);
            let remaining = if label == first {
                available - prime_count
            } else {
                available
            };
            if remaining > 0 {
                phases.push(Phase {
                    classes: vec![label],
                    labeled_fraction: 0.0,
                    count: remaining,
                });
            }
        }
        Ok(Self { phases })
    }
}

/// Harness configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Per-class fraction reserved for final evaluation.
    pub holdout_fraction: f64,
    pub model: Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            holdout_fraction: 0.2,
            model: Config::default(),
        }
    }
}

/// One row of the confidence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub seq: u64,
    /// Confidence of the sample; absent for gated outliers.
    pub lambda: Option<f64>,
    /// Tracker mean after the step.
    pub tracker_mean: f64,
    /// Drop threshold that was applied at decision time.
    pub threshold: Option<f64>,
    pub decision: &'static str,
    pub known_classes: usize,
    /// Recursive density estimate over the winning class (diagnostic).
    pub density: Option<f64>,
}

/// One row of the class-discovery timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    /// Streamed samples seen when the class count changed.
    pub samples_seen: u64,
    pub known_classes: usize,
    pub added: Vec<String>,
}

/// Confusion matrix over aligned labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Confusion {
    /// Row labels (ground truth), sorted.
    pub truth_labels: Vec<String>,
    /// Column labels (aligned predictions), sorted.
    pub predicted_labels: Vec<String>,
    /// `matrix[truth][predicted]` counts.
    pub matrix: Vec<Vec<u64>>,
}

impl Confusion {
    fn build(pairs: &[(String, String)]) -> Self {
        let mut truth_labels: Vec<String> = pairs.iter().map(|(t, _)| t.clone()).collect();
        truth_labels.sort();
        truth_labels.dedup();
        let mut predicted_labels: Vec<String> = pairs.iter().map(|(_, p)| p.clone()).collect();
        predicted_labels.sort();
        predicted_labels.dedup();
        let mut matrix = vec![vec![0u64; predicted_labels.len()]; truth_labels.len()];
        for (t, p) in pairs {
            let i = truth_labels.iter().position(|l| l == t).unwrap();
            let j = predicted_labels.iter().position(|l| l == p).unwrap();
            matrix[i][j] += 1;
        }
        Self {
            truth_labels,
            predicted_labels,
            matrix,
        }
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }
}

/// Per-class per-feature ranking entry.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub class: String,
    pub feature: String,
    pub lambda: f64,
    pub selected: bool,
}

/// Everything `run_experiment` produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub primed_classes: Vec<String>,
    pub primed_samples: usize,
    pub streamed_samples: usize,
    pub holdout_samples: usize,
    pub events_absorbed: u64,
    pub events_buffered: u64,
    pub events_new_class: u64,
    pub events_outlier_skipped: u64,
    pub discovered: Vec<String>,
    /// Model label → ground-truth label alignment used for scoring.
    pub mapping: Vec<(String, String)>,
    pub holdout_accuracy: Option<f64>,
    pub confusion: Confusion,
    pub trace: Vec<TraceRow>,
    pub timeline: Vec<TimelineRow>,
    pub features: Vec<FeatureRow>,
    pub rules: RuleDocument,
    pub model: Classifier,
}

fn holdout_count(total: usize, fraction: f64) -> usize {
    ((total as f64) * fraction).floor() as usize
}

/// Run the prime → stream → evaluate protocol.
pub fn run_experiment(
    dataset: &Dataset,
    schedule: &StreamSchedule,
    config: &ExperimentConfig,
) -> Result<ExperimentReport> {
    schedule.validate()?;
    let labels = dataset
        .labels
        .as_ref()
        .context("experiment needs a labeled dataset")?;
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        bail!("holdout fraction must lie in [0, 1)");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // per-class pools, shuffled; tail reserved as holdout
    let mut class_names = dataset.label_set();
    class_names.sort();
    let mut pools: Vec<(String, VecDeque<usize>)> = Vec::new();
    let mut holdout: Vec<usize> = Vec::new();
    for name in &class_names {
        let mut indices: Vec<usize> = (0..dataset.len()).filter(|&i| &labels[i] == name).collect();
        indices.shuffle(&mut rng);
        let reserve = holdout_count(indices.len(), config.holdout_fraction);
        let split = indices.len() - reserve;
        holdout.extend_from_slice(&indices[split..]);
        pools.push((name.clone(), indices[..split].iter().copied().collect()));
    }

    // draw each phase: round-robin over its classes, then split into the
    // labeled (priming) part and the unlabeled (stream) part
    let mut priming: Vec<usize> = Vec::new();
    let mut stream: Vec<usize> = Vec::new();
    for (pi, phase) in schedule.phases.iter().enumerate() {
        for class in &phase.classes {
            if !class_names.iter().any(|c| c == class) {
                bail!("phase {pi}: class '{class}' is not in the dataset");
            }
        }
        let mut drawn = Vec::with_capacity(phase.count);
        let mut exhausted_streak = 0usize;
        let mut turn = 0usize;
        while drawn.len() < phase.count {
            if exhausted_streak >= phase.classes.len() {
                bail!(
                    "phase {pi}: needs {} samples but pools ran out after {}",
                    phase.count,
                    drawn.len()
                );
            }
            let class = &phase.classes[turn % phase.classes.len()];
            turn += 1;
            let pool = &mut pools.iter_mut().find(|(n, _)| n == class).unwrap().1;
            match pool.pop_front() {
                Some(idx) => {
                    drawn.push(idx);
                    exhausted_streak = 0;
                }
                None => exhausted_streak += 1,
            }
        }
        drawn.shuffle(&mut rng);
        let labeled = ((phase.count as f64) * phase.labeled_fraction).ceil() as usize;
        priming.extend_from_slice(&drawn[..labeled.min(drawn.len())]);
        stream.extend_from_slice(&drawn[labeled.min(drawn.len())..]);
    }
    if priming.is_empty() {
        bail!("schedule produced no labeled samples to prime on");
    }

    // prime
    let priming_samples: Vec<(Vec<f64>, String)> = priming
        .iter()
        .map(|&i| (dataset.rows[i].clone(), labels[i].clone()))
        .collect();
    let mut model = Classifier::prime(
        dataset.schema.to_vec(),
        &priming_samples,
        config.model.clone(),
    )?;
    let mut primed_classes: Vec<String> = model.labels().iter().map(|s| s.to_string()).collect();
    primed_classes.sort();

    // stream
    let mut trace = Vec::with_capacity(stream.len());
    let mut timeline = vec![TimelineRow {
        samples_seen: 0,
        known_classes: model.class_count(),
        added: Vec::new(),
    }];
    let mut discovered: Vec<String> = Vec::new();
    let (mut absorbed, mut buffered, mut new_class, mut outliers) = (0u64, 0u64, 0u64, 0u64);
    for &i in &stream {
        let event = model.learn(&dataset.rows[i])?;
        let row = match &event {
            StreamEvent::OutlierSkipped { seq } => {
                outliers += 1;
                TraceRow {
                    seq: *seq,
                    lambda: None,
                    tracker_mean: model.tracker().mean(),
                    threshold: None,
                    decision: "outlier_skipped",
                    known_classes: model.class_count(),
                    density: None,
                }
            }
            StreamEvent::Absorbed {
                seq,
                lambda,
                threshold,
                density,
                ..
            } => {
                absorbed += 1;
                TraceRow {
                    seq: *seq,
                    lambda: Some(*lambda),
                    tracker_mean: model.tracker().mean(),
                    threshold: Some(*threshold),
                    decision: "absorbed",
                    known_classes: model.class_count(),
                    density: Some(*density),
                }
            }
            StreamEvent::NoveltyBuffered {
                seq,
                lambda,
                threshold,
                density,
            } => {
                buffered += 1;
                TraceRow {
                    seq: *seq,
                    lambda: Some(*lambda),
                    tracker_mean: model.tracker().mean(),
                    threshold: Some(*threshold),
                    decision: "novelty_buffered",
                    known_classes: model.class_count(),
                    density: Some(*density),
                }
            }
            StreamEvent::NewClassCreated {
                seq,
                lambda,
                threshold,
                labels: added,
            } => {
                buffered += 1;
                new_class += added.len() as u64;
                discovered.extend(added.iter().cloned());
                timeline.push(TimelineRow {
                    samples_seen: seq + 1,
                    known_classes: model.class_count(),
                    added: added.clone(),
                });
                TraceRow {
                    seq: *seq,
                    lambda: Some(*lambda),
                    tracker_mean: model.tracker().mean(),
                    threshold: Some(*threshold),
                    decision: "new_class",
                    known_classes: model.class_count(),
                    density: None,
                }
            }
        };
        trace.push(row);
    }

    // align model labels to ground truth using the streamed samples only
    let truth_set: Vec<String> = class_names.clone();
    let mut votes: Vec<(String, Vec<(String, u64)>)> = Vec::new();
    for &i in &stream {
        let predicted = model.predict(&dataset.rows[i])?.label;
        let truth = labels[i].clone();
        let entry = match votes.iter_mut().find(|(l, _)| *l == predicted) {
            Some(e) => e,
            None => {
                votes.push((predicted.clone(), Vec::new()));
                votes.last_mut().unwrap()
            }
        };
        match entry.1.iter_mut().find(|(t, _)| *t == truth) {
            Some((_, n)) => *n += 1,
            None => entry.1.push((truth, 1)),
        }
    }
    let mut mapping: Vec<(String, String)> = Vec::new();
    for label in model.labels() {
        let target = if truth_set.iter().any(|t| t == label) {
            label.to_string()
        } else {
            votes
                .iter()
                .find(|(l, _)| l == label)
                .and_then(|(_, vs)| {
                    let mut sorted = vs.clone();
                    // majority, ties to the lexicographically smaller label
                    sorted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                    sorted.first().map(|(t, _)| t.clone())
                })
                .unwrap_or_else(|| label.to_string())
        };
        mapping.push((label.to_string(), target));
    }
    let map_label = |l: &str| -> String {
        mapping
            .iter()
            .find(|(from, _)| from == l)
            .map(|(_, to)| to.clone())
            .unwrap_or_else(|| l.to_string())
    };

    // holdout evaluation
    let mut pairs: Vec<(String, String)> = Vec::new();
    for &i in &holdout {
        let predicted = map_label(&model.predict(&dataset.rows[i])?.label);
        pairs.push((labels[i].clone(), predicted));
    }
    let holdout_accuracy = if pairs.is_empty() {
        None
    } else {
        let hits = pairs.iter().filter(|(t, p)| t == p).count();
        Some(hits as f64 / pairs.len() as f64)
    };
    let confusion = Confusion::build(&pairs);

    // per-class feature rankings
    let mut features = Vec::new();
    for class in model.classes() {
        for (f, name) in dataset.schema.iter().enumerate() {
            features.push(FeatureRow {
                class: class.label().to_string(),
                feature: name.clone(),
                lambda: class.ranking().lambda_cum()[f],
                selected: class.mask()[f],
            });
        }
    }

    let rules = RuleDocument::export(&model)?;
    Ok(ExperimentReport {
        primed_classes,
        primed_samples: priming.len(),
        streamed_samples: stream.len(),
        holdout_samples: holdout.len(),
        events_absorbed: absorbed,
        events_buffered: buffered,
        events_new_class: new_class,
        events_outlier_skipped: outliers,
        discovered,
        mapping,
        holdout_accuracy,
        confusion,
        trace,
        timeline,
        features,
        rules,
        model,
    })
}

/// Plain accuracy + confusion of a model against a labeled dataset, with
/// exact label matching (no alignment).
pub fn evaluate(model: &Classifier, dataset: &Dataset) -> Result<(f64, Confusion)> {
    let labels = dataset
        .labels
        .as_ref()
        .context("evaluation needs a labeled dataset")?;
    if dataset.is_empty() {
        bail!("evaluation dataset is empty");
    }
    let mut pairs = Vec::with_capacity(dataset.len());
    for (row, truth) in dataset.rows.iter().zip(labels) {
        pairs.push((truth.clone(), model.predict(row)?.label));
    }
    let hits = pairs.iter().filter(|(t, p)| t == p).count();
    Ok((hits as f64 / pairs.len() as f64, Confusion::build(&pairs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_synth, SynthSpec};

    fn blob_data() -> Dataset {
        gen_synth(&SynthSpec {
            blobs: 2,
            dim: 2,
            separation: 10.0,
            per_blob: 60,
            noise_features: 0,
            seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(StreamSchedule { phases: vec![] }.validate().is_err());
        let bad_fraction = StreamSchedule {
            phases: vec![Phase {
                classes: vec!["a".into()],
                labeled_fraction: 1.5,
                count: 10,
            }],
        };
        assert!(bad_fraction.validate().is_err());
        let ok = StreamSchedule {
            phases: vec![Phase {
                classes: vec!["a".into()],
                labeled_fraction: 0.5,
                count: 10,
            }],
        };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn schedule_json_round_trip() {
        let text = r#"{"phases":[{"classes":["class_0"],"labeled_fraction":1.0,"count":40}]}"#;
        let schedule = StreamSchedule::from_json(text).unwrap();
        assert_eq!(schedule.phases.len(), 1);
        assert_eq!(schedule.phases[0].count, 40);
    }

    #[test]
    fn unknown_class_in_phase_is_rejected() {
        let data = blob_data();
        let schedule = StreamSchedule {
            phases: vec![Phase {
                classes: vec!["no_such".into()],
                labeled_fraction: 1.0,
                count: 5,
            }],
        };
        let err = run_experiment(&data, &schedule, &ExperimentConfig::default()).unwrap_err();
        assert!(format!("{err:#}").contains("no_such"));
    }

    #[test]
    fn oversized_phase_is_rejected() {
        let data = blob_data();
        let schedule = StreamSchedule {
            phases: vec![Phase {
                classes: vec!["class_0".into()],
                labeled_fraction: 1.0,
                count: 10_000,
            }],
        };
        assert!(run_experiment(&data, &schedule, &ExperimentConfig::default()).is_err());
    }

    #[test]
    fn fully_supervised_stationary_run_has_no_novelty() {
        let data = blob_data();
        let schedule = StreamSchedule {
            phases: vec![
                Phase {
                    classes: vec!["class_0".into(), "class_1".into()],
                    labeled_fraction: 1.0,
                    count: 80,
                },
                Phase {
                    classes: vec!["class_0".into(), "class_1".into()],
                    labeled_fraction: 0.0,
                    count: 16,
                },
            ],
        };
        let report = run_experiment(&data, &schedule, &ExperimentConfig::default()).unwrap();
        assert_eq!(report.events_new_class, 0);
        assert_eq!(report.discovered.len(), 0);
        assert!(report.holdout_accuracy.unwrap() >= 0.95);
        // trace covers every streamed sample; timeline is non-decreasing
        assert_eq!(report.trace.len(), report.streamed_samples);
        let counts: Vec<usize> = report.timeline.iter().map(|t| t.known_classes).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(report.confusion.total() as usize, report.holdout_samples);
    }

    #[test]
    fn default_protocol_discovers_the_held_back_class() {
        let data = blob_data();
        let schedule = StreamSchedule::default_protocol(&data, 0.2).unwrap();
        assert_eq!(schedule.phases[0].classes, vec!["class_0".to_string()]);
        let report = run_experiment(&data, &schedule, &ExperimentConfig::default()).unwrap();
        assert!(report.events_new_class >= 1, "no class discovered");
        assert!(report
            .mapping
            .iter()
            .any(|(from, to)| from.starts_with("new class") && to == "class_1"));
        assert!(report.holdout_accuracy.unwrap() >= 0.9);
    }

    #[test]
    fn one_percent_labels_track_full_supervision() {
        // 1% labels per class (priming) + unlabeled streaming stays within
        // 5 points of the fully supervised run
        let mut weak_sum = 0.0;
        let mut full_sum = 0.0;
        let runs = 10;
        for seed in 0..runs {
            let data = gen_synth(&SynthSpec {
                blobs: 3,
                dim: 2,
                separation: 10.0,
                per_blob: 125,
                noise_features: 0,
                seed,
            })
            .unwrap();
            let labels = data.label_set();
            let weak_schedule = StreamSchedule {
                phases: labels
                    .iter()
                    .map(|l| Phase {
                        classes: vec![l.clone()],
                        labeled_fraction: 0.01,
                        count: 100,
                    })
                    .collect(),
            };
            let full_schedule = StreamSchedule {
                phases: vec![Phase {
                    classes: labels.clone(),
                    labeled_fraction: 1.0,
                    count: 300,
                }],
            };
            let config = ExperimentConfig {
                seed,
                holdout_fraction: 0.2,
                model: Config::default(),
            };
            let weak = run_experiment(&data, &weak_schedule, &config).unwrap();
            let full = run_experiment(&data, &full_schedule, &config).unwrap();
            weak_sum += weak.holdout_accuracy.unwrap();
            full_sum += full.holdout_accuracy.unwrap();
        }
        let weak_mean = weak_sum / runs as f64;
        let full_mean = full_sum / runs as f64;
        assert!(
            weak_mean >= full_mean - 0.05,
            "weak supervision {weak_mean:.4} fell more than 5 points below full {full_mean:.4}"
        );
    }

    #[test]
    fn identical_seeds_reproduce_the_report() {
        let data = blob_data();
        let schedule = StreamSchedule::default_protocol(&data, 0.2).unwrap();
        let a = run_experiment(&data, &schedule, &ExperimentConfig::default()).unwrap();
        let b = run_experiment(&data, &schedule, &ExperimentConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
