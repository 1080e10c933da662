//! Orchestration: priming from labeled samples, streaming learning with
//! novelty routing, winners-take-all prediction, and per-class feature
//! selection.
//!
//! Learning is strictly sequential (stream order is semantics); prediction
//! is read-only and safe to fan out across inputs.

use serde::{Deserialize, Serialize};

use crate::clouds::{project, ClassModel};
use crate::density;
use crate::error::{Error, Result};
use crate::novelty::{
    max_confidence, try_form_new_classes, ConfidenceTracker, Decision, NoveltyConfig, OutlierBuffer,
};
use crate::preprocess::{RunningStats, VarianceMode};

/// Policy deriving a class's feature mask from its Λ ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeaturePolicy {
    /// Keep features whose Λ is at or above the per-class mean of Λ.
    Mean,
    /// Keep the k features with the highest Λ.
    TopK(usize),
    /// Keep every feature.
    Off,
}

/// Classifier configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub novelty: NoveltyConfig,
    pub feature_policy: FeaturePolicy,
    /// Predict with the union of all class masks instead of each class's own.
    pub shared_mask: bool,
    /// Stop updating preprocessing statistics after priming.
    pub freeze_stats: bool,
    /// Error on zero-variance features instead of flooring them.
    pub strict_variance: bool,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            novelty: NoveltyConfig::default(),
            feature_policy: FeaturePolicy::Mean,
            shared_mask: false,
            freeze_stats: false,
            strict_variance: false,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.novelty.validate()?;
        if let FeaturePolicy::TopK(0) = self.feature_policy {
            return Err(Error::InvalidParameter {
                name: "feature_policy",
                message: "top-k must keep at least one feature".into(),
            });
        }
        Ok(())
    }

    fn variance_mode(&self) -> VarianceMode {
        if self.strict_variance {
            VarianceMode::Strict
        } else {
            VarianceMode::Lenient
        }
    }
}

/// What happened to one streamed sample.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    /// Standardized magnitude reached the outlier gate; not used for training.
    OutlierSkipped { seq: u64 },
    /// Sample absorbed into a known class.
    Absorbed {
        seq: u64,
        label: String,
        cloud_id: usize,
        created_cloud: bool,
        lambda: f64,
        threshold: f64,
        /// Recursive density estimate of the sample over the winning class.
        density: f64,
    },
    /// Confidence drop: sample held in the outlier buffer.
    NoveltyBuffered {
        seq: u64,
        lambda: f64,
        threshold: f64,
        density: f64,
    },
    /// Buffered samples clustered into one or more new classes.
    NewClassCreated {
        seq: u64,
        lambda: f64,
        threshold: f64,
        labels: Vec<String>,
    },
}

impl StreamEvent {
    pub fn seq(&self) -> u64 {
        match self {
            StreamEvent::OutlierSkipped { seq }
            | StreamEvent::Absorbed { seq, .. }
            | StreamEvent::NoveltyBuffered { seq, .. }
            | StreamEvent::NewClassCreated { seq, .. } => *seq,
        }
    }
}

/// Per-class score attached to a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub label: String,
    pub lambda: f64,
    pub typicality: f64,
}

/// Winners-take-all prediction with the full per-class score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub scores: Vec<ClassScore>,
    /// True iff the query hit the preprocessing outlier gate (it is still
    /// classified; the gate only excludes samples from training).
    pub outlier: bool,
}

/// Streaming prototype classifier with confidence-drop novelty detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    schema: Vec<String>,
    stats: RunningStats,
    classes: Vec<ClassModel>,
    tracker: ConfidenceTracker,
    buffer: OutlierBuffer,
    config: Config,
    next_auto_label: u64,
    seq: u64,
}

impl Classifier {
    /// Build a classifier from a labeled priming set.
    ///
    /// Statistics are built over the whole set first, then each non-outlier
    /// sample initializes or extends its class in arrival order. The
    /// confidence tracker is seeded by re-scoring the priming samples
    /// against the finished prototypes.
    pub fn prime(
        schema: Vec<String>,
        samples: &[(Vec<f64>, String)],
        config: Config,
    ) -> Result<Self> {
        config.validate()?;
        if samples.is_empty() {
            return Err(Error::EmptyInput {
                reason: "priming set is empty".into(),
            });
        }
        let dim = schema.len();
        let mut stats = RunningStats::new(dim);
        for (x, _) in samples {
            stats.update(x)?;
        }
        stats.recalibrate_extrema(samples.iter().map(|(x, _)| x.as_slice()))?;

        let mode = config.variance_mode();
        let mut classes: Vec<ClassModel> = Vec::new();
        let mut usable: Vec<&(Vec<f64>, String)> = Vec::new();
        for sample in samples {
            let (x, label) = sample;
            let processed = stats.process(x, mode)?;
            if processed.outlier {
                continue;
            }
            usable.push(sample);
            match classes.iter_mut().find(|c| c.label() == label.as_str()) {
                Some(class) => {
                    class.absorb(x, &stats)?;
                }
                None => classes.push(ClassModel::init(label.clone(), x, &stats)?),
            }
        }
        if classes.is_empty() {
            return Err(Error::EmptyInput {
                reason: "every priming sample hit the outlier gate".into(),
            });
        }

        let mut tracker = ConfidenceTracker::new(config.novelty.m_sigma)?;
        for (x, _) in &usable {
            let z = project(&stats, x)?;
            let (lambda, _, _) = max_confidence(&classes, &z, &stats)?;
            tracker.update(lambda)?;
        }

        let buffer = OutlierBuffer::new(config.novelty.buffer_expiry);
        let mut model = Self {
            schema,
            stats,
            classes,
            tracker,
            buffer,
            config,
            next_auto_label: 1,
            seq: 0,
        };
        for i in 0..model.classes.len() {
            model.refresh_mask(i);
        }
        Ok(model)
    }

    pub(crate) fn from_parts(
        schema: Vec<String>,
        stats: RunningStats,
        classes: Vec<ClassModel>,
        tracker: ConfidenceTracker,
        buffer: OutlierBuffer,
        config: Config,
    ) -> Self {
        Self {
            schema,
            stats,
            classes,
            tracker,
            buffer,
            config,
            next_auto_label: 1,
            seq: 0,
        }
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn stats(&self) -> &RunningStats {
        &self.stats
    }

    pub fn classes(&self) -> &[ClassModel] {
        &self.classes
    }

    pub fn tracker(&self) -> &ConfidenceTracker {
        &self.tracker
    }

    pub fn buffer(&self) -> &OutlierBuffer {
        &self.buffer
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.label()).collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.schema.len() {
            return Err(Error::DimensionMismatch {
                expected: self.schema.len(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Learn from one unlabeled sample.
    ///
    /// The sample is standardized and normalized; outliers are skipped.
    /// Otherwise its confidence is checked against the m-σ band and the
    /// sample is either absorbed into the winning class (which updates the
    /// tracker) or buffered, possibly founding new classes.
    pub fn learn(&mut self, x: &[f64]) -> Result<StreamEvent> {
        self.check_dim(x)?;
        let seq = self.seq;
        self.seq += 1;

        if !self.config.freeze_stats {
            self.stats.update(x)?;
        }
        let processed = self.stats.process(x, self.config.variance_mode())?;
        if processed.outlier {
            return Ok(StreamEvent::OutlierSkipped { seq });
        }

        let z = &processed.normalized;
        let (lambda, class_idx, _) = max_confidence(&self.classes, z, &self.stats)?;
        let threshold = self.tracker.threshold();
        let density = self.classes[class_idx].global_density(z, &self.stats)?;

        match self.tracker.check(lambda) {
            Decision::DropDetected => {
                self.buffer.push(x.to_vec(), lambda, seq);
                let formed = try_form_new_classes(
                    &mut self.buffer,
                    &self.config.novelty,
                    &self.stats,
                    &mut self.next_auto_label,
                )?;
                if formed.is_empty() {
                    Ok(StreamEvent::NoveltyBuffered {
                        seq,
                        lambda,
                        threshold,
                        density,
                    })
                } else {
                    let mut labels = Vec::new();
                    for mut class in formed {
                        while self.classes.iter().any(|c| c.label() == class.label()) {
                            class.set_label(format!("new class {}", self.next_auto_label));
                            self.next_auto_label += 1;
                        }
                        labels.push(class.label().to_string());
                        self.classes.push(class);
                        self.refresh_mask(self.classes.len() - 1);
                    }
                    Ok(StreamEvent::NewClassCreated {
                        seq,
                        lambda,
                        threshold,
                        labels,
                    })
                }
            }
            Decision::Absorb => {
                let outcome = self.classes[class_idx].absorb(x, &self.stats)?;
                self.tracker.update(lambda)?;
                self.refresh_mask(class_idx);
                Ok(StreamEvent::Absorbed {
                    seq,
                    label: self.classes[class_idx].label().to_string(),
                    cloud_id: outcome.cloud_id,
                    created_cloud: outcome.created,
                    lambda,
                    threshold,
                    density,
                })
            }
        }
    }

    /// Winners-take-all prediction. Does not mutate the model; outliers are
    /// still classified.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_dim(x)?;
        if self.classes.is_empty() {
            return Err(Error::NoClasses);
        }
        let processed = self.stats.process(x, self.config.variance_mode())?;
        let z = &processed.normalized;

        let shared = if self.config.shared_mask {
            Some(self.shared_mask())
        } else {
            None
        };
        let mut lambdas = Vec::with_capacity(self.classes.len());
        for class in &self.classes {
            let mask = match self.config.feature_policy {
                FeaturePolicy::Off => None,
                _ => match &shared {
                    Some(m) => Some(m.as_slice()),
                    None => Some(class.mask()),
                },
            };
            let (lambda, _) = class.confidence(z, &self.stats, mask)?;
            lambdas.push(lambda);
        }
        let mut best = 0;
        for (i, l) in lambdas.iter().enumerate() {
            if *l > lambdas[best] {
                best = i;
            }
        }
        let tau = density::typicality(&lambdas)?;
        let scores = self
            .classes
            .iter()
            .zip(lambdas.iter().zip(tau.iter()))
            .map(|(class, (&lambda, &typicality))| ClassScore {
                label: class.label().to_string(),
                lambda,
                typicality,
            })
            .collect();
        Ok(Prediction {
            label: self.classes[best].label().to_string(),
            scores,
            outlier: processed.outlier,
        })
    }

    /// Union of all per-class masks.
    pub fn shared_mask(&self) -> Vec<bool> {
        let dim = self.schema.len();
        let mut mask = vec![false; dim];
        for class in &self.classes {
            for (f, &m) in class.mask().iter().enumerate() {
                mask[f] = mask[f] || m;
            }
        }
        mask
    }

    /// Derive a mask from a Λ ranking under the given policy. At least the
    /// top-ranked feature is always kept.
    pub fn mask_for_ranking(ranking: &density::FeatureRanking, policy: FeaturePolicy) -> Vec<bool> {
        let lambda = ranking.lambda_cum();
        let dim = lambda.len();
        match policy {
            FeaturePolicy::Off => vec![true; dim],
            FeaturePolicy::Mean => {
                let mean = lambda.iter().sum::<f64>() / dim as f64;
                let mut mask: Vec<bool> = lambda.iter().map(|&l| l >= mean).collect();
                if !mask.iter().any(|&m| m) {
                    mask[ranking.rank_order()[0]] = true;
                }
                mask
            }
            FeaturePolicy::TopK(k) => {
                let keep = k.clamp(1, dim);
                let mut mask = vec![false; dim];
                for &f in ranking.rank_order().iter().take(keep) {
                    mask[f] = true;
                }
                mask
            }
        }
    }

    fn refresh_mask(&mut self, class_idx: usize) {
        let mask = Self::mask_for_ranking(
            self.classes[class_idx].ranking(),
            self.config.feature_policy,
        );
        self.classes[class_idx].set_mask(mask);
    }

    /// Replace a class label, e.g. an auto-generated `"new class 1"`, with a
    /// meaningful one. Labels stay unique; the model content is unchanged.
    pub fn rename_class(&mut self, from: &str, to: &str) -> Result<()> {
        if self.classes.iter().any(|c| c.label() == to) {
            return Err(Error::DuplicateLabel { label: to.into() });
        }
        match self.classes.iter_mut().find(|c| c.label() == from) {
            Some(class) => {
                class.set_label(to.into());
                Ok(())
            }
            None => Err(Error::UnknownClass { label: from.into() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(dim: usize) -> Vec<String> {
        (0..dim).map(|f| format!("f{f}")).collect()
    }

    /// Two tight blobs around (0, 0) and (10, 10), labeled a / b.
    fn two_blob_priming() -> Vec<(Vec<f64>, String)> {
        let mut samples = Vec::new();
        let offsets = [-0.6, -0.3, 0.0, 0.3, 0.6, -0.45, -0.15, 0.15, 0.45, 0.05];
        for (i, &d) in offsets.iter().enumerate() {
            samples.push((vec![d, offsets[(i + 3) % offsets.len()]], "a".to_string()));
        }
        for (i, &d) in offsets.iter().enumerate() {
            samples.push((
                vec![10.0 + d, 10.0 + offsets[(i + 7) % offsets.len()]],
                "b".to_string(),
            ));
        }
        samples
    }

    #[test]
    fn priming_single_sample_single_class() {
        let model = Classifier::prime(
            schema(2),
            &[(vec![1.0, 2.0], "only".into())],
            Config::default(),
        )
        .unwrap();
        assert_eq!(model.class_count(), 1);
        assert_eq!(model.classes()[0].clouds().len(), 1);
        assert_eq!(model.classes()[0].sample_count(), 1);
    }

    #[test]
    fn priming_empty_set_is_an_error() {
        assert!(Classifier::prime(schema(2), &[], Config::default()).is_err());
    }

    #[test]
    fn primed_samples_repredict_consistently() {
        let samples = two_blob_priming();
        let model = Classifier::prime(schema(2), &samples, Config::default()).unwrap();
        let mut hits = 0;
        for (x, label) in &samples {
            if &model.predict(x).unwrap().label == label {
                hits += 1;
            }
        }
        assert!(hits as f64 / samples.len() as f64 >= 0.95);
    }

    #[test]
    fn predict_exact_prototype_hit() {
        let samples = two_blob_priming();
        let model = Classifier::prime(schema(2), &samples, Config::default()).unwrap();
        let proto = model.classes()[1].clouds()[0].prototype_raw().to_vec();
        let pred = model.predict(&proto).unwrap();
        assert_eq!(pred.label, "b");
        let score = pred.scores.iter().find(|s| s.label == "b").unwrap();
        assert!((score.lambda - 1.0).abs() < 1e-9);
        // typicality normalizes over classes
        let total: f64 = pred.scores.iter().map(|s| s.typicality).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn midpoint_tie_breaks_to_the_lower_class_id() {
        // one prototype per class at ±1: every projection is binary-exact,
        // so the midpoint query ties exactly
        let config = Config {
            feature_policy: FeaturePolicy::Off,
            ..Config::default()
        };
        let samples = vec![
            (vec![-1.0, -1.0], "a".to_string()),
            (vec![1.0, 1.0], "b".to_string()),
        ];
        let model = Classifier::prime(schema(2), &samples, config).unwrap();
        let pred = model.predict(&[0.0, 0.0]).unwrap();
        assert_eq!(pred.scores[0].lambda, pred.scores[1].lambda);
        assert_eq!(pred.label, "a");
    }

    #[test]
    fn predict_does_not_mutate_the_model() {
        let samples = two_blob_priming();
        let model = Classifier::prime(schema(2), &samples, Config::default()).unwrap();
        let snapshot = model.clone();
        for x in [[0.0, 0.0], [5.0, 5.0], [10.0, 10.0], [100.0, -3.0]] {
            model.predict(&x).unwrap();
        }
        assert_eq!(model, snapshot);
    }

    #[test]
    fn absorbing_a_prototype_raises_support() {
        let samples = two_blob_priming();
        let mut model = Classifier::prime(schema(2), &samples, Config::default()).unwrap();
        let proto = model.classes()[0].clouds()[0].prototype_raw().to_vec();
        let support_before = model.classes()[0].clouds()[0].support();
        let event = model.learn(&proto).unwrap();
        match event {
            StreamEvent::Absorbed { label, lambda, .. } => {
                assert_eq!(label, "a");
                assert!(lambda > 0.99);
            }
            other => panic!("expected absorption, got {other:?}"),
        }
        assert!(model.classes()[0].clouds()[0].support() >= support_before);
    }

    #[test]
    fn identical_streams_produce_identical_event_logs() {
        let samples = two_blob_priming();
        let stream: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![5.0 + t.sin() * 8.0, 5.0 + t.cos() * 8.0]
            })
            .collect();
        let run = || {
            let mut model = Classifier::prime(schema(2), &samples, Config::default()).unwrap();
            let mut events = Vec::new();
            for x in &stream {
                events.push(model.learn(x).unwrap());
            }
            (model, events)
        };
        let (m1, e1) = run();
        let (m2, e2) = run();
        assert_eq!(e1, e2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn mask_policies() {
        let mut ranking = density::FeatureRanking::new(3);
        ranking.accumulate(&[0.9, 0.3, 0.3]).unwrap();
        // mean = 0.5 → only the first feature survives
        assert_eq!(
            Classifier::mask_for_ranking(&ranking, FeaturePolicy::Mean),
            vec![true, false, false]
        );
        assert_eq!(
            Classifier::mask_for_ranking(&ranking, FeaturePolicy::TopK(2)),
            vec![true, true, false]
        );
        assert_eq!(
            Classifier::mask_for_ranking(&ranking, FeaturePolicy::Off),
            vec![true, true, true]
        );
        // ties at the mean keep everything
        let mut even = density::FeatureRanking::new(2);
        even.accumulate(&[0.9, 0.9]).unwrap();
        assert_eq!(
            Classifier::mask_for_ranking(&even, FeaturePolicy::Mean),
            vec![true, true]
        );
    }

    #[test]
    fn rename_class_round_trip() {
        let samples = two_blob_priming();
        let mut model = Classifier::prime(schema(2), &samples, Config::default()).unwrap();
        model.rename_class("a", "rainy").unwrap();
        let pred = model.predict(&[0.0, 0.0]).unwrap();
        assert_eq!(pred.label, "rainy");
        assert!(matches!(
            model.rename_class("rainy", "b"),
            Err(Error::DuplicateLabel { .. })
        ));
        assert!(matches!(
            model.rename_class("missing", "x"),
            Err(Error::UnknownClass { .. })
        ));
    }

    #[test]
    fn learn_rejects_wrong_dimension() {
        let samples = two_blob_priming();
        let mut model = Classifier::prime(schema(2), &samples, Config::default()).unwrap();
        assert!(model.learn(&[1.0]).is_err());
        assert!(model.predict(&[1.0, 2.0, 3.0]).is_err());
    }
}
