//! Streaming prototype-based classification with autonomous discovery of
//! unseen classes.
//!
//! The classifier is primed from a small labeled set, then learns from an
//! unlabeled stream: incoming samples are standardized and unity-normalized
//! against running statistics, scored by Cauchy-form density against every
//! class's prototypes, and routed by a confidence-drop test. Samples whose
//! confidence falls below the recursive `mean − m·σ` band are buffered;
//! when enough of them cluster into one data cloud they found a new class,
//! without retraining. Features are ranked per class by accumulated
//! per-feature density, and the learned structure exports as readable
//! IF–THEN rules.
//!
//! Everything is recursive and single-pass: no iteration over history, no
//! gradient steps, and deterministic given the input order.

// per-feature math walks several parallel vectors by index
#![allow(clippy::needless_range_loop)]

pub mod classifier;
pub mod clouds;
pub mod density;
pub mod error;
pub mod novelty;
pub mod persist;
pub mod preprocess;
pub mod rules;

pub use classifier::{ClassScore, Classifier, Config, FeaturePolicy, Prediction, StreamEvent};
pub use clouds::{r_star, r_star_sq, AbsorbOutcome, ClassModel, DataCloud};
pub use density::{
    cauchy_density, global_density, per_feature_density, typicality, FeatureRanking,
};
pub use error::{Error, Result};
pub use novelty::{
    max_confidence, BufferedSample, ConfidenceTracker, Decision, NoveltyConfig, OutlierBuffer,
};
pub use preprocess::{ProcessedSample, RunningStats, VarianceMode, OUTLIER_Z};
pub use rules::{Antecedent, Rule, RuleDocument};
