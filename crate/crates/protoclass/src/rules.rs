//! IF–THEN rule export.
//!
//! Each class becomes one rule whose antecedents are its prototypes
//! (reported in raw feature units), annotated with support, radius and the
//! class's selected features. The structured form carries enough state
//! (preprocessing statistics, clouds, masks) to rebuild a predictor whose
//! outputs match the exporting model exactly.

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, Config, FeaturePolicy};
use crate::clouds::{ClassModel, DataCloud};
use crate::density::FeatureRanking;
use crate::error::Result;
use crate::novelty::{ConfidenceTracker, NoveltyConfig, OutlierBuffer};
use crate::preprocess::RunningStats;

/// One prototype clause of a rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Antecedent {
    pub cloud_id: usize,
    /// Prototype in raw feature units.
    pub prototype_raw: Vec<f64>,
    /// Prototype in the exporting model's normalized frame.
    pub prototype_normalized: Vec<f64>,
    pub support: u64,
    pub radius: f64,
    pub radius_sq: f64,
}

/// One IF–THEN rule: a disjunction of prototype clauses implying a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub label: String,
    pub selected_features: Vec<String>,
    pub mask: Vec<bool>,
    pub antecedents: Vec<Antecedent>,
}

/// Exported preprocessing state, frozen at export time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsExport {
    pub count: u64,
    pub mean: Vec<f64>,
    pub mean_sq: Vec<f64>,
    pub std_min: Vec<f64>,
    pub std_max: Vec<f64>,
}

/// Machine-readable rule set; round-trips to an equivalent predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleDocument {
    pub schema: Vec<String>,
    pub stats: StatsExport,
    pub feature_policy: FeaturePolicy,
    pub shared_mask: bool,
    pub rules: Vec<Rule>,
}

impl RuleDocument {
    /// Export the rules of a trained classifier.
    pub fn export(model: &Classifier) -> Result<Self> {
        let stats = model.stats();
        let mut rules = Vec::with_capacity(model.classes().len());
        for class in model.classes() {
            let mut antecedents = Vec::with_capacity(class.clouds().len());
            for cloud in class.clouds() {
                antecedents.push(Antecedent {
                    cloud_id: cloud.id(),
                    prototype_raw: cloud.prototype_raw().to_vec(),
                    prototype_normalized: cloud.prototype_normalized(stats)?,
                    support: cloud.support(),
                    radius: cloud.radius_sq().sqrt(),
                    radius_sq: cloud.radius_sq(),
                });
            }
            let selected_features = model
                .schema()
                .iter()
                .zip(class.mask())
                .filter(|(_, &m)| m)
                .map(|(name, _)| name.clone())
                .collect();
            rules.push(Rule {
                label: class.label().to_string(),
                selected_features,
                mask: class.mask().to_vec(),
                antecedents,
            });
        }
        Ok(Self {
            schema: model.schema().to_vec(),
            stats: StatsExport {
                count: stats.count(),
                mean: stats.mean().to_vec(),
                mean_sq: stats.mean_sq().to_vec(),
                std_min: stats.std_min().to_vec(),
                std_max: stats.std_max().to_vec(),
            },
            feature_policy: model.config().feature_policy,
            shared_mask: model.config().shared_mask,
            rules,
        })
    }

    /// Human-readable rendering, one rule per class.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, rule) in self.rules.iter().enumerate() {
            let clauses: Vec<String> = rule
                .antecedents
                .iter()
                .map(|a| format!("(x ~ p{})", a.cloud_id + 1))
                .collect();
            out.push_str(&format!(
                "R{}: IF {} THEN '{}'\n",
                i + 1,
                clauses.join(" OR "),
                rule.label
            ));
            out.push_str(&format!(
                "  features: {}\n",
                rule.selected_features.join(", ")
            ));
            for a in &rule.antecedents {
                let coords: Vec<String> = self
                    .schema
                    .iter()
                    .zip(&a.prototype_raw)
                    .map(|(name, v)| format!("{name}={v:.6}"))
                    .collect();
                out.push_str(&format!(
                    "  p{} = ({}) [support={}, radius={:.6}]\n",
                    a.cloud_id + 1,
                    coords.join(", "),
                    a.support,
                    a.radius
                ));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rebuild a prediction-equivalent classifier from the rule set.
    ///
    /// Class means are recovered exactly as the support-weighted mean of the
    /// prototypes; the confidence tracker and outlier buffer start empty, so
    /// the result is a predictor, not a resumed learner.
    pub fn into_classifier(self) -> Result<Classifier> {
        let dim = self.schema.len();
        let stats = RunningStats::from_parts(
            self.stats.count,
            self.stats.mean,
            self.stats.mean_sq,
            self.stats.std_min,
            self.stats.std_max,
        )?;
        let mut classes = Vec::with_capacity(self.rules.len());
        for rule in self.rules {
            let mut clouds = Vec::with_capacity(rule.antecedents.len());
            let mut total_support = 0u64;
            let mut mean = vec![0.0; dim];
            for a in &rule.antecedents {
                total_support += a.support;
                clouds.push(DataCloud::from_parts(
                    a.cloud_id,
                    a.prototype_raw.clone(),
                    a.support,
                    a.radius_sq,
                ));
            }
            for a in &rule.antecedents {
                let w = a.support as f64 / total_support as f64;
                for f in 0..dim {
                    mean[f] += w * a.prototype_raw[f];
                }
            }
            let mean_sq = mean.iter().map(|m| m * m).collect();
            classes.push(ClassModel::from_parts(
                rule.label,
                clouds,
                mean,
                mean_sq,
                total_support,
                FeatureRanking::new(dim),
                rule.mask,
            ));
        }
        let config = Config {
            novelty: NoveltyConfig::default(),
            feature_policy: self.feature_policy,
            shared_mask: self.shared_mask,
            freeze_stats: true,
            strict_variance: false,
        };
        let tracker = ConfidenceTracker::new(config.novelty.m_sigma)?;
        let buffer = OutlierBuffer::new(config.novelty.buffer_expiry);
        Ok(Classifier::from_parts(
            self.schema,
            stats,
            classes,
            tracker,
            buffer,
            config,
        ))
    }
}
