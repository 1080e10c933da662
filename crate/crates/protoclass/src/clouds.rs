//! Per-class prototype store: data-cloud initialization, nearest-prototype
//! assignment, the density-based cloud-creation condition, and online
//! meta-parameter updates.
//!
//! Prototypes and class moments are held in raw feature units and projected
//! into the current standardized/normalized frame on demand. Standardization
//! and unity normalization are affine per feature, and every stored quantity
//! is an exact running mean, so the projected values coincide with what a
//! batch pass over the members would produce in that frame. This keeps
//! prototype geometry consistent while the preprocessing statistics evolve
//! mid-stream.
//!
//! Learning is single-writer per class; prediction-time reads operate on
//! immutable snapshots.

use serde::{Deserialize, Serialize};

use crate::density::{self, FeatureRanking};
use crate::error::{Error, Result};
use crate::preprocess::{RunningStats, VarianceMode, RANGE_FLOOR, SIGMA_FLOOR};

/// Minimum value the squared radius may take under the online update.
pub const RADIUS_SQ_FLOOR: f64 = 1e-6;

/// Initialization radius: `√(2 − 2·cos 30°)`, from a 30° angular-similarity
/// threshold between feature vectors.
pub fn r_star() -> f64 {
    r_star_sq().sqrt()
}

/// Squared initialization radius, `2 − 2·cos 30° = 2 − √3`.
pub fn r_star_sq() -> f64 {
    2.0 - 2.0 * (std::f64::consts::PI / 6.0).cos()
}

/// One prototype with its support count and squared influence radius.
///
/// The prototype is the exact running mean, in raw units, of the samples
/// assigned to the cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataCloud {
    id: usize,
    prototype: Vec<f64>,
    support: u64,
    radius_sq: f64,
}

impl DataCloud {
    fn new(id: usize, prototype: Vec<f64>) -> Self {
        Self {
            id,
            prototype,
            support: 1,
            radius_sq: r_star_sq(),
        }
    }

    pub(crate) fn from_parts(id: usize, prototype: Vec<f64>, support: u64, radius_sq: f64) -> Self {
        Self {
            id,
            prototype,
            support,
            radius_sq,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    /// Prototype in raw feature units.
    pub fn prototype_raw(&self) -> &[f64] {
        &self.prototype
    }

    pub fn support(&self) -> u64 {
        self.support
    }

    pub fn radius_sq(&self) -> f64 {
        self.radius_sq
    }

    /// Prototype projected into the current normalized frame, in `[0, 1]`.
    pub fn prototype_normalized(&self, stats: &RunningStats) -> Result<Vec<f64>> {
        project(stats, &self.prototype)
    }
}

/// Outcome of absorbing one sample into a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AbsorbOutcome {
    /// Cloud that received the sample (newly created or updated).
    pub cloud_id: usize,
    /// True if the sample founded a new cloud.
    pub created: bool,
}

/// A labeled class: its data clouds, running moments over absorbed samples,
/// per-feature contribution ranking, and feature mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassModel {
    label: String,
    clouds: Vec<DataCloud>,
    mean: Vec<f64>,
    mean_sq: Vec<f64>,
    sample_count: u64,
    ranking: FeatureRanking,
    mask: Vec<bool>,
}

impl ClassModel {
    /// Initialize a class from its first (non-outlier) sample.
    pub fn init(label: impl Into<String>, x: &[f64], stats: &RunningStats) -> Result<Self> {
        let dim = x.len();
        let mut model = Self {
            label: label.into(),
            clouds: vec![DataCloud::new(0, x.to_vec())],
            mean: x.to_vec(),
            mean_sq: x.iter().map(|v| v * v).collect(),
            sample_count: 1,
            ranking: FeatureRanking::new(dim),
            mask: vec![true; dim],
        };
        let z = project(stats, x)?;
        let contribution = model.per_feature_density(&z, stats)?;
        model.ranking.accumulate(&contribution)?;
        Ok(model)
    }

    pub(crate) fn from_parts(
        label: String,
        clouds: Vec<DataCloud>,
        mean: Vec<f64>,
        mean_sq: Vec<f64>,
        sample_count: u64,
        ranking: FeatureRanking,
        mask: Vec<bool>,
    ) -> Self {
        Self {
            label,
            clouds,
            mean,
            mean_sq,
            sample_count,
            ranking,
            mask,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub(crate) fn set_label(&mut self, label: String) {
        self.label = label;
    }

    pub fn clouds(&self) -> &[DataCloud] {
        &self.clouds
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    /// Running mean of absorbed samples, raw units.
    pub fn mean_raw(&self) -> &[f64] {
        &self.mean
    }

    /// Running mean of squared raw values, per feature.
    pub fn mean_sq_raw(&self) -> &[f64] {
        &self.mean_sq
    }

    pub fn ranking(&self) -> &FeatureRanking {
        &self.ranking
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn set_mask(&mut self, mask: Vec<bool>) {
        self.mask = mask;
    }

    fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Class mean projected into the current normalized frame.
    pub fn mean_normalized(&self, stats: &RunningStats) -> Result<Vec<f64>> {
        project(stats, &self.mean)
    }

    /// Per-feature variance of the class in the current normalized frame.
    pub fn variance_normalized(&self, stats: &RunningStats) -> Result<Vec<f64>> {
        let scale = frame_scale(stats, self.dim())?;
        Ok((0..self.dim())
            .map(|f| {
                let var_raw = (self.mean_sq[f] - self.mean[f] * self.mean[f]).max(0.0);
                var_raw * scale[f] * scale[f]
            })
            .collect())
    }

    /// Mean of squared norms of the class samples in the normalized frame
    /// (the scalar the recursive density estimate requires).
    pub fn mean_sq_norm_normalized(&self, stats: &RunningStats) -> Result<f64> {
        let mean_n = self.mean_normalized(stats)?;
        let var_n = self.variance_normalized(stats)?;
        Ok((0..self.dim())
            .map(|f| var_n[f] + mean_n[f] * mean_n[f])
            .sum())
    }

    /// Recursive density estimate of a normalized point over this class.
    pub fn global_density(&self, z: &[f64], stats: &RunningStats) -> Result<f64> {
        let mean_n = self.mean_normalized(stats)?;
        let msn = self.mean_sq_norm_normalized(stats)?;
        density::global_density(z, &mean_n, msn)
    }

    /// Per-feature density of a normalized point against the class moments.
    pub fn per_feature_density(&self, z: &[f64], stats: &RunningStats) -> Result<Vec<f64>> {
        let mean_n = self.mean_normalized(stats)?;
        let var_n = self.variance_normalized(stats)?;
        density::per_feature_density(z, &mean_n, &var_n)
    }

    /// Index of the prototype nearest to a normalized point; ties break to
    /// the lowest cloud id.
    pub fn nearest_cloud(&self, z: &[f64], stats: &RunningStats) -> Result<usize> {
        if self.clouds.is_empty() {
            return Err(Error::EmptyClassModel);
        }
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, cloud) in self.clouds.iter().enumerate() {
            let p = cloud.prototype_normalized(stats)?;
            let d = density::squared_distance(z, &p);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        Ok(best)
    }

    /// Density-based cloud-creation condition.
    ///
    /// True iff the density at `z` strictly exceeds the density at every
    /// prototype or strictly falls below all of them. Ties absorb into an
    /// existing cloud, so duplicate samples never spawn clouds.
    ///
    /// The class moments must already reflect the sample being tested.
    pub fn should_create_cloud(&self, z: &[f64], stats: &RunningStats) -> Result<bool> {
        if self.clouds.is_empty() {
            return Err(Error::EmptyClassModel);
        }
        let mean_n = self.mean_normalized(stats)?;
        let msn = self.mean_sq_norm_normalized(stats)?;
        let dx = density::global_density(z, &mean_n, msn)?;
        let mut dmax = f64::NEG_INFINITY;
        let mut dmin = f64::INFINITY;
        for cloud in &self.clouds {
            let p = cloud.prototype_normalized(stats)?;
            let dp = density::global_density(&p, &mean_n, msn)?;
            dmax = dmax.max(dp);
            dmin = dmin.min(dp);
        }
        Ok(dx > dmax || dx < dmin)
    }

    /// Found a new cloud with the sample as its prototype.
    pub fn add_cloud(&mut self, x: &[f64]) -> usize {
        let id = self.clouds.len();
        self.clouds.push(DataCloud::new(id, x.to_vec()));
        id
    }

    /// Fold the sample into cloud `idx`: support, prototype running mean,
    /// and the squared-radius recursion
    /// `r² ← (r² + (1 − ‖p_new‖²)) / 2` evaluated on the updated prototype
    /// in the current normalized frame, floored at [`RADIUS_SQ_FLOOR`].
    pub fn update_cloud(&mut self, idx: usize, x: &[f64], stats: &RunningStats) -> Result<()> {
        let dim = self.dim();
        let cloud = &mut self.clouds[idx];
        // increment form of (S/(S+1))·p + (1/(S+1))·x; exact on duplicates
        let s_new = (cloud.support + 1) as f64;
        for f in 0..dim {
            cloud.prototype[f] += (x[f] - cloud.prototype[f]) / s_new;
        }
        cloud.support += 1;
        let p_norm = project(stats, &cloud.prototype)?;
        let norm_sq = density::squared_norm(&p_norm);
        let updated = (cloud.radius_sq + (1.0 - norm_sq)) / 2.0;
        if updated < RADIUS_SQ_FLOOR {
            log::debug!(
                "class '{}' cloud {} radius floored ({updated:.3e} -> {RADIUS_SQ_FLOOR:.0e})",
                self.label,
                idx
            );
            cloud.radius_sq = RADIUS_SQ_FLOOR;
        } else {
            cloud.radius_sq = updated;
        }
        Ok(())
    }

    /// Absorb one raw sample: update the class moments, evaluate the
    /// creation condition, then create or update a cloud and accumulate the
    /// sample's per-feature contribution.
    pub fn absorb(&mut self, x: &[f64], stats: &RunningStats) -> Result<AbsorbOutcome> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.sample_count += 1;
        let n = self.sample_count as f64;
        for f in 0..x.len() {
            self.mean[f] += (x[f] - self.mean[f]) / n;
            self.mean_sq[f] += (x[f] * x[f] - self.mean_sq[f]) / n;
        }

        let z = project(stats, x)?;
        let outcome = if self.should_create_cloud(&z, stats)? {
            AbsorbOutcome {
                cloud_id: self.add_cloud(x),
                created: true,
            }
        } else {
            let idx = self.nearest_cloud(&z, stats)?;
            self.update_cloud(idx, x, stats)?;
            AbsorbOutcome {
                cloud_id: idx,
                created: false,
            }
        };

        let contribution = self.per_feature_density(&z, stats)?;
        self.ranking.accumulate(&contribution)?;
        Ok(outcome)
    }

    /// Highest Cauchy density of a normalized point over this class's
    /// clouds, optionally restricted to masked features. Returns the winning
    /// cloud id; ties break to the lowest id.
    ///
    /// The scale is the fixed angular-similarity threshold `r*²` for every
    /// cloud. The per-cloud radius recursion assumes unit-norm vectors and
    /// collapses to its floor for prototypes with `‖p‖² > 1`, which would
    /// zero out whole classes if used as the bandwidth here; it is kept as a
    /// reported meta-parameter only.
    pub fn confidence(
        &self,
        z: &[f64],
        stats: &RunningStats,
        mask: Option<&[bool]>,
    ) -> Result<(f64, usize)> {
        if self.clouds.is_empty() {
            return Err(Error::EmptyClassModel);
        }
        let scale = r_star_sq();
        let mut best = f64::NEG_INFINITY;
        let mut best_id = 0;
        for cloud in &self.clouds {
            let p = cloud.prototype_normalized(stats)?;
            let dist_sq = match mask {
                Some(m) => masked_squared_distance(z, &p, m),
                None => density::squared_distance(z, &p),
            };
            let lambda = 1.0 / (1.0 + dist_sq / scale);
            if lambda > best {
                best = lambda;
                best_id = cloud.id;
            }
        }
        Ok((best, best_id))
    }
}

fn masked_squared_distance(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    a.iter()
        .zip(b)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Project a raw vector into the current normalized frame (clamped).
pub(crate) fn project(stats: &RunningStats, x: &[f64]) -> Result<Vec<f64>> {
    let z = stats.standardize(x, VarianceMode::Lenient)?;
    stats.normalize(&z, VarianceMode::Lenient)
}

/// Per-feature scale of the raw → normalized affine map.
fn frame_scale(stats: &RunningStats, dim: usize) -> Result<Vec<f64>> {
    if stats.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: stats.dim(),
        });
    }
    Ok((0..dim)
        .map(|f| {
            let sigma = stats.sigma(f);
            let sigma_eff = if sigma <= SIGMA_FLOOR {
                SIGMA_FLOOR
            } else {
                sigma
            };
            let range = stats.std_max()[f] - stats.std_min()[f];
            let range_eff = if range > 0.0 { range } else { RANGE_FLOOR };
            1.0 / (sigma_eff * range_eff)
        })
        .collect())
}
