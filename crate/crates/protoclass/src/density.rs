//! Cauchy-type data density, recursive global density, per-feature density,
//! cumulative feature contribution, and typicality.
//!
//! All functions here are pure; [`FeatureRanking`] accumulation is the only
//! stateful piece and is single-writer per class.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to per-feature variances to avoid division by zero on
/// constant features.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Cauchy-form similarity of `z` to `center` with squared scale `scale_sq`:
/// `1 / (1 + ||z − center||² / scale_sq)`.
///
/// Equals 1 iff `z == center` and decreases strictly with distance.
pub fn cauchy_density(z: &[f64], center: &[f64], scale_sq: f64) -> Result<f64> {
    if z.len() != center.len() {
        return Err(Error::DimensionMismatch {
            expected: center.len(),
            got: z.len(),
        });
    }
    if scale_sq.is_nan() || scale_sq <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "scale_sq",
            message: format!("must be positive, got {scale_sq}"),
        });
    }
    Ok(1.0 / (1.0 + squared_distance(z, center) / scale_sq))
}

/// Per-feature Cauchy density of `z` against per-class per-feature moments:
/// `D^f = 1 / (1 + (z[f] − mean[f])² / var[f])`, with `var` floored at
/// [`VARIANCE_FLOOR`] so a sample at the mean of a constant feature scores 1.
pub fn per_feature_density(z: &[f64], mean: &[f64], variance: &[f64]) -> Result<Vec<f64>> {
    if z.len() != mean.len() || z.len() != variance.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            got: z.len(),
        });
    }
    Ok((0..z.len())
        .map(|f| {
            let d = z[f] - mean[f];
            1.0 / (1.0 + d * d / variance[f].max(VARIANCE_FLOOR))
        })
        .collect())
}

/// Recursive density estimate of `z` over a sample set summarized by its
/// mean vector and the mean of its squared norms:
/// `D(z) = 1 / (1 + ||z − mean||² + mean_sq_norm − ||mean||²)`.
///
/// The scatter term `mean_sq_norm − ||mean||²` is floored at zero.
pub fn global_density(z: &[f64], mean: &[f64], mean_sq_norm: f64) -> Result<f64> {
    if z.len() != mean.len() {
        return Err(Error::DimensionMismatch {
            expected: mean.len(),
            got: z.len(),
        });
    }
    let scatter = (mean_sq_norm - squared_norm(mean)).max(0.0);
    Ok(1.0 / (1.0 + squared_distance(z, mean) + scatter))
}

/// Normalize a vector of densities to unit total mass: `τ_k = D_k / Σ_j D_j`.
///
/// Discrete stand-in for the integral normalization of typicality.
pub fn typicality(densities: &[f64]) -> Result<Vec<f64>> {
    if densities.is_empty() {
        return Err(Error::EmptyDensitySet);
    }
    let total: f64 = densities.iter().sum();
    Ok(densities.iter().map(|d| d / total).collect())
}

/// Per-class running mean of per-feature densities (the Λ ranking).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    lambda_cum: Vec<f64>,
    sample_count: u64,
}

impl FeatureRanking {
    pub fn new(dim: usize) -> Self {
        Self {
            lambda_cum: vec![0.0; dim],
            sample_count: 0,
        }
    }

    /// Exact running mean over all accumulated per-feature density vectors.
    pub fn lambda_cum(&self) -> &[f64] {
        &self.lambda_cum
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    /// Fold one per-feature density vector into the running mean.
    pub fn accumulate(&mut self, d: &[f64]) -> Result<()> {
        if d.len() != self.lambda_cum.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lambda_cum.len(),
                got: d.len(),
            });
        }
        self.sample_count += 1;
        let n = self.sample_count as f64;
        for f in 0..d.len() {
            self.lambda_cum[f] += (d[f] - self.lambda_cum[f]) / n;
        }
        Ok(())
    }

    /// Feature indices ordered by decreasing Λ, ties broken by lower index.
    pub fn rank_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.lambda_cum.len()).collect();
        idx.sort_by(|&a, &b| {
            self.lambda_cum[b]
                .partial_cmp(&self.lambda_cum[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub(crate) fn squared_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}
