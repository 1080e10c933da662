//! Streaming standardization, outlier gating and unity normalization.
//!
//! Raw samples are z-scored against running per-feature moments, gated as
//! outliers when any standardized component reaches [`OUTLIER_Z`], and then
//! rescaled to `[0, 1]` against the running extrema of the standardized
//! values. Statistics update sequentially (single writer); read-only
//! projections against a snapshot are safe to run in parallel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute standardized value at or above which a sample is an outlier.
pub const OUTLIER_Z: f64 = 3.0;

/// Floor applied to a feature's standard deviation in lenient mode.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Floor applied to a feature's standardized range in lenient mode.
pub const RANGE_FLOOR: f64 = 1e-12;

/// How degenerate (zero-variance or constant) features are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceMode {
    /// Zero variance or zero range is an error naming the feature.
    Strict,
    /// Denominators are floored; degenerate features standardize to 0.
    Lenient,
}

/// Per-feature streaming moments plus running extrema of standardized values.
///
/// `mean` and `mean_sq` are exact running arithmetic means of the raw samples
/// and their squares; variance is the population form `E[x²] − E[x]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: Vec<f64>,
    mean_sq: Vec<f64>,
    std_min: Vec<f64>,
    std_max: Vec<f64>,
}

/// A raw sample together with its standardized and normalized projections.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedSample {
    pub raw: Vec<f64>,
    pub standardized: Vec<f64>,
    pub normalized: Vec<f64>,
    /// True iff any |standardized| component is at least [`OUTLIER_Z`].
    pub outlier: bool,
}

impl RunningStats {
    /// Empty statistics for `dim` features.
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            mean_sq: vec![0.0; dim],
            std_min: vec![f64::INFINITY; dim],
            std_max: vec![f64::NEG_INFINITY; dim],
        }
    }

    /// Rebuild statistics from previously exported parts.
    pub fn from_parts(
        count: u64,
        mean: Vec<f64>,
        mean_sq: Vec<f64>,
        std_min: Vec<f64>,
        std_max: Vec<f64>,
    ) -> Result<Self> {
        let dim = mean.len();
        for v in [&mean_sq, &std_min, &std_max] {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        Ok(Self {
            count,
            mean,
            mean_sq,
            std_min,
            std_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_sq(&self) -> &[f64] {
        &self.mean_sq
    }

    pub fn std_min(&self) -> &[f64] {
        &self.std_min
    }

    pub fn std_max(&self) -> &[f64] {
        &self.std_max
    }

    /// Population variance of feature `f`, floored at zero.
    pub fn variance(&self, f: usize) -> f64 {
        (self.mean_sq[f] - self.mean[f] * self.mean[f]).max(0.0)
    }

    /// Population standard deviation of feature `f`.
    pub fn sigma(&self, f: usize) -> f64 {
        self.variance(f).sqrt()
    }

    /// Features whose standard deviation is at or below [`SIGMA_FLOOR`].
    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&f| self.sigma(f) <= SIGMA_FLOOR)
            .collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Ingest one raw sample: update the running moments, then extend the
    /// standardized extrema with the sample's own image computed against
    /// the post-update moments.
    ///
    /// Outlier images (any |z| ≥ [`OUTLIER_Z`]) update the moments — the
    /// gate must adapt to genuine distribution change — but never stretch
    /// the extrema: outliers are ignored for training, and the
    /// normalization frame is part of the trained state.
    pub fn update(&mut self, x: &[f64]) -> Result<()> {
        self.check_dim(x)?;
        self.count += 1;
        let n = self.count as f64;
        for f in 0..x.len() {
            self.mean[f] += (x[f] - self.mean[f]) / n;
            self.mean_sq[f] += (x[f] * x[f] - self.mean_sq[f]) / n;
        }
        let z: Vec<f64> = (0..x.len())
            .map(|f| (x[f] - self.mean[f]) / self.sigma(f).max(SIGMA_FLOOR))
            .collect();
        if !is_outlier(&z) {
            for f in 0..x.len() {
                self.std_min[f] = self.std_min[f].min(z[f]);
                self.std_max[f] = self.std_max[f].max(z[f]);
            }
        }
        Ok(())
    }

    /// Recompute the standardized extrema of `samples` against the current
    /// (final) moments, replacing the online extrema. Outlier images are
    /// skipped, matching [`RunningStats::update`].
    ///
    /// Used after a batch priming pass so that every primed non-outlier
    /// sample's normalized image lies in `[0, 1]` without clamping.
    pub fn recalibrate_extrema<'a, I>(&mut self, samples: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let dim = self.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        let mut any = false;
        for x in samples {
            self.check_dim(x)?;
            let z: Vec<f64> = (0..dim)
                .map(|f| (x[f] - self.mean[f]) / self.sigma(f).max(SIGMA_FLOOR))
                .collect();
            if is_outlier(&z) {
                continue;
            }
            any = true;
            for f in 0..dim {
                lo[f] = lo[f].min(z[f]);
                hi[f] = hi[f].max(z[f]);
            }
        }
        if any {
            self.std_min = lo;
            self.std_max = hi;
        }
        Ok(())
    }

    /// Z-score `x` against the current moments.
    pub fn standardize(&self, x: &[f64], mode: VarianceMode) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if matches!(mode, VarianceMode::Strict) && self.count < 2 {
            return Err(Error::NotEnoughSamples {
                required: 2,
                have: self.count,
            });
        }
        let mut z = vec![0.0; x.len()];
        for f in 0..x.len() {
            let sigma = self.sigma(f);
            if sigma <= SIGMA_FLOOR {
                match mode {
                    VarianceMode::Strict => return Err(Error::DegenerateFeature { feature: f }),
                    VarianceMode::Lenient => {
                        z[f] = (x[f] - self.mean[f]) / SIGMA_FLOOR;
                        continue;
                    }
                }
            }
            z[f] = (x[f] - self.mean[f]) / sigma;
        }
        Ok(z)
    }

    /// Rescale a standardized vector into `[0, 1]` against the running
    /// extrema, clamping values beyond the historical range.
    pub fn normalize(&self, s: &[f64], mode: VarianceMode) -> Result<Vec<f64>> {
        self.check_dim(s)?;
        let mut out = vec![0.0; s.len()];
        for f in 0..s.len() {
            let range = self.std_max[f] - self.std_min[f];
            if range.is_nan() || range <= 0.0 {
                match mode {
                    VarianceMode::Strict => return Err(Error::ConstantFeature { feature: f }),
                    VarianceMode::Lenient => {
                        out[f] = ((s[f] - self.std_min[f]) / RANGE_FLOOR).clamp(0.0, 1.0);
                        continue;
                    }
                }
            }
            out[f] = ((s[f] - self.std_min[f]) / range).clamp(0.0, 1.0);
        }
        Ok(out)
    }

    /// Standardize, flag, and normalize one raw sample.
    pub fn process(&self, x: &[f64], mode: VarianceMode) -> Result<ProcessedSample> {
        let standardized = self.standardize(x, mode)?;
        let outlier = is_outlier(&standardized);
        let normalized = self.normalize(&standardized, mode)?;
        Ok(ProcessedSample {
            raw: x.to_vec(),
            standardized,
            normalized,
            outlier,
        })
    }

    /// Map a normalized vector back to raw units via the standardized frame.
    pub fn denormalize(&self, n: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(n)?;
        let mut raw = vec![0.0; n.len()];
        for f in 0..n.len() {
            let range = (self.std_max[f] - self.std_min[f]).max(0.0);
            let z = self.std_min[f] + n[f] * range;
            raw[f] = self.mean[f] + z * self.sigma(f);
        }
        Ok(raw)
    }
}

/// True iff any standardized component has magnitude at least [`OUTLIER_Z`].
pub fn is_outlier(standardized: &[f64]) -> bool {
    standardized.iter().any(|z| z.abs() >= OUTLIER_Z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(stats: &mut RunningStats, rows: &[&[f64]]) {
        for r in rows {
            stats.update(r).unwrap();
        }
    }

    #[test]
    fn first_sample_is_the_mean() {
        let mut stats = RunningStats::new(2);
        stats.update(&[2.0, 4.0]).unwrap();
        assert_eq!(stats.count(), 1);
        assert_eq!(stats.mean(), &[2.0, 4.0]);
    }

    #[test]
    fn two_sample_moments() {
        let mut stats = RunningStats::new(1);
        ingest(&mut stats, &[&[0.0], &[2.0]]);
        assert_eq!(stats.mean(), &[1.0]);
        assert_eq!(stats.mean_sq(), &[2.0]);
    }

    #[test]
    fn running_mean_matches_batch_mean() {
        // deterministic pseudo-random stream
        let mut x = 0.5_f64;
        let mut stats = RunningStats::new(1);
        let mut all = Vec::new();
        for _ in 0..100 {
            x = (x * 1103515245.0 + 12345.0) % 1000.0;
            let v = x / 1000.0;
            all.push(v);
            stats.update(&[v]).unwrap();
        }
        let batch_mean: f64 = all.iter().sum::<f64>() / all.len() as f64;
        let batch_mean_sq: f64 = all.iter().map(|v| v * v).sum::<f64>() / all.len() as f64;
        assert!((stats.mean()[0] - batch_mean).abs() < 1e-9);
        assert!((stats.mean_sq()[0] - batch_mean_sq).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut stats = RunningStats::new(2);
        stats.update(&[1.0, 2.0]).unwrap();
        let err = stats.update(&[1.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                got: 1
            }
        ));
    }

    #[test]
    fn standardize_centers_and_scales() {
        // samples 1 and 5: mean 3, population sigma 2
        let mut stats = RunningStats::new(1);
        ingest(&mut stats, &[&[1.0], &[5.0]]);
        let z = stats.standardize(&[3.0], VarianceMode::Strict).unwrap();
        assert_eq!(z, vec![0.0]);
        let z = stats.standardize(&[5.0], VarianceMode::Strict).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn outlier_flag_at_three_sigma() {
        let mut stats = RunningStats::new(1);
        ingest(&mut stats, &[&[1.0], &[5.0]]);
        // x = 10 → z = (10 − 3) / 2 = 3.5
        let p = stats.process(&[10.0], VarianceMode::Lenient).unwrap();
        assert!((p.standardized[0] - 3.5).abs() < 1e-12);
        assert!(p.outlier);
        let p = stats.process(&[4.0], VarianceMode::Lenient).unwrap();
        assert!(!p.outlier);
        assert!(p.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn strict_mode_rejects_zero_variance() {
        let mut stats = RunningStats::new(2);
        ingest(&mut stats, &[&[1.0, 7.0], &[2.0, 7.0]]);
        let err = stats
            .standardize(&[1.5, 7.0], VarianceMode::Strict)
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateFeature { feature: 1 }));
        assert_eq!(stats.constant_features(), vec![1]);
        // lenient mode floors the denominator; the constant feature maps to 0
        let z = stats
            .standardize(&[1.5, 7.0], VarianceMode::Lenient)
            .unwrap();
        assert_eq!(z[1], 0.0);
    }

    #[test]
    fn normalize_range_endpoints() {
        let stats =
            RunningStats::from_parts(2, vec![0.0], vec![1.0], vec![-1.0], vec![1.0]).unwrap();
        assert_eq!(
            stats.normalize(&[-1.0], VarianceMode::Strict).unwrap(),
            vec![0.0]
        );
        assert_eq!(
            stats.normalize(&[1.0], VarianceMode::Strict).unwrap(),
            vec![1.0]
        );
        assert_eq!(
            stats.normalize(&[0.0], VarianceMode::Strict).unwrap(),
            vec![0.5]
        );
        // streaming clamp beyond historical extrema
        assert_eq!(
            stats.normalize(&[2.0], VarianceMode::Strict).unwrap(),
            vec![1.0]
        );
        assert_eq!(
            stats.normalize(&[-2.0], VarianceMode::Strict).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn batch_recalibration_makes_normalization_exact() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let mut stats = RunningStats::new(2);
        for r in &rows {
            stats.update(r).unwrap();
        }
        stats
            .recalibrate_extrema(rows.iter().map(|r| r.as_slice()))
            .unwrap();
        for r in &rows {
            let z = stats.standardize(r, VarianceMode::Strict).unwrap();
            for f in 0..2 {
                assert!(z[f] >= stats.std_min()[f] - 1e-12);
                assert!(z[f] <= stats.std_max()[f] + 1e-12);
            }
            let n = stats.normalize(&z, VarianceMode::Strict).unwrap();
            assert!(n.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn denormalize_round_trips() {
        let mut stats = RunningStats::new(2);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![i as f64 * 0.7 - 3.0, i as f64 * 1.3])
            .collect();
        for r in &rows {
            stats.update(r).unwrap();
        }
        // inversion is exact only inside the recorded extrema
        stats
            .recalibrate_extrema(rows.iter().map(|r| r.as_slice()))
            .unwrap();
        let x = [4.2, 11.0];
        let p = stats.process(&x, VarianceMode::Strict).unwrap();
        let back = stats.denormalize(&p.normalized).unwrap();
        for f in 0..2 {
            assert!(
                (back[f] - x[f]).abs() < 1e-9,
                "feature {f}: {} vs {}",
                back[f],
                x[f]
            );
        }
    }
}
