//! Confidence monitoring and autonomous new-class formation.
//!
//! A recursive mean/variance tracker follows the maximum cloud-level
//! confidence of absorbed samples. A sample whose confidence falls below
//! `mean − m·σ` is buffered as a potential member of an unseen class; when
//! enough buffered samples cluster into one scratch data cloud, that cloud's
//! members found a new class.

use serde::{Deserialize, Serialize};

use crate::clouds::{project, ClassModel};
use crate::density;
use crate::error::{Error, Result};
use crate::preprocess::RunningStats;

/// Routing decision for one streamed sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Confidence fell below the m-σ band: possible new class.
    DropDetected,
    /// Sample belongs to the known structure and should be absorbed.
    Absorb,
}

/// Knobs for the novelty detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyConfig {
    /// Sigma multiplier of the drop test.
    pub m_sigma: f64,
    /// Minimum co-located buffered samples required to found a class.
    pub kappa_min_support: u64,
    /// Maximum buffered samples kept before the oldest are discarded.
    pub buffer_expiry: usize,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        Self {
            m_sigma: 3.0,
            kappa_min_support: 10,
            buffer_expiry: 1000,
        }
    }
}

impl NoveltyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_sigma.is_nan() || self.m_sigma <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "m_sigma",
                message: format!("must be positive, got {}", self.m_sigma),
            });
        }
        if self.kappa_min_support < 2 {
            return Err(Error::InvalidParameter {
                name: "kappa_min_support",
                message: format!("must be at least 2, got {}", self.kappa_min_support),
            });
        }
        if self.buffer_expiry == 0 {
            return Err(Error::InvalidParameter {
                name: "buffer_expiry",
                message: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Recursive mean and variance of the confidence stream, with the m-σ
/// drop threshold.
///
/// The mean uses the `((i−1)/i)·μ̄ + (1/i)·λ` recursion; the variance uses
/// the matching `1/i`-weighted recursion over squared deviations, which
/// reproduces the batch population variance exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTracker {
    count: u64,
    mean: f64,
    variance: f64,
    m: f64,
}

impl ConfidenceTracker {
    pub fn new(m: f64) -> Result<Self> {
        if m.is_nan() || m <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "m",
                message: format!("must be positive, got {m}"),
            });
        }
        Ok(Self {
            count: 0,
            mean: 0.0,
            variance: 0.0,
            m,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_parts(count: u64, mean: f64, variance: f64, m: f64) -> Self {
        Self {
            count,
            mean,
            variance,
            m,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// Current drop threshold `mean − m·σ`.
    pub fn threshold(&self) -> f64 {
        self.mean - self.m * self.variance.max(0.0).sqrt()
    }

    /// Fold one confidence value into the recursive statistics.
    pub fn update(&mut self, lambda: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                message: format!("confidence must lie in [0, 1], got {lambda}"),
            });
        }
        let old_mean = self.mean;
        self.count += 1;
        let n = self.count as f64;
        self.mean += (lambda - old_mean) / n;
        self.variance =
            ((n - 1.0) * self.variance + (lambda - old_mean) * (lambda - self.mean)) / n;
        Ok(())
    }

    /// Classify one confidence value against the m-σ band.
    ///
    /// Needs at least two tracked values for σ to be meaningful; before
    /// that every sample is absorbed.
    pub fn check(&self, lambda: f64) -> Decision {
        if self.count < 2 {
            return Decision::Absorb;
        }
        if lambda < self.threshold() {
            Decision::DropDetected
        } else {
            Decision::Absorb
        }
    }
}

/// One held-out low-confidence sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferedSample {
    /// Raw feature vector as it arrived.
    pub raw: Vec<f64>,
    /// Confidence the sample scored when it was buffered.
    pub lambda: f64,
    /// Stream sequence index.
    pub seq: u64,
}

/// FIFO store of potential-new-class samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierBuffer {
    entries: Vec<BufferedSample>,
    capacity: usize,
    discarded: u64,
}

impl OutlierBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: Vec::new(),
            capacity,
            discarded: 0,
        }
    }

    pub fn entries(&self) -> &[BufferedSample] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total samples dropped by the expiry policy so far.
    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    /// Append a dropped sample, evicting the oldest beyond capacity.
    pub fn push(&mut self, raw: Vec<f64>, lambda: f64, seq: u64) {
        self.entries.push(BufferedSample { raw, lambda, seq });
        if self.entries.len() > self.capacity {
            let excess = self.entries.len() - self.capacity;
            self.entries.drain(..excess);
            self.discarded += excess as u64;
            log::debug!("outlier buffer evicted {excess} expired sample(s)");
        }
    }

    fn retain_unmarked(&mut self, remove: &[bool]) {
        let mut i = 0;
        self.entries.retain(|_| {
            let keep = !remove[i];
            i += 1;
            keep
        });
    }
}

/// Maximum cloud-level confidence of a normalized sample across all classes.
///
/// Returns `(λ, class index, cloud id)`; ties break to the lowest class
/// index, then cloud id. Evaluated over the full feature space.
pub fn max_confidence(
    classes: &[ClassModel],
    z: &[f64],
    stats: &RunningStats,
) -> Result<(f64, usize, usize)> {
    if classes.is_empty() {
        return Err(Error::NoClasses);
    }
    let mut best = f64::NEG_INFINITY;
    let mut best_class = 0;
    let mut best_cloud = 0;
    for (c, class) in classes.iter().enumerate() {
        let (lambda, cloud) = class.confidence(z, stats, None)?;
        if lambda > best {
            best = lambda;
            best_class = c;
            best_cloud = cloud;
        }
    }
    Ok((best, best_class, best_cloud))
}

/// Cluster the buffered samples with the data-cloud machinery and found a
/// new class whenever at least `kappa_min_support` buffered samples sit
/// inside one scratch prototype's `r*` similarity ball.
///
/// The density-based creation rule splits even a tight cluster across
/// several scratch clouds, so raw per-cloud support understates
/// co-location; the `r*` ball around each prototype is the angular
/// similarity threshold the cloud radius itself is initialized from.
///
/// Founding members leave the buffer. After each formation, remaining
/// buffered samples that fall inside the new class's influence region are
/// claimed by it and absorbed as well. Labels are `"new class {n}"` with
/// `n` drawn from `next_label_index`, which the caller keeps monotone
/// across the model's life.
pub fn try_form_new_classes(
    buffer: &mut OutlierBuffer,
    config: &NoveltyConfig,
    stats: &RunningStats,
    next_label_index: &mut u64,
) -> Result<Vec<ClassModel>> {
    let kappa = config.kappa_min_support as usize;
    if buffer.len() < kappa {
        return Ok(Vec::new());
    }

    // scratch pass: cluster the whole buffer as one throwaway class
    let entries = buffer.entries();
    let mut scratch = ClassModel::init("scratch", &entries[0].raw, stats)?;
    for entry in entries.iter().skip(1) {
        scratch.absorb(&entry.raw, stats)?;
    }
    let projected: Vec<Vec<f64>> = entries
        .iter()
        .map(|e| project(stats, &e.raw))
        .collect::<Result<_>>()?;

    let r_sq = crate::clouds::r_star_sq();
    let mut formed = Vec::new();
    let mut removed = vec![false; entries.len()];
    for cloud in scratch.clouds() {
        let p = cloud.prototype_normalized(stats)?;
        let members: Vec<usize> = (0..projected.len())
            .filter(|&i| !removed[i] && density::squared_distance(&projected[i], &p) <= r_sq)
            .collect();
        if members.len() < kappa {
            continue;
        }
        let label = format!("new class {next_label_index}");
        *next_label_index += 1;
        let mut class = ClassModel::init(label, &buffer.entries()[members[0]].raw, stats)?;
        for &i in &members[1..] {
            class.absorb(&buffer.entries()[i].raw, stats)?;
        }
        for &i in &members {
            removed[i] = true;
        }
        // claim sweep: absorb stragglers that sit inside the new region
        for i in 0..buffer.entries().len() {
            if removed[i] {
                continue;
            }
            if within_region(&class, &projected[i], stats)? {
                class.absorb(&buffer.entries()[i].raw, stats)?;
                removed[i] = true;
            }
        }
        formed.push(class);
    }

    if !formed.is_empty() {
        buffer.retain_unmarked(&removed);
    }
    Ok(formed)
}

/// True iff the normalized point lies within some cloud's influence radius
/// (never narrower than the initialization radius `r*`).
fn within_region(class: &ClassModel, z: &[f64], stats: &RunningStats) -> Result<bool> {
    for cloud in class.clouds() {
        let p = cloud.prototype_normalized(stats)?;
        if density::squared_distance(z, &p) <= cloud.radius_sq().max(crate::clouds::r_star_sq()) {
            return Ok(true);
        }
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_stats(dim: usize) -> RunningStats {
        RunningStats::from_parts(
            2,
            vec![0.0; dim],
            vec![1.0; dim],
            vec![0.0; dim],
            vec![1.0; dim],
        )
        .unwrap()
    }

    #[test]
    fn tracker_first_value_is_the_mean() {
        let mut t = ConfidenceTracker::new(3.0).unwrap();
        t.update(0.9).unwrap();
        assert_eq!(t.mean(), 0.9);
        assert_eq!(t.variance(), 0.0);
    }

    #[test]
    fn tracker_two_point_mean() {
        let mut t = ConfidenceTracker::new(3.0).unwrap();
        t.update(1.0).unwrap();
        t.update(0.0).unwrap();
        assert!((t.mean() - 0.5).abs() < 1e-15);
        assert!((t.variance() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn tracker_rejects_out_of_range_values() {
        let mut t = ConfidenceTracker::new(3.0).unwrap();
        assert!(t.update(-0.1).is_err());
        assert!(t.update(1.5).is_err());
    }

    #[test]
    fn tracker_matches_batch_statistics() {
        let mut t = ConfidenceTracker::new(3.0).unwrap();
        let mut vals = Vec::new();
        let mut x = 0.123_f64;
        for _ in 0..1000 {
            x = (x * 16807.0) % 2147483647.0;
            let v = x / 2147483647.0;
            vals.push(v);
            t.update(v).unwrap();
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!((t.mean() - mean).abs() < 1e-9);
        assert!((t.variance() - var).abs() < 1e-9);
    }

    #[test]
    fn drop_test_hand_evaluations() {
        // mean 0.9, σ 0.02, m 3 → threshold 0.84
        let t = ConfidenceTracker::from_parts(10, 0.9, 0.0004, 3.0);
        assert!((t.threshold() - 0.84).abs() < 1e-12);
        assert_eq!(t.check(0.8), Decision::DropDetected);
        assert_eq!(t.check(0.85), Decision::Absorb);
        // equality with the mean never drops
        assert_eq!(t.check(0.9), Decision::Absorb);
    }

    #[test]
    fn fewer_than_two_values_always_absorb() {
        let mut t = ConfidenceTracker::new(3.0).unwrap();
        assert_eq!(t.check(0.01), Decision::Absorb);
        t.update(0.99).unwrap();
        assert_eq!(t.check(0.01), Decision::Absorb);
    }

    #[test]
    fn constant_stream_never_drops() {
        let mut t = ConfidenceTracker::new(3.0).unwrap();
        for _ in 0..100 {
            assert_eq!(t.check(0.7), Decision::Absorb);
            t.update(0.7).unwrap();
        }
        assert_eq!(t.variance(), 0.0);
    }

    #[test]
    fn buffer_appends_and_evicts() {
        let mut buf = OutlierBuffer::new(3);
        buf.push(vec![0.1], 0.2, 0);
        assert_eq!(buf.len(), 1);
        for i in 1..4 {
            buf.push(vec![0.1], 0.2, i);
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.discarded(), 1);
        // oldest entry went first
        assert_eq!(buf.entries()[0].seq, 1);
    }

    #[test]
    fn confidence_scans_all_classes() {
        let stats = identity_stats(2);
        let a = ClassModel::init("a", &[0.1, 0.1], &stats).unwrap();
        let b = ClassModel::init("b", &[0.9, 0.9], &stats).unwrap();
        let classes = vec![a, b];
        let (lambda, class, cloud) = max_confidence(&classes, &[0.9, 0.9], &stats).unwrap();
        assert_eq!((lambda, class, cloud), (1.0, 1, 0));
        // equidistant tie resolves to the lower class index
        let (_, class, _) = max_confidence(&classes, &[0.5, 0.5], &stats).unwrap();
        assert_eq!(class, 0);
        assert!(max_confidence(&[], &[0.5, 0.5], &stats).is_err());
    }

    #[test]
    fn confidence_matches_exhaustive_scan() {
        let stats = identity_stats(3);
        let mut seed = 0xDEADBEEFCAFE_u64;
        let mut next = || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut classes = Vec::new();
        for c in 0..5 {
            let mut class =
                ClassModel::init(format!("c{c}"), &[next(), next(), next()], &stats).unwrap();
            for _ in 0..4 {
                class.add_cloud(&[next(), next(), next()]);
            }
            classes.push(class);
        }
        let scale = crate::clouds::r_star_sq();
        for _ in 0..200 {
            let q = [next(), next(), next()];
            let (lambda, class, cloud) = max_confidence(&classes, &q, &stats).unwrap();
            // exhaustive scan over every prototype
            let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
            for (c, class) in classes.iter().enumerate() {
                for k in class.clouds() {
                    let d = density::squared_distance(&q, k.prototype_raw());
                    let l = 1.0 / (1.0 + d / scale);
                    if l > best.0 {
                        best = (l, c, k.id());
                    }
                }
            }
            assert_eq!((lambda, class, cloud), best);
        }
    }

    fn push_n(buf: &mut OutlierBuffer, x: &[f64], n: usize, seq0: u64) {
        for k in 0..n {
            buf.push(x.to_vec(), 0.1, seq0 + k as u64);
        }
    }

    #[test]
    fn tight_cluster_founds_exactly_one_class() {
        let stats = identity_stats(2);
        let cfg = NoveltyConfig::default();
        let mut buf = OutlierBuffer::new(cfg.buffer_expiry);
        push_n(&mut buf, &[0.8, 0.8], 12, 0);
        let mut next = 1;
        let formed = try_form_new_classes(&mut buf, &cfg, &stats, &mut next).unwrap();
        assert_eq!(formed.len(), 1);
        assert_eq!(formed[0].label(), "new class 1");
        assert_eq!(formed[0].sample_count(), 12);
        assert!(buf.is_empty());
        assert_eq!(next, 2);
    }

    #[test]
    fn two_small_clusters_form_nothing() {
        let stats = identity_stats(2);
        let cfg = NoveltyConfig::default();
        let mut buf = OutlierBuffer::new(cfg.buffer_expiry);
        push_n(&mut buf, &[0.1, 0.1], 6, 0);
        push_n(&mut buf, &[0.9, 0.9], 6, 6);
        let mut next = 1;
        let formed = try_form_new_classes(&mut buf, &cfg, &stats, &mut next).unwrap();
        assert!(formed.is_empty());
        assert_eq!(buf.len(), 12);
        assert_eq!(next, 1);
    }

    #[test]
    fn two_large_clusters_form_two_classes_in_order() {
        let stats = identity_stats(2);
        let cfg = NoveltyConfig::default();
        let mut buf = OutlierBuffer::new(cfg.buffer_expiry);
        push_n(&mut buf, &[0.1, 0.1], 15, 0);
        push_n(&mut buf, &[0.9, 0.9], 15, 15);
        let mut next = 1;
        let formed = try_form_new_classes(&mut buf, &cfg, &stats, &mut next).unwrap();
        assert_eq!(formed.len(), 2);
        assert_eq!(formed[0].label(), "new class 1");
        assert_eq!(formed[1].label(), "new class 2");
        // the first-seen cluster founds the first label
        assert!((formed[0].clouds()[0].prototype_raw()[0] - 0.1).abs() < 1e-12);
        assert!(buf.is_empty());
    }
}
