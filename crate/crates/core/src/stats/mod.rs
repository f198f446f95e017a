//! Paired bootstrap tests and replicability counts over folds.

use rand::Rng;
use rayon::prelude::*;

use crate::corpus::BinaryLabel;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub n_samples: usize,
    /// Resample size as a fraction of the test set, rounded up.
    pub sample_ratio: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            sample_ratio: 0.5,
            alpha: 0.05,
            seed: 0,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::config("bootstrap needs at least one sample"));
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return Err(Error::config(format!(
                "sample ratio must be in (0, 1], got {}",
                self.sample_ratio
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn sample_size(&self, n: usize) -> usize {
        (self.sample_ratio * n as f64).ceil() as usize
    }
}

/// Gold label with the predictions of two systems on the same item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairedItem {
    pub gold: BinaryLabel,
    pub pred_a: BinaryLabel,
    pub pred_b: BinaryLabel,
}

/// Indices of resample `sample`: ChaCha8 stream `sample` of `seed`, `size`
/// uniform draws from `0..n`.
pub fn resample_indices(seed: u64, sample: usize, n: usize, size: usize) -> Vec<usize> {
    let mut rng = seed::stream_rng(seed, sample as u64);
    (0..size).map(|_| rng.random_range(0..n)).collect()
}

/// One-sided paired bootstrap p-value for "A scores higher than B".
///
/// With `delta` the metric difference A - B on all items, the p-value is the
/// fraction of resamples whose difference reaches `2 * delta`.
pub fn paired_bootstrap<M>(items: &[PairedItem], metric: M, cfg: &BootstrapConfig) -> Result<f64>
where
    M: Fn(&[BinaryLabel], &[BinaryLabel]) -> f64 + Sync,
{
    cfg.validate()?;
    let n = items.len();
    let size = cfg.sample_size(n);
    if size == 0 {
        return Err(Error::input("paired bootstrap needs at least one item"));
    }
    let gold: Vec<BinaryLabel> = items.iter().map(|i| i.gold).collect();
    let a: Vec<BinaryLabel> = items.iter().map(|i| i.pred_a).collect();
    let b: Vec<BinaryLabel> = items.iter().map(|i| i.pred_b).collect();
    let observed = metric(&gold, &a) - metric(&gold, &b);

    let hits = (0..cfg.n_samples)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(size), Vec::with_capacity(size), Vec::with_capacity(size)),
            |(g, pa, pb), s| {
                g.clear();
                pa.clear();
                pb.clear();
                for i in resample_indices(cfg.seed, s, n, size) {
                    g.push(gold[i]);
                    pa.push(a[i]);
                    pb.push(b[i]);
                }
                let delta = metric(g, pa) - metric(g, pb);
                delta >= 2.0 * observed
            },
        )
        .filter(|&hit| hit)
        .count();
    Ok(hits as f64 / cfg.n_samples as f64)
}

/// Number of p-values at or below `alpha`.
pub fn significant_fold_count(p_values: &[f64], alpha: f64) -> usize {
    p_values.iter().filter(|&&p| p <= alpha).count()
}

/// Bonferroni partial-conjunction estimate of the number of folds with a
/// real effect.
///
/// With sorted p-values `p_(1) <= ... <= p_(K)`, the partial-conjunction
/// p-value for "at least u effects" is `min(1, (K - u + 1) p_(u))`; the
/// estimate is the largest `u` whose partial-conjunction p-values up to and
/// including `u` are all at most `alpha`.
pub fn bonferroni_partial_conjunction(p_values: &[f64], alpha: f64) -> usize {
    let mut sorted = p_values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| ((k - i) as f64 * p).min(1.0))
        .take_while(|&pc| pc <= alpha)
        .count()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldPValue {
    pub run_seed: u64,
    pub fold: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignificanceReport {
    pub folds: Vec<FoldPValue>,
    pub significant_count: usize,
    pub bonferroni_count: usize,
}

impl SignificanceReport {
    pub fn new(folds: Vec<FoldPValue>, alpha: f64) -> Self {
        let ps: Vec<f64> = folds.iter().map(|f| f.p_value).collect();
        Self {
            significant_count: significant_fold_count(&ps, alpha),
            bonferroni_count: bonferroni_partial_conjunction(&ps, alpha),
            folds,
        }
    }
}
