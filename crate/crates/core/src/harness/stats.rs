use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

/// Area under a learning curve: the plain sum of episode rewards.
pub fn auc(per_episode_reward: &[f64]) -> f64 {
    per_episode_reward.iter().sum()
}

/// First episode whose trailing mean over the last `window` episodes (fewer
/// at the start of the curve) reaches `threshold`.
pub fn episodes_to_threshold(
    per_episode_reward: &[f64],
    threshold: f64,
    window: usize,
) -> Option<usize> {
    trailing_mean(per_episode_reward, window)
        .iter()
        .position(|&m| m >= threshold)
}

/// Trailing mean with a window that grows to `window` over the first
/// episodes. Presentation only; stored curves stay raw.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut sum = 0.0;
    let mut out = Vec::with_capacity(values.len());
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median where `None` counts as infinitely late. Returns `None` when the
/// median itself is infinite or the input is empty.
pub fn median_episodes(values: &[Option<usize>]) -> Option<f64> {
    let mut v: Vec<f64> = values
        .iter()
        .map(|x| x.map_or(f64::INFINITY, |e| e as f64))
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    m.is_finite().then_some(m)
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

/// Bootstrap distribution of the mean of `values`, sorted.
fn bootstrap_means(values: &[f64], resamples: usize, rng: &mut SeededRng) -> Vec<f64> {
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.below(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    means
}

/// Two-sided 95% percentile bootstrap interval for the mean. `None` for
/// fewer than two values or zero resamples.
pub fn bootstrap_mean_ci(
    values: &[f64],
    resamples: usize,
    rng: &mut SeededRng,
) -> Option<Interval> {
    if values.len() < 2 || resamples == 0 {
        return None;
    }
    let means = bootstrap_means(values, resamples, rng);
    Some(Interval {
        lower: quantile(&means, 0.025),
        upper: quantile(&means, 0.975),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferenceStats {
    pub mean: f64,
    /// Two-sided 95% interval.
    pub ci: Interval,
    /// One-sided 95% lower bound.
    pub lower_95: f64,
}

/// Bootstrap of `mean(candidate - baseline)` over paired samples (same
/// seed index on both sides).
pub fn paired_difference(
    baseline: &[f64],
    candidate: &[f64],
    resamples: usize,
    rng: &mut SeededRng,
) -> Option<DifferenceStats> {
    if baseline.len() != candidate.len() || baseline.len() < 2 || resamples == 0 {
        return None;
    }
    let diffs: Vec<f64> = candidate.iter().zip(baseline).map(|(c, b)| c - b).collect();
    let means = bootstrap_means(&diffs, resamples, rng);
    Some(DifferenceStats {
        mean: mean(&diffs),
        ci: Interval {
            lower: quantile(&means, 0.025),
            upper: quantile(&means, 0.975),
        },
        lower_95: quantile(&means, 0.05),
    })
}
