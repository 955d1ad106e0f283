//! Sample statistics.

use crate::config::BenchError;

pub fn mean(samples: &[u64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| s as f64).sum::<f64>() / samples.len() as f64
}

/// Drops samples outside μ ± 3σ, with μ and σ (population) computed once
/// over the input. Returns the kept samples in input order and the fraction
/// removed. Fewer than two samples come back unchanged.
pub fn three_sigma_filter(samples: &[u64]) -> (Vec<u64>, f64) {
    if samples.len() < 2 {
        return (samples.to_vec(), 0.0);
    }
    let n = samples.len() as f64;
    let mu = mean(samples);
    let var = samples.iter().map(|&s| (s as f64 - mu).powi(2)).sum::<f64>() / n;
    let (lo, hi) = (mu - 3.0 * var.sqrt(), mu + 3.0 * var.sqrt());
    let kept: Vec<u64> = samples
        .iter()
        .copied()
        .filter(|&s| (lo..=hi).contains(&(s as f64)))
        .collect();
    let removed = (samples.len() - kept.len()) as f64 / n;
    (kept, removed)
}

/// Nearest-rank percentile of sorted samples: the element at index
/// ⌈p/100 · n⌉ − 1.
pub fn percentile(sorted: &[u64], p: f64) -> Result<u64, BenchError> {
    if sorted.is_empty() {
        return Err(BenchError::EmptySamples);
    }
    let rank = (p.clamp(0.0, 100.0) * sorted.len() as f64 / 100.0).ceil() as usize;
    Ok(sorted[rank.saturating_sub(1).min(sorted.len() - 1)])
}

/// Median; the mean of the two middle values for an even count.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}
