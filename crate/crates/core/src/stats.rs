//! Monte Carlo reductions, seed derivation, and small regression helpers.

use serde::{Deserialize, Serialize};

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithError {
    pub value: f64,
    /// Sample standard deviation divided by `√n_samples`.
    pub stderr: f64,
    pub n_samples: usize,
    pub master_seed: u64,
}

impl EstimateWithError {
    /// Mean and standard error of `samples`, reduced in index order so the
    /// result does not depend on how the samples were produced.
    pub fn from_samples(samples: &[f64], master_seed: u64) -> Self {
        let n = samples.len();
        assert!(n >= 2, "need at least two samples");
        let mean = pairwise_sum(samples) / n as f64;
        let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = pairwise_sum(&dev) / (n - 1) as f64;
        Self {
            value: mean,
            stderr: (var / n as f64).sqrt(),
            n_samples: n,
            master_seed,
        }
    }

    pub fn combined_stderr(&self, other: &Self) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    /// Number of combined standard errors separating two estimates.
    /// Identical values give zero even when both errors vanish.
    pub fn z_score(&self, other: &Self) -> f64 {
        let diff = (self.value - other.value).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.combined_stderr(other)
        }
    }

    pub fn agrees_with(&self, other: &Self, k: f64) -> bool {
        self.z_score(other) <= k
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn contains(&self, target: f64, k: f64) -> bool {
        let diff = (self.value - target).abs();
        diff == 0.0 || diff <= k * self.stderr
    }
}

/// Fixed-shape pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of ensemble member `index` under `master_seed`.
pub fn sample_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need two points for a slope");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    least_squares_slope(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_of_constant_samples() {
        let e = EstimateWithError::from_samples(&[1.0; 100], 7);
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert!(e.agrees_with(&e, 0.0));
    }

    #[test]
    fn estimate_stderr_matches_formula() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let e = EstimateWithError::from_samples(&xs, 0);
        assert!((e.value - 4.5).abs() < 1e-15);
        // sample variance of 0..9 is 55/6
        assert!((e.stderr - (55.0 / 6.0 / 10.0f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn seeds_are_distinct() {
        let mut s: Vec<u64> = (0..10_000).map(|i| sample_seed(42, i)).collect();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 10_000);
        assert_ne!(sample_seed(1, 0), sample_seed(2, 0));
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(0.7)).collect();
        assert!((loglog_slope(&x, &y) - 0.7).abs() < 1e-12);
    }
}
