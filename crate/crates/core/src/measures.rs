//! The Gaussian measure `μ_s` induced by the random series
//! `Σ_n g_n / n^{s+γ/2} e^{inx}`, its cutoff `μ_{s,r}` and their
//! finite-dimensional bookkeeping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::flow::{conserved_quantity, GbbmParams};
use crate::spectral::{sobolev_norm_sq, SpectralField};
use crate::stats::sample_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub s: u32,
    pub gamma: f64,
    /// Truncation N: samples carry modes `1..=N`.
    pub n_modes: usize,
    /// Cutoff radius of `χ_r`; `None` means no cutoff.
    #[serde(default)]
    pub r: Option<f64>,
}

impl MeasureSpec {
    pub fn new(s: u32, gamma: f64, n_modes: usize, r: Option<f64>) -> Result<Self> {
        let spec = Self { s, gamma, n_modes, r };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(invalid("gamma", format!("need gamma > 1, got {}", self.gamma)));
        }
        if (self.s as f64) < self.gamma / 2.0 {
            return Err(invalid(
                "s",
                format!("need s >= gamma/2 so the flow is defined on the support, got s = {}", self.s),
            ));
        }
        if self.n_modes < 1 {
            return Err(invalid("n_modes", "need at least one mode"));
        }
        if let Some(r) = self.r {
            if !(r > 0.0) {
                return Err(invalid("r", format!("cutoff radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn with_cutoff(self, r: Option<f64>) -> Self {
        Self { r, ..self }
    }

    /// Decay exponent `s + γ/2` of the coefficients.
    pub fn decay(&self) -> f64 {
        self.s as f64 + self.gamma / 2.0
    }

    /// Matching flow parameters.
    pub fn flow_params(&self) -> GbbmParams {
        GbbmParams {
            gamma: self.gamma,
            s: self.s,
            n_modes: self.n_modes,
            nonlinear: true,
        }
    }
}

/// One draw of `π_N φ_s`. Normals are drawn mode by mode (real part first)
/// from ChaCha8 seeded with `seed`, so a sample with larger `N` extends the
/// one with smaller `N`.
pub fn sample_mu_s(spec: &MeasureSpec, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = spec.decay();
    let norm = std::f64::consts::FRAC_1_SQRT_2;
    SpectralField::from_fn(spec.n_modes, |n| {
        let h: f64 = StandardNormal.sample(&mut rng);
        let l: f64 = StandardNormal.sample(&mut rng);
        num_complex::Complex64::new(h, l) * (norm * (n as f64).powf(-a))
    })
}

/// Sample `index` of the ensemble with master seed `master_seed`.
pub fn sample_indexed(spec: &MeasureSpec, master_seed: u64, index: u64) -> SpectralField {
    sample_mu_s(spec, sample_seed(master_seed, index))
}

/// Applies `f` to samples `0..count` on the worker pool; output is in
/// index order and independent of the number of workers.
pub fn map_samples<T, F>(spec: &MeasureSpec, master_seed: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, &SpectralField) -> T + Sync + Send,
{
    (0..count as u64)
        .into_par_iter()
        .map(|i| f(i, &sample_indexed(spec, master_seed, i)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub spec: MeasureSpec,
    pub master_seed: u64,
    pub fields: Vec<SpectralField>,
}

impl SampleBatch {
    pub fn generate(spec: &MeasureSpec, master_seed: u64, count: usize) -> Self {
        Self {
            spec: *spec,
            master_seed,
            fields: map_samples(spec, master_seed, count, |_, u| u.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn seed_of(&self, index: usize) -> u64 {
        sample_seed(self.master_seed, index as u64)
    }
}

/// `χ_r(u)`: 1 iff `4π Σ(1+n^γ)|û(n)|² ≤ r`.
pub fn cutoff_chi_r(u: &SpectralField, spec: &MeasureSpec) -> u8 {
    match spec.r {
        None => 1,
        Some(r) => u8::from(conserved_quantity(u, spec.gamma) <= r),
    }
}

/// `−‖π_N u‖²_{H^{s+γ/2}}`; the normalization is left out.
pub fn log_gaussian_weight(u: &SpectralField, spec: &MeasureSpec) -> f64 {
    -sobolev_norm_sq(&u.resized(spec.n_modes.min(u.n_max())), spec.decay())
}

/// `E‖π_N φ_s‖²_{H^σ} = Σ_{n≤N} n^{2σ−2s−γ}`.
pub fn expected_sobolev_moment(spec: &MeasureSpec, sigma: f64) -> f64 {
    let e = 2.0 * sigma - 2.0 * spec.decay();
    (1..=spec.n_modes).map(|n| (n as f64).powf(e)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{free_evolution, integrate};
    use crate::stats::EstimateWithError;
    use num_complex::Complex64;

    fn spec(s: u32, gamma: f64, n: usize) -> MeasureSpec {
        MeasureSpec::new(s, gamma, n, None).unwrap()
    }

    #[test]
    fn validation() {
        assert!(MeasureSpec::new(1, 2.0, 4, None).is_ok());
        assert!(MeasureSpec::new(1, 2.5, 4, None).is_err());
        assert!(MeasureSpec::new(1, 0.9, 4, None).is_err());
        assert!(MeasureSpec::new(1, 2.0, 4, Some(0.0)).is_err());
    }

    #[test]
    fn deterministic_and_prefix_consistent() {
        let a = sample_mu_s(&spec(1, 2.0, 8), 99);
        assert_eq!(a, sample_mu_s(&spec(1, 2.0, 8), 99));
        assert_ne!(a, sample_mu_s(&spec(1, 2.0, 8), 100));
        let b = sample_mu_s(&spec(1, 2.0, 32), 99);
        assert_eq!(&b.coeffs()[..8], a.coeffs());
    }

    #[test]
    fn batch_matches_indexed_samples() {
        let sp = spec(1, 2.0, 6);
        let batch = SampleBatch::generate(&sp, 5, 40);
        assert_eq!(batch.len(), 40);
        for i in [0usize, 17, 39] {
            assert_eq!(batch.fields[i], sample_indexed(&sp, 5, i as u64));
            assert_eq!(sample_mu_s(&sp, batch.seed_of(i)), batch.fields[i]);
        }
    }

    #[test]
    fn coefficient_variance() {
        let sp = spec(1, 2.0, 4);
        let m = 100_000;
        let per_mode: Vec<Vec<f64>> = map_samples(&sp, 3, m, |_, u| {
            u.coeffs().iter().map(|c| c.norm_sqr()).collect()
        });
        for n in 1..=4 {
            let xs: Vec<f64> = per_mode.iter().map(|v| v[n - 1]).collect();
            let e = EstimateWithError::from_samples(&xs, 3);
            assert!(e.contains((n as f64).powf(-4.0), 3.0), "n={n}: {e:?}");
        }
    }

    #[test]
    fn coefficient_covariances() {
        let sp = spec(1, 2.0, 3);
        let m = 50_000;
        let products: Vec<[f64; 4]> = map_samples(&sp, 8, m, |_, u| {
            let (a, b) = (u.coeff(1), u.coeff(2));
            let same = u.coeff(1) * u.coeff(1);
            let cross = a * b.conj();
            [same.re, same.im, cross.re, cross.im]
        });
        for k in 0..4 {
            let xs: Vec<f64> = products.iter().map(|v| v[k]).collect();
            assert!(EstimateWithError::from_samples(&xs, 8).contains(0.0, 4.0), "component {k}");
        }
    }

    #[test]
    fn sobolev_moment_closed_form_and_ensemble() {
        let sp = spec(1, 2.0, 3);
        assert!((expected_sobolev_moment(&sp, 1.0) - 49.0 / 36.0).abs() < 1e-15);
        assert_eq!(expected_sobolev_moment(&MeasureSpec { n_modes: 0, ..sp }, 1.0), 0.0);
        let xs = map_samples(&sp, 21, 100_000, |_, u| sobolev_norm_sq(u, 1.0));
        let e = EstimateWithError::from_samples(&xs, 21);
        assert!(e.contains(49.0 / 36.0, 3.0), "{e:?}");
        // at the Cameron–Martin threshold the partial sums are harmonic
        let sp = spec(1, 2.0, 1);
        let h = |n| expected_sobolev_moment(&MeasureSpec { n_modes: n, ..sp }, sp.decay() - 0.5);
        assert!((h(1000) - h(500) - 2f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn cutoff_examples() {
        let sp = spec(1, 2.0, 2);
        assert_eq!(cutoff_chi_r(&SpectralField::zeros(2), &sp.with_cutoff(Some(1e-9))), 1);
        let u = SpectralField::single_mode(2, 1, Complex64::new(1.0, 0.0));
        assert_eq!(cutoff_chi_r(&u, &sp.with_cutoff(Some(25.0))), 0);
        assert_eq!(cutoff_chi_r(&u, &sp.with_cutoff(Some(26.0))), 1);
        assert_eq!(cutoff_chi_r(&u.scale(1e100), &sp), 1);
    }

    #[test]
    fn cutoff_invariant_along_flow() {
        let sp = spec(1, 2.0, 8).with_cutoff(Some(1.0));
        for i in 0..20 {
            let u = sample_indexed(&sp, 4, i).scale(2.0);
            let chi = cutoff_chi_r(&u, &sp);
            let q = conserved_quantity(&u, 2.0);
            if (q - 1.0).abs() < 1e-6 {
                continue;
            }
            let traj = integrate(&u, &sp.flow_params(), 1.0, 1e-2).unwrap();
            assert!(traj.states.iter().all(|v| cutoff_chi_r(v, &sp) == chi));
        }
    }

    #[test]
    fn log_weight_examples() {
        let sp = spec(1, 2.0, 4);
        assert_eq!(log_gaussian_weight(&SpectralField::zeros(4), &sp), 0.0);
        let u = SpectralField::single_mode(4, 1, Complex64::new(1.0, 0.0));
        assert_eq!(log_gaussian_weight(&u, &sp), -1.0);
        let r = sample_mu_s(&sp, 7);
        let moved = free_evolution(&r, 2.0, 0.83);
        assert!((log_gaussian_weight(&r, &sp) - log_gaussian_weight(&moved, &sp)).abs() < 1e-13);
    }
}
