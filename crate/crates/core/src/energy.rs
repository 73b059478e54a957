//! Growth of `‖π_N u‖²_{H^{s+γ/2}}` along the truncated flow, the
//! interpolation inequalities used to bound it, and the Gaussian tail of
//! the weighted sup norm.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow::{gbbm_rhs, restrict_to_cutoff, GbbmParams};
use crate::measures::{map_samples, MeasureSpec};
use crate::spectral::{
    derivative, fractional_derivative, l2_norm, lebesgue_norm, pointwise_product, sobolev_norm, sup_norm,
    synthesize_folded, SpectralField,
};
use crate::stats::loglog_slope;

/// Grid oversampling used for `L^p` and `L^∞` norms.
pub const NORM_OVERSAMPLE: usize = 8;

/// Exponent `s + γ/2 − 1/2 − ε` of the weighted sup norm.
pub fn sup_exponent(gamma: f64, s: u32, eps: f64) -> f64 {
    s as f64 + gamma / 2.0 - 0.5 - eps
}

/// `θ` solving `σ + ε₁ = θγ/2 + (1−θ)(s+γ/2−1/2−ε)`.
pub fn interpolation_theta(gamma: f64, s: u32, sigma: f64, eps: f64, eps1: f64) -> f64 {
    let a = sup_exponent(gamma, s, eps);
    (a - sigma - eps1) / (a - gamma / 2.0)
}

/// `(θ₁, θ₂, θ₃)` for the factors `∂^s v`, `∂^{σ₁} v`, `∂^{σ₂} v` with
/// `σ₂ = s + 1 − σ₁`. Their sum does not depend on the split.
pub fn interpolation_thetas(gamma: f64, s: u32, sigma1: f64, eps: f64, eps1: f64) -> [f64; 3] {
    let sigma2 = s as f64 + 1.0 - sigma1;
    [
        interpolation_theta(gamma, s, s as f64, eps, eps1),
        interpolation_theta(gamma, s, sigma1, eps, eps1),
        interpolation_theta(gamma, s, sigma2, eps, eps1),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBoundParams {
    /// Exponent `κ ∈ [1, 2)`.
    pub kappa: f64,
    pub eps: f64,
    pub eps1: f64,
    /// Interpolation exponents, when instantiated.
    pub theta: Vec<f64>,
    pub c_fit: f64,
}

impl EnergyBoundParams {
    pub fn new(kappa: f64, eps: f64, eps1: f64, c_fit: f64) -> Result<Self> {
        let b = Self {
            kappa,
            eps,
            eps1,
            theta: Vec::new(),
            c_fit,
        };
        b.validate()?;
        Ok(b)
    }

    /// `κ = 1.9`, `ε = ε₁ = 0.01`, `C = 1`, with the three-factor `θ_j`
    /// attached when `s ≥ 2`.
    pub fn defaults(gamma: f64, s: u32) -> Self {
        let (eps, eps1) = (0.01, 0.01);
        Self {
            kappa: 1.9,
            eps,
            eps1,
            theta: if s >= 2 {
                interpolation_thetas(gamma, s, 1.0, eps, eps1).to_vec()
            } else {
                Vec::new()
            },
            c_fit: 1.0,
        }
    }

    /// `κ = 3 − Σθ_j` from the three-factor exponents; requires
    /// `1 < Σθ_j ≤ 2` (Hölder compatibility).
    pub fn from_interpolation_exponents(gamma: f64, s: u32, eps: f64, eps1: f64) -> Result<Self> {
        if s < 2 {
            return Err(invalid("s", "the three-factor exponents need s >= 2"));
        }
        let theta = interpolation_thetas(gamma, s, 1.0, eps, eps1);
        if theta.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(invalid("eps", format!("exponents {theta:?} leave (0, 1)")));
        }
        let sum: f64 = theta.iter().sum();
        if !(sum > 1.0 && sum <= 2.0) {
            return Err(invalid("gamma", format!("sum of exponents {sum} is outside (1, 2]")));
        }
        let b = Self {
            kappa: 3.0 - sum,
            eps,
            eps1,
            theta: theta.to_vec(),
            c_fit: 1.0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 1.0 && self.kappa < 2.0) {
            return Err(invalid("kappa", format!("need kappa in [1, 2), got {}", self.kappa)));
        }
        if !(self.eps > 0.0 && self.eps1 > 0.0) {
            return Err(invalid("eps", "need eps, eps1 > 0"));
        }
        if !(self.c_fit >= 0.0 && self.c_fit.is_finite()) {
            return Err(invalid("c_fit", format!("need a finite C >= 0, got {}", self.c_fit)));
        }
        Ok(())
    }

    pub fn with_c(&self, c_fit: f64) -> Self {
        Self {
            c_fit,
            ..self.clone()
        }
    }

    pub fn theta_sum(&self) -> f64 {
        self.theta.iter().sum()
    }
}

/// `d/dt ‖π_N u‖²_{H^{s+γ/2}} = 2 Σ n^{2s+γ} Re(conj û(n) r̂(n))` with
/// `r` the truncated vector field.
pub fn energy_derivative_spectral(u: &SpectralField, p: &GbbmParams) -> Result<f64> {
    let r = gbbm_rhs(u, p)?;
    let e = 2.0 * p.s as f64 + p.gamma;
    Ok(2.0
        * (1..=p.n_modes)
            .map(|n| (n as f64).powf(e) * (u.coeff(n).conj() * r.coeff(n)).re)
            .sum::<f64>())
}

fn grid_points(n: usize, oversample: usize) -> Result<usize> {
    let m = oversample * 2 * n;
    if m <= 3 * n {
        return Err(Error::InsufficientResolution {
            points: m,
            degree: 3 * n,
        });
    }
    Ok(m)
}

fn grid_integral(factors: &[&SpectralField], m: usize) -> f64 {
    let grids: Vec<Vec<f64>> = factors.iter().map(|f| synthesize_folded(f, m)).collect();
    let dx = 2.0 * PI / m as f64;
    (0..m).map(|j| grids.iter().map(|g| g[j]).product::<f64>()).sum::<f64>() * dx
}

/// `(I₁, I₂)` with `v = π_N u`,
/// `I₁ = −(1/2π) ∫ (∂^s v) ∂^{s+1}(v²)` and
/// `I₂ = (1/2π) ∫ ((1+|D|^γ)^{-1}|D|^s v)(|D|^s ∂_x(v²))`,
/// by the trapezoid rule on `oversample · 2N` points (exact above `3N`).
pub fn energy_derivative_decomposed(u: &SpectralField, p: &GbbmParams, oversample: usize) -> Result<(f64, f64)> {
    p.validate()?;
    let v = restrict_to_cutoff(u, p.n_modes)?;
    let m = grid_points(p.n_modes, oversample)?;
    let s = p.s;
    let sq = pointwise_product(&v, &v);
    let f1 = derivative(&v, s);
    let g1 = derivative(&sq, s + 1);
    let i1 = -grid_integral(&[&f1, &g1], m) / (2.0 * PI);
    let f2 = fractional_derivative(&v, s as f64).map_modes(|n, c| c / (1.0 + (n as f64).powf(p.gamma)));
    let g2 = derivative(&fractional_derivative(&sq, s as f64), 1);
    let i2 = grid_integral(&[&f2, &g2], m) / (2.0 * PI);
    Ok((i1, i2))
}

/// `|∫(∂^s v)(∂^{s+1} v) v + (1/2)∫ ∂_x v (∂^s v)²|` by grid quadrature.
pub fn ibp_identity_residual(v: &SpectralField, s: u32, oversample: usize) -> Result<f64> {
    if s < 1 {
        return Err(invalid("s", "need s >= 1"));
    }
    let m = grid_points(v.n_max(), oversample)?;
    let ds = derivative(v, s);
    let ds1 = derivative(v, s + 1);
    let d1 = derivative(v, 1);
    let lhs = grid_integral(&[&ds, &ds1, v], m);
    let rhs = -0.5 * grid_integral(&[&d1, &ds, &ds], m);
    Ok((lhs - rhs).abs())
}

/// `C (1 + ‖π_N u‖^{3−κ}_{H^{γ/2}}) (1 + ‖|D|^{s+γ/2−1/2−ε} π_N u‖^κ_{L^∞})`.
pub fn energy_bound_rhs(u: &SpectralField, p: &GbbmParams, b: &EnergyBoundParams) -> Result<f64> {
    let v = restrict_to_cutoff(u, p.n_modes)?;
    let h = sobolev_norm(&v, p.gamma / 2.0);
    let w = fractional_derivative(&v, sup_exponent(p.gamma, p.s, b.eps));
    let linf = sup_norm(&w, NORM_OVERSAMPLE);
    Ok(b.c_fit * (1.0 + h.powf(3.0 - b.kappa)) * (1.0 + linf.powf(b.kappa)))
}

/// `|dE/dt|` and the bound with `C = 1` at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub lhs: f64,
    pub rhs_unit: f64,
}

impl EnergySample {
    pub fn ratio(&self) -> f64 {
        if self.rhs_unit == 0.0 {
            0.0
        } else {
            self.lhs / self.rhs_unit
        }
    }
}

/// Evaluates both sides on `count` samples of `spec`.
pub fn energy_ensemble(spec: &MeasureSpec, b: &EnergyBoundParams, count: usize, seed: u64) -> Result<Vec<EnergySample>> {
    spec.validate()?;
    let p = spec.flow_params();
    let unit = b.with_c(1.0);
    map_samples(spec, seed, count, |_, u| {
        Ok(EnergySample {
            lhs: energy_derivative_spectral(u, &p)?.abs(),
            rhs_unit: energy_bound_rhs(u, &p, &unit)?,
        })
    })
    .into_iter()
    .collect()
}

/// `margin · max lhs/rhs` over a calibration ensemble.
pub fn fit_energy_constant(calibration: &[EnergySample], margin: f64) -> f64 {
    margin * calibration.iter().map(EnergySample::ratio).fold(0.0, f64::max)
}

/// Safety factor applied to the calibrated constant.
pub const DEFAULT_FIT_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyVerification {
    pub c_fit: f64,
    /// `min rhs/lhs` over the verification ensemble with the fitted `C`.
    pub min_ratio: f64,
    /// Fraction of verification samples with `lhs ≤ rhs`.
    pub fraction_satisfied: f64,
    pub calibration_max_ratio: f64,
    pub verification_max_ratio: f64,
    pub n_calibration: usize,
    pub n_verification: usize,
}

impl EnergyVerification {
    pub fn passed(&self) -> bool {
        self.fraction_satisfied == 1.0
    }
}

/// Fits `C` on ensemble `calibration_seed` and checks the bound on the
/// disjoint ensemble `verification_seed`.
pub fn verify_energy_estimate(
    spec: &MeasureSpec,
    b: &EnergyBoundParams,
    counts: (usize, usize),
    seeds: (u64, u64),
    margin: f64,
) -> Result<EnergyVerification> {
    if seeds.0 == seeds.1 {
        return Err(invalid("seed", "calibration and verification ensembles must differ"));
    }
    let cal = energy_ensemble(spec, b, counts.0, seeds.0)?;
    let ver = energy_ensemble(spec, b, counts.1, seeds.1)?;
    Ok(summarize_energy_fit(&cal, &ver, margin))
}

/// Fits `C` on `cal` and evaluates the bound on `ver`.
pub fn summarize_energy_fit(cal: &[EnergySample], ver: &[EnergySample], margin: f64) -> EnergyVerification {
    let c_fit = fit_energy_constant(cal, margin);
    let ok = ver.iter().filter(|x| x.lhs <= c_fit * x.rhs_unit).count();
    let min_ratio = ver
        .iter()
        .map(|x| if x.lhs == 0.0 { f64::INFINITY } else { c_fit * x.rhs_unit / x.lhs })
        .fold(f64::INFINITY, f64::min);
    EnergyVerification {
        c_fit,
        min_ratio,
        fraction_satisfied: ok as f64 / ver.len() as f64,
        calibration_max_ratio: cal.iter().map(EnergySample::ratio).fold(0.0, f64::max),
        verification_max_ratio: ver.iter().map(EnergySample::ratio).fold(0.0, f64::max),
        n_calibration: cal.len(),
        n_verification: ver.len(),
    }
}

fn lp_lhs(u: &SpectralField, sigma: f64, p_exp: f64) -> f64 {
    let d = if sigma.fract() == 0.0 && sigma >= 0.0 {
        derivative(u, sigma as u32)
    } else {
        fractional_derivative(u, sigma)
    };
    lebesgue_norm(&d, p_exp, NORM_OVERSAMPLE)
}

/// `‖|D|^{γ/2} u‖_{L²}`, the homogeneous `H^{γ/2}` factor of the
/// interpolation bounds.
fn energy_factor(u: &SpectralField, gamma: f64) -> f64 {
    l2_norm(&fractional_derivative(u, gamma / 2.0))
}

/// `‖∂^σ u‖_{L^{2/θ}} / (‖|D|^{γ/2}u‖^θ_{L²} ‖|D|^{s+γ/2−1/2−ε}u‖^{1−θ}_{L^∞})`,
/// after checking `σ < θγ/2 + (1−θ)(s+γ/2−1/2−ε)`. Integer `σ` uses the
/// classical derivative, others `|D|^σ`. Zero for the zero field.
pub fn lp_interpolation_ratio(u: &SpectralField, sigma: f64, theta: f64, p: &GbbmParams, eps: f64) -> Result<f64> {
    let bound = theta * p.gamma / 2.0 + (1.0 - theta) * sup_exponent(p.gamma, p.s, eps);
    if !(sigma < bound) {
        return Err(Error::InterpolationConstraint {
            sigma,
            bound,
            slack: bound - sigma,
        });
    }
    lp_interpolation_ratio_unchecked(u, sigma, theta, p, eps)
}

/// [`lp_interpolation_ratio`] without the exponent constraint.
pub fn lp_interpolation_ratio_unchecked(
    u: &SpectralField,
    sigma: f64,
    theta: f64,
    p: &GbbmParams,
    eps: f64,
) -> Result<f64> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(invalid("theta", format!("need theta in (0, 1], got {theta}")));
    }
    let lhs = lp_lhs(u, sigma, 2.0 / theta);
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let h = energy_factor(u, p.gamma);
    let linf = if theta == 1.0 {
        1.0
    } else {
        sup_norm(&fractional_derivative(u, sup_exponent(p.gamma, p.s, eps)), NORM_OVERSAMPLE)
    };
    Ok(lhs / (h.powf(theta) * linf.powf(1.0 - theta)))
}

/// `θ = 2α/3` for the `L³` bound, where `σ = (5−γ+8ε)/4` is written as
/// `αγ/2 + (1−α)(1/2+γ/2−ε)`; `θ = 2/3` when `σ ≤ γ/2`.
pub fn lp_cubic_theta(gamma: f64, eps: f64) -> Result<f64> {
    if !(gamma > 4.0 / 3.0) {
        return Err(invalid("gamma", format!("the L^3 bound needs gamma > 4/3, got {gamma}")));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(invalid("eps", format!("need eps in (0, 1/2), got {eps}")));
    }
    let sigma = (5.0 - gamma + 8.0 * eps) / 4.0;
    let theta = if sigma <= gamma / 2.0 {
        2.0 / 3.0
    } else {
        let alpha = (0.5 + gamma / 2.0 - eps - sigma) / (0.5 - eps);
        2.0 * alpha / 3.0
    };
    if !(theta > 1.0 / 3.0) {
        return Err(invalid(
            "eps",
            format!("theta = {theta} does not exceed 1/3 for gamma = {gamma}, eps = {eps}"),
        ));
    }
    Ok(theta)
}

/// `‖∂_x u‖_{L³} / (‖|D|^{γ/2}u‖^θ_{L²} ‖|D|^{1/2+γ/2−ε}u‖^{1−θ}_{L^∞})`
/// with `θ` from [`lp_cubic_theta`]. Zero for the zero field.
pub fn lp_cubic_check(u: &SpectralField, gamma: f64, eps: f64) -> Result<f64> {
    let theta = lp_cubic_theta(gamma, eps)?;
    let lhs = lebesgue_norm(&derivative(u, 1), 3.0, NORM_OVERSAMPLE);
    if lhs == 0.0 {
        return Ok(0.0);
    }
    let h = energy_factor(u, gamma);
    let linf = sup_norm(&fractional_derivative(u, 0.5 + gamma / 2.0 - eps), NORM_OVERSAMPLE);
    Ok(lhs / (h.powf(theta) * linf.powf(1.0 - theta)))
}

/// Largest [`lp_interpolation_ratio`] over an ensemble of `spec`.
pub fn lp_ratio_ensemble_max(spec: &MeasureSpec, sigma: f64, theta: f64, eps: f64, count: usize, seed: u64) -> Result<f64> {
    let p = spec.flow_params();
    let ratios: Result<Vec<f64>> = map_samples(spec, seed, count, |_, u| lp_interpolation_ratio(u, sigma, theta, &p, eps))
        .into_iter()
        .collect();
    Ok(ratios?.into_iter().fold(0.0, f64::max))
}

/// Largest [`lp_cubic_check`] over an ensemble of `spec`.
pub fn lp_cubic_ensemble_max(spec: &MeasureSpec, eps: f64, count: usize, seed: u64) -> Result<f64> {
    let ratios: Result<Vec<f64>> = map_samples(spec, seed, count, |_, u| lp_cubic_check(u, spec.gamma, eps))
        .into_iter()
        .collect();
    Ok(ratios?.into_iter().fold(0.0, f64::max))
}

/// Smallest ensemble accepted by [`large_deviation_scan`].
pub const MIN_LD_SAMPLES: usize = 10_000;

/// `(p, (E_M X^p)^{1/p})` for `X(u) = ‖|D|^{s+γ/2−1/2−ε} π_N u‖_{L^∞}`,
/// with the moments accumulated in log space.
pub fn large_deviation_scan(spec: &MeasureSpec, eps: f64, p_list: &[f64], m: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    if m < MIN_LD_SAMPLES {
        return Err(invalid("M", format!("need at least {MIN_LD_SAMPLES} samples, got {m}")));
    }
    large_deviation_scan_unchecked(spec, eps, p_list, m, seed)
}

/// [`large_deviation_scan`] without the ensemble-size floor.
pub fn large_deviation_scan_unchecked(
    spec: &MeasureSpec,
    eps: f64,
    p_list: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if p_list.is_empty() || p_list.iter().any(|p| !(2.0..=128.0).contains(p)) {
        return Err(invalid("p_list", "exponents must lie in [2, 128]"));
    }
    let a = sup_exponent(spec.gamma, spec.s, eps);
    let log_x = map_samples(spec, seed, m, |_, u| sup_norm(&fractional_derivative(u, a), NORM_OVERSAMPLE).ln());
    Ok(p_list
        .par_iter()
        .map(|&p| {
            let peak = log_x.iter().fold(f64::NEG_INFINITY, |acc, &l| acc.max(p * l));
            let s: f64 = log_x.iter().map(|&l| (p * l - peak).exp()).sum();
            (p, ((peak + (s / m as f64).ln()) / p).exp())
        })
        .collect())
}

/// Least-squares slope of `log ‖X‖_{L^p}` against `log p`.
pub fn large_deviation_slope(scan: &[(f64, f64)]) -> f64 {
    let (p, v): (Vec<f64>, Vec<f64>) = scan.iter().copied().unzip();
    loglog_slope(&p, &v)
}
