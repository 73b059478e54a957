//! Transport of `μ_{s,r}` under the truncated flow: set predicates,
//! Radon–Nikodym weights, the two Monte Carlo estimators of
//! `μ_{s,r}(Φ_N(t)A)`, Hölder-type measure bounds, and the forced linear
//! flow that leaves the Cameron–Martin space.

use std::f64::consts::E;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::flow::{energy, evolve, forced_linear_flow, GbbmParams};
use crate::measures::{cutoff_chi_r, map_samples, MeasureSpec};
use crate::spectral::{sobolev_norm, SpectralField};
use crate::stats::{least_squares_slope, EstimateWithError};

/// Smallest ensemble accepted by the transport estimators.
pub const MIN_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Re,
    Im,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetSpec {
    /// `{‖u‖_{H^σ} ≤ radius}`; an infinite radius is the whole space.
    SobolevBall { sigma: f64, radius: f64 },
    /// `{component of û(mode) ≤ threshold}`.
    HalfSpace {
        mode: usize,
        component: Component,
        threshold: f64,
    },
}

impl SetSpec {
    pub fn whole_space() -> Self {
        SetSpec::SobolevBall {
            sigma: 0.0,
            radius: f64::INFINITY,
        }
    }
}

pub fn set_contains(set: &SetSpec, u: &SpectralField) -> bool {
    match *set {
        SetSpec::SobolevBall { sigma, radius } => radius == f64::INFINITY || sobolev_norm(u, sigma) <= radius,
        SetSpec::HalfSpace {
            mode,
            component,
            threshold,
        } => {
            let c = u.coeff(mode);
            let x = match component {
                Component::Re => c.re,
                Component::Im => c.im,
            };
            x <= threshold
        }
    }
}

/// `‖π_N u‖² − ‖π_N Φ_N(t)u‖²` in `H^{s+γ/2}`.
pub fn log_radon_nikodym_weight(u: &SpectralField, p: &GbbmParams, t: f64, dt: f64) -> Result<f64> {
    let moved = evolve(u, p, t, dt)?;
    Ok(energy(u, p) - energy(&moved, p))
}

/// Density of the image of the truncated Gaussian under `Φ_N(t)` at `u`.
pub fn radon_nikodym_weight(u: &SpectralField, p: &GbbmParams, t: f64, dt: f64) -> Result<f64> {
    log_radon_nikodym_weight(u, p, t, dt).map(f64::exp)
}

fn check_ensemble(spec: &MeasureSpec, p: &GbbmParams, m: usize) -> Result<()> {
    spec.validate()?;
    p.validate()?;
    if m < MIN_SAMPLES {
        return Err(invalid("M", format!("need at least {MIN_SAMPLES} samples, got {m}")));
    }
    if spec.n_modes != p.n_modes || spec.s != p.s || spec.gamma != p.gamma {
        return Err(Error::DimensionMismatch(format!(
            "measure (s={}, gamma={}, N={}) and flow (s={}, gamma={}, N={}) disagree",
            spec.s, spec.gamma, spec.n_modes, p.s, p.gamma, p.n_modes
        )));
    }
    Ok(())
}

fn collect(values: Vec<Result<f64>>, seed: u64) -> Result<EstimateWithError> {
    let xs = values.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(EstimateWithError::from_samples(&xs, seed))
}

/// `μ_{s,r}(Φ_N(t)A)` as the mean of `1_A(Φ_N(−t)u) χ_r(u)` over `u ~ μ_s`.
pub fn transported_probability_direct(
    set: &SetSpec,
    spec: &MeasureSpec,
    p: &GbbmParams,
    t: f64,
    dt: f64,
    m: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    check_ensemble(spec, p, m)?;
    let values = map_samples(spec, seed, m, |_, u| {
        if cutoff_chi_r(u, spec) == 0 {
            return Ok(0.0);
        }
        let back = evolve(u, p, -t, dt)?;
        Ok(if set_contains(set, &back) { 1.0 } else { 0.0 })
    });
    collect(values, seed)
}

/// `μ_{s,r}(Φ_N(t)A)` as the mean of `1_A(u) χ_r(u) w(u, t)` over `u ~ μ_s`,
/// on the same samples as [`transported_probability_direct`].
pub fn transported_probability_weighted(
    set: &SetSpec,
    spec: &MeasureSpec,
    p: &GbbmParams,
    t: f64,
    dt: f64,
    m: usize,
    seed: u64,
) -> Result<EstimateWithError> {
    check_ensemble(spec, p, m)?;
    let values = map_samples(spec, seed, m, |_, u| {
        if cutoff_chi_r(u, spec) == 0 || !set_contains(set, u) {
            return Ok(0.0);
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        radon_nikodym_weight(u, p, t, dt)
    });
    collect(values, seed)
}

/// Plain Monte Carlo estimate of `μ_{s,r}(A)`.
pub fn measure_of_set(set: &SetSpec, spec: &MeasureSpec, m: usize, seed: u64) -> Result<EstimateWithError> {
    spec.validate()?;
    let values = map_samples(spec, seed, m, |_, u| {
        f64::from(cutoff_chi_r(u, spec) == 1 && set_contains(set, u))
    });
    Ok(EstimateWithError::from_samples(&values, seed))
}

fn check_yudovich_args(t: f64, c: f64, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", format!("need alpha in (0, 1], got {alpha}")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(invalid("C", format!("need C >= 0, got {c}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("need t >= 0, got {t}")));
    }
    Ok(())
}

/// `log(m) + C e t (2 + log(1/m))^{1−α}`.
pub fn log_yudovich_bound(m: f64, t: f64, c: f64, alpha: f64) -> Result<f64> {
    if !(m > 0.0 && m <= 1.0) {
        return Err(invalid("m", format!("need m in (0, 1], got {m}")));
    }
    check_yudovich_args(t, c, alpha)?;
    let k = -m.ln();
    Ok(-k + c * E * t * (2.0 + k).powf(1.0 - alpha))
}

/// `m exp(C e t (2 + log(1/m))^{1−α})`.
pub fn yudovich_bound(m: f64, t: f64, c: f64, alpha: f64) -> Result<f64> {
    log_yudovich_bound(m, t, c, alpha).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderCheck {
    /// A finite `C̃` with `bound(m) ≤ C̃ m^{1−δ}` exists for all `m ≤ max(m_values)`.
    pub bounded: bool,
    /// `log C̃` maximized over the grid.
    pub log_c_tilde_grid: f64,
    /// `log C̃` maximized over the whole range below the largest grid value;
    /// `+∞` when unbounded.
    pub log_c_tilde: f64,
}

/// Checks `yudovich_bound(m) ≤ C̃ m^{1−δ}`. With `k = log(1/m)` the log
/// ratio is `ℓ(k) = C e t (2+k)^{1−α} − δk`, which is concave, so its
/// supremum over `k ≥ k_min` is found in closed form; on the grid itself
/// a maximum always exists, and `bounded` reports whether it persists as
/// `m → 0`.
pub fn holder_exponent_check(m_values: &[f64], t: f64, c: f64, alpha: f64, delta: f64) -> Result<HolderCheck> {
    check_yudovich_args(t, c, alpha)?;
    if m_values.is_empty() {
        return Err(invalid("m_values", "empty grid"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(invalid("delta", format!("need delta in [0, 1), got {delta}")));
    }
    let a = c * E * t;
    let ell = |k: f64| a * (2.0 + k).powf(1.0 - alpha) - delta * k;
    let mut grid = f64::NEG_INFINITY;
    let mut k_min = f64::INFINITY;
    for &m in m_values {
        let log_bound = log_yudovich_bound(m, t, c, alpha)?;
        grid = grid.max(log_bound - (1.0 - delta) * m.ln());
        k_min = k_min.min(-m.ln());
    }
    let bounded = a == 0.0 || alpha == 1.0 || delta > 0.0;
    let log_c_tilde = if !bounded {
        f64::INFINITY
    } else if a == 0.0 || alpha == 1.0 {
        // ℓ is non-increasing
        ell(k_min)
    } else {
        let k_star = (a * (1.0 - alpha) / delta).powf(1.0 / alpha) - 2.0;
        ell(k_star.max(k_min))
    };
    Ok(HolderCheck {
        bounded,
        log_c_tilde_grid: grid,
        log_c_tilde: log_c_tilde.max(grid),
    })
}

/// Window in which the forced linear flow leaves `H^{s+γ/2}`.
pub fn singular_window(gamma: f64) -> Result<()> {
    if gamma > 4.0 / 3.0 && gamma < 1.5 {
        Ok(())
    } else {
        Err(invalid(
            "gamma",
            format!("singular transport needs gamma in (4/3, 3/2), got {gamma}; the energy of f(t) converges for gamma > 3/2"),
        ))
    }
}

/// Forcing `ĥ(n) = n^{−(s+γ/2)}` on modes `1..=n_max`.
pub fn singular_forcing(gamma: f64, s: u32, n_max: usize) -> SpectralField {
    let a = s as f64 + gamma / 2.0;
    SpectralField::from_fn(n_max, |n| Complex64::new((n as f64).powf(-a), 0.0))
}

fn check_n_list(n_list: &[usize]) -> Result<usize> {
    if n_list.is_empty() || n_list.contains(&0) {
        return Err(invalid("N_list", "need a nonempty list of positive cutoffs"));
    }
    Ok(*n_list.iter().max().expect("nonempty"))
}

/// `‖π_N f(t)‖²_{H^{s+γ/2}}` for each `N`, with `f` the forced linear flow
/// from [`singular_forcing`].
pub fn singular_partial_sums(gamma: f64, s: u32, t: f64, n_list: &[usize]) -> Result<Vec<f64>> {
    singular_window(gamma)?;
    singular_partial_sums_unchecked(gamma, s, t, n_list)
}

/// [`singular_partial_sums`] without the window check (negative controls).
pub fn singular_partial_sums_unchecked(gamma: f64, s: u32, t: f64, n_list: &[usize]) -> Result<Vec<f64>> {
    if t == 0.0 || !t.is_finite() {
        return Err(invalid("t", "need a finite nonzero time"));
    }
    let n_max = check_n_list(n_list)?;
    let a = s as f64 + gamma / 2.0;
    let f = forced_linear_flow(&singular_forcing(gamma, s, n_max), gamma, t);
    let terms: Vec<f64> = (1..=n_max).map(|n| (n as f64).powf(2.0 * a) * f.coeff(n).norm_sqr()).collect();
    Ok(prefix_at(&terms, n_list))
}

/// Partial sums of `Σ n^{2(s+γ/2)} Re(conj k̂(n) f̂(t)(n))` with the witness
/// `k̂(n) = n^{−(s+γ/2)} / (1 + log n)`.
pub fn singular_pairing_sums(gamma: f64, s: u32, t: f64, n_list: &[usize]) -> Result<Vec<f64>> {
    let n_max = check_n_list(n_list)?;
    let a = s as f64 + gamma / 2.0;
    let f = forced_linear_flow(&singular_forcing(gamma, s, n_max), gamma, t);
    let terms: Vec<f64> = (1..=n_max)
        .map(|n| {
            let x = n as f64;
            let k = x.powf(-a) / (1.0 + x.ln());
            x.powf(2.0 * a) * k * f.coeff(n).re
        })
        .collect();
    Ok(prefix_at(&terms, n_list))
}

fn prefix_at(terms: &[f64], n_list: &[usize]) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(terms.len() + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for x in terms {
        acc += x;
        prefix.push(acc);
    }
    n_list.iter().map(|&n| prefix[n]).collect()
}

/// Growth exponent of partial sums from consecutive increments:
/// least-squares slope of `log(S_{k+1} − S_k)` against `log N_{k+1}`.
/// On a geometric grid this recovers `β` when `S(N) ~ c N^β`, without the
/// bias of the constant offset that a direct log–log fit of `S` carries.
pub fn dyadic_growth_exponent(n_list: &[usize], sums: &[f64]) -> Result<f64> {
    if n_list.len() != sums.len() || n_list.len() < 3 {
        return Err(invalid("N_list", "need at least three matching points"));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for k in 1..sums.len() {
        let inc = sums[k] - sums[k - 1];
        if !(inc > 0.0) {
            return Err(invalid("sums", format!("increment {k} is not positive")));
        }
        x.push((n_list[k] as f64).ln());
        y.push(inc.ln());
    }
    Ok(least_squares_slope(&x, &y))
}
