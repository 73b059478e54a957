//! Free evolution, the Galerkin-truncated gBBM flow and its linearization.
//!
//! In Fourier variables the truncated equation
//! `∂_t u + ∂_t|D_x|^γ u + ∂_x u + ∂_x π_N((π_N u)²) = 0` reads
//!
//! ```text
//! ∂_t û(n) = −i ω_n (û(n) + Σ_{n₁+n₂=n, 0<|n₁|,|n₂|≤N} û(n₁) û(n₂)),   ω_n = n / (1 + n^γ)
//! ```
//!
//! Since `0 < ω_n ≤ 1` the system is not stiff and classical RK4 is used.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::quad;
use crate::spectral::{sobolev_norm, sobolev_norm_sq, truncated_convolution, SpectralField};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbbmParams {
    /// Dispersion exponent γ.
    pub gamma: f64,
    /// Regularity index of the Gaussian measure.
    pub s: u32,
    /// Galerkin cutoff N.
    pub n_modes: usize,
    /// `false` drops the quadratic term, leaving the free evolution.
    #[serde(default = "default_true")]
    pub nonlinear: bool,
}

impl GbbmParams {
    pub fn new(gamma: f64, s: u32, n_modes: usize) -> Result<Self> {
        let p = Self {
            gamma,
            s,
            n_modes,
            nonlinear: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn linear(self) -> Self {
        Self {
            nonlinear: false,
            ..self
        }
    }

    pub fn with_modes(self, n_modes: usize) -> Self {
        Self { n_modes, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(invalid("gamma", format!("need gamma > 1, got {}", self.gamma)));
        }
        if self.s < 1 {
            return Err(invalid("s", "need s >= 1"));
        }
        if self.n_modes < 1 {
            return Err(invalid("n_modes", "need at least one mode"));
        }
        Ok(())
    }

    #[inline]
    pub fn omega(&self, n: usize) -> f64 {
        omega(n, self.gamma)
    }

    /// Cameron–Martin exponent `s + γ/2`.
    pub fn energy_exponent(&self) -> f64 {
        self.s as f64 + self.gamma / 2.0
    }
}

/// Phase speed `ω_n = n / (1 + n^γ)`.
#[inline]
pub fn omega(n: usize, gamma: f64) -> f64 {
    let x = n as f64;
    x / (1.0 + x.powf(gamma))
}

/// `S(t)`: `û(n) ↦ e^{−itω_n} û(n)`.
pub fn free_evolution(u: &SpectralField, gamma: f64, t: f64) -> SpectralField {
    u.map_modes(|n, c| c * Complex64::from_polar(1.0, -t * omega(n, gamma)))
}

/// `‖u‖²_{L²} + 4π‖u‖²_{H^{γ/2}} = 4π Σ (1 + n^γ)|û(n)|²`.
pub fn conserved_quantity(u: &SpectralField, gamma: f64) -> f64 {
    4.0 * PI
        * u.coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| (1.0 + ((i + 1) as f64).powf(gamma)) * c.norm_sqr())
            .sum::<f64>()
}

/// `‖π_N u‖²_{H^{s+γ/2}}`.
pub fn energy(u: &SpectralField, p: &GbbmParams) -> f64 {
    let e = p.energy_exponent();
    u.coeffs()
        .iter()
        .take(p.n_modes)
        .enumerate()
        .map(|(i, c)| ((i + 1) as f64).powf(2.0 * e) * c.norm_sqr())
        .sum()
}

/// Checks support and returns the field resized to exactly `N` modes.
pub(crate) fn restrict_to_cutoff(u: &SpectralField, n: usize) -> Result<SpectralField> {
    let support = u.support();
    if support > n {
        return Err(Error::ModeAboveCutoff {
            mode: support,
            cutoff: n,
        });
    }
    Ok(if u.n_max() == n { u.clone() } else { u.resized(n) })
}

/// Time derivative of the truncated flow at `u`.
pub fn gbbm_rhs(u: &SpectralField, p: &GbbmParams) -> Result<SpectralField> {
    let u = restrict_to_cutoff(u, p.n_modes)?;
    Ok(rhs(&u, p))
}

/// `u` must have exactly `N` modes.
pub(crate) fn rhs(u: &SpectralField, p: &GbbmParams) -> SpectralField {
    debug_assert_eq!(u.n_max(), p.n_modes);
    if p.nonlinear {
        let c = truncated_convolution(u, u, p.n_modes);
        SpectralField::from_fn(p.n_modes, |n| {
            Complex64::new(0.0, -p.omega(n)) * (u.coeff(n) + c.coeff(n))
        })
    } else {
        u.map_modes(|n, c| Complex64::new(0.0, -p.omega(n)) * c)
    }
}

/// Linearization of [`rhs`] at `base` applied to `v`: `−iω(v + 2π_N(base·v))`.
pub(crate) fn linear_rhs(base: &SpectralField, v: &SpectralField, p: &GbbmParams) -> SpectralField {
    if p.nonlinear {
        let c = truncated_convolution(base, v, p.n_modes);
        SpectralField::from_fn(p.n_modes, |n| {
            Complex64::new(0.0, -p.omega(n)) * (v.coeff(n) + c.coeff(n) * 2.0)
        })
    } else {
        v.map_modes(|n, c| Complex64::new(0.0, -p.omega(n)) * c)
    }
}

fn rk4_step(u: &SpectralField, p: &GbbmParams, h: f64) -> SpectralField {
    let k1 = rhs(u, p);
    let k2 = rhs(&u.axpy(h / 2.0, &k1), p);
    let k3 = rhs(&u.axpy(h / 2.0, &k2), p);
    let k4 = rhs(&u.axpy(h, &k3), p);
    combine_rk4(u, h, [&k1, &k2, &k3, &k4])
}

fn combine_rk4(u: &SpectralField, h: f64, k: [&SpectralField; 4]) -> SpectralField {
    SpectralField::from_fn(u.n_max(), |n| {
        u.coeff(n) + (k[0].coeff(n) + (k[1].coeff(n) + k[2].coeff(n)) * 2.0 + k[3].coeff(n)) * (h / 6.0)
    })
}

fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("need dt > 0, got {dt}")));
    }
    if !t_final.is_finite() {
        return Err(invalid("t_final", "must be finite"));
    }
    Ok(((t_final.abs() / dt) - 1e-9).ceil().max(0.0) as usize)
}

/// Time-stamped flow samples with conservation and energy logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: GbbmParams,
    /// Strictly monotone; decreasing for backward runs.
    pub times: Vec<f64>,
    pub states: Vec<SpectralField>,
    pub conserved_log: Vec<f64>,
    pub energy_log: Vec<f64>,
    /// Set when the relative conserved-quantity drift exceeded the tolerance.
    pub drift_flagged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &SpectralField {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory is never empty")
    }

    /// `max_k |Q(t_k) − Q(0)| / Q(0)` (absolute drift when `Q(0) = 0`).
    pub fn max_relative_drift(&self) -> f64 {
        let q0 = self.conserved_log[0];
        let scale = if q0 > 0.0 { q0 } else { 1.0 };
        self.conserved_log.iter().map(|q| (q - q0).abs() / scale).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    /// Record every `stride`-th step (the final step is always recorded).
    pub stride: usize,
    /// Relative drift above which the trajectory is flagged.
    pub drift_tolerance: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            stride: 1,
            drift_tolerance: 1e-6,
        }
    }
}

/// RK4 integration of the truncated flow up to `t_final` (negative runs
/// backward) with steps of at most `dt`.
pub fn integrate(u0: &SpectralField, p: &GbbmParams, t_final: f64, dt: f64) -> Result<Trajectory> {
    integrate_with(u0, p, t_final, dt, &IntegrateOptions::default())
}

pub fn integrate_with(
    u0: &SpectralField,
    p: &GbbmParams,
    t_final: f64,
    dt: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    p.validate()?;
    let steps = step_count(t_final, dt)?;
    let stride = opts.stride.max(1);
    let mut u = restrict_to_cutoff(u0, p.n_modes)?;
    let mut traj = Trajectory {
        params: *p,
        times: vec![0.0],
        conserved_log: vec![conserved_quantity(&u, p.gamma)],
        energy_log: vec![energy(&u, p)],
        states: vec![u.clone()],
        drift_flagged: false,
    };
    if steps == 0 {
        return Ok(traj);
    }
    let h = t_final / steps as f64;
    for k in 1..=steps {
        u = rk4_step(&u, p, h);
        let t = k as f64 * h;
        if !u.is_finite() {
            return Err(Error::NonFinite { time: t });
        }
        if k % stride == 0 || k == steps {
            traj.times.push(t);
            traj.conserved_log.push(conserved_quantity(&u, p.gamma));
            traj.energy_log.push(energy(&u, p));
            traj.states.push(u.clone());
        }
    }
    traj.drift_flagged = traj.max_relative_drift() > opts.drift_tolerance;
    Ok(traj)
}

/// Final state of [`integrate`] without logging.
pub fn evolve(u0: &SpectralField, p: &GbbmParams, t: f64, dt: f64) -> Result<SpectralField> {
    p.validate()?;
    let steps = step_count(t, dt)?;
    let mut u = restrict_to_cutoff(u0, p.n_modes)?;
    if steps == 0 {
        return Ok(u);
    }
    let h = t / steps as f64;
    for k in 1..=steps {
        u = rk4_step(&u, p, h);
        if !u.is_finite() {
            return Err(Error::NonFinite { time: k as f64 * h });
        }
    }
    Ok(u)
}

/// `Φ_N(t)` on a field with arbitrary `n_max`: modes above `N` follow the
/// free evolution, modes up to `N` the truncated ODE.
pub fn galerkin_flow(u0: &SpectralField, p: &GbbmParams, t: f64, dt: f64) -> Result<SpectralField> {
    let n = p.n_modes;
    let low = evolve(&u0.resized(n).map_modes(|_, c| c), p, t, dt)?;
    if u0.n_max() <= n {
        return Ok(low);
    }
    let tail = free_evolution(u0, p.gamma, t);
    Ok(SpectralField::from_fn(u0.n_max(), |k| if k <= n { low.coeff(k) } else { tail.coeff(k) }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    /// `c` in the admissible step `τ ≤ c (1 + ‖u0‖_{H^{γ/2}})^{-1}`.
    pub contraction_constant: f64,
    /// Uniform time nodes on `[0, τ]` used for the Duhamel integral.
    pub time_steps: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            contraction_constant: 0.1,
            time_steps: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome {
    pub solution: SpectralField,
    pub iterations: usize,
    /// `sup_t ‖u^{k+1}(t) − u^k(t)‖_{H^{γ/2}}` per iteration.
    pub distances: Vec<f64>,
}

impl PicardOutcome {
    /// Successive ratios `d_{k+1}/d_k`.
    pub fn contraction_ratios(&self) -> Vec<f64> {
        self.distances.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Fixed point of the Duhamel map on `[0, τ]`, returned at `t = τ`.
pub fn picard_local_solve(
    u0: &SpectralField,
    p: &GbbmParams,
    tau: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome> {
    picard_local_solve_with(u0, p, tau, tol, max_iter, &PicardOptions::default())
}

pub fn picard_local_solve_with(
    u0: &SpectralField,
    p: &GbbmParams,
    tau: f64,
    tol: f64,
    max_iter: usize,
    opts: &PicardOptions,
) -> Result<PicardOutcome> {
    p.validate()?;
    let u0 = restrict_to_cutoff(u0, p.n_modes)?;
    let half = p.gamma / 2.0;
    let admissible = opts.contraction_constant / (1.0 + sobolev_norm(&u0, half));
    if !(tau.abs() <= admissible) {
        return Err(invalid(
            "tau",
            format!("|tau| = {} exceeds c (1 + |u0|_(H^(gamma/2)))^-1 = {admissible}", tau.abs()),
        ));
    }
    let m = opts.time_steps.max(1);
    let h = tau / m as f64;
    let times: Vec<f64> = (0..=m).map(|j| j as f64 * h).collect();
    let weights = quad::interval_weights(m);

    let mut iterate: Vec<SpectralField> = times.iter().map(|&t| free_evolution(&u0, p.gamma, t)).collect();
    let mut distances = Vec::new();
    for k in 1..=max_iter {
        // integrand G(τ') = S(−τ') (1+|D|^γ)^{-1} ∂_x π_N((π_N u)²)
        let integrand: Vec<SpectralField> = iterate
            .iter()
            .zip(&times)
            .map(|(u, &t)| {
                let nl = if p.nonlinear {
                    truncated_convolution(u, u, p.n_modes)
                } else {
                    SpectralField::zeros(p.n_modes)
                };
                let g = nl.map_modes(|n, c| Complex64::new(0.0, p.omega(n)) * c);
                free_evolution(&g, p.gamma, -t)
            })
            .collect();
        let mut cumulative = SpectralField::zeros(p.n_modes);
        let mut next = Vec::with_capacity(m + 1);
        next.push(u0.clone());
        for (j, iw) in weights.iter().enumerate() {
            for &(node, w) in iw {
                cumulative = cumulative.axpy(h * w, &integrand[node]);
            }
            next.push(free_evolution(&(&u0 - &cumulative), p.gamma, times[j + 1]));
        }
        let d = next
            .iter()
            .zip(&iterate)
            .map(|(a, b)| sobolev_norm(&(a - b), half))
            .fold(0.0, f64::max);
        iterate = next;
        if !d.is_finite() {
            distances.push(d);
            break;
        }
        distances.push(d);
        if d < tol {
            return Ok(PicardOutcome {
                solution: iterate.pop().expect("nonempty"),
                iterations: k,
                distances,
            });
        }
    }
    Err(Error::NoContraction {
        iterations: distances.len(),
        distances,
    })
}

/// Per-mode diagonal partials `(∂F_n/∂a_n, ∂G_n/∂b_n)` of the real vector
/// field `∂_t a_n = F_n`, `∂_t b_n = G_n`, by central differences.
pub fn diagonal_partials(u: &SpectralField, p: &GbbmParams) -> Result<Vec<(f64, f64)>> {
    let u = restrict_to_cutoff(u, p.n_modes)?;
    let scale = u.coeffs().iter().map(|c| c.norm()).fold(1.0, f64::max);
    let h = 1e-3 * scale;
    let mut out = Vec::with_capacity(p.n_modes);
    for n in 1..=p.n_modes {
        let base = u.coeff(n);
        let probe = |delta: Complex64| {
            let mut w = u.clone();
            w.set_coeff(n, base + delta);
            rhs(&w, p).coeff(n)
        };
        let da = (probe(Complex64::new(h, 0.0)) - probe(Complex64::new(-h, 0.0))) / (2.0 * h);
        let db = (probe(Complex64::new(0.0, h)) - probe(Complex64::new(0.0, -h))) / (2.0 * h);
        out.push((da.re, db.im));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    /// `(∂F_n/∂a_n, ∂G_n/∂b_n)` for `n = 1..=N`.
    pub partials: Vec<(f64, f64)>,
    /// `max_n |∂F_n/∂a_n + ∂G_n/∂b_n|`.
    pub max_mode_divergence: f64,
    /// `Σ_n (∂F_n/∂a_n + ∂G_n/∂b_n)`.
    pub total_divergence: f64,
}

pub fn divergence_report(u: &SpectralField, p: &GbbmParams) -> Result<DivergenceReport> {
    let partials = diagonal_partials(u, p)?;
    let max_mode_divergence = partials.iter().map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
    let total_divergence = partials.iter().map(|(a, b)| a + b).sum();
    Ok(DivergenceReport {
        partials,
        max_mode_divergence,
        total_divergence,
    })
}

/// Largest per-mode divergence of the truncated vector field; zero for a
/// volume-preserving flow. Individual partials need not vanish: for
/// `2n ≤ N` they equal `±2ω_n Im û(2n)` and cancel in pairs.
pub fn divergence_diagnostic(u: &SpectralField, p: &GbbmParams) -> Result<f64> {
    Ok(divergence_report(u, p)?.max_mode_divergence)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedOptions {
    /// Largest base step accepted.
    pub max_step: f64,
}

impl Default for LinearizedOptions {
    fn default() -> Self {
        Self { max_step: 0.05 }
    }
}

/// Solves `∂_t v + ∂_t|D|^γ v + ∂_x v + 2∂_x π_N(Φ_N(t)(u0) v) = 0` along a
/// stored base trajectory. Midpoint base values come from cubic Hermite
/// interpolation with the flow's own derivative.
pub fn linearized_flow(base: &Trajectory, v0: &SpectralField) -> Result<Trajectory> {
    linearized_flow_with(base, v0, &LinearizedOptions::default())
}

pub fn linearized_flow_with(base: &Trajectory, v0: &SpectralField, opts: &LinearizedOptions) -> Result<Trajectory> {
    let p = base.params;
    let mut v = restrict_to_cutoff(v0, p.n_modes)?;
    let largest = base.times.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    if largest > opts.max_step {
        return Err(Error::BaseTooCoarse {
            found: largest,
            allowed: opts.max_step,
        });
    }
    let mut out = Trajectory {
        params: p,
        times: vec![base.times[0]],
        conserved_log: vec![conserved_quantity(&v, p.gamma)],
        energy_log: vec![energy(&v, &p)],
        states: vec![v.clone()],
        drift_flagged: false,
    };
    let mut f_prev = rhs(&base.states[0], &p);
    for k in 1..base.len() {
        let (u_a, u_b) = (&base.states[k - 1], &base.states[k]);
        let h = base.times[k] - base.times[k - 1];
        let f_next = rhs(u_b, &p);
        let mid = SpectralField::from_fn(p.n_modes, |n| {
            (u_a.coeff(n) + u_b.coeff(n)) * 0.5 + (f_prev.coeff(n) - f_next.coeff(n)) * (h / 8.0)
        });
        let k1 = linear_rhs(u_a, &v, &p);
        let k2 = linear_rhs(&mid, &v.axpy(h / 2.0, &k1), &p);
        let k3 = linear_rhs(&mid, &v.axpy(h / 2.0, &k2), &p);
        let k4 = linear_rhs(u_b, &v.axpy(h, &k3), &p);
        v = combine_rk4(&v, h, [&k1, &k2, &k3, &k4]);
        if !v.is_finite() {
            return Err(Error::NonFinite { time: base.times[k] });
        }
        out.times.push(base.times[k]);
        out.conserved_log.push(conserved_quantity(&v, p.gamma));
        out.energy_log.push(energy(&v, &p));
        out.states.push(v.clone());
        f_prev = f_next;
    }
    Ok(out)
}

/// Tangent directions `∂/∂a_n` then `∂/∂b_n` as fields.
fn coordinate_directions(n: usize) -> Vec<SpectralField> {
    (0..2 * n)
        .map(|j| {
            let value = if j < n {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 1.0)
            };
            SpectralField::single_mode(n, j % n + 1, value)
        })
        .collect()
}

/// Full variational matrix of `Φ_N(t)` at `u0` in the real coordinates
/// `(a_1..a_N, b_1..b_N)`, evolved jointly with the state by RK4.
pub fn flow_jacobian(u0: &SpectralField, p: &GbbmParams, t: f64, dt: f64) -> Result<DMatrix<f64>> {
    p.validate()?;
    let n = p.n_modes;
    if 2 * n > 40 {
        return Err(invalid("n_modes", format!("dense Jacobian needs 2N <= 40, got 2N = {}", 2 * n)));
    }
    let steps = step_count(t, dt)?;
    let mut u = restrict_to_cutoff(u0, n)?;
    let mut tangents = coordinate_directions(n);
    if steps > 0 {
        let h = t / steps as f64;
        for k in 1..=steps {
            let k1 = rhs(&u, p);
            let u2 = u.axpy(h / 2.0, &k1);
            let k2 = rhs(&u2, p);
            let u3 = u.axpy(h / 2.0, &k2);
            let k3 = rhs(&u3, p);
            let u4 = u.axpy(h, &k3);
            let k4 = rhs(&u4, p);
            tangents = tangents
                .iter()
                .map(|v| {
                    let l1 = linear_rhs(&u, v, p);
                    let l2 = linear_rhs(&u2, &v.axpy(h / 2.0, &l1), p);
                    let l3 = linear_rhs(&u3, &v.axpy(h / 2.0, &l2), p);
                    let l4 = linear_rhs(&u4, &v.axpy(h, &l3), p);
                    combine_rk4(v, h, [&l1, &l2, &l3, &l4])
                })
                .collect();
            u = combine_rk4(&u, h, [&k1, &k2, &k3, &k4]);
            if !u.is_finite() {
                return Err(Error::NonFinite { time: k as f64 * h });
            }
        }
    }
    let cols: Vec<Vec<f64>> = tangents.iter().map(SpectralField::to_real_coords).collect();
    Ok(DMatrix::from_fn(2 * n, 2 * n, |i, j| cols[j][i]))
}

/// Determinant of the flow Jacobian; 1 for a volume-preserving flow.
pub fn jacobian_determinant(u0: &SpectralField, p: &GbbmParams, t: f64, dt: f64) -> Result<f64> {
    Ok(flow_jacobian(u0, p, t, dt)?.determinant())
}

/// Closed form of `f(t) = −∫₀^t S(t−τ)(1+|D|^γ)^{-1}∂_x h dτ`:
/// `f̂(t)(n) = ĥ(n)(e^{−itω_n} − 1)`.
pub fn forced_linear_flow(h: &SpectralField, gamma: f64, t: f64) -> SpectralField {
    h.map_modes(|n, c| c * (Complex64::from_polar(1.0, -t * omega(n, gamma)) - 1.0))
}

/// `(DK(t))_{u0} v0 = −2∫₀^t S(−τ)(1+|D|^γ)^{-1}∂_x π_N(Φ_N(τ)(u0) v(τ)) dτ`
/// evaluated by quadrature over the base time grid, where `v` is the
/// linearized flow from `v0`.
pub fn dk_apply(base: &Trajectory, v0: &SpectralField) -> Result<SpectralField> {
    let p = base.params;
    let lin = linearized_flow(base, v0)?;
    if base.len() < 2 {
        return Ok(SpectralField::zeros(p.n_modes));
    }
    let h = base.times[1] - base.times[0];
    let weights = quad::total_weights(base.len() - 1);
    let mut acc = SpectralField::zeros(p.n_modes);
    for ((u, v), (&t, &w)) in base.states.iter().zip(&lin.states).zip(base.times.iter().zip(&weights)) {
        let prod = truncated_convolution(u, v, p.n_modes);
        let g = prod.map_modes(|n, c| Complex64::new(0.0, p.omega(n)) * c);
        acc = acc.axpy(-2.0 * h * w, &free_evolution(&g, p.gamma, -t));
    }
    Ok(acc)
}

/// Same operator through `K(t) = S(−t)Φ_N(t) − Id`: `S(−t) v(t) − v0`.
pub fn dk_apply_algebraic(base: &Trajectory, v0: &SpectralField) -> Result<SpectralField> {
    let p = base.params;
    let lin = linearized_flow(base, v0)?;
    let v0 = restrict_to_cutoff(v0, p.n_modes)?;
    Ok(&free_evolution(lin.final_state(), p.gamma, -base.final_time()) - &v0)
}

/// Orthonormal `H^{s+γ/2}` basis pair at mode `n`: `n^{−(s+γ/2)}` and `i n^{−(s+γ/2)}`.
pub fn energy_basis_pair(p: &GbbmParams, n: usize) -> [SpectralField; 2] {
    let a = (n as f64).powf(-p.energy_exponent());
    [
        SpectralField::single_mode(p.n_modes, n, Complex64::new(a, 0.0)),
        SpectralField::single_mode(p.n_modes, n, Complex64::new(0.0, a)),
    ]
}

/// Squared `H^{s+γ/2}` norms of `DK(t)` applied to both basis vectors of
/// each mode `1..=basis_dim` (summed per mode). Partial Hilbert–Schmidt
/// sums are prefix sums of this list.
pub fn dk_column_norms_sq(
    u0: &SpectralField,
    p: &GbbmParams,
    t: f64,
    basis_dim: usize,
    dt: f64,
) -> Result<Vec<f64>> {
    if basis_dim > p.n_modes {
        return Err(invalid("basis_dim", format!("{basis_dim} exceeds N = {}", p.n_modes)));
    }
    let base = integrate(u0, p, t, dt)?;
    let e = p.energy_exponent();
    (1..=basis_dim)
        .into_par_iter()
        .map(|n| {
            energy_basis_pair(p, n)
                .iter()
                .map(|b| dk_apply(&base, b).map(|w| sobolev_norm_sq(&w, e)))
                .sum::<Result<f64>>()
        })
        .collect()
}

/// Frobenius norm of `DK(t)` restricted to the first `basis_dim` modes.
pub fn dk_hilbert_schmidt(u0: &SpectralField, p: &GbbmParams, t: f64, basis_dim: usize, dt: f64) -> Result<f64> {
    Ok(dk_column_norms_sq(u0, p, t, basis_dim, dt)?.iter().sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::sobolev_norm;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn smooth_field(n: usize, amp: f64) -> SpectralField {
        SpectralField::from_fn(n, |k| {
            let k = k as f64;
            Complex64::from_polar(amp * (-0.5 * k).exp(), 0.7 * k)
        })
    }

    fn rough_field(n: usize, seed: u64) -> SpectralField {
        let mut x = seed | 1;
        let mut next = move || {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        SpectralField::from_fn(n, |k| c(next(), next()) * (k as f64).powf(-1.5))
    }

    #[test]
    fn free_evolution_phase_and_isometry() {
        let u = SpectralField::single_mode(1, 1, c(1.0, 0.0));
        let v = free_evolution(&u, 2.0, PI);
        assert!((v.coeff(1) - c(0.0, -1.0)).norm() < 1e-15);
        assert_eq!(free_evolution(&u, 2.0, 0.0), u);
        let r = rough_field(40, 3);
        let w = free_evolution(&r, 1.7, 2.3);
        for sigma in [0.0, 1.0, 2.0] {
            let (a, b) = (sobolev_norm(&r, sigma), sobolev_norm(&w, sigma));
            assert!((a - b).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn rhs_hand_example() {
        let p = GbbmParams::new(2.0, 1, 2).unwrap();
        let u = SpectralField::single_mode(2, 1, c(1.0, 0.0));
        let r = gbbm_rhs(&u, &p).unwrap();
        assert!((r.coeff(1) - c(0.0, -0.5)).norm() < 1e-15);
        assert!((r.coeff(2) - c(0.0, -0.4)).norm() < 1e-15);
        let z = gbbm_rhs(&SpectralField::zeros(2), &p).unwrap();
        assert!(z.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn rhs_rejects_modes_above_cutoff() {
        let p = GbbmParams::new(2.0, 1, 2).unwrap();
        let u = SpectralField::single_mode(3, 3, c(1.0, 0.0));
        assert_eq!(gbbm_rhs(&u, &p), Err(Error::ModeAboveCutoff { mode: 3, cutoff: 2 }));
        // zero padding above the cutoff is accepted
        assert!(gbbm_rhs(&SpectralField::single_mode(5, 2, c(1.0, 0.0)), &p).is_ok());
    }

    #[test]
    fn conserved_quantity_examples_and_rate() {
        let u = SpectralField::single_mode(1, 1, c(1.0, 0.0));
        assert!((conserved_quantity(&u, 2.0) - 8.0 * PI).abs() < 1e-13);
        assert!((conserved_quantity(&u, 2.0) - 25.1327).abs() < 1e-4);
        assert_eq!(conserved_quantity(&SpectralField::zeros(3), 2.0), 0.0);
        // dQ/dt = 8π Σ (1+n^γ) Re(conj û · r̂)
        for gamma in [1.4, 2.0, 2.5] {
            let p = GbbmParams::new(gamma, 1, 24).unwrap();
            let u = rough_field(24, 11);
            let r = gbbm_rhs(&u, &p).unwrap();
            let rate: f64 = (1..=24)
                .map(|n| (1.0 + (n as f64).powf(gamma)) * (u.coeff(n).conj() * r.coeff(n)).re)
                .sum();
            assert!(rate.abs() < 1e-12, "rate {rate}");
        }
    }

    #[test]
    fn diagonal_partials_follow_closed_form() {
        let p = GbbmParams::new(2.0, 1, 8).unwrap();
        let u = rough_field(8, 5);
        let partials = diagonal_partials(&u, &p).unwrap();
        for (i, (da, db)) in partials.iter().enumerate() {
            let n = i + 1;
            let expected = if 2 * n <= 8 { 2.0 * p.omega(n) * u.coeff(2 * n).im } else { 0.0 };
            assert!((da - expected).abs() < 1e-9, "n={n}: {da} vs {expected}");
            assert!((db + expected).abs() < 1e-9);
        }
    }

    #[test]
    fn divergence_vanishes() {
        for gamma in [1.4, 1.7, 2.0] {
            let p = GbbmParams::new(gamma, 1, 8).unwrap();
            let d = divergence_diagnostic(&rough_field(8, 7), &p).unwrap();
            assert!(d < 1e-8, "gamma {gamma}: {d}");
        }
        let p = GbbmParams::new(2.0, 1, 8).unwrap();
        assert_eq!(divergence_diagnostic(&SpectralField::zeros(8), &p).unwrap(), 0.0);
    }

    #[test]
    fn integrate_zero_time() {
        let p = GbbmParams::new(2.0, 1, 4).unwrap();
        let u = smooth_field(4, 0.3);
        let t = integrate(&u, &p, 0.0, 1e-2).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.states[0], u);
    }

    #[test]
    fn integrate_is_reversible() {
        let p = GbbmParams::new(2.0, 1, 16).unwrap();
        let u0 = smooth_field(16, 0.5);
        let fwd = evolve(&u0, &p, 1.0, 1e-3).unwrap();
        let back = evolve(&fwd, &p, -1.0, 1e-3).unwrap();
        let err = sobolev_norm(&(&back - &u0), 0.0);
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = GbbmParams::new(2.0, 1, 12).unwrap();
        let u0 = smooth_field(12, 1.0);
        let t = 2.0;
        let reference = evolve(&u0, &p, t, 0.2 / 16.0).unwrap();
        let e1 = sobolev_norm(&(&evolve(&u0, &p, t, 0.2).unwrap() - &reference), 0.0);
        let e2 = sobolev_norm(&(&evolve(&u0, &p, t, 0.1).unwrap() - &reference), 0.0);
        let ratio = e1 / e2;
        assert!((13.0..=19.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn integrate_logs_and_stride() {
        let p = GbbmParams::new(2.0, 1, 8).unwrap();
        let u0 = smooth_field(8, 0.5);
        let opts = IntegrateOptions {
            stride: 10,
            drift_tolerance: 1e-9,
        };
        let t = integrate_with(&u0, &p, 1.0, 1e-2, &opts).unwrap();
        assert_eq!(t.len(), 11);
        assert!((t.final_time() - 1.0).abs() < 1e-12);
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
        assert!(!t.drift_flagged);
        let back = integrate(&u0, &p, -0.5, 0.1).unwrap();
        assert!(back.times.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn integrate_reports_overflow() {
        let p = GbbmParams::new(2.0, 1, 4).unwrap();
        let u0 = smooth_field(4, 1e150);
        match integrate(&u0, &p, 1.0, 0.1) {
            Err(Error::NonFinite { time }) => assert!(time > 0.0),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn picard_zero_data() {
        let p = GbbmParams::new(2.0, 1, 8).unwrap();
        let out = picard_local_solve(&SpectralField::zeros(8), &p, 0.05, 1e-12, 20).unwrap();
        assert!(out.solution.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn picard_matches_rk4_and_contracts() {
        let p = GbbmParams::new(2.0, 1, 8).unwrap();
        let u0 = smooth_field(8, 0.4);
        let tau = 0.05;
        assert!(tau <= 0.1 / (1.0 + sobolev_norm(&u0, 1.0)));
        let out = picard_local_solve(&u0, &p, tau, 1e-13, 50).unwrap();
        let rk = evolve(&u0, &p, tau, 1e-4).unwrap();
        let err = sobolev_norm(&(&out.solution - &rk), 1.0);
        assert!(err < 1e-7, "err {err}");
        for r in out.contraction_ratios() {
            assert!(r <= 0.5, "ratio {r}");
        }
    }

    #[test]
    fn picard_rejects_long_steps_and_reports_divergence() {
        let p = GbbmParams::new(2.0, 1, 8).unwrap();
        let u0 = smooth_field(8, 3.0);
        assert!(matches!(
            picard_local_solve(&u0, &p, 1.0, 1e-12, 10),
            Err(Error::InvalidParameter { name: "tau", .. })
        ));
        let loose = PicardOptions {
            contraction_constant: 1e6,
            time_steps: 32,
        };
        match picard_local_solve_with(&u0.scale(20.0), &p, 20.0, 1e-12, 8, &loose) {
            Err(Error::NoContraction { distances, .. }) => assert!(!distances.is_empty()),
            other => panic!("expected no contraction, got {other:?}"),
        }
    }

    #[test]
    fn linearized_flow_on_zero_base_is_free_evolution() {
        let p = GbbmParams::new(2.0, 1, 8).unwrap();
        let base = integrate(&SpectralField::zeros(8), &p, 1.0, 1e-2).unwrap();
        let v0 = rough_field(8, 2);
        let lin = linearized_flow(&base, &v0).unwrap();
        let exact = free_evolution(&v0, 2.0, 1.0);
        assert!(sobolev_norm(&(lin.final_state() - &exact), 0.0) < 1e-10);
    }

    #[test]
    fn linearized_flow_is_linear_and_matches_differences() {
        let p = GbbmParams::new(2.0, 1, 8).unwrap();
        let u0 = smooth_field(8, 0.8);
        let base = integrate(&u0, &p, 1.0, 1e-3).unwrap();
        let v0 = rough_field(8, 9);
        let a = linearized_flow(&base, &v0).unwrap();
        let b = linearized_flow(&base, &v0.scale(3.5)).unwrap();
        let diff = sobolev_norm(&(&b.final_state().scale(1.0 / 3.5) - a.final_state()), 0.0);
        assert!(diff < 1e-12 * sobolev_norm(a.final_state(), 0.0));

        let eps = 1e-5;
        let pert = evolve(&u0.axpy(eps, &v0), &p, 1.0, 1e-3).unwrap();
        let fd = (&pert - base.final_state()).scale(1.0 / eps);
        let err = sobolev_norm(&(&fd - a.final_state()), 0.0);
        assert!(err < 10.0 * eps * sobolev_norm(&v0, 0.0).powi(2) + 1e-6, "err {err}");
    }

    #[test]
    fn linearized_flow_rejects_coarse_base() {
        let p = GbbmParams::new(2.0, 1, 4).unwrap();
        let base = integrate(&smooth_field(4, 0.3), &p, 1.0, 0.5).unwrap();
        assert!(matches!(linearized_flow(&base, &smooth_field(4, 1.0)), Err(Error::BaseTooCoarse { .. })));
    }

    #[test]
    fn jacobian_determinant_is_one() {
        let p = GbbmParams::new(2.0, 1, 4).unwrap();
        let u0 = rough_field(4, 13).scale(2.0);
        assert_eq!(jacobian_determinant(&u0, &p, 0.0, 1e-2).unwrap(), 1.0);
        let d = jacobian_determinant(&u0, &p, 1.0, 1e-2).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "det {d}");
        let forward = evolve(&u0, &p, 1.0, 1e-2).unwrap();
        let back = jacobian_determinant(&forward, &p, -1.0, 1e-2).unwrap();
        assert!((d * back - 1.0).abs() < 1e-6);
        assert!(jacobian_determinant(&u0, &p.with_modes(21), 0.1, 1e-2).is_err());
    }

    #[test]
    fn forced_flow_closed_form() {
        let h = rough_field(16, 4);
        let zero = forced_linear_flow(&h, 2.0, 0.0);
        assert!(zero.coeffs().iter().all(|c| c.norm() == 0.0));
        let t = 1.7;
        let f = forced_linear_flow(&h, 1.45, t);
        for n in 1..=16 {
            let expected = 2.0 * h.coeff(n).norm() * (t * omega(n, 1.45) / 2.0).sin().abs();
            assert!((f.coeff(n).norm() - expected).abs() < 1e-14);
        }
        // Duhamel integral by Gauss–Legendre quadrature
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189),
            (-0.538_469_310_105_683, 0.478_628_670_499_366),
            (0.0, 0.568_888_888_888_889),
            (0.538_469_310_105_683, 0.478_628_670_499_366),
            (0.906_179_845_938_664, 0.236_926_885_056_189),
        ];
        let panels = 200;
        for n in [1usize, 5, 16] {
            let w = omega(n, 1.45);
            let pre = Complex64::new(0.0, -w) * h.coeff(n);
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..panels {
                let (a, b) = (k as f64 * t / panels as f64, (k + 1) as f64 * t / panels as f64);
                for (x, wt) in nodes {
                    let tau = 0.5 * (a + b) + 0.5 * (b - a) * x;
                    acc += Complex64::from_polar(1.0, -(t - tau) * w) * (0.5 * (b - a) * wt);
                }
            }
            assert!((pre * acc - f.coeff(n)).norm() < 1e-10);
        }
        let single = forced_linear_flow(&SpectralField::single_mode(1, 1, c(1.0, 0.0)), 2.0, 2.0 * PI);
        assert!((single.coeff(1) - c(-2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn dk_routes_agree() {
        let p = GbbmParams::new(2.0, 1, 16).unwrap();
        let u0 = smooth_field(16, 0.8);
        let base = integrate(&u0, &p, 0.3, 1e-3).unwrap();
        for n in [1, 4, 9] {
            for v in energy_basis_pair(&p, n) {
                let a = dk_apply(&base, &v).unwrap();
                let b = dk_apply_algebraic(&base, &v).unwrap();
                let scale = sobolev_norm(&b, 0.0).max(1e-300);
                assert!(sobolev_norm(&(&a - &b), 0.0) < 1e-8 * scale.max(1e-6), "n {n}");
            }
        }
    }

    #[test]
    fn dk_vanishes_on_trivial_inputs() {
        let p = GbbmParams::new(2.0, 1, 8).unwrap();
        assert_eq!(dk_hilbert_schmidt(&SpectralField::zeros(8), &p, 0.2, 8, 1e-2).unwrap(), 0.0);
        assert_eq!(dk_hilbert_schmidt(&smooth_field(8, 0.5), &p, 0.0, 8, 1e-2).unwrap(), 0.0);
        assert!(dk_hilbert_schmidt(&smooth_field(8, 0.5), &p, 0.2, 9, 1e-2).is_err());
    }

    #[test]
    fn galerkin_flow_evolves_tail_freely() {
        let p = GbbmParams::new(2.0, 1, 4).unwrap();
        let u0 = smooth_field(10, 0.5);
        let out = galerkin_flow(&u0, &p, 0.7, 1e-2).unwrap();
        let tail = free_evolution(&u0, 2.0, 0.7);
        for n in 5..=10 {
            assert_eq!(out.coeff(n), tail.coeff(n));
        }
        let low = evolve(&u0.resized(4), &p, 0.7, 1e-2).unwrap();
        assert_eq!(out.coeff(3), low.coeff(3));
    }
}
