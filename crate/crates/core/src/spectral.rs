//! Zero-mean real fields on the 2π-torus in Fourier representation.
//!
//! A [`SpectralField`] stores the coefficients `û(1..=n_max)` of
//! `u(x) = Σ_{0<|n|≤n_max} û(n) e^{inx}`; negative modes are the complex
//! conjugates and the mean mode is absent. Norms follow the positive-mode
//! convention `‖u‖²_{H^σ} = Σ_{n≥1} n^{2σ} |û(n)|²`, so the plain L² norm
//! carries an explicit factor `4π`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Below this many modes products are evaluated by direct convolution.
pub const DIRECT_PRODUCT_MAX_MODES: usize = 32;

#[derive(Clone, PartialEq)]
pub struct SpectralField {
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("n_max", &self.n_max())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl SpectralField {
    /// Builds a field from `û(1..=n_max)`. Rejects an empty list and
    /// non-finite coefficients.
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("n_max", "a field needs at least one mode"));
        }
        if let Some(n) = coeffs.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(invalid("coeffs", format!("coefficient of mode {} is not finite", n + 1)));
        }
        Ok(Self { coeffs })
    }

    pub(crate) fn from_vec_unchecked(coeffs: Vec<Complex64>) -> Self {
        debug_assert!(!coeffs.is_empty());
        Self { coeffs }
    }

    pub fn zeros(n_max: usize) -> Self {
        assert!(n_max >= 1, "n_max must be positive");
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); n_max],
        }
    }

    /// Field with a single nonzero mode.
    pub fn single_mode(n_max: usize, n: usize, value: Complex64) -> Self {
        assert!((1..=n_max).contains(&n), "mode {n} outside 1..={n_max}");
        let mut u = Self::zeros(n_max);
        u.coeffs[n - 1] = value;
        u
    }

    pub fn from_fn(n_max: usize, f: impl FnMut(usize) -> Complex64) -> Self {
        assert!(n_max >= 1, "n_max must be positive");
        Self {
            coeffs: (1..=n_max).map(f).collect(),
        }
    }

    #[inline]
    pub fn n_max(&self) -> usize {
        self.coeffs.len()
    }

    /// `û(n)` for `n ≥ 1`; zero beyond `n_max`.
    #[inline]
    pub fn coeff(&self, n: usize) -> Complex64 {
        assert!(n >= 1, "mode 0 is not stored");
        self.coeffs.get(n - 1).copied().unwrap_or_default()
    }

    /// Coefficient of any integer mode, using `û(-n) = conj û(n)` and `û(0) = 0`.
    #[inline]
    pub fn coeff_signed(&self, n: i64) -> Complex64 {
        match n {
            0 => Complex64::new(0.0, 0.0),
            n if n > 0 => self.coeff(n as usize),
            n => self.coeff((-n) as usize).conj(),
        }
    }

    #[inline]
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn set_coeff(&mut self, n: usize, value: Complex64) {
        assert!((1..=self.n_max()).contains(&n), "mode {n} outside 1..={}", self.n_max());
        self.coeffs[n - 1] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest mode with a nonzero coefficient (0 for the zero field).
    pub fn support(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| c.re != 0.0 || c.im != 0.0)
            .map_or(0, |i| i + 1)
    }

    /// Applies `f(n, û(n))` to every stored mode.
    pub fn map_modes(&self, mut f: impl FnMut(usize, Complex64) -> Complex64) -> Self {
        Self {
            coeffs: self.coeffs.iter().enumerate().map(|(i, &c)| f(i + 1, c)).collect(),
        }
    }

    /// Truncates or zero-pads to a new `n_max`.
    pub fn resized(&self, n_max: usize) -> Self {
        assert!(n_max >= 1, "n_max must be positive");
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(n_max, Complex64::new(0.0, 0.0));
        Self { coeffs }
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map_modes(|_, c| c * a)
    }

    /// `self + a * other`, with `n_max` the larger of the two.
    pub fn axpy(&self, a: f64, other: &SpectralField) -> Self {
        let n = self.n_max().max(other.n_max());
        Self::from_fn(n, |k| self.coeff(k) + other.coeff(k) * a)
    }

    /// Point value `u(x)`.
    pub fn value_at(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let (s, co) = (((i + 1) as f64) * x).sin_cos();
                2.0 * (c.re * co - c.im * s)
            })
            .sum()
    }

    /// Real coordinates `(a_1..a_N, b_1..b_N)` with `û(n) = a_n + i b_n`.
    pub fn to_real_coords(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.re).chain(self.coeffs.iter().map(|c| c.im)).collect()
    }

    pub fn from_real_coords(x: &[f64]) -> Result<Self> {
        if !x.len().is_multiple_of(2) || x.is_empty() {
            return Err(Error::DimensionMismatch(format!(
                "real coordinate vector must have even positive length, got {}",
                x.len()
            )));
        }
        let n = x.len() / 2;
        Self::new((0..n).map(|i| Complex64::new(x[i], x[n + i])).collect())
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(1.0, rhs)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.axpy(-1.0, rhs)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        self.scale(a)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

// Serialized as a list of `[n, re, im]` triples.
impl Serialize for SpectralField {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.n_max()))?;
        for (i, c) in self.coeffs.iter().enumerate() {
            seq.serialize_element(&(i + 1, c.re, c.im))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for SpectralField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct TripleVisitor;
        impl<'de> Visitor<'de> for TripleVisitor {
            type Value = SpectralField;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a list of [n, re, im] triples")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<SpectralField, A::Error> {
                let mut triples = Vec::new();
                while let Some(t) = seq.next_element::<(usize, f64, f64)>()? {
                    triples.push(t);
                }
                field_from_triples(&triples).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_seq(TripleVisitor)
    }
}

/// Assembles a field from `(n, re, im)` triples in any order. `n_max` is the
/// largest listed mode; unlisted modes are zero.
pub fn field_from_triples(triples: &[(usize, f64, f64)]) -> Result<SpectralField> {
    let n_max = triples.iter().map(|t| t.0).max().unwrap_or(0);
    if n_max == 0 {
        return Err(Error::Parse("field has no modes".into()));
    }
    let mut coeffs = vec![None; n_max];
    for &(n, re, im) in triples {
        if n == 0 {
            return Err(Error::Parse("mode 0 is not representable (zero mean)".into()));
        }
        if coeffs[n - 1].replace(Complex64::new(re, im)).is_some() {
            return Err(Error::Parse(format!("mode {n} listed twice")));
        }
    }
    SpectralField::new(coeffs.into_iter().map(Option::unwrap_or_default).collect())
}

/// `(Σ n^{2σ}|û(n)|²)^{1/2}`.
pub fn sobolev_norm(u: &SpectralField, sigma: f64) -> f64 {
    sobolev_norm_sq(u, sigma).sqrt()
}

pub fn sobolev_norm_sq(u: &SpectralField, sigma: f64) -> f64 {
    u.coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| ((i + 1) as f64).powf(2.0 * sigma) * c.norm_sqr())
        .sum()
}

/// `(∫_0^{2π} |u|² dx)^{1/2} = (4π Σ_{n≥1} |û(n)|²)^{1/2}`.
pub fn l2_norm(u: &SpectralField) -> f64 {
    (4.0 * PI * sobolev_norm_sq(u, 0.0)).sqrt()
}

/// `|D_x|^s`: `û(n) ↦ n^s û(n)`.
pub fn fractional_derivative(u: &SpectralField, s: f64) -> SpectralField {
    u.map_modes(|n, c| c * (n as f64).powf(s))
}

/// Classical derivative `∂_x^k`: `û(n) ↦ (in)^k û(n)`.
pub fn derivative(u: &SpectralField, k: u32) -> SpectralField {
    let rot = match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    };
    u.map_modes(|n, c| c * rot * (n as f64).powi(k as i32))
}

/// Dirichlet projector `π_N`; `n_max` is unchanged.
pub fn dirichlet_project(u: &SpectralField, n: usize) -> SpectralField {
    u.map_modes(|k, c| if k <= n { c } else { Complex64::new(0.0, 0.0) })
}

/// Exact Fourier coefficients of `uv` on modes `1..=n_max_u + n_max_v`.
/// The mean of the product is dropped.
pub fn pointwise_product(u: &SpectralField, v: &SpectralField) -> SpectralField {
    let n_out = u.n_max() + v.n_max();
    if u.n_max().max(v.n_max()) <= DIRECT_PRODUCT_MAX_MODES {
        SpectralField::from_vec_unchecked(direct_convolution(u, v, n_out))
    } else {
        let m = (2 * n_out + 2).next_power_of_two();
        let a = synthesize(u, m);
        let b = synthesize(v, m);
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        SpectralField::from_vec_unchecked(analyze(&prod, n_out))
    }
}

/// `π_N(π_N u · π_N v)` on modes `1..=n`: `Σ_{n₁+n₂=k, 0<|n₁|,|n₂|≤n} û(n₁) v̂(n₂)`.
pub fn truncated_convolution(u: &SpectralField, v: &SpectralField, n: usize) -> SpectralField {
    if n <= 2 * DIRECT_PRODUCT_MAX_MODES {
        let uc = padded(u, n);
        let vc = padded(v, n);
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for k in 1..=n {
            let mut acc = Complex64::new(0.0, 0.0);
            // n₁, n₂ both positive
            for n1 in 1..k {
                acc += uc[n1 - 1] * vc[k - n1 - 1];
            }
            // one negative index
            for j in 1..=(n - k) {
                acc += uc[j - 1].conj() * vc[k + j - 1];
                acc += uc[k + j - 1] * vc[j - 1].conj();
            }
            out[k - 1] = acc;
        }
        SpectralField::from_vec_unchecked(out)
    } else {
        let up = dirichlet_project(&u.resized(n), n);
        let vp = dirichlet_project(&v.resized(n), n);
        pointwise_product(&up, &vp).resized(n)
    }
}

fn padded(u: &SpectralField, n: usize) -> Vec<Complex64> {
    (1..=n).map(|k| u.coeff(k)).collect()
}

fn direct_convolution(u: &SpectralField, v: &SpectralField, n_out: usize) -> Vec<Complex64> {
    let nu = u.n_max() as i64;
    let nv = v.n_max() as i64;
    (1..=n_out as i64)
        .map(|k| {
            let lo = (k - nv).max(-nu);
            let hi = (k + nv).min(nu);
            (lo..=hi)
                .filter(|&n1| n1 != 0 && n1 != k)
                .map(|n1| u.coeff_signed(n1) * v.coeff_signed(k - n1))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpMode {
    /// Indicator of `λ ≤ n < 2λ`.
    Sharp,
    /// Multiplier `ψ(n/λ)` with `ψ(ξ) = φ(ξ) − φ(2ξ)`.
    Smooth,
}

/// Low-pass profile: 1 on `[0,1]`, 0 on `[2,∞)`, quintic smoothstep between.
pub fn lp_cutoff(xi: f64) -> f64 {
    if xi <= 1.0 {
        1.0
    } else if xi >= 2.0 {
        0.0
    } else {
        let x = xi - 1.0;
        1.0 - x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}

/// Dyadic bump `ψ(ξ) = φ(ξ) − φ(2ξ)`, supported in `[1/2, 2]`. The sum over
/// `λ = 2^j` telescopes to one for every `n ≥ 1`.
pub fn lp_bump(xi: f64) -> f64 {
    lp_cutoff(xi) - lp_cutoff(2.0 * xi)
}

/// Littlewood–Paley piece `Δ_λ u`.
pub fn lp_block(u: &SpectralField, lambda: usize, mode: LpMode) -> Result<SpectralField> {
    if lambda == 0 || !lambda.is_power_of_two() {
        return Err(invalid("lambda", format!("{lambda} is not a dyadic integer")));
    }
    let l = lambda as f64;
    Ok(match mode {
        LpMode::Sharp => u.map_modes(|n, c| {
            if n >= lambda && n < 2 * lambda {
                c
            } else {
                Complex64::new(0.0, 0.0)
            }
        }),
        LpMode::Smooth => u.map_modes(|n, c| c * lp_bump(n as f64 / l)),
    })
}

/// Dyadic scales `1, 2, 4, …` whose blocks can touch modes `1..=n_max`.
pub fn dyadic_scales(n_max: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |&l| Some(l * 2))
        .take_while(|&l| l < 2 * n_max)
        .collect()
}

/// All nonempty-range blocks of `u`; they sum to `u`.
pub fn lp_decompose(u: &SpectralField, mode: LpMode) -> Vec<(usize, SpectralField)> {
    dyadic_scales(u.n_max())
        .into_iter()
        .map(|l| (l, lp_block(u, l, mode).expect("dyadic scale")))
        .collect()
}

/// Real samples of a field on `oversample × 2 × n_max` uniform points.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSample {
    pub oversample: usize,
    pub n_max: usize,
    pub values: Vec<f64>,
}

impl GridSample {
    pub fn from_field(u: &SpectralField, oversample: usize) -> Self {
        assert!(oversample >= 1, "oversample must be positive");
        let m = oversample * 2 * u.n_max();
        Self {
            oversample,
            n_max: u.n_max(),
            values: synthesize(u, m),
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.values.len() as f64
    }

    /// Back to `n_max` coefficients.
    pub fn to_field(&self) -> SpectralField {
        SpectralField::from_vec_unchecked(analyze(&self.values, self.n_max))
    }
}

/// Grid maximum of `|u|` at `oversample × 2 × n_max` points; a lower bound
/// on the true sup that converges as `oversample` grows.
pub fn sup_norm(u: &SpectralField, oversample: usize) -> f64 {
    assert!(oversample >= 2, "sup_norm needs oversample >= 2");
    GridSample::from_field(u, oversample)
        .values
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `(Σ_j |u(x_j)|^p Δx)^{1/p}` on the oversampled grid.
pub fn lebesgue_norm(u: &SpectralField, p: f64, oversample: usize) -> f64 {
    assert!(p >= 1.0, "lebesgue_norm needs p >= 1");
    assert!(oversample >= 2, "lebesgue_norm needs oversample >= 2");
    let g = GridSample::from_field(u, oversample);
    grid_lp_norm(&g.values, g.spacing(), p)
}

pub(crate) fn grid_lp_norm(values: &[f64], dx: f64, p: f64) -> f64 {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().map(|v| (v.abs() / peak).powf(p)).sum();
    peak * (s * dx).powf(1.0 / p)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Values of `u` at `x_j = 2πj/m`. Requires `m > 2 n_max` (no aliasing).
pub(crate) fn synthesize(u: &SpectralField, m: usize) -> Vec<f64> {
    assert!(m > 2 * u.n_max(), "grid of {m} points aliases {} modes", u.n_max());
    synthesize_folded(u, m)
}

/// Values of `u` at `x_j = 2πj/m` for any `m ≥ 1`; modes beyond the grid
/// are folded onto their aliases, which leaves the samples exact.
pub(crate) fn synthesize_folded(u: &SpectralField, m: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (i, &c) in u.coeffs().iter().enumerate() {
        let k = (i + 1) % m;
        buf[k] += c;
        buf[(m - k) % m] += c.conj();
    }
    plan(m, true).process(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

/// Coefficients `1..=n_max` of a real grid function on `m = values.len()` points.
pub(crate) fn analyze(values: &[f64], n_max: usize) -> Vec<Complex64> {
    let m = values.len();
    assert!(m > 2 * n_max, "grid of {m} points cannot resolve {n_max} modes");
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(m, false).process(&mut buf);
    let inv = 1.0 / m as f64;
    buf[1..=n_max].iter().map(|c| c * inv).collect()
}
