//! Gabor transform of Gaussian white noise as a truncated random series.
//!
//! With `ξ_k` i.i.d. standard normal Hermite coefficients,
//!
//! ```text
//! F[ξ](z) = √π exp(iπuv - π|z|²/2) Σ_{k=0}^{k_max} ξ_k π^{k/2} z^k / √(k!)
//! ```
//!
//! a planar Gaussian analytic function up to the deterministic prefactor.
//! Its covariance is `π exp(iπu₁v₁ - iπu₂v₂ - π|z|²/2 - π|w|²/2 + π z w̄)`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hermite::{ln_factorial, PlanePoint};

/// ChaCha words consumed per coefficient (two `u64` for one Box–Muller pair).
const WORDS_PER_COEFFICIENT: u128 = 4;

/// Terms below this fraction of the largest term are dropped.
const SERIES_CUTOFF: f64 = 1e-18;

/// Truncated vector of i.i.d. standard normal Hermite coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    seed: u64,
    coefficients: Vec<f64>,
}

fn box_muller(a: u64, b: u64) -> f64 {
    // u1 in (0, 1], u2 in [0, 1)
    let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
    let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// The `k`-th coefficient of the draw keyed by `seed`, read directly from its
/// position in the ChaCha keystream.
pub fn noise_coefficient(seed: u64, k: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(WORDS_PER_COEFFICIENT * k as u128);
    let a = rng.next_u64();
    let b = rng.next_u64();
    box_muller(a, b)
}

/// Draws coefficients `ξ_0..=ξ_{k_max}`. Coefficient `k` depends only on
/// `(seed, k)`, so a longer draw extends a shorter one.
pub fn draw_noise(seed: u64, k_max: usize) -> NoiseDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coefficients = (0..=k_max)
        .map(|_| {
            let a = rng.next_u64();
            let b = rng.next_u64();
            box_muller(a, b)
        })
        .collect();
    NoiseDraw { seed, coefficients }
}

impl NoiseDraw {
    /// A draw with explicitly given coefficients. The seed is informational.
    pub fn from_coefficients(seed: u64, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidModel(
                "noise draw needs at least one coefficient".into(),
            ));
        }
        Ok(NoiseDraw { seed, coefficients })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k_max(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// CSV with a `seed,k_max` header row followed by one `k,xi` row per
    /// coefficient.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "seed,k_max");
        let _ = writeln!(out, "{},{}", self.seed, self.k_max());
        let _ = writeln!(out, "k,xi");
        for (k, xi) in self.coefficients.iter().enumerate() {
            let _ = writeln!(out, "{k},{xi:e}");
        }
        out
    }

    /// Parses [`NoiseDraw::to_csv`] output. Only the header is required; the
    /// coefficients are regenerated from it and checked against any rows given.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        if lines.next() != Some("seed,k_max") {
            return Err(Error::Parse("expected `seed,k_max` header".into()));
        }
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing seed,k_max row".into()))?;
        let (seed, k_max) = header
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("bad header row `{header}`")))?;
        let seed: u64 = seed
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("seed: {e}")))?;
        let k_max: usize = k_max
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("k_max: {e}")))?;
        let draw = draw_noise(seed, k_max);
        match lines.next() {
            None => return Ok(draw),
            Some("k,xi") => {}
            Some(other) => return Err(Error::Parse(format!("unexpected row `{other}`"))),
        }
        for line in lines {
            let (k, xi) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("bad coefficient row `{line}`")))?;
            let k: usize = k
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("k: {e}")))?;
            let xi: f64 = xi
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("xi: {e}")))?;
            let expected = *draw
                .coefficients
                .get(k)
                .ok_or_else(|| Error::Parse(format!("coefficient index {k} exceeds k_max")))?;
            if (xi - expected).abs() > 1e-12 * expected.abs().max(1.0) {
                return Err(Error::Parse(format!(
                    "coefficient {k} does not match seed {seed}"
                )));
            }
        }
        Ok(draw)
    }
}

fn sqrt_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| (0..16384).map(|k| (k as f64).sqrt()).collect())
}

#[inline]
fn sqrt_k(k: usize) -> f64 {
    sqrt_table()
        .get(k)
        .copied()
        .unwrap_or_else(|| (k as f64).sqrt())
}

/// `Σ ξ_k π^{k/2} z^k / √(k!) · e^{-π|z|²/2}` without the phase prefactor.
///
/// The terms form a Poisson-shaped envelope peaking near `k ≈ π|z|²`, so the
/// sum starts at the peak (computed in log space) and walks outward in both
/// directions until the terms are negligible. No intermediate leaves the
/// range of `f64` even where `e^{-π|z|²/2}` alone would underflow.
pub(crate) fn damped_series(coefficients: &[f64], z: Complex64) -> Complex64 {
    let norm_sqr = z.norm_sqr();
    if norm_sqr == 0.0 {
        return Complex64::new(coefficients[0], 0.0);
    }
    let k_max = coefficients.len() - 1;
    let mean = PI * norm_sqr;
    let peak = (mean.round() as usize).min(k_max);
    let ln_peak = peak as f64 * 0.5 * mean.ln() - 0.5 * ln_factorial(peak as u64) - 0.5 * mean;
    let start = Complex64::from_polar(ln_peak.exp(), peak as f64 * z.im.atan2(z.re));
    let cut = (start.norm() * SERIES_CUTOFF).powi(2);
    let step = z * PI.sqrt();

    let mut sum = start * coefficients[peak];
    let mut term = start;
    for (k, &xi) in coefficients.iter().enumerate().skip(peak + 1) {
        term = term * step / sqrt_k(k);
        sum += term * xi;
        if term.norm_sqr() < cut && k as f64 > mean {
            break;
        }
    }
    let inv_step = step.inv();
    let mut term = start;
    for k in (0..peak).rev() {
        term = term * inv_step * sqrt_k(k + 1);
        sum += term * coefficients[k];
        if term.norm_sqr() < cut && (k as f64) < mean {
            break;
        }
    }
    sum
}

/// Value of the noise field `F[ξ]` at `p`.
pub fn gaf_value(noise: &NoiseDraw, p: PlanePoint) -> Complex64 {
    let phase = Complex64::from_polar(PI.sqrt(), PI * p.u * p.v);
    phase * damped_series(&noise.coefficients, p.z())
}

/// Analytic covariance `E[F(z) conj(F(w))]`.
pub fn covariance(z: Complex64, w: Complex64) -> Complex64 {
    let exponent = Complex64::new(
        -0.5 * PI * z.norm_sqr() - 0.5 * PI * w.norm_sqr(),
        PI * z.re * z.im - PI * w.re * w.im,
    ) + z * w.conj() * PI;
    exponent.exp() * PI
}

/// Canonical metric `d(z, w) = (E|F(z) - F(w)|²)^{1/2}`.
pub fn canonical_metric(z: Complex64, w: Complex64) -> f64 {
    canonical_metric_sqr(z, w).sqrt()
}

pub fn canonical_metric_sqr(z: Complex64, w: Complex64) -> f64 {
    let angle = PI * (z.re + w.re) * (z.im - w.im);
    let bracket = 1.0 - angle.cos() * (-0.5 * PI * (z - w).norm_sqr()).exp();
    2.0 * PI * bracket.max(0.0)
}

/// Closed-form truncation order `⌈2πL² + 12√(2πL²) + 30⌉` used for fields
/// over `B_L`.
pub fn default_truncation_order(half_width: f64) -> usize {
    let mean = 2.0 * PI * half_width * half_width;
    (mean + 12.0 * mean.sqrt() + 30.0).ceil() as usize
}

/// Smallest `k_max` for which three times the deterministic tail
/// `sup_{|z|² ≤ 2L²} e^{-π|z|²/2} Σ_{k>k_max} π^{k/2}|z|^k/√(k!)` is below `tol`.
pub fn truncation_order(half_width: f64, tol: f64) -> Result<usize> {
    if !(half_width > 0.0) {
        return Err(Error::Domain(format!(
            "truncation_order requires L > 0, got {half_width}"
        )));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Domain(format!(
            "truncation_order requires 0 < tol < 1, got {tol}"
        )));
    }
    // Beyond k = 2πL² every tail term is increasing in |z| on the disc, so the
    // supremum sits on its boundary.
    let mean = 2.0 * PI * half_width * half_width;
    let floor = mean.ceil() as usize;
    let ln_term = |k: usize| k as f64 * 0.5 * mean.ln() - 0.5 * ln_factorial(k as u64) - 0.5 * mean;
    // Tail sums, accumulated from far out back toward the peak.
    let far = floor + (40.0 * mean.sqrt()) as usize + 200;
    let mut tail = 0.0f64;
    let mut answer = far;
    for k in (floor..far).rev() {
        // tail now holds Σ_{j>k}
        if 3.0 * tail < tol {
            answer = k;
        } else {
            break;
        }
        tail += ln_term(k).exp();
    }
    Ok(answer)
}
