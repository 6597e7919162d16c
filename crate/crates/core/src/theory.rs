//! Closed-form constants and thresholds of the detection and estimation
//! guarantees, and an empirical calibration of the noise-supremum constant `K`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{hermite_max_abs, hermite_ratio, ModeIndex};
use crate::spectrogram::{evaluate_field, max_magnitude, Grid, ModeSpec};

/// `𝔐(l) = min_{1≤k≤l} ∏_{t=1}^k √(k/(e t))`, by explicit scan.
pub fn minimax_m(l: u32) -> Result<f64> {
    if l == 0 {
        return Err(Error::Domain("minimax quantity needs l >= 1".into()));
    }
    Ok((1..=l)
        .map(|k| hermite_max_abs(ModeIndex(k)))
        .fold(f64::INFINITY, f64::min))
}

/// `β(k) = max{C(k, 1/(4k+2)), C(k, -1/(4k+2))}`.
pub fn beta_k(k: u32) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("beta needs k >= 1".into()));
    }
    let r = 1.0 / (4.0 * k as f64 + 2.0);
    let k = ModeIndex(k);
    Ok(hermite_ratio(k, r)?.max(hermite_ratio(k, -r)?))
}

/// `max_{1≤k≤k₀} β(k)`.
pub fn max_beta(k0: u32) -> Result<f64> {
    if k0 == 0 {
        return Err(Error::Domain("k0 must be >= 1".into()));
    }
    (1..=k0)
        .map(beta_k)
        .try_fold(f64::NEG_INFINITY, |acc, b| Ok(acc.max(b?)))
}

/// `C(k₀) = 2 / (5 (1 - max β)) + 1`.
pub fn c_k0(k0: u32) -> Result<f64> {
    Ok(2.0 / (5.0 * (1.0 - max_beta(k0)?)) + 1.0)
}

/// Whether `L ≥ max{√(k₀/π), π}`, the radius condition shared by the
/// detection and estimation guarantees.
pub fn guarantee_radius_ok(k0: u32, half_width: f64) -> bool {
    half_width >= (k0 as f64 / PI).sqrt().max(PI)
}

// The closed forms only need log L > 0; whether a guarantee applies at the
// given radius is reported by `guarantee_radius_ok`.
fn check_formula_domain(k0: u32, half_width: f64) -> Result<()> {
    if k0 == 0 {
        return Err(Error::Domain("k0 must be >= 1".into()));
    }
    if !(half_width > 1.0 && half_width.is_finite()) {
        return Err(Error::Domain(format!("L must be > 1, got {half_width}")));
    }
    Ok(())
}

/// `t_mode(τ) = 5 C(k₀) √2 (14K + τ) 𝔐(k₀)^{-1} √(log L)`.
pub fn t_mode(tau: f64, k0: u32, half_width: f64, k_const: f64) -> Result<f64> {
    check_formula_domain(k0, half_width)?;
    Ok(
        5.0 * c_k0(k0)? * 2f64.sqrt() * (14.0 * k_const + tau) / minimax_m(k0)?
            * half_width.ln().sqrt(),
    )
}

/// `t_strength = 5 C(k₀) √2 𝔐(k₀)^{-1} log L`.
pub fn t_strength(k0: u32, half_width: f64) -> Result<f64> {
    check_formula_domain(k0, half_width)?;
    Ok(5.0 * c_k0(k0)? * 2f64.sqrt() / minimax_m(k0)? * half_width.ln())
}

/// Whether `L > max{√(k₀/π), π, exp(14K/δ)²}`, the radius condition of the
/// strength-estimation guarantee. The square is read as applying to the
/// exponential.
pub fn strength_guarantee_applies(k0: u32, half_width: f64, k_const: f64, delta: f64) -> bool {
    let bound = (k0 as f64 / PI)
        .sqrt()
        .max(PI)
        .max((14.0 * k_const / delta).exp().powi(2));
    half_width > bound
}

/// `τ = √(2π log(4/δ) / log L)`, the deviation at which the supremum bound
/// fails with probability at most `δ` (detection test).
pub fn tau_detection(delta: f64, half_width: f64) -> f64 {
    (2.0 * PI * (4.0 / delta).ln() / half_width.ln()).sqrt()
}

/// `τ(δ) = δ√(log L) - 14K`, the deviation used by the strength guarantee.
pub fn tau_strength(delta: f64, half_width: f64, k_const: f64) -> f64 {
    delta * half_width.ln().sqrt() - 14.0 * k_const
}

/// Level `3√2 (14K + τ) √(log L)` at which the noisy level set is guaranteed
/// to sit inside the signal's super-level set.
pub fn containment_level(k_const: f64, tau: f64, half_width: f64) -> f64 {
    3.0 * 2f64.sqrt() * (14.0 * k_const + tau) * half_width.ln().sqrt()
}

/// `5√2 (14K + τ) √(log L) / ∏_{t=1}^k √(k/(e t))`.
pub fn containment_strength(k: u32, k_const: f64, tau: f64, half_width: f64) -> f64 {
    5.0 * 2f64.sqrt() * (14.0 * k_const + tau) * half_width.ln().sqrt()
        / hermite_max_abs(ModeIndex(k))
}

/// `α = √2 (14K + τ) √(log L) / (|λ| ∏_{t=1}^k √(k/(e t)))`.
pub fn containment_alpha(k: u32, lambda: f64, k_const: f64, tau: f64, half_width: f64) -> f64 {
    2f64.sqrt() * (14.0 * k_const + tau) * half_width.ln().sqrt()
        / (lambda.abs() * hermite_max_abs(ModeIndex(k)))
}

/// Theoretical constants for one configuration, dumpable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBundle {
    pub k0: u32,
    pub half_width: f64,
    pub k_const: f64,
    pub tau: f64,
    pub lambda: f64,
    pub minimax: f64,
    pub beta: Vec<f64>,
    pub c_k0: f64,
    pub t_mode: f64,
    pub t_strength: f64,
    /// `α` for the hardest mode `k = argmin 𝔐` at strength `lambda`.
    pub alpha: f64,
}

impl ThresholdBundle {
    pub fn compute(k0: u32, half_width: f64, k_const: f64, tau: f64, lambda: f64) -> Result<Self> {
        let minimax = minimax_m(k0)?;
        let beta = (1..=k0).map(beta_k).collect::<Result<Vec<_>>>()?;
        let alpha = 2f64.sqrt() * (14.0 * k_const + tau) * half_width.ln().sqrt()
            / (lambda.abs() * minimax);
        Ok(ThresholdBundle {
            k0,
            half_width,
            k_const,
            tau,
            lambda,
            minimax,
            beta,
            c_k0: c_k0(k0)?,
            t_mode: t_mode(tau, k0, half_width, k_const)?,
            t_strength: t_strength(k0, half_width)?,
            alpha,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }
}

/// Quantile used by the `K` calibration.
pub const CALIBRATION_QUANTILE: f64 = 0.95;

/// Default number of noise draws used by the `K` calibration.
pub const CALIBRATION_DRAWS: usize = 500;

/// Empirical `q`-quantile (nearest-rank) of a sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// `sup_{grid}|F[ξ]|` for each of `draws` pure-noise fields with seeds
/// `base_seed, base_seed + 1, ...`.
pub fn noise_suprema(grid: &Grid, draws: usize, base_seed: u64) -> Result<Vec<f64>> {
    (0..draws as u64)
        .into_par_iter()
        .map(|i| {
            let spec = ModeSpec::new(vec![], 1.0, base_seed.wrapping_add(i))?;
            Ok(max_magnitude(&evaluate_field(&spec, grid)?).m_l)
        })
        .collect()
}

/// `K_eff = q95(sup|F[ξ]| / √(log L)) / (14√2)`: the value of `K` at which the
/// high-probability supremum bound with `τ = 0` holds for 95% of draws.
pub fn calibrate_k(grid: &Grid, draws: usize, base_seed: u64) -> Result<f64> {
    if grid.half_width() <= 1.0 {
        return Err(Error::Domain("calibration needs L > 1".into()));
    }
    if draws == 0 {
        return Err(Error::Domain("calibration needs at least one draw".into()));
    }
    let sups = noise_suprema(grid, draws, base_seed)?;
    let scale = grid.half_width().ln().sqrt();
    let normalized: Vec<f64> = sups.iter().map(|s| s / scale).collect();
    Ok(quantile(&normalized, CALIBRATION_QUANTILE) / (14.0 * 2f64.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    /// Direct product ∏_{t=1}^k √(k/(e t)), independent of the log-space path.
    fn brute_max(k: u32) -> f64 {
        (1..=k)
            .map(|t| (k as f64 / (E * t as f64)).sqrt())
            .product()
    }

    #[test]
    fn minimax_examples() {
        assert!((minimax_m(1).unwrap() - (1.0 / E).sqrt()).abs() < 1e-15);
        assert!((minimax_m(2).unwrap() - 2f64.sqrt() / E).abs() < 1e-15);
        let m112 = minimax_m(112).unwrap();
        assert!((m112 / brute_max(112) - 1.0).abs() < 1e-12);
        let stirling = (2.0 * PI * 112.0f64).powf(-0.25);
        assert!((m112 / stirling - 1.0).abs() < 0.05);
        assert!(minimax_m(0).is_err());
    }

    #[test]
    fn minimax_is_attained_at_the_last_index() {
        for l in 1..=200u32 {
            let m = minimax_m(l).unwrap();
            assert!((m / brute_max(l) - 1.0).abs() < 1e-11, "l={l}");
        }
    }

    #[test]
    fn beta_examples() {
        let b = beta_k(1).unwrap();
        assert!((b - 0.973941).abs() < 1e-6);
        let low = hermite_ratio(ModeIndex(1), -1.0 / 6.0).unwrap();
        assert!((low - 0.970888).abs() < 1e-6);
        for k in 1..=200 {
            let b = beta_k(k).unwrap();
            assert!(b < 1.0 && b > 0.0);
        }
        assert!(beta_k(0).is_err());
    }

    #[test]
    fn c_k0_examples() {
        let c = c_k0(1).unwrap();
        assert!((c - (2.0 / (5.0 * (1.0 - beta_k(1).unwrap())) + 1.0)).abs() < 1e-12);
        assert!((c - 16.3496).abs() < 1e-4);
        let mut prev = 0.0;
        for k0 in 1..=200 {
            let m = max_beta(k0).unwrap();
            assert!(m >= prev);
            prev = m;
            assert!(c_k0(k0).unwrap() > 1.0);
        }
    }

    #[test]
    fn mode_and_strength_thresholds() {
        let t = t_mode(0.0, 1, E, 1.0).unwrap();
        let expected = 5.0 * c_k0(1).unwrap() * 2f64.sqrt() * 14.0 / (1.0 / E).sqrt();
        assert!((t - expected).abs() < 1e-9);
        assert!((t - 2668.50).abs() < 0.01, "{t}");

        for &l in &[PI, 8.0, 50.0] {
            for &delta in &[1.0, 0.5, 0.01] {
                let k_const = 0.01;
                let tau = tau_strength(delta, l, k_const);
                let ratio = t_strength(5, l).unwrap() / t_mode(tau, 5, l, k_const).unwrap();
                assert!(ratio >= 1.0 - 1e-12);
                assert!((ratio - 1.0 / delta).abs() < 1e-9 / delta);
            }
        }
        let a = t_strength(5, 8.0).unwrap();
        let b = t_strength(5, 9.0).unwrap();
        assert!(b > a);
        assert!(t_mode(1.0, 5, 9.0, 0.3).unwrap() > t_mode(1.0, 5, 8.0, 0.3).unwrap());
        assert!(t_mode(1.0, 5, 1.0, 0.3).is_err());
        assert!(t_strength(0, 8.0).is_err());
        assert!(!guarantee_radius_ok(112, 5.0));
        assert!(!guarantee_radius_ok(1, E));
        assert!(guarantee_radius_ok(112, 8.0));
    }

    #[test]
    fn strength_radius_condition() {
        assert!(!strength_guarantee_applies(5, 8.0, 0.25, 0.5));
        assert!(strength_guarantee_applies(5, 1e10, 0.05, 1.0));
    }

    #[test]
    fn bundle_json() {
        let b = ThresholdBundle::compute(10, 8.0, 0.25, 1.0, 2.0).unwrap();
        assert_eq!(b.beta.len(), 10);
        let v: serde_json::Value = serde_json::from_str(&b.to_json()).unwrap();
        assert_eq!(v["k0"], 10);
        let again = ThresholdBundle::compute(10, 8.0, 0.25, 1.0, 2.0).unwrap();
        assert_eq!(b, again);
    }

    #[test]
    fn quantile_nearest_rank() {
        let v: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert_eq!(quantile(&v, 0.95), 95.0);
        assert_eq!(quantile(&v, 1.0), 100.0);
        assert_eq!(quantile(&[3.0], 0.5), 3.0);
    }
}
