//! Level-set hypothesis test, annulus detection and the mode/strength
//! estimators.
//!
//! Annulus detection traces `M` lines through the origin across the level
//! set. Every maximal run of members along a line contributes one radius
//! sample, the mean of the distances of its two end points from the origin.
//! A ring centred at the origin is crossed twice by every line, so it piles
//! `2M` samples into one place of the radius histogram while isolated blobs
//! scatter theirs; a histogram cluster holding more than `3M/2` samples is
//! reported as an annulus with radius `η` equal to the cluster median.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{hermite_max_abs, ModeIndex};
use crate::spectrogram::{
    level_set, max_magnitude, LevelSet, SpectrogramField, DEFAULT_LEVEL_FACTOR,
};
use crate::theory::minimax_m;

/// Default number of lines traced through the origin.
pub const DEFAULT_SLOPES: usize = 20;

/// Runs shorter than this many grid points are ignored.
pub const MIN_RUN_LENGTH: usize = 2;

/// Histogram bin width in grid spacings.
pub const BIN_WIDTH_SPACINGS: f64 = 2.0;

/// `ψ_θ`: 1 iff the level set has a member.
pub fn hypothesis_test(ls: &LevelSet) -> bool {
    !ls.is_empty()
}

/// Parameters of the level-set detection test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestParams {
    pub delta: f64,
    pub k_const: f64,
    pub half_width: f64,
}

impl TestParams {
    pub fn new(delta: f64, k_const: f64, half_width: f64) -> Result<Self> {
        let p = TestParams {
            delta,
            k_const,
            half_width,
        };
        p.validate()?;
        Ok(p)
    }

    /// Full validation, including `L ≥ π`.
    fn validate(&self) -> Result<()> {
        self.validate_formula()?;
        if !(self.half_width >= PI) {
            return Err(Error::Domain(format!(
                "L must be >= π, got {}",
                self.half_width
            )));
        }
        Ok(())
    }

    /// What the closed forms need: `δ ∈ (0, 1]`, `K > 0`, `log L > 0`.
    fn validate_formula(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Domain(format!(
                "delta must lie in (0, 1], got {}",
                self.delta
            )));
        }
        if !(self.k_const > 0.0 && self.k_const.is_finite()) {
            return Err(Error::Domain(format!(
                "K must be positive, got {}",
                self.k_const
            )));
        }
        if !(self.half_width > 1.0 && self.half_width.is_finite()) {
            return Err(Error::Domain(format!(
                "L must be > 1, got {}",
                self.half_width
            )));
        }
        Ok(())
    }

    /// `14K√(log L) + √(2π log(4/δ))`
    fn bound(&self) -> f64 {
        14.0 * self.k_const * self.half_width.ln().sqrt()
            + (2.0 * PI * (4.0 / self.delta).ln()).sqrt()
    }
}

/// `θ(δ) = 3√2 (14K√(log L) + √(2π log(4/δ)))`.
///
/// Only the domain of the formula is checked; [`TestParams::new`] also
/// enforces the guarantee's `L ≥ π`.
pub fn detection_threshold(p: &TestParams) -> Result<f64> {
    p.validate_formula()?;
    Ok(3.0 * 2f64.sqrt() * p.bound())
}

/// Smallest `|λ|` for which the level-set test at `θ(δ)` detects every mode
/// `1 ≤ k ≤ k₀`: `5√2 𝔐(k₀)^{-1} (14K√(log L) + √(2π log(4/δ)))`.
/// The guarantee needs `L ≥ max{√(k₀/π), π}`, see
/// [`crate::theory::guarantee_radius_ok`].
pub fn required_strength_detection(k0: u32, p: &TestParams) -> Result<f64> {
    p.validate_formula()?;
    Ok(5.0 * 2f64.sqrt() / minimax_m(k0)? * p.bound())
}

/// One detected ring of the level set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusEstimate {
    pub eta: f64,
    pub support: usize,
    pub bin: (f64, f64),
    pub k_floor: u64,
    pub k_nearest: u64,
}

impl AnnulusEstimate {
    fn from_samples(samples: &mut [f64], bin: (f64, f64)) -> Self {
        samples.sort_by(f64::total_cmp);
        let n = samples.len();
        let eta = if n % 2 == 1 {
            samples[n / 2]
        } else {
            0.5 * (samples[n / 2 - 1] + samples[n / 2])
        };
        AnnulusEstimate {
            eta,
            support: n,
            bin,
            k_floor: estimate_mode_floor(eta),
            k_nearest: nearest_integer(PI * eta * eta),
        }
    }
}

/// Outcome of the full detection pipeline on one field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub m_l: f64,
    pub theta_used: f64,
    pub test_result: bool,
    pub annuli: Vec<AnnulusEstimate>,
}

impl DetectionReport {
    pub fn k_floor_estimates(&self) -> Vec<u64> {
        self.annuli.iter().map(|a| a.k_floor).collect()
    }

    /// JSON object `{m_L, theta_used, test_result, annuli: [{eta, k_floor,
    /// k_nearest, support, bin: [lo, hi]}]}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "m_L": self.m_l,
            "theta_used": self.theta_used,
            "test_result": self.test_result as u8,
            "annuli": self.annuli.iter().map(|a| serde_json::json!({
                "eta": a.eta,
                "k_floor": a.k_floor,
                "k_nearest": a.k_nearest,
                "support": a.support,
                "bin": [a.bin.0, a.bin.1],
            })).collect::<Vec<_>>(),
        })
    }
}

/// Grid indices visited by the line through the origin at `angle`, stepping
/// along whichever axis the line is closer to.
fn line_trace(n: usize, angle: f64) -> Vec<(usize, usize)> {
    let side = 2 * n + 1;
    let (s, c) = angle.sin_cos();
    let center = n as f64;
    if s.abs() <= c.abs() {
        let slope = s / c;
        (0..side)
            .filter_map(|i| {
                let j = center + (slope * (i as f64 - center)).round();
                (j >= 0.0 && j < side as f64).then_some((i, j as usize))
            })
            .collect()
    } else {
        let slope = c / s;
        (0..side)
            .filter_map(|j| {
                let i = center + (slope * (j as f64 - center)).round();
                (i >= 0.0 && i < side as f64).then_some((i as usize, j))
            })
            .collect()
    }
}

/// Radius samples (mean end-point distance of each run) along every line.
pub fn radius_samples(ls: &LevelSet, slopes: usize) -> Vec<f64> {
    let grid = *ls.grid();
    let mut samples = Vec::new();
    for m in 1..=slopes {
        let angle = -PI / 2.0 + m as f64 * PI / (slopes + 1) as f64;
        let trace = line_trace(grid.n(), angle);
        let mut run_start: Option<usize> = None;
        for pos in 0..=trace.len() {
            let inside = pos < trace.len() && ls.contains(trace[pos].0, trace[pos].1);
            match (inside, run_start) {
                (true, None) => run_start = Some(pos),
                (false, Some(start)) => {
                    if pos - start >= MIN_RUN_LENGTH {
                        let (a, b) = (trace[start], trace[pos - 1]);
                        let ra = grid.point(a.0, a.1).norm();
                        let rb = grid.point(b.0, b.1).norm();
                        samples.push(0.5 * (ra + rb));
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    samples
}

/// Finds rings centred at the origin in a level set using `slopes` lines.
pub fn detect_annuli(ls: &LevelSet, slopes: usize) -> Result<Vec<AnnulusEstimate>> {
    if slopes < 4 {
        return Err(Error::Domain(format!(
            "at least 4 slopes are required, got {slopes}"
        )));
    }
    let samples = radius_samples(ls, slopes);
    Ok(cluster_radii(
        &samples,
        ls.grid().spacing() * BIN_WIDTH_SPACINGS,
        slopes,
    ))
}

fn cluster_radii(samples: &[f64], width: f64, slopes: usize) -> Vec<AnnulusEstimate> {
    if samples.is_empty() {
        return Vec::new();
    }
    let threshold = 1.5 * slopes as f64;
    let max = samples.iter().copied().fold(0.0f64, f64::max);
    let bins = (max / width).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        counts[((s / width).floor() as usize).min(bins - 1)] += 1;
    }
    // a bin passes when it and its two neighbours hold more than 3M/2 samples
    let window = |b: usize| -> usize {
        let lo = b.saturating_sub(1);
        let hi = (b + 1).min(bins - 1);
        counts[lo..=hi].iter().sum()
    };
    let passing: Vec<bool> = (0..bins).map(|b| window(b) as f64 > threshold).collect();

    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut b = 0;
    while b < bins {
        if passing[b] {
            let start = b;
            while b + 1 < bins && passing[b + 1] {
                b += 1;
            }
            clusters.push((start, b));
        }
        b += 1;
    }

    let mut annuli: Vec<AnnulusEstimate> = clusters
        .into_iter()
        .map(|(first, last)| {
            let lo = first.saturating_sub(1) as f64 * width;
            let hi = (last + 2).min(bins) as f64 * width;
            let mut members: Vec<f64> = samples
                .iter()
                .copied()
                .filter(|&s| s >= lo && s < hi)
                .collect();
            AnnulusEstimate::from_samples(&mut members, (lo, hi))
        })
        .collect();
    // neighbouring clusters whose medians fall within one bin are one ring
    annuli.dedup_by(|next, prev| {
        if next.eta - prev.eta <= width {
            if next.support > prev.support {
                std::mem::swap(prev, next);
            }
            true
        } else {
            false
        }
    });
    annuli
}

/// `⌊π η²⌋`.
pub fn estimate_mode_floor(eta: f64) -> u64 {
    (PI * eta * eta).floor().max(0.0) as u64
}

/// Nearest integer, halves rounded up.
fn nearest_integer(x: f64) -> u64 {
    (x + 0.5).floor().max(0.0) as u64
}

/// `[[π (min{|z| : z ∈ Λ})²]]` for the level set at `θ̂`.
pub fn estimate_mode_nearest(ls: &LevelSet) -> Result<u64> {
    let min_norm_sqr = ls
        .points()
        .map(|p| p.norm_sqr())
        .min_by(f64::total_cmp)
        .ok_or(Error::EmptyLevelSet)?;
    Ok(nearest_integer(PI * min_norm_sqr))
}

/// `θ̂ = max{θ ≥ 0 : Λ(θ) ≠ ∅}`, which on a grid is the grid maximum.
pub fn theta_hat(field: &SpectrogramField) -> f64 {
    max_magnitude(field).m_l
}

/// `λ̂ = θ̂ / ∏_{t=1}^{k̂} √(k̂/(e t))`.
pub fn estimate_strength(theta_hat: f64, k_hat: u64) -> f64 {
    theta_hat / hermite_max_abs(ModeIndex(k_hat as u32))
}

/// Steps 2–4 of the detection algorithm: `m_L`, the level set at `0.2 m_L`,
/// the test on it and annulus detection.
pub fn detect(field: &SpectrogramField, slopes: usize) -> Result<DetectionReport> {
    let m_l = max_magnitude(field).m_l;
    let theta = DEFAULT_LEVEL_FACTOR * m_l;
    let ls = level_set(field, theta)?;
    let annuli = detect_annuli(&ls, slopes)?;
    Ok(DetectionReport {
        m_l,
        theta_used: theta,
        test_result: hypothesis_test(&ls),
        annuli,
    })
}

/// Plug-in estimates `(θ̂, k̂, λ̂)` with the nearest-integer mode rule.
pub fn estimate_mode_and_strength(field: &SpectrogramField) -> Result<(f64, u64, f64)> {
    let theta = theta_hat(field);
    let ls = level_set(field, theta)?;
    let k = estimate_mode_nearest(&ls)?;
    Ok((theta, k, estimate_strength(theta, k)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::hermite_ratio;
    use crate::spectrogram::{evaluate_field, Grid, ModeSpec};

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn grid() -> Grid {
        Grid::new(8.0, 256).unwrap()
    }

    #[test]
    fn test_is_nonemptiness() {
        let g = Grid::new(1.0, 2).unwrap();
        let empty = LevelSet::from_mask(g, vec![false; 25], 1.0).unwrap();
        assert!(!hypothesis_test(&empty));
        let mut mask = vec![false; 25];
        mask[7] = true;
        assert!(hypothesis_test(&LevelSet::from_mask(g, mask, 1.0).unwrap()));
    }

    #[test]
    fn half_max_level_set_is_nonempty() {
        let g = Grid::new(4.0, 32).unwrap();
        let f = evaluate_field(
            &ModeSpec::new(vec![(ModeIndex(2), 1.0)], 0.3, 4).unwrap(),
            &g,
        )
        .unwrap();
        let m = max_magnitude(&f).m_l;
        assert!(hypothesis_test(&level_set(&f, 0.5 * m).unwrap()));
    }

    #[test]
    fn threshold_arithmetic() {
        let delta = 4.0 * (-2.0 * PI).exp();
        let p = TestParams {
            delta,
            k_const: 1.0,
            half_width: std::f64::consts::E,
        };
        let theta = detection_threshold(&p).unwrap();
        let expected = 3.0 * 2f64.sqrt() * (14.0 + 2.0 * PI);
        assert!((theta - expected).abs() < 1e-10);
        assert!((theta - 86.0543).abs() < 1e-4);
        let lambda = required_strength_detection(1, &p).unwrap();
        assert!(
            (lambda - 5.0 * 2f64.sqrt() * (14.0 + 2.0 * PI) / (1.0 / std::f64::consts::E).sqrt())
                .abs()
                < 1e-9
        );
        assert!((lambda - 236.4658).abs() < 1e-4);
        for k0 in [1u32, 5, 20] {
            let ratio = required_strength_detection(k0, &p).unwrap() / theta;
            assert!((ratio - 5.0 / 3.0 / minimax_m(k0).unwrap()).abs() < 1e-12);
        }
        assert!(TestParams::new(0.0, 1.0, 8.0).is_err());
        assert!(TestParams::new(1.5, 1.0, 8.0).is_err());
        assert!(TestParams::new(0.5, 1.0, 2.0).is_err());
        assert!(detection_threshold(&TestParams { delta: 0.0, ..p }).is_err());
        assert!(detection_threshold(&TestParams { delta: 1.01, ..p }).is_err());
    }

    #[test]
    fn threshold_monotonicity() {
        let base = TestParams::new(0.1, 0.5, 8.0).unwrap();
        let t = detection_threshold(&base).unwrap();
        let more_delta = TestParams { delta: 0.2, ..base };
        let more_k = TestParams {
            k_const: 0.6,
            ..base
        };
        let more_l = TestParams {
            half_width: 9.0,
            ..base
        };
        assert!(detection_threshold(&more_delta).unwrap() < t);
        assert!(detection_threshold(&more_k).unwrap() > t);
        assert!(detection_threshold(&more_l).unwrap() > t);
        let mut prev = 0.0;
        for k0 in 1..=60u32 {
            let p = TestParams {
                half_width: 8.0,
                ..base
            };
            let r = required_strength_detection(k0, &p).unwrap();
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn mode_floor_examples() {
        assert_eq!(estimate_mode_floor((10.0 / PI).sqrt()), 10);
        assert_eq!(estimate_mode_floor(1.8), 10);
        assert_eq!(estimate_mode_floor(0.5), 0);
    }

    #[test]
    fn nearest_rule_examples() {
        let g = Grid::new(4.0, 16).unwrap();
        let mut mask = vec![false; g.len()];
        mask[g.index(16, 16)] = true;
        mask[g.index(20, 3)] = true;
        let ls = LevelSet::from_mask(g, mask, 0.0).unwrap();
        assert_eq!(estimate_mode_nearest(&ls).unwrap(), 0);
        let empty = LevelSet::from_mask(g, vec![false; g.len()], 0.0).unwrap();
        assert_eq!(estimate_mode_nearest(&empty), Err(Error::EmptyLevelSet));
        assert_eq!(nearest_integer(2.5), 3);
        assert_eq!(nearest_integer(2.4999), 2);
    }

    #[test]
    fn nearest_rule_at_theta_hat_for_noiseless_mode() {
        let f = evaluate_field(&ModeSpec::noiseless(vec![(ModeIndex(5), 1.0)]), &grid()).unwrap();
        let (theta, k, lambda) = estimate_mode_and_strength(&f).unwrap();
        assert_eq!(k, 5);
        assert_eq!(theta, max_magnitude(&f).m_l);
        assert!(lambda <= 1.0 + 1e-12 && lambda > 1.0 - 1e-3);
    }

    #[test]
    fn theta_hat_is_the_last_nonempty_level() {
        let g = Grid::new(4.0, 32).unwrap();
        let f = evaluate_field(
            &ModeSpec::new(vec![(ModeIndex(6), 1.2)], 0.2, 8).unwrap(),
            &g,
        )
        .unwrap();
        let t = theta_hat(&f);
        assert!(!level_set(&f, t).unwrap().is_empty());
        assert!(level_set(&f, t * (1.0 + 1e-9)).unwrap().is_empty());
        let zero = evaluate_field(&ModeSpec::noiseless(vec![]), &g).unwrap();
        assert_eq!(theta_hat(&zero), 0.0);
    }

    #[test]
    fn strength_examples() {
        let k = ModeIndex(7);
        assert!((estimate_strength(hermite_max_abs(k), 7) - 1.0).abs() < 1e-15);
        let f = evaluate_field(&ModeSpec::noiseless(vec![(ModeIndex(10), 2.0)]), &grid()).unwrap();
        let lambda = estimate_strength(theta_hat(&f), 10);
        assert!(
            (2.0 * (1.0 - 1e-3)..=2.0 * (1.0 + 1e-12)).contains(&lambda),
            "{lambda}"
        );
    }

    #[test]
    fn empty_mask_has_no_annuli() {
        let g = grid();
        let ls = LevelSet::from_mask(g, vec![false; g.len()], 1.0).unwrap();
        assert!(detect_annuli(&ls, 20).unwrap().is_empty());
        assert!(detect_annuli(&ls, 3).is_err());
    }

    #[test]
    fn single_noiseless_annulus() {
        let k = ModeIndex(10);
        let c = |r: f64| hermite_ratio(k, r).unwrap() - 0.2;
        let r_minus = bisect(c, -0.99, 0.0);
        let r_plus = bisect(c, 0.0, 3.0);
        let eta_star = (10.0 / PI).sqrt() * (1.0 + 0.5 * (r_minus + r_plus));

        let f = evaluate_field(&ModeSpec::noiseless(vec![(k, 1.0)]), &grid()).unwrap();
        let report = detect(&f, 20).unwrap();
        assert!(report.test_result);
        assert_eq!(report.annuli.len(), 1, "{report:?}");
        let a = &report.annuli[0];
        assert!((9..=11).contains(&a.k_floor), "{a:?}");
        assert!((a.eta * PI.sqrt() / 10f64.sqrt() - 1.0).abs() <= 0.12);
        assert!(
            (a.eta - eta_star).abs() < 2.0 * grid().spacing(),
            "{} vs {}",
            a.eta,
            eta_star
        );
        assert!(a.support as f64 > 30.0);
    }

    #[test]
    fn two_separated_noiseless_annuli() {
        let spec = ModeSpec::noiseless(vec![(ModeIndex(8), 1.0), (ModeIndex(90), 1.0)]);
        let f = evaluate_field(&spec, &grid()).unwrap();
        let report = detect(&f, 20).unwrap();
        assert_eq!(report.annuli.len(), 2, "{report:?}");
        assert!(report.annuli[0].k_floor.abs_diff(8) <= 1);
        assert!(report.annuli[1].k_floor.abs_diff(90) <= 1);
    }

    #[test]
    fn report_json_schema() {
        let report = DetectionReport {
            m_l: 1.0,
            theta_used: 0.2,
            test_result: true,
            annuli: vec![AnnulusEstimate {
                eta: 1.8,
                support: 40,
                bin: (1.75, 1.875),
                k_floor: 10,
                k_nearest: 10,
            }],
        };
        let v = report.to_json();
        assert_eq!(v["test_result"], 1);
        assert_eq!(v["annuli"][0]["bin"][1], 1.875);
        assert_eq!(v["annuli"][0]["support"], 40);
        assert!(v.get("m_L").is_some());
    }
}
