//! Monte Carlo evaluation of the annulus detector on random mode mixtures.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{detect, DetectionReport, DEFAULT_SLOPES};
use crate::error::{Error, Result};
use crate::hermite::ModeIndex;
use crate::noise::{default_truncation_order, draw_noise};
use crate::spectrogram::{evaluate_field_with_noise, Grid, ModeSpec};

/// Rejections allowed before separated sampling is declared infeasible.
pub const MAX_REJECTIONS: usize = 100_000;

/// Noise strength: a fixed value or `1/(10√(log L))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SigmaRule {
    Auto,
    Fixed(f64),
}

impl SigmaRule {
    pub fn resolve(self, half_width: f64) -> f64 {
        match self {
            SigmaRule::Auto => auto_sigma(half_width),
            SigmaRule::Fixed(s) => s,
        }
    }
}

/// `1/(10√(log L))`.
pub fn auto_sigma(half_width: f64) -> f64 {
    1.0 / (10.0 * half_width.ln().sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub half_width: f64,
    pub n: usize,
    pub m: usize,
    pub w: f64,
    pub lambda_range: (f64, f64),
    pub sigma: SigmaRule,
    pub k_range: (u32, u32),
    pub slopes: usize,
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            half_width: 8.0,
            n: 256,
            m: 1,
            w: 2.0,
            lambda_range: (1.0, 2.0),
            sigma: SigmaRule::Auto,
            k_range: (1, 112),
            slopes: DEFAULT_SLOPES,
            trials: 100,
            base_seed: 0,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.m == 0 {
            return bad("m must be >= 1".into());
        }
        if self.m >= 2 && !(self.w > 0.0) {
            return bad(format!("w must be > 0 for m >= 2, got {}", self.w));
        }
        let (lo, hi) = self.lambda_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad(format!("lambda range must lie in (0, ∞), got [{lo}, {hi}]"));
        }
        let (kl, kh) = self.k_range;
        if kl == 0 || kh < kl {
            return bad(format!(
                "k range must satisfy 1 <= lo <= hi, got [{kl}, {kh}]"
            ));
        }
        if (kh - kl + 1) < self.m as u32 {
            return bad(format!(
                "cannot draw {} distinct modes from [{kl}, {kh}]",
                self.m
            ));
        }
        if self.slopes < 4 {
            return bad(format!("at least 4 slopes required, got {}", self.slopes));
        }
        let sigma = self.sigma.resolve(self.half_width);
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0, got {sigma}"));
        }
        Grid::new(self.half_width, self.n)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.half_width, self.n)
    }
}

/// SplitMix64 finalizer.
fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of trial `index` under `base_seed`.
pub fn trial_seed(base_seed: u64, index: u64) -> u64 {
    mix64(base_seed ^ mix64(index))
}

fn noise_seed(trial_seed: u64) -> u64 {
    mix64(trial_seed.wrapping_add(0x6a09_e667_f3bc_c909))
}

/// Draws `m` modes uniformly from the configured range, rejecting draws
/// whose peak radii `√(k/π)` come within `w` of each other, and strengths
/// uniformly from the strength range.
pub fn sample_modes(config: &TrialConfig, seed: u64) -> Result<Vec<(ModeIndex, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (kl, kh) = config.k_range;
    let mut ks = Vec::with_capacity(config.m);
    let mut rejections = 0;
    loop {
        ks.clear();
        ks.extend((0..config.m).map(|_| rng.random_range(kl..=kh)));
        let radii: Vec<f64> = ks.iter().map(|&k| (k as f64 / PI).sqrt()).collect();
        let separated = config.m == 1
            || radii
                .iter()
                .enumerate()
                .all(|(i, a)| radii[i + 1..].iter().all(|b| (a - b).abs() > config.w));
        if separated {
            break;
        }
        rejections += 1;
        if rejections >= MAX_REJECTIONS {
            return Err(Error::Infeasible(rejections));
        }
    }
    let (lo, hi) = config.lambda_range;
    Ok(ks
        .into_iter()
        .map(|k| {
            let lambda = if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            };
            (ModeIndex(k), lambda)
        })
        .collect())
}

/// Modified accuracy: 0 when the counts differ or any sorted pair is more
/// than 1 apart, otherwise `max{0, 1 - Σ|k̂_i/k_i - 1|}`.
pub fn macc(true_ks: &[u64], est_ks: &[u64]) -> f64 {
    if true_ks.len() != est_ks.len() {
        return 0.0;
    }
    let mut t = true_ks.to_vec();
    let mut e = est_ks.to_vec();
    t.sort_unstable();
    e.sort_unstable();
    if t.iter().zip(&e).any(|(a, b)| a.abs_diff(*b) > 1) {
        return 0.0;
    }
    let penalty: f64 = t
        .iter()
        .zip(&e)
        .map(|(&k, &kh)| (kh as f64 / k as f64 - 1.0).abs())
        .sum();
    (1.0 - penalty).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub index: u64,
    pub seed: u64,
    pub true_modes: Vec<(u32, f64)>,
    pub estimated_modes: Vec<u64>,
    pub macc: f64,
    pub report: DetectionReport,
}

/// One trial: sample modes, build the noisy field, run the detector at
/// `0.2 m_L` and score the floor-rule estimates.
pub fn run_trial(config: &TrialConfig, index: u64) -> Result<TrialResult> {
    config.validate()?;
    let grid = config.grid()?;
    let seed = trial_seed(config.base_seed, index);
    let modes = sample_modes(config, seed)?;
    let sigma = config.sigma.resolve(config.half_width);
    let spec = ModeSpec::new(modes.clone(), sigma, noise_seed(seed))?;
    let noise =
        (sigma > 0.0).then(|| draw_noise(spec.seed, default_truncation_order(config.half_width)));
    let field = evaluate_field_with_noise(&spec, &grid, noise.as_ref());
    let report = detect(&field, config.slopes)?;
    let estimated_modes = report.k_floor_estimates();
    let true_ks: Vec<u64> = modes.iter().map(|&(k, _)| k.0 as u64).collect();
    Ok(TrialResult {
        index,
        seed,
        true_modes: modes.iter().map(|&(k, l)| (k.0, l)).collect(),
        macc: macc(&true_ks, &estimated_modes),
        estimated_modes,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub config: TrialConfig,
    pub trials: Vec<TrialResult>,
    pub average_macc: f64,
    /// Timing varies run to run and is left out of [`MonteCarloReport::to_json`].
    #[serde(skip)]
    pub runtime: Option<RuntimeStats>,
}

impl MonteCarloReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "config": self.config,
            "average_mACC": self.average_macc,
            "trials": self.trials.iter().map(|t| serde_json::json!({
                "index": t.index,
                "seed": t.seed,
                "true_modes": t.true_modes,
                "estimated_modes": t.estimated_modes,
                "mACC": t.macc,
                "report": t.report.to_json(),
            })).collect::<Vec<_>>(),
        }))
        .expect("report serializes")
    }

    /// One row per trial: `trial,seed,true_ks,est_ks,macc` with the mode
    /// lists space-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,seed,true_ks,est_ks,macc\n");
        for t in &self.trials {
            let join = |v: Vec<String>| v.join(" ");
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                t.index,
                t.seed,
                join(t.true_modes.iter().map(|(k, _)| k.to_string()).collect()),
                join(t.estimated_modes.iter().map(|k| k.to_string()).collect()),
                t.macc
            );
        }
        out
    }

    /// Bit-exact equality of everything except timing.
    pub fn same_results(&self, other: &MonteCarloReport) -> bool {
        self.config == other.config
            && self.trials == other.trials
            && self.average_macc.to_bits() == other.average_macc.to_bits()
    }
}

/// Runs every trial on the current rayon pool.
pub fn run_montecarlo(config: &TrialConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    if config.trials == 0 {
        return Err(Error::InvalidModel("trials must be >= 1".into()));
    }
    let start = Instant::now();
    let trials = (0..config.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(config, i))
        .collect::<Result<Vec<_>>>()?;
    let sum: f64 = trials.iter().map(|t| t.macc).sum();
    Ok(MonteCarloReport {
        config: config.clone(),
        average_macc: sum / trials.len() as f64,
        trials,
        runtime: Some(RuntimeStats {
            wall_seconds: start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        }),
    })
}

/// [`run_montecarlo`] on a dedicated pool of `threads` workers.
pub fn run_montecarlo_with_threads(
    config: &TrialConfig,
    threads: usize,
) -> Result<MonteCarloReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidModel(format!("thread pool: {e}")))?;
    pool.install(|| run_montecarlo(config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn macc_examples() {
        assert_eq!(macc(&[10], &[10]), 1.0);
        assert!((macc(&[10], &[11]) - 0.9).abs() < 1e-15);
        assert_eq!(macc(&[10, 40], &[10]), 0.0);
        assert_eq!(macc(&[10], &[12]), 0.0);
        assert_eq!(macc(&[1], &[2]), 0.0);
        assert!((macc(&[40, 10], &[11, 39]) - (1.0 - 0.1 - 1.0 / 40.0)).abs() < 1e-15);
    }

    #[test]
    fn single_mode_sampling_is_unconstrained() {
        let cfg = TrialConfig {
            m: 1,
            w: 100.0,
            ..Default::default()
        };
        let modes = sample_modes(&cfg, 3).unwrap();
        assert_eq!(modes.len(), 1);
        assert!((1..=112).contains(&modes[0].0 .0));
        assert!((1.0..2.0).contains(&modes[0].1));
    }

    #[test]
    fn separated_sampling() {
        let cfg = TrialConfig {
            m: 2,
            w: 2.0,
            ..Default::default()
        };
        for seed in 0..200 {
            let modes = sample_modes(&cfg, seed).unwrap();
            let a = (modes[0].0 .0 as f64 / PI).sqrt();
            let b = (modes[1].0 .0 as f64 / PI).sqrt();
            assert!((a - b).abs() > 2.0);
        }
        let cfg = TrialConfig {
            m: 3,
            w: 2.0,
            ..Default::default()
        };
        for seed in 0..50 {
            let modes = sample_modes(&cfg, seed).unwrap();
            assert!(ModeSpec::noiseless(modes).is_separated(2.0));
        }
        let cfg = TrialConfig {
            m: 4,
            w: 2.0,
            ..Default::default()
        };
        assert_eq!(
            sample_modes(&cfg, 0),
            Err(Error::Infeasible(MAX_REJECTIONS))
        );
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = TrialConfig {
            m: 3,
            w: 1.5,
            ..Default::default()
        };
        assert_eq!(
            sample_modes(&cfg, 99).unwrap(),
            sample_modes(&cfg, 99).unwrap()
        );
        assert_ne!(trial_seed(0, 1), trial_seed(0, 2));
        assert_ne!(trial_seed(0, 1), trial_seed(1, 1));
    }

    #[test]
    fn config_validation() {
        assert!(TrialConfig::default().validate().is_ok());
        assert!(TrialConfig {
            m: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrialConfig {
            m: 2,
            w: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrialConfig {
            lambda_range: (0.0, 1.0),
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrialConfig {
            slopes: 3,
            ..Default::default()
        }
        .validate()
        .is_err());
        let zero = TrialConfig {
            trials: 0,
            n: 16,
            ..Default::default()
        };
        assert!(run_montecarlo(&zero).is_err());
    }

    #[test]
    fn noiseless_trial_is_nearly_exact() {
        let cfg = TrialConfig {
            sigma: SigmaRule::Fixed(0.0),
            ..Default::default()
        };
        for i in 0..4 {
            let r = run_trial(&cfg, i).unwrap();
            assert!(r.macc >= 0.9, "{r:?}");
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let cfg = TrialConfig {
            n: 64,
            ..Default::default()
        };
        assert_eq!(run_trial(&cfg, 5).unwrap(), run_trial(&cfg, 5).unwrap());
    }

    #[test]
    fn auto_sigma_value() {
        assert!((auto_sigma(8.0) - 1.0 / (10.0 * 8f64.ln().sqrt())).abs() < 1e-16);
        assert_eq!(SigmaRule::Fixed(0.3).resolve(8.0), 0.3);
    }
}
