use std::f64::consts::PI;

use proptest::prelude::*;

use spectrolev::detector::{detect, estimate_mode_and_strength, hypothesis_test};
use spectrolev::harness::{run_montecarlo_with_threads, TrialConfig};
use spectrolev::hermite::{gabor_hermite, hermite_max_abs, hermite_ratio};
use spectrolev::spectrogram::{evaluate_field, level_set, max_magnitude};
use spectrolev::{Grid, ModeIndex, ModeSpec, PlanePoint};

fn small_field(k: u32, lambda: f64, sigma: f64, seed: u64) -> spectrolev::SpectrogramField {
    let grid = Grid::new(6.0, 48).unwrap();
    let spec = ModeSpec::new(vec![(ModeIndex(k), lambda)], sigma, seed).unwrap();
    evaluate_field(&spec, &grid).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn level_sets_shrink_as_the_level_rises(
        k in 1u32..40, lambda in 0.5f64..2.0, seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0,
    ) {
        let field = small_field(k, lambda, 0.07, seed);
        let m = max_magnitude(&field).m_l;
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let upper = level_set(&field, hi * m).unwrap();
        let lower = level_set(&field, lo * m).unwrap();
        prop_assert!(upper.is_subset_of(&lower));
        // the test statistic can only switch from 1 to 0 as the level rises
        prop_assert!(hypothesis_test(&upper) <= hypothesis_test(&lower));
    }

    #[test]
    fn magnitude_is_radial(k in 0u32..60, r in 0.0f64..6.0, a in 0.0f64..(2.0 * PI), b in 0.0f64..(2.0 * PI)) {
        let p = gabor_hermite(ModeIndex(k), PlanePoint::from_polar(r, a)).norm();
        let q = gabor_hermite(ModeIndex(k), PlanePoint::from_polar(r, b)).norm();
        prop_assert!((p - q).abs() <= 1e-12 * p.max(1e-300) + 1e-300);
    }

    #[test]
    fn radial_ratio_is_below_one_off_the_peak(k in 1u32..400, r in -0.999f64..3.0) {
        prop_assume!(r.abs() > 1e-6);
        prop_assert!(hermite_ratio(ModeIndex(k), r).unwrap() < 1.0);
    }

    #[test]
    fn peak_value_never_exceeded(k in 1u32..80, r in 0.0f64..7.0, a in 0.0f64..(2.0 * PI)) {
        let v = gabor_hermite(ModeIndex(k), PlanePoint::from_polar(r, a)).norm();
        prop_assert!(v <= hermite_max_abs(ModeIndex(k)) * (1.0 + 1e-12));
    }

    #[test]
    fn detection_is_scale_equivariant(k in 1u32..30, seed in 0u64..1000, e in -3i32..4) {
        let field = small_field(k, 1.0, 0.0, seed);
        let c = 2f64.powi(e);
        let scaled = field.scaled(c);
        let base = detect(&field, 20).unwrap();
        let other = detect(&scaled, 20).unwrap();
        prop_assert_eq!(base.k_floor_estimates(), other.k_floor_estimates());
        let (t1, k1, l1) = estimate_mode_and_strength(&field).unwrap();
        let (t2, k2, l2) = estimate_mode_and_strength(&scaled).unwrap();
        prop_assert_eq!(k1, k2);
        prop_assert_eq!(t2, c * t1);
        prop_assert_eq!(l2, c * l1);
    }
}

#[test]
fn scale_equivariance_for_non_dyadic_factors() {
    let field = small_field(12, 1.3, 0.0, 0);
    let (t1, k1, l1) = estimate_mode_and_strength(&field).unwrap();
    for c in [0.3, 1.7, 11.0] {
        let (t2, k2, l2) = estimate_mode_and_strength(&field.scaled(c)).unwrap();
        assert_eq!(k1, k2);
        assert!((t2 / (c * t1) - 1.0).abs() < 1e-14);
        assert!((l2 / (c * l1) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn montecarlo_is_identical_across_thread_counts() {
    let config = TrialConfig {
        n: 48,
        m: 2,
        w: 1.5,
        trials: 6,
        base_seed: 11,
        ..Default::default()
    };
    let one = run_montecarlo_with_threads(&config, 1).unwrap();
    let three = run_montecarlo_with_threads(&config, 3).unwrap();
    assert!(one.same_results(&three));
    assert_eq!(one.to_json(), three.to_json());
    assert_eq!(one.to_csv(), three.to_csv());
}
