//! Globally adaptive Gauss–Kronrod (7/15) quadrature for complex integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex64;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd Kronrod nodes 1, 3, 5 and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: Complex64,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).norm();
    Segment { a, b, value, error }
}

/// Integrates `f` over `[a, b]`, bisecting the interval with the largest
/// error estimate until the total error is below `max(abs_tol, rel_tol·|I|)`.
pub fn adaptive_gauss_kronrod<F: Fn(f64) -> Complex64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> QuadratureResult {
    let mut heap = BinaryHeap::new();
    // a few initial panels keep narrow features from hiding between nodes
    let panels = 8;
    let width = (b - a) / panels as f64;
    for i in 0..panels {
        let lo = a + width * i as f64;
        heap.push(kronrod15(&f, lo, lo + width));
    }
    loop {
        let value: Complex64 = heap.iter().map(|s| s.value).sum();
        let error: f64 = heap.iter().map(|s| s.error).sum();
        let target = abs_tol.max(rel_tol * value.norm());
        if error <= target || heap.len() >= MAX_INTERVALS {
            return QuadratureResult { value, error };
        }
        let worst = heap.pop().expect("nonempty heap");
        let mid = 0.5 * (worst.a + worst.b);
        heap.push(kronrod15(&f, worst.a, mid));
        heap.push(kronrod15(&f, mid, worst.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gaussian_integral() {
        let r = adaptive_gauss_kronrod(
            |x| Complex64::new((-x * x).exp(), 0.0),
            -10.0,
            10.0,
            1e-14,
            0.0,
        );
        assert!((r.value.re - PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_fourier_integral() {
        // ∫ e^{-πx²} e^{-2πixξ} dx = e^{-πξ²}
        let xi = 1.3;
        let r = adaptive_gauss_kronrod(
            |x| Complex64::from_polar((-PI * x * x).exp(), -2.0 * PI * x * xi),
            -8.0,
            8.0,
            1e-12,
            1e-15,
        );
        assert!((r.value - Complex64::new((-PI * xi * xi).exp(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn polynomial_is_exact() {
        let r = adaptive_gauss_kronrod(|x| Complex64::new(x.powi(6), x), 0.0, 1.0, 1e-15, 0.0);
        assert!((r.value.re - 1.0 / 7.0).abs() < 1e-15);
        assert!((r.value.im - 0.5).abs() < 1e-15);
    }
}
