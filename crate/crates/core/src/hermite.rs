//! Hermite modes and their Gabor transforms.
//!
//! The window is the unit-norm Gaussian `g(t) = 2^{1/4} e^{-πt²}`. With this
//! window the Gabor transform of the `k`-th Hermite function has the closed
//! form
//!
//! ```text
//! V_g h_k(u, v) = exp(-πiuv - π|z|²/2) · π^{k/2} z̄^k / √(k!),   z = u + iv
//! ```
//!
//! Everything here is evaluated in log-magnitude plus phase form so that
//! `k` in the hundreds neither overflows `√(k!)` nor underflows the Gaussian.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::quadrature;

/// Index of a Hermite mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeIndex(pub u32);

impl ModeIndex {
    pub fn get(self) -> u32 {
        self.0
    }
}

impl From<u32> for ModeIndex {
    fn from(k: u32) -> Self {
        ModeIndex(k)
    }
}

/// A point `z = u + iv` of the time-frequency plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanePoint {
    pub u: f64,
    pub v: f64,
}

impl PlanePoint {
    pub fn new(u: f64, v: f64) -> Self {
        PlanePoint { u, v }
    }

    pub fn from_polar(radius: f64, angle: f64) -> Self {
        PlanePoint {
            u: radius * angle.cos(),
            v: radius * angle.sin(),
        }
    }

    pub fn z(self) -> Complex64 {
        Complex64::new(self.u, self.v)
    }

    pub fn norm_sqr(self) -> f64 {
        self.u * self.u + self.v * self.v
    }

    pub fn norm(self) -> f64 {
        self.u.hypot(self.v)
    }
}

const LN_FACTORIAL_TABLE: usize = 8192;

fn ln_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(LN_FACTORIAL_TABLE);
        let mut acc = 0.0f64;
        table.push(0.0);
        for n in 1..LN_FACTORIAL_TABLE {
            acc += (n as f64).ln();
            table.push(acc);
        }
        table
    })
}

/// `ln(n!)`, tabulated for small `n` and from the Stirling series beyond.
pub fn ln_factorial(n: u64) -> f64 {
    let table = ln_factorial_table();
    if (n as usize) < table.len() {
        return table[n as usize];
    }
    let x = (n + 1) as f64;
    // ln Γ(x) for large x
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + 0.5 * (2.0 * PI).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Natural log of `|V_g h_k|` at a point with `|z|² = norm_sqr`.
/// Returns `-∞` at the origin for `k ≥ 1`.
pub fn gabor_hermite_ln_abs(k: ModeIndex, norm_sqr: f64) -> f64 {
    let k = k.0 as u64;
    let base = -0.5 * PI * norm_sqr;
    if k == 0 {
        return base;
    }
    if norm_sqr == 0.0 {
        return f64::NEG_INFINITY;
    }
    let kf = k as f64;
    base + 0.5 * kf * (PI.ln() + norm_sqr.ln()) - 0.5 * ln_factorial(k)
}

/// Closed-form Gabor transform of the `k`-th Hermite function.
pub fn gabor_hermite(k: ModeIndex, p: PlanePoint) -> Complex64 {
    let ln_abs = gabor_hermite_ln_abs(k, p.norm_sqr());
    if ln_abs == f64::NEG_INFINITY {
        return Complex64::new(0.0, 0.0);
    }
    // arg(z̄^k) = -k·arg(z)
    let phase = -PI * p.u * p.v - k.0 as f64 * p.v.atan2(p.u);
    Complex64::from_polar(ln_abs.exp(), phase)
}

/// Maximum of `|V_g h_k|` over the plane, `∏_{t=1}^k √(k/(e t))`, attained on
/// the circle `|z| = √(k/π)`.
pub fn hermite_max_abs(k: ModeIndex) -> f64 {
    hermite_max_ln_abs(k).exp()
}

pub fn hermite_max_ln_abs(k: ModeIndex) -> f64 {
    let k = k.0 as u64;
    if k == 0 {
        return 0.0;
    }
    let kf = k as f64;
    0.5 * kf * (kf.ln() - 1.0) - 0.5 * ln_factorial(k)
}

/// Radius of the maximizing circle, `√(k/π)`.
pub fn peak_radius(k: ModeIndex) -> f64 {
    (k.0 as f64 / PI).sqrt()
}

/// Radial decay ratio `C(k, r) = (1+r)^k / e^{k(r + r²/2)}`: the value of
/// `|V_g h_k|` at radius `(1+r)√(k/π)` relative to its maximum.
pub fn hermite_ratio(k: ModeIndex, r: f64) -> Result<f64> {
    if !(r > -1.0) {
        return Err(Error::Domain(format!(
            "hermite_ratio requires r > -1, got {r}"
        )));
    }
    let kf = k.0 as f64;
    Ok((kf * (r.ln_1p() - r - 0.5 * r * r)).exp())
}

/// Hermite function `h_k(x)`, orthonormal in `L²(ℝ)` and normalized so that
/// its Bargmann transform is `π^{k/2} z^k / √(k!)`.
///
/// Up to the factor `(-1)^k` this is `e^{πx²} (d/dx)^k e^{-2πx²}` rescaled to
/// unit norm, which equals `2^{1/4} π^{1/4} ψ_k(√(2π) x)` with `ψ_k` the
/// classical normalized Hermite function.
pub fn hermite_eval(k: ModeIndex, x: f64) -> f64 {
    let y = (2.0 * PI).sqrt() * x;
    let (poly, ln_scale) = normalized_hermite_poly(k.0, y);
    let ln_front = 0.25 * (2.0f64.ln() + PI.ln()) - 0.5 * y * y + ln_scale;
    poly * ln_front.exp()
}

/// `ψ_k(y) e^{y²/2}` computed by the three-term recurrence
/// `ψ_{n+1} = √(2/(n+1)) y ψ_n - √(n/(n+1)) ψ_{n-1}`, returned as
/// `(mantissa, ln_scale)` with value `mantissa · e^{ln_scale}`.
fn normalized_hermite_poly(k: u32, y: f64) -> (f64, f64) {
    let mut prev = 0.0f64;
    let mut cur = PI.powf(-0.25);
    let mut ln_scale = 0.0;
    for n in 0..k {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * y * cur - (nf / (nf + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        let m = cur.abs().max(prev.abs());
        if m > 1e150 {
            prev /= m;
            cur /= m;
            ln_scale += m.ln();
        }
    }
    (cur, ln_scale)
}

/// Same recurrence at a complex argument; the caller supplies the Gaussian.
fn normalized_hermite_poly_complex(k: u32, y: Complex64) -> Complex64 {
    let mut prev = Complex64::new(0.0, 0.0);
    let mut cur = Complex64::new(PI.powf(-0.25), 0.0);
    for n in 0..k {
        let nf = n as f64;
        let next = y * cur * (2.0 / (nf + 1.0)).sqrt() - prev * (nf / (nf + 1.0)).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// Largest mode index accepted by [`gabor_oracle`].
pub const ORACLE_MAX_K: u32 = 30;

/// Relative tolerance requested from the oracle quadrature.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

/// Gabor transform of `h_k` by adaptive quadrature of
/// `∫ h_k(t) g(t-u) e^{-2πitv} dt`, independent of the closed form.
///
/// The integrand is entire, so the line of integration is moved to
/// `t = x + (u - iv)/2`, where the window's oscillation is absorbed into a
/// constant and the remaining integrand is a polynomial times `e^{-2πx²}`.
pub fn gabor_oracle(k: ModeIndex, p: PlanePoint) -> Result<Complex64> {
    gabor_oracle_with_tolerance(k, p, ORACLE_TOLERANCE)
}

/// [`gabor_oracle`] certified to relative tolerance `tol` instead of
/// [`ORACLE_TOLERANCE`]. Close to the origin and for larger `k` the value is
/// tiny against an O(1) integrand, so cancellation limits what can be
/// certified in double precision.
pub fn gabor_oracle_with_tolerance(k: ModeIndex, p: PlanePoint, tol: f64) -> Result<Complex64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "oracle tolerance must be positive, got {tol}"
        )));
    }
    if k.0 > ORACLE_MAX_K {
        return Err(Error::Domain(format!(
            "gabor_oracle supports k <= {ORACLE_MAX_K}, got {}",
            k.0
        )));
    }
    let (u, v) = (p.u, p.v);
    let shift = Complex64::new(0.5 * u, -0.5 * v);
    let root_two_pi = (2.0 * PI).sqrt();
    // 2^{1/4}π^{1/4} from h_k, 2^{1/4} from g
    let front = (0.5 * 2.0f64.ln() + 0.25 * PI.ln()).exp();
    let integrand = |x: f64| {
        let t = shift + x;
        let exponent = -PI * t * t - PI * (t - u) * (t - u) - Complex64::i() * 2.0 * PI * v * t;
        let poly = normalized_hermite_poly_complex(k.0, t * root_two_pi);
        poly * exponent.exp() * front
    };
    let half_width = 5.0 + 0.5 * (k.0 as f64).sqrt();
    let result =
        quadrature::adaptive_gauss_kronrod(integrand, -half_width, half_width, tol * 1e-4, 1e-300);
    let scale = result.value.norm();
    if result.error > tol * scale && result.error > 1e-290 {
        return Err(Error::Quadrature {
            error: result.error,
            tolerance: tol * scale,
        });
    }
    Ok(result.value)
}
