//! Gabor transforms of noisy mode mixtures on a grid over `B_L`, and their
//! level sets.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hermite::{gabor_hermite_ln_abs, ModeIndex, PlanePoint};
use crate::noise::{damped_series, default_truncation_order, draw_noise, NoiseDraw};

/// Generative model `y = Σ λ_m h_{k_m} + σ ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    pub modes: Vec<(ModeIndex, f64)>,
    pub sigma: f64,
    pub seed: u64,
}

impl ModeSpec {
    pub fn new(modes: Vec<(ModeIndex, f64)>, sigma: f64, seed: u64) -> Result<Self> {
        let spec = ModeSpec { modes, sigma, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn noiseless(modes: Vec<(ModeIndex, f64)>) -> Self {
        ModeSpec {
            modes,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        for (i, &(k, lambda)) in self.modes.iter().enumerate() {
            if !lambda.is_finite() {
                return Err(Error::InvalidModel(format!(
                    "strength of mode {} is not finite",
                    k.0
                )));
            }
            if self.modes[..i].iter().any(|&(other, _)| other == k) {
                return Err(Error::InvalidModel(format!("mode {} listed twice", k.0)));
            }
        }
        Ok(())
    }

    /// True when every pair of peak radii `√(k/π)` is more than `w` apart.
    pub fn is_separated(&self, w: f64) -> bool {
        let radii: Vec<f64> = self
            .modes
            .iter()
            .map(|&(k, _)| (k.0 as f64 / PI).sqrt())
            .collect();
        radii
            .iter()
            .enumerate()
            .all(|(i, a)| radii[i + 1..].iter().all(|b| (a - b).abs() > w))
    }
}

/// Square grid `u_i = (i - N) L / N`, `v_j = (j - N) L / N`, `i, j ∈ 0..=2N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    half_width: f64,
    n: usize,
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "grid half-width must be > 0, got {half_width}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidModel("grid N must be positive".into()));
        }
        Ok(Grid { half_width, n })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Points per side, `2N + 1`.
    pub fn side(&self) -> usize {
        2 * self.n + 1
    }

    pub fn len(&self) -> usize {
        self.side() * self.side()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.half_width / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - self.n as f64) * self.half_width / self.n as f64
    }

    pub fn point(&self, i: usize, j: usize) -> PlanePoint {
        PlanePoint::new(self.coord(i), self.coord(j))
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.side() + j
    }

    pub fn unindex(&self, idx: usize) -> (usize, usize) {
        (idx / self.side(), idx % self.side())
    }
}

/// Gabor transform values over a grid, stored with `u` as the slow index.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramField {
    grid: Grid,
    values: Vec<Complex64>,
    seed: u64,
}

impl SpectrogramField {
    pub fn from_values(grid: Grid, values: Vec<Complex64>, seed: u64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidModel(format!(
                "expected {} values for the grid, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(SpectrogramField { grid, values, seed })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> Complex64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn magnitude(&self, i: usize, j: usize) -> f64 {
        self.value(i, j).norm()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Multiplies every value by `c`.
    pub fn scaled(&self, c: f64) -> SpectrogramField {
        SpectrogramField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
            seed: self.seed,
        }
    }
}

/// Noise draw used by [`evaluate_field`] for a given model and grid.
pub fn noise_for(spec: &ModeSpec, grid: &Grid) -> NoiseDraw {
    draw_noise(spec.seed, default_truncation_order(grid.half_width()))
}

/// `V_g y` on the grid: the closed-form mode transforms plus `σ F[ξ]`.
pub fn evaluate_field(spec: &ModeSpec, grid: &Grid) -> Result<SpectrogramField> {
    spec.validate()?;
    let noise = (spec.sigma > 0.0).then(|| noise_for(spec, grid));
    Ok(evaluate_field_with_noise(spec, grid, noise.as_ref()))
}

/// As [`evaluate_field`] with an explicit noise draw (ignored when `σ = 0`).
pub fn evaluate_field_with_noise(
    spec: &ModeSpec,
    grid: &Grid,
    noise: Option<&NoiseDraw>,
) -> SpectrogramField {
    let side = grid.side();
    let mut values = vec![Complex64::new(0.0, 0.0); grid.len()];
    let noise = noise.filter(|_| spec.sigma > 0.0);
    values
        .par_chunks_mut(side)
        .enumerate()
        .for_each(|(i, row)| {
            let u = grid.coord(i);
            for (j, out) in row.iter_mut().enumerate() {
                let v = grid.coord(j);
                *out = point_value(spec, noise, u, v);
            }
        });
    SpectrogramField {
        grid: *grid,
        values,
        seed: spec.seed,
    }
}

#[inline]
fn point_value(spec: &ModeSpec, noise: Option<&NoiseDraw>, u: f64, v: f64) -> Complex64 {
    let norm_sqr = u * u + v * v;
    let angle = v.atan2(u);
    let uv = PI * u * v;
    let mut acc = Complex64::new(0.0, 0.0);
    for &(k, lambda) in &spec.modes {
        let ln_abs = gabor_hermite_ln_abs(k, norm_sqr);
        if ln_abs > -745.0 {
            acc += Complex64::from_polar(lambda * ln_abs.exp(), -uv - k.0 as f64 * angle);
        }
    }
    if let Some(noise) = noise {
        let series = damped_series(noise.coefficients(), Complex64::new(u, v));
        acc += Complex64::from_polar(spec.sigma * PI.sqrt(), uv) * series;
    }
    acc
}

/// Grid maximum `m_L` and the points attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxMagnitude {
    pub m_l: f64,
    pub argmax: Vec<PlanePoint>,
}

/// Relative tolerance for counting a point as attaining the maximum.
pub const ARGMAX_TOLERANCE: f64 = 1e-12;

pub fn max_magnitude(field: &SpectrogramField) -> MaxMagnitude {
    let mags = field.magnitudes();
    let m_l = mags.iter().copied().fold(0.0f64, f64::max);
    let argmax = mags
        .iter()
        .enumerate()
        .filter(|&(_, &m)| m >= m_l * (1.0 - ARGMAX_TOLERANCE))
        .map(|(idx, _)| {
            let (i, j) = field.grid.unindex(idx);
            field.grid.point(i, j)
        })
        .collect();
    MaxMagnitude { m_l, argmax }
}

/// Level set `{|V_g y| ≥ γ}` on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    grid: Grid,
    mask: Vec<bool>,
    gamma: f64,
}

impl LevelSet {
    pub fn from_mask(grid: Grid, mask: Vec<bool>, gamma: f64) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::InvalidModel(format!(
                "expected {} mask entries, got {}",
                grid.len(),
                mask.len()
            )));
        }
        Ok(LevelSet { grid, mask, gamma })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.mask[self.grid.index(i, j)]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn points(&self) -> impl Iterator<Item = PlanePoint> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(idx, _)| {
                let (i, j) = self.grid.unindex(idx);
                self.grid.point(i, j)
            })
    }

    /// True when every member of `self` is also a member of `other`.
    pub fn is_subset_of(&self, other: &LevelSet) -> bool {
        self.mask.iter().zip(&other.mask).all(|(&a, &b)| !a || b)
    }
}

pub fn level_set(field: &SpectrogramField, gamma: f64) -> Result<LevelSet> {
    if !(gamma >= 0.0) {
        return Err(Error::Domain(format!(
            "level-set threshold must be >= 0, got {gamma}"
        )));
    }
    let mask = field.values.iter().map(|v| v.norm() >= gamma).collect();
    Ok(LevelSet {
        grid: field.grid,
        mask,
        gamma,
    })
}

/// Threshold factor of the annulus detector, `γ = 0.2 · m_L`.
pub const DEFAULT_LEVEL_FACTOR: f64 = 0.2;

// Export layout: image row r holds v_{2N-r} (top row is v = +L), column c
// holds u_c. CSV and PGM/PBM share it.

fn for_each_image_cell(grid: &Grid, mut f: impl FnMut(usize, bool)) {
    let side = grid.side();
    for r in 0..side {
        let j = side - 1 - r;
        for i in 0..side {
            f(grid.index(i, j), i + 1 == side);
        }
    }
}

/// Magnitudes as CSV: a `# L=..,N=..,seed=..` header line, then one row per
/// image row.
pub fn magnitude_csv(field: &SpectrogramField) -> String {
    let grid = field.grid;
    let mut out = String::with_capacity(grid.len() * 12);
    let _ = writeln!(
        out,
        "# L={},N={},seed={}",
        grid.half_width(),
        grid.n(),
        field.seed
    );
    for_each_image_cell(&grid, |idx, last| {
        let _ = write!(out, "{:.9e}", field.values[idx].norm());
        out.push(if last { '\n' } else { ',' });
    });
    out
}

/// 16-bit binary PGM with magnitudes scaled linearly so that `m_L` maps to 65535.
pub fn magnitude_pgm(field: &SpectrogramField) -> Vec<u8> {
    let grid = field.grid;
    let side = grid.side();
    let m_l = max_magnitude(field).m_l;
    let mut out = format!("P5\n{side} {side}\n65535\n").into_bytes();
    out.reserve(grid.len() * 2);
    for_each_image_cell(&grid, |idx, _| {
        let scaled = if m_l > 0.0 {
            (field.values[idx].norm() / m_l * 65535.0)
                .round()
                .clamp(0.0, 65535.0) as u16
        } else {
            0
        };
        out.extend_from_slice(&scaled.to_be_bytes());
    });
    out
}

/// Level set as a packed binary PBM (`P4`, 1 = member).
pub fn level_set_pbm(ls: &LevelSet) -> Vec<u8> {
    let side = ls.grid.side();
    let mut out = format!("P4\n{side} {side}\n").into_bytes();
    let mut byte = 0u8;
    let mut bits = 0;
    for_each_image_cell(&ls.grid, |idx, last| {
        byte = (byte << 1) | ls.mask[idx] as u8;
        bits += 1;
        if bits == 8 || last {
            out.push(byte << (8 - bits));
            byte = 0;
            bits = 0;
        }
    });
    out
}

/// Level set as CSV of 0/1 with a `# L=..,N=..,gamma=..` header.
pub fn level_set_csv(ls: &LevelSet) -> String {
    let grid = ls.grid;
    let mut out = String::with_capacity(grid.len() * 2);
    let _ = writeln!(
        out,
        "# L={},N={},gamma={:e}",
        grid.half_width(),
        grid.n(),
        ls.gamma
    );
    for_each_image_cell(&grid, |idx, last| {
        out.push(if ls.mask[idx] { '1' } else { '0' });
        out.push(if last { '\n' } else { ',' });
    });
    out
}

pub fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{hermite_max_abs, hermite_ratio};

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

    #[test]
    fn grid_layout() {
        let g = Grid::new(8.0, 256).unwrap();
        assert_eq!(g.side(), 513);
        assert_eq!(g.spacing(), 0.03125);
        assert_eq!(g.coord(256), 0.0);
        assert_eq!(g.coord(0), -8.0);
        assert_eq!(g.coord(512), 8.0);
        assert_eq!(g.unindex(g.index(3, 500)), (3, 500));
        assert!(Grid::new(0.0, 4).is_err());
        assert!(Grid::new(1.0, 0).is_err());
    }

    #[test]
    fn model_validation() {
        assert!(ModeSpec::new(vec![(ModeIndex(3), 1.0), (ModeIndex(3), 2.0)], 0.0, 0).is_err());
        assert!(ModeSpec::new(vec![], -1.0, 0).is_err());
        let s = ModeSpec::noiseless(vec![(ModeIndex(8), 1.0), (ModeIndex(90), 1.0)]);
        assert!(s.is_separated(2.0));
        assert!(
            !ModeSpec::noiseless(vec![(ModeIndex(8), 1.0), (ModeIndex(12), 1.0)]).is_separated(1.5)
        );
    }

    #[test]
    fn ground_state_at_origin() {
        let g = Grid::new(2.0, 8).unwrap();
        let f = evaluate_field(&ModeSpec::noiseless(vec![(ModeIndex(0), 1.0)]), &g).unwrap();
        assert!((f.value(8, 8) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pure_noise_field_is_sigma_times_gaf() {
        let g = Grid::new(3.0, 12).unwrap();
        let spec = ModeSpec::new(vec![], 0.5, 11).unwrap();
        let f = evaluate_field(&spec, &g).unwrap();
        let noise = noise_for(&spec, &g);
        for &(i, j) in &[(0, 0), (5, 17), (12, 12), (24, 3)] {
            let expected = crate::noise::gaf_value(&noise, g.point(i, j)) * 0.5;
            assert!((f.value(i, j) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn noiseless_grid_max_matches_closed_form() {
        let g = Grid::new(8.0, 256).unwrap();
        let f = evaluate_field(&ModeSpec::noiseless(vec![(ModeIndex(10), 1.0)]), &g).unwrap();
        let m = max_magnitude(&f);
        let exact = hermite_max_abs(ModeIndex(10));
        assert!(m.m_l <= exact * (1.0 + 1e-12));
        assert!(m.m_l > exact * (1.0 - 1e-3));
        assert!(!m.argmax.is_empty());
    }

    #[test]
    fn max_of_zero_field_and_scaling() {
        let g = Grid::new(1.0, 4).unwrap();
        let f = evaluate_field(&ModeSpec::noiseless(vec![]), &g).unwrap();
        let m = max_magnitude(&f);
        assert_eq!(m.m_l, 0.0);
        assert_eq!(m.argmax.len(), g.len());

        let g = Grid::new(4.0, 32).unwrap();
        let a = ModeSpec::new(vec![(ModeIndex(4), 1.5)], 0.2, 3).unwrap();
        let b = ModeSpec::new(vec![(ModeIndex(4), 3.0)], 0.4, 3).unwrap();
        let ma = max_magnitude(&evaluate_field(&a, &g).unwrap()).m_l;
        let mb = max_magnitude(&evaluate_field(&b, &g).unwrap()).m_l;
        assert!((mb - 2.0 * ma).abs() <= 4.0 * f64::EPSILON * mb);
    }

    #[test]
    fn level_set_extremes() {
        let g = Grid::new(4.0, 16).unwrap();
        let f = evaluate_field(
            &ModeSpec::new(vec![(ModeIndex(3), 1.0)], 0.1, 1).unwrap(),
            &g,
        )
        .unwrap();
        assert_eq!(level_set(&f, 0.0).unwrap().count(), g.len());
        let m = max_magnitude(&f).m_l;
        assert!(level_set(&f, m * 1.0001).unwrap().is_empty());
        assert!(level_set(&f, -0.1).is_err());
    }

    #[test]
    fn noiseless_level_set_is_the_predicted_annulus() {
        let k = ModeIndex(10);
        let c = |r: f64| hermite_ratio(k, r).unwrap() - 0.2;
        let r_minus = bisect(c, -0.99, 0.0);
        let r_plus = bisect(c, 0.0, 3.0);
        assert!((r_minus + 0.3705).abs() < 1e-3 && (r_plus - 0.4245).abs() < 1e-3);

        let g = Grid::new(8.0, 256).unwrap();
        let f = evaluate_field(&ModeSpec::noiseless(vec![(k, 1.0)]), &g).unwrap();
        let ls = level_set(&f, 0.2 * max_magnitude(&f).m_l).unwrap();
        let peak = (10.0 / PI).sqrt();
        assert!(ls.count() > 0);
        // a grid max just under the true peak lowers the threshold a hair
        let slack = 1e-3;
        for p in ls.points() {
            let r = p.norm() / peak - 1.0;
            assert!(r >= r_minus - slack && r <= r_plus + slack, "r = {r}");
        }
    }

    #[test]
    fn exports_have_expected_shape() {
        let g = Grid::new(2.0, 4).unwrap();
        let f = evaluate_field(
            &ModeSpec::new(vec![(ModeIndex(2), 1.0)], 0.05, 9).unwrap(),
            &g,
        )
        .unwrap();
        let csv = magnitude_csv(&f);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# L=2,N=4,seed=9"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 9);
        assert!(rows.iter().all(|r| r.split(',').count() == 9));

        let pgm = magnitude_pgm(&f);
        let header = b"P5\n9 9\n65535\n";
        assert_eq!(&pgm[..header.len()], header);
        assert_eq!(pgm.len(), header.len() + 81 * 2);
        let max_sample = pgm[header.len()..]
            .chunks(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .max()
            .unwrap();
        assert_eq!(max_sample, 65535);

        let ls = level_set(&f, 0.5 * max_magnitude(&f).m_l).unwrap();
        let pbm = level_set_pbm(&ls);
        let header = b"P4\n9 9\n";
        assert_eq!(&pbm[..header.len()], header);
        assert_eq!(pbm.len(), header.len() + 9 * 2);
        let ones: u32 = pbm[header.len()..].iter().map(|b| b.count_ones()).sum();
        assert_eq!(ones as usize, ls.count());
        let csv = level_set_csv(&ls);
        assert_eq!(
            csv.matches('1').count() - csv.lines().next().unwrap().matches('1').count(),
            ls.count()
        );
    }
}
