//! Spherical needlets
//!
//! `ψ_jk(x) = √λ_jk Σ_l b(l/B^j) L_l(⟨x, ξ_jk⟩)` with `L_l` the projector onto
//! degree-l harmonics. Coefficients are computed through the harmonic domain:
//! `β_jk = √λ_jk Σ_lm b(l/B^j) a_lm Y_lm(ξ_jk)`, which on a product grid is one
//! inverse transform per level.

mod pyramid;
mod window;

pub use pyramid::{write_atomic, CoefficientPyramid, PyramidFormat, PyramidTag, BINARY_MAGIC, TEXT_MAGIC};
pub use window::{build_window, NeedletWindow, WINDOW_TABLE_INTERVALS};

use std::f64::consts::PI;
use std::sync::Arc;

use crate::cubature::{band_lmax, build_cubature_capped, gauss_legendre, CubatureGrid, DEFAULT_POINT_CAP};
use crate::error::{Error, Result};
use crate::harmonic::{HarmonicCoeffs, LegendreTable};
use crate::sht;
use crate::sphere::SpherePoint;

/// Exponent of an L^p norm, finite or infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LpExponent {
    Finite(f64),
    Infinity,
}

impl LpExponent {
    pub fn validate(self) -> Result<Self> {
        match self {
            LpExponent::Finite(p) if !(p.is_finite() && p >= 1.0) => {
                Err(Error::invalid("p", format!("{p} must be >= 1")))
            }
            other => Ok(other),
        }
    }

    /// `1 - 2/p`, the exponent of B^j in the needlet L^p norm.
    pub fn norm_scaling(self) -> f64 {
        match self {
            LpExponent::Finite(p) => 1.0 - 2.0 / p,
            LpExponent::Infinity => 1.0,
        }
    }
}

impl std::fmt::Display for LpExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LpExponent::Finite(p) => write!(f, "{p}"),
            LpExponent::Infinity => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for LpExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "∞" => Ok(LpExponent::Infinity),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::invalid("p", format!("`{other}` is neither a number nor `inf`")))
                .and_then(|p| LpExponent::Finite(p).validate()),
        }
    }
}

/// Window, per-level cubature and a shared analysis grid for levels `0..=j_max`.
#[derive(Debug, Clone)]
pub struct NeedletSystem {
    window: NeedletWindow,
    grids: Vec<CubatureGrid>,
    analysis: CubatureGrid,
    table: Arc<LegendreTable>,
    /// `band[j][l] = b(l / B^j)` for `l ≤ band_lmax(B, j)`.
    band: Vec<Vec<f64>>,
}

impl NeedletSystem {
    pub fn new(bandwidth: f64, j_max: usize) -> Result<Self> {
        Self::with_point_cap(bandwidth, j_max, DEFAULT_POINT_CAP)
    }

    pub fn with_point_cap(bandwidth: f64, j_max: usize, cap: usize) -> Result<Self> {
        let window = build_window(bandwidth)?;
        let mut grids = Vec::with_capacity(j_max + 1);
        let mut band = Vec::with_capacity(j_max + 1);
        for j in 0..=j_max {
            grids.push(build_cubature_capped(bandwidth, j, cap)?);
            let scale = bandwidth.powi(j as i32);
            band.push((0..=band_lmax(bandwidth, j)).map(|l| window.b(l as f64 / scale)).collect());
        }
        let top = band_lmax(bandwidth, j_max);
        // one grid exact to degree 2·⌈B^{j_max+1}⌉ serves every level
        let analysis = CubatureGrid::exact_for_degree(j_max, 2 * (top + 1), cap)?;
        Ok(Self {
            window,
            grids,
            analysis,
            table: Arc::new(LegendreTable::new(top + 2)),
            band,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.window.bandwidth()
    }

    pub fn j_max(&self) -> usize {
        self.grids.len() - 1
    }

    pub fn window(&self) -> &NeedletWindow {
        &self.window
    }

    pub fn grid(&self, j: usize) -> &CubatureGrid {
        &self.grids[j]
    }

    pub fn grids(&self) -> &[CubatureGrid] {
        &self.grids
    }

    pub fn analysis_grid(&self) -> &CubatureGrid {
        &self.analysis
    }

    pub fn table(&self) -> &LegendreTable {
        &self.table
    }

    pub fn counts(&self) -> Vec<usize> {
        self.grids.iter().map(CubatureGrid::count).collect()
    }

    /// Largest harmonic degree touched by any level.
    pub fn lmax(&self) -> usize {
        self.band.last().map(|b| b.len() - 1).unwrap_or(0)
    }

    pub fn level_lmax(&self, j: usize) -> usize {
        self.band[j].len() - 1
    }

    /// b(l / B^j), zero beyond the level's band.
    pub fn band_weight(&self, j: usize, l: usize) -> f64 {
        self.band[j].get(l).copied().unwrap_or(0.0)
    }

    pub fn zero_pyramid(&self, tag: PyramidTag) -> CoefficientPyramid {
        CoefficientPyramid::zeros(self.bandwidth(), &self.counts(), tag)
    }

    fn check_level(&self, j: usize) -> Result<()> {
        if j > self.j_max() {
            return Err(Error::IndexOutOfRange {
                what: "needlet level",
                index: j,
                len: self.j_max() + 1,
            });
        }
        Ok(())
    }

    /// Checks that `pyr` has this system's bandwidth and per-level counts,
    /// allowing fewer levels than the system.
    pub fn check_pyramid(&self, pyr: &CoefficientPyramid) -> Result<()> {
        if (pyr.bandwidth - self.bandwidth()).abs() > 1e-12 {
            return Err(Error::invalid(
                "pyramid",
                format!("bandwidth {} does not match system {}", pyr.bandwidth, self.bandwidth()),
            ));
        }
        if pyr.levels.len() > self.grids.len() {
            return Err(Error::LengthMismatch {
                what: "pyramid levels",
                expected: self.grids.len(),
                found: pyr.levels.len(),
            });
        }
        for (j, lv) in pyr.levels.iter().enumerate() {
            if lv.len() != self.grids[j].count() {
                return Err(Error::LengthMismatch {
                    what: "pyramid level length",
                    expected: self.grids[j].count(),
                    found: lv.len(),
                });
            }
        }
        Ok(())
    }

    /// Zonal profile `Σ_l b(l/B^j) (2l+1)/(4π) P_l(t)`, so `ψ_jk(x) = √λ_jk · profile(⟨x, ξ_jk⟩)`.
    pub fn profile(&self, j: usize, t: f64) -> f64 {
        legendre_series(&self.band[j], 1, t)
    }

    /// `Σ_l b²(l/B^j) (2l+1)/(4π) P_l(t)`, so `⟨ψ_jk1, ψ_jk2⟩ = √(λ_jk1 λ_jk2) · gram_kernel(⟨ξ_jk1, ξ_jk2⟩)`.
    pub fn gram_kernel(&self, j: usize, t: f64) -> f64 {
        legendre_series(&self.band[j], 2, t)
    }

    /// Inner product `⟨ψ_jk1, ψ_jk2⟩` in L²(S²).
    pub fn gram(&self, j: usize, k1: usize, k2: usize) -> Result<f64> {
        let l1 = self.cubature_weight(j, k1)?;
        let l2 = self.cubature_weight(j, k2)?;
        let grid = &self.grids[j];
        Ok((l1 * l2).sqrt() * self.gram_kernel(j, grid.points[k1].dot(&grid.points[k2])))
    }

    /// ‖ψ_jk‖_p / √λ_jk, which depends only on the level.
    pub fn profile_norm(&self, j: usize, p: LpExponent) -> f64 {
        let band = &self.band[j];
        match p {
            LpExponent::Infinity => band
                .iter()
                .enumerate()
                .map(|(l, b)| b * (2.0 * l as f64 + 1.0) / (4.0 * PI))
                .sum(),
            LpExponent::Finite(2.0) => band
                .iter()
                .enumerate()
                .map(|(l, b)| b * b * (2.0 * l as f64 + 1.0) / (4.0 * PI))
                .sum::<f64>()
                .sqrt(),
            LpExponent::Finite(q) => {
                // ∫_{S²} |Z(⟨x, N⟩)|^q dx = 2π ∫_{-1}^{1} |Z(t)|^q dt
                let n = 16 * (band.len() + 8);
                let (nodes, weights) = gauss_legendre(n);
                let s: f64 = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&t, &w)| w * self.profile(j, t).abs().powf(q))
                    .sum();
                (2.0 * PI * s).powf(1.0 / q)
            }
        }
    }

    /// ‖ψ_jk‖_{L^p(S²)}.
    pub fn needlet_norm(&self, j: usize, k: usize, p: LpExponent) -> Result<f64> {
        self.check_level(j)?;
        let lambda = self.cubature_weight(j, k)?;
        Ok(lambda.sqrt() * self.profile_norm(j, p))
    }

    pub fn cubature_weight(&self, j: usize, k: usize) -> Result<f64> {
        self.check_level(j)?;
        let grid = &self.grids[j];
        grid.weights.get(k).copied().ok_or(Error::IndexOutOfRange {
            what: "cubature index",
            index: k,
            len: grid.count(),
        })
    }

    /// Level-j coefficients `β_jk = √λ_jk Σ_lm b(l/B^j) a_lm Y_lm(ξ_jk)` of a field.
    pub fn level_coefficients(&self, j: usize, field: &HarmonicCoeffs) -> Vec<f64> {
        let lmax = self.level_lmax(j);
        let mut c = field.with_lmax(lmax);
        c.scale_by_degree(|l| self.band_weight(j, l));
        let grid = &self.grids[j];
        let values = sht::inverse(grid, &c, &self.table);
        values.iter().zip(&grid.weights).map(|(v, w)| v * w.sqrt()).collect()
    }

    /// Pyramid of a band-limited field given by its harmonic coefficients.
    pub fn coefficients_of(&self, field: &HarmonicCoeffs, levels: usize, tag: PyramidTag) -> CoefficientPyramid {
        CoefficientPyramid {
            bandwidth: self.bandwidth(),
            levels: (0..levels.min(self.grids.len()))
                .map(|j| self.level_coefficients(j, field))
                .collect(),
            tag,
        }
    }

    /// Harmonic coefficients of `Σ_jk β_jk ψ_jk`, up to degree `self.lmax()`.
    pub fn synthesize_harmonic(&self, pyr: &CoefficientPyramid) -> Result<HarmonicCoeffs> {
        self.check_pyramid(pyr)?;
        let mut total = HarmonicCoeffs::zeros(self.lmax());
        for (j, lv) in pyr.levels.iter().enumerate() {
            if lv.iter().all(|&v| v == 0.0) {
                continue;
            }
            let grid = &self.grids[j];
            let scaled: Vec<f64> = lv.iter().zip(&grid.weights).map(|(b, w)| b / w.sqrt()).collect();
            let mut d = sht::forward(grid, &scaled, self.level_lmax(j), &self.table)?;
            d.scale_by_degree(|l| self.band_weight(j, l));
            total.add_scaled(&d, 1.0);
        }
        Ok(total)
    }

    /// Harmonic coefficients (degree ≤ `self.lmax()`) of a field sampled on the analysis grid.
    pub fn analysis_transform(&self, samples: &[f64]) -> Result<HarmonicCoeffs> {
        sht::forward(&self.analysis, samples, self.lmax(), &self.table)
    }

    /// Samples a harmonic field on the analysis grid.
    pub fn eval_on_analysis_grid(&self, field: &HarmonicCoeffs) -> Vec<f64> {
        sht::inverse(&self.analysis, field, &self.table)
    }
}

/// `Σ_l w_l^power (2l+1)/(4π) P_l(t)` by the three-term recurrence.
fn legendre_series(weights: &[f64], power: i32, t: f64) -> f64 {
    let t = t.clamp(-1.0, 1.0);
    let (mut p_prev, mut p) = (0.0, 1.0);
    let mut sum = 0.0;
    for (l, w) in weights.iter().enumerate() {
        if l > 0 {
            let lf = l as f64;
            let next = ((2.0 * lf - 1.0) * t * p - (lf - 1.0) * p_prev) / lf;
            p_prev = p;
            p = next;
        }
        if *w != 0.0 {
            sum += w.powi(power) * (2.0 * l as f64 + 1.0) / (4.0 * PI) * p;
        }
    }
    sum
}

/// Builds a needlet system for `B > 1` and levels `0..=j_max`.
pub fn build_system(bandwidth: f64, j_max: usize) -> Result<NeedletSystem> {
    NeedletSystem::new(bandwidth, j_max)
}

/// ψ_jk(x) by direct Legendre summation.
pub fn evaluate_needlet(sys: &NeedletSystem, j: usize, k: usize, x: &SpherePoint) -> Result<f64> {
    let lambda = sys.cubature_weight(j, k)?;
    let xi = &sys.grid(j).points[k];
    Ok(lambda.sqrt() * sys.profile(j, x.dot(xi)))
}

/// Needlet coefficients β_jk = ∫ ψ_jk f of a field sampled on the system's
/// analysis grid, for every level.
pub fn analyze(sys: &NeedletSystem, f_samples: &[f64]) -> Result<CoefficientPyramid> {
    let field = sys.analysis_transform(f_samples)?;
    Ok(sys.coefficients_of(&field, sys.j_max() + 1, PyramidTag::Clean))
}

/// Evaluates `Σ_jk β_jk ψ_jk` at the given points.
pub fn synthesize(sys: &NeedletSystem, pyr: &CoefficientPyramid, targets: &[SpherePoint]) -> Result<Vec<f64>> {
    let field = sys.synthesize_harmonic(pyr)?;
    let table = sys.table();
    use rayon::prelude::*;
    Ok(targets.par_iter().map(|x| field.eval(table, x)).collect())
}
