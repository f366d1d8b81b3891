//! Exact cubature on S² for band-limited integrands.
//!
//! Grids are products of Gauss–Legendre nodes in cos θ with equispaced
//! longitudes. With `n_θ` Gauss nodes and `n_φ` longitudes the rule integrates
//! every spherical polynomial of degree `≤ min(2 n_θ − 1, n_φ − 1)` exactly.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::sphere::SpherePoint;

/// Default cap on the number of points in a single grid.
pub const DEFAULT_POINT_CAP: usize = 4_000_000;

/// Gauss–Legendre nodes and weights on [-1, 1], nodes in decreasing order.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let nf = n as f64;
    for i in 0..n {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Clone)]
pub(crate) struct FftPair {
    pub(crate) forward: Arc<dyn Fft<f64>>,
    pub(crate) inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

impl fmt::Debug for FftPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FftPair(len = {})", self.forward.len())
    }
}

/// One ring of a product grid.
#[derive(Debug, Clone, Copy)]
pub struct Ring {
    pub theta: f64,
    pub cos_theta: f64,
    /// Gauss weight in `t = cos θ`.
    pub weight: f64,
}

/// Cubature points ξ_k with positive weights λ_k.
///
/// Points are stored ring-major: index `k = i · n_phi + s` is ring `i`,
/// longitude `2π s / n_phi`.
#[derive(Debug, Clone)]
pub struct CubatureGrid {
    pub level: usize,
    pub points: Vec<SpherePoint>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
    rings: Vec<Ring>,
    n_phi: usize,
    fft: FftPair,
}

impl CubatureGrid {
    /// Product rule with `n_theta` Gauss rings and `n_phi` longitudes.
    pub fn product(level: usize, n_theta: usize, n_phi: usize) -> Result<Self> {
        Self::product_capped(level, n_theta, n_phi, DEFAULT_POINT_CAP)
    }

    pub fn product_capped(level: usize, n_theta: usize, n_phi: usize, cap: usize) -> Result<Self> {
        if n_theta == 0 || n_phi == 0 {
            return Err(Error::invalid("grid", "needs at least one ring and one longitude"));
        }
        let count = n_theta.saturating_mul(n_phi);
        if count > cap {
            return Err(Error::ResourceCap {
                what: "cubature points",
                requested: count,
                cap,
            });
        }
        let (nodes, gw) = gauss_legendre(n_theta);
        let dphi = TAU / n_phi as f64;
        let rings: Vec<Ring> = nodes
            .iter()
            .zip(&gw)
            .map(|(&t, &w)| Ring {
                theta: t.clamp(-1.0, 1.0).acos(),
                cos_theta: t,
                weight: w,
            })
            .collect();
        let mut points = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for r in &rings {
            for s in 0..n_phi {
                points.push(SpherePoint::from_angles_unchecked(r.theta, s as f64 * dphi));
                weights.push(r.weight * dphi);
            }
        }
        let exact_degree = (2 * n_theta - 1).min(n_phi - 1);
        Ok(Self {
            level,
            points,
            weights,
            exact_degree,
            rings,
            n_phi,
            fft: FftPair::new(n_phi),
        })
    }

    /// Smallest product rule integrating all polynomials of degree ≤ `degree`.
    pub fn exact_for_degree(level: usize, degree: usize, cap: usize) -> Result<Self> {
        let n_theta = degree / 2 + 1;
        let n_phi = degree + 1;
        Self::product_capped(level, n_theta, n_phi, cap)
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn rings(&self) -> &[Ring] {
        &self.rings
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub(crate) fn fft(&self) -> &FftPair {
        &self.fft
    }

    /// Ring index of cubature point `k`.
    pub fn ring_of(&self, k: usize) -> usize {
        k / self.n_phi
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index of a point on the ring closest to the equator.
    pub fn equatorial_index(&self) -> usize {
        let ring = self
            .rings
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cos_theta.abs().total_cmp(&b.1.cos_theta.abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        ring * self.n_phi
    }
}

/// Largest harmonic degree in the band of level `j`: the largest integer `l`
/// with `l < B^{j+1}`.
pub fn band_lmax(bandwidth: f64, j: usize) -> usize {
    let top = bandwidth.powi(j as i32 + 1);
    let rounded = top.round();
    let ceil = if (top - rounded).abs() <= 1e-9 * top.max(1.0) {
        rounded
    } else {
        top.ceil()
    };
    (ceil as usize).saturating_sub(1)
}

/// Per-level cubature ξ_jk, λ_jk for needlets of level `j`.
///
/// The rule is exact up to degree `2 · band_lmax(B, j)`, so products of two
/// level-j band polynomials integrate exactly.
pub fn build_cubature(bandwidth: f64, j: usize) -> Result<CubatureGrid> {
    build_cubature_capped(bandwidth, j, DEFAULT_POINT_CAP)
}

pub fn build_cubature_capped(bandwidth: f64, j: usize, cap: usize) -> Result<CubatureGrid> {
    if !(bandwidth.is_finite() && bandwidth > 1.0) {
        return Err(Error::invalid("B", format!("{bandwidth} must exceed 1")));
    }
    if j > 64 {
        return Err(Error::invalid("j", "level too large"));
    }
    let lmax = band_lmax(bandwidth, j);
    CubatureGrid::exact_for_degree(j, 2 * lmax.max(1), cap)
}

/// Cubature sum Σ_k λ_k f(ξ_k).
pub fn integrate(grid: &CubatureGrid, samples: &[f64]) -> Result<f64> {
    if samples.len() != grid.count() {
        return Err(Error::LengthMismatch {
            what: "cubature samples",
            expected: grid.count(),
            found: samples.len(),
        });
    }
    Ok(grid.weights.iter().zip(samples).map(|(w, f)| w * f).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_small_rules() {
        let (x, w) = gauss_legendre(2);
        assert!((x[0] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 1.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(3);
        assert!((x[1]).abs() < 1e-15);
        assert!((w[1] - 8.0 / 9.0).abs() < 1e-14);
        // ∫ t^10 = 2/11 is exact for n ≥ 6
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(t, w)| w * t.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn large_rule_weights_sum_to_two() {
        for n in [64, 257, 513] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
            assert!(x.windows(2).all(|p| p[0] > p[1]));
        }
    }

    #[test]
    fn band_lmax_values() {
        assert_eq!(band_lmax(2.0, 0), 1);
        assert_eq!(band_lmax(2.0, 3), 15);
        assert_eq!(band_lmax(1.5, 2), 3); // 3.375
        assert_eq!(band_lmax(3.0, 1), 8);
    }

    #[test]
    fn integrates_constant_and_z_squared() {
        let grid = build_cubature(2.0, 2).unwrap();
        let ones = vec![1.0; grid.count()];
        assert!((integrate(&grid, &ones).unwrap() - 4.0 * PI).abs() < 1e-12);
        let zeros = vec![0.0; grid.count()];
        assert_eq!(integrate(&grid, &zeros).unwrap(), 0.0);
        let z2: Vec<f64> = grid.points.iter().map(|p| p.xyz()[2].powi(2)).collect();
        assert!((integrate(&grid, &z2).unwrap() - 4.0 * PI / 3.0).abs() < 1e-10);
        assert!(matches!(integrate(&grid, &z2[1..]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn resource_cap_enforced() {
        let err = build_cubature_capped(2.0, 8, 10_000).unwrap_err();
        assert!(matches!(err, Error::ResourceCap { .. }));
        assert!(build_cubature(1.0, 2).is_err());
    }

    #[test]
    fn count_within_factor_eight_of_scale() {
        for j in 0..=6 {
            let g = build_cubature(2.0, j).unwrap();
            let ratio = g.count() as f64 / 4f64.powi(j as i32);
            assert!((1.0 / 8.0..=8.0).contains(&ratio), "j={j} ratio={ratio}");
            assert!(g.weights.iter().all(|&w| w > 0.0));
            assert!((g.total_weight() - 4.0 * PI).abs() < 1e-10);
            assert_eq!(g.exact_degree, 2 * band_lmax(2.0, j));
        }
    }
}
