//! Legendre polynomials, orthonormal complex spherical harmonics and the
//! projection kernel onto the degree-l harmonic subspace.
//!
//! Spherical harmonics use the Condon–Shortley phase and are orthonormal on
//! S²: `Y_lm(θ, φ) = P̄_l^m(cos θ) e^{imφ}` with `Y_{l,-m} = (-1)^m conj(Y_lm)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sphere::SpherePoint;

const T_SLACK: f64 = 1e-12;

/// Degree/order pair of a spherical harmonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    l: usize,
    m: i64,
}

impl HarmonicIndex {
    pub fn new(l: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > l {
            return Err(Error::invalid("m", format!("|{m}| exceeds degree {l}")));
        }
        Ok(Self { l, m })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> i64 {
        self.m
    }
}

fn check_t(t: f64) -> Result<f64> {
    if !t.is_finite() || t.abs() > 1.0 + T_SLACK {
        return Err(Error::invalid("t", format!("{t} outside [-1, 1]")));
    }
    Ok(t.clamp(-1.0, 1.0))
}

/// Legendre polynomial P_l(t) by the three-term recurrence.
pub fn legendre_p(l: usize, t: f64) -> Result<f64> {
    let t = check_t(t)?;
    if t == 1.0 {
        return Ok(1.0);
    }
    let mut prev = 1.0;
    if l == 0 {
        return Ok(prev);
    }
    let mut cur = t;
    for k in 1..l {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0) * t * cur - kf * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Fills `out[l] = P_l(t)` for `l = 0..out.len()`. `t` must already be in `[-1, 1]`.
#[cfg(test)]
fn legendre_all(t: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() == 1 {
        return;
    }
    out[1] = t;
    for k in 1..out.len() - 1 {
        let kf = k as f64;
        out[k + 1] = ((2.0 * kf + 1.0) * t * out[k] - kf * out[k - 1]) / (kf + 1.0);
    }
}

/// Recurrence coefficients for orthonormal associated Legendre functions,
/// tabulated once per maximum degree.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    lmax: usize,
    /// a_lm, m-major (same layout as [`HarmonicCoeffs`]).
    a: Vec<f64>,
    /// b_lm, m-major.
    b: Vec<f64>,
    /// ln of the |P̄_m^m| prefactor without the sin^m θ term.
    seed_log: Vec<f64>,
}

impl LegendreTable {
    pub fn new(lmax: usize) -> Self {
        let len = coeff_len(lmax);
        let mut a = vec![0.0; len];
        let mut b = vec![0.0; len];
        let mut seed_log = Vec::with_capacity(lmax + 1);
        let mut acc = -0.5 * (4.0 * PI).ln();
        for m in 0..=lmax {
            if m > 0 {
                let mf = m as f64;
                acc += 0.5 * ((2.0 * mf + 1.0) / (2.0 * mf)).ln();
            }
            seed_log.push(acc);
            let mf = m as f64;
            for l in m..=lmax {
                let idx = coeff_index(lmax, l, m);
                if l >= m + 2 {
                    let lf = l as f64;
                    a[idx] = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                    let lm1 = lf - 1.0;
                    b[idx] = ((lm1 * lm1 - mf * mf) / (4.0 * lm1 * lm1 - 1.0)).sqrt();
                }
            }
        }
        Self { lmax, a, b, seed_log }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    /// Evaluates P̄_l^m(t) for `l = m..=lmax_col` and passes each to `sink(l, value)`.
    ///
    /// The m = l seed is carried in log form so high orders near the poles
    /// underflow gracefully instead of poisoning the recurrence.
    #[inline]
    pub(crate) fn column(&self, m: usize, lmax_col: usize, t: f64, mut sink: impl FnMut(usize, f64)) {
        debug_assert!(lmax_col <= self.lmax && m <= lmax_col);
        let sin2 = (1.0 - t * t).max(0.0);
        let mut log_scale = self.seed_log[m];
        if m > 0 {
            if sin2 == 0.0 {
                for l in m..=lmax_col {
                    sink(l, 0.0);
                }
                return;
            }
            log_scale += 0.5 * m as f64 * sin2.ln();
        }
        let sign = if m % 2 == 1 { -1.0 } else { 1.0 };
        const BIG: f64 = 1e150;
        let ln_big = BIG.ln();
        let emit = |v: f64, log_scale: f64| -> f64 {
            if v == 0.0 {
                0.0
            } else {
                let lg = log_scale + v.abs().ln();
                if lg < -740.0 {
                    0.0
                } else {
                    v.signum() * lg.exp()
                }
            }
        };
        let mut p_prev = sign; // l = m
        sink(m, emit(p_prev, log_scale));
        if lmax_col == m {
            return;
        }
        let mut p_cur = (2.0 * m as f64 + 3.0).sqrt() * t * p_prev; // l = m + 1
        sink(m + 1, emit(p_cur, log_scale));
        let base = coeff_offset(self.lmax, m);
        for l in m + 2..=lmax_col {
            let idx = base + (l - m);
            let p_next = self.a[idx] * (t * p_cur - self.b[idx] * p_prev);
            p_prev = p_cur;
            p_cur = p_next;
            if p_cur.abs() > BIG {
                p_cur /= BIG;
                p_prev /= BIG;
                log_scale += ln_big;
            }
            sink(l, emit(p_cur, log_scale));
        }
    }
}

/// Number of stored (l, m ≥ 0) pairs up to degree `lmax`.
pub fn coeff_len(lmax: usize) -> usize {
    (lmax + 1) * (lmax + 2) / 2
}

#[inline]
fn coeff_offset(lmax: usize, m: usize) -> usize {
    m * (lmax + 1) - m * (m.saturating_sub(1)) / 2
}

#[inline]
fn coeff_index(lmax: usize, l: usize, m: usize) -> usize {
    coeff_offset(lmax, m) + (l - m)
}

/// Harmonic coefficients of a real field, stored for m ≥ 0 only (m-major).
/// Negative orders follow from `a_{l,-m} = (-1)^m conj(a_lm)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoeffs {
    lmax: usize,
    data: Vec<Complex64>,
}

impl HarmonicCoeffs {
    pub fn zeros(lmax: usize) -> Self {
        Self {
            lmax,
            data: vec![Complex64::new(0.0, 0.0); coeff_len(lmax)],
        }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn get(&self, l: usize, m: usize) -> Complex64 {
        self.data[coeff_index(self.lmax, l, m)]
    }

    pub fn set(&mut self, l: usize, m: usize, v: Complex64) {
        let i = coeff_index(self.lmax, l, m);
        self.data[i] = v;
    }

    pub(crate) fn column(&self, m: usize) -> &[Complex64] {
        let start = coeff_offset(self.lmax, m);
        &self.data[start..start + (self.lmax + 1 - m)]
    }

    pub(crate) fn from_columns(lmax: usize, columns: Vec<Vec<Complex64>>) -> Self {
        let data: Vec<Complex64> = columns.into_iter().flatten().collect();
        debug_assert_eq!(data.len(), coeff_len(lmax));
        Self { lmax, data }
    }

    /// Multiplies every degree-l coefficient by `weight(l)`.
    pub fn scale_by_degree(&mut self, weight: impl Fn(usize) -> f64) {
        let lmax = self.lmax;
        for m in 0..=lmax {
            let off = coeff_offset(lmax, m);
            for l in m..=lmax {
                self.data[off + l - m] *= weight(l);
            }
        }
    }

    /// Copy truncated or zero-padded to a new maximum degree.
    pub fn with_lmax(&self, lmax: usize) -> Self {
        let mut out = Self::zeros(lmax);
        let top = lmax.min(self.lmax);
        for m in 0..=top {
            for l in m..=top {
                out.set(l, m, self.get(l, m));
            }
        }
        out
    }

    /// `self += factor · other`, over the degrees both share.
    pub fn add_scaled(&mut self, other: &HarmonicCoeffs, factor: f64) {
        let top = self.lmax.min(other.lmax);
        for m in 0..=top {
            for l in m..=top {
                let i = coeff_index(self.lmax, l, m);
                self.data[i] += other.get(l, m) * factor;
            }
        }
    }

    /// Squared L² norm of the real field, Σ_{l,m} |a_lm|² over all orders.
    pub fn l2_norm_sq(&self) -> f64 {
        let mut total = 0.0;
        for m in 0..=self.lmax {
            let w = if m == 0 { 1.0 } else { 2.0 };
            total += w * self.column(m).iter().map(|c| c.norm_sqr()).sum::<f64>();
        }
        total
    }

    /// Evaluates the real field at one point.
    pub fn eval(&self, table: &LegendreTable, x: &SpherePoint) -> f64 {
        assert!(table.lmax() >= self.lmax, "legendre table too small");
        let t = x.xyz()[2];
        let phi = x.phi();
        let mut total = 0.0;
        for m in 0..=self.lmax {
            let col = self.column(m);
            let mut g = Complex64::new(0.0, 0.0);
            table.column(m, self.lmax, t, |l, p| g += col[l - m] * p);
            if m == 0 {
                total += g.re;
            } else {
                total += 2.0 * (g * Complex64::from_polar(1.0, m as f64 * phi)).re;
            }
        }
        total
    }
}

/// Orthonormal complex spherical harmonic Y_lm(x).
pub fn sph_harm(idx: HarmonicIndex, x: &SpherePoint) -> Complex64 {
    let l = idx.l();
    let m_abs = idx.m().unsigned_abs() as usize;
    let table = LegendreTable::new(l);
    let mut p = 0.0;
    table.column(m_abs, l, x.xyz()[2], |deg, v| {
        if deg == l {
            p = v;
        }
    });
    let y = Complex64::from_polar(p, m_abs as f64 * x.phi());
    if idx.m() < 0 {
        let s = if m_abs % 2 == 1 { -1.0 } else { 1.0 };
        y.conj() * s
    } else {
        y
    }
}

/// L_l(⟨x, y⟩) = Σ_m Y_lm(x) conj(Y_lm(y)) = (2l+1)/(4π) P_l(⟨x, y⟩).
pub fn projector_kernel(l: usize, x: &SpherePoint, y: &SpherePoint) -> f64 {
    let t = x.dot(y);
    let p = legendre_p(l, t).expect("dot product of unit vectors is in [-1, 1]");
    (2.0 * l as f64 + 1.0) / (4.0 * PI) * p
}
