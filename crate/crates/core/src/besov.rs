//! Besov seminorms of coefficient pyramids and random members of Besov balls.
//!
//! The seminorm is `[Σ_j (B^{j(r + 1/2 − 1/π)} ‖β_j·‖_{ℓ^π})^q]^{1/q}`, with a
//! supremum over j when `q = ∞`.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::harmonic::HarmonicCoeffs;
use crate::needlet::{CoefficientPyramid, LpExponent, NeedletSystem, PyramidTag};
use crate::rng::{stream_rng, Domain};

/// Parameters of a Besov ball `B^r_{πq}(M)`. `q` may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovParams {
    pub r: f64,
    pub pi: f64,
    pub q: f64,
    pub m: f64,
}

impl BesovParams {
    pub fn new(r: f64, pi: f64, q: f64, m: f64) -> Result<Self> {
        Self { r, pi, q, m }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::invalid("r", format!("{} must be positive", self.r)));
        }
        if !(self.pi.is_finite() && self.pi >= 1.0) {
            return Err(Error::invalid("pi", format!("{} must be a finite value >= 1", self.pi)));
        }
        if self.q.is_nan() || self.q < 1.0 {
            return Err(Error::invalid("q", format!("{} must be >= 1 or inf", self.q)));
        }
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::invalid("M", format!("{} must be positive", self.m)));
        }
        let floor = (1.0 / self.pi - 1.0 / self.q).max(0.0);
        if self.r <= floor {
            return Err(Error::invalid("r", format!("{} must exceed max(0, 1/pi - 1/q) = {floor}", self.r)));
        }
        Ok(self)
    }
}

fn lp_norm(values: &[f64], p: f64) -> f64 {
    values.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Weighted per-level terms `B^{j(r+1/2−1/π)} ‖β_j·‖_π`.
pub fn level_terms(pyr: &CoefficientPyramid, params: &BesovParams) -> Vec<f64> {
    let exponent = params.r + 0.5 - 1.0 / params.pi;
    pyr.levels
        .iter()
        .enumerate()
        .map(|(j, lv)| pyr.bandwidth.powf(j as f64 * exponent) * lp_norm(lv, params.pi))
        .collect()
}

fn combine(terms: &[f64], q: f64) -> f64 {
    if q == f64::INFINITY {
        terms.iter().copied().fold(0.0, f64::max)
    } else {
        terms.iter().map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Coefficient part of the Besov norm.
pub fn besov_seminorm(pyr: &CoefficientPyramid, params: &BesovParams) -> f64 {
    combine(&level_terms(pyr, params), params.q)
}

/// Summable level weights ε_j: `2^{−j/q}`, or 1 when `q = ∞`.
pub fn level_weight(j: usize, q: f64) -> f64 {
    if q == f64::INFINITY {
        1.0
    } else {
        2f64.powf(-(j as f64) / q)
    }
}

/// Number of nonzero coefficients drawn at a level with `count` points:
/// `⌈count^{π/2}⌉` when π < 2, every point otherwise.
pub fn support_size(count: usize, pi: f64) -> usize {
    if pi >= 2.0 {
        count
    } else {
        ((count as f64).powf(pi / 2.0).ceil() as usize).clamp(1, count)
    }
}

/// Random coefficients before projection: a uniform random support per level
/// with Gaussian amplitudes, scaled so that
/// `(Σ_k (|β_jk| ‖ψ_jk‖_π)^π)^{1/π} = ε_j B^{−jr}`.
pub fn draw_raw_coefficients(
    params: &BesovParams,
    sys: &NeedletSystem,
    levels: usize,
    seed: u64,
    stream: u64,
) -> Result<CoefficientPyramid> {
    let params = params.validated()?;
    if levels == 0 || levels > sys.j_max() + 1 {
        return Err(Error::invalid("levels", format!("{levels} not in 1..={}", sys.j_max() + 1)));
    }
    let mut pyr = CoefficientPyramid::zeros(sys.bandwidth(), &sys.counts()[..levels], PyramidTag::Clean);
    for (j, lv) in pyr.levels.iter_mut().enumerate() {
        let mut rng = stream_rng(seed, Domain::Truth, stream, j as u64);
        let n = lv.len();
        let idx = sample(&mut rng, n, support_size(n, params.pi));
        for k in idx.iter() {
            lv[k] = rng.sample(StandardNormal);
        }
        let profile = sys.profile_norm(j, LpExponent::Finite(params.pi));
        let weights = &sys.grid(j).weights;
        let size = lv
            .iter()
            .zip(weights)
            .map(|(b, w)| (b.abs() * w.sqrt() * profile).powf(params.pi))
            .sum::<f64>()
            .powf(1.0 / params.pi);
        if size > 0.0 {
            let target = level_weight(j, params.q) * sys.bandwidth().powf(-(j as f64) * params.r);
            lv.iter_mut().for_each(|b| *b *= target / size);
        }
    }
    Ok(pyr)
}

/// A random band-limited function in `B^r_{πq}(M)`, returned as its harmonic
/// coefficients together with its needlet coefficients on every level of
/// `sys`. The raw draw covers levels `0..truth_levels`; the seminorm over all
/// levels of `sys` is exactly `M` (unless the draw is zero).
pub fn generate_besov_field(
    params: &BesovParams,
    sys: &NeedletSystem,
    truth_levels: usize,
    seed: u64,
    stream: u64,
) -> Result<(HarmonicCoeffs, CoefficientPyramid)> {
    let mut raw = draw_raw_coefficients(params, sys, truth_levels, seed, stream)?;
    raw.levels.extend(sys.counts()[truth_levels..].iter().map(|&c| vec![0.0; c]));
    let mut field = sys.synthesize_harmonic(&raw)?;
    let coeffs = sys.coefficients_of(&field, sys.j_max() + 1, PyramidTag::Clean);
    let norm = besov_seminorm(&coeffs, params);
    if norm == 0.0 {
        return Ok((field, coeffs));
    }
    let factor = params.m / norm;
    field.scale_by_degree(|_| factor);
    Ok((field, coeffs.scaled(factor)))
}

/// A random member of `B^r_{πq}(M)` on levels `0..=j_max` with seminorm exactly
/// `M`, using truth stream `stream`.
///
/// The raw draw is projected onto the range of the analysis operator
/// (synthesize then re-analyze), so the result is the coefficient pyramid of
/// an actual band-limited function.
pub fn generate_besov_stream(params: &BesovParams, sys: &NeedletSystem, seed: u64, stream: u64) -> Result<CoefficientPyramid> {
    generate_besov_field(params, sys, sys.j_max() + 1, seed, stream).map(|(_, c)| c)
}

/// [`generate_besov_stream`] with stream 0.
pub fn generate_besov_function(params: &BesovParams, sys: &NeedletSystem, seed: u64) -> Result<CoefficientPyramid> {
    generate_besov_stream(params, sys, seed, 0)
}

/// The three embeddings between Besov spaces of the coefficient form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingPattern {
    /// `B^r_{π q1} ⊂ B^r_{π q2}` for `q1 ≤ q2`.
    Fineness,
    /// `B^r_{π2 q} ⊂ B^r_{π1 q}` for `π1 ≤ π2`.
    Integrability,
    /// `B^r_{π1 q} ⊂ B^{r − 1/π1 + 1/π2}_{π2 q}` for `π1 ≤ π2`.
    Sobolev,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingReport {
    pub pattern: EmbeddingPattern,
    pub source: f64,
    pub target: f64,
    /// Constant C from Hölder/ℓ^q monotonicity for this pyramid's levels.
    pub bound_constant: f64,
    /// `target / source`, or 0 when the source seminorm vanishes.
    pub measured_constant: f64,
    /// Whether `target ≤ C · source`.
    pub holds: bool,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

fn classify(source: &BesovParams, target: &BesovParams) -> Result<EmbeddingPattern> {
    if close(source.r, target.r) && close(source.pi, target.pi) && source.q <= target.q {
        return Ok(EmbeddingPattern::Fineness);
    }
    if close(source.r, target.r) && source.q == target.q && source.pi > target.pi {
        return Ok(EmbeddingPattern::Integrability);
    }
    if source.q == target.q
        && source.pi < target.pi
        && target.r <= source.r - (1.0 / source.pi - 1.0 / target.pi) + 1e-12
    {
        return Ok(EmbeddingPattern::Sobolev);
    }
    Err(Error::Embedding(format!(
        "no embedding from (r={}, pi={}, q={}) into (r={}, pi={}, q={})",
        source.r, source.pi, source.q, target.r, target.pi, target.q
    )))
}

/// Checks `‖f‖_target ≤ C ‖f‖_source` for a pair of Besov parameter sets
/// related by one of the standard embeddings.
pub fn embedding_check(pyr: &CoefficientPyramid, source: &BesovParams, target: &BesovParams) -> Result<EmbeddingReport> {
    let pattern = classify(source, target)?;
    let s = besov_seminorm(pyr, source);
    let t = besov_seminorm(pyr, target);
    let bound_constant = match pattern {
        EmbeddingPattern::Fineness | EmbeddingPattern::Sobolev => 1.0,
        EmbeddingPattern::Integrability => {
            // ‖x‖_{π1} ≤ N^{1/π1 − 1/π2} ‖x‖_{π2} on N entries, with weights B^{−j(1/π1 − 1/π2)}
            let gap = 1.0 / target.pi - 1.0 / source.pi;
            pyr.levels
                .iter()
                .enumerate()
                .map(|(j, lv)| (lv.len() as f64).powf(gap) * pyr.bandwidth.powf(-(j as f64) * gap))
                .fold(1.0, f64::max)
        }
    };
    let measured_constant = if s > 0.0 { t / s } else { 0.0 };
    Ok(EmbeddingReport {
        pattern,
        source: s,
        target: t,
        bound_constant,
        measured_constant,
        holds: t <= bound_constant * s * (1.0 + 1e-12),
    })
}
