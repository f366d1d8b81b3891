//! Gaussian observation model.
//!
//! The observed coefficients are `β̂_jk = β_jk + ε_jk` where ε is the needlet
//! transform of white noise with variance `1/n` per harmonic mode, so that
//! `Cov(ε_jk1, ε_jk2) = ⟨ψ_jk1, ψ_jk2⟩ / n`. Noise is drawn in the harmonic
//! domain, which reproduces this law exactly.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::harmonic::HarmonicCoeffs;
use crate::needlet::{CoefficientPyramid, NeedletSystem, PyramidTag};
use crate::rng::{stream_rng, Domain};
use crate::threshold::{block_statistic_level, build_partitions, top_level};

/// Replications are generated in chunks of this size, then folded in order.
const CHUNK: usize = 128;

/// Noise level `1/n` and the seed of every noise draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationModel {
    n: f64,
    seed: u64,
}

impl ObservationModel {
    pub fn new(n: f64, seed: u64) -> Result<Self> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::invalid("n", format!("{n} must be positive and finite")));
        }
        Ok(Self { n, seed })
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// White noise coefficients `a_lm`, `l ≤ lmax`, with `E|a_lm|² = 1/n` and the
/// symmetry of a real field. Degree `l` always comes from its own substream.
pub fn noise_harmonics(model: &ObservationModel, lmax: usize, stream: u64) -> HarmonicCoeffs {
    let mut c = HarmonicCoeffs::zeros(lmax);
    let sd_real = model.n.recip().sqrt();
    let sd_complex = (0.5 / model.n).sqrt();
    for l in 0..=lmax {
        let mut rng = stream_rng(model.seed, Domain::Noise, stream, l as u64);
        let z: f64 = rng.sample(StandardNormal);
        c.set(l, 0, Complex64::new(sd_real * z, 0.0));
        for m in 1..=l {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c.set(l, m, Complex64::new(sd_complex * re, sd_complex * im));
        }
    }
    c
}

/// Pure noise ε_jk for levels `0..levels`.
pub fn sample_noise(model: &ObservationModel, sys: &NeedletSystem, levels: usize, stream: u64) -> Result<CoefficientPyramid> {
    if levels == 0 || levels > sys.j_max() + 1 {
        return Err(Error::invalid(
            "levels",
            format!("{levels} not in 1..={}", sys.j_max() + 1),
        ));
    }
    let noise = noise_harmonics(model, sys.level_lmax(levels - 1), stream);
    Ok(sys.coefficients_of(&noise, levels, PyramidTag::Noisy))
}

/// β̂ = β + ε using noise stream 0.
pub fn sample_noisy_pyramid(model: &ObservationModel, sys: &NeedletSystem, clean: &CoefficientPyramid) -> Result<CoefficientPyramid> {
    sample_noisy_pyramid_stream(model, sys, clean, 0)
}

/// β̂ = β + ε using the given noise stream (one per replication).
pub fn sample_noisy_pyramid_stream(
    model: &ObservationModel,
    sys: &NeedletSystem,
    clean: &CoefficientPyramid,
    stream: u64,
) -> Result<CoefficientPyramid> {
    sys.check_pyramid(clean)?;
    let mut out = sample_noise(model, sys, clean.levels.len(), stream)?;
    for (o, c) in out.levels.iter_mut().zip(&clean.levels) {
        for (e, b) in o.iter_mut().zip(c) {
            *e += b;
        }
    }
    Ok(out)
}

/// Analytic `Cov(ε_jk1, ε_jk2) = ⟨ψ_jk1, ψ_jk2⟩ / n`.
pub fn noise_covariance(model: &ObservationModel, sys: &NeedletSystem, j: usize, k1: usize, k2: usize) -> Result<f64> {
    Ok(sys.gram(j, k1, k2)? / model.n)
}

/// `E|Z|^p = 2^{p/2} Γ((p+1)/2) / √π` for a standard normal Z.
pub fn gaussian_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// Two-sided z such that `m` simultaneous tests have the same family-wise
/// error as one test at `single_z`.
pub fn family_wise_z(single_z: f64, m: usize) -> f64 {
    let normal = Normal::standard();
    let alpha = 2.0 * (1.0 - normal.cdf(single_z));
    normal.inverse_cdf(1.0 - alpha / (2.0 * m.max(1) as f64))
}

/// Draws `replications` noise pyramids in parallel and hands them to `fold`
/// in replication order.
fn fold_noise(
    model: &ObservationModel,
    sys: &NeedletSystem,
    levels: usize,
    replications: usize,
    mut fold: impl FnMut(&[CoefficientPyramid]),
) -> Result<()> {
    let mut start = 0;
    while start < replications {
        let end = (start + CHUNK).min(replications);
        let chunk: Vec<CoefficientPyramid> = (start..end)
            .into_par_iter()
            .map(|rep| sample_noise(model, sys, levels, rep as u64))
            .collect::<Result<_>>()?;
        fold(&chunk);
        start = end;
    }
    Ok(())
}

/// Agreement of one level's sampled noise with the analytic law, in Monte
/// Carlo standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelNoiseLaw {
    pub level: usize,
    pub points: usize,
    pub variance_max_z: f64,
    pub variance_beyond: usize,
    pub mean_max_z: f64,
    pub covariance_entries: usize,
    pub covariance_max_z: f64,
    pub covariance_beyond: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLawReport {
    pub replications: usize,
    /// The per-entry z level being checked (4 by default).
    pub z_level: f64,
    pub levels: Vec<LevelNoiseLaw>,
}

impl NoiseLawReport {
    pub fn variance_count(&self) -> usize {
        self.levels.iter().map(|l| l.points).sum()
    }

    pub fn covariance_count(&self) -> usize {
        self.levels.iter().map(|l| l.covariance_entries).sum()
    }

    pub fn variance_max_z(&self) -> f64 {
        self.levels.iter().map(|l| l.variance_max_z).fold(0.0, f64::max)
    }

    pub fn mean_max_z(&self) -> f64 {
        self.levels.iter().map(|l| l.mean_max_z).fold(0.0, f64::max)
    }

    pub fn covariance_max_z(&self) -> f64 {
        self.levels.iter().map(|l| l.covariance_max_z).fold(0.0, f64::max)
    }

    pub fn variance_beyond(&self) -> usize {
        self.levels.iter().map(|l| l.variance_beyond).sum()
    }

    pub fn covariance_beyond(&self) -> usize {
        self.levels.iter().map(|l| l.covariance_beyond).sum()
    }
}

/// Compares sampled noise with the analytic variances and covariances at
/// every level `0..levels`.
///
/// Standard errors are estimated from the replications themselves (the
/// sample variance of ε² and of ε_k1 ε_k2).
pub fn noise_law_check(
    model: &ObservationModel,
    sys: &NeedletSystem,
    levels: usize,
    replications: usize,
    z_level: f64,
) -> Result<NoiseLawReport> {
    if replications < 2 {
        return Err(Error::invalid("replications", "need at least 2"));
    }
    if levels == 0 || levels > sys.j_max() + 1 {
        return Err(Error::invalid("levels", format!("{levels} not in 1..={}", sys.j_max() + 1)));
    }
    let counts = sys.counts();
    // per level: Σε, Σε², Σε⁴ per point, and Σε1ε2, Σ(ε1ε2)² per pair k1 < k2
    let mut s1: Vec<Vec<f64>> = counts[..levels].iter().map(|&c| vec![0.0; c]).collect();
    let mut s2 = s1.clone();
    let mut s4 = s1.clone();
    let mut c1: Vec<Vec<f64>> = counts[..levels].iter().map(|&c| vec![0.0; c * (c - 1) / 2]).collect();
    let mut c2 = c1.clone();

    fold_noise(model, sys, levels, replications, |chunk| {
        for j in 0..levels {
            for pyr in chunk {
                for (k, &e) in pyr.levels[j].iter().enumerate() {
                    s1[j][k] += e;
                    s2[j][k] += e * e;
                    s4[j][k] += e * e * e * e;
                }
            }
            let n = counts[j];
            let (cs1, cs2) = (&mut c1[j], &mut c2[j]);
            // split the packed upper triangle into disjoint rows for parallel accumulation
            let mut rows1: Vec<&mut [f64]> = Vec::with_capacity(n);
            let mut rows2: Vec<&mut [f64]> = Vec::with_capacity(n);
            let (mut rest1, mut rest2) = (&mut cs1[..], &mut cs2[..]);
            for k1 in 0..n {
                let len = n - 1 - k1;
                let (a, b) = rest1.split_at_mut(len);
                let (c, d) = rest2.split_at_mut(len);
                rows1.push(a);
                rows2.push(c);
                rest1 = b;
                rest2 = d;
            }
            rows1.into_par_iter().zip(rows2).enumerate().for_each(|(k1, (r1, r2))| {
                for pyr in chunk {
                    let lv = &pyr.levels[j];
                    let e1 = lv[k1];
                    for (i, &e2) in lv[k1 + 1..].iter().enumerate() {
                        let prod = e1 * e2;
                        r1[i] += prod;
                        r2[i] += prod * prod;
                    }
                }
            });
        }
    })?;

    let r = replications as f64;
    let mut out = Vec::with_capacity(levels);
    for j in 0..levels {
        let grid = sys.grid(j);
        let n = counts[j];
        let mut lv = LevelNoiseLaw {
            level: j,
            points: n,
            variance_max_z: 0.0,
            variance_beyond: 0,
            mean_max_z: 0.0,
            covariance_entries: n * (n - 1) / 2,
            covariance_max_z: 0.0,
            covariance_beyond: 0,
        };
        for k in 0..n {
            let truth = noise_covariance(model, sys, j, k, k)?;
            let v = s2[j][k] / r;
            let se = ((s4[j][k] / r - v * v) / r).sqrt();
            let z = (v - truth).abs() / se;
            lv.variance_max_z = lv.variance_max_z.max(z);
            lv.variance_beyond += usize::from(z > z_level);
            let mz = (s1[j][k] / r).abs() / (v / r).sqrt();
            lv.mean_max_z = lv.mean_max_z.max(mz);
        }
        let lambda_sqrt: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
        let (zmax, beyond) = (0..n)
            .into_par_iter()
            .map(|k1| {
                let base = pair_offset(n, k1);
                let mut zmax = 0.0f64;
                let mut beyond = 0usize;
                for k2 in k1 + 1..n {
                    let idx = base + (k2 - k1 - 1);
                    let truth = lambda_sqrt[k1] * lambda_sqrt[k2]
                        * sys.gram_kernel(j, grid.points[k1].dot(&grid.points[k2]))
                        / model.n;
                    let c = c1[j][idx] / r;
                    let se = ((c2[j][idx] / r - c * c) / r).sqrt();
                    let z = (c - truth).abs() / se;
                    zmax = zmax.max(z);
                    beyond += usize::from(z > z_level);
                }
                (zmax, beyond)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold((0.0f64, 0usize), |(a, b), (z, c)| (a.max(z), b + c));
        lv.covariance_max_z = zmax;
        lv.covariance_beyond = beyond;
        out.push(lv);
    }
    Ok(NoiseLawReport {
        replications,
        z_level,
        levels: out,
    })
}

/// Offset of row `k1` in a packed strict upper triangle of an `n × n` matrix.
fn pair_offset(n: usize, k1: usize) -> usize {
    k1 * (2 * n - k1 - 1) / 2
}

/// Sup over k2 of `|corr(ε_jk, ε_jk2)| (1 + B^j d(ξ_jk, ξ_jk2))^decay` for a
/// fixed `k`, computed from the analytic covariance.
pub fn correlation_decay_constant(sys: &NeedletSystem, j: usize, k: usize, decay: f64) -> Result<f64> {
    let grid = sys.grid(j);
    let var_k = sys.gram(j, k, k)?;
    let scale = sys.bandwidth().powi(j as i32);
    let mut sup = 0.0f64;
    for k2 in 0..grid.count() {
        let corr = sys.gram(j, k, k2)? / (var_k * sys.gram(j, k2, k2)?).sqrt();
        let d = crate::sphere::geodesic_distance(&grid.points[k], &grid.points[k2]);
        sup = sup.max(corr.abs() * (1.0 + scale * d).powf(decay));
    }
    Ok(sup)
}

/// Settings of [`empirical_moment_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentCheckOptions {
    /// Even moment order p.
    pub p: u32,
    pub replications: usize,
    /// Levels `0..levels` are checked; defaults to `0..=min(J_n, j_max)`.
    pub levels: Option<usize>,
    /// κ for the block exceedance frequency.
    pub kappa: f64,
    /// η for the blocks.
    pub eta: f64,
    /// Power of the block statistic.
    pub p_stat: u32,
}

impl MomentCheckOptions {
    pub fn new(p: u32, replications: usize) -> Self {
        Self {
            p,
            replications,
            levels: None,
            kappa: crate::threshold::DEFAULT_KAPPA,
            eta: crate::threshold::DEFAULT_ETA,
            p_stat: crate::threshold::DEFAULT_P_STAT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub p: u32,
    pub replications: usize,
    pub levels: usize,
    /// Max over (j, k) of |empirical − closed form| in Monte Carlo standard errors.
    pub max_z: f64,
    /// Range of empirical / closed-form ratios over (j, k).
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Per level, `E sup_k |ε_jk|^p / ((j+1)^p n^{-p/2})`.
    pub sup_constants: Vec<f64>,
    /// Fraction of (replication, block) pairs with `|Â − A| > κ t_n^{p_stat}`.
    pub exceedance: f64,
    pub kappa: f64,
}

/// Empirical moments of `β̂ − β` against the Gaussian closed form
/// `n^{-p/2} ‖ψ_jk‖₂^p E|Z|^p`, the sup-over-k moment, and block exceedances.
pub fn empirical_moment_check(model: &ObservationModel, sys: &NeedletSystem, opts: &MomentCheckOptions) -> Result<MomentReport> {
    if opts.p == 0 || !opts.p.is_multiple_of(2) {
        return Err(Error::invalid("p", format!("{} must be a positive even integer", opts.p)));
    }
    if opts.replications < 1000 {
        return Err(Error::invalid("replications", format!("{} < 1000", opts.replications)));
    }
    let levels = opts
        .levels
        .unwrap_or_else(|| top_level(sys.bandwidth(), model.n).min(sys.j_max()) + 1);
    if levels == 0 || levels > sys.j_max() + 1 {
        return Err(Error::invalid("levels", format!("{levels} not in 1..={}", sys.j_max() + 1)));
    }
    let parts = build_partitions(sys, opts.eta, levels - 1)?;
    let p = opts.p as i32;
    let counts = sys.counts();
    let mut sp: Vec<Vec<f64>> = counts[..levels].iter().map(|&c| vec![0.0; c]).collect();
    let mut s2p = sp.clone();
    let mut sup = vec![0.0; levels];
    let mut exceed = 0usize;
    let mut trials = 0usize;
    let threshold = opts.kappa * model.n.powf(-(opts.p_stat as f64) / 2.0);

    fold_noise(model, sys, levels, opts.replications, |chunk| {
        for pyr in chunk {
            for j in 0..levels {
                let mut m = 0.0f64;
                for (k, &e) in pyr.levels[j].iter().enumerate() {
                    let a = e.abs().powi(p);
                    sp[j][k] += a;
                    s2p[j][k] += a * a;
                    m = m.max(a);
                }
                sup[j] += m;
                // clean coefficients are zero, so Â − A = Â
                let stats = block_statistic_level(&pyr.levels[j], &parts[j], opts.p_stat)
                    .expect("partition matches level");
                exceed += stats.iter().filter(|a| a.abs() > threshold).count();
                trials += stats.len();
            }
        }
    })?;

    let r = opts.replications as f64;
    let c_p = gaussian_abs_moment(opts.p as f64);
    let mut max_z = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    for j in 0..levels {
        for k in 0..counts[j] {
            let sigma2 = noise_covariance(model, sys, j, k, k)?;
            let closed = sigma2.powf(opts.p as f64 / 2.0) * c_p;
            let emp = sp[j][k] / r;
            let se = ((s2p[j][k] / r - emp * emp) / r).sqrt();
            max_z = max_z.max((emp - closed).abs() / se);
            let ratio = emp / closed;
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
        }
    }
    let scale = model.n.powf(-(opts.p as f64) / 2.0);
    let sup_constants = sup
        .iter()
        .enumerate()
        .map(|(j, s)| s / r / ((j as f64 + 1.0).powi(p) * scale))
        .collect();
    Ok(MomentReport {
        p: opts.p,
        replications: opts.replications,
        levels,
        max_z,
        min_ratio,
        max_ratio,
        sup_constants,
        exceedance: exceed as f64 / trials.max(1) as f64,
        kappa: opts.kappa,
    })
}
