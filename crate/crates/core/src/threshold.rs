//! Block thresholding of needlet coefficients.
//!
//! Each level is cut into Voronoi blocks R_{j;s}. A block survives when its
//! statistic `Â_{js;p} = ℓ_j⁻¹ Σ_{k∈R_{j;s}} β̂_jk^p` exceeds `κ t_n^p` in
//! absolute value, with `t_n = n^{-1/2}`; levels above `J_n` are dropped.

use crate::error::{Error, Result};
use crate::needlet::{CoefficientPyramid, LpExponent, NeedletSystem, PyramidTag};
use crate::sphere::{build_blocks, BlockPartition};

pub const DEFAULT_KAPPA: f64 = 3.0;
pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_P_STAT: u32 = 2;

/// Largest `J` with `B^J ≤ √n`.
pub fn top_level(bandwidth: f64, n: f64) -> usize {
    let limit = n.sqrt() * (1.0 + 1e-12);
    let mut j = 0;
    let mut scale = bandwidth;
    while scale <= limit && j < 64 {
        j += 1;
        scale *= bandwidth;
    }
    j
}

/// Tuning of the block-threshold estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Threshold constant κ ≥ 0; `f64::INFINITY` kills every block.
    pub kappa: f64,
    /// Block exponent η ∈ (0, 1), giving block size ⌊N_j^η⌋.
    pub eta: f64,
    /// Power p ≥ 1 in the block statistic.
    pub p_stat: u32,
    /// Sample size n > 0.
    pub n: f64,
    /// Needlet bandwidth B > 1.
    pub bandwidth: f64,
}

impl EstimatorConfig {
    /// Defaults κ = 3, η = 1/2, p = 2.
    pub fn new(n: f64, bandwidth: f64) -> Result<Self> {
        Self {
            kappa: DEFAULT_KAPPA,
            eta: DEFAULT_ETA,
            p_stat: DEFAULT_P_STAT,
            n,
            bandwidth,
        }
        .validated()
    }

    pub fn with_kappa(mut self, kappa: f64) -> Result<Self> {
        self.kappa = kappa;
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if self.kappa.is_nan() || self.kappa < 0.0 {
            return Err(Error::invalid("kappa", format!("{} must be >= 0", self.kappa)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::invalid("eta", format!("{} not in (0, 1)", self.eta)));
        }
        if self.p_stat == 0 {
            return Err(Error::invalid("p_stat", "must be a positive integer"));
        }
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(Error::invalid("n", format!("{} must be positive and finite", self.n)));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 1.0) {
            return Err(Error::invalid("B", format!("{} must exceed 1", self.bandwidth)));
        }
        Ok(self)
    }

    /// J_n, the highest level kept.
    pub fn j_n(&self) -> usize {
        top_level(self.bandwidth, self.n)
    }

    /// t_n = n^{-1/2}.
    pub fn t_n(&self) -> f64 {
        self.n.sqrt().recip()
    }

    /// κ t_n^p.
    pub fn threshold(&self) -> f64 {
        if self.kappa == f64::INFINITY {
            return f64::INFINITY;
        }
        self.kappa * self.t_n().powi(self.p_stat as i32)
    }
}

/// Block partitions for levels `0..=j_top` of a system.
pub fn build_partitions(sys: &NeedletSystem, eta: f64, j_top: usize) -> Result<Vec<BlockPartition>> {
    if j_top > sys.j_max() {
        return Err(Error::IndexOutOfRange {
            what: "partition level",
            index: j_top,
            len: sys.j_max() + 1,
        });
    }
    (0..=j_top).map(|j| build_blocks(sys.grid(j), eta)).collect()
}

/// `A_{js;p}` for every block of one level's coefficients.
pub fn block_statistic_level(values: &[f64], part: &BlockPartition, p: u32) -> Result<Vec<f64>> {
    if values.len() != part.point_count() {
        return Err(Error::LengthMismatch {
            what: "block partition points",
            expected: part.point_count(),
            found: values.len(),
        });
    }
    if p == 0 {
        return Err(Error::invalid("p", "must be a positive integer"));
    }
    let ell = part.block_size_target as f64;
    Ok(part
        .blocks
        .iter()
        .map(|block| block.iter().map(|&k| values[k].powi(p as i32)).sum::<f64>() / ell)
        .collect())
}

/// `A_{js;p}` for the level of `pyr` that `part` describes.
pub fn block_statistic(pyr: &CoefficientPyramid, part: &BlockPartition, p: u32) -> Result<Vec<f64>> {
    let values = pyr.levels.get(part.level).ok_or(Error::IndexOutOfRange {
        what: "pyramid level",
        index: part.level,
        len: pyr.levels.len(),
    })?;
    block_statistic_level(values, part, p)
}

/// `w = 1{|Â| > κ t_n^p}` per block.
pub fn threshold_weights(stats: &[f64], cfg: &EstimatorConfig) -> Vec<bool> {
    let t = cfg.threshold();
    stats.iter().map(|a| a.abs() > t).collect()
}

/// Statistics and keep decisions for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelStatistics {
    pub level: usize,
    pub values: Vec<f64>,
    pub keep: Vec<bool>,
}

impl LevelStatistics {
    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&w| w).count()
    }
}

/// Per-block statistics of a denoising run, for levels `0..=J_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStatistics {
    pub levels: Vec<LevelStatistics>,
}

impl BlockStatistics {
    pub fn kept_blocks(&self) -> usize {
        self.levels.iter().map(LevelStatistics::kept).sum()
    }

    pub fn total_blocks(&self) -> usize {
        self.levels.iter().map(|l| l.keep.len()).sum()
    }

    /// Fraction of blocks kept; zero when there are no blocks.
    pub fn kept_fraction(&self) -> f64 {
        let total = self.total_blocks();
        if total == 0 {
            0.0
        } else {
            self.kept_blocks() as f64 / total as f64
        }
    }
}

/// Keeps levels `0..=j_top` and zeroes the rest, preserving the pyramid shape.
pub fn truncate(pyr: &CoefficientPyramid, j_top: usize) -> CoefficientPyramid {
    let mut out = pyr.clone();
    for lv in out.levels.iter_mut().skip(j_top + 1) {
        lv.iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

/// The block-threshold estimate: within levels `0..=J_n`, each block is kept
/// verbatim or zeroed; higher levels are zeroed.
pub fn denoise(
    noisy: &CoefficientPyramid,
    parts: &[BlockPartition],
    cfg: &EstimatorConfig,
) -> Result<(CoefficientPyramid, BlockStatistics)> {
    let cfg = cfg.validated()?;
    let j_n = cfg.j_n();
    if noisy.levels.len() <= j_n {
        return Err(Error::invalid(
            "pyramid",
            format!("has levels 0..={} but J_n = {j_n}", noisy.levels.len() as i64 - 1),
        ));
    }
    if parts.len() <= j_n {
        return Err(Error::invalid(
            "partitions",
            format!("cover levels 0..={} but J_n = {j_n}", parts.len() as i64 - 1),
        ));
    }
    let mut out = truncate(noisy, j_n);
    out.tag = PyramidTag::Thresholded;
    let mut levels = Vec::with_capacity(j_n + 1);
    for (j, part) in parts.iter().enumerate().take(j_n + 1) {
        if part.level != j {
            return Err(Error::invalid("partitions", format!("entry {j} describes level {}", part.level)));
        }
        let values = block_statistic_level(&noisy.levels[j], part, cfg.p_stat)?;
        let keep = threshold_weights(&values, &cfg);
        for (block, &w) in part.blocks.iter().zip(&keep) {
            if !w {
                for &k in block {
                    out.levels[j][k] = 0.0;
                }
            }
        }
        levels.push(LevelStatistics { level: j, values, keep });
    }
    Ok((out, BlockStatistics { levels }))
}

/// Which branch of the rate exponent applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateZone {
    Regular,
    Sparse,
    Uniform,
}

/// `rp / (2(r+1))`.
pub fn regular_rate(r: f64, p: f64) -> f64 {
    r * p / (2.0 * (r + 1.0))
}

/// `p(r − 2(1/π − 1/p)) / (2(r − 2(1/π − 1/2)))`.
pub fn sparse_rate(r: f64, pi: f64, p: f64) -> f64 {
    // expanded as (p(r − 2/π) + 2) / (2(r − 2/π + 1)) to keep rational inputs exact
    let s = r - 2.0 / pi;
    (p * s + 2.0) / (2.0 * (s + 1.0))
}

/// `(r − 2/π) / (2(r − 2(1/π − 1/2)))`, the sup-norm exponent.
pub fn uniform_rate(r: f64, pi: f64) -> f64 {
    let s = r - 2.0 / pi;
    s / (2.0 * (s + 1.0))
}

/// The π at which the regular and sparse exponents coincide, `p / (r+1)`.
pub fn zone_boundary(r: f64, p: f64) -> f64 {
    p / (r + 1.0)
}

/// `2p / (2(r+2))`, the boundary as it is usually quoted for this estimator.
/// The two exponents do not agree there; see [`zone_boundary`].
pub fn quoted_zone_boundary(r: f64, p: f64) -> f64 {
    2.0 * p / (2.0 * (r + 2.0))
}

fn check_rate_args(r: f64, pi: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid("r", format!("{r} must be positive")));
    }
    if !(pi.is_finite() && pi >= 1.0) {
        return Err(Error::invalid("pi", format!("{pi} must be >= 1")));
    }
    // the boundary r = 2/π itself is accepted: the exponents stay finite there
    if r - 2.0 / pi < 0.0 {
        return Err(Error::invalid("r", format!("r - 2/pi = {} must not be negative", r - 2.0 / pi)));
    }
    Ok(())
}

pub fn rate_zone(r: f64, pi: f64, p: LpExponent) -> Result<RateZone> {
    check_rate_args(r, pi)?;
    match p.validate()? {
        LpExponent::Infinity => Ok(RateZone::Uniform),
        LpExponent::Finite(p) if pi >= zone_boundary(r, p) => Ok(RateZone::Regular),
        LpExponent::Finite(_) => Ok(RateZone::Sparse),
    }
}

/// Exponent α(r, π, p) in `E‖f* − f‖_p^p ≲ n^{−α}`.
pub fn theoretical_rate(r: f64, pi: f64, p: LpExponent) -> Result<f64> {
    let zone = rate_zone(r, pi, p)?;
    Ok(match (zone, p) {
        (RateZone::Uniform, _) => uniform_rate(r, pi),
        (RateZone::Regular, LpExponent::Finite(p)) => regular_rate(r, p),
        (RateZone::Sparse, LpExponent::Finite(p)) => sparse_rate(r, pi, p),
        _ => unreachable!("finite zones carry a finite p"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubature::build_cubature;
    use proptest::prelude::*;

    fn part_of(blocks: Vec<Vec<usize>>, ell: usize) -> BlockPartition {
        let n = blocks.iter().map(Vec::len).sum();
        let mut block_of = vec![0; n];
        for (s, b) in blocks.iter().enumerate() {
            for &k in b {
                block_of[k] = s;
            }
        }
        BlockPartition {
            level: 0,
            block_of,
            blocks,
            block_size_target: ell,
            centers: Vec::new(),
            epsilon: 0.0,
        }
    }

    #[test]
    fn block_statistic_hand_values() {
        let part = part_of(vec![vec![0, 1, 2]], 3);
        let a = block_statistic_level(&[1.0, 2.0, 3.0], &part, 2).unwrap();
        assert!((a[0] - 14.0 / 3.0).abs() < 1e-15);
        assert_eq!(block_statistic_level(&[0.0; 3], &part, 2).unwrap(), vec![0.0]);
        let single = part_of(vec![vec![0], vec![1]], 1);
        assert_eq!(block_statistic_level(&[-1.5, 2.0], &single, 2).unwrap(), vec![2.25, 4.0]);
        assert!(block_statistic_level(&[1.0], &part, 2).is_err());
    }

    #[test]
    fn weights_use_strict_inequality() {
        let cfg = EstimatorConfig::new(100.0, 2.0).unwrap();
        let t = cfg.threshold();
        assert!((t - 3.0 / 100.0).abs() < 1e-16);
        assert_eq!(threshold_weights(&[t, -t, 0.0, 1.0001 * t, -1.0001 * t], &cfg), vec![
            false, false, false, true, true
        ]);
        let tiny = cfg.with_kappa(1e-300).unwrap();
        assert_eq!(threshold_weights(&[1e-20, -1e-20], &tiny), vec![true, true]);
    }

    #[test]
    fn top_level_examples() {
        assert_eq!(top_level(2.0, 256.0), 4);
        assert_eq!(top_level(2.0, 255.0), 3);
        assert_eq!(top_level(2.0, 16384.0), 7);
        assert_eq!(top_level(2.0, 1.0), 0);
        assert_eq!(top_level(3.0, 81.0), 2);
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::new(0.0, 2.0).is_err());
        assert!(EstimatorConfig::new(10.0, 1.0).is_err());
        let cfg = EstimatorConfig::new(10.0, 2.0).unwrap();
        assert!(cfg.with_kappa(-1.0).is_err());
        assert!(cfg.with_kappa(f64::NAN).is_err());
        assert_eq!(cfg.with_kappa(f64::INFINITY).unwrap().threshold(), f64::INFINITY);
        assert!((EstimatorConfig { eta: 1.0, ..cfg }).validated().is_err());
        assert!((EstimatorConfig { p_stat: 0, ..cfg }).validated().is_err());
    }

    #[test]
    fn worked_rate_values() {
        let f = LpExponent::Finite;
        assert_eq!(theoretical_rate(2.0, 2.0, f(2.0)).unwrap(), 2.0 / 3.0);
        assert_eq!(rate_zone(2.0, 2.0, f(2.0)).unwrap(), RateZone::Regular);
        assert_eq!(theoretical_rate(2.0, 1.0, f(6.0)).unwrap(), 1.0);
        assert_eq!(rate_zone(2.0, 1.0, f(6.0)).unwrap(), RateZone::Sparse);
        assert_eq!(theoretical_rate(2.0, 2.0, LpExponent::Infinity).unwrap(), 0.25);
        assert!(theoretical_rate(0.9, 2.0, f(2.0)).is_err());
        assert!(theoretical_rate(2.0, 0.5, f(2.0)).is_err());
    }

    #[test]
    fn expanded_forms_match_quoted_forms() {
        for (r, pi, p) in [(2.5, 1.3, 3.0), (4.0, 1.0, 8.0), (3.1, 1.7, 5.5)] {
            let quoted = p * (r - 2.0 * (1.0 / pi - 1.0 / p)) / (2.0 * (r - 2.0 * (1.0 / pi - 0.5)));
            assert!((sparse_rate(r, pi, p) - quoted).abs() < 1e-14);
            let quoted_inf = (r - 2.0 / pi) / (2.0 * (r - 2.0 * (1.0 / pi - 0.5)));
            assert!((uniform_rate(r, pi) - quoted_inf).abs() < 1e-14);
        }
    }

    #[test]
    fn exponents_continuous_at_zone_boundary() {
        // p must exceed 2(r+1)/r for the boundary to satisfy r ≥ 2/π
        for (r, p) in [(2.0, 8.0), (3.5, 6.0), (1.5, 10.0)] {
            let pi = zone_boundary(r, p);
            assert!((regular_rate(r, p) - sparse_rate(r, pi, p)).abs() < 1e-12);
        }
    }

    #[test]
    fn regular_rate_increasing_in_r() {
        let mut prev = 0.0;
        for i in 1..50 {
            let r = 1.0 + 0.1 * i as f64;
            let a = theoretical_rate(r, 2.0, LpExponent::Finite(2.0)).unwrap();
            assert!(a > prev);
            assert!((a - r / (r + 1.0)).abs() < 1e-15);
            prev = a;
        }
    }

    #[test]
    fn denoise_extremes() {
        let grid = build_cubature(2.0, 2).unwrap();
        let counts: Vec<usize> = (0..=3).map(|j| build_cubature(2.0, j).unwrap().count()).collect();
        let parts: Vec<BlockPartition> =
            (0..=3).map(|j| build_blocks(&build_cubature(2.0, j).unwrap(), 0.5).unwrap()).collect();
        assert_eq!(parts[2].point_count(), grid.count());
        let mut noisy = CoefficientPyramid::zeros(2.0, &counts, PyramidTag::Noisy);
        for (j, lv) in noisy.levels.iter_mut().enumerate() {
            for (k, v) in lv.iter_mut().enumerate() {
                *v = ((j * 31 + k * 7) % 13) as f64 / 13.0 - 0.4;
            }
        }
        let cfg = EstimatorConfig::new(64.0, 2.0).unwrap(); // J_n = 3
        let (lin, _) = denoise(&noisy, &parts, &cfg.with_kappa(0.0).unwrap()).unwrap();
        assert_eq!(lin.levels, truncate(&noisy, 3).levels);
        let (zero, stats) = denoise(&noisy, &parts, &cfg.with_kappa(f64::INFINITY).unwrap()).unwrap();
        assert!(zero.levels.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(stats.kept_blocks(), 0);
        let shallow = EstimatorConfig::new(1e6, 2.0).unwrap();
        assert!(denoise(&noisy, &parts, &shallow).is_err());
    }

    proptest! {
        #[test]
        fn keep_or_kill_and_monotone(
            seed_vals in proptest::collection::vec(-1.0f64..1.0, 28),
            k1 in 0.0f64..50.0,
            dk in 0.0f64..50.0,
        ) {
            let part0 = build_blocks(&build_cubature(2.0, 0).unwrap(), 0.5).unwrap();
            let part1 = build_blocks(&build_cubature(2.0, 1).unwrap(), 0.5).unwrap();
            let parts = vec![part0, part1, build_blocks(&build_cubature(2.0, 2).unwrap(), 0.5).unwrap()];
            let noisy = CoefficientPyramid {
                bandwidth: 2.0,
                levels: vec![seed_vals[..6].to_vec(), seed_vals.clone(), vec![0.1; parts[2].point_count()]],
                tag: PyramidTag::Noisy,
            };
            let cfg = EstimatorConfig::new(16.0, 2.0).unwrap(); // J_n = 2
            let (a, sa) = denoise(&noisy, &parts, &cfg.with_kappa(k1).unwrap()).unwrap();
            let (b, sb) = denoise(&noisy, &parts, &cfg.with_kappa(k1 + dk).unwrap()).unwrap();
            for (j, part) in parts.iter().enumerate() {
                for block in &part.blocks {
                    let kept = block.iter().all(|&k| a.levels[j][k] == noisy.levels[j][k]);
                    let killed = block.iter().all(|&k| a.levels[j][k] == 0.0);
                    prop_assert!(kept || killed);
                }
            }
            for (la, lb) in sa.levels.iter().zip(&sb.levels) {
                for (wa, wb) in la.keep.iter().zip(&lb.keep) {
                    prop_assert!(!*wb || *wa);
                }
            }
            prop_assert!(b.levels.iter().flatten().zip(a.levels.iter().flatten()).all(|(x, y)| *x == 0.0 || x == y));
        }
    }
}
