//! Monte Carlo risk of the block-threshold estimator over a grid of sample
//! sizes, with a log-log slope fit against the theoretical exponent.
//!
//! Replications run in parallel; each owns its RNG streams (truth by
//! replication, noise by sample-size index and replication) and results are
//! folded in replication order, so reports do not depend on the thread count.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::besov::{generate_besov_field, BesovParams};
use crate::cubature::{CubatureGrid, DEFAULT_POINT_CAP};
use crate::error::{Error, Result};
use crate::harmonic::HarmonicCoeffs;
use crate::needlet::{LpExponent, NeedletSystem, PyramidTag};
use crate::observation::{sample_noise, ObservationModel};
use crate::rng::{replication_stream, stream_rng, Domain};
use crate::sht;
use crate::sphere::BlockPartition;
use crate::threshold::{
    block_statistic_level, build_partitions, denoise, theoretical_rate, top_level, EstimatorConfig, DEFAULT_ETA,
    DEFAULT_KAPPA, DEFAULT_P_STAT,
};

/// Number of truth groups used for the worst-group risk.
pub const TRUTH_GROUPS: usize = 8;

/// How the true function is chosen across replications.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthMode {
    /// A fresh draw from the Besov ball for every replication.
    Redraw,
    /// One draw shared by all replications.
    Fixed,
}

impl TruthMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TruthMode::Redraw => "redraw",
            TruthMode::Fixed => "fixed",
        }
    }
}

impl std::str::FromStr for TruthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "redraw" => Ok(TruthMode::Redraw),
            "fixed" => Ok(TruthMode::Fixed),
            other => Err(Error::invalid("truth_mode", format!("`{other}` is not redraw or fixed"))),
        }
    }
}

/// A risk experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchPlan {
    pub besov: BesovParams,
    pub loss_p: LpExponent,
    /// Strictly increasing sample sizes, at least four.
    pub n_grid: Vec<f64>,
    pub replications: usize,
    pub kappa: f64,
    pub eta: f64,
    pub p_stat: u32,
    pub bandwidth: f64,
    pub seed: u64,
    pub truth_mode: TruthMode,
    /// Deepest level of the truth; defaults to J_n of the largest n.
    pub truth_depth: Option<usize>,
    pub point_cap: usize,
}

impl BenchPlan {
    /// r = 2, π = q = 2, M = 3, squared L² loss, n = 256 … 16384, 100 replications.
    pub fn reference() -> Self {
        Self {
            besov: BesovParams {
                r: 2.0,
                pi: 2.0,
                q: 2.0,
                m: 3.0,
            },
            loss_p: LpExponent::Finite(2.0),
            n_grid: vec![256.0, 1024.0, 4096.0, 16384.0],
            replications: 100,
            kappa: DEFAULT_KAPPA,
            eta: DEFAULT_ETA,
            p_stat: DEFAULT_P_STAT,
            bandwidth: 2.0,
            seed: 1,
            truth_mode: TruthMode::Redraw,
            truth_depth: None,
            point_cap: DEFAULT_POINT_CAP,
        }
    }

    pub fn validated(self) -> Result<Self> {
        self.besov.validated()?;
        self.loss_p.validate()?;
        if self.n_grid.len() < 4 {
            return Err(Error::invalid("n_grid", format!("needs at least 4 sizes, got {}", self.n_grid.len())));
        }
        if self.n_grid.iter().any(|n| !(n.is_finite() && *n >= 1.0)) {
            return Err(Error::invalid("n_grid", "sizes must be finite and >= 1"));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("n_grid", "must be strictly increasing"));
        }
        if self.replications < 50 {
            return Err(Error::invalid("replications", format!("{} < 50", self.replications)));
        }
        self.config_for(self.n_grid[0])?;
        Ok(self)
    }

    /// Estimator configuration at sample size `n`.
    pub fn config_for(&self, n: f64) -> Result<EstimatorConfig> {
        EstimatorConfig {
            kappa: self.kappa,
            eta: self.eta,
            p_stat: self.p_stat,
            n,
            bandwidth: self.bandwidth,
        }
        .validated()
    }

    fn max_level(&self) -> usize {
        top_level(self.bandwidth, *self.n_grid.last().expect("validated"))
    }

    pub fn truth_depth(&self) -> usize {
        self.truth_depth.unwrap_or_else(|| self.max_level())
    }

    pub fn theoretical_alpha(&self) -> Result<f64> {
        theoretical_rate(self.besov.r, self.besov.pi, self.loss_p)
    }
}

/// Risk at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskRow {
    pub n: f64,
    pub j_n: usize,
    pub risk_mean: f64,
    pub risk_se: f64,
    /// Largest mean risk among the truth groups (replication mod 8).
    pub worst_group: f64,
    pub kept_fraction: f64,
}

/// Least-squares line `log risk = intercept + slope · log n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_log_log(n: &[f64], risk: &[f64]) -> SlopeFit {
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = risk.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    SlopeFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub plan: BenchPlan,
    pub rows: Vec<RiskRow>,
    pub fit: SlopeFit,
    pub alpha_theory: f64,
    pub truth_depth: usize,
    pub threads: usize,
    pub runtime_secs: f64,
}

impl RiskReport {
    /// Fitted slope relative to `−α`: `|slope + α| ≤ tolerance · α`.
    pub fn slope_within(&self, tolerance: f64) -> bool {
        (self.fit.slope + self.alpha_theory).abs() <= tolerance * self.alpha_theory
    }

    /// Whether the fit explains at least 90% of the variance in log risk.
    pub fn fit_ok(&self) -> bool {
        self.fit.r_squared >= 0.9
    }

    /// Risk is non-increasing along the grid, except for at most one
    /// increase no larger than two standard errors.
    pub fn risk_monotone(&self) -> bool {
        let mut inversions = 0;
        for w in self.rows.windows(2) {
            if w[1].risk_mean > w[0].risk_mean {
                let se = (w[0].risk_se.powi(2) + w[1].risk_se.powi(2)).sqrt();
                if w[1].risk_mean - w[0].risk_mean > 2.0 * se {
                    return false;
                }
                inversions += 1;
            }
        }
        inversions <= 1
    }

    /// CSV with columns n, risk_mean, risk_se, kept_fraction, alpha_theory, slope_fit.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,risk_mean,risk_se,kept_fraction,alpha_theory,slope_fit\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e}",
                row.n, row.risk_mean, row.risk_se, row.kept_fraction, self.alpha_theory, self.fit.slope
            );
        }
        out
    }

    /// Key-value header followed by a per-n table.
    pub fn to_text(&self) -> String {
        let p = &self.plan;
        let mut out = String::from("needlet risk report\n");
        let kv = [
            ("r", p.besov.r.to_string()),
            ("pi", p.besov.pi.to_string()),
            ("q", p.besov.q.to_string()),
            ("M", p.besov.m.to_string()),
            ("loss_p", p.loss_p.to_string()),
            ("bandwidth", p.bandwidth.to_string()),
            ("kappa", p.kappa.to_string()),
            ("eta", p.eta.to_string()),
            ("p_stat", p.p_stat.to_string()),
            ("replications", p.replications.to_string()),
            ("seed", p.seed.to_string()),
            ("truth_mode", p.truth_mode.as_str().to_string()),
            ("truth_depth", self.truth_depth.to_string()),
            ("alpha_theory", format!("{:.6}", self.alpha_theory)),
            ("slope_fit", format!("{:.6}", self.fit.slope)),
            ("intercept", format!("{:.6}", self.fit.intercept)),
            ("r_squared", format!("{:.6}", self.fit.r_squared)),
            ("fit_flag", if self.fit_ok() { "ok" } else { "low_r_squared" }.to_string()),
            ("risk_monotone", self.risk_monotone().to_string()),
            ("threads", self.threads.to_string()),
            ("runtime_secs", format!("{:.3}", self.runtime_secs)),
        ];
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        let _ = writeln!(out, "\n{:>10} {:>4} {:>14} {:>12} {:>14} {:>8}", "n", "J_n", "risk_mean", "risk_se", "worst_group", "kept");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>10} {:>4} {:>14.6e} {:>12.4e} {:>14.6e} {:>8.4}",
                r.n, r.j_n, r.risk_mean, r.risk_se, r.worst_group, r.kept_fraction
            );
        }
        out
    }
}

/// Loss evaluation for one exponent.
struct LossEvaluator {
    p: LpExponent,
    grid: Option<CubatureGrid>,
}

impl LossEvaluator {
    fn new(sys: &NeedletSystem, p: LpExponent, cap: usize) -> Result<Self> {
        let grid = match p {
            LpExponent::Finite(2.0) => None,
            LpExponent::Finite(_) => Some(sys.analysis_grid().clone()),
            LpExponent::Infinity => {
                // twice as fine as the top level grid in both directions
                let top = sys.grid(sys.j_max());
                Some(CubatureGrid::product_capped(
                    top.level,
                    2 * top.rings().len(),
                    2 * top.n_phi(),
                    cap,
                )?)
            }
        };
        Ok(Self { p, grid })
    }

    /// `‖d‖_p^p` for finite p, `‖d‖_∞` otherwise.
    fn loss(&self, sys: &NeedletSystem, diff: &HarmonicCoeffs) -> f64 {
        match (self.p, &self.grid) {
            (LpExponent::Finite(_), None) => diff.l2_norm_sq(),
            (LpExponent::Finite(q), Some(g)) => {
                let v = sht::inverse(g, diff, sys.table());
                v.iter().zip(&g.weights).map(|(x, w)| w * x.abs().powf(q)).sum()
            }
            (LpExponent::Infinity, Some(g)) => sht::inverse(g, diff, sys.table()).iter().fold(0.0, |m, x| m.max(x.abs())),
            (LpExponent::Infinity, None) => unreachable!("sup loss always has a grid"),
        }
    }
}

struct BenchContext {
    sys: NeedletSystem,
    parts: Vec<BlockPartition>,
    loss: LossEvaluator,
    truth_depth: usize,
}

impl BenchContext {
    fn new(plan: &BenchPlan) -> Result<Self> {
        let truth_depth = plan.truth_depth();
        let max_level = plan.max_level();
        let sys = NeedletSystem::with_point_cap(plan.bandwidth, truth_depth.max(max_level), plan.point_cap)?;
        let parts = build_partitions(&sys, plan.eta, max_level)?;
        let loss = LossEvaluator::new(&sys, plan.loss_p, plan.point_cap)?;
        Ok(Self {
            sys,
            parts,
            loss,
            truth_depth,
        })
    }
}

/// Risk and kept fraction at every n for one replication.
fn replicate(ctx: &BenchContext, plan: &BenchPlan, rep: usize) -> Result<Vec<(f64, f64)>> {
    let truth_stream = match plan.truth_mode {
        TruthMode::Redraw => rep as u64,
        TruthMode::Fixed => 0,
    };
    let sys = &ctx.sys;
    let (field, beta) = generate_besov_field(&plan.besov, sys, ctx.truth_depth + 1, plan.seed, truth_stream)?;
    let mut out = Vec::with_capacity(plan.n_grid.len());
    for (i, &n) in plan.n_grid.iter().enumerate() {
        let cfg = plan.config_for(n)?;
        let j_n = cfg.j_n();
        let model = ObservationModel::new(n, plan.seed)?;
        let noise = sample_noise(&model, sys, j_n + 1, replication_stream(i, rep))?;
        let mut noisy = beta.clone();
        noisy.tag = PyramidTag::Noisy;
        for (lv, e) in noisy.levels.iter_mut().zip(&noise.levels) {
            lv.iter_mut().zip(e).for_each(|(b, e)| *b += e);
        }
        let (estimate, stats) = denoise(&noisy, &ctx.parts, &cfg)?;
        let mut diff = sys.synthesize_harmonic(&estimate)?;
        diff.add_scaled(&field, -1.0);
        out.push((ctx.loss.loss(sys, &diff), stats.kept_fraction()));
    }
    Ok(out)
}

/// Runs the experiment described by `plan`.
pub fn run_bench(plan: &BenchPlan) -> Result<RiskReport> {
    let start = Instant::now();
    let plan = plan.clone().validated()?;
    let alpha_theory = plan.theoretical_alpha()?;
    let ctx = BenchContext::new(&plan)?;
    let per_rep: Vec<Vec<(f64, f64)>> = (0..plan.replications)
        .into_par_iter()
        .map(|rep| replicate(&ctx, &plan, rep))
        .collect::<Result<_>>()?;

    let reps = plan.replications as f64;
    let mut rows = Vec::with_capacity(plan.n_grid.len());
    for (i, &n) in plan.n_grid.iter().enumerate() {
        let risks: Vec<f64> = per_rep.iter().map(|r| r[i].0).collect();
        let mean = risks.iter().sum::<f64>() / reps;
        let var = risks.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1.0);
        let mut group_sum = [0.0; TRUTH_GROUPS];
        let mut group_count = [0usize; TRUTH_GROUPS];
        for (rep, r) in risks.iter().enumerate() {
            group_sum[rep % TRUTH_GROUPS] += r;
            group_count[rep % TRUTH_GROUPS] += 1;
        }
        let worst_group = group_sum
            .iter()
            .zip(&group_count)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .fold(0.0, f64::max);
        let kept_fraction = per_rep.iter().map(|r| r[i].1).sum::<f64>() / reps;
        rows.push(RiskRow {
            n,
            j_n: top_level(plan.bandwidth, n),
            risk_mean: mean,
            risk_se: (var / reps).sqrt(),
            worst_group,
            kept_fraction,
        });
    }
    let fit = fit_log_log(
        &rows.iter().map(|r| r.n).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.risk_mean).collect::<Vec<_>>(),
    );
    Ok(RiskReport {
        truth_depth: ctx.truth_depth,
        plan,
        rows,
        fit,
        alpha_theory,
        threads: rayon::current_num_threads(),
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Outcome of a κ calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub kappa: f64,
    /// Pure-noise exceedance frequency at `kappa`.
    pub exceedance: f64,
    /// True when no κ on the grid met the target; `kappa` is then the largest tried.
    pub exhausted: bool,
    pub n: f64,
    pub blocks_sampled: usize,
}

/// Geometric κ grid searched by [`calibrate_kappa`].
pub fn kappa_grid() -> Vec<f64> {
    (0..=60).map(|i| 0.05 * 1.2f64.powi(i)).collect()
}

/// Smallest κ on [`kappa_grid`] whose pure-noise block exceedance frequency
/// `P(|Â − A| > κ t_n^p)` is below `gamma_target` at the largest planned n.
pub fn calibrate_kappa(plan: &BenchPlan, gamma_target: f64) -> Result<Calibration> {
    if !(gamma_target > 0.0 && gamma_target < 1.0) {
        return Err(Error::invalid("gamma", format!("{gamma_target} not in (0, 1)")));
    }
    let plan = plan.clone().validated()?;
    let n = *plan.n_grid.last().expect("validated");
    let cfg = plan.config_for(n)?;
    let j_n = cfg.j_n();
    let sys = NeedletSystem::with_point_cap(plan.bandwidth, j_n, plan.point_cap)?;
    let parts = build_partitions(&sys, plan.eta, j_n)?;
    let noise_seed: u64 = stream_rng(plan.seed, Domain::Calibration, 0, 0).random();
    let model = ObservationModel::new(n, noise_seed)?;
    let scale = cfg.t_n().powi(plan.p_stat as i32);

    let per_rep: Vec<Vec<f64>> = (0..plan.replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>> {
            let noise = sample_noise(&model, &sys, j_n + 1, rep as u64)?;
            let mut ratios = Vec::new();
            for (lv, part) in noise.levels.iter().zip(&parts) {
                let stats = block_statistic_level(lv, part, plan.p_stat)?;
                ratios.extend(stats.iter().map(|a| a.abs() / scale));
            }
            Ok(ratios)
        })
        .collect::<Result<_>>()?;
    let mut ratios: Vec<f64> = per_rep.into_iter().flatten().collect();
    ratios.sort_by(f64::total_cmp);
    let total = ratios.len();
    let exceed = |kappa: f64| {
        // count of ratios strictly above κ
        let at_or_below = ratios.partition_point(|&r| r <= kappa);
        (total - at_or_below) as f64 / total as f64
    };
    let grid = kappa_grid();
    for &kappa in &grid {
        let f = exceed(kappa);
        if f < gamma_target {
            return Ok(Calibration {
                kappa,
                exceedance: f,
                exhausted: false,
                n,
                blocks_sampled: total,
            });
        }
    }
    let kappa = *grid.last().expect("nonempty grid");
    Ok(Calibration {
        kappa,
        exceedance: exceed(kappa),
        exhausted: true,
        n,
        blocks_sampled: total,
    })
}
