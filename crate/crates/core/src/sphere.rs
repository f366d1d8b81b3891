//! Points on the unit sphere, geodesic distance, greedy maximal ε-nets,
//! Voronoi assignment and the per-level block partition used by the
//! block-thresholding estimator.

use std::f64::consts::{PI, TAU};

use crate::cubature::CubatureGrid;
use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-12;

/// A direction on S², stored as colatitude/longitude with a Cartesian cache.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    theta: f64,
    phi: f64,
    xyz: [f64; 3],
}

impl SpherePoint {
    /// Builds a point from colatitude `theta ∈ [0, π]` and longitude `phi ∈ [0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !(0.0..=PI).contains(&theta) {
            return Err(Error::invalid("theta", format!("{theta} not in [0, pi]")));
        }
        if !phi.is_finite() || !(0.0..TAU).contains(&phi) {
            return Err(Error::invalid("phi", format!("{phi} not in [0, 2pi)")));
        }
        Ok(Self::from_angles_unchecked(theta, phi))
    }

    /// Builds a point from any finite longitude, wrapping it into `[0, 2π)`.
    pub fn from_angles_wrapped(theta: f64, phi: f64) -> Result<Self> {
        let mut wrapped = phi.rem_euclid(TAU);
        if wrapped >= TAU {
            wrapped = 0.0;
        }
        Self::new(theta, wrapped)
    }

    pub(crate) fn from_angles_unchecked(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self {
            theta,
            phi,
            xyz: [st * cp, st * sp, ct],
        }
    }

    /// Normalizes an arbitrary nonzero 3-vector onto the sphere.
    pub fn from_xyz(v: [f64; 3]) -> Result<Self> {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid("xyz", "vector must be finite and nonzero"));
        }
        let u = [v[0] / norm, v[1] / norm, v[2] / norm];
        let theta = u[2].clamp(-1.0, 1.0).acos();
        let mut phi = u[1].atan2(u[0]);
        if phi < 0.0 {
            phi += TAU;
        }
        if phi >= TAU {
            phi = 0.0;
        }
        let mut p = Self::from_angles_unchecked(theta, phi);
        // keep the caller's direction exactly rather than the round trip through angles
        p.xyz = u;
        Ok(p)
    }

    pub fn north() -> Self {
        Self::from_angles_unchecked(0.0, 0.0)
    }

    pub fn south() -> Self {
        Self {
            theta: PI,
            phi: 0.0,
            xyz: [0.0, 0.0, -1.0],
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn xyz(&self) -> [f64; 3] {
        self.xyz
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        let a = &self.xyz;
        let b = &other.xyz;
        (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).clamp(-1.0, 1.0)
    }

    /// Whether the Cartesian cache has unit norm within 1e-12.
    pub fn is_unit(&self) -> bool {
        let n = self.xyz.iter().map(|c| c * c).sum::<f64>().sqrt();
        (n - 1.0).abs() <= UNIT_TOL
    }
}

/// Great-circle distance in radians, in `[0, π]`.
///
/// Uses `atan2(|a×b|, a·b)`, which stays accurate for nearly coincident and
/// nearly antipodal pairs where `acos` loses precision.
pub fn geodesic_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    let u = a.xyz;
    let v = b.xyz;
    let cross = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let cos = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    sin.atan2(cos)
}

/// A maximal ε-net: separated centers whose ε-balls cover the candidate set.
#[derive(Debug, Clone)]
pub struct EpsNet {
    pub centers: Vec<SpherePoint>,
    pub epsilon: f64,
    /// Positions of the centers within the candidate list they were drawn from.
    pub candidate_indices: Vec<usize>,
}

/// Greedy net in candidate order: a candidate becomes a center when it is
/// farther than `epsilon` from every center chosen so far.
pub fn build_maximal_net(candidates: &[SpherePoint], epsilon: f64) -> Result<EpsNet> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("maximal net needs at least one candidate"));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::invalid("epsilon", format!("{epsilon} must be positive")));
    }
    let indices = greedy_net_indices(candidates, epsilon);
    Ok(EpsNet {
        centers: indices.iter().map(|&i| candidates[i]).collect(),
        epsilon,
        candidate_indices: indices,
    })
}

fn greedy_net_indices(candidates: &[SpherePoint], epsilon: f64) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut chosen_xyz: Vec<[f64; 3]> = Vec::new();
    // d(x, c) > ε  ⇔  ⟨x, c⟩ < cos ε; refine with the exact distance near the boundary.
    let cos_eps = epsilon.min(PI).cos();
    'outer: for (i, p) in candidates.iter().enumerate() {
        let x = p.xyz;
        for (c_idx, c) in chosen_xyz.iter().enumerate() {
            let dot = x[0] * c[0] + x[1] * c[1] + x[2] * c[2];
            if dot > cos_eps + 1e-9 {
                continue 'outer;
            }
            if dot >= cos_eps - 1e-9 && geodesic_distance(p, &candidates[chosen[c_idx]]) <= epsilon {
                continue 'outer;
            }
        }
        chosen.push(i);
        chosen_xyz.push(x);
    }
    chosen
}

/// Nearest-center assignment by geodesic distance; exact ties go to the
/// lowest center index.
pub fn voronoi_assign(centers: &[SpherePoint], points: &[SpherePoint]) -> Result<Vec<usize>> {
    if centers.is_empty() {
        return Err(Error::EmptyInput("voronoi assignment needs at least one center"));
    }
    Ok(points.iter().map(|p| nearest_center(centers, p)).collect())
}

fn nearest_center(centers: &[SpherePoint], p: &SpherePoint) -> usize {
    // Largest dot product is the smallest distance; strict `>` keeps the first on ties.
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = p.dot(c);
        if d > best_dot {
            best_dot = d;
            best = i;
        }
    }
    best
}

/// Grouping of one level's cubature indices into Voronoi blocks.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub level: usize,
    /// `block_of[k]` is the block containing cubature index `k`.
    pub block_of: Vec<usize>,
    /// Cubature indices per block, ascending.
    pub blocks: Vec<Vec<usize>>,
    /// Target block size ℓ_j = ⌊N_j^η⌋.
    pub block_size_target: usize,
    pub centers: Vec<SpherePoint>,
    /// Net radius used to select the block centers.
    pub epsilon: f64,
}

impl BlockPartition {
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn point_count(&self) -> usize {
        self.block_of.len()
    }

    /// Partition in which each index is its own block (ℓ_j = 1).
    pub fn singletons(grid: &CubatureGrid) -> Self {
        let n = grid.count();
        Self {
            level: grid.level,
            block_of: (0..n).collect(),
            blocks: (0..n).map(|k| vec![k]).collect(),
            block_size_target: 1,
            centers: grid.points.clone(),
            epsilon: 0.0,
        }
    }
}

/// ℓ_j = ⌊N^η⌋, never below one.
pub fn block_size_target(count: usize, eta: f64) -> usize {
    // the small bump keeps exact powers (e.g. 100^0.5) from flooring one below
    let raw = (count as f64).powf(eta);
    ((raw * (1.0 + 1e-12)).floor() as usize).max(1)
}

/// Builds the Voronoi block partition of a cubature grid.
///
/// Block centers are a greedy maximal net over the grid's own points; the net
/// radius is bisected until the number of centers is as close as possible to
/// N_j / ℓ_j.
pub fn build_blocks(grid: &CubatureGrid, eta: f64) -> Result<BlockPartition> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("eta", format!("{eta} not in (0, 1)")));
    }
    let n = grid.count();
    let ell = block_size_target(n, eta);
    if ell <= 1 {
        return Ok(BlockPartition::singletons(grid));
    }
    let target = (n as f64 / ell as f64).max(1.0);

    let points = &grid.points;
    let mut lo = 1e-6_f64;
    let mut hi = PI + 0.1;
    let mut best: Option<(f64, Vec<usize>)> = None;
    let score = |count: usize| ((count as f64) / target).ln().abs();
    for _ in 0..48 {
        let mid = 0.5 * (lo + hi);
        let idx = greedy_net_indices(points, mid);
        let count = idx.len();
        let better = match &best {
            None => true,
            Some((_, b)) => score(count) < score(b.len()),
        };
        if better {
            best = Some((mid, idx));
        }
        if (count as f64) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if let Some((_, b)) = &best {
            if score(b.len()) < 0.02 || hi - lo < 1e-9 {
                break;
            }
        }
    }
    let (epsilon, center_idx) = best.expect("bisection ran at least once");
    let centers: Vec<SpherePoint> = center_idx.iter().map(|&i| points[i]).collect();
    let block_of = voronoi_assign(&centers, points)?;
    let mut blocks = vec![Vec::new(); centers.len()];
    for (k, &s) in block_of.iter().enumerate() {
        blocks[s].push(k);
    }
    Ok(BlockPartition {
        level: grid.level,
        block_of,
        blocks,
        block_size_target: ell,
        centers,
        epsilon,
    })
}
