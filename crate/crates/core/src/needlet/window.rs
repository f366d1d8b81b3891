//! The needlet window b(·): smooth, nonnegative, supported on [1/B, B], with
//! squared dilates summing to one.
//!
//! Built from the mollifier `exp(-1/(1-u²))`: its normalized primitive Φ is a
//! smooth step on [-1, 1], rescaled to a step φ that is 1 on [0, 1/B] and 0
//! on [1, ∞). Then `b²(ξ) = φ(ξ/B) − φ(ξ)` and the dyadic sum telescopes.
//! Φ is tabulated on a uniform mesh and interpolated with cubic Hermite
//! segments using the closed-form derivative.

use crate::cubature::gauss_legendre;
use crate::error::{Error, Result};

/// Number of mesh intervals for the tabulated step.
pub const WINDOW_TABLE_INTERVALS: usize = 4096;

#[derive(Debug, Clone)]
pub struct NeedletWindow {
    bandwidth: f64,
    /// Φ at the mesh knots u_i = -1 + 2i/WINDOW_TABLE_INTERVALS.
    step: Vec<f64>,
    /// Φ' at the same knots.
    slope: Vec<f64>,
}

fn mollifier(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp()
    }
}

impl NeedletWindow {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Normalized primitive Φ(u) of the mollifier, 0 at u = -1 and 1 at u = 1.
    fn primitive(&self, u: f64) -> f64 {
        if u <= -1.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        let h = 2.0 / WINDOW_TABLE_INTERVALS as f64;
        let pos = (u + 1.0) / h;
        let i = (pos.floor() as usize).min(WINDOW_TABLE_INTERVALS - 1);
        let s = pos - i as f64;
        let (y0, y1) = (self.step[i], self.step[i + 1]);
        let (d0, d1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        (h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1).clamp(0.0, 1.0)
    }

    /// Smooth step φ: 1 on [0, 1/B], 0 on [1, ∞), even in t.
    pub fn smooth_step(&self, t: f64) -> f64 {
        let t = t.abs();
        let b = self.bandwidth;
        if t <= 1.0 / b {
            1.0
        } else if t >= 1.0 {
            0.0
        } else {
            self.primitive(1.0 - 2.0 * b / (b - 1.0) * (t - 1.0 / b))
        }
    }

    /// b²(ξ).
    pub fn b_squared(&self, xi: f64) -> f64 {
        (self.smooth_step(xi / self.bandwidth) - self.smooth_step(xi)).max(0.0)
    }

    /// b(ξ).
    pub fn b(&self, xi: f64) -> f64 {
        self.b_squared(xi).sqrt()
    }

    /// |Σ_{j≥0} b²(ξ/B^j) − 1| for ξ ≥ 1.
    pub fn unitary_residual(&self, xi: f64) -> f64 {
        let mut total = 0.0;
        let mut scale = 1.0;
        loop {
            let arg = xi / scale;
            if arg < 1.0 / self.bandwidth {
                break;
            }
            total += self.b_squared(arg);
            scale *= self.bandwidth;
        }
        (total - 1.0).abs()
    }

    /// Largest unitary residual over a log-spaced sample of ξ in [1, ξ_max].
    pub fn max_unitary_residual(&self, xi_max: f64, samples: usize) -> f64 {
        let samples = samples.max(2);
        let log_top = xi_max.max(1.0).ln();
        (0..samples)
            .map(|i| (log_top * i as f64 / (samples - 1) as f64).exp())
            .map(|xi| self.unitary_residual(xi))
            .fold(0.0, f64::max)
    }
}

/// Tabulates the window for bandwidth `B > 1`.
pub fn build_window(bandwidth: f64) -> Result<NeedletWindow> {
    if !(bandwidth.is_finite() && bandwidth > 1.0) {
        return Err(Error::invalid("B", format!("{bandwidth} must exceed 1")));
    }
    let n = WINDOW_TABLE_INTERVALS;
    let h = 2.0 / n as f64;
    let (gx, gw) = gauss_legendre(8);
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    let mut acc = 0.0;
    for i in 0..n {
        let a = -1.0 + i as f64 * h;
        let mid = a + 0.5 * h;
        let piece: f64 = gx
            .iter()
            .zip(&gw)
            .map(|(x, w)| w * mollifier(mid + 0.5 * h * x))
            .sum::<f64>()
            * 0.5
            * h;
        acc += piece;
        cumulative.push(acc);
    }
    let total = acc;
    let step: Vec<f64> = cumulative.iter().map(|c| c / total).collect();
    let slope: Vec<f64> = (0..=n).map(|i| mollifier(-1.0 + i as f64 * h) / total).collect();
    let window = NeedletWindow {
        bandwidth,
        step,
        slope,
    };
    let residual = window.max_unitary_residual(bandwidth.powi(12), 2000);
    debug_assert!(residual < 1e-12, "unitary residual {residual}");
    Ok(window)
}
