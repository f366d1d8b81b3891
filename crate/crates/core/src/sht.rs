//! Separable spherical harmonic transforms on product cubature grids.
//!
//! Both directions split into an FFT along each ring and a Legendre sum per
//! order m. Work is parallel over rings or over m, and every floating-point
//! reduction runs in a fixed sequential order, so results do not depend on
//! the thread count.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cubature::CubatureGrid;
use crate::error::{Error, Result};
use crate::harmonic::{HarmonicCoeffs, LegendreTable};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Quadrature analysis `a_lm = Σ_k λ_k f(ξ_k) conj(Y_lm(ξ_k))` for `l ≤ lmax`.
pub fn forward(grid: &CubatureGrid, values: &[f64], lmax: usize, table: &LegendreTable) -> Result<HarmonicCoeffs> {
    if values.len() != grid.count() {
        return Err(Error::LengthMismatch {
            what: "transform samples",
            expected: grid.count(),
            found: values.len(),
        });
    }
    assert!(table.lmax() >= lmax, "legendre table too small");
    let n_phi = grid.n_phi();
    let dphi = std::f64::consts::TAU / n_phi as f64;
    let fft = grid.fft().forward.clone();

    // F_m(i) = Δφ Σ_s f(θ_i, φ_s) e^{-imφ_s}, aliased onto m mod n_φ
    let ring_spectra: Vec<Vec<Complex64>> = values
        .par_chunks(n_phi)
        .map(|row| {
            let mut buf: Vec<Complex64> = row.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft.process(&mut buf);
            (0..=lmax).map(|m| buf[m % n_phi] * dphi).collect()
        })
        .collect();

    let rings = grid.rings();
    let columns: Vec<Vec<Complex64>> = (0..=lmax)
        .into_par_iter()
        .map(|m| {
            let mut acc = vec![ZERO; lmax + 1 - m];
            for (i, ring) in rings.iter().enumerate() {
                let fm = ring_spectra[i][m] * ring.weight;
                if fm == ZERO {
                    continue;
                }
                table.column(m, lmax, ring.cos_theta, |l, p| acc[l - m] += fm * p);
            }
            acc
        })
        .collect();
    Ok(HarmonicCoeffs::from_columns(lmax, columns))
}

/// Evaluates the real field `Σ a_lm Y_lm` at every grid point.
pub fn inverse(grid: &CubatureGrid, coeffs: &HarmonicCoeffs, table: &LegendreTable) -> Vec<f64> {
    let lmax = coeffs.lmax();
    assert!(table.lmax() >= lmax, "legendre table too small");
    let rings = grid.rings();
    let n_phi = grid.n_phi();

    // G_m(i) = Σ_l a_lm P̄_l^m(cos θ_i)
    let per_m: Vec<Vec<Complex64>> = (0..=lmax)
        .into_par_iter()
        .map(|m| {
            let col = coeffs.column(m);
            if col.iter().all(|c| *c == ZERO) {
                return vec![ZERO; rings.len()];
            }
            rings
                .iter()
                .map(|ring| {
                    let mut g = ZERO;
                    table.column(m, lmax, ring.cos_theta, |l, p| g += col[l - m] * p);
                    g
                })
                .collect()
        })
        .collect();

    let fft = grid.fft().inverse.clone();
    let rows: Vec<Vec<f64>> = (0..rings.len())
        .into_par_iter()
        .map(|i| {
            let mut buf = vec![ZERO; n_phi];
            for (m, gm) in per_m.iter().enumerate() {
                let g = gm[i];
                buf[m % n_phi] += g;
                if m > 0 {
                    buf[(n_phi - m % n_phi) % n_phi] += g.conj();
                }
            }
            fft.process(&mut buf);
            buf.into_iter().map(|c| c.re).collect()
        })
        .collect();
    rows.into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubature::build_cubature;
    use crate::harmonic::{sph_harm, HarmonicIndex};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coeffs(lmax: usize, seed: u64) -> HarmonicCoeffs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = HarmonicCoeffs::zeros(lmax);
        for m in 0..=lmax {
            for l in m..=lmax {
                let im = if m == 0 { 0.0 } else { rng.random_range(-1.0..1.0) };
                c.set(l, m, Complex64::new(rng.random_range(-1.0..1.0), im));
            }
        }
        c
    }

    #[test]
    fn inverse_matches_pointwise_harmonics() {
        let grid = build_cubature(2.0, 2).unwrap(); // exact to degree 14
        let table = LegendreTable::new(7);
        let coeffs = random_coeffs(7, 1);
        let values = inverse(&grid, &coeffs, &table);
        for (k, x) in grid.points.iter().enumerate().step_by(7) {
            let mut direct = 0.0;
            for l in 0..=7usize {
                for m in -(l as i64)..=l as i64 {
                    let a = if m >= 0 {
                        coeffs.get(l, m as usize)
                    } else {
                        let s = if m % 2 == 0 { 1.0 } else { -1.0 };
                        coeffs.get(l, (-m) as usize).conj() * s
                    };
                    direct += (a * sph_harm(HarmonicIndex::new(l, m).unwrap(), x)).re;
                }
            }
            assert!((values[k] - direct).abs() < 1e-11, "k={k}");
            assert!((coeffs.eval(&table, x) - direct).abs() < 1e-11);
        }
    }

    #[test]
    fn forward_inverts_inverse_when_exact() {
        let grid = build_cubature(2.0, 3).unwrap(); // exact to degree 30
        let table = LegendreTable::new(15);
        let coeffs = random_coeffs(15, 2);
        let values = inverse(&grid, &coeffs, &table);
        let back = forward(&grid, &values, 15, &table).unwrap();
        for m in 0..=15 {
            for l in m..=15 {
                assert!((back.get(l, m) - coeffs.get(l, m)).norm() < 1e-12);
            }
        }
    }
}
