//! Reference implementations shared by the oracle tests and the acceptance
//! target. They are written from the model definitions, not from the
//! library code paths they check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use fd_lab::channel::FrequencyResponse;
use fd_lab::digital_sic::VolterraBasis;

/// Unit-power circular complex Gaussian samples.
pub fn gaussian(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect()
}

/// Row `r` is sample `n = max(memory − 1 − pre, 0) + r`; entry `(k, m)` is
/// `u·|u|^(k−1)` with `u = x[n − m + pre]`.
pub fn oracle_features(x: &[Complex64], basis: &VolterraBasis) -> (DMatrix<Complex64>, usize) {
    let first = (basis.memory - 1).saturating_sub(basis.pre_cursor);
    let last = x.len() - 1 - basis.pre_cursor;
    let rows = last - first + 1;
    let cols = basis.orders.len() * basis.memory;
    let f = DMatrix::from_fn(rows, cols, |r, col| {
        let (k, m) = (basis.orders[col / basis.memory], col % basis.memory);
        let u = x[first + r + basis.pre_cursor - m];
        u * u.norm().powi(k as i32 - 1)
    });
    (f, first)
}

/// Solves `(FᴴF + ridge·I)·c = Fᴴy` by LU.
pub fn normal_equations(f: &DMatrix<Complex64>, y: &[Complex64], ridge: f64) -> DVector<Complex64> {
    let fh = f.adjoint();
    let gram = &fh * f + DMatrix::<Complex64>::identity(f.ncols(), f.ncols()) * Complex64::new(ridge, 0.0);
    let rhs = &fh * DVector::from_column_slice(y);
    gram.lu().solve(&rhs).expect("well-conditioned Gram matrix")
}

pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Every ATT/PS pair evaluated with `|g| = 10^(−(6 + 11.5 + 0.25·att)/20)`,
/// `∠g = ps·360/256°`; first minimum in (att, ps) order wins. Returns the
/// code and its in-band SIC in dB.
pub fn brute_force_canceller(h: &FrequencyResponse, band_hz: f64) -> (u8, u8, f64) {
    let inband: Vec<Complex64> =
        h.freqs().iter().zip(h.gains()).filter(|(f, _)| f.abs() <= band_hz / 2.0).map(|(_, g)| *g).collect();
    let before = inband.iter().map(|g| g.norm_sqr()).sum::<f64>() / inband.len() as f64;
    let mut best = (f64::INFINITY, 0u8, 0u8);
    for att in 0..=127u8 {
        let mag = 10f64.powf(-(6.0 + 11.5 + 0.25 * att as f64) / 20.0);
        for ps in 0..=255u8 {
            let g = Complex64::from_polar(mag, (ps as f64 * 360.0 / 256.0).to_radians());
            let after = inband.iter().map(|h| (h - g).norm_sqr()).sum::<f64>() / inband.len() as f64;
            if after < best.0 {
                best = (after, att, ps);
            }
        }
    }
    (best.1, best.2, 10.0 * (before / best.0).log10())
}
