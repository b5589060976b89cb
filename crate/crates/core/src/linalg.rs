//! Dense complex least squares via Householder QR.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Column-major dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, c: usize) -> &[Complex64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn column_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn row(&self, r: usize) -> Vec<Complex64> {
        (0..self.cols).map(|c| self[(r, c)]).collect()
    }

    /// `A·x`.
    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.cols);
        let mut y = vec![Complex64::new(0.0, 0.0); self.rows];
        for (c, &xc) in x.iter().enumerate() {
            if xc == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (yr, &a) in y.iter_mut().zip(self.column(c)) {
                *yr += a * xc;
            }
        }
        y
    }

    /// Sum of squared magnitudes of each column.
    pub fn column_energies(&self) -> Vec<f64> {
        (0..self.cols).map(|c| self.column(c).iter().map(|v| v.norm_sqr()).sum()).collect()
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[c * self.rows + r]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[c * self.rows + r]
    }
}

#[derive(Debug, Clone)]
pub struct LsSolution {
    pub solution: Vec<Complex64>,
    /// Ratio of the largest to the smallest |R_ii| of the triangular factor.
    pub condition_estimate: f64,
}

/// Condition estimate above which an unregularized system is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// Minimizes `‖A·c − b‖² + ridge·‖c‖²` by Householder QR of the stacked
/// system `[A; √ridge·I]`.
pub fn solve_least_squares(a: &CMatrix, b: &[Complex64], ridge: f64) -> Result<LsSolution> {
    let (m, n) = (a.rows(), a.cols());
    if b.len() != m {
        return Err(Error::Shape(format!("matrix has {m} rows but right-hand side has {}", b.len())));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::Domain(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    if m < n && ridge == 0.0 {
        return Err(Error::Shape(format!("underdetermined system: {m} rows < {n} columns")));
    }
    let aug = if ridge > 0.0 { n } else { 0 };
    let rows = m + aug;
    let mut q = CMatrix::zeros(rows, n);
    let s = ridge.sqrt();
    for c in 0..n {
        q.column_mut(c)[..m].copy_from_slice(a.column(c));
        if aug > 0 {
            q[(m + c, c)] = Complex64::new(s, 0.0);
        }
    }
    let mut rhs = b.to_vec();
    rhs.resize(rows, Complex64::new(0.0, 0.0));

    let mut diag = vec![Complex64::new(0.0, 0.0); n];
    let mut v = vec![Complex64::new(0.0, 0.0); rows];
    for k in 0..n {
        let col = &q.column(k)[k..];
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[k] = Complex64::new(0.0, 0.0);
            continue;
        }
        let x0 = col[0];
        let phase = if x0.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { x0 / x0.norm() };
        let alpha = -phase * norm;
        let vk = &mut v[k..];
        vk.copy_from_slice(col);
        vk[0] -= alpha;
        let vnorm = vk.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm == 0.0 {
            diag[k] = alpha;
            continue;
        }
        vk.iter_mut().for_each(|z| *z /= vnorm);
        diag[k] = alpha;
        // Apply H = I − 2·v·vᴴ to the trailing columns and to the right-hand side.
        for c in k..n {
            let colc = &mut q.column_mut(c)[k..];
            let dot: Complex64 = vk.iter().zip(colc.iter()).map(|(vi, ai)| vi.conj() * ai).sum();
            let f = dot * 2.0;
            colc.iter_mut().zip(vk.iter()).for_each(|(ai, vi)| *ai -= vi * f);
        }
        let dot: Complex64 = vk.iter().zip(&rhs[k..]).map(|(vi, bi)| vi.conj() * bi).sum();
        let f = dot * 2.0;
        rhs[k..].iter_mut().zip(vk.iter()).for_each(|(bi, vi)| *bi -= vi * f);
    }

    let mags: Vec<f64> = diag.iter().map(|d| d.norm()).collect();
    let max = mags.iter().cloned().fold(0.0, f64::max);
    let min = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition_estimate = if n == 0 {
        1.0
    } else if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    };
    if n > 0 && max == 0.0 {
        // A ≡ 0 with no regularization: the minimum-norm answer is zero.
        return Ok(LsSolution { solution: vec![Complex64::new(0.0, 0.0); n], condition_estimate: f64::INFINITY });
    }
    if ridge == 0.0 && condition_estimate > MAX_CONDITION {
        return Err(Error::IllConditioned { condition: condition_estimate });
    }

    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for k in (0..n).rev() {
        let mut acc = rhs[k];
        for c in k + 1..n {
            // After the reflections the upper triangle holds R; the diagonal
            // entry is stored separately.
            acc -= q[(k, c)] * x[c];
        }
        x[k] = acc / diag[k];
    }
    Ok(LsSolution { solution: x, condition_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn solves_square_system() {
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 0)] = c(2.0, 0.0);
        a[(0, 1)] = c(0.0, 1.0);
        a[(1, 0)] = c(1.0, -1.0);
        a[(1, 1)] = c(3.0, 0.0);
        let x = vec![c(1.0, 2.0), c(-0.5, 0.25)];
        let b = a.mul_vec(&x);
        let got = solve_least_squares(&a, &b, 0.0).unwrap().solution;
        for (g, e) in got.iter().zip(&x) {
            assert!((g - e).norm() < 1e-13);
        }
    }

    #[test]
    fn rank_deficient_without_ridge_is_rejected() {
        let mut a = CMatrix::zeros(4, 2);
        for r in 0..4 {
            a[(r, 0)] = c(r as f64 + 1.0, 0.0);
            a[(r, 1)] = c(2.0 * (r as f64 + 1.0), 0.0);
        }
        let b = vec![c(1.0, 0.0); 4];
        match solve_least_squares(&a, &b, 0.0) {
            Err(Error::IllConditioned { condition }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected ill-conditioning, got {other:?}"),
        }
        assert!(solve_least_squares(&a, &b, 1e-6).is_ok());
    }

    #[test]
    fn ridge_shrinks_scalar_problem() {
        // min |a·x − b|² + λ|x|² over a single column: x = aᴴb / (aᴴa + λ).
        let mut a = CMatrix::zeros(3, 1);
        let col = [c(1.0, 1.0), c(0.0, 2.0), c(-1.0, 0.5)];
        a.column_mut(0).copy_from_slice(&col);
        let b = [c(0.3, -0.1), c(1.0, 0.0), c(0.0, 0.7)];
        let lambda = 0.8;
        let num: Complex64 = col.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        let den: f64 = col.iter().map(|x| x.norm_sqr()).sum::<f64>() + lambda;
        let got = solve_least_squares(&a, &b, lambda).unwrap().solution[0];
        assert!((got - num / den).norm() < 1e-14);
    }

    #[test]
    fn shape_errors() {
        let a = CMatrix::zeros(3, 2);
        assert!(matches!(solve_least_squares(&a, &[c(0.0, 0.0); 2], 0.0), Err(Error::Shape(_))));
    }
}
