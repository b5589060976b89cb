//! Digital self-interference cancellation with a diagonal Volterra (memory
//! polynomial) model estimated by regularized least squares.
//!
//! For odd orders `k` and taps `m = 0..memory`, feature column `(k, m)` at the
//! row for sample `n` is `u·|u|^(k−1)` with `u = x[n − m + pre_cursor]`.
//! Columns are ordered order-major: `col = order_index·memory + m`.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::canceller::SIC_CAP_DB;
use crate::error::{domain, Error, Result};
use crate::linalg::{self, CMatrix};
use crate::signal::{mean_square, ComplexBasebandSignal};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolterraBasis {
    pub orders: Vec<u32>,
    pub memory: usize,
    pub pre_cursor: usize,
}

impl Default for VolterraBasis {
    fn default() -> Self {
        Self { orders: vec![1, 3, 5], memory: 20, pre_cursor: 4 }
    }
}

impl VolterraBasis {
    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() {
            return Err(domain("Volterra basis needs at least one order"));
        }
        if let Some(k) = self.orders.iter().find(|&&k| k == 0 || k % 2 == 0) {
            return Err(domain(format!("Volterra orders must be odd and >= 1, got {k}")));
        }
        if self.orders.windows(2).any(|w| w[1] <= w[0]) {
            return Err(domain("Volterra orders must be strictly increasing"));
        }
        if self.memory == 0 {
            return Err(domain("Volterra memory must be >= 1"));
        }
        Ok(())
    }

    pub fn n_coeffs(&self) -> usize {
        self.orders.len() * self.memory
    }

    /// Column index of `(order, tap)`.
    pub fn column(&self, order: u32, tap: usize) -> Option<usize> {
        let i = self.orders.iter().position(|&k| k == order)?;
        (tap < self.memory).then_some(i * self.memory + tap)
    }
}

/// Feature rows aligned to receive samples `first_sample..first_sample+rows`.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub basis: VolterraBasis,
    pub matrix: CMatrix,
    pub first_sample: usize,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn sample_range(&self) -> Range<usize> {
        self.first_sample..self.first_sample + self.rows()
    }

    /// Keeps only rows whose sample index falls in `range`.
    pub fn restrict(&self, range: Range<usize>) -> FeatureMatrix {
        let lo = range.start.max(self.first_sample);
        let hi = range.end.min(self.first_sample + self.rows()).max(lo);
        let mut m = CMatrix::zeros(hi - lo, self.cols());
        for c in 0..self.cols() {
            let src = &self.matrix.column(c)[lo - self.first_sample..hi - self.first_sample];
            m.column_mut(c).copy_from_slice(src);
        }
        FeatureMatrix { basis: self.basis.clone(), matrix: m, first_sample: lo }
    }
}

fn odd_power(u: Complex64, order: u32) -> Complex64 {
    u * u.norm_sqr().powi(((order - 1) / 2) as i32)
}

/// Rows for receive samples `n` in `0..rx_len` where every tap
/// `tx[n − m + pre − lag]` exists; `tx` is multiplied by `scale` first.
fn shifted_features(
    tx: &[Complex64],
    scale: f64,
    basis: &VolterraBasis,
    lag: i64,
    rx_len: usize,
) -> Result<FeatureMatrix> {
    basis.validate()?;
    let pre = basis.pre_cursor as i64;
    let mem = basis.memory as i64;
    let first = (mem - 1 - pre + lag).max(0);
    let last = (tx.len() as i64 - 1 - pre + lag).min(rx_len as i64 - 1);
    if last < first {
        return Err(domain(format!(
            "signal of {} samples too short for memory {} at lag {lag}",
            tx.len(),
            basis.memory
        )));
    }
    let rows = (last - first + 1) as usize;
    let mut m = CMatrix::zeros(rows, basis.n_coeffs());
    for (oi, &order) in basis.orders.iter().enumerate() {
        for tap in 0..basis.memory {
            let col = m.column_mut(oi * basis.memory + tap);
            let offset = -(tap as i64) + pre - lag;
            for (r, v) in col.iter_mut().enumerate() {
                let idx = (first + r as i64 + offset) as usize;
                *v = odd_power(tx[idx] * scale, order);
            }
        }
    }
    Ok(FeatureMatrix { basis: basis.clone(), matrix: m, first_sample: first as usize })
}

/// Feature matrix of `tx` against itself (no lag, unit scale).
pub fn build_volterra_features(tx: &ComplexBasebandSignal, basis: &VolterraBasis) -> Result<FeatureMatrix> {
    basis.validate()?;
    if tx.len() <= basis.memory {
        return Err(domain(format!("signal of {} samples not longer than memory {}", tx.len(), basis.memory)));
    }
    shifted_features(&tx.samples, 1.0, basis, 0, tx.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolterraModel {
    pub basis: VolterraBasis,
    pub coeffs: Vec<Complex64>,
    pub ridge: f64,
    /// Factor applied to TX samples before feature construction.
    #[serde(default = "unit")]
    pub input_scale: f64,
    /// Receive-side delay of the TX reference in samples.
    #[serde(default)]
    pub lag: i64,
}

fn unit() -> f64 {
    1.0
}

impl VolterraModel {
    pub fn zero(basis: VolterraBasis) -> Self {
        let n = basis.n_coeffs();
        Self { basis, coeffs: vec![Complex64::new(0.0, 0.0); n], ridge: 0.0, input_scale: 1.0, lag: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        self.basis.validate()?;
        if self.coeffs.len() != self.basis.n_coeffs() {
            return Err(Error::Shape(format!(
                "{} coefficients for a basis of {}",
                self.coeffs.len(),
                self.basis.n_coeffs()
            )));
        }
        if self.coeffs.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(domain("model has non-finite coefficients"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    /// Features of `tx` positioned against a receive stream of `rx_len`.
    pub fn features(&self, tx: &[Complex64], rx_len: usize) -> Result<FeatureMatrix> {
        shifted_features(tx, self.input_scale, &self.basis, self.lag, rx_len)
    }
}

/// Minimizes `‖F·c − rx‖² + ridge·‖c‖²`.
pub fn fit_volterra(features: &FeatureMatrix, rx: &[Complex64], ridge: f64) -> Result<VolterraModel> {
    if features.rows() != rx.len() {
        return Err(Error::Shape(format!("{} feature rows vs {} receive samples", features.rows(), rx.len())));
    }
    if rx.len() < features.cols() {
        return Err(Error::Shape(format!("{} rows cannot determine {} coefficients", rx.len(), features.cols())));
    }
    let sol = linalg::solve_least_squares(&features.matrix, rx, ridge)?;
    let model = VolterraModel { basis: features.basis.clone(), coeffs: sol.solution, ridge, input_scale: 1.0, lag: 0 };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct DigitalSicOutput {
    pub residual: ComplexBasebandSignal,
    /// Samples where the model was applied; outside it `residual == rx`.
    pub valid: Range<usize>,
}

/// `rx − F(tx)·c` on the rows with full tap support.
pub fn apply_digital_sic(
    model: &VolterraModel,
    tx: &ComplexBasebandSignal,
    rx: &ComplexBasebandSignal,
) -> Result<DigitalSicOutput> {
    if tx.len() != rx.len() {
        return Err(Error::Shape(format!("tx has {} samples, rx has {}", tx.len(), rx.len())));
    }
    model.validate()?;
    let f = model.features(&tx.samples, rx.len())?;
    let pred = f.matrix.mul_vec(&model.coeffs);
    let mut residual = rx.clone();
    for (r, p) in residual.samples[f.sample_range()].iter_mut().zip(pred) {
        *r -= p;
    }
    Ok(DigitalSicOutput { residual, valid: f.sample_range() })
}

/// `10·log10(P_before / P_after)`, capped at [`SIC_CAP_DB`].
pub fn digital_sic_db(before: &[Complex64], after: &[Complex64]) -> Result<f64> {
    if before.len() != after.len() {
        return Err(Error::Shape(format!("{} vs {} samples", before.len(), after.len())));
    }
    if before.is_empty() {
        return Err(domain("digital SIC of empty signals"));
    }
    let pa = mean_square(after);
    if pa == 0.0 {
        return Ok(SIC_CAP_DB);
    }
    Ok((10.0 * (mean_square(before) / pa).log10()).min(SIC_CAP_DB))
}

/// Lag `l` in `-max_lag..=max_lag` maximizing `|Σ rx[n]·conj(tx[n − l])|`;
/// ties go to the smallest magnitude lag, then the negative one.
pub fn estimate_lag(tx: &[Complex64], rx: &[Complex64], max_lag: usize) -> i64 {
    let n = tx.len().min(rx.len()) as i64;
    let mut best = (f64::NEG_INFINITY, 0i64);
    let mut lags: Vec<i64> = (-(max_lag as i64)..=max_lag as i64).collect();
    lags.sort_by_key(|l| (l.abs(), *l));
    for l in lags {
        let lo = l.max(0);
        let hi = (n + l).min(n);
        let acc: Complex64 = (lo..hi).map(|i| rx[i as usize] * tx[(i - l) as usize].conj()).sum();
        if acc.norm() > best.0 {
            best = (acc.norm(), l);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalSicConfig {
    pub basis: VolterraBasis,
    /// Ridge as a multiple of the mean feature-column energy.
    pub ridge_factor: f64,
    pub train_len: usize,
    pub eval_len: usize,
    pub max_lag: usize,
}

impl Default for DigitalSicConfig {
    fn default() -> Self {
        Self { basis: VolterraBasis::default(), ridge_factor: 1e-6, train_len: 10_000, eval_len: 10_000, max_lag: 32 }
    }
}

/// Estimates alignment and kernels from the first `cfg.train_len` samples.
/// TX is normalized to unit RMS so the ridge weights all orders evenly.
pub fn train_digital_sic(
    tx: &ComplexBasebandSignal,
    rx: &ComplexBasebandSignal,
    cfg: &DigitalSicConfig,
) -> Result<VolterraModel> {
    if tx.len() != rx.len() {
        return Err(Error::Shape(format!("tx has {} samples, rx has {}", tx.len(), rx.len())));
    }
    if cfg.train_len > rx.len() || cfg.train_len == 0 {
        return Err(domain(format!("training window {} does not fit {} samples", cfg.train_len, rx.len())));
    }
    let train = 0..cfg.train_len;
    let rms = mean_square(&tx.samples[train.clone()]).sqrt();
    if rms == 0.0 {
        return Err(domain("cannot train on an all-zero TX reference"));
    }
    let lag = estimate_lag(&tx.samples[train.clone()], &rx.samples[train.clone()], cfg.max_lag);
    let mut model = VolterraModel::zero(cfg.basis.clone());
    model.input_scale = 1.0 / rms;
    model.lag = lag;
    let f = model.features(&tx.samples, rx.len())?.restrict(train);
    let energies = f.matrix.column_energies();
    let ridge = cfg.ridge_factor * energies.iter().sum::<f64>() / energies.len() as f64;
    let target = &rx.samples[f.sample_range()];
    let fitted = fit_volterra(&f, target, ridge)?;
    model.coeffs = fitted.coeffs;
    model.ridge = ridge;
    Ok(model)
}
