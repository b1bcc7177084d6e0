//! Gaussian-process regression with a squared-exponential kernel and the
//! expected-improvement acquisition.

use statrs::function::erf::erfc;

use crate::error::{DseError, Result};

const BASE_JITTER: f64 = 1e-8;
const JITTER_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    /// s²
    pub signal_var: f64,
    /// ℓ
    pub length_scale: f64,
    /// σ_n²
    pub noise_var: f64,
}

/// Log-spaced grid for hyperparameter selection. Variances are multiples of
/// var(y).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperGrid {
    pub length_scales: Vec<f64>,
    pub signal_scales: Vec<f64>,
    pub noise_scales: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            length_scales: vec![0.1, 0.3, 1.0, 3.0, 10.0],
            signal_scales: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            noise_scales: vec![1e-6, 1e-4, 1e-2, 1e-1, 1.0],
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// In-place lower Cholesky factor of a row-major n×n matrix. Returns false
/// when a pivot is not positive.
pub(crate) fn cholesky(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for k in j + 1..n {
            a[j * n + k] = 0.0;
        }
    }
    true
}

/// Solves L x = b for lower-triangular L.
pub(crate) fn forward_sub(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        let row = &l[i * n..i * n + i];
        for (k, lik) in row.iter().enumerate() {
            s -= lik * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves Lᵀ x = b for lower-triangular L.
pub(crate) fn backward_sub(l: &[f64], n: usize, b: &mut [f64]) {
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// A fitted GP posterior.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    prior_mean: f64,
    hyper: GpHyper,
    chol: Vec<f64>,
    alpha: Vec<f64>,
    jitter: f64,
    log_marginal_likelihood: f64,
}

impl GaussianProcess {
    /// Fits with fixed hyperparameters. The prior mean is the mean of `y`.
    pub fn fit(x: Vec<Vec<f64>>, y: &[f64], hyper: GpHyper) -> Result<Self> {
        let mean = if y.is_empty() {
            0.0
        } else {
            y.iter().sum::<f64>() / y.len() as f64
        };
        Self::fit_with_mean(x, y, hyper, mean)
    }

    pub fn fit_with_mean(
        x: Vec<Vec<f64>>,
        y: &[f64],
        hyper: GpHyper,
        prior_mean: f64,
    ) -> Result<Self> {
        assert_eq!(x.len(), y.len(), "inputs and targets differ in length");
        let n = x.len();
        let base = Self::kernel_matrix(&x, hyper);
        let mut jitter = BASE_JITTER;
        let mut chol = base.clone();
        let mut attempt = 0;
        loop {
            for i in 0..n {
                chol[i * n + i] += jitter;
            }
            if cholesky(&mut chol, n) {
                break;
            }
            attempt += 1;
            if attempt > JITTER_RETRIES {
                return Err(DseError::SingularKernel { jitter });
            }
            jitter *= 10.0;
            chol.copy_from_slice(&base);
        }
        let resid: Vec<f64> = y.iter().map(|v| v - prior_mean).collect();
        let mut alpha = resid.clone();
        forward_sub(&chol, n, &mut alpha);
        let data_fit: f64 = alpha.iter().map(|a| a * a).sum();
        backward_sub(&chol, n, &mut alpha);
        let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum::<f64>() * 2.0;
        let lml =
            -0.5 * data_fit - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(GaussianProcess {
            x,
            prior_mean,
            hyper,
            chol,
            alpha,
            jitter,
            log_marginal_likelihood: lml,
        })
    }

    /// Selects hyperparameters on `grid` by log marginal likelihood.
    /// `noise_floor` bounds σ_n² from below.
    pub fn fit_grid(
        x: Vec<Vec<f64>>,
        y: &[f64],
        grid: &HyperGrid,
        noise_floor: f64,
    ) -> Result<Self> {
        let hyper = Self::select_hyper(&x, y, grid, noise_floor)?;
        Self::fit(x, y, hyper)
    }

    pub fn select_hyper(
        x: &[Vec<f64>],
        y: &[f64],
        grid: &HyperGrid,
        noise_floor: f64,
    ) -> Result<GpHyper> {
        let n = y.len();
        let mean = if n == 0 {
            0.0
        } else {
            y.iter().sum::<f64>() / n as f64
        };
        let var = if n == 0 {
            0.0
        } else {
            y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
        };
        let scale = if var > 0.0 { var } else { 1.0 };
        let mut best: Option<(f64, GpHyper)> = None;
        let mut last_err = None;
        for &ls in &grid.length_scales {
            for &ss in &grid.signal_scales {
                for &ns in &grid.noise_scales {
                    let hyper = GpHyper {
                        signal_var: ss * scale,
                        length_scale: ls,
                        noise_var: (ns * scale).max(noise_floor),
                    };
                    match Self::fit_with_mean(x.to_vec(), y, hyper, mean) {
                        Ok(gp) => {
                            let lml = gp.log_marginal_likelihood;
                            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                                best = Some((lml, hyper));
                            }
                        }
                        Err(e) => last_err = Some(e),
                    }
                }
            }
        }
        match (best, last_err) {
            (Some((_, h)), _) => Ok(h),
            (None, Some(e)) => Err(e),
            (None, None) => Err(DseError::invalid("hyper_grid", "grid is empty")),
        }
    }

    fn kernel_matrix(x: &[Vec<f64>], h: GpHyper) -> Vec<f64> {
        let n = x.len();
        let mut k = vec![0.0; n * n];
        let inv = 1.0 / (2.0 * h.length_scale * h.length_scale);
        for i in 0..n {
            k[i * n + i] = h.signal_var + h.noise_var;
            for j in 0..i {
                let v = h.signal_var * (-sq_dist(&x[i], &x[j]) * inv).exp();
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    pub fn hyper(&self) -> GpHyper {
        self.hyper
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.x
    }

    fn cross(&self, x: &[f64]) -> Vec<f64> {
        let inv = 1.0 / (2.0 * self.hyper.length_scale * self.hyper.length_scale);
        self.x
            .iter()
            .map(|xi| self.hyper.signal_var * (-sq_dist(xi, x) * inv).exp())
            .collect()
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        let k = self.cross(x);
        self.prior_mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Posterior mean and latent-function variance at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let mut k = self.cross(x);
        let mean = self.prior_mean + k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>();
        forward_sub(&self.chol, n, &mut k);
        let reduction: f64 = k.iter().map(|v| v * v).sum();
        let var = (self.hyper.signal_var - reduction).max(0.0);
        (mean, var)
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement for maximization with exploration margin `xi`.
pub fn expected_improvement(mean: f64, sigma: f64, best_so_far: f64, xi: f64) -> f64 {
    let gain = mean - best_so_far - xi;
    if sigma <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}
