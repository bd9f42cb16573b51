use nalgebra::DMatrix;

use super::{DimMajor, TrainedGpr};
use crate::error::{Result, XvaError};

/// Closed-form expectation of a fitted posterior mean under a Gaussian
/// shift: `E[f(m + Z)]` with `Z ~ N(0, C)`.
///
/// With `A = C + sigma_l^2 I = L L^T`, each kernel term integrates to
/// `sigma_f^2 sigma_l^d / sqrt(det A) * exp(-|L^{-1}(z_q - m)|^2 / 2)`.
/// The training points are transformed by `L^{-1}` once, so each
/// expectation costs one triangular solve plus one kernel sum.
#[derive(Debug, Clone)]
pub struct GaussianIntegrator<'a> {
    model: &'a TrainedGpr,
    chol: DMatrix<f64>,
    transformed: DimMajor,
    scaled_weights: Vec<f64>,
}

impl<'a> GaussianIntegrator<'a> {
    pub fn new(model: &'a TrainedGpr, covariance: &DMatrix<f64>) -> Result<Self> {
        let d = model.dim();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(XvaError::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        let l2 = model.params.sigma_l * model.params.sigma_l;
        let a = covariance + DMatrix::identity(d, d) * l2;
        let chol = a
            .cholesky()
            .ok_or_else(|| XvaError::NotPositiveDefinite(" (integration covariance)".into()))?
            .unpack();
        let log_det_half: f64 = (0..d).map(|i| chol[(i, i)].ln()).sum();
        let log_pref = 0.5 * d as f64 * l2.ln() - log_det_half;
        let pref = log_pref.exp();
        let scaled_weights = model.scaled_weights.iter().map(|w| w * pref).collect();

        let n = model.inputs.len();
        let mut rows = Vec::with_capacity(n * d);
        let mut buf = vec![0.0; d];
        for z in model.inputs.rows() {
            forward_solve(&chol, z, &mut buf);
            rows.extend_from_slice(&buf);
        }
        let transformed = DimMajor::from_rows(rows.chunks_exact(d.max(1)), d);
        Ok(Self {
            model,
            chol,
            transformed,
            scaled_weights,
        })
    }

    /// `E[f(mean + Z)]`.
    pub fn expectation(&self, mean: &[f64]) -> f64 {
        let mut lm = vec![0.0; mean.len()];
        let mut buf = vec![0.0; self.transformed.len()];
        self.expectation_with(mean, &mut lm, &mut buf)
    }

    /// Allocation-free variant: `lm` holds `d` slots, `buf` one per
    /// training point.
    pub fn expectation_with(&self, mean: &[f64], lm: &mut [f64], buf: &mut [f64]) -> f64 {
        if self.model.constant {
            return self.model.mean;
        }
        forward_solve(&self.chol, mean, lm);
        self.model.mean + self.transformed.gauss_sum(lm, &self.scaled_weights, 0.5, buf)
    }
}

fn forward_solve(l: &DMatrix<f64>, b: &[f64], out: &mut [f64]) {
    let d = b.len();
    for i in 0..d {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * out[j];
        }
        out[i] = s / l[(i, i)];
    }
}
