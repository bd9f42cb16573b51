//! Gaussian process regression with an isotropic squared-exponential kernel.
//!
//! `k(z, z') = sigma_f^2 * exp(-|z - z'|^2 / (2 sigma_l^2))`, zero prior mean
//! after centering the targets. Besides fitting and prediction, a fitted
//! model can be integrated in closed form against any Gaussian density
//! (see [`GaussianIntegrator`]), which is what the exact-integration pricer
//! uses for continuation values.

mod integrate;
mod kernel;

pub use integrate::GaussianIntegrator;
pub use kernel::{exp_neg, DimMajor};

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::DMatrix;

use crate::error::{Result, XvaError};
use crate::stochastic::PointSet;

/// Hyperparameters of the squared-exponential kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeKernel {
    pub sigma_f: f64,
    pub sigma_l: f64,
    /// Observation noise standard deviation.
    pub noise: f64,
}

impl SeKernel {
    pub fn new(sigma_f: f64, sigma_l: f64, noise: f64) -> Result<Self> {
        if !(sigma_f > 0.0 && sigma_l > 0.0 && noise >= 0.0) {
            return Err(XvaError::InvalidParameter(format!(
                "kernel parameters sigma_f={sigma_f}, sigma_l={sigma_l}, noise={noise}"
            )));
        }
        Ok(Self {
            sigma_f,
            sigma_l,
            noise,
        })
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.sigma_f * self.sigma_f * (-0.5 * d2 / (self.sigma_l * self.sigma_l)).exp()
    }

    /// Signal scale from the target spread, length scale from the input
    /// spread, noise at 1% of the signal.
    pub fn data_default(inputs: &PointSet, targets: &[f64]) -> Self {
        let (_, sd) = mean_std(targets);
        let scale = input_scale(inputs);
        let sd = if sd > 0.0 { sd } else { 1.0 };
        let scale = if scale > 0.0 { scale } else { 1.0 };
        Self {
            sigma_f: sd,
            sigma_l: scale,
            noise: 1e-2 * sd,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub optimize: bool,
    /// Coordinate-descent iteration cap.
    pub max_iter: usize,
    /// Hyperparameters are searched on at most this many training points;
    /// the final weights always use the full set.
    pub hyper_subsample: usize,
    /// Extra starting point, typically the previous time step's optimum.
    pub warm_start: Option<SeKernel>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            optimize: true,
            max_iter: 50,
            hyper_subsample: 400,
            warm_start: None,
        }
    }
}

impl FitOptions {
    pub fn fixed() -> Self {
        Self {
            optimize: false,
            ..Self::default()
        }
    }
}

/// Fitted regression model. Immutable; prediction and integration are pure.
#[derive(Debug, Clone)]
pub struct TrainedGpr {
    inputs: PointSet,
    by_dim: DimMajor,
    weights: Vec<f64>,
    scaled_weights: Vec<f64>,
    params: SeKernel,
    mean: f64,
    log_marginal_likelihood: f64,
    constant: bool,
}

const NOISE_FLOOR: f64 = 1e-6;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Square root of the summed per-dimension variances.
fn input_scale(inputs: &PointSet) -> f64 {
    (0..inputs.dim())
        .map(|j| mean_std(&inputs.column(j)).1.powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Collapses identical rows, averaging their targets. Rows keep the order of
/// their first appearance.
fn dedup(inputs: &PointSet, targets: &[f64]) -> (PointSet, Vec<f64>) {
    let n = inputs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        inputs
            .row(a)
            .iter()
            .zip(inputs.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut group_of = vec![0usize; n];
    let mut first_of_group: Vec<usize> = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if k > 0 && inputs.row(i) == inputs.row(order[k - 1]) {
            group_of[i] = group_of[order[k - 1]];
        } else {
            group_of[i] = first_of_group.len();
            first_of_group.push(i);
        }
    }
    if first_of_group.len() == n {
        return (inputs.clone(), targets.to_vec());
    }
    let groups = first_of_group.len();
    let mut sums = vec![0.0; groups];
    let mut counts = vec![0usize; groups];
    for i in 0..n {
        sums[group_of[i]] += targets[i];
        counts[group_of[i]] += 1;
    }
    let mut firsts = first_of_group.clone();
    firsts.sort_unstable();
    let mut data = Vec::with_capacity(groups * inputs.dim());
    let mut ys = Vec::with_capacity(groups);
    for i in firsts {
        let g = group_of[i];
        data.extend_from_slice(inputs.row(i));
        ys.push(sums[g] / counts[g] as f64);
    }
    (PointSet::new(inputs.dim(), data), ys)
}

/// Pairwise squared distances, row-major `n x n`.
fn squared_distances(inputs: &PointSet) -> Vec<f64> {
    let n = inputs.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let d2: f64 = inputs
                .row(i)
                .iter()
                .zip(inputs.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out[i * n + j] = d2;
            out[j * n + i] = d2;
        }
    }
    out
}

/// Log-space hyperparameters relative to the standardized targets.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Theta([f64; 3]);

impl Theta {
    fn from_kernel(k: &SeKernel, target_sd: f64) -> Self {
        Theta([
            (k.sigma_f / target_sd).ln(),
            k.sigma_l.ln(),
            (k.noise / target_sd).ln(),
        ])
    }

    fn to_kernel(self, target_sd: f64) -> SeKernel {
        SeKernel {
            sigma_f: self.0[0].exp() * target_sd,
            sigma_l: self.0[1].exp(),
            noise: self.0[2].exp() * target_sd,
        }
    }

    fn clamp(mut self, scale: f64) -> Self {
        self.0[0] = self.0[0].clamp(1e-3f64.ln(), 1e3f64.ln());
        self.0[1] = self.0[1].clamp((1e-3 * scale).ln(), (1e2 * scale).ln());
        self.0[2] = self.0[2].clamp(NOISE_FLOOR.ln(), 0.0);
        self
    }
}

struct Factorized {
    alpha: Vec<f64>,
    lml: f64,
}

/// Cholesky solve of `(K + noise^2 I) alpha = y` on standardized targets,
/// escalating a diagonal jitter when the factorization breaks down.
fn factorize(d2: &[f64], y: &[f64], theta: Theta) -> Option<Factorized> {
    let n = y.len();
    let sf2 = (2.0 * theta.0[0]).exp();
    let inv = 0.5 / (2.0 * theta.0[1]).exp();
    let nz2 = (2.0 * theta.0[2]).exp();
    for jitter in [0.0, 1e-10, 1e-8, 1e-6] {
        let k = Mat::<f64>::from_fn(n, n, |i, j| {
            let v = sf2 * exp_neg(-inv * d2[i * n + j]);
            if i == j {
                v + nz2 + jitter * sf2
            } else {
                v
            }
        });
        let Ok(llt) = k.llt(Side::Lower) else {
            continue;
        };
        let mut rhs = Mat::<f64>::from_fn(n, 1, |i, _| y[i]);
        llt.solve_in_place(rhs.as_mut());
        let alpha: Vec<f64> = (0..n).map(|i| rhs[(i, 0)]).collect();
        let l = llt.L();
        let log_det_half: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
        let fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let lml = -0.5 * fit - log_det_half - 0.5 * n as f64 * LN_2PI;
        if lml.is_finite() {
            return Some(Factorized { alpha, lml });
        }
    }
    None
}

fn lml_or_neg_inf(d2: &[f64], y: &[f64], theta: Theta) -> f64 {
    factorize(d2, y, theta).map_or(f64::NEG_INFINITY, |f| f.lml)
}

/// Multi-start over a 5x5 log grid of (sigma_f, sigma_l), then coordinate
/// descent on all three log-parameters.
fn optimize_theta(
    d2: &[f64],
    y: &[f64],
    starts: &[Theta],
    scale: f64,
    max_iter: usize,
) -> (Theta, f64) {
    let grid = [0.1f64, 0.316_227_766, 1.0, 3.162_277_66, 10.0];
    let noise0 = starts[0].0[2];
    let mut candidates: Vec<Theta> = starts.to_vec();
    for &sf in &grid {
        for &sl in &grid {
            candidates.push(Theta([sf.ln(), (sl * scale).ln(), noise0]));
        }
    }
    let (mut best, mut best_val) = (starts[0].clamp(scale), f64::NEG_INFINITY);
    for c in candidates {
        let c = c.clamp(scale);
        let v = lml_or_neg_inf(d2, y, c);
        if v > best_val {
            best = c;
            best_val = v;
        }
    }
    let mut step = 1.0;
    for _ in 0..max_iter {
        let mut improved = false;
        'coords: for c in 0..3 {
            for dir in [1.0, -1.0] {
                let mut t = best;
                t.0[c] += dir * step;
                let t = t.clamp(scale);
                if t == best {
                    continue;
                }
                let v = lml_or_neg_inf(d2, y, t);
                if v > best_val + 1e-10 {
                    best = t;
                    best_val = v;
                    improved = true;
                    break 'coords;
                }
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-2 {
                break;
            }
        }
    }
    (best, best_val)
}

fn subsample(inputs: &PointSet, y: &[f64], cap: usize) -> (PointSet, Vec<f64>) {
    let n = inputs.len();
    if n <= cap {
        return (inputs.clone(), y.to_vec());
    }
    let idx: Vec<usize> = (0..cap).map(|k| k * n / cap).collect();
    let mut data = Vec::with_capacity(cap * inputs.dim());
    for &i in &idx {
        data.extend_from_slice(inputs.row(i));
    }
    (
        PointSet::new(inputs.dim(), data),
        idx.iter().map(|&i| y[i]).collect(),
    )
}

impl TrainedGpr {
    /// Fits the model to `(inputs, targets)`.
    ///
    /// Targets are centered by their mean and scaled by their standard
    /// deviation internally. When the targets (or the inputs) show no
    /// spread beyond rounding level, the model is the constant mean.
    pub fn fit(
        inputs: &PointSet,
        targets: &[f64],
        init: SeKernel,
        options: &FitOptions,
    ) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(XvaError::DimensionMismatch {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if inputs.len() < 2 {
            return Err(XvaError::InsufficientData(inputs.len()));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(XvaError::InvalidParameter("non-finite GPR target".into()));
        }
        let (inputs, targets) = dedup(inputs, targets);
        let (mean, sd) = mean_std(&targets);
        let scale = input_scale(&inputs);
        let max_abs = inputs.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sd <= 1e-9 * mean.abs().max(1.0) || scale <= 1e-12 * (1.0 + max_abs) || inputs.len() < 2 {
            return Ok(Self::constant(inputs, mean, init));
        }
        let y: Vec<f64> = targets.iter().map(|t| (t - mean) / sd).collect();
        let init_theta = Theta::from_kernel(&init, sd).clamp(scale);

        let chosen = if options.optimize {
            let (sub_x, sub_y) = subsample(&inputs, &y, options.hyper_subsample.max(2));
            let sub_d2 = squared_distances(&sub_x);
            let mut starts = vec![init_theta];
            if let Some(w) = options.warm_start {
                starts.push(Theta::from_kernel(&w, sd).clamp(scale));
            }
            optimize_theta(&sub_d2, &sub_y, &starts, scale, options.max_iter).0
        } else {
            Theta::from_kernel(&init, sd)
        };

        let d2 = squared_distances(&inputs);
        let mut best = (chosen, factorize(&d2, &y, chosen));
        if options.optimize && chosen != init_theta {
            let at_init = factorize(&d2, &y, init_theta);
            let better = match (&best.1, &at_init) {
                (None, Some(_)) => true,
                (Some(a), Some(b)) => b.lml > a.lml,
                _ => false,
            };
            if better {
                best = (init_theta, at_init);
            }
        }
        let (theta, fac) = best;
        let fac = fac.ok_or(XvaError::SingularKernel)?;
        let params = theta.to_kernel(sd);
        let weights: Vec<f64> = fac.alpha.iter().map(|a| a / sd).collect();
        // log-likelihood of the unscaled targets
        let lml = fac.lml - inputs.len() as f64 * sd.ln();
        Ok(Self::assemble(inputs, weights, params, mean, lml, false))
    }

    fn constant(inputs: PointSet, mean: f64, params: SeKernel) -> Self {
        let n = inputs.len();
        Self::assemble(inputs, vec![0.0; n], params, mean, f64::NAN, true)
    }

    fn assemble(
        inputs: PointSet,
        weights: Vec<f64>,
        params: SeKernel,
        mean: f64,
        lml: f64,
        constant: bool,
    ) -> Self {
        let sf2 = params.sigma_f * params.sigma_f;
        let scaled_weights = weights.iter().map(|w| w * sf2).collect();
        let by_dim = DimMajor::from_rows(inputs.rows(), inputs.dim());
        Self {
            inputs,
            by_dim,
            weights,
            scaled_weights,
            params,
            mean,
            log_marginal_likelihood: lml,
            constant,
        }
    }

    /// Builds a model from explicit weights, e.g. to evaluate a kernel
    /// expansion that was not obtained by fitting.
    pub fn from_weights(inputs: PointSet, weights: Vec<f64>, params: SeKernel, mean: f64) -> Result<Self> {
        if inputs.len() != weights.len() {
            return Err(XvaError::DimensionMismatch {
                expected: inputs.len(),
                got: weights.len(),
            });
        }
        Ok(Self::assemble(inputs, weights, params, mean, f64::NAN, false))
    }

    pub fn inputs(&self) -> &PointSet {
        &self.inputs
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn params(&self) -> SeKernel {
        self.params
    }
    pub fn mean(&self) -> f64 {
        self.mean
    }
    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }
    /// Log marginal likelihood at the returned hyperparameters; NaN for
    /// constant models.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Posterior mean at each query row.
    pub fn predict(&self, query: &PointSet) -> Result<Vec<f64>> {
        if query.dim() != self.dim() {
            return Err(XvaError::DimensionMismatch {
                expected: self.dim(),
                got: query.dim(),
            });
        }
        let mut buf = vec![0.0; self.inputs.len()];
        Ok(query.rows().map(|z| self.predict_with(z, &mut buf)).collect())
    }

    /// Posterior mean at `z`; `buf` must hold one slot per training point.
    #[inline]
    pub fn predict_with(&self, z: &[f64], buf: &mut [f64]) -> f64 {
        if self.constant {
            return self.mean;
        }
        let l = self.params.sigma_l;
        self.mean + self.by_dim.gauss_sum(z, &self.scaled_weights, 0.5 / (l * l), buf)
    }

    pub fn predict_one(&self, z: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.inputs.len()];
        self.predict_with(z, &mut buf)
    }

    /// Exact integral of the posterior mean against `N(0, covariance)`.
    pub fn integrate_against_gaussian(&self, covariance: &DMatrix<f64>) -> Result<f64> {
        let integ = GaussianIntegrator::new(self, covariance)?;
        Ok(integ.expectation(&vec![0.0; self.dim()]))
    }
}
