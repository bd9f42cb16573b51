use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{gaussian_from_uniform, halton_points, PointSet, RngPolicy, StreamPurpose};
use crate::error::Result;
use crate::market::MarketParams;

/// Quasi-random sample of the asset vector at exercise date `t_n`.
#[derive(Debug, Clone)]
pub struct StateCloud {
    pub time_index: usize,
    pub points: PointSet,
    pub log_points: PointSet,
    pub values_riskless: Vec<f64>,
    pub values_risky: Vec<f64>,
}

impl StateCloud {
    fn new(time_index: usize, log_points: PointSet) -> Self {
        let points = log_points.map(f64::exp);
        let n = points.len();
        Self {
            time_index,
            points,
            log_points,
            values_riskless: vec![0.0; n],
            values_risky: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `out = a * g` for lower-triangular `a`.
#[inline]
pub(crate) fn lower_matvec(a: &DMatrix<f64>, g: &[f64], out: &mut [f64]) {
    let d = g.len();
    for i in 0..d {
        let mut s = 0.0;
        for (j, gj) in g.iter().enumerate().take(i + 1) {
            s += a[(i, j)] * gj;
        }
        out[i] = s;
    }
    debug_assert!(out.len() == d);
}

/// Clouds `X^0, ..., X^N`. Cloud 0 is the single spot vector; cloud `n`
/// holds `count` points following the exact log-normal law of `S_{t_n}`,
/// driven by the same Halton-derived Gaussian sample for every `n`.
pub fn build_state_clouds(
    mp: &MarketParams,
    count: usize,
    policy: &RngPolicy,
) -> Result<Vec<StateCloud>> {
    let d = mp.dim();
    let gauss = gaussian_from_uniform(&halton_points(count, d, policy))?;
    let shock = mp.shock_matrix();
    let drift = mp.log_drift();
    let log_spot: Vec<f64> = mp.spot().iter().map(|s| s.ln()).collect();

    let mut correlated = PointSet::zeros(count, d);
    for k in 0..count {
        lower_matvec(&shock, gauss.row(k), correlated.row_mut(k));
    }

    let mut clouds = Vec::with_capacity(mp.num_steps() + 1);
    let mut root = StateCloud::new(0, PointSet::new(d, log_spot.clone()));
    root.points = PointSet::new(d, mp.spot().to_vec());
    clouds.push(root);
    for n in 1..=mp.num_steps() {
        let t = mp.time(n);
        let sq = t.sqrt();
        let mut logs = PointSet::zeros(count, d);
        for k in 0..count {
            let z = correlated.row(k);
            for (i, v) in logs.row_mut(k).iter_mut().enumerate() {
                *v = log_spot[i] + drift[i] * t + sq * z[i];
            }
        }
        clouds.push(StateCloud::new(n, logs));
    }
    Ok(clouds)
}

/// Fills `out` (row-major `count x d`) with one-step log increments
/// `(r - eta - sigma^2/2) dt + sqrt(dt) * diag(sigma) * factor * G`.
pub fn one_step_log_shocks<R: Rng>(mp: &MarketParams, shock: &DMatrix<f64>, rng: &mut R, out: &mut [f64]) {
    let d = mp.dim();
    let dt = mp.dt();
    let sq = dt.sqrt();
    let drift: Vec<f64> = mp.log_drift().iter().map(|m| m * dt).collect();
    let mut g = vec![0.0; d];
    let mut z = vec![0.0; d];
    for row in out.chunks_exact_mut(d) {
        for v in g.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        lower_matvec(shock, &g, &mut z);
        for i in 0..d {
            row[i] = drift[i] + sq * z[i];
        }
    }
}

/// `count` pseudo-random draws of `S_{t+dt}` given `S_t = x`. The stream is
/// fixed by `(policy, step, point)`.
pub fn one_step_cloud(
    x: &[f64],
    count: usize,
    mp: &MarketParams,
    policy: &RngPolicy,
    step: usize,
    point: usize,
) -> PointSet {
    let d = mp.dim();
    let mut rng = policy.stream(StreamPurpose::OneStep, step, point);
    let mut data = vec![0.0; count * d];
    one_step_log_shocks(mp, &mp.shock_matrix(), &mut rng, &mut data);
    for row in data.chunks_exact_mut(d) {
        for (v, xi) in row.iter_mut().zip(x) {
            *v = xi * v.exp();
        }
    }
    PointSet::new(d, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vol_clouds_follow_drift() {
        let mp = MarketParams::equicorrelated(3, 100.0, 0.03, 0.01, 1e-12, 0.2, 1.0, 4).unwrap();
        let clouds = build_state_clouds(&mp, 64, &RngPolicy::for_dim(1, 3)).unwrap();
        assert_eq!(clouds.len(), 5);
        assert_eq!(clouds[0].len(), 1);
        for c in &clouds {
            let want = 100.0 * (0.02 * mp.time(c.time_index)).exp();
            for v in c.points.as_slice() {
                assert!((v / want - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_vol_one_step() {
        let mp = MarketParams::equicorrelated(2, 100.0, 0.03, 0.0, 1e-12, 0.2, 1.0, 40).unwrap();
        let x = [95.0, 120.0];
        let pts = one_step_cloud(&x, 100, &mp, &RngPolicy::for_dim(3, 2), 0, 0);
        for row in pts.rows() {
            for (v, xi) in row.iter().zip(x) {
                assert!((v / (xi * (0.03 * mp.dt()).exp()) - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn one_step_log_drift() {
        let mp = MarketParams::equicorrelated(1, 100.0, 0.0, 0.0, 0.25, 0.0, 1.0, 1).unwrap();
        let m = 40_000;
        let pts = one_step_cloud(&[100.0], m, &mp, &RngPolicy::for_dim(5, 1), 0, 0);
        let mean = pts.as_slice().iter().map(|v| (v / 100.0).ln()).sum::<f64>() / m as f64;
        assert!((mean + 0.03125).abs() < 3.0 * 0.25 / (m as f64).sqrt());
    }

    #[test]
    fn one_step_correlation() {
        let mp = MarketParams::equicorrelated(2, 100.0, 0.03, 0.0, 0.25, 0.2, 1.0, 10).unwrap();
        let m = 40_000;
        let pts = one_step_cloud(&[100.0, 100.0], m, &mp, &RngPolicy::for_dim(5, 2), 1, 2);
        let a: Vec<f64> = pts.rows().map(|r| (r[0] / 100.0).ln()).collect();
        let b: Vec<f64> = pts.rows().map(|r| (r[1] / 100.0).ln()).collect();
        let ma = a.iter().sum::<f64>() / m as f64;
        let mb = b.iter().sum::<f64>() / m as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        let rho = cov / (va * vb).sqrt();
        assert!((rho - 0.2).abs() < 5.0 / (m as f64).sqrt(), "rho {rho}");
    }
}
