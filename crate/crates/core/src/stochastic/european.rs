use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::clouds::lower_matvec;
use crate::error::{Result, XvaError};
use crate::market::{MarketParams, Payoff};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuropeanEstimate {
    pub price: f64,
    pub std_error: f64,
}

/// Riskless European value at `(t, x)` by Monte Carlo with antithetic pairs
/// `G, -G`. The standard error is taken over the pair averages.
pub fn european_price_mc_antithetic<R: Rng>(
    mp: &MarketParams,
    payoff: &Payoff,
    t: f64,
    x: &[f64],
    n_pairs: usize,
    rng: &mut R,
) -> Result<EuropeanEstimate> {
    european_price_mc(mp, payoff, t, x, n_pairs, true, rng)
}

/// European Monte Carlo with `samples` independent draws, or `samples`
/// antithetic pairs when `antithetic` is set.
pub fn european_price_mc<R: Rng>(
    mp: &MarketParams,
    payoff: &Payoff,
    t: f64,
    x: &[f64],
    samples: usize,
    antithetic: bool,
    rng: &mut R,
) -> Result<EuropeanEstimate> {
    let d = mp.dim();
    if x.len() != d || payoff.dim() != d {
        return Err(XvaError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    let tau = mp.maturity() - t;
    if tau < -1e-12 {
        return Err(XvaError::InvalidParameter(format!(
            "time {t} beyond maturity {}",
            mp.maturity()
        )));
    }
    if tau <= 1e-14 {
        return Ok(EuropeanEstimate {
            price: payoff.eval(x)?,
            std_error: 0.0,
        });
    }
    if samples == 0 {
        return Err(XvaError::InvalidParameter("need at least one path".into()));
    }
    let sampler = TerminalSampler::new(mp, tau, x);
    let mut g = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut up = vec![0.0; d];
    let mut down = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        for v in g.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        lower_matvec(&sampler.shock, &g, &mut z);
        let y = if antithetic {
            for i in 0..d {
                up[i] = sampler.center[i] + z[i];
                down[i] = sampler.center[i] - z[i];
            }
            0.5 * (payoff.eval_log(&up, &mut scratch) + payoff.eval_log(&down, &mut scratch))
        } else {
            for i in 0..d {
                up[i] = sampler.center[i] + z[i];
            }
            payoff.eval_log(&up, &mut scratch)
        };
        sum += y;
        sum_sq += y * y;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = if samples > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let df = (-mp.rate() * tau).exp();
    Ok(EuropeanEstimate {
        price: df * mean,
        std_error: df * (var / n).sqrt(),
    })
}

struct TerminalSampler {
    center: Vec<f64>,
    shock: DMatrix<f64>,
}

impl TerminalSampler {
    fn new(mp: &MarketParams, tau: f64, x: &[f64]) -> Self {
        let center = x
            .iter()
            .zip(mp.log_drift())
            .map(|(xi, m)| xi.ln() + m * tau)
            .collect();
        Self {
            center,
            shock: mp.shock_matrix() * tau.sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::{RngPolicy, StreamPurpose};

    #[test]
    fn deterministic_limit_is_discounted_forward_payoff() {
        let mp = MarketParams::equicorrelated(2, 100.0, 0.03, 0.0, 1e-12, 0.2, 1.0, 40).unwrap();
        let mut rng = RngPolicy::for_dim(1, 2).stream(StreamPurpose::European, 0, 0);
        let est = european_price_mc_antithetic(
            &mp,
            &Payoff::geometric_put(100.0, 2),
            0.0,
            &[100.0, 100.0],
            1000,
            &mut rng,
        )
        .unwrap();
        assert_eq!(est.price, 0.0);
    }

    #[test]
    fn at_maturity_returns_payoff() {
        let mp = MarketParams::reference(2);
        let mut rng = RngPolicy::for_dim(1, 2).stream(StreamPurpose::European, 0, 0);
        let est = european_price_mc_antithetic(
            &mp,
            &Payoff::geometric_put(100.0, 2),
            1.0,
            &[81.0, 100.0],
            10,
            &mut rng,
        )
        .unwrap();
        assert!((est.price - 10.0).abs() < 1e-12);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn rejects_time_after_maturity() {
        let mp = MarketParams::reference(1);
        let mut rng = RngPolicy::for_dim(1, 1).stream(StreamPurpose::European, 0, 0);
        let r = european_price_mc_antithetic(&mp, &Payoff::geometric_put(100.0, 1), 1.5, &[100.0], 10, &mut rng);
        assert!(r.is_err());
    }
}
