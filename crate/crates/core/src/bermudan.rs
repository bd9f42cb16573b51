//! Riskless Bermudan backward induction on state clouds.
//!
//! The induction runs on the exercise-value gap `v = V - V_EU` when the
//! European control variate is enabled: at every cloud point the
//! continuation is `e^{-r dt} E[v_{n+1}] + V_EU(t_n, x)`, which uses the
//! martingale property of the discounted European price, and the next
//! regression target is `max(continuation, H) - V_EU`.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, XvaError};
use crate::gpr::{FitOptions, GaussianIntegrator, SeKernel, TrainedGpr};
use crate::market::{MarketParams, Payoff};
use crate::stochastic::{
    build_state_clouds, european_price_mc_antithetic, one_step_log_shocks, EuropeanEstimate,
    RngPolicy, StateCloud, StreamPurpose,
};

/// How continuation values are estimated from the fitted surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    /// One-step inner Monte Carlo with `inner_paths` draws per cloud point.
    GprMc { inner_paths: usize },
    /// Exact integration of the surrogate against the transition density.
    GprEi,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::GprMc { .. } => "gpr-mc",
            Method::GprEi => "gpr-ei",
        }
    }

    pub fn inner_paths(&self) -> usize {
        match self {
            Method::GprMc { inner_paths } => *inner_paths,
            Method::GprEi => 0,
        }
    }
}

/// Sample sizes and seeds of one pricing run.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingBudget {
    /// Points per state cloud (`P`).
    pub points: usize,
    pub control_variate: bool,
    /// Antithetic pairs for each European value at a cloud point.
    pub european_pairs: usize,
    /// Antithetic pairs for the European value at the spot.
    pub root_european_pairs: usize,
    /// Training points used for the hyperparameter search.
    pub hyper_subsample: usize,
    pub optimize_hyperparameters: bool,
    pub seed: u64,
}

impl PricingBudget {
    pub fn with_points(points: usize) -> Self {
        Self {
            points,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(XvaError::InsufficientData(self.points));
        }
        if self.control_variate && (self.european_pairs == 0 || self.root_european_pairs == 0) {
            return Err(XvaError::InvalidParameter(
                "control variate needs a positive European path budget".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn fit_options(&self, warm_start: Option<SeKernel>) -> FitOptions {
        FitOptions {
            optimize: self.optimize_hyperparameters,
            hyper_subsample: self.hyper_subsample,
            warm_start,
            ..FitOptions::default()
        }
    }
}

impl Default for PricingBudget {
    fn default() -> Self {
        Self {
            points: 2000,
            control_variate: true,
            european_pairs: 10_000,
            root_european_pairs: 1_000_000,
            hyper_subsample: 400,
            optimize_hyperparameters: true,
            seed: 20_240_501,
        }
    }
}

/// Fit summary of one backward step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub cloud_size: usize,
    pub params: SeKernel,
    pub log_marginal_likelihood: f64,
    pub seconds: f64,
}

/// Output of the riskless induction, kept for the risky pass.
#[derive(Debug, Clone)]
pub struct RisklessInduction {
    pub clouds: Vec<StateCloud>,
    /// Payoff at every cloud point.
    pub exercise: Vec<Vec<f64>>,
    /// European value at every cloud point (zero without control variate).
    pub european: Vec<Vec<f64>>,
    /// Continuation value at every cloud point of steps `0..N`.
    pub continuation: Vec<Vec<f64>>,
    pub european_root: EuropeanEstimate,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl RisklessInduction {
    pub fn value(&self) -> f64 {
        self.clouds[0].values_riskless[0]
    }

    pub fn num_steps(&self) -> usize {
        self.clouds.len() - 1
    }
}

/// Conditional expectations `E[u(log S_{t+dt}) | S_t = x]` of fitted
/// surrogates at every point of one cloud.
pub(crate) struct StepExpectation<'a> {
    pub mp: &'a MarketParams,
    pub method: Method,
    pub policy: &'a RngPolicy,
    pub step: usize,
}

impl StepExpectation<'_> {
    pub fn evaluate(&self, model: &TrainedGpr, cloud: &StateCloud) -> Result<Vec<f64>> {
        if model.is_constant() {
            return Ok(vec![model.mean(); cloud.len()]);
        }
        let d = self.mp.dim();
        let dt = self.mp.dt();
        let drift: Vec<f64> = self.mp.log_drift().iter().map(|m| m * dt).collect();
        match self.method {
            Method::GprEi => {
                let cov = self.mp.log_covariance() * dt;
                let integ = GaussianIntegrator::new(model, &cov)?;
                let n_train = model.inputs().len();
                Ok((0..cloud.len())
                    .into_par_iter()
                    .map_init(
                        || (vec![0.0; d], vec![0.0; d], vec![0.0; n_train]),
                        |(m, lm, buf), p| {
                            for ((mi, lx), mu) in m.iter_mut().zip(cloud.log_points.row(p)).zip(&drift) {
                                *mi = lx + mu;
                            }
                            integ.expectation_with(m, lm, buf)
                        },
                    )
                    .collect())
            }
            Method::GprMc { inner_paths } => {
                if inner_paths == 0 {
                    return Err(XvaError::InvalidParameter("GPR-MC needs inner paths".into()));
                }
                let shock = self.mp.shock_matrix();
                let n_train = model.inputs().len();
                Ok((0..cloud.len())
                    .into_par_iter()
                    .map_init(
                        || (vec![0.0; inner_paths * d], vec![0.0; d], vec![0.0; n_train]),
                        |(incs, z, buf), p| {
                            let mut rng = self.policy.stream(StreamPurpose::OneStep, self.step, p);
                            one_step_log_shocks(self.mp, &shock, &mut rng, incs);
                            let x = cloud.log_points.row(p);
                            let mut sum = 0.0;
                            for inc in incs.chunks_exact(d) {
                                for i in 0..d {
                                    z[i] = x[i] + inc[i];
                                }
                                sum += model.predict_with(z, buf);
                            }
                            sum / inner_paths as f64
                        },
                    )
                    .collect())
            }
        }
    }
}

/// Fits the surrogate of `targets` on the log-prices of `cloud`.
pub(crate) fn fit_step(
    cloud: &StateCloud,
    targets: &[f64],
    budget: &PricingBudget,
    warm_start: Option<SeKernel>,
) -> Result<TrainedGpr> {
    let init = SeKernel::data_default(&cloud.log_points, targets);
    TrainedGpr::fit(&cloud.log_points, targets, init, &budget.fit_options(warm_start))
}

fn european_values(
    mp: &MarketParams,
    payoff: &Payoff,
    cloud: &StateCloud,
    pairs: usize,
    policy: &RngPolicy,
    purpose: StreamPurpose,
) -> Result<Vec<EuropeanEstimate>> {
    let t = mp.time(cloud.time_index);
    (0..cloud.len())
        .into_par_iter()
        .map(|p| {
            // common random numbers across the points of one cloud keep the
            // estimated European values smooth in x
            let mut rng = policy.stream(purpose, cloud.time_index, 0);
            european_price_mc_antithetic(mp, payoff, t, cloud.points.row(p), pairs, &mut rng)
        })
        .collect()
}

/// Riskless Bermudan price on the grid `t_n = n T / N`, exercise allowed at
/// every `t_n` including `t_0`.
pub fn price_riskless(
    mp: &MarketParams,
    payoff: &Payoff,
    method: Method,
    budget: &PricingBudget,
) -> Result<RisklessInduction> {
    budget.validate()?;
    if payoff.dim() != mp.dim() {
        return Err(XvaError::DimensionMismatch {
            expected: mp.dim(),
            got: payoff.dim(),
        });
    }
    let policy = RngPolicy::for_dim(budget.seed, mp.dim());
    let mut clouds = build_state_clouds(mp, budget.points, &policy)?;
    let n_steps = mp.num_steps();

    let exercise: Vec<Vec<f64>> = clouds
        .iter()
        .map(|c| c.points.rows().map(|x| payoff.eval_unchecked(x)).collect())
        .collect();

    let mut european_root = EuropeanEstimate {
        price: 0.0,
        std_error: 0.0,
    };
    let mut european: Vec<Vec<f64>> = clouds.iter().map(|c| vec![0.0; c.len()]).collect();
    if budget.control_variate {
        european[n_steps] = exercise[n_steps].clone();
        for n in 1..n_steps {
            let est = european_values(mp, payoff, &clouds[n], budget.european_pairs, &policy, StreamPurpose::European)?;
            european[n] = est.iter().map(|e| e.price).collect();
        }
        let root = european_values(mp, payoff, &clouds[0], budget.root_european_pairs, &policy, StreamPurpose::EuropeanRoot)?;
        european_root = root[0];
        european[0] = vec![european_root.price];
    }

    let rate_df = (-mp.rate() * mp.dt()).exp();
    let mut continuation: Vec<Vec<f64>> = vec![Vec::new(); n_steps];
    let mut diagnostics = Vec::with_capacity(n_steps);
    clouds[n_steps].values_riskless = exercise[n_steps].clone();
    let mut gap: Vec<f64> = exercise[n_steps]
        .iter()
        .zip(&european[n_steps])
        .map(|(h, e)| h - e)
        .collect();
    let mut warm = None;
    for n in (0..n_steps).rev() {
        let started = Instant::now();
        let model = fit_step(&clouds[n + 1], &gap, budget, warm)?;
        if !model.is_constant() {
            warm = Some(model.params());
        }
        let ctx = StepExpectation {
            mp,
            method,
            policy: &policy,
            step: n,
        };
        let expected = ctx.evaluate(&model, &clouds[n])?;
        let cont: Vec<f64> = expected
            .iter()
            .zip(&european[n])
            .map(|(e, eu)| rate_df * e + eu)
            .collect();
        let values: Vec<f64> = cont.iter().zip(&exercise[n]).map(|(c, h)| c.max(*h)).collect();
        gap = values.iter().zip(&european[n]).map(|(v, eu)| v - eu).collect();
        clouds[n].values_riskless = values;
        continuation[n] = cont;
        diagnostics.push(StepDiagnostics {
            step: n,
            cloud_size: clouds[n + 1].len(),
            params: model.params(),
            log_marginal_likelihood: model.log_marginal_likelihood(),
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    diagnostics.reverse();
    Ok(RisklessInduction {
        clouds,
        exercise,
        european,
        continuation,
        european_root,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_budget(points: usize) -> PricingBudget {
        PricingBudget {
            points,
            european_pairs: 500,
            root_european_pairs: 5000,
            ..PricingBudget::default()
        }
    }

    #[test]
    fn zero_payoff_gives_zero_everywhere() {
        let mp = MarketParams::reference(2);
        let payoff = Payoff::custom(|_| 0.0, 2);
        for method in [Method::GprEi, Method::GprMc { inner_paths: 50 }] {
            let res = price_riskless(&mp, &payoff, method, &small_budget(64)).unwrap();
            for c in &res.clouds {
                assert!(c.values_riskless.iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn deterministic_limit_matches_dynamic_program() {
        let (s0, k, r) = (100.0, 110.0, 0.03);
        let mp = MarketParams::equicorrelated(2, s0, r, 0.0, 1e-9, 0.2, 1.0, 10).unwrap();
        let payoff = Payoff::geometric_put(k, 2);
        let want = (0..=10)
            .map(|n| {
                let t = n as f64 / 10.0;
                (-r * t).exp() * (k - s0 * (r * t).exp()).max(0.0)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let res = price_riskless(&mp, &payoff, Method::GprEi, &small_budget(32)).unwrap();
        assert!((res.value() / want - 1.0).abs() < 1e-6, "{} vs {want}", res.value());
    }

    #[test]
    fn rejects_tiny_cloud() {
        let mp = MarketParams::reference(1);
        let r = price_riskless(&mp, &Payoff::geometric_put(100.0, 1), Method::GprEi, &small_budget(1));
        assert!(matches!(r, Err(XvaError::InsufficientData(1))));
    }
}
