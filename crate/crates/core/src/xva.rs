//! Risky values under both mark-to-market conventions and XVA assembly.
//!
//! The risky induction runs on `w = V_hat - V` with the riskless American
//! values as control variate, so both passes share the clouds, the inner
//! Monte Carlo draws and the European estimates.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bermudan::{
    fit_step, price_riskless, Method, PricingBudget, RisklessInduction, StepDiagnostics,
    StepExpectation,
};
use crate::error::{Result, XvaError};
use crate::market::{derive_constants, CreditParams, DerivedConstants, MarketParams, Payoff};
use crate::stochastic::RngPolicy;

/// Value used at default settlement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MtmConvention {
    /// `M = V`: linear recursion.
    RisklessMark,
    /// `M = V_hat`: implicit recursion.
    RiskyMark,
}

impl MtmConvention {
    pub fn label(&self) -> &'static str {
        match self {
            MtmConvention::RisklessMark => "V",
            MtmConvention::RiskyMark => "Vhat",
        }
    }
}

#[derive(Debug, Clone)]
pub struct PricingResult {
    pub riskless_v0: f64,
    pub risky_v0: f64,
    /// `riskless_v0 - risky_v0`
    pub xva: f64,
    /// European value at the spot used as control variate.
    pub european_v0: f64,
    pub european_std_error: f64,
    pub riskless_steps: Vec<StepDiagnostics>,
    pub risky_steps: Vec<StepDiagnostics>,
    pub seconds: f64,
}

/// `g = c_p M^+ + c_m M^-` for a mark-to-market value `m`.
#[inline]
pub fn source_g(m: f64, dc: &DerivedConstants) -> f64 {
    if m >= 0.0 {
        dc.c_plus * m
    } else {
        dc.c_minus * m
    }
}

/// Unique solution `z` of `z = max(E + dt/2 (c_p z^+ + c_m z^-), H)`.
pub fn solve_implicit(e: f64, h: f64, dc: &DerivedConstants, dt: f64) -> Result<f64> {
    let a_plus = 1.0 - 0.5 * dt * dc.c_plus;
    let a_minus = 1.0 - 0.5 * dt * dc.c_minus;
    if a_plus <= 0.0 || a_minus <= 0.0 {
        return Err(XvaError::StabilityViolation(1.0 - a_plus.min(a_minus)));
    }
    Ok(if h <= 0.0 {
        if e <= h * a_minus {
            h
        } else if e <= 0.0 {
            e / a_minus
        } else {
            e / a_plus
        }
    } else if e <= h * a_plus {
        h
    } else {
        e / a_plus
    })
}

/// Unique solution of `z = E + dt/2 (c_p z^+ + c_m z^-)`, i.e. the implicit
/// step on a date without exercise.
pub fn solve_implicit_unconstrained(e: f64, dc: &DerivedConstants, dt: f64) -> Result<f64> {
    solve_implicit(e, f64::NEG_INFINITY, dc, dt)
}

/// Pricer for one market, credit and payoff configuration.
#[derive(Debug, Clone)]
pub struct XvaEngine {
    pub market: MarketParams,
    pub credit: CreditParams,
    pub payoff: Payoff,
    pub method: Method,
    pub budget: PricingBudget,
}

impl XvaEngine {
    pub fn new(
        market: MarketParams,
        credit: CreditParams,
        payoff: Payoff,
        method: Method,
        budget: PricingBudget,
    ) -> Result<Self> {
        if payoff.dim() != market.dim() {
            return Err(XvaError::DimensionMismatch {
                expected: market.dim(),
                got: payoff.dim(),
            });
        }
        derive_constants(&market, &credit)?;
        budget.validate()?;
        Ok(Self {
            market,
            credit,
            payoff,
            method,
            budget,
        })
    }

    pub fn riskless(&self) -> Result<RisklessInduction> {
        price_riskless(&self.market, &self.payoff, self.method, &self.budget)
    }

    /// Risky pass on top of a riskless induction from [`Self::riskless`].
    pub fn risky(
        &self,
        riskless: &RisklessInduction,
        convention: MtmConvention,
    ) -> Result<(f64, Vec<StepDiagnostics>)> {
        let mp = &self.market;
        let dc = derive_constants(mp, &self.credit)?;
        let policy = RngPolicy::for_dim(self.budget.seed, mp.dim());
        let n_steps = riskless.num_steps();
        let dt = mp.dt();
        let half = 0.5 * dt;
        let risky_df = (-dc.risky_rate * dt).exp();
        let intensity_df = (-dc.intensity * dt).exp();
        let clouds = &riskless.clouds;

        let mut risky_vals = clouds[n_steps].values_riskless.clone();
        let mut gap = vec![0.0; risky_vals.len()];
        let mut diagnostics = Vec::with_capacity(n_steps);
        let mut warm = None;
        for n in (0..n_steps).rev() {
            let started = Instant::now();
            let marks = match convention {
                MtmConvention::RisklessMark => &clouds[n + 1].values_riskless,
                MtmConvention::RiskyMark => &risky_vals,
            };
            let target: Vec<f64> = marks
                .iter()
                .zip(&gap)
                .map(|(m, w)| half * source_g(*m, &dc) + w)
                .collect();
            let model = fit_step(&clouds[n + 1], &target, &self.budget, warm)?;
            if !model.is_constant() {
                warm = Some(model.params());
            }
            let ctx = StepExpectation {
                mp,
                method: self.method,
                policy: &policy,
                step: n,
            };
            let expected = ctx.evaluate(&model, &clouds[n])?;
            let riskless_n = &clouds[n].values_riskless;
            let exercise = &riskless.exercise[n];
            let mut next = Vec::with_capacity(expected.len());
            for p in 0..expected.len() {
                let e = risky_df * expected[p] + intensity_df * riskless.continuation[n][p];
                let v = match convention {
                    MtmConvention::RisklessMark => {
                        (e + half * source_g(riskless_n[p], &dc)).max(exercise[p])
                    }
                    MtmConvention::RiskyMark => solve_implicit(e, exercise[p], &dc, dt)?,
                };
                next.push(v);
            }
            gap = next.iter().zip(riskless_n).map(|(a, b)| a - b).collect();
            risky_vals = next;
            diagnostics.push(StepDiagnostics {
                step: n,
                cloud_size: clouds[n + 1].len(),
                params: model.params(),
                log_marginal_likelihood: model.log_marginal_likelihood(),
                seconds: started.elapsed().as_secs_f64(),
            });
        }
        diagnostics.reverse();
        Ok((risky_vals[0], diagnostics))
    }

    pub fn run(&self, convention: MtmConvention) -> Result<PricingResult> {
        let started = Instant::now();
        let riskless = self.riskless()?;
        let mut res = self.assemble(&riskless, convention)?;
        res.seconds = started.elapsed().as_secs_f64();
        Ok(res)
    }

    /// Both conventions on a single riskless induction.
    pub fn run_both(&self) -> Result<[PricingResult; 2]> {
        let out = self.run_conventions(&[MtmConvention::RisklessMark, MtmConvention::RiskyMark])?;
        let [a, b]: [PricingResult; 2] = out.try_into().expect("two conventions");
        Ok([a, b])
    }

    /// One result per convention, sharing the riskless induction. Each
    /// reported time includes the shared riskless pass.
    pub fn run_conventions(&self, conventions: &[MtmConvention]) -> Result<Vec<PricingResult>> {
        let started = Instant::now();
        let riskless = self.riskless()?;
        let base = started.elapsed().as_secs_f64();
        conventions
            .iter()
            .map(|&conv| {
                let t = Instant::now();
                let mut res = self.assemble(&riskless, conv)?;
                res.seconds = base + t.elapsed().as_secs_f64();
                Ok(res)
            })
            .collect()
    }

    fn assemble(&self, riskless: &RisklessInduction, convention: MtmConvention) -> Result<PricingResult> {
        let (risky_v0, risky_steps) = self.risky(riskless, convention)?;
        let riskless_v0 = riskless.value();
        Ok(PricingResult {
            riskless_v0,
            risky_v0,
            xva: riskless_v0 - risky_v0,
            european_v0: riskless.european_root.price,
            european_std_error: riskless.european_root.std_error,
            riskless_steps: riskless.diagnostics.clone(),
            risky_steps,
            seconds: 0.0,
        })
    }
}

/// Riskless induction followed by the risky induction for `convention`.
pub fn compute_xva(
    mp: &MarketParams,
    cp: &CreditParams,
    payoff: &Payoff,
    convention: MtmConvention,
    method: Method,
    budget: &PricingBudget,
) -> Result<PricingResult> {
    XvaEngine::new(mp.clone(), *cp, payoff.clone(), method, budget.clone())?.run(convention)
}
