use super::{BenchmarkPrice, Exercise, RiskySpec};
use crate::error::{Result, XvaError};
use crate::market::{MarketParams, Payoff};
use crate::xva::{solve_implicit, source_g, MtmConvention};

/// Cox–Ross–Rubinstein binomial tree on a one-dimensional market.
///
/// With `risky` set, the risky value is carried alongside the riskless one:
/// each level discounts at `r + lambda_B + lambda_C` and adds the source
/// `g` by the trapezoidal rule over the substep; under `M = V_hat` the
/// implicit step is solved node by node.
pub fn crr_tree_1d(
    mp: &MarketParams,
    payoff: &Payoff,
    steps: usize,
    exercise: Exercise,
    risky: Option<RiskySpec>,
) -> Result<BenchmarkPrice> {
    if mp.dim() != 1 || payoff.dim() != 1 {
        return Err(XvaError::DimensionMismatch {
            expected: 1,
            got: mp.dim(),
        });
    }
    if steps == 0 {
        return Err(XvaError::InvalidParameter("tree needs at least one step".into()));
    }
    let stride = match exercise {
        Exercise::Bermudan { intervals } => {
            if intervals == 0 || !steps.is_multiple_of(intervals) {
                return Err(XvaError::InvalidParameter(format!(
                    "{steps} tree steps do not align with {intervals} exercise intervals"
                )));
            }
            Some(steps / intervals)
        }
        _ => None,
    };
    let can_exercise = |level: usize| match exercise {
        Exercise::European => false,
        Exercise::American => true,
        Exercise::Bermudan { .. } => level.is_multiple_of(stride.unwrap_or(1)),
    };

    let dt = mp.maturity() / steps as f64;
    let vol = mp.vols()[0];
    let up = (vol * dt.sqrt()).exp();
    let down = 1.0 / up;
    let growth = ((mp.rate() - mp.dividends()[0]) * dt).exp();
    let p = (growth - down) / (up - down);
    if !(0.0..=1.0).contains(&p) {
        return Err(XvaError::InvalidParameter(format!(
            "risk-neutral probability {p} outside [0, 1]; increase the step count"
        )));
    }
    let q = 1.0 - p;
    let df = (-mp.rate() * dt).exp();
    let s0 = mp.spot()[0];
    let log_up = up.ln();
    let node_payoff = |level: usize, i: usize| {
        let s = s0 * ((2.0 * i as f64 - level as f64) * log_up).exp();
        payoff.eval_unchecked(&[s])
    };

    let mut v: Vec<f64> = (0..=steps).map(|i| node_payoff(steps, i)).collect();
    let mut w = risky.map(|_| v.clone());
    let half = 0.5 * dt;
    let rdf = risky.map_or(1.0, |s| (-s.constants.risky_rate * dt).exp());
    for level in (0..steps).rev() {
        let ex = can_exercise(level);
        // ascending i reads v[i], v[i + 1] before v[i] is overwritten
        for i in 0..=level {
            let (vd, vu) = (v[i], v[i + 1]);
            let h = if ex { node_payoff(level, i) } else { 0.0 };
            let cont = df * (p * vu + q * vd);
            let new_v = if ex { cont.max(h) } else { cont };
            if let (Some(spec), Some(wv)) = (risky.as_ref(), w.as_mut()) {
                let dc = &spec.constants;
                let (wd, wu) = (wv[i], wv[i + 1]);
                let new_w = match spec.convention {
                    MtmConvention::RisklessMark => {
                        let e = rdf
                            * (p * (wu + half * source_g(vu, dc)) + q * (wd + half * source_g(vd, dc)));
                        let c = e + half * source_g(new_v, dc);
                        if ex {
                            c.max(h)
                        } else {
                            c
                        }
                    }
                    MtmConvention::RiskyMark => {
                        let e = rdf
                            * (p * (wu + half * source_g(wu, dc)) + q * (wd + half * source_g(wd, dc)));
                        solve_implicit(e, if ex { h } else { f64::NEG_INFINITY }, dc, dt)?
                    }
                };
                wv[i] = new_w;
            }
            v[i] = new_v;
        }
    }
    Ok(BenchmarkPrice {
        riskless: v[0],
        risky: w.map(|wv| wv[0]),
    })
}
