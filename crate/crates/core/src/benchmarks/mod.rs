//! One-dimensional reference pricers and closed-form bounds.

mod pde;
mod tree;

pub use pde::{pde_crank_nicolson_1d, PdeGrid};
pub use tree::crr_tree_1d;

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, XvaError};
use crate::market::{DerivedConstants, MarketParams};
use crate::xva::MtmConvention;

/// Dates on which the holder may exercise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exercise {
    European,
    /// Every tree level or PDE time step.
    American,
    /// `intervals + 1` equally spaced dates including `t = 0` and `T`.
    Bermudan { intervals: usize },
}

/// Credit setup of a risky benchmark run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskySpec {
    pub constants: DerivedConstants,
    pub convention: MtmConvention,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkPrice {
    pub riskless: f64,
    pub risky: Option<f64>,
}

impl BenchmarkPrice {
    pub fn xva(&self) -> Option<f64> {
        self.risky.map(|r| self.riskless - r)
    }
}

/// One-dimensional market whose log-price has the law of the log of the
/// geometric average of the basket.
pub fn geometric_reduction(mp: &MarketParams) -> Result<MarketParams> {
    let d = mp.dim();
    let df = d as f64;
    let vols = mp.vols();
    let corr = mp.correlation();
    let mut var = 0.0;
    for i in 0..d {
        for j in 0..d {
            var += corr[(i, j)] * vols[i] * vols[j];
        }
    }
    var /= df * df;
    let eta = mp
        .dividends()
        .iter()
        .zip(vols)
        .map(|(q, s)| q + 0.5 * s * s)
        .sum::<f64>()
        / df
        - 0.5 * var;
    let spot = (mp.spot().iter().map(|s| s.ln()).sum::<f64>() / df).exp();
    MarketParams::new(
        vec![spot],
        mp.rate(),
        vec![eta],
        vec![var.sqrt()],
        DMatrix::identity(1, 1),
        mp.maturity(),
        mp.num_steps(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptionSide {
    Call,
    Put,
}

pub fn black_scholes(
    side: OptionSide,
    spot: f64,
    strike: f64,
    rate: f64,
    dividend: f64,
    vol: f64,
    maturity: f64,
) -> Result<f64> {
    if !(spot > 0.0 && strike > 0.0 && vol > 0.0 && maturity > 0.0) {
        return Err(XvaError::InvalidParameter(
            "Black-Scholes needs positive spot, strike, volatility and maturity".into(),
        ));
    }
    let n = Normal::standard();
    let sd = vol * maturity.sqrt();
    let d1 = ((spot / strike).ln() + (rate - dividend + 0.5 * vol * vol) * maturity) / sd;
    let d2 = d1 - sd;
    let fwd = spot * (-dividend * maturity).exp();
    let disc = strike * (-rate * maturity).exp();
    Ok(match side {
        OptionSide::Call => fwd * n.cdf(d1) - disc * n.cdf(d2),
        OptionSide::Put => disc * n.cdf(-d2) - fwd * n.cdf(-d1),
    })
}

/// XVA of a European claim with nonnegative payoff and riskless value
/// `v_eu`, in closed form.
pub fn xva_european_closed_form(
    v_eu: f64,
    dc: &DerivedConstants,
    maturity: f64,
    convention: MtmConvention,
) -> f64 {
    let lambda = dc.intensity;
    match convention {
        MtmConvention::RisklessMark => {
            let default_prob = -(-lambda * maturity).exp_m1();
            // (1 - e^{-lT}) / l, by its series near l = 0
            let ratio = if lambda < 1e-8 {
                maturity * (1.0 - 0.5 * lambda * maturity)
            } else {
                default_prob / lambda
            };
            v_eu * (default_prob - dc.c_plus * ratio)
        }
        MtmConvention::RiskyMark => -v_eu * ((dc.c_plus - lambda) * maturity).exp_m1(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{derive_constants, CreditParams};

    #[test]
    fn reduction_examples() {
        let mp = MarketParams::reference(2);
        let r = geometric_reduction(&mp).unwrap();
        assert!((r.vols()[0].powi(2) - 0.0375).abs() < 1e-15);
        assert!((r.dividends()[0] - 0.0125).abs() < 1e-15);
        assert!((r.spot()[0] - 100.0).abs() < 1e-12);

        let one = MarketParams::equicorrelated(1, 90.0, 0.03, 0.02, 0.3, 0.0, 1.0, 40).unwrap();
        let r = geometric_reduction(&one).unwrap();
        assert!((r.vols()[0] - 0.3).abs() < 1e-15);
        assert!((r.dividends()[0] - 0.02).abs() < 1e-15);

        let comono = MarketParams::equicorrelated(3, 100.0, 0.03, 0.01, 0.2, 1.0 - 1e-12, 1.0, 40);
        if let Ok(c) = comono {
            let r = geometric_reduction(&c).unwrap();
            assert!((r.vols()[0] - 0.2).abs() < 1e-6);
            assert!((r.dividends()[0] - 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn closed_form_multipliers() {
        let dc = derive_constants(&MarketParams::reference(2), &CreditParams::reference()).unwrap();
        let mv = xva_european_closed_form(1.0, &dc, 1.0, MtmConvention::RisklessMark);
        let mh = xva_european_closed_form(1.0, &dc, 1.0, MtmConvention::RiskyMark);
        assert!((mv - (1.0 - (-0.08f64).exp()) * 0.7).abs() < 1e-15);
        assert!((mv - 0.0538186).abs() < 5e-8);
        assert!((mh + (-0.056f64).exp_m1()).abs() < 1e-15);
        assert!((mh - 0.0544615).abs() < 1e-6);
        assert!(mh > mv);
    }

    #[test]
    fn closed_form_small_intensity_limit() {
        let dc = DerivedConstants {
            funding_spread: 0.0,
            risky_rate: 0.03,
            c_plus: 0.0,
            c_minus: 0.0,
            intensity: 0.0,
        };
        assert_eq!(xva_european_closed_form(5.0, &dc, 1.0, MtmConvention::RisklessMark), 0.0);
        let tiny = DerivedConstants {
            intensity: 1e-10,
            c_plus: 5e-11,
            ..dc
        };
        let v = xva_european_closed_form(1.0, &tiny, 1.0, MtmConvention::RisklessMark);
        assert!((v - 5e-11).abs() < 1e-18);
    }

    #[test]
    fn put_call_parity() {
        let c = black_scholes(OptionSide::Call, 100.0, 95.0, 0.03, 0.01, 0.25, 1.0).unwrap();
        let p = black_scholes(OptionSide::Put, 100.0, 95.0, 0.03, 0.01, 0.25, 1.0).unwrap();
        let parity = 100.0 * (-0.01f64).exp() - 95.0 * (-0.03f64).exp();
        assert!((c - p - parity).abs() < 1e-12);
    }
}
