use basket_xva::{derive_constants, CreditParams, FundingMode, MarketParams, Payoff};
use proptest::prelude::*;

fn credit() -> impl Strategy<Value = CreditParams> {
    (0.0..0.5f64, 0.0..0.5f64, 0.0..=1.0f64, 0.0..=1.0f64, any::<bool>()).prop_map(|(lb, lc, rb, rc, coll)| {
        let mode = if coll {
            FundingMode::Collateralized
        } else {
            FundingMode::Uncollateralized
        };
        CreditParams::new(lb, lc, rb, rc, mode).unwrap()
    })
}

proptest! {
    #[test]
    fn source_coefficients_are_bounded_by_intensities(cp in credit()) {
        let dc = derive_constants(&MarketParams::reference(2), &cp).unwrap();
        prop_assert!(dc.c_plus <= cp.lambda_b + cp.lambda_c * cp.recovery_c + 1e-15);
        prop_assert!(dc.c_minus <= cp.lambda_b + cp.lambda_c + 1e-15);
        prop_assert!(dc.c_plus >= -1e-15 && dc.c_minus >= 0.0);
        prop_assert!((dc.risky_rate - 0.03 - cp.lambda_b - cp.lambda_c).abs() < 1e-15);
    }

    #[test]
    fn payoffs_are_positively_homogeneous(
        x in prop::collection::vec(1.0..200.0f64, 4),
        k in 1.0..150.0f64,
        a in 0.1..10.0f64,
    ) {
        let scaled: Vec<f64> = x.iter().map(|v| a * v).collect();
        let pairs = [
            (Payoff::geometric_put(k, 4), Payoff::geometric_put(a * k, 4)),
            (Payoff::call_on_max(k, 4), Payoff::call_on_max(a * k, 4)),
            (Payoff::swaption_with_floor(-k, 4).unwrap(), Payoff::swaption_with_floor(-a * k, 4).unwrap()),
        ];
        for (p, q) in pairs {
            let lhs = q.eval(&scaled).unwrap();
            let rhs = a * p.eval(&x).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn payoffs_respect_asset_permutations(x in prop::collection::vec(1.0..200.0f64, 6), k in 1.0..150.0f64) {
        let mut all = x.clone();
        all.reverse();
        for p in [Payoff::geometric_put(k, 6), Payoff::call_on_max(k, 6)] {
            prop_assert!((p.eval(&x).unwrap() - p.eval(&all).unwrap()).abs() < 1e-10);
        }
        let mut legs = x.clone();
        legs[..3].reverse();
        legs[3..].rotate_left(1);
        let sw = Payoff::swaption_with_floor(-k, 6).unwrap();
        prop_assert!((sw.eval(&x).unwrap() - sw.eval(&legs).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn payoff_ranges(x in prop::collection::vec(1.0..200.0f64, 2), k in 1.0..150.0f64) {
        prop_assert!(Payoff::geometric_put(k, 2).eval(&x).unwrap() >= 0.0);
        prop_assert!(Payoff::call_on_max(k, 2).eval(&x).unwrap() >= 0.0);
        prop_assert!(Payoff::swaption_with_floor(-k, 2).unwrap().eval(&x).unwrap() >= -k);
    }
}
