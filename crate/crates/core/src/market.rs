//! Contract, market and credit parameters.
//!
//! Everything here is immutable once constructed; constructors validate the
//! invariants so downstream code can assume positive spots and volatilities,
//! a factorizable correlation matrix and a stable time step.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, XvaError};

/// Multi-dimensional Black–Scholes market with a uniform Bermudan grid.
#[derive(Debug, Clone)]
pub struct MarketParams {
    spot: Vec<f64>,
    rate: f64,
    dividends: Vec<f64>,
    vols: Vec<f64>,
    correlation: DMatrix<f64>,
    maturity: f64,
    num_steps: usize,
    factor: DMatrix<f64>,
}

impl MarketParams {
    pub fn new(
        spot: Vec<f64>,
        rate: f64,
        dividends: Vec<f64>,
        vols: Vec<f64>,
        correlation: DMatrix<f64>,
        maturity: f64,
        num_steps: usize,
    ) -> Result<Self> {
        let d = spot.len();
        if d == 0 {
            return Err(XvaError::InvalidParameter("empty spot vector".into()));
        }
        for (name, len) in [("dividends", dividends.len()), ("vols", vols.len())] {
            if len != d {
                return Err(XvaError::InvalidParameter(format!(
                    "{name} has length {len}, spot has {d}"
                )));
            }
        }
        if correlation.nrows() != d || correlation.ncols() != d {
            return Err(XvaError::DimensionMismatch {
                expected: d,
                got: correlation.nrows(),
            });
        }
        if spot.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(XvaError::InvalidParameter("spot prices must be positive".into()));
        }
        if vols.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(XvaError::InvalidParameter("volatilities must be positive".into()));
        }
        if !rate.is_finite() || dividends.iter().any(|q| !q.is_finite()) {
            return Err(XvaError::InvalidParameter("rates must be finite".into()));
        }
        if !(maturity.is_finite() && maturity > 0.0) {
            return Err(XvaError::InvalidParameter("maturity must be positive".into()));
        }
        if num_steps == 0 {
            return Err(XvaError::InvalidParameter("need at least one exercise step".into()));
        }
        let factor = factor_correlation(&correlation)?;
        Ok(Self {
            spot,
            rate,
            dividends,
            vols,
            correlation,
            maturity,
            num_steps,
            factor,
        })
    }

    /// Identical assets with a constant pairwise correlation.
    #[allow(clippy::too_many_arguments)]
    pub fn equicorrelated(
        dim: usize,
        spot: f64,
        rate: f64,
        dividend: f64,
        vol: f64,
        rho: f64,
        maturity: f64,
        num_steps: usize,
    ) -> Result<Self> {
        let corr = DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho });
        Self::new(
            vec![spot; dim],
            rate,
            vec![dividend; dim],
            vec![vol; dim],
            corr,
            maturity,
            num_steps,
        )
    }

    /// The reference market used throughout the experiments: S0 = 100,
    /// r = 3%, no dividends, 25% volatility, 0.2 correlation, T = 1, N = 40.
    pub fn reference(dim: usize) -> Self {
        Self::equicorrelated(dim, 100.0, 0.03, 0.0, 0.25, 0.2, 1.0, 40)
            .expect("reference parameters are valid")
    }

    pub fn dim(&self) -> usize {
        self.spot.len()
    }
    pub fn spot(&self) -> &[f64] {
        &self.spot
    }
    pub fn rate(&self) -> f64 {
        self.rate
    }
    pub fn dividends(&self) -> &[f64] {
        &self.dividends
    }
    pub fn vols(&self) -> &[f64] {
        &self.vols
    }
    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }
    pub fn maturity(&self) -> f64 {
        self.maturity
    }
    pub fn num_steps(&self) -> usize {
        self.num_steps
    }
    pub fn dt(&self) -> f64 {
        self.maturity / self.num_steps as f64
    }
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    /// Lower-triangular square root of the correlation matrix.
    pub fn correlation_factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// Per-asset log drift `r - eta_i - sigma_i^2 / 2`.
    pub fn log_drift(&self) -> Vec<f64> {
        self.dividends
            .iter()
            .zip(&self.vols)
            .map(|(q, s)| self.rate - q - 0.5 * s * s)
            .collect()
    }

    /// `diag(sigma) * factor`: maps standard normals to log-return shocks
    /// over one unit of time.
    pub fn shock_matrix(&self) -> DMatrix<f64> {
        let mut a = self.factor.clone();
        for (i, s) in self.vols.iter().enumerate() {
            a.row_mut(i).scale_mut(*s);
        }
        a
    }

    /// Covariance of `(sigma_1 W_1, ..., sigma_d W_d)` per unit time.
    pub fn log_covariance(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            self.correlation[(i, j)] * self.vols[i] * self.vols[j]
        })
    }

    /// Copy with different dividend yields.
    pub fn with_dividends(&self, dividends: Vec<f64>) -> Result<Self> {
        Self::new(
            self.spot.clone(),
            self.rate,
            dividends,
            self.vols.clone(),
            self.correlation.clone(),
            self.maturity,
            self.num_steps,
        )
    }

    /// Copy with different volatilities.
    pub fn with_vols(&self, vols: Vec<f64>) -> Result<Self> {
        Self::new(
            self.spot.clone(),
            self.rate,
            self.dividends.clone(),
            vols,
            self.correlation.clone(),
            self.maturity,
            self.num_steps,
        )
    }
}

/// Whether the derivative can serve as collateral for its own funding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FundingMode {
    Collateralized,
    Uncollateralized,
}

/// Default intensities and recoveries of the issuer B and counterparty C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CreditParams {
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub recovery_b: f64,
    pub recovery_c: f64,
    pub funding: FundingMode,
}

impl CreditParams {
    pub fn new(
        lambda_b: f64,
        lambda_c: f64,
        recovery_b: f64,
        recovery_c: f64,
        funding: FundingMode,
    ) -> Result<Self> {
        if !(lambda_b >= 0.0 && lambda_c >= 0.0 && lambda_b.is_finite() && lambda_c.is_finite()) {
            return Err(XvaError::InvalidParameter(
                "default intensities must be nonnegative".into(),
            ));
        }
        for r in [recovery_b, recovery_c] {
            if !(0.0..=1.0).contains(&r) {
                return Err(XvaError::InvalidParameter(format!(
                    "recovery rate {r} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            lambda_b,
            lambda_c,
            recovery_b,
            recovery_c,
            funding,
        })
    }

    /// Intensities 4%, recoveries 30%, uncollateralized.
    pub fn reference() -> Self {
        Self::new(0.04, 0.04, 0.3, 0.3, FundingMode::Uncollateralized).unwrap()
    }

    /// No default risk at all.
    pub fn riskless() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0, FundingMode::Collateralized).unwrap()
    }
}

/// Constants of the risky recursion derived from the credit parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub funding_spread: f64,
    /// `r + lambda_B + lambda_C`
    pub risky_rate: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    /// `lambda_B + lambda_C`
    pub intensity: f64,
}

impl DerivedConstants {
    /// Checks `1 - dt/2 * max(c_p, c_m) > 0`.
    pub fn check_stability(&self, dt: f64) -> Result<()> {
        let worst = 0.5 * dt * self.c_plus.max(self.c_minus);
        if worst >= 1.0 {
            Err(XvaError::StabilityViolation(worst))
        } else {
            Ok(())
        }
    }
}

pub fn derive_constants(mp: &MarketParams, cp: &CreditParams) -> Result<DerivedConstants> {
    let funding_spread = match cp.funding {
        FundingMode::Collateralized => 0.0,
        FundingMode::Uncollateralized => (1.0 - cp.recovery_b) * cp.lambda_b,
    };
    let dc = DerivedConstants {
        funding_spread,
        risky_rate: mp.rate() + cp.lambda_b + cp.lambda_c,
        c_plus: cp.lambda_b + cp.lambda_c * cp.recovery_c - funding_spread,
        c_minus: cp.lambda_c + cp.lambda_b * cp.recovery_b,
        intensity: cp.lambda_b + cp.lambda_c,
    };
    dc.check_stability(mp.dt())?;
    Ok(dc)
}

/// Lower-triangular `L` with `L * L^T` equal to the correlation matrix.
///
/// Tries a plain Cholesky factorization first and then escalates a diagonal
/// jitter through 1e-14, 1e-12, 1e-10 before giving up.
pub fn factor_correlation(corr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = corr.nrows();
    if corr.ncols() != d {
        return Err(XvaError::DimensionMismatch {
            expected: d,
            got: corr.ncols(),
        });
    }
    for i in 0..d {
        if (corr[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(XvaError::InvalidParameter(format!(
                "correlation diagonal entry {i} is {}",
                corr[(i, i)]
            )));
        }
        for j in 0..i {
            let (a, b) = (corr[(i, j)], corr[(j, i)]);
            if (a - b).abs() > 1e-12 {
                return Err(XvaError::InvalidParameter(format!(
                    "correlation not symmetric at ({i}, {j})"
                )));
            }
            if !(-1.0..=1.0).contains(&a) {
                return Err(XvaError::NotPositiveDefinite(format!(
                    ": correlation entry ({i}, {j}) = {a} outside [-1, 1]"
                )));
            }
        }
    }
    for jitter in [0.0, 1e-14, 1e-12, 1e-10] {
        let mut m = corr.clone();
        for i in 0..d {
            m[(i, i)] += jitter;
        }
        if let Some(ch) = m.cholesky() {
            return Ok(ch.unpack());
        }
    }
    Err(XvaError::NotPositiveDefinite(
        ": correlation matrix has no real square root".into(),
    ))
}

/// Swaption floor used by the reference experiments.
pub const REFERENCE_SWAPTION_FLOOR: f64 = -4.35;

type PayoffFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Payoff families available to the pricer.
#[derive(Clone)]
pub enum PayoffKind {
    /// `(K - (prod x_i)^(1/d))^+`
    GeometricPut { strike: f64 },
    /// `(max x_i - K)^+`
    CallOnMax { strike: f64 },
    /// `max(2/d * (sum of first half - sum of second half), K)` with `K < 0`.
    SwaptionWithFloor { floor: f64 },
    /// User supplied; must be pure and total on the positive orthant.
    Custom(PayoffFn),
}

impl fmt::Debug for PayoffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayoffKind::GeometricPut { strike } => write!(f, "GeometricPut({strike})"),
            PayoffKind::CallOnMax { strike } => write!(f, "CallOnMax({strike})"),
            PayoffKind::SwaptionWithFloor { floor } => write!(f, "SwaptionWithFloor({floor})"),
            PayoffKind::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Payoff {
    kind: PayoffKind,
    dim: usize,
}

impl Payoff {
    pub fn new(kind: PayoffKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(XvaError::InvalidParameter("payoff dimension must be positive".into()));
        }
        if let PayoffKind::SwaptionWithFloor { floor } = kind {
            if !dim.is_multiple_of(2) {
                return Err(XvaError::InvalidParameter(
                    "swaption needs an even number of assets".into(),
                ));
            }
            if floor >= 0.0 {
                return Err(XvaError::InvalidParameter("swaption floor must be negative".into()));
            }
        }
        Ok(Self { kind, dim })
    }

    pub fn geometric_put(strike: f64, dim: usize) -> Self {
        Self::new(PayoffKind::GeometricPut { strike }, dim).unwrap()
    }

    pub fn call_on_max(strike: f64, dim: usize) -> Self {
        Self::new(PayoffKind::CallOnMax { strike }, dim).unwrap()
    }

    pub fn swaption_with_floor(floor: f64, dim: usize) -> Result<Self> {
        Self::new(PayoffKind::SwaptionWithFloor { floor }, dim)
    }

    pub fn custom<F>(f: F, dim: usize) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(PayoffKind::Custom(Arc::new(f)), dim).unwrap()
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Short label used in reports.
    pub fn label(&self) -> &'static str {
        match self.kind {
            PayoffKind::GeometricPut { .. } => "geoput",
            PayoffKind::CallOnMax { .. } => "callmax",
            PayoffKind::SwaptionWithFloor { .. } => "swaption",
            PayoffKind::Custom(_) => "custom",
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(XvaError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Payoff at price vector `x`; the caller guarantees `x.len() == dim`.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            PayoffKind::GeometricPut { strike } => {
                let mean_log = x.iter().map(|v| v.ln()).sum::<f64>() / x.len() as f64;
                (strike - mean_log.exp()).max(0.0)
            }
            PayoffKind::CallOnMax { strike } => {
                let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (m - strike).max(0.0)
            }
            PayoffKind::SwaptionWithFloor { floor } => {
                let half = x.len() / 2;
                let first: f64 = x[..half].iter().sum();
                let second: f64 = x[half..].iter().sum();
                (2.0 / x.len() as f64 * (first - second)).max(*floor)
            }
            PayoffKind::Custom(f) => f(x),
        }
    }

    /// Payoff at `exp(log_x)`. `scratch` must hold `dim` entries and is
    /// only touched by payoffs that need the price vector itself.
    pub fn eval_log(&self, log_x: &[f64], scratch: &mut [f64]) -> f64 {
        match &self.kind {
            PayoffKind::GeometricPut { strike } => {
                let mean_log = log_x.iter().sum::<f64>() / log_x.len() as f64;
                (strike - mean_log.exp()).max(0.0)
            }
            PayoffKind::CallOnMax { strike } => {
                let m = log_x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (m.exp() - strike).max(0.0)
            }
            _ => {
                for (s, l) in scratch.iter_mut().zip(log_x) {
                    *s = l.exp();
                }
                self.eval_unchecked(scratch)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reference_constants() {
        let dc = derive_constants(&MarketParams::reference(2), &CreditParams::reference()).unwrap();
        assert_abs_diff_eq!(dc.funding_spread, 0.028, epsilon = 1e-15);
        assert_abs_diff_eq!(dc.risky_rate, 0.11, epsilon = 1e-15);
        assert_abs_diff_eq!(dc.c_plus, 0.024, epsilon = 1e-15);
        assert_abs_diff_eq!(dc.c_minus, 0.052, epsilon = 1e-15);
    }

    #[test]
    fn zero_default_constants() {
        let cp = CreditParams::new(0.0, 0.0, 0.7, 0.1, FundingMode::Uncollateralized).unwrap();
        let dc = derive_constants(&MarketParams::reference(1), &cp).unwrap();
        assert_eq!(dc.c_plus, 0.0);
        assert_eq!(dc.c_minus, 0.0);
        assert_eq!(dc.funding_spread, 0.0);
        assert_eq!(dc.risky_rate, 0.03);
    }

    #[test]
    fn collateralized_constants() {
        let cp = CreditParams::new(0.04, 0.04, 0.3, 0.3, FundingMode::Collateralized).unwrap();
        let dc = derive_constants(&MarketParams::reference(2), &cp).unwrap();
        assert_eq!(dc.funding_spread, 0.0);
        assert_abs_diff_eq!(dc.c_plus, 0.052, epsilon = 1e-15);
        assert_abs_diff_eq!(dc.c_minus, 0.052, epsilon = 1e-15);
    }

    #[test]
    fn unstable_step_is_rejected() {
        let mp = MarketParams::equicorrelated(1, 100.0, 0.03, 0.0, 0.25, 0.0, 100.0, 1).unwrap();
        let cp = CreditParams::new(0.5, 0.5, 0.0, 0.0, FundingMode::Collateralized).unwrap();
        assert!(matches!(
            derive_constants(&mp, &cp),
            Err(XvaError::StabilityViolation(_))
        ));
    }

    #[test]
    fn credit_validation() {
        assert!(CreditParams::new(-0.1, 0.0, 0.3, 0.3, FundingMode::Collateralized).is_err());
        assert!(CreditParams::new(0.1, 0.0, 1.3, 0.3, FundingMode::Collateralized).is_err());
    }

    #[test]
    fn payoff_examples() {
        let gp = Payoff::geometric_put(100.0, 2);
        assert_abs_diff_eq!(gp.eval(&[100.0, 100.0]).unwrap(), 0.0, epsilon = 1e-12);
        let cm = Payoff::call_on_max(100.0, 3);
        assert_abs_diff_eq!(cm.eval(&[90.0, 110.0, 95.0]).unwrap(), 10.0, epsilon = 1e-12);
        let sw = Payoff::swaption_with_floor(-5.0, 2).unwrap();
        assert_eq!(sw.eval(&[100.0, 108.0]).unwrap(), -5.0);
        assert!(matches!(
            cm.eval(&[1.0, 2.0]),
            Err(XvaError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn swaption_validation() {
        assert!(Payoff::swaption_with_floor(-5.0, 3).is_err());
        assert!(Payoff::swaption_with_floor(1.0, 2).is_err());
    }

    #[test]
    fn log_evaluation_matches_price_evaluation() {
        let x = [93.0f64, 104.5, 111.0, 87.25];
        let logs: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let mut scratch = [0.0; 4];
        for p in [
            Payoff::geometric_put(101.0, 4),
            Payoff::call_on_max(100.0, 4),
            Payoff::swaption_with_floor(-3.0, 4).unwrap(),
            Payoff::custom(|x| x[0] - x[3], 4),
        ] {
            let a = p.eval(&x).unwrap();
            let b = p.eval_log(&logs, &mut scratch);
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn identity_factor() {
        let l = factor_correlation(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(l, DMatrix::identity(4, 4));
    }

    #[test]
    fn two_asset_factor() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let l = factor_correlation(&c).unwrap();
        assert_abs_diff_eq!(l[(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 0)], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(l[(1, 1)], 0.96f64.sqrt(), epsilon = 1e-15);
        let back = &l * l.transpose();
        assert!((back - c).abs().max() <= 1e-12);
    }

    #[test]
    fn invalid_correlation() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(matches!(
            factor_correlation(&c),
            Err(XvaError::NotPositiveDefinite(_))
        ));
        // entries in range but indefinite
        let c = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.9, -0.9, 0.9, 1.0, 0.9, -0.9, 0.9, 1.0],
        );
        assert!(matches!(
            factor_correlation(&c),
            Err(XvaError::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn near_singular_equicorrelation_uses_jitter() {
        let c = DMatrix::from_element(3, 3, 1.0);
        let l = factor_correlation(&c).unwrap();
        assert!((&l * l.transpose() - c).abs().max() <= 1e-9);
    }

    #[test]
    fn market_validation() {
        let corr = DMatrix::identity(2, 2);
        let ok = MarketParams::new(
            vec![100.0, 100.0],
            0.03,
            vec![0.0, 0.0],
            vec![0.2, 0.3],
            corr.clone(),
            1.0,
            10,
        );
        assert!(ok.is_ok());
        let bad_spot = MarketParams::new(
            vec![100.0, -1.0],
            0.03,
            vec![0.0, 0.0],
            vec![0.2, 0.3],
            corr.clone(),
            1.0,
            10,
        );
        assert!(bad_spot.is_err());
        let bad_steps = MarketParams::new(
            vec![100.0, 100.0],
            0.03,
            vec![0.0, 0.0],
            vec![0.2, 0.3],
            corr,
            1.0,
            0,
        );
        assert!(bad_steps.is_err());
    }
}
