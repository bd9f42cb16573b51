//! Total value adjustment (XVA) of American basket derivatives.
//!
//! Underlyings follow a correlated multi-dimensional Black–Scholes model and
//! both counterparties may default. Riskless and risky Bermudan values are
//! computed by backward induction over quasi-random state clouds, with a
//! Gaussian process surrogate carrying the value function between exercise
//! dates. Continuation values come either from one-step inner Monte Carlo
//! (`Method::GprMc`) or from exact integration of the squared-exponential
//! surrogate against the Gaussian transition density (`Method::GprEi`).
//!
//! The [`benchmarks`] module holds independent one-dimensional pricers (CRR
//! tree, Crank–Nicolson) and closed-form European XVA bounds used to verify
//! the high-dimensional engine.

pub mod benchmarks;
pub mod bermudan;
pub mod error;
pub mod gpr;
pub mod market;
pub mod stochastic;
pub mod xva;

pub use bermudan::{price_riskless, Method, PricingBudget, RisklessInduction};
pub use error::{Result, XvaError};
pub use market::{
    derive_constants, factor_correlation, CreditParams, DerivedConstants, FundingMode,
    MarketParams, Payoff,
};
pub use stochastic::{RngPolicy, Scrambling};
pub use xva::{compute_xva, solve_implicit, source_g, MtmConvention, PricingResult, XvaEngine};
