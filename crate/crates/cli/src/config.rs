//! Experiment configuration files.
//!
//! A config is TOML with optional top-level keys (`seed`, `threads`) and one
//! `[[experiment]]` table per experiment. Every experiment key has a default
//! equal to the reference market and credit setup, so configs only list
//! what differs. Each experiment expands into the cross product of its
//! `dims`, `methods` and `points` lists.

use std::fmt;

use basket_xva::bermudan::{Method, PricingBudget};
use basket_xva::{CreditParams, FundingMode, MarketParams, MtmConvention, Payoff, XvaError};
use serde::{Deserialize, Serialize};

/// Floor of the two-portfolio swaption when the config does not set one.
pub const DEFAULT_SWAPTION_FLOOR: f64 = basket_xva::market::REFERENCE_SWAPTION_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayoffName {
    Geoput,
    Callmax,
    Swaption,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    GprEi,
    GprMc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConventionName {
    V,
    Vhat,
}

impl ConventionName {
    pub fn convention(self) -> MtmConvention {
        match self {
            ConventionName::V => MtmConvention::RisklessMark,
            ConventionName::Vhat => MtmConvention::RiskyMark,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub name: Option<String>,
    pub payoff: PayoffName,
    pub dims: Vec<usize>,
    pub methods: Vec<MethodName>,
    pub conventions: Vec<ConventionName>,
    pub points: Vec<usize>,
    pub inner_paths: usize,
    pub european_pairs: usize,
    pub root_european_pairs: usize,
    pub hyper_subsample: usize,
    pub control_variate: bool,
    pub spot: f64,
    pub strike: f64,
    pub floor: f64,
    pub rate: f64,
    pub dividend: f64,
    pub vol: f64,
    pub rho: f64,
    pub maturity: f64,
    pub steps: usize,
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub recovery_b: f64,
    pub recovery_c: f64,
    pub funding: FundingMode,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            name: None,
            payoff: PayoffName::Geoput,
            dims: vec![2],
            methods: vec![MethodName::GprEi],
            conventions: vec![ConventionName::V, ConventionName::Vhat],
            points: vec![2000],
            inner_paths: 10_000,
            european_pairs: 10_000,
            root_european_pairs: 1_000_000,
            hyper_subsample: 400,
            control_variate: true,
            spot: 100.0,
            strike: 100.0,
            floor: DEFAULT_SWAPTION_FLOOR,
            rate: 0.03,
            dividend: 0.0,
            vol: 0.25,
            rho: 0.2,
            maturity: 1.0,
            steps: 40,
            lambda_b: 0.04,
            lambda_c: 0.04,
            recovery_b: 0.3,
            recovery_c: 0.3,
            funding: FundingMode::Uncollateralized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(rename = "experiment")]
    pub experiments: Vec<Experiment>,
}

fn default_seed() -> u64 {
    PricingBudget::default().seed
}

/// Configuration problem, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the `index`-th `[[experiment]]` header.
fn experiment_line(text: &str, index: usize) -> Option<usize> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| l.trim_start().starts_with("[[experiment]]"))
        .nth(index)
        .map(|(i, _)| i + 1)
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError {
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        if cfg.experiments.is_empty() {
            return Err(ConfigError {
                line: None,
                message: "config defines no [[experiment]]".into(),
            });
        }
        for (i, exp) in cfg.experiments.iter().enumerate() {
            exp.validate().map_err(|message| ConfigError {
                line: experiment_line(text, i),
                message,
            })?;
        }
        if cfg.threads == Some(0) {
            return Err(ConfigError {
                line: text
                    .lines()
                    .position(|l| l.trim_start().starts_with("threads"))
                    .map(|i| i + 1),
                message: "threads must be positive".into(),
            });
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// One priced configuration: a single dimension, method and cloud size.
#[derive(Debug, Clone)]
pub struct Job {
    pub payoff_name: PayoffName,
    pub market: MarketParams,
    pub credit: CreditParams,
    pub payoff: Payoff,
    pub method: Method,
    pub budget: PricingBudget,
    pub conventions: Vec<MtmConvention>,
}

impl Experiment {
    pub fn validate(&self) -> Result<(), String> {
        for (key, empty) in [
            ("dims", self.dims.is_empty()),
            ("methods", self.methods.is_empty()),
            ("conventions", self.conventions.is_empty()),
            ("points", self.points.is_empty()),
        ] {
            if empty {
                return Err(format!("`{key}` must not be empty"));
            }
        }
        if self.payoff == PayoffName::Swaption && self.dims.iter().any(|d| d % 2 == 1) {
            return Err("swaption needs even dimensions".into());
        }
        if self.methods.contains(&MethodName::GprMc) && self.inner_paths == 0 {
            return Err("`inner_paths` must be positive for gpr-mc".into());
        }
        // surface model-level validation errors at parse time
        for job in self.jobs(0) {
            job.map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn market(&self, d: usize) -> basket_xva::Result<MarketParams> {
        MarketParams::equicorrelated(d, self.spot, self.rate, self.dividend, self.vol, self.rho, self.maturity, self.steps)
    }

    pub fn credit(&self) -> basket_xva::Result<CreditParams> {
        CreditParams::new(self.lambda_b, self.lambda_c, self.recovery_b, self.recovery_c, self.funding)
    }

    pub fn payoff(&self, d: usize) -> basket_xva::Result<Payoff> {
        match self.payoff {
            PayoffName::Geoput => Ok(Payoff::geometric_put(self.strike, d)),
            PayoffName::Callmax => Ok(Payoff::call_on_max(self.strike, d)),
            PayoffName::Swaption => Payoff::swaption_with_floor(self.floor, d),
        }
    }

    pub fn method(&self, name: MethodName) -> Method {
        match name {
            MethodName::GprEi => Method::GprEi,
            MethodName::GprMc => Method::GprMc {
                inner_paths: self.inner_paths,
            },
        }
    }

    pub fn jobs(&self, seed: u64) -> impl Iterator<Item = Result<Job, XvaError>> + '_ {
        self.dims.iter().flat_map(move |&d| {
            self.methods.iter().flat_map(move |&m| {
                self.points.iter().map(move |&p| {
                    Ok(Job {
                        payoff_name: self.payoff,
                        market: self.market(d)?,
                        credit: self.credit()?,
                        payoff: self.payoff(d)?,
                        method: self.method(m),
                        budget: PricingBudget {
                            points: p,
                            control_variate: self.control_variate,
                            european_pairs: self.european_pairs,
                            root_european_pairs: self.root_european_pairs,
                            hyper_subsample: self.hyper_subsample,
                            optimize_hyperparameters: true,
                            seed,
                        },
                        conventions: self.conventions.iter().map(|c| c.convention()).collect(),
                    })
                })
            })
        })
    }
}
