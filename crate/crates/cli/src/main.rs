mod config;
mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use basket_xva::{FundingMode, XvaEngine, XvaError};
use clap::{Args, Parser, Subcommand};

use config::{Config, ConfigError, ConventionName, Experiment, MethodName, PayoffName};
use report::Row;

#[derive(Debug, Parser)]
#[command(name = "basket-xva", version, about = "XVA of American basket options by GPR backward induction")]
struct Cli {
    /// Worker threads. Overrides the `threads` config key.
    #[arg(long, global = true, env = "XVA_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every experiment of a TOML config and write one CSV row per
    /// (dimension, method, points, convention).
    Run {
        config: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the fully expanded configuration.
        #[arg(long)]
        effective_config: Option<PathBuf>,
    },
    /// Price a single configuration given on the command line.
    Price(PriceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MtmArg {
    #[value(name = "V")]
    V,
    #[value(name = "Vhat")]
    Vhat,
    Both,
}

#[derive(Debug, Args)]
struct PriceArgs {
    #[arg(long, value_enum, default_value = "geoput")]
    payoff: PayoffArg,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, value_enum, default_value = "gpr-ei")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "both")]
    mtm: MtmArg,
    #[arg(long, default_value_t = 2000)]
    points: usize,
    #[arg(long, default_value_t = 10_000)]
    inner_paths: usize,
    #[arg(long, default_value_t = 10_000)]
    european_pairs: usize,
    #[arg(long, default_value_t = 1_000_000)]
    root_european_pairs: usize,
    #[arg(long)]
    no_control_variate: bool,
    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    spot: f64,
    #[arg(long, default_value_t = 100.0, allow_negative_numbers = true)]
    strike: f64,
    /// Floor of the swaption payoff.
    #[arg(long, default_value_t = config::DEFAULT_SWAPTION_FLOOR, allow_negative_numbers = true)]
    floor: f64,
    #[arg(long, default_value_t = 0.03, allow_negative_numbers = true)]
    rate: f64,
    /// Dividend yield of every asset.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    eta: f64,
    #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
    vol: f64,
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    rho: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    maturity: f64,
    #[arg(long, default_value_t = 40)]
    steps: usize,
    #[arg(long, default_value_t = 0.04, allow_negative_numbers = true)]
    lambda_b: f64,
    #[arg(long, default_value_t = 0.04, allow_negative_numbers = true)]
    lambda_c: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    recovery_b: f64,
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    recovery_c: f64,
    #[arg(long)]
    collateralized: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Print CSV instead of the text summary.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum PayoffArg {
    Geoput,
    Callmax,
    Swaption,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    GprEi,
    GprMc,
}

impl PriceArgs {
    fn config(&self) -> Config {
        let conventions = match self.mtm {
            MtmArg::V => vec![ConventionName::V],
            MtmArg::Vhat => vec![ConventionName::Vhat],
            MtmArg::Both => vec![ConventionName::V, ConventionName::Vhat],
        };
        let exp = Experiment {
            name: None,
            payoff: match self.payoff {
                PayoffArg::Geoput => PayoffName::Geoput,
                PayoffArg::Callmax => PayoffName::Callmax,
                PayoffArg::Swaption => PayoffName::Swaption,
            },
            dims: vec![self.d],
            methods: vec![match self.method {
                MethodArg::GprEi => MethodName::GprEi,
                MethodArg::GprMc => MethodName::GprMc,
            }],
            conventions,
            points: vec![self.points],
            inner_paths: self.inner_paths,
            european_pairs: self.european_pairs,
            root_european_pairs: self.root_european_pairs,
            control_variate: !self.no_control_variate,
            spot: self.spot,
            strike: self.strike,
            floor: self.floor,
            rate: self.rate,
            dividend: self.eta,
            vol: self.vol,
            rho: self.rho,
            maturity: self.maturity,
            steps: self.steps,
            lambda_b: self.lambda_b,
            lambda_c: self.lambda_c,
            recovery_b: self.recovery_b,
            recovery_c: self.recovery_c,
            funding: if self.collateralized {
                FundingMode::Collateralized
            } else {
                FundingMode::Uncollateralized
            },
            ..Experiment::default()
        };
        Config {
            seed: self.seed.unwrap_or(basket_xva::PricingBudget::default().seed),
            threads: None,
            experiments: vec![exp],
        }
    }
}

enum Failure {
    Config(ConfigError),
    Numerical(XvaError),
    Io(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<XvaError> for Failure {
    fn from(e: XvaError) -> Self {
        Failure::Numerical(e)
    }
}

/// Prices every job of `cfg`; the second element holds the European
/// control-variate value of each row.
fn execute(cfg: &Config) -> Result<Vec<(Row, f64)>, Failure> {
    let mut rows = Vec::new();
    for exp in &cfg.experiments {
        for job in exp.jobs(cfg.seed) {
            let job = job?;
            let engine = XvaEngine::new(
                job.market.clone(),
                job.credit,
                job.payoff.clone(),
                job.method,
                job.budget.clone(),
            )?;
            let results = engine.run_conventions(&job.conventions)?;
            for (conv, res) in job.conventions.iter().zip(&results) {
                rows.push((Row::new(&job, *conv, res), res.european_v0));
            }
        }
    }
    Ok(rows)
}

fn configure_threads(flag: Option<usize>, cfg: &Config) -> Result<(), Failure> {
    if let Some(n) = flag.or(cfg.threads) {
        if n == 0 {
            return Err(Failure::Config(ConfigError {
                line: None,
                message: "thread count must be positive".into(),
            }));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Io(e.to_string()))?;
    }
    Ok(())
}

fn real_main(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            output,
            effective_config,
        } => {
            let text = fs::read_to_string(&config).map_err(|e| {
                Failure::Config(ConfigError {
                    line: None,
                    message: format!("cannot read {}: {e}", config.display()),
                })
            })?;
            let cfg = Config::parse(&text).map_err(|e| ConfigError {
                message: match e.line {
                    Some(l) => format!("{}:{l}: {}", config.display(), e.message),
                    None => format!("{}: {}", config.display(), e.message),
                },
                line: None,
            })?;
            configure_threads(cli.threads, &cfg)?;
            if let Some(path) = effective_config {
                fs::write(&path, cfg.to_toml()).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            }
            let rows: Vec<Row> = execute(&cfg)?.into_iter().map(|(r, _)| r).collect();
            let res = match output {
                Some(path) => {
                    let file = fs::File::create(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
                    report::write_csv(file, &rows)
                }
                None => report::write_csv(std::io::stdout().lock(), &rows),
            };
            res.map_err(|e| Failure::Io(e.to_string()))
        }
        Command::Price(args) => {
            let cfg = args.config();
            cfg.experiments[0].validate().map_err(|message| ConfigError { line: None, message })?;
            configure_threads(cli.threads, &cfg)?;
            let rows = execute(&cfg)?;
            let io = |e: std::io::Error| Failure::Io(e.to_string());
            if args.csv {
                let plain: Vec<Row> = rows.into_iter().map(|(r, _)| r).collect();
                report::write_csv(std::io::stdout().lock(), &plain).map_err(|e| Failure::Io(e.to_string()))
            } else {
                for (row, european) in &rows {
                    report::print_summary(std::io::stdout().lock(), row, *european).map_err(io)?;
                }
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(e)) => {
            eprintln!("numerical error in {}: {e}", e.module());
            ExitCode::from(3)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
