use std::io::Write;

use basket_xva::{MtmConvention, PricingResult};
use serde::Serialize;

use crate::config::{Job, PayoffName};

/// One CSV row. Field names are the column headers.
#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub payoff: &'static str,
    pub d: usize,
    pub method: &'static str,
    pub convention: &'static str,
    #[serde(rename = "P")]
    pub points: usize,
    #[serde(rename = "M_paths")]
    pub inner_paths: usize,
    #[serde(rename = "V0")]
    pub v0: f64,
    #[serde(rename = "Vhat0")]
    pub vhat0: f64,
    #[serde(rename = "XVA")]
    pub xva: f64,
    pub std_err: f64,
    pub wall_time_s: f64,
    pub seed: u64,
}

impl Row {
    pub fn new(job: &Job, convention: MtmConvention, res: &PricingResult) -> Self {
        Self {
            payoff: match job.payoff_name {
                PayoffName::Geoput => "geoput",
                PayoffName::Callmax => "callmax",
                PayoffName::Swaption => "swaption",
            },
            d: job.market.dim(),
            method: job.method.label(),
            convention: convention.label(),
            points: job.budget.points,
            inner_paths: job.method.inner_paths(),
            v0: res.riskless_v0,
            vhat0: res.risky_v0,
            // exact identity on the reported values
            xva: res.riskless_v0 - res.risky_v0,
            std_err: res.european_std_error,
            wall_time_s: res.seconds,
            seed: job.budget.seed,
        }
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[Row]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn print_summary<W: Write>(mut out: W, row: &Row, european: f64) -> std::io::Result<()> {
    writeln!(
        out,
        "{} d={} {} M={} P={}{}",
        row.payoff,
        row.d,
        row.method,
        row.convention,
        row.points,
        if row.inner_paths > 0 {
            format!(" inner_paths={}", row.inner_paths)
        } else {
            String::new()
        }
    )?;
    writeln!(out, "  V0       {:.6}", row.v0)?;
    writeln!(out, "  Vhat0    {:.6}", row.vhat0)?;
    writeln!(out, "  XVA      {:.6}", row.xva)?;
    writeln!(out, "  European {european:.6} +/- {:.6}", row.std_err)?;
    writeln!(out, "  time     {:.1} s", row.wall_time_s)
}
