use super::{xva_european_closed_form, BenchmarkPrice, Exercise, RiskySpec};
use crate::error::{Result, XvaError};
use crate::market::{MarketParams, Payoff};
use crate::xva::{source_g, MtmConvention};

/// Finite-difference grid in `log S`, centered on the log-spot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeGrid {
    pub time_steps: usize,
    /// Rounded up to an even number so the spot sits on a node.
    pub space_steps: usize,
    /// Half-width of the grid in units of `sigma * sqrt(T)`.
    pub half_width_sd: f64,
    /// Fully implicit half steps replacing the first Crank–Nicolson step
    /// and the one after every exercise date.
    pub rannacher_steps: usize,
}

impl PdeGrid {
    pub fn new(time_steps: usize, space_steps: usize) -> Self {
        Self {
            time_steps,
            space_steps,
            half_width_sd: 8.0,
            rannacher_steps: 2,
        }
    }
}

/// Tridiagonal operator `a V_xx + b V_x - k_j V` on a uniform grid.
struct Operator {
    lower: f64,
    upper: f64,
    diag: Vec<f64>,
}

impl Operator {
    fn new(vol: f64, drift: f64, dx: f64, reaction: &[f64]) -> Self {
        let a = 0.5 * vol * vol / (dx * dx);
        let b = 0.5 * drift / dx;
        Self {
            lower: a - b,
            upper: a + b,
            diag: reaction.iter().map(|k| -2.0 * a - k).collect(),
        }
    }

    fn apply(&self, v: &[f64], j: usize) -> f64 {
        self.lower * v[j - 1] + self.diag[j] * v[j] + self.upper * v[j + 1]
    }

    /// One theta step: `(I - theta dt L) new = (I + (1-theta) dt L) old +
    /// dt * source`, with Dirichlet values `lo`, `hi` at the new level.
    #[allow(clippy::too_many_arguments)]
    fn step(&self, theta: f64, dt: f64, old: &[f64], source: &[f64], lo: f64, hi: f64, new: &mut [f64], c: &mut [f64]) {
        let m = old.len() - 1;
        let (lw, up) = (-theta * dt * self.lower, -theta * dt * self.upper);
        new[0] = lo;
        new[m] = hi;
        // forward sweep of the Thomas algorithm, reusing `new` for the rhs
        let mut prev_c = 0.0;
        let mut prev_d = lo;
        for j in 1..m {
            let mut rhs = old[j] + (1.0 - theta) * dt * self.apply(old, j) + dt * source[j];
            let diag = 1.0 - theta * dt * self.diag[j];
            if j == m - 1 {
                rhs -= up * hi;
            }
            let (denom, rhs) = if j == 1 {
                (diag, rhs - lw * lo)
            } else {
                (diag - lw * prev_c, rhs - lw * prev_d)
            };
            prev_c = if j == m - 1 { 0.0 } else { up / denom };
            prev_d = rhs / denom;
            c[j] = prev_c;
            new[j] = prev_d;
        }
        for j in (1..m - 1).rev() {
            new[j] -= c[j] * new[j + 1];
        }
    }
}

/// Crank–Nicolson solution of the one-dimensional pricing equation in
/// `log S`, with pointwise projection on exercise dates.
///
/// The risky variant solves `V_hat_t + L V_hat - (r + lambda) V_hat + g(M)
/// = 0` alongside `V`; under `M = V_hat` the sign of `V_hat` in `g` is
/// lagged by one time step.
pub fn pde_crank_nicolson_1d(
    mp: &MarketParams,
    payoff: &Payoff,
    grid: PdeGrid,
    exercise: Exercise,
    risky: Option<RiskySpec>,
) -> Result<BenchmarkPrice> {
    if mp.dim() != 1 || payoff.dim() != 1 {
        return Err(XvaError::DimensionMismatch {
            expected: 1,
            got: mp.dim(),
        });
    }
    if grid.time_steps == 0 || grid.space_steps < 4 {
        return Err(XvaError::InvalidParameter("PDE grid needs time steps and at least 4 space steps".into()));
    }
    if grid.half_width_sd < 6.0 {
        return Err(XvaError::GridTooCoarse(format!(
            "grid spans {} standard deviations around the spot, need at least 6",
            grid.half_width_sd
        )));
    }
    let stride = match exercise {
        Exercise::Bermudan { intervals } => {
            if intervals == 0 || !grid.time_steps.is_multiple_of(intervals) {
                return Err(XvaError::InvalidParameter(format!(
                    "{} time steps do not align with {intervals} exercise intervals",
                    grid.time_steps
                )));
            }
            grid.time_steps / intervals
        }
        _ => 1,
    };
    let projects = |k: usize| match exercise {
        Exercise::European => false,
        Exercise::American => true,
        Exercise::Bermudan { .. } => k.is_multiple_of(stride),
    };

    let (r, eta, vol, t) = (mp.rate(), mp.dividends()[0], mp.vols()[0], mp.maturity());
    let m = grid.space_steps + grid.space_steps % 2;
    let half_width = grid.half_width_sd * vol * t.sqrt();
    let dx = 2.0 * half_width / m as f64;
    let x0 = mp.spot()[0].ln();
    let s: Vec<f64> = (0..=m).map(|j| (x0 - half_width + j as f64 * dx).exp()).collect();
    let h: Vec<f64> = s.iter().map(|x| payoff.eval_unchecked(&[*x])).collect();

    // truncation check: the discounted payoff at the far boundaries must be
    // reproduced by the Dirichlet data within the tolerance
    let tail = statrs::function::erf::erfc(grid.half_width_sd / std::f64::consts::SQRT_2);
    if tail * h[0].abs().max(h[m].abs()).max(mp.spot()[0]) > 1e-6 * mp.spot()[0] {
        return Err(XvaError::GridTooCoarse(format!(
            "tail mass {tail:e} beyond the grid"
        )));
    }

    let drift = r - eta - 0.5 * vol * vol;
    let op = Operator::new(vol, drift, dx, &vec![r; m + 1]);
    let dtau = t / grid.time_steps as f64;
    let boundary = |tau: f64, j: usize| {
        let fwd = s[j] * ((r - eta) * tau).exp();
        (-r * tau).exp() * payoff.eval_unchecked(&[fwd])
    };

    let mut v = h.clone();
    let mut v_new = vec![0.0; m + 1];
    let mut w = h.clone();
    let mut w_new = vec![0.0; m + 1];
    let mut scratch = vec![0.0; m + 1];
    let mut source = vec![0.0; m + 1];
    let mut implicit_left = grid.rannacher_steps;
    let dc = risky.map(|spec| spec.constants);
    let risky_op = dc.map(|dc| Operator::new(vol, drift, dx, &vec![dc.risky_rate; m + 1]));

    for k in 1..=grid.time_steps {
        let tau = k as f64 * dtau;
        let substeps: &[(f64, f64)] = if implicit_left > 0 {
            &[(1.0, 0.5), (1.0, 0.5)]
        } else {
            &[(0.5, 1.0)]
        };
        implicit_left = implicit_left.saturating_sub(1);
        let mut tau_sub = tau - dtau;
        for &(theta, frac) in substeps {
            let h_dt = frac * dtau;
            tau_sub += h_dt;
            source.fill(0.0);
            let (lo, hi) = (boundary(tau_sub, 0), boundary(tau_sub, m));
            op.step(theta, h_dt, &v, &source, lo, hi, &mut v_new, &mut scratch);

            if let (Some(spec), Some(dc), Some(rop)) = (risky.as_ref(), dc.as_ref(), risky_op.as_ref()) {
                let rb = |val: f64| {
                    if val > 0.0 {
                        val - xva_european_closed_form(val, dc, tau_sub, spec.convention)
                    } else {
                        val
                    }
                };
                let (wlo, whi) = (rb(lo), rb(hi));
                match spec.convention {
                    MtmConvention::RisklessMark => {
                        for j in 0..=m {
                            source[j] = theta * source_g(v_new[j], dc) + (1.0 - theta) * source_g(v[j], dc);
                        }
                        rop.step(theta, h_dt, &w, &source, wlo, whi, &mut w_new, &mut scratch);
                    }
                    MtmConvention::RiskyMark => {
                        let reaction: Vec<f64> = w
                            .iter()
                            .map(|x| dc.risky_rate - if *x >= 0.0 { dc.c_plus } else { dc.c_minus })
                            .collect();
                        let lop = Operator::new(vol, drift, dx, &reaction);
                        lop.step(theta, h_dt, &w, &source, wlo, whi, &mut w_new, &mut scratch);
                    }
                }
                std::mem::swap(&mut w, &mut w_new);
            }
            std::mem::swap(&mut v, &mut v_new);
        }
        if projects(k) {
            for j in 0..=m {
                v[j] = v[j].max(h[j]);
                w[j] = w[j].max(h[j]);
            }
            if matches!(exercise, Exercise::Bermudan { .. }) {
                implicit_left = grid.rannacher_steps;
            }
        }
    }
    Ok(BenchmarkPrice {
        riskless: v[m / 2],
        risky: risky.map(|_| w[m / 2]),
    })
}
