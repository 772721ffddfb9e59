//! Pointwise residual checks of the differential inequality, in the
//! transformed variable `τ` and in physical time `t`, and the four-property
//! oscillation certificate for the constructed trajectory.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::extremal::LogTrajectory;
use crate::function::{GridFunction, PiecewiseC1Function};
use crate::oscillator::{bridge_start, DEFAULT_GRID_DENSITY};
use crate::par::{self, Execution};
use crate::reparam::{pushforward, tail_bound, ReparamResult};

/// Slack allowed on the pushforward channel, which carries inverse-map noise.
pub const PUSHFORWARD_SLACK: f64 = 1e-6;
/// Tolerance on `x(tₙ) = M/(n+1)`.
pub const CROSSING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub grid: Vec<f64>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub argmax_index: usize,
    pub argmax: f64,
    pub max_abs_residual: f64,
    pub slack: f64,
    pub pass: bool,
}

impl ResidualReport {
    fn assemble(grid: Vec<f64>, residuals: Vec<f64>, slack: f64) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::InvalidConfig("empty residual grid".into()));
        }
        if !(slack >= 0.0) {
            return Err(Error::domain("slack", slack, 0.0, f64::INFINITY));
        }
        if let Some(i) = residuals.iter().position(|r| r.is_nan()) {
            return Err(Error::Numeric(format!("residual is NaN at {}", grid[i])));
        }
        // first index wins on ties, so the report does not depend on scheduling
        let mut argmax_index = 0;
        for (i, &r) in residuals.iter().enumerate() {
            if r > residuals[argmax_index] {
                argmax_index = i;
            }
        }
        let max_residual = residuals[argmax_index];
        let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        Ok(Self {
            argmax: grid[argmax_index],
            grid,
            residuals,
            max_residual,
            argmax_index,
            max_abs_residual,
            slack,
            pass: max_residual <= slack,
        })
    }

    pub fn summary(&self) -> ResidualSummary {
        ResidualSummary {
            points: self.grid.len(),
            max_residual: self.max_residual,
            argmax: self.argmax,
            max_abs_residual: self.max_abs_residual,
            slack: self.slack,
            pass: self.pass,
        }
    }
}

/// [`ResidualReport`] without the per-point arrays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualSummary {
    pub points: usize,
    pub max_residual: f64,
    pub argmax: f64,
    pub max_abs_residual: f64,
    pub slack: f64,
    pub pass: bool,
}

/// `X'(τ) - 1 - X(τ)·e^τ` with the analytic derivative.
pub fn residual_transformed(
    x: &PiecewiseC1Function,
    grid: &[f64],
    slack: f64,
    exec: Execution,
) -> Result<ResidualReport> {
    let residuals = par::try_map(exec, grid, |&tau| {
        let (v, d) = x.eval_with_derivative(tau)?;
        Ok::<_, Error>(d - 1.0 - v * tau.exp())
    })?;
    ResidualReport::assemble(grid.to_vec(), residuals, slack)
}

/// `ẋ - x - x²·exp(τ(t))` from the derivative and accumulation channels.
pub fn residual_original(x: &GridFunction, slack: f64, exec: Execution) -> Result<ResidualReport> {
    let d = x.derivatives.as_ref().ok_or(Error::MissingChannel("derivative"))?;
    let acc = x.accumulation.as_ref().ok_or(Error::MissingChannel("accumulation"))?;
    let idx: Vec<usize> = (0..x.len()).collect();
    let residuals = par::map(exec, &idx, |&i| {
        let v = x.value(i);
        d[i] - v - v * v * acc[i].exp()
    });
    ResidualReport::assemble(x.abscissae.clone(), residuals, slack)
}

/// Residual of `(log X)' = e^(-log X) + e^τ` on a sampled log trajectory,
/// relative to the right-hand side. Derivatives come from five-point
/// central differences (one-sided at the two ends of each side), so the
/// trajectory must be uniformly spaced.
pub fn residual_log_trajectory(traj: &LogTrajectory, slack: f64) -> Result<ResidualReport> {
    let (tau, y) = (&traj.abscissae, &traj.log_values);
    let n = tau.len();
    if n < 5 {
        return Err(Error::InvalidConfig(format!("need at least 5 samples, got {n}")));
    }
    let h = (tau[n - 1] - tau[0]) / (n - 1) as f64;
    if tau.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return Err(Error::InvalidConfig("log trajectory must be uniformly spaced".into()));
    }
    let deriv = |i: usize| -> f64 {
        match i {
            0 => (-25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4]) / (12.0 * h),
            1 => (-3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4]) / (12.0 * h),
            i if i == n - 2 => {
                -(-3.0 * y[n - 1] - 10.0 * y[n - 2] + 18.0 * y[n - 3] - 6.0 * y[n - 4] + y[n - 5]) / (12.0 * h)
            }
            i if i == n - 1 => {
                -(-25.0 * y[n - 1] + 48.0 * y[n - 2] - 36.0 * y[n - 3] + 16.0 * y[n - 4] - 3.0 * y[n - 5]) / (12.0 * h)
            }
            i => (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * h),
        }
    };
    let residuals = (0..n)
        .map(|i| {
            let rhs = (-y[i]).exp() + tau[i].exp();
            (deriv(i) - rhs) / rhs
        })
        .collect();
    ResidualReport::assemble(tau.clone(), residuals, slack)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    /// `x(0) = M`.
    InitialValue,
    /// The differential inequality holds along the pushforward.
    Inequality,
    /// Branch peaks dominate an increasing, unbounded witness sequence.
    UnboundedPeaks,
    /// `x(tₙ) = M/(n+1)` with `tₙ ↑ T★`.
    Crossings,
}

impl Property {
    pub fn label(self) -> &'static str {
        match self {
            Property::InitialValue => "(i)",
            Property::Inequality => "(ii)",
            Property::UnboundedPeaks => "(iii)",
            Property::Crossings => "(iv)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub property: Property,
    pub pass: bool,
    pub detail: String,
    /// Where the first failure, or the binding point, was found.
    pub location: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossing {
    pub n: u32,
    pub t: f64,
    pub x: f64,
    pub gap_to_blowup: f64,
    pub gap_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationCertificate {
    pub amplitude: f64,
    pub depth: u32,
    pub checks: Vec<PropertyCheck>,
    pub peaks: Vec<f64>,
    pub witness: Vec<f64>,
    pub crossings: Vec<Crossing>,
    pub residual: ResidualSummary,
    pub pass: bool,
}

impl OscillationCertificate {
    pub fn failures(&self) -> impl Iterator<Item = &PropertyCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Witness `M·(e^(1/4) - 1)·e^(n/2)` below the `n`-th peak.
pub fn peak_witness(amplitude: f64, n: u32) -> f64 {
    amplitude * 0.25f64.exp_m1() * (0.5 * f64::from(n)).exp()
}

pub fn oscillation_certificate(
    x: &PiecewiseC1Function,
    r: &ReparamResult,
    amplitude: f64,
    depth: u32,
) -> Result<OscillationCertificate> {
    oscillation_certificate_with(x, r, amplitude, depth, DEFAULT_GRID_DENSITY, Execution::default())
}

/// Checks properties (i)–(iv) from raw evaluations of `x` and the time map.
pub fn oscillation_certificate_with(
    x: &PiecewiseC1Function,
    r: &ReparamResult,
    amplitude: f64,
    depth: u32,
    density: usize,
    exec: Execution,
) -> Result<OscillationCertificate> {
    let end = f64::from(depth + 1);
    if x.domain_end() < end || r.n_max < depth {
        return Err(Error::InvalidConfig(format!(
            "certificate for N = {depth} needs a profile and time table reaching {end}"
        )));
    }
    let mut checks = Vec::with_capacity(4);

    let x0 = x.eval(0.0)?;
    let ok = (x0 - amplitude).abs() <= 1e-12 * amplitude;
    checks.push(PropertyCheck {
        property: Property::InitialValue,
        pass: ok,
        detail: format!("x(0) = {x0:e}, M = {amplitude:e}"),
        location: Some(0.0),
    });

    // τ-grid → t → pushforward, which inverts the time map again
    let taus: Vec<f64> = x.segment_grid(density).into_iter().filter(|&t| t < end).collect();
    let ts = par::try_map(exec, &taus, |&tau| r.time_of(x, tau))?;
    let pf = pushforward(r, x, &ts, exec)?;
    let report = residual_original(&pf, PUSHFORWARD_SLACK, exec)?;
    checks.push(PropertyCheck {
        property: Property::Inequality,
        pass: report.pass,
        detail: format!(
            "max residual {:e} over {} points (slack {:e})",
            report.max_residual,
            report.grid.len(),
            report.slack
        ),
        location: Some(report.argmax),
    });

    // peaks are left limits at each bridge start (knot 2n+1)
    let peaks: Vec<f64> = (0..=depth).map(|n| x.left_limit(2 * n as usize + 1).0).collect();
    let witness: Vec<f64> = (0..=depth).map(|n| peak_witness(amplitude, n)).collect();
    let below = (0..=depth as usize).find(|&n| !(peaks[n] >= witness[n]));
    let not_increasing = (2..=depth as usize).find(|&n| !(peaks[n] > peaks[n - 1]));
    let (pass, detail, location) = match (below, not_increasing) {
        (Some(n), _) => (
            false,
            format!("peak {n} = {:e} below witness {:e}", peaks[n], witness[n]),
            Some(bridge_start(n as u32)),
        ),
        (None, Some(n)) => (
            false,
            format!(
                "peak {n} = {:e} does not exceed peak {} = {:e}",
                peaks[n],
                n - 1,
                peaks[n - 1]
            ),
            Some(bridge_start(n as u32)),
        ),
        (None, None) => (
            true,
            format!(
                "{} peaks above witness, increasing from n = 1, last = {:e}",
                peaks.len(),
                peaks[depth as usize]
            ),
            Some(bridge_start(depth)),
        ),
    };
    checks.push(PropertyCheck {
        property: Property::UnboundedPeaks,
        pass,
        detail,
        location,
    });

    let crossings = (0..=depth)
        .map(|n| {
            let tn = r.time_of(x, f64::from(n))?;
            let gap_bound = (n >= 1).then(|| tail_bound(n - 1, amplitude) + r.t_star_error_bound);
            Ok(Crossing {
                n,
                t: tn,
                x: x.eval(f64::from(n))?,
                gap_to_blowup: r.t_star - tn,
                gap_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    checks.push(crossing_check(&crossings, amplitude));

    let pass = checks.iter().all(|c| c.pass);
    Ok(OscillationCertificate {
        amplitude,
        depth,
        checks,
        peaks,
        witness,
        crossings,
        residual: report.summary(),
        pass,
    })
}

fn crossing_check(crossings: &[Crossing], amplitude: f64) -> PropertyCheck {
    let fail = |detail: String, c: &Crossing| PropertyCheck {
        property: Property::Crossings,
        pass: false,
        detail,
        location: Some(c.t),
    };
    for (i, c) in crossings.iter().enumerate() {
        let want = amplitude / (f64::from(c.n) + 1.0);
        if !((c.x - want).abs() <= CROSSING_TOL * want.max(1.0)) {
            return fail(format!("x(t_{}) = {:e}, expected {want:e}", c.n, c.x), c);
        }
        if !(c.gap_to_blowup > 0.0) {
            return fail(format!("t_{} = {:e} is not before T*", c.n, c.t), c);
        }
        if let Some(b) = c.gap_bound {
            if !(c.gap_to_blowup <= b) {
                return fail(
                    format!("T* - t_{} = {:e} exceeds tail bound {b:e}", c.n, c.gap_to_blowup),
                    c,
                );
            }
        }
        if i > 0 && !(c.t > crossings[i - 1].t) {
            return fail(format!("t_{} does not exceed t_{}", c.n, c.n - 1), c);
        }
    }
    let last = crossings.last().expect("at least one crossing");
    PropertyCheck {
        property: Property::Crossings,
        pass: true,
        detail: format!(
            "{} crossings at M/(n+1), T* - t_{} = {:e}",
            crossings.len(),
            last.n,
            last.gap_to_blowup
        ),
        location: Some(last.t),
    }
}
