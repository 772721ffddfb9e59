//! The equality case `dX/dτ = 1 + X·e^τ`.
//!
//! With the integrating factor `exp(-e^τ)` the solution is
//! `X(τ) = e^(e^τ)·(M/e + ∫₀^τ e^(-e^s) ds)`, which overflows f64 once
//! `τ ≳ 6.5`. Everything here is carried as `log X`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::quadrature::adaptive_simpson;

pub const MAX_TAU: f64 = 15.0;
pub const MIN_STEPS: usize = 100;
/// Below `z = e^τ` of this size the asymptotic series for `E₁(z)` is not used.
const ASYMPTOTIC_Z: f64 = 50.0;

/// `E₁(z) = ∫_z^∞ e^(-u)/u du` for `z ≥ 50`, as `(ln E₁(z), remainder)`.
///
/// Sums `Σ (-1)^k k!/z^k` until the next term drops below `1e-17`; for this
/// alternating asymptotic series the truncation error is bounded by the
/// first omitted term, returned as a relative remainder.
fn log_e1_large(z: f64) -> (f64, f64) {
    debug_assert!(z >= ASYMPTOTIC_Z);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= -k / z;
        if term.abs() < 1e-17 {
            break;
        }
        sum += term;
        k += 1.0;
    }
    (-z - z.ln() + sum.ln(), term.abs() / sum)
}

/// `E₁(1) = -γ - Σ_{k≥1} (-1)^k / (k·k!)`.
const E1_ONE: f64 = 0.219_383_934_395_520_27;

/// `E₁(z)` for `z ≥ 1` by the continued fraction, evaluated with Lentz's method.
fn e1_continued_fraction(z: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = z + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -f64::from(i * i);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-z).exp()
}

/// `∫₀^∞ e^(-e^s) ds`, which is `E₁(1)`.
pub fn decay_integral_total() -> f64 {
    E1_ONE
}

/// `∫₀^τ e^(-e^s) ds = E₁(1) - E₁(e^τ)`.
///
/// For `τ ≤ 1` the difference is summed directly as
/// `τ + Σ (-1)^k (e^(kτ) - 1)/(k·k!)`, which avoids cancelling two nearly
/// equal values of `E₁`.
pub fn decay_integral(tau: f64) -> f64 {
    if tau <= 1.0 {
        let mut sum = tau;
        let mut fact = 1.0;
        for k in 1..60 {
            let kf = f64::from(k);
            fact *= kf;
            let term = (kf * tau).exp_m1() / (kf * fact);
            sum += if k % 2 == 0 { term } else { -term };
            if term < 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        sum
    } else {
        E1_ONE - e1_continued_fraction(tau.exp())
    }
}

fn check(amplitude: f64, tau: f64) -> Result<()> {
    if !(amplitude > 0.0 && amplitude.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "amplitude M = {amplitude} must be positive"
        )));
    }
    if !(0.0..=MAX_TAU).contains(&tau) {
        return Err(Error::domain("tau", tau, 0.0, MAX_TAU));
    }
    Ok(())
}

/// `log X(τ) - e^τ = ln(M/e + ∫₀^τ e^(-e^s) ds)`.
fn log_inner(amplitude: f64, tau: f64) -> f64 {
    (amplitude * (-1f64).exp() + decay_integral(tau)).ln()
}

/// `ln K` with `K = M/e + ∫₀^∞ e^(-e^s) ds`, the limit of `log X(τ) - e^τ`.
pub fn log_limit_constant(amplitude: f64) -> f64 {
    (amplitude * (-1f64).exp() + decay_integral_total()).ln()
}

pub fn closed_form_log_x(amplitude: f64, tau: f64) -> Result<f64> {
    check(amplitude, tau)?;
    Ok(tau.exp() + log_inner(amplitude, tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Integrated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogTrajectory {
    pub abscissae: Vec<f64>,
    pub log_values: Vec<f64>,
    pub provenance: Provenance,
}

impl LogTrajectory {
    pub fn len(&self) -> usize {
        self.abscissae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissae.is_empty()
    }
}

fn validate_run(amplitude: f64, tau_max: f64, steps: usize) -> Result<f64> {
    check(amplitude, tau_max)?;
    if !(tau_max > 0.0) {
        return Err(Error::domain("tau_max", tau_max, f64::MIN_POSITIVE, MAX_TAU));
    }
    if steps < MIN_STEPS {
        return Err(Error::InvalidConfig(format!(
            "steps = {steps} must be at least {MIN_STEPS}"
        )));
    }
    let h = tau_max / steps as f64;
    if h <= 0.0 || tau_max + h == tau_max {
        return Err(Error::Numeric(format!("step size {h:e} underflows at tau = {tau_max}")));
    }
    Ok(h)
}

/// Closed form sampled on the same uniform grid the integrator uses.
pub fn closed_form_trajectory(amplitude: f64, tau_max: f64, steps: usize, exec: Execution) -> Result<LogTrajectory> {
    let h = validate_run(amplitude, tau_max, steps)?;
    let taus: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    let log_values = par::map(exec, &taus, |&t| t.exp() + log_inner(amplitude, t));
    Ok(LogTrajectory {
        abscissae: taus,
        log_values,
        provenance: Provenance::ClosedForm,
    })
}

/// Classical RK4 on `d(log X)/dτ = e^(-log X) + e^τ`.
pub fn integrate_transformed(amplitude: f64, tau_max: f64, steps: usize) -> Result<LogTrajectory> {
    let h = validate_run(amplitude, tau_max, steps)?;
    let rhs = |tau: f64, y: f64| (-y).exp() + tau.exp();
    let mut y = amplitude.ln();
    let mut abscissae = Vec::with_capacity(steps + 1);
    let mut log_values = Vec::with_capacity(steps + 1);
    abscissae.push(0.0);
    log_values.push(y);
    for i in 0..steps {
        let tau = i as f64 * h;
        let k1 = rhs(tau, y);
        let k2 = rhs(tau + 0.5 * h, y + 0.5 * h * k1);
        let k3 = rhs(tau + 0.5 * h, y + 0.5 * h * k2);
        let k4 = rhs(tau + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !y.is_finite() {
            return Err(Error::Numeric(format!("log X became non-finite at tau = {}", tau + h)));
        }
        abscissae.push((i + 1) as f64 * h);
        log_values.push(y);
    }
    Ok(LogTrajectory {
        abscissae,
        log_values,
        provenance: Provenance::Integrated,
    })
}

/// `ln(T★ - t(τ)) + e^τ`, where `T★ - t(τ) = ∫_τ^∞ dσ / X(σ)`.
///
/// For `e^τ ≥ 50` the substitution `u = e^σ` turns the gap into
/// `∫_z^∞ e^(-u) / (u·(K - E₁(u))) du`, and `E₁(u) < 4e-24` there, so the
/// gap is `E₁(z)/K` to double precision. Below that, the integral up to
/// `ln 50` is done by quadrature on the rescaled integrand and the
/// asymptotic piece is added on top.
pub fn scaled_log_gap(amplitude: f64, tau: f64) -> Result<f64> {
    check(amplitude, tau)?;
    let log_k = log_limit_constant(amplitude);
    let z = tau.exp();
    if z >= ASYMPTOTIC_Z {
        return Ok(log_e1_large(z).0 + z - log_k);
    }
    let cut = ASYMPTOTIC_Z.ln();
    let head = adaptive_simpson(|s: f64| (z - s.exp() - log_inner(amplitude, s)).exp(), tau, cut, 1e-14)?.value;
    let tail = (log_e1_large(ASYMPTOTIC_Z).0 + z - log_k).exp();
    Ok((head + tail).ln())
}

/// `(T★ - t)·ln(1/(T★ - t))·x(t)` at `t = t(τ)` for the equality solution.
pub fn blowup_ratio(amplitude: f64, tau: f64) -> Result<f64> {
    let g = scaled_log_gap(amplitude, tau)?;
    let log_gap_times_x = g + log_inner(amplitude, tau);
    let log_inv_gap = tau.exp() - g;
    Ok(log_gap_times_x.exp() * log_inv_gap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremalRow {
    pub tau: f64,
    pub log_x_closed: f64,
    pub log_x_integrated: f64,
    pub ratio: f64,
}

/// Closed form, integrator and ratio side by side, every `stride` steps.
pub fn extremal_table(
    amplitude: f64,
    tau_max: f64,
    steps: usize,
    stride: usize,
    exec: Execution,
) -> Result<Vec<ExtremalRow>> {
    let traj = integrate_transformed(amplitude, tau_max, steps)?;
    let idx: Vec<usize> = (0..traj.len()).step_by(stride.max(1)).collect();
    par::try_map(exec, &idx, |&i| {
        let tau = traj.abscissae[i];
        Ok(ExtremalRow {
            tau,
            log_x_closed: closed_form_log_x(amplitude, tau)?,
            log_x_integrated: traj.log_values[i],
            ratio: blowup_ratio(amplitude, tau)?,
        })
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    // Reference values at 40-50 digits: closed form by quadrature, the gap
    // by quadrature for small τ and by exact E₁(e^τ)/K once e^τ ≥ 50.
    const E1_AT_ONE: f64 = 0.219_383_934_395_520_27;

    #[test]
    fn decay_constant() {
        assert_eq!(decay_integral_total(), E1_AT_ONE);
        // -γ - Σ (-1)^k/(k·k!)
        let euler_gamma = 0.577_215_664_901_532_9;
        let mut fact = 1.0;
        let mut series = -euler_gamma;
        for k in 1..30 {
            fact *= f64::from(k);
            series -= if k % 2 == 0 { 1.0 } else { -1.0 } / (f64::from(k) * fact);
        }
        assert!((series - E1_AT_ONE).abs() < 1e-15);
        assert!((decay_integral(6.0) - E1_AT_ONE).abs() < 1e-15);
    }

    #[test]
    fn decay_integral_matches_quadrature() {
        for tau in [1e-8, 0.1, 0.5, 1.0 - 1e-12, 1.0, 1.0 + 1e-12, 1.5, 2.5, 4.0] {
            let q = adaptive_simpson(|s: f64| (-s.exp()).exp(), 0.0, tau, 1e-16)
                .unwrap()
                .value;
            let d = decay_integral(tau);
            assert!((d - q).abs() < 2e-16 + 1e-14 * q, "tau = {tau}: {d} vs {q}");
        }
        assert_eq!(decay_integral(0.0), 0.0);
    }

    #[test]
    fn closed_form_reference_values() {
        assert_eq!(closed_form_log_x(3.0, 0.0).unwrap(), 3f64.ln());
        let cases = [
            (1.0, 1.0, 2.153_582_225_294_757_4),
            (1.0, 2.0, 6.856_647_268_153_764),
            (1.0, 3.0, 19.553_255_043_946_711),
            (2.0, 0.5, 1.514_899_779_820_457_1),
        ];
        for (m, tau, want) in cases {
            let got = closed_form_log_x(m, tau).unwrap();
            assert!((got - want).abs() < 1e-13, "M={m} tau={tau}: {got}");
        }
        let x1 = closed_form_log_x(1.0, 1.0).unwrap().exp();
        assert!((x1 - 8.615_666_441_813_633).abs() < 1e-12);
    }

    #[test]
    fn log_x_minus_exponential_stabilises() {
        let lk = log_limit_constant(1.0);
        for tau in [10.0, 12.0] {
            let d = closed_form_log_x(1.0, tau).unwrap() - tau.exp();
            assert!((d - lk).abs() < 1e-8);
        }
    }

    #[test]
    fn integrator_tracks_closed_form() {
        let traj = integrate_transformed(1.0, 3.0, 3000).unwrap();
        assert_eq!(traj.log_values[0], 0.0);
        let exact = closed_form_trajectory(1.0, 3.0, 3000, Execution::Parallel).unwrap();
        let dev = traj
            .log_values
            .iter()
            .zip(&exact.log_values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn integrator_is_fourth_order() {
        let dev = |steps| {
            let a = integrate_transformed(1.0, 3.0, steps).unwrap();
            let b = closed_form_trajectory(1.0, 3.0, steps, Execution::Parallel).unwrap();
            a.log_values
                .iter()
                .zip(&b.log_values)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let ratio = dev(100) / dev(200);
        assert!((13.0..19.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn integrator_stays_finite_far_past_overflow() {
        let traj = integrate_transformed(1.0, 12.0, 12_000).unwrap();
        let last = *traj.log_values.last().unwrap();
        let want = closed_form_log_x(1.0, 12.0).unwrap();
        assert!(last.is_finite());
        assert!(((last - want) / want).abs() < 1e-8);
        assert!(traj.log_values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn run_preconditions() {
        assert!(integrate_transformed(0.0, 3.0, 1000).is_err());
        assert!(integrate_transformed(1.0, 16.0, 1000).is_err());
        assert!(integrate_transformed(1.0, 3.0, 99).is_err());
        assert!(closed_form_log_x(1.0, -0.1).is_err());
    }

    #[test]
    fn ratio_reference_values() {
        let cases = [
            (1.0, 0.0, 0.355_414_075_134_079_68),
            (1.0, 1.0, 0.957_734_675_559_411_43),
            (1.0, 2.0, 1.082_224_820_942_806_7),
            (1.0, 4.0, 1.045_032_435_220_330_2),
            (1.0, 8.0, 1.002_169_175_184_716_8),
            (1.0, 12.0, 1.000_064_315_563_325_3),
            (10.0, 8.0, 1.002_803_923_042_770_8),
            (10.0, 12.0, 1.000_075_945_203_142_9),
        ];
        for (m, tau, want) in cases {
            let got = blowup_ratio(m, tau).unwrap();
            assert!((got - want).abs() < 1e-9 * want, "M={m} tau={tau}: {got} vs {want}");
        }
    }

    #[test]
    fn ratio_approaches_one_independent_of_amplitude() {
        for m in [0.1, 1.0, 10.0] {
            let r8 = blowup_ratio(m, 8.0).unwrap();
            let r12 = blowup_ratio(m, 12.0).unwrap();
            assert!((0.9..=1.05).contains(&r12));
            assert!((r12 - 1.0).abs() < (r8 - 1.0).abs());
            // leading correction is O(τ / e^τ)
            assert!((r12 - 1.0).abs() < 20.0 / 12f64.exp());
        }
    }

    #[test]
    fn gap_is_continuous_across_the_asymptotic_switch() {
        let cut = ASYMPTOTIC_Z.ln();
        let below = scaled_log_gap(1.0, cut - 1e-9).unwrap();
        let above = scaled_log_gap(1.0, cut + 1e-9).unwrap();
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn asymptotic_e1_matches_quadrature() {
        let z: f64 = 60.0;
        let q = adaptive_simpson(|u| (-(u - z)).exp() / u, z, z + 60.0, 1e-16)
            .unwrap()
            .value;
        let (ln_e1, rem) = log_e1_large(z);
        assert!(((ln_e1 + z).exp() - q).abs() < 1e-12 * q);
        assert!(rem < 1e-16);
    }
}
