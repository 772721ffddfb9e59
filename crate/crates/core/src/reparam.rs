//! Change of variables between the accumulated variable `τ` and physical
//! time `t(τ) = ∫₀^τ dσ / X(σ)`, its inverse, the pushforward
//! `x(t) = X(τ(t))`, and the blow-up time with an explicit tail bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::{GridFunction, PiecewiseC1Function, SegmentKind};
use crate::oscillator::xi;
use crate::par::{self, Execution};
use crate::quadrature::adaptive_simpson;

/// Guaranteed absolute accuracy of `t(τ)` over any domain this crate builds.
pub const TIME_MAP_TOL: f64 = 1e-10;
/// Per-station-interval quadrature tolerance; at most a few hundred
/// intervals keep the total well inside [`TIME_MAP_TOL`].
const PANEL_TOL: f64 = 1e-14;
const UNIFORM_BRANCH_PANELS: usize = 8;
const TAIL_WINDOW: u32 = 400;
const NEWTON_FAILURES_BEFORE_BISECTION: u32 = 3;
const MAX_INVERSE_ITERATIONS: u32 = 200;

/// Table abscissae for the time map: segment ends, bridge midpoints, uniform
/// branch subdivisions, and a geometric refinement toward each integer knot
/// where `1/Y` peaks with width `~ 2 e^(-n/2) / (n+1)`.
fn stations(x: &PiecewiseC1Function, upto: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for seg in x.segments() {
        if seg.left >= upto {
            break;
        }
        out.push(seg.left);
        match &seg.kind {
            SegmentKind::ExpBranch { n } => {
                let len = seg.right - seg.left;
                let nf = f64::from(*n);
                let width = 2.0 * (-0.5 * nf).exp() / (nf + 1.0);
                let mut offset = len / 4.0;
                let mut graded = Vec::new();
                while offset > width / 4.0 && offset < len / UNIFORM_BRANCH_PANELS as f64 {
                    graded.push(seg.left + offset);
                    offset /= 4.0;
                }
                graded.reverse();
                out.extend(graded);
                let h = len / UNIFORM_BRANCH_PANELS as f64;
                out.extend((1..UNIFORM_BRANCH_PANELS).map(|j| seg.left + j as f64 * h));
            }
            SegmentKind::SplinePiece(s) => out.push(s.midpoint()),
        }
    }
    out.retain(|&s| s < upto);
    out.dedup();
    out.push(upto);
    out
}

fn reciprocal_integral(x: &PiecewiseC1Function, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let seg = &x.segments()[x.locate(a)?];
    let scale = x.scale();
    let r = adaptive_simpson(|s| 1.0 / (scale * seg.value(s)), a, b, PANEL_TOL)?;
    Ok(r.value)
}

fn cumulative(x: &PiecewiseC1Function, st: &[f64]) -> Result<Vec<f64>> {
    let mut t = Vec::with_capacity(st.len());
    let mut acc = 0.0;
    t.push(0.0);
    for w in st.windows(2) {
        acc += reciprocal_integral(x, w[0], w[1])?;
        t.push(acc);
    }
    Ok(t)
}

/// `t(τ) = ∫₀^τ dσ / X(σ)`.
pub fn time_map(x: &PiecewiseC1Function, tau: f64) -> Result<f64> {
    x.locate(tau)?;
    if tau == 0.0 {
        return Ok(0.0);
    }
    let st = stations(x, x.domain_end());
    let j = st.partition_point(|&s| s <= tau) - 1;
    let t = cumulative(x, &st[..=j])?;
    Ok(t[j] + reciprocal_integral(x, st[j], tau)?)
}

/// The ratio `∫ₙ^(n+1) dτ/Y` bound over the majorant term used to sum tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailTerm {
    pub n: u32,
    pub majorant: f64,
    pub interval_bound: f64,
}

/// Summand of `Σ (n+1)(e^(-n/2) + ξₙ)`.
pub fn majorant_term(n: u32) -> f64 {
    let nf = f64::from(n);
    (nf + 1.0) * ((-0.5 * nf).exp() + xi(n))
}

/// Explicit upper bound on `∫ₙ^(n+1) dτ / Y`.
///
/// On the branch `Y ≥ 1/(n+1) + (τ-n)·e^(n/2)/2` by convexity of `e^(τ/2)`,
/// which integrates in closed form. On the bridge `Y` is bounded below by the
/// tangent line of its convex half at `n+1`, giving
/// `φₙ ≥ 1/(n+2) - e^((n+1)/2)·2^(-n-3)`.
pub fn interval_bound(n: u32) -> f64 {
    let nf = f64::from(n);
    let c = 1.0 / (nf + 1.0);
    let d = 0.5 * (0.5 * nf).exp();
    let branch = ((d * (1.0 - xi(n))) / c).ln_1p() / d;
    let floor = 1.0 / (nf + 2.0) - (0.5 * (nf + 1.0)).exp() * 0.5f64.powi(n as i32 + 3);
    branch + xi(n) / floor
}

fn branch_ratio(n: u32) -> f64 {
    let nf = f64::from(n);
    let d = 0.5 * (0.5 * nf).exp();
    ((d * (nf + 1.0)).ln_1p() / d) / ((nf + 1.0) * (-0.5 * nf).exp())
}

fn bridge_ratio(n: u32) -> f64 {
    let nf = f64::from(n);
    let floor = 1.0 / (nf + 2.0) - (0.5 * (nf + 1.0)).exp() * 0.5f64.powi(n as i32 + 3);
    1.0 / ((nf + 1.0) * floor)
}

/// `C_geom = sup_{n > n_max} interval_bound(n) / majorant_term(n)`.
///
/// The sup is taken explicitly over a window of `TAIL_WINDOW` indices. Past
/// the window each ratio is at most the larger of its branch and bridge
/// parts, both of which decrease for `n ≥ 9`, so their values at the window
/// end cap the remainder.
pub fn geometric_constant(n_max: u32) -> f64 {
    let end = n_max + TAIL_WINDOW;
    let window = (n_max + 1..=end)
        .map(|n| interval_bound(n) / majorant_term(n))
        .fold(0.0, f64::max);
    window.max(branch_ratio(end)).max(bridge_ratio(end))
}

/// `Σ_{n > n_max} (n+1)(e^(-n/2) + ξₙ) · C_geom / M`, an upper bound on
/// `∫_{n_max+1}^∞ dτ / X`.
pub fn tail_bound(n_max: u32, amplitude: f64) -> f64 {
    let end = n_max + TAIL_WINDOW;
    // summed smallest-first; terms past the window are below 1e-80
    let sum: f64 = (n_max + 1..=end).rev().map(majorant_term).sum();
    geometric_constant(n_max) * sum / amplitude
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReparamResult {
    pub t_star: f64,
    pub t_star_error_bound: f64,
    pub tail_bound: f64,
    /// Samples `(τ, t(τ))` on `[0, n_max + 1]`.
    #[serde(skip)]
    pub table: GridFunction,
    pub amplitude: f64,
    pub n_max: u32,
}

impl ReparamResult {
    /// Largest time reachable by the computed table, `t(n_max + 1)`.
    pub fn horizon(&self) -> f64 {
        *self.table.values.last().expect("non-empty table")
    }

    /// `t(τ)` using the stored table as the quadrature base.
    pub fn time_of(&self, x: &PiecewiseC1Function, tau: f64) -> Result<f64> {
        let st = &self.table.abscissae;
        let end = *st.last().expect("non-empty table");
        if !(tau >= 0.0 && tau <= end) {
            return Err(Error::domain("tau", tau, 0.0, end));
        }
        let j = st.partition_point(|&s| s <= tau) - 1;
        Ok(self.table.values[j] + reciprocal_integral(x, st[j], tau)?)
    }
}

/// Blow-up time `T★ = ∫₀^(n_max+1) dτ/X + tail/2`, reported with error
/// bound `tail/2 + TIME_MAP_TOL`.
pub fn blowup_time(x: &PiecewiseC1Function, n_max: u32) -> Result<ReparamResult> {
    let end = f64::from(n_max + 1);
    if x.domain_end() < end {
        return Err(Error::InvalidConfig(format!(
            "profile domain ends at {} but n-max = {n_max} needs {end}",
            x.domain_end()
        )));
    }
    let st = stations(x, end);
    let t = cumulative(x, &st)?;
    let integral = *t.last().expect("stations are non-empty");
    let tail = tail_bound(n_max, x.scale());
    Ok(ReparamResult {
        t_star: integral + 0.5 * tail,
        t_star_error_bound: 0.5 * tail + TIME_MAP_TOL,
        tail_bound: tail,
        table: GridFunction::new(st, t)?,
        amplitude: x.scale(),
        n_max,
    })
}

/// As [`blowup_time`], failing when the error bound exceeds `max_error`.
pub fn blowup_time_within(x: &PiecewiseC1Function, n_max: u32, max_error: f64) -> Result<ReparamResult> {
    let r = blowup_time(x, n_max)?;
    if r.t_star_error_bound > max_error {
        return Err(Error::Accuracy {
            requested: max_error,
            achieved: r.t_star_error_bound,
            n_max,
        });
    }
    Ok(r)
}

/// Solves `t(τ) = t` by bracketing on the table and safeguarded Newton with
/// `dτ/dt = X`; falls back to bisection after repeated Newton failures.
pub fn inverse_time_map(r: &ReparamResult, x: &PiecewiseC1Function, t: f64) -> Result<f64> {
    let horizon = r.horizon();
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::Range { requested: t, horizon });
    }
    let tv = &r.table.values;
    let st = &r.table.abscissae;
    let j = tv.partition_point(|&v| v <= t) - 1;
    let (base_tau, base_t) = (st[j], tv[j]);
    if t == base_t {
        return Ok(base_tau);
    }
    let (mut lo, mut hi) = (base_tau, st[j + 1]);
    let frac = (t - base_t) / (tv[j + 1] - base_t);
    let mut tau = lo + frac * (hi - lo);
    let residual = |s: f64| -> Result<f64> { Ok(base_t + reciprocal_integral(x, base_tau, s)? - t) };

    let mut g = residual(tau)?;
    let mut failures = 0;
    for _ in 0..MAX_INVERSE_ITERATIONS {
        if g == 0.0 {
            return Ok(tau);
        }
        if g > 0.0 {
            hi = tau;
        } else {
            lo = tau;
        }
        let next = if failures < NEWTON_FAILURES_BEFORE_BISECTION {
            let step = tau - g * x.eval(tau)?;
            if step > lo && step < hi {
                step
            } else {
                failures += 1;
                0.5 * (lo + hi)
            }
        } else {
            0.5 * (lo + hi)
        };
        if next == tau || hi - lo <= f64::EPSILON * hi.abs() {
            return Ok(tau);
        }
        let g_next = residual(next)?;
        if g_next.abs() >= g.abs() && failures < NEWTON_FAILURES_BEFORE_BISECTION {
            failures += 1;
        }
        tau = next;
        g = g_next;
        if g.abs() <= 1e-16 * t.max(1.0) {
            return Ok(tau);
        }
    }
    Err(Error::Numeric(format!(
        "inverse time map did not converge at t = {t}: bracket [{lo}, {hi}], residual {g:e}"
    )))
}

/// `x(tᵢ) = X(τ(tᵢ))` with `ẋ = X'(τ)·X(τ)` and the accumulation `τ(tᵢ)`.
pub fn pushforward(
    r: &ReparamResult,
    x: &PiecewiseC1Function,
    t_grid: &[f64],
    exec: Execution,
) -> Result<GridFunction> {
    let rows = par::try_map(exec, t_grid, |&t| -> Result<(f64, f64, f64)> {
        let tau = inverse_time_map(r, x, t)?;
        let (v, d) = x.eval_with_derivative(tau)?;
        Ok((v, d * v, tau))
    })?;
    let values = rows.iter().map(|r| r.0).collect();
    let derivs = rows.iter().map(|r| r.1).collect();
    let acc = rows.iter().map(|r| r.2).collect();
    GridFunction::new(t_grid.to_vec(), values)?
        .with_derivatives(derivs)?
        .with_accumulation(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oscillator::{bridge_start, build_oscillator, OscillatorConfig};

    fn osc(m: f64, n: u32) -> PiecewiseC1Function {
        build_oscillator(&OscillatorConfig::new(m, n)).unwrap()
    }

    /// Closed form of `∫ dτ / (e^(τ/2) - q)` with `q = e^(n/2) - 1/(n+1)`,
    /// via `w = e^(τ/2)`: `(2/q)·ln((w - q)/w)` (or `-2/w` when `q = 0`).
    fn branch_integral_oracle(n: u32, a: f64, b: f64) -> f64 {
        let nf = f64::from(n);
        let q = (0.5 * nf).exp() - 1.0 / (nf + 1.0);
        let anti = |tau: f64| {
            let w = (0.5 * tau).exp();
            if q == 0.0 {
                -2.0 / w
            } else {
                2.0 / q * ((w - q) / w).ln()
            }
        };
        anti(b) - anti(a)
    }

    #[test]
    fn time_map_matches_closed_form_on_branches() {
        let x = osc(1.0, 12);
        for n in [0u32, 1, 4, 9, 12] {
            let a = f64::from(n);
            let b = bridge_start(n);
            let got = time_map(&x, b).unwrap() - time_map(&x, a).unwrap();
            let want = branch_integral_oracle(n, a, b);
            assert!((got - want).abs() < 1e-11, "n = {n}: {got} vs {want}");
        }
    }

    #[test]
    fn time_map_basics() {
        let x = osc(1.0, 6);
        assert_eq!(time_map(&x, 0.0).unwrap(), 0.0);
        let samples: Vec<f64> = (1..=70).map(|i| f64::from(i) * 0.1).collect();
        let t: Vec<f64> = samples.iter().map(|&s| time_map(&x, s).unwrap()).collect();
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!(time_map(&x, 7.5).is_err());
    }

    #[test]
    fn time_map_scales_inversely_with_amplitude() {
        let one = osc(1.0, 6);
        let two = osc(2.0, 6);
        for tau in [0.3, 1.0, 2.9, 6.5] {
            let a = time_map(&one, tau).unwrap();
            let b = time_map(&two, tau).unwrap();
            assert!((2.0 * b - a).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn table_and_standalone_time_map_agree() {
        let x = osc(1.0, 8);
        let r = blowup_time(&x, 8).unwrap();
        for tau in [0.0, 0.75, 3.0, 4.99, 8.9, 9.0] {
            let a = time_map(&x, tau).unwrap();
            let b = r.time_of(&x, tau).unwrap();
            assert!((a - b).abs() < 1e-13, "{tau}: {a} vs {b}");
        }
    }

    #[test]
    fn tail_bound_decays_and_is_small_at_depth_thirty() {
        let t30 = tail_bound(30, 1.0);
        assert!(t30 < 1e-4, "{t30}");
        for n in [10u32, 20, 30] {
            assert!(tail_bound(n + 2, 1.0) <= 0.5 * tail_bound(n, 1.0));
        }
        // oracle: partial sums of the majorant series
        let partial: f64 = (31..200).map(majorant_term).sum();
        assert!((t30 / geometric_constant(30) - partial).abs() < 1e-15);
    }

    #[test]
    fn interval_bound_dominates_quadrature() {
        let x = osc(1.0, 14);
        for n in 0..14u32 {
            let exact = time_map(&x, f64::from(n + 1)).unwrap() - time_map(&x, f64::from(n)).unwrap();
            assert!(exact <= interval_bound(n), "n = {n}");
        }
    }

    #[test]
    fn tail_ratios_decrease_past_nine() {
        let b: Vec<f64> = (9..500).map(branch_ratio).collect();
        let s: Vec<f64> = (9..500).map(bridge_ratio).collect();
        assert!(b.windows(2).all(|w| w[1] <= w[0]));
        assert!(s.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn blowup_time_scales_as_inverse_amplitude() {
        let base = blowup_time(&osc(1.0, 10), 10).unwrap();
        for m in [0.5, 10.0] {
            let r = blowup_time(&osc(m, 10), 10).unwrap();
            assert!((r.t_star * m - base.t_star).abs() <= 1e-8 * base.t_star);
            assert!(r.t_star > 0.0 && r.t_star.is_finite());
        }
    }

    #[test]
    fn requested_accuracy_is_enforced() {
        let x = osc(1.0, 4);
        let e = blowup_time_within(&x, 4, 1e-6).unwrap_err();
        assert!(matches!(e, Error::Accuracy { n_max: 4, .. }));
        assert!(blowup_time(&x, 5).is_err());
    }

    #[test]
    fn inverse_roundtrip_and_range() {
        let x = osc(1.0, 8);
        let r = blowup_time(&x, 8).unwrap();
        assert_eq!(inverse_time_map(&r, &x, 0.0).unwrap(), 0.0);
        for tau in [0.5, 1.7, 5.25, 8.99] {
            let t = time_map(&x, tau).unwrap();
            let back = inverse_time_map(&r, &x, t).unwrap();
            assert!((back - tau).abs() < 1e-10, "{tau} -> {back}");
        }
        let e = inverse_time_map(&r, &x, r.horizon()).unwrap_err();
        assert!(matches!(e, Error::Range { .. }));
    }

    #[test]
    fn pushforward_hits_knot_values() {
        let m = 2.0;
        let x = osc(m, 6);
        let r = blowup_time(&x, 6).unwrap();
        let tn: Vec<f64> = (0..=6).map(|n| time_map(&x, f64::from(n)).unwrap()).collect();
        let g = pushforward(&r, &x, &tn, Execution::Parallel).unwrap();
        assert_eq!(g.values[0], m);
        for (n, v) in g.values.iter().enumerate() {
            assert!((v - m / (n as f64 + 1.0)).abs() < 1e-10, "n = {n}: {v}");
        }
        let seq = pushforward(&r, &x, &tn, Execution::Sequential).unwrap();
        assert_eq!(g, seq);
    }

    #[test]
    fn accumulation_matches_trapezoid_of_pushforward() {
        let x = osc(1.0, 5);
        let r = blowup_time(&x, 5).unwrap();
        let t_end = time_map(&x, 3.3).unwrap();
        let k = 40_000;
        let grid: Vec<f64> = (0..=k).map(|i| t_end * f64::from(i) / f64::from(k)).collect();
        let g = pushforward(&r, &x, &grid, Execution::Parallel).unwrap();
        let h = t_end / f64::from(k);
        let trap: f64 = g.values.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
        let acc = g.accumulation.as_ref().unwrap();
        assert!((trap - acc[k as usize]).abs() < 1e-6, "{trap} vs {}", acc[k as usize]);
    }
}
