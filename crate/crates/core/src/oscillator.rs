//! The oscillating profile `X = M·Y`.
//!
//! On `[n, n+1-ξₙ)` with `ξₙ = 2^(-n-1)`, `Y` follows the exponential branch
//! `e^(τ/2) - e^(n/2) + 1/(n+1)`. On `[n+1-ξₙ, n+1)` a C¹ bridge `φₙ` drops
//! from the branch peak to `1/(n+2)`, the value where branch `n+1` starts.
//! Each bridge is piecewise quadratic: `φₙ'' = -a` on the first half and
//! `+b` on the second. The four Hermite conditions fix `(a, b)` in closed form.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::{exp_branch_slope, exp_branch_value, PiecewiseC1Function, Segment, SegmentKind};

/// Beyond this depth `n+1-ξₙ` is no longer exactly representable in f64.
pub const MAX_DEPTH: u32 = 40;
pub const DEFAULT_GRID_DENSITY: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HermitePoint {
    pub value: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HermiteData {
    pub left: HermitePoint,
    pub right: HermitePoint,
}

/// `ξₙ = 2^(-n-1)`.
pub fn xi(n: u32) -> f64 {
    0.5f64.powi(n as i32 + 1)
}

/// Start of the bridge interval, `n + 1 - ξₙ`.
pub fn bridge_start(n: u32) -> f64 {
    f64::from(n + 1) - xi(n)
}

pub fn hermite_data(n: u32) -> HermiteData {
    let l = bridge_start(n);
    let r = f64::from(n + 1);
    HermiteData {
        left: HermitePoint {
            value: exp_branch_value(n, l),
            slope: exp_branch_slope(l),
        },
        right: HermitePoint {
            value: exp_branch_value(n + 1, r),
            slope: exp_branch_slope(r),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplineSegment {
    pub n: u32,
    pub start: f64,
    pub end: f64,
    pub left: HermitePoint,
    pub right: HermitePoint,
    /// Curvature magnitude on the concave half, `φ'' = -a`.
    pub a: f64,
    /// Curvature on the convex half, `φ'' = +b`.
    pub b: f64,
}

impl SplineSegment {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.end - self.start)
    }

    pub fn midpoint(&self) -> f64 {
        self.start + self.half_width()
    }

    // The concave half is anchored at the left end and the convex half at
    // the right end; near `n+1` the value is O(1/n) while the terms of a
    // left-anchored expansion are O(e^(n/2)).
    pub fn value(&self, tau: f64) -> f64 {
        if tau < self.midpoint() {
            let s = tau - self.start;
            self.left.value + s * (self.left.slope - 0.5 * self.a * s)
        } else {
            let u = self.end - tau;
            self.right.value - u * (self.right.slope - 0.5 * self.b * u)
        }
    }

    pub fn slope(&self, tau: f64) -> f64 {
        if tau < self.midpoint() {
            self.left.slope - self.a * (tau - self.start)
        } else {
            self.right.slope - self.b * (self.end - tau)
        }
    }

    pub fn curvature(&self, tau: f64) -> f64 {
        if tau < self.midpoint() {
            -self.a
        } else {
            self.b
        }
    }

    /// Value and slope mismatch between the two halves at the midpoint.
    pub fn midpoint_mismatch(&self) -> (f64, f64) {
        let h = self.half_width();
        let from_left = (
            self.left.value + h * (self.left.slope - 0.5 * self.a * h),
            self.left.slope - self.a * h,
        );
        let from_right = (
            self.right.value - h * (self.right.slope - 0.5 * self.b * h),
            self.right.slope - self.b * h,
        );
        (from_left.0 - from_right.0, from_left.1 - from_right.1)
    }

    /// Exact minimum of the bridge. The concave half attains its minimum at
    /// an endpoint; the convex half at its vertex when that lies inside.
    pub fn min_value(&self) -> f64 {
        let h = self.half_width();
        let mid = self.left.value + h * (self.left.slope - 0.5 * self.a * h);
        let mut m = self.left.value.min(mid).min(self.right.value);
        if self.b > 0.0 {
            let u = self.right.slope / self.b;
            if u > 0.0 && u <= h {
                m = m.min(self.right.value - 0.5 * self.right.slope * u);
            }
        }
        m
    }
}

/// Closed-form constant-curvature bridge for index `n`.
pub fn solve_spline(n: u32) -> Result<SplineSegment> {
    let HermiteData { left, right } = hermite_data(n);
    let h = 0.5 * xi(n);
    let a = (left.value - right.value + (3.0 * left.slope + right.slope) * h / 2.0) / (h * h);
    let b = a + (right.slope - left.slope) / h;
    if !(a > 0.0) || !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Construction {
            n,
            detail: format!("curvature sign pattern violated: a = {a}, b = {b}"),
        });
    }
    let seg = SplineSegment {
        n,
        start: bridge_start(n),
        end: f64::from(n + 1),
        left,
        right,
        a,
        b,
    };
    let min = seg.min_value();
    if !(min > 0.0) {
        return Err(Error::Construction {
            n,
            detail: format!("bridge minimum {min} is not positive"),
        });
    }
    Ok(seg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OscillatorConfig {
    /// Initial value `X(0)`.
    pub amplitude: f64,
    /// Number of the last bridge; the domain is `[0, depth + 1]`.
    pub depth: u32,
    pub certify_grid_density: usize,
}

impl OscillatorConfig {
    pub fn new(amplitude: f64, depth: u32) -> Self {
        Self {
            amplitude,
            depth,
            certify_grid_density: DEFAULT_GRID_DENSITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "amplitude M = {} must be positive and finite",
                self.amplitude
            )));
        }
        if !(1..=MAX_DEPTH).contains(&self.depth) {
            return Err(Error::InvalidConfig(format!(
                "depth n-max = {} must lie in [1, {MAX_DEPTH}]",
                self.depth
            )));
        }
        if self.certify_grid_density == 0 {
            return Err(Error::InvalidConfig("grid density must be positive".into()));
        }
        Ok(())
    }
}

/// Builds `X = M·Y` on `[0, depth + 1]`: one exponential branch and one
/// bridge for each `n = 0..=depth`.
pub fn build_oscillator(cfg: &OscillatorConfig) -> Result<PiecewiseC1Function> {
    cfg.validate()?;
    let mut knots = Vec::with_capacity(2 * cfg.depth as usize + 3);
    let mut segments = Vec::with_capacity(2 * cfg.depth as usize + 2);
    for n in 0..=cfg.depth {
        let spline = solve_spline(n)?;
        let nf = f64::from(n);
        knots.push(nf);
        segments.push(Segment {
            kind: SegmentKind::ExpBranch { n },
            left: nf,
            right: spline.start,
        });
        knots.push(spline.start);
        segments.push(Segment {
            left: spline.start,
            right: spline.end,
            kind: SegmentKind::SplinePiece(spline),
        });
    }
    knots.push(f64::from(cfg.depth + 1));
    PiecewiseC1Function::from_parts(knots, segments, cfg.amplitude)
}

/// Branch peaks `M·Y((n+1-ξₙ)⁻)` for `n = 0..=depth`.
pub fn peak_values(amplitude: f64, depth: u32) -> Vec<f64> {
    (0..=depth)
        .map(|n| amplitude * exp_branch_value(n, bridge_start(n)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_data_for_first_bridge() {
        let d = hermite_data(0);
        let q = 0.25f64.exp();
        assert!((d.left.value - q).abs() < 1e-15);
        assert!((d.left.slope - q / 2.0).abs() < 1e-15);
        assert_eq!(d.right.value, 0.5);
        assert!((d.right.slope - 0.5f64.exp() / 2.0).abs() < 1e-15);
        assert!((d.left.value - 1.284_025_4).abs() < 1e-7);
        assert!((d.right.slope - 0.824_360_6).abs() < 1e-7);
    }

    #[test]
    fn hermite_orderings_hold_for_all_depths() {
        for n in 0..=MAX_DEPTH {
            let d = hermite_data(n);
            assert!(d.left.value > d.right.value, "n = {n}");
            assert!(d.right.slope > d.left.slope, "n = {n}");
        }
    }

    #[test]
    fn first_bridge_curvatures() {
        let s = solve_spline(0).unwrap();
        // high-precision reference from an independent closed-form evaluation
        assert!((s.a - 18.045_204_187_767_216).abs() < 1e-10);
        assert!((s.b - 18.774_595_895_791_99).abs() < 1e-10);
    }

    #[test]
    fn bridges_meet_hermite_conditions_and_sign_pattern() {
        for n in 0..=12 {
            let s = solve_spline(n).unwrap();
            assert!(s.a > 0.0 && s.b > 0.0);
            let scale_v = s.left.value.max(1.0);
            let scale_s = s.right.slope.max(s.a * s.half_width());
            assert!((s.value(s.start) - s.left.value).abs() <= 1e-15 * scale_v);
            assert!((s.slope(s.start) - s.left.slope).abs() <= 1e-15 * scale_s);
            assert!((s.value(s.end) * f64::from(n + 2) - 1.0).abs() <= 1e-12);
            assert!((s.slope(s.end) - s.right.slope).abs() <= 1e-15 * scale_s);
            let (dv, ds) = s.midpoint_mismatch();
            assert!(dv.abs() <= 1e-12 * scale_v, "n = {n}: {dv}");
            assert!(ds.abs() <= 1e-12 * scale_s, "n = {n}: {ds}");
            assert!(s.curvature(s.start) < 0.0);
            assert!(s.curvature(s.midpoint()) > 0.0);
        }
    }

    #[test]
    fn bridge_minimum_matches_dense_scan() {
        for n in [0, 3, 8] {
            let s = solve_spline(n).unwrap();
            let scan = (0..=20_000)
                .map(|i| s.value(s.start + (s.end - s.start) * f64::from(i) / 20_000.0))
                .fold(f64::INFINITY, f64::min);
            assert!(s.min_value() <= scan + 1e-12);
            assert!((s.min_value() - scan).abs() < 1e-6 * scan);
            assert!(s.min_value() > 0.0);
        }
    }

    #[test]
    fn construction_layout() {
        let x = build_oscillator(&OscillatorConfig::new(3.0, 4)).unwrap();
        assert_eq!(x.segments().len(), 10);
        assert_eq!(x.domain_end(), 5.0);
        assert_eq!(x.eval(0.0).unwrap(), 3.0);
        let x = build_oscillator(&OscillatorConfig::new(1.0, 8)).unwrap();
        assert!((x.eval(5.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn scaling_is_exact() {
        let one = build_oscillator(&OscillatorConfig::new(1.0, 6)).unwrap();
        let m = build_oscillator(&OscillatorConfig::new(7.5, 6)).unwrap();
        for tau in one.segment_grid(64) {
            let a = 7.5 * one.eval(tau).unwrap();
            let b = m.eval(tau).unwrap();
            assert!((a - b).abs() <= 1e-14 * a.abs());
        }
    }

    #[test]
    fn peaks_increase_without_bound() {
        let p = peak_values(1.0, 30);
        // peak 0 (e^(1/4)) exceeds peak 1 (e^(7/8) - e^(1/2) + 1/2); growth starts at n = 1
        assert!(p[0] > p[1]);
        assert!(p[1..].windows(2).all(|w| w[1] > w[0]));
        let floor = 0.25f64.exp_m1();
        for (n, v) in p.iter().enumerate() {
            assert!(*v >= floor * (0.5 * n as f64).exp());
        }
        assert!(p[30] > 1e6);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(build_oscillator(&OscillatorConfig::new(0.0, 4)).is_err());
        assert!(build_oscillator(&OscillatorConfig::new(-1.0, 4)).is_err());
        assert!(build_oscillator(&OscillatorConfig::new(1.0, 0)).is_err());
        assert!(build_oscillator(&OscillatorConfig::new(1.0, MAX_DEPTH + 1)).is_err());
        assert!(build_oscillator(&OscillatorConfig::new(f64::NAN, 4)).is_err());
    }
}
