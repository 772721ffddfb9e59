//! Piecewise C¹ functions of one variable built from typed segments.
//!
//! Segments are half-open `[left, right)`, so evaluation at an interior knot
//! uses the segment to its right. The final knot (the domain end) is served
//! by the last segment.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::oscillator::SplineSegment;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    /// `e^(τ/2) - e^(n/2) + 1/(n+1)`.
    ExpBranch {
        n: u32,
    },
    SplinePiece(SplineSegment),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub left: f64,
    pub right: f64,
}

/// Value of the exponential branch `n` at `tau`, written so that the
/// cancellation between `e^(τ/2)` and `e^(n/2)` near `τ = n` is exact.
pub fn exp_branch_value(n: u32, tau: f64) -> f64 {
    let nf = f64::from(n);
    (0.5 * nf).exp() * (0.5 * (tau - nf)).exp_m1() + 1.0 / (nf + 1.0)
}

pub fn exp_branch_slope(tau: f64) -> f64 {
    0.5 * (0.5 * tau).exp()
}

impl Segment {
    pub fn value(&self, tau: f64) -> f64 {
        match &self.kind {
            SegmentKind::ExpBranch { n } => exp_branch_value(*n, tau),
            SegmentKind::SplinePiece(s) => s.value(tau),
        }
    }

    pub fn slope(&self, tau: f64) -> f64 {
        match &self.kind {
            SegmentKind::ExpBranch { .. } => exp_branch_slope(tau),
            SegmentKind::SplinePiece(s) => s.slope(tau),
        }
    }

    /// Points strictly inside the segment where the second derivative jumps.
    pub fn interior_breaks(&self) -> Option<f64> {
        match &self.kind {
            SegmentKind::ExpBranch { .. } => None,
            SegmentKind::SplinePiece(s) => Some(s.midpoint()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SegmentKind::ExpBranch { .. } => "exp_branch",
            SegmentKind::SplinePiece(_) => "spline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiecewiseC1Function {
    knots: Vec<f64>,
    segments: Vec<Segment>,
    /// Constant multiplier applied to every segment formula.
    scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KnotGap {
    pub index: usize,
    pub knot: f64,
    /// `|left - right| / max(1, |left|, |right|)` for the values.
    pub value_gap: f64,
    /// Same scaled mismatch for the first derivatives.
    pub slope_gap: f64,
}

impl PiecewiseC1Function {
    pub fn from_parts(knots: Vec<f64>, segments: Vec<Segment>, scale: f64) -> Result<Self> {
        if knots.len() < 2 || segments.len() + 1 != knots.len() {
            return Err(Error::InvalidConfig(format!(
                "{} knots cannot delimit {} segments",
                knots.len(),
                segments.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scale {scale} must be positive and finite"
            )));
        }
        for (i, w) in knots.windows(2).enumerate() {
            if !(w[0] < w[1]) || !w[0].is_finite() || !w[1].is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "knots must be finite and strictly increasing (index {i}: {} then {})",
                    w[0], w[1]
                )));
            }
            let s = &segments[i];
            if s.left != w[0] || s.right != w[1] {
                return Err(Error::InvalidConfig(format!(
                    "segment {i} spans [{}, {}) but knots give [{}, {})",
                    s.left, s.right, w[0], w[1]
                )));
            }
        }
        Ok(Self { knots, segments, scale })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn domain_start(&self) -> f64 {
        self.knots[0]
    }

    pub fn domain_end(&self) -> f64 {
        *self.knots.last().expect("at least two knots")
    }

    /// Index of the segment serving `tau`, or a domain error.
    pub fn locate(&self, tau: f64) -> Result<usize> {
        let (lo, hi) = (self.domain_start(), self.domain_end());
        if !(tau >= lo && tau <= hi) {
            return Err(Error::domain("tau", tau, lo, hi));
        }
        let idx = self.knots.partition_point(|&k| k <= tau);
        Ok(idx.saturating_sub(1).min(self.segments.len() - 1))
    }

    pub fn eval(&self, tau: f64) -> Result<f64> {
        let i = self.locate(tau)?;
        Ok(self.scale * self.segments[i].value(tau))
    }

    pub fn eval_derivative(&self, tau: f64) -> Result<f64> {
        let i = self.locate(tau)?;
        Ok(self.scale * self.segments[i].slope(tau))
    }

    /// Value and derivative together, sharing one segment lookup.
    pub fn eval_with_derivative(&self, tau: f64) -> Result<(f64, f64)> {
        let s = &self.segments[self.locate(tau)?];
        Ok((self.scale * s.value(tau), self.scale * s.slope(tau)))
    }

    /// Limit from the left at knot `index >= 1`, using the segment that ends there.
    pub fn left_limit(&self, index: usize) -> (f64, f64) {
        let s = &self.segments[index - 1];
        let k = self.knots[index];
        (self.scale * s.value(k), self.scale * s.slope(k))
    }

    /// Reports every interior knot whose scaled value or slope mismatch exceeds `tol`.
    pub fn continuity_audit(&self, tol: f64) -> Vec<KnotGap> {
        (1..self.segments.len())
            .filter_map(|i| {
                let k = self.knots[i];
                let (vl, sl) = self.left_limit(i);
                let right = &self.segments[i];
                let (vr, sr) = (self.scale * right.value(k), self.scale * right.slope(k));
                let gap = KnotGap {
                    index: i,
                    knot: k,
                    value_gap: scaled_gap(vl, vr),
                    slope_gap: scaled_gap(sl, sr),
                };
                (gap.value_gap > tol || gap.slope_gap > tol).then_some(gap)
            })
            .collect()
    }

    /// Sample points at roughly `density` per unit, aligned so that every
    /// segment contributes its own left endpoint and no sample interval
    /// straddles a knot. The domain end is included.
    pub fn segment_grid(&self, density: usize) -> Vec<f64> {
        let density = density.max(1) as f64;
        let mut grid = Vec::new();
        for s in &self.segments {
            let m = ((s.right - s.left) * density).ceil().max(2.0) as usize;
            let h = (s.right - s.left) / m as f64;
            grid.extend((0..m).map(|j| s.left + j as f64 * h));
        }
        grid.push(self.domain_end());
        grid
    }
}

fn scaled_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// A sampled trajectory. When `log_scale` is set, `values` hold natural logs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    pub abscissae: Vec<f64>,
    pub values: Vec<f64>,
    pub log_scale: bool,
    pub derivatives: Option<Vec<f64>>,
    /// Running integral of the (linear-scale) values from the first abscissa.
    pub accumulation: Option<Vec<f64>>,
}

impl GridFunction {
    pub fn new(abscissae: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if abscissae.len() != values.len() {
            return Err(Error::InvalidConfig(format!(
                "{} abscissae but {} values",
                abscissae.len(),
                values.len()
            )));
        }
        if abscissae.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("abscissae must be strictly increasing".into()));
        }
        if let Some(i) = values.iter().chain(&abscissae).position(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite entry at flat index {i}")));
        }
        Ok(Self {
            abscissae,
            values,
            log_scale: false,
            derivatives: None,
            accumulation: None,
        })
    }

    pub fn new_log(abscissae: Vec<f64>, log_values: Vec<f64>) -> Result<Self> {
        Ok(Self {
            log_scale: true,
            ..Self::new(abscissae, log_values)?
        })
    }

    pub fn with_derivatives(mut self, d: Vec<f64>) -> Result<Self> {
        self.check_channel("derivative", &d)?;
        self.derivatives = Some(d);
        Ok(self)
    }

    pub fn with_accumulation(mut self, acc: Vec<f64>) -> Result<Self> {
        self.check_channel("accumulation", &acc)?;
        self.accumulation = Some(acc);
        Ok(self)
    }

    fn check_channel(&self, name: &str, c: &[f64]) -> Result<()> {
        if c.len() != self.abscissae.len() {
            return Err(Error::InvalidConfig(format!(
                "{name} channel has {} entries for {} abscissae",
                c.len(),
                self.abscissae.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.abscissae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissae.is_empty()
    }

    /// Linear-scale value at sample `i`.
    pub fn value(&self, i: usize) -> f64 {
        if self.log_scale {
            self.values[i].exp()
        } else {
            self.values[i]
        }
    }
}
