//! Lower-bound envelopes near blow-up, the optimisation over the integrability
//! exponent `p`, and the exponent arithmetic behind them.
//!
//! Envelope values grow like `(T★ - t)^(-7/5)` and faster, so they are
//! evaluated as logarithms and only exponentiated on request.

use num_rational::Ratio;
use serde::Serialize;

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

/// Default log-correction power for the first-derivative envelope.
pub const DEFAULT_RHO: f64 = 24.0 / 5.0;
/// Smallest admissible `p` is `4 + P_MARGIN`.
pub const P_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentParams {
    pub p: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub theta1: f64,
    pub theta2: f64,
}

/// Interpolation exponents at integrability `p > 4`.
pub fn exponents(p: f64) -> Result<ExponentParams> {
    if !(p > 4.0) {
        return Err(Error::domain("p", p, 4.0, f64::INFINITY));
    }
    Ok(ExponentParams {
        p,
        alpha: 5.0 / (7.0 - 6.0 / p),
        gamma: (7.0 * p - 3.0) / (2.0 * p + 3.0),
        theta1: (6.0 - 3.0 * p) / (6.0 - 7.0 * p),
        theta2: (6.0 - 5.0 * p) / (6.0 - 7.0 * p),
    })
}

/// `((k+1)/k)·(1/α_k)` with `α_k = 5/(2k + 3 - 6/p)` at `p = 2(k+1)`, in
/// exact rational arithmetic. Fails unless it equals `2k/5 + 1`.
pub fn chain_identity(k: i64) -> Result<Rational> {
    if k < 2 {
        return Err(Error::domain("k", k as f64, 2.0, f64::INFINITY));
    }
    let p = Rational::from_integer(2 * (k + 1));
    let inv_alpha = (Rational::from_integer(2 * k + 3) - Rational::from_integer(6) / p) / 5;
    let lhs = Rational::new(k + 1, k) * inv_alpha;
    let rhs = Rational::new(2 * k, 5) + 1;
    if lhs != rhs {
        return Err(Error::Numeric(format!(
            "chain identity fails at k = {k}: {lhs} != {rhs}"
        )));
    }
    Ok(lhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainExponent {
    Finite(Rational),
    Infinite,
}

/// `p_j = 2(k+1)/(k-j)` for `j = 0..k-1`, then `p_k = ∞`.
pub fn chain_exponents(k: i64) -> Result<Vec<ChainExponent>> {
    if k < 2 {
        return Err(Error::domain("k", k as f64, 2.0, f64::INFINITY));
    }
    let mut out: Vec<ChainExponent> = (0..k)
        .map(|j| ChainExponent::Finite(Rational::new(2 * (k + 1), k - j)))
        .collect();
    out.push(ChainExponent::Infinite);
    Ok(out)
}

/// `log F(p, L) = -(24/5)·ln p - 6L/(5p)`.
pub fn objective_f(p: f64, big_l: f64) -> f64 {
    -4.8 * p.ln() - 1.2 * big_l / p
}

/// Maximiser of [`objective_f`] in `p`: `L/4`, clamped to `p > 4`.
pub fn optimal_p(big_l: f64) -> f64 {
    (0.25 * big_l).max(4.0 + P_MARGIN)
}

/// Distance to blow-up, stored as its logarithm so that gaps such as
/// `e^(-1000)` stay representable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub ln_gap: f64,
}

impl Gap {
    pub fn from_time(t: f64, t_star: f64) -> Result<Self> {
        let g = t_star - t;
        if !(g > 0.0) {
            return Err(Error::domain("t", t, f64::NEG_INFINITY, t_star));
        }
        Ok(Self { ln_gap: g.ln() })
    }

    /// The gap `e^(-L)`.
    pub fn from_log_inverse(big_l: f64) -> Self {
        Self { ln_gap: -big_l }
    }

    /// `L = ln(1 / (T★ - t))`.
    pub fn log_inverse(self) -> f64 {
        -self.ln_gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeParams {
    pub t_star: f64,
    pub c: f64,
    pub rho: f64,
    pub k: u32,
}

impl EnvelopeParams {
    pub fn new(t_star: f64, c: f64, rho: f64, k: u32) -> Result<Self> {
        if !(t_star > 0.0 && t_star.is_finite()) {
            return Err(Error::InvalidConfig(format!("T* = {t_star} must be positive")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(format!("C = {c} must be positive")));
        }
        if !rho.is_finite() {
            return Err(Error::InvalidConfig(format!("rho = {rho} must be finite")));
        }
        if k < 1 {
            return Err(Error::InvalidConfig("derivative order k must be at least 1".into()));
        }
        Ok(Self { t_star, c, rho, k })
    }

    /// The bounds only hold for `0 < T★ - t < 1/C`.
    fn check_window(&self, gap: Gap) -> Result<()> {
        if !(gap.ln_gap < -self.c.ln()) {
            return Err(Error::domain("T* - t", gap.ln_gap.exp(), 0.0, 1.0 / self.c));
        }
        Ok(())
    }

    /// `ln[1 / (C·g^(7/5)·ln^ρ(1/g))]` at gap `g`.
    pub fn ln_first_at(&self, gap: Gap) -> Result<f64> {
        self.check_window(gap)?;
        Ok(-self.c.ln() - 1.4 * gap.ln_gap - self.rho * gap.log_inverse().ln())
    }

    /// `ln[1 / (C·g^(2k/5 + 1))]` at gap `g`, for `k ≥ 2`.
    pub fn ln_higher_at(&self, gap: Gap) -> Result<f64> {
        if self.k < 2 {
            return Err(Error::domain("k", f64::from(self.k), 2.0, f64::INFINITY));
        }
        self.check_window(gap)?;
        Ok(-self.c.ln() - higher_exponent(self.k) * gap.ln_gap)
    }
}

/// `2k/5 + 1`.
pub fn higher_exponent(k: u32) -> f64 {
    0.4 * f64::from(k) + 1.0
}

pub fn envelope_first(t: f64, ep: &EnvelopeParams) -> Result<f64> {
    Ok(ep.ln_first_at(Gap::from_time(t, ep.t_star)?)?.exp())
}

pub fn envelope_higher(t: f64, ep: &EnvelopeParams) -> Result<f64> {
    Ok(ep.ln_higher_at(Gap::from_time(t, ep.t_star)?)?.exp())
}

/// Logarithm of the leading term of [`raw_lower_bound`],
/// `(1/α)·ln[1/(C·p^(2(1+α))·g)]`.
pub fn ln_raw_leading(gap: Gap, p: f64, c: f64) -> Result<f64> {
    let e = exponents(p)?;
    Ok(-(c.ln() + 2.0 * (1.0 + e.alpha) * p.ln() + gap.ln_gap) / e.alpha)
}

/// The bound before optimising in `p`:
/// `(1/(C·p^(2(1+α))·(T★-t)))^(1/α) - p^(2(γ-1))`.
pub fn raw_lower_bound(t: f64, p: f64, t_star: f64, c: f64) -> Result<f64> {
    let gap = Gap::from_time(t, t_star)?;
    let e = exponents(p)?;
    let lead = ln_raw_leading(gap, p, c)?;
    let corr = 2.0 * (e.gamma - 1.0) * p.ln();
    Ok(lead.exp() - corr.exp())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub big_l: f64,
    pub gap: f64,
    pub t: f64,
    pub ln_first: f64,
    /// `(k, ln envelope_higher)` for each requested `k ≥ 2`.
    pub ln_higher: Vec<(u32, f64)>,
    pub optimal_p: f64,
}

/// One row per `L`, at `T★ - t = e^(-L)`.
pub fn envelope_table(t_star: f64, c: f64, rho: f64, ks: &[u32], ls: &[f64]) -> Result<Vec<EnvelopeRow>> {
    let base = EnvelopeParams::new(t_star, c, rho, 1)?;
    ls.iter()
        .map(|&big_l| {
            let gap = Gap::from_log_inverse(big_l);
            let ln_higher = ks
                .iter()
                .map(|&k| Ok((k, EnvelopeParams { k, ..base }.ln_higher_at(gap)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(EnvelopeRow {
                big_l,
                gap: gap.ln_gap.exp(),
                t: t_star - gap.ln_gap.exp(),
                ln_first: base.ln_first_at(gap)?,
                ln_higher,
                optimal_p: optimal_p(big_l),
            })
        })
        .collect()
}
