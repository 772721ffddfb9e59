//! Adaptive Simpson quadrature with Richardson-corrected panel estimates.
//!
//! Each accepted panel satisfies `|S2 - S1| <= 15 tol`, where `S1` is the
//! Simpson estimate on the panel and `S2` the sum over its two halves. The
//! returned value carries the extrapolated correction `(S2 - S1) / 15`.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of the per-panel error estimates.
    pub error_estimate: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "quadrature tolerance {tol} must be positive"
        )));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 0,
        });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numeric(format!("non-finite quadrature interval [{a}, {b}]")));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = simpson(lo, hi, fa, fm, fb);
    let mut out = Integral {
        value: 0.0,
        error_estimate: 0.0,
        evaluations: 3,
    };
    refine(
        &f,
        Panel {
            a: lo,
            b: hi,
            fa,
            fm,
            fb,
            whole,
        },
        tol,
        0,
        &mut out,
    )?;
    out.value *= sign;
    Ok(out)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn refine<F>(f: &F, p: Panel, tol: f64, depth: u32, out: &mut Integral) -> Result<()>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (p.a + p.b);
    let lm = 0.5 * (p.a + m);
    let rm = 0.5 * (m + p.b);
    let flm = f(lm);
    let frm = f(rm);
    out.evaluations += 2;
    let left = simpson(p.a, m, p.fa, flm, p.fm);
    let right = simpson(m, p.b, p.fm, frm, p.fb);
    let halves = left + right;
    let diff = halves - p.whole;

    if !halves.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite integrand on panel [{}, {}]",
            p.a, p.b
        )));
    }
    // A panel too narrow to split further is accepted as-is.
    let unsplittable = lm <= p.a || rm >= p.b || m <= p.a || m >= p.b;
    if diff.abs() <= 15.0 * tol || unsplittable {
        out.value += halves + diff / 15.0;
        out.error_estimate += diff.abs() / 15.0;
        return Ok(());
    }
    if depth >= MAX_DEPTH {
        return Err(Error::Numeric(format!(
            "adaptive Simpson did not converge on [{}, {}]: panel error estimate {:e} vs tolerance {:e}",
            p.a,
            p.b,
            diff.abs() / 15.0,
            tol
        )));
    }
    refine(
        f,
        Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
        },
        0.5 * tol,
        depth + 1,
        out,
    )?;
    refine(
        f,
        Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
        },
        0.5 * tol,
        depth + 1,
        out,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_up_to_cubic_are_exact() {
        let r = adaptive_simpson(|x| 3.0 * x * x * x - x + 2.0, -1.0, 2.0, 1e-12).unwrap();
        // 3/4 (16 - 1) - (4 - 1)/2 + 2 * 3
        assert!((r.value - (11.25 - 1.5 + 6.0)).abs() < 1e-13);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let fwd = adaptive_simpson(f64::exp, 0.0, 1.0, 1e-12).unwrap().value;
        let rev = adaptive_simpson(f64::exp, 1.0, 0.0, 1e-12).unwrap().value;
        assert_eq!(fwd, -rev);
        assert!((fwd - (std::f64::consts::E - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn peaked_integrand_meets_tolerance() {
        // arctan(100) - arctan(-100) over the Lorentzian
        let r = adaptive_simpson(|x| 1.0 / (1.0 + 1e4 * x * x), -1.0, 1.0, 1e-11).unwrap();
        let exact = 2.0 * (100.0f64).atan() / 100.0;
        assert!((r.value - exact).abs() < 1e-10, "{} vs {}", r.value, exact);
    }

    #[test]
    fn singular_integrand_reports_non_convergence() {
        let err = adaptive_simpson(|x: f64| 1.0 / x.abs().sqrt().max(1e-300), -1.0, 1.0, 1e-14);
        assert!(err.is_err());
    }

    #[test]
    fn zero_width_interval_is_zero() {
        let r = adaptive_simpson(|_| 1.0, 3.0, 3.0, 1e-9).unwrap();
        assert_eq!(r.value, 0.0);
    }
}
