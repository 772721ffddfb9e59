//! Golden-section search for a maximum of a unimodal function on a bracket.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub arg: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Shrinks `[lo, hi]` until its width falls below `rel_tol * |x|` (or
/// `rel_tol` near zero), keeping the interior point with the larger value.
pub fn golden_section_max<F>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> Maximum
where
    F: Fn(f64) -> f64,
{
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iterations = 0;
    while hi - lo > rel_tol * (0.5 * (lo + hi)).abs().max(1.0) && iterations < 500 {
        iterations += 1;
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        Maximum {
            arg: x1,
            value: f1,
            iterations,
        }
    } else {
        Maximum {
            arg: x2,
            value: f2,
            iterations,
        }
    }
}
