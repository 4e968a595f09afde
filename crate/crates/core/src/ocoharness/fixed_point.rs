//! Best fixed point in hindsight for one-dimensional problems: a dense grid
//! followed by golden-section refinement around the best grid cell.

use crate::error::{Error, Result};
use crate::numerics::Vector;

use super::{OnlineProblem, Round};

const GRID: usize = 2000;
const GOLDEN_ITERS: usize = 100;

/// Approximate minimizer of `f` on `[lo, hi]`.
pub fn minimize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return lo;
    }
    let h = (hi - lo) / GRID as f64;
    let at = |k: usize| if k == GRID { hi } else { lo + h * k as f64 };
    let mut best_k = 0;
    let mut best = f(lo);
    for k in 1..=GRID {
        let v = f(at(k));
        if v < best {
            best = v;
            best_k = k;
        }
    }
    let (mut a, mut b) = (at(best_k.saturating_sub(1)), at((best_k + 1).min(GRID)));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    let refined = 0.5 * (a + b);
    // the golden search may settle on a worse point when the cell is not unimodal
    if f(refined) <= best {
        refined
    } else {
        at(best_k)
    }
}

/// `argmin_x Σ_{t ≤ horizon} f_t(x)` over the problem's interval.
pub fn best_fixed_point_1d(problem: &dyn OnlineProblem, horizon: u64, seed: u64) -> Result<Vector> {
    if problem.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: problem.dim(),
        });
    }
    let (lo, hi) = (problem.feasible().lo()[0], problem.feasible().hi()[0]);
    let cumulative = |x: f64| -> f64 {
        let w = Vector::filled(1, x);
        (1..=horizon)
            .map(|t| problem.loss(Round { t, seed }, &w).unwrap_or(f64::INFINITY))
            .sum()
    };
    Ok(Vector::filled(1, minimize_1d(cumulative, lo, hi)))
}
