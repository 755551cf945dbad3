//! One-dimensional convex minimization shared by the coordinate updates.

/// Value, first and second derivative at a point.
pub(crate) type Eval = (f64, f64, f64);

/// Safeguarded Newton on a convex function whose minimizer lies in the open
/// interval `(lo, hi)`, with `f'(lo) < 0 < f'(hi)`.
///
/// Each Newton step is halved until it lands strictly inside the current
/// bracket; the bracket shrinks using the sign of the derivative at every
/// evaluated point. Returns the best point seen (lowest value), never worse
/// than `start`.
pub(crate) fn newton_bracketed<F>(f: F, mut lo: f64, mut hi: f64, start: f64, max_steps: usize) -> f64
where
    F: Fn(f64) -> Eval,
{
    let mut x = if start > lo && start < hi {
        start
    } else {
        midpoint(lo, hi)
    };
    let (mut fx, mut d1, mut d2) = f(x);
    let (mut best_x, mut best_f) = (x, fx);
    for _ in 0..max_steps {
        if d1 == 0.0 {
            break;
        }
        if d1 > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let width = hi - lo;
        if width <= 1e-15 * (1.0 + x.abs()) {
            break;
        }
        let mut step = if d2 > 0.0 && d2.is_finite() { -d1 / d2 } else { f64::NAN };
        if !step.is_finite() {
            step = midpoint(lo, hi) - x;
        }
        let mut candidate = x + step;
        let mut tries = 0;
        while !(candidate > lo && candidate < hi) && tries < 60 {
            step *= 0.5;
            candidate = x + step;
            tries += 1;
        }
        if !(candidate > lo && candidate < hi) {
            candidate = midpoint(lo, hi);
        }
        let converged = (candidate - x).abs() <= 1e-14 * (1.0 + x.abs());
        x = candidate;
        (fx, d1, d2) = f(x);
        if fx <= best_f {
            best_x = x;
            best_f = fx;
        }
        if converged {
            break;
        }
    }
    best_x
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    0.5 * lo + 0.5 * hi
}
