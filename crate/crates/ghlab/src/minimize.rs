//! One-dimensional minimization: coarse grid seed + golden-section polish.
//!
//! Every 1-D infimum in the crate (holonomic distances over circle families,
//! loop-family Sasaki bounds, radius estimates) goes through this routine so
//! results are deterministic and reproducible across feature sets.

/// Golden ratio conjugate, `(sqrt(5) - 1) / 2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Default grid resolution for the seeding pass.
pub const GRID_POINTS: usize = 2048;

/// Minimizes `f` over `[lo, hi]`: evaluates `f` on a uniform grid of
/// `GRID_POINTS + 1` points, then golden-section-refines the bracket around
/// the best grid point until its width falls below `tol`. Returns
/// `(argmin, min)`. The grid seed makes the search robust to the multimodal
/// objectives that arise from wrapped angles; the refinement is monotone, so
/// the result never exceeds the best grid value.
pub fn minimize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    debug_assert!(hi > lo);
    let n = GRID_POINTS;
    let h = (hi - lo) / n as f64;
    let mut best_k = 0usize;
    let mut best_v = f64::INFINITY;
    for k in 0..=n {
        let v = f(lo + h * k as f64);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let a = lo + h * best_k.saturating_sub(1) as f64;
    let b = lo + h * (best_k + 1).min(n) as f64;
    let (x, v) = golden_section(&f, a, b, tol);
    if v < best_v {
        (x, v)
    } else {
        (lo + h * best_k as f64, best_v)
    }
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let (x, v) = minimize_1d(|t| (t - 0.3217).powi(2) + 1.5, -1.0, 2.0, 1e-12);
        assert!((x - 0.3217).abs() < 1e-7);
        assert!((v - 1.5).abs() < 1e-13);
    }

    #[test]
    fn survives_multimodal_objective() {
        // Global minimum at t = 4.712... (3π/2) among several local ones.
        let f = |t: f64| (3.0 * t).sin() + 0.5 * t.sin() + 0.1 * t;
        let (x, _) = minimize_1d(f, 0.0, 2.0 * std::f64::consts::PI, 1e-10);
        let mut best = (0.0, f64::INFINITY);
        let mut t = 0.0;
        while t < 2.0 * std::f64::consts::PI {
            if f(t) < best.1 {
                best = (t, f(t));
            }
            t += 1e-5;
        }
        assert!((x - best.0).abs() < 1e-4);
    }

    #[test]
    fn never_exceeds_grid_best() {
        let f = |t: f64| (20.0 * t).cos();
        let (_, v) = minimize_1d(&f, 0.0, 1.0, 1e-10);
        let grid_best = (0..=GRID_POINTS)
            .map(|k| f(k as f64 / GRID_POINTS as f64))
            .fold(f64::INFINITY, f64::min);
        assert!(v <= grid_best + 1e-15);
    }
}
