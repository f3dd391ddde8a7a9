//! Deterministic sample grids.
//!
//! Fiber samples and quotient samples must line up point-for-point for the
//! correspondence bounds to be tight, so every grid here is a pure function
//! of its arguments: same inputs, same points, same order.

use nalgebra::DVector;

use crate::{Error, Result};

/// Uniform levels `0, r/(n−1), ..., r` (the radial pattern shared by disk
/// grids and segment samples).
pub fn segment_levels(r: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0];
    }
    (0..n).map(|j| r * j as f64 / (n - 1) as f64).collect()
}

/// Polar grid on the closed disk `B_r(0) ⊂ ℝ²`: the origin plus `n_r − 1`
/// positive radial levels times `n_psi` directions. Norms of grid points are
/// exactly the radial levels, which is what aligns disk samples with segment
/// samples of their `SO(2)` quotient.
pub fn disk_grid(r: f64, n_r: usize, n_psi: usize) -> Vec<DVector<f64>> {
    let mut points = vec![DVector::zeros(2)];
    let levels = segment_levels(r, n_r);
    for &level in levels.iter().skip(1) {
        for m in 0..n_psi {
            let psi = 2.0 * std::f64::consts::PI * m as f64 / n_psi as f64;
            points.push(DVector::from_vec(vec![level * psi.cos(), level * psi.sin()]));
        }
    }
    points
}

/// Deterministic grid on `B_r(0) ⊂ ℝᵏ` with roughly `n` points, always
/// containing the origin. `k = 1` uses symmetric levels, `k = 2` a polar
/// grid, `k >= 3` a scaled integer lattice (corner-normalized to stay inside
/// the ball).
pub fn ball_grid(k: usize, r: f64, n: usize) -> Result<Vec<DVector<f64>>> {
    if k == 0 {
        return Err(Error::malformed("ball grid needs positive dimension"));
    }
    if !(r > 0.0) {
        return Err(Error::domain(format!("ball radius must be positive, got {r}")));
    }
    if n == 0 {
        return Err(Error::domain("ball grid needs at least one point"));
    }
    Ok(match k {
        1 => {
            let half = (n / 2).max(1);
            (-(half as i64)..=half as i64)
                .map(|i| DVector::from_vec(vec![r * i as f64 / half as f64]))
                .collect()
        }
        2 => {
            let (n_r, n_psi) = disk_partition(n);
            disk_grid(r, n_r, n_psi)
        }
        _ => {
            let mut m = 1usize;
            while (2 * (m + 1) + 1).pow(k as u32) <= n.max(3usize.pow(k as u32)) {
                m += 1;
            }
            let scale = r / (m as f64 * (k as f64).sqrt());
            let mut points = Vec::new();
            let side = 2 * m + 1;
            let total = side.pow(k as u32);
            for flat in 0..total {
                let mut rem = flat;
                let mut coords = Vec::with_capacity(k);
                for _ in 0..k {
                    let digit = rem % side;
                    rem /= side;
                    coords.push((digit as f64 - m as f64) * scale);
                }
                points.push(DVector::from_vec(coords));
            }
            points
        }
    })
}

/// Ring/direction split used by the polar ball grid for `k = 2`.
pub fn disk_partition(n: usize) -> (usize, usize) {
    let n_r = (((n as f64) / 2.0).sqrt().round() as usize).max(2);
    let n_psi = (((n.max(2) - 1) as f64 / (n_r - 1) as f64).round() as usize).max(3);
    (n_r, n_psi)
}

/// How far a rotated grid point can land from the grid: the covering defect
/// of `ball_grid(k, r, n)` under the rotation group. Grid norms are exact
/// levels, so for the polar grid only the angular snap contributes. The
/// `k = 1` grid is symmetric (exactly closed under ±1), and for `k ≥ 3`
/// lattices the crude bound `r` is returned — collapse budgets only ever
/// need the planar case.
pub fn ball_grid_rotation_mesh(k: usize, r: f64, n: usize) -> f64 {
    match k {
        0 | 1 => 0.0,
        2 => {
            let (_, n_psi) = disk_partition(n);
            2.0 * r * (std::f64::consts::PI / (2.0 * n_psi as f64)).sin()
        }
        _ => r,
    }
}

/// Cartesian product of two grids: all concatenations `a_i ⊕ b_j`,
/// `a`-major. Product fibers and product quotients both use this, keeping
/// blockwise correspondences exact.
pub fn product_grid(a: &[DVector<f64>], b: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut points = Vec::with_capacity(a.len() * b.len());
    for pa in a {
        for pb in b {
            let mut coords = Vec::with_capacity(pa.len() + pb.len());
            coords.extend(pa.iter().copied());
            coords.extend(pb.iter().copied());
            points.push(DVector::from_vec(coords));
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_grid_norms_are_levels() {
        let pts = disk_grid(2.0, 5, 7);
        assert_eq!(pts.len(), 1 + 4 * 7);
        let levels = segment_levels(2.0, 5);
        for p in &pts {
            let norm = p.norm();
            assert!(
                levels.iter().any(|&l| (l - norm).abs() < 1e-12),
                "norm {norm} is not a level"
            );
        }
        assert!(pts[0].norm() == 0.0);
    }

    #[test]
    fn ball_grid_contains_origin_and_stays_inside() {
        for k in 1..=4usize {
            let pts = ball_grid(k, 1.5, 60).unwrap();
            assert!(pts.iter().any(|p| p.norm() < 1e-12), "k={k} lost the origin");
            assert!(pts.iter().all(|p| p.norm() <= 1.5 + 1e-12), "k={k} left the ball");
            assert!(pts.iter().all(|p| p.len() == k));
            assert!(pts.len() >= 3);
        }
    }

    #[test]
    fn ball_grid_is_deterministic() {
        let a = ball_grid(2, 1.0, 50).unwrap();
        let b = ball_grid(2, 1.0, 50).unwrap();
        assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(b.iter()) {
            assert_eq!(p.as_slice(), q.as_slice());
        }
    }

    #[test]
    fn ball_grid_rejects_bad_inputs() {
        assert!(ball_grid(0, 1.0, 10).is_err());
        assert!(ball_grid(2, 0.0, 10).is_err());
        assert!(ball_grid(2, 1.0, 0).is_err());
    }

    #[test]
    fn product_grid_concatenates_a_major() {
        let a = vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![2.0])];
        let b = vec![DVector::from_vec(vec![10.0]), DVector::from_vec(vec![20.0])];
        let p = product_grid(&a, &b);
        assert_eq!(p.len(), 4);
        assert_eq!(p[0].as_slice(), &[1.0, 10.0]);
        assert_eq!(p[1].as_slice(), &[1.0, 20.0]);
        assert_eq!(p[3].as_slice(), &[2.0, 20.0]);
    }
}
