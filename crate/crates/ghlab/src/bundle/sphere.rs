//! Round-sphere geometry: frames, geodesic and latitude arcs, and their
//! parallel transports in closed form.
//!
//! Points live on the unit sphere (the radius enters only through lengths).
//! Fiber coordinates use the global frame `F(x)`: the frame obtained by
//! parallel transport of the standard frame at the north pole along the
//! meridian through `x`. It is smooth away from the south pole, so sample
//! grids must stay inside that chart; transports themselves are ambient
//! rotations and have no chart restriction.
//!
//! Transport along a latitude circle at colatitude `φ` rotates the moving
//! frame `(τ, μ)` by `−cos φ · Δψ`; a full counterclockwise circuit is a
//! fiber rotation by `2π(1 − cos φ)` — the enclosed cap area. Together with
//! length `2πr·sin φ` this gives the attainable pairs
//! `(r·sqrt(A(4π − A)), R(A))` for enclosed area `A ∈ (0, 4π)`, the family
//! behind every fiberwise distance and norm estimate on the sphere.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector3};

use crate::{Error, Result};

/// Guard against using the global frame too close to the south pole.
const SOUTH_POLE_GUARD: f64 = 1e-6;

/// Rotation matrix from a rotation vector (axis times angle), via Rodrigues.
/// Stable for small angles.
pub fn rotation_from_vector(w: Vector3<f64>) -> Matrix3<f64> {
    let angle = w.norm();
    if angle < 1e-14 {
        return Matrix3::identity();
    }
    let axis = w / angle;
    let k = Matrix3::new(
        0.0, -axis.z, axis.y,
        axis.z, 0.0, -axis.x,
        -axis.y, axis.x, 0.0,
    );
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Deterministic right-handed orthonormal pair perpendicular to a unit `n`.
pub fn orthonormal_complement(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.z.abs() < 0.9 {
        Vector3::z()
    } else {
        Vector3::x()
    };
    let a1 = helper.cross(n).normalize();
    let a2 = n.cross(&a1);
    (a1, a2)
}

/// The global frame `F(x)`: columns are the parallel transports of
/// `(e_x, e_y)` from the north pole to `x` along the connecting meridian.
/// Errors inside the south-pole guard where the chart degenerates.
pub fn global_frame(x: &Vector3<f64>) -> Result<Matrix3x2<f64>> {
    let z = Vector3::z();
    let cos_phi = z.dot(x).clamp(-1.0, 1.0);
    let w = z.cross(x);
    let sin_phi = w.norm();
    let phi = sin_phi.atan2(cos_phi);
    if phi > std::f64::consts::PI - SOUTH_POLE_GUARD {
        return Err(Error::domain(
            "global frame is undefined at the south pole; keep base samples inside the chart",
        ));
    }
    let rot = if sin_phi < 1e-14 {
        Matrix3::identity()
    } else {
        rotation_from_vector(w * (phi / sin_phi))
    };
    Ok(Matrix3x2::from_columns(&[
        rot * Vector3::x(),
        rot * Vector3::y(),
    ]))
}

/// Expresses an ambient transport `T: T_aS² → T_bS²` in global-frame
/// coordinates: `F(b)ᵀ T F(a)`.
pub fn frame_coordinates(
    t: &Matrix3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
) -> Result<Matrix2<f64>> {
    let fa = global_frame(a)?;
    let fb = global_frame(b)?;
    Ok(fb.transpose() * t * fa)
}

/// Rotation angle of a 2×2 rotation matrix, in `(−π, π]`.
pub fn rotation_angle(m: &Matrix2<f64>) -> f64 {
    m[(1, 0)].atan2(m[(0, 0)])
}

/// Standard 2×2 rotation.
pub fn rot2(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// An arc of a geodesic or latitude circle on the unit sphere.
#[derive(Debug, Clone)]
pub enum SphereArc {
    /// Great-circle arc `s ↦ cos(s)·start + sin(s)·dir`, `s ∈ [0, angle]`,
    /// with `dir` a unit tangent at `start`.
    Great {
        start: Vector3<f64>,
        dir: Vector3<f64>,
        angle: f64,
    },
    /// Latitude arc around `axis` at colatitude `colat`, from azimuth `psi0`
    /// sweeping `dpsi` (signed; positive is counterclockwise seen from the
    /// axis tip). Azimuth 0 points along the deterministic frame of `axis`.
    Latitude {
        axis: Vector3<f64>,
        colat: f64,
        psi0: f64,
        dpsi: f64,
    },
}

impl SphereArc {
    pub fn validate(&self) -> Result<()> {
        match self {
            SphereArc::Great { start, dir, angle } => {
                if (start.norm() - 1.0).abs() > 1e-9 || (dir.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::malformed("great arc needs unit start and direction"));
                }
                if start.dot(dir).abs() > 1e-9 {
                    return Err(Error::malformed(
                        "great-arc direction must be tangent at the start",
                    ));
                }
                if !angle.is_finite() || *angle < 0.0 {
                    return Err(Error::malformed("great-arc angle must be nonnegative"));
                }
                Ok(())
            }
            SphereArc::Latitude {
                axis,
                colat,
                dpsi,
                psi0,
            } => {
                if (axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(Error::malformed("latitude axis must be a unit vector"));
                }
                if !colat.is_finite() || *colat <= 0.0 || *colat >= std::f64::consts::PI {
                    return Err(Error::malformed(
                        "latitude colatitude must lie strictly between 0 and π",
                    ));
                }
                if !dpsi.is_finite() || !psi0.is_finite() {
                    return Err(Error::malformed("latitude azimuths must be finite"));
                }
                Ok(())
            }
        }
    }

    /// Point at azimuth `psi` of the latitude circle (helper).
    fn latitude_point(axis: &Vector3<f64>, colat: f64, psi: f64) -> Vector3<f64> {
        let (a1, a2) = orthonormal_complement(axis);
        let (s, c) = psi.sin_cos();
        (a1 * c + a2 * s) * colat.sin() + axis * colat.cos()
    }

    pub fn start(&self) -> Vector3<f64> {
        match self {
            SphereArc::Great { start, .. } => *start,
            SphereArc::Latitude {
                axis, colat, psi0, ..
            } => Self::latitude_point(axis, *colat, *psi0),
        }
    }

    pub fn end(&self) -> Vector3<f64> {
        match self {
            SphereArc::Great { start, dir, angle } => {
                start * angle.cos() + dir * angle.sin()
            }
            SphereArc::Latitude {
                axis,
                colat,
                psi0,
                dpsi,
            } => Self::latitude_point(axis, *colat, psi0 + dpsi),
        }
    }

    /// Arc length on the unit sphere (multiply by the radius downstream).
    pub fn unit_length(&self) -> f64 {
        match self {
            SphereArc::Great { angle, .. } => *angle,
            SphereArc::Latitude { colat, dpsi, .. } => colat.sin() * dpsi.abs(),
        }
    }

    /// Ambient parallel transport `T_start S² → T_end S²` as a 3×3 rotation.
    pub fn ambient_transport(&self) -> Matrix3<f64> {
        match self {
            SphereArc::Great { start, dir, angle } => {
                rotation_from_vector(start.cross(dir) * *angle)
            }
            SphereArc::Latitude {
                axis,
                colat,
                psi0,
                dpsi,
            } => {
                // Moving frame (τ, μ) along the circle; components rotate by
                // −cos(colat)·dpsi.
                let b0 = Self::latitude_frame(axis, *colat, *psi0);
                let b1 = Self::latitude_frame(axis, *colat, psi0 + dpsi);
                let r = rot2(-colat.cos() * dpsi);
                let x0 = Self::latitude_point(axis, *colat, *psi0);
                let x1 = Self::latitude_point(axis, *colat, psi0 + dpsi);
                b1 * r * b0.transpose() + x1 * x0.transpose()
            }
        }
    }

    fn latitude_frame(axis: &Vector3<f64>, colat: f64, psi: f64) -> Matrix3x2<f64> {
        let (a1, a2) = orthonormal_complement(axis);
        let (s, c) = psi.sin_cos();
        let tau = -a1 * s + a2 * c;
        let mu = axis * colat.sin() - (a1 * c + a2 * s) * colat.cos();
        Matrix3x2::from_columns(&[tau, mu])
    }

    /// The same arc traversed backwards.
    pub fn reversed(&self) -> SphereArc {
        match self {
            SphereArc::Great { start, dir, angle } => {
                let (s, c) = angle.sin_cos();
                SphereArc::Great {
                    start: start * c + dir * s,
                    dir: start * s - dir * c,
                    angle: *angle,
                }
            }
            SphereArc::Latitude {
                axis,
                colat,
                psi0,
                dpsi,
            } => SphereArc::Latitude {
                axis: *axis,
                colat: *colat,
                psi0: psi0 + dpsi,
                dpsi: -dpsi,
            },
        }
    }
}

/// Minimal great-circle arc between two non-antipodal unit points. Returns a
/// zero-length arc for coincident points.
pub fn minimal_arc(a: &Vector3<f64>, b: &Vector3<f64>) -> Result<SphereArc> {
    let cos = a.dot(b).clamp(-1.0, 1.0);
    let cross = a.cross(b);
    let sin = cross.norm();
    let angle = sin.atan2(cos);
    if angle > std::f64::consts::PI - 1e-9 {
        return Err(Error::domain(
            "antipodal base points have no unique minimal geodesic",
        ));
    }
    if sin < 1e-14 {
        // Degenerate: any tangent direction works for a zero-length arc.
        let (a1, _) = orthonormal_complement(a);
        return Ok(SphereArc::Great {
            start: *a,
            dir: a1,
            angle: 0.0,
        });
    }
    let dir = (b - a * cos) / sin;
    Ok(SphereArc::Great {
        start: *a,
        dir: dir.normalize(),
        angle,
    })
}

/// Full latitude loop through `p` enclosing (unit-sphere) area `area`,
/// traversed counterclockwise around its axis. The axis is chosen
/// deterministically in the plane spanned by `p` and its frame. Enclosed
/// area `A ∈ (0, 4π)` yields holonomy `R(A mod 2π)` and unit length
/// `sqrt(A(4π − A))`; `area = 0` degenerates to the constant loop.
pub fn latitude_loop_through(p: &Vector3<f64>, area: f64) -> Result<Vec<SphereArc>> {
    use std::f64::consts::PI;
    if !(0.0..4.0 * PI).contains(&area) {
        return Err(Error::domain(format!(
            "enclosed area must lie in [0, 4π), got {area}"
        )));
    }
    if area == 0.0 {
        return Ok(vec![]);
    }
    let cos_colat = 1.0 - area / (2.0 * PI);
    let colat = cos_colat.clamp(-1.0, 1.0).acos();
    // Tilt the axis away from p by the colatitude so that p sits on the
    // circle at azimuth 0.
    let (e1, _) = orthonormal_complement(p);
    let axis = p * colat.cos() + e1 * colat.sin();
    let axis = axis.normalize();
    // Azimuth of p in the axis frame.
    let (a1, a2) = orthonormal_complement(&axis);
    let psi0 = p.dot(&a2).atan2(p.dot(&a1));
    Ok(vec![SphereArc::Latitude {
        axis,
        colat,
        psi0,
        dpsi: 2.0 * PI,
    }])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn assert_unitary(m: &Matrix3<f64>) {
        let gram = m.transpose() * m;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram[(i, j)] - expect).abs() < 1e-12,
                    "not orthogonal: {gram}"
                );
            }
        }
    }

    #[test]
    fn global_frame_is_orthonormal_and_identity_at_north() {
        let f = global_frame(&Vector3::z()).unwrap();
        assert!((f.column(0) - Vector3::x()).norm() < 1e-14);
        assert!((f.column(1) - Vector3::y()).norm() < 1e-14);
        let x = Vector3::new(0.48, -0.6, 0.64).normalize();
        let f = global_frame(&x).unwrap();
        assert!((f.column(0).norm() - 1.0).abs() < 1e-12);
        assert!((f.column(1).norm() - 1.0).abs() < 1e-12);
        assert!(f.column(0).dot(&f.column(1)).abs() < 1e-12);
        assert!(f.column(0).dot(&x).abs() < 1e-12);
        assert!(f.column(1).dot(&x).abs() < 1e-12);
    }

    #[test]
    fn global_frame_rejects_south_pole() {
        assert!(global_frame(&-Vector3::z()).is_err());
    }

    #[test]
    fn great_arc_transport_moves_start_to_end() {
        let start = Vector3::new(1.0, 0.0, 0.0);
        let dir = Vector3::new(0.0, 1.0, 0.0);
        let arc = SphereArc::Great {
            start,
            dir,
            angle: 1.1,
        };
        arc.validate().unwrap();
        let t = arc.ambient_transport();
        assert_unitary(&t);
        assert!((t * start - arc.end()).norm() < 1e-12);
        // Tangent direction transports to the tangent at the end.
        let end_dir = -start * 1.1f64.sin() + dir * 1.1f64.cos();
        assert!((t * dir - end_dir).norm() < 1e-12);
    }

    #[test]
    fn latitude_full_loop_rotates_fiber_by_enclosed_area() {
        let colat = PI / 4.0;
        let arc = SphereArc::Latitude {
            axis: Vector3::z(),
            colat,
            psi0: 0.3,
            dpsi: 2.0 * PI,
        };
        arc.validate().unwrap();
        assert!((arc.start() - arc.end()).norm() < 1e-12);
        let t = arc.ambient_transport();
        assert_unitary(&t);
        let p = arc.start();
        let fc = frame_coordinates(&t, &p, &p).unwrap();
        let angle = rotation_angle(&fc);
        let expected = 2.0 * PI * (1.0 - colat.cos());
        // Angles compare modulo 2π.
        let gap = (angle - expected).rem_euclid(2.0 * PI).min(
            (expected - angle).rem_euclid(2.0 * PI),
        );
        assert!(gap < 1e-10, "angle {angle}, expected {expected}");
    }

    #[test]
    fn latitude_arc_composition_matches_single_arc() {
        let axis = Vector3::new(0.36, 0.48, 0.8).normalize();
        let colat = 1.0;
        let total = 2.0 * PI;
        let n = 8;
        let mut composed = Matrix3::identity();
        for i in 0..n {
            let arc = SphereArc::Latitude {
                axis,
                colat,
                psi0: total * i as f64 / n as f64,
                dpsi: total / n as f64,
            };
            composed = arc.ambient_transport() * composed;
        }
        let single = SphereArc::Latitude {
            axis,
            colat,
            psi0: 0.0,
            dpsi: total,
        }
        .ambient_transport();
        assert!((composed - single).norm() < 1e-10);
    }

    #[test]
    fn minimal_arc_connects_and_measures_angle() {
        let a = Vector3::new(0.0, 0.0, 1.0);
        let b = Vector3::new(1.0, 1.0, 1.0).normalize();
        let arc = minimal_arc(&a, &b).unwrap();
        assert!((arc.start() - a).norm() < 1e-12);
        assert!((arc.end() - b).norm() < 1e-12);
        assert!((arc.unit_length() - a.dot(&b).acos()).abs() < 1e-12);
        assert!(minimal_arc(&a, &-a).is_err());
    }

    #[test]
    fn latitude_loop_through_hits_area_and_point() {
        let p = Vector3::new(0.6, 0.0, 0.8);
        for &area in &[0.5, PI, 2.0 * PI, 3.0 * PI, 11.0] {
            let arcs = latitude_loop_through(&p, area).unwrap();
            assert_eq!(arcs.len(), 1);
            assert!((arcs[0].start() - p).norm() < 1e-9, "area {area}");
            assert!((arcs[0].end() - p).norm() < 1e-9);
            let expect_len = (area * (4.0 * PI - area)).sqrt();
            assert!(
                (arcs[0].unit_length() - expect_len).abs() < 1e-9,
                "area {area}: len {} vs {expect_len}",
                arcs[0].unit_length()
            );
            let t = arcs[0].ambient_transport();
            let fc = frame_coordinates(&t, &p, &p).unwrap();
            let angle = rotation_angle(&fc).rem_euclid(2.0 * PI);
            let expect_angle = area.rem_euclid(2.0 * PI);
            let gap = (angle - expect_angle)
                .abs()
                .min(2.0 * PI - (angle - expect_angle).abs());
            assert!(gap < 1e-9, "area {area}: angle {angle} vs {expect_angle}");
        }
    }
}
