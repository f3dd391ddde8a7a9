//! Model manifolds, parallel transport, and Sasaki-type distances on their
//! tangent bundles.
//!
//! The catalog is deliberately small — flat tori, round spheres, products,
//! and rescalings — because these already exhibit the full range of
//! behaviors: trivial holonomy (torus), a full `SO(2)` holonomy with a
//! computable length norm (sphere), blockwise mixtures (products), and
//! collapsing sequences (rescalings).
//!
//! Distances on the total space follow the "length through the bundle"
//! recipe: connect base points by a curve, transport the first fiber vector
//! along it, and pay `sqrt(length² + |transported − target|²)`. On the
//! torus this infimum is a closed form. On the sphere the infimum over the
//! latitude-loop family is used: same-fiber values are exact (the family
//! realizes the length norm of every holonomy element), general pairs are
//! certified upper bounds.
//!
//! Coordinates always refer to the *normalized* manifold ([`Manifold::normalized`]
//! folds every `Rescaled` wrapper into lattice bases and radii): torus
//! points are cover coordinates in ℝ², sphere points are unit vectors in
//! ℝ³, product points concatenate factor coordinates. Fiber vectors use
//! global trivializations — the identity frame on tori, the meridian frame
//! of [`sphere::global_frame`] on spheres — so fiber data is plain
//! coordinates in ℝᵏ everywhere.

pub mod grid;
pub mod sphere;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::metric::FiniteMetricSpace;
use crate::{minimize_1d, par, Error, Radius, Result};

use self::sphere::SphereArc;

use std::f64::consts::PI;

/// Default refinement tolerance for the 1-D optimizations behind distance
/// bounds; callers with different accuracy/speed needs pass their own.
pub const DEFAULT_OPT_TOL: f64 = 1e-10;

/// A point
/// of the total space: base coordinates plus a fiber vector in the
/// canonical frame at that base point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundlePoint {
    pub base: Vec<f64>,
    pub fiber: Vec<f64>,
}

impl BundlePoint {
    pub fn base_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.base)
    }

    pub fn fiber_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.fiber)
    }
}

/// A model manifold description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Manifold {
    /// ℝ² modulo the lattice spanned by the basis columns.
    FlatTorus { basis: [[f64; 2]; 2] },
    /// Round sphere of the given radius.
    RoundSphere { radius: f64 },
    /// Riemannian product; coordinates concatenate.
    Product {
        first: Box<Manifold>,
        second: Box<Manifold>,
    },
    /// Same manifold with all lengths multiplied by `lambda`. Fiber
    /// coordinates are untouched: a rescaled bundle keeps its original
    /// fiber norm, only base lengths shrink.
    Rescaled { inner: Box<Manifold>, lambda: f64 },
}

impl Manifold {
    pub fn unit_torus() -> Manifold {
        Manifold::FlatTorus {
            basis: [[1.0, 0.0], [0.0, 1.0]],
        }
    }

    pub fn sphere(radius: f64) -> Manifold {
        Manifold::RoundSphere { radius }
    }

    pub fn product(a: Manifold, b: Manifold) -> Manifold {
        Manifold::Product {
            first: Box::new(a),
            second: Box::new(b),
        }
    }

    pub fn rescaled(inner: Manifold, lambda: f64) -> Manifold {
        Manifold::Rescaled {
            inner: Box::new(inner),
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Manifold::FlatTorus { basis } => {
                let det = basis[0][0] * basis[1][1] - basis[0][1] * basis[1][0];
                let scale = basis_columns(basis).0.norm() * basis_columns(basis).1.norm();
                if !det.is_finite() || det.abs() <= 1e-6 * scale.max(1e-12) {
                    return Err(Error::malformed(
                        "torus basis is singular or too ill-conditioned",
                    ));
                }
                Ok(())
            }
            Manifold::RoundSphere { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::malformed(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
                Ok(())
            }
            Manifold::Product { first, second } => {
                first.validate()?;
                second.validate()
            }
            Manifold::Rescaled { inner, lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(Error::malformed(format!(
                        "rescale factor must be positive, got {lambda}"
                    )));
                }
                inner.validate()
            }
        }
    }

    /// Folds every `Rescaled` wrapper into leaf parameters: a rescaled torus
    /// is a torus with a scaled lattice, a rescaled sphere is a sphere with
    /// a scaled radius, and rescaling distributes over products.
    pub fn normalized(&self) -> Manifold {
        fn scale_into(m: &Manifold, lambda: f64) -> Manifold {
            match m {
                Manifold::FlatTorus { basis } => Manifold::FlatTorus {
                    basis: [
                        [basis[0][0] * lambda, basis[0][1] * lambda],
                        [basis[1][0] * lambda, basis[1][1] * lambda],
                    ],
                },
                Manifold::RoundSphere { radius } => Manifold::RoundSphere {
                    radius: radius * lambda,
                },
                Manifold::Product { first, second } => Manifold::Product {
                    first: Box::new(scale_into(first, lambda)),
                    second: Box::new(scale_into(second, lambda)),
                },
                Manifold::Rescaled { inner, lambda: mu } => scale_into(inner, lambda * mu),
            }
        }
        scale_into(self, 1.0)
    }

    /// Dimension of base-point coordinate vectors (cover/ambient).
    pub fn coord_dim(&self) -> usize {
        match self {
            Manifold::FlatTorus { .. } => 2,
            Manifold::RoundSphere { .. } => 3,
            Manifold::Product { first, second } => first.coord_dim() + second.coord_dim(),
            Manifold::Rescaled { inner, .. } => inner.coord_dim(),
        }
    }

    /// Fiber dimension of the tangent bundle.
    pub fn fiber_dim(&self) -> usize {
        match self {
            Manifold::FlatTorus { .. } | Manifold::RoundSphere { .. } => 2,
            Manifold::Product { first, second } => first.fiber_dim() + second.fiber_dim(),
            Manifold::Rescaled { inner, .. } => inner.fiber_dim(),
        }
    }

    /// Supremum of the holonomy length norm (0 for flat factors, `2πr` for
    /// the sphere's widest latitude realization).
    pub fn sup_length_norm(&self) -> f64 {
        match self.normalized() {
            Manifold::FlatTorus { .. } => 0.0,
            Manifold::RoundSphere { radius } => 2.0 * PI * radius,
            Manifold::Product { first, second } => {
                let (a, b) = (first.sup_length_norm(), second.sup_length_norm());
                (a * a + b * b).sqrt()
            }
            Manifold::Rescaled { .. } => unreachable!("normalized"),
        }
    }
}

fn basis_columns(basis: &[[f64; 2]; 2]) -> (Vector2<f64>, Vector2<f64>) {
    (
        Vector2::new(basis[0][0], basis[1][0]),
        Vector2::new(basis[0][1], basis[1][1]),
    )
}

/// Search window for lattice minimization; ample for the mildly conditioned
/// bases [`Manifold::validate`] admits.
const LATTICE_RANGE: i64 = 3;

fn lattice_min_disp(basis: &[[f64; 2]; 2], d: Vector2<f64>) -> Vector2<f64> {
    let (b1, b2) = basis_columns(basis);
    let mut best = d;
    let mut best_norm = d.norm_squared();
    for m1 in -LATTICE_RANGE..=LATTICE_RANGE {
        for m2 in -LATTICE_RANGE..=LATTICE_RANGE {
            let cand = d + b1 * m1 as f64 + b2 * m2 as f64;
            let norm = cand.norm_squared();
            if norm < best_norm {
                best_norm = norm;
                best = cand;
            }
        }
    }
    best
}

/// Length of the shortest nonzero lattice vector.
fn systole(basis: &[[f64; 2]; 2]) -> f64 {
    let (b1, b2) = basis_columns(basis);
    let mut best = f64::INFINITY;
    for m1 in -LATTICE_RANGE..=LATTICE_RANGE {
        for m2 in -LATTICE_RANGE..=LATTICE_RANGE {
            if m1 == 0 && m2 == 0 {
                continue;
            }
            best = best.min((b1 * m1 as f64 + b2 * m2 as f64).norm());
        }
    }
    best
}

fn as_vector2(p: &[f64]) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

fn as_vector3(p: &[f64]) -> Vector3<f64> {
    Vector3::new(p[0], p[1], p[2])
}

/// Validates a base point against the (normalized) manifold and returns its
/// canonical form (sphere points are renormalized to unit length).
pub fn canonical_point(m: &Manifold, p: &DVector<f64>) -> Result<DVector<f64>> {
    let m = m.normalized();
    if p.len() != m.coord_dim() {
        return Err(Error::malformed(format!(
            "point has {} coordinates, manifold needs {}",
            p.len(),
            m.coord_dim()
        )));
    }
    if p.iter().any(|x| !x.is_finite()) {
        return Err(Error::malformed("point has non-finite coordinates"));
    }
    match &m {
        Manifold::FlatTorus { .. } => Ok(p.clone()),
        Manifold::RoundSphere { .. } => {
            let v = as_vector3(p.as_slice());
            let norm = v.norm();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::malformed(format!(
                    "sphere points are unit vectors; |p| = {norm}"
                )));
            }
            let u = v / norm;
            Ok(DVector::from_vec(vec![u.x, u.y, u.z]))
        }
        Manifold::Product { first, second } => {
            let da = first.coord_dim();
            let a = canonical_point(first, &DVector::from_column_slice(&p.as_slice()[..da]))?;
            let b = canonical_point(second, &DVector::from_column_slice(&p.as_slice()[da..]))?;
            let mut coords = a.as_slice().to_vec();
            coords.extend_from_slice(b.as_slice());
            Ok(DVector::from_vec(coords))
        }
        Manifold::Rescaled { .. } => unreachable!("normalized"),
    }
}

/// Base distance between two points.
pub fn base_distance(m: &Manifold, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
    let m = m.normalized();
    let p = canonical_point(&m, p)?;
    let q = canonical_point(&m, q)?;
    Ok(base_distance_unchecked(&m, p.as_slice(), q.as_slice()))
}

fn base_distance_unchecked(m: &Manifold, p: &[f64], q: &[f64]) -> f64 {
    match m {
        Manifold::FlatTorus { basis } => {
            lattice_min_disp(basis, as_vector2(p) - as_vector2(q)).norm()
        }
        Manifold::RoundSphere { radius } => {
            let a = as_vector3(p);
            let b = as_vector3(q);
            radius * a.cross(&b).norm().atan2(a.dot(&b).clamp(-1.0, 1.0))
        }
        Manifold::Product { first, second } => {
            let da = first.coord_dim();
            let d1 = base_distance_unchecked(first, &p[..da], &q[..da]);
            let d2 = base_distance_unchecked(second, &p[da..], &q[da..]);
            (d1 * d1 + d2 * d2).sqrt()
        }
        Manifold::Rescaled { .. } => unreachable!("normalized"),
    }
}

/// A straight segment in torus cover coordinates.
#[derive(Debug, Clone)]
pub struct TorusLine {
    pub start: Vector2<f64>,
    pub disp: Vector2<f64>,
}

/// A piecewise-geodesic (or latitude) curve matching the manifold's shape.
///
/// Product curves pair component curves; their length is the proportional-
/// pacing value `sqrt(len₁² + len₂²)` — the infimum over reparametrizations,
/// and the only value any distance bound wants. Transport does not depend on
/// pacing at all.
#[derive(Debug, Clone)]
pub enum Curve {
    TorusPath(Vec<TorusLine>),
    SpherePath(Vec<SphereArc>),
    ProductPath(Box<Curve>, Box<Curve>),
}

/// Transport along a curve: the fiber-coordinate matrix and the curve length.
#[derive(Debug, Clone)]
pub struct TransportResult {
    pub matrix: DMatrix<f64>,
    pub length: f64,
}

const JUNCTION_TOL: f64 = 1e-9;

fn validate_curve(m: &Manifold, curve: &Curve) -> Result<()> {
    match (m, curve) {
        (Manifold::FlatTorus { .. }, Curve::TorusPath(segs)) => {
            for pair in segs.windows(2) {
                let end = pair[0].start + pair[0].disp;
                if (end - pair[1].start).norm() > JUNCTION_TOL {
                    return Err(Error::malformed("discontinuous torus path"));
                }
            }
            if segs
                .iter()
                .any(|s| !(s.start.norm().is_finite() && s.disp.norm().is_finite()))
            {
                return Err(Error::malformed("torus path has non-finite coordinates"));
            }
            Ok(())
        }
        (Manifold::RoundSphere { .. }, Curve::SpherePath(arcs)) => {
            for arc in arcs {
                arc.validate()?;
            }
            for pair in arcs.windows(2) {
                if (pair[0].end() - pair[1].start()).norm() > JUNCTION_TOL {
                    return Err(Error::malformed("discontinuous sphere path"));
                }
            }
            Ok(())
        }
        (Manifold::Product { first, second }, Curve::ProductPath(c1, c2)) => {
            validate_curve(first, c1)?;
            validate_curve(second, c2)
        }
        _ => Err(Error::malformed(
            "curve shape does not match the manifold variant",
        )),
    }
}

/// Length of a curve on the manifold.
pub fn curve_length(m: &Manifold, curve: &Curve) -> Result<f64> {
    let m = m.normalized();
    validate_curve(&m, curve)?;
    Ok(curve_length_unchecked(&m, curve))
}

fn curve_length_unchecked(m: &Manifold, curve: &Curve) -> f64 {
    match (m, curve) {
        (Manifold::FlatTorus { .. }, Curve::TorusPath(segs)) => {
            segs.iter().map(|s| s.disp.norm()).sum()
        }
        (Manifold::RoundSphere { radius }, Curve::SpherePath(arcs)) => {
            radius * arcs.iter().map(|a| a.unit_length()).sum::<f64>()
        }
        (Manifold::Product { first, second }, Curve::ProductPath(c1, c2)) => {
            let l1 = curve_length_unchecked(first, c1);
            let l2 = curve_length_unchecked(second, c2);
            (l1 * l1 + l2 * l2).sqrt()
        }
        _ => unreachable!("validated"),
    }
}

/// Parallel transport along a curve, in fiber coordinates. Empty paths give
/// the identity.
pub fn parallel_transport(m: &Manifold, curve: &Curve) -> Result<TransportResult> {
    let m = m.normalized();
    validate_curve(&m, curve)?;
    let matrix = transport_matrix(&m, curve)?;
    Ok(TransportResult {
        matrix,
        length: curve_length_unchecked(&m, curve),
    })
}

fn transport_matrix(m: &Manifold, curve: &Curve) -> Result<DMatrix<f64>> {
    match (m, curve) {
        (Manifold::FlatTorus { .. }, Curve::TorusPath(_)) => Ok(DMatrix::identity(2, 2)),
        (Manifold::RoundSphere { .. }, Curve::SpherePath(arcs)) => {
            if arcs.is_empty() {
                return Ok(DMatrix::identity(2, 2));
            }
            let mut ambient = Matrix3::identity();
            for arc in arcs {
                ambient = arc.ambient_transport() * ambient;
            }
            let start = arcs.first().unwrap().start();
            let end = arcs.last().unwrap().end();
            let fc = sphere::frame_coordinates(&ambient, &start, &end)?;
            Ok(DMatrix::from_fn(2, 2, |i, j| fc[(i, j)]))
        }
        (Manifold::Product { first, second }, Curve::ProductPath(c1, c2)) => {
            let m1 = transport_matrix(first, c1)?;
            let m2 = transport_matrix(second, c2)?;
            let (k1, k2) = (m1.nrows(), m2.nrows());
            let mut block = DMatrix::zeros(k1 + k2, k1 + k2);
            block.view_mut((0, 0), (k1, k1)).copy_from(&m1);
            block.view_mut((k1, k1), (k2, k2)).copy_from(&m2);
            Ok(block)
        }
        _ => unreachable!("validated"),
    }
}

fn curve_endpoints(m: &Manifold, curve: &Curve) -> Option<(DVector<f64>, DVector<f64>)> {
    match (m, curve) {
        (Manifold::FlatTorus { .. }, Curve::TorusPath(segs)) => {
            let first = segs.first()?;
            let last = segs.last()?;
            let end = last.start + last.disp;
            Some((
                DVector::from_vec(vec![first.start.x, first.start.y]),
                DVector::from_vec(vec![end.x, end.y]),
            ))
        }
        (Manifold::RoundSphere { .. }, Curve::SpherePath(arcs)) => {
            let s = arcs.first()?.start();
            let e = arcs.last()?.end();
            Some((
                DVector::from_vec(vec![s.x, s.y, s.z]),
                DVector::from_vec(vec![e.x, e.y, e.z]),
            ))
        }
        (Manifold::Product { first, second }, Curve::ProductPath(c1, c2)) => {
            let (s1, e1) = curve_endpoints(first, c1)?;
            let (s2, e2) = curve_endpoints(second, c2)?;
            let cat = |a: &DVector<f64>, b: &DVector<f64>| {
                let mut coords = a.as_slice().to_vec();
                coords.extend_from_slice(b.as_slice());
                DVector::from_vec(coords)
            };
            Some((cat(&s1, &s2), cat(&e1, &e2)))
        }
        _ => None,
    }
}

/// The same curve traversed backwards.
pub fn reverse_curve(curve: &Curve) -> Curve {
    match curve {
        Curve::TorusPath(segs) => Curve::TorusPath(
            segs.iter()
                .rev()
                .map(|s| TorusLine {
                    start: s.start + s.disp,
                    disp: -s.disp,
                })
                .collect(),
        ),
        Curve::SpherePath(arcs) => {
            Curve::SpherePath(arcs.iter().rev().map(|a| a.reversed()).collect())
        }
        Curve::ProductPath(c1, c2) => Curve::ProductPath(
            Box::new(reverse_curve(c1)),
            Box::new(reverse_curve(c2)),
        ),
    }
}

/// Transport around a closed curve. Errors unless the endpoints agree on the
/// manifold (torus paths may close through a lattice translation).
pub fn loop_holonomy(m: &Manifold, curve: &Curve) -> Result<TransportResult> {
    let m = m.normalized();
    validate_curve(&m, curve)?;
    if let Some((start, end)) = curve_endpoints(&m, curve) {
        let gap = base_distance_unchecked(&m, start.as_slice(), end.as_slice());
        if gap > JUNCTION_TOL {
            return Err(Error::domain(format!(
                "curve is not a loop: endpoints are {gap:.3e} apart"
            )));
        }
    }
    let matrix = transport_matrix(&m, curve)?;
    Ok(TransportResult {
        matrix,
        length: curve_length_unchecked(&m, curve),
    })
}

/// Minimal geodesic between two base points, as a curve (torus: best lattice
/// representative line; sphere: minimal great arc; products pair factors).
pub fn minimal_geodesic(m: &Manifold, p: &DVector<f64>, q: &DVector<f64>) -> Result<Curve> {
    let m = m.normalized();
    let p = canonical_point(&m, p)?;
    let q = canonical_point(&m, q)?;
    minimal_geodesic_unchecked(&m, &p, &q)
}

fn minimal_geodesic_unchecked(m: &Manifold, p: &DVector<f64>, q: &DVector<f64>) -> Result<Curve> {
    match m {
        Manifold::FlatTorus { basis } => {
            let disp = lattice_min_disp(basis, as_vector2(q.as_slice()) - as_vector2(p.as_slice()));
            Ok(Curve::TorusPath(vec![TorusLine {
                start: as_vector2(p.as_slice()),
                disp,
            }]))
        }
        Manifold::RoundSphere { .. } => {
            let arc = sphere::minimal_arc(&as_vector3(p.as_slice()), &as_vector3(q.as_slice()))?;
            Ok(Curve::SpherePath(vec![arc]))
        }
        Manifold::Product { first, second } => {
            let da = first.coord_dim();
            let c1 = minimal_geodesic_unchecked(
                first,
                &DVector::from_column_slice(&p.as_slice()[..da]),
                &DVector::from_column_slice(&q.as_slice()[..da]),
            )?;
            let c2 = minimal_geodesic_unchecked(
                second,
                &DVector::from_column_slice(&p.as_slice()[da..]),
                &DVector::from_column_slice(&q.as_slice()[da..]),
            )?;
            Ok(Curve::ProductPath(Box::new(c1), Box::new(c2)))
        }
        Manifold::Rescaled { .. } => unreachable!("normalized"),
    }
}

/// A Sasaki-type distance value together with its provenance: `exact` when
/// the value is the model's distance (torus closed form, same-fiber sphere
/// values), otherwise a certified upper bound from the curve family.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SasakiBound {
    pub value: f64,
    pub exact: bool,
}

/// Distance on the tangent bundle between `(p, u)` and `(q, v)`.
///
/// Torus and product-of-tori values are exact closed forms; sphere values
/// are exact for coinciding base points and upper bounds otherwise (minimal
/// geodesic composed with an optimal pre-loop from the latitude family).
pub fn sasaki_distance(
    m: &Manifold,
    p: &DVector<f64>,
    u: &DVector<f64>,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<SasakiBound> {
    sasaki_distance_with_tol(m, p, u, q, v, DEFAULT_OPT_TOL)
}

/// [`sasaki_distance`] with an explicit optimizer refinement tolerance.
pub fn sasaki_distance_with_tol(
    m: &Manifold,
    p: &DVector<f64>,
    u: &DVector<f64>,
    q: &DVector<f64>,
    v: &DVector<f64>,
    tol: f64,
) -> Result<SasakiBound> {
    let m = m.normalized();
    let p = canonical_point(&m, p)?;
    let q = canonical_point(&m, q)?;
    check_fiber_dims(&m, u, v)?;
    sasaki_unchecked(&m, p.as_slice(), u.as_slice(), q.as_slice(), v.as_slice(), tol)
}

/// [`sasaki_distance`] on [`BundlePoint`] values (the CLI's input shape).
pub fn sasaki_distance_points(m: &Manifold, a: &BundlePoint, b: &BundlePoint) -> Result<SasakiBound> {
    sasaki_distance(
        m,
        &a.base_vector(),
        &a.fiber_vector(),
        &b.base_vector(),
        &b.fiber_vector(),
    )
}

fn check_fiber_dims(m: &Manifold, u: &DVector<f64>, v: &DVector<f64>) -> Result<()> {
    let k = m.fiber_dim();
    if u.len() != k || v.len() != k {
        return Err(Error::malformed(format!(
            "fiber vectors have dimensions {} and {}, bundle has fiber dimension {k}",
            u.len(),
            v.len()
        )));
    }
    Ok(())
}

fn sasaki_unchecked(
    m: &Manifold,
    p: &[f64],
    u: &[f64],
    q: &[f64],
    v: &[f64],
    tol: f64,
) -> Result<SasakiBound> {
    match m {
        Manifold::FlatTorus { basis } => {
            let d = lattice_min_disp(basis, as_vector2(p) - as_vector2(q)).norm();
            let fiber = euclid_gap(u, v);
            Ok(SasakiBound {
                value: (d * d + fiber * fiber).sqrt(),
                exact: true,
            })
        }
        Manifold::RoundSphere { radius } => sphere_pair_bound(*radius, p, u, q, v, tol),
        Manifold::Product { first, second } => {
            let da = first.coord_dim();
            let ka = first.fiber_dim();
            let b1 = sasaki_unchecked(first, &p[..da], &u[..ka], &q[..da], &v[..ka], tol)?;
            let b2 = sasaki_unchecked(second, &p[da..], &u[ka..], &q[da..], &v[ka..], tol)?;
            Ok(SasakiBound {
                value: (b1.value * b1.value + b2.value * b2.value).sqrt(),
                exact: b1.exact && b2.exact,
            })
        }
        Manifold::Rescaled { .. } => unreachable!("normalized"),
    }
}

fn euclid_gap(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Infimum over the sphere's curve family: minimal geodesic `p → q` preceded
/// by a latitude loop at `p` of enclosed area `A ∈ [0, 4π)`. The family
/// attains every holonomy element at its length-norm cost, so for `p = q`
/// the value is the fiberwise distance itself.
fn sphere_pair_bound(
    radius: f64,
    p: &[f64],
    u: &[f64],
    q: &[f64],
    v: &[f64],
    tol: f64,
) -> Result<SasakiBound> {
    let pv = as_vector3(p);
    let qv = as_vector3(q);
    let arc = sphere::minimal_arc(&pv, &qv)?;
    let base_len = radius * arc.unit_length();
    let same_base = arc.unit_length() < 1e-12;
    let g = if same_base {
        Matrix2::identity()
    } else {
        sphere::frame_coordinates(&arc.ambient_transport(), &pv, &qv)?
    };
    // |G R(A) u − v|² = |u|² + |v|² − 2(cos A · ⟨u, w⟩ + sin A · (u ∧ w)),
    // with w = Gᵀ v.
    let w = g.transpose() * Vector2::new(v[0], v[1]);
    let uu = Vector2::new(u[0], u[1]);
    let nn = uu.norm_squared() + w.norm_squared();
    let dot = uu.dot(&w);
    let cross = uu.x * w.y - uu.y * w.x;
    let objective = |a: f64| {
        let loop_len = radius * (a * (4.0 * PI - a)).max(0.0).sqrt();
        let fiber_sq = (nn - 2.0 * (a.cos() * dot + a.sin() * cross)).max(0.0);
        let total = base_len + loop_len;
        (total * total + fiber_sq).sqrt()
    };
    let (_, best) = minimize_1d(objective, 0.0, 4.0 * PI, tol);
    let value = best.min(objective(0.0));
    Ok(SasakiBound {
        value,
        exact: same_base,
    })
}

/// The curve-family route to the Sasaki distance, kept separate so closed
/// forms can be cross-checked against an honest optimization over curves.
/// On the torus this enumerates lattice-shifted straight segments; on the
/// sphere it coincides with the family bound of [`sasaki_distance`].
pub fn sasaki_curve_family_bound(
    m: &Manifold,
    p: &DVector<f64>,
    u: &DVector<f64>,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<SasakiBound> {
    let m = m.normalized();
    let p = canonical_point(&m, p)?;
    let q = canonical_point(&m, q)?;
    check_fiber_dims(&m, u, v)?;
    family_unchecked(&m, p.as_slice(), u.as_slice(), q.as_slice(), v.as_slice())
}

fn family_unchecked(m: &Manifold, p: &[f64], u: &[f64], q: &[f64], v: &[f64]) -> Result<SasakiBound> {
    match m {
        Manifold::FlatTorus { basis } => {
            let (b1, b2) = basis_columns(basis);
            let fiber = euclid_gap(u, v);
            let mut best = f64::INFINITY;
            for m1 in -LATTICE_RANGE..=LATTICE_RANGE {
                for m2 in -LATTICE_RANGE..=LATTICE_RANGE {
                    let target = as_vector2(q) + b1 * m1 as f64 + b2 * m2 as f64;
                    let seg = TorusLine {
                        start: as_vector2(p),
                        disp: target - as_vector2(p),
                    };
                    let len = curve_length_unchecked(m, &Curve::TorusPath(vec![seg]));
                    best = best.min((len * len + fiber * fiber).sqrt());
                }
            }
            Ok(SasakiBound {
                value: best,
                exact: false,
            })
        }
        Manifold::RoundSphere { radius } => {
            let b = sphere_pair_bound(*radius, p, u, q, v, DEFAULT_OPT_TOL)?;
            Ok(SasakiBound {
                value: b.value,
                exact: false,
            })
        }
        Manifold::Product { first, second } => {
            let da = first.coord_dim();
            let ka = first.fiber_dim();
            let b1 = family_unchecked(first, &p[..da], &u[..ka], &q[..da], &v[..ka])?;
            let b2 = family_unchecked(second, &p[da..], &u[ka..], &q[da..], &v[ka..])?;
            Ok(SasakiBound {
                value: (b1.value * b1.value + b2.value * b2.value).sqrt(),
                exact: false,
            })
        }
        Manifold::Rescaled { .. } => unreachable!("normalized"),
    }
}

/// Result of a length-norm estimate: the realized loop, its measured length,
/// and the measured holonomy angle of its transport.
#[derive(Debug, Clone)]
pub struct LengthNormEstimate {
    pub length: f64,
    pub holonomy_angle: f64,
    pub realizing_loop: Curve,
}

/// Estimates the length norm of the oriented fiber rotation by `theta`
/// (`θ ∈ [0, 2π]`, read as enclosed oriented area) at base point `p`:
/// the infimum of loop lengths whose holonomy realizes the rotation.
///
/// The sphere realizes it by the latitude loop of enclosed area `θ`
/// (measured honestly through [`curve_length`] and [`loop_holonomy`]),
/// giving `r·sqrt(θ(4π − θ))`. Flat manifolds only attain `θ = 0`; any
/// other target is an unattainable-target error.
pub fn length_norm_estimate(m: &Manifold, p: &DVector<f64>, theta: f64) -> Result<LengthNormEstimate> {
    let m = m.normalized();
    let p = canonical_point(&m, p)?;
    if !(0.0..=2.0 * PI).contains(&theta) {
        return Err(Error::domain(format!(
            "target rotation must lie in [0, 2π], got {theta}"
        )));
    }
    match &m {
        Manifold::FlatTorus { .. } => {
            if theta.min(2.0 * PI - theta) > 1e-9 {
                Err(Error::Unattained(
                    "flat holonomy cannot realize a nontrivial rotation".to_string(),
                ))
            } else {
                Ok(LengthNormEstimate {
                    length: 0.0,
                    holonomy_angle: 0.0,
                    realizing_loop: Curve::TorusPath(vec![]),
                })
            }
        }
        Manifold::RoundSphere { .. } => sphere_realized_loop(&m, &p, theta),
        Manifold::Product { .. } => Err(Error::domain(
            "length-norm estimates target a single rotation block; query the factors",
        )),
        Manifold::Rescaled { .. } => unreachable!("normalized"),
    }
}

/// Builds the latitude loop of enclosed area `area ∈ [0, 4π)` at `p` and
/// measures its length and holonomy honestly through the curve machinery.
fn sphere_realized_loop(m: &Manifold, p: &DVector<f64>, area: f64) -> Result<LengthNormEstimate> {
    let arcs = sphere::latitude_loop_through(&as_vector3(p.as_slice()), area)?;
    let curve = Curve::SpherePath(arcs);
    let transport = loop_holonomy(m, &curve)?;
    let angle = sphere::rotation_angle(&Matrix2::new(
        transport.matrix[(0, 0)],
        transport.matrix[(0, 1)],
        transport.matrix[(1, 0)],
        transport.matrix[(1, 1)],
    ))
    .rem_euclid(2.0 * PI);
    let target = area.rem_euclid(2.0 * PI);
    let gap = (angle - target).abs().min(2.0 * PI - (angle - target).abs());
    if gap > 1e-6 {
        return Err(Error::Unattained(format!(
            "constructed loop realizes angle {angle:.9}, target {target:.9}"
        )));
    }
    Ok(LengthNormEstimate {
        length: transport.length,
        holonomy_angle: angle,
        realizing_loop: curve,
    })
}

/// [`length_norm_estimate`] addressed by a transport matrix instead of an
/// oriented angle. A matrix determines its angle only mod 2π, so the
/// cheaper of the two oriented realizations is returned; reflections are
/// unattainable (parallel transport preserves orientation), and on flat
/// manifolds only the identity is attainable.
pub fn length_norm_estimate_for_matrix(
    m: &Manifold,
    p: &DVector<f64>,
    target: &DMatrix<f64>,
) -> Result<LengthNormEstimate> {
    if target.nrows() != 2 || target.ncols() != 2 {
        return Err(Error::malformed(
            "matrix targets address a single 2×2 rotation block",
        ));
    }
    let t = Matrix2::new(
        target[(0, 0)],
        target[(0, 1)],
        target[(1, 0)],
        target[(1, 1)],
    );
    if (t * t.transpose() - Matrix2::identity()).norm() > 1e-9 {
        return Err(Error::malformed("target matrix must be orthogonal"));
    }
    if t.determinant() < 0.0 {
        return Err(Error::Unattained(
            "parallel transport preserves orientation; reflections are unattainable".to_string(),
        ));
    }
    let theta = sphere::rotation_angle(&t).rem_euclid(2.0 * PI);
    let m = m.normalized();
    let p = canonical_point(&m, p)?;
    match &m {
        Manifold::FlatTorus { .. } => length_norm_estimate(&m, &p, theta),
        Manifold::RoundSphere { .. } => {
            let small = sphere_realized_loop(&m, &p, theta)?;
            if theta <= PI {
                return Ok(small);
            }
            let big = sphere_realized_loop(&m, &p, theta + 2.0 * PI)?;
            Ok(if big.length < small.length { big } else { small })
        }
        Manifold::Product { .. } => Err(Error::domain(
            "length-norm estimates target a single rotation block; query the factors",
        )),
        Manifold::Rescaled { .. } => unreachable!("normalized"),
    }
}

/// A regular geodesic polygon about a point, the challenge family against
/// the latitude loops: same enclosed area, never shorter (spherical
/// isoperimetry), with its transport measured rather than assumed.
#[derive(Debug, Clone)]
pub struct PolygonLoop {
    pub vertices: usize,
    pub circumradius: f64,
    pub perimeter: f64,
    pub enclosed_area: f64,
    pub holonomy_angle: f64,
    pub curve: Curve,
}

/// Enclosed area (spherical excess) of the regular `n`-gon whose vertices
/// sit at angular distance `rho` from the center, via the interior-angle
/// sum of the `n` isoceles central triangles.
fn regular_polygon_area(n: usize, rho: f64) -> f64 {
    let nf = n as f64;
    let gamma = 2.0 * PI / nf;
    let cos_e = rho.cos().powi(2) + rho.sin().powi(2) * gamma.cos();
    let e = cos_e.clamp(-1.0, 1.0).acos();
    if e < 1e-12 || rho.sin() < 1e-12 {
        return 0.0;
    }
    let cos_beta = (rho.cos() * (1.0 - cos_e)) / (rho.sin() * e.sin());
    let beta = cos_beta.clamp(-1.0, 1.0).acos();
    2.0 * nf * beta - (nf - 2.0) * PI
}

/// Builds the regular `n`-gon loop about `p` on a sphere with enclosed area
/// `theta` (unit-sphere angle units, `0 < theta ≤ 2π`), solving for the
/// circumradius by bisection and cross-checking the measured holonomy
/// against the area mod 2π.
pub fn regular_polygon_loop(
    m: &Manifold,
    p: &DVector<f64>,
    n: usize,
    theta: f64,
) -> Result<PolygonLoop> {
    let m = m.normalized();
    let radius = match &m {
        Manifold::RoundSphere { radius } => *radius,
        _ => return Err(Error::domain("polygon loops are a sphere construction")),
    };
    if !(3..=64).contains(&n) {
        return Err(Error::domain(format!(
            "polygon needs between 3 and 64 vertices, got {n}"
        )));
    }
    if !(theta > 0.0 && theta <= 2.0 * PI) {
        return Err(Error::domain(format!(
            "polygon target area must lie in (0, 2π], got {theta}"
        )));
    }
    let p = canonical_point(&m, p)?;
    let pv = as_vector3(p.as_slice());

    // area(ρ) rises monotonically from 0 (ρ → 0) to 2π (ρ = π/2, where the
    // polygon degenerates to the equatorial circle), so bisection brackets.
    let (mut lo, mut hi) = (1e-6, PI / 2.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if regular_polygon_area(n, mid) < theta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);

    let frame = sphere::global_frame(&pv)?;
    let verts: Vec<Vector3<f64>> = (0..n)
        .map(|i| {
            let psi = 2.0 * PI * i as f64 / n as f64;
            let t = frame.column(0) * psi.cos() + frame.column(1) * psi.sin();
            pv * rho.cos() + t * rho.sin()
        })
        .collect();
    let mut arcs = Vec::with_capacity(n);
    for i in 0..n {
        arcs.push(sphere::minimal_arc(&verts[i], &verts[(i + 1) % n])?);
    }
    let curve = Curve::SpherePath(arcs);
    let transport = loop_holonomy(&m, &curve)?;
    let angle = sphere::rotation_angle(&Matrix2::new(
        transport.matrix[(0, 0)],
        transport.matrix[(0, 1)],
        transport.matrix[(1, 0)],
        transport.matrix[(1, 1)],
    ))
    .rem_euclid(2.0 * PI);
    let area = regular_polygon_area(n, rho);
    let gap = (angle - area.rem_euclid(2.0 * PI)).abs();
    let gap = gap.min(2.0 * PI - gap);
    if gap > 1e-6 {
        return Err(Error::Tolerance(format!(
            "polygon transport angle {angle:.9} disagrees with its area {area:.9}"
        )));
    }
    Ok(PolygonLoop {
        vertices: n,
        circumradius: radius * rho,
        perimeter: transport.length,
        enclosed_area: area,
        holonomy_angle: angle,
        curve,
    })
}

/// Fiberwise distance between two vectors in the fiber over `p`:
/// `min_a sqrt(L(a)² + |au − v|²)` over the holonomy group at `p`.
pub fn fiber_distance(m: &Manifold, p: &DVector<f64>, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    Ok(sasaki_distance(m, p, u, p, v)?.value)
}

/// Samples the fiber over `p` on the deterministic ball grid of radius `R`
/// (about `n` vectors) with the fiberwise metric. The base point of the
/// returned space is the zero vector.
pub fn fiber_metric_sample(m: &Manifold, p: &DVector<f64>, r: f64, n: usize) -> Result<FiniteMetricSpace> {
    let vectors = grid::ball_grid(m.fiber_dim(), r, n)?;
    fiber_metric_sample_on(m, p, &vectors)
}

/// Same as [`fiber_metric_sample`], over an explicit vector list (used when
/// the grid must line up with a quotient sample).
pub fn fiber_metric_sample_on(
    m: &Manifold,
    p: &DVector<f64>,
    vectors: &[DVector<f64>],
) -> Result<FiniteMetricSpace> {
    let m = m.normalized();
    let p = canonical_point(&m, p)?;
    let k = m.fiber_dim();
    if let Some(bad) = vectors.iter().find(|v| v.len() != k) {
        return Err(Error::malformed(format!(
            "fiber vector of dimension {} in a fiber of dimension {k}",
            bad.len()
        )));
    }
    if vectors.is_empty() {
        return Err(Error::domain("fiber sample needs at least one vector"));
    }
    let dist = par::pairwise_symmetric(vectors.len(), |i, j| {
        sasaki_unchecked(
            &m,
            p.as_slice(),
            vectors[i].as_slice(),
            p.as_slice(),
            vectors[j].as_slice(),
            DEFAULT_OPT_TOL,
        )
        .map(|b| b.value)
        .unwrap_or(f64::NAN)
    });
    let labels = vectors
        .iter()
        .map(|v| {
            let coords: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
            format!("u({})", coords.join(","))
        })
        .collect();
    let base = vectors.iter().position(|v| v.norm() <= 1e-12);
    FiniteMetricSpace::from_computed(labels, dist, base)
}

/// A sampled ball of the total space: the total metric sample, the base
/// sample it projects to, and the coordinates behind every index.
#[derive(Debug, Clone)]
pub struct BundleSample {
    pub space: FiniteMetricSpace,
    pub base_space: FiniteMetricSpace,
    /// Total index → base index (total points are base-major).
    pub proj: Vec<usize>,
    pub base_points: Vec<DVector<f64>>,
    pub fiber_grid: Vec<DVector<f64>>,
    /// Total index → fiber vector (shared grid, repeated per base point).
    pub fiber_vectors: Vec<DVector<f64>>,
    /// Fiber norms per total index (the norm map on the sample).
    pub norms: Vec<f64>,
}

/// Deterministic base grid of geodesic-ball shape around `p` with radius
/// `rho` (clamped away from injectivity trouble: torus grids stay inside
/// 45% of the systole, sphere grids inside 45% of the half-circumference).
pub fn base_grid(m: &Manifold, p: &DVector<f64>, rho: f64, n: usize) -> Result<Vec<DVector<f64>>> {
    let m = m.normalized();
    let p = canonical_point(&m, p)?;
    base_grid_unchecked(&m, &p, rho, n)
}

fn base_grid_unchecked(m: &Manifold, p: &DVector<f64>, rho: f64, n: usize) -> Result<Vec<DVector<f64>>> {
    if !(rho > 0.0) {
        return Err(Error::domain(format!("base radius must be positive, got {rho}")));
    }
    match m {
        Manifold::FlatTorus { basis } => {
            let safe = rho.min(0.45 * systole(basis));
            let disk = grid::ball_grid(2, safe, n)?;
            Ok(disk
                .iter()
                .map(|d| DVector::from_vec(vec![p[0] + d[0], p[1] + d[1]]))
                .collect())
        }
        Manifold::RoundSphere { radius } => {
            let safe_angle = (rho / radius).min(0.45 * PI);
            let pv = as_vector3(p.as_slice());
            let frame = sphere::global_frame(&pv)?;
            let disk = grid::ball_grid(2, safe_angle, n)?;
            Ok(disk
                .iter()
                .map(|d| {
                    let ang = (d[0] * d[0] + d[1] * d[1]).sqrt();
                    let point = if ang < 1e-15 {
                        pv
                    } else {
                        let t = (frame.column(0) * d[0] + frame.column(1) * d[1]) / ang;
                        pv * ang.cos() + t * ang.sin()
                    };
                    DVector::from_vec(vec![point.x, point.y, point.z])
                })
                .collect())
        }
        Manifold::Product { first, second } => {
            let da = first.coord_dim();
            let per = ((n as f64).sqrt().round() as usize).max(2);
            let g1 = base_grid_unchecked(
                first,
                &DVector::from_column_slice(&p.as_slice()[..da]),
                rho / 2f64.sqrt(),
                per,
            )?;
            let g2 = base_grid_unchecked(
                second,
                &DVector::from_column_slice(&p.as_slice()[da..]),
                rho / 2f64.sqrt(),
                per,
            )?;
            Ok(grid::product_grid(&g1, &g2))
        }
        Manifold::Rescaled { .. } => unreachable!("normalized"),
    }
}

/// Samples the total space over the ball of radius `R` about `p`: a base
/// grid in `B_R(p)` (clamped by the chart/injectivity limits of
/// [`base_grid`]) times a fiber grid in `B_R(0)`, with all-pairs bundle
/// distance bounds.
pub fn bundle_ball_sample(
    m: &Manifold,
    p: &DVector<f64>,
    r: f64,
    n_base: usize,
    n_fiber: usize,
) -> Result<BundleSample> {
    let m = m.normalized();
    let p = canonical_point(&m, p)?;
    if !(r > 0.0) {
        return Err(Error::domain(format!("ball radius must be positive, got {r}")));
    }
    let base_points = base_grid_unchecked(&m, &p, r, n_base)?;
    let fiber_grid = grid::ball_grid(m.fiber_dim(), r, n_fiber)?;
    bundle_sample_on(&m, &base_points, &fiber_grid)
}

/// Builds the total-space sample over explicit base points and a shared
/// fiber grid. The first base point at distance ~0 from a zero fiber vector
/// becomes the base index.
pub fn bundle_sample_on(
    m: &Manifold,
    base_points: &[DVector<f64>],
    fiber_grid: &[DVector<f64>],
) -> Result<BundleSample> {
    let m = m.normalized();
    if base_points.is_empty() || fiber_grid.is_empty() {
        return Err(Error::domain("bundle sample needs base points and fiber vectors"));
    }
    let canon: Vec<DVector<f64>> = base_points
        .iter()
        .map(|q| canonical_point(&m, q))
        .collect::<Result<_>>()?;
    let k = m.fiber_dim();
    if let Some(bad) = fiber_grid.iter().find(|v| v.len() != k) {
        return Err(Error::malformed(format!(
            "fiber vector of dimension {} in a fiber of dimension {k}",
            bad.len()
        )));
    }
    let nb = canon.len();
    let nf = fiber_grid.len();
    let total = nb * nf;

    let base_dist = par::pairwise_symmetric(nb, |i, j| {
        base_distance_unchecked(&m, canon[i].as_slice(), canon[j].as_slice())
    });
    let base_labels = (0..nb).map(|i| format!("b{i}")).collect();
    let base_space = FiniteMetricSpace::from_computed(base_labels, base_dist, Some(0))?;

    let mut dist = par::pairwise_symmetric(total, |a, b| {
        let (ia, fa) = (a / nf, a % nf);
        let (ib, fb) = (b / nf, b % nf);
        sasaki_unchecked(
            &m,
            canon[ia].as_slice(),
            fiber_grid[fa].as_slice(),
            canon[ib].as_slice(),
            fiber_grid[fb].as_slice(),
            DEFAULT_OPT_TOL,
        )
        .map(|x| x.value)
        .unwrap_or(f64::NAN)
    });
    if dist.iter().any(|row| row.iter().any(|x| x.is_nan())) {
        return Err(Error::domain(
            "bundle sample hit a geometry error (antipodal base pair or chart boundary)",
        ));
    }
    // Family bounds from a fixed curve shape are sound pair-by-pair but can
    // miss cheaper routes through intermediate samples; routing repairs the
    // triangle inequality while every entry stays a certified upper bound.
    crate::metric::metric_closure(&mut dist);
    let labels = (0..total)
        .map(|a| format!("b{}|f{}", a / nf, a % nf))
        .collect();
    let zero_fiber = fiber_grid
        .iter()
        .position(|v| v.norm() <= 1e-12)
        .unwrap_or(0);
    let base_index = Some(zero_fiber); // base point 0, zero vector
    let space = FiniteMetricSpace::from_computed(labels, dist, base_index)?;
    let proj: Vec<usize> = (0..total).map(|a| a / nf).collect();
    let fiber_vectors: Vec<DVector<f64>> = (0..total).map(|a| fiber_grid[a % nf].clone()).collect();
    let norms = fiber_vectors.iter().map(|v| v.norm()).collect();
    Ok(BundleSample {
        space,
        base_space,
        proj,
        base_points: canon,
        fiber_grid: fiber_grid.to_vec(),
        fiber_vectors,
        norms,
    })
}

/// The norm map `(p, u) ↦ |u|`, cross-checked against the bundle distance to
/// the zero vector over the same base point.
pub fn norm_map(m: &Manifold, p: &DVector<f64>, u: &DVector<f64>, tol: f64) -> Result<f64> {
    let zero = DVector::zeros(u.len());
    let d = sasaki_distance(m, p, u, p, &zero)?.value;
    let norm = u.norm();
    if (d - norm).abs() > tol {
        return Err(Error::Tolerance(format!(
            "norm map disagrees with the bundle distance: |u| = {norm}, d = {d}"
        )));
    }
    Ok(norm)
}

/// Upper bound for the holonomy radius at the zero vector over `p`:
/// `inf_a L(a) / |a − id|` over the holonomy group. Infinite for flat
/// manifolds; `∝ r` on spheres; the minimum over factors on products.
pub fn holonomy_radius_estimate(m: &Manifold, _p: &DVector<f64>) -> Result<Radius> {
    let m = m.normalized();
    Ok(match &m {
        Manifold::FlatTorus { .. } => Radius::Infinite,
        Manifold::RoundSphere { radius } => {
            let r = *radius;
            // Parametrize by the matrix angle δ ∈ (0, π]; the cheapest
            // realization costs r·sqrt(δ(4π − δ)) and |R(δ) − id| = 2 sin(δ/2).
            let ratio = |delta: f64| {
                r * (delta * (4.0 * PI - delta)).sqrt() / (2.0 * (delta / 2.0).sin())
            };
            let (_, best) = minimize_1d(ratio, 1e-9, PI, 1e-12);
            Radius::Finite(best)
        }
        Manifold::Product { first, second } => {
            let r1 = holonomy_radius_estimate(first, _p)?;
            let r2 = holonomy_radius_estimate(second, _p)?;
            r1.min(r2)
        }
        Manifold::Rescaled { .. } => unreachable!("normalized"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn north() -> DVector<f64> {
        dvector![0.0, 0.0, 1.0]
    }

    #[test]
    fn torus_base_distance_wraps() {
        let m = Manifold::unit_torus();
        let p = dvector![0.1, 0.1];
        let q = dvector![0.9, 0.1];
        assert!((base_distance(&m, &p, &q).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn rescaled_torus_scales_distances_and_nothing_else() {
        let m = Manifold::rescaled(Manifold::unit_torus(), 0.5);
        let p = dvector![0.05, 0.05];
        let q = dvector![0.45, 0.05];
        // On the 0.5-lattice the wrap makes this 0.1, not 0.4.
        assert!((base_distance(&m, &p, &q).unwrap() - 0.1).abs() < 1e-12);
        let u = dvector![0.3, 0.0];
        let v = dvector![0.0, 0.0];
        // Fiber norms are unscaled.
        let d = sasaki_distance(&m, &p, &u, &p, &v).unwrap();
        assert!((d.value - 0.3).abs() < 1e-12);
        assert!(d.exact);
    }

    #[test]
    fn torus_sasaki_closed_form() {
        let m = Manifold::unit_torus();
        let p = dvector![0.0, 0.0];
        let q = dvector![0.3, 0.4];
        let u = dvector![1.0, 0.0];
        let v = dvector![1.0, 1.0];
        let d = sasaki_distance(&m, &p, &u, &q, &v).unwrap();
        assert!(d.exact);
        assert!((d.value - (0.25f64 + 1.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn torus_family_bound_matches_closed_form() {
        let m = Manifold::unit_torus();
        let p = dvector![0.12, 0.77];
        let q = dvector![0.91, 0.05];
        let u = dvector![0.4, -0.2];
        let v = dvector![-0.1, 0.3];
        let exact = sasaki_distance(&m, &p, &u, &q, &v).unwrap().value;
        let family = sasaki_curve_family_bound(&m, &p, &u, &q, &v).unwrap().value;
        assert!((exact - family).abs() < 1e-12);
    }

    #[test]
    fn sphere_same_fiber_distance_never_exceeds_euclidean() {
        let m = Manifold::sphere(1.0);
        let p = north();
        let u = dvector![2.0, 0.0];
        let v = dvector![-2.0, 0.0];
        let d = fiber_distance(&m, &p, &u, &v).unwrap();
        assert!(d <= 4.0 + 1e-12);
        // Rotating u by π costs sqrt(π(4π−π)) ≈ 5.44 > 4: the straight gap wins.
        assert!((d - 4.0).abs() < 1e-9);
        // For long vectors the rotation route wins: the loop cost stays ≈ 5.44
        // while the straight gap grows with the vector length.
        let u = dvector![10.0, 0.0];
        let v = dvector![-10.0, 0.0];
        let d = fiber_distance(&m, &p, &u, &v).unwrap();
        assert!(d < 20.0 - 1.0, "rotation route should beat 20, got {d}");
        assert!(d <= (PI * (4.0 * PI - PI)).sqrt() + 1e-9);
    }

    #[test]
    fn sphere_norm_map_agrees_with_distance_to_zero() {
        let m = Manifold::sphere(2.0);
        let p = dvector![0.6, 0.0, 0.8];
        let u = dvector![0.7, -0.2];
        let norm = norm_map(&m, &p, &u, 1e-9).unwrap();
        assert!((norm - u.norm()).abs() < 1e-15);
    }

    #[test]
    fn length_norm_estimate_matches_cap_formula() {
        let m = Manifold::sphere(1.5);
        let p = dvector![0.0, 0.6, 0.8];
        for &theta in &[0.4, 1.0, PI, 5.0, 2.0 * PI] {
            let est = length_norm_estimate(&m, &p, theta).unwrap();
            let expect = 1.5 * (theta * (4.0 * PI - theta)).sqrt();
            assert!(
                (est.length - expect).abs() < 1e-9,
                "theta {theta}: {} vs {expect}",
                est.length
            );
        }
        let est = length_norm_estimate(&m, &p, 0.0).unwrap();
        assert_eq!(est.length, 0.0);
    }

    #[test]
    fn length_norm_estimate_on_torus_only_identity() {
        let m = Manifold::unit_torus();
        let p = dvector![0.0, 0.0];
        assert_eq!(length_norm_estimate(&m, &p, 0.0).unwrap().length, 0.0);
        assert!(matches!(
            length_norm_estimate(&m, &p, 1.0),
            Err(Error::Unattained(_))
        ));
    }

    #[test]
    fn product_transport_is_blockwise() {
        let m = Manifold::product(Manifold::unit_torus(), Manifold::sphere(1.0));
        let loop_torus = Curve::TorusPath(vec![TorusLine {
            start: Vector2::new(0.0, 0.0),
            disp: Vector2::new(1.0, 1.0),
        }]);
        let arcs = sphere::latitude_loop_through(&Vector3::z(), PI).unwrap();
        let loop_sphere = Curve::SpherePath(arcs);
        let curve = Curve::ProductPath(Box::new(loop_torus), Box::new(loop_sphere));
        let t = loop_holonomy(&m, &curve).unwrap();
        assert_eq!(t.matrix.nrows(), 4);
        // Torus block is the identity.
        assert!((t.matrix[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(t.matrix[(0, 1)].abs() < 1e-12);
        // Sphere block rotates by π (mod 2π).
        let angle = t.matrix[(3, 2)].atan2(t.matrix[(2, 2)]).rem_euclid(2.0 * PI);
        assert!((angle - PI).abs() < 1e-9, "angle {angle}");
        // Off-diagonal blocks vanish.
        assert!(t.matrix[(0, 2)].abs() < 1e-15);
        assert!(t.matrix[(2, 0)].abs() < 1e-15);
        // Product length uses proportional pacing.
        let expect = (2.0f64 + PI * (4.0 * PI - PI)).sqrt();
        assert!((t.length - expect).abs() < 1e-9);
    }

    #[test]
    fn lattice_diagonal_loop_has_identity_holonomy() {
        let m = Manifold::unit_torus();
        let curve = Curve::TorusPath(vec![TorusLine {
            start: Vector2::new(0.2, 0.3),
            disp: Vector2::new(1.0, 1.0),
        }]);
        let t = loop_holonomy(&m, &curve).unwrap();
        assert!((t.length - 2.0f64.sqrt()).abs() < 1e-12);
        assert!((t.matrix[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((t.matrix[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn open_curve_is_not_a_loop() {
        let m = Manifold::unit_torus();
        let curve = Curve::TorusPath(vec![TorusLine {
            start: Vector2::new(0.0, 0.0),
            disp: Vector2::new(0.5, 0.0),
        }]);
        assert!(matches!(loop_holonomy(&m, &curve), Err(Error::Domain(_))));
    }

    #[test]
    fn discontinuous_curve_is_rejected() {
        let m = Manifold::unit_torus();
        let curve = Curve::TorusPath(vec![
            TorusLine {
                start: Vector2::new(0.0, 0.0),
                disp: Vector2::new(0.3, 0.0),
            },
            TorusLine {
                start: Vector2::new(0.5, 0.0),
                disp: Vector2::new(0.2, 0.0),
            },
        ]);
        assert!(matches!(curve_length(&m, &curve), Err(Error::Malformed(_))));
    }

    #[test]
    fn curve_shape_must_match_manifold() {
        let m = Manifold::sphere(1.0);
        let curve = Curve::TorusPath(vec![]);
        assert!(matches!(curve_length(&m, &curve), Err(Error::Malformed(_))));
    }

    #[test]
    fn holonomy_radius_scales_with_sphere_radius() {
        let r1 = holonomy_radius_estimate(&Manifold::sphere(1.0), &north())
            .unwrap()
            .finite_value()
            .unwrap();
        let r3 = holonomy_radius_estimate(&Manifold::sphere(3.0), &north())
            .unwrap()
            .finite_value()
            .unwrap();
        assert!((r3 - 3.0 * r1).abs() < 1e-9);
        assert_eq!(
            holonomy_radius_estimate(&Manifold::unit_torus(), &dvector![0.0, 0.0]).unwrap(),
            Radius::Infinite
        );
        // Product takes the finite factor.
        let m = Manifold::product(Manifold::unit_torus(), Manifold::sphere(1.0));
        let rp = holonomy_radius_estimate(&m, &north()).unwrap();
        assert_eq!(rp, Radius::Finite(r1));
    }

    #[test]
    fn bundle_ball_sample_shapes_and_base() {
        let m = Manifold::unit_torus();
        let sample = bundle_ball_sample(&m, &dvector![0.5, 0.5], 0.4, 9, 9).unwrap();
        assert_eq!(sample.space.len(), sample.proj.len());
        assert_eq!(sample.space.len(), sample.base_points.len() * sample.fiber_grid.len());
        let b = sample.space.base.unwrap();
        assert_eq!(sample.proj[b], 0);
        assert!(sample.fiber_vectors[b].norm() < 1e-12);
        assert!(sample.norms[b] < 1e-12);
        // Distances match the closed form.
        let i = 3.min(sample.space.len() - 1);
        let j = sample.space.len() - 1;
        let (bi, fi) = (sample.proj[i], i % sample.fiber_grid.len());
        let (bj, fj) = (sample.proj[j], j % sample.fiber_grid.len());
        let expect = sasaki_distance(
            &m,
            &sample.base_points[bi],
            &sample.fiber_grid[fi],
            &sample.base_points[bj],
            &sample.fiber_grid[fj],
        )
        .unwrap()
        .value;
        assert!((sample.space.d(i, j) - expect).abs() < 1e-15);
    }

    #[test]
    fn manifold_json_round_trip() {
        let m = Manifold::product(
            Manifold::unit_torus(),
            Manifold::rescaled(Manifold::sphere(1.0), 0.25),
        );
        let text = serde_json::to_string(&m).unwrap();
        let back: Manifold = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.coord_dim(), 5);
        assert_eq!(back.fiber_dim(), 4);
        let norm = back.normalized();
        match norm {
            Manifold::Product { second, .. } => match second.as_ref() {
                Manifold::RoundSphere { radius } => assert!((radius - 0.25).abs() < 1e-15),
                other => panic!("unexpected {other:?}"),
            },
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reversed_curves_invert_transport_and_keep_length() {
        let m = Manifold::sphere(1.0);
        let arcs = sphere::latitude_loop_through(&Vector3::z(), 2.2).unwrap();
        let curve = Curve::SpherePath(arcs);
        let fwd = parallel_transport(&m, &curve).unwrap();
        let bwd = parallel_transport(&m, &reverse_curve(&curve)).unwrap();
        assert!((fwd.length - bwd.length).abs() < 1e-12);
        let prod = &bwd.matrix * &fwd.matrix;
        assert!((prod - DMatrix::identity(2, 2)).norm() < 1e-9);

        let mt = Manifold::unit_torus();
        let path = Curve::TorusPath(vec![
            TorusLine {
                start: Vector2::new(0.1, 0.2),
                disp: Vector2::new(0.3, 0.1),
            },
            TorusLine {
                start: Vector2::new(0.4, 0.3),
                disp: Vector2::new(-0.1, 0.2),
            },
        ]);
        let rev = reverse_curve(&path);
        let (s, e) = curve_endpoints(&mt.normalized(), &rev).unwrap();
        assert!((s - dvector![0.3, 0.5]).norm() < 1e-12);
        assert!((e - dvector![0.1, 0.2]).norm() < 1e-12);
        assert!(
            (curve_length(&mt, &path).unwrap() - curve_length(&mt, &rev).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn polygon_loops_match_their_area_and_never_beat_latitude() {
        let m = Manifold::sphere(1.0);
        let p = dvector![0.0, 0.0, 1.0];
        for &theta in &[0.7, PI, 5.0, 2.0 * PI] {
            let latitude = 1.0 * (theta * (4.0 * PI - theta)).sqrt();
            for n in [3usize, 4, 6] {
                let poly = regular_polygon_loop(&m, &p, n, theta).unwrap();
                assert!(
                    (poly.enclosed_area - theta).abs() < 1e-9,
                    "area missed: {} vs {theta}",
                    poly.enclosed_area
                );
                assert!(
                    poly.perimeter >= latitude - 1e-9,
                    "n={n} theta={theta}: polygon {} undercuts {latitude}",
                    poly.perimeter
                );
            }
        }
        // The equatorial degenerate case coincides with the latitude value.
        let poly = regular_polygon_loop(&m, &p, 4, 2.0 * PI).unwrap();
        assert!((poly.perimeter - 2.0 * PI).abs() < 1e-6);
    }

    #[test]
    fn matrix_targets_pick_the_cheaper_orientation() {
        let m = Manifold::sphere(1.0);
        let p = dvector![0.0, 0.0, 1.0];
        let theta = 3.0 * PI / 2.0;
        let rot = sphere::rot2(theta);
        let target = DMatrix::from_fn(2, 2, |i, j| rot[(i, j)]);
        let est = length_norm_estimate_for_matrix(&m, &p, &target).unwrap();
        let big = ((theta + 2.0 * PI) * (2.0 * PI - theta)).sqrt();
        assert!((est.length - big).abs() < 1e-9, "{} vs {big}", est.length);

        let refl = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            length_norm_estimate_for_matrix(&m, &p, &refl),
            Err(Error::Unattained(_))
        ));
        let mt = Manifold::unit_torus();
        let id = DMatrix::identity(2, 2);
        assert_eq!(
            length_norm_estimate_for_matrix(&mt, &dvector![0.0, 0.0], &id)
                .unwrap()
                .length,
            0.0
        );
    }

    #[test]
    fn sphere_bundle_sample_passes_the_metric_audit() {
        let m = Manifold::sphere(1.0);
        let sample = bundle_ball_sample(&m, &dvector![0.0, 0.0, 1.0], 1.0, 8, 6).unwrap();
        let report = sample.space.check(1e-9);
        assert!(report.is_metric(), "{report:?}");
        // Same-fiber entries survive the closure untouched: they are exact.
        let nf = sample.fiber_grid.len();
        for i in 0..nf {
            for j in (i + 1)..nf {
                let direct = fiber_distance(
                    &m,
                    &sample.base_points[0],
                    &sample.fiber_grid[i],
                    &sample.fiber_grid[j],
                )
                .unwrap();
                assert!((sample.space.d(i, j) - direct).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sphere_bounds_respect_the_universal_lower_bounds() {
        // Upper bounds from the curve family must still dominate the two
        // universal lower bounds: the base distance (projection is
        // 1-Lipschitz) and the norm gap (transport is isometric).
        let m = Manifold::sphere(1.0);
        let pts = [
            (dvector![0.0, 0.0, 1.0], dvector![0.4, -0.1]),
            (dvector![0.5, 0.5, 0.7071067811865476], dvector![-0.2, 0.3]),
            (dvector![0.8, 0.0, 0.6], dvector![1.1, 0.1]),
        ];
        for a in &pts {
            for b in &pts {
                let p = a.0.normalize();
                let q = b.0.normalize();
                let bound = sasaki_distance(&m, &p, &a.1, &q, &b.1).unwrap().value;
                let base = base_distance(&m, &p, &q).unwrap();
                let norms = (a.1.norm() - b.1.norm()).abs();
                assert!(bound >= base - 1e-12);
                assert!(bound >= norms - 1e-12);
                let euclid_cap = (base * base
                    + (a.1.clone() - b.1.clone()).norm_squared())
                .sqrt();
                if std::ptr::eq(a, b) {
                    assert!(bound.abs() < 1e-12);
                } else {
                    assert!(bound.is_finite() && bound > 0.0);
                }
                // Same-base pairs are never worse than the Euclidean gap.
                if base < 1e-12 {
                    assert!(bound <= euclid_cap + 1e-12);
                }
            }
        }
    }
}
