//! Quotients of ℝᵏ by closed orthogonal subgroups.
//!
//! When a holonomy group stops being small, fibers are visible only up to its
//! action: the Gromov-Hausdorff limits of collapsing fiber metrics are orbit
//! spaces `ℝᵏ / G` with the quotient metric
//! `d([u], [v]) = min_{g ∈ G} |u − gv|`. Since every `G` here acts by
//! isometries fixing the origin, the quotient is a metric cone and
//! `d([0], [u]) = |u|`.
//!
//! The catalog below covers the groups that actually arise as wane groups of
//! the model bundles: the trivial group, finite lists (cyclic groups, `±id`),
//! a single `SO(2)` rotation block, the full `SO(k)`, and coordinate-wise
//! products of these.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::metric::FiniteMetricSpace;
use crate::{par, Error, Result};

/// Nested-array (de)serialization for square matrices, shared by every JSON
/// schema that embeds group elements.
pub(crate) mod mat_json {
    use nalgebra::DMatrix;
    use serde::de::Error as DeError;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
            .collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(de)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(D::Error::custom("matrix rows must form a square"));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

fn mats_to_json(mats: &[DMatrix<f64>]) -> Vec<Vec<Vec<f64>>> {
    mats.iter()
        .map(|m| {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        })
        .collect()
}

fn mats_from_json(rows: &[Vec<Vec<f64>>]) -> Result<Vec<DMatrix<f64>>> {
    rows.iter()
        .map(|r| {
            let n = r.len();
            if r.iter().any(|row| row.len() != n) {
                return Err(Error::malformed("group element matrix is not square"));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
        })
        .collect()
}

/// A closed subgroup of `O(k)` from the catalog, stored in a form that makes
/// orbit distances closed-form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum OrthSubgroup {
    /// Only the identity.
    Trivial { k: usize },
    /// A finite subgroup stored extensionally. Must contain the identity and
    /// be closed under inverses and products (within `1e-9`).
    FiniteList {
        k: usize,
        #[serde(with = "finite_elements_json")]
        elements: Vec<DMatrix<f64>>,
    },
    /// All rotations of one coordinate plane, identity elsewhere.
    CircleSo2 { k: usize, block: (usize, usize) },
    /// The full rotation group.
    FullSo { k: usize },
    /// Factors acting on consecutive coordinate blocks.
    Product { factors: Vec<OrthSubgroup> },
}

mod finite_elements_json {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        mats: &[DMatrix<f64>],
        ser: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        use serde::Serialize;
        mats_to_json(mats).serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        de: D,
    ) -> std::result::Result<Vec<DMatrix<f64>>, D::Error> {
        use serde::de::Error as DeError;
        let rows: Vec<Vec<Vec<f64>>> = Vec::deserialize(de)?;
        mats_from_json(&rows).map_err(|e| D::Error::custom(e.to_string()))
    }
}

const GROUP_TOL: f64 = 1e-9;

fn is_identity(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| (m[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() <= tol))
}

fn orthogonality_residual(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

fn matrix_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    worst
}

impl OrthSubgroup {
    /// Dimension of the ambient space the group acts on.
    pub fn k(&self) -> usize {
        match self {
            OrthSubgroup::Trivial { k }
            | OrthSubgroup::FiniteList { k, .. }
            | OrthSubgroup::CircleSo2 { k, .. }
            | OrthSubgroup::FullSo { k } => *k,
            OrthSubgroup::Product { factors } => factors.iter().map(|f| f.k()).sum(),
        }
    }

    /// Builds a finite-list subgroup, verifying square shape, orthogonality,
    /// identity membership, and closure under inverses and products.
    pub fn finite_list(k: usize, elements: Vec<DMatrix<f64>>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::malformed("finite subgroup list is empty"));
        }
        for (idx, m) in elements.iter().enumerate() {
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::malformed(format!(
                    "element {idx} is {}x{}, expected {k}x{k}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let residual = orthogonality_residual(m);
            if residual > GROUP_TOL {
                return Err(Error::malformed(format!(
                    "element {idx} is not orthogonal (residual {residual:.3e})"
                )));
            }
        }
        if !elements.iter().any(|m| is_identity(m, GROUP_TOL)) {
            return Err(Error::malformed("finite subgroup must contain the identity"));
        }
        let contains = |m: &DMatrix<f64>| elements.iter().any(|e| matrix_gap(e, m) <= 1e-7);
        for (idx, m) in elements.iter().enumerate() {
            if !contains(&m.transpose()) {
                return Err(Error::malformed(format!(
                    "finite subgroup is not closed under inverses (element {idx})"
                )));
            }
        }
        for a in &elements {
            for b in &elements {
                if !contains(&(a * b)) {
                    return Err(Error::malformed(
                        "finite subgroup is not closed under products",
                    ));
                }
            }
        }
        Ok(OrthSubgroup::FiniteList { k, elements })
    }

    /// Builds an `SO(2)` rotation block on distinct coordinates `(i, j)`.
    pub fn circle_block(k: usize, block: (usize, usize)) -> Result<Self> {
        if block.0 >= k || block.1 >= k || block.0 == block.1 {
            return Err(Error::malformed(format!(
                "rotation block {block:?} invalid in dimension {k}"
            )));
        }
        Ok(OrthSubgroup::CircleSo2 { k, block })
    }

    /// Validates a deserialized descriptor (finite lists re-run closure
    /// checks, blocks are range-checked, products recurse).
    pub fn validate(&self) -> Result<()> {
        match self {
            OrthSubgroup::Trivial { k } | OrthSubgroup::FullSo { k } => {
                if *k == 0 {
                    Err(Error::malformed("group dimension must be positive"))
                } else {
                    Ok(())
                }
            }
            OrthSubgroup::FiniteList { k, elements } => {
                OrthSubgroup::finite_list(*k, elements.clone()).map(|_| ())
            }
            OrthSubgroup::CircleSo2 { k, block } => {
                OrthSubgroup::circle_block(*k, *block).map(|_| ())
            }
            OrthSubgroup::Product { factors } => {
                if factors.is_empty() {
                    return Err(Error::malformed("product group needs at least one factor"));
                }
                factors.iter().try_for_each(|f| f.validate())
            }
        }
    }

    /// Short human-readable description used in reports.
    pub fn name(&self) -> String {
        match self {
            OrthSubgroup::Trivial { k } => format!("trivial(k={k})"),
            OrthSubgroup::FiniteList { k, elements } => {
                format!("finite(n={}, k={k})", elements.len())
            }
            OrthSubgroup::CircleSo2 { k, block } => {
                format!("SO(2) on coords ({}, {}) in k={k}", block.0, block.1)
            }
            OrthSubgroup::FullSo { k } => format!("SO({k})"),
            OrthSubgroup::Product { factors } => {
                let names: Vec<String> = factors.iter().map(|f| f.name()).collect();
                format!("product[{}]", names.join(" x "))
            }
        }
    }
}

/// Distance between the orbits of `u` and `v`: `min_g |u − gv|`, evaluated in
/// closed form per catalog variant.
pub fn orbit_distance(group: &OrthSubgroup, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let k = group.k();
    if u.len() != k || v.len() != k {
        return Err(Error::malformed(format!(
            "points of dimension {} and {} for a group acting on dimension {k}",
            u.len(),
            v.len()
        )));
    }
    Ok(orbit_distance_unchecked(group, u.as_slice(), v.as_slice()))
}

fn orbit_distance_unchecked(group: &OrthSubgroup, u: &[f64], v: &[f64]) -> f64 {
    match group {
        OrthSubgroup::Trivial { .. } => euclid(u, v),
        OrthSubgroup::FiniteList { elements, .. } => {
            let vd = DVector::from_column_slice(v);
            elements
                .iter()
                .map(|g| {
                    let gv = g * &vd;
                    u.iter()
                        .zip(gv.iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        }
        OrthSubgroup::CircleSo2 { k, block } => {
            // Aligning the block components optimally leaves the difference
            // of their lengths; the off-block part is rigid.
            let (b0, b1) = *block;
            let mut rest = 0.0;
            for i in 0..*k {
                if i != b0 && i != b1 {
                    rest += (u[i] - v[i]) * (u[i] - v[i]);
                }
            }
            let nu = (u[b0] * u[b0] + u[b1] * u[b1]).sqrt();
            let nv = (v[b0] * v[b0] + v[b1] * v[b1]).sqrt();
            (rest + (nu - nv) * (nu - nv)).sqrt()
        }
        OrthSubgroup::FullSo { .. } => {
            let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            (nu - nv).abs()
        }
        OrthSubgroup::Product { factors } => {
            let mut total = 0.0;
            let mut off = 0;
            for f in factors {
                let kf = f.k();
                let d = orbit_distance_unchecked(f, &u[off..off + kf], &v[off..off + kf]);
                total += d * d;
                off += kf;
            }
            total.sqrt()
        }
    }
}

fn euclid(u: &[f64], v: &[f64]) -> f64 {
    u.iter()
        .zip(v.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// A sampled quotient: the metric space of orbit classes, one representative
/// vector per class, and the class index of every input point.
#[derive(Debug, Clone)]
pub struct QuotientSample {
    pub space: FiniteMetricSpace,
    pub representatives: Vec<DVector<f64>>,
    pub class_of: Vec<usize>,
}

/// Builds the orbit-space sample over an explicit point set: merges points
/// whose orbits coincide (orbit distance `<= 1e-9`), then fills class
/// distances with [`orbit_distance`]. The base point is the class of the
/// origin when the origin is present.
pub fn quotient_sample_on(group: &OrthSubgroup, points: &[DVector<f64>]) -> Result<QuotientSample> {
    let k = group.k();
    if points.is_empty() {
        return Err(Error::domain("quotient sample needs at least one point"));
    }
    if let Some(p) = points.iter().find(|p| p.len() != k) {
        return Err(Error::malformed(format!(
            "sample point of dimension {} for a group acting on dimension {k}",
            p.len()
        )));
    }
    let mut reps: Vec<DVector<f64>> = Vec::new();
    let mut class_of = Vec::with_capacity(points.len());
    for p in points {
        let class = reps
            .iter()
            .position(|r| orbit_distance_unchecked(group, r.as_slice(), p.as_slice()) <= 1e-9);
        match class {
            Some(c) => class_of.push(c),
            None => {
                reps.push(p.clone());
                class_of.push(reps.len() - 1);
            }
        }
    }
    let m = reps.len();
    let dist = par::pairwise_symmetric(m, |i, j| {
        orbit_distance_unchecked(group, reps[i].as_slice(), reps[j].as_slice())
    });
    let base = reps.iter().position(|r| r.norm() <= 1e-12);
    let labels = reps
        .iter()
        .map(|r| {
            let coords: Vec<String> = r.iter().map(|x| format!("{x:.6}")).collect();
            format!("[{}]", coords.join(","))
        })
        .collect();
    let space = FiniteMetricSpace::from_computed(labels, dist, base)?;
    Ok(QuotientSample {
        space,
        representatives: reps,
        class_of,
    })
}

/// Builds the orbit-space sample over the deterministic grid on `B_r(0)`.
pub fn quotient_sample(group: &OrthSubgroup, r: f64, n: usize) -> Result<QuotientSample> {
    if r <= 0.0 {
        return Err(Error::domain(format!("ball radius must be positive, got {r}")));
    }
    let points = crate::bundle::grid::ball_grid(group.k(), r, n)?;
    quotient_sample_on(group, &points)
}

/// Result of the cone-scaling spot check
/// `d([0], [λu]) = |λ| · d([0], [u])`.
#[derive(Debug, Clone, Serialize)]
pub struct ConeScalingReport {
    pub max_abs_deviation: f64,
    pub checks: usize,
    pub holds: bool,
}

/// Verifies the metric-cone property of the quotient on seeded random
/// samples and a fixed scale list (including 0 and negative scales).
pub fn cone_scaling_check(group: &OrthSubgroup, seed: u64, n_samples: usize) -> ConeScalingReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = group.k();
    let scales = [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 3.75];
    let origin = DVector::zeros(k);
    let mut worst = 0.0f64;
    let mut checks = 0usize;
    for _ in 0..n_samples {
        let u = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
        let du = orbit_distance_unchecked(group, origin.as_slice(), u.as_slice());
        for &s in &scales {
            let su = &u * s;
            let dsu = orbit_distance_unchecked(group, origin.as_slice(), su.as_slice());
            worst = worst.max((dsu - s.abs() * du).abs());
            checks += 1;
        }
    }
    ConeScalingReport {
        max_abs_deviation: worst,
        checks,
        holds: worst <= 1e-9,
    }
}

/// Serializable snapshot of a group element list (used in wane reports).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixList {
    #[serde(with = "finite_elements_json")]
    pub elements: Vec<DMatrix<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn neg_id(k: usize) -> DMatrix<f64> {
        -DMatrix::<f64>::identity(k, k)
    }

    #[test]
    fn trivial_orbit_distance_is_euclidean() {
        let g = OrthSubgroup::Trivial { k: 3 };
        let u = dvector![1.0, 2.0, 2.0];
        let v = dvector![1.0, 0.0, 0.0];
        assert!((orbit_distance(&g, &u, &v).unwrap() - 8.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn z2_orbit_distance_takes_the_better_sign() {
        let g =
            OrthSubgroup::finite_list(2, vec![DMatrix::identity(2, 2), neg_id(2)]).unwrap();
        let u = dvector![1.0, 0.0];
        let v = dvector![-0.9, 0.0];
        // Directly: 1.9; after flipping v: 0.1.
        assert!((orbit_distance(&g, &u, &v).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn finite_list_requires_closure() {
        // A single non-identity element without its inverse's products being
        // present: {id, R(π/2)} is not closed under products.
        let r = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let err = OrthSubgroup::finite_list(2, vec![DMatrix::identity(2, 2), r]);
        assert!(matches!(err, Err(Error::Malformed(_))));
    }

    #[test]
    fn circle_block_orbit_distance_closed_form() {
        let g = OrthSubgroup::circle_block(4, (2, 3)).unwrap();
        let u = dvector![1.0, 0.0, 3.0, 4.0]; // block norm 5
        let v = dvector![0.0, 0.0, 0.0, 2.0]; // block norm 2
        let expect = (1.0f64 + 9.0).sqrt(); // rest gap 1, norms gap 3
        assert!((orbit_distance(&g, &u, &v).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn full_so_orbit_distance_is_norm_gap() {
        let g = OrthSubgroup::FullSo { k: 3 };
        let u = dvector![3.0, 0.0, 4.0];
        let v = dvector![0.0, 1.0, 0.0];
        assert!((orbit_distance(&g, &u, &v).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn product_orbit_distance_is_blockwise() {
        let g = OrthSubgroup::Product {
            factors: vec![
                OrthSubgroup::Trivial { k: 2 },
                OrthSubgroup::circle_block(2, (0, 1)).unwrap(),
            ],
        };
        assert_eq!(g.k(), 4);
        let u = dvector![1.0, 0.0, 0.0, 2.0];
        let v = dvector![0.0, 0.0, 1.0, 0.0];
        let expect = (1.0f64 + 1.0).sqrt(); // euclid gap 1, norm gap 1
        assert!((orbit_distance(&g, &u, &v).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_malformed() {
        let g = OrthSubgroup::Trivial { k: 2 };
        let u = dvector![1.0, 2.0, 3.0];
        assert!(matches!(
            orbit_distance(&g, &u, &u),
            Err(Error::Malformed(_))
        ));
    }

    #[test]
    fn so2_quotient_of_disk_is_a_segment() {
        let g = OrthSubgroup::circle_block(2, (0, 1)).unwrap();
        let q = quotient_sample(&g, 2.0, 60).unwrap();
        // All classes are radii; distances are radius gaps.
        for (c, rep) in q.representatives.iter().enumerate() {
            for (e, other) in q.representatives.iter().enumerate() {
                let expect = (rep.norm() - other.norm()).abs();
                assert!((q.space.d(c, e) - expect).abs() < 1e-12);
            }
        }
        assert!(q.space.base.is_some());
        let b = q.space.base.unwrap();
        assert!(q.representatives[b].norm() < 1e-12);
        // The segment has far fewer classes than the disk grid has points.
        assert!(q.space.len() < q.class_of.len());
    }

    #[test]
    fn trivial_quotient_keeps_all_points() {
        let g = OrthSubgroup::Trivial { k: 2 };
        let q = quotient_sample(&g, 1.0, 40).unwrap();
        assert_eq!(q.space.len(), q.class_of.len());
    }

    #[test]
    fn z2_quotient_folds_the_line() {
        let g = OrthSubgroup::finite_list(1, vec![
            DMatrix::identity(1, 1),
            neg_id(1),
        ])
        .unwrap();
        let points: Vec<DVector<f64>> = (-5..=5).map(|i| dvector![i as f64 * 0.2]).collect();
        let q = quotient_sample_on(&g, &points).unwrap();
        assert_eq!(q.space.len(), 6); // radii 0.0, 0.2, ..., 1.0
        for (c, rep) in q.representatives.iter().enumerate() {
            for (e, other) in q.representatives.iter().enumerate() {
                let expect = (rep.norm() - other.norm()).abs();
                assert!((q.space.d(c, e) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cone_scaling_holds_for_catalog_groups() {
        let groups: Vec<OrthSubgroup> = vec![
            OrthSubgroup::Trivial { k: 3 },
            OrthSubgroup::finite_list(2, vec![DMatrix::identity(2, 2), neg_id(2)]).unwrap(),
            OrthSubgroup::circle_block(3, (0, 2)).unwrap(),
            OrthSubgroup::FullSo { k: 4 },
        ];
        for g in &groups {
            let report = cone_scaling_check(g, 7, 50);
            assert!(report.holds, "{} deviated: {report:?}", g.name());
        }
    }

    #[test]
    fn descriptor_json_round_trip() {
        let g = OrthSubgroup::Product {
            factors: vec![
                OrthSubgroup::Trivial { k: 2 },
                OrthSubgroup::circle_block(2, (0, 1)).unwrap(),
            ],
        };
        let text = serde_json::to_string(&g).unwrap();
        let back: OrthSubgroup = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.k(), 4);
        assert_eq!(back.name(), g.name());
    }
}
