//! Holonomic spaces: a normed vector space together with a norm-preserving
//! group and a group-norm on it, carrying the holonomic metric
//! `d_L(u,v) = inf_a sqrt(L(a)² + |au − v|²)`.
//!
//! Groups come in exactly two representations — finite element lists and
//! one-parameter rotation families on a coordinate block — because those
//! cover every fiber this laboratory builds. Circle-family norms evaluate
//! on the absolute rotation angle `δ ∈ [0, π]` (the angle of the matrix,
//! not an oriented winding), which is what makes the inversion axiom
//! `L(a) = L(a⁻¹)` hold by construction.
//!
//! The collapsing machinery lives here too: scaled norm sequences, their
//! limit semi-metrics, wane-set extraction (elements whose norms sink below
//! a threshold somewhere along the sequence), and classification of the
//! group the wane set generates.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metric::SemiMetricSample;
use crate::quotient::OrthSubgroup;
use crate::{minimize_1d, par, Error, Radius, Result};

use std::f64::consts::PI;

/// Matching tolerance when group elements are looked up by matrix value.
pub const MATCH_TOL: f64 = 1e-7;

/// Grid resolution for axiom checks on circle families.
const CIRCLE_CHECK_GRID: usize = 256;

/// Grid resolution for wane-set extraction from circle families.
const WANE_GRID: usize = 1024;

/// One represented group element: an orthogonal matrix and its norm value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupElementSample {
    #[serde(with = "crate::quotient::mat_json")]
    pub matrix: DMatrix<f64>,
    pub norm_value: f64,
}

/// Norm models for one-parameter rotation families, evaluated on the
/// absolute angle `δ ∈ [0, π]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CircleNorm {
    /// `L(δ) = radius · sqrt(δ(4π − δ))` — the loop-length norm of a round
    /// sphere's holonomy circle.
    SphereLength { radius: f64 },
    /// `L(δ) = scale · (2 sin(δ/2))^power` with `0 < power ≤ 1` — concave
    /// powers of the chord gap, all valid group-norms.
    PowerChord { scale: f64, power: f64 },
    /// Piecewise-linear interpolation through `(deltas, values)` knots on
    /// `[0, π]`; valid whenever the knots are concave, increasing, and
    /// start at `(0, 0)`.
    Table { deltas: Vec<f64>, values: Vec<f64> },
}

impl CircleNorm {
    pub fn validate(&self) -> Result<()> {
        match self {
            CircleNorm::SphereLength { radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::malformed(format!(
                        "sphere-length norm needs a positive radius, got {radius}"
                    )));
                }
                Ok(())
            }
            CircleNorm::PowerChord { scale, power } => {
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::malformed(format!(
                        "power-chord norm needs a positive scale, got {scale}"
                    )));
                }
                if !(power.is_finite() && *power > 0.0 && *power <= 1.0) {
                    return Err(Error::malformed(format!(
                        "power-chord exponent must lie in (0, 1], got {power}"
                    )));
                }
                Ok(())
            }
            CircleNorm::Table { deltas, values } => {
                if deltas.len() != values.len() || deltas.len() < 2 {
                    return Err(Error::malformed(
                        "norm table needs matching delta/value lists with at least two knots",
                    ));
                }
                if deltas[0].abs() > 1e-12 || values[0].abs() > 1e-12 {
                    return Err(Error::malformed("norm table must start at (0, 0)"));
                }
                if (deltas[deltas.len() - 1] - PI).abs() > 1e-9 {
                    return Err(Error::malformed("norm table must end at delta = π"));
                }
                for pair in deltas.windows(2) {
                    if !(pair[1] > pair[0]) {
                        return Err(Error::malformed("norm table deltas must increase"));
                    }
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::malformed("norm table values must be nonnegative"));
                }
                if values.iter().skip(1).any(|v| *v <= 0.0) {
                    return Err(Error::malformed(
                        "norm table must be positive away from the identity",
                    ));
                }
                Ok(())
            }
        }
    }

    /// Value on the absolute angle `δ` (callers fold the oriented angle).
    pub fn eval(&self, delta: f64) -> f64 {
        let delta = delta.clamp(0.0, PI);
        match self {
            CircleNorm::SphereLength { radius } => {
                radius * (delta * (4.0 * PI - delta)).max(0.0).sqrt()
            }
            CircleNorm::PowerChord { scale, power } => {
                scale * (2.0 * (delta / 2.0).sin()).powf(*power)
            }
            CircleNorm::Table { deltas, values } => {
                match deltas.binary_search_by(|d| d.partial_cmp(&delta).unwrap()) {
                    Ok(i) => values[i],
                    Err(i) => {
                        if i == 0 {
                            values[0]
                        } else if i == deltas.len() {
                            values[values.len() - 1]
                        } else {
                            let t = (delta - deltas[i - 1]) / (deltas[i] - deltas[i - 1]);
                            values[i - 1] + t * (values[i] - values[i - 1])
                        }
                    }
                }
            }
        }
    }

    /// The norm multiplied by a positive factor (stays in the catalog).
    pub fn scaled(&self, factor: f64) -> CircleNorm {
        match self {
            CircleNorm::SphereLength { radius } => CircleNorm::SphereLength {
                radius: radius * factor,
            },
            CircleNorm::PowerChord { scale, power } => CircleNorm::PowerChord {
                scale: scale * factor,
                power: *power,
            },
            CircleNorm::Table { deltas, values } => CircleNorm::Table {
                deltas: deltas.clone(),
                values: values.iter().map(|v| v * factor).collect(),
            },
        }
    }
}

/// The represented group of a holonomic space.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GroupModel {
    /// Finite element list containing the identity and closed under
    /// inverses. Products need not land back in the list (subgroup samples
    /// are legitimate); unmatched products are only reported, never guessed.
    Finite { elements: Vec<GroupElementSample> },
    /// One-parameter rotation family acting on a coordinate block.
    Circle { block: (usize, usize), norm: CircleNorm },
}

/// A holonomic space: `ℝᵏ` with the standard inner product, a represented
/// norm-preserving group, and its group-norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolonomicSpace {
    pub k: usize,
    pub group: GroupModel,
}

/// Fold an oriented angle to the absolute angle `δ ∈ [0, π]`.
pub fn fold_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    t.min(2.0 * PI - t)
}

/// The rotation by `theta` on coordinates `block` of `ℝᵏ`, identity
/// elsewhere.
pub fn embed_rotation(k: usize, block: (usize, usize), theta: f64) -> DMatrix<f64> {
    let mut m = DMatrix::identity(k, k);
    let (c, s) = (theta.cos(), theta.sin());
    m[(block.0, block.0)] = c;
    m[(block.0, block.1)] = -s;
    m[(block.1, block.0)] = s;
    m[(block.1, block.1)] = c;
    m
}

fn frobenius_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

/// Operator norm of `a − id` (largest singular value).
fn op_gap_from_identity(a: &DMatrix<f64>) -> f64 {
    let diff = a - DMatrix::identity(a.nrows(), a.ncols());
    diff.singular_values().max()
}

impl HolonomicSpace {
    pub fn trivial(k: usize) -> HolonomicSpace {
        HolonomicSpace {
            k,
            group: GroupModel::Finite {
                elements: vec![GroupElementSample {
                    matrix: DMatrix::identity(k, k),
                    norm_value: 0.0,
                }],
            },
        }
    }

    /// `{±id}` with `L(−id) = c`.
    pub fn plus_minus(k: usize, c: f64) -> HolonomicSpace {
        HolonomicSpace {
            k,
            group: GroupModel::Finite {
                elements: vec![
                    GroupElementSample {
                        matrix: DMatrix::identity(k, k),
                        norm_value: 0.0,
                    },
                    GroupElementSample {
                        matrix: -DMatrix::identity(k, k),
                        norm_value: c,
                    },
                ],
            },
        }
    }

    /// The fiber of a round sphere of the given radius: the full rotation
    /// circle on `ℝ²` with the loop-length norm.
    pub fn sphere_fiber(radius: f64) -> HolonomicSpace {
        HolonomicSpace {
            k: 2,
            group: GroupModel::Circle {
                block: (0, 1),
                norm: CircleNorm::SphereLength { radius },
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::malformed("holonomic spaces need positive dimension"));
        }
        match &self.group {
            GroupModel::Finite { elements } => {
                if elements.is_empty() {
                    return Err(Error::malformed("finite group list cannot be empty"));
                }
                let id = DMatrix::identity(self.k, self.k);
                for (idx, e) in elements.iter().enumerate() {
                    if e.matrix.nrows() != self.k || e.matrix.ncols() != self.k {
                        return Err(Error::malformed(format!(
                            "element {idx} is {}×{}, expected {}×{}",
                            e.matrix.nrows(),
                            e.matrix.ncols(),
                            self.k,
                            self.k
                        )));
                    }
                    let ortho = frobenius_gap(&(&e.matrix * e.matrix.transpose()), &id);
                    if ortho > 1e-9 {
                        return Err(Error::malformed(format!(
                            "element {idx} is not orthogonal (residual {ortho:.3e})"
                        )));
                    }
                    if !e.norm_value.is_finite() || e.norm_value < 0.0 {
                        return Err(Error::malformed(format!(
                            "element {idx} has invalid norm value {}",
                            e.norm_value
                        )));
                    }
                }
                if !elements
                    .iter()
                    .any(|e| frobenius_gap(&e.matrix, &id) <= MATCH_TOL)
                {
                    return Err(Error::malformed("finite group list must contain the identity"));
                }
                for (idx, e) in elements.iter().enumerate() {
                    let inv = e.matrix.transpose();
                    if !elements
                        .iter()
                        .any(|f| frobenius_gap(&f.matrix, &inv) <= MATCH_TOL)
                    {
                        return Err(Error::malformed(format!(
                            "element {idx} has no inverse in the list"
                        )));
                    }
                }
                Ok(())
            }
            GroupModel::Circle { block, norm } => {
                if self.k < 2 {
                    return Err(Error::malformed("circle families need k ≥ 2"));
                }
                if block.0 >= self.k || block.1 >= self.k || block.0 == block.1 {
                    return Err(Error::malformed(format!(
                        "rotation block {block:?} does not fit in dimension {}",
                        self.k
                    )));
                }
                norm.validate()
            }
        }
    }

    /// Group-norm value of the rotation by `theta` (circle families only).
    pub fn circle_norm_at(&self, theta: f64) -> Option<f64> {
        match &self.group {
            GroupModel::Circle { norm, .. } => Some(norm.eval(fold_angle(theta))),
            GroupModel::Finite { .. } => None,
        }
    }

    /// The rotation by `theta` as a `k×k` matrix (circle families only).
    pub fn circle_element(&self, theta: f64) -> Option<DMatrix<f64>> {
        match &self.group {
            GroupModel::Circle { block, .. } => Some(embed_rotation(self.k, *block, theta)),
            GroupModel::Finite { .. } => None,
        }
    }
}

/// Axiom report for a group-norm; empty violation lists mean the sampled
/// axioms hold.
#[derive(Debug, Clone, Serialize)]
pub struct GroupNormReport {
    pub identity_ok: bool,
    pub positivity_violations: Vec<String>,
    pub inversion_violations: Vec<String>,
    pub subadditivity_violations: Vec<String>,
    /// Finite lists may be subgroup samples: products that leave the list
    /// cannot be axiom-checked and are only counted.
    pub unmatched_products: usize,
    pub pairs_checked: usize,
}

impl GroupNormReport {
    pub fn is_valid(&self) -> bool {
        self.identity_ok
            && self.positivity_violations.is_empty()
            && self.inversion_violations.is_empty()
            && self.subadditivity_violations.is_empty()
    }
}

/// Checks the group-norm axioms on all representable pairs: identity norm
/// zero, positivity away from the identity, inversion symmetry, and
/// subadditivity (finite lists exhaustively where products match, circle
/// families on a fixed angle grid).
pub fn check_group_norm(space: &HolonomicSpace, tol: f64) -> Result<GroupNormReport> {
    space.validate()?;
    let mut report = GroupNormReport {
        identity_ok: true,
        positivity_violations: Vec::new(),
        inversion_violations: Vec::new(),
        subadditivity_violations: Vec::new(),
        unmatched_products: 0,
        pairs_checked: 0,
    };
    match &space.group {
        GroupModel::Finite { elements } => {
            let id = DMatrix::identity(space.k, space.k);
            for (i, e) in elements.iter().enumerate() {
                let is_id = frobenius_gap(&e.matrix, &id) <= MATCH_TOL;
                if is_id && e.norm_value > tol {
                    report.identity_ok = false;
                }
                if !is_id && e.norm_value <= tol {
                    report
                        .positivity_violations
                        .push(format!("element {i}: L = {} at a non-identity", e.norm_value));
                }
                let inv = e.matrix.transpose();
                if let Some(f) = elements
                    .iter()
                    .find(|f| frobenius_gap(&f.matrix, &inv) <= MATCH_TOL)
                {
                    if (f.norm_value - e.norm_value).abs() > tol {
                        report.inversion_violations.push(format!(
                            "element {i}: L(a) = {}, L(a⁻¹) = {}",
                            e.norm_value, f.norm_value
                        ));
                    }
                }
            }
            for (i, a) in elements.iter().enumerate() {
                for (j, b) in elements.iter().enumerate() {
                    let prod = &a.matrix * &b.matrix;
                    report.pairs_checked += 1;
                    match elements
                        .iter()
                        .find(|f| frobenius_gap(&f.matrix, &prod) <= MATCH_TOL)
                    {
                        Some(f) => {
                            if f.norm_value > a.norm_value + b.norm_value + tol {
                                report.subadditivity_violations.push(format!(
                                    "elements ({i}, {j}): L(ab) = {} > {} + {}",
                                    f.norm_value, a.norm_value, b.norm_value
                                ));
                            }
                        }
                        None => report.unmatched_products += 1,
                    }
                }
            }
        }
        GroupModel::Circle { norm, .. } => {
            let n = CIRCLE_CHECK_GRID;
            let thetas: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
            if norm.eval(0.0) > tol {
                report.identity_ok = false;
            }
            for &t in thetas.iter().skip(1) {
                let l = norm.eval(fold_angle(t));
                if l <= tol && fold_angle(t) > 1e-9 {
                    report
                        .positivity_violations
                        .push(format!("theta {t:.6}: L = {l}"));
                }
                let l_inv = norm.eval(fold_angle(-t));
                if (l - l_inv).abs() > tol {
                    report
                        .inversion_violations
                        .push(format!("theta {t:.6}: L = {l}, L(inverse) = {l_inv}"));
                }
            }
            for &a in &thetas {
                for &b in &thetas {
                    report.pairs_checked += 1;
                    let sum = norm.eval(fold_angle(a + b));
                    let parts = norm.eval(fold_angle(a)) + norm.eval(fold_angle(b));
                    if sum > parts + tol {
                        report.subadditivity_violations.push(format!(
                            "thetas ({a:.6}, {b:.6}): L(ab) = {sum} > {parts}"
                        ));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// A holonomic-distance value with the minimizing element.
#[derive(Debug, Clone)]
pub struct HolonomicDistance {
    pub value: f64,
    pub argmin: DMatrix<f64>,
    pub argmin_norm: f64,
}

/// `d_L(u, v) = inf_a sqrt(L(a)² + |au − v|²)`, with the infimum exact over
/// finite lists and a grid-seeded 1-D refinement over circle families.
/// Ties break toward the element with smaller norm.
pub fn holonomic_distance(
    space: &HolonomicSpace,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<HolonomicDistance> {
    holonomic_distance_scaled(space, 1.0, u, v)
}

/// [`holonomic_distance`] with the group-norm multiplied by `factor` — the
/// evaluation path for norm sequences `L_i = factor_i · L`.
pub fn holonomic_distance_scaled(
    space: &HolonomicSpace,
    factor: f64,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<HolonomicDistance> {
    space.validate()?;
    if u.len() != space.k || v.len() != space.k {
        return Err(Error::malformed(format!(
            "vectors have lengths {} and {}, space has dimension {}",
            u.len(),
            v.len(),
            space.k
        )));
    }
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::domain(format!("norm factor must be positive, got {factor}")));
    }
    match &space.group {
        GroupModel::Finite { elements } => {
            let mut best: Option<(f64, f64, usize)> = None;
            for (i, e) in elements.iter().enumerate() {
                let l = factor * e.norm_value;
                let gap = (&e.matrix * u - v).norm_squared();
                let value = (l * l + gap).sqrt();
                let better = match best {
                    None => true,
                    Some((bv, bl, _)) => {
                        value < bv - 1e-15 || (value <= bv + 1e-15 && l < bl)
                    }
                };
                if better {
                    best = Some((value, l, i));
                }
            }
            let (value, l, i) = best.unwrap();
            Ok(HolonomicDistance {
                value,
                argmin: elements[i].matrix.clone(),
                argmin_norm: l,
            })
        }
        GroupModel::Circle { block, norm } => {
            let (b0, b1) = *block;
            let mut off = 0.0;
            for i in 0..space.k {
                if i != b0 && i != b1 {
                    let d = u[i] - v[i];
                    off += d * d;
                }
            }
            let ub = Vector2::new(u[b0], u[b1]);
            let vb = Vector2::new(v[b0], v[b1]);
            let nn = ub.norm_squared() + vb.norm_squared();
            let dot = ub.dot(&vb);
            let cross = ub.x * vb.y - ub.y * vb.x;
            let objective = |theta: f64| {
                let l = factor * norm.eval(fold_angle(theta));
                let gap = (nn - 2.0 * (theta.cos() * dot + theta.sin() * cross)).max(0.0);
                (l * l + off + gap).sqrt()
            };
            let (best_theta, best) = minimize_1d(objective, 0.0, 2.0 * PI, 1e-10);
            // The identity endpoint caps the distance at the Euclidean gap.
            let at_zero = objective(0.0);
            let (theta, value) = if at_zero <= best {
                (0.0, at_zero)
            } else {
                (best_theta, best)
            };
            Ok(HolonomicDistance {
                value,
                argmin: embed_rotation(space.k, *block, theta),
                argmin_norm: factor * norm.eval(fold_angle(theta)),
            })
        }
    }
}

/// Outcome of sampling the defining inequality of the holonomic property.
#[derive(Debug, Clone)]
pub struct PropertyCheck {
    pub holds: bool,
    /// `(v, w, element description, excess)` for the first violation found.
    pub counterexample: Option<(DVector<f64>, DVector<f64>, String, f64)>,
    pub samples_tested: usize,
}

/// Tests `|v − w|² − |av − w|² ≤ L(a)²` for sampled `v, w ∈ B_R(u)` against
/// all represented elements, returning the first counterexample if any.
pub fn check_holonomic_property(
    space: &HolonomicSpace,
    u: &DVector<f64>,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<PropertyCheck> {
    space.validate()?;
    if u.len() != space.k {
        return Err(Error::malformed(format!(
            "center has length {}, space has dimension {}",
            u.len(),
            space.k
        )));
    }
    if !(r > 0.0) {
        return Err(Error::domain(format!("ball radius must be positive, got {r}")));
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let ball_point = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut g = DVector::zeros(space.k);
        for i in 0..space.k {
            // Box-Muller from two uniforms keeps the dependency surface small.
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            g[i] = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
        }
        let norm = g.norm().max(1e-12);
        let radius: f64 = rng.gen_range(0.0f64..1.0).powf(1.0 / space.k as f64) * r;
        u + g * (radius / norm)
    };

    let mut probes: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(samples + 2);
    // Two deterministic probes at antipodal offsets catch the classic
    // violations before any randomness enters.
    let mut e0 = DVector::zeros(space.k);
    e0[0] = 0.999 * r;
    probes.push((u + &e0, u - &e0));
    probes.push((u - &e0, u + &e0));
    for _ in 0..samples {
        probes.push((ball_point(&mut rng), ball_point(&mut rng)));
    }

    let elements: Vec<(DMatrix<f64>, f64, String)> = match &space.group {
        GroupModel::Finite { elements } => elements
            .iter()
            .enumerate()
            .map(|(i, e)| (e.matrix.clone(), e.norm_value, format!("element {i}")))
            .collect(),
        GroupModel::Circle { block, norm } => (0..CIRCLE_CHECK_GRID)
            .map(|i| {
                let theta = 2.0 * PI * i as f64 / CIRCLE_CHECK_GRID as f64;
                (
                    embed_rotation(space.k, *block, theta),
                    norm.eval(fold_angle(theta)),
                    format!("rotation by {theta:.6}"),
                )
            })
            .collect(),
    };

    let mut tested = 0;
    for (v, w) in &probes {
        for (a, l, desc) in &elements {
            tested += 1;
            let lhs = (v - w).norm_squared() - (a * v - w).norm_squared();
            let excess = lhs - l * l;
            if excess > 1e-9 {
                return Ok(PropertyCheck {
                    holds: false,
                    counterexample: Some((v.clone(), w.clone(), desc.clone(), excess)),
                    samples_tested: tested,
                });
            }
        }
    }
    Ok(PropertyCheck {
        holds: true,
        counterexample: None,
        samples_tested: tested,
    })
}

/// `inf_a L(a) / |a − id|_op` over nontrivial elements: infinite exactly for
/// the trivial group, else the convexity radius of the holonomic metric.
pub fn convexity_radius(space: &HolonomicSpace) -> Result<Radius> {
    space.validate()?;
    match &space.group {
        GroupModel::Finite { elements } => {
            let mut best: Option<f64> = None;
            for e in elements {
                let gap = op_gap_from_identity(&e.matrix);
                if gap <= 1e-12 {
                    continue;
                }
                let ratio = e.norm_value / gap;
                best = Some(best.map_or(ratio, |b: f64| b.min(ratio)));
            }
            Ok(best.map_or(Radius::Infinite, Radius::Finite))
        }
        GroupModel::Circle { norm, .. } => {
            // For the rotation by δ the operator gap is exactly 2 sin(δ/2).
            let ratio = |delta: f64| norm.eval(delta) / (2.0 * (delta / 2.0).sin());
            let (_, best) = minimize_1d(ratio, 1e-9, PI, 1e-12);
            Ok(Radius::Finite(best))
        }
    }
}

/// The same quantity as [`convexity_radius`], reported in its role as an
/// upper bound for the holonomy radius at the origin.
pub fn holonomy_radius_zero_upper(space: &HolonomicSpace) -> Result<Radius> {
    convexity_radius(space)
}

/// How a sequence of group-norms scales with the index `i ≥ 1`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScaling {
    /// `L_i = L` for all `i`.
    Constant,
    /// `L_i = L / i` — the collapsing regime.
    Reciprocal,
}

impl NormScaling {
    pub fn factor(&self, i: usize) -> f64 {
        match self {
            NormScaling::Constant => 1.0,
            NormScaling::Reciprocal => 1.0 / i as f64,
        }
    }
}

/// A sequence of holonomic spaces sharing one group with scaled norms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HolonomicSequence {
    pub space: HolonomicSpace,
    pub scaling: NormScaling,
}

impl HolonomicSequence {
    /// The `i`-th space of the sequence, with its norm scaled in-catalog.
    pub fn space_at(&self, i: usize) -> HolonomicSpace {
        let factor = self.scaling.factor(i);
        let group = match &self.space.group {
            GroupModel::Finite { elements } => GroupModel::Finite {
                elements: elements
                    .iter()
                    .map(|e| GroupElementSample {
                        matrix: e.matrix.clone(),
                        norm_value: e.norm_value * factor,
                    })
                    .collect(),
            },
            GroupModel::Circle { block, norm } => GroupModel::Circle {
                block: *block,
                norm: norm.scaled(factor),
            },
        };
        HolonomicSpace {
            k: self.space.k,
            group,
        }
    }

    /// Largest represented norm value at index `i` (`sup_a L_i(a)`).
    pub fn sup_norm_at(&self, i: usize) -> f64 {
        let factor = self.scaling.factor(i);
        let base = match &self.space.group {
            GroupModel::Finite { elements } => elements
                .iter()
                .map(|e| e.norm_value)
                .fold(0.0, f64::max),
            GroupModel::Circle { norm, .. } => (0..=CIRCLE_CHECK_GRID)
                .map(|j| norm.eval(PI * j as f64 / CIRCLE_CHECK_GRID as f64))
                .fold(0.0, f64::max),
        };
        base * factor
    }
}

/// Limit data for a sequence of holonomic metrics on a fixed point sample.
#[derive(Debug, Clone)]
pub struct LimitResult {
    /// `d_{L_{i_max}}` on the sample; degenerate pairs allowed.
    pub sample: SemiMetricSample,
    /// `(i, sup |d_{L_i} − d_{L_{i−1}}|)` for `i = 2..=i_max`.
    pub sup_diffs: Vec<(usize, f64)>,
    /// Whether the last successive difference is within `tol`; false is a
    /// soft failure — the table still describes what happened.
    pub cauchy_within_tol: bool,
}

/// Evaluates `d_{L_i}` on all pairs for `i = 1..=i_max` and reports the last
/// matrix together with the successive sup-differences.
pub fn limit_semimetric(
    seq: &HolonomicSequence,
    points: &[DVector<f64>],
    i_max: usize,
    tol: f64,
) -> Result<LimitResult> {
    seq.space.validate()?;
    if points.is_empty() {
        return Err(Error::domain("limit evaluation needs sample points"));
    }
    if i_max == 0 {
        return Err(Error::domain("the sequence index starts at 1"));
    }
    if let Some(bad) = points.iter().find(|p| p.len() != seq.space.k) {
        return Err(Error::malformed(format!(
            "sample point of length {} in dimension {}",
            bad.len(),
            seq.space.k
        )));
    }
    let n = points.len();
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut sup_diffs = Vec::new();
    let mut last = Vec::new();
    for i in 1..=i_max {
        let factor = seq.scaling.factor(i);
        let dist = par::pairwise_symmetric(n, |a, b| {
            holonomic_distance_scaled(&seq.space, factor, &points[a], &points[b])
                .map(|d| d.value)
                .unwrap_or(f64::NAN)
        });
        if dist.iter().any(|row| row.iter().any(|x| x.is_nan())) {
            return Err(Error::domain("holonomic distance failed on a sample pair"));
        }
        if let Some(p) = &prev {
            let mut sup: f64 = 0.0;
            for a in 0..n {
                for b in 0..n {
                    sup = sup.max((dist[a][b] - p[a][b]).abs());
                }
            }
            sup_diffs.push((i, sup));
        }
        prev = Some(dist.clone());
        last = dist;
    }
    let cauchy_within_tol = sup_diffs.last().map_or(true, |(_, d)| *d <= tol);
    let labels = points
        .iter()
        .map(|p| {
            let coords: Vec<String> = p.iter().map(|x| format!("{x:.6}")).collect();
            format!("u({})", coords.join(","))
        })
        .collect();
    let sample = SemiMetricSample::new(labels, last, None)?;
    Ok(LimitResult {
        sample,
        sup_diffs,
        cauchy_within_tol,
    })
}

/// An element certified to wane: its matrix, the index where its scaled
/// norm dips below the threshold, and that norm value.
#[derive(Debug, Clone)]
pub struct WaneCertificate {
    pub element: DMatrix<f64>,
    pub index: usize,
    pub norm_value: f64,
}

/// The estimated wane set: elements whose norms sink below a threshold
/// somewhere along the sequence. An approximation from above — shrinking
/// the threshold shrinks the estimate toward the true wane set.
#[derive(Debug, Clone)]
pub struct WaneEstimate {
    pub k: usize,
    pub certificates: Vec<WaneCertificate>,
    pub threshold: f64,
    pub i_max: usize,
}

/// Collects represented elements `a` with `min_{i ≤ i_max} L_i(a) ≤
/// threshold` (circle families are sampled on a fixed angle grid).
pub fn wane_set_estimate(
    seq: &HolonomicSequence,
    threshold: f64,
    i_max: usize,
) -> Result<WaneEstimate> {
    seq.space.validate()?;
    if !(threshold > 0.0) {
        return Err(Error::domain(format!(
            "wane threshold must be positive, got {threshold}"
        )));
    }
    if i_max == 0 {
        return Err(Error::domain("the sequence index starts at 1"));
    }
    let min_scale = (1..=i_max)
        .map(|i| seq.scaling.factor(i))
        .fold(f64::INFINITY, f64::min);
    let argmin_scale = (1..=i_max)
        .min_by(|a, b| {
            seq.scaling
                .factor(*a)
                .partial_cmp(&seq.scaling.factor(*b))
                .unwrap()
        })
        .unwrap();
    let mut certificates = Vec::new();
    match &seq.space.group {
        GroupModel::Finite { elements } => {
            for e in elements {
                let l = e.norm_value * min_scale;
                if l <= threshold {
                    certificates.push(WaneCertificate {
                        element: e.matrix.clone(),
                        index: argmin_scale,
                        norm_value: l,
                    });
                }
            }
        }
        GroupModel::Circle { block, norm } => {
            for j in 0..WANE_GRID {
                let theta = 2.0 * PI * j as f64 / WANE_GRID as f64;
                let l = norm.eval(fold_angle(theta)) * min_scale;
                if l <= threshold {
                    certificates.push(WaneCertificate {
                        element: embed_rotation(seq.space.k, *block, theta),
                        index: argmin_scale,
                        norm_value: l,
                    });
                }
            }
        }
    }
    Ok(WaneEstimate {
        k: seq.space.k,
        certificates,
        threshold,
        i_max,
    })
}

/// Result of closing a wane set and matching it against the group catalog.
#[derive(Debug, Clone)]
pub struct WaneClosure {
    pub group: OrthSubgroup,
    /// Largest distance from an input element to the returned group
    /// (zero when the classification genuinely contains the inputs).
    pub residual: f64,
    /// Set when no catalog member fit; the returned group is then the raw
    /// deduplicated element list, usable but unclassified.
    pub unclassified: bool,
    pub deduped_elements: usize,
}

const CLOSURE_CAP: usize = 512;

fn dedupe_by_gap(elements: &[DMatrix<f64>], tol: f64) -> Vec<DMatrix<f64>> {
    let mut reps: Vec<DMatrix<f64>> = Vec::new();
    for e in elements {
        if !reps.iter().any(|r| frobenius_gap(r, e) <= tol) {
            reps.push(e.clone());
        }
    }
    reps
}

/// Attempts to close a small element list under products and inverses;
/// `None` when the closure outgrows the cap (an infinite group in sample
/// clothing).
fn try_finite_closure(reps: &[DMatrix<f64>], tol: f64) -> Option<Vec<DMatrix<f64>>> {
    let mut closed: Vec<DMatrix<f64>> = reps.to_vec();
    let mut frontier: Vec<DMatrix<f64>> = reps.to_vec();
    while !frontier.is_empty() {
        let mut fresh: Vec<DMatrix<f64>> = Vec::new();
        for f in &frontier {
            let mut candidates: Vec<DMatrix<f64>> = Vec::with_capacity(2 * closed.len() + 1);
            candidates.push(f.transpose());
            for c in &closed {
                candidates.push(f * c);
                candidates.push(c * f);
            }
            for cand in candidates {
                let known = closed.iter().chain(fresh.iter());
                if !known
                    .into_iter()
                    .any(|r| frobenius_gap(r, &cand) <= tol)
                {
                    fresh.push(cand);
                    if closed.len() + fresh.len() > CLOSURE_CAP {
                        return None;
                    }
                }
            }
        }
        closed.extend(fresh.iter().cloned());
        frontier = fresh;
    }
    Some(closed)
}

/// Block structure of a matrix list: active coordinates coupled by any
/// element, grouped into connected components.
fn active_blocks(reps: &[DMatrix<f64>], k: usize, tol: f64) -> Vec<Vec<usize>> {
    let mut coupled = vec![vec![false; k]; k];
    let mut active = vec![false; k];
    for m in reps {
        for i in 0..k {
            if (m[(i, i)] - 1.0).abs() > tol {
                active[i] = true;
            }
            for j in 0..k {
                if i != j && m[(i, j)].abs() > tol {
                    coupled[i][j] = true;
                    coupled[j][i] = true;
                    active[i] = true;
                    active[j] = true;
                }
            }
        }
    }
    let mut seen = vec![false; k];
    let mut blocks = Vec::new();
    for start in 0..k {
        if !active[start] || seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..k {
                if coupled[i][j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        blocks.push(comp);
    }
    blocks
}

fn block_rotation_angle(m: &DMatrix<f64>, b: (usize, usize), tol: f64) -> Option<f64> {
    let sub = nalgebra::Matrix2::new(m[(b.0, b.0)], m[(b.0, b.1)], m[(b.1, b.0)], m[(b.1, b.1)]);
    let det = sub.determinant();
    if (det - 1.0).abs() > 10.0 * tol.max(1e-9) {
        return None;
    }
    let angle = sub[(1, 0)].atan2(sub[(0, 0)]);
    let model = crate::bundle::sphere::rot2(angle);
    if (sub - model).norm() > tol.max(1e-9) {
        return None;
    }
    Some(angle.rem_euclid(2.0 * PI))
}

/// Largest circular gap of a sorted-or-not angle list (radians in [0, 2π)).
fn max_circular_gap(angles: &[f64]) -> f64 {
    if angles.is_empty() {
        return 2.0 * PI;
    }
    let mut sorted: Vec<f64> = angles.iter().map(|a| a.rem_euclid(2.0 * PI)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut gap: f64 = 0.0;
    for w in sorted.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap.max(2.0 * PI - sorted[sorted.len() - 1] + sorted[0])
}

fn distance_to_group(m: &DMatrix<f64>, group: &OrthSubgroup, tol: f64) -> f64 {
    match group {
        OrthSubgroup::Trivial { k } => frobenius_gap(m, &DMatrix::identity(*k, *k)),
        OrthSubgroup::FiniteList { elements, .. } => elements
            .iter()
            .map(|e| frobenius_gap(m, e))
            .fold(f64::INFINITY, f64::min),
        OrthSubgroup::CircleSo2 { k, block } => {
            match block_rotation_angle(m, *block, 1e6) {
                // Huge tolerance: we want the nearest rotation, then the gap.
                Some(angle) => frobenius_gap(m, &embed_rotation(*k, *block, angle)),
                None => frobenius_gap(m, &DMatrix::identity(*k, *k)),
            }
        }
        OrthSubgroup::FullSo { k } => {
            if *k == 2 {
                match block_rotation_angle(m, (0, 1), 1e6) {
                    Some(angle) => frobenius_gap(m, &embed_rotation(2, (0, 1), angle)),
                    None => frobenius_gap(m, &DMatrix::identity(2, 2)),
                }
            } else {
                // Distance to SO(k): zero for special-orthogonal matrices.
                let ortho = frobenius_gap(&(m * m.transpose()), &DMatrix::identity(*k, *k));
                if m.determinant() > 0.0 {
                    ortho
                } else {
                    f64::INFINITY
                }
            }
        }
        OrthSubgroup::Product { factors } => {
            let mut offset = 0;
            let mut total = 0.0f64;
            for f in factors {
                let kf = f.k();
                let sub = m.view((offset, offset), (kf, kf)).into_owned();
                let d = distance_to_group(&sub, f, tol);
                total += d * d;
                offset += kf;
            }
            // Off-block mass counts fully.
            let mut off = 0.0;
            let mut start = 0;
            let sizes: Vec<usize> = factors.iter().map(|f| f.k()).collect();
            let bounds: Vec<(usize, usize)> = sizes
                .iter()
                .map(|s| {
                    let b = (start, start + s);
                    start += s;
                    b
                })
                .collect();
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    let same = bounds.iter().any(|(lo, hi)| {
                        i >= *lo && i < *hi && j >= *lo && j < *hi
                    });
                    if !same {
                        off += m[(i, j)] * m[(i, j)];
                    }
                }
            }
            (total + off).sqrt()
        }
    }
}

/// Closes a wane estimate under products/inverses (up to a cap) and matches
/// the result against the catalog: trivial, finite lists, circle blocks,
/// and products of those. No match returns the raw deduplicated list with
/// the `unclassified` flag set.
pub fn wane_group_closure(est: &WaneEstimate, tol: f64) -> Result<WaneClosure> {
    if est.certificates.is_empty() {
        return Err(Error::domain(
            "wane estimate is empty; it must at least contain the identity",
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::domain(format!("cluster tolerance must be positive, got {tol}")));
    }
    let k = est.k;
    let id = DMatrix::identity(k, k);
    let mut elements: Vec<DMatrix<f64>> =
        est.certificates.iter().map(|c| c.element.clone()).collect();
    if !elements.iter().any(|e| frobenius_gap(e, &id) <= tol) {
        elements.push(id.clone());
    }
    let reps = dedupe_by_gap(&elements, tol);
    let deduped = reps.len();

    let finish = |group: OrthSubgroup, unclassified: bool| -> Result<WaneClosure> {
        let residual = reps
            .iter()
            .map(|m| distance_to_group(m, &group, tol))
            .fold(0.0f64, f64::max);
        Ok(WaneClosure {
            group,
            residual,
            unclassified,
            deduped_elements: deduped,
        })
    };

    // Small sets: honest closure, then a finite classification.
    if reps.len() <= 64 {
        if let Some(closed) = try_finite_closure(&reps, tol) {
            if closed.len() == 1 {
                return finish(OrthSubgroup::Trivial { k }, false);
            }
            if closed.len() <= 64 {
                match OrthSubgroup::finite_list(k, closed.clone()) {
                    Ok(group) => return finish(group, false),
                    Err(_) => {
                        // Too noisy for the validated constructor; report raw.
                        return finish(
                            OrthSubgroup::FiniteList {
                                k,
                                elements: closed,
                            },
                            true,
                        );
                    }
                }
            }
        }
    }

    // Large or unbounded sets: structural classification by blocks.
    let blocks = active_blocks(&reps, k, tol.max(1e-9));
    if blocks.is_empty() {
        return finish(OrthSubgroup::Trivial { k }, false);
    }
    if blocks.iter().any(|b| b.len() != 2) {
        return finish(
            OrthSubgroup::FiniteList {
                k,
                elements: reps.clone(),
            },
            true,
        );
    }
    // Per-block rotation angles of every element.
    let pairs: Vec<(usize, usize)> = blocks.iter().map(|b| (b[0], b[1])).collect();
    let mut block_angles: Vec<Vec<f64>> = vec![Vec::new(); pairs.len()];
    for m in &reps {
        for (bi, b) in pairs.iter().enumerate() {
            match block_rotation_angle(m, *b, 10.0 * tol) {
                Some(angle) => block_angles[bi].push(angle),
                None => {
                    return finish(
                        OrthSubgroup::FiniteList {
                            k,
                            elements: reps.clone(),
                        },
                        true,
                    );
                }
            }
        }
    }
    let dense_gap = 2.0 * PI / 32.0;
    if pairs.len() == 1 {
        let gap = max_circular_gap(&block_angles[0]);
        if gap > dense_gap {
            return finish(
                OrthSubgroup::FiniteList {
                    k,
                    elements: reps.clone(),
                },
                true,
            );
        }
        let b = pairs[0];
        let group = if k == 2 {
            OrthSubgroup::FullSo { k: 2 }
        } else {
            OrthSubgroup::CircleSo2 { k, block: b }
        };
        return finish(group, false);
    }

    // Several rotation blocks: they must be consecutive, each dense, and
    // the set must genuinely be a product (cross combinations present).
    let mut sorted_pairs = pairs.clone();
    sorted_pairs.sort_unstable();
    let consecutive = sorted_pairs.iter().all(|(a, b)| *b == *a + 1);
    if !consecutive {
        return finish(
            OrthSubgroup::FiniteList {
                k,
                elements: reps.clone(),
            },
            true,
        );
    }
    for angles in &block_angles {
        if max_circular_gap(angles) > dense_gap {
            return finish(
                OrthSubgroup::FiniteList {
                    k,
                    elements: reps.clone(),
                },
                true,
            );
        }
    }
    // Productness probe: sampled angle combinations must already be present.
    let probe = 6usize;
    for bi in 0..pairs.len() {
        for bj in (bi + 1)..pairs.len() {
            for s in 0..probe {
                for t in 0..probe {
                    let ai = block_angles[bi][s * block_angles[bi].len() / probe];
                    let aj = block_angles[bj][t * block_angles[bj].len() / probe];
                    let mut model = DMatrix::identity(k, k);
                    let ri = embed_rotation(k, pairs[bi], ai);
                    let rj = embed_rotation(k, pairs[bj], aj);
                    model = ri * rj * model;
                    let hit = reps
                        .iter()
                        .any(|r| frobenius_gap(r, &model) <= (2.0 * tol).max(1e-6));
                    if !hit {
                        return finish(
                            OrthSubgroup::FiniteList {
                                k,
                                elements: reps.clone(),
                            },
                            true,
                        );
                    }
                }
            }
        }
    }
    // Assemble the product: trivial fillers on inactive runs, circles on
    // the active blocks.
    let mut factors: Vec<OrthSubgroup> = Vec::new();
    let mut coord = 0usize;
    let active_starts: std::collections::BTreeMap<usize, (usize, usize)> =
        sorted_pairs.iter().map(|b| (b.0, *b)).collect();
    while coord < k {
        if let Some(b) = active_starts.get(&coord) {
            factors.push(OrthSubgroup::FullSo { k: 2 });
            coord = b.1 + 1;
        } else {
            let mut len = 0;
            while coord + len < k && !active_starts.contains_key(&(coord + len)) {
                len += 1;
            }
            factors.push(OrthSubgroup::Trivial { k: len });
            coord += len;
        }
    }
    finish(OrthSubgroup::Product { factors }, false)
}

/// Replaces each space `(H_i, L_i)` by its conjugate `(φ_i H_i φ_i⁻¹, L̃_i)`
/// with `L̃_i(a) = L_i(φ_i⁻¹ a φ_i)`, verifying that holonomic distances are
/// preserved under `u ↦ φ_i u` on sampled pairs.
pub fn normalize_representation(
    spaces: &[HolonomicSpace],
    conjugators: &[DMatrix<f64>],
) -> Result<Vec<HolonomicSpace>> {
    if spaces.len() != conjugators.len() {
        return Err(Error::malformed(format!(
            "{} spaces but {} conjugators",
            spaces.len(),
            conjugators.len()
        )));
    }
    let mut out = Vec::with_capacity(spaces.len());
    for (space, phi) in spaces.iter().zip(conjugators.iter()) {
        space.validate()?;
        if phi.nrows() != space.k || phi.ncols() != space.k {
            return Err(Error::domain(format!(
                "conjugator is {}×{}, space has dimension {}",
                phi.nrows(),
                phi.ncols(),
                space.k
            )));
        }
        let id = DMatrix::identity(space.k, space.k);
        if frobenius_gap(&(phi * phi.transpose()), &id) > 1e-9 {
            return Err(Error::domain("conjugator is not orthogonal"));
        }
        let conjugated = match &space.group {
            GroupModel::Finite { elements } => HolonomicSpace {
                k: space.k,
                group: GroupModel::Finite {
                    elements: elements
                        .iter()
                        .map(|e| GroupElementSample {
                            matrix: phi * &e.matrix * phi.transpose(),
                            norm_value: e.norm_value,
                        })
                        .collect(),
                },
            },
            GroupModel::Circle { block, norm } => {
                // The catalog represents circle families on coordinate
                // blocks only, so the conjugator must preserve the block
                // plane; it then acts as a rotation/reflection inside it and
                // the conjugated family is the same model (the norm is even
                // in the angle).
                let probe = embed_rotation(space.k, *block, 1.0);
                let conj = phi * &probe * phi.transpose();
                let same_family = block_rotation_angle(&conj, *block, 1e-9)
                    .map(|_| {
                        let back = match block_rotation_angle(&conj, *block, 1e-9) {
                            Some(a) => embed_rotation(space.k, *block, a),
                            None => unreachable!(),
                        };
                        frobenius_gap(&conj, &back) <= 1e-9
                    })
                    .unwrap_or(false);
                if !same_family {
                    return Err(Error::domain(
                        "conjugator moves the rotation block off the represented plane",
                    ));
                }
                HolonomicSpace {
                    k: space.k,
                    group: GroupModel::Circle {
                        block: *block,
                        norm: norm.clone(),
                    },
                }
            }
        };
        conjugated.validate()?;
        // Distance preservation on deterministic sample pairs.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x6e6f726d);
        for _ in 0..8 {
            let mut u = DVector::zeros(space.k);
            let mut v = DVector::zeros(space.k);
            for i in 0..space.k {
                u[i] = rng.gen_range(-1.0..1.0);
                v[i] = rng.gen_range(-1.0..1.0);
            }
            let before = holonomic_distance(space, &u, &v)?.value;
            let after = holonomic_distance(&conjugated, &(phi * &u), &(phi * &v))?.value;
            if (before - after).abs() > 1e-7 {
                return Err(Error::Tolerance(format!(
                    "conjugation changed a holonomic distance: {before} vs {after}"
                )));
            }
        }
        out.push(conjugated);
    }
    Ok(out)
}

/// Deterministic random holonomic spaces for property tests: trivial,
/// two-element, cyclic (≤ 12), and circle groups with valid random norms.
pub fn sample_space(rng: &mut impl Rng, k_max: usize) -> HolonomicSpace {
    let k_max = k_max.max(2);
    let k = rng.gen_range(2..=k_max);
    match rng.gen_range(0..4) {
        0 => HolonomicSpace::trivial(k),
        1 => HolonomicSpace::plus_minus(k, rng.gen_range(0.1..3.0)),
        2 => {
            let m = rng.gen_range(2..=12usize);
            let block = random_block(rng, k);
            let elements = cyclic_elements(rng, k, block, m);
            HolonomicSpace {
                k,
                group: GroupModel::Finite { elements },
            }
        }
        _ => {
            let block = random_block(rng, k);
            let norm = random_circle_norm(rng);
            HolonomicSpace {
                k,
                group: GroupModel::Circle { block, norm },
            }
        }
    }
}

fn random_block(rng: &mut impl Rng, k: usize) -> (usize, usize) {
    let a = rng.gen_range(0..k);
    let mut b = rng.gen_range(0..k - 1);
    if b >= a {
        b += 1;
    }
    (a.min(b), a.max(b))
}

/// The cyclic group of order `m` on a rotation block, with a shortest-path
/// norm over random symmetric generator weights (subadditive by
/// construction).
fn cyclic_elements(
    rng: &mut impl Rng,
    k: usize,
    block: (usize, usize),
    m: usize,
) -> Vec<GroupElementSample> {
    // Weight of the single generator step; the norm of the j-th power is the
    // cheapest word length: min(j, m − j) steps.
    let w = rng.gen_range(0.2..2.0);
    (0..m)
        .map(|j| {
            let theta = 2.0 * PI * j as f64 / m as f64;
            let steps = j.min(m - j) as f64;
            GroupElementSample {
                matrix: embed_rotation(k, block, theta),
                norm_value: w * steps,
            }
        })
        .collect()
}

fn random_circle_norm(rng: &mut impl Rng) -> CircleNorm {
    match rng.gen_range(0..3) {
        0 => CircleNorm::SphereLength {
            radius: rng.gen_range(0.2..2.0),
        },
        1 => CircleNorm::PowerChord {
            scale: rng.gen_range(0.2..2.0),
            power: rng.gen_range(0.3..1.0),
        },
        _ => {
            // Concave increasing piecewise-linear table through (0,0):
            // cumulative sums of decreasing positive slopes.
            let knots = rng.gen_range(3..7usize);
            let mut deltas = vec![0.0];
            for j in 1..knots {
                deltas.push(PI * j as f64 / (knots - 1) as f64);
            }
            let mut slope = rng.gen_range(1.0..3.0);
            let mut values = vec![0.0];
            for j in 1..knots {
                let step = deltas[j] - deltas[j - 1];
                values.push(values[j - 1] + slope * step);
                slope *= rng.gen_range(0.3..0.95);
            }
            CircleNorm::Table { deltas, values }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trivial_space_gives_euclidean_distance() {
        let space = HolonomicSpace::trivial(3);
        let d = holonomic_distance(&space, &dvector![1.0, 0.0, 0.0], &dvector![0.0, 2.0, 0.0])
            .unwrap();
        assert!((d.value - 5.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(d.argmin_norm, 0.0);
    }

    #[test]
    fn plus_minus_distance_is_min_of_two_routes() {
        let c = 1.3;
        let space = HolonomicSpace::plus_minus(2, c);
        let u = dvector![0.9, 0.0];
        let d = holonomic_distance(&space, &u, &(-u.clone())).unwrap();
        // Either pay the Euclidean gap 2|u| or the group element c.
        assert!((d.value - (2.0 * 0.9f64).min(c)).abs() < 1e-12);
        let u = dvector![0.4, 0.0];
        let d = holonomic_distance(&space, &u, &(-u.clone())).unwrap();
        assert!((d.value - 0.8).abs() < 1e-12);
    }

    #[test]
    fn sphere_norm_passes_group_norm_axioms() {
        let space = HolonomicSpace::sphere_fiber(1.0);
        let report = check_group_norm(&space, 1e-9).unwrap();
        assert!(report.is_valid(), "{report:?}");
        let space = HolonomicSpace {
            k: 3,
            group: GroupModel::Circle {
                block: (0, 2),
                norm: CircleNorm::PowerChord {
                    scale: 0.7,
                    power: 0.6,
                },
            },
        };
        let report = check_group_norm(&space, 1e-9).unwrap();
        assert!(report.is_valid(), "{report:?}");
    }

    #[test]
    fn convex_norm_table_fails_subadditivity() {
        // A convex increasing profile is not a group-norm: two quarter
        // turns at 0.1 each cannot reach a half turn at 1.0.
        let deltas = vec![0.0, PI / 2.0, PI];
        let values = vec![0.0, 0.1, 1.0];
        let norm = CircleNorm::Table { deltas, values };
        let space = HolonomicSpace {
            k: 2,
            group: GroupModel::Circle {
                block: (0, 1),
                norm,
            },
        };
        let report = check_group_norm(&space, 1e-9).unwrap();
        assert!(!report.subadditivity_violations.is_empty());
    }

    #[test]
    fn holonomic_distance_never_exceeds_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let space = sample_space(&mut rng, 4);
            for _ in 0..5 {
                let u = DVector::from_fn(space.k, |_, _| rng.gen_range(-2.0..2.0));
                let v = DVector::from_fn(space.k, |_, _| rng.gen_range(-2.0..2.0));
                let d = holonomic_distance(&space, &u, &v).unwrap();
                assert!(d.value <= (u - v).norm() + 1e-12);
            }
        }
    }

    #[test]
    fn random_spaces_have_valid_group_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..40 {
            let space = sample_space(&mut rng, 4);
            let report = check_group_norm(&space, 1e-9).unwrap();
            assert!(report.is_valid(), "{report:?} for {space:?}");
        }
    }

    #[test]
    fn convexity_radius_closed_forms() {
        assert_eq!(
            convexity_radius(&HolonomicSpace::trivial(3)).unwrap(),
            Radius::Infinite
        );
        let c = 0.8;
        let r = convexity_radius(&HolonomicSpace::plus_minus(4, c)).unwrap();
        match r {
            Radius::Finite(v) => assert!((v - c / 2.0).abs() < 1e-12),
            Radius::Infinite => panic!("expected finite"),
        }
    }

    #[test]
    fn sphere_convexity_radius_matches_dense_scan() {
        let space = HolonomicSpace::sphere_fiber(1.0);
        let got = match convexity_radius(&space).unwrap() {
            Radius::Finite(v) => v,
            Radius::Infinite => panic!("expected finite"),
        };
        let mut best = f64::INFINITY;
        let n = 2_000_000;
        for j in 1..=n {
            let delta = PI * j as f64 / n as f64;
            let value = (delta * (4.0 * PI - delta)).sqrt() / (2.0 * (delta / 2.0).sin());
            best = best.min(value);
        }
        assert!(
            (got - best).abs() < 1e-6,
            "optimizer {got} vs dense scan {best}"
        );
        // Doubling the radius doubles the radius estimate.
        let got2 = match convexity_radius(&HolonomicSpace::sphere_fiber(2.0)).unwrap() {
            Radius::Finite(v) => v,
            Radius::Infinite => panic!(),
        };
        assert!((got2 - 2.0 * got).abs() < 1e-9);
    }

    #[test]
    fn holonomic_property_holds_below_and_fails_above() {
        let c = 1.0;
        let space = HolonomicSpace::plus_minus(2, c);
        let origin = DVector::zeros(2);
        let below = check_holonomic_property(&space, &origin, 0.45 * c, 60, 11).unwrap();
        assert!(below.holds, "{:?}", below.counterexample);
        let above = check_holonomic_property(&space, &origin, c, 60, 11).unwrap();
        assert!(!above.holds);
        let excess = above.counterexample.unwrap().3;
        assert!(excess > 0.0);
    }

    #[test]
    fn limit_semimetric_of_collapsing_circle_approaches_norm_gap() {
        let seq = HolonomicSequence {
            space: HolonomicSpace::sphere_fiber(1.0),
            scaling: NormScaling::Reciprocal,
        };
        let points = vec![
            dvector![0.0, 0.0],
            dvector![0.5, 0.0],
            dvector![0.0, 0.5],
            dvector![-0.75, 0.0],
            dvector![0.3, 0.4],
        ];
        let i_max = 64;
        let result = limit_semimetric(&seq, &points, i_max, 1e-2).unwrap();
        assert!(result.cauchy_within_tol);
        let sup = seq.sup_norm_at(i_max);
        for (a, pa) in points.iter().enumerate() {
            for (b, pb) in points.iter().enumerate() {
                let target = (pa.norm() - pb.norm()).abs();
                let got = result.sample.dist[a][b];
                assert!(
                    got >= target - 1e-9 && got <= target + sup + 1e-9,
                    "pair ({a},{b}): {got} vs {target} (sup {sup})"
                );
            }
        }
        // Early differences can sit at zero while the Euclidean route still
        // dominates; once the scaled norms take over, the tail decays.
        let tail: Vec<f64> = result
            .sup_diffs
            .iter()
            .filter(|(i, _)| *i >= 32)
            .map(|(_, d)| *d)
            .collect();
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "tail not decaying: {tail:?}");
        }
        assert!(tail.last().unwrap() < &1e-2);
    }

    #[test]
    fn wane_set_constant_norm_keeps_identity_only() {
        let seq = HolonomicSequence {
            space: HolonomicSpace::plus_minus(2, 1.0),
            scaling: NormScaling::Constant,
        };
        let est = wane_set_estimate(&seq, 0.5, 32).unwrap();
        assert_eq!(est.certificates.len(), 1);
        let closure = wane_group_closure(&est, 1e-6).unwrap();
        assert!(matches!(closure.group, OrthSubgroup::Trivial { k: 2 }));
        assert!(!closure.unclassified);
    }

    #[test]
    fn wane_set_reciprocal_circle_covers_the_whole_circle() {
        let seq = HolonomicSequence {
            space: HolonomicSpace::sphere_fiber(1.0),
            scaling: NormScaling::Reciprocal,
        };
        // sup L = 2π, so i_max with 2π/i ≤ threshold covers all angles.
        let est = wane_set_estimate(&seq, 0.5, 16).unwrap();
        assert_eq!(est.certificates.len(), WANE_GRID);
        let closure = wane_group_closure(&est, 1e-3).unwrap();
        assert!(matches!(closure.group, OrthSubgroup::FullSo { k: 2 }));
        assert!(closure.residual < 1e-9);
        assert!(!closure.unclassified);
    }

    #[test]
    fn wane_closure_classifies_plus_minus_and_blocks() {
        // {±id} stays a two-element list.
        let seq = HolonomicSequence {
            space: HolonomicSpace::plus_minus(2, 1.0),
            scaling: NormScaling::Reciprocal,
        };
        let est = wane_set_estimate(&seq, 0.25, 8).unwrap();
        assert_eq!(est.certificates.len(), 2);
        let closure = wane_group_closure(&est, 1e-6).unwrap();
        match &closure.group {
            OrthSubgroup::FiniteList { elements, .. } => assert_eq!(elements.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
        // A dense circle on block (2,3) of k=4 classifies as that block.
        let seq = HolonomicSequence {
            space: HolonomicSpace {
                k: 4,
                group: GroupModel::Circle {
                    block: (2, 3),
                    norm: CircleNorm::SphereLength { radius: 1.0 },
                },
            },
            scaling: NormScaling::Reciprocal,
        };
        let est = wane_set_estimate(&seq, 0.5, 16).unwrap();
        let closure = wane_group_closure(&est, 1e-3).unwrap();
        match &closure.group {
            OrthSubgroup::CircleSo2 { k: 4, block } => assert_eq!(*block, (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wane_closure_rejects_diagonal_circle_as_product() {
        // Equal angles on two blocks: a circle, but not a product of two
        // circles — the productness probe must flag it unclassified.
        let elements: Vec<DMatrix<f64>> = (0..128)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / 128.0;
                embed_rotation(4, (0, 1), theta) * embed_rotation(4, (2, 3), theta)
            })
            .collect();
        let est = WaneEstimate {
            k: 4,
            certificates: elements
                .into_iter()
                .map(|element| WaneCertificate {
                    element,
                    index: 1,
                    norm_value: 0.0,
                })
                .collect(),
            threshold: 1.0,
            i_max: 1,
        };
        let closure = wane_group_closure(&est, 1e-6).unwrap();
        assert!(closure.unclassified);
    }

    #[test]
    fn wane_closure_accepts_true_product() {
        let n = 48;
        let mut elements = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let a = 2.0 * PI * i as f64 / n as f64;
                let b = 2.0 * PI * j as f64 / n as f64;
                elements.push(embed_rotation(4, (0, 1), a) * embed_rotation(4, (2, 3), b));
            }
        }
        let est = WaneEstimate {
            k: 4,
            certificates: elements
                .into_iter()
                .map(|element| WaneCertificate {
                    element,
                    index: 1,
                    norm_value: 0.0,
                })
                .collect(),
            threshold: 1.0,
            i_max: 1,
        };
        let closure = wane_group_closure(&est, 1e-6).unwrap();
        assert!(!closure.unclassified, "{:?}", closure.group);
        match &closure.group {
            OrthSubgroup::Product { factors } => {
                assert_eq!(factors.len(), 2);
                assert!(matches!(factors[0], OrthSubgroup::FullSo { k: 2 }));
                assert!(matches!(factors[1], OrthSubgroup::FullSo { k: 2 }));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn normalize_representation_preserves_distances() {
        let space = HolonomicSpace {
            k: 2,
            group: GroupModel::Finite {
                elements: vec![
                    GroupElementSample {
                        matrix: DMatrix::identity(2, 2),
                        norm_value: 0.0,
                    },
                    GroupElementSample {
                        // A reflection across the x-axis.
                        matrix: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
                        norm_value: 0.9,
                    },
                ],
            },
        };
        let phi = DMatrix::from_row_slice(
            2,
            2,
            &[0.6, -0.8, 0.8, 0.6], // rotation
        );
        let out = normalize_representation(&[space.clone()], &[phi.clone()]).unwrap();
        assert_eq!(out.len(), 1);
        let u = dvector![0.3, 0.7];
        let v = dvector![-0.2, 0.1];
        let before = holonomic_distance(&space, &u, &v).unwrap().value;
        let after = holonomic_distance(&out[0], &(&phi * &u), &(&phi * &v))
            .unwrap()
            .value;
        assert!((before - after).abs() < 1e-12);

        let skew = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(
            normalize_representation(&[space], &[skew]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn identity_conjugation_keeps_circle_spaces() {
        let space = HolonomicSpace::sphere_fiber(1.0);
        let out =
            normalize_representation(&[space.clone()], &[DMatrix::identity(2, 2)]).unwrap();
        let u = dvector![0.4, 0.1];
        let v = dvector![-0.3, 0.2];
        let a = holonomic_distance(&space, &u, &v).unwrap().value;
        let b = holonomic_distance(&out[0], &u, &v).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn two_path_consistency_with_bundle_fiber() {
        // The same fiber metric through two code paths: holonomic distance
        // with the sphere group-norm vs the bundle's same-fiber distance.
        let radius = 0.7;
        let space = HolonomicSpace::sphere_fiber(radius);
        let m = crate::bundle::Manifold::sphere(radius);
        let p = dvector![0.0, 0.0, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..25 {
            let u = dvector![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let v = dvector![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let a = holonomic_distance(&space, &u, &v).unwrap().value;
            let b = crate::bundle::fiber_distance(&m, &p, &u, &v).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn serde_round_trip_matches_interface_shape() {
        let space = HolonomicSpace::sphere_fiber(1.0);
        let text = serde_json::to_string(&space).unwrap();
        assert!(text.contains("\"type\":\"circle\""));
        let back: HolonomicSpace = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();

        let space = HolonomicSpace::plus_minus(2, 1.0);
        let text = serde_json::to_string(&space).unwrap();
        assert!(text.contains("\"type\":\"finite\""));
        let back: HolonomicSpace = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
    }
}
