//! Finite (semi-)metric spaces and comparison machinery.
//!
//! Everything downstream — fiber samples, bundle balls, quotients — lands in a
//! [`FiniteMetricSpace`]: a labelled point list with a dense symmetric
//! distance matrix and an optional base point. Comparisons between spaces go
//! through correspondences (distortion / 2 bounds the Gromov-Hausdorff
//! distance) or through ε-isometries (distortion + surjectivity defect below
//! ε give a GH bound of 2ε).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance used by constructors when validating the metric axioms.
pub const AXIOM_TOL: f64 = 1e-9;

/// A finite metric space: labels, dense distance matrix, optional base point.
///
/// Invariants (enforced by [`FiniteMetricSpace::new`]): the matrix is square,
/// entries are nonnegative and finite, `d[i][i] = 0`, symmetry and the
/// triangle inequality hold within `1e-9`, and `base` (when present) is a
/// valid index. Distinct points at distance zero are allowed in the raw
/// sample type [`SemiMetricSample`] but not here;
/// [`quotient_by_zero`] converts one into the other.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteMetricSpace {
    pub labels: Vec<String>,
    pub dist: Vec<Vec<f64>>,
    pub base: Option<usize>,
}

/// A sampled semi-metric: structurally like [`FiniteMetricSpace`] but
/// distinct points may sit at distance zero (degenerate pairs). This is the
/// natural output type for limits of collapsing distance sequences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemiMetricSample {
    pub labels: Vec<String>,
    pub dist: Vec<Vec<f64>>,
    pub base: Option<usize>,
}

/// A correspondence between two finite spaces: a set of index pairs that is
/// total on both sides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
}

/// Violation report from [`check_metric_axioms`]. Index tuples identify the
/// offending points; the `f64` carries the violation magnitude.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricReport {
    pub symmetry_violations: Vec<(usize, usize, f64)>,
    pub diagonal_violations: Vec<(usize, f64)>,
    pub triangle_violations: Vec<(usize, usize, usize, f64)>,
    pub degenerate_pairs: Vec<(usize, usize)>,
}

impl MetricReport {
    /// True when the sample is a genuine metric: no violations, no
    /// degenerate pairs.
    pub fn is_metric(&self) -> bool {
        self.is_semi_metric() && self.degenerate_pairs.is_empty()
    }

    /// True when only degeneracy (if anything) is present.
    pub fn is_semi_metric(&self) -> bool {
        self.symmetry_violations.is_empty()
            && self.diagonal_violations.is_empty()
            && self.triangle_violations.is_empty()
    }
}

/// Distortion of a correspondence together with the Gromov-Hausdorff upper
/// bound it certifies (half the distortion).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DistortionBound {
    pub distortion: f64,
    pub gh_upper_bound: f64,
}

/// Quantities measuring how far a map is from an isometry: sup-distortion of
/// distances and the surjectivity defect (Hausdorff-type). If both are `< ε`
/// the map is an ε-isometry and `gh_upper_bound = 2ε` applies.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IsometryDefect {
    pub distortion: f64,
    pub surjectivity_defect: f64,
}

impl IsometryDefect {
    /// Smallest `ε` for which the map is an ε-isometry (up to the open/closed
    /// boundary), and the corresponding GH bound `2ε`.
    pub fn epsilon(&self) -> f64 {
        self.distortion.max(self.surjectivity_defect)
    }

    pub fn gh_upper_bound(&self) -> f64 {
        2.0 * self.epsilon()
    }
}

fn validate_square(dist: &[Vec<f64>], n: usize) -> Result<()> {
    if dist.len() != n {
        return Err(Error::malformed(format!(
            "distance matrix has {} rows for {} labels",
            dist.len(),
            n
        )));
    }
    for (i, row) in dist.iter().enumerate() {
        if row.len() != n {
            return Err(Error::malformed(format!(
                "row {i} has length {} in a {n}-point space",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::malformed(format!(
                    "distance entry ({i}, {j}) = {v} is not a finite nonnegative number"
                )));
            }
        }
    }
    Ok(())
}

fn validate_base(base: Option<usize>, n: usize) -> Result<()> {
    if let Some(b) = base {
        if b >= n {
            return Err(Error::malformed(format!(
                "base index {b} out of range for {n} points"
            )));
        }
    }
    Ok(())
}

impl FiniteMetricSpace {
    /// Builds a space and verifies all metric axioms within [`AXIOM_TOL`]
    /// (including nondegeneracy).
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>, base: Option<usize>) -> Result<Self> {
        validate_square(&dist, labels.len())?;
        validate_base(base, labels.len())?;
        let report = axiom_report(&dist, AXIOM_TOL);
        if !report.is_metric() {
            return Err(Error::Tolerance(format!(
                "matrix is not a metric: {} symmetry, {} diagonal, {} triangle violations, {} degenerate pairs",
                report.symmetry_violations.len(),
                report.diagonal_violations.len(),
                report.triangle_violations.len(),
                report.degenerate_pairs.len()
            )));
        }
        Ok(FiniteMetricSpace { labels, dist, base })
    }

    /// Builds a space from a matrix that is symmetric-by-construction
    /// (e.g. a [`crate::par::pairwise_symmetric`] fill). Degenerate checks are
    /// skipped; a pseudorandom subsample of triangles is still audited so
    /// construction bugs surface early without an O(n³) pass.
    pub fn from_computed(
        labels: Vec<String>,
        dist: Vec<Vec<f64>>,
        base: Option<usize>,
    ) -> Result<Self> {
        validate_square(&dist, labels.len())?;
        validate_base(base, labels.len())?;
        let n = labels.len();
        if n >= 3 {
            let mut state = 0x9e3779b97f4a7c15u64;
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                state as usize
            };
            for _ in 0..2000 {
                let (i, j, k) = (next() % n, next() % n, next() % n);
                let excess = dist[i][k] - dist[i][j] - dist[j][k];
                if excess > 1e-6 {
                    return Err(Error::Tolerance(format!(
                        "sampled triangle violation at ({i}, {j}, {k}): excess {excess:.3e}"
                    )));
                }
            }
        }
        Ok(FiniteMetricSpace { labels, dist, base })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn diameter(&self) -> f64 {
        self.dist
            .iter()
            .flat_map(|row| row.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Runs the full axiom check on this space's matrix.
    pub fn check(&self, tol: f64) -> MetricReport {
        axiom_report(&self.dist, tol)
    }

    pub fn to_sample(&self) -> SemiMetricSample {
        SemiMetricSample {
            labels: self.labels.clone(),
            dist: self.dist.clone(),
            base: self.base,
        }
    }
}

impl SemiMetricSample {
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>, base: Option<usize>) -> Result<Self> {
        validate_square(&dist, labels.len())?;
        validate_base(base, labels.len())?;
        Ok(SemiMetricSample { labels, dist, base })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn axiom_report(dist: &[Vec<f64>], tol: f64) -> MetricReport {
    let n = dist.len();
    let mut report = MetricReport::default();
    for i in 0..n {
        if dist[i][i].abs() > tol {
            report.diagonal_violations.push((i, dist[i][i]));
        }
        for j in (i + 1)..n {
            let gap = (dist[i][j] - dist[j][i]).abs();
            if gap > tol {
                report.symmetry_violations.push((i, j, gap));
            }
            if dist[i][j].max(dist[j][i]) <= tol {
                report.degenerate_pairs.push((i, j));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            if j == i {
                continue;
            }
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                let excess = dist[i][k] - dist[i][j] - dist[j][k];
                if excess > tol {
                    report.triangle_violations.push((i, j, k, excess));
                }
            }
        }
    }
    report
}

/// Checks the metric axioms of a sampled semi-metric at tolerance `tol`,
/// reporting every violation and every degenerate pair.
pub fn check_metric_axioms(sample: &SemiMetricSample, tol: f64) -> Result<MetricReport> {
    validate_square(&sample.dist, sample.labels.len())?;
    Ok(axiom_report(&sample.dist, tol))
}

/// Hausdorff distance between two nonempty index subsets of one space:
/// the larger of the two directed sup-min distances.
pub fn hausdorff_distance(space: &FiniteMetricSpace, a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("Hausdorff distance of an empty subset"));
    }
    let n = space.len();
    if let Some(&bad) = a.iter().chain(b.iter()).find(|&&i| i >= n) {
        return Err(Error::malformed(format!(
            "subset index {bad} out of range for {n} points"
        )));
    }
    let directed = |from: &[usize], to: &[usize]| {
        from.iter()
            .map(|&i| {
                to.iter()
                    .map(|&j| space.d(i, j))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    Ok(directed(a, b).max(directed(b, a)))
}

/// Sup-distortion of a correspondence between two spaces. Half the
/// distortion is a Gromov-Hausdorff upper bound, returned alongside.
///
/// The correspondence must be total on both sides; otherwise a domain error
/// is returned.
pub fn correspondence_distortion(
    x: &FiniteMetricSpace,
    y: &FiniteMetricSpace,
    rel: &Correspondence,
) -> Result<DistortionBound> {
    let (nx, ny) = (x.len(), y.len());
    let mut hit_x = vec![false; nx];
    let mut hit_y = vec![false; ny];
    for &(i, j) in &rel.pairs {
        if i >= nx || j >= ny {
            return Err(Error::malformed(format!(
                "correspondence pair ({i}, {j}) out of range ({nx} × {ny} points)"
            )));
        }
        hit_x[i] = true;
        hit_y[j] = true;
    }
    if hit_x.iter().any(|h| !h) || hit_y.iter().any(|h| !h) {
        return Err(Error::domain(
            "correspondence is not total on both sides".to_string(),
        ));
    }
    let mut distortion = 0.0f64;
    for (a, &(i, j)) in rel.pairs.iter().enumerate() {
        for &(k, l) in &rel.pairs[a..] {
            let gap = (x.d(i, k) - y.d(j, l)).abs();
            distortion = distortion.max(gap);
        }
    }
    Ok(DistortionBound {
        distortion,
        gh_upper_bound: 0.5 * distortion,
    })
}

/// Distortion and surjectivity defect of a point map `f: X → Y` given as an
/// index vector (`f[i]` is the image of point `i`).
pub fn eps_isometry_defect(
    f: &[usize],
    x: &FiniteMetricSpace,
    y: &FiniteMetricSpace,
) -> Result<IsometryDefect> {
    if f.len() != x.len() {
        return Err(Error::malformed(format!(
            "map has {} entries for {} domain points",
            f.len(),
            x.len()
        )));
    }
    if let Some(&bad) = f.iter().find(|&&j| j >= y.len()) {
        return Err(Error::malformed(format!(
            "image index {bad} out of range for {} points",
            y.len()
        )));
    }
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain("ε-isometry defect of an empty space"));
    }
    let mut distortion = 0.0f64;
    for i in 0..x.len() {
        for k in (i + 1)..x.len() {
            distortion = distortion.max((x.d(i, k) - y.d(f[i], f[k])).abs());
        }
    }
    let surjectivity_defect = (0..y.len())
        .map(|j| {
            f.iter()
                .map(|&fi| y.d(fi, j))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Ok(IsometryDefect {
        distortion,
        surjectivity_defect,
    })
}

/// Greedy covering count: the number of `2·eps`-balls (centered at points of
/// the ball `B_R(base)`, chosen greedily by lowest index) needed to cover
/// `B_R(base)`. Bounds the ε-covering number from above.
pub fn covering_number(space: &FiniteMetricSpace, eps: f64, r: f64) -> Result<usize> {
    let base = space
        .base
        .ok_or_else(|| Error::domain("covering number needs a base point"))?;
    if eps <= 0.0 {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    if r < 0.0 {
        return Err(Error::domain(format!("radius must be nonnegative, got {r}")));
    }
    let ball: Vec<usize> = (0..space.len()).filter(|&i| space.d(base, i) <= r).collect();
    let mut covered = vec![false; ball.len()];
    let mut count = 0usize;
    for s in 0..ball.len() {
        if covered[s] {
            continue;
        }
        count += 1;
        let c = ball[s];
        for (t, &p) in ball.iter().enumerate() {
            if space.d(c, p) <= 2.0 * eps {
                covered[t] = true;
            }
        }
    }
    Ok(count)
}

/// Collapses all pairs at distance `<= tol` (transitively) and returns the
/// quotient space plus the class index of every original point. Class
/// distances are the minima over representatives. Fails with a tolerance
/// error if the quotient is still degenerate at `tol` or loses the triangle
/// inequality beyond `AXIOM_TOL + 2 * tol`.
pub fn quotient_by_zero(
    sample: &SemiMetricSample,
    tol: f64,
) -> Result<(FiniteMetricSpace, Vec<usize>)> {
    validate_square(&sample.dist, sample.labels.len())?;
    let n = sample.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if sample.dist[i][j] <= tol {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut class_of = vec![usize::MAX; n];
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let class = match reps.iter().position(|&r| r == root) {
            Some(c) => c,
            None => {
                reps.push(root);
                reps.len() - 1
            }
        };
        class_of[i] = class;
    }
    let m = reps.len();
    let mut dist = vec![vec![f64::INFINITY; m]; m];
    for c in 0..m {
        dist[c][c] = 0.0;
    }
    for i in 0..n {
        for j in 0..n {
            let (ci, cj) = (class_of[i], class_of[j]);
            if ci != cj {
                dist[ci][cj] = dist[ci][cj].min(sample.dist[i][j]);
            }
        }
    }
    for c in 0..m {
        for e in 0..m {
            if c != e && dist[c][e] <= tol {
                return Err(Error::Tolerance(format!(
                    "quotient classes {c} and {e} remain at distance {:.3e} <= tol",
                    dist[c][e]
                )));
            }
        }
    }
    let report = axiom_report(&dist, AXIOM_TOL + 2.0 * tol);
    if !report.is_semi_metric() {
        return Err(Error::Tolerance(format!(
            "quotient lost the metric axioms: {} symmetry, {} triangle violations",
            report.symmetry_violations.len(),
            report.triangle_violations.len()
        )));
    }
    let labels = (0..m)
        .map(|c| {
            let members: Vec<&str> = (0..n)
                .filter(|&i| class_of[i] == c)
                .map(|i| sample.labels[i].as_str())
                .collect();
            if members.len() == 1 {
                members[0].to_string()
            } else {
                format!("[{}]", members.join("|"))
            }
        })
        .collect();
    let base = sample.base.map(|b| class_of[b]);
    Ok((FiniteMetricSpace { labels, dist, base }, class_of))
}

/// Restriction of a space to the closed ball `B_R(center)`, with the
/// restricted (not induced-path) metric; the center becomes the base point.
pub fn restricted_ball(
    space: &FiniteMetricSpace,
    center: usize,
    r: f64,
) -> Result<FiniteMetricSpace> {
    if center >= space.len() {
        return Err(Error::malformed(format!(
            "center index {center} out of range for {} points",
            space.len()
        )));
    }
    if r < 0.0 {
        return Err(Error::domain(format!("radius must be nonnegative, got {r}")));
    }
    let keep: Vec<usize> = (0..space.len())
        .filter(|&i| space.d(center, i) <= r)
        .collect();
    let labels = keep.iter().map(|&i| space.labels[i].clone()).collect();
    let dist = keep
        .iter()
        .map(|&i| keep.iter().map(|&j| space.d(i, j)).collect())
        .collect();
    let base = keep.iter().position(|&i| i == center);
    Ok(FiniteMetricSpace { labels, dist, base })
}

/// Shortest-path closure of a symmetric matrix of certified upper bounds.
///
/// Pairwise bounds from restricted curve families need not satisfy the
/// triangle inequality even when each entry is a sound upper bound; routing
/// through intermediate points (curve concatenation) repairs that without
/// giving up soundness, since a sum of upper bounds along a path still
/// bounds the endpoint distance. Entries that already equal the underlying
/// distance are left unchanged (nothing routes below the truth).
pub fn metric_closure(dist: &mut [Vec<f64>]) {
    let n = dist.len();
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i][k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let via = dik + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
}

/// Convenience: the identity correspondence on `n` points.
pub fn identity_correspondence(n: usize) -> Correspondence {
    Correspondence {
        pairs: (0..n).map(|i| (i, i)).collect(),
    }
}

/// Convenience: default labels `p0, p1, ...`.
pub fn index_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_space(step: f64, n: usize) -> FiniteMetricSpace {
        let dist = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (i as f64 - j as f64).abs() * step)
                    .collect()
            })
            .collect();
        FiniteMetricSpace::new(index_labels(n), dist, Some(0)).unwrap()
    }

    #[test]
    fn constructor_rejects_asymmetry() {
        let dist = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(matches!(
            FiniteMetricSpace::new(index_labels(2), dist, None),
            Err(Error::Tolerance(_))
        ));
    }

    #[test]
    fn constructor_rejects_negative_entries() {
        let dist = vec![vec![0.0, -1.0], vec![-1.0, 0.0]];
        assert!(matches!(
            FiniteMetricSpace::new(index_labels(2), dist, None),
            Err(Error::Malformed(_))
        ));
    }

    #[test]
    fn check_reports_triangle_violation() {
        let dist = vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ];
        let sample = SemiMetricSample::new(index_labels(3), dist, None).unwrap();
        let report = check_metric_axioms(&sample, 1e-9).unwrap();
        assert!(!report.triangle_violations.is_empty());
        assert!(report.symmetry_violations.is_empty());
    }

    #[test]
    fn check_rejects_ragged_matrix() {
        let sample = SemiMetricSample {
            labels: index_labels(2),
            dist: vec![vec![0.0, 1.0], vec![1.0]],
            base: None,
        };
        assert!(matches!(
            check_metric_axioms(&sample, 1e-9),
            Err(Error::Malformed(_))
        ));
    }

    #[test]
    fn hausdorff_interval_grids() {
        // Uniform grids over [0, 2]; A samples [0, 1], B samples [0, 2].
        let n = 201;
        let space = grid_space(0.01, n);
        let a: Vec<usize> = (0..=100).collect();
        let b: Vec<usize> = (0..n).collect();
        let h = hausdorff_distance(&space, &a, &b).unwrap();
        assert!((h - 1.0).abs() < 1e-12, "h = {h}");
    }

    #[test]
    fn hausdorff_rejects_empty() {
        let space = grid_space(1.0, 3);
        assert!(matches!(
            hausdorff_distance(&space, &[], &[0]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn identity_correspondence_has_zero_distortion() {
        let space = grid_space(0.25, 9);
        let rel = identity_correspondence(9);
        let bound = correspondence_distortion(&space, &space, &rel).unwrap();
        assert_eq!(bound.distortion, 0.0);
        assert_eq!(bound.gh_upper_bound, 0.0);
    }

    #[test]
    fn partial_correspondence_is_rejected() {
        let space = grid_space(1.0, 3);
        let rel = Correspondence {
            pairs: vec![(0, 0), (1, 1)],
        };
        assert!(matches!(
            correspondence_distortion(&space, &space, &rel),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn covering_number_interval_example() {
        // 101 uniform points on [0, 1], eps = 0.25: greedy needs at most 3
        // balls of radius 0.5; brute-force greedy (the oracle) finds 2.
        let space = grid_space(0.01, 101);
        let count = covering_number(&space, 0.25, 1.0).unwrap();
        assert!(count <= 3, "count = {count}");
        assert_eq!(count, 2);
    }

    #[test]
    fn covering_number_needs_base() {
        let mut space = grid_space(1.0, 4);
        space.base = None;
        assert!(matches!(
            covering_number(&space, 0.5, 2.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn covering_number_rejects_nonpositive_eps() {
        let space = grid_space(1.0, 4);
        assert!(matches!(
            covering_number(&space, 0.0, 2.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn quotient_by_zero_merges_and_relabels() {
        // Two clusters {0, 1} (distance 0) and {2}.
        let dist = vec![
            vec![0.0, 0.0, 2.0],
            vec![0.0, 0.0, 2.0],
            vec![2.0, 2.0, 0.0],
        ];
        let sample = SemiMetricSample::new(index_labels(3), dist, Some(0)).unwrap();
        let (space, classes) = quotient_by_zero(&sample, 1e-12).unwrap();
        assert_eq!(space.len(), 2);
        assert_eq!(classes[0], classes[1]);
        assert_ne!(classes[0], classes[2]);
        assert_eq!(space.base, Some(classes[0]));
        assert!((space.d(classes[0], classes[2]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn quotient_by_zero_flags_unseparated_classes() {
        let dist = vec![
            vec![0.0, 0.0, 1e-7],
            vec![0.0, 0.0, 1e-7],
            vec![1e-7, 1e-7, 0.0],
        ];
        let sample = SemiMetricSample::new(index_labels(3), dist, None).unwrap();
        assert!(matches!(
            quotient_by_zero(&sample, 1e-6),
            Ok((space, _)) if space.len() == 1
        ));
        // Merging can surface a triangle violation that the degenerate pair
        // was masking; the quotient must refuse rather than return a
        // non-metric.
        let dist = vec![
            vec![0.0, 0.0, 1.0, 5.0],
            vec![0.0, 0.0, 1.0, 5.0],
            vec![1.0, 1.0, 0.0, 0.1],
            vec![5.0, 5.0, 0.1, 0.0],
        ];
        let sample = SemiMetricSample::new(index_labels(4), dist, None).unwrap();
        let quotient = quotient_by_zero(&sample, 1e-9);
        assert!(matches!(quotient, Err(Error::Tolerance(_))));
    }

    #[test]
    fn restricted_ball_keeps_restricted_distances() {
        let space = grid_space(1.0, 10);
        let ball = restricted_ball(&space, 3, 2.0).unwrap();
        assert_eq!(ball.len(), 5); // indices 1..=5
        assert_eq!(ball.base, Some(2));
        assert!((ball.d(0, 4) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_preserves_fields() {
        let space = grid_space(0.5, 4);
        let text = serde_json::to_string(&space).unwrap();
        let back: FiniteMetricSpace = serde_json::from_str(&text).unwrap();
        assert_eq!(back.labels, space.labels);
        assert_eq!(back.base, space.base);
        assert_eq!(back.dist, space.dist);
    }

    #[test]
    fn metric_closure_repairs_triangle_and_keeps_symmetry() {
        let mut dist = vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ];
        metric_closure(&mut dist);
        assert_eq!(dist[0][2], 2.0);
        assert_eq!(dist[2][0], 2.0);
        assert_eq!(dist[0][1], 1.0);
        let sample = SemiMetricSample::new(index_labels(3), dist, None).unwrap();
        let report = check_metric_axioms(&sample, 1e-12).unwrap();
        assert!(report.is_metric());
    }
}
