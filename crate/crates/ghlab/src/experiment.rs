//! Scenario experiments: collapse-convergence tables, equidistance and
//! flat-strip verifications, and refinement studies, all deterministic
//! given their configuration and emitting CSV/JSON artifacts.
//!
//! Budgets come from explicit bounds only — `2·diam` of a collapsed factor,
//! the represented `sup L_i` (bounded by `2π/i` for the sphere family) —
//! plus a computed sampling allowance (grid covering radius, Lipschitz
//! constant 1). Nothing is fitted.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bundle::{self, grid, Manifold};
use crate::holonomic::{
    wane_group_closure, wane_set_estimate, HolonomicSequence, HolonomicSpace, NormScaling,
};
use crate::metric::{correspondence_distortion, Correspondence};
use crate::parallelism::{parallel_translate_setvalued, SampledSubmetry};
use crate::quotient::{quotient_sample_on, OrthSubgroup};
use crate::{Error, Result};

/// Shared experiment configuration. `n_fiber` is the total fiber-grid size,
/// `n_base` doubles as the pair count for sampling-style experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub i_max: usize,
    pub n_base: usize,
    pub n_fiber: usize,
    pub radius: f64,
    pub tol: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 7,
            i_max: 16,
            n_base: 12,
            n_fiber: 144,
            radius: 1.0,
            tol: 1e-6,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.i_max < 2 {
            return Err(Error::domain(format!("i_max must be at least 2, got {}", self.i_max)));
        }
        if self.n_base < 4 || self.n_fiber < 4 {
            return Err(Error::domain(format!(
                "sample sizes must be at least 4, got n_base = {}, n_fiber = {}",
                self.n_base, self.n_fiber
            )));
        }
        if !(self.radius > 0.0) {
            return Err(Error::domain(format!(
                "ball radius must be positive, got {}",
                self.radius
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::domain(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// One line of a convergence table. `budget` already includes the computed
/// sampling allowance, so `pass` is simply `gh_bound <= budget`.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub i: usize,
    pub gh_bound: f64,
    pub budget: f64,
    pub pass: bool,
}

fn rows_csv(rows: &[ConvergenceRow]) -> String {
    let mut text = String::from("i,gh_bound,budget,pass\n");
    for r in rows {
        let _ = writeln!(text, "{},{},{},{}", r.i, r.gh_bound, r.budget, r.pass);
    }
    text
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .map_err(|e| Error::domain(format!("could not write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::domain(format!("could not serialize report: {e}")))?;
    write_text(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::domain(format!("could not create {}: {e}", dir.display())))
}

/// Covering radius of the planar polar grid `ball_grid(2, r, n)`: half the
/// radial step across, half the arc gap around.
fn polar_covering_radius(r: f64, n: usize) -> f64 {
    let (n_r, _) = grid::disk_partition(n);
    let radial = r / (n_r - 1).max(1) as f64;
    let angular = grid::ball_grid_rotation_mesh(2, r, n);
    0.5 * (radial * radial + angular * angular).sqrt()
}

/// The norm-level correspondence of a quotient sample: every point matched
/// to its orbit class.
fn class_correspondence(class_of: &[usize]) -> Correspondence {
    Correspondence {
        pairs: class_of.iter().enumerate().map(|(i, c)| (i, *c)).collect(),
    }
}

/// Outcome of a collapse scenario: the convergence table plus the wane-set
/// classification of the limit fiber.
#[derive(Debug, Clone, Serialize)]
pub struct CollapseOutcome {
    pub rows: Vec<ConvergenceRow>,
    pub allowance: f64,
    /// `gh_bound` increases from one row to the next (sampling noise allows
    /// at most one).
    pub inversions: usize,
    pub wane_group: OrthSubgroup,
    pub wane_residual: f64,
    pub wane_unclassified: bool,
    pub all_pass: bool,
}

/// Tangent-bundle collapse of the round sphere: for each `i` the sampled
/// fiber of the radius-`1/i` sphere is compared against the segment sample
/// of the plane modulo rotations, with budget `2π/i` plus the grid
/// allowance. The wane machinery then recovers the rotation group.
pub fn run_totcollapse(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<CollapseOutcome> {
    cfg.validate()?;
    let grid_pts = grid::ball_grid(2, cfg.radius, cfg.n_fiber)?;
    let north = DVector::from_vec(vec![0.0, 0.0, 1.0]);
    let quot = quotient_sample_on(&OrthSubgroup::FullSo { k: 2 }, &grid_pts)?;
    let corr = class_correspondence(&quot.class_of);
    let allowance = polar_covering_radius(cfg.radius, cfg.n_fiber);

    let mut rows = Vec::with_capacity(cfg.i_max);
    for i in 1..=cfg.i_max {
        let m = Manifold::sphere(1.0 / i as f64);
        let fiber = bundle::fiber_metric_sample_on(&m, &north, &grid_pts)?;
        let bound = correspondence_distortion(&fiber, &quot.space, &corr)?;
        let budget = 2.0 * PI / i as f64 + allowance;
        rows.push(ConvergenceRow {
            i,
            gh_bound: bound.gh_upper_bound,
            budget,
            pass: bound.gh_upper_bound <= budget,
        });
    }
    let inversions = rows
        .windows(2)
        .filter(|w| w[1].gh_bound > w[0].gh_bound + 1e-12)
        .count();

    let seq = HolonomicSequence {
        space: HolonomicSpace::sphere_fiber(1.0),
        scaling: NormScaling::Reciprocal,
    };
    // 2π/i_max dominates sup L_i at the last index, so the estimate covers
    // every angle of the circle.
    let est = wane_set_estimate(&seq, 2.0 * PI / cfg.i_max as f64, cfg.i_max)?;
    let closure = wane_group_closure(&est, 1e-6)?;
    let circle_recovered = matches!(
        closure.group,
        OrthSubgroup::FullSo { k: 2 } | OrthSubgroup::CircleSo2 { .. }
    );

    let all_pass = rows.iter().all(|r| r.pass)
        && inversions <= 1
        && circle_recovered
        && !closure.unclassified
        && closure.residual < 1e-3;
    let outcome = CollapseOutcome {
        rows,
        allowance,
        inversions,
        wane_group: closure.group,
        wane_residual: closure.residual,
        wane_unclassified: closure.unclassified,
        all_pass,
    };

    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_text(&dir.join("rows.csv"), &rows_csv(&outcome.rows))?;
        write_json(&dir.join("report.json"), &outcome)?;
        let mut curves = String::from("i,delta,norm\n");
        for i in 1..=cfg.i_max {
            for j in 0..=64 {
                let delta = PI * j as f64 / 64.0;
                let norm = (delta * (4.0 * PI - delta)).sqrt() / i as f64;
                let _ = writeln!(curves, "{i},{delta},{norm}");
            }
        }
        write_text(&dir.join("curves.csv"), &curves)?;
    }
    Ok(outcome)
}

/// One bundle-level comparison row: a sampled total space against its
/// predicted limit, with the `2·diam + fiber` budget.
#[derive(Debug, Clone, Serialize)]
pub struct BundleLevelRow {
    pub variant: String,
    pub i: usize,
    pub gh_bound: f64,
    pub collapsed_diameter: f64,
    pub budget: f64,
    pub pass: bool,
}

/// Outcome of the product collapse scenario, covering both variants.
#[derive(Debug, Clone, Serialize)]
pub struct ProdOutcome {
    /// Torus × collapsing-sphere fiber-level table (the nontrivial variant).
    pub rows: Vec<ConvergenceRow>,
    /// Torus × collapsing-torus fiber-level table.
    pub torus_rows: Vec<ConvergenceRow>,
    pub allowance: f64,
    /// Degenerate pairs of the torus×torus limit fiber semi-metric
    /// (trivial holonomy keeps the limit a genuine metric: expected zero).
    pub degenerate_pairs_torus_limit: usize,
    pub torus_wane_group: OrthSubgroup,
    pub sphere_wane_group: OrthSubgroup,
    /// Every wane certificate of the torus×sphere sequence is the identity
    /// on the torus block.
    pub wane_concentrated_in_sphere_block: bool,
    pub bundle_rows: Vec<BundleLevelRow>,
    pub all_pass: bool,
}

fn max_abs_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut gap = 0.0f64;
    for (ra, rb) in a.iter().zip(b.iter()) {
        for (xa, xb) in ra.iter().zip(rb.iter()) {
            gap = gap.max((xa - xb).abs());
        }
    }
    gap
}

/// Fiber-level convergence rows for a collapsing product against a catalog
/// quotient, on a shared ℝ⁴ grid.
fn product_fiber_rows(
    cfg: &ScenarioConfig,
    grid4: &[DVector<f64>],
    p: &DVector<f64>,
    factory: impl Fn(usize) -> Manifold,
    group: &OrthSubgroup,
    sup_norm_at: impl Fn(usize) -> f64,
    allowance: f64,
) -> Result<Vec<ConvergenceRow>> {
    let quot = quotient_sample_on(group, grid4)?;
    let corr = class_correspondence(&quot.class_of);
    let mut rows = Vec::with_capacity(cfg.i_max);
    for i in 1..=cfg.i_max {
        let m = factory(i);
        let fiber = bundle::fiber_metric_sample_on(&m, p, grid4)?;
        let bound = correspondence_distortion(&fiber, &quot.space, &corr)?;
        let budget = sup_norm_at(i) + allowance;
        rows.push(ConvergenceRow {
            i,
            gh_bound: bound.gh_upper_bound,
            budget,
            pass: bound.gh_upper_bound <= budget,
        });
    }
    Ok(rows)
}

/// Bundle-level comparison of a sampled collapsing product against its
/// predicted limit metric (base of the surviving factor, fibers modulo the
/// collapsed factor's holonomy).
fn bundle_level_row(
    cfg: &ScenarioConfig,
    variant: &str,
    i: usize,
    m: &Manifold,
    collapsed: &Manifold,
    p: &DVector<f64>,
    fiber_budget: f64,
) -> Result<BundleLevelRow> {
    let surviving = Manifold::unit_torus();
    let n_fiber = cfg.n_fiber.min(16).max(4);
    let sample = bundle::bundle_ball_sample(m, p, cfg.radius, cfg.n_base, n_fiber)?;
    let nf = sample.fiber_grid.len();
    let n = sample.space.labels.len();
    let split = |idx: usize| (&sample.base_points[idx / nf], &sample.fiber_vectors[idx]);
    let mut limit = vec![vec![0.0f64; n]; n];
    let mut collapsed_diameter = 0.0f64;
    for a in 0..n {
        for b in (a + 1)..n {
            let (pa, ua) = split(a);
            let (pb, ub) = split(b);
            let b1a = DVector::from_column_slice(&pa.as_slice()[..2]);
            let b1b = DVector::from_column_slice(&pb.as_slice()[..2]);
            let b2a = DVector::from_column_slice(&pa.as_slice()[2..]);
            let b2b = DVector::from_column_slice(&pb.as_slice()[2..]);
            let d1 = bundle::base_distance(&surviving, &b1a, &b1b)?;
            let d2 = bundle::base_distance(collapsed, &b2a, &b2b)?;
            collapsed_diameter = collapsed_diameter.max(d2);
            let fiber_term = if variant == "torus_torus" {
                (ua - ub).norm_squared()
            } else {
                let flat = (ua.rows(0, 2) - ub.rows(0, 2)).norm_squared();
                let gap = ua.rows(2, 2).norm() - ub.rows(2, 2).norm();
                flat + gap * gap
            };
            let d = (d1 * d1 + fiber_term).sqrt();
            limit[a][b] = d;
            limit[b][a] = d;
        }
    }
    let distortion = max_abs_gap(&sample.space.dist, &limit);
    let gh_bound = 0.5 * distortion;
    let budget = 2.0 * collapsed_diameter + fiber_budget;
    Ok(BundleLevelRow {
        variant: variant.to_string(),
        i,
        gh_bound,
        collapsed_diameter,
        budget,
        pass: gh_bound <= budget,
    })
}

/// Product collapse: a flat torus times a collapsing factor. The
/// torus×torus variant keeps trivial holonomy (nondegenerate limit), the
/// torus×sphere variant collapses onto fibers `ℝ² × (ℝ²/SO(2))`.
pub fn run_prodcollapse(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<ProdOutcome> {
    cfg.validate()?;
    let side = ((cfg.n_fiber as f64).sqrt().round() as usize).max(4);
    let disk = grid::ball_grid(2, cfg.radius, side)?;
    let grid4 = grid::product_grid(&disk, &disk);
    let allowance = {
        let per = polar_covering_radius(cfg.radius, side);
        (2.0 * per * per).sqrt()
    };
    let p_tt = DVector::from_vec(vec![0.2, 0.3, 0.6, 0.1]);
    let p_ts = DVector::from_vec(vec![0.2, 0.3, 0.0, 0.0, 1.0]);
    let torus_torus =
        |i: usize| Manifold::product(Manifold::unit_torus(), Manifold::rescaled(Manifold::unit_torus(), 1.0 / i as f64));
    let torus_sphere =
        |i: usize| Manifold::product(Manifold::unit_torus(), Manifold::rescaled(Manifold::sphere(1.0), 1.0 / i as f64));

    let torus_rows = product_fiber_rows(
        cfg,
        &grid4,
        &p_tt,
        torus_torus,
        &OrthSubgroup::Trivial { k: 4 },
        |_| 0.0,
        allowance,
    )?;
    let rows = product_fiber_rows(
        cfg,
        &grid4,
        &p_ts,
        torus_sphere,
        &OrthSubgroup::CircleSo2 { k: 4, block: (2, 3) },
        |i| 2.0 * PI / i as f64,
        allowance,
    )?;

    // Limit fiber of the trivial-holonomy variant: nondegenerate.
    let trivial_seq = HolonomicSequence {
        space: HolonomicSpace::trivial(4),
        scaling: NormScaling::Reciprocal,
    };
    let limit = crate::holonomic::limit_semimetric(&trivial_seq, &grid4, cfg.i_max, cfg.tol)?;
    let mut degenerate_pairs_torus_limit = 0;
    for a in 0..grid4.len() {
        for b in (a + 1)..grid4.len() {
            if limit.sample.dist[a][b] <= 1e-9 {
                degenerate_pairs_torus_limit += 1;
            }
        }
    }
    let torus_est = wane_set_estimate(&trivial_seq, 2.0 * PI / cfg.i_max as f64, cfg.i_max)?;
    let torus_closure = wane_group_closure(&torus_est, 1e-6)?;

    let sphere_seq = HolonomicSequence {
        space: HolonomicSpace {
            k: 4,
            group: crate::holonomic::GroupModel::Circle {
                block: (2, 3),
                norm: crate::holonomic::CircleNorm::SphereLength { radius: 1.0 },
            },
        },
        scaling: NormScaling::Reciprocal,
    };
    let sphere_est = wane_set_estimate(&sphere_seq, 2.0 * PI / cfg.i_max as f64, cfg.i_max)?;
    let wane_concentrated_in_sphere_block = sphere_est.certificates.iter().all(|c| {
        let top = c.element.view((0, 0), (2, 2)).into_owned();
        (top - nalgebra::DMatrix::identity(2, 2)).norm() <= 1e-12
    });
    let sphere_closure = wane_group_closure(&sphere_est, 1e-6)?;

    let mut bundle_rows = Vec::new();
    for &i in &[1usize, cfg.i_max] {
        bundle_rows.push(bundle_level_row(
            cfg,
            "torus_torus",
            i,
            &torus_torus(i),
            &Manifold::rescaled(Manifold::unit_torus(), 1.0 / i as f64),
            &p_tt,
            0.0,
        )?);
        bundle_rows.push(bundle_level_row(
            cfg,
            "torus_sphere",
            i,
            &torus_sphere(i),
            &Manifold::rescaled(Manifold::sphere(1.0), 1.0 / i as f64),
            &p_ts,
            2.0 * PI / i as f64,
        )?);
    }

    let all_pass = rows.iter().all(|r| r.pass)
        && torus_rows.iter().all(|r| r.pass)
        && bundle_rows.iter().all(|r| r.pass)
        && degenerate_pairs_torus_limit == 0
        && matches!(torus_closure.group, OrthSubgroup::Trivial { .. })
        && matches!(sphere_closure.group, OrthSubgroup::CircleSo2 { k: 4, block: (2, 3) })
        && wane_concentrated_in_sphere_block;
    let outcome = ProdOutcome {
        rows,
        torus_rows,
        allowance,
        degenerate_pairs_torus_limit,
        torus_wane_group: torus_closure.group,
        sphere_wane_group: sphere_closure.group,
        wane_concentrated_in_sphere_block,
        bundle_rows,
        all_pass,
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_text(&dir.join("rows.csv"), &rows_csv(&outcome.rows))?;
        write_json(&dir.join("report.json"), &outcome)?;
    }
    Ok(outcome)
}

/// Outcome of the equidistance check: fiber gaps against base distances and
/// the submetry lower bound, over seeded random base pairs.
#[derive(Debug, Clone, Serialize)]
pub struct EquidistanceOutcome {
    pub pairs_checked: usize,
    pub max_gap_torus: f64,
    pub max_gap_sphere: f64,
    pub submetry_violations: usize,
    pub all_pass: bool,
}

/// Checks `|min inter-fiber distance − d_M(p, q)| ≤ tol` and the submetry
/// lower bound on torus and sphere samples (`n_base` pairs each).
pub fn run_equidistance_check(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<EquidistanceOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fiber = grid::ball_grid(2, cfg.radius, 9)?;
    let mut submetry_violations = 0usize;
    let mut check_pair =
        |m: &Manifold, p: &DVector<f64>, q: &DVector<f64>| -> Result<f64> {
            let d_base = bundle::base_distance(m, p, q)?;
            let mut min = f64::INFINITY;
            for u in &fiber {
                for v in &fiber {
                    let d = bundle::sasaki_distance(m, p, u, q, v)?.value;
                    if d < d_base - 1e-9 {
                        submetry_violations += 1;
                    }
                    min = min.min(d);
                }
            }
            Ok((min - d_base).abs())
        };

    let torus = Manifold::unit_torus();
    let mut max_gap_torus = 0.0f64;
    for _ in 0..cfg.n_base {
        let p = DVector::from_vec(vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
        let q = DVector::from_vec(vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
        max_gap_torus = max_gap_torus.max(check_pair(&torus, &p, &q)?);
    }

    let sphere = Manifold::sphere(1.0);
    let mut max_gap_sphere = 0.0f64;
    for _ in 0..cfg.n_base {
        let z: f64 = rng.gen_range(0.1..0.9);
        let phi: f64 = rng.gen_range(0.0..2.0 * PI);
        let s = (1.0 - z * z).sqrt();
        let p = DVector::from_vec(vec![s * phi.cos(), s * phi.sin(), z]);
        // A unit tangent direction at p and a known arc angle give a pair
        // with closed-form base distance.
        let pv = nalgebra::Vector3::new(p[0], p[1], p[2]);
        let frame = bundle::sphere::global_frame(&pv)?;
        let alpha: f64 = rng.gen_range(0.0..2.0 * PI);
        let t = frame.column(0) * alpha.cos() + frame.column(1) * alpha.sin();
        let beta: f64 = rng.gen_range(0.05..1.2);
        let qv = pv * beta.cos() + t * beta.sin();
        let q = DVector::from_vec(vec![qv.x, qv.y, qv.z]);
        max_gap_sphere = max_gap_sphere.max(check_pair(&sphere, &p, &q)?);
    }

    let all_pass =
        max_gap_torus <= cfg.tol && max_gap_sphere <= cfg.tol && submetry_violations == 0;
    let outcome = EquidistanceOutcome {
        pairs_checked: 2 * cfg.n_base,
        max_gap_torus,
        max_gap_sphere,
        submetry_violations,
        all_pass,
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("report.json"), &outcome)?;
    }
    Ok(outcome)
}

/// Outcome of the flat-strip check on the torus bundle.
#[derive(Debug, Clone, Serialize)]
pub struct FlatStripOutcome {
    pub grid: usize,
    pub max_deviation: f64,
    pub all_pass: bool,
}

/// Builds the strip `(γ(t), s·V)` over a base geodesic of the flat torus
/// and verifies all pairwise distances match the Euclidean rectangle.
pub fn run_flat_strip_check(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<FlatStripOutcome> {
    cfg.validate()?;
    let m = Manifold::unit_torus();
    let n = 20usize;
    let w = [0.6, 0.8];
    let v = DVector::from_vec(vec![-0.8, 0.6]);
    let p = [0.15, 0.35];
    let ts = grid::segment_levels(0.45, n);
    let mut points: Vec<(DVector<f64>, DVector<f64>, f64, f64)> = Vec::with_capacity(n * n);
    for &t in &ts {
        let base = DVector::from_vec(vec![p[0] + t * w[0], p[1] + t * w[1]]);
        for &s in &ts {
            points.push((base.clone(), &v * s, t, s));
        }
    }
    let mut max_deviation = 0.0f64;
    for a in 0..points.len() {
        for b in (a + 1)..points.len() {
            let (pa, ua, ta, sa) = &points[a];
            let (pb, ub, tb, sb) = &points[b];
            let d = bundle::sasaki_distance(&m, pa, ua, pb, ub)?.value;
            let rect = ((ta - tb).powi(2) + (sa - sb).powi(2)).sqrt();
            max_deviation = max_deviation.max((d - rect).abs());
        }
    }
    let all_pass = max_deviation <= cfg.tol;
    let outcome = FlatStripOutcome {
        grid: n,
        max_deviation,
        all_pass,
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write_json(&dir.join("report.json"), &outcome)?;
    }
    Ok(outcome)
}

/// One refinement level: sample sizes, the Hausdorff gap of the endpoint
/// set against the previous level, and (sphere scenario) against the orbit.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementRow {
    pub level: usize,
    pub n_total: usize,
    pub endpoints: usize,
    pub hausdorff_prev: Option<f64>,
    pub hausdorff_orbit: Option<f64>,
    pub pass: bool,
}

/// Outcome of the refinement study over both scenarios.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementOutcome {
    pub torus_rows: Vec<RefinementRow>,
    pub sphere_rows: Vec<RefinementRow>,
    pub all_pass: bool,
}

fn vector_set_hausdorff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let directed = |from: &[DVector<f64>], to: &[DVector<f64>]| {
        from.iter()
            .map(|x| {
                to.iter()
                    .map(|y| (x - y).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0f64, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

fn endpoint_vectors(
    sample: &bundle::BundleSample,
    sub: &SampledSubmetry,
    base_path: &[usize],
    start: usize,
    tol: f64,
) -> Result<Vec<DVector<f64>>> {
    let nf = sample.fiber_grid.len();
    let out = parallel_translate_setvalued(sub, base_path, start, tol)?;
    Ok(out
        .endpoints
        .iter()
        .map(|e| sample.fiber_vectors[*e].clone())
        .collect::<Vec<_>>()
        .into_iter()
        .map(|v| {
            debug_assert_eq!(v.len(), sample.fiber_grid[0].len());
            let _ = nf;
            v
        })
        .collect())
}

fn refinement_pass(rows: &mut [RefinementRow]) {
    for idx in 0..rows.len() {
        rows[idx].pass = if idx < 2 {
            true
        } else {
            match (rows[idx].hausdorff_prev, rows[idx - 1].hausdorff_prev) {
                (Some(h), Some(hp)) => h <= hp + 1e-12,
                _ => false,
            }
        };
    }
}

/// Refinement study: the endpoint sets of set-valued translation at
/// doubling sample densities, with successive Hausdorff gaps that must not
/// grow. The torus path keeps a singleton endpoint; the collapsed-sphere
/// loop's endpoint set approaches the rotation orbit of the start vector.
pub fn run_refinement_study(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<RefinementOutcome> {
    cfg.validate()?;

    // Torus scenario: a straight base path, trivial transport.
    let torus = Manifold::unit_torus();
    let p = DVector::from_vec(vec![0.15, 0.35]);
    let base_sizes = [6usize, 10, 18, 32];
    let fiber_sizes = [8usize, 12, 18, 24];
    let u0 = DVector::from_vec(vec![1.0, 0.0]);
    let mut torus_rows: Vec<RefinementRow> = Vec::new();
    let mut torus_endpoint_sets: Vec<Vec<DVector<f64>>> = Vec::new();
    for level in 0..4 {
        let base_pts = bundle::base_grid(&torus, &p, 0.4, base_sizes[level])?;
        let fiber = grid::ball_grid(2, 1.0, fiber_sizes[level])?;
        let sample = bundle::bundle_sample_on(&torus, &base_pts, &fiber)?;
        let sub = SampledSubmetry::from_bundle(&sample)?;
        // Snap a straight segment to the base grid.
        let mut path = Vec::new();
        for j in 0..=4 {
            let target = DVector::from_vec(vec![
                p[0] + 0.09 * j as f64,
                p[1] + 0.03 * j as f64,
            ]);
            let nearest = (0..base_pts.len())
                .min_by(|a, b| {
                    let da = bundle::base_distance(&torus, &base_pts[*a], &target).unwrap();
                    let db = bundle::base_distance(&torus, &base_pts[*b], &target).unwrap();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if path.last() != Some(&nearest) {
                path.push(nearest);
            }
        }
        let nf = sample.fiber_grid.len();
        let u0_idx = sample
            .fiber_grid
            .iter()
            .position(|f| (f - &u0).norm() <= 1e-12)
            .ok_or_else(|| Error::domain("fiber grid lost the probe vector"))?;
        let start = path[0] * nf + u0_idx;
        let endpoints = endpoint_vectors(&sample, &sub, &path, start, cfg.tol)?;
        let hausdorff_prev = torus_endpoint_sets
            .last()
            .map(|prev| vector_set_hausdorff(&endpoints, prev));
        torus_rows.push(RefinementRow {
            level,
            n_total: sample.space.labels.len(),
            endpoints: endpoints.len(),
            hausdorff_prev,
            hausdorff_orbit: None,
            pass: true,
        });
        torus_endpoint_sets.push(endpoints);
    }
    refinement_pass(&mut torus_rows);

    // Collapsed-sphere scenario: a loop around the pole on a small sphere,
    // where cheap holonomy spreads endpoints over the rotation orbit.
    let radius = 0.125;
    let sphere = Manifold::sphere(radius);
    let ring_sizes = [6usize, 10, 16, 26];
    let fiber_ring_sizes = [8usize, 12, 18, 26];
    let cap_angle = 0.9f64;
    let orbit: Vec<DVector<f64>> = (0..128)
        .map(|j| {
            let a = 2.0 * PI * j as f64 / 128.0;
            DVector::from_vec(vec![a.cos(), a.sin()])
        })
        .collect();
    let mut sphere_rows: Vec<RefinementRow> = Vec::new();
    let mut sphere_endpoint_sets: Vec<Vec<DVector<f64>>> = Vec::new();
    for level in 0..4 {
        let m_ring = ring_sizes[level];
        let ring: Vec<DVector<f64>> = (0..m_ring)
            .map(|j| {
                let phi = 2.0 * PI * j as f64 / m_ring as f64;
                DVector::from_vec(vec![
                    cap_angle.sin() * phi.cos(),
                    cap_angle.sin() * phi.sin(),
                    cap_angle.cos(),
                ])
            })
            .collect();
        let fiber = grid::ball_grid(2, 1.0, fiber_ring_sizes[level])?;
        let sample = bundle::bundle_sample_on(&sphere, &ring, &fiber)?;
        let sub = SampledSubmetry::from_bundle(&sample)?;
        let mut path: Vec<usize> = (0..m_ring).collect();
        path.push(0);
        let base_length: f64 = path
            .windows(2)
            .map(|w| sub.base.dist[w[0]][w[1]])
            .sum();
        let nf = sample.fiber_grid.len();
        let u0_idx = sample
            .fiber_grid
            .iter()
            .position(|f| (f - &u0).norm() <= 1e-12)
            .ok_or_else(|| Error::domain("fiber grid lost the probe vector"))?;
        let start = u0_idx;
        // Rotations cost at most the sup of the represented length norms,
        // so that is the slack the lifts are allowed.
        let translate_tol = sphere.sup_length_norm() / (1.0 + base_length);
        let endpoints = endpoint_vectors(&sample, &sub, &path, start, translate_tol)?;
        let hausdorff_prev = sphere_endpoint_sets
            .last()
            .map(|prev| vector_set_hausdorff(&endpoints, prev));
        let hausdorff_orbit = Some(vector_set_hausdorff(&endpoints, &orbit));
        sphere_rows.push(RefinementRow {
            level,
            n_total: sample.space.labels.len(),
            endpoints: endpoints.len(),
            hausdorff_prev,
            hausdorff_orbit,
            pass: true,
        });
        sphere_endpoint_sets.push(endpoints);
    }
    refinement_pass(&mut sphere_rows);
    // The orbit gap over the whole study must shrink as well.
    let orbit_trend_ok = match (
        sphere_rows.first().and_then(|r| r.hausdorff_orbit),
        sphere_rows.last().and_then(|r| r.hausdorff_orbit),
    ) {
        (Some(first), Some(last)) => last <= first + 1e-12,
        _ => false,
    };

    let all_pass = torus_rows.iter().all(|r| r.pass)
        && sphere_rows.iter().all(|r| r.pass)
        && orbit_trend_ok;
    let outcome = RefinementOutcome {
        torus_rows,
        sphere_rows,
        all_pass,
    };
    if let Some(dir) = out {
        ensure_dir(dir)?;
        let mut table = String::from("scenario,level,n_total,endpoints,hausdorff_prev,hausdorff_orbit,pass\n");
        for (name, rows) in [("torus", &outcome.torus_rows), ("sphere", &outcome.sphere_rows)] {
            for r in rows {
                let hp = r.hausdorff_prev.map_or(String::new(), |h| h.to_string());
                let ho = r.hausdorff_orbit.map_or(String::new(), |h| h.to_string());
                let _ = writeln!(
                    table,
                    "{name},{},{},{},{hp},{ho},{}",
                    r.level, r.n_total, r.endpoints, r.pass
                );
            }
        }
        write_text(&dir.join("levels.csv"), &table)?;
        write_json(&dir.join("report.json"), &outcome)?;
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ScenarioConfig {
        ScenarioConfig {
            seed: 11,
            i_max: 4,
            n_base: 5,
            n_fiber: 36,
            radius: 1.0,
            tol: 1e-4,
        }
    }

    #[test]
    fn totcollapse_rows_shrink_and_pass() {
        let outcome = run_totcollapse(&small_cfg(), None).unwrap();
        assert_eq!(outcome.rows.len(), 4);
        assert!(outcome.all_pass, "{outcome:?}");
        assert!(outcome.rows[3].gh_bound < outcome.rows[0].gh_bound);
        assert!(matches!(outcome.wane_group, OrthSubgroup::FullSo { k: 2 }));
    }

    #[test]
    fn prodcollapse_classifies_both_variants() {
        let outcome = run_prodcollapse(&small_cfg(), None).unwrap();
        assert!(outcome.all_pass, "{outcome:?}");
        assert_eq!(outcome.degenerate_pairs_torus_limit, 0);
        assert!(matches!(outcome.torus_wane_group, OrthSubgroup::Trivial { k: 4 }));
        assert!(matches!(
            outcome.sphere_wane_group,
            OrthSubgroup::CircleSo2 { k: 4, block: (2, 3) }
        ));
        assert_eq!(outcome.bundle_rows.len(), 4);
    }

    #[test]
    fn equidistance_holds_on_both_geometries() {
        let outcome = run_equidistance_check(&small_cfg(), None).unwrap();
        assert!(outcome.all_pass, "{outcome:?}");
        assert!(outcome.max_gap_torus <= 1e-9);
        assert!(outcome.max_gap_sphere <= 1e-4);
        assert_eq!(outcome.submetry_violations, 0);
    }

    #[test]
    fn flat_strip_matches_rectangle() {
        let outcome = run_flat_strip_check(&small_cfg(), None).unwrap();
        assert!(outcome.all_pass, "max deviation {}", outcome.max_deviation);
        assert!(outcome.max_deviation <= 1e-6);
    }

    #[test]
    fn refinement_tables_are_emitted_and_trend_down() {
        let dir = std::env::temp_dir().join("ghlab-refinement-test");
        let outcome = run_refinement_study(&small_cfg(), Some(&dir)).unwrap();
        assert!(outcome.all_pass, "{outcome:?}");
        // Torus endpoints stay a stable singleton.
        for row in &outcome.torus_rows {
            assert_eq!(row.endpoints, 1);
            if let Some(h) = row.hausdorff_prev {
                assert!(h <= 1e-12);
            }
        }
        let table = std::fs::read_to_string(dir.join("levels.csv")).unwrap();
        assert!(table.starts_with("scenario,level,n_total,endpoints,hausdorff_prev,hausdorff_orbit,pass"));
        assert_eq!(table.lines().count(), 9);
    }

    #[test]
    fn deterministic_outputs_are_byte_identical() {
        let dir1 = std::env::temp_dir().join("ghlab-tot-a");
        let dir2 = std::env::temp_dir().join("ghlab-tot-b");
        let cfg = small_cfg();
        run_totcollapse(&cfg, Some(&dir1)).unwrap();
        run_totcollapse(&cfg, Some(&dir2)).unwrap();
        for file in ["rows.csv", "report.json", "curves.csv"] {
            let a = std::fs::read(dir1.join(file)).unwrap();
            let b = std::fs::read(dir2.join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between reruns");
        }
    }
}
