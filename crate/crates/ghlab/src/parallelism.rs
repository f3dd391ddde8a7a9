//! Set-valued parallelism over sampled submetries: partial multi-valued
//! relations between finite samples, horizontal-path detection, set-valued
//! parallel translation along sampled base paths, and the holonomy monoid
//! a family of base loops generates.
//!
//! Everything here is discrete: spaces are finite metric samples, paths are
//! index sequences, and transport is a beam search over near-horizontal
//! lifts. The group-like structure of the resulting relations (every
//! element a partial bijection) is a checkable witness, not an assumption.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::bundle::BundleSample;
use crate::metric::FiniteMetricSpace;
use crate::{Error, Result};

/// A partial multi-valued relation between index sets of two samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub dom: usize,
    pub cod: usize,
    pub pairs: BTreeSet<(usize, usize)>,
}

impl Relation {
    pub fn new(dom: usize, cod: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Relation> {
        let pairs: BTreeSet<(usize, usize)> = pairs.into_iter().collect();
        if let Some((i, j)) = pairs.iter().find(|(i, j)| *i >= dom || *j >= cod) {
            return Err(Error::malformed(format!(
                "pair ({i}, {j}) outside a {dom}→{cod} relation"
            )));
        }
        Ok(Relation { dom, cod, pairs })
    }

    pub fn identity(n: usize) -> Relation {
        Relation {
            dom: n,
            cod: n,
            pairs: (0..n).map(|i| (i, i)).collect(),
        }
    }

    /// Indices with at least one image.
    pub fn domain_support(&self) -> BTreeSet<usize> {
        self.pairs.iter().map(|(i, _)| *i).collect()
    }

    pub fn image_support(&self) -> BTreeSet<usize> {
        self.pairs.iter().map(|(_, j)| *j).collect()
    }

    pub fn images_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.pairs
            .range((i, 0)..(i + 1, 0))
            .map(|(_, j)| *j)
    }

    /// Whether this relation is the identity restricted to `support`.
    pub fn is_identity_on(&self, support: &BTreeSet<usize>) -> bool {
        self.pairs.iter().all(|(i, j)| i == j && support.contains(i))
            && support.iter().all(|i| self.pairs.contains(&(*i, *i)))
    }
}

/// `g ∘ f`: first `f`, then `g`. Requires `codomain(f) = domain(g)`.
pub fn compose(f: &Relation, g: &Relation) -> Result<Relation> {
    if f.cod != g.dom {
        return Err(Error::malformed(format!(
            "cannot compose: codomain {} does not match domain {}",
            f.cod, g.dom
        )));
    }
    let mut pairs = BTreeSet::new();
    for (i, j) in &f.pairs {
        for k in g.images_of(*j) {
            pairs.insert((*i, k));
        }
    }
    Ok(Relation {
        dom: f.dom,
        cod: g.cod,
        pairs,
    })
}

/// The involution `f ↦ f⁻¹` (transpose of the pair set).
pub fn involution(f: &Relation) -> Relation {
    Relation {
        dom: f.cod,
        cod: f.dom,
        pairs: f.pairs.iter().map(|(i, j)| (*j, *i)).collect(),
    }
}

/// Whether `f` is a partial bijection: `f⁻¹∘f` is the identity on the
/// domain support and `f∘f⁻¹` the identity on the image support. Fails for
/// genuinely multi-valued or non-injective relations.
pub fn group_witness(f: &Relation) -> Result<bool> {
    let inv = involution(f);
    let back = compose(f, &inv)?;
    let forth = compose(&inv, f)?;
    Ok(back.is_identity_on(&f.domain_support()) && forth.is_identity_on(&f.image_support()))
}

/// A sampled submetry: a total sample, a base sample, and the projection on
/// indices (surjective by validation).
#[derive(Debug, Clone)]
pub struct SampledSubmetry {
    pub total: FiniteMetricSpace,
    pub base: FiniteMetricSpace,
    /// Total index → base index.
    pub proj: Vec<usize>,
    /// Optional fiber norms per total index, for norm-preservation checks.
    pub norms: Option<Vec<f64>>,
}

impl SampledSubmetry {
    pub fn new(
        total: FiniteMetricSpace,
        base: FiniteMetricSpace,
        proj: Vec<usize>,
        norms: Option<Vec<f64>>,
    ) -> Result<SampledSubmetry> {
        if proj.len() != total.labels.len() {
            return Err(Error::malformed(format!(
                "projection covers {} indices, total sample has {}",
                proj.len(),
                total.labels.len()
            )));
        }
        let nb = base.labels.len();
        if let Some(bad) = proj.iter().find(|b| **b >= nb) {
            return Err(Error::malformed(format!(
                "projection hits base index {bad}, base sample has {nb}"
            )));
        }
        let mut hit = vec![false; nb];
        for b in &proj {
            hit[*b] = true;
        }
        if !hit.iter().all(|h| *h) {
            return Err(Error::malformed("projection must be surjective onto the base sample"));
        }
        if let Some(norms) = &norms {
            if norms.len() != proj.len() {
                return Err(Error::malformed("norms must cover every total index"));
            }
        }
        Ok(SampledSubmetry {
            total,
            base,
            proj,
            norms,
        })
    }

    pub fn from_bundle(sample: &BundleSample) -> Result<SampledSubmetry> {
        SampledSubmetry::new(
            sample.space.clone(),
            sample.base_space.clone(),
            sample.proj.clone(),
            Some(sample.norms.clone()),
        )
    }

    /// Total indices lying over a base index.
    pub fn fiber_over(&self, b: usize) -> Vec<usize> {
        self.proj
            .iter()
            .enumerate()
            .filter(|(_, pb)| **pb == b)
            .map(|(i, _)| i)
            .collect()
    }

    fn path_length(dist: &[Vec<f64>], path: &[usize]) -> f64 {
        path.windows(2).map(|w| dist[w[0]][w[1]]).sum()
    }
}

/// How far the projection is from being 1-Lipschitz and ball-surjective on
/// sampled balls — the two halves of the submetry property.
#[derive(Debug, Clone, Serialize)]
pub struct SubmetryCheck {
    /// Largest `d_base(πx, πy) − d_total(x, y)` over sampled pairs
    /// (positive means the projection expanded a distance).
    pub max_expansion: f64,
    /// Largest one-sided Hausdorff gap of `π(B(x, r))` inside `B(πx, r)`,
    /// over the sampled centers and radii.
    pub max_ball_defect: f64,
    pub balls_checked: usize,
}

/// Spot-checks the submetry property on sampled balls: the projection must
/// not expand distances, and projected balls must fill base balls.
pub fn submetry_spot_check(
    sub: &SampledSubmetry,
    radii: &[f64],
    centers: usize,
    seed: u64,
) -> Result<SubmetryCheck> {
    use rand::Rng;
    use rand::SeedableRng;
    let n = sub.total.labels.len();
    if n == 0 {
        return Err(Error::domain("empty total sample"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut max_expansion = f64::NEG_INFINITY;
    for x in 0..n {
        for y in 0..n {
            let gap = sub.base.dist[sub.proj[x]][sub.proj[y]] - sub.total.dist[x][y];
            max_expansion = max_expansion.max(gap);
        }
    }
    let mut max_ball_defect = 0.0f64;
    let mut balls_checked = 0;
    for _ in 0..centers {
        let x = rng.gen_range(0..n);
        for &r in radii {
            if !(r > 0.0) {
                return Err(Error::domain(format!("ball radius must be positive, got {r}")));
            }
            balls_checked += 1;
            let bx = sub.proj[x];
            let projected: BTreeSet<usize> = (0..n)
                .filter(|y| sub.total.dist[x][*y] <= r)
                .map(|y| sub.proj[y])
                .collect();
            let target: Vec<usize> = (0..sub.base.labels.len())
                .filter(|b| sub.base.dist[bx][*b] <= r)
                .collect();
            // One-sided Hausdorff: every base point of the target ball must
            // be near some projected point.
            for b in &target {
                let best = projected
                    .iter()
                    .map(|p| sub.base.dist[*p][*b])
                    .fold(f64::INFINITY, f64::min);
                max_ball_defect = max_ball_defect.max(best);
            }
        }
    }
    Ok(SubmetryCheck {
        max_expansion,
        max_ball_defect,
        balls_checked,
    })
}

/// Whether a total-space index path is horizontal: its length matches the
/// length of its projection within `tol · (1 + length)`.
pub fn is_horizontal(sub: &SampledSubmetry, path: &[usize], tol: f64) -> Result<bool> {
    if path.iter().any(|i| *i >= sub.total.labels.len()) {
        return Err(Error::malformed("path index outside the total sample"));
    }
    if path.len() < 2 {
        return Ok(true);
    }
    let total_len = SampledSubmetry::path_length(&sub.total.dist, path);
    let projected: Vec<usize> = path.iter().map(|i| sub.proj[*i]).collect();
    let base_len = SampledSubmetry::path_length(&sub.base.dist, &projected);
    Ok((total_len - base_len).abs() <= tol * (1.0 + base_len))
}

/// Endpoints reached by near-horizontal lifts of a base path.
#[derive(Debug, Clone)]
pub struct TranslateResult {
    /// Total indices over the final base point, reachable within the slack.
    /// Empty means no lift stayed near-horizontal — a soft failure the
    /// caller can widen the tolerance or the sample against.
    pub endpoints: Vec<usize>,
    /// Lift length per endpoint (same order).
    pub lengths: Vec<f64>,
    pub base_length: f64,
}

const BEAM_WIDTH: usize = 64;

/// Set-valued parallel translation: beam search over lifts of `base_path`
/// starting at `start`, keeping paths whose total length stays within
/// `tol · (1 + base length)` of the base length.
pub fn parallel_translate_setvalued(
    sub: &SampledSubmetry,
    base_path: &[usize],
    start: usize,
    tol: f64,
) -> Result<TranslateResult> {
    if base_path.is_empty() {
        return Err(Error::domain("base path needs at least one point"));
    }
    if base_path.iter().any(|b| *b >= sub.base.labels.len()) {
        return Err(Error::malformed("base path index outside the base sample"));
    }
    if start >= sub.total.labels.len() {
        return Err(Error::malformed("start index outside the total sample"));
    }
    if sub.proj[start] != base_path[0] {
        return Err(Error::domain(
            "start point does not lie over the first base point",
        ));
    }
    let base_length = SampledSubmetry::path_length(&sub.base.dist, base_path);
    let slack = tol * (1.0 + base_length);
    // Beam of (total index, accumulated length), deduped by index keeping
    // the shortest accumulation.
    let mut beam: Vec<(usize, f64)> = vec![(start, 0.0)];
    for step in base_path.windows(2) {
        let allowed_so_far = |partial: f64| partial <= base_length + slack;
        let next_fiber = sub.fiber_over(step[1]);
        let mut next: Vec<(usize, f64)> = Vec::new();
        for (x, len) in &beam {
            for y in &next_fiber {
                let cand = len + sub.total.dist[*x][*y];
                if !allowed_so_far(cand) {
                    continue;
                }
                match next.iter_mut().find(|(i, _)| i == y) {
                    Some((_, best)) => {
                        if cand < *best {
                            *best = cand;
                        }
                    }
                    None => next.push((*y, cand)),
                }
            }
        }
        next.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        next.truncate(BEAM_WIDTH);
        beam = next;
        if beam.is_empty() {
            break;
        }
    }
    let mut endpoints = Vec::new();
    let mut lengths = Vec::new();
    for (x, len) in &beam {
        if *len <= base_length + slack {
            endpoints.push(*x);
            lengths.push(*len);
        }
    }
    Ok(TranslateResult {
        endpoints,
        lengths,
        base_length,
    })
}

/// The holonomy monoid sampled from a family of base loops: the relations
/// their set-valued translations induce on a fiber sample, closed under
/// composition and involution up to a cap.
#[derive(Debug, Clone)]
pub struct MonoidSample {
    /// One relation per input loop, in order.
    pub generators: Vec<Relation>,
    /// Closure elements (generators, identity, and products up to the cap).
    pub elements: Vec<Relation>,
    /// False when the cap stopped the closure early.
    pub closure_complete: bool,
    /// Every element passed the partial-bijection test.
    pub group_witness: bool,
    /// Description of the first element failing the witness.
    pub witness_counterexample: Option<String>,
}

const MONOID_CAP: usize = 256;

/// Builds the fiber relations of the given base loops and closes them into
/// a monoid sample. All loops must start and end at the base point of
/// `fiber` (the set of total indices over it).
pub fn holonomy_monoid_sample(
    sub: &SampledSubmetry,
    loops: &[Vec<usize>],
    fiber: &[usize],
    tol: f64,
) -> Result<MonoidSample> {
    if fiber.is_empty() {
        return Err(Error::domain("fiber sample is empty"));
    }
    let b0 = sub.proj[fiber[0]];
    if fiber.iter().any(|i| sub.proj[*i] != b0) {
        return Err(Error::malformed("fiber sample spans several base points"));
    }
    let n = fiber.len();
    let mut generators = Vec::with_capacity(loops.len());
    for (li, lp) in loops.iter().enumerate() {
        if lp.first() != Some(&b0) || lp.last() != Some(&b0) {
            return Err(Error::domain(format!(
                "loop {li} does not start and end at the fiber's base point"
            )));
        }
        let mut pairs = Vec::new();
        for (fi, x) in fiber.iter().enumerate() {
            let translated = parallel_translate_setvalued(sub, lp, *x, tol)?;
            for e in translated.endpoints {
                if let Some(fj) = fiber.iter().position(|y| *y == e) {
                    pairs.push((fi, fj));
                }
            }
        }
        generators.push(Relation::new(n, n, pairs)?);
    }

    let mut elements: Vec<Relation> = vec![Relation::identity(n)];
    for g in &generators {
        if !elements.contains(g) {
            elements.push(g.clone());
        }
    }
    let mut frontier: Vec<Relation> = elements.clone();
    let mut closure_complete = true;
    'closure: while !frontier.is_empty() {
        let mut fresh: Vec<Relation> = Vec::new();
        for f in &frontier {
            let mut candidates = vec![involution(f)];
            for e in &elements {
                candidates.push(compose(f, e)?);
                candidates.push(compose(e, f)?);
            }
            for cand in candidates {
                if !elements.contains(&cand) && !fresh.contains(&cand) {
                    fresh.push(cand);
                    if elements.len() + fresh.len() > MONOID_CAP {
                        closure_complete = false;
                        elements.extend(fresh);
                        break 'closure;
                    }
                }
            }
        }
        elements.extend(fresh.iter().cloned());
        frontier = fresh;
    }

    let mut witness_ok = true;
    let mut witness_counterexample = None;
    for (i, e) in elements.iter().enumerate() {
        if !group_witness(e)? {
            witness_ok = false;
            witness_counterexample = Some(format!(
                "element {i} ({} pairs) is not a partial bijection",
                e.pairs.len()
            ));
            break;
        }
    }
    Ok(MonoidSample {
        generators,
        elements,
        closure_complete,
        group_witness: witness_ok,
        witness_counterexample,
    })
}

/// Norm preservation along a relation: transport between fiber samples
/// should match norms within `tol`.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantNormReport {
    pub max_deviation: f64,
    pub pairs_checked: usize,
    pub ok: bool,
}

/// Checks `|‖x‖ − ‖y‖| ≤ tol` for every pair of a relation between total
/// indices (requires the submetry to carry norms).
pub fn constant_norm_check(
    sub: &SampledSubmetry,
    relation: &Relation,
    index_map: &[usize],
    tol: f64,
) -> Result<ConstantNormReport> {
    let norms = sub
        .norms
        .as_ref()
        .ok_or_else(|| Error::domain("submetry carries no norm data"))?;
    if index_map.iter().any(|i| *i >= norms.len()) {
        return Err(Error::malformed("index map leaves the total sample"));
    }
    if relation.dom != index_map.len() || relation.cod != index_map.len() {
        return Err(Error::malformed(
            "relation endpoints do not match the index map",
        ));
    }
    let mut max_deviation = 0.0f64;
    for (i, j) in &relation.pairs {
        let gap = (norms[index_map[*i]] - norms[index_map[*j]]).abs();
        max_deviation = max_deviation.max(gap);
    }
    Ok(ConstantNormReport {
        max_deviation,
        pairs_checked: relation.pairs.len(),
        ok: max_deviation <= tol,
    })
}
