//! Fast Gauss transform with a guaranteed per-entry error.
//!
//! Sources are grouped by farthest-point clustering. Each cluster carries a
//! truncated multivariate Taylor expansion of the Gaussian about its center,
//! evaluated by nested Horner on batches of targets.
//!
//! For a weight vector `q` and an absolute precision `delta`, cluster `c` is
//! given the error budget `delta * Q_c / Q`, where `Q = sum|q|` and `Q_c` is
//! the cluster's share. Target distances to the center are cut into buckets.
//! In each bucket the cluster is skipped (its whole contribution is below the
//! budget), evaluated through the expansion truncated at the smallest order
//! that meets the budget, or summed directly when that is cheaper. The error
//! estimate uses a `|q|`-weighted histogram of source distances to the center,
//! so it holds for every target, inside the source bounding box or not. When
//! the clustered path is predicted to cost more than the double loop, the
//! double loop is used.
//!
//! The kernel is `exp(-|x-y|^2 / epsilon^2)`.

mod bound;
mod cluster;
mod poly;

pub use bound::{required_order, truncation_error};
pub use poly::num_terms;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use bound::{ln_rect_bound, LnFactorial};

use crate::error::{check_len, check_positive, KrrError, Result};
use crate::kernel::{direct_sum, exp_neg, gauss_matvec_direct};
use crate::points::{sq_dist, PointSet};

/// Below this precision the rounding error of a double-precision sum dominates.
pub const PRECISION_FLOOR: f64 = 16.0 * f64::EPSILON;

// Approximate costs in nanoseconds, used only to pick between strategies.
const EXP_COST: f64 = 9.0;
const COEF_TERM_COST: f64 = 0.27;

const MASS_BINS: usize = 8;
const MAX_BUCKETS: usize = 96;
const BUCKET_WIDTH: f64 = 0.2;

#[inline]
fn pair_cost(d: usize) -> f64 {
    0.3 * d as f64 + EXP_COST
}

#[inline]
fn visit_cost(d: usize) -> f64 {
    0.5 * d as f64 + 1.0
}

#[inline]
fn expansion_cost(d: usize, p: usize) -> f64 {
    poly::term_cost() * num_terms(d, p) as f64 + EXP_COST
}

#[inline]
fn coefficient_cost(d: usize, p: usize) -> f64 {
    COEF_TERM_COST * num_terms(d, p) as f64 + EXP_COST
}

/// How [`FgtPlan::apply`] chooses its evaluation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ApplyPolicy {
    /// Clustered path unless the double loop is predicted to be cheaper.
    #[default]
    Auto,
    /// Always use the clustered path.
    Fast,
    /// Always use the double loop.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgtOptions {
    /// Largest truncation order `p`; terms of total degree `< p` are kept.
    pub max_order: usize,
    /// Cap on the number of monomials in one expansion.
    pub max_terms: usize,
    /// Cap on the number of clusters.
    pub max_clusters: usize,
    pub policy: ApplyPolicy,
}

impl Default for FgtOptions {
    fn default() -> Self {
        Self {
            max_order: 60,
            max_terms: 20_000,
            max_clusters: 1024,
            policy: ApplyPolicy::Auto,
        }
    }
}

/// Precomputed clustering of a source set for repeated Gauss transforms.
///
/// Immutable once built; `apply` only reads from it, so one plan can serve
/// concurrent callers.
#[derive(Debug, Clone)]
pub struct FgtPlan {
    sources: PointSet,
    epsilon: f64,
    delta: f64,
    opts: FgtOptions,
    /// Largest usable `p` given `max_order` and `max_terms`.
    p_cap: usize,
    ln_fact: LnFactorial,
    centers: Vec<f64>,
    /// Cluster radii in bandwidth units.
    radii: Vec<f64>,
    offsets: Vec<usize>,
    members: Vec<usize>,
    /// Member coordinates grouped by cluster.
    sorted: Vec<f64>,
    /// Member distances to their center in bandwidth units, grouped by cluster.
    member_a: Vec<f64>,
    planned_degrees: Vec<Option<usize>>,
}

/// What a target does with one cluster, by distance bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Visit {
    Skip,
    Expansion(usize),
    Direct,
}

#[derive(Debug, Clone)]
struct Schedule {
    width: f64,
    visits: Vec<Visit>,
    coef_order: usize,
}

impl Schedule {
    #[inline]
    fn visit(&self, b: f64) -> Visit {
        let j = (b / self.width) as usize;
        self.visits.get(j).copied().unwrap_or(Visit::Skip)
    }
}

/// Build an FGT plan with default options.
pub fn build_fgt_plan(sources: &PointSet, epsilon: f64, delta: f64) -> Result<FgtPlan> {
    FgtPlan::build(sources, epsilon, delta, FgtOptions::default())
}

impl FgtPlan {
    pub fn build(sources: &PointSet, epsilon: f64, delta: f64, opts: FgtOptions) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        check_positive("delta", delta)?;
        if delta < PRECISION_FLOOR {
            return Err(KrrError::PrecisionUnattainable {
                requested: delta,
                achievable: PRECISION_FLOOR,
            });
        }
        let d = sources.dim();
        let n = sources.len();
        let mut p_cap = 1;
        while p_cap < opts.max_order && num_terms(d, p_cap + 1) <= opts.max_terms {
            p_cap += 1;
        }
        let ln_fact = LnFactorial::new(p_cap + 1);
        let inv_h = 1.0 / epsilon;

        let (seq, cover) = cluster::gonzalez(sources, opts.max_clusters, 0.25 * epsilon);

        // Attainability for a unit weight on the finest clustering available.
        let finest = cover[cover.len() - 1] * inv_h;
        let cut_unit = (-delta.ln()).max(0.0).sqrt();
        if finest > 0.0 && required_order(finest, finest + cut_unit, delta, p_cap).is_none() {
            return Err(KrrError::PrecisionUnattainable {
                requested: delta,
                achievable: truncation_error(finest, finest + cut_unit, p_cap),
            });
        }

        let k = choose_cluster_count(sources, &seq, epsilon, delta, p_cap, &ln_fact);
        let centers_idx = &seq[..k];
        let assignment = cluster::assign(sources, centers_idx);

        let mut offsets = vec![0usize; k + 1];
        for &a in &assignment {
            offsets[a + 1] += 1;
        }
        for c in 0..k {
            offsets[c + 1] += offsets[c];
        }
        let mut fill = offsets.clone();
        let mut members = vec![0usize; n];
        for (i, &a) in assignment.iter().enumerate() {
            members[fill[a]] = i;
            fill[a] += 1;
        }
        let mut centers = Vec::with_capacity(k * d);
        for &ci in centers_idx {
            centers.extend_from_slice(sources.point(ci));
        }
        let mut sorted = Vec::with_capacity(n * d);
        let mut member_a = Vec::with_capacity(n);
        let mut radii = vec![0.0f64; k];
        for c in 0..k {
            let center = &centers[c * d..(c + 1) * d];
            for &i in &members[offsets[c]..offsets[c + 1]] {
                let p = sources.point(i);
                sorted.extend_from_slice(p);
                let a = sq_dist(p, center).sqrt() * inv_h;
                member_a.push(a);
                radii[c] = radii[c].max(a);
            }
        }

        let mut plan = Self {
            sources: sources.clone(),
            epsilon,
            delta,
            opts,
            p_cap,
            ln_fact,
            centers,
            radii,
            offsets,
            members,
            sorted,
            member_a,
            planned_degrees: Vec::new(),
        };
        plan.planned_degrees = plan
            .schedules(&vec![1.0; n], delta)
            .iter()
            .map(|s| match s.coef_order {
                0 if s.visits.contains(&Visit::Direct) => None,
                0 => Some(0),
                p => Some(p - 1),
            })
            .collect();
        Ok(plan)
    }

    pub fn sources(&self) -> &PointSet {
        &self.sources
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn precision(&self) -> f64 {
        self.delta
    }

    pub fn options(&self) -> &FgtOptions {
        &self.opts
    }

    pub fn num_clusters(&self) -> usize {
        self.radii.len()
    }

    /// Cluster radii in coordinate units.
    pub fn cluster_radii(&self) -> Vec<f64> {
        self.radii.iter().map(|r| r * self.epsilon).collect()
    }

    /// Members of cluster `c` as indices into the source set.
    pub fn cluster_members(&self, c: usize) -> &[usize] {
        &self.members[self.offsets[c]..self.offsets[c + 1]]
    }

    /// Highest polynomial degree each cluster expansion uses for unit weights
    /// at the plan's precision. `None` marks clusters that are only summed
    /// directly.
    pub fn expansion_degrees(&self) -> &[Option<usize>] {
        &self.planned_degrees
    }

    /// Gauss transform to `targets` within the plan's precision.
    pub fn apply(&self, targets: &PointSet, q: &[f64]) -> Result<Vec<f64>> {
        self.apply_with_precision(targets, q, self.delta)
    }

    /// Gauss transform with a per-call absolute precision.
    pub fn apply_with_precision(
        &self,
        targets: &PointSet,
        q: &[f64],
        delta: f64,
    ) -> Result<Vec<f64>> {
        check_len("target dimension", self.sources.dim(), targets.dim())?;
        check_len("weight vector", self.sources.len(), q.len())?;
        check_positive("delta", delta)?;
        if let Some(pos) = q.iter().position(|w| !w.is_finite()) {
            return Err(KrrError::InvalidParameter(format!(
                "non-finite weight at index {pos}"
            )));
        }
        if q.iter().all(|&w| w == 0.0) {
            return Ok(vec![0.0; targets.len()]);
        }
        if self.opts.policy == ApplyPolicy::Direct {
            return gauss_matvec_direct(&self.sources, targets, self.epsilon, q);
        }

        let schedules = self.schedules(q, delta);
        if self.opts.policy == ApplyPolicy::Auto {
            let fast = self.predicted_cost(targets, &schedules);
            let direct =
                (targets.len() * self.sources.len()) as f64 * pair_cost(self.sources.dim());
            if fast >= direct {
                return gauss_matvec_direct(&self.sources, targets, self.epsilon, q);
            }
        }
        Ok(self.apply_clustered(targets, q, &schedules))
    }

    /// Applies the plan to each column of `weights` within the plan's
    /// precision.
    pub fn apply_block(&self, targets: &PointSet, weights: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let deltas = vec![self.delta; weights.ncols()];
        self.apply_block_with_precision(targets, weights, &deltas)
    }

    /// Applies the plan to each column of `weights`, column `j` within
    /// absolute precision `deltas[j]`. Distances, evaluation schedules,
    /// Gaussian factors and direct kernel values are shared by all columns.
    pub fn apply_block_with_precision(
        &self,
        targets: &PointSet,
        weights: &DMatrix<f64>,
        deltas: &[f64],
    ) -> Result<DMatrix<f64>> {
        let n = self.sources.len();
        let l = weights.ncols();
        check_len("target dimension", self.sources.dim(), targets.dim())?;
        check_len("weight block rows", n, weights.nrows())?;
        check_len("precision per column", l, deltas.len())?;
        for &dl in deltas {
            check_positive("delta", dl)?;
        }
        if let Some(pos) = weights.iter().position(|w| !w.is_finite()) {
            return Err(KrrError::InvalidParameter(format!(
                "non-finite weight at entry {pos}"
            )));
        }
        let m = targets.len();
        if l == 0 || weights.iter().all(|&w| w == 0.0) {
            return Ok(DMatrix::zeros(m, l));
        }

        // Member-ordered weights, row-major by member.
        let mut q = vec![0.0; n * l];
        let mut scaled = vec![0.0f64; n];
        for (pos, &i) in self.members.iter().enumerate() {
            for j in 0..l {
                let w = weights[(i, j)];
                q[pos * l + j] = w;
                scaled[i] = scaled[i].max(w.abs() / deltas[j]);
            }
        }
        let d = self.sources.dim();
        if self.opts.policy != ApplyPolicy::Direct {
            // A unit precision on the scaled weights meets every column's
            // own precision.
            let schedules = self.schedules(&scaled, 1.0);
            let fast = self.opts.policy == ApplyPolicy::Fast
                || self.predicted_cost(targets, &schedules) < (m * n) as f64 * pair_cost(d);
            if fast {
                let out = self.apply_clustered_block(targets, &q, l, &schedules);
                return Ok(DMatrix::from_row_slice(m, l, &out));
            }
        }
        let inv_h2 = 1.0 / (self.epsilon * self.epsilon);
        let mut out = vec![0.0; m * l];
        for (t, y) in targets.iter().enumerate() {
            let row = &mut out[t * l..(t + 1) * l];
            for (pos, x) in self.sorted.chunks_exact(d).enumerate() {
                let kv = exp_neg(sq_dist(x, y) * inv_h2);
                for (o, w) in row.iter_mut().zip(&q[pos * l..(pos + 1) * l]) {
                    *o += kv * w;
                }
            }
        }
        Ok(DMatrix::from_row_slice(m, l, &out))
    }

    /// Transpose of the sources-to-`targets` kernel block applied to `w`
    /// (one weight per target point), through a transient plan on `targets`.
    pub fn apply_adjoint(&self, targets: &PointSet, w: &[f64]) -> Result<Vec<f64>> {
        check_len("target dimension", self.sources.dim(), targets.dim())?;
        check_len("adjoint weight vector", targets.len(), w.len())?;
        let swapped = FgtPlan::build(targets, self.epsilon, self.delta, self.opts)?;
        swapped.apply(&self.sources, w)
    }

    fn schedules(&self, q: &[f64], delta: f64) -> Vec<Schedule> {
        let total: f64 = q.iter().map(|w| w.abs()).sum();
        let d = self.sources.dim();
        (0..self.radii.len())
            .map(|c| {
                let range = self.offsets[c]..self.offsets[c + 1];
                let a_max = self.radii[c];
                let mut bins = [0.0f64; MASS_BINS];
                for pos in range.clone() {
                    let bin = if a_max > 0.0 {
                        let t = (self.member_a[pos] / a_max * MASS_BINS as f64).ceil() as usize;
                        t.clamp(1, MASS_BINS) - 1
                    } else {
                        0
                    };
                    bins[bin] += q[self.members[pos]].abs();
                }
                let hist: Vec<(f64, f64)> = bins
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m > 0.0)
                    .map(|(i, &m)| (a_max * (i + 1) as f64 / MASS_BINS as f64, m))
                    .collect();
                let mass: f64 = bins.iter().sum();
                let budget = delta * mass / total;
                schedule(
                    a_max,
                    &hist,
                    budget,
                    range.len(),
                    d,
                    self.p_cap,
                    &self.ln_fact,
                )
            })
            .collect()
    }

    /// Predicted cost of the clustered path, estimating the per-target work
    /// from an evenly spaced sample of targets.
    fn predicted_cost(&self, targets: &PointSet, schedules: &[Schedule]) -> f64 {
        let d = self.sources.dim();
        let inv_h = 1.0 / self.epsilon;
        let coefficients: f64 = schedules
            .iter()
            .enumerate()
            .filter(|(_, s)| s.coef_order > 0)
            .map(|(c, s)| {
                (self.offsets[c + 1] - self.offsets[c]) as f64 * coefficient_cost(d, s.coef_order)
            })
            .sum();
        let m = targets.len();
        let samples = m.min(64);
        let mut sampled = 0.0;
        for s in 0..samples {
            let y = targets.point(s * m / samples);
            for (c, sched) in schedules.iter().enumerate() {
                let size = self.offsets[c + 1] - self.offsets[c];
                let b = sq_dist(y, self.center(c)).sqrt() * inv_h;
                sampled += visit_cost(d) + visit_price(sched.visit(b), size, d);
            }
        }
        coefficients + m as f64 * sampled / samples.max(1) as f64
    }

    #[inline]
    fn center(&self, c: usize) -> &[f64] {
        let d = self.sources.dim();
        &self.centers[c * d..(c + 1) * d]
    }

    fn apply_clustered(&self, targets: &PointSet, q: &[f64], schedules: &[Schedule]) -> Vec<f64> {
        let d = self.sources.dim();
        let inv_h = 1.0 / self.epsilon;
        let inv_h2 = inv_h * inv_h;
        let mut out = vec![0.0; targets.len()];
        let mut scratch = vec![[0.0; poly::LANES]; d * self.p_cap];
        let mut coef = Vec::new();
        let mut groups: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.p_cap + 1];
        let mut lanes = vec![[0.0; poly::LANES]; d];

        for (c, sched) in schedules.iter().enumerate() {
            let range = self.offsets[c]..self.offsets[c + 1];
            let center = self.center(c);
            let stored = sched.coef_order;
            if stored > 0 {
                coef.clear();
                coef.resize(num_terms(d, stored), 0.0);
                let members = &self.members[range.clone()];
                for (chunk, start) in members
                    .chunks(poly::LANES)
                    .zip((range.start..).step_by(poly::LANES))
                {
                    let mut w = [0.0; poly::LANES];
                    for (l, &i) in chunk.iter().enumerate() {
                        let pos = start + l;
                        let a = self.member_a[pos];
                        w[l] = q[i] * exp_neg(a * a);
                        let x = &self.sorted[pos * d..(pos + 1) * d];
                        for k in 0..d {
                            lanes[k][l] = (x[k] - center[k]) * inv_h;
                        }
                    }
                    for lane in lanes.iter_mut() {
                        lane[chunk.len()..].fill(0.0);
                    }
                    poly::accumulate(&lanes, w, stored, &mut coef, &mut scratch);
                }
            }

            for g in &mut groups {
                g.clear();
            }
            for (t, y) in targets.iter().enumerate() {
                let d2 = sq_dist(y, center) * inv_h2;
                match sched.visit(d2.sqrt()) {
                    Visit::Skip => {}
                    Visit::Expansion(p) => groups[p].push((t, d2)),
                    Visit::Direct => {
                        let pts = self.sorted[range.start * d..range.end * d].chunks_exact(d);
                        let ws = self.members[range.clone()].iter().map(|&i| &q[i]);
                        out[t] += direct_sum(pts.zip(ws), y, inv_h2);
                    }
                }
            }

            for (p, group) in groups.iter().enumerate().take(stored + 1).skip(1) {
                for chunk in group.chunks(poly::LANES) {
                    for (l, &(t, _)) in chunk.iter().enumerate() {
                        let y = targets.point(t);
                        for k in 0..d {
                            lanes[k][l] = (y[k] - center[k]) * inv_h;
                        }
                    }
                    for lane in lanes.iter_mut() {
                        lane[chunk.len()..].fill(0.0);
                    }
                    let vals = poly::evaluate(&coef, d, stored, p, &lanes);
                    for (l, &(t, d2)) in chunk.iter().enumerate() {
                        out[t] += exp_neg(d2) * vals[l];
                    }
                }
            }
        }
        out
    }
}

impl FgtPlan {
    /// Block form of `apply_clustered`. `q` holds the weights in member order,
    /// `l` per member; the result is row-major, `l` per target.
    fn apply_clustered_block(
        &self,
        targets: &PointSet,
        q: &[f64],
        l: usize,
        schedules: &[Schedule],
    ) -> Vec<f64> {
        let d = self.sources.dim();
        let inv_h = 1.0 / self.epsilon;
        let inv_h2 = inv_h * inv_h;
        let mut out = vec![0.0; targets.len() * l];
        let mut scratch = vec![[0.0; poly::LANES]; d * self.p_cap];
        let mut coef = Vec::new();
        let mut groups: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.p_cap + 1];
        let mut lanes = vec![[0.0; poly::LANES]; d];

        for (c, sched) in schedules.iter().enumerate() {
            let range = self.offsets[c]..self.offsets[c + 1];
            let center = self.center(c);
            let stored = sched.coef_order;
            let terms = if stored > 0 { num_terms(d, stored) } else { 0 };
            if stored > 0 {
                coef.clear();
                coef.resize(terms * l, 0.0);
                for start in range.clone().step_by(poly::LANES) {
                    let len = poly::LANES.min(range.end - start);
                    let mut g = [0.0; poly::LANES];
                    for k in 0..len {
                        let pos = start + k;
                        let a = self.member_a[pos];
                        g[k] = exp_neg(a * a);
                        let x = &self.sorted[pos * d..(pos + 1) * d];
                        for (lane, (xk, ck)) in lanes.iter_mut().zip(x.iter().zip(center)) {
                            lane[k] = (xk - ck) * inv_h;
                        }
                    }
                    for lane in lanes.iter_mut() {
                        lane[len..].fill(0.0);
                    }
                    for (j, cj) in coef.chunks_exact_mut(terms).enumerate() {
                        let mut w = [0.0; poly::LANES];
                        for k in 0..len {
                            w[k] = q[(start + k) * l + j] * g[k];
                        }
                        if w.iter().any(|&v| v != 0.0) {
                            poly::accumulate(&lanes, w, stored, cj, &mut scratch);
                        }
                    }
                }
            }

            for g in &mut groups {
                g.clear();
            }
            for (t, y) in targets.iter().enumerate() {
                let d2 = sq_dist(y, center) * inv_h2;
                match sched.visit(d2.sqrt()) {
                    Visit::Skip => {}
                    Visit::Expansion(p) => groups[p].push((t, d2)),
                    Visit::Direct => {
                        let row = &mut out[t * l..(t + 1) * l];
                        for pos in range.clone() {
                            let x = &self.sorted[pos * d..(pos + 1) * d];
                            let kv = exp_neg(sq_dist(x, y) * inv_h2);
                            for (o, w) in row.iter_mut().zip(&q[pos * l..(pos + 1) * l]) {
                                *o += kv * w;
                            }
                        }
                    }
                }
            }

            for (p, group) in groups.iter().enumerate().take(stored + 1).skip(1) {
                for chunk in group.chunks(poly::LANES) {
                    let mut g = [0.0; poly::LANES];
                    for (k, &(t, d2)) in chunk.iter().enumerate() {
                        let y = targets.point(t);
                        for (lane, (yk, ck)) in lanes.iter_mut().zip(y.iter().zip(center)) {
                            lane[k] = (yk - ck) * inv_h;
                        }
                        g[k] = exp_neg(d2);
                    }
                    for lane in lanes.iter_mut() {
                        lane[chunk.len()..].fill(0.0);
                    }
                    for (j, cj) in coef.chunks_exact(terms).enumerate() {
                        let vals = poly::evaluate(cj, d, stored, p, &lanes);
                        for (k, &(t, _)) in chunk.iter().enumerate() {
                            out[t * l + j] += g[k] * vals[k];
                        }
                    }
                }
            }
        }
        out
    }
}

#[inline]
fn visit_price(v: Visit, size: usize, d: usize) -> f64 {
    match v {
        Visit::Skip => 0.0,
        Visit::Expansion(p) => expansion_cost(d, p),
        Visit::Direct => size as f64 * pair_cost(d),
    }
}

/// Per-bucket evaluation plan for one cluster.
///
/// `hist` holds `(a_upper, mass)` pairs: the total `|q|` of members at
/// distance at most `a_upper` from the center (bandwidth units).
fn schedule(
    a_max: f64,
    hist: &[(f64, f64)],
    budget: f64,
    size: usize,
    d: usize,
    p_cap: usize,
    lf: &LnFactorial,
) -> Schedule {
    let direct_price = size as f64 * pair_cost(d);
    let mass: f64 = hist.iter().map(|(_, m)| m).sum();
    let reach = a_max + (mass / budget).ln().max(0.0).sqrt();
    let width = BUCKET_WIDTH.max(reach / (MAX_BUCKETS - 1) as f64);
    let err = |b_lo: f64, b_hi: f64, p: usize| -> f64 {
        hist.iter()
            .map(|&(a, m)| m * ln_rect_bound(a, b_lo, b_hi, p, lf).exp())
            .sum()
    };
    let mut visits = Vec::new();
    let mut coef_order = 0;
    let mut last_p = 1;
    loop {
        let b_lo = visits.len() as f64 * width;
        let b_hi = b_lo + width;
        if err(b_lo, b_hi, 0) <= budget {
            if b_lo >= a_max {
                break;
            }
            visits.push(Visit::Skip);
            continue;
        }
        let visit = if err(b_lo, b_hi, p_cap) > budget {
            Visit::Direct
        } else {
            // Orders change slowly between neighbouring buckets, so search
            // from the previous one. Any order meeting the budget is valid.
            let mut p = last_p.clamp(1, p_cap);
            if err(b_lo, b_hi, p) <= budget {
                while p > 1 && err(b_lo, b_hi, p - 1) <= budget {
                    p -= 1;
                }
            } else {
                while err(b_lo, b_hi, p) > budget {
                    p += 1;
                }
            }
            last_p = p;
            if expansion_cost(d, p) < direct_price {
                coef_order = coef_order.max(p);
                Visit::Expansion(p)
            } else {
                Visit::Direct
            }
        };
        visits.push(visit);
    }
    Schedule {
        width,
        visits,
        coef_order,
    }
}

/// Picks the prefix length of the farthest-point sequence that minimizes the
/// predicted cost of a self-application with unit weights. Candidates are
/// powers of two and the full sequence; each is scored on its actual
/// clustering, built incrementally along the sequence.
fn choose_cluster_count(
    x: &PointSet,
    seq: &[usize],
    epsilon: f64,
    delta: f64,
    p_cap: usize,
    lf: &LnFactorial,
) -> usize {
    let n = x.len();
    let d = x.dim();
    let kmax = seq.len();
    let inv_h = 1.0 / epsilon;
    let samples = n.min(64);
    let sample_pts: Vec<&[f64]> = (0..samples).map(|s| x.point(s * n / samples)).collect();

    let mut owner = vec![0usize; n];
    let mut nearest: Vec<f64> = x.iter().map(|p| sq_dist(p, x.point(seq[0]))).collect();
    let mut best = (kmax, f64::INFINITY);
    let mut next_candidate = 1;
    for k in 1..=kmax {
        if k > 1 {
            let c = x.point(seq[k - 1]);
            for (i, p) in x.iter().enumerate() {
                let d2 = sq_dist(p, c);
                if d2 < nearest[i] {
                    nearest[i] = d2;
                    owner[i] = k - 1;
                }
            }
        }
        if k != next_candidate && k != kmax {
            continue;
        }
        next_candidate *= 2;

        let mut radii = vec![0.0f64; k];
        let mut sizes = vec![0usize; k];
        for i in 0..n {
            let c = owner[i];
            radii[c] = radii[c].max(nearest[i].sqrt() * inv_h);
            sizes[c] += 1;
        }
        let mut bins = vec![[0.0f64; MASS_BINS]; k];
        for i in 0..n {
            let c = owner[i];
            let bin = if radii[c] > 0.0 {
                let t = (nearest[i].sqrt() * inv_h / radii[c] * MASS_BINS as f64).ceil() as usize;
                t.clamp(1, MASS_BINS) - 1
            } else {
                0
            };
            bins[c][bin] += 1.0;
        }
        let mut cost = 0.0;
        let mut per_target = 0.0;
        for c in 0..k {
            let a_max = radii[c];
            let hist: Vec<(f64, f64)> = bins[c]
                .iter()
                .enumerate()
                .filter(|(_, &m)| m > 0.0)
                .map(|(j, &m)| (a_max * (j + 1) as f64 / MASS_BINS as f64, m))
                .collect();
            let budget = delta * sizes[c] as f64 / n as f64;
            let sched = schedule(a_max, &hist, budget, sizes[c], d, p_cap, lf);
            if sched.coef_order > 0 {
                cost += sizes[c] as f64 * coefficient_cost(d, sched.coef_order);
            }
            let center = x.point(seq[c]);
            for y in &sample_pts {
                let b = sq_dist(y, center).sqrt() * inv_h;
                per_target += visit_cost(d) + visit_price(sched.visit(b), sizes[c], d);
            }
        }
        cost += n as f64 * per_target / samples as f64;
        if cost < best.1 {
            best = (k, cost);
        }
    }
    best.0
}
