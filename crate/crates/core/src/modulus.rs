//! Combinatorial p-modulus of curve families on approximation graphs.
//!
//! A curve is a simple path in the adjacency graph; its ρ-length counts every
//! cell it meets once. Simple paths suffice: revisiting a cell never changes
//! the set of cells met, and a walk contains a simple path between its ends.
//!
//! [`solve_modulus`] runs constraint generation. The restricted program
//! `min Σρ^p s.t. L_ρ(γ) ≥ 1, γ ∈ Γ'` is solved through its dual
//! `max Σλ_γ − (p−1) Σ_v (s_v/p)^{p/(p−1)}`, `s_v = Σ_{γ∋v} λ_γ`, by cyclic
//! coordinate ascent, with `ρ_v = (s_v/p)^{1/(p−1)}`. A vertex-weighted
//! Dijkstra search supplies the most violated curve of the full family.

use crate::approx::{ApproxError, ApproxGraph, Corner, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const MAX_OUTER_ITERATIONS: usize = 100_000;
pub const MAX_INNER_SWEEPS: usize = 200_000;
/// Updates are skipped when the violation is below this fraction of the
/// sweep target.
const SKIP_FRACTION: f64 = 0.3;
/// Final restricted-solve accuracy as a fraction of `tol`.
const FINAL_INNER_FRACTION: f64 = 0.5;
/// Earlier rounds solve to this fraction of the current length deficit.
const ADAPTIVE_INNER_FRACTION: f64 = 0.5;
pub const BRUTE_FORCE_MAX_CELLS: usize = 12;
pub const BRUTE_FORCE_MAX_ITERATIONS: usize = 1_000_000;
pub const BRUTE_FORCE_GAP: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ModulusError {
    #[error("exponent p must be > 1, got {0}")]
    BadExponent(f64),
    #[error("tolerance must lie in (0, 1e-3], got {0}")]
    BadTolerance(f64),
    #[error("cell {cell} is not in the graph ({len} cells)")]
    UnknownCell { cell: usize, len: usize },
    #[error("curve {index} is invalid: {reason}")]
    InvalidCurve { index: usize, reason: String },
    #[error("endpoint set {0} is empty")]
    EmptyEndpoints(&'static str),
    #[error("no path joins the endpoint sets")]
    Disconnected,
    #[error("brute force is limited to {max} cells, graph has {cells}")]
    TooLarge { cells: usize, max: usize },
    #[error("no convergence after {iterations} iterations (bounds [{lower}, {upper}])")]
    NoConvergence {
        iterations: usize,
        lower: f64,
        upper: f64,
    },
    #[error(transparent)]
    Graph(#[from] ApproxError),
}

/// Nonnegative density on the cells of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityFn {
    values: Vec<f64>,
}

impl DensityFn {
    pub fn new(values: Vec<f64>) -> Result<Self, ModulusError> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(ModulusError::InvalidCurve {
                index: i,
                reason: format!("density value {v} is not finite and nonnegative"),
            });
        }
        Ok(Self { values })
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            values: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Cells with value above `threshold`, as `(id, value)` pairs.
    pub fn sparse(&self, threshold: f64) -> Vec<(usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > threshold)
            .map(|(i, v)| (i, *v))
            .collect()
    }
}

/// Family of curves in an approximation graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum CurveFamilySpec {
    /// Listed vertex paths.
    Explicit { curves: Vec<Vec<usize>> },
    /// Every path from a cell of `a` to a cell of `b`.
    Connector { a: Vec<usize>, b: Vec<usize> },
    /// Union of families.
    Union { parts: Vec<CurveFamilySpec> },
}

impl CurveFamilySpec {
    pub fn connector(a: Vec<usize>, b: Vec<usize>) -> Self {
        CurveFamilySpec::Connector { a, b }
    }

    pub fn explicit(curves: Vec<Vec<usize>>) -> Self {
        CurveFamilySpec::Explicit { curves }
    }

    pub fn union(parts: Vec<CurveFamilySpec>) -> Self {
        CurveFamilySpec::Union { parts }
    }

    /// Checks ids, path adjacency and nonempty endpoint sets.
    pub fn validate(&self, graph: &ApproxGraph) -> Result<(), ModulusError> {
        let n = graph.len();
        let check = |c: usize| {
            if c < n {
                Ok(())
            } else {
                Err(ModulusError::UnknownCell { cell: c, len: n })
            }
        };
        match self {
            CurveFamilySpec::Explicit { curves } => {
                for (index, curve) in curves.iter().enumerate() {
                    if curve.is_empty() {
                        return Err(ModulusError::InvalidCurve {
                            index,
                            reason: "empty curve".into(),
                        });
                    }
                    for &c in curve {
                        check(c)?;
                    }
                    for w in curve.windows(2) {
                        if w[0] != w[1] && !graph.are_adjacent(w[0], w[1]) {
                            return Err(ModulusError::InvalidCurve {
                                index,
                                reason: format!("cells {} and {} are not adjacent", w[0], w[1]),
                            });
                        }
                    }
                }
            }
            CurveFamilySpec::Connector { a, b } => {
                if a.is_empty() {
                    return Err(ModulusError::EmptyEndpoints("A"));
                }
                if b.is_empty() {
                    return Err(ModulusError::EmptyEndpoints("B"));
                }
                for &c in a.iter().chain(b) {
                    check(c)?;
                }
            }
            CurveFamilySpec::Union { parts } => {
                for part in parts {
                    part.validate(graph)?;
                }
            }
        }
        Ok(())
    }
}

/// Sum of ρ over the distinct cells met by `curve`.
pub fn rho_length(rho: &DensityFn, curve: &[usize]) -> Result<f64, ModulusError> {
    if curve.is_empty() {
        return Err(ModulusError::InvalidCurve {
            index: 0,
            reason: "empty curve".into(),
        });
    }
    let mut cells = curve.to_vec();
    cells.sort_unstable();
    cells.dedup();
    let mut total = 0.0;
    for c in cells {
        if c >= rho.len() {
            return Err(ModulusError::UnknownCell {
                cell: c,
                len: rho.len(),
            });
        }
        total += rho.get(c);
    }
    Ok(total)
}

/// `Σ_v ρ(v)^p`.
pub fn p_mass(rho: &DensityFn, p: f64) -> Result<f64, ModulusError> {
    if !p.is_finite() || p <= 1.0 {
        return Err(ModulusError::BadExponent(p));
    }
    Ok(rho.values.iter().map(|v| v.powf(p)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, vertex)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimal ρ-length path from `a` to `b`; both endpoints are counted.
///
/// Ties go to the smaller vertex id, both when popping the search frontier
/// and when two predecessors give the same length.
pub fn shortest_curve(
    graph: &ApproxGraph,
    rho: &DensityFn,
    a: &[usize],
    b: &[usize],
) -> Result<(Vec<usize>, f64), ModulusError> {
    let n = graph.len();
    if a.is_empty() {
        return Err(ModulusError::EmptyEndpoints("A"));
    }
    if b.is_empty() {
        return Err(ModulusError::EmptyEndpoints("B"));
    }
    if rho.len() != n {
        return Err(ModulusError::UnknownCell {
            cell: rho.len().min(n),
            len: n,
        });
    }
    let mut target = vec![false; n];
    for &c in b {
        if c >= n {
            return Err(ModulusError::UnknownCell { cell: c, len: n });
        }
        target[c] = true;
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![usize::MAX; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &s in a {
        if s >= n {
            return Err(ModulusError::UnknownCell { cell: s, len: n });
        }
        if rho.get(s) < dist[s] {
            dist[s] = rho.get(s);
            heap.push(HeapEntry {
                dist: dist[s],
                vertex: s,
            });
        }
    }
    while let Some(HeapEntry { dist: d, vertex: u }) = heap.pop() {
        if done[u] || d > dist[u] {
            continue;
        }
        done[u] = true;
        if target[u] {
            let mut path = vec![u];
            let mut v = u;
            while pred[v] != usize::MAX {
                v = pred[v];
                path.push(v);
            }
            path.reverse();
            return Ok((path, d));
        }
        for &w in graph.neighbors(u) {
            if done[w] {
                continue;
            }
            let nd = d + rho.get(w);
            if nd < dist[w] || (nd == dist[w] && pred[w] != usize::MAX && u < pred[w]) {
                let improved = nd < dist[w];
                dist[w] = nd;
                pred[w] = u;
                if improved {
                    heap.push(HeapEntry { dist: nd, vertex: w });
                }
            }
        }
    }
    Err(ModulusError::Disconnected)
}

/// Shortest curve of a family, or `None` when the family is empty.
fn family_shortest(
    graph: &ApproxGraph,
    rho: &DensityFn,
    family: &CurveFamilySpec,
) -> Result<Option<(Vec<usize>, f64)>, ModulusError> {
    match family {
        CurveFamilySpec::Explicit { curves } => {
            let mut best: Option<(Vec<usize>, f64)> = None;
            for curve in curves {
                let len = rho_length(rho, curve)?;
                if best.as_ref().is_none_or(|(_, l)| len < *l) {
                    best = Some((curve.clone(), len));
                }
            }
            Ok(best)
        }
        CurveFamilySpec::Connector { a, b } => match shortest_curve(graph, rho, a, b) {
            Ok(found) => Ok(Some(found)),
            Err(ModulusError::Disconnected) => Ok(None),
            Err(e) => Err(e),
        },
        CurveFamilySpec::Union { parts } => {
            let mut best: Option<(Vec<usize>, f64)> = None;
            for part in parts {
                if let Some((c, l)) = family_shortest(graph, rho, part)? {
                    if best.as_ref().is_none_or(|(_, bl)| l < *bl) {
                        best = Some((c, l));
                    }
                }
            }
            Ok(best)
        }
    }
}

/// Dijkstra tree from `sources`; cells of `stop` are reached but not
/// expanded, so every tree path into them is a minimal curve.
struct SearchTree {
    dist: Vec<f64>,
    pred: Vec<usize>,
    /// Reached `stop` cells in order of distance.
    reached: Vec<usize>,
}

const ROOT: usize = usize::MAX - 1;

impl SearchTree {
    fn grow(graph: &ApproxGraph, rho: &DensityFn, sources: &[usize], stop: &[usize]) -> Self {
        let n = graph.len();
        let mut target = vec![false; n];
        for &c in stop {
            target[c] = true;
        }
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![usize::MAX; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            if rho.get(s) < dist[s] {
                dist[s] = rho.get(s);
                pred[s] = ROOT;
                heap.push(HeapEntry {
                    dist: dist[s],
                    vertex: s,
                });
            }
        }
        let mut reached = Vec::new();
        while let Some(HeapEntry { dist: d, vertex: u }) = heap.pop() {
            if done[u] || d > dist[u] {
                continue;
            }
            done[u] = true;
            if target[u] {
                reached.push(u);
                continue;
            }
            for &w in graph.neighbors(u) {
                if done[w] {
                    continue;
                }
                let nd = d + rho.get(w);
                if nd < dist[w] || (nd == dist[w] && pred[w] < ROOT && u < pred[w]) {
                    let improved = nd < dist[w];
                    dist[w] = nd;
                    pred[w] = u;
                    if improved {
                        heap.push(HeapEntry { dist: nd, vertex: w });
                    }
                }
            }
        }
        Self {
            dist,
            pred,
            reached,
        }
    }

    fn path_to(&self, t: usize) -> Vec<usize> {
        let mut path = vec![t];
        let mut v = t;
        while self.pred[v] < ROOT {
            v = self.pred[v];
            path.push(v);
        }
        path.reverse();
        path
    }
}

/// Separation oracle: returns the shortest ρ-length over the family and
/// pushes every curve of the search trees shorter than `threshold`. For a
/// connector this is one shortest path per reached target cell, with target
/// cells not expanded so each path is minimal.
fn violated_curves(
    graph: &ApproxGraph,
    rho: &DensityFn,
    family: &CurveFamilySpec,
    threshold: f64,
    out: &mut Vec<Vec<usize>>,
) -> Result<Option<f64>, ModulusError> {
    match family {
        CurveFamilySpec::Explicit { curves } => {
            let mut best: Option<f64> = None;
            for curve in curves {
                let len = rho_length(rho, curve)?;
                if len < threshold {
                    out.push(curve.clone());
                }
                best = Some(best.map_or(len, |b: f64| b.min(len)));
            }
            Ok(best)
        }
        CurveFamilySpec::Connector { a, b } => {
            let forward = SearchTree::grow(graph, rho, a, b);
            let Some(&first) = forward.reached.first() else {
                return Ok(None);
            };
            let best = forward.dist[first];
            if best >= threshold {
                return Ok(Some(best));
            }
            for &t in &forward.reached {
                if forward.dist[t] >= threshold {
                    break;
                }
                out.push(forward.path_to(t));
            }
            Ok(Some(best))
        }
        CurveFamilySpec::Union { parts } => {
            let mut best: Option<f64> = None;
            for part in parts {
                if let Some(len) = violated_curves(graph, rho, part, threshold, out)? {
                    best = Some(best.map_or(len, |b: f64| b.min(len)));
                }
            }
            Ok(best)
        }
    }
}

/// Output of [`solve_modulus`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModulusResult {
    pub p: f64,
    pub tol: f64,
    /// `M_p(ρ*)`; ρ* is admissible for the whole family.
    pub value: f64,
    pub rho_star: DensityFn,
    pub active_curves: Vec<Vec<usize>>,
    /// Multipliers aligned with `active_curves`.
    pub duals: Vec<f64>,
    /// Constraint-generation rounds.
    pub iterations: usize,
    /// Coordinate-ascent sweeps summed over all rounds.
    pub sweeps: usize,
    /// Largest restricted-program violation at the last round.
    pub max_violation: f64,
    /// Dual objective: a lower bound for the modulus.
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Shortest ρ-length over the full family before normalization.
    pub min_length: f64,
    pub empty_family: bool,
}

impl ModulusResult {
    fn empty(p: f64, tol: f64, n: usize) -> Self {
        Self {
            p,
            tol,
            value: 0.0,
            rho_star: DensityFn::constant(n, 0.0),
            active_curves: Vec::new(),
            duals: Vec::new(),
            iterations: 0,
            sweeps: 0,
            max_violation: 0.0,
            lower_bound: 0.0,
            upper_bound: 0.0,
            min_length: f64::INFINITY,
            empty_family: true,
        }
    }

    /// Largest `|p ρ*(v)^{p−1} − Σ_{γ∋v} dual(γ)|` over cells with ρ* > tol,
    /// relative to `max(1, Σ dual)`.
    pub fn kkt_residual(&self) -> f64 {
        let n = self.rho_star.len();
        let mut s = vec![0.0; n];
        for (curve, &l) in self.active_curves.iter().zip(&self.duals) {
            for &v in &distinct(curve) {
                s[v] += l;
            }
        }
        let mut worst: f64 = 0.0;
        for (v, &sv) in s.iter().enumerate() {
            let r = self.rho_star.get(v);
            if r > self.tol {
                let lhs = self.p * r.powf(self.p - 1.0);
                worst = worst.max((lhs - sv).abs() / sv.max(1.0));
            }
        }
        worst
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "p": self.p,
            "value": self.value,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "iterations": self.iterations,
            "sweeps": self.sweeps,
            "max_violation": self.max_violation,
            "active_curves": self.active_curves.len(),
            "empty_family": self.empty_family,
            "rho": self.rho_star.sparse(self.tol),
        })
    }
}

fn distinct(curve: &[usize]) -> Vec<usize> {
    let mut c = curve.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// `x ↦ x^r` with fast paths for the exponents of p = 2, 3 and 3/2.
#[derive(Debug, Clone, Copy)]
enum Power {
    One,
    Half,
    Two,
    General(f64),
}

impl Power {
    fn new(r: f64) -> Self {
        if r == 1.0 {
            Power::One
        } else if r == 0.5 {
            Power::Half
        } else if r == 2.0 {
            Power::Two
        } else {
            Power::General(r)
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Power::One => x,
            Power::Half => x.sqrt(),
            Power::Two => x * x,
            Power::General(r) => x.powf(r),
        }
    }
}

/// Restricted dual state for coordinate ascent.
struct DualState {
    p: f64,
    r: f64,
    curves: Vec<Vec<usize>>,
    lambda: Vec<f64>,
    s: Vec<f64>,
    rho: Vec<f64>,
    scratch: Vec<f64>,
    power: Power,
}

impl DualState {
    fn new(n: usize, p: f64) -> Self {
        Self {
            p,
            r: 1.0 / (p - 1.0),
            curves: Vec::new(),
            lambda: Vec::new(),
            s: vec![0.0; n],
            rho: vec![0.0; n],
            scratch: Vec::new(),
            power: Power::new(1.0 / (p - 1.0)),
        }
    }

    fn rho_of(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            self.power.apply(s / self.p)
        }
    }

    fn length(&self, i: usize) -> f64 {
        self.curves[i].iter().map(|&v| self.rho[v]).sum()
    }

    /// Resets `λ_i` so that `L_ρ(γ_i) = 1`, or to 0 if the curve is long
    /// enough without it.
    fn update(&mut self, i: usize, skip_below: f64) -> f64 {
        let old = self.lambda[i];
        let length = self.length(i);
        let violation = if old > 0.0 {
            (length - 1.0).abs()
        } else {
            (1.0 - length).max(0.0)
        };
        if violation <= skip_below {
            return violation;
        }
        let mut base = std::mem::take(&mut self.scratch);
        base.clear();
        base.extend(self.curves[i].iter().map(|&v| (self.s[v] - old).max(0.0)));
        let (p, r, power) = (self.p, self.r, self.power);
        let eval = |t: f64| -> (f64, f64) {
            let mut f = 0.0;
            let mut df = 0.0;
            for &b in &base {
                let x = b + t;
                if x > 0.0 {
                    let y = power.apply(x / p);
                    f += y;
                    df += r * y / x;
                }
            }
            (f, df)
        };
        let t = if eval(0.0).0 >= 1.0 {
            0.0
        } else {
            // Safeguarded Newton on the increasing map t ↦ L_ρ(γ), warm
            // started at the previous multiplier.
            let len = base.len() as f64;
            let mut lo = 0.0;
            let mut hi = p * len.powf(1.0 - p);
            let mut t = if old > lo && old < hi { old } else { 0.5 * hi };
            for _ in 0..200 {
                let (f, df) = eval(t);
                let g = f - 1.0;
                if g.abs() <= 1e-15 {
                    break;
                }
                if g < 0.0 {
                    lo = t;
                } else {
                    hi = t;
                }
                let newton = if df > 0.0 { t - g / df } else { f64::NAN };
                let next = if newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
                let done = (next - t).abs() <= 1e-16 * t || hi - lo <= 1e-16 * hi;
                t = next;
                if done {
                    break;
                }
            }
            t
        };
        self.lambda[i] = t;
        if t != old {
            for (k, &b) in base.iter().enumerate() {
                let v = self.curves[i][k];
                self.s[v] = b + t;
                self.rho[v] = self.rho_of(b + t);
            }
        }
        self.scratch = base;
        violation
    }

    fn dual_objective(&self) -> f64 {
        let q = self.p / (self.p - 1.0);
        let sum_lambda: f64 = self.lambda.iter().sum();
        let penalty: f64 = self
            .s
            .iter()
            .filter(|s| **s > 0.0)
            .map(|s| (s / self.p).powf(q))
            .sum();
        sum_lambda - (self.p - 1.0) * penalty
    }

    /// Recomputes `s` and `ρ` from scratch to shed accumulated rounding.
    fn refresh(&mut self) {
        self.s.iter_mut().for_each(|x| *x = 0.0);
        for (curve, &l) in self.curves.iter().zip(&self.lambda) {
            for &v in curve {
                self.s[v] += l;
            }
        }
        for v in 0..self.s.len() {
            self.rho[v] = self.rho_of(self.s[v]);
        }
    }

    /// Cyclic sweeps until one pass sees every violation below `target`.
    /// Violations are measured just before each update.
    fn sweep_until(&mut self, target: f64, budget: &mut usize) -> Result<f64, usize> {
        let skip = target * SKIP_FRACTION;
        loop {
            let mut worst: f64 = 0.0;
            for i in 0..self.curves.len() {
                worst = worst.max(self.update(i, skip));
            }
            *budget += 1;
            if budget.is_multiple_of(64) {
                self.refresh();
            }
            if worst < target {
                return Ok(worst);
            }
            if *budget >= MAX_INNER_SWEEPS {
                return Err(*budget);
            }
        }
    }
}

/// Combinatorial p-modulus of `family` on `graph` to relative accuracy about
/// `p·tol`.
pub fn solve_modulus(
    graph: &ApproxGraph,
    family: &CurveFamilySpec,
    p: f64,
    tol: f64,
) -> Result<ModulusResult, ModulusError> {
    if !p.is_finite() || p <= 1.0 {
        return Err(ModulusError::BadExponent(p));
    }
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(ModulusError::BadTolerance(tol));
    }
    family.validate(graph)?;
    let n = graph.len();
    let ones = DensityFn::constant(n, 1.0);
    let Some((seed, _)) = family_shortest(graph, &ones, family)? else {
        return Ok(ModulusResult::empty(p, tol, n));
    };
    let mut state = DualState::new(n, p);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let seed_set = distinct(&seed);
    seen.insert(seed_set.clone());
    state.curves.push(seed_set);
    state.lambda.push(0.0);
    let mut paths = vec![seed];
    let mut sweeps = 0usize;
    let inner_target = tol * FINAL_INNER_FRACTION;
    let mut batch = Vec::new();
    // Early rounds only need a rough restricted solution; the final round is
    // always solved to `inner_target`.
    let mut target = 0.1f64.max(inner_target);
    for iteration in 1..=MAX_OUTER_ITERATIONS {
        let violation = match state.sweep_until(target, &mut sweeps) {
            Ok(v) => v,
            Err(iterations) => {
                let lower = state.dual_objective();
                return Err(ModulusError::NoConvergence {
                    iterations,
                    lower,
                    upper: f64::INFINITY,
                });
            }
        };
        let rho = DensityFn {
            values: state.rho.clone(),
        };
        batch.clear();
        let len = violated_curves(graph, &rho, family, 1.0 - tol, &mut batch)?
            .expect("nonempty family stays nonempty");
        if len >= 1.0 - tol && target > inner_target {
            target = inner_target;
            continue;
        }
        if len >= 1.0 - tol || iteration == MAX_OUTER_ITERATIONS {
            state.refresh();
            let rho_raw = DensityFn {
                values: state.rho.clone(),
            };
            let (_, min_length) = family_shortest(graph, &rho_raw, family)?
                .expect("nonempty family stays nonempty");
            if min_length.is_nan() || min_length <= 0.0 {
                return Err(ModulusError::NoConvergence {
                    iterations: iteration,
                    lower: state.dual_objective(),
                    upper: f64::INFINITY,
                });
            }
            let scaled = DensityFn {
                values: rho_raw.values.iter().map(|v| v / min_length).collect(),
            };
            let value = p_mass(&scaled, p)?;
            let lower = state.dual_objective().max(0.0);
            if len < 1.0 - tol {
                return Err(ModulusError::NoConvergence {
                    iterations: iteration,
                    lower,
                    upper: value,
                });
            }
            return Ok(ModulusResult {
                p,
                tol,
                value,
                rho_star: scaled,
                active_curves: paths,
                duals: state.lambda.clone(),
                iterations: iteration,
                sweeps,
                max_violation: violation,
                lower_bound: lower,
                upper_bound: value,
                min_length,
                empty_family: false,
            });
        }
        target = (ADAPTIVE_INNER_FRACTION * (1.0 - len)).clamp(inner_target, target);
        let mut added = false;
        for curve in batch.drain(..) {
            let set = distinct(&curve);
            if seen.insert(set.clone()) {
                state.curves.push(set);
                state.lambda.push(0.0);
                paths.push(curve);
                added = true;
            }
        }
        if !added {
            // Every violated curve is already active: tighten the inner solve.
            let _ = state.sweep_until(inner_target / 100.0, &mut sweeps);
        }
    }
    unreachable!("the loop returns on its last iteration")
}

/// Output of [`brute_force_modulus`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceResult {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// Minimal curves kept after dropping supersets.
    pub curves: usize,
    pub iterations: usize,
}

/// Vertex sets (as bitmasks) of all simple paths in the family, small graphs
/// only.
fn enumerate_family(
    graph: &ApproxGraph,
    family: &CurveFamilySpec,
    out: &mut Vec<u32>,
) -> Result<(), ModulusError> {
    match family {
        CurveFamilySpec::Explicit { curves } => {
            for c in curves {
                out.push(c.iter().fold(0u32, |m, &v| m | (1 << v)));
            }
        }
        CurveFamilySpec::Connector { a, b } => {
            let mut target = 0u32;
            for &v in b {
                target |= 1 << v;
            }
            fn dfs(g: &ApproxGraph, v: usize, mask: u32, target: u32, out: &mut Vec<u32>) {
                if target & (1 << v) != 0 {
                    out.push(mask);
                    return;
                }
                for &w in g.neighbors(v) {
                    if mask & (1 << w) == 0 {
                        dfs(g, w, mask | (1 << w), target, out);
                    }
                }
            }
            for &s in a {
                dfs(graph, s, 1 << s, target, out);
            }
        }
        CurveFamilySpec::Union { parts } => {
            for part in parts {
                enumerate_family(graph, part, out)?;
            }
        }
    }
    Ok(())
}

/// Modulus by solving the dual over probability measures on the (finite)
/// family: minimize `F(μ) = Σ_v η_v^q`, `η = Σ_γ μ_γ 1_γ`, `q = p/(p−1)`,
/// with accelerated projected gradient. `F(μ)^{1−p}` is a lower bound and
/// `ρ ∝ η^{q−1}` normalized to be admissible gives an upper bound; the run
/// stops when their relative gap is below [`BRUTE_FORCE_GAP`].
pub fn brute_force_modulus(
    graph: &ApproxGraph,
    family: &CurveFamilySpec,
    p: f64,
) -> Result<BruteForceResult, ModulusError> {
    if !p.is_finite() || p <= 1.0 {
        return Err(ModulusError::BadExponent(p));
    }
    let n = graph.len();
    if n > BRUTE_FORCE_MAX_CELLS {
        return Err(ModulusError::TooLarge {
            cells: n,
            max: BRUTE_FORCE_MAX_CELLS,
        });
    }
    family.validate(graph)?;
    let mut masks = Vec::new();
    enumerate_family(graph, family, &mut masks)?;
    masks.sort_unstable();
    masks.dedup();
    let minimal: Vec<u32> = masks
        .iter()
        .copied()
        .filter(|&m| !masks.iter().any(|&o| o != m && o & m == o))
        .collect();
    if minimal.is_empty() {
        return Ok(BruteForceResult {
            value: 0.0,
            lower: 0.0,
            upper: 0.0,
            curves: 0,
            iterations: 0,
        });
    }
    let curves: Vec<Vec<usize>> = minimal
        .iter()
        .map(|m| (0..n).filter(|v| m & (1 << v) != 0).collect())
        .collect();
    let m = curves.len();
    let q = p / (p - 1.0);

    let eta_of = |mu: &[f64]| {
        let mut eta = vec![0.0; n];
        for (c, &w) in curves.iter().zip(mu) {
            for &v in c {
                eta[v] += w;
            }
        }
        eta
    };
    let objective = |eta: &[f64]| eta.iter().map(|e| e.powf(q)).sum::<f64>();
    let gradient = |eta: &[f64]| -> Vec<f64> {
        curves
            .iter()
            .map(|c| c.iter().map(|&v| q * eta[v].powf(q - 1.0)).sum())
            .collect()
    };
    let bounds = |eta: &[f64]| -> (f64, f64) {
        let f = objective(eta);
        let lower = f.powf(1.0 - p);
        let rho: Vec<f64> = eta.iter().map(|e| e.powf(q - 1.0)).collect();
        let min_len = curves
            .iter()
            .map(|c| c.iter().map(|&v| rho[v]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let upper = rho.iter().map(|r| (r / min_len).powf(p)).sum::<f64>();
        (lower, upper)
    };

    let mut x = vec![1.0 / m as f64; m];
    let mut y = x.clone();
    let mut t_k: f64 = 1.0;
    let mut step = 1.0;
    let mut best = bounds(&eta_of(&x));
    // Step and restart tests use gradients only: objective differences
    // cancel near the optimum long before the iterate has converged.
    for iteration in 1..=BRUTE_FORCE_MAX_ITERATIONS {
        let gy = gradient(&eta_of(&y));
        let mut next;
        loop {
            let trial: Vec<f64> = y.iter().zip(&gy).map(|(a, g)| a - step * g).collect();
            next = project_simplex(&trial);
            let g_next = gradient(&eta_of(&next));
            let dx: f64 = next.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
            let dg: f64 = g_next.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum();
            if step * step * dg <= dx || step < 1e-20 {
                break;
            }
            step *= 0.5;
        }
        // restart momentum when it points uphill
        let uphill: f64 = gy
            .iter()
            .zip(next.iter().zip(&x))
            .map(|(g, (a, b))| g * (a - b))
            .sum();
        let t_next = if uphill > 0.0 {
            1.0
        } else {
            0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt())
        };
        let beta = if uphill > 0.0 { 0.0 } else { (t_k - 1.0) / t_next };
        y = project_simplex(
            &next
                .iter()
                .zip(&x)
                .map(|(a, b)| a + beta * (a - b))
                .collect::<Vec<_>>(),
        );
        x = next;
        t_k = t_next;
        step *= 1.1;
        if iteration % 10 == 0 || m == 1 {
            let (lo, up) = bounds(&eta_of(&x));
            best = (best.0.max(lo), best.1.min(up));
            if (best.1 - best.0) <= BRUTE_FORCE_GAP * best.1 {
                return Ok(BruteForceResult {
                    value: 0.5 * (best.0 + best.1),
                    lower: best.0,
                    upper: best.1,
                    curves: m,
                    iterations: iteration,
                });
            }
        }
    }
    Err(ModulusError::NoConvergence {
        iterations: BRUTE_FORCE_MAX_ITERATIONS,
        lower: best.0,
        upper: best.1,
    })
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumulative += ui;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// How to build a curve family on a generated graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyRecipe {
    /// Curves joining two sides of the bounding square.
    Crossing(Side, Side),
    /// Finite stand-in for the family of curves of diameter at least a
    /// quarter of the space: left-right and bottom-top crossings plus the two
    /// diagonal connectors between opposite corner squares of side 1/4.
    LargeCurves,
}

impl FamilyRecipe {
    pub fn instantiate(&self, graph: &ApproxGraph) -> CurveFamilySpec {
        match *self {
            FamilyRecipe::Crossing(s, t) => {
                CurveFamilySpec::connector(graph.side_cells(s), graph.side_cells(t))
            }
            FamilyRecipe::LargeCurves => CurveFamilySpec::union(vec![
                CurveFamilySpec::connector(
                    graph.side_cells(Side::Left),
                    graph.side_cells(Side::Right),
                ),
                CurveFamilySpec::connector(
                    graph.side_cells(Side::Bottom),
                    graph.side_cells(Side::Top),
                ),
                CurveFamilySpec::connector(
                    graph.corner_cells(Corner::LowerLeft, 0.25),
                    graph.corner_cells(Corner::UpperRight, 0.25),
                ),
                CurveFamilySpec::connector(
                    graph.corner_cells(Corner::UpperLeft, 0.25),
                    graph.corner_cells(Corner::LowerRight, 0.25),
                ),
            ]),
        }
    }
}

impl fmt::Display for FamilyRecipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyRecipe::Crossing(s, t) => write!(f, "crossing:{s},{t}"),
            FamilyRecipe::LargeCurves => f.write_str("large"),
        }
    }
}

impl FromStr for FamilyRecipe {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "large" {
            return Ok(FamilyRecipe::LargeCurves);
        }
        let rest = s
            .strip_prefix("crossing:")
            .ok_or_else(|| format!("unknown family '{s}' (expected crossing:SIDE,SIDE or large)"))?;
        let (a, b) = rest
            .split_once(',')
            .ok_or_else(|| format!("crossing family needs two sides, got '{rest}'"))?;
        Ok(FamilyRecipe::Crossing(a.trim().parse()?, b.trim().parse()?))
    }
}

/// Where approximation graphs come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpaceSource {
    Grid,
    Carpet,
    /// A single graph loaded from JSON; the level argument is ignored.
    File(std::path::PathBuf),
}

impl SpaceSource {
    pub fn graph(&self, level: u32) -> Result<ApproxGraph, ApproxError> {
        match self {
            SpaceSource::Grid => crate::approx::grid_approximation(level),
            SpaceSource::Carpet => crate::approx::carpet_approximation(level),
            SpaceSource::File(path) => crate::approx::load_approximation(path),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            SpaceSource::Grid => "grid".into(),
            SpaceSource::Carpet => "carpet".into(),
            SpaceSource::File(p) => format!("file:{}", p.display()),
        }
    }
}

impl FromStr for SpaceSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "grid" => Ok(SpaceSource::Grid),
            "carpet" => Ok(SpaceSource::Carpet),
            _ => s
                .strip_prefix("file:")
                .map(|p| SpaceSource::File(p.into()))
                .ok_or_else(|| format!("unknown space '{s}' (expected grid, carpet or file:PATH)")),
        }
    }
}

/// One `(p, k)` entry of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub space: String,
    pub k: u32,
    pub p: f64,
    pub family: String,
    pub value: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest ρ* value, used by the monotonicity-in-p check.
    pub rho_max: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn csv_header() -> &'static str {
        "space,k,p,family,value,iterations,converged"
    }

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.space.clone(),
            self.k.to_string(),
            self.p.to_string(),
            self.family.clone(),
            self.value.map_or_else(|| "nan".to_string(), |v| format!("{v:e}")),
            self.iterations.to_string(),
            self.converged.to_string(),
        ]
    }

    pub fn csv_line(&self) -> String {
        self.csv_fields()
            .into_iter()
            .map(|f| {
                if f.contains([',', '"']) {
                    format!("\"{}\"", f.replace('"', "\"\""))
                } else {
                    f
                }
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// One solve per `(p, k)`, rows ordered by `p` then `k`.
pub fn modulus_sweep(
    source: &SpaceSource,
    levels: &[u32],
    p_grid: &[f64],
    recipe: FamilyRecipe,
    tol: f64,
) -> Result<Vec<SweepRow>, ApproxError> {
    let graphs: Vec<(u32, ApproxGraph)> = levels
        .iter()
        .map(|&k| source.graph(k).map(|g| (k, g)))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(f64, usize)> = p_grid
        .iter()
        .flat_map(|&p| (0..graphs.len()).map(move |i| (p, i)))
        .collect();
    let tag = source.tag();
    let label = recipe.to_string();
    Ok(jobs
        .par_iter()
        .map(|&(p, i)| {
            let (k, graph) = &graphs[i];
            let family = recipe.instantiate(graph);
            match solve_modulus(graph, &family, p, tol) {
                Ok(r) => SweepRow {
                    space: tag.clone(),
                    k: *k,
                    p,
                    family: label.clone(),
                    value: Some(r.value),
                    iterations: r.iterations,
                    converged: true,
                    rho_max: Some(r.rho_star.max()),
                    error: None,
                },
                Err(e) => SweepRow {
                    space: tag.clone(),
                    k: *k,
                    p,
                    family: label.clone(),
                    value: None,
                    iterations: match e {
                        ModulusError::NoConvergence { iterations, .. } => iterations,
                        _ => 0,
                    },
                    converged: false,
                    rho_max: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

/// Pairs `(k, p_low, p_high)` where the value increased from `p_low` to the
/// next larger `p_high` although ρ* ≤ 1 at `p_low`, which makes the value
/// non-increasing in theory. Relative slack `slack` absorbs solver tolerance.
pub fn p_monotonicity_violations(rows: &[SweepRow], slack: f64) -> Vec<(u32, f64, f64)> {
    let mut out = Vec::new();
    let mut ks: Vec<u32> = rows.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        let mut at_k: Vec<&SweepRow> = rows.iter().filter(|r| r.k == k && r.converged).collect();
        at_k.sort_by(|a, b| a.p.total_cmp(&b.p));
        for w in at_k.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if lo.rho_max.is_some_and(|m| m <= 1.0)
                && hi.value.unwrap() > lo.value.unwrap() * (1.0 + slack)
            {
                out.push((k, lo.p, hi.p));
            }
        }
    }
    out
}
