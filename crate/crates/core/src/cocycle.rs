//! Shells of the regular elementary polygonal complex `Y_{m,k}` through its
//! planar collapse `Y_m`, and ℓp energies of the cocycles `f = u∘φ∘r`.
//!
//! Angles are exact rational turns. The base cell has `m` black edges; black
//! edge `i` spans `[i/m, (i+1)/m]` and the white edge `i` sits at angle `i/m`.
//! Shell `n` consists of `m(m−1)^n` planar black edges; edge `j` of shell
//! `n` spans `[j, j+1]/(m(m−1)^n)` and its children in shell `n+1` are
//! `j(m−1) + i`, `0 ≤ i < m−1`.

use crate::closed_forms::elementary_exponent;
use crate::fit::tail_geometric_rate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::PI;
use thiserror::Error;

/// Largest planar shell size accepted by [`build_shell_complex`].
pub const MAX_PLANAR_EDGES: u64 = 100_000_000;
/// Deepest explicit build of `Y_{m,k}`.
pub const MAX_EXPLICIT_DEPTH: u32 = 3;
/// Verdict margin around ratio 1.
pub const VERDICT_EPS: f64 = 0.02;

const CHUNK: u64 = 1 << 14;

#[derive(Debug, Error, PartialEq)]
pub enum CocycleError {
    #[error("need m ≥ 3 and k ≥ 2, got m = {m}, k = {k}")]
    BadParams { m: u64, k: u64 },
    #[error("depth {depth} gives {edges} planar edges in the last shell (limit {limit})")]
    DepthTooLarge { depth: u32, edges: u128, limit: u64 },
    #[error("exponent p must be > 1, got {0}")]
    BadExponent(f64),
    #[error("Lipschitz bound fails on shell {shell} edge {edge}: |df| = {diff} > {bound}")]
    LipschitzViolated {
        shell: u32,
        edge: u64,
        diff: f64,
        bound: f64,
    },
    #[error("the two arcs are the same (arc {0})")]
    SameArc(u64),
    #[error("arc {arc} is out of range at shell {shell} ({count} arcs)")]
    ArcOutOfRange { arc: u64, shell: u32, count: u64 },
    #[error("explicit complex check failed: {0}")]
    Explicit(String),
}

/// Exact angle `num/den` of a full turn, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Turn {
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Turn {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        let g = gcd(num, den).max(1);
        Self {
            num: num / g,
            den: den / g,
        }
    }

    pub fn radians(self) -> f64 {
        2.0 * PI * (self.num as f64 / self.den as f64)
    }

    pub fn difference(self, other: Turn) -> Turn {
        let n = self.num as u128 * other.den as u128 - other.num as u128 * self.den as u128;
        let d = self.den as u128 * other.den as u128;
        let g = {
            let (mut a, mut b) = (n, d);
            while b != 0 {
                (a, b) = (b, a % b);
            }
            a.max(1)
        };
        Turn {
            num: (n / g) as u64,
            den: (d / g) as u64,
        }
    }
}

impl Ord for Turn {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl PartialOrd for Turn {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A planar black edge with the ideal angles of the frontier trees at its
/// two ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlackEdge {
    pub shell: u32,
    pub index: u64,
    pub theta_minus: Turn,
    pub theta_plus: Turn,
}

/// Shells `0..=depth` of `Y_{m,k}`, stored through the planar collapse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ShellComplex {
    pub m: u64,
    pub k: u64,
    pub depth: u32,
}

pub fn build_shell_complex(m: u64, k: u64, depth: u32) -> Result<ShellComplex, CocycleError> {
    if m < 3 || k < 2 {
        return Err(CocycleError::BadParams { m, k });
    }
    let edges = m as u128 * ((m - 1) as u128).pow(depth);
    if edges > MAX_PLANAR_EDGES as u128 {
        return Err(CocycleError::DepthTooLarge {
            depth,
            edges,
            limit: MAX_PLANAR_EDGES,
        });
    }
    Ok(ShellComplex { m, k, depth })
}

impl ShellComplex {
    /// Planar black edges in shell `n`: `m(m−1)^n`.
    pub fn planar_count(&self, n: u32) -> u64 {
        self.m * (self.m - 1).pow(n)
    }

    /// Preimages of each planar edge of shell `n` under the collapse.
    pub fn multiplicity(&self, n: u32) -> u128 {
        ((self.k - 1) as u128).pow(n)
    }

    /// Frontier black edges of `Y_{m,k}` in shell `n`: `m(m−1)^n(k−1)^n`.
    pub fn frontier_count(&self, n: u32) -> u128 {
        self.planar_count(n) as u128 * self.multiplicity(n)
    }

    /// Arc of a shell-`n` edge, as a fraction of the full turn.
    pub fn arc_width(&self, n: u32) -> Turn {
        Turn::new(1, self.planar_count(n))
    }

    pub fn edge(&self, n: u32, index: u64) -> BlackEdge {
        let den = self.planar_count(n);
        BlackEdge {
            shell: n,
            index,
            theta_minus: Turn::new(index, den),
            theta_plus: Turn::new(index + 1, den),
        }
    }

    pub fn parent(&self, n: u32, index: u64) -> Option<u64> {
        (n > 0).then(|| index / (self.m - 1))
    }

    pub fn children(&self, index: u64) -> std::ops::Range<u64> {
        index * (self.m - 1)..(index + 1) * (self.m - 1)
    }

    /// Ideal points at depth `d ≥ 1` (the arc endpoints of shell `d − 1`),
    /// generated by repeated subdivision and returned sorted.
    pub fn ideal_points(&self, d: u32) -> Vec<Turn> {
        assert!(d >= 1, "depth starts at 1");
        let mut points: Vec<Turn> = (0..self.m).map(|i| Turn::new(i, self.m)).collect();
        for _ in 1..d {
            let mut next = Vec::with_capacity(points.len() * (self.m as usize - 1));
            for (i, &a) in points.iter().enumerate() {
                let b = points.get(i + 1).copied().unwrap_or(Turn::new(1, 1));
                next.push(a);
                // m−2 interior points of the attached cell
                let width = b.difference(a);
                for j in 1..self.m - 1 {
                    let num = a.num as u128 * width.den as u128 * (self.m - 1) as u128
                        + j as u128 * width.num as u128 * a.den as u128;
                    let den = a.den as u128 * width.den as u128 * (self.m - 1) as u128;
                    let g = {
                        let (mut x, mut y) = (num, den);
                        while y != 0 {
                            (x, y) = (y, x % y);
                        }
                        x
                    };
                    next.push(Turn {
                        num: (num / g) as u64,
                        den: (den / g) as u64,
                    });
                }
            }
            points = next;
        }
        points
    }

    /// Checks the exact count and spacing invariants of every built shell.
    pub fn verify_counts(&self, max_points: usize) -> Result<(), String> {
        for n in 0..=self.depth {
            let expected = self.m * (self.m - 1).pow(n);
            if self.planar_count(n) != expected {
                return Err(format!("shell {n}: planar count mismatch"));
            }
            let children: u64 = (0..self.planar_count(n).min(64))
                .map(|i| self.children(i).count() as u64)
                .sum();
            if children != self.planar_count(n).min(64) * (self.m - 1) {
                return Err(format!("shell {n}: subdivision mismatch"));
            }
            if self.frontier_count(n)
                != expected as u128 * ((self.k - 1) as u128).pow(n)
            {
                return Err(format!("shell {n}: frontier count mismatch"));
            }
            if expected as usize > max_points {
                continue;
            }
            let points = self.ideal_points(n + 1);
            if points.len() as u64 != expected {
                return Err(format!(
                    "depth {}: {} ideal points, expected {expected}",
                    n + 1,
                    points.len()
                ));
            }
            let spacing = Turn::new(1, expected);
            for (i, w) in points.windows(2).enumerate() {
                if w[1].difference(w[0]) != spacing {
                    return Err(format!("depth {}: uneven spacing at point {i}", n + 1));
                }
            }
            if Turn::new(1, 1).difference(*points.last().unwrap()) != spacing {
                return Err(format!("depth {}: uneven spacing at the wrap", n + 1));
            }
        }
        Ok(())
    }
}

/// 2π-periodic function on the circle with a known Lipschitz constant.
pub trait CircleFunction: Sync {
    fn eval(&self, theta: f64) -> f64;
    fn lipschitz(&self) -> f64;
    fn describe(&self) -> serde_json::Value;
}

/// `amplitude · sin(frequency · θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sine {
    pub amplitude: f64,
    pub frequency: u32,
}

impl Default for Sine {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            frequency: 1,
        }
    }
}

impl CircleFunction for Sine {
    fn eval(&self, theta: f64) -> f64 {
        self.amplitude * (self.frequency as f64 * theta).sin()
    }
    fn lipschitz(&self) -> f64 {
        self.amplitude.abs() * self.frequency as f64
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({"kind": "sin", "amplitude": self.amplitude, "frequency": self.frequency})
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl CircleFunction for Constant {
    fn eval(&self, _theta: f64) -> f64 {
        self.0
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({"kind": "constant", "value": self.0})
    }
}

/// `amplitude · sin²(π(θ − start)/width)` on `[start, start + width]`, zero
/// elsewhere; Lipschitz constant `amplitude·π/width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bump {
    pub start: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl CircleFunction for Bump {
    fn eval(&self, theta: f64) -> f64 {
        let t = (theta - self.start).rem_euclid(2.0 * PI);
        if t <= self.width {
            let s = (PI * t / self.width).sin();
            self.amplitude * s * s
        } else {
            0.0
        }
    }
    fn lipschitz(&self) -> f64 {
        self.amplitude.abs() * PI / self.width
    }
    fn describe(&self) -> serde_json::Value {
        serde_json::json!({"kind": "bump", "start": self.start, "width": self.width,
            "amplitude": self.amplitude})
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Converges,
    Diverges,
    Borderline,
}

impl Verdict {
    pub fn from_ratio(r: f64) -> Self {
        if r < 1.0 - VERDICT_EPS {
            Verdict::Converges
        } else if r > 1.0 + VERDICT_EPS {
            Verdict::Diverges
        } else {
            Verdict::Borderline
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocycleReport {
    pub m: u64,
    pub k: u64,
    pub p: f64,
    pub depth: u32,
    pub threshold: f64,
    pub lipschitz: f64,
    /// `E_n = (k−1)^n Σ_planar |u(θ−) − u(θ+)|^p`, `n = 0..=depth`.
    pub energies: Vec<f64>,
    /// `E_{n+1}/E_n`; `None` where `E_n = 0`.
    pub ratios: Vec<Option<f64>>,
    pub fitted_ratio: f64,
    /// `(m−1)^{1−p}(k−1)`.
    pub predicted_ratio: f64,
    pub verdict: Verdict,
    /// Largest `|df|` per shell.
    pub max_df: Vec<f64>,
}

impl CocycleReport {
    pub fn partial_sum(&self) -> f64 {
        self.energies.iter().sum()
    }

    /// `Σ_{n ≤ upto} E_n`, continuing past the built depth geometrically with
    /// the fitted ratio.
    pub fn extrapolated_partial_sum(&self, upto: u32) -> f64 {
        let mut sum = 0.0;
        let mut last = 0.0;
        for (n, &e) in self.energies.iter().enumerate() {
            if n as u32 > upto {
                return sum;
            }
            sum += e;
            last = e;
        }
        for _ in self.depth..upto {
            last *= self.fitted_ratio;
            sum += last;
        }
        sum
    }

    /// Geometric tail `Σ_{n > depth} E_n`, infinite unless the fitted ratio
    /// is below 1.
    pub fn extrapolated_tail(&self) -> f64 {
        let last = *self.energies.last().unwrap_or(&0.0);
        if last == 0.0 {
            0.0
        } else if self.fitted_ratio < 1.0 {
            last * self.fitted_ratio / (1.0 - self.fitted_ratio)
        } else {
            f64::INFINITY
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "m": self.m,
            "k": self.k,
            "p": self.p,
            "threshold": self.threshold,
            "energies": self.energies,
            "ratios": self.ratios,
            "fitted_ratio": self.fitted_ratio,
            "predicted_ratio": self.predicted_ratio,
            "verdict": self.verdict,
        })
    }
}

/// Bound `2πC/(m(m−1)^{n−1})` on `|df|` over a shell-`n` black edge.
pub fn df_bound(m: u64, n: u32, lipschitz: f64) -> f64 {
    2.0 * PI * lipschitz / (m as f64 * ((m - 1) as f64).powi(n as i32 - 1))
}

/// Per-shell energies of `f = u∘φ∘r` with the Lipschitz bound checked on
/// every planar black edge.
pub fn cocycle_energy(
    u: &dyn CircleFunction,
    sc: &ShellComplex,
    p: f64,
) -> Result<CocycleReport, CocycleError> {
    if !p.is_finite() || p <= 1.0 {
        return Err(CocycleError::BadExponent(p));
    }
    let c = u.lipschitz();
    let mut energies = Vec::with_capacity(sc.depth as usize + 1);
    let mut max_df = Vec::with_capacity(sc.depth as usize + 1);
    for n in 0..=sc.depth {
        let count = sc.planar_count(n);
        let bound = df_bound(sc.m, n, c) * (1.0 + 1e-12);
        let den = count as f64;
        let chunks = count.div_ceil(CHUNK);
        // fixed chunking keeps the summation order independent of threads
        let parts: Vec<Result<(f64, f64), CocycleError>> = (0..chunks)
            .into_par_iter()
            .map(|ci| {
                let lo = ci * CHUNK;
                let hi = (lo + CHUNK).min(count);
                let mut sum = 0.0;
                let mut worst: f64 = 0.0;
                let mut prev = u.eval(2.0 * PI * (lo as f64 / den));
                for j in lo..hi {
                    let next = u.eval(2.0 * PI * ((j + 1) as f64 / den));
                    let diff = (prev - next).abs();
                    if diff > bound {
                        return Err(CocycleError::LipschitzViolated {
                            shell: n,
                            edge: j,
                            diff,
                            bound,
                        });
                    }
                    worst = worst.max(diff);
                    sum += diff.powf(p);
                    prev = next;
                }
                Ok((sum, worst))
            })
            .collect();
        let mut planar = 0.0;
        let mut worst: f64 = 0.0;
        for part in parts {
            let (s, w) = part?;
            planar += s;
            worst = worst.max(w);
        }
        energies.push(sc.multiplicity(n) as f64 * planar);
        max_df.push(worst);
    }
    let ratios: Vec<Option<f64>> = energies
        .windows(2)
        .map(|w| (w[0] > 0.0).then(|| w[1] / w[0]))
        .collect();
    let points: Vec<(f64, f64)> = energies
        .iter()
        .enumerate()
        .map(|(n, &e)| (n as f64, e))
        .collect();
    let fitted_ratio = if energies.iter().all(|&e| e == 0.0) {
        0.0
    } else {
        tail_geometric_rate(&points).unwrap_or(f64::NAN)
    };
    let verdict = if fitted_ratio.is_nan() {
        Verdict::Borderline
    } else {
        Verdict::from_ratio(fitted_ratio)
    };
    Ok(CocycleReport {
        m: sc.m,
        k: sc.k,
        p,
        depth: sc.depth,
        threshold: elementary_exponent(sc.m, sc.k)
            .map_err(|_| CocycleError::BadParams { m: sc.m, k: sc.k })?,
        lipschitz: c,
        energies,
        ratios,
        fitted_ratio,
        predicted_ratio: ((sc.m - 1) as f64).powf(1.0 - p) * (sc.k - 1) as f64,
        verdict,
        max_df,
    })
}

/// A bump on one arc that separates the frontier trees owning two arcs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationWitness {
    pub shell: u32,
    pub arc1: u64,
    pub arc2: u64,
    pub bump: Bump,
    pub lipschitz: f64,
    /// Ideal angles of the owning frontier trees.
    pub tree1: Turn,
    pub tree2: Turn,
    pub value1: f64,
    pub value2: f64,
}

/// Frontier tree owning an arc: the one started by the attached cell at the
/// interior subdivision point `⌊(m−1)/2⌋` of the arc.
pub fn owning_tree(sc: &ShellComplex, shell: u32, arc: u64) -> Turn {
    let j = (sc.m - 1) / 2;
    Turn::new(arc * (sc.m - 1) + j, sc.planar_count(shell) * (sc.m - 1))
}

pub fn separation_witness(
    sc: &ShellComplex,
    arc1: u64,
    arc2: u64,
) -> Result<SeparationWitness, CocycleError> {
    let shell = sc.depth;
    let count = sc.planar_count(shell);
    for arc in [arc1, arc2] {
        if arc >= count {
            return Err(CocycleError::ArcOutOfRange { arc, shell, count });
        }
    }
    if arc1 == arc2 {
        return Err(CocycleError::SameArc(arc1));
    }
    let edge = sc.edge(shell, arc1);
    let bump = Bump {
        start: edge.theta_minus.radians(),
        width: 2.0 * PI / count as f64,
        amplitude: 1.0,
    };
    let tree1 = owning_tree(sc, shell, arc1);
    let tree2 = owning_tree(sc, shell, arc2);
    let value1 = bump.eval(tree1.radians());
    let value2 = bump.eval(tree2.radians());
    Ok(SeparationWitness {
        shell,
        arc1,
        arc2,
        bump,
        lipschitz: bump.lipschitz(),
        tree1,
        tree2,
        value1,
        value2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    Black,
    White,
}

/// Edge of the explicit complex.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitEdge {
    pub a: usize,
    pub b: usize,
    pub color: Color,
    pub thickness: u32,
    /// Planar image `(shell, index)` of a black edge.
    pub image: Option<(u32, u64)>,
}

/// `Y_{m,k}` materialized cell by cell up to a small depth.
#[derive(Debug, Clone)]
pub struct ExplicitComplex {
    pub m: u64,
    pub k: u64,
    pub depth: u32,
    pub vertex_count: usize,
    pub cells: usize,
    pub edges: Vec<ExplicitEdge>,
    /// Frontier tree (union-find root) of every vertex.
    pub tree_of: Vec<usize>,
    /// Ideal angle of every frontier tree root.
    pub tree_angle: std::collections::BTreeMap<usize, Turn>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
    fn push(&mut self) -> usize {
        let id = self.0.len();
        self.0.push(id);
        id
    }
}

/// Builds `Y_{m,k}` out to `depth ≤ 3` and assigns every frontier tree its
/// ideal angle. Fails if a tree receives two different angles or a
/// thickness is wrong.
pub fn build_explicit(m: u64, k: u64, depth: u32) -> Result<ExplicitComplex, CocycleError> {
    if m < 3 || k < 2 {
        return Err(CocycleError::BadParams { m, k });
    }
    if depth > MAX_EXPLICIT_DEPTH {
        return Err(CocycleError::DepthTooLarge {
            depth,
            edges: m as u128 * ((m - 1) as u128 * (k - 1) as u128).pow(depth),
            limit: MAX_PLANAR_EDGES,
        });
    }
    let mut uf = UnionFind(Vec::new());
    let mut edges: Vec<ExplicitEdge> = Vec::new();
    let mut seeds: Vec<(usize, Turn)> = Vec::new();
    // (edge id, low-angle vertex, high-angle vertex)
    let mut frontier: Vec<(usize, usize, usize)> = Vec::new();

    // base cell: w_0, b_0, w_1, b_1, ... around vertices v_0..v_{2m−1}
    let base: Vec<usize> = (0..2 * m).map(|_| uf.push()).collect();
    let two_m = base.len();
    for i in 0..m as usize {
        let (a, b, c) = (base[2 * i], base[2 * i + 1], base[(2 * i + 2) % two_m]);
        edges.push(ExplicitEdge {
            a,
            b,
            color: Color::White,
            thickness: 1,
            image: None,
        });
        uf.union(a, b);
        seeds.push((a, Turn::new(i as u64, m)));
        edges.push(ExplicitEdge {
            a: b,
            b: c,
            color: Color::Black,
            thickness: 1,
            image: Some((0, i as u64)),
        });
        frontier.push((edges.len() - 1, b, c));
    }
    let mut cells = 1usize;
    let planar = ShellComplex { m, k, depth };
    for n in 0..depth {
        let mut next = Vec::new();
        for &(eid, low, high) in &frontier {
            let (_, lo) = edges[eid].image.expect("black edge has an image");
            for _ in 0..k - 1 {
                edges[eid].thickness += 1;
                cells += 1;
                // high → x1 (white) → x2 (black) → ... → low (white)
                let mut prev = high;
                let children: Vec<u64> = planar.children(lo).collect();
                for step in 0..(2 * m - 1) as usize {
                    let is_last = step == (2 * m - 2) as usize;
                    let x = if is_last { low } else { uf.push() };
                    if step % 2 == 0 {
                        edges.push(ExplicitEdge {
                            a: prev,
                            b: x,
                            color: Color::White,
                            thickness: 1,
                            image: None,
                        });
                        uf.union(prev, x);
                        if step > 0 && !is_last {
                            // new tree at interior point: between sub-arcs
                            let j = (m - 1) - (step as u64 / 2);
                            seeds.push((x, Turn::new(lo * (m - 1) + j, planar.planar_count(n + 1))));
                        }
                    } else {
                        // black edge for sub-arc index counted from the top
                        let sub = (m - 2) - (step as u64 - 1) / 2;
                        edges.push(ExplicitEdge {
                            a: x,
                            b: prev,
                            color: Color::Black,
                            thickness: 1,
                            image: Some((n + 1, children[sub as usize])),
                        });
                        next.push((edges.len() - 1, x, prev));
                    }
                    prev = x;
                }
            }
        }
        frontier = next;
    }
    let vertex_count = uf.0.len();
    let tree_of: Vec<usize> = (0..vertex_count).map(|v| uf.find(v)).collect();
    let mut tree_angle = std::collections::BTreeMap::new();
    for (v, angle) in seeds {
        let root = tree_of[v];
        if let Some(old) = tree_angle.insert(root, angle) {
            if old != angle {
                return Err(CocycleError::Explicit(format!(
                    "tree {root} carries two angles {}/{} and {}/{}",
                    old.num, old.den, angle.num, angle.den
                )));
            }
        }
    }
    let complex = ExplicitComplex {
        m,
        k,
        depth,
        vertex_count,
        cells,
        edges,
        tree_of,
        tree_angle,
    };
    complex.check_thickness()?;
    Ok(complex)
}

impl ExplicitComplex {
    fn check_thickness(&self) -> Result<(), CocycleError> {
        for (i, e) in self.edges.iter().enumerate() {
            let expected = match (e.color, e.image) {
                (Color::White, _) => 1,
                (Color::Black, Some((n, _))) if n == self.depth => 1,
                (Color::Black, _) => self.k as u32,
            };
            if e.thickness != expected {
                return Err(CocycleError::Explicit(format!(
                    "edge {i} has thickness {} instead of {expected}",
                    e.thickness
                )));
            }
        }
        Ok(())
    }

    pub fn black_edges(&self, shell: u32) -> impl Iterator<Item = &ExplicitEdge> {
        self.edges
            .iter()
            .filter(move |e| matches!(e.image, Some((n, _)) if n == shell))
    }

    /// Angles of the frontier trees at the two ends of a black edge, ordered
    /// `(low, high)`.
    pub fn end_angles(&self, e: &ExplicitEdge) -> Option<(Turn, Turn)> {
        let a = *self.tree_angle.get(&self.tree_of[e.a])?;
        let b = *self.tree_angle.get(&self.tree_of[e.b])?;
        Some((a, b))
    }

    pub fn frontier_trees(&self) -> usize {
        self.tree_angle.len()
    }

    /// `Σ |u(θ−) − u(θ+)|^p` over the explicit black edges of a shell.
    pub fn shell_energy(&self, u: &dyn CircleFunction, shell: u32, p: f64) -> f64 {
        self.black_edges(shell)
            .map(|e| {
                let (a, b) = self.end_angles(e).expect("every vertex lies on a seeded tree");
                (u.eval(a.radians()) - u.eval(b.radians())).abs().powf(p)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_small_complexes() {
        let sc = build_shell_complex(3, 2, 1).unwrap();
        assert_eq!(sc.planar_count(0), 3);
        assert_eq!(sc.frontier_count(1), 6);
        let sc = build_shell_complex(4, 3, 2).unwrap();
        assert_eq!(sc.frontier_count(2), 144);
        assert_eq!(sc.planar_count(2), 36);
        assert_eq!(sc.multiplicity(2), 4);
        sc.verify_counts(10_000).unwrap();
    }

    #[test]
    fn ideal_points_at_depth_two() {
        let sc = build_shell_complex(3, 2, 2).unwrap();
        let pts = sc.ideal_points(2);
        assert_eq!(pts.len(), 6);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(*p, Turn::new(i as u64, 6));
        }
        // spacing π/3
        assert!((pts[1].radians() - PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn depth_cap() {
        assert!(matches!(
            build_shell_complex(4, 3, 20),
            Err(CocycleError::DepthTooLarge { .. })
        ));
        assert!(build_shell_complex(2, 3, 1).is_err());
    }

    #[test]
    fn constant_function_has_zero_energy() {
        let sc = build_shell_complex(4, 3, 6).unwrap();
        for p in [1.2, 2.0, 5.0] {
            let r = cocycle_energy(&Constant(3.0), &sc, p).unwrap();
            assert!(r.energies.iter().all(|&e| e == 0.0));
            assert_eq!(r.verdict, Verdict::Converges);
        }
    }

    #[test]
    fn wrong_lipschitz_constant_is_caught() {
        struct Liar;
        impl CircleFunction for Liar {
            fn eval(&self, t: f64) -> f64 {
                (5.0 * t).sin()
            }
            fn lipschitz(&self) -> f64 {
                0.1
            }
            fn describe(&self) -> serde_json::Value {
                serde_json::Value::Null
            }
        }
        let sc = build_shell_complex(3, 2, 3).unwrap();
        assert!(matches!(
            cocycle_energy(&Liar, &sc, 2.0),
            Err(CocycleError::LipschitzViolated { .. })
        ));
    }

    #[test]
    fn sine_ratio_at_p_two() {
        let sc = build_shell_complex(4, 3, 12).unwrap();
        let r = cocycle_energy(&Sine::default(), &sc, 2.0).unwrap();
        assert!((r.fitted_ratio - 2.0 / 3.0).abs() < 0.03 * 2.0 / 3.0);
        // direct partial sums agree with the report
        let direct: f64 = (0..=12)
            .map(|n| {
                let den = sc.planar_count(n) as f64;
                let s: f64 = (0..sc.planar_count(n))
                    .map(|j| {
                        let a = (2.0 * PI * j as f64 / den).sin();
                        let b = (2.0 * PI * (j + 1) as f64 / den).sin();
                        (a - b).powi(2)
                    })
                    .sum();
                2f64.powi(n as i32) * s
            })
            .sum();
        assert!((direct - r.partial_sum()).abs() < 1e-9 * direct);
    }

    #[test]
    fn separation_examples() {
        let sc = build_shell_complex(3, 2, 1).unwrap();
        let w = separation_witness(&sc, 0, 1).unwrap();
        assert!((w.value1 - w.value2 - w.bump.amplitude).abs() < 1e-12);
        assert!(matches!(
            separation_witness(&sc, 2, 2),
            Err(CocycleError::SameArc(2))
        ));
        let deep = build_shell_complex(3, 2, 3).unwrap();
        // arcs 0 and 3 of shell 3 share the shell-1 ancestor 0
        assert_eq!(deep.parent(3, 0).and_then(|a| deep.parent(2, a)), Some(0));
        assert_eq!(deep.parent(3, 3).and_then(|a| deep.parent(2, a)), Some(0));
        let w = separation_witness(&deep, 0, 3).unwrap();
        assert!(w.value1 > 0.0 && w.value2 == 0.0);
    }

    #[test]
    fn explicit_build_matches_the_factorization() {
        for (m, k) in [(3, 2), (3, 3), (4, 3), (5, 4)] {
            for depth in 0..=3 {
                let x = build_explicit(m, k, depth).unwrap();
                let sc = build_shell_complex(m, k, depth).unwrap();
                for n in 0..=depth {
                    let count = x.black_edges(n).count() as u128;
                    let expected = if n == 0 { m as u128 } else { sc.frontier_count(n) };
                    assert_eq!(count, expected, "m={m} k={k} shell {n}");
                }
                if depth == 3 {
                    let u = Sine::default();
                    let report = cocycle_energy(&u, &sc, 2.5).unwrap();
                    for n in 0..=depth {
                        let e = x.shell_energy(&u, n, 2.5);
                        assert!((e - report.energies[n as usize]).abs() <= 1e-12 * e.max(1.0));
                    }
                    // each planar edge has (k−1)^n preimages
                    let mut hits = std::collections::HashMap::new();
                    for e in x.black_edges(3) {
                        *hits.entry(e.image.unwrap().1).or_insert(0u128) += 1;
                    }
                    assert!(hits.values().all(|&h| h == sc.multiplicity(3)));
                    assert_eq!(hits.len() as u64, sc.planar_count(3));
                }
            }
        }
    }
}
