//! Defining graphs of Coxeter groups and the bounds read off them.
//!
//! Edges join generators `s ≠ t` with `m_st < ∞`; an infinite label means the
//! pair is not an edge, so edge labels are always finite integers ≥ 2.

use crate::closed_forms::{BoundReport, Candidate, Hypothesis};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoxeterError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid defining graph: {0}")]
    Invalid(String),
    #[error("the graph has no vertex")]
    Empty,
    #[error("no vertex satisfies the hypotheses of a local bound")]
    Inapplicable(Box<BoundReport>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Vertex identifier as written in JSON: an integer or a string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VertexId {
    Int(i64),
    Name(String),
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VertexId::Int(i) => write!(f, "{i}"),
            VertexId::Name(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeFile {
    pub s: VertexId,
    pub t: VertexId,
    pub m: serde_json::Value,
}

/// `{"vertices": [...], "edges": [{"s": a, "t": b, "m": int}]}` or a Coxeter
/// matrix `{"matrix": [[1, 7, "inf"], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoxeterFile {
    Graph {
        vertices: Vec<VertexId>,
        edges: Vec<EdgeFile>,
    },
    Matrix {
        matrix: Vec<Vec<serde_json::Value>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoxeterGraph {
    names: Vec<VertexId>,
    /// `adjacency[s]` holds `(t, m_st)`, sorted by `t`.
    adjacency: Vec<Vec<(usize, u64)>>,
    /// Pairs dropped because their label was infinite (matrix input only).
    pub infinite_pairs: Vec<(usize, usize)>,
}

fn finite_label(v: &serde_json::Value) -> Result<Option<u64>, String> {
    match v {
        serde_json::Value::Number(n) => match n.as_u64() {
            Some(m) => Ok(Some(m)),
            None => Err(format!("label {n} is not a nonnegative integer")),
        },
        serde_json::Value::String(s) if matches!(s.as_str(), "inf" | "infinity" | "∞") => Ok(None),
        serde_json::Value::Null => Ok(None),
        other => Err(format!("label {other} is neither an integer nor \"inf\"")),
    }
}

impl CoxeterGraph {
    /// Builds a defining graph from labelled edges given by vertex index.
    pub fn new(names: Vec<VertexId>, edges: &[(usize, usize, u64)]) -> Result<Self, CoxeterError> {
        let n = names.len();
        let mut seen_names = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if let Some(j) = seen_names.insert(name.clone(), i) {
                return Err(CoxeterError::Invalid(format!(
                    "vertex {name} listed twice (positions {j} and {i})"
                )));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(s, t, m) in edges {
            if s >= n || t >= n {
                return Err(CoxeterError::Invalid(format!("edge ({s},{t}) out of range")));
            }
            if s == t {
                return Err(CoxeterError::Invalid(format!("loop at {}", names[s])));
            }
            if m < 2 {
                return Err(CoxeterError::Invalid(format!(
                    "label {m} on ({},{}) is below 2",
                    names[s], names[t]
                )));
            }
            if adjacency[s].iter().any(|&(u, _)| u == t) {
                return Err(CoxeterError::Invalid(format!(
                    "multiple edge between {} and {}",
                    names[s], names[t]
                )));
            }
            adjacency[s].push((t, m));
            adjacency[t].push((s, m));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            names,
            adjacency,
            infinite_pairs: Vec::new(),
        })
    }

    /// Builds the defining graph of a Coxeter matrix; `None` entries are
    /// infinite and produce no edge.
    pub fn from_matrix(matrix: &[Vec<Option<u64>>]) -> Result<Self, CoxeterError> {
        let n = matrix.len();
        let mut edges = Vec::new();
        let mut infinite = Vec::new();
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(CoxeterError::Invalid(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row[i] != Some(1) {
                return Err(CoxeterError::Invalid(format!("diagonal entry {i} must be 1")));
            }
            for j in (i + 1)..n {
                if matrix[j][i] != row[j] {
                    return Err(CoxeterError::Invalid(format!("matrix not symmetric at ({i},{j})")));
                }
                match row[j] {
                    Some(m) => edges.push((i, j, m)),
                    None => infinite.push((i, j)),
                }
            }
        }
        let names = (0..n as i64).map(VertexId::Int).collect();
        let mut g = Self::new(names, &edges)?;
        g.infinite_pairs = infinite;
        Ok(g)
    }

    pub fn from_file(file: CoxeterFile) -> Result<Self, CoxeterError> {
        match file {
            CoxeterFile::Graph { vertices, edges } => {
                let index: HashMap<&VertexId, usize> =
                    vertices.iter().enumerate().map(|(i, v)| (v, i)).collect();
                let mut list = Vec::with_capacity(edges.len());
                for e in &edges {
                    let s = *index
                        .get(&e.s)
                        .ok_or_else(|| CoxeterError::Invalid(format!("unknown vertex {}", e.s)))?;
                    let t = *index
                        .get(&e.t)
                        .ok_or_else(|| CoxeterError::Invalid(format!("unknown vertex {}", e.t)))?;
                    let m = finite_label(&e.m)
                        .map_err(CoxeterError::Parse)?
                        .ok_or_else(|| {
                            CoxeterError::Invalid(format!(
                                "edge ({},{}) has an infinite label; pairs with m = ∞ are not edges",
                                e.s, e.t
                            ))
                        })?;
                    list.push((s, t, m));
                }
                Self::new(vertices, &list)
            }
            CoxeterFile::Matrix { matrix } => {
                let parsed: Vec<Vec<Option<u64>>> = matrix
                    .iter()
                    .map(|row| row.iter().map(finite_label).collect::<Result<_, _>>())
                    .collect::<Result<_, _>>()
                    .map_err(CoxeterError::Parse)?;
                Self::from_matrix(&parsed)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, CoxeterError> {
        let file: CoxeterFile =
            serde_json::from_str(text).map_err(|e| CoxeterError::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CoxeterError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, s: usize) -> &VertexId {
        &self.names[s]
    }

    pub fn valence(&self, s: usize) -> usize {
        self.adjacency[s].len()
    }

    pub fn label(&self, s: usize, t: usize) -> Option<u64> {
        self.adjacency[s]
            .binary_search_by_key(&t, |&(u, _)| u)
            .ok()
            .map(|i| self.adjacency[s][i].1)
    }

    /// Smallest label on an edge at `s`.
    pub fn min_label_at(&self, s: usize) -> Option<u64> {
        self.adjacency[s].iter().map(|&(_, m)| m).min()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn min_label(&self) -> Option<u64> {
        (0..self.len()).filter_map(|s| self.min_label_at(s)).min()
    }

    pub fn max_valence(&self) -> usize {
        (0..self.len()).map(|s| self.valence(s)).max().unwrap_or(0)
    }

    /// All 3-circuits `(a, b, c)` with `a < b < c`.
    pub fn triangles(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.len() {
            for &(b, _) in self.adjacency[a].iter().filter(|&&(b, _)| b > a) {
                for &(c, _) in self.adjacency[b].iter().filter(|&&(c, _)| c > b) {
                    if self.label(a, c).is_some() {
                        out.push((a, b, c));
                    }
                }
            }
        }
        out
    }

    fn triangle_at(&self, s: usize) -> Option<(usize, usize, usize)> {
        for &(b, _) in &self.adjacency[s] {
            for &(c, _) in self.adjacency[b].iter().filter(|&&(c, _)| c > b) {
                if self.label(s, c).is_some() {
                    return Some((s, b, c));
                }
            }
        }
        None
    }

    fn show_triangle(&self, (a, b, c): (usize, usize, usize)) -> String {
        format!("{}-{}-{}", self.names[a], self.names[b], self.names[c])
    }
}

fn infinite_hypothesis(g: &CoxeterGraph) -> Hypothesis {
    let witness = if g.infinite_pairs.is_empty() {
        None
    } else {
        Some(format!(
            "pairs with m = ∞ carry no edge: {}",
            g.infinite_pairs
                .iter()
                .map(|&(a, b)| format!("({},{})", g.names[a], g.names[b]))
                .collect::<Vec<_>>()
                .join(", ")
        ))
    };
    Hypothesis::new("labels on edges are finite", true, witness)
}

/// Global bounds from the smallest label `m` and the largest valence `k`
/// (taken over all vertices, and at least 2).
pub fn coxeter_global_bound(g: &CoxeterGraph) -> Result<BoundReport, CoxeterError> {
    if g.is_empty() {
        return Err(CoxeterError::Empty);
    }
    let k = g.max_valence().max(2);
    let lk = ((k - 1) as f64).ln();
    let m = g.min_label();
    let m_witness = Some(m.map_or_else(|| "no edges".to_string(), |m| format!("m = {m}")));
    let triangles = g.triangles();
    let tri_witness = Some(match triangles.first() {
        Some(&t) => format!("3-circuit {}", g.show_triangle(t)),
        None => "none found".to_string(),
    });
    let k_hyp = Hypothesis::new("valence ≤ k", true, Some(format!("k = {k}")));
    let case1 = Candidate::new(
        "global-triangle-free",
        vec![
            infinite_hypothesis(g),
            k_hyp.clone(),
            Hypothesis::new("every label ≥ m ≥ 3", m.is_some_and(|m| m >= 3), m_witness.clone()),
            Hypothesis::new("no 3-circuit", triangles.is_empty(), tri_witness),
        ],
        || 1.0 + lk / ((2 * m.unwrap() - 3) as f64).ln(),
    );
    let case2 = Candidate::new(
        "global-large-labels",
        vec![
            infinite_hypothesis(g),
            k_hyp,
            Hypothesis::new("every label ≥ m ≥ 4", m.is_some_and(|m| m >= 4), m_witness),
        ],
        || 1.0 + lk / ((2 * m.unwrap() - 5) as f64).ln(),
    );
    Ok(BoundReport::from_candidates(vec![case1, case2]))
}

/// Best vertex-local bound over all generators.
pub fn coxeter_local_bound(g: &CoxeterGraph) -> Result<BoundReport, CoxeterError> {
    if g.is_empty() {
        return Err(CoxeterError::Empty);
    }
    let mut candidates = Vec::new();
    let mut owners = Vec::new();
    for s in 0..g.len() {
        let val = g.valence(s);
        let Some(ms) = g.min_label_at(s) else {
            continue;
        };
        let name = g.name(s);
        let lv = ((val.max(1) - 1) as f64).ln();
        let val_hyp = Hypothesis::new("val(s) ≥ 2", val >= 2, Some(format!("val({name}) = {val}")));
        let tri = g.triangle_at(s);
        candidates.push(Candidate::new(
            &format!("local-triangle-free@{name}"),
            vec![
                val_hyp.clone(),
                Hypothesis::new("m_s ≥ 3", ms >= 3, Some(format!("m_s = {ms}"))),
                Hypothesis::new(
                    "s on no 3-circuit",
                    tri.is_none(),
                    tri.map(|t| format!("3-circuit {}", g.show_triangle(t))),
                ),
            ],
            || 1.0 + lv / ((ms - 1) as f64).ln(),
        ));
        owners.push(s);
        candidates.push(Candidate::new(
            &format!("local-large-labels@{name}"),
            vec![val_hyp, Hypothesis::new("m_s ≥ 5", ms >= 5, Some(format!("m_s = {ms}")))],
            || 1.0 + lv / ((ms - 3) as f64).ln(),
        ));
        owners.push(s);
    }
    let mut report = BoundReport::from_candidates(candidates);
    report.caveat = Some("hyperbolicity of the group is not checked".to_string());
    if !report.applicable {
        return Err(CoxeterError::Inapplicable(Box::new(report)));
    }
    let idx = report
        .candidates
        .iter()
        .position(|c| c.rule == report.rule)
        .expect("winning rule is a candidate");
    report.witness = Some(g.name(owners[idx]).to_string());
    report.rule = report.rule.split('@').next().unwrap().to_string();
    Ok(report)
}
