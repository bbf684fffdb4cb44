//! κ-approximation graphs.
//!
//! Cells are closed squares; two cells are adjacent when their closures
//! intersect (corner contact included). Generated families carry base-b
//! addresses so that a level-(k+1) address extends its parent's address.

use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::path::Path;
use thiserror::Error;

pub const MAX_GRID_LEVEL: u32 = 14;
pub const MAX_CARPET_LEVEL: u32 = 6;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("level {level} exceeds the maximum {max} for {space}")]
    LevelTooLarge {
        space: &'static str,
        level: u32,
        max: u32,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: usize,
    pub center: [f64; 2],
    pub address: String,
}

/// Summary produced when a graph is validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub cells: usize,
    pub edges: usize,
    /// Smallest distance between two cell centers (∞ for a single cell).
    pub min_center_distance: f64,
    pub components: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxGraph {
    pub level: u32,
    pub scale: f64,
    pub kappa: f64,
    pub cells: Vec<Cell>,
    adjacency: Vec<Vec<usize>>,
    pub space_tag: String,
    pub validation: Option<ValidationReport>,
}

/// Side of the bounding square, used to describe crossing families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            "bottom" => Ok(Side::Bottom),
            "top" => Ok(Side::Top),
            other => Err(format!("unknown side '{other}'")),
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        })
    }
}

/// Corner of the bounding square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corner {
    LowerLeft,
    LowerRight,
    UpperLeft,
    UpperRight,
}

impl ApproxGraph {
    /// Builds a graph from cells and an undirected edge list; the adjacency
    /// lists are sorted and deduplicated.
    pub fn new(
        level: u32,
        scale: f64,
        kappa: f64,
        cells: Vec<Cell>,
        edges: &[(usize, usize)],
        space_tag: impl Into<String>,
    ) -> Result<Self, ApproxError> {
        let n = cells.len();
        for (i, c) in cells.iter().enumerate() {
            if c.id != i {
                return Err(ApproxError::Validation(format!(
                    "cell ids must be 0..{n} in order; position {i} has id {}",
                    c.id
                )));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(ApproxError::Validation(format!(
                    "edge ({a},{b}) references a missing cell"
                )));
            }
            if a == b {
                return Err(ApproxError::Validation(format!("self-loop at cell {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            level,
            scale,
            kappa,
            cells,
            adjacency,
            space_tag: space_tag.into(),
            validation: None,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, list) in self.adjacency.iter().enumerate() {
            for &b in list {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    pub fn component_count(&self) -> usize {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut count = 0;
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                for &w in &self.adjacency[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() <= 1
    }

    /// Bounding box `[xmin, xmax] × [ymin, ymax]` of the cell squares.
    pub fn bounds(&self) -> [f64; 4] {
        let h = self.scale / 2.0;
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for c in &self.cells {
            b[0] = b[0].min(c.center[0] - h);
            b[1] = b[1].max(c.center[0] + h);
            b[2] = b[2].min(c.center[1] - h);
            b[3] = b[3].max(c.center[1] + h);
        }
        b
    }

    /// Cells whose square touches the given side of the bounding box.
    pub fn side_cells(&self, side: Side) -> Vec<usize> {
        let b = self.bounds();
        let h = self.scale / 2.0;
        let eps = self.scale * 1e-6;
        self.cells
            .iter()
            .filter(|c| match side {
                Side::Left => c.center[0] - h <= b[0] + eps,
                Side::Right => c.center[0] + h >= b[1] - eps,
                Side::Bottom => c.center[1] - h <= b[2] + eps,
                Side::Top => c.center[1] + h >= b[3] - eps,
            })
            .map(|c| c.id)
            .collect()
    }

    /// Cells whose center lies in the corner square of side `fraction`
    /// times the bounding-box width; falls back to the cells nearest the
    /// corner when none qualifies.
    pub fn corner_cells(&self, corner: Corner, fraction: f64) -> Vec<usize> {
        let b = self.bounds();
        let (cx, cy) = match corner {
            Corner::LowerLeft => (b[0], b[2]),
            Corner::LowerRight => (b[1], b[2]),
            Corner::UpperLeft => (b[0], b[3]),
            Corner::UpperRight => (b[1], b[3]),
        };
        let reach_x = fraction * (b[1] - b[0]);
        let reach_y = fraction * (b[3] - b[2]);
        let picked: Vec<usize> = self
            .cells
            .iter()
            .filter(|c| (c.center[0] - cx).abs() <= reach_x && (c.center[1] - cy).abs() <= reach_y)
            .map(|c| c.id)
            .collect();
        if !picked.is_empty() {
            return picked;
        }
        let dist = |c: &Cell| (c.center[0] - cx).abs().max((c.center[1] - cy).abs());
        let best = self.cells.iter().map(dist).fold(f64::INFINITY, f64::min);
        self.cells
            .iter()
            .filter(|c| dist(c) <= best * (1.0 + 1e-9))
            .map(|c| c.id)
            .collect()
    }

    /// Checks adjacency symmetry and inner-ball disjointness.
    pub fn validate(&self) -> Result<ValidationReport, ApproxError> {
        for (a, list) in self.adjacency.iter().enumerate() {
            for &b in list {
                if a == b {
                    return Err(ApproxError::Validation(format!("self-loop at cell {a}")));
                }
                if !self.are_adjacent(b, a) {
                    return Err(ApproxError::Validation(format!(
                        "adjacency not symmetric between {a} and {b}"
                    )));
                }
            }
        }
        if self.scale.is_nan() || self.scale <= 0.0 || self.kappa.is_nan() || self.kappa < 1.0 {
            return Err(ApproxError::Validation(format!(
                "need scale > 0 and kappa ≥ 1 (scale {}, kappa {})",
                self.scale, self.kappa
            )));
        }
        // Open inner balls of radius scale/kappa are disjoint iff centers are
        // at least 2·scale/kappa apart. Bucket centers on that grid size.
        let r2 = 2.0 * self.scale / self.kappa;
        let key = |c: &[f64; 2]| ((c[0] / r2).floor() as i64, (c[1] / r2).floor() as i64);
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for c in &self.cells {
            grid.entry(key(&c.center)).or_default().push(c.id);
        }
        let mut min_center_distance = f64::INFINITY;
        for c in &self.cells {
            let (gx, gy) = key(&c.center);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    let Some(list) = grid.get(&(gx + dx, gy + dy)) else {
                        continue;
                    };
                    for &o in list {
                        if o <= c.id {
                            continue;
                        }
                        let oc = &self.cells[o].center;
                        let d = (c.center[0] - oc[0]).hypot(c.center[1] - oc[1]);
                        min_center_distance = min_center_distance.min(d);
                        if d < r2 * (1.0 - 1e-9) {
                            return Err(ApproxError::Validation(format!(
                                "inner balls of cells {} and {o} overlap (centers {d} apart, need {r2})",
                                c.id
                            )));
                        }
                    }
                }
            }
        }
        if min_center_distance.is_infinite() && self.len() > 1 {
            // every pair is farther apart than one bucket
            min_center_distance = r2;
        }
        Ok(ValidationReport {
            cells: self.len(),
            edges: self.edge_count(),
            min_center_distance,
            components: self.component_count(),
        })
    }

    pub fn to_file(&self) -> ApproxGraphFile {
        ApproxGraphFile {
            level: self.level,
            scale: self.scale,
            kappa: self.kappa,
            cells: self.cells.clone(),
            edges: self.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            space: Some(self.space_tag.clone()),
        }
    }

    pub fn from_file(file: ApproxGraphFile) -> Result<Self, ApproxError> {
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        let mut g = Self::new(
            file.level,
            file.scale,
            file.kappa,
            file.cells,
            &edges,
            file.space.unwrap_or_else(|| "file".into()),
        )?;
        g.validation = Some(g.validate()?);
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("graph serializes")
    }
}

/// JSON layout of an approximation graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApproxGraphFile {
    pub level: u32,
    pub scale: f64,
    pub kappa: f64,
    pub cells: Vec<Cell>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<String>,
}

/// Parses and validates a graph from JSON text.
pub fn parse_approximation(text: &str) -> Result<ApproxGraph, ApproxError> {
    let file: ApproxGraphFile =
        serde_json::from_str(text).map_err(|e| ApproxError::Parse(e.to_string()))?;
    ApproxGraph::from_file(file)
}

pub fn load_approximation(path: impl AsRef<Path>) -> Result<ApproxGraph, ApproxError> {
    parse_approximation(&std::fs::read_to_string(path)?)
}

/// Integer-lattice cells with king-move adjacency, ids in row-major order.
fn lattice_graph(
    level: u32,
    side: u64,
    positions: Vec<(u64, u64, String)>,
    tag: &str,
) -> ApproxGraph {
    let scale = 1.0 / side as f64;
    let mut positions = positions;
    positions.sort_by_key(|&(x, y, _)| (y, x));
    let mut index = HashMap::with_capacity(positions.len());
    for (id, (x, y, _)) in positions.iter().enumerate() {
        index.insert((*x, *y), id);
    }
    let cells: Vec<Cell> = positions
        .iter()
        .enumerate()
        .map(|(id, (x, y, addr))| Cell {
            id,
            center: [(*x as f64 + 0.5) * scale, (*y as f64 + 0.5) * scale],
            address: addr.clone(),
        })
        .collect();
    let mut edges = Vec::new();
    for (id, &(x, y, _)) in positions.iter().enumerate() {
        for (dx, dy) in [(1i64, -1i64), (1, 0), (1, 1), (0, 1)] {
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx < 0 || ny < 0 {
                continue;
            }
            if let Some(&o) = index.get(&(nx as u64, ny as u64)) {
                edges.push((id, o));
            }
        }
    }
    ApproxGraph::new(level, scale, 2.0, cells, &edges, tag).expect("lattice graph is well formed")
}

/// Dyadic squares of side `2^{-k}` tiling the unit square.
pub fn grid_approximation(k: u32) -> Result<ApproxGraph, ApproxError> {
    if k > MAX_GRID_LEVEL {
        return Err(ApproxError::LevelTooLarge {
            space: "grid",
            level: k,
            max: MAX_GRID_LEVEL,
        });
    }
    let side = 1u64 << k;
    let mut positions = Vec::with_capacity((side * side) as usize);
    for y in 0..side {
        for x in 0..side {
            // base-4 digit per level: quadrant (x bit) + 2·(y bit), coarse first
            let address: String = (0..k)
                .rev()
                .map(|b| {
                    let d = ((x >> b) & 1) + 2 * ((y >> b) & 1);
                    char::from(b'0' + d as u8)
                })
                .collect();
            positions.push((x, y, address));
        }
    }
    Ok(lattice_graph(k, side, positions, "grid"))
}

/// Level-k squares of the Sierpinski carpet: base-3 addresses over the
/// digits `{0..8} \ {4}` (digit `d` ↦ column `d mod 3`, row `d div 3`).
pub fn carpet_approximation(k: u32) -> Result<ApproxGraph, ApproxError> {
    if k > MAX_CARPET_LEVEL {
        return Err(ApproxError::LevelTooLarge {
            space: "carpet",
            level: k,
            max: MAX_CARPET_LEVEL,
        });
    }
    let mut positions: Vec<(u64, u64, String)> = vec![(0, 0, String::new())];
    for _ in 0..k {
        let mut next = Vec::with_capacity(positions.len() * 8);
        for (x, y, addr) in &positions {
            for d in (0..9u64).filter(|&d| d != 4) {
                let mut a = addr.clone();
                a.push(char::from(b'0' + d as u8));
                next.push((x * 3 + d % 3, y * 3 + d / 3, a));
            }
        }
        positions = next;
    }
    Ok(lattice_graph(k, 3u64.pow(k), positions, "carpet"))
}
