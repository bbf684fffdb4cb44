//! Finite metric spaces and the relative distance between subsets.
//!
//! Sets are finite samples of closed subsets, so `dist(A, B)` is the minimum
//! over point pairs and `diam A` the maximum over point pairs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Spaces above this size skip the cubic triangle-inequality scan.
pub const TRIANGLE_CHECK_LIMIT: usize = 5000;
/// Relative slack allowed in the triangle inequality.
pub const TRIANGLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("set is empty")]
    EmptySet,
    #[error("set has zero diameter (fewer than two distinct points)")]
    ZeroDiameter,
    #[error("collection has {0} set(s), at least two are required")]
    SingleSet(usize),
    #[error("point id {id} out of range for a space of {len} points")]
    UnknownPoint { id: usize, len: usize },
    #[error("invalid distance between {i} and {j}: {reason}")]
    InvalidDistance { i: usize, j: usize, reason: String },
    #[error("triangle inequality fails: d({x},{z}) = {xz} > d({x},{y}) + d({y},{z}) = {via}")]
    Triangle {
        x: usize,
        y: usize,
        z: usize,
        xz: f64,
        via: f64,
    },
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A finite metric space on dense point ids `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricSpace {
    coords: Option<Vec<Vec<f64>>>,
    n: usize,
    dist: Vec<f64>,
    diam: f64,
}

impl FiniteMetricSpace {
    /// Euclidean metric on the given coordinates.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self, MetricError> {
        let n = points.len();
        if let Some(first) = points.first() {
            let dim = first.len();
            if let Some((i, _)) = points.iter().enumerate().find(|(_, p)| p.len() != dim) {
                return Err(MetricError::Parse(format!(
                    "point {i} has dimension {} (expected {dim})",
                    points[i].len()
                )));
            }
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(MetricError::Parse("non-finite coordinate".into()));
        }
        let mut dist = vec![0.0; n * n];
        dist.par_chunks_mut(n.max(1))
            .enumerate()
            .for_each(|(i, row)| {
                for (j, slot) in row.iter_mut().enumerate() {
                    *slot = euclid(&points[i], &points[j]);
                }
            });
        let space = Self::assemble(Some(points), n, dist);
        space.check_separation()?;
        Ok(space)
    }

    /// Builds a space from the row-major upper triangle (diagonal excluded)
    /// of a distance matrix: `d(0,1), d(0,2), …, d(0,n-1), d(1,2), …`.
    pub fn from_upper_triangle(n: usize, upper: &[f64]) -> Result<Self, MetricError> {
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(MetricError::Parse(format!(
                "expected {expected} upper-triangle entries for n = {n}, got {}",
                upper.len()
            )));
        }
        let mut dist = vec![0.0; n * n];
        let mut it = upper.iter();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = *it.next().expect("length checked");
                if !d.is_finite() || d <= 0.0 {
                    return Err(MetricError::InvalidDistance {
                        i,
                        j,
                        reason: format!("{d} is not a positive finite number"),
                    });
                }
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let space = Self::assemble(None, n, dist);
        if n <= TRIANGLE_CHECK_LIMIT {
            space.check_triangle()?;
        }
        Ok(space)
    }

    fn assemble(coords: Option<Vec<Vec<f64>>>, n: usize, dist: Vec<f64>) -> Self {
        let diam = dist.par_iter().copied().reduce(|| 0.0, f64::max);
        Self {
            coords,
            n,
            dist,
            diam,
        }
    }

    fn check_separation(&self) -> Result<(), MetricError> {
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.dist(i, j) <= 0.0 {
                    return Err(MetricError::InvalidDistance {
                        i,
                        j,
                        reason: "distinct points at distance zero".into(),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_triangle(&self) -> Result<(), MetricError> {
        let n = self.n;
        let bad = (0..n).into_par_iter().find_map_first(|x| {
            for y in 0..n {
                let dxy = self.dist(x, y);
                for z in 0..n {
                    let via = dxy + self.dist(y, z);
                    let xz = self.dist(x, z);
                    if xz > via * (1.0 + TRIANGLE_TOLERANCE) {
                        return Some(MetricError::Triangle { x, y, z, xz, via });
                    }
                }
            }
            None
        });
        match bad {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    /// Row of distances from `i` to every point.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    pub fn diam(&self) -> f64 {
        self.diam
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn check_ids(&self, ids: &[usize]) -> Result<(), MetricError> {
        match ids.iter().find(|&&id| id >= self.n) {
            Some(&id) => Err(MetricError::UnknownPoint { id, len: self.n }),
            None => Ok(()),
        }
    }

    /// Diameter of a subset; zero for singletons.
    pub fn set_diam(&self, set: &[usize]) -> f64 {
        let mut d: f64 = 0.0;
        for (a, &x) in set.iter().enumerate() {
            for &y in &set[a + 1..] {
                d = d.max(self.dist(x, y));
            }
        }
        d
    }

    /// `min` over point pairs; zero when the sets share a point.
    pub fn set_distance(&self, a: &[usize], b: &[usize]) -> f64 {
        let mut d = f64::INFINITY;
        for &x in a {
            let row = self.row(x);
            for &y in b {
                d = d.min(row[y]);
            }
        }
        d
    }

    /// Distance from every point to the subset `set`.
    pub fn distance_to_set(&self, set: &[usize]) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.n];
        for &s in set {
            for (o, &d) in out.iter_mut().zip(self.row(s)) {
                if d < *o {
                    *o = d;
                }
            }
        }
        out
    }

    /// `dist(A,B) / min(diam A, diam B)`.
    pub fn relative_distance(&self, a: &[usize], b: &[usize]) -> Result<f64, MetricError> {
        if a.is_empty() || b.is_empty() {
            return Err(MetricError::EmptySet);
        }
        self.check_ids(a)?;
        self.check_ids(b)?;
        let da = self.set_diam(a);
        let db = self.set_diam(b);
        let m = da.min(db);
        if m <= 0.0 {
            return Err(MetricError::ZeroDiameter);
        }
        Ok(self.set_distance(a, b) / m)
    }

    /// Returns the space scaled to diameter one and the original diameter.
    pub fn rescale_to_unit_diameter(&self) -> Result<(FiniteMetricSpace, f64), MetricError> {
        if self.diam <= 0.0 {
            return Err(MetricError::ZeroDiameter);
        }
        let scale = self.diam;
        let dist: Vec<f64> = self.dist.iter().map(|d| d / scale).collect();
        let coords = self.coords.as_ref().map(|pts| {
            pts.iter()
                .map(|p| p.iter().map(|c| c / scale).collect())
                .collect()
        });
        let mut out = Self::assemble(coords, self.n, dist);
        // The farthest pair maps to exactly 1.0, but keep the cached value honest.
        out.diam = out.diam.min(1.0);
        Ok((out, scale))
    }

    /// Multiplies every distance by `factor`.
    pub fn scaled(&self, factor: f64) -> FiniteMetricSpace {
        let dist = self.dist.iter().map(|d| d * factor).collect();
        let coords = self.coords.as_ref().map(|pts| {
            pts.iter()
                .map(|p| p.iter().map(|c| c * factor).collect())
                .collect()
        });
        Self::assemble(coords, self.n, dist)
    }

    pub fn to_file(&self) -> MetricSpaceFile {
        match &self.coords {
            Some(points) => MetricSpaceFile::Points {
                points: points.clone(),
            },
            None => {
                let mut upper = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
                for i in 0..self.n {
                    for j in (i + 1)..self.n {
                        upper.push(self.dist(i, j));
                    }
                }
                MetricSpaceFile::Matrix {
                    n: self.n,
                    dist: upper,
                }
            }
        }
    }

    pub fn from_file(file: MetricSpaceFile) -> Result<Self, MetricError> {
        match file {
            MetricSpaceFile::Points { points } => Self::from_points(points),
            MetricSpaceFile::Matrix { n, dist } => Self::from_upper_triangle(n, &dist),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let text = std::fs::read_to_string(path)?;
        let file: MetricSpaceFile =
            serde_json::from_str(&text).map_err(|e| MetricError::Parse(e.to_string()))?;
        Self::from_file(file)
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// On-disk metric space: Euclidean points or an upper-triangle matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSpaceFile {
    Points { points: Vec<Vec<f64>> },
    Matrix { n: usize, dist: Vec<f64> },
}

/// A list of nonempty point subsets of one space, with cached diameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SetCollection {
    sets: Vec<Vec<usize>>,
    diams: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetCollectionFile {
    pub sets: Vec<Vec<usize>>,
}

impl SetCollection {
    /// Ids within each set are sorted and deduplicated.
    pub fn new(space: &FiniteMetricSpace, sets: Vec<Vec<usize>>) -> Result<Self, MetricError> {
        let mut clean = Vec::with_capacity(sets.len());
        for mut s in sets {
            if s.is_empty() {
                return Err(MetricError::EmptySet);
            }
            space.check_ids(&s)?;
            s.sort_unstable();
            s.dedup();
            clean.push(s);
        }
        let diams = clean.iter().map(|s| space.set_diam(s)).collect();
        Ok(Self { sets: clean, diams })
    }

    pub fn empty() -> Self {
        Self {
            sets: Vec::new(),
            diams: Vec::new(),
        }
    }

    pub fn load(space: &FiniteMetricSpace, path: impl AsRef<Path>) -> Result<Self, MetricError> {
        let text = std::fs::read_to_string(path)?;
        let file: SetCollectionFile =
            serde_json::from_str(&text).map_err(|e| MetricError::Parse(e.to_string()))?;
        Self::new(space, file.sets)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    pub fn set(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    pub fn diam(&self, i: usize) -> f64 {
        self.diams[i]
    }

    /// Index of the set containing `point`, if any (first match).
    pub fn owner_of(&self, point: usize) -> Option<usize> {
        self.sets
            .iter()
            .position(|s| s.binary_search(&point).is_ok())
    }
}

/// Minimum relative distance over unordered pairs of sets.
pub fn min_pairwise_separation(
    c: &SetCollection,
    space: &FiniteMetricSpace,
) -> Result<f64, MetricError> {
    if c.len() < 2 {
        return Err(MetricError::SingleSet(c.len()));
    }
    if c.diams.iter().any(|&d| d <= 0.0) {
        return Err(MetricError::ZeroDiameter);
    }
    let n = c.len();
    let best = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut m = f64::INFINITY;
            for j in (i + 1)..n {
                let d = space.set_distance(&c.sets[i], &c.sets[j]) / c.diams[i].min(c.diams[j]);
                m = m.min(d);
            }
            m
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}
