//! Small graphs with known modulus behaviour and the property checks run on
//! random graphs.

use confdimlab::approx::{grid_approximation, ApproxGraph, Cell};
use confdimlab::modulus::{p_mass, shortest_curve, solve_modulus, CurveFamilySpec};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn graph(n: usize, edges: &[(usize, usize)], tag: &str) -> ApproxGraph {
    let cells = (0..n)
        .map(|i| Cell {
            id: i,
            center: [i as f64, 0.0],
            address: i.to_string(),
        })
        .collect();
    ApproxGraph::new(0, 1.0, 2.0, cells, edges, tag).unwrap()
}

pub fn path(n: usize) -> (ApproxGraph, CurveFamilySpec) {
    let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    (graph(n, &edges, "path"), CurveFamilySpec::connector(vec![0], vec![n - 1]))
}

pub fn cycle(n: usize) -> (ApproxGraph, CurveFamilySpec) {
    let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    (graph(n, &edges, "cycle"), CurveFamilySpec::connector(vec![0], vec![n / 2]))
}

pub fn grid(w: usize, h: usize) -> (ApproxGraph, CurveFamilySpec) {
    let id = |x: usize, y: usize| y * w + x;
    let mut edges = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                edges.push((id(x, y), id(x + 1, y)));
            }
            if y + 1 < h {
                edges.push((id(x, y), id(x, y + 1)));
            }
        }
    }
    let left = (0..h).map(|y| id(0, y)).collect();
    let right = (0..h).map(|y| id(w - 1, y)).collect();
    (graph(w * h, &edges, "grid"), CurveFamilySpec::connector(left, right))
}

/// Two poles joined by internally disjoint paths with the given numbers of
/// interior cells.
pub fn theta(arms: &[usize]) -> (ApproxGraph, CurveFamilySpec) {
    let mut edges = Vec::new();
    let mut next = 2;
    for &len in arms {
        let mut prev = 0;
        for _ in 0..len {
            edges.push((prev, next));
            prev = next;
            next += 1;
        }
        edges.push((prev, 1));
    }
    (graph(next, &edges, "theta"), CurveFamilySpec::connector(vec![0], vec![1]))
}

pub fn complete(n: usize) -> (ApproxGraph, CurveFamilySpec) {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            edges.push((a, b));
        }
    }
    (graph(n, &edges, "complete"), CurveFamilySpec::connector(vec![0, 1], vec![n - 1]))
}

/// 25 graphs with at most 10 cells.
pub fn corpus() -> Vec<(String, ApproxGraph, CurveFamilySpec)> {
    let mut out = Vec::new();
    let mut add = |name: String, (g, f): (ApproxGraph, CurveFamilySpec)| out.push((name, g, f));
    for n in 2..=6 {
        add(format!("path{n}"), path(n));
    }
    for n in 4..=8 {
        add(format!("cycle{n}"), cycle(n));
    }
    for (w, h) in [(2, 2), (2, 3), (3, 2), (3, 3), (4, 2)] {
        add(format!("grid{w}x{h}"), grid(w, h));
    }
    for arms in [vec![1, 1, 1], vec![1, 2, 3], vec![0, 2, 2], vec![2, 2, 2], vec![1, 3, 4]] {
        add(format!("theta{arms:?}"), theta(&arms));
    }
    for n in [4, 5] {
        add(format!("complete{n}"), complete(n));
    }
    add("grid-diagonal2".into(), {
        let g = grid_approximation(1).unwrap();
        let f = CurveFamilySpec::connector(vec![0], vec![3]);
        (g, f)
    });
    add("two-paths".into(), {
        let g = graph(6, &[(0, 1), (1, 2), (3, 4), (4, 5)], "two-paths");
        (g, CurveFamilySpec::connector(vec![0, 3], vec![2, 5]))
    });
    add("explicit".into(), {
        let (g, _) = grid(3, 3);
        let f = CurveFamilySpec::explicit(vec![vec![0, 1, 2], vec![0, 3, 4, 5, 8], vec![6, 7, 8]]);
        (g, f)
    });
    out
}

/// Connected random graph: a random tree on `n` cells plus extra edges; the
/// first `n − 1` edges are the tree.
pub fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (4usize..9).prop_flat_map(|n| {
        let parents = proptest::collection::vec(any::<prop::sample::Index>(), n - 1);
        let extra = proptest::collection::vec((0..n, 0..n), 0..n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut edges: Vec<(usize, usize)> = parents
                .iter()
                .enumerate()
                .map(|(i, ix)| (ix.index(i + 1), i + 1))
                .collect();
            for (a, b) in extra {
                let e = (a.min(b), a.max(b));
                if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == e) {
                    edges.push(e);
                }
            }
            (n, edges)
        })
    })
}

/// Families on the complete graph `K_10`, where every cell set is a curve:
/// a random family and the same curves each enlarged by one cell.
pub fn nested_families() -> impl Strategy<Value = (Vec<Vec<usize>>, Vec<Vec<usize>>)> {
    (
        proptest::collection::vec(proptest::collection::btree_set(0usize..10, 1..5), 1..5),
        proptest::collection::vec(0usize..10, 1..5),
    )
        .prop_map(|(curves, extra)| {
            let short = curves.iter().map(|c| c.iter().copied().collect()).collect();
            let long = curves
                .iter()
                .zip(extra.iter().cycle())
                .map(|(c, &e)| {
                    let mut c = c.clone();
                    c.insert(e);
                    c.into_iter().collect()
                })
                .collect();
            (short, long)
        })
}

pub fn check_admissible(n: usize, edges: &[(usize, usize)], p: f64) -> Result<(), TestCaseError> {
    let g = graph(n, edges, "random");
    let f = CurveFamilySpec::connector(vec![0], vec![n - 1]);
    let r = solve_modulus(&g, &f, p, 1e-6).unwrap();
    let (_, len) = shortest_curve(&g, &r.rho_star, &[0], &[n - 1]).unwrap();
    prop_assert!(len >= 1.0 - 1e-12);
    prop_assert!(r.lower_bound <= r.value * (1.0 + 1e-12));
    prop_assert!((p_mass(&r.rho_star, p).unwrap() - r.value).abs() <= 1e-12 * r.value);
    Ok(())
}

/// Adding edges adds curves, so the modulus cannot drop.
pub fn check_monotone(n: usize, edges: &[(usize, usize)], p: f64) -> Result<(), TestCaseError> {
    let f = CurveFamilySpec::connector(vec![0], vec![n - 1]);
    let fewer = graph(n, &edges[..n - 1], "tree");
    let more = graph(n, edges, "random");
    let a = solve_modulus(&fewer, &f, p, 1e-7).unwrap().value;
    let b = solve_modulus(&more, &f, p, 1e-7).unwrap().value;
    prop_assert!(a <= b * (1.0 + 1e-5), "{} > {}", a, b);
    Ok(())
}

pub fn check_subadditive(n: usize, edges: &[(usize, usize)], p: f64) -> Result<(), TestCaseError> {
    let g = graph(n, edges, "random");
    let f1 = CurveFamilySpec::connector(vec![0], vec![n - 1]);
    let f2 = CurveFamilySpec::connector(vec![1], vec![n - 2]);
    let m1 = solve_modulus(&g, &f1, p, 1e-7).unwrap().value;
    let m2 = solve_modulus(&g, &f2, p, 1e-7).unwrap().value;
    let both = solve_modulus(&g, &CurveFamilySpec::union(vec![f1, f2]), p, 1e-7).unwrap().value;
    prop_assert!(both <= (m1 + m2) * (1.0 + 1e-5));
    prop_assert!(both >= m1.max(m2) * (1.0 - 1e-5));
    Ok(())
}

/// Every curve of `long` contains a curve of `short`.
pub fn check_overflow(short: Vec<Vec<usize>>, long: Vec<Vec<usize>>, p: f64) -> Result<(), TestCaseError> {
    let (g, _) = complete(10);
    let a = solve_modulus(&g, &CurveFamilySpec::explicit(short), p, 1e-7).unwrap().value;
    let b = solve_modulus(&g, &CurveFamilySpec::explicit(long), p, 1e-7).unwrap().value;
    prop_assert!(b <= a * (1.0 + 1e-5));
    Ok(())
}
