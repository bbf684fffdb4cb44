//! Seeded random instances for the Hölder builder: small clusters in the
//! unit square, far apart relative to their diameters, plus background
//! points.

use confdimlab::holder::minimal_separation;
use confdimlab::metric::{min_pairwise_separation, FiniteMetricSpace, SetCollection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_POINTS: usize = 1500;

pub struct Instance {
    pub space: FiniteMetricSpace,
    pub sets: SetCollection,
    pub z1: usize,
    pub z2: usize,
    pub separation: f64,
}

pub fn instance(seed: u64, alpha: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = minimal_separation(alpha) * 1.05;
    let count = rng.gen_range(10..=40);
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(count);
    while centers.len() < count {
        let c = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
        if centers.iter().all(|o| dist(o, &c) > 0.02) {
            centers.push(c);
        }
    }
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut sets = Vec::with_capacity(count);
    for (i, c) in centers.iter().enumerate() {
        let nearest = centers
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, o)| dist(o, c))
            .fold(f64::INFINITY, f64::min);
        let r_max = nearest / (2.0 * (d + 2.0));
        // log-uniform radius spreads the sets over many diameter buckets
        let r = r_max * 10f64.powf(-rng.gen_range(0.0..3.0));
        let size = rng.gen_range(2..=5);
        let mut set = Vec::with_capacity(size);
        for _ in 0..size {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let rad = r * rng.gen_range(0.2..1.0);
            set.push(points.len());
            points.push(vec![c[0] + rad * angle.cos(), c[1] + rad * angle.sin()]);
        }
        sets.push(set);
    }
    let background = rng.gen_range(200..=MAX_POINTS - points.len());
    let first_background = points.len();
    for _ in 0..background {
        points.push(vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
    }
    let space = FiniteMetricSpace::from_points(points).expect("distinct random points");
    let sets = SetCollection::new(&space, sets).expect("disjoint clusters");
    let separation = min_pairwise_separation(&sets, &space).expect("at least two sets");
    let z1 = rng.gen_range(first_background..space.len());
    let mut z2 = z1;
    while z2 == z1 {
        z2 = rng.gen_range(first_background..space.len());
    }
    Instance {
        space,
        sets,
        z1,
        z2,
        separation,
    }
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}
