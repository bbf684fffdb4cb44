//! Hölder functions that are constant on a well-separated set collection.
//!
//! The function is built as a sum of correction layers `u = v₋₁ + v₀ + v₁ + …`.
//! Layer `k` handles the sets whose diameter lies in `(2^{-(k+1)}, 2^{-k}]`:
//! it is prescribed on those sets (so the partial sum becomes constant on
//! each of them) and to be zero away from a `Λ·2^{-k}` neighbourhood, then
//! extended to the whole space by the McShane formula and truncated to the
//! sup norm of the prescribed data.
//!
//! Every build is followed by an exhaustive certificate: Hölder seminorm over
//! all point pairs, exact constancy on sets, distinct values across sets,
//! separation of the two marked points, and per-layer sup-norm / Lipschitz
//! measurements against the feasible-sequence bounds.

use crate::metric::{min_pairwise_separation, FiniteMetricSpace, MetricError, SetCollection};
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BTreeMap;
use thiserror::Error;

/// Neighbourhood factor `Λ`; the smallest admissible value.
pub const SUPPORT_FACTOR: f64 = 4.0;
/// Number of hash seeds tried before giving up.
pub const MAX_ATTEMPTS: u64 = 8;
const REL_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HolderError {
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("separation D = {d} gives gap n = {gap}, too small for this alpha; the smallest D that works is {min_d}")]
    DTooSmall { d: f64, gap: i64, min_d: f64 },
    #[error("collection separation {measured} is below the required {required}")]
    SeparationTooSmall { measured: f64, required: f64 },
    #[error("both marked points lie in set {0}")]
    SamePointClass(usize),
    #[error("marked points must be distinct")]
    SamePoint,
    #[error("no seed among {0} attempts produced an injective, separating function")]
    RetryExhausted(u64),
    #[error("space diameter {0} exceeds 1; rescale first")]
    NotUnitScale(f64),
    #[error("partial function is not {l}-Lipschitz: points {x}, {y} give ratio {ratio}")]
    NotLipschitz {
        x: usize,
        y: usize,
        ratio: f64,
        l: f64,
    },
    #[error("extension domain is empty")]
    EmptyDomain,
    #[error("construction invariant broken: {0}")]
    Invariant(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Constants of the layered construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderParams {
    pub alpha: f64,
    /// Separation `D` the parameters were derived from.
    pub separation: f64,
    /// `Λ`.
    pub support_factor: f64,
    /// `n = ⌊log₂(D / 6Λ)⌋`: buckets whose supports interact differ by at least `n`.
    pub gap: u32,
    /// `λ` in `L_j = e^{λ j}`.
    pub growth: f64,
}

impl HolderParams {
    /// `L_j`: zero for `j ≤ -2`, `e^{λ j}` otherwise.
    pub fn weight(&self, j: i64) -> f64 {
        if j <= -2 {
            0.0
        } else {
            (self.growth * j as f64).exp()
        }
    }

    /// `L̂_k = Σ_{j≥1} L_{k - j n}` (finite).
    pub fn accumulated_weight(&self, k: i64) -> f64 {
        let n = self.gap as i64;
        let mut sum = 0.0;
        let mut idx = k - n;
        while idx >= -1 {
            sum += self.weight(idx);
            idx -= n;
        }
        sum
    }

    /// `r_k = 2^{-k}`.
    pub fn radius(k: i64) -> f64 {
        (-(k as f64)).exp2()
    }

    /// `e^λ · 2^{α-1}`; below one means the layer bound does not grow with `k`.
    pub fn decay_factor(&self) -> f64 {
        self.growth.exp() * (self.alpha - 1.0).exp2()
    }

    /// `L̂_k ≤ L_k` for every `0 ≤ k ≤ k_max`.
    pub fn feasible_up_to(&self, k_max: i64) -> bool {
        (0..=k_max).all(|k| self.accumulated_weight(k) <= self.weight(k))
    }

    /// The theorem's Hölder bound `10 · 2^α`.
    pub fn holder_bound(&self) -> f64 {
        10.0 * self.alpha.exp2()
    }
}

fn gap_for(d: f64) -> i64 {
    // largest n with 6Λ·2^n ≤ D
    let base = 6.0 * SUPPORT_FACTOR;
    if d < base {
        return -1;
    }
    let mut n = 0i64;
    while base * ((n + 1) as f64).exp2() <= d {
        n += 1;
    }
    n
}

fn gap_is_enough(gap: i64, alpha: f64) -> bool {
    gap >= 1 && gap as f64 * (1.0 - alpha) > 1.0
}

/// Smallest separation for which [`choose_parameters`] succeeds at `alpha`.
pub fn minimal_separation(alpha: f64) -> f64 {
    let mut n = 1i64;
    while !gap_is_enough(n, alpha) {
        n += 1;
    }
    6.0 * SUPPORT_FACTOR * (n as f64).exp2()
}

/// Picks `Λ = 4`, `n = ⌊log₂(D/24)⌋` and `λ` at the midpoint of
/// `(ln 2 / n, (1-α) ln 2)`, which makes `L_j = e^{λj}` feasible and the
/// layer bound non-increasing.
pub fn choose_parameters(alpha: f64, d: f64) -> Result<HolderParams, HolderError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HolderError::BadAlpha(alpha));
    }
    let gap = gap_for(d);
    if d <= 8.0 || !gap_is_enough(gap, alpha) {
        return Err(HolderError::DTooSmall {
            d,
            gap,
            min_d: minimal_separation(alpha),
        });
    }
    let ln2 = std::f64::consts::LN_2;
    let low = ln2 / gap as f64;
    let high = (1.0 - alpha) * ln2;
    Ok(HolderParams {
        alpha,
        separation: d,
        support_factor: SUPPORT_FACTOR,
        gap: gap as u32,
        growth: 0.5 * (low + high),
    })
}

fn bucket_of(diam: f64) -> u32 {
    let mut k = (-diam.log2()).floor().max(0.0) as i64;
    while k > 0 && diam > HolderParams::radius(k) {
        k -= 1;
    }
    while diam <= HolderParams::radius(k + 1) {
        k += 1;
    }
    k as u32
}

/// Groups set indices by `k` with `2^{-(k+1)} < diam ≤ 2^{-k}`.
pub fn bucketize(
    c: &SetCollection,
    space: &FiniteMetricSpace,
) -> Result<BTreeMap<u32, Vec<usize>>, HolderError> {
    if space.diam() > 1.0 {
        return Err(HolderError::NotUnitScale(space.diam()));
    }
    let mut buckets: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for i in 0..c.len() {
        let d = c.diam(i);
        if d <= 0.0 {
            return Err(MetricError::ZeroDiameter.into());
        }
        buckets.entry(bucket_of(d)).or_default().push(i);
    }
    Ok(buckets)
}

/// McShane extension `f(x) = min_w (g(w) + L·d(x, w))` of `partial`.
///
/// Fails with a witness pair when `partial` is not `L`-Lipschitz.
pub fn mcshane_extend(
    partial: &[(usize, f64)],
    l: f64,
    space: &FiniteMetricSpace,
) -> Result<Vec<f64>, HolderError> {
    if partial.is_empty() {
        return Err(HolderError::EmptyDomain);
    }
    for &(id, _) in partial {
        space.check_ids(&[id])?;
    }
    for (a, &(x, fx)) in partial.iter().enumerate() {
        for &(y, fy) in &partial[a + 1..] {
            let d = space.dist(x, y);
            let diff = (fx - fy).abs();
            if d == 0.0 {
                if diff > 0.0 {
                    return Err(HolderError::NotLipschitz {
                        x,
                        y,
                        ratio: f64::INFINITY,
                        l,
                    });
                }
                continue;
            }
            if diff > l * d * (1.0 + REL_SLACK) {
                return Err(HolderError::NotLipschitz {
                    x,
                    y,
                    ratio: diff / d,
                    l,
                });
            }
        }
    }
    let mut out: Vec<f64> = (0..space.len())
        .into_par_iter()
        .map(|x| {
            let row = space.row(x);
            partial
                .iter()
                .map(|&(w, fw)| fw + l * row[w])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    for &(w, fw) in partial {
        out[w] = fw;
    }
    Ok(out)
}

/// Truncation to `[-bound, bound]`; never increases a Lipschitz constant.
pub fn clamp_symmetric(values: &mut [f64], bound: f64) {
    for v in values {
        *v = v.clamp(-bound, bound);
    }
}

/// Measurements for one correction layer.
#[derive(Debug, Clone, Serialize)]
pub struct LayerRecord {
    pub k: u32,
    pub sets: usize,
    pub radius: f64,
    /// `L_k`.
    pub weight: f64,
    /// `L̂_k`.
    pub accumulated_weight: f64,
    /// Measured Lipschitz constant of the prescribed data on its domain.
    pub partial_lipschitz: f64,
    /// Constant used by the McShane step: `max(L̂_k, partial_lipschitz)`.
    pub extension_constant: f64,
    pub sup_norm: f64,
    pub lipschitz: f64,
    /// `2·L_k·r_k`.
    pub sup_bound: f64,
    /// Nonzero values occur only inside the `Λ r_k` neighbourhood.
    pub support_ok: bool,
}

impl LayerRecord {
    pub fn passes(&self) -> bool {
        self.support_ok
            && self.sup_norm <= self.sup_bound * (1.0 + REL_SLACK)
            && self.lipschitz <= self.weight * (1.0 + REL_SLACK)
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Witnesses {
    /// Pair attaining the measured seminorm.
    pub seminorm_pair: Option<(usize, usize)>,
    /// (set, point) where the set value differs from its first point.
    pub non_constant: Option<(usize, usize)>,
    /// Two sets carrying the same value.
    pub collision: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderCertificate {
    pub alpha: f64,
    /// `max |u(x) - u(y)| / d(x,y)^α` over all pairs.
    pub holder_seminorm: f64,
    /// `10 · 2^α`.
    pub bound: f64,
    pub constancy: bool,
    pub injective_on_sets: bool,
    pub separates: bool,
    pub u_z1: f64,
    pub u_z2: f64,
    /// Bucket-gap condition on interacting neighbourhoods (always true when
    /// the certificate was produced without a construction trace).
    pub support_separation: bool,
    pub layers: Vec<LayerRecord>,
    pub witnesses: Witnesses,
}

impl HolderCertificate {
    pub fn passes(&self) -> bool {
        self.holder_seminorm <= self.bound
            && self.constancy
            && self.injective_on_sets
            && self.separates
            && self.support_separation
            && self.layers.iter().all(LayerRecord::passes)
    }
}

/// Exhaustive check of a candidate function.
///
/// Constancy is exact equality of stored values.
pub fn verify_certificate(
    u: &[f64],
    space: &FiniteMetricSpace,
    c: &SetCollection,
    alpha: f64,
    z1: usize,
    z2: usize,
) -> HolderCertificate {
    let n = space.len();
    let (holder_seminorm, pair) = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = space.row(i);
            let mut best = (0.0f64, None);
            for j in (i + 1)..n {
                let r = (u[i] - u[j]).abs() / row[j].powf(alpha);
                if r > best.0 {
                    best = (r, Some((i, j)));
                }
            }
            best
        })
        .reduce(
            || (0.0, None),
            // ties go to the smaller pair so the witness is thread-independent
            |a, b| match b.0.total_cmp(&a.0) {
                Ordering::Greater => b,
                Ordering::Equal if b.1.is_some() && (a.1.is_none() || b.1 < a.1) => b,
                _ => a,
            },
        );

    let mut witnesses = Witnesses {
        seminorm_pair: pair,
        ..Default::default()
    };
    let mut constancy = true;
    'sets: for (ci, set) in c.sets().iter().enumerate() {
        let first = u[set[0]];
        for &x in &set[1..] {
            if u[x].to_bits() != first.to_bits() {
                constancy = false;
                witnesses.non_constant = Some((ci, x));
                break 'sets;
            }
        }
    }

    let mut values: Vec<(f64, usize)> = c.sets().iter().enumerate().map(|(i, s)| (u[s[0]], i)).collect();
    values.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut injective_on_sets = true;
    for w in values.windows(2) {
        if w[0].0 == w[1].0 {
            injective_on_sets = false;
            witnesses.collision = Some((w[0].1.min(w[1].1), w[0].1.max(w[1].1)));
            break;
        }
    }

    HolderCertificate {
        alpha,
        holder_seminorm,
        bound: 10.0 * alpha.exp2(),
        constancy,
        injective_on_sets,
        separates: u[z1] != u[z2],
        u_z1: u[z1],
        u_z2: u[z2],
        support_separation: true,
        layers: Vec::new(),
        witnesses,
    }
}

/// Result of [`build_holder`].
#[derive(Debug, Clone, Serialize)]
pub struct HolderOutcome {
    /// Function values indexed by point id.
    pub u: Vec<f64>,
    /// Constant value on each set, in collection order.
    pub set_values: Vec<f64>,
    /// Certificate measured in the unit-diameter rescaling of the space.
    pub certificate: HolderCertificate,
    pub params: HolderParams,
    /// Original diameter; distances were divided by it before building.
    pub scale: f64,
    /// Hash seed that produced the function.
    pub seed_used: u64,
    /// Whether the Lipschitz start `v₋₁ = e^{-λ} d(·, z₁)` was needed.
    pub seeded_start: bool,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic value in the open interval (0, 1).
fn unit_hash(set: usize, seed: u64) -> f64 {
    let h = splitmix64(seed ^ splitmix64(set as u64 ^ 0xA5A5_5A5A_0F0F_F0F0));
    ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

struct Layers {
    u: Vec<f64>,
    set_values: Vec<f64>,
    records: Vec<LayerRecord>,
}

fn build_layers(
    space: &FiniteMetricSpace,
    c: &SetCollection,
    params: &HolderParams,
    buckets: &BTreeMap<u32, Vec<usize>>,
    z1: usize,
    seed: u64,
    seeded_start: bool,
) -> Result<Layers, HolderError> {
    let n = space.len();
    let mut u: Vec<f64> = if seeded_start {
        let l = params.weight(-1);
        space.row(z1).iter().map(|d| l * d).collect()
    } else {
        vec![0.0; n]
    };
    let mut set_values = vec![f64::NAN; c.len()];
    let mut records = Vec::with_capacity(buckets.len());
    let mut earlier: Vec<usize> = Vec::new();

    for (&k, members) in buckets {
        let ki = k as i64;
        let r = HolderParams::radius(ki);
        let lhat = params.accumulated_weight(ki);
        let reach = params.support_factor * r;

        let mut near = vec![f64::INFINITY; n];
        for &ci in members {
            for &s in c.set(ci) {
                for (o, &d) in near.iter_mut().zip(space.row(s)) {
                    if d < *o {
                        *o = d;
                    }
                }
            }
        }
        let in_nbhd: Vec<bool> = near.iter().map(|&d| d < reach).collect();

        if let Some(&x) = earlier.iter().find(|&&x| in_nbhd[x]) {
            return Err(HolderError::Invariant(format!(
                "point {x} of an earlier bucket lies in the layer-{k} neighbourhood"
            )));
        }

        // Prescribed data on W_k.
        let mut in_w = vec![false; n];
        let mut partial = vec![0.0; n];
        let mut set_points = Vec::new();
        for &ci in members {
            let set = c.set(ci);
            let anchor = set[0];
            let t = unit_hash(ci, seed);
            let uc = u[anchor] + (2.0 * t - 1.0) * lhat * r * 0.5;
            set_values[ci] = uc;
            for &x in set {
                partial[x] = uc - u[x];
                in_w[x] = true;
                set_points.push(x);
            }
        }
        for x in 0..n {
            if !in_nbhd[x] {
                in_w[x] = true;
            }
        }
        let w_points: Vec<usize> = (0..n).filter(|&x| in_w[x]).collect();

        // Only pairs touching a set point can have a nonzero difference.
        let partial_lipschitz = set_points
            .par_iter()
            .map(|&x| {
                let row = space.row(x);
                let mut m = 0.0f64;
                for &y in &w_points {
                    if y != x {
                        m = m.max((partial[x] - partial[y]).abs() / row[y]);
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max);
        let extension_constant = lhat.max(partial_lipschitz);
        let sup_partial = set_points
            .iter()
            .map(|&x| partial[x].abs())
            .fold(0.0, f64::max);

        let v: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|x| {
                if in_w[x] {
                    return partial[x];
                }
                let row = space.row(x);
                let ext = w_points
                    .iter()
                    .map(|&w| partial[w] + extension_constant * row[w])
                    .fold(f64::INFINITY, f64::min);
                ext.clamp(-sup_partial, sup_partial)
            })
            .collect();

        let support: Vec<usize> = (0..n).filter(|&x| v[x] != 0.0).collect();
        let support_ok = support.iter().all(|&x| in_nbhd[x]);
        let sup_norm = support.iter().map(|&x| v[x].abs()).fold(0.0, f64::max);
        let lipschitz = support
            .par_iter()
            .map(|&x| {
                let row = space.row(x);
                let mut m = 0.0f64;
                for y in 0..n {
                    if y != x {
                        m = m.max((v[x] - v[y]).abs() / row[y]);
                    }
                }
                m
            })
            .reduce(|| 0.0, f64::max);

        for x in 0..n {
            u[x] += v[x];
        }
        for &ci in members {
            for &x in c.set(ci) {
                u[x] = set_values[ci];
            }
        }
        earlier.extend_from_slice(&set_points);

        let weight = params.weight(ki);
        records.push(LayerRecord {
            k,
            sets: members.len(),
            radius: r,
            weight,
            accumulated_weight: lhat,
            partial_lipschitz,
            extension_constant,
            sup_norm,
            lipschitz,
            sup_bound: 2.0 * weight * r,
            support_ok,
        });
    }
    Ok(Layers {
        u,
        set_values,
        records,
    })
}

/// Neighbourhood interaction check across buckets: whenever the
/// `Λ r_i`- and `Λ r_j`-neighbourhoods of sets from buckets `i < j` come
/// within `r_{j+1}`, the buckets must be at least `log₂(D / 6Λ)` apart.
fn support_separation_holds(
    space: &FiniteMetricSpace,
    c: &SetCollection,
    params: &HolderParams,
    buckets: &BTreeMap<u32, Vec<usize>>,
) -> bool {
    let needed = (params.separation / (6.0 * params.support_factor)).log2();
    let mut owner = Vec::new();
    for (&k, members) in buckets {
        for &ci in members {
            owner.push((k, ci));
        }
    }
    let nbhd: Vec<Vec<usize>> = owner
        .iter()
        .map(|&(k, ci)| {
            let reach = params.support_factor * HolderParams::radius(k as i64);
            space
                .distance_to_set(c.set(ci))
                .iter()
                .enumerate()
                .filter(|(_, &d)| d < reach)
                .map(|(x, _)| x)
                .collect()
        })
        .collect();
    for a in 0..owner.len() {
        for b in (a + 1)..owner.len() {
            let (i, j) = (owner[a].0.min(owner[b].0), owner[a].0.max(owner[b].0));
            if i == j {
                continue;
            }
            let close = space.set_distance(&nbhd[a], &nbhd[b]) <= HolderParams::radius(j as i64 + 1);
            if close && ((j - i) as f64) < needed {
                return false;
            }
        }
    }
    true
}

/// Builds a Hölder function constant on every set of `c`, injective across
/// sets and separating `z1` from `z2`.
///
/// The space is rescaled to unit diameter first (relative distances are
/// unchanged); the certificate refers to the rescaled metric. Up to
/// [`MAX_ATTEMPTS`] hash seeds starting at `seed` are tried.
pub fn build_holder(
    space: &FiniteMetricSpace,
    c: &SetCollection,
    alpha: f64,
    z1: usize,
    z2: usize,
    seed: u64,
) -> Result<HolderOutcome, HolderError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(HolderError::BadAlpha(alpha));
    }
    space.check_ids(&[z1, z2])?;
    if z1 == z2 {
        return Err(HolderError::SamePoint);
    }
    for (i, set) in c.sets().iter().enumerate() {
        if set.binary_search(&z1).is_ok() && set.binary_search(&z2).is_ok() {
            return Err(HolderError::SamePointClass(i));
        }
    }
    let params = if c.len() >= 2 {
        let measured = min_pairwise_separation(c, space)?;
        choose_parameters(alpha, measured).map_err(|e| match e {
            HolderError::DTooSmall { min_d, .. } => HolderError::SeparationTooSmall {
                measured,
                required: min_d,
            },
            other => other,
        })?
    } else {
        if c.len() == 1 && c.diam(0) <= 0.0 {
            return Err(MetricError::ZeroDiameter.into());
        }
        choose_parameters(alpha, minimal_separation(alpha))?
    };

    let (unit, scale) = space.rescale_to_unit_diameter()?;
    let unit_c = SetCollection::new(&unit, c.sets().to_vec())?;
    let buckets = bucketize(&unit_c, &unit)?;
    if let Some(&k_max) = buckets.keys().next_back() {
        if !params.feasible_up_to(k_max as i64) {
            return Err(HolderError::Invariant("weight sequence is not feasible".into()));
        }
    }
    let support_separation = support_separation_holds(&unit, &unit_c, &params, &buckets);
    if !support_separation {
        return Err(HolderError::Invariant(
            "interacting neighbourhoods from nearby buckets".into(),
        ));
    }

    for attempt in 0..MAX_ATTEMPTS {
        let s = seed.wrapping_add(attempt);
        for seeded_start in [false, true] {
            let layers = build_layers(&unit, &unit_c, &params, &buckets, z1, s, seeded_start)?;
            let mut cert = verify_certificate(&layers.u, &unit, &unit_c, alpha, z1, z2);
            cert.layers = layers.records;
            cert.support_separation = support_separation;
            if !cert.injective_on_sets {
                break;
            }
            if cert.separates {
                return Ok(HolderOutcome {
                    u: layers.u,
                    set_values: layers.set_values,
                    certificate: cert,
                    params,
                    scale,
                    seed_used: s,
                    seeded_start,
                });
            }
        }
    }
    Err(HolderError::RetryExhausted(MAX_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parameters_for_alpha_half_and_d_400() {
        let p = choose_parameters(0.5, 400.0).unwrap();
        assert_eq!(p.gap, 4);
        let ln2 = std::f64::consts::LN_2;
        assert!(p.growth > ln2 / 4.0 && p.growth < 0.5 * ln2);
        assert!((p.growth - 0.5 * (ln2 / 4.0 + 0.5 * ln2)).abs() < 1e-15);
        assert!((-p.growth * 4.0).exp() < 0.5);
        assert!(p.decay_factor() < 1.0);
        assert!(p.feasible_up_to(200));
    }

    #[test]
    fn alpha_close_to_one_needs_huge_d() {
        match choose_parameters(0.99, 100.0) {
            Err(HolderError::DTooSmall { gap, min_d, .. }) => {
                assert_eq!(gap, 2);
                assert!(min_d > 1e30);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn boundary_gap_is_rejected() {
        // D = 96 gives n = 2 = 1/(1 - 0.5): strict inequality fails
        match choose_parameters(0.5, 96.0) {
            Err(HolderError::DTooSmall { gap: 2, min_d, .. }) => assert_eq!(min_d, 192.0),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(choose_parameters(0.5, 192.0).unwrap().gap, 3);
        assert!(choose_parameters(0.5, 8.0).is_err());
        assert!(matches!(
            choose_parameters(1.0, 1e9),
            Err(HolderError::BadAlpha(_))
        ));
    }

    #[test]
    fn accumulated_weight_is_the_finite_sum() {
        let p = choose_parameters(0.3, 100.0).unwrap();
        assert_eq!(p.gap, 2);
        // k = 5, n = 2: L_3 + L_1 + L_{-1}
        let expect = p.weight(3) + p.weight(1) + p.weight(-1);
        assert!((p.accumulated_weight(5) - expect).abs() < 1e-15);
        assert_eq!(p.accumulated_weight(0), 0.0);
        assert_eq!(p.accumulated_weight(1), p.weight(-1));
        assert_eq!(p.weight(-2), 0.0);
    }

    #[test]
    fn bucket_boundaries() {
        assert_eq!(bucket_of(1.0), 0);
        assert_eq!(bucket_of(0.3), 1);
        assert_eq!(bucket_of(0.5), 1);
        assert_eq!(bucket_of(0.5000001), 0);
        assert_eq!(bucket_of(0.25), 2);
        assert_eq!(bucket_of(1e-3), 9);
    }

    #[test]
    fn bucketize_rejects_large_spaces() {
        let s = FiniteMetricSpace::from_points(vec![vec![0.0], vec![2.0]]).unwrap();
        let c = SetCollection::new(&s, vec![vec![0, 1]]).unwrap();
        assert!(matches!(bucketize(&c, &s), Err(HolderError::NotUnitScale(_))));
    }

    #[test]
    fn bucketize_partitions_random_collections() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen::<f64>() * 0.7, rng.gen::<f64>() * 0.7]).collect();
        let s = FiniteMetricSpace::from_points(pts).unwrap();
        let sets: Vec<Vec<usize>> = (0..40).map(|i| vec![i, 199 - i, (i * 7) % 200]).collect();
        let c = SetCollection::new(&s, sets).unwrap();
        let b = bucketize(&c, &s).unwrap();
        let mut seen: Vec<usize> = b.values().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..40).collect::<Vec<_>>());
        for (&k, members) in &b {
            for &ci in members {
                let d = c.diam(ci);
                assert!(d <= HolderParams::radius(k as i64) && d > HolderParams::radius(k as i64 + 1));
            }
        }
    }

    fn random_space(n: usize, seed: u64) -> FiniteMetricSpace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FiniteMetricSpace::from_points((0..n).map(|_| vec![rng.gen(), rng.gen()]).collect()).unwrap()
    }

    #[test]
    fn mcshane_on_full_domain_is_identity() {
        let s = random_space(30, 1);
        let partial: Vec<(usize, f64)> = (0..30).map(|i| (i, s.dist(i, 0))).collect();
        let f = mcshane_extend(&partial, 1.0, &s).unwrap();
        for (i, v) in f.iter().enumerate() {
            assert_eq!(*v, s.dist(i, 0));
        }
    }

    #[test]
    fn mcshane_from_one_point() {
        let s = random_space(20, 2);
        let f = mcshane_extend(&[(3, 0.7)], 2.5, &s).unwrap();
        for (i, v) in f.iter().enumerate() {
            let expect = if i == 3 { 0.7 } else { 0.7 + 2.5 * s.dist(i, 3) };
            assert_eq!(*v, expect);
        }
    }

    #[test]
    fn mcshane_reports_violations() {
        let s = FiniteMetricSpace::from_points(vec![vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        match mcshane_extend(&[(0, 0.0), (2, 5.0)], 1.0, &s) {
            Err(HolderError::NotLipschitz { x: 0, y: 2, ratio, .. }) => assert_eq!(ratio, 2.5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            mcshane_extend(&[], 1.0, &s),
            Err(HolderError::EmptyDomain)
        ));
    }

    #[test]
    fn mcshane_extension_is_lipschitz_on_a_large_space() {
        let s = random_space(500, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let l = 3.0;
        // values drawn from an l-Lipschitz function restricted to W
        let anchor = 17;
        let partial: Vec<(usize, f64)> = (0..50)
            .map(|i| {
                let id = i * 10 + 1;
                (id, l * 0.5 * s.dist(id, anchor) + rng.gen::<f64>() * 0.0)
            })
            .collect();
        let f = mcshane_extend(&partial, l, &s).unwrap();
        for x in 0..500 {
            for y in (x + 1)..500 {
                assert!((f[x] - f[y]).abs() <= l * s.dist(x, y) * (1.0 + 1e-12));
            }
        }
        for &(w, fw) in &partial {
            assert_eq!(f[w], fw);
        }
    }

    #[test]
    fn clamping_does_not_raise_lipschitz_constant() {
        let s = random_space(120, 5);
        let g: Vec<f64> = (0..120).map(|i| 4.0 * s.dist(i, 0) - 1.0).collect();
        let lip = |v: &[f64]| {
            let mut m = 0.0f64;
            for x in 0..120 {
                for y in (x + 1)..120 {
                    m = m.max((v[x] - v[y]).abs() / s.dist(x, y));
                }
            }
            m
        };
        let before = lip(&g);
        for bound in [0.01, 0.3, 1.0, 10.0] {
            let mut c = g.clone();
            clamp_symmetric(&mut c, bound);
            assert!(lip(&c) <= before + 1e-12);
            assert!(c.iter().all(|v| v.abs() <= bound));
        }
    }

    fn far_pair_space() -> (FiniteMetricSpace, SetCollection) {
        // 10x10 lattice plus a tiny pair far in the corner
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                pts.push(vec![i as f64 / 9.0, j as f64 / 9.0]);
            }
        }
        pts.push(vec![1.0 + 1e-4, 1.0 + 1e-4]);
        pts.push(vec![1.0 + 2e-4, 1.0 + 1e-4]);
        let s = FiniteMetricSpace::from_points(pts).unwrap();
        let c = SetCollection::new(&s, vec![vec![100, 101]]).unwrap();
        (s, c)
    }

    #[test]
    fn single_set_is_made_constant() {
        let (s, c) = far_pair_space();
        let out = build_holder(&s, &c, 0.5, 0, 55, 0).unwrap();
        assert_eq!(out.u[100].to_bits(), out.u[101].to_bits());
        assert_ne!(out.u[0], out.u[55]);
        assert!(out.certificate.passes(), "{:?}", out.certificate);
    }

    #[test]
    fn empty_collection_uses_the_lipschitz_start() {
        let s = random_space(60, 9);
        let out = build_holder(&s, &SetCollection::empty(), 0.6, 3, 40, 0).unwrap();
        assert!(out.seeded_start);
        assert!(out.certificate.passes());
        assert!(out.certificate.layers.is_empty());
    }

    #[test]
    fn marked_points_in_one_set_are_refused() {
        let (s, c) = far_pair_space();
        assert!(matches!(
            build_holder(&s, &c, 0.5, 100, 101, 0),
            Err(HolderError::SamePointClass(0))
        ));
        assert!(matches!(
            build_holder(&s, &c, 0.5, 4, 4, 0),
            Err(HolderError::SamePoint)
        ));
    }

    #[test]
    fn insufficient_separation_is_reported() {
        let s = FiniteMetricSpace::from_points(vec![
            vec![0.0],
            vec![0.1],
            vec![0.5],
            vec![0.6],
            vec![1.0],
        ])
        .unwrap();
        let c = SetCollection::new(&s, vec![vec![0, 1], vec![2, 3]]).unwrap();
        match build_holder(&s, &c, 0.5, 4, 0, 0) {
            Err(HolderError::SeparationTooSmall { measured, required }) => {
                assert!((measured - 4.0).abs() < 1e-12);
                assert_eq!(required, 192.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_function_certificate() {
        let (s, _) = far_pair_space();
        let c = SetCollection::new(&s, vec![vec![0, 1], vec![100, 101]]).unwrap();
        let cert = verify_certificate(&vec![0.0; s.len()], &s, &c, 0.5, 0, 50);
        assert!(cert.constancy);
        assert!(!cert.injective_on_sets);
        assert!(!cert.separates);
        assert_eq!(cert.holder_seminorm, 0.0);
    }

    #[test]
    fn distance_function_is_not_constant_on_sets() {
        let (s, _) = far_pair_space();
        let c = SetCollection::new(&s, vec![vec![0, 1], vec![100, 101]]).unwrap();
        let u: Vec<f64> = (0..s.len()).map(|x| s.dist(x, 0)).collect();
        let cert = verify_certificate(&u, &s, &c, 0.5, 0, 50);
        assert!(!cert.constancy);
        assert_eq!(cert.witnesses.non_constant, Some((0, 1)));
        assert!(cert.separates);
    }
}
