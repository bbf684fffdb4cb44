//! Conformal-dimension estimates from the decay of combinatorial modulus
//! across approximation levels: the critical exponent is where the per-level
//! decay rate of `Mod_p` drops below `1 − eps_rate`.

use crate::approx::{ApproxError, ApproxGraph};
use crate::fit::tail_geometric_rate;
use crate::modulus::{solve_modulus, CurveFamilySpec, FamilyRecipe, ModulusError, SpaceSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub const DEFAULT_EPS_RATE: f64 = 0.05;
pub const MAX_REFINEMENTS: usize = 12;
/// Coarse grid checked for monotone classification before bisecting.
pub const GRID_POINTS: usize = 5;
/// Rates may rise with `p` by this much before a warning is raised.
const RATE_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ConfdimError {
    #[error("need at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error("need 1 < p_lo < p_hi, got p_lo = {lo}, p_hi = {hi}")]
    BadRange { lo: f64, hi: f64 },
    #[error("eps_rate must lie in (0, 1), got {0}")]
    BadEpsRate(f64),
    #[error("[{p_lo}, {p_hi}] does not bracket the crossover: rates {rate_lo} and {rate_hi}")]
    NotBracketed {
        p_lo: f64,
        p_hi: f64,
        rate_lo: f64,
        rate_hi: f64,
    },
    #[error("classification is not monotone in p at {offending:?}")]
    Inconclusive { offending: Vec<f64> },
    #[error("modulus failed at p = {p}, level {level}")]
    Modulus {
        p: f64,
        level: u32,
        #[source]
        source: ModulusError,
    },
    #[error(transparent)]
    Approx(#[from] ApproxError),
}

/// Modulus values of one family across levels at a fixed exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecaySeries {
    pub p: f64,
    /// `(level, value)` sorted by level.
    pub entries: Vec<(u32, f64)>,
    pub fitted_rate: f64,
    /// Some used value was zero; the rate is then 0.
    pub zero_flagged: bool,
}

impl DecaySeries {
    pub fn new(p: f64, mut entries: Vec<(u32, f64)>) -> Result<Self, ConfdimError> {
        entries.sort_by_key(|e| e.0);
        let mut series = Self {
            p,
            entries,
            fitted_rate: f64::NAN,
            zero_flagged: false,
        };
        series.fitted_rate = fit_decay_rate(&series)?;
        series.zero_flagged = series.entries.iter().any(|e| e.1 == 0.0);
        Ok(series)
    }
}

/// Least-squares ratio over the last `ceil(n/2)` levels; a zero modulus in
/// the series means decay, rate 0.
pub fn fit_decay_rate(series: &DecaySeries) -> Result<f64, ConfdimError> {
    if series.entries.len() < 3 {
        return Err(ConfdimError::TooFewLevels(series.entries.len()));
    }
    if series.entries.iter().any(|e| e.1 == 0.0) {
        return Ok(0.0);
    }
    let points: Vec<(f64, f64)> = series
        .entries
        .iter()
        .map(|&(k, v)| (k as f64, v))
        .collect();
    Ok(tail_geometric_rate(&points).unwrap_or(f64::NAN))
}

/// Anything that can produce a decay series at a given exponent.
pub trait SeriesSource: Sync {
    fn levels(&self) -> Vec<u32>;
    fn series(&self, p: f64) -> Result<DecaySeries, ConfdimError>;
    fn describe(&self) -> String;
}

/// Series from [`solve_modulus`] on a space's approximation graphs.
pub struct ModulusSeries {
    tag: String,
    recipe: FamilyRecipe,
    tol: f64,
    graphs: Vec<(u32, ApproxGraph, CurveFamilySpec)>,
}

impl ModulusSeries {
    pub fn new(
        source: &SpaceSource,
        levels: &[u32],
        recipe: FamilyRecipe,
        tol: f64,
    ) -> Result<Self, ConfdimError> {
        let graphs = levels
            .iter()
            .map(|&k| {
                let g = source.graph(k)?;
                let f = recipe.instantiate(&g);
                Ok((k, g, f))
            })
            .collect::<Result<Vec<_>, ApproxError>>()?;
        Ok(Self {
            tag: source.tag(),
            recipe,
            tol,
            graphs,
        })
    }
}

impl SeriesSource for ModulusSeries {
    fn levels(&self) -> Vec<u32> {
        self.graphs.iter().map(|g| g.0).collect()
    }

    fn series(&self, p: f64) -> Result<DecaySeries, ConfdimError> {
        let entries = self
            .graphs
            .par_iter()
            .map(|(k, g, f)| {
                solve_modulus(g, f, p, self.tol)
                    .map(|r| (*k, r.value))
                    .map_err(|source| ConfdimError::Modulus {
                        p,
                        level: *k,
                        source,
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        DecaySeries::new(p, entries)
    }

    fn describe(&self) -> String {
        format!("{} {}", self.tag, self.recipe)
    }
}

/// Series `c · rate(p)^k` with `rate(p) = e^{steepness·(critical − p)}`, so the
/// rate crosses 1 exactly at `critical`, times seeded multiplicative noise
/// uniform in `[1 − noise, 1 + noise]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSeries {
    pub critical: f64,
    pub steepness: f64,
    pub levels: Vec<u32>,
    pub scale: f64,
    pub noise: f64,
    pub seed: u64,
}

impl SyntheticSeries {
    pub fn new(critical: f64, levels: Vec<u32>) -> Self {
        Self {
            critical,
            steepness: 4.0,
            levels,
            scale: 1.0,
            noise: 0.0,
            seed: 0,
        }
    }

    pub fn true_rate(&self, p: f64) -> f64 {
        (self.steepness * (self.critical - p)).exp()
    }
}

impl SeriesSource for SyntheticSeries {
    fn levels(&self) -> Vec<u32> {
        self.levels.clone()
    }

    fn series(&self, p: f64) -> Result<DecaySeries, ConfdimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ p.to_bits());
        let rate = self.true_rate(p);
        let entries = self
            .levels
            .iter()
            .map(|&k| {
                let jitter = if self.noise > 0.0 {
                    rng.gen_range(1.0 - self.noise..=1.0 + self.noise)
                } else {
                    1.0
                };
                (k, self.scale * rate.powi(k as i32) * jitter)
            })
            .collect();
        DecaySeries::new(p, entries)
    }

    fn describe(&self) -> String {
        format!("synthetic critical={}", self.critical)
    }
}

/// Rate and classification at one exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSample {
    pub p: f64,
    pub rate: f64,
    pub decaying: bool,
    pub series: DecaySeries,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossoverEstimate {
    pub p_star: f64,
    pub bracket: (f64, f64),
    pub eps_rate: f64,
    pub refinements: usize,
    /// Every evaluated exponent, sorted by `p`.
    pub per_p: Vec<RateSample>,
    pub diagnostics: Vec<String>,
}

impl CrossoverEstimate {
    /// Full `(p, k)` table.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("p,k,value,rate,decaying\n");
        for s in &self.per_p {
            for &(k, v) in &s.series.entries {
                out.push_str(&format!("{},{},{},{},{}\n", s.p, k, v, s.rate, s.decaying));
            }
        }
        out
    }
}

fn sample(source: &dyn SeriesSource, p: f64, eps_rate: f64) -> Result<RateSample, ConfdimError> {
    let series = source.series(p)?;
    let rate = series.fitted_rate;
    Ok(RateSample {
        p,
        rate,
        decaying: rate < 1.0 - eps_rate,
        series,
    })
}

/// Onset of modulus decay in `p`: a coarse grid on `[p_lo, p_hi]` checked for
/// monotone classification, then at most `refinements` (≤ 12) bisection
/// steps inside the grid cell where decay starts.
pub fn estimate_confdim(
    source: &dyn SeriesSource,
    p_lo: f64,
    p_hi: f64,
    eps_rate: f64,
    refinements: usize,
) -> Result<CrossoverEstimate, ConfdimError> {
    if !(p_lo > 1.0 && p_hi > p_lo && p_hi.is_finite()) {
        return Err(ConfdimError::BadRange { lo: p_lo, hi: p_hi });
    }
    if !(eps_rate > 0.0 && eps_rate < 1.0) {
        return Err(ConfdimError::BadEpsRate(eps_rate));
    }
    let levels = source.levels().len();
    if levels < 3 {
        return Err(ConfdimError::TooFewLevels(levels));
    }
    let refinements = refinements.min(MAX_REFINEMENTS);
    let step = (p_hi - p_lo) / (GRID_POINTS - 1) as f64;
    let mut samples = (0..GRID_POINTS)
        .map(|i| {
            let p = if i + 1 == GRID_POINTS { p_hi } else { p_lo + step * i as f64 };
            sample(source, p, eps_rate)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (lo, hi) = (&samples[0], &samples[GRID_POINTS - 1]);
    if lo.decaying || !hi.decaying {
        return Err(ConfdimError::NotBracketed {
            p_lo,
            p_hi,
            rate_lo: lo.rate,
            rate_hi: hi.rate,
        });
    }
    // decaying must be an up-set in p
    let first = samples.iter().position(|s| s.decaying).expect("p_hi decays");
    let late: Vec<f64> = samples[first..]
        .iter()
        .filter(|s| !s.decaying)
        .map(|s| s.p)
        .collect();
    if !late.is_empty() {
        let mut offending = vec![samples[first].p];
        offending.extend(late);
        return Err(ConfdimError::Inconclusive { offending });
    }
    let (mut a, mut b) = (samples[first - 1].p, samples[first].p);
    for _ in 0..refinements {
        let mid = 0.5 * (a + b);
        let s = sample(source, mid, eps_rate)?;
        if s.decaying {
            b = mid;
        } else {
            a = mid;
        }
        samples.push(s);
    }
    samples.sort_by(|x, y| x.p.total_cmp(&y.p));

    let mut diagnostics = Vec::new();
    for w in samples.windows(2) {
        if w[1].rate > w[0].rate + RATE_SLACK {
            diagnostics.push(format!(
                "rate rises from {} at p = {} to {} at p = {}",
                w[0].rate, w[0].p, w[1].rate, w[1].p
            ));
        }
    }
    Ok(CrossoverEstimate {
        p_star: 0.5 * (a + b),
        bracket: (a, b),
        eps_rate,
        refinements,
        per_p: samples,
        diagnostics,
    })
}
