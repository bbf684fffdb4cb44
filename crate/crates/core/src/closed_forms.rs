//! Closed-form critical exponents and conformal-dimension bounds.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ClosedFormError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("no root of the building equation for (m, k, l) = ({m}, {k}, {l})")]
    NoRoot { m: u64, k: u64, l: u64 },
    #[error("no bound applies: {0}")]
    Inapplicable(String),
}

/// One hypothesis of a bound, with the evidence for its verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Hypothesis {
    pub fn new(name: impl Into<String>, pass: bool, witness: Option<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            witness,
        }
    }
}

/// A single rule evaluated against its hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub rule: String,
    pub applicable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub hypotheses: Vec<Hypothesis>,
}

impl Candidate {
    pub fn new(rule: &str, hypotheses: Vec<Hypothesis>, value: impl FnOnce() -> f64) -> Self {
        let applicable = hypotheses.iter().all(|h| h.pass);
        Self {
            rule: rule.to_string(),
            applicable,
            value: applicable.then(value),
            hypotheses,
        }
    }
}

/// Upper bound (and optional bracket) with the rule that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Present iff `applicable`.
    pub value: Option<f64>,
    /// Rule that attains `value`, or `"none"`.
    pub rule: String,
    pub applicable: bool,
    pub hypotheses: Vec<Hypothesis>,
    pub candidates: Vec<Candidate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

impl BoundReport {
    /// Minimum over applicable candidates; earlier candidates win ties.
    pub fn from_candidates(candidates: Vec<Candidate>) -> Self {
        let mut best: Option<&Candidate> = None;
        for c in candidates.iter().filter(|c| c.applicable) {
            if best.is_none_or(|b| c.value.unwrap() < b.value.unwrap()) {
                best = Some(c);
            }
        }
        let hypotheses = candidates
            .iter()
            .flat_map(|c| {
                c.hypotheses.iter().map(move |h| Hypothesis {
                    name: format!("{}: {}", c.rule, h.name),
                    ..h.clone()
                })
            })
            .collect();
        Self {
            value: best.and_then(|c| c.value),
            rule: best.map_or_else(|| "none".to_string(), |c| c.rule.clone()),
            applicable: best.is_some(),
            hypotheses,
            candidates,
            bracket: None,
            witness: None,
            caveat: None,
        }
    }
}

fn check_m_k(m: u64, k: u64) -> Result<(), ClosedFormError> {
    if m < 3 {
        return Err(ClosedFormError::BadParams(format!("need m ≥ 3, got {m}")));
    }
    if k < 2 {
        return Err(ClosedFormError::BadParams(format!("need k ≥ 2, got {k}")));
    }
    Ok(())
}

/// `1 + ln(k−1)/ln(m−1)`, the critical exponent of the regular elementary
/// polygonal complex with perimeter `2m` and thickness `k`.
pub fn elementary_exponent(m: u64, k: u64) -> Result<f64, ClosedFormError> {
    check_m_k(m, k)?;
    Ok(1.0 + ((k - 1) as f64).ln() / ((m - 1) as f64).ln())
}

/// Interval for complexes with perimeters in `[2m1, 2m2]` and thicknesses in
/// `[k1, k2]`.
pub fn elementary_exponent_interval(
    m1: u64,
    m2: u64,
    k1: u64,
    k2: u64,
) -> Result<(f64, f64), ClosedFormError> {
    check_m_k(m1, k1)?;
    if m2 < m1 {
        return Err(ClosedFormError::BadParams(format!("need m1 ≤ m2, got {m1} > {m2}")));
    }
    if k2 < k1 {
        return Err(ClosedFormError::BadParams(format!("need k1 ≤ k2, got {k1} > {k2}")));
    }
    let low = 1.0 + ((k1 - 1) as f64).ln() / ((m2 - 1) as f64).ln();
    let high = 1.0 + ((k2 - 1) as f64).ln() / ((m1 - 1) as f64).ln();
    Ok((low, high))
}

/// Solution of the building equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BuildingSolution {
    pub confdim: f64,
    pub x: f64,
    pub residual: f64,
}

/// `(a+b)/((1+a)(1+b)) − 1/m` with `a = (k−1)^x`, `b = (l−1)^x`, evaluated
/// through `σ(t) = t/(1+t)` so that huge powers do not overflow.
pub fn building_equation(m: u64, k: u64, l: u64, x: f64) -> f64 {
    let sigma = |base: u64| {
        let e = x * ((base - 1) as f64).ln();
        // t/(1+t) with t = e^e, in the stable direction
        if e > 0.0 {
            1.0 / (1.0 + (-e).exp())
        } else {
            let t = e.exp();
            t / (1.0 + t)
        }
    };
    let sa = sigma(k);
    let sb = sigma(l);
    sa * (1.0 - sb) + (1.0 - sa) * sb - 1.0 / m as f64
}

/// Conformal dimension `1 + 1/x` of the Fuchsian building boundary, with `x`
/// the positive root of [`building_equation`].
pub fn building_confdim(m: u64, k: u64, l: u64) -> Result<BuildingSolution, ClosedFormError> {
    if m < 3 || k < 3 || l < 3 {
        return Err(ClosedFormError::BadParams(format!(
            "need m, k, l ≥ 3, got ({m}, {k}, {l})"
        )));
    }
    let f = |x: f64| building_equation(m, k, l, x);
    // f(0+) = 1/2 − 1/m > 0 and f → −1/m as x → ∞.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 {
            return Err(ClosedFormError::NoRoot { m, k, l });
        }
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (x, residual) = if f(lo).abs() <= f(hi).abs() {
        (lo, f(lo))
    } else {
        (hi, f(hi))
    };
    if x.is_nan() || x <= 0.0 || residual.abs() >= 1e-12 {
        return Err(ClosedFormError::NoRoot { m, k, l });
    }
    Ok(BuildingSolution {
        confdim: 1.0 + 1.0 / x,
        x,
        residual,
    })
}

/// Symmetric root `x = ln(m−1+√((m−1)²−1))/ln(k−1)` of the building
/// equation when `k = l`.
pub fn building_symmetric_x(m: u64, k: u64) -> Result<f64, ClosedFormError> {
    if m < 3 || k < 3 {
        return Err(ClosedFormError::BadParams(format!("need m, k ≥ 3, got ({m}, {k})")));
    }
    let c = (m - 1) as f64;
    Ok((c + (c * c - 1.0).sqrt()).ln() / ((k - 1) as f64).ln())
}

/// Side length of the regular right-angled hyperbolic `2m`-gon,
/// from `cosh(a/2) = √2·cos(π/(2m))`.
pub fn right_angled_polygon_side(m: u64) -> Result<f64, ClosedFormError> {
    if m < 3 {
        return Err(ClosedFormError::BadParams(format!("need m ≥ 3, got {m}")));
    }
    Ok(2.0 * (2f64.sqrt() * (PI / (2 * m) as f64).cos()).acosh())
}

/// `1 + (perimeter/area)·ln(k−1)` for the regular right-angled `2m`-gon,
/// whose area is `(m−2)π`.
pub fn hausdorff_visual_lower(m: u64, k: u64) -> Result<f64, ClosedFormError> {
    check_m_k(m, k)?;
    let a = right_angled_polygon_side(m)?;
    let perimeter = 2.0 * m as f64 * a;
    let area = (m - 2) as f64 * PI;
    Ok(1.0 + perimeter / area * ((k - 1) as f64).ln())
}

/// Upper bounds for polygonal complexes with perimeter ≥ `n` and thickness
/// ≤ `k`. With `cube_link_dim = Some(d)` the links are 1-skeleta of the
/// `d`-cube (so `d = k` and the links are triangle-free) and the report also
/// carries the bracket `[1 + ln(k−1)/(ln(n−3)+ln 15), 1 + ln(k−1)/ln(n−3)]`.
pub fn polygonal_bound(
    n: u64,
    k: u64,
    triangle_free_links: bool,
    cube_link_dim: Option<u64>,
) -> Result<BoundReport, ClosedFormError> {
    if k < 2 {
        return Err(ClosedFormError::BadParams(format!("need k ≥ 2, got {k}")));
    }
    if let Some(d) = cube_link_dim {
        if d != k {
            return Err(ClosedFormError::BadParams(format!(
                "the {d}-cube link has valence {d}, which must equal the thickness k = {k}"
            )));
        }
    }
    let triangle_free = triangle_free_links || cube_link_dim.is_some();
    let lk = ((k - 1) as f64).ln();
    let witness_tf = match (triangle_free_links, cube_link_dim) {
        (_, Some(d)) => Some(format!("{d}-cube 1-skeleton is bipartite")),
        (true, None) => Some("declared".to_string()),
        (false, None) => Some("not declared".to_string()),
    };
    let case1 = Candidate::new(
        "polygonal-triangle-free",
        vec![
            Hypothesis::new("perimeter n ≥ 5", n >= 5, Some(format!("n = {n}"))),
            Hypothesis::new("links contain no 3-circuit", triangle_free, witness_tf),
        ],
        || 1.0 + lk / ((n - 3) as f64).ln(),
    );
    let case2 = Candidate::new(
        "polygonal-large-perimeter",
        vec![Hypothesis::new("perimeter n ≥ 7", n >= 7, Some(format!("n = {n}")))],
        || 1.0 + lk / ((n - 5) as f64).ln(),
    );
    let mut report = BoundReport::from_candidates(vec![case1, case2]);
    if !report.applicable {
        return Err(ClosedFormError::Inapplicable(format!(
            "n = {n} is below 7 and below 5 or without triangle-free links"
        )));
    }
    if cube_link_dim.is_some() {
        let ln_n3 = ((n - 3) as f64).ln();
        report.bracket = Some((1.0 + lk / (ln_n3 + 15f64.ln()), 1.0 + lk / ln_n3));
    }
    Ok(report)
}
