//! Binary wealth/type admissions model: each agent has wealth w in
//! {0,1} and type t ~ Bernoulli(p), the employer sees the score
//! s = w + t, and the population's wealthy fraction λ evolves under a
//! 2x2 transition matrix A keyed by (wealth, accepted). Score 2 is
//! always accepted and score 0 always rejected; the interesting
//! decision is the score-1 pool, which flips at a threshold fraction
//! λ* that depends on how the employer ranks candidates.

use serde::Serialize;

use crate::dynamics::{iterate, Trajectory};
use crate::error::{Error, Result};
use crate::map::FnMap;

/// How the employer scores the ambiguous (score-1) pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscreteCase {
    /// Ranks by type posterior only (fit weight 1).
    TypeOnly,
    /// Ranks by wealth posterior only (fit weight 0).
    WealthOnly,
    /// Ranks by the α-weighted mix of both posteriors.
    Mixed,
}

/// Wealthy fraction of the population.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct PopulationFraction(f64);

impl PopulationFraction {
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain(format!(
                "population fraction must lie in [0, 1], got {lambda}"
            )));
        }
        Ok(Self(lambda))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<PopulationFraction> for f64 {
    fn from(v: PopulationFraction) -> f64 {
        v.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiscreteParams {
    p: f64,
    beta_thr: f64,
    alpha_mix: f64,
    /// a[i][j] = chance of next-round wealth 1 given wealth i and
    /// acceptance j.
    a: [[f64; 2]; 2],
}

impl DiscreteParams {
    pub fn new(p: f64, beta_thr: f64, alpha_mix: f64, a: [[f64; 2]; 2]) -> Result<Self> {
        if !p.is_finite() || !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("type rate p must lie in (0, 1), got {p}")));
        }
        for (name, v) in [("beta", beta_thr), ("alpha", alpha_mix)] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for row in &a {
            for &entry in row {
                if !entry.is_finite() || !(0.0..=1.0).contains(&entry) {
                    return Err(Error::Domain(format!(
                        "transition entries must lie in [0, 1], got {entry}"
                    )));
                }
            }
        }
        Ok(Self { p, beta_thr, alpha_mix, a })
    }

    /// The transition matrix where acceptance alone decides next-round
    /// wealth: accepted agents become wealthy, rejected ones poor.
    pub fn canonical(p: f64, beta_thr: f64, alpha_mix: f64) -> Result<Self> {
        Self::new(p, beta_thr, alpha_mix, [[0.0, 1.0], [0.0, 1.0]])
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn beta_thr(&self) -> f64 {
        self.beta_thr
    }

    pub fn alpha_mix(&self) -> f64 {
        self.alpha_mix
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        self.a
    }
}

/// The wealthy fraction at which the score-1 acceptance decision
/// flips. Type-ranked employers accept the score-1 pool for λ at or
/// below λ*; wealth-ranked employers for λ at or above it. Not defined
/// for the mixed case, whose flip condition involves α (see
/// `accepts_score_one`).
pub fn lambda_star(p: f64, beta_thr: f64, case: DiscreteCase) -> Result<f64> {
    for (name, v) in [("p", p), ("beta", beta_thr)] {
        if !v.is_finite() || !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    // Both thresholds are ratios against a convex-mixture mass that is
    // positive for interior p, beta; it can vanish at the corners.
    let (num, den) = match case {
        DiscreteCase::TypeOnly => {
            (p * (1.0 - beta_thr), p * (1.0 - beta_thr) + beta_thr * (1.0 - p))
        }
        DiscreteCase::WealthOnly => {
            (p * beta_thr, (1.0 - p) * (1.0 - beta_thr) + p * beta_thr)
        }
        DiscreteCase::Mixed => {
            return Err(Error::Domain(
                "the mixed case has no single flip fraction; use the acceptance condition".into(),
            ))
        }
    };
    if den <= 0.0 {
        return Err(Error::Degenerate(format!(
            "flip fraction undefined at p = {p}, beta = {beta_thr}"
        )));
    }
    Ok(num / den)
}

/// The α-weighted acceptance condition for the score-1 pool:
/// λ(1 - (α + p + β - 2βp)) >= p(β - α). Reduces to the type-ranked
/// rule at α = 1 and the wealth-ranked rule at α = 0.
pub fn accepts_score_one(p: f64, beta_thr: f64, alpha_mix: f64, lambda: f64) -> bool {
    lambda * (1.0 - (alpha_mix + p + beta_thr - 2.0 * beta_thr * p)) >= p * (beta_thr - alpha_mix)
}

/// One generation of the wealthy-fraction dynamics under the given
/// ranking case.
pub fn discrete_update(
    params: &DiscreteParams,
    lambda: f64,
    case: DiscreteCase,
) -> Result<PopulationFraction> {
    let lambda = PopulationFraction::new(lambda)?.value();
    let accept = match case {
        DiscreteCase::TypeOnly => lambda <= lambda_star(params.p, params.beta_thr, case)?,
        DiscreteCase::WealthOnly => lambda >= lambda_star(params.p, params.beta_thr, case)?,
        DiscreteCase::Mixed => {
            accepts_score_one(params.p, params.beta_thr, params.alpha_mix, lambda)
        }
    };
    let a = &params.a;
    let p = params.p;
    let next = if accept {
        // Score 1 accepted: every wealthy agent and the typed poor get
        // in; only the untyped poor are rejected.
        a[1][1] * lambda + a[0][1] * (1.0 - lambda) * p + a[0][0] * (1.0 - lambda) * (1.0 - p)
    } else {
        // Score 1 rejected: only the typed wealthy (score 2) get in.
        a[1][1] * lambda * p + a[1][0] * lambda * (1.0 - p) + a[0][0] * (1.0 - lambda)
    };
    // The branch values are convex combinations of matrix entries;
    // clamp away any last-bit overshoot.
    Ok(PopulationFraction(next.clamp(0.0, 1.0)))
}

/// Iterates the fraction dynamics with the shared convergence and
/// cycle detection.
pub fn discrete_simulate(
    params: &DiscreteParams,
    case: DiscreteCase,
    lambda0: f64,
    max_steps: usize,
    tol: f64,
) -> Result<Trajectory> {
    PopulationFraction::new(lambda0)?;
    let params = *params;
    let map = FnMap(move |x: f64| {
        discrete_update(&params, x.clamp(0.0, 1.0), case)
            .expect("clamped input is always valid")
            .value()
    });
    iterate(&map, lambda0, max_steps, tol)
}
