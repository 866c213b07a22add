//! Fixed-point structure of an update map: location, stability, basins
//! of attraction, uniqueness/multiplicity conditions, and a parameter
//! survey for the three-fixed-point regime.
//!
//! The solver scans g(x) = f(x) - x on a 4096-cell grid over [0, 1],
//! refines every sign change by bisection to |g| <= 1e-12, and merges
//! roots closer than 1e-9. Supported maps cross the diagonal at most
//! three times; more crossings are reported as a shape violation.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian_model::GaussianParams;
use crate::map::UpdateMap;
use crate::special_functions::SQRT_2PI;

/// Scan resolution for root isolation.
const SCAN_CELLS: usize = 4096;
/// Bisection target on |g| at a root.
const ROOT_TOL: f64 = 1e-12;
/// Roots closer than this are considered one root.
const MERGE_TOL: f64 = 1e-9;
/// |f'(z) - 1| below this labels the point tangent-degenerate.
const TANGENT_TOL: f64 = 1e-6;
/// Step for central finite differences when a map has no closed-form
/// derivative.
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    Attracting,
    Unstable,
    /// f'(z) is within TANGENT_TOL of 1: the map is tangent to the
    /// diagonal and the two-fixed-point corner case applies.
    TangentDegenerate,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPoint {
    pub x: f64,
    pub derivative: f64,
    pub stability: Stability,
}

/// One basin of attraction: every start in the interval converges to
/// the fixed point at `target` (an index into the report's points).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Basin {
    pub lo: f64,
    pub hi: f64,
    pub lo_open: bool,
    pub hi_open: bool,
    pub target: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    /// Fixed points ordered by position.
    pub points: Vec<FixedPoint>,
    /// Basins of attraction covering [0, 1].
    pub basins: Vec<Basin>,
    /// Any point tangent to the diagonal (the two-fixed-point case).
    pub tangent_degenerate: bool,
    /// K, for Gaussian-model reports.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Whether K ≤ sqrt(2π)/(1-α) guarantees a unique fixed point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contraction: Option<bool>,
    /// Whether the three-fixed-point sufficient condition holds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub three_fp_sufficient: Option<bool>,
}

impl FixedPointReport {
    /// Positions of the fixed points, in order.
    pub fn positions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }
}

/// Locates and classifies every fixed point of `map` on [0, 1].
pub fn find_fixed_points<M: UpdateMap>(map: &M) -> Result<FixedPointReport> {
    let g = |x: f64| map.eval(x) - x;
    let dx = 1.0 / SCAN_CELLS as f64;

    let mut values = Vec::with_capacity(SCAN_CELLS + 1);
    for i in 0..=SCAN_CELLS {
        let x = i as f64 * dx;
        let v = g(x);
        if !v.is_finite() {
            return Err(Error::Numeric(format!("map produced non-finite value at x = {x}")));
        }
        values.push(v);
    }

    let mut sign_changes = 0usize;
    let mut roots: Vec<f64> = Vec::new();
    let mut prev_sign = values[0].signum();
    if values[0] == 0.0 {
        roots.push(0.0);
    }
    for i in 1..=SCAN_CELLS {
        let x = i as f64 * dx;
        let v = values[i];
        if v == 0.0 {
            roots.push(x);
            // An exact zero counts as one crossing; the sign on the far
            // side continues the sequence.
            sign_changes += 1;
            prev_sign = -prev_sign;
            continue;
        }
        let s = v.signum();
        if prev_sign != 0.0 && s != prev_sign {
            sign_changes += 1;
            roots.push(bisect(&g, (i - 1) as f64 * dx, x, values[i - 1], v));
        }
        prev_sign = s;
    }

    if sign_changes > 3 {
        return Err(Error::ShapeViolation(format!(
            "update map crosses the diagonal {sign_changes} times; at most 3 are supported"
        )));
    }

    // Tangencies touch the diagonal without a sign change; look for
    // interior extrema of g that graze zero.
    append_tangent_roots(&g, &values, dx, &mut roots);

    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|b, a| (*b - *a).abs() <= MERGE_TOL);

    if roots.is_empty() {
        return Err(Error::ShapeViolation(
            "update map has no fixed point on [0, 1] (it should cross the diagonal)".into(),
        ));
    }
    if roots.len() > 3 {
        return Err(Error::ShapeViolation(format!(
            "update map has {} fixed points; at most 3 are supported",
            roots.len()
        )));
    }

    let points: Vec<FixedPoint> = roots
        .iter()
        .map(|&z| {
            let derivative = map
                .derivative(z)
                .unwrap_or_else(|| (map.eval(z + FD_STEP) - map.eval(z - FD_STEP)) / (2.0 * FD_STEP));
            let stability = if (derivative - 1.0).abs() < TANGENT_TOL {
                Stability::TangentDegenerate
            } else if derivative < 1.0 {
                Stability::Attracting
            } else {
                Stability::Unstable
            };
            FixedPoint { x: z, derivative, stability }
        })
        .collect();

    let basins = classify_basins(map, &points);
    let tangent_degenerate = points
        .iter()
        .any(|p| p.stability == Stability::TangentDegenerate);

    Ok(FixedPointReport {
        points,
        basins,
        tangent_degenerate,
        k: None,
        contraction: None,
        three_fp_sufficient: None,
    })
}

/// Fixed-point report for the Gaussian model, with the model's
/// condition flags filled in.
pub fn analyze_gaussian(params: &GaussianParams) -> Result<FixedPointReport> {
    let mut report = find_fixed_points(params)?;
    report.k = Some(params.k());
    report.contraction = Some(contraction_check(params));
    report.three_fp_sufficient = Some(three_fp_sufficient(params));
    Ok(report)
}

/// Basins of attraction for an increasing map with the given fixed
/// points. On each interval between adjacent fixed points the sign of
/// f(x) - x is constant; iterates move monotonically toward the
/// endpoint the sign points at.
pub fn classify_basins<M: UpdateMap>(map: &M, points: &[FixedPoint]) -> Vec<Basin> {
    if points.is_empty() {
        return Vec::new();
    }
    let roots: Vec<f64> = points.iter().map(|p| p.x).collect();
    let mut basins: Vec<Basin> = Vec::new();

    // Sign of g on each gap between consecutive roots (and the outer
    // gaps to 0 and 1), probed at the midpoint.
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(&roots);
    bounds.push(1.0);

    // Interval i runs (bounds[i], bounds[i+1]); its iterates converge
    // to the right root if g > 0 there, to the left root if g < 0.
    let mut targets: Vec<Option<usize>> = Vec::new();
    for i in 0..bounds.len() - 1 {
        let (lo, hi) = (bounds[i], bounds[i + 1]);
        if hi - lo <= MERGE_TOL {
            targets.push(None);
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let sign = map.eval(mid) - mid;
        let target = if sign > 0.0 {
            // Moving right: converges to the root at hi, if any.
            if i == bounds.len() - 2 {
                None // g > 0 up to 1 cannot happen for supported maps
            } else {
                Some(i)
            }
        } else {
            // Moving left: converges to the root at lo, if any.
            if i == 0 {
                None
            } else {
                Some(i - 1)
            }
        };
        targets.push(target);
    }

    // Assemble maximal intervals per target. A basin includes the fixed
    // point itself and every adjacent gap flowing into it.
    for (idx, point) in points.iter().enumerate() {
        // Left edge: if the gap left of this root flows here, extend to
        // the previous root (exclusive) or to 0 (inclusive).
        let gap_left = idx; // gap between bounds[idx] and bounds[idx+1] is left of root idx
        let gap_right = idx + 1;
        let flows_left = targets.get(gap_left) == Some(&Some(idx));
        let flows_right = targets.get(gap_right) == Some(&Some(idx));
        let (lo, lo_open) = if flows_left {
            let left_bound = bounds[gap_left];
            (left_bound, gap_left != 0)
        } else {
            (point.x, false)
        };
        let (hi, hi_open) = if flows_right {
            let right_bound = bounds[gap_right + 1];
            (right_bound, gap_right != bounds.len() - 2)
        } else {
            (point.x, false)
        };
        basins.push(Basin { lo, hi, lo_open, hi_open, target: idx });
    }
    basins
}

/// Whether the map is a contraction on [0, 1]: sup f' = K(1-α)/sqrt(2π)
/// at the inflection point, so K ≤ sqrt(2π)/(1-α) bounds the slope by 1
/// and forces a unique fixed point. For α = 1 the map is constant and
/// trivially contracting.
pub fn contraction_check(params: &GaussianParams) -> bool {
    let oma = 1.0 - params.alpha();
    if oma == 0.0 {
        return true;
    }
    params.k() <= SQRT_2PI / oma
}

/// Sufficient condition for exactly three fixed points:
/// K > sqrt(2π)/(1-α) together with τ = (1-α)/2, which makes the
/// inflection point a fixed point with slope above 1 (τ equality is
/// checked to 1e-12).
pub fn three_fp_sufficient(params: &GaussianParams) -> bool {
    let oma = 1.0 - params.alpha();
    if oma == 0.0 {
        return false;
    }
    params.k() > SQRT_2PI / oma && (params.tau() - 0.5 * oma).abs() <= 1e-12
}

/// Filter selecting which grid tuples a multiplicity survey scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurveyFilter {
    /// Tuples satisfying both necessary conditions for three fixed
    /// points: 0 ≤ τ ≤ 1-α and K > sqrt(2π)/(1-α). Three fixed points
    /// can only arise inside this set, so the survey fraction measures
    /// how often they actually do.
    ThreeFpCandidates,
    /// Tuples satisfying at least one of the two conditions above (the
    /// looser disjunctive reading).
    EitherCondition,
    /// Tuples whose map is a contraction (the fraction is 0 by
    /// construction; useful as a negative control).
    ContractionOnly,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SurveyCase {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub tau: f64,
    pub n_fixed_points: usize,
    pub k: f64,
    pub contraction: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurveyReport {
    pub fraction_three_fp: f64,
    pub filter: SurveyFilter,
    pub grid_points_per_axis: usize,
    pub cases: Vec<SurveyCase>,
}

/// Scores every tuple of a uniform interior grid over
/// (α, β, γ, σ, τ) ∈ [0,1]^5 that passes `filter`, and returns the
/// fraction with three fixed points. Axis values are cell midpoints
/// (i + 0.5)/n, which keeps every tuple away from the degenerate
/// boundaries (γ = 0, σ = 0, the α/β corners).
pub fn grid_multiplicity_survey(
    grid_points_per_axis: usize,
    filter: SurveyFilter,
) -> Result<SurveyReport> {
    if grid_points_per_axis == 0 {
        return Err(Error::Domain("grid needs at least one point per axis".into()));
    }
    let n = grid_points_per_axis;
    let axis: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();

    // Flatten the 5-D grid into indices so the scan parallelizes with a
    // deterministic result order.
    let total = n * n * n * n * n;
    let cases: Vec<Option<SurveyCase>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let mut ix = flat;
            let tau = axis[ix % n];
            ix /= n;
            let sigma = axis[ix % n];
            ix /= n;
            let gamma = axis[ix % n];
            ix /= n;
            let beta = axis[ix % n];
            ix /= n;
            let alpha = axis[ix % n];

            let params = GaussianParams::new(alpha, beta, gamma, sigma, tau).ok()?;
            let k = params.k();
            let contraction = contraction_check(&params);
            let tau_window = 0.0 <= tau && tau <= 1.0 - alpha;
            let super_critical = !contraction;
            let selected = match filter {
                SurveyFilter::ThreeFpCandidates => tau_window && super_critical,
                SurveyFilter::EitherCondition => tau_window || super_critical,
                SurveyFilter::ContractionOnly => contraction,
            };
            if !selected {
                return None;
            }
            let n_fixed_points = find_fixed_points(&params).map(|r| r.points.len()).ok()?;
            Some(SurveyCase {
                alpha,
                beta,
                gamma,
                sigma,
                tau,
                n_fixed_points,
                k,
                contraction,
            })
        })
        .collect();

    let cases: Vec<SurveyCase> = cases.into_iter().flatten().collect();
    if cases.is_empty() {
        return Err(Error::Domain("survey filter selected no grid tuples".into()));
    }
    let three = cases.iter().filter(|c| c.n_fixed_points == 3).count();
    Ok(SurveyReport {
        fraction_three_fp: three as f64 / cases.len() as f64,
        filter,
        grid_points_per_axis: n,
        cases,
    })
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut glo: f64, ghi: f64) -> f64 {
    debug_assert!(glo.signum() != ghi.signum());
    let mut ghi = ghi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() <= ROOT_TOL || (hi - lo) < f64::EPSILON {
            return mid;
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
            ghi = gm;
        }
    }
    let _ = ghi;
    0.5 * (lo + hi)
}

/// Finds grazing roots: interior local extrema of g where the map
/// touches the diagonal without crossing it. Each candidate extremum is
/// refined by ternary search; it only counts as a root if |g| at the
/// extremum lands within bisection tolerance of zero.
fn append_tangent_roots(
    g: &impl Fn(f64) -> f64,
    values: &[f64],
    dx: f64,
    roots: &mut Vec<f64>,
) {
    for i in 1..values.len() - 1 {
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        let local_min_above = b <= a && b <= c && b > 0.0;
        let local_max_below = b >= a && b >= c && b < 0.0;
        if !(local_min_above || local_max_below) {
            continue;
        }
        // Coarse guard: the extremum must already be close to zero at
        // grid resolution, otherwise it cannot graze.
        if b.abs() > dx {
            continue;
        }
        let sign = if local_min_above { 1.0 } else { -1.0 };
        let h = |x: f64| sign * g(x); // minimized
        let (mut lo, mut hi) = ((i - 1) as f64 * dx, (i + 1) as f64 * dx);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if h(m1) <= h(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        let x = 0.5 * (lo + hi);
        if g(x).abs() <= 10.0 * ROOT_TOL {
            roots.push(x);
        }
    }
}
