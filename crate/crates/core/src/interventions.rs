//! Intervention analysis for bistable wealth dynamics: admission
//! threshold and signal-weight perturbations, the minimum effective
//! per-round subsidy Δ, discounted-loss simulation of subsidy plans,
//! optimality checks for the one-shot plan, a DP planner over
//! discretized wealth/cost grids, and wealth-dependent threshold
//! schedules.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixed_points::{analyze_gaussian, find_fixed_points, FixedPointReport};
use crate::gaussian_model::GaussianParams;
use crate::map::{FnMap, PiecewiseLinearMap, UpdateMap};
use crate::special_functions::{phi, quantile};

/// A state at or above z2 (within this slack) counts as having crossed.
const CROSSING_TOL: f64 = 1e-12;
/// Slack on the left edge of the subsidy band, so a state computed one
/// rounding below z1 keeps its subsidy.
const BAND_EDGE_TOL: f64 = 1e-9;
/// Points on the C-grid used for empirical one-shot comparisons.
const C_GRID_POINTS: usize = 64;
/// Value-iteration sweep cap.
const MAX_VI_SWEEPS: usize = 100_000;
/// Greedy schedule-extraction step cap.
const MAX_SCHEDULE_STEPS: usize = 10_000;

/// An update map satisfying the bistable shape assumption: continuous,
/// increasing, with exactly three transversal fixed points
/// z1 < z2 < z3 (so the map is above the diagonal on (0, z1) and
/// (z2, z3), below it on (z1, z2) and (z3, 1)). Validated at
/// construction.
pub struct GenericUpdateMap {
    eval: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    descriptor: String,
    z: [f64; 3],
}

impl GenericUpdateMap {
    pub fn new<F>(eval: F, descriptor: impl Into<String>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let eval: Box<dyn Fn(f64) -> f64 + Send + Sync> = Box::new(eval);
        let report = find_fixed_points(&FnMap(|x| eval(x)))?;
        if report.points.len() != 3 {
            return Err(Error::ShapeViolation(format!(
                "bistable analysis needs exactly 3 fixed points, found {}",
                report.points.len()
            )));
        }
        if report.tangent_degenerate {
            return Err(Error::ShapeViolation(
                "fixed points must cross the diagonal transversally".into(),
            ));
        }
        let mut prev = eval(0.0);
        for i in 1..=2048 {
            let x = i as f64 / 2048.0;
            let y = eval(x);
            if y < prev - 1e-12 {
                return Err(Error::ShapeViolation(format!(
                    "map must be increasing; it decreases near x = {x}"
                )));
            }
            prev = y;
        }
        let z = [report.points[0].x, report.points[1].x, report.points[2].x];
        Ok(Self { eval, descriptor: descriptor.into(), z })
    }

    pub fn from_gaussian(params: &GaussianParams) -> Result<Self> {
        let p = *params;
        let descriptor = format!(
            "gaussian(alpha={}, beta={}, gamma={}, sigma={}, tau={})",
            p.alpha(),
            p.beta(),
            p.gamma(),
            p.sigma(),
            p.tau()
        );
        Self::new(move |x| p.eval(x), descriptor)
    }

    pub fn from_piecewise(map: PiecewiseLinearMap, descriptor: impl Into<String>) -> Result<Self> {
        Self::new(move |x| map.eval(x), descriptor)
    }

    /// The three fixed points, ascending.
    pub fn fixed_points(&self) -> [f64; 3] {
        self.z
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }
}

impl UpdateMap for GenericUpdateMap {
    fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }
}

impl std::fmt::Debug for GenericUpdateMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenericUpdateMap")
            .field("descriptor", &self.descriptor)
            .field("z", &self.z)
            .finish()
    }
}

/// Which model parameter a comparison perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbedParameter {
    Tau,
    Beta,
}

/// Fixed-point comparison between a base parameterization and a
/// perturbed one. The monotonicity claims are only evaluated when both
/// maps have three fixed points and the perturbation is non-trivial.
#[derive(Debug, Clone, Serialize)]
pub struct InterventionComparison {
    pub parameter: PerturbedParameter,
    pub base_value: f64,
    pub perturbed_value: f64,
    pub base: FixedPointReport,
    pub perturbed: FixedPointReport,
    /// Both maps have three fixed points.
    pub comparable: bool,
    /// z_i(perturbed) - z_i(base), when comparable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<[f64; 3]>,
    /// Whether the expected inequalities held. None when the
    /// perturbation is trivial or the maps are not comparable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_shift_holds: Option<bool>,
}

/// Compares fixed points after lowering the admission threshold to
/// `tau_prime`. Lowering the threshold shifts both attracting points
/// up and the middle (unstable) point down.
pub fn compare_threshold(params: &GaussianParams, tau_prime: f64) -> Result<InterventionComparison> {
    if !tau_prime.is_finite() || tau_prime > params.tau() {
        return Err(Error::Domain(format!(
            "perturbed threshold must satisfy tau' <= tau = {}",
            params.tau()
        )));
    }
    let perturbed_params = params.with_tau(tau_prime)?;
    let base = analyze_gaussian(params)?;
    let perturbed = analyze_gaussian(&perturbed_params)?;
    let comparable = base.points.len() == 3 && perturbed.points.len() == 3;
    let trivial = tau_prime == params.tau();
    let deltas = comparable.then(|| {
        let b = base.positions();
        let p = perturbed.positions();
        [p[0] - b[0], p[1] - b[1], p[2] - b[2]]
    });
    let expected_shift_holds = match deltas {
        Some(d) if !trivial => Some(d[0] > 0.0 && d[1] < 0.0 && d[2] > 0.0),
        _ => None,
    };
    Ok(InterventionComparison {
        parameter: PerturbedParameter::Tau,
        base_value: params.tau(),
        perturbed_value: tau_prime,
        base,
        perturbed,
        comparable,
        deltas,
        expected_shift_holds,
    })
}

/// Compares fixed points after moving the score weight to
/// `beta_prime`, which must lie between β and α. Aligning the score
/// with the admission objective shifts the low attracting point up and
/// the high one down.
pub fn compare_beta(params: &GaussianParams, beta_prime: f64) -> Result<InterventionComparison> {
    let (alpha, beta) = (params.alpha(), params.beta());
    let lo = beta.min(alpha);
    let hi = beta.max(alpha);
    if !beta_prime.is_finite() || beta_prime < lo || beta_prime > hi {
        return Err(Error::Domain(format!(
            "perturbed weight must lie between beta = {beta} and alpha = {alpha}"
        )));
    }
    let perturbed_params = params.with_beta(beta_prime)?;
    let base = analyze_gaussian(params)?;
    let perturbed = analyze_gaussian(&perturbed_params)?;
    let comparable = base.points.len() == 3 && perturbed.points.len() == 3;
    let trivial = beta_prime == beta;
    let deltas = comparable.then(|| {
        let b = base.positions();
        let p = perturbed.positions();
        [p[0] - b[0], p[1] - b[1], p[2] - b[2]]
    });
    let expected_shift_holds = match deltas {
        Some(d) if !trivial => Some(d[0] > 0.0 && d[2] < 0.0),
        _ => None,
    };
    Ok(InterventionComparison {
        parameter: PerturbedParameter::Beta,
        base_value: beta,
        perturbed_value: beta_prime,
        base,
        perturbed,
        comparable,
        deltas,
        expected_shift_holds,
    })
}

/// The minimum effective per-round subsidy: the largest shortfall
/// x - f(x) over the basin gap [z1, z2], and where it occurs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeltaReport {
    pub delta: f64,
    pub argmax_x: f64,
}

/// Maximizes x - f(x) over [z1, z2] with a 1024-cell scan refined by
/// golden-section search to 1e-10 in x.
pub fn compute_delta(map: &GenericUpdateMap) -> DeltaReport {
    let [z1, z2, _] = map.fixed_points();
    let g = |x: f64| x - map.eval(x);
    let cells = 1024usize;
    let dx = (z2 - z1) / cells as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=cells {
        let v = g(z1 + i as f64 * dx);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = z1 + dx * best_i.saturating_sub(1) as f64;
    let hi = (z1 + dx * (best_i + 1) as f64).min(z2);
    let (x, value) = golden_max(&g, lo, hi, 1e-10);
    DeltaReport { delta: value.max(0.0), argmax_x: x }
}

fn golden_max(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = 0.618_033_988_749_894_9;
    let mut m1 = hi - inv_phi * (hi - lo);
    let mut m2 = lo + inv_phi * (hi - lo);
    let (mut g1, mut g2) = (g(m1), g(m2));
    while hi - lo > tol {
        if g1 >= g2 {
            hi = m2;
            m2 = m1;
            g2 = g1;
            m1 = hi - inv_phi * (hi - lo);
            g1 = g(m1);
        } else {
            lo = m1;
            m1 = m2;
            g1 = g2;
            m2 = lo + inv_phi * (hi - lo);
            g2 = g(m2);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, g(x))
}

/// Trace and discounted loss of a constant per-round subsidy plan.
/// The subsidy C applies while the state is in the gap [z1, z2) and
/// ceases once the state crosses z2.
#[derive(Debug, Clone, Serialize)]
pub struct SubsidyPlan {
    pub cost_c: f64,
    pub lambda_weight: f64,
    pub rho: f64,
    pub mu0: f64,
    pub states: Vec<f64>,
    /// First t with states[t] >= z2. Equal to the truncation horizon
    /// when the target was not reached.
    pub horizon_t: usize,
    /// Whether the plan crossed z2 within the step budget.
    pub reached: bool,
    pub loss: f64,
    pub loss_cost_part: f64,
    pub loss_distance_part: f64,
}

/// Simulates μ_{t+1} = f(μ_t + C·1[μ_t in gap]) and accumulates the
/// discounted loss λ·Σ_{t<T} ρ^t·C + (1-λ)·Σ_{1<=t<T} ρ^t·(z2 - μ_t),
/// where T is the first crossing time. The t = 0 distance term is
/// excluded: the starting shortfall is sunk.
pub fn simulate_subsidy(
    map: &GenericUpdateMap,
    cost_c: f64,
    lambda_weight: f64,
    rho: f64,
    mu0: f64,
    max_steps: usize,
) -> Result<SubsidyPlan> {
    let [z1, z2, _] = map.fixed_points();
    if !cost_c.is_finite() || cost_c < 0.0 {
        return Err(Error::Domain("subsidy must be finite and non-negative".into()));
    }
    check_weight("lambda", lambda_weight)?;
    check_weight("rho", rho)?;
    if !mu0.is_finite() || mu0 < z1 - BAND_EDGE_TOL || mu0 >= z2 - CROSSING_TOL {
        return Err(Error::Domain(format!(
            "start must lie in the gap [z1, z2) = [{z1}, {z2})"
        )));
    }
    if max_steps == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }

    let mut states = vec![mu0];
    let mut cost_part = 0.0;
    let mut distance_part = 0.0;
    let mut rho_pow = 1.0;
    let mut reached = false;
    let mut t = 0;
    loop {
        let mu = states[t];
        if mu >= z2 - CROSSING_TOL {
            reached = true;
            break;
        }
        if t == max_steps {
            break;
        }
        if t >= 1 {
            distance_part += (1.0 - lambda_weight) * rho_pow * (z2 - mu);
        }
        let active = mu >= z1 - BAND_EDGE_TOL;
        let c_t = if active { cost_c } else { 0.0 };
        cost_part += lambda_weight * rho_pow * c_t;
        states.push(map.eval(mu + c_t));
        rho_pow *= rho;
        t += 1;
    }
    Ok(SubsidyPlan {
        cost_c,
        lambda_weight,
        rho,
        mu0,
        states,
        horizon_t: t,
        reached,
        loss: cost_part + distance_part,
        loss_cost_part: cost_part,
        loss_distance_part: distance_part,
    })
}

fn check_weight(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() || !(0.0..1.0).contains(&v) {
        return Err(Error::Domain(format!("{name} must lie in [0, 1)")));
    }
    Ok(())
}

/// Which sufficient condition applies to the one-shot-vs-gradual
/// question at the given (λ, ρ, μ0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OneShotPrecondition {
    /// ρ >= λ: every multi-round plan loses to the one-shot jump.
    OneShotOptimal,
    /// ρ < λ(1 - C/(z2 - μ0)) at the smallest tested C: that C-plan
    /// beats the one-shot.
    MinCostBetter,
    Neither,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CGridEntry {
    pub cost_c: f64,
    pub loss: f64,
    pub horizon_t: usize,
    pub reached: bool,
    pub beats_one_shot: bool,
    /// ρ < λ(1 - C/(z2 - μ0)) for this C.
    pub sufficient_condition_holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OneShotVerdict {
    pub lambda_weight: f64,
    pub rho: f64,
    pub mu0: f64,
    pub delta: f64,
    pub one_shot_cost: f64,
    pub one_shot_loss: f64,
    pub precondition: OneShotPrecondition,
    /// Constant-C plans on a 64-point grid of costs in (Δ, z2 - μ0],
    /// log-spaced in the margin above Δ.
    pub grid: Vec<CGridEntry>,
    pub best_grid_cost: f64,
    pub best_grid_loss: f64,
}

/// Compares the one-shot jump (cost z2 - μ0, loss λ(z2 - μ0)) against
/// constant per-round plans across a documented C-grid, and reports
/// which theoretical precondition holds.
pub fn check_one_shot_optimality(
    map: &GenericUpdateMap,
    lambda_weight: f64,
    rho: f64,
    mu0: f64,
) -> Result<OneShotVerdict> {
    check_weight("lambda", lambda_weight)?;
    check_weight("rho", rho)?;
    let [_, z2, _] = map.fixed_points();
    let delta = compute_delta(map).delta;
    let jump = z2 - mu0;
    let span = jump - delta;
    if !(span > 0.0) {
        return Err(Error::Domain(
            "start is too close to z2: no costs lie strictly between delta and the jump".into(),
        ));
    }
    let one_shot_loss = lambda_weight * jump;

    // Log-spaced margins above delta, from span*1e-6 up to span, so the
    // grid concentrates near the minimum effective subsidy where the
    // horizon is longest.
    let ratio = 1e-6_f64;
    let costs: Vec<f64> = (0..C_GRID_POINTS)
        .map(|i| {
            let t = i as f64 / (C_GRID_POINTS - 1) as f64;
            delta + span * ratio.powf(1.0 - t)
        })
        .collect();
    let grid: Vec<CGridEntry> = costs
        .par_iter()
        .map(|&c| {
            let plan = simulate_subsidy(map, c, lambda_weight, rho, mu0, 10_000_000)?;
            Ok(CGridEntry {
                cost_c: c,
                loss: plan.loss,
                horizon_t: plan.horizon_t,
                reached: plan.reached,
                beats_one_shot: plan.loss < one_shot_loss,
                sufficient_condition_holds: rho < lambda_weight * (1.0 - c / jump),
            })
        })
        .collect::<Result<_>>()?;

    let precondition = if rho >= lambda_weight {
        OneShotPrecondition::OneShotOptimal
    } else if grid[0].sufficient_condition_holds {
        OneShotPrecondition::MinCostBetter
    } else {
        OneShotPrecondition::Neither
    };
    let best = grid
        .iter()
        .min_by(|a, b| a.loss.partial_cmp(&b.loss).unwrap())
        .copied()
        .unwrap();
    Ok(OneShotVerdict {
        lambda_weight,
        rho,
        mu0,
        delta,
        one_shot_cost: jump,
        one_shot_loss,
        precondition,
        grid,
        best_grid_cost: best.cost_c,
        best_grid_loss: best.loss,
    })
}

/// Result of the DP subsidy planner on discretized wealth and cost
/// grids.
#[derive(Debug, Clone, Serialize)]
pub struct DpPlan {
    /// Per-step costs of the greedy-extracted optimal schedule.
    pub schedule: Vec<f64>,
    pub loss: f64,
    /// Largest displacement introduced by snapping a map image (or the
    /// start state) to the wealth grid.
    pub discretization_error: f64,
    pub wealth_grid: Vec<f64>,
    pub cost_grid: Vec<f64>,
    /// Whether the extracted schedule crosses z2 within the step cap.
    pub reached: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Transition {
    /// Image at or above z2: the plan ends, no further loss accrues.
    Terminal,
    State(usize),
}

struct DpGrid {
    wealth: Vec<f64>,
    cost: Vec<f64>,
    /// next[i * cost.len() + j] for state i, action j.
    next: Vec<Transition>,
    z2: f64,
    snap_error: f64,
}

fn build_dp_grid(map: &GenericUpdateMap, wealth_points: usize, cost_points: usize) -> Result<DpGrid> {
    if wealth_points < 2 || cost_points < 2 {
        return Err(Error::Domain("both grids need at least 2 points".into()));
    }
    let [z1, z2, _] = map.fixed_points();
    let delta = compute_delta(map).delta;
    let lo = z1 - delta;
    let hi = z2 + delta;
    let wealth: Vec<f64> = (0..wealth_points)
        .map(|i| lo + (hi - lo) * i as f64 / (wealth_points - 1) as f64)
        .collect();
    // Actions span [0, z2 - z1 + Δ]: enough to jump the whole gap from
    // any state the dynamics can reach.
    let cost: Vec<f64> = (0..cost_points)
        .map(|j| (z2 - z1 + delta) * j as f64 / (cost_points - 1) as f64)
        .collect();

    let mut next = Vec::with_capacity(wealth_points * cost_points);
    let mut snap_error = 0.0_f64;
    for &w in &wealth {
        for &a in &cost {
            if w >= z2 - CROSSING_TOL {
                next.push(Transition::Terminal);
                continue;
            }
            let img = map.eval(w + a);
            if img >= z2 - CROSSING_TOL {
                next.push(Transition::Terminal);
                continue;
            }
            let k = nearest_index(&wealth, img);
            snap_error = snap_error.max((img - wealth[k]).abs());
            if wealth[k] >= z2 - CROSSING_TOL {
                next.push(Transition::Terminal);
            } else {
                next.push(Transition::State(k));
            }
        }
    }
    Ok(DpGrid { wealth, cost, next, z2, snap_error })
}

fn nearest_index(grid: &[f64], x: f64) -> usize {
    let n = grid.len();
    let lo = grid[0];
    let step = grid[1] - grid[0];
    let i = ((x - lo) / step).round();
    (i.max(0.0) as usize).min(n - 1)
}

/// Plans the loss-minimizing subsidy schedule by value iteration over
/// a uniform wealth grid on [z1 - Δ, z2 + Δ] and a uniform cost grid
/// on [0, z2 - z1 + Δ]. Map images snap to the nearest wealth state;
/// images at or above z2 terminate exactly. The returned loss is
/// optimal for the snapped dynamics; `discretization_error` bounds the
/// per-step state displacement versus the continuous map.
pub fn dp_optimal_subsidy(
    map: &GenericUpdateMap,
    lambda_weight: f64,
    rho: f64,
    mu0: f64,
    wealth_points: usize,
    cost_points: usize,
) -> Result<DpPlan> {
    check_weight("lambda", lambda_weight)?;
    check_weight("rho", rho)?;
    let [_, z2, _] = map.fixed_points();
    if mu0 >= z2 - CROSSING_TOL {
        return Ok(DpPlan {
            schedule: Vec::new(),
            loss: 0.0,
            discretization_error: 0.0,
            wealth_grid: Vec::new(),
            cost_grid: Vec::new(),
            reached: true,
        });
    }
    let grid = build_dp_grid(map, wealth_points, cost_points)?;
    let (n_w, n_c) = (grid.wealth.len(), grid.cost.len());
    if !mu0.is_finite() || mu0 < grid.wealth[0] || mu0 > grid.wealth[n_w - 1] {
        return Err(Error::Domain(format!(
            "start must lie in the wealth grid range [{}, {}]",
            grid.wealth[0],
            grid.wealth[n_w - 1]
        )));
    }
    let start = nearest_index(&grid.wealth, mu0);
    let discretization_error = grid.snap_error.max((mu0 - grid.wealth[start]).abs());

    // G[i] is the value on arrival at state i: the state's own distance
    // term plus the best discounted continuation. Terminal arrivals
    // contribute nothing. Synchronous sweeps from G = 0 increase
    // monotonically to the fixed point, which is reached exactly.
    let after = |g: &[f64], i: usize, j: usize| match grid.next[i * n_c + j] {
        Transition::Terminal => 0.0,
        Transition::State(k) => g[k],
    };
    let backup = |g: &[f64], i: usize| -> f64 {
        let mut best = f64::INFINITY;
        for j in 0..n_c {
            let v = lambda_weight * grid.cost[j] + rho * after(g, i, j);
            if v < best {
                best = v;
            }
        }
        (1.0 - lambda_weight) * (grid.z2 - grid.wealth[i]) + best
    };
    let mut g = vec![0.0; n_w];
    let mut converged = false;
    for _ in 0..MAX_VI_SWEEPS {
        let mut changed = false;
        let new: Vec<f64> = (0..n_w)
            .map(|i| {
                if grid.wealth[i] >= grid.z2 - CROSSING_TOL {
                    return 0.0;
                }
                backup(&g, i)
            })
            .collect();
        for i in 0..n_w {
            if new[i] != g[i] {
                changed = true;
            }
        }
        g = new;
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "value iteration did not reach a fixed point within {MAX_VI_SWEEPS} sweeps"
        )));
    }

    let plan_value = |i: usize, j: usize| lambda_weight * grid.cost[j] + rho * after(&g, i, j);
    let best_action = |i: usize| -> usize {
        let mut best_j = 0;
        let mut best = plan_value(i, 0);
        for j in 1..n_c {
            let v = plan_value(i, j);
            if v < best {
                best = v;
                best_j = j;
            }
        }
        best_j
    };
    let loss = plan_value(start, best_action(start));

    let mut schedule = Vec::new();
    let mut reached = false;
    let mut i = start;
    for _ in 0..MAX_SCHEDULE_STEPS {
        let j = best_action(i);
        schedule.push(grid.cost[j]);
        match grid.next[i * n_c + j] {
            Transition::Terminal => {
                reached = true;
                break;
            }
            Transition::State(k) => i = k,
        }
    }
    Ok(DpPlan {
        schedule,
        loss,
        discretization_error,
        wealth_grid: grid.wealth,
        cost_grid: grid.cost,
        reached,
    })
}

/// Brute-force reference for the DP planner: the minimum loss over all
/// action sequences of length at most `max_len` that terminate, on the
/// same grids and with the same backup arithmetic. Exponential in
/// `max_len`; intended for validating the planner on tiny grids.
pub fn dp_enumeration_loss(
    map: &GenericUpdateMap,
    lambda_weight: f64,
    rho: f64,
    mu0: f64,
    wealth_points: usize,
    cost_points: usize,
    max_len: usize,
) -> Result<f64> {
    check_weight("lambda", lambda_weight)?;
    check_weight("rho", rho)?;
    let [_, z2, _] = map.fixed_points();
    if mu0 >= z2 - CROSSING_TOL {
        return Ok(0.0);
    }
    let grid = build_dp_grid(map, wealth_points, cost_points)?;
    if mu0 < grid.wealth[0] || mu0 > grid.wealth[grid.wealth.len() - 1] {
        return Err(Error::Domain("start must lie in the wealth grid range".into()));
    }
    let start = nearest_index(&grid.wealth, mu0);

    fn best(grid: &DpGrid, lambda: f64, rho: f64, i: usize, depth: usize) -> f64 {
        if depth == 0 {
            return f64::INFINITY;
        }
        let n_c = grid.cost.len();
        let mut best_v = f64::INFINITY;
        for j in 0..n_c {
            let v = match grid.next[i * n_c + j] {
                Transition::Terminal => lambda * grid.cost[j],
                Transition::State(k) => {
                    let cont = best(grid, lambda, rho, k, depth - 1);
                    if !cont.is_finite() {
                        continue;
                    }
                    lambda * grid.cost[j]
                        + rho * ((1.0 - lambda) * (grid.z2 - grid.wealth[k]) + cont)
                }
            };
            if v < best_v {
                best_v = v;
            }
        }
        best_v
    }
    let v = best(&grid, lambda_weight, rho, start, max_len);
    if !v.is_finite() {
        return Err(Error::Numeric(format!(
            "no action sequence of length <= {max_len} terminates from the start state"
        )));
    }
    Ok(v)
}

/// Outcome of iterating the two algebraic forms of a constant subsidy
/// side by side: u_{n+1} = f(u_n + C) against v_{n+1} = f(v_n) + C
/// started at v_0 = u_0 + C. The two runs stay exactly C apart.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EquivalenceReport {
    pub cost_c: f64,
    pub x0: f64,
    pub steps: usize,
    /// max_n |v_n - u_n - C|.
    pub max_abs_deviation: f64,
    /// Deviation stayed within 1e-12.
    pub invariant_held: bool,
    /// First n with u_n >= z2, if any.
    pub horizon_u: Option<usize>,
    /// First n with v_n >= z2, if any. The v-run carries the subsidy
    /// inside its state, so it crosses no later than the u-run and at
    /// most one step earlier.
    pub horizon_v: Option<usize>,
    /// Horizons present and differing by at most one step.
    pub horizons_within_one: bool,
}

/// Verifies that the pre-add and post-add subsidy forms produce
/// identical dynamics up to the constant offset C.
pub fn subsidy_form_equivalence(
    map: &GenericUpdateMap,
    cost_c: f64,
    x0: f64,
    steps: usize,
) -> Result<EquivalenceReport> {
    if !cost_c.is_finite() || cost_c < 0.0 {
        return Err(Error::Domain("subsidy must be finite and non-negative".into()));
    }
    if !x0.is_finite() {
        return Err(Error::Domain("start must be finite".into()));
    }
    if steps == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }
    let [_, z2, _] = map.fixed_points();
    let mut u = x0;
    let mut v = x0 + cost_c;
    let mut max_dev = (v - u - cost_c).abs();
    let mut horizon_u = (u >= z2 - CROSSING_TOL).then_some(0);
    let mut horizon_v = (v >= z2 - CROSSING_TOL).then_some(0);
    for n in 1..=steps {
        u = map.eval(u + cost_c);
        v = map.eval(v) + cost_c;
        max_dev = max_dev.max((v - u - cost_c).abs());
        if horizon_u.is_none() && u >= z2 - CROSSING_TOL {
            horizon_u = Some(n);
        }
        if horizon_v.is_none() && v >= z2 - CROSSING_TOL {
            horizon_v = Some(n);
        }
    }
    let horizons_within_one = match (horizon_u, horizon_v) {
        (Some(a), Some(b)) => a.abs_diff(b) <= 1,
        _ => false,
    };
    Ok(EquivalenceReport {
        cost_c,
        x0,
        steps,
        max_abs_deviation: max_dev,
        invariant_held: max_dev <= 1e-12,
        horizon_u,
        horizon_v,
        horizons_within_one,
    })
}

/// A wealth-dependent admission threshold C(x) chosen so the induced
/// update map is exactly the affine function a·x + b.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AffineThresholdSchedule {
    params: GaussianParams,
    pub a: f64,
    pub b: f64,
}

/// Builds the schedule C(x) = (1-α)x + Φ⁻¹(1 - ax - b)/K, which makes
/// the admission update 1 - Φ(K(C(x) - (1-α)x)) equal a·x + b wherever
/// the target lies inside (0, 1).
pub fn threshold_schedule_affine(
    params: &GaussianParams,
    a: f64,
    b: f64,
) -> Result<AffineThresholdSchedule> {
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain("schedule coefficients must be finite".into()));
    }
    Ok(AffineThresholdSchedule { params: *params, a, b })
}

impl AffineThresholdSchedule {
    /// Target admission probability at x.
    pub fn target(&self, x: f64) -> f64 {
        self.a * x + self.b
    }

    /// The threshold to post at wealth x.
    pub fn threshold(&self, x: f64) -> Result<f64> {
        let target = self.target(x);
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::Domain(format!(
                "target admission probability {target} at x = {x} is outside (0, 1)"
            )));
        }
        let oma = 1.0 - self.params.alpha();
        Ok(oma * x + quantile(1.0 - target) / self.params.k())
    }

    /// The admission probability the model would realize at wealth x
    /// under this schedule; equals `target(x)` up to round-off.
    pub fn induced_update(&self, x: f64) -> Result<f64> {
        let c = self.threshold(x)?;
        let oma = 1.0 - self.params.alpha();
        Ok(1.0 - phi(self.params.k() * (c - oma * x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn triple_crossing() -> GaussianParams {
        GaussianParams::new(0.1, 0.95, 1.4, 1.1, 0.5).unwrap()
    }

    fn triple_crossing_map() -> GenericUpdateMap {
        GenericUpdateMap::from_gaussian(&triple_crossing()).unwrap()
    }

    /// Piecewise map with f(x) = x - 0.06 on [0.2, 0.55] and fixed
    /// points 0.1, 0.6, 0.85.
    fn linear_gap_map() -> GenericUpdateMap {
        let m = PiecewiseLinearMap::new(vec![
            (0.0, 0.05),
            (0.1, 0.1),
            (0.2, 0.14),
            (0.55, 0.49),
            (0.6, 0.6),
            (0.725, 0.775),
            (0.85, 0.85),
            (1.0, 0.9),
        ])
        .unwrap();
        GenericUpdateMap::from_piecewise(m, "linear-gap").unwrap()
    }

    #[test]
    fn construction_validates_shape() {
        let single_crossing = GaussianParams::new(0.1, 0.6, 0.4, 1.1, 0.2).unwrap();
        assert!(GenericUpdateMap::from_gaussian(&single_crossing).is_err());
        let m = triple_crossing_map();
        let z = m.fixed_points();
        assert!((z[0] - 0.002_971_421_424_527_4).abs() < 1e-9);
        assert!((z[1] - 0.613_495_493_018_482_4).abs() < 1e-9);
        assert!((z[2] - 0.983_414_196_349_472_4).abs() < 1e-9);
        let decreasing = GenericUpdateMap::new(|x| 0.9 - 0.5 * x, "decreasing");
        assert!(decreasing.is_err());
    }

    #[test]
    fn threshold_comparison_shifts_points() {
        let cmp = compare_threshold(&triple_crossing(), 0.48).unwrap();
        assert!(cmp.comparable);
        assert_eq!(cmp.expected_shift_holds, Some(true));
        let d = cmp.deltas.unwrap();
        assert!(d[0] > 0.0 && d[1] < 0.0 && d[2] > 0.0);
    }

    #[test]
    fn threshold_comparison_trivial_at_equality() {
        let cmp = compare_threshold(&triple_crossing(), 0.5).unwrap();
        assert_eq!(cmp.deltas, Some([0.0, 0.0, 0.0]));
        assert_eq!(cmp.expected_shift_holds, None);
        assert!(compare_threshold(&triple_crossing(), 0.6).is_err());
    }

    #[test]
    fn lower_threshold_lifts_map_pointwise() {
        let base = triple_crossing();
        let lowered = base.with_tau(0.48).unwrap();
        for i in 0..=40 {
            let x = i as f64 / 40.0;
            assert!(lowered.eval(x) > base.eval(x));
        }
    }

    #[test]
    fn beta_comparison_moves_outer_points_inward() {
        // The triple-crossing setup has beta = 0.95 above alpha = 0.1; moving beta toward
        // alpha raises z1 and lowers z3.
        let cmp = compare_beta(&triple_crossing(), 0.9).unwrap();
        assert!(cmp.comparable);
        assert_eq!(cmp.expected_shift_holds, Some(true));
        let d = cmp.deltas.unwrap();
        assert!(d[0] > 0.0 && d[2] < 0.0);
        assert!(compare_beta(&triple_crossing(), 0.99).is_err());
        assert!(compare_beta(&triple_crossing(), 0.05).is_err());
    }

    #[test]
    fn beta_sensitivity_sign_structure() {
        // sign(df/dbeta) = sign((alpha - beta)(tau - (1-alpha)x)),
        // checked by central differences on both sides of the
        // inflection point.
        let p = triple_crossing();
        let h = 1e-6;
        for x in [0.3, 0.8] {
            let up = p.with_beta(p.beta() + h).unwrap().eval(x);
            let down = p.with_beta(p.beta() - h).unwrap().eval(x);
            let fd = (up - down) / (2.0 * h);
            let expected = (p.alpha() - p.beta()) * (p.tau() - (1.0 - p.alpha()) * x);
            assert!(
                fd.signum() == expected.signum(),
                "x = {x}: fd = {fd}, expected sign {}",
                expected.signum()
            );
        }
    }

    #[test]
    fn perturbation_claims_hold_on_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tested_tau = 0;
        let mut tested_beta = 0;
        while tested_tau < 20 || tested_beta < 20 {
            // The lower alpha bound keeps K moderate so every root sits
            // far enough inside (0, 1) for its shift to be resolvable.
            let alpha = rng.gen_range(0.05..0.3);
            let beta = rng.gen_range(0.85..0.99);
            let gamma = rng.gen_range(1.0..2.0);
            let sigma = rng.gen_range(0.8..1.5);
            let tau = (1.0 - alpha) / 2.0 + rng.gen_range(-0.05..0.05);
            let Ok(p) = GaussianParams::new(alpha, beta, gamma, sigma, tau) else {
                continue;
            };
            let Ok(base) = analyze_gaussian(&p) else { continue };
            if base.points.len() != 3 {
                continue;
            }
            if tested_tau < 20 {
                let cmp = compare_threshold(&p, tau - 0.02).unwrap();
                if cmp.comparable {
                    assert_eq!(cmp.expected_shift_holds, Some(true), "tau draw {p:?}");
                    tested_tau += 1;
                }
            }
            if tested_beta < 20 {
                let toward = beta - 0.02;
                let cmp = compare_beta(&p, toward).unwrap();
                if cmp.comparable {
                    assert_eq!(cmp.expected_shift_holds, Some(true), "beta draw {p:?}");
                    tested_beta += 1;
                }
            }
        }
    }

    #[test]
    fn delta_on_linear_gap_is_exact() {
        let report = compute_delta(&linear_gap_map());
        assert!((report.delta - 0.06).abs() < 1e-10);
        let [z1, z2, _] = linear_gap_map().fixed_points();
        assert!(report.argmax_x > z1 && report.argmax_x < z2);
        assert!(report.delta < z2 - z1);
    }

    #[test]
    fn delta_matches_frozen_value_and_dense_scan() {
        let m = triple_crossing_map();
        let report = compute_delta(&m);
        assert!((report.delta - 0.199_534_382_635_160_77).abs() < 1e-9);
        assert!((report.argmax_x - 0.320_243_638_432_547).abs() < 1e-5);

        let [z1, z2, _] = m.fixed_points();
        let mut dense = f64::NEG_INFINITY;
        for i in 0..=1_000_000 {
            let x = z1 + (z2 - z1) * i as f64 / 1e6;
            dense = dense.max(x - m.eval(x));
        }
        assert!(report.delta >= dense - 1e-12);
        assert!(report.delta - dense < 1e-9);
    }

    #[test]
    fn one_shot_plan_has_loss_lambda_c() {
        let m = triple_crossing_map();
        let [_, z2, _] = m.fixed_points();
        let mu0 = 0.32;
        let c = z2 - mu0;
        let plan = simulate_subsidy(&m, c, 0.5, 0.9, mu0, 1000).unwrap();
        assert_eq!(plan.horizon_t, 1);
        assert!(plan.reached);
        assert!((plan.loss - 0.5 * c).abs() < 1e-12);
        assert_eq!(plan.loss_distance_part, 0.0);
    }

    #[test]
    fn loss_decomposition_is_exact() {
        let m = triple_crossing_map();
        let plan = simulate_subsidy(&m, 0.25, 0.7, 0.9, 0.1, 10_000).unwrap();
        assert_eq!(plan.loss, plan.loss_cost_part + plan.loss_distance_part);
        assert!(plan.reached);
    }

    #[test]
    fn subcritical_subsidy_stalls_below_blockage() {
        // Starts below argmax - delta cannot pass the worst shortfall
        // when C <= delta.
        let m = triple_crossing_map();
        let report = compute_delta(&m);
        let mu0 = 0.05;
        assert!(mu0 < report.argmax_x - report.delta);
        let plan = simulate_subsidy(&m, report.delta * 0.999, 0.5, 0.9, mu0, 20_000).unwrap();
        assert!(!plan.reached);
        assert_eq!(plan.horizon_t, 20_000);
    }

    #[test]
    fn supercritical_subsidy_meets_horizon_bound() {
        let m = triple_crossing_map();
        let delta = compute_delta(&m).delta;
        let [z1, z2, _] = m.fixed_points();
        for (c_margin, mu0) in [(0.01, 0.05), (0.05, z1), (0.2, 0.3)] {
            let c = delta + c_margin;
            let plan = simulate_subsidy(&m, c, 0.5, 0.9, mu0, 1_000_000).unwrap();
            assert!(plan.reached, "c = {c}, mu0 = {mu0}");
            let bound = ((z2 - mu0) / c_margin).ceil() as usize;
            assert!(plan.horizon_t <= bound, "T = {} > bound {bound}", plan.horizon_t);
        }
    }

    #[test]
    fn domain_errors_on_bad_plan_inputs() {
        let m = triple_crossing_map();
        let [_, z2, _] = m.fixed_points();
        assert!(simulate_subsidy(&m, -0.1, 0.5, 0.9, 0.3, 100).is_err());
        assert!(simulate_subsidy(&m, 0.1, 1.0, 0.9, 0.3, 100).is_err());
        assert!(simulate_subsidy(&m, 0.1, 0.5, 0.9, z2, 100).is_err());
        assert!(simulate_subsidy(&m, 0.1, 0.5, 0.9, 0.9, 100).is_err());
    }

    #[test]
    fn one_shot_wins_when_discount_dominates() {
        let m = triple_crossing_map();
        let verdict = check_one_shot_optimality(&m, 0.5, 0.9, 0.32).unwrap();
        assert_eq!(verdict.precondition, OneShotPrecondition::OneShotOptimal);
        for entry in &verdict.grid {
            assert!(
                verdict.one_shot_loss <= entry.loss + 1e-12,
                "C = {} loses: {} < {}",
                entry.cost_c,
                entry.loss,
                verdict.one_shot_loss
            );
        }
    }

    #[test]
    fn gradual_wins_when_patience_is_cheap() {
        let m = triple_crossing_map();
        let verdict = check_one_shot_optimality(&m, 0.9, 0.01, 0.32).unwrap();
        assert_eq!(verdict.precondition, OneShotPrecondition::MinCostBetter);
        for entry in &verdict.grid {
            if entry.sufficient_condition_holds {
                assert!(entry.beats_one_shot, "C = {}", entry.cost_c);
            }
        }
        assert!(verdict.best_grid_loss < verdict.one_shot_loss);
    }

    #[test]
    fn min_cost_loss_approaches_closed_form_on_linear_gap() {
        // On the piecewise map the state gains exactly C - delta per
        // round through the gap, so the (delta + eps) plan's loss tends
        // to lambda*delta/(1-rho) + rho(1-lambda)(z2-mu0)/(1-rho).
        let m = linear_gap_map();
        let (lambda, rho, mu0) = (0.95, 0.9, 0.25);
        let delta = compute_delta(&m).delta;
        let [_, z2, _] = m.fixed_points();
        let limit = lambda * delta / (1.0 - rho) + rho * (1.0 - lambda) * (z2 - mu0) / (1.0 - rho);
        let plan = simulate_subsidy(&m, delta + 1e-4, lambda, rho, mu0, 10_000_000).unwrap();
        assert!(plan.reached);
        let rel = (plan.loss - limit).abs() / limit;
        assert!(rel < 0.01, "loss {} vs limit {limit} (rel {rel})", plan.loss);
    }

    #[test]
    fn dp_trivial_when_already_past_target() {
        let m = triple_crossing_map();
        let plan = dp_optimal_subsidy(&m, 0.5, 0.9, 0.99, 9, 9).unwrap();
        assert!(plan.schedule.is_empty());
        assert_eq!(plan.loss, 0.0);
        assert!(plan.reached);
    }

    #[test]
    fn dp_matches_enumeration_on_tiny_grids() {
        let m = triple_crossing_map();
        for (lambda, rho) in [(0.5, 0.9), (0.3, 0.6), (0.8, 0.85)] {
            let plan = dp_optimal_subsidy(&m, lambda, rho, 0.32, 5, 5).unwrap();
            assert!(plan.reached);
            assert!(plan.schedule.len() <= 5, "schedule too long for the oracle");
            let oracle = dp_enumeration_loss(&m, lambda, rho, 0.32, 5, 5, 5).unwrap();
            assert!(
                (plan.loss - oracle).abs() <= 1e-12,
                "lambda = {lambda}, rho = {rho}: dp {} vs enumeration {oracle}",
                plan.loss
            );
        }
    }

    #[test]
    fn dp_prefers_single_jump_when_discount_dominates() {
        let m = triple_crossing_map();
        let plan = dp_optimal_subsidy(&m, 0.5, 0.9, 0.32, 33, 33).unwrap();
        assert_eq!(plan.schedule.len(), 1);
        assert!(plan.reached);
    }

    #[test]
    fn dp_beats_constant_plans_on_its_own_grid() {
        let m = triple_crossing_map();
        let (lambda, rho, mu0) = (0.8, 0.5, 0.32);
        let plan = dp_optimal_subsidy(&m, lambda, rho, mu0, 33, 33).unwrap();
        let grid = build_dp_grid(&m, 33, 33).unwrap();
        let start = nearest_index(&grid.wealth, mu0);
        let n_c = grid.cost.len();
        for j in 0..n_c {
            if let Some(rollout) = constant_plan_loss(&grid, lambda, rho, start, j, 10_000) {
                assert!(
                    plan.loss <= rollout + 1e-9,
                    "constant action {} beats DP: {} < {}",
                    grid.cost[j],
                    rollout,
                    plan.loss
                );
            }
        }
    }

    /// Discounted loss of repeating action j on the snapped dynamics,
    /// None if it never terminates within the cap.
    fn constant_plan_loss(
        grid: &DpGrid,
        lambda: f64,
        rho: f64,
        start: usize,
        j: usize,
        cap: usize,
    ) -> Option<f64> {
        let n_c = grid.cost.len();
        let mut i = start;
        let mut loss = 0.0;
        let mut rho_pow = 1.0;
        for _ in 0..cap {
            loss += lambda * grid.cost[j] * rho_pow;
            match grid.next[i * n_c + j] {
                Transition::Terminal => return Some(loss),
                Transition::State(k) => {
                    i = k;
                    rho_pow *= rho;
                    loss += (1.0 - lambda) * (grid.z2 - grid.wealth[k]) * rho_pow;
                }
            }
        }
        None
    }

    #[test]
    fn equivalence_of_subsidy_forms() {
        let m = triple_crossing_map();
        let zero = subsidy_form_equivalence(&m, 0.0, 0.32, 50).unwrap();
        assert_eq!(zero.max_abs_deviation, 0.0);
        // Subcritical subsidy: the runs stall below z2, but the offset
        // invariant still holds.
        let report = subsidy_form_equivalence(&m, 0.1, 0.32, 50).unwrap();
        assert!(report.invariant_held, "deviation {}", report.max_abs_deviation);
        assert!(report.horizon_u.is_none() && report.horizon_v.is_none());
        // Supercritical subsidy: both forms cross, at most a step apart,
        // the v-run never later than the u-run.
        let report = subsidy_form_equivalence(&m, 0.25, 0.32, 50).unwrap();
        assert!(report.invariant_held, "deviation {}", report.max_abs_deviation);
        assert!(report.horizons_within_one, "{report:?}");
        assert!(report.horizon_v.unwrap() <= report.horizon_u.unwrap());
    }

    #[test]
    fn affine_schedule_reproduces_target() {
        let p = triple_crossing();
        let s = threshold_schedule_affine(&p, 0.3, 0.2).unwrap();
        for i in 0..20 {
            let x = 0.025 + 0.05 * i as f64;
            let induced = s.induced_update(x).unwrap();
            assert!(
                (induced - s.target(x)).abs() <= 1e-10,
                "x = {x}: {induced} vs {}",
                s.target(x)
            );
        }
    }

    #[test]
    fn affine_schedule_median_case_drops_quantile_term() {
        let p = triple_crossing();
        let s = threshold_schedule_affine(&p, 0.0, 0.5).unwrap();
        for x in [0.0, 0.3, 0.9] {
            let c = s.threshold(x).unwrap();
            assert!((c - (1.0 - p.alpha()) * x).abs() <= 1e-12);
        }
    }

    #[test]
    fn affine_schedule_consistent_with_base_map_at_a_point() {
        let p = triple_crossing();
        let x0 = 0.4;
        let s = threshold_schedule_affine(&p, 0.0, p.eval(x0)).unwrap();
        let c = s.threshold(x0).unwrap();
        assert!((c - p.tau()).abs() <= 1e-10);
    }

    #[test]
    fn affine_schedule_rejects_oversaturated_target() {
        let p = triple_crossing();
        let s = threshold_schedule_affine(&p, 1.0, 0.5).unwrap();
        assert!(s.threshold(0.6).is_err());
    }
}
