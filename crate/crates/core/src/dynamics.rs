//! Forward iteration of update maps: trajectories, convergence and
//! cycle detection, and cobweb-plot segment data.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::UpdateMap;

/// Default convergence tolerance. Supported maps converge
/// geometrically away from tangencies, so a tight tolerance is cheap.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration cap.
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;
/// Longest cycle the revisit check looks for.
const CYCLE_WINDOW: usize = 16;

/// How an iteration run ended.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Terminal {
    /// Successive states agreed within tolerance; `z` is the last state.
    Converged { z: f64 },
    /// A state revisited the trajectory `period` steps back; `support`
    /// lists the repeating states in trajectory order.
    Cycle { period: usize, support: Vec<f64> },
    /// The step cap was reached without convergence or a cycle.
    MaxIterations,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// Visited states, starting with the initial condition. Each state
    /// equals the map applied to the previous one, exactly as computed.
    pub states: Vec<f64>,
    pub terminal: Terminal,
}

impl Trajectory {
    /// Number of map applications.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Steps that moved the state: for a converged run the final step
    /// only confirms the estimate, so it is not counted. A run started
    /// at a fixed point reports zero.
    pub fn effective_steps(&self) -> usize {
        match self.terminal {
            Terminal::Converged { .. } => self.steps() - 1,
            _ => self.steps(),
        }
    }
}

/// One cobweb segment, either vertical (x0 = x1) or horizontal
/// (y0 = y1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

/// Iterates `map` from `x0` until successive states agree within
/// `tol`, a cycle of period at most 16 is detected, or `max_steps`
/// applications have been made.
pub fn iterate<M: UpdateMap>(map: &M, x0: f64, max_steps: usize, tol: f64) -> Result<Trajectory> {
    if !x0.is_finite() {
        return Err(Error::Domain("initial state must be finite".into()));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Domain("tolerance must be positive and finite".into()));
    }
    if max_steps == 0 {
        return Err(Error::Domain("need at least one step".into()));
    }

    let mut states = Vec::with_capacity(64.min(max_steps + 1));
    states.push(x0);
    for _ in 0..max_steps {
        let prev = *states.last().unwrap();
        let next = map.eval(prev);
        if !next.is_finite() {
            return Err(Error::Numeric(format!(
                "map produced non-finite value at x = {prev}"
            )));
        }
        states.push(next);
        if (next - prev).abs() <= tol {
            return Ok(Trajectory { states, terminal: Terminal::Converged { z: next } });
        }
        let len = states.len();
        for k in 2..=CYCLE_WINDOW.min(len - 1) {
            if (next - states[len - 1 - k]).abs() <= tol {
                let support = states[len - 1 - k..len - 1].to_vec();
                return Ok(Trajectory { states, terminal: Terminal::Cycle { period: k, support } });
            }
        }
    }
    Ok(Trajectory { states, terminal: Terminal::MaxIterations })
}

/// Runs `iterate` for each start point in parallel; results keep the
/// order of `starts`.
pub fn iterate_batch<M: UpdateMap + Sync>(
    map: &M,
    starts: &[f64],
    max_steps: usize,
    tol: f64,
) -> Result<Vec<Trajectory>> {
    starts
        .par_iter()
        .map(|&x0| iterate(map, x0, max_steps, tol))
        .collect()
}

/// Cobweb-plot data for a trajectory: for each step, a vertical
/// segment from the diagonal to the map value followed by a horizontal
/// segment back to the diagonal. Segment count is 2 * steps.
pub fn cobweb_points(trajectory: &Trajectory) -> Vec<Segment> {
    let s = &trajectory.states;
    let mut segments = Vec::with_capacity(2 * trajectory.steps());
    for t in 0..trajectory.steps() {
        let (x, y) = (s[t], s[t + 1]);
        segments.push(Segment { x0: x, y0: x, x1: x, y1: y });
        segments.push(Segment { x0: x, y0: y, x1: y, y1: y });
    }
    segments
}
