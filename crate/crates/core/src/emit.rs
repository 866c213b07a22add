//! CSV emitters for trajectories, cobweb segments, fixed-point
//! comparisons, and grid surveys. All output uses '.' decimals, LF
//! line endings, a header row, and floats with 17 significant digits
//! so values round-trip exactly.

use std::fmt::Write as _;

use crate::dynamics::{Segment, Trajectory};
use crate::fixed_points::SurveyReport;
use crate::interventions::InterventionComparison;

/// 17 significant digits: enough to reconstruct any f64 bit pattern.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Columns: step, x.
pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let mut out = String::from("step,x\n");
    for (i, x) in trajectory.states.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", format_float(*x));
    }
    out
}

/// Columns: segment_index, x0, y0, x1, y1.
pub fn cobweb_csv(segments: &[Segment]) -> String {
    let mut out = String::from("segment_index,x0,y0,x1,y1\n");
    for (i, s) in segments.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{}",
            format_float(s.x0),
            format_float(s.y0),
            format_float(s.x1),
            format_float(s.y1)
        );
    }
    out
}

/// Columns: tau_or_beta, z1, z2, z3. One row for the base parameter
/// value, one for the perturbed value. Positions beyond the found
/// fixed points are left empty.
pub fn comparison_csv(comparison: &InterventionComparison) -> String {
    let mut out = String::from("tau_or_beta,z1,z2,z3\n");
    for (value, report) in [
        (comparison.base_value, &comparison.base),
        (comparison.perturbed_value, &comparison.perturbed),
    ] {
        let mut row = format_float(value);
        for i in 0..3 {
            row.push(',');
            if let Some(p) = report.points.get(i) {
                row.push_str(&format_float(p.x));
            }
        }
        let _ = writeln!(out, "{row}");
    }
    out
}

/// Columns: alpha, beta, gamma, sigma, tau, n_fixed_points, K,
/// contraction. One row per surveyed tuple, in grid order, followed
/// by a comment line with the three-fixed-point fraction.
pub fn survey_csv(report: &SurveyReport) -> String {
    let mut out = String::from("alpha,beta,gamma,sigma,tau,n_fixed_points,K,contraction\n");
    for c in &report.cases {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            format_float(c.alpha),
            format_float(c.beta),
            format_float(c.gamma),
            format_float(c.sigma),
            format_float(c.tau),
            c.n_fixed_points,
            format_float(c.k),
            c.contraction
        );
    }
    let _ = writeln!(out, "# fraction_three_fp = {}", format_float(report.fraction_three_fp));
    out
}
