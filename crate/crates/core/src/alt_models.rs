//! Alternative population models: Bernoulli type with Gaussian wealth
//! (threshold hiring rules, wealth-mean update, general score cutoff)
//! and Bernoulli type with Pareto wealth (acceptance set only).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special_functions::{phi, Probability};

/// Bernoulli(p) type added to Gaussian N(μ, σ²) wealth; the employer
/// sees the score S = W + T and ranks candidates by an α-weighted mix
/// of type fit and wealth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BernGaussParams {
    p: f64,
    beta_thr: f64,
    sigma: f64,
    alpha_mix: f64,
}

impl BernGaussParams {
    pub fn new(p: f64, beta_thr: f64, sigma: f64, alpha_mix: f64) -> Result<Self> {
        for (name, v) in [("p", p), ("beta", beta_thr)] {
            if !v.is_finite() || !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain(format!(
                    "{name} must lie strictly inside (0, 1), got {v}"
                )));
            }
        }
        if !sigma.is_finite() || !(sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        if !alpha_mix.is_finite() || !(0.0..=1.0).contains(&alpha_mix) {
            return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha_mix}")));
        }
        Ok(Self { p, beta_thr, sigma, alpha_mix })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn beta_thr(&self) -> f64 {
        self.beta_thr
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn alpha_mix(&self) -> f64 {
        self.alpha_mix
    }

    /// Offset of the type-ranked hiring bar above the population mean:
    /// under pure type ranking, accept iff s >= μ + k with
    /// k = 1/2 - σ²(ln(1/β - 1) + ln(p/(1-p))). Independent of μ.
    pub fn threshold_k(&self) -> f64 {
        let Self { p, beta_thr, sigma, .. } = *self;
        0.5 - sigma * sigma * ((1.0 / beta_thr - 1.0).ln() + (p / (1.0 - p)).ln())
    }

    /// P[T = 1 | S = s] when the population mean is μ, via the
    /// log-odds of the two shifted Gaussian likelihoods.
    pub fn type_posterior(&self, s: f64, mu: f64) -> f64 {
        let z = s - mu;
        let log_odds =
            (self.p / (1.0 - self.p)).ln() + (2.0 * z - 1.0) / (2.0 * self.sigma * self.sigma);
        sigmoid(log_odds)
    }

    /// The score cutoff s*: candidates with s >= s* are hired. The
    /// cutoff solves (2α-1)·P[T=1|S=s] = β - (1-α)s by bisection; the
    /// posterior term is bounded while the linear term is not, so an
    /// expanding bracket always captures the crossing.
    pub fn score_cutoff(&self, mu: f64) -> Result<f64> {
        if !mu.is_finite() {
            return Err(Error::Domain("mean must be finite".into()));
        }
        let d = |s: f64| {
            (2.0 * self.alpha_mix - 1.0) * self.type_posterior(s, mu)
                - (self.beta_thr - (1.0 - self.alpha_mix) * s)
        };
        let mut lo = mu - 10.0 * self.sigma;
        let mut hi = mu + 10.0 * self.sigma + 1.0;
        let mut expand = 0;
        while !(d(lo) <= 0.0 && d(hi) >= 0.0) {
            let w = hi - lo;
            lo -= w;
            hi += w;
            expand += 1;
            if expand > 60 {
                return Err(Error::Numeric(
                    "hiring cutoff not bracketed; parameters violate the model's preconditions"
                        .into(),
                ));
            }
        }
        for _ in 0..200 {
            if hi - lo <= 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if d(mid) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Fraction of the population hired when the mean is μ: the mass
    /// of S = W + T at or above the cutoff. Pure type ranking (α = 1)
    /// and the even mix (α = 1/2) use their closed-form cutoffs
    /// (μ + k and 2β); other α bisect.
    pub fn update(&self, mu: f64) -> Result<Probability> {
        if !mu.is_finite() {
            return Err(Error::Domain("mean must be finite".into()));
        }
        let s_star = if self.alpha_mix == 1.0 {
            mu + self.threshold_k()
        } else if self.alpha_mix == 0.5 {
            2.0 * self.beta_thr
        } else {
            self.score_cutoff(mu)?
        };
        Ok(Probability::new_unchecked(self.admitted_mass(mu, s_star)))
    }

    /// Slope of the α = 1/2 update in μ; its magnitude stays below 1
    /// whenever σ > 1/sqrt(2π).
    pub fn update_derivative_even_mix(&self, mu: f64) -> f64 {
        let s = 2.0 * self.beta_thr;
        ((1.0 - self.p) * crate::special_functions::pdf((s - mu) / self.sigma)
            + self.p * crate::special_functions::pdf((s - mu - 1.0) / self.sigma))
            / self.sigma
    }

    fn admitted_mass(&self, mu: f64, s_star: f64) -> f64 {
        let tail0 = 1.0 - phi((s_star - mu) / self.sigma);
        let tail1 = 1.0 - phi((s_star - mu - 1.0) / self.sigma);
        ((1.0 - self.p) * tail0 + self.p * tail1).clamp(0.0, 1.0)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli(p) type added to Pareto(x_m, shape) wealth. Only the
/// type-ranked acceptance rule is defined for this model; there is no
/// wealth update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoParams {
    x_m: f64,
    shape: f64,
    p: f64,
    beta_thr: f64,
}

/// Scores the employer accepts under the Pareto model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AcceptanceSet {
    All,
    Interval { lo: f64, hi: f64 },
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoAcceptanceReport {
    /// The decision ratio (p/(1-p) · (1-β)/β)^(1/(shape+1)).
    pub f_value: f64,
    pub set: AcceptanceSet,
}

impl ParetoParams {
    pub fn new(x_m: f64, shape: f64, p: f64, beta_thr: f64) -> Result<Self> {
        for (name, v) in [("x_m", x_m), ("shape", shape)] {
            if !v.is_finite() || !(v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("p", p), ("beta", beta_thr)] {
            if !v.is_finite() || !(v > 0.0 && v < 1.0) {
                return Err(Error::Domain(format!(
                    "{name} must lie strictly inside (0, 1), got {v}"
                )));
            }
        }
        Ok(Self { x_m, shape, p, beta_thr })
    }

    pub fn x_m(&self) -> f64 {
        self.x_m
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn beta_thr(&self) -> f64 {
        self.beta_thr
    }

    /// The acceptance set: every score when the decision ratio reaches
    /// 1, otherwise scores from the distribution floor x_m up to
    /// 1/(1 - ratio) (which may lie below the floor, leaving nothing).
    pub fn acceptance_set(&self) -> ParetoAcceptanceReport {
        let ratio = self.p / (1.0 - self.p) * (1.0 - self.beta_thr) / self.beta_thr;
        let f_value = ratio.powf(1.0 / (self.shape + 1.0));
        let set = if f_value >= 1.0 {
            AcceptanceSet::All
        } else {
            let hi = 1.0 / (1.0 - f_value);
            if self.x_m > hi {
                AcceptanceSet::Empty
            } else {
                AcceptanceSet::Interval { lo: self.x_m, hi }
            }
        };
        ParetoAcceptanceReport { f_value, set }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{iterate, Terminal, DEFAULT_TOL};
    use crate::map::FnMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn bg(p: f64, beta: f64, sigma: f64, alpha: f64) -> BernGaussParams {
        BernGaussParams::new(p, beta, sigma, alpha).unwrap()
    }

    #[test]
    fn threshold_k_symmetric_case() {
        assert_eq!(bg(0.5, 0.5, 1.0, 1.0).threshold_k(), 0.5);
    }

    #[test]
    fn threshold_k_decreasing_in_type_rate() {
        let ks: Vec<f64> = [0.3, 0.5, 0.7]
            .iter()
            .map(|&p| bg(p, 0.4, 1.0, 1.0).threshold_k())
            .collect();
        assert!(ks[0] > ks[1] && ks[1] > ks[2]);
    }

    #[test]
    fn posterior_at_bar_equals_threshold() {
        for (p, beta, sigma) in [(0.5, 0.5, 1.0), (0.3, 0.4, 1.0), (0.7, 0.2, 0.6), (0.2, 0.9, 1.5)]
        {
            let params = bg(p, beta, sigma, 1.0);
            let k = params.threshold_k();
            for mu in [0.0, 0.5, 2.0] {
                // Direct Bayes evaluation from the two Gaussian
                // densities, independent of the log-odds shortcut.
                let dens0 = crate::special_functions::pdf((mu + k - mu) / sigma);
                let dens1 = crate::special_functions::pdf((mu + k - mu - 1.0) / sigma);
                let posterior = p * dens1 / (p * dens1 + (1.0 - p) * dens0);
                assert!(
                    (posterior - beta).abs() <= 1e-10,
                    "p={p}, beta={beta}, sigma={sigma}, mu={mu}: posterior {posterior}"
                );
                assert!((params.type_posterior(mu + k, mu) - beta).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn type_ranked_update_is_mean_free() {
        let params = bg(0.5, 0.5, 1.0, 1.0);
        let v = params.update(0.0).unwrap().value();
        assert!((v - 0.5).abs() <= 1e-15);
        for mu in [-1.0, 0.5, 2.0] {
            assert_eq!(params.update(mu).unwrap().value(), v);
        }
    }

    #[test]
    fn even_mix_update_matches_sampling_oracle() {
        let params = bg(0.3, 0.4, 1.0, 0.5);
        let mu = 2.0 * params.beta_thr() - 0.5;
        let exact = params.update(mu).unwrap().value();

        let n = 1_000_000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cutoff = 2.0 * params.beta_thr();
        let mut hits = 0usize;
        for _ in 0..n {
            let t = if rng.gen::<f64>() < params.p() { 1.0 } else { 0.0 };
            let w: f64 = mu + params.sigma() * rng.sample::<f64, _>(StandardNormal);
            if w + t >= cutoff {
                hits += 1;
            }
        }
        let est = hits as f64 / n as f64;
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!(
            (est - exact).abs() <= 3.0 * se,
            "estimate {est} vs exact {exact} (3se = {})",
            3.0 * se
        );
    }

    #[test]
    fn even_mix_update_increasing_and_interior() {
        let params = bg(0.3, 0.4, 1.0, 0.5);
        let mut prev = params.update(-3.0).unwrap().value();
        for i in 1..=60 {
            let mu = -3.0 + i as f64 * 0.1;
            let v = params.update(mu).unwrap().value();
            assert!(v > prev);
            assert!(v > 0.0 && v < 1.0);
            prev = v;
        }
    }

    #[test]
    fn even_mix_contraction_above_critical_sigma() {
        // Slope bound 1/(sigma*sqrt(2pi)): above the critical sigma the
        // map contracts everywhere.
        let params = bg(0.3, 0.4, 0.6, 0.5);
        let mut max_slope = 0.0_f64;
        for i in 0..=700 {
            let mu = -3.0 + i as f64 * 0.01;
            max_slope = max_slope.max(params.update_derivative_even_mix(mu).abs());
        }
        assert!(max_slope < 1.0, "max slope {max_slope}");
    }

    #[test]
    fn even_mix_unique_fixed_point_from_spread_starts() {
        // Frozen from an independent high-precision solve.
        let params = bg(0.3, 0.4, 1.0, 0.5);
        let map = FnMap(move |mu: f64| params.update(mu).unwrap().value());
        for x0 in [-1.0, 0.0, 0.5, 1.0, 2.0] {
            let t = iterate(&map, x0, 100_000, DEFAULT_TOL).unwrap();
            match t.terminal {
                Terminal::Converged { z } => {
                    assert!((z - 0.491_981_573_984_6).abs() < 1e-8, "from {x0}: {z}")
                }
                other => panic!("expected convergence from {x0}, got {other:?}"),
            }
        }
    }

    #[test]
    fn cutoff_matches_closed_forms() {
        let even = bg(0.3, 0.4, 1.0, 0.5);
        let s = even.score_cutoff(0.7).unwrap();
        assert!((s - 2.0 * 0.4).abs() <= 1e-9, "even-mix cutoff {s}");

        for (p, beta, sigma, mu) in [(0.3, 0.4, 1.0, 0.0), (0.5, 0.5, 1.0, 1.0), (0.7, 0.2, 0.8, -0.5)]
        {
            let pure = bg(p, beta, sigma, 1.0);
            let s = pure.score_cutoff(mu).unwrap();
            let expected = mu + pure.threshold_k();
            assert!(
                (s - expected).abs() <= 1e-9,
                "type-ranked cutoff {s} vs {expected}"
            );
        }
    }

    #[test]
    fn cutoff_separates_hiring_decision() {
        for alpha in [0.25, 0.5, 0.75, 1.0] {
            let params = bg(0.4, 0.6, 1.0, alpha);
            let mu = 0.3;
            let s_star = params.score_cutoff(mu).unwrap();
            let d = |s: f64| {
                (2.0 * alpha - 1.0) * params.type_posterior(s, mu)
                    - (params.beta_thr() - (1.0 - alpha) * s)
            };
            for delta in [0.01, 0.1, 0.5, 1.0, 3.0] {
                assert!(d(s_star + delta) > 0.0, "alpha={alpha}, s*+{delta}");
                assert!(d(s_star - delta) < 0.0, "alpha={alpha}, s*-{delta}");
            }
        }
    }

    #[test]
    fn general_mix_update_consistent_with_corners() {
        // alpha just off the corners should give nearly the corner
        // values (the cutoff varies continuously in alpha).
        let mu = 0.3;
        let a = bg(0.3, 0.4, 1.0, 0.5).update(mu).unwrap().value();
        let b = bg(0.3, 0.4, 1.0, 0.5 + 1e-9).update(mu).unwrap().value();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn bern_gauss_validation() {
        assert!(BernGaussParams::new(0.0, 0.5, 1.0, 1.0).is_err());
        assert!(BernGaussParams::new(0.5, 1.0, 1.0, 1.0).is_err());
        assert!(BernGaussParams::new(0.5, 0.5, 0.0, 1.0).is_err());
        assert!(BernGaussParams::new(0.5, 0.5, 1.0, 1.5).is_err());
        assert!(bg(0.3, 0.4, 1.0, 0.5).update(f64::NAN).is_err());
    }

    #[test]
    fn pareto_symmetric_parameters_accept_all() {
        let params = ParetoParams::new(1.0, 2.0, 0.5, 0.5).unwrap();
        let report = params.acceptance_set();
        assert_eq!(report.f_value, 1.0);
        assert_eq!(report.set, AcceptanceSet::All);
    }

    #[test]
    fn pareto_interval_example() {
        let params = ParetoParams::new(1.0, 1.0, 0.5, 0.8).unwrap();
        let report = params.acceptance_set();
        assert!((report.f_value - 0.5).abs() <= 1e-15);
        match report.set {
            AcceptanceSet::Interval { lo, hi } => {
                assert_eq!(lo, 1.0);
                assert!((hi - 2.0).abs() <= 1e-12);
            }
            other => panic!("expected an interval, got {other:?}"),
        }
    }

    #[test]
    fn pareto_high_threshold_empties_the_set() {
        // beta near 1 pushes the ratio toward 0 and the interval end
        // toward 1; a floor above that leaves nothing acceptable.
        let tight = ParetoParams::new(1.5, 1.0, 0.5, 0.999_999).unwrap();
        let report = tight.acceptance_set();
        assert!(report.f_value < 1e-2);
        assert_eq!(report.set, AcceptanceSet::Empty);
        let loose = ParetoParams::new(0.9, 1.0, 0.5, 0.999_999).unwrap();
        match loose.acceptance_set().set {
            AcceptanceSet::Interval { lo, hi } => {
                assert_eq!(lo, 0.9);
                assert!(hi >= 1.0 && hi < 1.01);
            }
            other => panic!("expected an interval, got {other:?}"),
        }
    }

    #[test]
    fn pareto_validation() {
        assert!(ParetoParams::new(0.0, 1.0, 0.5, 0.5).is_err());
        assert!(ParetoParams::new(1.0, -1.0, 0.5, 0.5).is_err());
        assert!(ParetoParams::new(1.0, 1.0, 1.0, 0.5).is_err());
        assert!(ParetoParams::new(1.0, 1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn sampled_posterior_matches_log_odds_form() {
        let params = bg(0.35, 0.6, 0.9, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s: f64 = rng.gen_range(-3.0..4.0);
            let mu: f64 = rng.gen_range(-1.0..2.0);
            let dens0 = crate::special_functions::pdf((s - mu) / params.sigma());
            let dens1 = crate::special_functions::pdf((s - mu - 1.0) / params.sigma());
            let direct = params.p() * dens1 / (params.p() * dens1 + (1.0 - params.p()) * dens0);
            assert!((params.type_posterior(s, mu) - direct).abs() <= 1e-12);
        }
    }
}
