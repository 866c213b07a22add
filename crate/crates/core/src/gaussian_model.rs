//! The Gaussian admission model.
//!
//! A group's members have latent type T ~ N(0, γ²) and wealth
//! W ~ N(μ, σ²), independent. An institution observes the score
//! S = βT + (1-β)W and admits exactly those whose posterior merit
//! estimate E[αT + (1-α)W | S] clears a threshold τ. Because (T, W, S)
//! is jointly Gaussian, the admitted fraction has the closed form
//!
//!   f(μ) = 1 - Φ(K·(τ - (1-α)μ)),
//!
//! with K = sqrt(Var S) / (αβγ² + (1-α)(1-β)σ²), and the admitted
//! fraction becomes next generation's mean wealth.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::UpdateMap;
use crate::special_functions::{self as sf, Probability};

/// Number of independent RNG substreams a Monte Carlo run is split
/// into. Fixed so results do not depend on the worker count.
const MC_SHARDS: u64 = 64;

/// Validated parameter set (α, β, γ, σ, τ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianParams {
    alpha: f64,
    beta: f64,
    gamma: f64,
    sigma: f64,
    tau: f64,
}

impl GaussianParams {
    /// Rejects parameters for which the admission rule is undefined:
    /// besides range checks, the denominator of K must be positive,
    /// which rules out the corners (α=1, β=0) and (α=0, β=1).
    pub fn new(alpha: f64, beta: f64, gamma: f64, sigma: f64, tau: f64) -> Result<Self> {
        for (name, v) in [
            ("alpha", alpha),
            ("beta", beta),
            ("gamma", gamma),
            ("sigma", sigma),
            ("tau", tau),
        ] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Domain(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Domain(format!("beta must lie in [0, 1], got {beta}")));
        }
        if gamma <= 0.0 {
            return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
        }
        if sigma <= 0.0 {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        let params = GaussianParams { alpha, beta, gamma, sigma, tau };
        if params.k_denominator() <= 0.0 {
            return Err(Error::Degenerate(format!(
                "score weight beta = {beta} carries no information about the \
                 admission objective at alpha = {alpha} (K denominator is zero)"
            )));
        }
        Ok(params)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Same model with a different admission threshold.
    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        GaussianParams::new(self.alpha, self.beta, self.gamma, self.sigma, tau)
    }

    /// Same model with a different score weight.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        GaussianParams::new(self.alpha, beta, self.gamma, self.sigma, self.tau)
    }

    /// Var S = β²γ² + (1-β)²σ².
    pub fn var_s(&self) -> f64 {
        let b = self.beta;
        b * b * self.gamma * self.gamma + (1.0 - b) * (1.0 - b) * self.sigma * self.sigma
    }

    fn k_denominator(&self) -> f64 {
        self.alpha * self.beta * self.gamma * self.gamma
            + (1.0 - self.alpha) * (1.0 - self.beta) * self.sigma * self.sigma
    }

    /// K = sqrt(Var S) / (αβγ² + (1-α)(1-β)σ²), the standardization
    /// constant inside Φ in the update rule.
    pub fn k(&self) -> f64 {
        self.var_s().sqrt() / self.k_denominator()
    }

    /// Posterior means (E[T | S=s], E[W | S=s]) at group mean wealth μ.
    pub fn posterior_means(&self, mu: WealthMean, s: f64) -> Result<(f64, f64)> {
        if !s.is_finite() {
            return Err(Error::Domain(format!("score must be finite, got {s}")));
        }
        let mu = mu.value();
        let var_s = self.var_s();
        let centered = s - (1.0 - self.beta) * mu;
        let e_type = self.beta * self.gamma * self.gamma * centered / var_s;
        let e_wealth = mu + (1.0 - self.beta) * self.sigma * self.sigma * centered / var_s;
        Ok((e_type, e_wealth))
    }

    /// The score cutoff s*: candidates are admitted iff S ≥ s*.
    /// Solving E[αT + (1-α)W | S = s*] = τ gives
    /// s* = (1-β)μ + sqrt(Var S)·K·(τ - (1-α)μ).
    pub fn admission_score_threshold(&self, mu: WealthMean) -> f64 {
        let mu = mu.value();
        (1.0 - self.beta) * mu
            + self.var_s().sqrt() * self.k() * (self.tau - (1.0 - self.alpha) * mu)
    }

    /// The update rule f(x) = 1 - Φ(K(τ - (1-α)x)).
    pub fn update_f(&self, x: f64) -> Result<Probability> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("wealth must be finite, got {x}")));
        }
        Ok(Probability::new_unchecked(self.update_raw(x)))
    }

    fn update_raw(&self, x: f64) -> f64 {
        1.0 - sf::phi(self.k() * (self.tau - (1.0 - self.alpha) * x))
    }

    /// First and second derivative of the update rule:
    ///   f'(x)  = K(1-α)·φ(u),
    ///   f''(x) = K³(1-α)²(τ - (1-α)x)·φ(u),  u = K(τ - (1-α)x).
    /// f'' changes sign at the inflection point x* = τ/(1-α).
    pub fn update_f_deriv(&self, x: f64) -> Result<(f64, f64)> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("wealth must be finite, got {x}")));
        }
        let k = self.k();
        let oma = 1.0 - self.alpha;
        let u = k * (self.tau - oma * x);
        let dens = sf::pdf(u);
        let first = k * oma * dens;
        let second = k * k * k * oma * oma * (self.tau - oma * x) * dens;
        Ok((first, second))
    }

    /// Inflection point x* = τ/(1-α) clamped to [0, 1]; f is convex
    /// below it and concave above. For α = 1 the map is constant and
    /// the convention here is to return 1.
    pub fn inflection_point(&self) -> f64 {
        let oma = 1.0 - self.alpha;
        if oma == 0.0 {
            return 1.0;
        }
        if self.tau <= 0.0 {
            0.0
        } else if self.tau >= oma {
            1.0
        } else {
            self.tau / oma
        }
    }

    /// Population oracle for the update rule: samples n individuals
    /// (T, W), scores them, applies the S ≥ s* rule, and returns the
    /// admitted fraction with its binomial standard error
    /// sqrt(f(1-f)/n). Deterministic for a given seed: the draw is
    /// split into a fixed number of counter-seeded substreams and
    /// reduced in fixed order, independent of worker count.
    pub fn monte_carlo_admit_fraction(
        &self,
        mu: WealthMean,
        n: usize,
        seed: u64,
    ) -> Result<(Probability, f64)> {
        if n == 0 {
            return Err(Error::Domain("sample count must be positive".into()));
        }
        let s_star = self.admission_score_threshold(mu);
        let mu = mu.value();
        let admitted: u64 = shard_sizes(n)
            .into_par_iter()
            .enumerate()
            .map(|(shard, count)| {
                let mut rng = shard_rng(seed, shard as u64);
                let mut hits = 0u64;
                for _ in 0..count {
                    let t: f64 = self.gamma * rng.sample::<f64, _>(StandardNormal);
                    let w: f64 = mu + self.sigma * rng.sample::<f64, _>(StandardNormal);
                    let s = self.beta * t + (1.0 - self.beta) * w;
                    if s >= s_star {
                        hits += 1;
                    }
                }
                hits
            })
            .sum();
        let fraction = admitted as f64 / n as f64;
        let std_error = (fraction * (1.0 - fraction) / n as f64).sqrt();
        Ok((Probability::new_unchecked(fraction), std_error))
    }

    /// Sampling oracle for the posterior means: draws n individuals and
    /// averages T and W over those whose score lands within `window` of
    /// s. Returns (mean T, mean W, kept count).
    pub fn monte_carlo_posterior_means(
        &self,
        mu: WealthMean,
        s: f64,
        window: f64,
        n: usize,
        seed: u64,
    ) -> Result<(f64, f64, usize)> {
        if n == 0 {
            return Err(Error::Domain("sample count must be positive".into()));
        }
        if !(window > 0.0) || !window.is_finite() {
            return Err(Error::Domain(format!("window must be positive, got {window}")));
        }
        if !s.is_finite() {
            return Err(Error::Domain(format!("score must be finite, got {s}")));
        }
        let mu = mu.value();
        let partials: Vec<(f64, f64, u64)> = shard_sizes(n)
            .into_par_iter()
            .enumerate()
            .map(|(shard, count)| {
                let mut rng = shard_rng(seed, shard as u64);
                let (mut sum_t, mut sum_w, mut kept) = (0.0, 0.0, 0u64);
                for _ in 0..count {
                    let t: f64 = self.gamma * rng.sample::<f64, _>(StandardNormal);
                    let w: f64 = mu + self.sigma * rng.sample::<f64, _>(StandardNormal);
                    let score = self.beta * t + (1.0 - self.beta) * w;
                    if (score - s).abs() <= window {
                        sum_t += t;
                        sum_w += w;
                        kept += 1;
                    }
                }
                (sum_t, sum_w, kept)
            })
            .collect();
        let (mut sum_t, mut sum_w, mut kept) = (0.0, 0.0, 0u64);
        for (t, w, c) in partials {
            sum_t += t;
            sum_w += w;
            kept += c;
        }
        if kept == 0 {
            return Err(Error::Numeric(format!(
                "no samples landed within {window} of score {s}"
            )));
        }
        Ok((sum_t / kept as f64, sum_w / kept as f64, kept as usize))
    }
}

impl UpdateMap for GaussianParams {
    fn eval(&self, x: f64) -> f64 {
        self.update_raw(x)
    }

    fn derivative(&self, x: f64) -> Option<f64> {
        let k = self.k();
        let u = k * (self.tau - (1.0 - self.alpha) * x);
        Some(k * (1.0 - self.alpha) * sf::pdf(u))
    }
}

/// A group's mean wealth.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct WealthMean(f64);

impl WealthMean {
    pub fn new(mu: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Domain(format!("mean wealth must be finite, got {mu}")));
        }
        Ok(WealthMean(mu))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn shard_sizes(n: usize) -> Vec<usize> {
    let shards = MC_SHARDS as usize;
    let base = n / shards;
    let extra = n % shards;
    (0..shards).map(|i| base + usize::from(i < extra)).collect()
}

fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_crossing() -> GaussianParams {
        GaussianParams::new(0.1, 0.6, 0.4, 1.1, 0.2).unwrap()
    }

    fn triple_crossing() -> GaussianParams {
        GaussianParams::new(0.1, 0.95, 1.4, 1.1, 0.5).unwrap()
    }

    #[test]
    fn rejects_degenerate_corners() {
        assert!(matches!(
            GaussianParams::new(1.0, 0.0, 0.5, 1.0, 0.2),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            GaussianParams::new(0.0, 1.0, 0.5, 1.0, 0.2),
            Err(Error::Degenerate(_))
        ));
        // Nearby corners are fine.
        assert!(GaussianParams::new(1.0, 0.01, 0.5, 1.0, 0.2).is_ok());
        assert!(GaussianParams::new(0.0, 0.99, 0.5, 1.0, 0.2).is_ok());
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GaussianParams::new(-0.1, 0.5, 1.0, 1.0, 0.0).is_err());
        assert!(GaussianParams::new(0.5, 1.5, 1.0, 1.0, 0.0).is_err());
        assert!(GaussianParams::new(0.5, 0.5, 0.0, 1.0, 0.0).is_err());
        assert!(GaussianParams::new(0.5, 0.5, 1.0, -1.0, 0.0).is_err());
        assert!(GaussianParams::new(0.5, 0.5, 1.0, 1.0, f64::NAN).is_err());
        assert!(WealthMean::new(f64::INFINITY).is_err());
    }

    #[test]
    fn k_reference_values() {
        // Frozen from independent evaluation of the closed form.
        assert!((single_crossing().k() - 1.125_782_936_760_257_6).abs() < 1e-12);
        assert!((triple_crossing().k() - 5.531_422_116_229_298).abs() < 1e-12);
    }

    #[test]
    fn posterior_means_at_baseline_score() {
        // At s = (1-β)μ the centered score is zero: E[T|S] = 0 and
        // E[W|S] = μ.
        let p = single_crossing();
        let mu = WealthMean::new(0.7).unwrap();
        let s = (1.0 - p.beta()) * 0.7;
        let (t, w) = p.posterior_means(mu, s).unwrap();
        assert!(t.abs() < 1e-15);
        assert!((w - 0.7).abs() < 1e-15);
    }

    #[test]
    fn posterior_means_linear_in_score() {
        let p = triple_crossing();
        let mu = WealthMean::new(0.3).unwrap();
        let (t0, w0) = p.posterior_means(mu, 0.1).unwrap();
        let (t1, w1) = p.posterior_means(mu, 0.5).unwrap();
        let (t2, w2) = p.posterior_means(mu, 0.9).unwrap();
        assert!((t2 - t1 - (t1 - t0)).abs() < 1e-12);
        assert!((w2 - w1 - (w1 - w0)).abs() < 1e-12);
    }

    #[test]
    fn posterior_means_match_sampling_oracle() {
        let p = single_crossing();
        let mu = WealthMean::new(0.4).unwrap();
        let s = 0.55;
        let (t, w) = p.posterior_means(mu, s).unwrap();
        let (mt, mw, kept) = p
            .monte_carlo_posterior_means(mu, s, 0.01, 10_000_000, 7)
            .unwrap();
        assert!(kept > 10_000, "window kept only {kept} samples");
        // Conditional std devs are O(γ), O(σ); kept ~ 1e5 gives ~3e-3
        // standard error on the means.
        assert!((t - mt).abs() < 0.02, "E[T|S]: closed {t}, sampled {mt}");
        assert!((w - mw).abs() < 0.02, "E[W|S]: closed {w}, sampled {mw}");
    }

    #[test]
    fn score_threshold_consistent_with_posterior_rule() {
        // At s = s* the posterior merit estimate equals τ.
        for (params, mu) in [(single_crossing(), 0.3), (triple_crossing(), 0.8)] {
            let mu = WealthMean::new(mu).unwrap();
            let s_star = params.admission_score_threshold(mu);
            let (t, w) = params.posterior_means(mu, s_star).unwrap();
            let merit = params.alpha() * t + (1.0 - params.alpha()) * w;
            assert!((merit - params.tau()).abs() < 1e-12);
        }
    }

    #[test]
    fn update_matches_tail_probability() {
        // f(x) must equal P[S ≥ s*] with S ~ N((1-β)x, Var S).
        let p = triple_crossing();
        for &x in &[0.05, 0.3, 0.6134954930184824, 0.9] {
            let s_star = p.admission_score_threshold(WealthMean::new(x).unwrap());
            let z = (s_star - (1.0 - p.beta()) * x) / p.var_s().sqrt();
            let direct = 1.0 - crate::special_functions::phi(z);
            let f = p.update_f(x).unwrap().value();
            assert!((f - direct).abs() < 1e-12, "x = {x}: {f} vs {direct}");
        }
    }

    #[test]
    fn update_at_inflection_is_half() {
        let p = single_crossing();
        let x_star = p.tau() / (1.0 - p.alpha());
        assert!((p.update_f(x_star).unwrap().value() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn update_strictly_inside_unit_interval() {
        for params in [single_crossing(), triple_crossing()] {
            let mut x = 0.0;
            while x <= 1.0 {
                let f = params.update_f(x).unwrap().value();
                assert!(f > 0.0 && f < 1.0, "f({x}) = {f}");
                x += 0.01;
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for params in [single_crossing(), triple_crossing()] {
            for &x in &[0.1, 0.35, 0.62, 0.9] {
                let (d1, d2) = params.update_f_deriv(x).unwrap();
                let fp = params.update_f(x + h).unwrap().value();
                let fm = params.update_f(x - h).unwrap().value();
                let f0 = params.update_f(x).unwrap().value();
                let fd1 = (fp - fm) / (2.0 * h);
                let fd2 = (fp - 2.0 * f0 + fm) / (h * h);
                assert!((d1 - fd1).abs() <= 1e-6 * d1.abs().max(1.0));
                assert!((d2 - fd2).abs() <= 1e-3 * d2.abs().max(1.0));
            }
        }
    }

    #[test]
    fn second_derivative_changes_sign_at_inflection() {
        let p = single_crossing();
        let x_star = p.inflection_point();
        assert!((x_star - 0.2 / 0.9).abs() < 1e-15);
        let (_, before) = p.update_f_deriv(x_star - 0.05).unwrap();
        let (_, after) = p.update_f_deriv(x_star + 0.05).unwrap();
        assert!(before > 0.0 && after < 0.0);
    }

    #[test]
    fn inflection_clamping() {
        let low = GaussianParams::new(0.1, 0.6, 0.4, 1.1, -0.3).unwrap();
        assert_eq!(low.inflection_point(), 0.0);
        let high = GaussianParams::new(0.1, 0.6, 0.4, 1.1, 0.95).unwrap();
        assert_eq!(high.inflection_point(), 1.0);
        let constant = GaussianParams::new(1.0, 0.5, 0.4, 1.1, 0.2).unwrap();
        assert_eq!(constant.inflection_point(), 1.0);
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let p = single_crossing();
        let mu = WealthMean::new(0.2).unwrap();
        let f = p.update_f(0.2).unwrap().value();
        let (frac, se) = p.monte_carlo_admit_fraction(mu, 1_000_000, 42).unwrap();
        assert!(
            (frac.value() - f).abs() <= 3.0 * se,
            "closed form {f}, sampled {} (se {se})",
            frac.value()
        );
    }

    #[test]
    fn monte_carlo_extreme_threshold_admits_nobody() {
        let p = GaussianParams::new(1.0, 0.5, 0.5, 1.0, 10.0).unwrap();
        let (frac, _) = p
            .monte_carlo_admit_fraction(WealthMean::new(0.5).unwrap(), 100_000, 3)
            .unwrap();
        assert!(frac.value() < 1e-4);
    }

    #[test]
    fn monte_carlo_at_inflection_is_half() {
        let p = single_crossing();
        let x_star = p.tau() / (1.0 - p.alpha());
        let (frac, se) = p
            .monte_carlo_admit_fraction(WealthMean::new(x_star).unwrap(), 1_000_000, 11)
            .unwrap();
        assert!((frac.value() - 0.5).abs() <= 3.0 * se);
    }

    #[test]
    fn monte_carlo_deterministic_for_seed() {
        let p = triple_crossing();
        let mu = WealthMean::new(0.37).unwrap();
        let a = p.monte_carlo_admit_fraction(mu, 100_003, 9).unwrap();
        let b = p.monte_carlo_admit_fraction(mu, 100_003, 9).unwrap();
        assert_eq!(a.0.value(), b.0.value());
        let c = p.monte_carlo_admit_fraction(mu, 100_003, 10).unwrap();
        assert_ne!(a.0.value(), c.0.value());
    }

    #[test]
    fn monte_carlo_rejects_empty_draw() {
        let p = single_crossing();
        assert!(p
            .monte_carlo_admit_fraction(WealthMean::new(0.2).unwrap(), 0, 1)
            .is_err());
    }
}
