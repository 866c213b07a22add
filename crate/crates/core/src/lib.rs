//! Numerical laboratory for a one-group wealth-dynamics model.
//!
//! A population's mean wealth evolves through an admission rule: each
//! generation, an institution observes a noisy score blending latent
//! type and wealth, admits everyone whose posterior merit estimate
//! clears a threshold, and the admitted fraction becomes the next
//! generation's mean wealth. This crate implements that update map and
//! everything the analysis needs around it: fixed-point structure,
//! basins of attraction, trajectory simulation, intervention planning
//! (threshold changes, signal-weight changes, direct subsidies with a
//! DP planner), a binary-state variant, and a Bernoulli-type /
//! Gaussian-wealth variant.

pub mod alt_models;
pub mod discrete_model;
pub mod dynamics;
pub mod emit;
pub mod fixed_points;
pub mod gaussian_model;
pub mod interventions;
pub mod map;
pub mod special_functions;

mod error;
pub use error::{Error, Result};
