//! Bayesian physics-informed networks for vertical heat diffusion in
//! transformer oil, with a finite-difference reference solver, hot-spot and
//! ageing post-processing, and probabilistic scoring.

pub mod bayes;
pub mod data;
pub mod diffcore;
pub mod metrics;
pub mod model;
pub mod net;
pub mod physics;
pub mod refsolver;
pub mod thermal;
pub mod train;
pub mod uq;
