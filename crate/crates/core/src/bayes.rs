//! Mean-field Gaussian posterior over network parameters, priors, and the
//! reparameterized Monte Carlo pieces of the variational free energy.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::Scalar;
use crate::net::Layout;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("prior scale must be positive, got {0}")]
    Scale(f64),
}

/// Inverse of softplus: the `rho` giving scale `sigma`.
pub fn rho_for_sigma(sigma: f64) -> f64 {
    assert!(sigma > 0.0);
    // ln(e^σ − 1) written to stay accurate for small σ
    sigma + (-(-sigma).exp_m1()).ln()
}

/// q(θ) = Πᵢ N(θᵢ; μᵢ, softplus(ρᵢ)²).
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalPosterior {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl VariationalPosterior {
    pub fn new(mu: Vec<f64>, rho: Vec<f64>) -> Result<Self, BayesError> {
        if mu.len() != rho.len() {
            return Err(BayesError::Length {
                what: "rho",
                expected: mu.len(),
                got: rho.len(),
            });
        }
        Ok(Self { mu, rho })
    }

    /// Glorot means with every scale set to `sigma0`.
    pub fn init<R: Rng + ?Sized>(layout: &Layout, sigma0: f64, rng: &mut R) -> Self {
        let mu = layout.glorot(rng);
        let rho = vec![rho_for_sigma(sigma0); mu.len()];
        Self { mu, rho }
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| r.softplus()).collect()
    }

    /// `[mu ; rho]`, the vector the optimizer works on.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.mu.clone();
        v.extend_from_slice(&self.rho);
        v
    }

    pub fn from_flat(flat: &[f64]) -> Self {
        let n = flat.len() / 2;
        Self {
            mu: flat[..n].to_vec(),
            rho: flat[n..].to_vec(),
        }
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        standard_normal_vec(self.len(), rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let noise = self.draw_noise(rng);
        sample_params(&self.mu, &self.rho, &noise).expect("noise sized to posterior")
    }
}

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    GaussianIsotropic,
    Laplace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    /// Standard deviation for the Gaussian prior, rate λ for the Laplace prior.
    pub scale: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            kind: PriorKind::Laplace,
            scale: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<(), BayesError> {
        if self.scale > 0.0 && self.scale.is_finite() {
            Ok(())
        } else {
            Err(BayesError::Scale(self.scale))
        }
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), BayesError> {
    if expected == got {
        Ok(())
    } else {
        Err(BayesError::Length { what, expected, got })
    }
}

/// θ = μ + softplus(ρ) ⊙ ε.
pub fn sample_params<S: Scalar>(mu: &[S], rho: &[S], noise: &[f64]) -> Result<Vec<S>, BayesError> {
    check_len("rho", mu.len(), rho.len())?;
    check_len("noise", mu.len(), noise.len())?;
    Ok(mu
        .iter()
        .zip(rho)
        .zip(noise)
        .map(|((&m, &r), &e)| m + r.softplus() * e)
        .collect())
}

/// Σᵢ log N(θᵢ; μᵢ, softplus(ρᵢ)²).
pub fn log_q<S: Scalar>(theta: &[S], mu: &[S], rho: &[S]) -> Result<S, BayesError> {
    check_len("mu", theta.len(), mu.len())?;
    check_len("rho", theta.len(), rho.len())?;
    let terms: Vec<S> = theta
        .iter()
        .zip(mu)
        .zip(rho)
        .map(|((&th, &m), &r)| {
            let sigma = r.softplus();
            let z = (th - m) / sigma;
            -(sigma.ln() + z.square() * 0.5) - HALF_LN_2PI
        })
        .collect();
    Ok(S::sum(&terms))
}

/// Gaussian: Σ log N(θᵢ; 0, s²). Laplace: Σ [ln(λ/2) − λ|θᵢ|].
pub fn log_prior<S: Scalar>(theta: &[S], prior: &PriorSpec) -> S {
    let s = prior.scale;
    let terms: Vec<S> = match prior.kind {
        PriorKind::GaussianIsotropic => {
            let c = -s.ln() - HALF_LN_2PI;
            theta.iter().map(|&t| -((t / s).square() * 0.5) + c).collect()
        }
        PriorKind::Laplace => {
            let c = (0.5 * s).ln();
            theta.iter().map(|&t| -(t.abs() * s) + c).collect()
        }
    };
    S::sum(&terms)
}

/// One reparameterized sample bundled with both log densities.
#[derive(Clone, Debug)]
pub struct KlTerms<S> {
    pub log_q: S,
    pub log_prior: S,
    pub theta: Vec<S>,
}

impl<S: Scalar> KlTerms<S> {
    /// Single-sample estimate of KL(q‖p).
    pub fn complexity(&self) -> S {
        self.log_q - self.log_prior
    }
}

pub fn mc_kl_terms<S: Scalar>(mu: &[S], rho: &[S], prior: &PriorSpec, noise: &[f64]) -> Result<KlTerms<S>, BayesError> {
    let theta = sample_params(mu, rho, noise)?;
    Ok(KlTerms {
        log_q: log_q(&theta, mu, rho)?,
        log_prior: log_prior(&theta, prior),
        theta,
    })
}
