//! Bootstrap particle filter conditioned on a single latent structure.
//!
//! One filter step is prediction through the structure's transition,
//! reweighting by its observation density, and systematic resampling. The
//! innovation log-likelihood is read off the weight normalizer before
//! resampling.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::ssm::{
    belief_mean, ess_of_log_weights, normalize_log_weights_in_place, Belief, Observation,
    StateVec, Structure,
};

/// Particles pushed through a transition, still carrying their source weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedParticles {
    pub particles: Vec<StateVec>,
    pub source_log_weights: Vec<f64>,
}

impl PredictedParticles {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Resampled posterior (uniform weights).
    pub posterior: Belief,
    /// Log of the innovation likelihood estimate.
    pub innovation_loglik: f64,
    pub ess_before_resample: f64,
    /// Posterior mean, taken from the weighted particles before resampling.
    pub estimate: StateVec,
}

pub fn predict(
    b: &Belief,
    s: &Structure,
    t: usize,
    rng: &mut StreamRng,
) -> Result<PredictedParticles> {
    let mut particles = Vec::with_capacity(b.len());
    for (i, z) in b.particles().iter().enumerate() {
        let next = s.transition.sample(z, t, rng);
        if !next.is_finite() {
            return Err(Error::NumericOverflow { particle: i });
        }
        particles.push(next);
    }
    Ok(PredictedParticles {
        particles,
        source_log_weights: b.log_weights().to_vec(),
    })
}

/// Unnormalized posterior log-weights: source log-weight plus observation log-density.
fn joint_log_weights(pred: &PredictedParticles, s: &Structure, y: &Observation) -> Vec<f64> {
    pred.particles
        .iter()
        .zip(&pred.source_log_weights)
        .map(|(z, lw)| lw + s.observation.log_density(y, z))
        .collect()
}

/// Monte-Carlo estimate of the log innovation likelihood of `y`.
pub fn innovation_likelihood(
    pred: &PredictedParticles,
    s: &Structure,
    y: &Observation,
) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::InvalidInput("no predicted particles".into()));
    }
    let mut lw = joint_log_weights(pred, s, y);
    normalize_log_weights_in_place(&mut lw)
}

/// Bayes correction of the predicted particles by the observation `y`.
pub fn bayes_update(pred: &PredictedParticles, s: &Structure, y: &Observation) -> Result<Belief> {
    if pred.is_empty() {
        return Err(Error::InvalidInput("no predicted particles".into()));
    }
    let lw = joint_log_weights(pred, s, y);
    Belief::new(pred.particles.clone(), lw)
}

/// Indices chosen by systematic resampling of `n_out` draws.
///
/// `offset` is the position of the first grid point within its cell, as a
/// fraction in `[0, 1)`; grid point `j` sits at `(j + offset) / n_out`.
pub fn systematic_indices(log_weights: &[f64], n_out: usize, offset: f64) -> Vec<usize> {
    debug_assert!((0.0..1.0).contains(&offset));
    let n_in = log_weights.len();
    let scale = n_out as f64;
    let mut out = Vec::with_capacity(n_out);
    let mut i = 0;
    let mut cum = log_weights[0].exp() * scale;
    for j in 0..n_out {
        let u = j as f64 + offset;
        while cum <= u && i + 1 < n_in {
            i += 1;
            cum += log_weights[i].exp() * scale;
        }
        out.push(i);
    }
    out
}

fn gather(particles: &[StateVec], indices: &[usize]) -> Result<Belief> {
    Belief::uniform(indices.iter().map(|&i| particles[i]).collect())
}

/// Systematic resampling with an explicit first grid point `u0 ∈ [0, 1/N)`.
pub fn resample_systematic_with_offset(b: &Belief, u0: f64) -> Result<Belief> {
    let n = b.len();
    let offset = (u0 * n as f64).clamp(0.0, 1.0 - f64::EPSILON);
    let idx = systematic_indices(b.log_weights(), n, offset);
    gather(b.particles(), &idx)
}

/// Systematic resampling to the same particle count, one uniform draw from `rng`.
pub fn resample_systematic(b: &Belief, rng: &mut StreamRng) -> Result<Belief> {
    resample_systematic_n(b, b.len(), rng)
}

/// Systematic resampling to `n_out` particles.
pub fn resample_systematic_n(b: &Belief, n_out: usize, rng: &mut StreamRng) -> Result<Belief> {
    if n_out == 0 {
        return Err(Error::InvalidInput("cannot resample to zero particles".into()));
    }
    let offset: f64 = rng.random();
    let idx = systematic_indices(b.log_weights(), n_out, offset);
    gather(b.particles(), &idx)
}

/// One full filter step `B_{t+1} = F_s(B_t, t, y_{t+1})`.
pub fn pf_step(
    b: &Belief,
    s: &Structure,
    t: usize,
    y: &Observation,
    rng: &mut StreamRng,
) -> Result<StepOutput> {
    let pred = predict(b, s, t, rng)?;
    let mut lw = joint_log_weights(&pred, s, y);
    // Source weights are normalized, so the normalizer is the innovation likelihood.
    let innovation_loglik = normalize_log_weights_in_place(&mut lw)?;
    let weighted = Belief::new(pred.particles, lw)?;
    let ess_before_resample = ess_of_log_weights(weighted.log_weights());
    let estimate = belief_mean(&weighted);
    let posterior = resample_systematic(&weighted, rng)?;
    Ok(StepOutput {
        posterior,
        innovation_loglik,
        ess_before_resample,
        estimate,
    })
}
