//! Particle interacting-multiple-model filter.
//!
//! Mode probabilities follow a Markov chain with self-transition `p_ii` and
//! the remaining mass spread uniformly. Mixing is done at the particle level:
//! each mode's input belief is drawn by systematic resampling from the pooled,
//! mixing-weighted particles of all modes.

use crate::error::{Error, Result};
use crate::pf::{pf_step, resample_systematic_n};
use crate::rng::StreamRng;
use crate::ssm::{belief_mean, normalize_log_weights_in_place, Belief, ModelBank, Observation, StateVec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmConfig {
    pub self_transition: f64,
}

impl ImmConfig {
    pub fn new(self_transition: f64) -> Result<Self> {
        if !(self_transition > 0.0 && self_transition <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "self-transition probability must lie in (0, 1], got {self_transition}"
            )));
        }
        Ok(Self { self_transition })
    }

    /// Row-stochastic mode transition matrix for `n` modes.
    pub fn transition_matrix(&self, n: usize) -> Vec<Vec<f64>> {
        if n == 1 {
            return vec![vec![1.0]];
        }
        let off = (1.0 - self.self_transition) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { self.self_transition } else { off })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmState {
    pub mode_probs: Vec<f64>,
    pub beliefs: Vec<Belief>,
}

impl ImmState {
    /// Every mode starts from `initial`, with uniform mode probabilities.
    pub fn uniform(initial: Belief, n_modes: usize) -> Self {
        Self {
            mode_probs: vec![1.0 / n_modes as f64; n_modes],
            beliefs: vec![initial; n_modes],
        }
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let total: f64 = self.mode_probs.iter().sum();
        if self.mode_probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > tol {
            return Err(Error::InvalidInput(format!(
                "mode probabilities {:?} not on the simplex",
                self.mode_probs
            )));
        }
        for b in &self.beliefs {
            b.check_normalized(tol)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ImmStreams {
    pub mix: StreamRng,
    pub modes: Vec<StreamRng>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImmStepOutput {
    pub state: ImmState,
    /// Per-mode log innovation likelihoods (`-inf` for a degenerate mode).
    pub mode_logliks: Vec<f64>,
    /// Per-mode posterior means before resampling.
    pub mode_estimates: Vec<StateVec>,
    /// Log of the mode-mixture innovation likelihood.
    pub loglik: f64,
    /// Probability-weighted fusion of the mode estimates.
    pub estimate: StateVec,
    /// Pre-resampling ESS of each mode's posterior.
    pub mode_ess: Vec<f64>,
}

/// Probability-weighted sum of per-mode vectors, skipping zero-probability modes.
fn fuse(probs: &[f64], vectors: impl IntoIterator<Item = StateVec>, dim: usize) -> StateVec {
    let mut acc = StateVec::zeros(dim);
    let mut first = true;
    for (p, v) in probs.iter().zip(vectors) {
        if *p == 0.0 {
            continue;
        }
        if first && *p == 1.0 {
            acc = v;
        } else {
            for (a, x) in acc.as_mut_slice().iter_mut().zip(v.as_slice()) {
                *a += p * x;
            }
        }
        first = false;
    }
    acc
}

/// Fused estimate `sum_s mu(s) * mean(B_s)`.
pub fn imm_estimate(state: &ImmState) -> StateVec {
    let dim = state.beliefs[0].dim();
    fuse(&state.mode_probs, state.beliefs.iter().map(belief_mean), dim)
}

fn mix_inputs(
    state: &ImmState,
    matrix: &[Vec<f64>],
    predicted: &[f64],
    rng: &mut StreamRng,
) -> Result<Vec<Belief>> {
    let n = state.beliefs.len();
    let mut inputs = Vec::with_capacity(n);
    for target in 0..n {
        if predicted[target] <= 0.0 {
            inputs.push(state.beliefs[target].clone());
            continue;
        }
        let sources: Vec<(usize, f64)> = (0..n)
            .map(|src| (src, matrix[src][target] * state.mode_probs[src] / predicted[target]))
            .filter(|(_, w)| *w > 0.0)
            .collect();
        if let [(only, _)] = sources.as_slice() {
            inputs.push(state.beliefs[*only].clone());
            continue;
        }
        let mut particles = Vec::new();
        let mut log_weights = Vec::new();
        for (src, w) in &sources {
            let b = &state.beliefs[*src];
            particles.extend_from_slice(b.particles());
            log_weights.extend(b.log_weights().iter().map(|lw| lw + w.ln()));
        }
        let pooled = Belief::new(particles, log_weights)?;
        inputs.push(resample_systematic_n(&pooled, state.beliefs[target].len(), rng)?);
    }
    Ok(inputs)
}

/// Predicted mode probabilities `mu_bar(s) = sum_s' P[s' -> s] mu(s')`.
pub fn predicted_mode_probs(mode_probs: &[f64], matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = mode_probs.len();
    (0..n)
        .map(|s| (0..n).map(|src| matrix[src][s] * mode_probs[src]).sum())
        .collect()
}

/// Posterior mode probabilities from predicted ones and per-mode log
/// likelihoods. Returns the probabilities and the log mixture likelihood.
pub fn update_mode_probs(predicted: &[f64], mode_logliks: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut log_post: Vec<f64> = predicted
        .iter()
        .zip(mode_logliks)
        .map(|(p, ll)| if *p > 0.0 { p.ln() + ll } else { f64::NEG_INFINITY })
        .collect();
    let loglik = normalize_log_weights_in_place(&mut log_post)?;
    Ok((log_post.into_iter().map(f64::exp).collect(), loglik))
}

pub fn imm_step(
    state: &ImmState,
    bank: &ModelBank,
    cfg: &ImmConfig,
    t: usize,
    y: &Observation,
    streams: &mut ImmStreams,
) -> Result<ImmStepOutput> {
    let n = bank.len();
    if state.beliefs.len() != n || state.mode_probs.len() != n || streams.modes.len() != n {
        return Err(Error::InvalidInput("IMM state does not match the model bank".into()));
    }
    let matrix = cfg.transition_matrix(n);
    let predicted = predicted_mode_probs(&state.mode_probs, &matrix);
    let inputs = mix_inputs(state, &matrix, &predicted, &mut streams.mix)?;

    let mut beliefs = Vec::with_capacity(n);
    let mut mode_logliks = Vec::with_capacity(n);
    let mut mode_estimates = Vec::with_capacity(n);
    let mut mode_ess = Vec::with_capacity(n);
    for ((s, input), rng) in bank.iter().zip(inputs).zip(streams.modes.iter_mut()) {
        match pf_step(&input, s, t, y, rng) {
            Ok(out) => {
                mode_logliks.push(out.innovation_loglik);
                mode_estimates.push(out.estimate);
                mode_ess.push(out.ess_before_resample);
                beliefs.push(out.posterior);
            }
            Err(Error::DegenerateLikelihood) => {
                mode_logliks.push(f64::NEG_INFINITY);
                mode_estimates.push(belief_mean(&input));
                mode_ess.push(f64::NAN);
                beliefs.push(input);
            }
            Err(e) => return Err(e),
        }
    }
    let (mode_probs, loglik) = update_mode_probs(&predicted, &mode_logliks)?;
    let dim = beliefs[0].dim();
    let estimate = fuse(&mode_probs, mode_estimates.iter().copied(), dim);
    Ok(ImmStepOutput {
        state: ImmState {
            mode_probs,
            beliefs,
        },
        mode_logliks,
        mode_estimates,
        loglik,
        estimate,
        mode_ess,
    })
}
