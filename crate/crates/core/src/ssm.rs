//! Core state-space types: state vectors, weighted particle beliefs, Gaussian
//! densities and the bank of candidate latent structures.

use std::fmt;
use std::ops::Index;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Largest latent dimension supported by [`StateVec`].
pub const MAX_DIM: usize = 2;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A small fixed-capacity real vector used for latent states and observations.
#[derive(Clone, Copy, PartialEq)]
pub struct StateVec {
    coords: [f64; MAX_DIM],
    dim: u8,
}

impl StateVec {
    pub fn scalar(x: f64) -> Self {
        Self {
            coords: [x, 0.0],
            dim: 1,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self {
            coords: [0.0; MAX_DIM],
            dim: dim as u8,
        }
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(Error::InvalidInput(format!(
                "state dimension {} outside 1..={MAX_DIM}",
                coords.len()
            )));
        }
        let mut v = Self::zeros(coords.len());
        v.coords[..coords.len()].copy_from_slice(coords);
        Ok(v)
    }

    /// Builds a vector of dimension `dim` whose `i`-th entry is `f(i)`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize) -> f64) -> Self {
        let mut v = Self::zeros(dim);
        for i in 0..dim {
            v.coords[i] = f(i);
        }
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dim()]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        let d = self.dim();
        &mut self.coords[..d]
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_fn(self.dim(), |i| f(self.coords[i]))
    }

    pub fn squared_distance(&self, other: &StateVec) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl Index<usize> for StateVec {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl fmt::Debug for StateVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

/// Observations share the small-vector representation of states.
pub type Observation = StateVec;

/// Mean and variance of a scalar Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    mean: f64,
    variance: f64,
}

impl GaussianParams {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) || !mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gaussian requires finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        gaussian_log_pdf_unchecked(x, self.mean, self.variance)
    }
}

/// Log-density of `N(mean, variance)` at `x`.
pub fn gaussian_logpdf(x: f64, mean: f64, variance: f64) -> Result<f64> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "variance must be positive and finite, got {variance}"
        )));
    }
    if !x.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "non-finite gaussian argument x={x}, mean={mean}"
        )));
    }
    Ok(gaussian_log_pdf_unchecked(x, mean, variance))
}

#[inline]
pub(crate) fn gaussian_log_pdf_unchecked(x: f64, mean: f64, variance: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + variance.ln()) - r * r / (2.0 * variance)
}

/// Log of a product of independent Gaussians sharing one variance.
#[inline]
pub(crate) fn isotropic_gaussian_log_pdf(x: &[f64], mean: &[f64], variance: f64) -> f64 {
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * x.len() as f64 * (LN_2PI + variance.ln()) - sq / (2.0 * variance)
}

/// Max-shifted log-sum-exp. Returns `-inf` when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights in place and returns the log normalizer.
pub fn normalize_log_weights_in_place(log_weights: &mut [f64]) -> Result<f64> {
    if log_weights.is_empty() {
        return Err(Error::InvalidInput("empty weight vector".into()));
    }
    if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
        return Err(Error::InvalidInput("weights contain NaN or +inf".into()));
    }
    let lse = log_sum_exp(log_weights);
    if lse == f64::NEG_INFINITY {
        return Err(Error::DegenerateLikelihood);
    }
    for w in log_weights.iter_mut() {
        *w -= lse;
    }
    Ok(lse)
}

/// Returns the normalized log-weights and the log normalizer of `log_weights`.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    let mut out = log_weights.to_vec();
    let lse = normalize_log_weights_in_place(&mut out)?;
    Ok((out, lse))
}

/// A weighted particle approximation of a distribution over latent states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    particles: Vec<StateVec>,
    log_weights: Vec<f64>,
}

impl Belief {
    /// Tolerance used when checking that weights sum to one.
    pub const NORMALIZATION_TOL: f64 = 1e-9;

    /// Equal-weight belief over `particles`.
    pub fn uniform(particles: Vec<StateVec>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidInput("belief needs at least one particle".into()));
        }
        let lw = -(particles.len() as f64).ln();
        let log_weights = vec![lw; particles.len()];
        Self::from_parts(particles, log_weights)
    }

    /// Belief from particles and (possibly unnormalized) log-weights; the
    /// weights are normalized on construction.
    pub fn new(particles: Vec<StateVec>, mut log_weights: Vec<f64>) -> Result<Self> {
        if particles.len() != log_weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} particles but {} weights",
                particles.len(),
                log_weights.len()
            )));
        }
        normalize_log_weights_in_place(&mut log_weights)?;
        Self::from_parts(particles, log_weights)
    }

    fn from_parts(particles: Vec<StateVec>, log_weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidInput("belief needs at least one particle".into()));
        }
        let dim = particles[0].dim();
        if let Some(i) = particles.iter().position(|p| p.dim() != dim || !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "particle {i} is non-finite or has inconsistent dimension"
            )));
        }
        Ok(Self {
            particles,
            log_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].dim()
    }

    pub fn particles(&self) -> &[StateVec] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_weights.iter().map(|w| w.exp())
    }

    pub fn into_parts(self) -> (Vec<StateVec>, Vec<f64>) {
        (self.particles, self.log_weights)
    }

    /// Verifies the belief invariants: finite normalized weights and finite particles.
    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        if self.log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::Unnormalized(f64::NAN));
        }
        let total: f64 = self.weights().sum();
        if (total - 1.0).abs() > tol {
            return Err(Error::Unnormalized(total.ln()));
        }
        if self.particles.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite particle".into()));
        }
        Ok(())
    }
}

/// Weighted mean of the particles.
pub fn belief_mean(b: &Belief) -> StateVec {
    let mut acc = StateVec::zeros(b.dim());
    for (p, w) in b.particles.iter().zip(b.weights()) {
        for (a, x) in acc.as_mut_slice().iter_mut().zip(p.as_slice()) {
            *a += w * x;
        }
    }
    acc
}

/// `1 / sum w_i^2` of a normalized belief.
pub fn effective_sample_size(b: &Belief) -> f64 {
    ess_of_log_weights(&b.log_weights)
}

pub(crate) fn ess_of_log_weights(log_weights: &[f64]) -> f64 {
    let sq: f64 = log_weights.iter().map(|w| (2.0 * w).exp()).sum();
    1.0 / sq
}

// ---------------------------------------------------------------------------
// Structures
// ---------------------------------------------------------------------------

/// Index of a structure within its [`ModelBank`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct StructureId(pub usize);

impl StructureId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StructureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Stochastic latent transition `z_t -> z_{t+1}` of one structure.
///
/// `t` is the time index of the source state; autonomous systems with
/// time-varying forcing read it in place of an exogenous input.
pub trait TransitionModel: Send + Sync + fmt::Debug {
    fn sample(&self, z: &StateVec, t: usize, rng: &mut StreamRng) -> StateVec;
}

/// Conditional observation density of one structure.
pub trait ObservationModel: Send + Sync + fmt::Debug {
    fn log_density(&self, y: &Observation, z: &StateVec) -> f64;
    fn sample(&self, z: &StateVec, rng: &mut StreamRng) -> Observation;
}

/// A candidate latent structure: a transition paired with an observation model.
#[derive(Debug, Clone)]
pub struct Structure {
    pub id: StructureId,
    pub label: String,
    pub transition: Arc<dyn TransitionModel>,
    pub observation: Arc<dyn ObservationModel>,
}

/// The finite, ordered set of candidate structures.
#[derive(Debug, Clone)]
pub struct ModelBank {
    structures: Vec<Structure>,
}

impl ModelBank {
    /// Builds a bank, assigning ids `0..n` in the given order.
    pub fn new(
        entries: impl IntoIterator<
            Item = (String, Arc<dyn TransitionModel>, Arc<dyn ObservationModel>),
        >,
    ) -> Result<Self> {
        let structures: Vec<Structure> = entries
            .into_iter()
            .enumerate()
            .map(|(i, (label, transition, observation))| Structure {
                id: StructureId(i),
                label,
                transition,
                observation,
            })
            .collect();
        if structures.is_empty() {
            return Err(Error::InvalidInput("model bank must not be empty".into()));
        }
        Ok(Self { structures })
    }

    pub fn len(&self) -> usize {
        self.structures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structures.is_empty()
    }

    pub fn get(&self, id: StructureId) -> Result<&Structure> {
        self.structures
            .get(id.0)
            .ok_or_else(|| Error::InvalidInput(format!("structure {id} not in bank")))
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Structure> {
        self.structures.iter()
    }

    pub fn find(&self, label: &str) -> Option<StructureId> {
        self.structures.iter().find(|s| s.label == label).map(|s| s.id)
    }
}

impl Index<StructureId> for ModelBank {
    type Output = Structure;

    fn index(&self, id: StructureId) -> &Structure {
        &self.structures[id.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn logpdf_standard_normal_at_zero() {
        let v = gaussian_logpdf(0.0, 0.0, 1.0).unwrap();
        assert!(close(v, -0.918_938_533_204_672_7, 1e-15));
    }

    #[test]
    fn logpdf_zero_residual() {
        for (m, v) in [(3.0, 0.5), (-7.0, 10.0), (0.0, 1e-6)] {
            let lp = gaussian_logpdf(m, m, v).unwrap();
            assert!(close(lp, -0.5 * (2.0 * std::f64::consts::PI * v).ln(), 1e-12));
        }
    }

    #[test]
    fn logpdf_hand_value() {
        // -0.5 ln(8 pi) - 4/8
        let v = gaussian_logpdf(3.0, 1.0, 4.0).unwrap();
        assert!(close(v, -2.112_085_713_764_618, 1e-12), "{v}");
    }

    #[test]
    fn logpdf_rejects_bad_variance() {
        assert!(matches!(
            gaussian_logpdf(0.0, 0.0, 0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(gaussian_logpdf(0.0, 0.0, -1.0).is_err());
        assert!(GaussianParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn normalize_already_normalized() {
        let (w, z) = normalize_log_weights(&[0.2f64.ln(), 0.8f64.ln()]).unwrap();
        assert!(close(w[0], 0.2f64.ln(), 1e-12));
        assert!(close(w[1], 0.8f64.ln(), 1e-12));
        assert!(close(z, 0.0, 1e-12));
    }

    #[test]
    fn normalize_uniform() {
        let c = -3.7;
        let (w, z) = normalize_log_weights(&[c; 4]).unwrap();
        for x in w {
            assert!(close(x, 0.25f64.ln(), 1e-12));
        }
        assert!(close(z, c + 4f64.ln(), 1e-12));
    }

    #[test]
    fn normalize_extreme_without_overflow() {
        let e = std::f64::consts::E;
        let (w, z) = normalize_log_weights(&[-1000.0, -1001.0]).unwrap();
        assert!(close(w[0], (e / (1.0 + e)).ln(), 1e-12));
        assert!(close(w[1], (1.0 / (1.0 + e)).ln(), 1e-12));
        assert!(close(z, -1000.0 + (1.0 + 1.0 / e).ln(), 1e-12));
    }

    #[test]
    fn normalize_all_neg_inf_is_degenerate() {
        assert_eq!(
            normalize_log_weights(&[f64::NEG_INFINITY; 3]),
            Err(Error::DegenerateLikelihood)
        );
        assert!(normalize_log_weights(&[]).is_err());
    }

    #[test]
    fn mean_examples() {
        let b = Belief::uniform(vec![StateVec::scalar(1.0), StateVec::scalar(3.0)]).unwrap();
        assert!(close(belief_mean(&b)[0], 2.0, 1e-12));

        let b = Belief::uniform(vec![StateVec::scalar(-4.5)]).unwrap();
        assert_eq!(belief_mean(&b)[0], -4.5);

        let b = Belief::new(
            vec![StateVec::scalar(0.0), StateVec::scalar(10.0)],
            vec![0.9f64.ln(), 0.1f64.ln()],
        )
        .unwrap();
        assert!(close(belief_mean(&b)[0], 1.0, 1e-12));
    }

    #[test]
    fn ess_examples() {
        let ps = vec![StateVec::scalar(0.0); 100];
        let b = Belief::uniform(ps).unwrap();
        assert!(close(effective_sample_size(&b), 100.0, 1e-9));

        let b = Belief::new(
            vec![StateVec::scalar(0.0); 3],
            vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY],
        )
        .unwrap();
        assert!(close(effective_sample_size(&b), 1.0, 1e-12));

        let b = Belief::new(
            vec![StateVec::scalar(0.0); 3],
            vec![0.5f64.ln(), 0.25f64.ln(), 0.25f64.ln()],
        )
        .unwrap();
        assert!(close(effective_sample_size(&b), 8.0 / 3.0, 1e-12));
    }

    #[test]
    fn belief_rejects_mismatch_and_nonfinite() {
        assert!(Belief::new(vec![StateVec::scalar(0.0)], vec![0.0, 0.0]).is_err());
        assert!(Belief::uniform(vec![]).is_err());
        assert!(Belief::uniform(vec![StateVec::scalar(f64::NAN)]).is_err());
        assert!(
            Belief::uniform(vec![StateVec::scalar(0.0), StateVec::zeros(2)]).is_err()
        );
    }

    proptest! {
        #[test]
        fn logpdf_symmetric(m in -50.0f64..50.0, a in 0.0f64..30.0, v in 1e-3f64..100.0) {
            let lo = gaussian_logpdf(m - a, m, v).unwrap();
            let hi = gaussian_logpdf(m + a, m, v).unwrap();
            prop_assert!((lo - hi).abs() <= 1e-9 * lo.abs().max(1.0));
        }

        #[test]
        fn normalized_weights_sum_to_one(ws in prop::collection::vec(-800.0f64..50.0, 1..64)) {
            let (w, lse) = normalize_log_weights(&ws).unwrap();
            prop_assert!(log_sum_exp(&w).abs() <= 1e-12);
            let direct = ws.iter().map(|x| (x - lse).exp()).sum::<f64>();
            prop_assert!((direct - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn ess_within_bounds(ws in prop::collection::vec(-30.0f64..0.0, 1..50)) {
            let b = Belief::new(vec![StateVec::scalar(0.0); ws.len()], ws.clone()).unwrap();
            let ess = effective_sample_size(&b);
            prop_assert!(ess >= 1.0 - 1e-9 && ess <= ws.len() as f64 + 1e-9);
        }
    }
}
