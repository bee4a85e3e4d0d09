//! Exact inference on small discrete hidden-Markov banks.
//!
//! These routines enumerate states directly and share no code with the
//! particle filters, so they serve as ground truth for innovation
//! likelihoods, posteriors, IMM mode recursions and the mixture/vertex test.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::ssm::{
    Belief, ModelBank, Observation, ObservationModel, StateVec, StructureId, TransitionModel,
};

pub const MAX_STATES: usize = 8;
const ROW_TOL: f64 = 1e-12;

pub type Matrix = Vec<Vec<f64>>;

/// Transition and emission matrices of one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteStructure {
    /// `transition[i][j] = P(z' = j | z = i)`.
    pub transition: Matrix,
    /// `emission[i][y] = P(y | z = i)`.
    pub emission: Matrix,
}

/// A bank of discrete structures over a shared state space and alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    n_states: usize,
    n_symbols: usize,
    structures: Vec<DiscreteStructure>,
}

fn check_stochastic(m: &Matrix, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.len() != rows || m.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidInput(format!("{what} must be {rows}x{cols}")));
    }
    for (i, row) in m.iter().enumerate() {
        if row.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidInput(format!("{what} row {i} has negative entries")));
        }
        let total: f64 = row.iter().sum();
        if (total - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidInput(format!("{what} row {i} sums to {total}")));
        }
    }
    Ok(())
}

impl DiscreteHmm {
    pub fn new(
        n_states: usize,
        n_symbols: usize,
        structures: Vec<DiscreteStructure>,
    ) -> Result<Self> {
        if !(1..=MAX_STATES).contains(&n_states) || n_symbols == 0 || structures.is_empty() {
            return Err(Error::InvalidInput(format!(
                "need 1..={MAX_STATES} states, a non-empty alphabet and at least one structure"
            )));
        }
        for s in &structures {
            check_stochastic(&s.transition, n_states, n_states, "transition")?;
            check_stochastic(&s.emission, n_states, n_symbols, "emission")?;
        }
        Ok(Self {
            n_states,
            n_symbols,
            structures,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_structures(&self) -> usize {
        self.structures.len()
    }

    pub fn structure(&self, s: StructureId) -> &DiscreteStructure {
        &self.structures[s.0]
    }

    /// Random bank with every row drawn from a flat Dirichlet.
    pub fn random(
        n_states: usize,
        n_symbols: usize,
        n_structures: usize,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        let structures = (0..n_structures)
            .map(|_| DiscreteStructure {
                transition: (0..n_states).map(|_| dirichlet_row(n_states, rng)).collect(),
                emission: (0..n_states).map(|_| dirichlet_row(n_symbols, rng)).collect(),
            })
            .collect();
        Self::new(n_states, n_symbols, structures)
    }

    /// Samples `len` steps of states and symbols under structure `s`, starting
    /// from a state drawn from `initial`.
    pub fn sample_path(
        &self,
        s: StructureId,
        initial: &DiscreteBelief,
        len: usize,
        rng: &mut StreamRng,
    ) -> (Vec<usize>, Vec<usize>) {
        let st = self.structure(s);
        let mut z = categorical(&initial.probs, rng);
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        for _ in 0..len {
            z = categorical(&st.transition[z], rng);
            states.push(z);
            symbols.push(categorical(&st.emission[z], rng));
        }
        (states, symbols)
    }

    /// Particle-filter view of the bank: states and symbols are carried as the
    /// first coordinate of a [`StateVec`].
    pub fn particle_bank(&self) -> ModelBank {
        ModelBank::new(self.structures.iter().enumerate().map(|(i, s)| {
            (
                format!("d{i}"),
                Arc::new(DiscreteTransition(s.transition.clone())) as Arc<dyn TransitionModel>,
                Arc::new(DiscreteEmission(s.emission.clone())) as Arc<dyn ObservationModel>,
            )
        }))
        .expect("non-empty bank")
    }
}

fn dirichlet_row(n: usize, rng: &mut StreamRng) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let mut row: Vec<f64> = draws.iter().map(|d| d / total).collect();
    // Put the rounding residue on the largest entry so the row sums to 1.
    let residue = 1.0 - row.iter().sum::<f64>();
    let imax = (0..n).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(0);
    row[imax] += residue;
    row
}

fn categorical(probs: &[f64], rng: &mut StreamRng) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

#[derive(Debug)]
struct DiscreteTransition(Matrix);

impl TransitionModel for DiscreteTransition {
    fn sample(&self, z: &StateVec, _t: usize, rng: &mut StreamRng) -> StateVec {
        StateVec::scalar(categorical(&self.0[z[0] as usize], rng) as f64)
    }
}

#[derive(Debug)]
struct DiscreteEmission(Matrix);

impl ObservationModel for DiscreteEmission {
    fn log_density(&self, y: &Observation, z: &StateVec) -> f64 {
        self.0[z[0] as usize]
            .get(y[0] as usize)
            .map_or(f64::NEG_INFINITY, |p| p.ln())
    }

    fn sample(&self, z: &StateVec, rng: &mut StreamRng) -> Observation {
        StateVec::scalar(categorical(&self.0[z[0] as usize], rng) as f64)
    }
}

/// A probability vector over the discrete states.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteBelief {
    pub probs: Vec<f64>,
}

impl DiscreteBelief {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let b = Self { probs };
        b.check(ROW_TOL)?;
        Ok(b)
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Self { probs }
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let total: f64 = self.probs.iter().sum();
        if self.probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > tol {
            return Err(Error::InvalidInput(format!("{:?} is not on the simplex", self.probs)));
        }
        Ok(())
    }

    pub fn random(n: usize, rng: &mut StreamRng) -> Self {
        Self {
            probs: dirichlet_row(n, rng),
        }
    }
}

/// `b^T P_s`.
pub fn exact_predict(hmm: &DiscreteHmm, b: &DiscreteBelief, s: StructureId) -> DiscreteBelief {
    let p = &hmm.structure(s).transition;
    let n = hmm.n_states;
    let probs = (0..n)
        .map(|j| (0..n).map(|i| b.probs[i] * p[i][j]).sum())
        .collect();
    DiscreteBelief { probs }
}

/// Exact Bayes correction; returns the posterior and the likelihood of `y`.
pub fn exact_update(
    hmm: &DiscreteHmm,
    predicted: &DiscreteBelief,
    s: StructureId,
    y: usize,
) -> Result<(DiscreteBelief, f64)> {
    let e = &hmm.structure(s).emission;
    if y >= hmm.n_symbols {
        return Err(Error::InvalidInput(format!("symbol {y} outside alphabet")));
    }
    let joint: Vec<f64> = (0..hmm.n_states)
        .map(|z| predicted.probs[z] * e[z][y])
        .collect();
    let lik: f64 = joint.iter().sum();
    if !(lik > 0.0) {
        return Err(Error::DegenerateLikelihood);
    }
    Ok((
        DiscreteBelief {
            probs: joint.iter().map(|j| j / lik).collect(),
        },
        lik,
    ))
}

/// Predict then update: the exact structure-conditioned filter step.
pub fn exact_filter_step(
    hmm: &DiscreteHmm,
    b: &DiscreteBelief,
    s: StructureId,
    y: usize,
) -> Result<(DiscreteBelief, f64)> {
    exact_update(hmm, &exact_predict(hmm, b, s), s, y)
}

/// Exact innovation score `-ln l_s(y | b)`; `+inf` for zero likelihood.
pub fn exact_score(hmm: &DiscreteHmm, b: &DiscreteBelief, s: StructureId, y: usize) -> f64 {
    match exact_filter_step(hmm, b, s, y) {
        Ok((_, lik)) => -lik.ln(),
        Err(_) => f64::INFINITY,
    }
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Distribution over states implied by a particle belief on a discrete space.
pub fn empirical_distribution(b: &Belief, n_states: usize) -> Vec<f64> {
    let mut probs = vec![0.0; n_states];
    for (z, w) in b.particles().iter().zip(b.weights()) {
        probs[z[0] as usize] += w;
    }
    probs
}

/// Outcome of comparing a mixture of structure updates against the updates themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct HullCheck {
    /// Minimum Euclidean distance from the mixture to any single-structure update.
    pub distance: f64,
    /// Whether the update under the score-minimizing structure is one of the vertices.
    pub cf_is_vertex: bool,
    pub vertices: Vec<DiscreteBelief>,
    pub mixture: DiscreteBelief,
    pub selected: StructureId,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Compares the IMM-style convex mixture of exact structure updates with the
/// hard selection of the lowest-score structure (lowest id on ties).
pub fn hull_separation_check(
    hmm: &DiscreteHmm,
    b: &DiscreteBelief,
    mix_weights: &[f64],
    y: usize,
) -> Result<HullCheck> {
    if mix_weights.len() != hmm.n_structures() {
        return Err(Error::InvalidInput("one mixing weight per structure required".into()));
    }
    let mut vertices = Vec::with_capacity(hmm.n_structures());
    let mut scores = Vec::with_capacity(hmm.n_structures());
    for s in 0..hmm.n_structures() {
        let (post, lik) = exact_filter_step(hmm, b, StructureId(s), y)?;
        vertices.push(post);
        scores.push(-lik.ln());
    }
    let mixture = DiscreteBelief {
        probs: (0..hmm.n_states)
            .map(|z| {
                mix_weights
                    .iter()
                    .zip(&vertices)
                    .map(|(w, v)| w * v.probs[z])
                    .sum()
            })
            .collect(),
    };
    let distance = vertices
        .iter()
        .map(|v| euclidean(&v.probs, &mixture.probs))
        .fold(f64::INFINITY, f64::min);
    let mut selected = 0;
    for (s, sc) in scores.iter().enumerate() {
        if *sc < scores[selected] {
            selected = s;
        }
    }
    let (cf_update, _) = exact_filter_step(hmm, b, StructureId(selected), y)?;
    let cf_is_vertex = vertices.iter().any(|v| v.probs == cf_update.probs);
    Ok(HullCheck {
        distance,
        cf_is_vertex,
        vertices,
        mixture,
        selected: StructureId(selected),
    })
}

/// Exact IMM state over a discrete bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactImmState {
    pub mode_probs: Vec<f64>,
    pub beliefs: Vec<DiscreteBelief>,
}

/// One exact IMM recursion with self-transition `p_stay` and uniform
/// off-diagonal mass. Returns the new state and the mixture likelihood of `y`.
pub fn exact_imm_step(
    hmm: &DiscreteHmm,
    state: &ExactImmState,
    p_stay: f64,
    y: usize,
) -> Result<(ExactImmState, f64)> {
    let m = hmm.n_structures();
    let n = hmm.n_states;
    let pij = |i: usize, j: usize| {
        if m == 1 {
            1.0
        } else if i == j {
            p_stay
        } else {
            (1.0 - p_stay) / (m - 1) as f64
        }
    };
    let mut mode_probs = Vec::with_capacity(m);
    let mut beliefs = Vec::with_capacity(m);
    for target in 0..m {
        let pred_mu: f64 = (0..m).map(|src| pij(src, target) * state.mode_probs[src]).sum();
        let mixed = if pred_mu > 0.0 {
            DiscreteBelief {
                probs: (0..n)
                    .map(|z| {
                        (0..m)
                            .map(|src| {
                                pij(src, target) * state.mode_probs[src] / pred_mu
                                    * state.beliefs[src].probs[z]
                            })
                            .sum()
                    })
                    .collect(),
            }
        } else {
            state.beliefs[target].clone()
        };
        let (post, lik) = match exact_filter_step(hmm, &mixed, StructureId(target), y) {
            Ok(r) => r,
            Err(Error::DegenerateLikelihood) => (mixed, 0.0),
            Err(e) => return Err(e),
        };
        mode_probs.push(pred_mu * lik);
        beliefs.push(post);
    }
    let total: f64 = mode_probs.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateLikelihood);
    }
    for p in &mut mode_probs {
        *p /= total;
    }
    Ok((ExactImmState { mode_probs, beliefs }, total))
}
