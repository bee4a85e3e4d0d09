//! Executable checks of the structural guarantees of the CF operator.
//!
//! Each property runs on seeded instances and reports the first
//! counterexample it finds, together with the seed and instance index that
//! reproduce it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::bench::{monte_carlo, MethodId};
use crate::cf::{cf_commit, CfConfig, CfState};
use crate::config::Overrides;
use crate::error::{Error, Result};
use crate::models::{initial_belief, simulate_truth, ScenarioName};
use crate::oracle::{
    empirical_distribution, exact_filter_step, exact_score, hull_separation_check,
    total_variation, DiscreteBelief, DiscreteHmm,
};
use crate::pf::pf_step;
use crate::rng::{Purpose, RngStreams, StreamRng};
use crate::ssm::{Belief, StateVec, StructureId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Normalization,
    Descent,
    FiniteSwitching,
    NonIntrusiveness,
    HullSeparation,
    PfOracle,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::Normalization,
        Property::Descent,
        Property::FiniteSwitching,
        Property::NonIntrusiveness,
        Property::HullSeparation,
        Property::PfOracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Normalization => "normalization",
            Property::Descent => "descent",
            Property::FiniteSwitching => "finite-switching",
            Property::NonIntrusiveness => "non-intrusiveness",
            Property::HullSeparation => "hull-separation",
            Property::PfOracle => "pf-oracle",
        }
    }

    fn tag(self) -> usize {
        Property::ALL.iter().position(|p| *p == self).unwrap()
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown property {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub property: Property,
    pub passed: bool,
    /// Number of instances examined.
    pub instances: usize,
    pub detail: String,
}

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<18} {:>4} instances  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.property.name(),
            self.instances,
            self.detail
        )
    }
}

/// Seeded instance generator: instance `i` of property `p` owns stream
/// `(Data, 10_000 * p + i, 0)`.
fn instance_rng(streams: &RngStreams, p: Property, i: usize) -> StreamRng {
    streams.get(Purpose::Data, 10_000 * p.tag() + i, 0)
}

type Check = std::result::Result<String, String>;

/// `overrides` are layered over the reduced-size scenarios of the
/// normalization check; the other properties build their own instances.
pub fn run_property(p: Property, seed: u64, overrides: &Overrides) -> PropertyReport {
    let (instances, outcome) = match p {
        Property::Normalization => normalization(seed, overrides),
        Property::Descent => descent(seed),
        Property::FiniteSwitching => finite_switching(seed),
        Property::NonIntrusiveness => non_intrusiveness(seed),
        Property::HullSeparation => hull_separation(seed),
        Property::PfOracle => pf_oracle(seed),
    };
    let (passed, detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, format!("{d} (seed {seed})")),
    };
    PropertyReport {
        property: p,
        passed,
        instances,
        detail,
    }
}

pub fn run_suite(properties: &[Property], seed: u64, overrides: &Overrides) -> Vec<PropertyReport> {
    properties.iter().map(|p| run_property(*p, seed, overrides)).collect()
}

/// Every method on every scenario at reduced size; the runner checks the
/// belief normalization after each step at the 1e-9 tolerance.
fn normalization(seed: u64, overrides: &Overrides) -> (usize, Check) {
    let o = Overrides {
        horizon: Some(60),
        particles: Some(300),
        ..Default::default()
    }
    .layered(overrides);
    let mut n = 0;
    for name in ScenarioName::ALL {
        let sc = match o.scenario(name) {
            Ok(sc) => sc,
            Err(e) => return (n, Err(format!("{name}: {e}"))),
        };
        let methods = MethodId::defaults(&sc);
        n += methods.len() * 2;
        if let Err(e) = monte_carlo(&sc, &methods, 2, seed, 1) {
            return (n, Err(format!("{name}: {e}")));
        }
    }
    (n, Ok("all beliefs normalized within 1e-9".into()))
}

/// With zero margin the committed structure minimizes the windowed score.
fn descent(seed: u64) -> (usize, Check) {
    let streams = RngStreams::new(seed);
    const INSTANCES: usize = 100;
    const STEPS: usize = 30;
    let mut steps = 0;
    for i in 0..INSTANCES {
        let mut rng = instance_rng(&streams, Property::Descent, i);
        let n_states = 2 + i % 3;
        let hmm = DiscreteHmm::random(n_states, 3, 3, &mut rng).expect("valid sizes");
        let truth = StructureId(rng.random_range(0..3));
        let (_, ys) = hmm.sample_path(truth, &DiscreteBelief::uniform(n_states), STEPS, &mut rng);
        let cfg = CfConfig::new(0.0, 1 + i % 4).expect("valid config");
        let mut state = CfState::new(3, StructureId(0), &cfg).expect("valid state");
        let mut b = DiscreteBelief::uniform(n_states);
        for (t, y) in ys.iter().enumerate() {
            let scores: Vec<f64> = (0..3).map(|s| exact_score(&hmm, &b, StructureId(s), *y)).collect();
            let d = match state.observe_scores(&scores, &cfg) {
                Ok(d) => d,
                Err(e) => return (i + 1, Err(format!("instance {i} step {t}: {e}"))),
            };
            let sel = d.windowed_scores[d.selected.0];
            if let Some(j) = d.windowed_scores.iter().position(|w| sel > *w) {
                return (
                    i + 1,
                    Err(format!(
                        "instance {i} step {t}: selected {} with {sel} > structure {j} with {}",
                        d.selected, d.windowed_scores[j]
                    )),
                );
            }
            b = match exact_filter_step(&hmm, &b, d.selected, *y) {
                Ok((post, _)) => post,
                Err(e) => return (i + 1, Err(format!("instance {i} step {t}: {e}"))),
            };
            steps += 1;
        }
    }
    (INSTANCES, Ok(format!("{steps} steps, selected score minimal at every step")))
}

/// Random scores up to `T0`, then a dominant structure separated by more
/// than the margin: at most one switch once the windows hold only
/// post-`T0` scores, and it lands on the dominant structure.
fn finite_switching(seed: u64) -> (usize, Check) {
    let streams = RngStreams::new(seed);
    const SCRIPTS: usize = 100;
    const N: usize = 3;
    for i in 0..SCRIPTS {
        let mut rng = instance_rng(&streams, Property::FiniteSwitching, i);
        let delta = rng.random_range(0.0..2.0);
        let window = rng.random_range(1..8usize);
        let t0 = rng.random_range(1..40usize);
        let horizon = t0 + window + 60;
        let dominant = rng.random_range(0..N);
        let gap = delta + 1.0 + rng.random_range(0.01..2.0);
        let cfg = CfConfig::new(delta, window).expect("valid config");
        let initial = StructureId(rng.random_range(0..N));
        let mut state = CfState::new(N, initial, &cfg).expect("valid state");
        let settled = t0 + window - 1;
        let mut late_switches = 0;
        for t in 0..horizon {
            let scores: Vec<f64> = (0..N)
                .map(|s| {
                    let u: f64 = rng.random();
                    if t < t0 {
                        10.0 * u
                    } else if s == dominant {
                        u
                    } else {
                        u + gap
                    }
                })
                .collect();
            let d = match state.observe_scores(&scores, &cfg) {
                Ok(d) => d,
                Err(e) => return (i + 1, Err(format!("script {i} step {t}: {e}"))),
            };
            if t >= settled && d.switched {
                late_switches += 1;
            }
        }
        if late_switches > 1 || state.active != StructureId(dominant) {
            return (
                i + 1,
                Err(format!(
                    "script {i}: {late_switches} switches after t = {settled}, ending on {} instead of {dominant}",
                    state.active
                )),
            );
        }
    }
    (SCRIPTS, Ok("at most one switch after separation".into()))
}

/// While the active structure stays within the margin of the best score, the
/// CF belief is bitwise the fixed-structure belief.
fn non_intrusiveness(seed: u64) -> (usize, Check) {
    let streams = RngStreams::new(seed);
    const INSTANCES: usize = 20;
    let o = Overrides {
        horizon: Some(60),
        particles: Some(200),
        ..Default::default()
    };
    let sc = match o.scenario(ScenarioName::Exp4_3) {
        Ok(sc) => sc,
        Err(e) => return (0, Err(e.to_string())),
    };
    let bank = sc.model_bank();
    for i in 0..INSTANCES {
        let mut script = instance_rng(&streams, Property::NonIntrusiveness, i);
        let active = StructureId(i % bank.len());
        let truth = simulate_truth(&sc, &mut streams.get(Purpose::Data, i, 0));
        let b0 = match initial_belief(&sc, &mut streams.get(Purpose::Init, i, 0)) {
            Ok(b) => b,
            Err(e) => return (i + 1, Err(e.to_string())),
        };
        let mut cf_rng = streams.get(Purpose::Belief, i, 0);
        let mut fixed_rng = streams.get(Purpose::Belief, i, 0);
        let mut state = CfState::new(bank.len(), active, &sc.cf).expect("valid state");
        let (mut b_cf, mut b_fixed): (Belief, Belief) = (b0.clone(), b0);
        for t in 0..sc.horizon {
            let y: &StateVec = truth.observation(t + 1);
            let scores: Vec<f64> = (0..bank.len())
                .map(|s| {
                    let u: f64 = script.random();
                    if s == active.0 {
                        u
                    } else {
                        0.5 + script.random_range(0.0..5.0)
                    }
                })
                .collect();
            let step = cf_commit(&b_cf, &mut state, &bank, &sc.cf, &scores, t, y, &mut cf_rng)
                .and_then(|(cf, d)| Ok((cf, d, pf_step(&b_fixed, &bank[active], t, y, &mut fixed_rng)?)));
            let (cf, d, fixed) = match step {
                Ok(r) => r,
                Err(e) => return (i + 1, Err(format!("instance {i} step {t}: {e}"))),
            };
            let same = d.selected == active
                && cf.estimate.as_slice().iter().map(|x| x.to_bits()).eq(fixed.estimate.as_slice().iter().map(|x| x.to_bits()))
                && cf.innovation_loglik.to_bits() == fixed.innovation_loglik.to_bits()
                && cf.posterior == fixed.posterior;
            if !same {
                return (i + 1, Err(format!("instance {i} step {t}: CF belief diverged from fixed {active}")));
            }
            b_cf = cf.posterior;
            b_fixed = fixed.posterior;
        }
    }
    (INSTANCES, Ok("CF and fixed beliefs bitwise identical".into()))
}

/// Interior mixtures of distinct structure updates lie strictly off every
/// vertex, while the CF update is a vertex.
fn hull_separation(seed: u64) -> (usize, Check) {
    let streams = RngStreams::new(seed);
    const INSTANCES: usize = 50;
    let mut draws = 0;
    let mut min_distance = f64::INFINITY;
    for i in 0..INSTANCES {
        let mut rng = instance_rng(&streams, Property::HullSeparation, i);
        let check = loop {
            draws += 1;
            let n_states = rng.random_range(2..5usize);
            let hmm = DiscreteHmm::random(n_states, 3, 2, &mut rng).expect("valid sizes");
            let b = DiscreteBelief::random(n_states, &mut rng);
            let w = rng.random_range(0.1..0.9);
            let y = rng.random_range(0..3usize);
            match hull_separation_check(&hmm, &b, &[w, 1.0 - w], y) {
                Ok(h) => {
                    let spread = total_variation(&h.vertices[0].probs, &h.vertices[1].probs);
                    if spread > 1e-6 {
                        break h;
                    }
                }
                Err(Error::DegenerateLikelihood) => {}
                Err(e) => return (i + 1, Err(format!("instance {i}: {e}"))),
            }
        };
        min_distance = min_distance.min(check.distance);
        if !(check.distance > 1e-9 && check.cf_is_vertex) {
            return (
                i + 1,
                Err(format!(
                    "instance {i}: distance {} vertex {}",
                    check.distance, check.cf_is_vertex
                )),
            );
        }
    }
    (
        INSTANCES,
        Ok(format!("{draws} draws, min mixture-to-vertex distance {min_distance:.3e}")),
    )
}

pub const PF_ORACLE_PARTICLES: usize = 100_000;
pub const PF_ORACLE_TV: f64 = 0.02;

/// Worst total-variation distance between a particle filter with `particles`
/// particles and the exact filter over `steps` observations of instance `i`.
pub fn pf_oracle_tv(seed: u64, i: usize, particles: usize, steps: usize) -> Result<f64> {
    let streams = RngStreams::new(seed);
    let mut rng = instance_rng(&streams, Property::PfOracle, i);
    let n_states = 2 + i % 3;
    let hmm = DiscreteHmm::random(n_states, 3, 2, &mut rng)?;
    let s = StructureId(i % 2);
    let prior = DiscreteBelief::uniform(n_states);
    let (_, ys) = hmm.sample_path(s, &prior, steps, &mut rng);
    let bank = hmm.particle_bank();
    let mut belief = Belief::uniform(
        (0..particles)
            .map(|k| StateVec::scalar((k % n_states) as f64))
            .collect(),
    )?;
    let mut exact = prior;
    let mut pf_rng = streams.get(Purpose::Belief, i, 0);
    let mut worst: f64 = 0.0;
    for (t, y) in ys.iter().enumerate() {
        let out = pf_step(&belief, &bank[s], t, &StateVec::scalar(*y as f64), &mut pf_rng)?;
        exact = exact_filter_step(&hmm, &exact, s, *y)?.0;
        worst = worst.max(total_variation(
            &empirical_distribution(&out.posterior, n_states),
            &exact.probs,
        ));
        belief = out.posterior;
    }
    Ok(worst)
}

fn pf_oracle(seed: u64) -> (usize, Check) {
    const INSTANCES: usize = 20;
    let mut worst: f64 = 0.0;
    for i in 0..INSTANCES {
        match pf_oracle_tv(seed, i, PF_ORACLE_PARTICLES, 5) {
            Ok(tv) if tv <= PF_ORACLE_TV => worst = worst.max(tv),
            Ok(tv) => return (i + 1, Err(format!("instance {i}: TV {tv:.4} > {PF_ORACLE_TV}"))),
            Err(e) => return (i + 1, Err(format!("instance {i}: {e}"))),
        }
    }
    (INSTANCES, Ok(format!("max TV {worst:.4} at N_p = {PF_ORACLE_PARTICLES}")))
}
