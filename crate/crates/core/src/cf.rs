//! Online structure selection driven by innovation scores.
//!
//! Each step every candidate structure is scored by the negative log of its
//! one-step innovation likelihood. Scores are averaged over a sliding window
//! and the incumbent is kept unless its windowed score exceeds the best one by
//! more than the hysteresis margin. The committed belief is then advanced by an
//! unmodified particle-filter step under the selected structure.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::pf::{innovation_likelihood, pf_step, predict, StepOutput};
use crate::rng::StreamRng;
use crate::ssm::{Belief, ModelBank, Observation, StructureId};

/// How exact ties among minimizers are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    LowestId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfConfig {
    /// Hysteresis margin.
    pub delta: f64,
    /// Score averaging window, in steps.
    pub window: usize,
    pub tie_break: TieBreak,
}

impl CfConfig {
    pub fn new(delta: f64, window: usize) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hysteresis margin must be finite and >= 0, got {delta}"
            )));
        }
        if window < 1 {
            return Err(Error::InvalidParameter("score window must be >= 1".into()));
        }
        Ok(Self {
            delta,
            window,
            tie_break: TieBreak::LowestId,
        })
    }
}

/// Negative log innovation likelihood; `-inf` maps to `+inf`.
pub fn phi_score(log_innovation_likelihood: f64) -> f64 {
    -log_innovation_likelihood
}

/// Mean of the `min(window, len)` most recent entries (most recent last).
pub fn windowed_score(buffer: &[f64], window: usize) -> f64 {
    let k = window.min(buffer.len()).max(1);
    let recent = &buffer[buffer.len().saturating_sub(k)..];
    recent.iter().sum::<f64>() / recent.len() as f64
}

/// Selection rule with hysteresis: stay unless the incumbent's windowed score
/// exceeds the minimum by more than `delta`; otherwise take the lowest-id minimizer.
pub fn select_structure(
    active: StructureId,
    windowed: &[f64],
    cfg: &CfConfig,
) -> Result<StructureId> {
    let score = |i: usize| {
        let v = windowed[i];
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let (best, min) = (0..windowed.len())
        .map(|i| (i, score(i)))
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if min == f64::INFINITY {
        return Err(Error::NoViableStructure);
    }
    if active.0 >= windowed.len() {
        return Err(Error::InvalidInput(format!("active structure {active} not scored")));
    }
    if score(active.0) <= min + cfg.delta {
        Ok(active)
    } else {
        match cfg.tie_break {
            TieBreak::LowestId => Ok(StructureId(best)),
        }
    }
}

/// Ring buffer of the last `W` scores of one structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreWindow {
    values: VecDeque<f64>,
    capacity: usize,
}

impl ScoreWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            values: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, v: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(v);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfState {
    pub active: StructureId,
    pub windows: Vec<ScoreWindow>,
    pub switch_count: usize,
    pub step_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfStepDiagnostics {
    pub scores: Vec<f64>,
    pub windowed_scores: Vec<f64>,
    pub selected: StructureId,
    pub switched: bool,
}

impl CfState {
    pub fn new(n_structures: usize, initial: StructureId, cfg: &CfConfig) -> Result<Self> {
        if initial.0 >= n_structures {
            return Err(Error::InvalidInput(format!(
                "initial structure {initial} outside bank of {n_structures}"
            )));
        }
        Ok(Self {
            active: initial,
            windows: vec![ScoreWindow::new(cfg.window); n_structures],
            switch_count: 0,
            step_count: 0,
        })
    }

    /// Pushes one step of per-structure scores and applies the selection rule.
    pub fn observe_scores(&mut self, scores: &[f64], cfg: &CfConfig) -> Result<CfStepDiagnostics> {
        if scores.len() != self.windows.len() {
            return Err(Error::InvalidInput(format!(
                "{} scores for {} structures",
                scores.len(),
                self.windows.len()
            )));
        }
        for (w, &s) in self.windows.iter_mut().zip(scores) {
            w.push(s);
        }
        let windowed: Vec<f64> = self.windows.iter().map(ScoreWindow::mean).collect();
        let selected = select_structure(self.active, &windowed, cfg)?;
        let switched = selected != self.active;
        self.active = selected;
        self.step_count += 1;
        if switched {
            self.switch_count += 1;
        }
        Ok(CfStepDiagnostics {
            scores: scores.to_vec(),
            windowed_scores: windowed,
            selected,
            switched,
        })
    }
}

/// Random streams owned by one CF filter: one for the committed belief and
/// one per candidate score.
#[derive(Debug, Clone)]
pub struct CfStreams {
    pub belief: StreamRng,
    pub scores: Vec<StreamRng>,
}

/// Scores every structure against `y` from the current belief. A zero
/// likelihood yields `+inf`.
pub fn score_candidates(
    b: &Belief,
    bank: &ModelBank,
    t: usize,
    y: &Observation,
    score_rngs: &mut [StreamRng],
) -> Result<Vec<f64>> {
    if score_rngs.len() != bank.len() {
        return Err(Error::InvalidInput("one score stream per structure required".into()));
    }
    bank.iter()
        .zip(score_rngs.iter_mut())
        .map(|(s, rng)| {
            let pred = predict(b, s, t, rng)?;
            match innovation_likelihood(&pred, s, y) {
                Ok(ll) => Ok(phi_score(ll)),
                Err(Error::DegenerateLikelihood) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Commits a structure from the given scores and advances the belief under it.
pub fn cf_commit(
    b: &Belief,
    state: &mut CfState,
    bank: &ModelBank,
    cfg: &CfConfig,
    scores: &[f64],
    t: usize,
    y: &Observation,
    belief_rng: &mut StreamRng,
) -> Result<(StepOutput, CfStepDiagnostics)> {
    let diagnostics = state.observe_scores(scores, cfg)?;
    let out = pf_step(b, bank.get(diagnostics.selected)?, t, y, belief_rng)?;
    Ok((out, diagnostics))
}

/// One coupled belief/structure update: score all candidates on `y`, select
/// with hysteresis, then filter `y` under the selected structure.
pub fn cf_step(
    b: &Belief,
    state: &mut CfState,
    bank: &ModelBank,
    cfg: &CfConfig,
    t: usize,
    y: &Observation,
    streams: &mut CfStreams,
) -> Result<(StepOutput, CfStepDiagnostics)> {
    let scores = score_candidates(b, bank, t, y, &mut streams.scores)?;
    cf_commit(b, state, bank, cfg, &scores, t, y, &mut streams.belief)
}

/// Fraction of consecutive pairs with a change of structure.
pub fn switch_rate(sequence: &[StructureId]) -> Result<f64> {
    if sequence.len() < 2 {
        return Err(Error::InvalidInput(
            "switch rate needs a sequence of at least two structures".into(),
        ));
    }
    let switches = sequence.windows(2).filter(|w| w[0] != w[1]).count();
    Ok(switches as f64 / (sequence.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ObservationSpec, TransitionSpec};
    use crate::rng::{Purpose, RngStreams};
    use crate::ssm::StateVec;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn ids(xs: &[usize]) -> Vec<StructureId> {
        xs.iter().map(|&i| StructureId(i)).collect()
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_score(0.0), 0.0);
        assert_eq!(phi_score(-2.0), 2.0);
        assert_eq!(phi_score(f64::NEG_INFINITY), f64::INFINITY);
    }

    #[test]
    fn windowed_examples() {
        assert_eq!(windowed_score(&[3.0], 10), 3.0);
        assert_eq!(windowed_score(&[1.0, 2.0, 3.0, 4.0], 2), 3.5);
        assert_eq!(windowed_score(&[2.5; 7], 7), 2.5);
        let mut w = ScoreWindow::new(2);
        for v in [1.0, 2.0, 3.0, 4.0] {
            w.push(v);
        }
        assert_eq!(w.len(), 2);
        assert_eq!(w.mean(), 3.5);
    }

    #[test]
    fn select_examples() {
        let cfg = CfConfig::new(1.0, 1).unwrap();
        // lin = 0, nl = 1
        assert_eq!(select_structure(StructureId(0), &[5.0, 3.0], &cfg), Ok(StructureId(1)));
        assert_eq!(select_structure(StructureId(0), &[3.5, 3.0], &cfg), Ok(StructureId(0)));
        let cfg = CfConfig::new(0.5, 1).unwrap();
        assert_eq!(
            select_structure(StructureId(1), &[2.0, 9.0, 2.0], &cfg),
            Ok(StructureId(0))
        );
    }

    #[test]
    fn select_handles_infinities() {
        let cfg = CfConfig::new(1.0, 1).unwrap();
        assert_eq!(
            select_structure(StructureId(0), &[f64::INFINITY, f64::INFINITY], &cfg),
            Err(Error::NoViableStructure)
        );
        assert_eq!(
            select_structure(StructureId(0), &[f64::INFINITY, 4.0], &cfg),
            Ok(StructureId(1))
        );
        assert_eq!(
            select_structure(StructureId(1), &[f64::NAN, 4.0], &cfg),
            Ok(StructureId(1))
        );
    }

    #[test]
    fn config_validation() {
        assert!(CfConfig::new(-0.1, 10).is_err());
        assert!(CfConfig::new(f64::NAN, 10).is_err());
        assert!(CfConfig::new(1.0, 0).is_err());
        assert!(CfConfig::new(0.0, 1).is_ok());
    }

    #[test]
    fn switch_rate_examples() {
        assert_eq!(switch_rate(&ids(&[1, 1, 1, 1])), Ok(0.0));
        assert_eq!(switch_rate(&ids(&[0, 1, 0, 1, 0, 1])), Ok(1.0));
        assert_eq!(switch_rate(&ids(&[0, 0, 1, 1, 1])), Ok(0.25));
        assert!(switch_rate(&ids(&[0])).is_err());
    }

    #[test]
    fn warm_up_allows_early_switch() {
        let cfg = CfConfig::new(1.0, 10).unwrap();
        let mut st = CfState::new(2, StructureId(0), &cfg).unwrap();
        let d = st.observe_scores(&[9.0, 2.0], &cfg).unwrap();
        assert!(d.switched);
        assert_eq!(st.active, StructureId(1));
        assert_eq!((st.switch_count, st.step_count), (1, 1));
    }

    fn single_bank() -> ModelBank {
        ModelBank::new([(
            "nl".to_string(),
            Arc::new(TransitionSpec::growth(10.0, 1)) as Arc<_>,
            Arc::new(ObservationSpec::Quadratic { variance: 1.0 }) as Arc<_>,
        )])
        .unwrap()
    }

    #[test]
    fn single_structure_bank_reduces_to_pf() {
        let bank = single_bank();
        let cfg = CfConfig::new(1.0, 10).unwrap();
        let streams = RngStreams::new(3);
        let mut cf_streams = CfStreams {
            belief: streams.get(Purpose::Belief, 0, 0),
            scores: vec![streams.get(Purpose::Score, 0, 0)],
        };
        let mut fixed_rng = streams.get(Purpose::Belief, 0, 0);
        let init: Vec<StateVec> = (0..50).map(|i| StateVec::scalar(i as f64 / 5.0 - 5.0)).collect();
        let mut b_cf = Belief::uniform(init.clone()).unwrap();
        let mut b_pf = Belief::uniform(init).unwrap();
        let mut st = CfState::new(1, StructureId(0), &cfg).unwrap();
        for t in 0..30 {
            let y = StateVec::scalar((t % 7) as f64);
            let (out, d) = cf_step(&b_cf, &mut st, &bank, &cfg, t, &y, &mut cf_streams).unwrap();
            let fixed = pf_step(&b_pf, &bank[StructureId(0)], t, &y, &mut fixed_rng).unwrap();
            assert!(!d.switched);
            assert_eq!(out, fixed);
            b_cf = out.posterior;
            b_pf = fixed.posterior;
        }
        assert_eq!(st.switch_count, 0);
    }

    proptest! {
        #[test]
        fn zero_margin_selection_is_a_minimizer(
            scores in prop::collection::vec(-50.0f64..50.0, 1..6),
            active in 0usize..6,
        ) {
            let active = StructureId(active % scores.len());
            let cfg = CfConfig::new(0.0, 1).unwrap();
            let sel = select_structure(active, &scores, &cfg).unwrap();
            for s in &scores {
                prop_assert!(scores[sel.0] <= *s);
            }
        }

        #[test]
        fn switches_only_beyond_margin(
            scores in prop::collection::vec(-50.0f64..50.0, 2..6),
            active in 0usize..6,
            delta in 0.0f64..10.0,
        ) {
            let active = StructureId(active % scores.len());
            let cfg = CfConfig::new(delta, 1).unwrap();
            let sel = select_structure(active, &scores, &cfg).unwrap();
            let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
            if sel != active {
                prop_assert!(scores[active.0] > min + delta);
                prop_assert_eq!(scores[sel.0], min);
                prop_assert!(scores[..sel.0].iter().all(|s| *s > min));
            } else {
                prop_assert!(scores[active.0] <= min + delta);
            }
        }

        #[test]
        fn windowed_is_mean_of_recent(xs in prop::collection::vec(-10.0f64..10.0, 1..30), w in 1usize..12) {
            let mut win = ScoreWindow::new(w);
            for x in &xs {
                win.push(*x);
            }
            prop_assert!((win.mean() - windowed_score(&xs, w)).abs() < 1e-12);
        }
    }
}
