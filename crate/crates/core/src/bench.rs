//! Monte-Carlo experiment runner.
//!
//! Every run simulates one true trajectory from its data stream and feeds the
//! same observations to each method. Fixed-structure filters and CF share the
//! belief, score and initialization streams of the run, so CF is bitwise equal
//! to the fixed filter of its structure for as long as it does not switch.

use std::fmt;

use rayon::prelude::*;

use crate::cf::{cf_commit, score_candidates, switch_rate, CfState};
use crate::error::{Error, Result};
use crate::imm::{imm_step, ImmState, ImmStreams};
use crate::models::{initial_belief, simulate_truth, Scenario};
use crate::pf::pf_step;
use crate::rng::{Purpose, RngStreams};
use crate::ssm::{Belief, ModelBank, StateVec, StructureId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodId {
    Fixed(StructureId),
    Cf,
    Imm,
}

impl MethodId {
    /// Machine label: `fixed-<structure>`, `cf` or `imm`.
    pub fn label(&self, sc: &Scenario) -> String {
        match self {
            MethodId::Fixed(s) => format!("fixed-{}", sc.label_of(*s)),
            MethodId::Cf => "cf".into(),
            MethodId::Imm => "imm".into(),
        }
    }

    pub fn parse(s: &str, sc: &Scenario) -> Result<Self> {
        match s {
            "cf" => Ok(MethodId::Cf),
            "imm" => Ok(MethodId::Imm),
            other => other
                .strip_prefix("fixed-")
                .and_then(|label| sc.bank.iter().position(|b| b.label == label))
                .map(|i| MethodId::Fixed(StructureId(i)))
                .ok_or_else(|| Error::UnknownMethod(other.to_string())),
        }
    }

    /// Fixed filters for every structure, IMM when the scenario configures it, then CF.
    pub fn defaults(sc: &Scenario) -> Vec<MethodId> {
        let mut m: Vec<MethodId> = (0..sc.bank.len())
            .map(|i| MethodId::Fixed(StructureId(i)))
            .collect();
        if sc.imm.is_some() {
            m.push(MethodId::Imm);
        }
        m.push(MethodId::Cf);
        m
    }
}

/// One filter step as seen by the benchmark. Record `t` holds the true state
/// `z_t`, the estimate from `B_t`, the structure used to produce `B_t` and the
/// candidate scores of `y_t` against `B_{t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub z_true: StateVec,
    pub z_hat: StateVec,
    pub structure: StructureId,
    pub scores: Vec<f64>,
    pub loglik: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub method: MethodId,
    pub run_index: usize,
    pub initial_structure: StructureId,
    pub trace: Vec<TraceRecord>,
    pub rmse: f64,
    /// Not defined for IMM.
    pub phi_bar: Option<f64>,
    /// Not defined for IMM.
    pub switch_rate: Option<f64>,
}

impl RunResult {
    /// `s_0, s_1, ..., s_T`.
    pub fn structure_sequence(&self) -> Vec<StructureId> {
        std::iter::once(self.initial_structure)
            .chain(self.trace.iter().map(|r| r.structure))
            .collect()
    }

    /// Steps `t` at which the structure changed from `s_{t-1}`.
    pub fn switch_times(&self) -> Vec<usize> {
        let seq = self.structure_sequence();
        (1..seq.len()).filter(|&t| seq[t] != seq[t - 1]).collect()
    }
}

pub fn rmse(trace: &[TraceRecord]) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::InvalidInput("empty trace".into()));
    }
    let sq: f64 = trace.iter().map(|r| r.z_hat.squared_distance(&r.z_true)).sum();
    Ok((sq / trace.len() as f64).sqrt())
}

/// Average score of the active structure over records `2..=T` (`T - 1` terms).
pub fn phi_bar(trace: &[TraceRecord]) -> Result<f64> {
    if trace.len() < 2 {
        return Err(Error::InvalidInput("phi_bar needs at least two steps".into()));
    }
    let tail = &trace[1..];
    Ok(tail.iter().map(|r| r.scores[r.structure.0]).sum::<f64>() / tail.len() as f64)
}

fn check_hysteresis(diag_windowed: &[f64], prev: StructureId, delta: f64) -> Result<()> {
    let min = diag_windowed.iter().copied().fold(f64::INFINITY, f64::min);
    if diag_windowed[prev.0] > min + delta {
        Ok(())
    } else {
        Err(Error::InvariantViolation(format!(
            "switched away from {prev} although its windowed score {} is within {delta} of {min}",
            diag_windowed[prev.0]
        )))
    }
}

fn check_in_hull(estimate: &StateVec, vertices: &[StateVec], probs: &[f64]) -> Result<()> {
    for i in 0..estimate.dim() {
        let coords = vertices
            .iter()
            .zip(probs)
            .filter(|(_, p)| **p > 0.0)
            .map(|(v, _)| v[i]);
        let (lo, hi) = coords.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x), hi.max(x))
        });
        let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
        if estimate[i] < lo - tol || estimate[i] > hi + tol {
            return Err(Error::InvariantViolation(format!(
                "fused estimate {} outside mode hull [{lo}, {hi}]",
                estimate[i]
            )));
        }
    }
    Ok(())
}

/// Runs one method on run `run_index` of the scenario.
pub fn run_method(
    sc: &Scenario,
    method: MethodId,
    run_index: usize,
    master_seed: u64,
) -> Result<RunResult> {
    let streams = RngStreams::new(master_seed);
    let bank = sc.model_bank();
    if let MethodId::Fixed(s) = method {
        bank.get(s)?;
    }
    let truth = simulate_truth(sc, &mut streams.get(Purpose::Data, run_index, 0));
    let b0 = initial_belief(sc, &mut streams.get(Purpose::Init, run_index, 0))?;

    let (initial_structure, trace) = match method {
        MethodId::Imm => (
            sc.initial_structure,
            run_imm(sc, &bank, &truth, b0, &streams, run_index)?,
        ),
        MethodId::Fixed(s) => (s, run_selective(sc, &bank, &truth, b0, &streams, run_index, Some(s))?),
        MethodId::Cf => (
            sc.initial_structure,
            run_selective(sc, &bank, &truth, b0, &streams, run_index, None)?,
        ),
    };

    let rmse = rmse(&trace)?;
    let mut result = RunResult {
        method,
        run_index,
        initial_structure,
        trace,
        rmse,
        phi_bar: None,
        switch_rate: None,
    };
    if method != MethodId::Imm {
        result.phi_bar = Some(phi_bar(&result.trace)?);
        result.switch_rate = Some(switch_rate(&result.structure_sequence())?);
    }
    Ok(result)
}

/// Fixed-structure filtering (`fixed = Some(s)`) or CF (`fixed = None`).
fn run_selective(
    sc: &Scenario,
    bank: &ModelBank,
    truth: &crate::models::TrueTrajectory,
    b0: Belief,
    streams: &RngStreams,
    run: usize,
    fixed: Option<StructureId>,
) -> Result<Vec<TraceRecord>> {
    let mut belief_rng = streams.get(Purpose::Belief, run, 0);
    let mut score_rngs: Vec<_> = (0..bank.len())
        .map(|s| streams.get(Purpose::Score, run, s))
        .collect();
    let mut state = CfState::new(bank.len(), fixed.unwrap_or(sc.initial_structure), &sc.cf)?;
    let mut b = b0;
    let mut trace = Vec::with_capacity(sc.horizon);
    for t in 0..sc.horizon {
        let step = t + 1;
        let y = truth.observation(step);
        let scores = score_candidates(&b, bank, t, y, &mut score_rngs).map_err(|e| e.at(run, step))?;
        let (out, structure) = match fixed {
            Some(s) => (
                pf_step(&b, &bank[s], t, y, &mut belief_rng).map_err(|e| e.at(run, step))?,
                s,
            ),
            None => {
                let prev = state.active;
                let (out, diag) =
                    cf_commit(&b, &mut state, bank, &sc.cf, &scores, t, y, &mut belief_rng)
                        .map_err(|e| e.at(run, step))?;
                if diag.switched {
                    check_hysteresis(&diag.windowed_scores, prev, sc.cf.delta)
                        .map_err(|e| e.at(run, step))?;
                }
                (out, diag.selected)
            }
        };
        out.posterior
            .check_normalized(Belief::NORMALIZATION_TOL)
            .map_err(|e| e.at(run, step))?;
        trace.push(TraceRecord {
            t: step,
            z_true: *truth.state(step),
            z_hat: out.estimate,
            structure,
            scores,
            loglik: out.innovation_loglik,
            ess: out.ess_before_resample,
        });
        b = out.posterior;
    }
    Ok(trace)
}

fn run_imm(
    sc: &Scenario,
    bank: &ModelBank,
    truth: &crate::models::TrueTrajectory,
    b0: Belief,
    streams: &RngStreams,
    run: usize,
) -> Result<Vec<TraceRecord>> {
    let cfg = sc
        .imm
        .ok_or_else(|| Error::InvalidInput(format!("scenario {} has no IMM configuration", sc.name)))?;
    let mut imm_streams = ImmStreams {
        mix: streams.get(Purpose::Mix, run, 0),
        modes: (0..bank.len())
            .map(|s| streams.get(Purpose::Belief, run, s))
            .collect(),
    };
    let mut state = ImmState::uniform(b0, bank.len());
    let mut trace = Vec::with_capacity(sc.horizon);
    for t in 0..sc.horizon {
        let step = t + 1;
        let y = truth.observation(step);
        let out = imm_step(&state, bank, &cfg, t, y, &mut imm_streams).map_err(|e| e.at(run, step))?;
        out.state
            .check(Belief::NORMALIZATION_TOL)
            .map_err(|e| e.at(run, step))?;
        check_in_hull(&out.estimate, &out.mode_estimates, &out.state.mode_probs)
            .map_err(|e| e.at(run, step))?;
        let map_mode = (0..bank.len()).fold(0, |best, s| {
            if out.state.mode_probs[s] > out.state.mode_probs[best] {
                s
            } else {
                best
            }
        });
        trace.push(TraceRecord {
            t: step,
            z_true: *truth.state(step),
            z_hat: out.estimate,
            structure: StructureId(map_mode),
            scores: out.mode_logliks.iter().map(|ll| -ll).collect(),
            loglik: out.loglik,
            ess: out.mode_ess[map_mode],
        });
        state = out.state;
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Mean and standard error of a metric over runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricStat {
    pub mean: f64,
    pub se: f64,
}

impl MetricStat {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let se = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, se }
    }
}

impl fmt::Display for MetricStat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.se)
    }
}

/// One `(experiment, method)` row of a summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub experiment: String,
    pub method: String,
    pub runs: usize,
    pub rmse: MetricStat,
    pub phi_bar: Option<MetricStat>,
    pub switch_rate: Option<MetricStat>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
}

impl Summary {
    pub fn row(&self, method: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloOutput {
    pub summary: Summary,
    /// Grouped by method (in the requested order), then by run index.
    pub results: Vec<RunResult>,
}

impl MonteCarloOutput {
    pub fn runs_of(&self, method: MethodId) -> impl Iterator<Item = &RunResult> {
        self.results.iter().filter(move |r| r.method == method)
    }
}

/// Runs `runs` Monte-Carlo replications of every method on `parallelism`
/// worker threads. The output does not depend on the degree of parallelism.
pub fn monte_carlo(
    sc: &Scenario,
    methods: &[MethodId],
    runs: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<MonteCarloOutput> {
    if runs < 1 {
        return Err(Error::InvalidParameter("at least one run required".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods selected".into()));
    }
    let jobs: Vec<(MethodId, usize)> = methods
        .iter()
        .flat_map(|m| (0..runs).map(move |r| (*m, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let results: Vec<RunResult> = pool.install(|| {
        jobs.par_iter()
            .map(|(m, r)| run_method(sc, *m, *r, master_seed))
            .collect::<Result<Vec<_>>>()
    })?;

    let rows = methods
        .iter()
        .map(|m| {
            let mine: Vec<&RunResult> = results.iter().filter(|r| r.method == *m).collect();
            let stat = |f: fn(&RunResult) -> Option<f64>| -> Option<MetricStat> {
                let vals: Option<Vec<f64>> = mine.iter().map(|r| f(r)).collect();
                vals.map(|v| MetricStat::from_values(&v))
            };
            SummaryRow {
                experiment: sc.name.to_string(),
                method: m.label(sc),
                runs,
                rmse: stat(|r| Some(r.rmse)).expect("rmse always present"),
                phi_bar: stat(|r| r.phi_bar),
                switch_rate: stat(|r| r.switch_rate),
                seed: master_seed,
            }
        })
        .collect();
    Ok(MonteCarloOutput {
        summary: Summary { rows },
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_scenario, ScenarioName, ScenarioParams};

    fn rec(err: f64, score: f64, s: usize) -> TraceRecord {
        TraceRecord {
            t: 0,
            z_true: StateVec::scalar(0.0),
            z_hat: StateVec::scalar(err),
            structure: StructureId(s),
            scores: vec![score, score + 100.0],
            loglik: 0.0,
            ess: 1.0,
        }
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[rec(0.0, 0.0, 0), rec(0.0, 0.0, 0)]), Ok(0.0));
        let r = rmse(&[rec(1.0, 0.0, 0), rec(2.0, 0.0, 0)]).unwrap();
        assert!((r - 2.5f64.sqrt()).abs() < 1e-15);
        let r = rmse(&vec![rec(-3.5, 0.0, 0); 9]).unwrap();
        assert!((r - 3.5).abs() < 1e-12);
    }

    #[test]
    fn phi_bar_examples() {
        assert_eq!(phi_bar(&vec![rec(0.0, 1.7, 0); 5]), Ok(1.7));
        // The first record is excluded; scores [2, 4] over T - 1 = 2.
        assert_eq!(phi_bar(&[rec(0.0, 50.0, 0), rec(0.0, 2.0, 0), rec(0.0, 4.0, 0)]), Ok(3.0));
        // Active-structure column: structure 1 reads score + 100.
        assert_eq!(phi_bar(&[rec(0.0, 0.0, 1), rec(0.0, 1.0, 1), rec(0.0, 3.0, 1)]), Ok(102.0));
        assert!(phi_bar(&[rec(0.0, 1.0, 0)]).is_err());
    }

    #[test]
    fn method_labels_round_trip() {
        let sc = build_scenario("exp4_1").unwrap();
        for m in MethodId::defaults(&sc) {
            assert_eq!(MethodId::parse(&m.label(&sc), &sc), Ok(m));
        }
        assert_eq!(
            MethodId::defaults(&sc).iter().map(|m| m.label(&sc)).collect::<Vec<_>>(),
            ["fixed-lin", "fixed-nl", "imm", "cf"]
        );
        assert!(MethodId::parse("fixed-quad", &sc).is_err());
        let sc2 = build_scenario("exp4_2").unwrap();
        assert_eq!(MethodId::defaults(&sc2).len(), 3);
        assert!(run_method(&sc2, MethodId::Imm, 0, 1).is_err());
    }

    fn tiny(name: ScenarioName, horizon: usize) -> Scenario {
        let mut p = ScenarioParams::defaults(name);
        p.horizon = horizon;
        p.particles = 64;
        p.runs = 2;
        if p.change_time.is_some() {
            p.change_time = Some(horizon / 2);
        }
        p.build().unwrap()
    }

    #[test]
    fn minimal_horizon_run() {
        let sc = tiny(ScenarioName::Exp4_1, 2);
        for m in MethodId::defaults(&sc) {
            let r = run_method(&sc, m, 0, 9).unwrap();
            assert_eq!(r.trace.len(), 2);
            assert!(r.rmse.is_finite());
            if m != MethodId::Imm {
                assert!(r.phi_bar.unwrap().is_finite());
                let sr = r.switch_rate.unwrap();
                assert!((0.0..=1.0).contains(&sr));
            }
        }
    }

    #[test]
    fn methods_share_truth() {
        let sc = tiny(ScenarioName::Exp4_1, 30);
        let runs: Vec<RunResult> = MethodId::defaults(&sc)
            .into_iter()
            .map(|m| run_method(&sc, m, 3, 11).unwrap())
            .collect();
        for r in &runs[1..] {
            let a: Vec<_> = r.trace.iter().map(|x| x.z_true).collect();
            let b: Vec<_> = runs[0].trace.iter().map(|x| x.z_true).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn switch_rate_matches_cf_module() {
        let sc = tiny(ScenarioName::Exp4_4, 40);
        let r = run_method(&sc, MethodId::Cf, 0, 5).unwrap();
        assert_eq!(r.switch_rate, Some(switch_rate(&r.structure_sequence()).unwrap()));
        assert_eq!(r.switch_times().len() as f64 / 40.0, r.switch_rate.unwrap());
    }

    #[test]
    fn single_run_summary_has_zero_se() {
        let sc = tiny(ScenarioName::Exp4_3, 20);
        let out = monte_carlo(&sc, &[MethodId::Cf], 1, 4, 1).unwrap();
        let row = &out.summary.rows[0];
        let r = &out.results[0];
        assert_eq!(row.rmse, MetricStat { mean: r.rmse, se: 0.0 });
        assert_eq!(row.phi_bar.unwrap().mean, r.phi_bar.unwrap());
        assert_eq!(row.switch_rate.unwrap().se, 0.0);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let sc = tiny(ScenarioName::Exp4_1, 25);
        let methods = MethodId::defaults(&sc);
        let a = monte_carlo(&sc, &methods, 3, 21, 1).unwrap();
        let b = monte_carlo(&sc, &methods, 3, 21, 8).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.results, b.results);
    }

    #[test]
    fn cf_matches_fixed_while_not_switching() {
        let sc = tiny(ScenarioName::Exp4_3, 60);
        let cf = run_method(&sc, MethodId::Cf, 1, 8).unwrap();
        let fixed = run_method(&sc, MethodId::Fixed(StructureId(0)), 1, 8).unwrap();
        if cf.switch_times().is_empty() {
            assert_eq!(cf.trace, fixed.trace);
        } else {
            let first = cf.switch_times()[0];
            assert_eq!(cf.trace[..first - 1], fixed.trace[..first - 1]);
        }
    }
}
