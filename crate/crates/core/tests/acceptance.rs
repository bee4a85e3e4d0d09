//! End-to-end acceptance: the four benchmark scenarios at full size, the
//! property suite and run-to-run determinism. Prints one PASS/FAIL line per
//! criterion and fails if any criterion fails.
//!
//! Runtime is a few minutes on one core; the release test profile is used.

use cf_ssm::bench::{monte_carlo, MethodId, MonteCarloOutput, RunResult};
use cf_ssm::config::Overrides;
use cf_ssm::records::summary_to_string;
use cf_ssm::verify::{run_suite, Property};
use cf_ssm::{build_scenario, Scenario, StructureId};

const SEED: u64 = 42;

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn run(name: &str) -> (Scenario, MonteCarloOutput) {
    let sc = build_scenario(name).unwrap();
    let out = monte_carlo(&sc, &MethodId::defaults(&sc), sc.runs, SEED, workers())
        .unwrap_or_else(|e| panic!("{name}: {e}"));
    (sc, out)
}

fn rmse(out: &MonteCarloOutput, sc: &Scenario, m: MethodId) -> f64 {
    out.summary.row(&m.label(sc)).unwrap().rmse.mean
}

fn switch_rate(out: &MonteCarloOutput) -> f64 {
    out.summary.row("cf").unwrap().switch_rate.unwrap().mean
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x / target - 1.0).abs() <= rel
}

struct Gate {
    lines: Vec<String>,
    failed: usize,
}

impl Gate {
    fn check(&mut self, id: &str, ok: bool, detail: String) {
        let line = format!("[{}] {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push(line);
        if !ok {
            self.failed += 1;
        }
    }
}

fn fixed(i: usize) -> MethodId {
    MethodId::Fixed(StructureId(i))
}

fn exp4_1(g: &mut Gate) {
    let (sc, out) = run("exp4_1");
    let (lin, nl, imm, cf) = (
        rmse(&out, &sc, fixed(0)),
        rmse(&out, &sc, fixed(1)),
        rmse(&out, &sc, MethodId::Imm),
        rmse(&out, &sc, MethodId::Cf),
    );
    let rho = switch_rate(&out);
    let checks = [
        lin > nl,
        within(cf, nl, 0.10),
        within(lin, 13.463, 0.15),
        within(nl, 10.273, 0.15),
        within(cf, 10.688, 0.15),
        rho <= 0.02,
        within(imm, 10.534, 0.15),
    ];
    g.check(
        "1 exp4_1 ordering and bands",
        checks.iter().all(|c| *c),
        format!(
            "LIN {lin:.3} > NL {nl:.3} [{}]; CF {cf:.3} vs NL {:+.1}% [{}]; \
             bands LIN [{}] NL [{}] CF [{}]; rho_sw {rho:.4} [{}]; IMM {imm:.3} [{}]",
            checks[0],
            100.0 * (cf / nl - 1.0),
            checks[1],
            checks[2],
            checks[3],
            checks[4],
            checks[5],
            checks[6]
        ),
    );
}

/// Windowed scores recomputed from a trace's per-step score columns.
fn windowed(r: &RunResult, s: usize, window: usize) -> Vec<f64> {
    let col: Vec<f64> = r.trace.iter().map(|x| x.scores[s]).collect();
    (0..col.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(window);
            col[lo..=t].iter().sum::<f64>() / (t + 1 - lo) as f64
        })
        .collect()
}

fn exp4_2(g: &mut Gate) {
    let (sc, out) = run("exp4_2");
    let tau = sc.change.as_ref().unwrap().time;
    let cf_runs: Vec<&RunResult> = out.runs_of(MethodId::Cf).collect();
    let reacting = cf_runs
        .iter()
        .filter(|r| r.switch_times().iter().any(|t| *t >= tau && *t <= tau + 25))
        .count();
    let mut delays: Vec<usize> = cf_runs
        .iter()
        .filter_map(|r| r.switch_times().into_iter().find(|t| *t >= tau))
        .map(|t| t - tau)
        .collect();
    delays.sort_unstable();
    let rho = switch_rate(&out);

    // Run-averaged windowed scores of the CF belief after the change; record t
    // sits at index t - 1.
    let w = sc.cf.window;
    let per_run: Vec<[Vec<f64>; 2]> = cf_runs
        .iter()
        .map(|r| [windowed(r, 0, w), windowed(r, 1, w)])
        .collect();
    let from = tau + w;
    let steps = from..=sc.horizon;
    let sat_below = steps
        .clone()
        .filter(|t| {
            let mean = |s: usize| per_run.iter().map(|p| p[s][t - 1]).sum::<f64>();
            mean(1) < mean(0)
        })
        .count();
    let n_steps = steps.count();

    let (quad, sat, cf) = (
        rmse(&out, &sc, fixed(0)),
        rmse(&out, &sc, fixed(1)),
        rmse(&out, &sc, MethodId::Cf),
    );
    let checks = [
        reacting == cf_runs.len(),
        rho <= 0.01,
        sat_below == n_steps,
        cf <= quad.min(sat) * 1.05,
    ];
    g.check(
        "2 exp4_2 change-point adaptation",
        checks.iter().all(|c| *c),
        format!(
            "switch within 25 steps of tau in {reacting}/{} runs [{}] (delays: {} runs switched, median {}, max {}); \
             rho_sw {rho:.4} [{}]; \
             windowed Phi_sat < Phi_quad at {sat_below}/{n_steps} steps from t = {from} [{}]; \
             CF {cf:.3} vs min(QUAD {quad:.3}, SAT {sat:.3}) + 5% [{}]",
            cf_runs.len(),
            checks[0],
            delays.len(),
            delays.get(delays.len() / 2).map_or("-".into(), |d| d.to_string()),
            delays.last().map_or("-".into(), |d| d.to_string()),
            checks[1],
            checks[2],
            checks[3]
        ),
    );
}

fn exp4_3(g: &mut Gate) {
    let (_, out) = run("exp4_3");
    let cf: Vec<&RunResult> = out.runs_of(MethodId::Cf).collect();
    let quad: Vec<&RunResult> = out.runs_of(fixed(0)).collect();
    let no_switch = cf.iter().filter(|r| r.switch_rate == Some(0.0)).count();
    let identical = cf.iter().zip(&quad).filter(|(c, q)| c.trace == q.trace).count();
    g.check(
        "3 exp4_3 negative control",
        no_switch == cf.len() && identical == cf.len(),
        format!(
            "rho_sw = 0 in {no_switch}/{} runs; CF trace bitwise equal to Fixed-QUAD in {identical}/{} runs",
            cf.len(),
            cf.len()
        ),
    );
}

fn exp4_4(g: &mut Gate) {
    let (sc, out) = run("exp4_4");
    let (lin, nl, cf) = (
        rmse(&out, &sc, fixed(0)),
        rmse(&out, &sc, fixed(1)),
        rmse(&out, &sc, MethodId::Cf),
    );
    let rho = switch_rate(&out);
    let runs: Vec<&RunResult> = out.runs_of(MethodId::Cf).collect();
    let early_single = runs
        .iter()
        .filter(|r| matches!(r.switch_times().as_slice(), [t] if *t <= 5))
        .count();
    let checks = [
        lin > 2.0 * nl,
        within(cf, nl, 0.10),
        rho <= 0.01,
        2 * early_single > runs.len(),
    ];
    g.check(
        "4 exp4_4 two-dimensional mismatch",
        checks.iter().all(|c| *c),
        format!(
            "LIN {lin:.3} / NL {nl:.3} = {:.2} [{}]; CF {cf:.3} vs NL {:+.1}% [{}]; rho_sw {rho:.4} [{}]; \
             single switch at t <= 5 in {early_single}/{} runs [{}]",
            lin / nl,
            checks[0],
            100.0 * (cf / nl - 1.0),
            checks[1],
            checks[2],
            runs.len(),
            checks[3]
        ),
    );
}

fn properties(g: &mut Gate) {
    let reports = run_suite(&Property::ALL, SEED, &Overrides::default());
    for r in &reports {
        println!("    {r}");
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.property.name()).collect();
    g.check(
        "5 property suite",
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} properties pass", reports.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    );
}

fn determinism(g: &mut Gate) {
    let mut identical = Vec::new();
    for name in ["exp4_4", "exp4_2"] {
        let mut sc = build_scenario(name).unwrap();
        if name == "exp4_2" {
            sc.runs = 10;
        }
        let methods = MethodId::defaults(&sc);
        let texts: Vec<String> = [1, 8, 1]
            .into_iter()
            .map(|p| summary_to_string(&monte_carlo(&sc, &methods, sc.runs, SEED, p).unwrap().summary.rows))
            .collect();
        identical.push((name, texts.windows(2).all(|w| w[0] == w[1])));
    }
    g.check(
        "6 determinism",
        identical.iter().all(|(_, ok)| *ok),
        identical
            .iter()
            .map(|(n, ok)| format!("{n} summary.csv identical for parallelism 1, 8, 1: {ok}"))
            .collect::<Vec<_>>()
            .join("; "),
    );
}

#[test]
fn acceptance() {
    let mut g = Gate { lines: Vec::new(), failed: 0 };
    exp4_1(&mut g);
    exp4_2(&mut g);
    exp4_3(&mut g);
    exp4_4(&mut g);
    properties(&mut g);
    determinism(&mut g);
    println!("\nacceptance summary:");
    for l in &g.lines {
        println!("{l}");
    }
    assert_eq!(g.failed, 0, "{} acceptance criteria failed", g.failed);
}
