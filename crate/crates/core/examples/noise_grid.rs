//! Grid search behind the exp4_1 noise levels: fixed-structure filters only,
//! scored by squared relative error against reference RMSE and phi_bar values.
//!
//! cargo run --release -p cf-ssm --example noise_grid

use cf_ssm::{monte_carlo, MethodId, ScenarioName, ScenarioParams, StructureId};

/// Fixed-LIN RMSE, Fixed-NL RMSE, Fixed-LIN phi_bar, Fixed-NL phi_bar.
const REFERENCE: [f64; 4] = [13.463, 10.273, 7.947, 4.192];
const SEED: u64 = 7;
const RUNS: usize = 20;

fn main() {
    let methods = [MethodId::Fixed(StructureId(0)), MethodId::Fixed(StructureId(1))];
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    println!("process_var observation_var  lin_rmse nl_rmse lin_phi nl_phi  error");
    for process_var in [40.0, 50.0, 60.0, 70.0, 80.0, 100.0] {
        for observation_var in [0.1, 0.25, 0.5, 1.0] {
            let mut p = ScenarioParams::defaults(ScenarioName::Exp4_1);
            p.noise.process_var = process_var;
            p.noise.observation_var = observation_var;
            let sc = p.build().expect("valid parameters");
            let out = monte_carlo(&sc, &methods, RUNS, SEED, workers).expect("run");
            let r = &out.summary.rows;
            let got = [
                r[0].rmse.mean,
                r[1].rmse.mean,
                r[0].phi_bar.expect("fixed phi_bar").mean,
                r[1].phi_bar.expect("fixed phi_bar").mean,
            ];
            let err: f64 = got
                .iter()
                .zip(REFERENCE)
                .map(|(g, t)| (g / t - 1.0).powi(2))
                .sum();
            println!(
                "{process_var:>11} {observation_var:>15}  {:>8.3} {:>7.3} {:>7.3} {:>6.3}  {err:.4}",
                got[0], got[1], got[2], got[3]
            );
        }
    }
}
