//! Plain-text rendering of summary rows as a results table.

use std::fmt::Write;

use crate::bench::{MetricStat, SummaryRow};
use crate::models::ScenarioName;

/// `fixed-lin` -> `Fixed LIN`, `cf` -> `CF`, `imm` -> `IMM`.
pub fn display_method(label: &str) -> String {
    match label.strip_prefix("fixed-") {
        Some(s) => format!("Fixed {}", s.to_uppercase()),
        None => label.to_uppercase(),
    }
}

fn display_experiment(name: &str) -> String {
    name.parse::<ScenarioName>()
        .map(|n| n.short().to_string())
        .unwrap_or_else(|_| name.to_string())
}

fn cell(stat: Option<MetricStat>) -> String {
    match stat {
        Some(s) if s.mean.is_finite() => format!("{:.3}", s.mean),
        _ => "--".into(),
    }
}

/// Renders one line per row, grouped by experiment in scenario order. The
/// switch rate is shown for CF only.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut ordered: Vec<&SummaryRow> = rows.iter().collect();
    let rank = |r: &SummaryRow| {
        r.experiment
            .parse::<ScenarioName>()
            .map(|n| ScenarioName::ALL.iter().position(|m| *m == n).unwrap_or(usize::MAX))
            .unwrap_or(usize::MAX)
    };
    ordered.sort_by_key(|r| rank(r));

    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:<12} {:>10} {:>10} {:>8} {:>6}",
        "Exp.", "Method", "RMSE", "Phi_bar", "rho_sw", "runs"
    );
    for r in ordered {
        let sw = if r.method == "cf" { cell(r.switch_rate) } else { "--".into() };
        let _ = writeln!(
            out,
            "{:<6} {:<12} {:>10} {:>10} {:>8} {:>6}",
            display_experiment(&r.experiment),
            display_method(&r.method),
            cell(Some(r.rmse)),
            cell(r.phi_bar),
            sw,
            r.runs
        );
    }
    out
}
