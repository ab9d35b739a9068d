//! Machine-readable run records and human table rendering.
//!
//! Machine records keep full precision; the human tables round percentages
//! half-even to two decimals. Wall-clock timings go to their own record so
//! the summary and trace files are byte-stable across repeated runs.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::ccg::{CcgState, TraceRow};
use crate::error::Result;
use crate::netdata::Network;
use crate::powerflow::PlanDecision;
use crate::threat::ThreatModel;

/// Final solution overview, the machine twin of the published case tables.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRecord {
    pub case: String,
    pub secured_buses: Vec<u32>,
    pub total_pct: f64,
    pub reserve_dispatch_pct: f64,
    pub firewall_pct: f64,
    pub expected_pct: f64,
    pub total_mu: f64,
    pub base_mu: f64,
    pub first_stage_mu: f64,
    pub expected_mu: f64,
    pub iterations: u32,
    pub converged: bool,
    pub gap: f64,
}

impl SummaryRecord {
    pub fn from_state(
        case: impl Into<String>,
        net: &Network,
        threat: &ThreatModel,
        plan: &PlanDecision,
        state: &CcgState,
    ) -> Result<Self> {
        let base = state.base_cost;
        let reserve_dispatch = plan.reserve_dispatch_cost(net);
        let firewall = threat.firewall_cost * plan.firewall.iter().filter(|&&z| z).count() as f64;
        Ok(SummaryRecord {
            case: case.into(),
            secured_buses: plan.secured_bus_ids(net),
            total_pct: crate::ccg::normalize_costs(state.upper_bound, base)?,
            reserve_dispatch_pct: crate::ccg::normalize_costs(reserve_dispatch, base)?,
            firewall_pct: crate::ccg::normalize_costs(firewall, base)?,
            expected_pct: crate::ccg::normalize_costs(state.incumbent_expected, base)?,
            total_mu: state.upper_bound,
            base_mu: base,
            first_stage_mu: state.incumbent_first_stage,
            expected_mu: state.incumbent_expected,
            iterations: state.iteration,
            converged: state.converged,
            gap: state.gap,
        })
    }
}

/// Rounds half-even to two decimals, the rendering rule for every table.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round_ties_even() / 100.0
}

/// Compacts sorted bus ids into the `1 - 10, 12 - 23` style of the tables.
pub fn compact_ids(ids: &[u32]) -> String {
    if ids.is_empty() {
        return "-".to_string();
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut parts: Vec<String> = Vec::new();
    let mut run_start = sorted[0];
    let mut prev = sorted[0];
    for &id in &sorted[1..] {
        if id == prev + 1 {
            prev = id;
            continue;
        }
        parts.push(render_run(run_start, prev));
        run_start = id;
        prev = id;
    }
    parts.push(render_run(run_start, prev));
    parts.join(",")
}

fn render_run(start: u32, end: u32) -> String {
    if start == end {
        format!("{start}")
    } else {
        format!("{start}-{end}")
    }
}

/// Human rendering of the solution overview.
pub fn render_summary(summary: &SummaryRecord) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "case {}", summary.case);
    let _ = writeln!(
        out,
        "  secured buses:     {}",
        compact_ids(&summary.secured_buses)
    );
    let _ = writeln!(
        out,
        "  total cost:        {:.2} % of base",
        round2(summary.total_pct)
    );
    let _ = writeln!(
        out,
        "  reserve & dispatch:{:.2} %",
        round2(summary.reserve_dispatch_pct)
    );
    let _ = writeln!(
        out,
        "  firewall updates:  {:.2} %",
        round2(summary.firewall_pct)
    );
    let _ = writeln!(
        out,
        "  expected impact:   {:.2} %",
        round2(summary.expected_pct)
    );
    let _ = writeln!(
        out,
        "  base cost:         {:.2} mu; iterations {}; gap {:.3e}{}",
        summary.base_mu,
        summary.iterations,
        summary.gap,
        if summary.converged {
            ""
        } else {
            "; GAP NOT CLOSED"
        }
    );
    out
}

/// Human rendering of the per-iteration trace.
pub fn render_trace(rows: &[TraceRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<5} {:<24} {:<40} {:>10} {:>10}",
        "iter", "secured", "attacked (per attacker)", "r&d %", "total %"
    );
    for row in rows {
        let attacked = row
            .attacked_buses
            .iter()
            .map(|a| format!("{}:{}", a.attacker_id, compact_ids(&a.buses)))
            .collect::<Vec<_>>()
            .join("  ");
        let _ = writeln!(
            out,
            "{:<5} {:<24} {:<40} {:>10.2} {:>10.2}",
            row.iteration,
            compact_ids(&row.secured_buses),
            attacked,
            round2(row.reserve_dispatch_pct),
            round2(row.total_pct),
        );
    }
    out
}

/// Writes the machine records: summary.json, trace.jsonl (one record per
/// iteration), timing.json, and the incumbent plan.
pub fn write_run_artifacts(
    out_dir: &Path,
    summary: &SummaryRecord,
    state: &CcgState,
    plan: &PlanDecision,
    net: &Network,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let summary_json =
        serde_json::to_string_pretty(summary).expect("summary serialization cannot fail");
    std::fs::write(out_dir.join("summary.json"), summary_json + "\n")?;

    let mut trace = String::new();
    for row in &state.trace {
        trace.push_str(&serde_json::to_string(row).expect("trace serialization cannot fail"));
        trace.push('\n');
    }
    std::fs::write(out_dir.join("trace.jsonl"), trace)?;

    let timing_json =
        serde_json::to_string_pretty(&state.timing).expect("timing serialization cannot fail");
    std::fs::write(out_dir.join("timing.json"), timing_json + "\n")?;

    std::fs::write(out_dir.join("plan.toml"), render_plan(plan, net))?;
    Ok(())
}

/// Plan file consumed by the assessment command: firewalled bus ids plus
/// per-generator dispatch and reserve.
pub fn render_plan(plan: &PlanDecision, net: &Network) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "secured_buses = {:?}", plan.secured_bus_ids(net));
    let _ = writeln!(out);
    for (g, def) in net.generators().iter().enumerate() {
        let _ = writeln!(out, "[[generator]]");
        let _ = writeln!(out, "id = {}", def.id);
        let _ = writeln!(out, "dispatch = {}", plan.dispatch[g]);
        let _ = writeln!(out, "reserve = {}", plan.reserve[g]);
        let _ = writeln!(out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compaction_matches_table_style() {
        let ids: Vec<u32> = (1..=10).chain(12..=23).collect();
        assert_eq!(compact_ids(&ids), "1-10,12-23");
        assert_eq!(compact_ids(&[15, 18, 23]), "15,18,23");
        assert_eq!(compact_ids(&[]), "-");
        assert_eq!(compact_ids(&[7]), "7");
    }

    #[test]
    fn rounding_is_half_even() {
        assert_eq!(round2(100.285), 100.28);
        assert_eq!(round2(100.295), 100.3);
        assert_eq!(round2(0.125), 0.12);
        assert_eq!(round2(0.135), 0.14);
    }
}
