use palisade::ccg::run_ccg;
use palisade::linmodel::HighsBackend;
use palisade::netdata::parse_case;
use palisade::threat::{
    apply_default_costs, AlgorithmOptions, Attacker, Capability, CostConfig, ThreatModel,
};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let case = args.get(1).map(String::as_str).unwrap_or("B");
    let (grid, planner_budget, attackers): (&str, u32, Vec<(&str, Capability, u32, f64)>) =
        match case {
            "A" => ("24", 24, vec![("bsc", Capability::Basic, 2, 0.01)]),
            "B" => ("24", 24, vec![("adv", Capability::Advanced, 2, 0.01)]),
            "C" => (
                "24",
                24,
                vec![
                    ("bsc", Capability::Basic, 2, 0.005),
                    ("adv", Capability::Advanced, 2, 0.005),
                ],
            ),
            "D" => ("24", 3, vec![("bsc", Capability::Basic, 2, 0.01)]),
            "E" => ("24", 3, vec![("adv", Capability::Advanced, 2, 0.01)]),
            "F" => (
                "24",
                3,
                vec![
                    ("bsc", Capability::Basic, 2, 0.005),
                    ("adv", Capability::Advanced, 2, 0.005),
                ],
            ),
            "G" => ("118", 3, vec![("bsc", Capability::Basic, 2, 0.01)]),
            "H" => ("118", 3, vec![("adv", Capability::Advanced, 2, 0.01)]),
            "I" => (
                "118",
                3,
                vec![
                    ("bsc", Capability::Basic, 2, 0.005),
                    ("adv", Capability::Advanced, 2, 0.005),
                ],
            ),
            _ => panic!("unknown case"),
        };
    let path = if grid == "24" {
        "cases/grids/pglib_opf_case24_ieee_rts.m"
    } else {
        "cases/grids/pglib_opf_case118_ieee.m"
    };
    let mut options = AlgorithmOptions::default();
    if let Some(span) = args.get(2) {
        options.theta_span = span.parse().unwrap();
    }
    if let Some(factor) = args.get(3) {
        options.dual_bound_factor = factor.parse().unwrap();
    }
    let raw = parse_case(&std::fs::read_to_string(path).unwrap()).unwrap();
    let costs = CostConfig::default();
    let net = apply_default_costs(&raw, &costs).unwrap();
    let threat = ThreatModel {
        attackers: attackers
            .iter()
            .map(|(id, cap, w, p)| Attacker {
                id: id.to_string(),
                capability: *cap,
                budget: *w,
                probability: *p,
            })
            .collect(),
        planner_budget,
        firewall_cost: costs.firewall,
        voll: costs.voll,
        delta_t: 1.0,
    };
    let backend = HighsBackend::new();
    let t0 = std::time::Instant::now();
    let (solution, state) = run_ccg(&backend, &net, &threat, &options).unwrap();
    let elapsed = t0.elapsed();
    let base = state.base_cost;
    let rd = solution.plan.reserve_dispatch_cost(&net);
    let fw = threat.firewall_cost * solution.plan.firewall.iter().filter(|&&z| z).count() as f64;
    println!(
        "case {case}: total={:.2}% rd={:.2}% fw={:.2}% exp={:.2}% secured={:?} iters={} conv={} time={elapsed:?}",
        100.0 * state.upper_bound / base,
        100.0 * rd / base,
        100.0 * fw / base,
        100.0 * state.incumbent_expected / base,
        solution.plan.secured_bus_ids(&net),
        state.iteration,
        state.converged,
    );
    println!(
        "timing: master={:.1}s basic={:.1}s advanced={:.1}s",
        state.timing.master_seconds,
        state.timing.basic_subproblem_seconds,
        state.timing.advanced_subproblem_seconds
    );
    for w in &state.warnings {
        println!("warning: {w}");
    }
}
