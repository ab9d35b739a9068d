//! Structural checks on the shipped benchmark files and case configs:
//! component counts and total demand read from the archives, format
//! round-trips, and the threat parameters of the published cases.

use std::path::{Path, PathBuf};

use palisade::netdata::{emit_network_native, parse_case, parse_network_native};
use palisade::threat::{load_threat_config, Capability};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn read(path: &str) -> String {
    std::fs::read_to_string(repo_root().join(path)).expect("repo file")
}

#[test]
fn rts_24_bus_counts_and_demand() {
    let net = parse_case(&read("cases/grids/pglib_opf_case24_ieee_rts.m")).unwrap();
    assert_eq!(net.num_buses(), 24);
    assert_eq!(net.num_branches(), 38);
    // 32 dispatchable units plus the zero-capacity synchronous condenser,
    // all in service in the archive.
    assert_eq!(net.num_generators(), 33);
    assert_eq!(
        net.generators().iter().filter(|g| g.capacity > 0.0).count(),
        32
    );
    assert_eq!(net.total_demand(), 2850.0);
}

#[test]
fn ieee_118_bus_counts_and_demand() {
    let net = parse_case(&read("cases/grids/pglib_opf_case118_ieee.m")).unwrap();
    assert_eq!(net.num_buses(), 118);
    assert_eq!(net.num_branches(), 186);
    assert_eq!(net.num_generators(), 54);
    assert_eq!(net.total_demand(), 4242.0);
}

#[test]
fn benchmark_round_trips_through_the_native_format() {
    let net = parse_case(&read("cases/grids/pglib_opf_case24_ieee_rts.m")).unwrap();
    let reparsed = parse_network_native(&emit_network_native(&net)).unwrap();
    assert_eq!(net, reparsed);
}

#[test]
fn shipped_case_configs_match_the_published_parameters() {
    // (case, planner budget, [(capability, budget, probability)])
    let expected: [(&str, u32, Vec<(Capability, u32, f64)>); 9] = [
        ("A", 24, vec![(Capability::Basic, 2, 0.01)]),
        ("B", 24, vec![(Capability::Advanced, 2, 0.01)]),
        (
            "C",
            24,
            vec![
                (Capability::Basic, 2, 0.005),
                (Capability::Advanced, 2, 0.005),
            ],
        ),
        ("D", 3, vec![(Capability::Basic, 2, 0.01)]),
        ("E", 3, vec![(Capability::Advanced, 2, 0.01)]),
        (
            "F",
            3,
            vec![
                (Capability::Basic, 2, 0.005),
                (Capability::Advanced, 2, 0.005),
            ],
        ),
        ("G", 3, vec![(Capability::Basic, 2, 0.01)]),
        ("H", 3, vec![(Capability::Advanced, 2, 0.01)]),
        (
            "I",
            3,
            vec![
                (Capability::Basic, 2, 0.005),
                (Capability::Advanced, 2, 0.005),
            ],
        ),
    ];
    for (name, budget, attackers) in expected {
        let config = load_threat_config(&read(&format!("cases/{name}.toml"))).unwrap();
        assert_eq!(config.model.planner_budget, budget, "case {name}");
        assert_eq!(config.model.attackers.len(), attackers.len(), "case {name}");
        for (attacker, (capability, w, p)) in config.model.attackers.iter().zip(&attackers) {
            assert_eq!(attacker.capability, *capability, "case {name}");
            assert_eq!(attacker.budget, *w, "case {name}");
            assert_eq!(attacker.probability, *p, "case {name}");
        }
        assert_eq!(config.costs.voll, 5000.0);
        assert_eq!(config.costs.firewall, 5.55);
        assert_eq!(config.costs.reserve_fraction, 0.25);
        let grid = config.grid.expect("case configs name their grid");
        let system = if matches!(name, "G" | "H" | "I") {
            "118"
        } else {
            "24"
        };
        assert!(grid.path.contains(system), "case {name} grid {}", grid.path);
    }
}
