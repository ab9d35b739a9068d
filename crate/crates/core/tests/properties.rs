//! Property tests for the structural invariants: incidence structure,
//! native-format round-trips, probability scaling of the expectation term,
//! angle-shift invariance of the flow model, and backend agreement.

use proptest::prelude::*;

use palisade::attacksub::{verify_attack, AttackVector};
use palisade::ccg::run_ccg;
use palisade::linmodel::{FallbackBackend, HighsBackend, SolveParams};
use palisade::netdata::{
    emit_network_native, incidence, parse_network_native, Branch, Bus, Generator, Network,
};
use palisade::oracle::ToyFixture;
use palisade::powerflow::{solve_base_opf, BigMPolicy};
use palisade::threat::{AlgorithmOptions, Attacker, Capability, ThreatModel};

/// A random small connected network: a bus chain with extra random chords.
fn arb_network() -> impl Strategy<Value = Network> {
    (2usize..6, any::<u64>()).prop_map(|(nb, seed)| {
        let mut state = seed;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        let buses: Vec<Bus> = (0..nb)
            .map(|k| Bus {
                id: k as u32 + 1,
                demand: (next() * 80.0 * 4.0).round() / 4.0,
            })
            .collect();
        let mut branches = Vec::new();
        for k in 1..nb {
            branches.push(Branch {
                id: branches.len() as u32 + 1,
                from_bus: k as u32,
                to_bus: k as u32 + 1,
                reactance: 0.05 + (next() * 0.2 * 1000.0).round() / 1000.0,
                capacity: 150.0 + (next() * 100.0).round(),
            });
        }
        if nb > 2 && next() > 0.5 {
            branches.push(Branch {
                id: branches.len() as u32 + 1,
                from_bus: 1,
                to_bus: nb as u32,
                reactance: 0.05 + (next() * 0.2 * 1000.0).round() / 1000.0,
                capacity: 150.0 + (next() * 100.0).round(),
            });
        }
        let total: f64 = buses.iter().map(|b| b.demand).sum();
        let generators = vec![
            Generator {
                id: 1,
                bus: 1,
                capacity: (total * 1.2).max(10.0),
                dispatch_cost: 10.0 + (next() * 30.0 * 100.0).round() / 100.0,
                reserve_cost: 2.5,
                redispatch_cost: 12.0,
            },
            Generator {
                id: 2,
                bus: nb as u32,
                capacity: (total * 0.8).max(10.0),
                dispatch_cost: 10.0 + (next() * 30.0 * 100.0).round() / 100.0,
                reserve_cost: 2.5,
                redispatch_cost: 12.0,
            },
        ];
        Network::new(buses, branches, generators, 100.0).expect("generated network is valid")
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn incidence_structure_holds(net in arb_network()) {
        let (tau, gamma) = incidence(&net);
        for row in &tau {
            prop_assert_eq!(row.iter().sum::<f64>(), 0.0);
            prop_assert_eq!(row.iter().map(|v| v.abs()).sum::<f64>(), 2.0);
        }
        for row in &gamma {
            prop_assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn native_round_trip_is_identity(net in arb_network()) {
        let reparsed = parse_network_native(&emit_network_native(&net)).unwrap();
        prop_assert_eq!(&net, &reparsed);
        // And once more: emit of the reparse is byte-identical.
        prop_assert_eq!(emit_network_native(&net), emit_network_native(&reparsed));
    }
}

#[test]
fn probability_scaling_is_linear() {
    // At a fixed plan and fixed attack vectors, scaling every attacker
    // probability by some factor scales the expected second-stage term by
    // exactly that factor.
    let backend = HighsBackend::new();
    let options = AlgorithmOptions::default();
    let fixture = &ToyFixture::builtin()[2];
    let net = &fixture.net;
    let attackers = vec![
        Attacker {
            id: "b".into(),
            capability: Capability::Basic,
            budget: 1,
            probability: 0.02,
        },
        Attacker {
            id: "a".into(),
            capability: Capability::Advanced,
            budget: 1,
            probability: 0.03,
        },
    ];
    let threat = ThreatModel {
        attackers: attackers.clone(),
        planner_budget: 0,
        firewall_cost: 5.55,
        voll: 5000.0,
        delta_t: 1.0,
    };
    let no_threat = ThreatModel {
        attackers: vec![],
        ..threat.clone()
    };
    let (plan, _) = solve_base_opf(
        &backend,
        net,
        &no_threat,
        &BigMPolicy::from_algorithm(&options),
        &SolveParams::from_algorithm(&options),
    )
    .unwrap();

    // Fixed vectors: attack bus 1 / bus 4 with all incident branches cut.
    let mut vectors = Vec::new();
    for bus in [0usize, 3usize] {
        let mut vector = AttackVector::empty(net);
        vector.intruded[bus] = true;
        for &t in net.branches_at(bus) {
            vector.branch_cut[t] = true;
        }
        vectors.push(vector);
    }
    let impacts: Vec<f64> = vectors
        .iter()
        .map(|v| {
            verify_attack(&backend, net, &threat, &plan, v, &options)
                .unwrap()
                .0
        })
        .collect();
    let expectation =
        |probs: &[f64]| -> f64 { probs.iter().zip(&impacts).map(|(p, i)| p * i).sum() };
    let base = expectation(&[0.02, 0.03]);
    assert!(base > 0.0);
    for lambda in [0.5, 0.25, 0.1] {
        let scaled = expectation(&[0.02 * lambda, 0.03 * lambda]);
        assert!((scaled - lambda * base).abs() < 1e-9 * base);
    }
}

#[test]
fn reference_bus_choice_does_not_move_the_objective() {
    // The base-case optimum is invariant to which bus anchors the angles;
    // solving with demands relabeled so a different bus carries the lowest
    // id gives the same cost.
    let backend = HighsBackend::new();
    let options = AlgorithmOptions::default();
    let fixture = &ToyFixture::builtin()[2];
    let net = &fixture.net;
    let threat = ThreatModel {
        attackers: vec![],
        planner_budget: 0,
        firewall_cost: 5.55,
        voll: 5000.0,
        delta_t: 1.0,
    };
    let policy = BigMPolicy::from_algorithm(&options);
    let params = SolveParams::from_algorithm(&options);
    let (_, original) = solve_base_opf(&backend, net, &threat, &policy, &params).unwrap();

    // Renumber buses so the old bus 3 becomes bus 0's successor order-wise.
    let remap = |id: u32| {
        if id == 1 {
            3
        } else if id == 3 {
            1
        } else {
            id
        }
    };
    let renumbered = Network::new(
        net.buses()
            .iter()
            .map(|b| Bus {
                id: remap(b.id),
                demand: b.demand,
            })
            .collect(),
        net.branches()
            .iter()
            .map(|t| Branch {
                id: t.id,
                from_bus: remap(t.from_bus),
                to_bus: remap(t.to_bus),
                reactance: t.reactance,
                capacity: t.capacity,
            })
            .collect(),
        net.generators()
            .iter()
            .map(|g| Generator {
                id: g.id,
                bus: remap(g.bus),
                ..g.clone()
            })
            .collect(),
        net.base_mva(),
    )
    .unwrap();
    let (_, relabeled) = solve_base_opf(&backend, &renumbered, &threat, &policy, &params).unwrap();
    assert!((original - relabeled).abs() < 1e-7 * (1.0 + original));
}

#[test]
fn fallback_backend_agrees_with_highs_on_a_toy_run() {
    let options = AlgorithmOptions::default();
    let fixture = &ToyFixture::builtin()[0];
    let threat = ThreatModel {
        attackers: vec![
            Attacker {
                id: "b".into(),
                capability: Capability::Basic,
                budget: 1,
                probability: 0.005,
            },
            Attacker {
                id: "a".into(),
                capability: Capability::Advanced,
                budget: 1,
                probability: 0.005,
            },
        ],
        planner_budget: 1,
        firewall_cost: 5.55,
        voll: 5000.0,
        delta_t: 1.0,
    };
    let highs = HighsBackend::new();
    let fallback = FallbackBackend::new();
    let (_, reference) = run_ccg(&highs, &fixture.net, &threat, &options).unwrap();
    let (_, portable) = run_ccg(&fallback, &fixture.net, &threat, &options).unwrap();
    assert!(reference.converged && portable.converged);
    let rel =
        (reference.upper_bound - portable.upper_bound).abs() / (1.0 + reference.upper_bound.abs());
    assert!(
        rel < 1e-6,
        "backends disagree: highs {} vs fallback {}",
        reference.upper_bound,
        portable.upper_bound
    );
}

#[test]
fn switched_branch_with_fixed_on_binary_reproduces_the_equality() {
    // A flow block in switched mode whose status binary is pinned to 1 must
    // price identically to the plain fixed-on equality formulation.
    use palisade::linmodel::{Backend as _, Cmp, LinExpr, Model, Sense};
    use palisade::powerflow::{add_operator_block, BranchMode, DpRule, GenRules, InjRule, UpRule};

    let backend = HighsBackend::new();
    let options = AlgorithmOptions::default();
    let policy = BigMPolicy::from_algorithm(&options);
    let fixture = &ToyFixture::builtin()[2];
    let net = &fixture.net;
    let no_threat = ThreatModel {
        attackers: vec![],
        planner_budget: 0,
        firewall_cost: 5.55,
        voll: 5000.0,
        delta_t: 1.0,
    };
    let (plan, _) = solve_base_opf(
        &backend,
        net,
        &no_threat,
        &policy,
        &SolveParams::from_algorithm(&options),
    )
    .unwrap();
    let rules: Vec<GenRules> = (0..net.num_generators())
        .map(|g| GenRules {
            up: UpRule::Fixed(plan.reserve[g]),
            injection: InjRule::Const(plan.dispatch[g]),
            dp: DpRule::Const(plan.dispatch[g]),
        })
        .collect();

    let solve_with = |modes: Vec<BranchMode>| {
        let mut model = Model::new("variant", Sense::Minimize);
        let block =
            add_operator_block(&mut model, net, 1.0, 5000.0, &rules, &modes, &policy, "x").unwrap();
        model.set_objective(block.cost.clone()).unwrap();
        let result = backend
            .solve(&model, &SolveParams::from_algorithm(&options))
            .unwrap()
            .expect_optimal("variant")
            .unwrap();
        let flows: Vec<f64> = block.flow.iter().map(|&v| result.value(v)).collect();
        (result.objective_value, flows)
    };

    // Fixed-on everywhere.
    let (cost_fixed, flows_fixed) = solve_with(vec![BranchMode::FixedOn; net.num_branches()]);

    // Switched everywhere, with every binary constrained to 1.
    let mut model = Model::new("switched", Sense::Minimize);
    let ons: Vec<_> = (0..net.num_branches())
        .map(|t| model.add_binary(format!("on_{t}")))
        .collect();
    for &v in &ons {
        model
            .add_constraint("pin", LinExpr::term(v, 1.0), Cmp::Ge, 1.0)
            .unwrap();
    }
    let modes: Vec<BranchMode> = ons.iter().map(|&v| BranchMode::SwitchedByVar(v)).collect();
    let block =
        add_operator_block(&mut model, net, 1.0, 5000.0, &rules, &modes, &policy, "sw").unwrap();
    model.set_objective(block.cost.clone()).unwrap();
    let result = backend
        .solve(&model, &SolveParams::from_algorithm(&options))
        .unwrap()
        .expect_optimal("switched")
        .unwrap();
    let flows_switched: Vec<f64> = block.flow.iter().map(|&v| result.value(v)).collect();

    assert!((cost_fixed - result.objective_value).abs() < 1e-6 * (1.0 + cost_fixed.abs()));
    for (t, (a, b)) in flows_fixed.iter().zip(&flows_switched).enumerate() {
        // The base dispatch balances exactly, so the unique flow solution
        // must coincide across the two formulations.
        assert!((a - b).abs() < 1e-5, "branch {t}: {a} vs {b}");
    }
}

#[test]
fn incumbent_upper_bound_survives_fresh_resolves() {
    // Re-solving the subproblems against the returned incumbent plan and
    // re-pricing its vectors through the operator LP reproduces the
    // reported upper bound.
    use palisade::attacksub::worst_attack;

    let backend = HighsBackend::new();
    let options = AlgorithmOptions::default();
    let fixture = &ToyFixture::builtin()[2];
    let threat = ThreatModel {
        attackers: vec![
            Attacker {
                id: "b".into(),
                capability: Capability::Basic,
                budget: 1,
                probability: 0.005,
            },
            Attacker {
                id: "a".into(),
                capability: Capability::Advanced,
                budget: 1,
                probability: 0.005,
            },
        ],
        planner_budget: 2,
        firewall_cost: 5.55,
        voll: 5000.0,
        delta_t: 1.0,
    };
    let (solution, state) = run_ccg(&backend, &fixture.net, &threat, &options).unwrap();
    assert!(state.converged);
    let mut rebuilt = solution.plan.first_stage_cost(&fixture.net, &threat);
    for attacker in &threat.attackers {
        let fresh = worst_attack(
            &backend,
            &fixture.net,
            &threat,
            attacker,
            &solution.plan,
            &options,
        )
        .unwrap();
        let (verified, _) = verify_attack(
            &backend,
            &fixture.net,
            &threat,
            &solution.plan,
            &fresh.vector,
            &options,
        )
        .unwrap();
        rebuilt += attacker.probability * verified;
    }
    let rel = (rebuilt - state.upper_bound).abs() / (1.0 + state.upper_bound.abs());
    assert!(
        rel <= 1e-6,
        "rebuilt {rebuilt} vs reported {}",
        state.upper_bound
    );
}

#[test]
fn free_reserve_and_firewalls_add_no_first_stage_premium() {
    // With zero reserve and firewall prices, the optimal first stage is the
    // plain base-case dispatch and the total is base plus expected impact.
    use palisade::netdata::parse_network_native;
    use palisade::threat::{apply_default_costs, CostConfig};

    let backend = HighsBackend::new();
    let raw = parse_network_native(include_str!("../../../fixtures/toy5_mesh.toml")).unwrap();
    let costs = CostConfig {
        reserve_fraction: 0.0,
        firewall: 0.0,
        ..CostConfig::default()
    };
    let net = apply_default_costs(&raw, &costs).unwrap();
    let threat = ThreatModel {
        attackers: vec![
            Attacker {
                id: "b".into(),
                capability: Capability::Basic,
                budget: 1,
                probability: 0.005,
            },
            Attacker {
                id: "a".into(),
                capability: Capability::Advanced,
                budget: 1,
                probability: 0.005,
            },
        ],
        planner_budget: 2,
        firewall_cost: 0.0,
        voll: 5000.0,
        delta_t: 1.0,
    };
    let options = AlgorithmOptions::default();
    let (sol, state) = run_ccg(&backend, &net, &threat, &options).unwrap();
    let first = sol.plan.first_stage_cost(&net, &threat);
    assert!((first - state.base_cost).abs() < 1e-6 * (1.0 + state.base_cost));
    let composed = state.base_cost + state.incumbent_expected;
    assert!((state.upper_bound - composed).abs() < 1e-6 * (1.0 + composed));
}

#[test]
fn budget_two_subproblem_matches_enumeration() {
    use palisade::attacksub::worst_attack;
    use palisade::oracle::enumerate_worst_attack;

    let backend = HighsBackend::new();
    let options = AlgorithmOptions::default();
    for fixture in &ToyFixture::builtin()[1..] {
        for capability in [Capability::Basic, Capability::Advanced] {
            let attacker = Attacker {
                id: "w2".into(),
                capability,
                budget: 2,
                probability: 0.01,
            };
            let threat = ThreatModel {
                attackers: vec![attacker.clone()],
                planner_budget: 1,
                firewall_cost: 5.55,
                voll: 5000.0,
                delta_t: 1.0,
            };
            let no_threat = ThreatModel {
                attackers: vec![],
                ..threat.clone()
            };
            let (mut plan, _) = solve_base_opf(
                &backend,
                &fixture.net,
                &no_threat,
                &BigMPolicy::from_algorithm(&options),
                &SolveParams::from_algorithm(&options),
            )
            .unwrap();
            // Secure one bus and spread some reserve so both firewall
            // blocking and redispatch interact with the pair budget.
            plan.firewall[0] = true;
            for (g, def) in fixture.net.generators().iter().enumerate() {
                plan.reserve[g] = 0.5 * (def.capacity - plan.dispatch[g]).max(0.0);
            }
            let milp =
                worst_attack(&backend, &fixture.net, &threat, &attacker, &plan, &options).unwrap();
            let (_, brute) = enumerate_worst_attack(
                &backend,
                &fixture.net,
                &threat,
                &attacker,
                &plan,
                &options,
            )
            .unwrap();
            let rel = (milp.impact - brute).abs() / (1.0 + brute.abs());
            assert!(
                rel <= 1e-6,
                "{} {capability:?}: MILP {} vs enumeration {brute}",
                fixture.name,
                milp.impact
            );
        }
    }
}

/// Random small MILPs: knapsack-like rows with mixed continuous variables.
fn arb_milp() -> impl Strategy<Value = palisade::linmodel::Model> {
    use palisade::linmodel::{Cmp, LinExpr, Model, Sense};
    (any::<u64>(), 2usize..6, 1usize..4).prop_map(|(seed, nvars, nrows)| {
        let mut state = seed;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 33) as f64 / (1u64 << 31) as f64
        };
        let mut m = Model::new("random", Sense::Maximize);
        let vars: Vec<_> = (0..nvars)
            .map(|k| {
                if next() > 0.5 {
                    m.add_binary(format!("b{k}"))
                } else {
                    m.add_var(format!("x{k}"), 0.0, 1.0 + (next() * 9.0).round())
                }
            })
            .collect();
        for r in 0..nrows {
            let mut row = LinExpr::new();
            for &v in &vars {
                row.add(v, (next() * 5.0).round());
            }
            let rhs = 1.0 + (next() * 10.0).round();
            m.add_constraint(format!("r{r}"), row, Cmp::Le, rhs).unwrap();
        }
        let mut objective = LinExpr::new();
        for &v in &vars {
            objective.add(v, 1.0 + (next() * 4.0).round());
        }
        m.set_objective(objective).unwrap();
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn backends_agree_on_random_milps(model in arb_milp()) {
        use palisade::linmodel::{Backend as _, SolveStatus};
        let params = SolveParams::default();
        let reference = HighsBackend::new().solve(&model, &params).unwrap();
        let portable = FallbackBackend::new().solve(&model, &params).unwrap();
        prop_assert_eq!(reference.status, portable.status);
        if reference.status == SolveStatus::Optimal {
            let rel = (reference.objective_value - portable.objective_value).abs()
                / (1.0 + reference.objective_value.abs());
            prop_assert!(rel < 1e-7, "highs {} vs fallback {}",
                reference.objective_value, portable.objective_value);
        }
    }
}
