//! Column-and-constraint generation loop: alternate the master problem over
//! the pooled vectors with one worst-case subproblem per attacker, tracking
//! a nondecreasing lower bound from the master and a nonincreasing upper
//! bound from the incumbent plan's verified expected cost.

use std::time::Instant;

use rayon::prelude::*;

use serde::Serialize;

use crate::attacksub::{build_subproblem, solve_subproblem, verify_attack, AttackVector};
use crate::error::{Error, Result};
use crate::linmodel::{Backend, SolveParams};
use crate::master::{
    build_master, master_solution_violations, solve_master, MasterSolution, ScenarioPool,
};
use crate::netdata::Network;
use crate::powerflow::{solve_base_opf, BigMPolicy};
use crate::threat::{AlgorithmOptions, Capability, ThreatModel};

/// One iteration of the loop, in the shape of the published trace tables:
/// secured buses, the attack each attacker answered with, and costs as
/// percentages of the base-case dispatch cost.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iteration: u32,
    pub secured_buses: Vec<u32>,
    pub attacked_buses: Vec<AttackRecord>,
    pub reserve_dispatch_pct: f64,
    pub total_pct: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackRecord {
    pub attacker_id: String,
    pub capability: Capability,
    pub buses: Vec<u32>,
    pub impact: f64,
}

/// Wall-clock breakdown of a run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub master_seconds: f64,
    pub basic_subproblem_seconds: f64,
    pub advanced_subproblem_seconds: f64,
}

/// Loop state published after every iteration and returned at the end.
#[derive(Debug)]
pub struct CcgState {
    pub iteration: u32,
    pub pools: ScenarioPool,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub incumbent_first_stage: f64,
    pub incumbent_expected: f64,
    pub incumbent_impacts: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
    pub gap: f64,
    pub base_cost: f64,
    pub duplicate_proposals: u32,
    pub timing: Timing,
    pub warnings: Vec<String>,
}

/// Rescales a cost to percent of the base-case dispatch cost.
pub fn normalize_costs(raw: f64, base: f64) -> Result<f64> {
    if base <= 0.0 {
        return Err(Error::Config(format!(
            "cost normalization needs a positive base, got {base}"
        )));
    }
    Ok(100.0 * raw / base)
}

/// Runs the generation loop to the configured tolerance.
///
/// Returns the incumbent solution (the plan achieving the final upper bound)
/// and the loop state. `state.converged` is false when the iteration cap was
/// reached with the gap still open; a stall with an open gap is an error
/// naming the suspect policy.
pub fn run_ccg(
    backend: &dyn Backend,
    net: &Network,
    threat: &ThreatModel,
    options: &AlgorithmOptions,
) -> Result<(MasterSolution, CcgState)> {
    run_ccg_with_observer(backend, net, threat, options, |_| {})
}

/// Like [`run_ccg`], invoking the observer with each trace row as the
/// iteration completes, so run logs can be written incrementally.
pub fn run_ccg_with_observer(
    backend: &dyn Backend,
    net: &Network,
    threat: &ThreatModel,
    options: &AlgorithmOptions,
    mut observe: impl FnMut(&TraceRow),
) -> Result<(MasterSolution, CcgState)> {
    threat.validate_against(net)?;
    if options.tolerance <= 0.0 {
        return Err(Error::Config(format!(
            "convergence tolerance must be positive, got {}",
            options.tolerance
        )));
    }
    let policy = BigMPolicy::from_algorithm(options);
    let params = SolveParams::from_algorithm(options);
    let run_start = Instant::now();

    // Base-case dispatch cost, the normalization constant for all reports.
    let no_threat = ThreatModel {
        attackers: vec![],
        ..threat.clone()
    };
    let (_, base_cost) = solve_base_opf(backend, net, &no_threat, &policy, &params)?;

    let mut state = CcgState {
        iteration: 0,
        pools: ScenarioPool::new(threat.attackers.len()),
        lower_bound: f64::NEG_INFINITY,
        upper_bound: f64::INFINITY,
        incumbent_first_stage: f64::NAN,
        incumbent_expected: f64::NAN,
        incumbent_impacts: vec![f64::NAN; threat.attackers.len()],
        trace: Vec::new(),
        converged: false,
        gap: f64::INFINITY,
        base_cost,
        duplicate_proposals: 0,
        timing: Timing::default(),
        warnings: Vec::new(),
    };
    let mut incumbent: Option<MasterSolution> = None;

    for k in 1..=options.max_iterations {
        state.iteration = k;

        let t_master = Instant::now();
        let (master_model, master_handles) =
            build_master(net, threat, &state.pools, &policy, options)?;
        if let Some(dir) = &options.dump_models {
            dump_model(dir, &format!("master_{k:03}"), &master_model)?;
        }
        let master_sol = solve_master(backend, &master_model, &master_handles, net, &params)?;
        state.timing.master_seconds += t_master.elapsed().as_secs_f64();

        let structural = master_solution_violations(net, threat, &master_sol);
        if !structural.is_empty() {
            return Err(Error::InvalidPlan {
                violations: structural,
            });
        }
        if master_sol.objective < state.lower_bound - 1e-7 * (1.0 + state.lower_bound.abs()) {
            state.warnings.push(format!(
                "iteration {k}: master objective {} fell below the previous lower bound {}",
                master_sol.objective, state.lower_bound
            ));
        }
        state.lower_bound = state.lower_bound.max(master_sol.objective);

        // One worst-case subproblem per attacker against the new plan; the
        // solves are independent and run concurrently, merged in attacker
        // order.
        let plan = &master_sol.plan;
        let sub_outcomes: Vec<(f64, f64, AttackVector, Vec<String>)> = threat
            .attackers
            .par_iter()
            .map(|attacker| {
                let t_sub = Instant::now();
                let (sub_model, sub_handles) =
                    build_subproblem(net, threat, attacker, plan, &policy, options)?;
                if let Some(dir) = &options.dump_models {
                    dump_model(
                        dir,
                        &format!("subproblem_{k:03}_{}", attacker.id),
                        &sub_model,
                    )?;
                }
                let sub = solve_subproblem(backend, &sub_model, &sub_handles, &params)?;

                let vector_violations = sub.vector.violations(net, attacker, plan);
                if !vector_violations.is_empty() {
                    return Err(Error::InvalidPlan {
                        violations: vector_violations,
                    });
                }
                // Independent check on strong duality: the plain operator LP
                // must reproduce the claimed impact.
                let (verified, response) =
                    verify_attack(backend, net, threat, plan, &sub.vector, options)?;
                if (verified - sub.impact).abs() > 1e-6 * (1.0 + sub.impact.abs()) {
                    return Err(Error::DualityGap {
                        attacker: attacker.id.clone(),
                        primal: sub.impact,
                        dual: verified,
                        gap: (verified - sub.impact).abs(),
                    });
                }
                let balance = response_violations(net, threat, plan, &sub.vector, &response);
                if !balance.is_empty() {
                    return Err(Error::InvalidPlan {
                        violations: balance,
                    });
                }
                let branch_on: Vec<bool> = sub.vector.branch_cut.iter().map(|&c| !c).collect();
                let span_warnings = crate::powerflow::theta_span_warnings(
                    net,
                    &response.angle,
                    &branch_on,
                    &policy,
                );
                Ok((
                    t_sub.elapsed().as_secs_f64(),
                    verified,
                    sub.vector,
                    span_warnings,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut records = Vec::with_capacity(threat.attackers.len());
        let mut impacts = Vec::with_capacity(threat.attackers.len());
        let mut vectors: Vec<AttackVector> = Vec::with_capacity(threat.attackers.len());
        for (attacker, (elapsed, verified, vector, span_warnings)) in
            threat.attackers.iter().zip(sub_outcomes)
        {
            state.warnings.extend(span_warnings);
            match attacker.capability {
                Capability::Basic => state.timing.basic_subproblem_seconds += elapsed,
                Capability::Advanced => state.timing.advanced_subproblem_seconds += elapsed,
            }
            records.push(AttackRecord {
                attacker_id: attacker.id.clone(),
                capability: attacker.capability,
                buses: vector.intruded_bus_ids(net),
                impact: verified,
            });
            impacts.push(verified);
            vectors.push(vector);
        }

        let first_stage = master_sol.plan.first_stage_cost(net, threat);
        let expected: f64 = threat
            .attackers
            .iter()
            .zip(&impacts)
            .map(|(a, impact)| a.probability * impact)
            .sum::<f64>()
            .max(0.0);
        let candidate = first_stage + expected;
        if candidate < state.upper_bound {
            state.upper_bound = candidate;
            state.incumbent_first_stage = first_stage;
            state.incumbent_expected = expected;
            state.incumbent_impacts = impacts.clone();
            incumbent = Some(master_sol.clone());
        }

        state.gap = (state.upper_bound - state.lower_bound) / state.upper_bound.abs().max(1.0);
        let row = TraceRow {
            iteration: k,
            secured_buses: master_sol.plan.secured_bus_ids(net),
            attacked_buses: records,
            reserve_dispatch_pct: normalize_costs(
                master_sol.plan.reserve_dispatch_cost(net),
                base_cost,
            )?,
            total_pct: normalize_costs(master_sol.objective, base_cost)?,
            lower_bound: state.lower_bound,
            upper_bound: state.upper_bound,
            gap: state.gap,
        };
        observe(&row);
        state.trace.push(row);

        if state.gap <= options.tolerance {
            state.converged = true;
            break;
        }

        let mut grew = false;
        for (i, vector) in vectors.into_iter().enumerate() {
            if state.pools.push(i, vector) {
                grew = true;
            } else {
                state.duplicate_proposals += 1;
            }
        }
        if !grew {
            // Every attacker re-proposed a pooled vector while the gap is
            // open: the master and subproblem disagree about some pooled
            // scenario's cost, which points at the big-M or dual policy.
            if threat.attackers.is_empty() {
                state.converged = true;
                break;
            }
            return Err(Error::CcgStalled {
                iteration: k,
                gap: state.gap,
            });
        }
    }

    state.timing.total_seconds = run_start.elapsed().as_secs_f64();
    let incumbent = incumbent.ok_or_else(|| Error::Config("no iterations were run".into()))?;
    Ok((incumbent, state))
}

fn dump_model(dir: &str, name: &str, model: &crate::linmodel::Model) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        std::path::Path::new(dir).join(format!("{name}.lp")),
        crate::linmodel::write_lp(model),
    )?;
    Ok(())
}

/// Physical consistency of one operator response: nodal balance, flow
/// definitions on surviving branches, zero flow on cut branches, and the
/// redispatch caps. Used on every incumbent.
pub fn response_violations(
    net: &Network,
    threat: &ThreatModel,
    plan: &crate::powerflow::PlanDecision,
    vector: &AttackVector,
    response: &crate::attacksub::OperatorResponse,
) -> Vec<String> {
    let mut out = Vec::new();
    let dt = threat.delta_t;
    let scale = 1e-5;
    let gen_cut = vector.gen_cut(net);
    for (g, def) in net.generators().iter().enumerate() {
        let cap = if gen_cut[g] {
            0.0
        } else {
            plan.reserve[g] * dt
        };
        if response.up[g] > cap + scale * (1.0 + cap) {
            out.push(format!(
                "generator {}: deployed reserve {} above cap {cap}",
                def.id, response.up[g]
            ));
        }
        if response.dp[g] > plan.dispatch[g] + scale * (1.0 + plan.dispatch[g]) {
            out.push(format!(
                "generator {}: downward redispatch above dispatch",
                def.id
            ));
        }
    }
    for (t, branch) in net.branches().iter().enumerate() {
        if vector.branch_cut[t] {
            if response.flow[t].abs() > scale * (1.0 + branch.capacity) {
                out.push(format!("branch {}: flow on a cut branch", branch.id));
            }
        } else {
            let dc = (response.angle[net.branch_from_pos(t)]
                - response.angle[net.branch_to_pos(t)])
                / branch.reactance;
            if (response.flow[t] - dc).abs() > 1e-3 * (1.0 + response.flow[t].abs()) {
                out.push(format!(
                    "branch {}: flow {} breaks the DC definition {}",
                    branch.id, response.flow[t], dc
                ));
            }
        }
    }
    let mut total_injection = 0.0;
    let mut total_served = 0.0;
    for (n, bus) in net.buses().iter().enumerate() {
        let mut balance = -(bus.demand * dt - response.shed[n]);
        total_served += bus.demand * dt - response.shed[n];
        for &g in net.gens_at(n) {
            let alive = if gen_cut[g] { 0.0 } else { plan.dispatch[g] };
            balance += alive + response.up[g] - response.dp[g];
            total_injection += alive + response.up[g] - response.dp[g];
        }
        for &t in net.branches_at(n) {
            let tau = if net.branch_from_pos(t) == n {
                1.0
            } else {
                -1.0
            };
            balance -= tau * response.flow[t] * dt;
        }
        if balance.abs() > 1e-3 * (1.0 + bus.demand) {
            out.push(format!(
                "bus {}: post-attack balance off by {balance}",
                bus.id
            ));
        }
    }
    // Lossless network: total injection covers exactly the served demand.
    if (total_injection - total_served).abs() > 1e-3 * (1.0 + total_served) {
        out.push(format!(
            "lossless balance broken: injection {total_injection} vs served {total_served}"
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::HighsBackend;
    use crate::netdata::{Branch, Bus, Generator};
    use crate::threat::Attacker;

    fn two_bus_two_gen() -> Network {
        Network::new(
            vec![
                Bus { id: 1, demand: 0.0 },
                Bus {
                    id: 2,
                    demand: 100.0,
                },
            ],
            vec![Branch {
                id: 1,
                from_bus: 1,
                to_bus: 2,
                reactance: 0.1,
                capacity: 200.0,
            }],
            vec![
                Generator {
                    id: 1,
                    bus: 1,
                    capacity: 150.0,
                    dispatch_cost: 10.0,
                    reserve_cost: 2.5,
                    redispatch_cost: 10.0,
                },
                Generator {
                    id: 2,
                    bus: 2,
                    capacity: 120.0,
                    dispatch_cost: 30.0,
                    reserve_cost: 7.5,
                    redispatch_cost: 30.0,
                },
            ],
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn no_attackers_converges_immediately() {
        let net = two_bus_two_gen();
        let threat = ThreatModel {
            attackers: vec![],
            planner_budget: 2,
            firewall_cost: 5.55,
            voll: 5000.0,
            delta_t: 1.0,
        };
        let options = AlgorithmOptions::default();
        let backend = HighsBackend::new();
        let (solution, state) = run_ccg(&backend, &net, &threat, &options).unwrap();
        assert!(state.converged);
        assert_eq!(state.iteration, 1);
        assert!((state.upper_bound - 1000.0).abs() < 1e-6);
        assert!((state.incumbent_expected).abs() < 1e-9);
        assert!(!solution.plan.firewall.iter().any(|&z| z));
    }

    #[test]
    fn converges_with_bounds_discipline() {
        let net = two_bus_two_gen();
        let threat = ThreatModel {
            attackers: vec![
                Attacker {
                    id: "bsc".into(),
                    capability: Capability::Basic,
                    budget: 1,
                    probability: 0.005,
                },
                Attacker {
                    id: "adv".into(),
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
        let options = AlgorithmOptions::default();
        let backend = HighsBackend::new();
        let (solution, state) = run_ccg(&backend, &net, &threat, &options).unwrap();
        assert!(
            state.converged,
            "gap {} after {} iters",
            state.gap, state.iteration
        );
        assert!(state.gap <= options.tolerance);

        // Bounds discipline along the trace.
        let mut last_lb = f64::NEG_INFINITY;
        let mut last_ub = f64::INFINITY;
        for row in &state.trace {
            assert!(row.lower_bound >= last_lb - 1e-9);
            assert!(row.upper_bound <= last_ub + 1e-9);
            assert!(row.lower_bound <= row.upper_bound + 1e-6 * row.upper_bound.abs().max(1.0));
            last_lb = row.lower_bound;
            last_ub = row.upper_bound;
        }
        // Pool growth is at most one vector per attacker per iteration.
        assert!(state.pools.total_vectors() <= 2 * state.trace.len());
        assert!(master_solution_violations(&net, &threat, &solution).is_empty());
    }

    #[test]
    fn normalization_guards_base() {
        assert!(normalize_costs(1.0, 0.0).is_err());
        assert_eq!(normalize_costs(50.0, 50.0).unwrap(), 100.0);
        assert_eq!(normalize_costs(0.0, 50.0).unwrap(), 0.0);
    }
}
