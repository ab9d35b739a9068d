//! Single-level master problem over the pooled attack vectors.
//!
//! The first stage carries dispatch, reserve, and firewall binaries; each
//! pooled vector contributes a full operator block plus an epigraph row on
//! its attacker's expected-impact variable. For basic attackers the pooled
//! intrusions succeed only where the firewall is not updated, so the
//! firewall binaries gate unit survival and branch disconnection inside
//! those blocks; advanced attackers' intrusions succeed unconditionally.

use crate::attacksub::{AttackVector, OperatorResponse};
use crate::error::{Error, Result};
use crate::linmodel::{Backend, Cmp, Model, Sense, SolveParams, VarRef};
use crate::netdata::Network;
use crate::powerflow::{
    add_first_stage, add_operator_block, extract_plan, BaseOpfHandles, BigMPolicy, BranchMode,
    DpRule, GenRules, InjRule, OperatorBlock, PlanDecision, UpRule,
};
use crate::threat::{AlgorithmOptions, Capability, ThreatModel};

/// Per-attacker pools of worst-case vectors, deduplicated on the
/// (intrusion, branch-status) pattern.
#[derive(Debug, Clone, Default)]
pub struct ScenarioPool {
    vectors: Vec<Vec<AttackVector>>,
}

impl ScenarioPool {
    pub fn new(num_attackers: usize) -> Self {
        ScenarioPool {
            vectors: vec![Vec::new(); num_attackers],
        }
    }

    /// Appends a vector to one attacker's pool unless an identical pattern
    /// is already present. Returns whether the pool grew.
    pub fn push(&mut self, attacker: usize, vector: AttackVector) -> bool {
        let pool = &mut self.vectors[attacker];
        if pool.contains(&vector) {
            false
        } else {
            pool.push(vector);
            true
        }
    }

    pub fn for_attacker(&self, attacker: usize) -> &[AttackVector] {
        &self.vectors[attacker]
    }

    pub fn num_attackers(&self) -> usize {
        self.vectors.len()
    }

    pub fn total_vectors(&self) -> usize {
        self.vectors.iter().map(Vec::len).sum()
    }
}

/// Handles into a built master problem.
pub struct MasterHandles {
    pub base: BaseOpfHandles,
    pub expected_impact: Vec<VarRef>,
    blocks: Vec<Vec<OperatorBlock>>,
}

/// Master optimum: the plan, the per-attacker epigraph values, and every
/// pooled scenario's operator response.
#[derive(Debug, Clone)]
pub struct MasterSolution {
    pub plan: PlanDecision,
    pub expected_impact: Vec<f64>,
    pub objective: f64,
    pub scenario_costs: Vec<Vec<f64>>,
    pub scenario_responses: Vec<Vec<OperatorResponse>>,
}

/// Builds the master MILP for the current pools.
pub fn build_master(
    net: &Network,
    threat: &ThreatModel,
    pool: &ScenarioPool,
    policy: &BigMPolicy,
    options: &AlgorithmOptions,
) -> Result<(Model, MasterHandles)> {
    if pool.num_attackers() != threat.attackers.len() {
        return Err(Error::Config(format!(
            "pool covers {} attackers, threat model has {}",
            pool.num_attackers(),
            threat.attackers.len()
        )));
    }
    let mut model = Model::new("master", Sense::Minimize);
    let (base, first_stage_cost) = add_first_stage(&mut model, net, threat, policy)?;

    let mut objective = first_stage_cost;
    let mut expected_impact = Vec::with_capacity(threat.attackers.len());
    let mut blocks = Vec::with_capacity(threat.attackers.len());

    for (i, attacker) in threat.attackers.iter().enumerate() {
        let eta = model.add_var(format!("impact_{}", attacker.id), 0.0, f64::INFINITY);
        expected_impact.push(eta);
        objective.add(eta, attacker.probability);

        let mut attacker_blocks = Vec::new();
        for (s, vector) in pool.for_attacker(i).iter().enumerate() {
            if vector.intruded.len() != net.num_buses()
                || vector.branch_cut.len() != net.num_branches()
            {
                return Err(Error::Config(format!(
                    "pooled vector {s} of attacker {} does not match the network",
                    attacker.id
                )));
            }
            let label = format!("{}_{s}", attacker.id);
            let block = add_scenario_block(
                &mut model,
                net,
                threat,
                attacker.capability,
                vector,
                &base,
                policy,
                options,
                &label,
            )?;
            // Epigraph: the attacker variable dominates this scenario's cost.
            let mut row = block.cost.clone();
            row.add(eta, -1.0);
            model.add_constraint(format!("epigraph_{label}"), row, Cmp::Le, 0.0)?;
            attacker_blocks.push(block);
        }
        blocks.push(attacker_blocks);
    }

    model.set_objective(objective)?;
    Ok((
        model,
        MasterHandles {
            base,
            expected_impact,
            blocks,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
fn add_scenario_block(
    model: &mut Model,
    net: &Network,
    threat: &ThreatModel,
    capability: Capability,
    vector: &AttackVector,
    base: &BaseOpfHandles,
    policy: &BigMPolicy,
    options: &AlgorithmOptions,
    label: &str,
) -> Result<OperatorBlock> {
    let dt = threat.delta_t;
    let rules: Vec<GenRules> = net
        .generators()
        .iter()
        .enumerate()
        .map(|(g, def)| {
            let bus = net.gen_bus_pos(g);
            let attacked = vector.intruded[bus];
            match (capability, attacked) {
                (_, false) => GenRules {
                    up: UpRule::Var(base.reserve[g]),
                    injection: InjRule::Var(base.dispatch[g]),
                    dp: DpRule::Var(base.dispatch[g]),
                },
                (Capability::Advanced, true) => GenRules {
                    up: UpRule::Fixed(0.0),
                    injection: InjRule::Const(0.0),
                    dp: if options.tighten_dp {
                        DpRule::Const(0.0)
                    } else {
                        DpRule::Var(base.dispatch[g])
                    },
                },
                (Capability::Basic, true) => GenRules {
                    // Intrusion succeeds iff the firewall was not updated.
                    up: UpRule::VarGated {
                        reserve: base.reserve[g],
                        gate: base.firewall[bus],
                        cap: def.capacity * dt,
                    },
                    injection: InjRule::VarGated {
                        dispatch: base.dispatch[g],
                        gate: base.firewall[bus],
                        cap: def.capacity * dt,
                    },
                    dp: if options.tighten_dp {
                        DpRule::InjectionAux
                    } else {
                        DpRule::Var(base.dispatch[g])
                    },
                },
            }
        })
        .collect();

    let modes: Vec<BranchMode> = (0..net.num_branches())
        .map(|t| {
            if !vector.branch_cut[t] {
                return BranchMode::FixedOn;
            }
            match capability {
                Capability::Advanced => BranchMode::FixedOff,
                Capability::Basic => {
                    let guard = |n: usize| vector.intruded[n].then(|| base.firewall[n]);
                    BranchMode::GuardedByEndpoints {
                        sending: guard(net.branch_from_pos(t)),
                        receiving: guard(net.branch_to_pos(t)),
                    }
                }
            }
        })
        .collect();

    add_operator_block(model, net, dt, threat.voll, &rules, &modes, policy, label)
}

/// Solves a built master and extracts the solution.
pub fn solve_master(
    backend: &dyn Backend,
    model: &Model,
    handles: &MasterHandles,
    net: &Network,
    params: &SolveParams,
) -> Result<MasterSolution> {
    let result = backend
        .solve(model, params)?
        .expect_optimal("master problem")?;
    let plan = extract_plan(net, &handles.base, &result);
    let expected_impact = handles
        .expected_impact
        .iter()
        .map(|&v| result.value(v))
        .collect();
    let scenario_costs = handles
        .blocks
        .iter()
        .map(|bs| bs.iter().map(|b| b.cost.eval(&result.primal)).collect())
        .collect();
    let scenario_responses = handles
        .blocks
        .iter()
        .map(|bs| {
            bs.iter()
                .map(|b| OperatorResponse::extract(b, &result))
                .collect()
        })
        .collect();
    Ok(MasterSolution {
        plan,
        expected_impact,
        objective: result.objective_value,
        scenario_costs,
        scenario_responses,
    })
}

/// Structural checks on a master optimum; returns violations.
pub fn master_solution_violations(
    net: &Network,
    threat: &ThreatModel,
    solution: &MasterSolution,
) -> Vec<String> {
    let mut out = crate::powerflow::plan_violations(net, threat, &solution.plan);
    for (i, attacker) in threat.attackers.iter().enumerate() {
        let eta = solution.expected_impact[i];
        if eta < -1e-7 {
            out.push(format!("attacker {}: negative epigraph value", attacker.id));
        }
        let mut worst = 0.0_f64;
        for (s, &cost) in solution.scenario_costs[i].iter().enumerate() {
            worst = worst.max(cost);
            if cost > eta + 1e-5 * (1.0 + eta.abs()) {
                out.push(format!(
                    "attacker {}: scenario {s} cost {cost} exceeds epigraph {eta}",
                    attacker.id
                ));
            }
        }
        // With positive probability the epigraph is priced: it rests on the
        // worst pooled scenario, or at its floor of zero.
        if attacker.probability > 0.0 && eta > worst.max(0.0) + 1e-4 * (1.0 + eta.abs()) {
            out.push(format!(
                "attacker {}: epigraph {eta} is slack above the worst pooled cost {worst}",
                attacker.id
            ));
        }
    }
    let first_stage = solution.plan.first_stage_cost(net, threat);
    let expected: f64 = threat
        .attackers
        .iter()
        .zip(&solution.expected_impact)
        .map(|(a, eta)| a.probability * eta)
        .sum();
    let rebuilt = first_stage + expected;
    if (rebuilt - solution.objective).abs() > 1e-5 * (1.0 + solution.objective.abs()) {
        out.push(format!(
            "objective {} differs from first stage {} plus expectation {}",
            solution.objective, first_stage, expected
        ));
    }
    out
}
