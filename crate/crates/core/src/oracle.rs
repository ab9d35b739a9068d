//! Brute-force ground truth for small instances: exhaustive enumeration of
//! attack vectors for a fixed plan, and exhaustive enumeration of firewall
//! patterns (with the continuous first stage optimized per pattern) for the
//! full planning problem. Used to certify the MILP subproblem and the
//! generation loop on the shipped toy fixtures.

use rayon::prelude::*;

use crate::attacksub::{verify_attack, AttackVector};
use crate::error::{Error, Result};
use crate::linmodel::{Backend, Cmp, LinExpr, Model, Sense, SolveParams};
use crate::netdata::{parse_network_native, Network};
use crate::powerflow::{
    add_dc_flow_block, add_operator_block, BigMPolicy, BranchMode, DpRule, GenRules, InjRule,
    PlanDecision, UpRule,
};
use crate::threat::{AlgorithmOptions, Attacker, Capability, ThreatModel};

/// A small network with documented parameters, used as enumeration ground
/// truth. Shipped fixtures live under `fixtures/` in the native format.
#[derive(Debug, Clone)]
pub struct ToyFixture {
    pub name: &'static str,
    pub net: Network,
}

impl ToyFixture {
    /// The fixtures shipped with the crate.
    pub fn builtin() -> Vec<ToyFixture> {
        let load = |name: &'static str, text: &str| ToyFixture {
            name,
            net: parse_network_native(text).expect("shipped fixture must parse"),
        };
        vec![
            load(
                "toy2_line",
                include_str!("../../../fixtures/toy2_line.toml"),
            ),
            load(
                "toy4_ring",
                include_str!("../../../fixtures/toy4_ring.toml"),
            ),
            load(
                "toy5_mesh",
                include_str!("../../../fixtures/toy5_mesh.toml"),
            ),
        ]
    }
}

fn subsets_of_size(candidates: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn recurse(
        candidates: &[usize],
        start: usize,
        size: usize,
        current: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for k in start..candidates.len() {
            current.push(candidates[k]);
            recurse(candidates, k + 1, size, current, out);
            current.pop();
        }
    }
    recurse(candidates, 0, size, &mut current, &mut out);
    out
}

/// All vectors an attacker can launch against the given firewall pattern:
/// every admissible bus subset within budget, crossed with every on/off
/// sub-choice of the branches incident to the subset. Disconnecting fewer
/// branches can be better for the attacker in meshed grids, so the branch
/// sub-choices are enumerated rather than assumed.
fn admissible_vectors(
    net: &Network,
    attacker: &Attacker,
    firewall: &[bool],
) -> (Vec<AttackVector>, u128) {
    let candidates: Vec<usize> = (0..net.num_buses())
        .filter(|&n| attacker.capability == Capability::Advanced || !firewall[n])
        .collect();
    let budget = (attacker.budget as usize).min(candidates.len());
    let mut vectors = Vec::new();
    let mut leaves: u128 = 0;
    for size in 0..=budget {
        for subset in subsets_of_size(&candidates, size) {
            let mut cuttable: Vec<usize> = Vec::new();
            for &n in &subset {
                for &t in net.branches_at(n) {
                    if !cuttable.contains(&t) {
                        cuttable.push(t);
                    }
                }
            }
            cuttable.sort_unstable();
            leaves += 1u128 << cuttable.len();
            for pattern in 0..(1u64 << cuttable.len()) {
                let mut vector = AttackVector::empty(net);
                for &n in &subset {
                    vector.intruded[n] = true;
                }
                for (bit, &t) in cuttable.iter().enumerate() {
                    if pattern & (1 << bit) != 0 {
                        vector.branch_cut[t] = true;
                    }
                }
                vectors.push(vector);
            }
        }
    }
    (vectors, leaves)
}

/// Exhaustively finds the attacker's maximal-impact vector against a plan.
/// Ties break to the first vector in enumeration order: subsets ordered by
/// size then lexicographically, branch patterns by increasing on/off mask,
/// so the lexicographically smallest choice wins.
pub fn enumerate_worst_attack(
    backend: &dyn Backend,
    net: &Network,
    threat: &ThreatModel,
    attacker: &Attacker,
    plan: &PlanDecision,
    options: &AlgorithmOptions,
) -> Result<(AttackVector, f64)> {
    let (vectors, leaves) = admissible_vectors(net, attacker, &plan.firewall);
    if leaves > options.enumeration_cap as u128 {
        return Err(Error::EnumerationCap {
            required: leaves,
            cap: options.enumeration_cap,
        });
    }
    let costs: Vec<f64> = vectors
        .par_iter()
        .map(|vector| {
            verify_attack(backend, net, threat, plan, vector, options).map(|(cost, _)| cost)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0usize;
    for (k, &cost) in costs.iter().enumerate() {
        if cost > costs[best] + 1e-9 * (1.0 + costs[best].abs()) {
            best = k;
        }
    }
    Ok((vectors[best].clone(), costs[best]))
}

/// Cost surface entry of one firewall pattern.
#[derive(Debug, Clone)]
pub struct PatternCost {
    pub firewall: Vec<bool>,
    pub total: f64,
}

/// Exhaustively optimizes the full planning problem on a toy: every firewall
/// pattern within budget is priced by one linear program holding the whole
/// enumerated attack surface of every attacker, with dispatch and reserve
/// re-optimized jointly. Returns the best pattern, its total cost, and the
/// full surface.
pub fn enumerate_optimal_plan(
    backend: &dyn Backend,
    net: &Network,
    threat: &ThreatModel,
    options: &AlgorithmOptions,
) -> Result<(Vec<bool>, f64, Vec<PatternCost>)> {
    threat.validate_against(net)?;
    let all_buses: Vec<usize> = (0..net.num_buses()).collect();
    let budget = (threat.planner_budget as usize).min(net.num_buses());
    let mut patterns = Vec::new();
    for size in 0..=budget {
        for subset in subsets_of_size(&all_buses, size) {
            let mut z = vec![false; net.num_buses()];
            for &n in &subset {
                z[n] = true;
            }
            patterns.push(z);
        }
    }

    // Cost the cap in operator-block units: one block per admissible vector
    // per pattern.
    let mut total_blocks: u128 = 0;
    for z in &patterns {
        for attacker in &threat.attackers {
            let (vectors, _) = admissible_vectors(net, attacker, z);
            total_blocks += vectors.len() as u128;
        }
    }
    if total_blocks > options.enumeration_cap as u128 {
        return Err(Error::EnumerationCap {
            required: total_blocks,
            cap: options.enumeration_cap,
        });
    }

    let surface: Vec<PatternCost> = patterns
        .par_iter()
        .map(|z| {
            price_pattern(backend, net, threat, z, options).map(|total| PatternCost {
                firewall: z.clone(),
                total,
            })
        })
        .collect::<Result<Vec<PatternCost>>>()?;

    let mut best = 0usize;
    for (k, entry) in surface.iter().enumerate() {
        if entry.total < surface[best].total - 1e-9 * (1.0 + surface[best].total.abs()) {
            best = k;
        }
    }
    Ok((surface[best].firewall.clone(), surface[best].total, surface))
}

/// Prices one firewall pattern: a single LP with first-stage dispatch and
/// reserve, the pre-attack flow block, and one operator block per admissible
/// vector per attacker, each under an epigraph variable.
fn price_pattern(
    backend: &dyn Backend,
    net: &Network,
    threat: &ThreatModel,
    firewall: &[bool],
    options: &AlgorithmOptions,
) -> Result<f64> {
    let dt = threat.delta_t;
    let policy = BigMPolicy::from_algorithm(options);
    let mut model = Model::new("oracle_pattern", Sense::Minimize);

    let mut dispatch = Vec::with_capacity(net.num_generators());
    let mut reserve = Vec::with_capacity(net.num_generators());
    for g in net.generators() {
        let p = model.add_var(format!("dispatch_{}", g.id), 0.0, g.capacity * dt);
        let r = model.add_var(format!("reserve_{}", g.id), 0.0, g.capacity);
        let mut headroom = LinExpr::new();
        headroom.add(p, 1.0).add(r, dt);
        model.add_constraint(
            format!("headroom_{}", g.id),
            headroom,
            Cmp::Le,
            g.capacity * dt,
        )?;
        dispatch.push(p);
        reserve.push(r);
    }
    let modes = vec![BranchMode::FixedOn; net.num_branches()];
    let flows = add_dc_flow_block(&mut model, net, &modes, &policy, "base")?;
    for (n, bus) in net.buses().iter().enumerate() {
        let mut balance = LinExpr::new();
        for &g in net.gens_at(n) {
            balance.add(dispatch[g], 1.0);
        }
        for &t in net.branches_at(n) {
            let tau = if net.branch_from_pos(t) == n {
                1.0
            } else {
                -1.0
            };
            balance.add(flows.flow[t], -tau * dt);
        }
        model.add_constraint(
            format!("balance_base_{}", bus.id),
            balance,
            Cmp::Eq,
            bus.demand * dt,
        )?;
    }
    model.add_constraint(
        "angle_reference",
        LinExpr::term(flows.angle[net.reference_bus_pos()], 1.0),
        Cmp::Eq,
        0.0,
    )?;

    let firewall_cost = threat.firewall_cost * firewall.iter().filter(|&&z| z).count() as f64;
    let mut objective = LinExpr::constant(firewall_cost);
    for (g, def) in net.generators().iter().enumerate() {
        objective.add(reserve[g], def.reserve_cost);
        objective.add(dispatch[g], def.dispatch_cost);
    }

    for (i, attacker) in threat.attackers.iter().enumerate() {
        let eta = model.add_var(format!("impact_{}", attacker.id), 0.0, f64::INFINITY);
        objective.add(eta, attacker.probability);
        let (vectors, _) = admissible_vectors(net, attacker, firewall);
        for (s, vector) in vectors.iter().enumerate() {
            let rules: Vec<GenRules> = net
                .generators()
                .iter()
                .enumerate()
                .map(|(g, _)| {
                    let dead = vector.intruded[net.gen_bus_pos(g)];
                    GenRules {
                        up: if dead {
                            UpRule::Fixed(0.0)
                        } else {
                            UpRule::Var(reserve[g])
                        },
                        injection: if dead {
                            InjRule::Const(0.0)
                        } else {
                            InjRule::Var(dispatch[g])
                        },
                        dp: if options.tighten_dp && dead {
                            DpRule::Const(0.0)
                        } else {
                            DpRule::Var(dispatch[g])
                        },
                    }
                })
                .collect();
            let block_modes: Vec<BranchMode> = vector
                .branch_cut
                .iter()
                .map(|&cut| {
                    if cut {
                        BranchMode::FixedOff
                    } else {
                        BranchMode::FixedOn
                    }
                })
                .collect();
            let block = add_operator_block(
                &mut model,
                net,
                dt,
                threat.voll,
                &rules,
                &block_modes,
                &policy,
                &format!("{i}_{s}"),
            )?;
            let mut row = block.cost.clone();
            row.add(eta, -1.0);
            model.add_constraint(format!("epigraph_{i}_{s}"), row, Cmp::Le, 0.0)?;
        }
    }

    model.set_objective(objective)?;
    let params = SolveParams::from_algorithm(options);
    let result = backend
        .solve(&model, &params)?
        .expect_optimal("oracle pattern pricing")?;
    Ok(result.objective_value)
}
