//! Worst-case attack subproblem: for one attacker and a fixed plan, the
//! bilevel "attacker maximizes the operator's minimized cost" problem is
//! collapsed into a single MILP.
//!
//! The operator's response is first rewritten so that every attacker binary
//! appears only on big-M right-hand sides, which keeps the inner coefficient
//! matrix constant. Its dual variables then join the model as continuous
//! variables with constant dual-feasibility rows, a strong-duality equality
//! ties the primal operator cost to the dual objective, and every product of
//! an attacker binary with a bounded dual is replaced by an exact envelope
//! auxiliary. The result maximizes redispatch-plus-shedding cost over the
//! attacker's admissible intrusions and disconnections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{Backend, Cmp, LinExpr, Model, Sense, SolveParams, SolveResult, VarRef};
use crate::netdata::Network;
use crate::powerflow::{
    add_operator_block, BigMPolicy, BranchMode, DpRule, GenRules, InjRule, OperatorBlock,
    PlanDecision, UpRule,
};
use crate::threat::{AlgorithmOptions, Attacker, Capability, ThreatModel};

/// One attacker's realized choice: which buses are intruded and which
/// branches disconnected. Generator status is implied: a unit is lost
/// exactly when its bus is intruded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AttackVector {
    pub intruded: Vec<bool>,
    pub branch_cut: Vec<bool>,
}

impl AttackVector {
    pub fn empty(net: &Network) -> Self {
        AttackVector {
            intruded: vec![false; net.num_buses()],
            branch_cut: vec![false; net.num_branches()],
        }
    }

    pub fn intruded_bus_ids(&self, net: &Network) -> Vec<u32> {
        net.buses()
            .iter()
            .zip(&self.intruded)
            .filter(|(_, &w)| w)
            .map(|(b, _)| b.id)
            .collect()
    }

    pub fn cut_branch_ids(&self, net: &Network) -> Vec<u32> {
        net.branches()
            .iter()
            .zip(&self.branch_cut)
            .filter(|(_, &c)| c)
            .map(|(t, _)| t.id)
            .collect()
    }

    /// Generator outage pattern implied by the intrusions.
    pub fn gen_cut(&self, net: &Network) -> Vec<bool> {
        (0..net.num_generators())
            .map(|g| self.intruded[net.gen_bus_pos(g)])
            .collect()
    }

    pub fn num_intruded(&self) -> usize {
        self.intruded.iter().filter(|&&w| w).count()
    }

    /// Checks the budget, firewall-blocking, and branch-linkage rules
    /// against an attacker and plan.
    pub fn violations(
        &self,
        net: &Network,
        attacker: &Attacker,
        plan: &PlanDecision,
    ) -> Vec<String> {
        let mut out = Vec::new();
        if self.intruded.len() != net.num_buses() || self.branch_cut.len() != net.num_branches() {
            out.push("attack vector dimensions do not match the network".into());
            return out;
        }
        if self.num_intruded() > attacker.budget as usize {
            out.push(format!(
                "{} intrusions exceed the budget {}",
                self.num_intruded(),
                attacker.budget
            ));
        }
        if attacker.capability == Capability::Basic {
            for (n, bus) in net.buses().iter().enumerate() {
                if self.intruded[n] && plan.firewall[n] {
                    out.push(format!(
                        "bus {}: basic attacker cannot intrude past updated firewall rules",
                        bus.id
                    ));
                }
            }
        }
        for (t, branch) in net.branches().iter().enumerate() {
            if self.branch_cut[t]
                && !self.intruded[net.branch_from_pos(t)]
                && !self.intruded[net.branch_to_pos(t)]
            {
                out.push(format!(
                    "branch {}: disconnected without intruding either endpoint",
                    branch.id
                ));
            }
        }
        out
    }
}

/// Outcome of one subproblem solve.
#[derive(Debug, Clone)]
pub struct SubproblemResult {
    pub vector: AttackVector,
    /// Operator cost under the worst attack, mu.
    pub impact: f64,
    pub response: OperatorResponse,
}

/// The operator's optimal reaction extracted from a solved model.
#[derive(Debug, Clone)]
pub struct OperatorResponse {
    pub up: Vec<f64>,
    pub dp: Vec<f64>,
    pub shed: Vec<f64>,
    pub flow: Vec<f64>,
    pub angle: Vec<f64>,
}

impl OperatorResponse {
    pub(crate) fn extract(block: &OperatorBlock, result: &SolveResult) -> Self {
        let read = |vars: &[VarRef]| vars.iter().map(|&v| result.value(v)).collect();
        OperatorResponse {
            up: read(&block.up),
            dp: read(&block.dp),
            shed: read(&block.shed),
            flow: read(&block.flow),
            angle: read(&block.angle),
        }
    }
}

/// Dual bound policy: the balance duals live in `[-voll, voll]`, every
/// bound-row dual in `[0, factor * voll]`.
#[derive(Debug, Clone)]
pub struct DualBounds {
    pub lambda: f64,
    pub bound_rows: f64,
}

impl DualBounds {
    pub fn new(voll: f64, factor: f64) -> Result<Self> {
        if factor <= 1.0 {
            return Err(Error::Config(format!(
                "dual bound factor must exceed 1, got {factor}"
            )));
        }
        Ok(DualBounds {
            lambda: voll,
            bound_rows: factor * voll,
        })
    }
}

/// Handles into a built subproblem.
pub struct SubproblemHandles {
    /// 1 when the bus is NOT intruded.
    pub safe: Vec<VarRef>,
    /// 1 when the branch stays in service.
    pub branch_on: Vec<VarRef>,
    block: OperatorBlock,
    duals: DualVars,
    primal_cost: LinExpr,
    dual_objective: LinExpr,
    bounds: DualBounds,
    pressure: PressureData,
    attacker_id: String,
}

/// Plan constants needed to decide which duals carry objective pressure.
struct PressureData {
    reserve_energy: Vec<f64>,
    dispatch: Vec<f64>,
    demand_energy: Vec<f64>,
    gen_bus: Vec<usize>,
}

struct DualVars {
    balance: Vec<VarRef>,
    up_cap: Vec<VarRef>,
    dp_cap: Vec<VarRef>,
    shed_cap: Vec<VarRef>,
    flow_on_hi: Vec<VarRef>,
    flow_on_lo: Vec<VarRef>,
    flow_dc_hi: Vec<VarRef>,
    flow_dc_lo: Vec<VarRef>,
    flow_cap_hi: Vec<VarRef>,
    flow_cap_lo: Vec<VarRef>,
}

/// Exact envelope for `aux = gate * dual` with `dual` in `[lo, hi]` and a
/// binary gate: when the gate is 0 the auxiliary collapses to 0, when it is
/// 1 the auxiliary equals the dual.
fn mccormick_product(
    model: &mut Model,
    gate: VarRef,
    dual: VarRef,
    lo: f64,
    hi: f64,
    name: &str,
) -> Result<VarRef> {
    let aux = model.add_var(format!("prod_{name}"), lo.min(0.0), hi.max(0.0));
    // aux <= hi * gate
    let mut row = LinExpr::term(aux, 1.0);
    row.add(gate, -hi);
    model.add_constraint(format!("prod_hi_{name}"), row, Cmp::Le, 0.0)?;
    // aux >= lo * gate
    let mut row = LinExpr::term(aux, -1.0);
    row.add(gate, lo);
    model.add_constraint(format!("prod_lo_{name}"), row, Cmp::Le, 0.0)?;
    // aux <= dual - lo (1 - gate)
    let mut row = LinExpr::term(aux, 1.0);
    row.add(dual, -1.0).add(gate, -lo);
    model.add_constraint(format!("prod_led_{name}"), row, Cmp::Le, -lo)?;
    // aux >= dual - hi (1 - gate)
    let mut row = LinExpr::term(dual, 1.0);
    row.add(aux, -1.0).add(gate, hi);
    model.add_constraint(format!("prod_ged_{name}"), row, Cmp::Le, hi)?;
    Ok(aux)
}

/// Builds the single-level MILP for one attacker against a fixed plan.
pub fn build_subproblem(
    net: &Network,
    threat: &ThreatModel,
    attacker: &Attacker,
    plan: &PlanDecision,
    policy: &BigMPolicy,
    options: &AlgorithmOptions,
) -> Result<(Model, SubproblemHandles)> {
    let violations = crate::powerflow::plan_violations(net, threat, plan);
    if !violations.is_empty() {
        return Err(Error::InvalidPlan { violations });
    }
    let bounds = DualBounds::new(threat.voll, options.dual_bound_factor)?;
    let dt = threat.delta_t;
    let mut model = Model::new(format!("subproblem_{}", attacker.id), Sense::Maximize);

    // Attacker binaries. `safe` is 1 when the bus is NOT intruded, matching
    // the sign that makes firewall blocking a lower bound.
    let safe: Vec<VarRef> = net
        .buses()
        .iter()
        .map(|b| model.add_binary(format!("safe_{}", b.id)))
        .collect();
    let branch_on: Vec<VarRef> = net
        .branches()
        .iter()
        .map(|t| model.add_binary(format!("on_{}", t.id)))
        .collect();

    // Intrusion budget: at most W buses lose their safe status.
    let mut budget = LinExpr::new();
    for &w in &safe {
        budget.add(w, 1.0);
    }
    model.add_constraint(
        "intrusion_budget",
        budget,
        Cmp::Ge,
        net.num_buses() as f64 - attacker.budget as f64,
    )?;

    // Basic attackers cannot enter buses with updated firewall rules.
    if attacker.capability == Capability::Basic {
        for (n, &z) in plan.firewall.iter().enumerate() {
            if z {
                model.add_constraint(
                    format!("firewalled_{}", net.buses()[n].id),
                    LinExpr::term(safe[n], 1.0),
                    Cmp::Ge,
                    1.0,
                )?;
            }
        }
    }

    // A branch may be switched off only if some endpoint is intruded;
    // the attacker may also keep it in service.
    for (t, branch) in net.branches().iter().enumerate() {
        let mut link = LinExpr::term(branch_on[t], 1.0);
        link.add(safe[net.branch_from_pos(t)], -1.0)
            .add(safe[net.branch_to_pos(t)], -1.0);
        model.add_constraint(format!("cut_link_{}", branch.id), link, Cmp::Ge, -1.0)?;
    }

    // Operator primal block with attacker binaries on right-hand sides: a
    // unit's dispatch and reserve survive with its bus, flows are gated by
    // the branch status binaries.
    let rules: Vec<GenRules> = net
        .generators()
        .iter()
        .enumerate()
        .map(|(g, _)| {
            let gate = safe[net.gen_bus_pos(g)];
            GenRules {
                up: UpRule::GatedConst {
                    amount: plan.reserve[g] * dt,
                    gate,
                },
                injection: InjRule::GatedConst {
                    amount: plan.dispatch[g],
                    gate,
                },
                dp: if options.tighten_dp {
                    DpRule::GatedConst {
                        amount: plan.dispatch[g],
                        gate,
                    }
                } else {
                    DpRule::Const(plan.dispatch[g])
                },
            }
        })
        .collect();
    let modes: Vec<BranchMode> = branch_on
        .iter()
        .map(|&v| BranchMode::SwitchedByVar(v))
        .collect();
    let block = add_operator_block(
        &mut model,
        net,
        dt,
        threat.voll,
        &rules,
        &modes,
        policy,
        "op",
    )?;
    let primal_cost = block.cost.clone();

    // ----- dual side -----
    let mdual = bounds.bound_rows;
    let dual_for = |model: &mut Model, prefix: &str, ids: Vec<u32>, lo: f64| -> Vec<VarRef> {
        ids.into_iter()
            .map(|id| model.add_var(format!("{prefix}_{id}"), lo, mdual))
            .collect()
    };
    let bus_ids: Vec<u32> = net.buses().iter().map(|b| b.id).collect();
    let gen_ids: Vec<u32> = net.generators().iter().map(|g| g.id).collect();
    let branch_ids: Vec<u32> = net.branches().iter().map(|t| t.id).collect();
    let duals = DualVars {
        balance: net
            .buses()
            .iter()
            .map(|b| model.add_var(format!("dual_bal_{}", b.id), -bounds.lambda, bounds.lambda))
            .collect(),
        up_cap: dual_for(&mut model, "dual_up", gen_ids.clone(), 0.0),
        dp_cap: dual_for(&mut model, "dual_dp", gen_ids, 0.0),
        shed_cap: dual_for(&mut model, "dual_shed", bus_ids, 0.0),
        flow_on_hi: dual_for(&mut model, "dual_fon_hi", branch_ids.clone(), 0.0),
        flow_on_lo: dual_for(&mut model, "dual_fon_lo", branch_ids.clone(), 0.0),
        flow_dc_hi: dual_for(&mut model, "dual_fdc_hi", branch_ids.clone(), 0.0),
        flow_dc_lo: dual_for(&mut model, "dual_fdc_lo", branch_ids.clone(), 0.0),
        flow_cap_hi: dual_for(&mut model, "dual_fcap_hi", branch_ids.clone(), 0.0),
        flow_cap_lo: dual_for(&mut model, "dual_fcap_lo", branch_ids, 0.0),
    };

    // Dual feasibility, one row per operator variable.
    for (g, def) in net.generators().iter().enumerate() {
        let bus = net.gen_bus_pos(g);
        // d/d(up): lambda - alpha <= redispatch cost
        let mut row = LinExpr::term(duals.balance[bus], 1.0);
        row.add(duals.up_cap[g], -1.0);
        model.add_constraint(
            format!("dfeas_up_{}", def.id),
            row,
            Cmp::Le,
            def.redispatch_cost,
        )?;
        // d/d(dp): -lambda - beta <= 0
        let mut row = LinExpr::term(duals.balance[bus], -1.0);
        row.add(duals.dp_cap[g], -1.0);
        model.add_constraint(format!("dfeas_dp_{}", def.id), row, Cmp::Le, 0.0)?;
    }
    for (n, bus) in net.buses().iter().enumerate() {
        // d/d(shed): lambda - sigma <= voll
        let mut row = LinExpr::term(duals.balance[n], 1.0);
        row.add(duals.shed_cap[n], -1.0);
        model.add_constraint(format!("dfeas_shed_{}", bus.id), row, Cmp::Le, threat.voll)?;
    }
    for (t, branch) in net.branches().iter().enumerate() {
        // d/d(f): flows are free, so the stationarity row is an equality.
        let mut row = LinExpr::new();
        row.add(duals.balance[net.branch_from_pos(t)], -dt)
            .add(duals.balance[net.branch_to_pos(t)], dt)
            .add(duals.flow_on_hi[t], -1.0)
            .add(duals.flow_on_lo[t], 1.0)
            .add(duals.flow_dc_hi[t], -1.0)
            .add(duals.flow_dc_lo[t], 1.0)
            .add(duals.flow_cap_hi[t], -1.0)
            .add(duals.flow_cap_lo[t], 1.0);
        model.add_constraint(format!("dfeas_flow_{}", branch.id), row, Cmp::Eq, 0.0)?;
    }
    for (n, bus) in net.buses().iter().enumerate() {
        // d/d(theta): angles are free as well.
        let mut row = LinExpr::new();
        for &t in net.branches_at(n) {
            let tau = if net.branch_from_pos(t) == n {
                1.0
            } else {
                -1.0
            };
            let b = tau / net.branches()[t].reactance;
            row.add(duals.flow_dc_hi[t], b).add(duals.flow_dc_lo[t], -b);
        }
        model.add_constraint(format!("dfeas_angle_{}", bus.id), row, Cmp::Eq, 0.0)?;
    }

    // Dual objective. Products of attacker binaries with duals are replaced
    // by envelope auxiliaries; everything else is linear.
    let mut dual_objective = LinExpr::new();
    for (n, bus) in net.buses().iter().enumerate() {
        dual_objective.add(duals.balance[n], bus.demand * dt);
        dual_objective.add(duals.shed_cap[n], -bus.demand * dt);
        if !net.gens_at(n).is_empty() {
            let dispatch_at: f64 = net.gens_at(n).iter().map(|&g| plan.dispatch[g]).sum();
            let prod = mccormick_product(
                &mut model,
                safe[n],
                duals.balance[n],
                -bounds.lambda,
                bounds.lambda,
                &format!("bal_{}", bus.id),
            )?;
            dual_objective.add(prod, -dispatch_at);
        }
    }
    for (g, def) in net.generators().iter().enumerate() {
        let prod = mccormick_product(
            &mut model,
            safe[net.gen_bus_pos(g)],
            duals.up_cap[g],
            0.0,
            mdual,
            &format!("up_{}", def.id),
        )?;
        dual_objective.add(prod, -plan.reserve[g] * dt);
        dual_objective.add(duals.dp_cap[g], -plan.dispatch[g]);
    }
    for (t, branch) in net.branches().iter().enumerate() {
        let m_kill = policy.kill_m(net, t);
        let m_dc = policy.dc_m(net, t);
        let mu_hi = mccormick_product(
            &mut model,
            branch_on[t],
            duals.flow_on_hi[t],
            0.0,
            mdual,
            &format!("mu_hi_{}", branch.id),
        )?;
        let mu_lo = mccormick_product(
            &mut model,
            branch_on[t],
            duals.flow_on_lo[t],
            0.0,
            mdual,
            &format!("mu_lo_{}", branch.id),
        )?;
        // -M v (mu+ + mu-)
        dual_objective.add(mu_hi, -m_kill).add(mu_lo, -m_kill);
        let nu_hi = mccormick_product(
            &mut model,
            branch_on[t],
            duals.flow_dc_hi[t],
            0.0,
            mdual,
            &format!("nu_hi_{}", branch.id),
        )?;
        let nu_lo = mccormick_product(
            &mut model,
            branch_on[t],
            duals.flow_dc_lo[t],
            0.0,
            mdual,
            &format!("nu_lo_{}", branch.id),
        )?;
        // -M (1 - v)(nu+ + nu-)
        dual_objective
            .add(duals.flow_dc_hi[t], -m_dc)
            .add(duals.flow_dc_lo[t], -m_dc)
            .add(nu_hi, m_dc)
            .add(nu_lo, m_dc);
        dual_objective.add(duals.flow_cap_hi[t], -branch.capacity);
        dual_objective.add(duals.flow_cap_lo[t], -branch.capacity);
    }

    // Strong duality: the operator's primal cost equals the dual objective,
    // which forces the embedded response to be operator-optimal.
    let mut gap = primal_cost.clone();
    gap.add_expr(&dual_objective, -1.0);
    model.add_constraint("strong_duality", gap, Cmp::Eq, 0.0)?;

    model.set_objective(primal_cost.clone())?;

    let pressure = PressureData {
        reserve_energy: plan.reserve.iter().map(|r| r * dt).collect(),
        dispatch: plan.dispatch.clone(),
        demand_energy: net.buses().iter().map(|b| b.demand * dt).collect(),
        gen_bus: (0..net.num_generators())
            .map(|g| net.gen_bus_pos(g))
            .collect(),
    };

    Ok((
        model,
        SubproblemHandles {
            safe,
            branch_on,
            block,
            duals,
            primal_cost,
            dual_objective,
            bounds,
            pressure,
            attacker_id: attacker.id.clone(),
        },
    ))
}

/// Solves a built subproblem and runs the self-checks: strong-duality gap
/// within tolerance and no dual resting on its policy bound.
pub fn solve_subproblem(
    backend: &dyn Backend,
    model: &Model,
    handles: &SubproblemHandles,
    params: &SolveParams,
) -> Result<SubproblemResult> {
    let result = backend
        .solve(model, params)?
        .expect_optimal(&format!("subproblem for attacker {}", handles.attacker_id))?;

    let vector = AttackVector {
        intruded: handles
            .safe
            .iter()
            .map(|&w| result.value(w) < 0.5)
            .collect(),
        branch_cut: handles
            .branch_on
            .iter()
            .map(|&v| result.value(v) < 0.5)
            .collect(),
    };

    // Polish: re-solve with the attack binaries pinned to their integer
    // values. The resulting linear program carries no integrality dust, so
    // the embedded duals are exact; if it is infeasible, the dual bounds
    // genuinely cut off the strong-duality certificate for this vector.
    let mut pinned = model.clone();
    for (k, &w) in handles.safe.iter().enumerate() {
        pinned.fix_var(w, if vector.intruded[k] { 0.0 } else { 1.0 });
    }
    for (t, &v) in handles.branch_on.iter().enumerate() {
        pinned.fix_var(v, if vector.branch_cut[t] { 0.0 } else { 1.0 });
    }
    let polished = backend.solve(&pinned, params)?;
    if polished.status == crate::linmodel::SolveStatus::Infeasible {
        return Err(Error::CertificateInfeasible {
            attacker: handles.attacker_id.clone(),
        });
    }
    let result = polished.expect_optimal(&format!(
        "pinned-vector resolve for attacker {}",
        handles.attacker_id
    ))?;
    let impact = result.objective_value.max(0.0);

    let primal = handles.primal_cost.eval(&result.primal);
    let dual = handles.dual_objective.eval(&result.primal);
    let gap = (primal - dual).abs();
    if gap > 1e-6 * (1.0 + impact.abs()) {
        return Err(Error::DualityGap {
            attacker: handles.attacker_id.clone(),
            primal,
            dual,
            gap,
        });
    }

    // A dual resting on its policy bound means the bound may be clipping the
    // true dual solution. Only duals under genuine objective pressure are
    // diagnostic: a dual whose objective coefficient vanishes at this vertex
    // (zero reserve, zero demand, or a gate binary that zeroes its product)
    // floats freely and can land on the bound without meaning anything.
    let mdual = handles.bounds.bound_rows;
    let at_bound_tol = 1e-6 * mdual;
    let pressure_eps = 1e-6;
    let mut pressured: Vec<(&str, VarRef)> = Vec::new();
    for (g, _) in handles.block.up.iter().enumerate() {
        let bus_safe = !vector.intruded[handles.pressure.gen_bus[g]];
        if handles.pressure.reserve_energy[g] > pressure_eps && bus_safe {
            pressured.push(("up_cap", handles.duals.up_cap[g]));
        }
        if handles.pressure.dispatch[g] > pressure_eps {
            pressured.push(("dp_cap", handles.duals.dp_cap[g]));
        }
    }
    for (n, &demand) in handles.pressure.demand_energy.iter().enumerate() {
        if demand > pressure_eps {
            pressured.push(("shed_cap", handles.duals.shed_cap[n]));
        }
    }
    for t in 0..handles.branch_on.len() {
        if vector.branch_cut[t] {
            pressured.push(("flow_dc_hi", handles.duals.flow_dc_hi[t]));
            pressured.push(("flow_dc_lo", handles.duals.flow_dc_lo[t]));
        } else {
            pressured.push(("flow_on_hi", handles.duals.flow_on_hi[t]));
            pressured.push(("flow_on_lo", handles.duals.flow_on_lo[t]));
        }
        pressured.push(("flow_cap_hi", handles.duals.flow_cap_hi[t]));
        pressured.push(("flow_cap_lo", handles.duals.flow_cap_lo[t]));
    }
    for (label, v) in pressured {
        let value = result.value(v);
        if value >= mdual - at_bound_tol {
            return Err(Error::DualBoundActive {
                name: format!("{label} ({})", model.var_name(v)),
                value,
                bound: mdual,
            });
        }
    }

    Ok(SubproblemResult {
        vector,
        impact,
        response: OperatorResponse::extract(&handles.block, &result),
    })
}

/// Convenience wrapper: build and solve in one call.
pub fn worst_attack(
    backend: &dyn Backend,
    net: &Network,
    threat: &ThreatModel,
    attacker: &Attacker,
    plan: &PlanDecision,
    options: &AlgorithmOptions,
) -> Result<SubproblemResult> {
    let policy = BigMPolicy::from_algorithm(options);
    let (model, handles) = build_subproblem(net, threat, attacker, plan, &policy, options)?;
    let params = SolveParams::from_algorithm(options);
    solve_subproblem(backend, &model, &handles, &params)
}

/// Solves the pure operator LP for a fixed attack vector; the returned cost
/// is the independent check on the subproblem's strong duality and the
/// upper-bound bookkeeping value. Always feasible: shedding everything and
/// backing every unit down is admissible.
pub fn verify_attack(
    backend: &dyn Backend,
    net: &Network,
    threat: &ThreatModel,
    plan: &PlanDecision,
    vector: &AttackVector,
    options: &AlgorithmOptions,
) -> Result<(f64, OperatorResponse)> {
    let dt = threat.delta_t;
    let policy = BigMPolicy::from_algorithm(options);
    let mut model = Model::new("operator_response", Sense::Minimize);
    let gen_cut = vector.gen_cut(net);
    let rules: Vec<GenRules> = net
        .generators()
        .iter()
        .enumerate()
        .map(|(g, _)| {
            let alive = !gen_cut[g];
            GenRules {
                up: UpRule::Fixed(if alive { plan.reserve[g] * dt } else { 0.0 }),
                injection: InjRule::Const(if alive { plan.dispatch[g] } else { 0.0 }),
                dp: DpRule::Const(if options.tighten_dp && !alive {
                    0.0
                } else {
                    plan.dispatch[g]
                }),
            }
        })
        .collect();
    let modes: Vec<BranchMode> = vector
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
        &modes,
        &policy,
        "verify",
    )?;
    model.set_objective(block.cost.clone())?;
    let params = SolveParams::from_algorithm(options);
    let result = backend
        .solve(&model, &params)?
        .expect_optimal("operator response")?;
    Ok((
        result.objective_value.max(0.0),
        OperatorResponse::extract(&block, &result),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::HighsBackend;
    use crate::netdata::{Branch, Bus, Generator};
    use crate::powerflow::solve_base_opf;

    fn two_bus() -> Network {
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
            vec![Generator {
                id: 1,
                bus: 1,
                capacity: 150.0,
                dispatch_cost: 10.0,
                reserve_cost: 2.5,
                redispatch_cost: 10.0,
            }],
            100.0,
        )
        .unwrap()
    }

    fn threat_with(attackers: Vec<Attacker>) -> ThreatModel {
        ThreatModel {
            attackers,
            planner_budget: 2,
            firewall_cost: 5.55,
            voll: 5000.0,
            delta_t: 1.0,
        }
    }

    fn base_plan(net: &Network, threat: &ThreatModel, options: &AlgorithmOptions) -> PlanDecision {
        let backend = HighsBackend::new();
        let policy = BigMPolicy::from_algorithm(options);
        solve_base_opf(
            &backend,
            net,
            threat,
            &policy,
            &SolveParams::from_algorithm(options),
        )
        .unwrap()
        .0
    }

    #[test]
    fn empty_attack_costs_nothing() {
        let net = two_bus();
        let threat = threat_with(vec![]);
        let options = AlgorithmOptions::default();
        let plan = base_plan(&net, &threat, &options);
        let backend = HighsBackend::new();
        let (cost, _) = verify_attack(
            &backend,
            &net,
            &threat,
            &plan,
            &AttackVector::empty(&net),
            &options,
        )
        .unwrap();
        assert!(cost.abs() < 1e-7);
    }

    #[test]
    fn islanding_forces_full_shedding() {
        let net = two_bus();
        let threat = threat_with(vec![]);
        let options = AlgorithmOptions::default();
        let plan = base_plan(&net, &threat, &options);
        let backend = HighsBackend::new();
        let vector = AttackVector {
            intruded: vec![true, false],
            branch_cut: vec![true],
        };
        let (cost, response) =
            verify_attack(&backend, &net, &threat, &plan, &vector, &options).unwrap();
        // All 100 MWh of demand at bus 2 are lost: 100 * 5000.
        assert!((cost - 500_000.0).abs() < 1e-4);
        assert!((response.shed[1] - 100.0).abs() < 1e-6);
    }

    #[test]
    fn zero_budget_attacker_is_harmless() {
        let net = two_bus();
        let attacker = Attacker {
            id: "null".into(),
            capability: Capability::Advanced,
            budget: 0,
            probability: 0.01,
        };
        let threat = threat_with(vec![attacker.clone()]);
        let options = AlgorithmOptions::default();
        let plan = base_plan(&net, &threat, &options);
        let backend = HighsBackend::new();
        let result = worst_attack(&backend, &net, &threat, &attacker, &plan, &options).unwrap();
        assert!(result.impact.abs() < 1e-6);
        assert_eq!(result.vector.num_intruded(), 0);
        assert!(!result.vector.branch_cut[0]);
    }

    #[test]
    fn fully_firewalled_blocks_basic_attacker() {
        let net = two_bus();
        let attacker = Attacker {
            id: "bsc".into(),
            capability: Capability::Basic,
            budget: 2,
            probability: 0.01,
        };
        let threat = threat_with(vec![attacker.clone()]);
        let options = AlgorithmOptions::default();
        let mut plan = base_plan(&net, &threat, &options);
        plan.firewall = vec![true, true];
        let backend = HighsBackend::new();
        let result = worst_attack(&backend, &net, &threat, &attacker, &plan, &options).unwrap();
        assert!(result.impact.abs() < 1e-6);
        assert_eq!(result.vector.num_intruded(), 0);
    }

    #[test]
    fn advanced_attacker_ignores_firewalls() {
        let net = two_bus();
        let attacker = Attacker {
            id: "adv".into(),
            capability: Capability::Advanced,
            budget: 1,
            probability: 0.01,
        };
        let threat = threat_with(vec![attacker.clone()]);
        let options = AlgorithmOptions::default();
        let plan_open = base_plan(&net, &threat, &options);
        let mut plan_walled = plan_open.clone();
        plan_walled.firewall = vec![true, true];
        let backend = HighsBackend::new();
        let open = worst_attack(&backend, &net, &threat, &attacker, &plan_open, &options).unwrap();
        let walled =
            worst_attack(&backend, &net, &threat, &attacker, &plan_walled, &options).unwrap();
        assert!((open.impact - walled.impact).abs() < 1e-6 * (1.0 + open.impact));
        // Intruding bus 1 kills the only generator: all demand is shed.
        assert!((open.impact - 500_000.0).abs() < 1e-3);
    }

    #[test]
    fn strong_duality_matches_verification() {
        let net = two_bus();
        let attacker = Attacker {
            id: "adv".into(),
            capability: Capability::Advanced,
            budget: 1,
            probability: 0.01,
        };
        let threat = threat_with(vec![attacker.clone()]);
        let options = AlgorithmOptions::default();
        let plan = base_plan(&net, &threat, &options);
        let backend = HighsBackend::new();
        let result = worst_attack(&backend, &net, &threat, &attacker, &plan, &options).unwrap();
        let (check, _) =
            verify_attack(&backend, &net, &threat, &plan, &result.vector, &options).unwrap();
        assert!(
            (check - result.impact).abs() <= 1e-6 * (1.0 + result.impact.abs()),
            "verification {check} vs impact {}",
            result.impact
        );
    }

    #[test]
    fn reserve_softens_the_blow() {
        // Give bus 2 a second generator; attacking bus 1 then leaves demand
        // coverable by reserve at bus 2 when procured.
        let net = Network::new(
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
        .unwrap();
        let attacker = Attacker {
            id: "adv".into(),
            capability: Capability::Advanced,
            budget: 1,
            probability: 0.01,
        };
        let threat = threat_with(vec![attacker.clone()]);
        let options = AlgorithmOptions::default();
        let lean = base_plan(&net, &threat, &options);
        let mut hedged = lean.clone();
        // Full headroom as reserve on every unit.
        for (g, def) in net.generators().iter().enumerate() {
            hedged.reserve[g] = def.capacity - hedged.dispatch[g];
        }
        let backend = HighsBackend::new();
        let exposed = worst_attack(&backend, &net, &threat, &attacker, &lean, &options).unwrap();
        let covered = worst_attack(&backend, &net, &threat, &attacker, &hedged, &options).unwrap();
        // Worst-case impact never increases with more reserve.
        assert!(covered.impact <= exposed.impact + 1e-6);

        // Dominance at a fixed vector: losing the cheap unit costs full
        // shedding without reserve, but only redispatch (100 MWh at 30)
        // once unit 2 carries reserve.
        let hit_gen_bus = AttackVector {
            intruded: vec![true, false],
            branch_cut: vec![false],
        };
        let (lean_cost, _) =
            verify_attack(&backend, &net, &threat, &lean, &hit_gen_bus, &options).unwrap();
        let (hedged_cost, _) =
            verify_attack(&backend, &net, &threat, &hedged, &hit_gen_bus, &options).unwrap();
        assert!((lean_cost - 500_000.0).abs() < 1e-3);
        assert!((hedged_cost - 3000.0).abs() < 1e-3);
    }

    #[test]
    fn vector_violations_catch_bad_linkage() {
        let net = two_bus();
        let attacker = Attacker {
            id: "bsc".into(),
            capability: Capability::Basic,
            budget: 0,
            probability: 0.01,
        };
        let threat = threat_with(vec![attacker.clone()]);
        let options = AlgorithmOptions::default();
        let plan = base_plan(&net, &threat, &options);
        let vector = AttackVector {
            intruded: vec![false, false],
            branch_cut: vec![true],
        };
        let violations = vector.violations(&net, &attacker, &plan);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("without intruding"));
    }
}
