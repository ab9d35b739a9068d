//! DC power flow and dispatch constraint fragments, shared by the base-case
//! OPF, the master problem's scenario blocks, the attacker subproblem, and
//! the plain operator-response solve.
//!
//! Flows are in MW, reactances per-unit on the system base, so angles carry
//! an implicit factor of the base MVA relative to radians. Big-M constants
//! for switchable branches are sized from the configured angle span.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linmodel::{Backend, Cmp, LinExpr, Model, Sense, SolveParams, SolveResult, VarRef};
use crate::netdata::Network;
use crate::threat::{AlgorithmOptions, ThreatModel};

/// Big-M sizing policy for conditional flow-definition rows.
#[derive(Debug, Clone)]
pub struct BigMPolicy {
    /// Assumed angle span in radians across any connected component.
    pub theta_span_rad: f64,
    /// Use the flow-guard rows exactly as printed (asymmetric upper guard)
    /// instead of the symmetric reading.
    pub printed_variant: bool,
}

impl BigMPolicy {
    pub fn from_algorithm(options: &AlgorithmOptions) -> Self {
        BigMPolicy {
            theta_span_rad: options.theta_span,
            printed_variant: options.printed_bigm_variant,
        }
    }

    /// Angle span in the internal angle unit (radians times base MVA).
    pub fn span_units(&self, net: &Network) -> f64 {
        self.theta_span_rad * net.base_mva()
    }

    /// Big-M for one branch: thermal rating plus the largest flow-definition
    /// mismatch the angle span allows. This is the worst case over both row
    /// families; the builders use the tighter per-family constants below.
    pub fn branch_m(&self, net: &Network, t: usize) -> f64 {
        let branch = &net.branches()[t];
        branch.capacity + self.span_units(net) / branch.reactance
    }

    /// Constant for the flow-kill rows `|f| <= M * status`: the thermal
    /// rating is exactly enough.
    pub fn kill_m(&self, net: &Network, t: usize) -> f64 {
        net.branches()[t].capacity
    }

    /// Constant for the relaxed DC-definition rows: with the flow already
    /// forced to zero the mismatch is at most the angle span over the
    /// reactance.
    pub fn dc_m(&self, net: &Network, t: usize) -> f64 {
        self.span_units(net) / net.branches()[t].reactance
    }

    /// A big-M below the branch rating cannot switch the flow off; reject it.
    pub fn validate(&self, net: &Network) -> Result<()> {
        if self.theta_span_rad <= 0.0 {
            return Err(Error::Config(format!(
                "theta span must be positive, got {}",
                self.theta_span_rad
            )));
        }
        for t in 0..net.num_branches() {
            let m = self.branch_m(net, t);
            if m < net.branches()[t].capacity {
                return Err(Error::Config(format!(
                    "big-M {m} for branch {} is below its rating {}",
                    net.branches()[t].id,
                    net.branches()[t].capacity
                )));
            }
        }
        Ok(())
    }
}

/// How one branch participates in a flow block.
#[derive(Debug, Clone)]
pub enum BranchMode {
    /// In service: flow equals the DC definition.
    FixedOn,
    /// Out of service: flow is zero.
    FixedOff,
    /// On iff the given binary is 1 (flow forced to zero otherwise).
    SwitchedByVar(VarRef),
    /// Attacked branch whose disconnection depends on whether its endpoints
    /// are successfully protected; a `None` guard means that endpoint is not
    /// under attack and counts as protected.
    GuardedByEndpoints {
        sending: Option<VarRef>,
        receiving: Option<VarRef>,
    },
}

/// Flow and angle variables of one flow block.
#[derive(Debug, Clone)]
pub struct FlowHandles {
    pub flow: Vec<VarRef>,
    pub angle: Vec<VarRef>,
}

/// Adds flow variables bounded by the thermal rating, free angles, and the
/// per-branch coupling rows selected by `modes`.
pub fn add_dc_flow_block(
    model: &mut Model,
    net: &Network,
    modes: &[BranchMode],
    policy: &BigMPolicy,
    label: &str,
) -> Result<FlowHandles> {
    assert_eq!(modes.len(), net.num_branches());
    policy.validate(net)?;

    let angle: Vec<VarRef> = (0..net.num_buses())
        .map(|n| {
            model.add_var(
                format!("theta_{label}_{}", net.buses()[n].id),
                f64::NEG_INFINITY,
                f64::INFINITY,
            )
        })
        .collect();
    // Thermal bounds apply to every branch, including disconnected ones.
    let flow: Vec<VarRef> = (0..net.num_branches())
        .map(|t| {
            let cap = net.branches()[t].capacity;
            model.add_var(format!("flow_{label}_{}", net.branches()[t].id), -cap, cap)
        })
        .collect();

    for (t, mode) in modes.iter().enumerate() {
        let branch = &net.branches()[t];
        let susceptance = 1.0 / branch.reactance;
        let from = angle[net.branch_from_pos(t)];
        let to = angle[net.branch_to_pos(t)];
        // f - (1/X)(theta_from - theta_to)
        let mismatch = |f_coef: f64| {
            let mut e = LinExpr::new();
            e.add(flow[t], f_coef)
                .add(from, -f_coef * susceptance)
                .add(to, f_coef * susceptance);
            e
        };
        let id = branch.id;
        match mode {
            BranchMode::FixedOn => {
                model.add_constraint(format!("dc_{label}_{id}"), mismatch(1.0), Cmp::Eq, 0.0)?;
            }
            BranchMode::FixedOff => {
                model.add_constraint(
                    format!("off_{label}_{id}"),
                    LinExpr::term(flow[t], 1.0),
                    Cmp::Eq,
                    0.0,
                )?;
            }
            BranchMode::SwitchedByVar(on) => {
                let m_kill = policy.kill_m(net, t);
                let m_dc = policy.dc_m(net, t);
                // |f| <= M * on
                let mut up = LinExpr::term(flow[t], 1.0);
                up.add(*on, -m_kill);
                model.add_constraint(format!("fon_hi_{label}_{id}"), up, Cmp::Le, 0.0)?;
                let mut lo = LinExpr::term(flow[t], -1.0);
                lo.add(*on, -m_kill);
                model.add_constraint(format!("fon_lo_{label}_{id}"), lo, Cmp::Le, 0.0)?;
                // |f - dc| <= M * (1 - on)
                let mut eq_hi = mismatch(1.0);
                eq_hi.add(*on, m_dc);
                model.add_constraint(format!("fdc_hi_{label}_{id}"), eq_hi, Cmp::Le, m_dc)?;
                let mut eq_lo = mismatch(-1.0);
                eq_lo.add(*on, m_dc);
                model.add_constraint(format!("fdc_lo_{label}_{id}"), eq_lo, Cmp::Le, m_dc)?;
            }
            BranchMode::GuardedByEndpoints { sending, receiving } => {
                let m = policy.dc_m(net, t);
                let m_kill = policy.kill_m(net, t);
                // Flow dies with any successfully intruded endpoint.
                for (tag, guard) in [("s", sending), ("r", receiving)] {
                    if let Some(w) = guard {
                        let mut up = LinExpr::term(flow[t], 1.0);
                        up.add(*w, -m_kill);
                        model.add_constraint(
                            format!("fg{tag}_hi_{label}_{id}"),
                            up,
                            Cmp::Le,
                            0.0,
                        )?;
                        let mut lo = LinExpr::term(flow[t], -1.0);
                        lo.add(*w, -m_kill);
                        model.add_constraint(
                            format!("fg{tag}_lo_{label}_{id}"),
                            lo,
                            Cmp::Le,
                            0.0,
                        )?;
                    }
                }
                // DC equality when both endpoints survive. The guard term
                // M(2 - w_s - w_r) vanishes exactly then; each protected
                // (non-attacked) endpoint contributes a constant 1.
                let mut slack_consts = 2.0;
                let mut add_guards = |e: &mut LinExpr, sign: f64| {
                    for guard in [sending, receiving] {
                        match guard {
                            Some(w) => {
                                e.add(*w, sign * m);
                            }
                            None => slack_consts -= 1.0,
                        }
                    }
                };
                let mut eq_hi = mismatch(1.0);
                if policy.printed_variant {
                    // Verbatim printed guard (2 - w_s + w_r) on the upper row.
                    match sending {
                        Some(w) => {
                            eq_hi.add(*w, m);
                        }
                        None => slack_consts -= 1.0,
                    }
                    match receiving {
                        Some(w) => {
                            eq_hi.add(*w, -m);
                        }
                        None => slack_consts += 1.0,
                    }
                    model.add_constraint(
                        format!("fdc_hi_{label}_{id}"),
                        eq_hi,
                        Cmp::Le,
                        m * slack_consts,
                    )?;
                    let mut slack_lo = 2.0;
                    let mut eq_lo = mismatch(-1.0);
                    for guard in [sending, receiving] {
                        match guard {
                            Some(w) => {
                                eq_lo.add(*w, m);
                            }
                            None => slack_lo -= 1.0,
                        }
                    }
                    model.add_constraint(
                        format!("fdc_lo_{label}_{id}"),
                        eq_lo,
                        Cmp::Le,
                        m * slack_lo,
                    )?;
                } else {
                    add_guards(&mut eq_hi, 1.0);
                    model.add_constraint(
                        format!("fdc_hi_{label}_{id}"),
                        eq_hi,
                        Cmp::Le,
                        m * slack_consts,
                    )?;
                    let mut slack_lo = 2.0;
                    let mut eq_lo = mismatch(-1.0);
                    for guard in [sending, receiving] {
                        match guard {
                            Some(w) => {
                                eq_lo.add(*w, m);
                            }
                            None => slack_lo -= 1.0,
                        }
                    }
                    model.add_constraint(
                        format!("fdc_lo_{label}_{id}"),
                        eq_lo,
                        Cmp::Le,
                        m * slack_lo,
                    )?;
                }
            }
        }
    }
    Ok(FlowHandles { flow, angle })
}

/// First-stage decision: dispatch, reserve, firewall updates, and the
/// base-case operating point they imply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanDecision {
    /// Pre-attack energy dispatch per generator, MWh over the interval.
    pub dispatch: Vec<f64>,
    /// Procured reserve capacity per generator, MW.
    pub reserve: Vec<f64>,
    /// Firewall rule update per bus.
    pub firewall: Vec<bool>,
    /// Base-case branch flows, MW.
    pub base_flow: Vec<f64>,
    /// Base-case bus angles.
    pub base_angle: Vec<f64>,
}

impl PlanDecision {
    pub fn secured_bus_ids(&self, net: &Network) -> Vec<u32> {
        net.buses()
            .iter()
            .zip(&self.firewall)
            .filter(|(_, &z)| z)
            .map(|(b, _)| b.id)
            .collect()
    }

    /// First-stage cost: reserve, dispatch, and firewall updates.
    pub fn first_stage_cost(&self, net: &Network, threat: &ThreatModel) -> f64 {
        self.reserve_dispatch_cost(net)
            + threat.firewall_cost * self.firewall.iter().filter(|&&z| z).count() as f64
    }

    /// Reserve procurement plus dispatch cost, without the firewall term.
    pub fn reserve_dispatch_cost(&self, net: &Network) -> f64 {
        net.generators()
            .iter()
            .enumerate()
            .map(|(g, def)| {
                def.reserve_cost * self.reserve[g] + def.dispatch_cost * self.dispatch[g]
            })
            .sum()
    }
}

/// Checks every plan invariant; returns the list of violations.
pub fn plan_violations(net: &Network, threat: &ThreatModel, plan: &PlanDecision) -> Vec<String> {
    let mut out = Vec::new();
    let tol = 1e-6;
    let dt = threat.delta_t;
    if plan.dispatch.len() != net.num_generators()
        || plan.reserve.len() != net.num_generators()
        || plan.firewall.len() != net.num_buses()
        || plan.base_flow.len() != net.num_branches()
        || plan.base_angle.len() != net.num_buses()
    {
        out.push("plan dimensions do not match the network".into());
        return out;
    }
    for (g, def) in net.generators().iter().enumerate() {
        if plan.dispatch[g] < -tol {
            out.push(format!("generator {}: negative dispatch", def.id));
        }
        if plan.reserve[g] < -tol {
            out.push(format!("generator {}: negative reserve", def.id));
        }
        let headroom = def.capacity * dt - plan.dispatch[g] - plan.reserve[g] * dt;
        if headroom < -tol * def.capacity.max(1.0) {
            out.push(format!(
                "generator {}: dispatch {} + reserve {} exceeds capacity {}",
                def.id, plan.dispatch[g], plan.reserve[g], def.capacity
            ));
        }
    }
    let secured = plan.firewall.iter().filter(|&&z| z).count() as u32;
    if secured > threat.planner_budget {
        out.push(format!(
            "{} firewall updates exceed the budget {}",
            secured, threat.planner_budget
        ));
    }
    for (t, branch) in net.branches().iter().enumerate() {
        let f = plan.base_flow[t];
        if f.abs() > branch.capacity + tol * branch.capacity.max(1.0) {
            out.push(format!("branch {}: base flow violates rating", branch.id));
        }
        let dc = (plan.base_angle[net.branch_from_pos(t)] - plan.base_angle[net.branch_to_pos(t)])
            / branch.reactance;
        if (f - dc).abs() > 1e-4 * (1.0 + f.abs()) {
            out.push(format!(
                "branch {}: base flow {} breaks the DC definition {}",
                branch.id, f, dc
            ));
        }
    }
    for (n, bus) in net.buses().iter().enumerate() {
        let mut balance = -(bus.demand * dt);
        for &g in net.gens_at(n) {
            balance += plan.dispatch[g];
        }
        for &t in net.branches_at(n) {
            let tau = if net.branch_from_pos(t) == n {
                1.0
            } else {
                -1.0
            };
            balance -= tau * plan.base_flow[t] * dt;
        }
        if balance.abs() > 1e-4 * (1.0 + bus.demand) {
            out.push(format!(
                "bus {}: base-case balance off by {balance}",
                bus.id
            ));
        }
    }
    out
}

/// Variable handles of the base-case OPF.
#[derive(Debug, Clone)]
pub struct BaseOpfHandles {
    pub dispatch: Vec<VarRef>,
    pub reserve: Vec<VarRef>,
    pub firewall: Vec<VarRef>,
    pub flow: Vec<VarRef>,
    pub angle: Vec<VarRef>,
}

/// First-stage variables and constraints, shared between the base-case OPF
/// and the master problem.
pub(crate) fn add_first_stage(
    model: &mut Model,
    net: &Network,
    threat: &ThreatModel,
    policy: &BigMPolicy,
) -> Result<(BaseOpfHandles, LinExpr)> {
    let dt = threat.delta_t;
    let mut dispatch = Vec::with_capacity(net.num_generators());
    let mut reserve = Vec::with_capacity(net.num_generators());
    for g in net.generators() {
        let p = model.add_var(format!("dispatch_{}", g.id), 0.0, g.capacity * dt);
        let r = model.add_var(format!("reserve_{}", g.id), 0.0, g.capacity);
        dispatch.push(p);
        reserve.push(r);
        let mut headroom = LinExpr::new();
        headroom.add(p, 1.0).add(r, dt);
        model.add_constraint(
            format!("headroom_{}", g.id),
            headroom,
            Cmp::Le,
            g.capacity * dt,
        )?;
    }

    let firewall: Vec<VarRef> = net
        .buses()
        .iter()
        .map(|b| model.add_binary(format!("firewall_{}", b.id)))
        .collect();
    let mut budget = LinExpr::new();
    for &z in &firewall {
        budget.add(z, 1.0);
    }
    model.add_constraint(
        "firewall_budget",
        budget,
        Cmp::Le,
        threat.planner_budget as f64,
    )?;

    let modes = vec![BranchMode::FixedOn; net.num_branches()];
    let flows = add_dc_flow_block(model, net, &modes, policy, "base")?;

    // Pre-attack balance admits no shedding.
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

    // Anchor the base-case angle at the lowest-numbered bus.
    let ref_bus = net.reference_bus_pos();
    model.add_constraint(
        "angle_reference",
        LinExpr::term(flows.angle[ref_bus], 1.0),
        Cmp::Eq,
        0.0,
    )?;

    let mut cost = LinExpr::new();
    for (g, def) in net.generators().iter().enumerate() {
        cost.add(reserve[g], def.reserve_cost);
        cost.add(dispatch[g], def.dispatch_cost);
    }
    for &z in &firewall {
        cost.add(z, threat.firewall_cost);
    }

    Ok((
        BaseOpfHandles {
            dispatch,
            reserve,
            firewall,
            flow: flows.flow,
            angle: flows.angle,
        },
        cost,
    ))
}

/// Builds the first-stage-only OPF: minimize dispatch, reserve, and firewall
/// cost subject to the pre-attack feasibility constraints. With no attackers
/// the optimum keeps reserve and firewall variables at zero.
pub fn build_base_opf(
    net: &Network,
    threat: &ThreatModel,
    policy: &BigMPolicy,
) -> Result<(Model, BaseOpfHandles)> {
    let mut model = Model::new("base_opf", Sense::Minimize);
    let (handles, cost) = add_first_stage(&mut model, net, threat, policy)?;
    model.set_objective(cost)?;
    Ok((model, handles))
}

/// Solves the base-case OPF and extracts the plan.
pub fn solve_base_opf(
    backend: &dyn Backend,
    net: &Network,
    threat: &ThreatModel,
    policy: &BigMPolicy,
    params: &SolveParams,
) -> Result<(PlanDecision, f64)> {
    let (model, handles) = build_base_opf(net, threat, policy)?;
    let result = backend.solve(&model, params)?;
    if result.status == crate::linmodel::SolveStatus::Infeasible {
        return Err(Error::InvalidNetwork(
            "insufficient generation capacity: the pre-attack dispatch problem is infeasible"
                .into(),
        ));
    }
    let result = result.expect_optimal("base-case OPF")?;
    let plan = extract_plan(net, &handles, &result);
    Ok((plan, result.objective_value))
}

/// Reads a plan out of a solved model via its handle map.
pub fn extract_plan(net: &Network, handles: &BaseOpfHandles, result: &SolveResult) -> PlanDecision {
    PlanDecision {
        dispatch: handles.dispatch.iter().map(|&v| result.value(v)).collect(),
        reserve: handles.reserve.iter().map(|&v| result.value(v)).collect(),
        firewall: handles
            .firewall
            .iter()
            .map(|&v| result.value(v) > 0.5)
            .collect(),
        base_flow: handles.flow.iter().map(|&v| result.value(v)).collect(),
        base_angle: handles.angle.iter().map(|&v| result.value(v)).collect(),
    }
    .snapped(net)
}

impl PlanDecision {
    /// Clamps solver noise out of the nonnegative fields: negative dust and
    /// sub-tolerance positive dust both become exact zeros.
    fn snapped(mut self, net: &Network) -> Self {
        let _ = net;
        for v in self.dispatch.iter_mut().chain(self.reserve.iter_mut()) {
            if *v < 1e-7 {
                *v = 0.0;
            }
        }
        self
    }
}

/// Upward-redispatch cap of one generator inside an operator block.
#[derive(Debug, Clone)]
pub enum UpRule {
    /// `up <= amount` (reserve energy of a surviving unit, constant plan).
    Fixed(f64),
    /// `up <= amount * gate`, with a binary gate variable.
    GatedConst { amount: f64, gate: VarRef },
    /// `up <= dt * reserve`, with the reserve a first-stage variable.
    Var(VarRef),
    /// `up <= dt * reserve` and `up <= cap * gate`: the unit survives only
    /// if the gate binary is 1.
    VarGated {
        reserve: VarRef,
        gate: VarRef,
        cap: f64,
    },
}

/// Pre-attack injection of one generator inside an operator block.
#[derive(Debug, Clone)]
pub enum InjRule {
    /// Constant injection (surviving unit of a fixed plan), MWh.
    Const(f64),
    /// `amount * gate`: fixed dispatch that vanishes when the gate is 0.
    GatedConst { amount: f64, gate: VarRef },
    /// First-stage dispatch variable, fully surviving.
    Var(VarRef),
    /// Product of the dispatch variable and a binary gate, linearized with
    /// an exact envelope using `cap` as the dispatch upper bound.
    VarGated {
        dispatch: VarRef,
        gate: VarRef,
        cap: f64,
    },
}

/// Downward-redispatch cap of one generator inside an operator block.
#[derive(Debug, Clone)]
pub enum DpRule {
    /// `dp <= amount`.
    Const(f64),
    /// `dp <= dispatch` with a variable dispatch.
    Var(VarRef),
    /// `dp <= amount * gate`.
    GatedConst { amount: f64, gate: VarRef },
    /// `dp <= pw`, the linearization auxiliary created by the injection.
    InjectionAux,
}

/// Per-generator wiring of one operator block.
#[derive(Debug, Clone)]
pub struct GenRules {
    pub up: UpRule,
    pub injection: InjRule,
    pub dp: DpRule,
}

/// Handles of one operator-response block.
#[derive(Debug, Clone)]
pub struct OperatorBlock {
    pub up: Vec<VarRef>,
    pub dp: Vec<VarRef>,
    pub shed: Vec<VarRef>,
    pub flow: Vec<VarRef>,
    pub angle: Vec<VarRef>,
    /// Linearization auxiliary per generator, when the injection needed one.
    pub injection_aux: Vec<Option<VarRef>>,
    /// Redispatch-plus-shedding cost of this block.
    pub cost: LinExpr,
}

/// Adds one post-attack operator block: upward/downward redispatch, load
/// shedding bounded by demand, nodal balance, and a flow block in the given
/// per-branch modes. No angle reference is imposed; attacked topologies may
/// island and flows are shift-invariant.
#[allow(clippy::too_many_arguments)]
pub fn add_operator_block(
    model: &mut Model,
    net: &Network,
    dt: f64,
    voll: f64,
    rules: &[GenRules],
    branch_modes: &[BranchMode],
    policy: &BigMPolicy,
    label: &str,
) -> Result<OperatorBlock> {
    assert_eq!(rules.len(), net.num_generators());
    let flows = add_dc_flow_block(model, net, branch_modes, policy, label)?;

    let mut up = Vec::with_capacity(net.num_generators());
    let mut dp = Vec::with_capacity(net.num_generators());
    let mut injection_aux = vec![None; net.num_generators()];

    for (g, def) in net.generators().iter().enumerate() {
        let gid = def.id;
        let up_var = match &rules[g].up {
            UpRule::Fixed(amount) => {
                model.add_var(format!("up_{label}_{gid}"), 0.0, amount.max(0.0))
            }
            UpRule::GatedConst { amount, gate } => {
                let v = model.add_var(format!("up_{label}_{gid}"), 0.0, f64::INFINITY);
                let mut row = LinExpr::term(v, 1.0);
                row.add(*gate, -amount);
                model.add_constraint(format!("upcap_{label}_{gid}"), row, Cmp::Le, 0.0)?;
                v
            }
            UpRule::Var(reserve) => {
                let v = model.add_var(format!("up_{label}_{gid}"), 0.0, def.capacity * dt);
                let mut row = LinExpr::term(v, 1.0);
                row.add(*reserve, -dt);
                model.add_constraint(format!("upcap_{label}_{gid}"), row, Cmp::Le, 0.0)?;
                v
            }
            UpRule::VarGated { reserve, gate, cap } => {
                let v = model.add_var(format!("up_{label}_{gid}"), 0.0, def.capacity * dt);
                let mut row = LinExpr::term(v, 1.0);
                row.add(*reserve, -dt);
                model.add_constraint(format!("upcap_{label}_{gid}"), row, Cmp::Le, 0.0)?;
                let mut gated = LinExpr::term(v, 1.0);
                gated.add(*gate, -cap);
                model.add_constraint(format!("upgate_{label}_{gid}"), gated, Cmp::Le, 0.0)?;
                v
            }
        };
        up.push(up_var);

        // Exact envelope for dispatch * gate when both are variables.
        if let InjRule::VarGated {
            dispatch,
            gate,
            cap,
        } = &rules[g].injection
        {
            let aux = model.add_var(format!("pw_{label}_{gid}"), 0.0, *cap);
            let mut le_p = LinExpr::term(aux, 1.0);
            le_p.add(*dispatch, -1.0);
            model.add_constraint(format!("pw_le_p_{label}_{gid}"), le_p, Cmp::Le, 0.0)?;
            let mut le_gate = LinExpr::term(aux, 1.0);
            le_gate.add(*gate, -cap);
            model.add_constraint(format!("pw_le_z_{label}_{gid}"), le_gate, Cmp::Le, 0.0)?;
            let mut ge = LinExpr::term(*dispatch, 1.0);
            ge.add(aux, -1.0).add(*gate, *cap);
            model.add_constraint(format!("pw_ge_{label}_{gid}"), ge, Cmp::Le, *cap)?;
            injection_aux[g] = Some(aux);
        }

        let dp_var = match &rules[g].dp {
            DpRule::Const(amount) => {
                model.add_var(format!("dp_{label}_{gid}"), 0.0, amount.max(0.0))
            }
            DpRule::Var(dispatch) => {
                let v = model.add_var(format!("dp_{label}_{gid}"), 0.0, def.capacity * dt);
                let mut row = LinExpr::term(v, 1.0);
                row.add(*dispatch, -1.0);
                model.add_constraint(format!("dpcap_{label}_{gid}"), row, Cmp::Le, 0.0)?;
                v
            }
            DpRule::GatedConst { amount, gate } => {
                let v = model.add_var(format!("dp_{label}_{gid}"), 0.0, f64::INFINITY);
                let mut row = LinExpr::term(v, 1.0);
                row.add(*gate, -amount);
                model.add_constraint(format!("dpcap_{label}_{gid}"), row, Cmp::Le, 0.0)?;
                v
            }
            DpRule::InjectionAux => {
                let aux = injection_aux[g]
                    .ok_or_else(|| Error::Config("dp rule needs an injection auxiliary".into()))?;
                let v = model.add_var(format!("dp_{label}_{gid}"), 0.0, def.capacity * dt);
                let mut row = LinExpr::term(v, 1.0);
                row.add(aux, -1.0);
                model.add_constraint(format!("dpcap_{label}_{gid}"), row, Cmp::Le, 0.0)?;
                v
            }
        };
        dp.push(dp_var);
    }

    let shed: Vec<VarRef> = net
        .buses()
        .iter()
        .map(|b| model.add_var(format!("shed_{label}_{}", b.id), 0.0, b.demand * dt))
        .collect();

    for (n, bus) in net.buses().iter().enumerate() {
        let mut balance = LinExpr::new();
        let mut rhs = bus.demand * dt;
        for &g in net.gens_at(n) {
            balance.add(up[g], 1.0).add(dp[g], -1.0);
            match &rules[g].injection {
                InjRule::Const(amount) => rhs -= amount,
                InjRule::GatedConst { amount, gate } => {
                    balance.add(*gate, *amount);
                }
                InjRule::Var(dispatch) => {
                    balance.add(*dispatch, 1.0);
                }
                InjRule::VarGated { .. } => {
                    balance.add(injection_aux[g].expect("aux created above"), 1.0);
                }
            }
        }
        balance.add(shed[n], 1.0);
        for &t in net.branches_at(n) {
            let tau = if net.branch_from_pos(t) == n {
                1.0
            } else {
                -1.0
            };
            balance.add(flows.flow[t], -tau * dt);
        }
        model.add_constraint(format!("balance_{label}_{}", bus.id), balance, Cmp::Eq, rhs)?;
    }

    let mut cost = LinExpr::new();
    for (g, def) in net.generators().iter().enumerate() {
        cost.add(up[g], def.redispatch_cost);
    }
    for &l in &shed {
        cost.add(l, voll);
    }

    Ok(OperatorBlock {
        up,
        dp,
        shed,
        flow: flows.flow,
        angle: flows.angle,
        injection_aux,
        cost,
    })
}

/// Connected components of the grid under a branch on/off pattern.
/// Returns a component id per bus.
pub fn islands(net: &Network, branch_on: &[bool]) -> Vec<usize> {
    let nb = net.num_buses();
    let mut comp = vec![usize::MAX; nb];
    let mut next = 0;
    let mut stack = Vec::new();
    for start in 0..nb {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = next;
        stack.push(start);
        while let Some(n) = stack.pop() {
            for &t in net.branches_at(n) {
                if !branch_on[t] {
                    continue;
                }
                let other = if net.branch_from_pos(t) == n {
                    net.branch_to_pos(t)
                } else {
                    net.branch_from_pos(t)
                };
                if comp[other] == usize::MAX {
                    comp[other] = next;
                    stack.push(other);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Heuristic check that the angle span assumed by the big-M policy was wide
/// enough: angles are re-centered per island and compared to half the span.
pub fn theta_span_warnings(
    net: &Network,
    angles: &[f64],
    branch_on: &[bool],
    policy: &BigMPolicy,
) -> Vec<String> {
    let comp = islands(net, branch_on);
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut sums = vec![(0.0, 0usize); ncomp];
    for (n, &c) in comp.iter().enumerate() {
        sums[c].0 += angles[n];
        sums[c].1 += 1;
    }
    let half_span = policy.span_units(net) / 2.0;
    let mut out = Vec::new();
    for (n, bus) in net.buses().iter().enumerate() {
        let (sum, count) = sums[comp[n]];
        let centered = angles[n] - sum / count as f64;
        if centered.abs() > half_span {
            out.push(format!(
                "bus {}: angle {centered:.3} exceeds half the configured span {half_span:.3}; \
                 consider a larger theta span",
                bus.id
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::HighsBackend;
    use crate::netdata::{Branch, Bus, Generator};

    fn no_attackers() -> ThreatModel {
        ThreatModel {
            attackers: vec![],
            planner_budget: 0,
            firewall_cost: 5.55,
            voll: 5000.0,
            delta_t: 1.0,
        }
    }

    fn single_bus() -> Network {
        Network::new(
            vec![Bus { id: 1, demand: 5.0 }],
            vec![],
            vec![Generator {
                id: 1,
                bus: 1,
                capacity: 10.0,
                dispatch_cost: 10.0,
                reserve_cost: 2.5,
                redispatch_cost: 10.0,
            }],
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn single_bus_base_opf() {
        let net = single_bus();
        let backend = HighsBackend::new();
        let (plan, objective) = solve_base_opf(
            &backend,
            &net,
            &no_attackers(),
            &BigMPolicy {
                theta_span_rad: std::f64::consts::TAU,
                printed_variant: false,
            },
            &SolveParams::default(),
        )
        .unwrap();
        assert!((objective - 50.0).abs() < 1e-8);
        assert!((plan.dispatch[0] - 5.0).abs() < 1e-8);
        assert_eq!(plan.reserve[0], 0.0);
        assert!(plan_violations(&net, &no_attackers(), &plan).is_empty());
    }

    #[test]
    fn infeasible_when_capacity_short() {
        let mut net = single_bus();
        net = Network::new(
            net.buses()
                .iter()
                .map(|b| Bus {
                    id: b.id,
                    demand: 20.0,
                })
                .collect(),
            vec![],
            net.generators().to_vec(),
            100.0,
        )
        .unwrap();
        let backend = HighsBackend::new();
        let err = solve_base_opf(
            &backend,
            &net,
            &no_attackers(),
            &BigMPolicy {
                theta_span_rad: std::f64::consts::TAU,
                printed_variant: false,
            },
            &SolveParams::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("insufficient generation capacity"));
    }

    #[test]
    fn islands_split_on_cut() {
        let net = Network::new(
            vec![
                Bus { id: 1, demand: 0.0 },
                Bus { id: 2, demand: 0.0 },
                Bus { id: 3, demand: 0.0 },
            ],
            vec![
                Branch {
                    id: 1,
                    from_bus: 1,
                    to_bus: 2,
                    reactance: 0.1,
                    capacity: 10.0,
                },
                Branch {
                    id: 2,
                    from_bus: 2,
                    to_bus: 3,
                    reactance: 0.1,
                    capacity: 10.0,
                },
            ],
            vec![],
            100.0,
        )
        .unwrap();
        let comp = islands(&net, &[true, true]);
        assert!(comp.iter().all(|&c| c == 0));
        let comp = islands(&net, &[true, false]);
        assert_eq!(comp[0], comp[1]);
        assert_ne!(comp[1], comp[2]);
    }
}
