//! Threat landscape: attacker population, planner resources, and cost
//! environment, plus the algorithm knobs carried in the same config file.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netdata::{Generator, Network};

/// Whether an attacker can bypass updated firewall rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    /// Blocked by updated firewall rules.
    Basic,
    /// Bypasses firewall rules entirely.
    Advanced,
}

/// One credible cyber-physical attacker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attacker {
    pub id: String,
    pub capability: Capability,
    /// Number of buses this attacker can intrude simultaneously.
    pub budget: u32,
    /// Manifestation probability.
    pub probability: f64,
}

/// Planner resources, system-wide costs, and the attacker distribution.
#[derive(Debug, Clone)]
pub struct ThreatModel {
    pub attackers: Vec<Attacker>,
    /// Number of buses whose firewall rules the planner can update.
    pub planner_budget: u32,
    /// Cost of one firewall rule update, mu/device.
    pub firewall_cost: f64,
    /// Value of lost load, mu/MWh.
    pub voll: f64,
    /// Market interval length in hours.
    pub delta_t: f64,
}

impl ThreatModel {
    /// Checks the probability mass and per-attacker fields.
    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for a in &self.attackers {
            if !(0.0..=1.0).contains(&a.probability) {
                return Err(Error::InvalidThreat(format!(
                    "attacker `{}`: probability {} outside [0, 1]",
                    a.id, a.probability
                )));
            }
            total += a.probability;
        }
        if total > 1.0 + 1e-12 {
            return Err(Error::InvalidThreat(format!(
                "attacker probabilities sum to {total}, above 1; the residual \
                 mass is the implicit no-attack event and cannot be negative"
            )));
        }
        if self.voll <= 0.0 {
            return Err(Error::InvalidThreat(format!(
                "value of lost load must be positive, got {}",
                self.voll
            )));
        }
        if self.delta_t <= 0.0 {
            return Err(Error::InvalidThreat(format!(
                "interval length must be positive, got {}",
                self.delta_t
            )));
        }
        Ok(())
    }

    /// Shedding must dominate redispatch, otherwise the operator model
    /// would prefer dropping load over deploying reserve.
    pub fn validate_against(&self, net: &Network) -> Result<()> {
        self.validate()?;
        for g in net.generators() {
            if g.redispatch_cost >= self.voll {
                return Err(Error::InvalidThreat(format!(
                    "generator {}: redispatch cost {} is not below the value \
                     of lost load {}",
                    g.id, g.redispatch_cost, self.voll
                )));
            }
        }
        Ok(())
    }
}

/// Which MILP engine executes the solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    #[default]
    Highs,
    Fallback,
}

/// Solver and algorithm knobs, exposed in the `[algorithm]` config section.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmOptions {
    /// Relative convergence tolerance of the generation loop.
    pub tolerance: f64,
    pub max_iterations: u32,
    /// Relative MIP gap requested from the backend.
    pub mip_gap: f64,
    pub feasibility_tol: f64,
    /// Angle span (radians) assumed when sizing branch big-M constants.
    pub theta_span: f64,
    /// Dual bounds are this factor times the value of lost load.
    pub dual_bound_factor: f64,
    pub seed: u64,
    /// Force downward redispatch of disconnected units to zero.
    pub tighten_dp: bool,
    /// Use the asymmetric flow-guard variant exactly as printed in some
    /// write-ups instead of the symmetric guard.
    pub printed_bigm_variant: bool,
    pub backend: BackendChoice,
    /// Maximum operator solves an exhaustive enumeration may perform.
    pub enumeration_cap: u64,
    /// Backend time limit per solve, in seconds.
    pub time_limit: f64,
    /// When set, every master and subproblem model is dumped in LP format
    /// under this directory, keyed by iteration and attacker.
    pub dump_models: Option<String>,
}

impl Default for AlgorithmOptions {
    fn default() -> Self {
        AlgorithmOptions {
            tolerance: 1e-4,
            max_iterations: 100,
            mip_gap: 1e-6,
            feasibility_tol: 1e-7,
            theta_span: 2.0 * std::f64::consts::PI,
            dual_bound_factor: 10.0,
            seed: 0,
            tighten_dp: false,
            printed_bigm_variant: false,
            backend: BackendChoice::default(),
            enumeration_cap: 1_000_000,
            time_limit: 3600.0,
            dump_models: None,
        }
    }
}

/// Cost environment applied to a network before solving.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Value of lost load, mu/MWh.
    pub voll: f64,
    /// Firewall rule update cost, mu/device.
    pub firewall: f64,
    /// Reserve capacity cost as a fraction of each unit's dispatch cost.
    pub reserve_fraction: f64,
    /// Redispatch cost as a factor of each unit's dispatch cost.
    pub redispatch_factor: f64,
    /// Per-generator overrides keyed by generator id.
    pub override_reserve: HashMap<String, f64>,
    pub override_redispatch: HashMap<String, f64>,
    pub override_dispatch: HashMap<String, f64>,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            voll: 5000.0,
            firewall: 5.55,
            reserve_fraction: 0.25,
            redispatch_factor: 1.0,
            override_reserve: HashMap::new(),
            override_redispatch: HashMap::new(),
            override_dispatch: HashMap::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AttackerDef {
    id: String,
    capability: Capability,
    budget: u32,
    probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlannerDef {
    budget: u32,
    #[serde(default = "default_delta_t")]
    delta_t: f64,
}

fn default_delta_t() -> f64 {
    1.0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThreatFile {
    #[serde(default)]
    grid: Option<GridRef>,
    planner: PlannerDef,
    #[serde(default)]
    costs: CostConfig,
    #[serde(default, rename = "attackers")]
    attackers: Vec<AttackerDef>,
    #[serde(default)]
    algorithm: AlgorithmOptions,
}

/// Optional pointer from a threat config to its grid file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRef {
    pub path: String,
    #[serde(default)]
    pub format: GridFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GridFormat {
    #[default]
    Matpower,
    Native,
}

/// Fully parsed threat configuration.
#[derive(Debug, Clone)]
pub struct ThreatConfig {
    pub model: ThreatModel,
    pub costs: CostConfig,
    pub algorithm: AlgorithmOptions,
    pub grid: Option<GridRef>,
}

/// Parses and validates a threat configuration in TOML.
pub fn load_threat_config(source: &str) -> Result<ThreatConfig> {
    let file: ThreatFile =
        toml::from_str(source).map_err(|e| Error::InvalidThreat(e.to_string()))?;
    let model = ThreatModel {
        attackers: file
            .attackers
            .into_iter()
            .map(|a| Attacker {
                id: a.id,
                capability: a.capability,
                budget: a.budget,
                probability: a.probability,
            })
            .collect(),
        planner_budget: file.planner.budget,
        firewall_cost: file.costs.firewall,
        voll: file.costs.voll,
        delta_t: file.planner.delta_t,
    };
    model.validate()?;
    Ok(ThreatConfig {
        model,
        costs: file.costs,
        algorithm: file.algorithm,
        grid: file.grid,
    })
}

/// Emits a threat configuration back to TOML.
pub fn emit_threat_config(config: &ThreatConfig) -> String {
    let file = ThreatFile {
        grid: config.grid.clone(),
        planner: PlannerDef {
            budget: config.model.planner_budget,
            delta_t: config.model.delta_t,
        },
        costs: config.costs.clone(),
        attackers: config
            .model
            .attackers
            .iter()
            .map(|a| AttackerDef {
                id: a.id.clone(),
                capability: a.capability,
                budget: a.budget,
                probability: a.probability,
            })
            .collect(),
        algorithm: config.algorithm.clone(),
    };
    toml::to_string(&file).expect("threat config serialization cannot fail")
}

/// Returns a copy of the network with reserve and redispatch costs derived
/// from dispatch costs: reserve at `reserve_fraction` of dispatch cost and
/// redispatch at `redispatch_factor` (both overridable per generator).
pub fn apply_default_costs(net: &Network, costs: &CostConfig) -> Result<Network> {
    if costs.reserve_fraction < 0.0 {
        return Err(Error::InvalidThreat(format!(
            "reserve fraction must be nonnegative, got {}",
            costs.reserve_fraction
        )));
    }
    let generators = net
        .generators()
        .iter()
        .map(|g| {
            let key = g.id.to_string();
            let dispatch = costs
                .override_dispatch
                .get(&key)
                .copied()
                .unwrap_or(g.dispatch_cost);
            Generator {
                dispatch_cost: dispatch,
                reserve_cost: costs
                    .override_reserve
                    .get(&key)
                    .copied()
                    .unwrap_or(costs.reserve_fraction * dispatch),
                redispatch_cost: costs
                    .override_redispatch
                    .get(&key)
                    .copied()
                    .unwrap_or(costs.redispatch_factor * dispatch),
                ..g.clone()
            }
        })
        .collect();
    Network::new(
        net.buses().to_vec(),
        net.branches().to_vec(),
        generators,
        net.base_mva(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdata::{Branch, Bus};

    const CASE_A_STYLE: &str = r#"
[planner]
budget = 24

[costs]
voll = 5000.0
firewall = 5.55
reserve_fraction = 0.25

[[attackers]]
id = "bsc"
capability = "basic"
budget = 2
probability = 0.01
"#;

    #[test]
    fn loads_single_basic_attacker() {
        let config = load_threat_config(CASE_A_STYLE).unwrap();
        assert_eq!(config.model.attackers.len(), 1);
        assert_eq!(config.model.attackers[0].capability, Capability::Basic);
        assert_eq!(config.model.planner_budget, 24);
        assert_eq!(config.model.delta_t, 1.0);
        assert_eq!(config.algorithm.tolerance, 1e-4);
    }

    #[test]
    fn loads_mixed_attackers() {
        let text = CASE_A_STYLE.to_string()
            + "\n[[attackers]]\nid = \"adv\"\ncapability = \"advanced\"\nbudget = 2\nprobability = 0.005\n";
        let text = text.replace("probability = 0.01", "probability = 0.005");
        let config = load_threat_config(&text).unwrap();
        assert_eq!(config.model.attackers.len(), 2);
    }

    #[test]
    fn empty_attacker_list_is_valid() {
        let config = load_threat_config("[planner]\nbudget = 0\n").unwrap();
        assert!(config.model.attackers.is_empty());
    }

    #[test]
    fn rejects_excess_probability() {
        let text = CASE_A_STYLE.replace("probability = 0.01", "probability = 1.5");
        assert!(load_threat_config(&text).is_err());
    }

    #[test]
    fn config_round_trips() {
        let config = load_threat_config(CASE_A_STYLE).unwrap();
        let emitted = emit_threat_config(&config);
        let reparsed = load_threat_config(&emitted).unwrap();
        assert_eq!(reparsed.model.planner_budget, config.model.planner_budget);
        assert_eq!(reparsed.model.attackers.len(), 1);
        assert_eq!(reparsed.costs.voll, config.costs.voll);
        assert_eq!(reparsed.algorithm.seed, config.algorithm.seed);
    }

    fn one_gen_net(dispatch_cost: f64) -> Network {
        Network::new(
            vec![Bus { id: 1, demand: 5.0 }, Bus { id: 2, demand: 0.0 }],
            vec![Branch {
                id: 1,
                from_bus: 1,
                to_bus: 2,
                reactance: 0.1,
                capacity: 10.0,
            }],
            vec![Generator {
                id: 1,
                bus: 1,
                capacity: 10.0,
                dispatch_cost,
                reserve_cost: 0.0,
                redispatch_cost: dispatch_cost,
            }],
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn derives_reserve_cost_as_fraction() {
        let net = one_gen_net(40.0);
        let costs = CostConfig {
            reserve_fraction: 0.25,
            ..CostConfig::default()
        };
        let out = apply_default_costs(&net, &costs).unwrap();
        assert_eq!(out.generators()[0].reserve_cost, 10.0);
        assert_eq!(out.generators()[0].redispatch_cost, 40.0);
    }

    #[test]
    fn zero_fraction_makes_reserve_free() {
        let net = one_gen_net(40.0);
        let costs = CostConfig {
            reserve_fraction: 0.0,
            ..CostConfig::default()
        };
        let out = apply_default_costs(&net, &costs).unwrap();
        assert_eq!(out.generators()[0].reserve_cost, 0.0);
    }
}
