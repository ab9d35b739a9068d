//! Physical grid model: buses, branches, generators, and incidence structure.
//!
//! A [`Network`] is immutable after construction and validated against the
//! referential-integrity rules below, so downstream model builders can index
//! into it without re-checking.

mod matpower;
mod native;

pub use matpower::parse_case;
pub use native::{emit_network_native, parse_network_native};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bus with its active power demand in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: u32,
    pub demand: f64,
}

/// A transmission branch. Reactance is per-unit on the system base,
/// capacity is the thermal rating in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: u32,
    pub from_bus: u32,
    pub to_bus: u32,
    pub reactance: f64,
    pub capacity: f64,
}

/// A generating unit and its cost coefficients (mu/MWh for dispatch and
/// redispatch, mu/MW for reserve capacity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: u32,
    pub bus: u32,
    pub capacity: f64,
    pub dispatch_cost: f64,
    pub reserve_cost: f64,
    pub redispatch_cost: f64,
}

/// Validated grid model with precomputed index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    generators: Vec<Generator>,
    base_mva: f64,
    bus_index: HashMap<u32, usize>,
    branch_from: Vec<usize>,
    branch_to: Vec<usize>,
    gen_bus: Vec<usize>,
    gens_at_bus: Vec<Vec<usize>>,
    branches_at_bus: Vec<Vec<usize>>,
}

impl Network {
    /// Builds a network and checks every structural invariant.
    pub fn new(
        buses: Vec<Bus>,
        branches: Vec<Branch>,
        generators: Vec<Generator>,
        base_mva: f64,
    ) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::InvalidNetwork("network has no buses".into()));
        }
        if base_mva <= 0.0 {
            return Err(Error::InvalidNetwork(format!(
                "base MVA must be positive, got {base_mva}"
            )));
        }
        let mut bus_index = HashMap::with_capacity(buses.len());
        for (k, b) in buses.iter().enumerate() {
            if b.demand < 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "bus {}: negative demand {}",
                    b.id, b.demand
                )));
            }
            if bus_index.insert(b.id, k).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate bus id {}", b.id)));
            }
        }
        let mut seen_branch = HashMap::new();
        let mut branch_from = Vec::with_capacity(branches.len());
        let mut branch_to = Vec::with_capacity(branches.len());
        for t in &branches {
            if seen_branch.insert(t.id, ()).is_some() {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate branch id {}",
                    t.id
                )));
            }
            if t.from_bus == t.to_bus {
                return Err(Error::InvalidNetwork(format!(
                    "branch {}: endpoints coincide at bus {}",
                    t.id, t.from_bus
                )));
            }
            if t.reactance <= 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "branch {}: reactance must be positive, got {}",
                    t.id, t.reactance
                )));
            }
            if t.capacity < 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "branch {}: negative capacity {}",
                    t.id, t.capacity
                )));
            }
            let from = *bus_index.get(&t.from_bus).ok_or_else(|| {
                Error::InvalidNetwork(format!(
                    "branch {} references nonexistent bus {}",
                    t.id, t.from_bus
                ))
            })?;
            let to = *bus_index.get(&t.to_bus).ok_or_else(|| {
                Error::InvalidNetwork(format!(
                    "branch {} references nonexistent bus {}",
                    t.id, t.to_bus
                ))
            })?;
            branch_from.push(from);
            branch_to.push(to);
        }
        let mut seen_gen = HashMap::new();
        let mut gen_bus = Vec::with_capacity(generators.len());
        for g in &generators {
            if seen_gen.insert(g.id, ()).is_some() {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate generator id {}",
                    g.id
                )));
            }
            if g.capacity < 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "generator {}: negative capacity {}",
                    g.id, g.capacity
                )));
            }
            for (label, c) in [
                ("dispatch", g.dispatch_cost),
                ("reserve", g.reserve_cost),
                ("redispatch", g.redispatch_cost),
            ] {
                if c < 0.0 {
                    return Err(Error::InvalidNetwork(format!(
                        "generator {}: negative {label} cost {c}",
                        g.id
                    )));
                }
            }
            let at = *bus_index.get(&g.bus).ok_or_else(|| {
                Error::InvalidNetwork(format!(
                    "generator {} references nonexistent bus {}",
                    g.id, g.bus
                ))
            })?;
            gen_bus.push(at);
        }
        let mut gens_at_bus = vec![Vec::new(); buses.len()];
        for (gi, &bi) in gen_bus.iter().enumerate() {
            gens_at_bus[bi].push(gi);
        }
        let mut branches_at_bus = vec![Vec::new(); buses.len()];
        for ti in 0..branches.len() {
            branches_at_bus[branch_from[ti]].push(ti);
            branches_at_bus[branch_to[ti]].push(ti);
        }
        Ok(Network {
            buses,
            branches,
            generators,
            base_mva,
            bus_index,
            branch_from,
            branch_to,
            gen_bus,
            gens_at_bus,
            branches_at_bus,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    /// Internal index of a bus id.
    pub fn bus_position(&self, id: u32) -> Option<usize> {
        self.bus_index.get(&id).copied()
    }

    /// Internal index of the sending bus of branch `t`.
    pub fn branch_from_pos(&self, t: usize) -> usize {
        self.branch_from[t]
    }

    /// Internal index of the receiving bus of branch `t`.
    pub fn branch_to_pos(&self, t: usize) -> usize {
        self.branch_to[t]
    }

    /// Internal index of the bus hosting generator `g`.
    pub fn gen_bus_pos(&self, g: usize) -> usize {
        self.gen_bus[g]
    }

    /// Generators connected at bus index `n`.
    pub fn gens_at(&self, n: usize) -> &[usize] {
        &self.gens_at_bus[n]
    }

    /// Branches incident to bus index `n`.
    pub fn branches_at(&self, n: usize) -> &[usize] {
        &self.branches_at_bus[n]
    }

    /// Total active power demand in MW.
    pub fn total_demand(&self) -> f64 {
        self.buses.iter().map(|b| b.demand).sum()
    }

    /// Index of the lowest-numbered bus, used as the base-case angle reference.
    pub fn reference_bus_pos(&self) -> usize {
        let mut best = 0;
        for (k, b) in self.buses.iter().enumerate() {
            if b.id < self.buses[best].id {
                best = k;
            }
        }
        best
    }
}

/// Signed branch-bus incidence and generator-bus indicator matrices, dense.
///
/// Row `t` of `tau` holds +1 at the sending bus and -1 at the receiving bus.
/// Row `g` of `gamma` holds 1 at the generator's bus.
pub fn incidence(net: &Network) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let nb = net.num_buses();
    let tau = (0..net.num_branches())
        .map(|t| {
            let mut row = vec![0.0; nb];
            row[net.branch_from_pos(t)] = 1.0;
            row[net.branch_to_pos(t)] = -1.0;
            row
        })
        .collect();
    let gamma = (0..net.num_generators())
        .map(|g| {
            let mut row = vec![0.0; nb];
            row[net.gen_bus_pos(g)] = 1.0;
            row
        })
        .collect();
    (tau, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_bus() -> Network {
        Network::new(
            vec![
                Bus { id: 1, demand: 0.0 },
                Bus {
                    id: 2,
                    demand: 50.0,
                },
                Bus {
                    id: 3,
                    demand: 20.0,
                },
            ],
            vec![
                Branch {
                    id: 1,
                    from_bus: 1,
                    to_bus: 2,
                    reactance: 0.1,
                    capacity: 100.0,
                },
                Branch {
                    id: 2,
                    from_bus: 2,
                    to_bus: 3,
                    reactance: 0.2,
                    capacity: 100.0,
                },
            ],
            vec![Generator {
                id: 1,
                bus: 3,
                capacity: 100.0,
                dispatch_cost: 10.0,
                reserve_cost: 2.5,
                redispatch_cost: 10.0,
            }],
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn incidence_rows_match_definitions() {
        let net = three_bus();
        let (tau, gamma) = incidence(&net);
        assert_eq!(tau[0], vec![1.0, -1.0, 0.0]);
        assert_eq!(gamma[0], vec![0.0, 0.0, 1.0]);
        for row in &tau {
            assert_eq!(row.iter().sum::<f64>(), 0.0);
            assert_eq!(row.iter().map(|v| v.abs()).sum::<f64>(), 2.0);
        }
        for row in &gamma {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn rejects_nonexistent_endpoint() {
        let err = Network::new(
            vec![Bus { id: 1, demand: 0.0 }],
            vec![Branch {
                id: 1,
                from_bus: 1,
                to_bus: 99,
                reactance: 0.1,
                capacity: 10.0,
            }],
            vec![],
            100.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("nonexistent bus 99"));
    }

    #[test]
    fn rejects_zero_reactance() {
        let err = Network::new(
            vec![Bus { id: 1, demand: 0.0 }, Bus { id: 2, demand: 0.0 }],
            vec![Branch {
                id: 1,
                from_bus: 1,
                to_bus: 2,
                reactance: 0.0,
                capacity: 10.0,
            }],
            vec![],
            100.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("reactance"));
    }
}
