//! Co-optimization of cyber-security (firewall rule updates) and
//! physical-security (reserve procurement) measures for a transmission grid
//! facing a probability distribution of cyber-physical attackers.
//!
//! The planning problem is a three-actor game: a planner commits dispatch,
//! reserve, and firewall updates; each credible attacker then intrudes buses
//! and disconnects equipment to maximize operating cost; the operator finally
//! redispatches and sheds load at the value of lost load. The crate solves
//! the planner's problem with a column-and-constraint generation loop whose
//! master and per-attacker subproblems are mixed-integer linear programs.
//!
//! Module map:
//! - [`netdata`]: grid model and parsers (MATPOWER-style and native TOML).
//! - [`threat`]: attacker population, costs, and algorithm options.
//! - [`linmodel`]: solver-agnostic model construction and backends.
//! - [`powerflow`]: DC power flow blocks and the base-case OPF.
//! - [`attacksub`]: per-attacker worst-case subproblem via strong duality.
//! - [`master`]: the single-level master problem over pooled attack vectors.
//! - [`ccg`]: the generation loop, bounds, and per-iteration trace.
//! - [`oracle`]: exhaustive enumeration ground truth for small instances.
//! - [`report`]: normalized summary/trace records and table rendering.

pub mod attacksub;
pub mod ccg;
pub mod error;
pub mod linmodel;
pub mod master;
pub mod netdata;
pub mod oracle;
pub mod powerflow;
pub mod report;
pub mod threat;

pub use error::{Error, Result};
