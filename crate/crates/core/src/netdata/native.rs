//! Native grid format: TOML mirroring the [`Network`] fields.
//!
//! The schema is documented in `docs/formats.md`. Parsing and emission
//! round-trip exactly on all numeric fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netdata::{Branch, Bus, Generator, Network};

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    base_mva: f64,
    #[serde(rename = "bus")]
    buses: Vec<Bus>,
    #[serde(rename = "branch", default)]
    branches: Vec<Branch>,
    #[serde(rename = "generator", default)]
    generators: Vec<Generator>,
}

/// Parses the native TOML grid format.
pub fn parse_network_native(source: &str) -> Result<Network> {
    let file: NetworkFile =
        toml::from_str(source).map_err(|e| Error::InvalidNetwork(format!("native format: {e}")))?;
    Network::new(file.buses, file.branches, file.generators, file.base_mva)
}

/// Emits a network in the native TOML grid format.
pub fn emit_network_native(net: &Network) -> String {
    let file = NetworkFile {
        base_mva: net.base_mva(),
        buses: net.buses().to_vec(),
        branches: net.branches().to_vec(),
        generators: net.generators().to_vec(),
    };
    toml::to_string(&file).expect("network serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
base_mva = 100.0

[[bus]]
id = 1
demand = 0.0

[[bus]]
id = 2
demand = 42.5

[[branch]]
id = 1
from_bus = 1
to_bus = 2
reactance = 0.13
capacity = 80.0

[[generator]]
id = 1
bus = 1
capacity = 60.0
dispatch_cost = 12.5
reserve_cost = 3.125
redispatch_cost = 12.5
"#;

    #[test]
    fn round_trips_exactly() {
        let net = parse_network_native(TOY).unwrap();
        let emitted = emit_network_native(&net);
        let reparsed = parse_network_native(&emitted).unwrap();
        assert_eq!(net, reparsed);
    }

    #[test]
    fn rejects_zero_reactance() {
        let text = TOY.replace("reactance = 0.13", "reactance = 0.0");
        assert!(parse_network_native(&text).is_err());
    }
}
