//! Parser for MATPOWER-style case files.
//!
//! Reads the `bus`, `gen`, `branch`, and `gencost` tables of an `.m` case
//! file. Only the columns used by the DC model are kept: demand, reactance,
//! thermal rating, generator capacity, and the linear coefficient of the
//! polynomial cost. Out-of-service branches and generators (status 0) are
//! dropped at parse time. Piecewise-linear cost rows and polynomials of
//! order above quadratic are rejected.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::netdata::{Branch, Bus, Generator, Network};

// MATPOWER column positions (0-based).
const BUS_I: usize = 0;
const BUS_PD: usize = 2;
const GEN_BUS: usize = 0;
const GEN_STATUS: usize = 7;
const GEN_PMAX: usize = 8;
const BR_FROM: usize = 0;
const BR_TO: usize = 1;
const BR_X: usize = 3;
const BR_RATE_A: usize = 5;
const BR_STATUS: usize = 10;
const COST_MODEL: usize = 0;
const COST_NPOINTS: usize = 3;
const MODEL_POLYNOMIAL: u32 = 2;

struct RawTable {
    rows: Vec<Vec<f64>>,
    /// Source line number of each row, for error messages.
    lines: Vec<usize>,
}

fn parse_tables(source: &str) -> Result<(f64, HashMap<String, RawTable>)> {
    let mut tables = HashMap::new();
    let mut base_mva = None;
    let mut current: Option<(String, RawTable)> = None;

    for (lineno, raw_line) in source.lines().enumerate() {
        let line = raw_line.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((name, table)) = current.as_mut() {
            if line.starts_with("];") || line == "]" {
                let (name, table) = current.take().unwrap();
                tables.insert(name, table);
                continue;
            }
            let row_text = line.trim_end_matches(';').trim();
            if row_text.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for field in row_text.split_whitespace() {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    section: name.clone(),
                    line: lineno + 1,
                    message: format!("non-numeric field `{field}`"),
                })?;
                row.push(v);
            }
            table.rows.push(row);
            table.lines.push(lineno + 1);
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.baseMVA") {
            let value = rest
                .trim_start_matches(['=', ' '])
                .trim_end_matches(';')
                .trim();
            base_mva = Some(value.parse().map_err(|_| Error::Parse {
                section: "baseMVA".into(),
                line: lineno + 1,
                message: format!("invalid base MVA `{value}`"),
            })?);
            continue;
        }
        if let Some(rest) = line.strip_prefix("mpc.") {
            if let Some(eq) = rest.find('=') {
                let name = rest[..eq].trim().to_string();
                let tail = rest[eq + 1..].trim();
                if tail.starts_with('[') {
                    current = Some((
                        name,
                        RawTable {
                            rows: Vec::new(),
                            lines: Vec::new(),
                        },
                    ));
                    // Single-line table: mpc.x = [ ... ];
                    let inline = tail.trim_start_matches('[').trim();
                    if let Some(body) = inline.strip_suffix("];") {
                        let (name, mut table) = current.take().unwrap();
                        for row_text in body.split(';') {
                            let row_text = row_text.trim();
                            if row_text.is_empty() {
                                continue;
                            }
                            let row = row_text
                                .split_whitespace()
                                .map(|f| {
                                    f.parse().map_err(|_| Error::Parse {
                                        section: name.clone(),
                                        line: lineno + 1,
                                        message: format!("non-numeric field `{f}`"),
                                    })
                                })
                                .collect::<Result<Vec<f64>>>()?;
                            table.rows.push(row);
                            table.lines.push(lineno + 1);
                        }
                        tables.insert(name, table);
                    }
                }
            }
        }
    }
    let base = base_mva.ok_or_else(|| Error::Parse {
        section: "baseMVA".into(),
        line: 0,
        message: "mpc.baseMVA not found".into(),
    })?;
    Ok((base, tables))
}

fn require_cols(table: &RawTable, name: &str, min_cols: usize) -> Result<()> {
    for (row, line) in table.rows.iter().zip(&table.lines) {
        if row.len() < min_cols {
            return Err(Error::Parse {
                section: name.into(),
                line: *line,
                message: format!("expected at least {min_cols} columns, got {}", row.len()),
            });
        }
    }
    Ok(())
}

/// Parses MATPOWER-style case text into a validated [`Network`].
pub fn parse_case(source: &str) -> Result<Network> {
    let (base_mva, mut tables) = parse_tables(source)?;

    let bus_table = tables.remove("bus").ok_or_else(|| Error::Parse {
        section: "bus".into(),
        line: 0,
        message: "bus table missing".into(),
    })?;
    let gen_table = tables.remove("gen").ok_or_else(|| Error::Parse {
        section: "gen".into(),
        line: 0,
        message: "gen table missing".into(),
    })?;
    let branch_table = tables.remove("branch").ok_or_else(|| Error::Parse {
        section: "branch".into(),
        line: 0,
        message: "branch table missing".into(),
    })?;
    let cost_table = tables.remove("gencost").ok_or_else(|| Error::Parse {
        section: "gencost".into(),
        line: 0,
        message: "costs required: gencost table missing".into(),
    })?;

    require_cols(&bus_table, "bus", 3)?;
    require_cols(&gen_table, "gen", 9)?;
    require_cols(&branch_table, "branch", 11)?;
    require_cols(&cost_table, "gencost", 4)?;

    // MATPOWER allows ngen or 2*ngen gencost rows (the second block prices
    // reactive power, which the DC model ignores).
    let ngen = gen_table.rows.len();
    if cost_table.rows.len() != ngen && cost_table.rows.len() != 2 * ngen {
        return Err(Error::Parse {
            section: "gencost".into(),
            line: cost_table.lines.first().copied().unwrap_or(0),
            message: format!(
                "gencost has {} rows for {} generators",
                cost_table.rows.len(),
                ngen
            ),
        });
    }

    let buses: Vec<Bus> = bus_table
        .rows
        .iter()
        .map(|row| Bus {
            id: row[BUS_I] as u32,
            demand: row[BUS_PD],
        })
        .collect();

    let mut branches = Vec::new();
    for (row, line) in branch_table.rows.iter().zip(&branch_table.lines) {
        if row[BR_STATUS] == 0.0 {
            continue;
        }
        let rating = row[BR_RATE_A];
        if rating <= 0.0 {
            return Err(Error::Parse {
                section: "branch".into(),
                line: *line,
                message: "a finite thermal rating (rateA > 0) is required; \
                          the MATPOWER `0 = unlimited` convention is not supported"
                    .into(),
            });
        }
        branches.push(Branch {
            id: branches.len() as u32 + 1,
            from_bus: row[BR_FROM] as u32,
            to_bus: row[BR_TO] as u32,
            reactance: row[BR_X],
            capacity: rating,
        });
    }

    let mut generators = Vec::new();
    for (k, (row, line)) in gen_table.rows.iter().zip(&gen_table.lines).enumerate() {
        if row[GEN_STATUS] <= 0.0 {
            continue;
        }
        let cost_row = &cost_table.rows[k];
        let cost_line = cost_table.lines[k];
        if cost_row[COST_MODEL] as u32 != MODEL_POLYNOMIAL {
            return Err(Error::Parse {
                section: "gencost".into(),
                line: cost_line,
                message: "piecewise-linear cost rows are not supported; \
                          polynomial (model 2) required"
                    .into(),
            });
        }
        let npoints = cost_row[COST_NPOINTS] as usize;
        if cost_row.len() < 4 + npoints {
            return Err(Error::Parse {
                section: "gencost".into(),
                line: cost_line,
                message: format!("cost row declares {npoints} coefficients but has fewer"),
            });
        }
        // Polynomial coefficients come highest order first. The DC model
        // prices energy linearly, so the linear coefficient is kept and a
        // quadratic term, when present, is ignored. Anything above quadratic
        // is rejected rather than silently truncated.
        let linear = match npoints {
            0 | 1 => 0.0,
            2 => cost_row[4],
            3 => cost_row[5],
            _ => {
                return Err(Error::Parse {
                    section: "gencost".into(),
                    line: cost_line,
                    message: format!(
                        "polynomial of order {} not supported (quadratic at most)",
                        npoints - 1
                    ),
                })
            }
        };
        if linear < 0.0 {
            return Err(Error::Parse {
                section: "gencost".into(),
                line: cost_line,
                message: format!("negative dispatch cost {linear}"),
            });
        }
        let _ = line;
        generators.push(Generator {
            id: generators.len() as u32 + 1,
            bus: row[GEN_BUS] as u32,
            capacity: row[GEN_PMAX],
            dispatch_cost: linear,
            reserve_cost: 0.0,
            redispatch_cost: linear,
        });
    }

    Network::new(buses, branches, generators, base_mva)
}
