//! LP-format text export for external debugging.
//!
//! Field ordering is bit-exact and documented: the objective and every
//! constraint list terms in variable-creation order, bounds and binary
//! sections list variables in creation order, and floats print in Rust's
//! shortest round-trip form.

use std::fmt::Write as _;

use crate::linmodel::{Cmp, LinExpr, Model, Sense, VarKind};

fn push_term(out: &mut String, first: &mut bool, coef: f64, name: &str) {
    if coef == 0.0 {
        return;
    }
    if *first {
        if coef < 0.0 {
            out.push_str("- ");
        }
        *first = false;
    } else if coef < 0.0 {
        out.push_str(" - ");
    } else {
        out.push_str(" + ");
    }
    let mag = coef.abs();
    if mag == 1.0 {
        out.push_str(name);
    } else {
        let _ = write!(out, "{mag} {name}");
    }
}

fn write_expr(out: &mut String, model: &Model, expr: &LinExpr) {
    let mut sorted: Vec<_> = expr.terms().to_vec();
    sorted.sort_by_key(|(v, _)| v.index());
    let mut first = true;
    for (v, c) in sorted {
        push_term(out, &mut first, c, model.var_name(v));
    }
    if first {
        out.push('0');
    }
}

/// Renders a model as CPLEX-style LP text.
pub fn write_lp(model: &Model) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name());
    out.push_str(match model.sense() {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj: ");
    write_expr(&mut out, model, model.objective());
    if model.objective().constant_part() != 0.0 {
        let c = model.objective().constant_part();
        if c < 0.0 {
            let _ = write!(out, " - {}", -c);
        } else {
            let _ = write!(out, " + {c}");
        }
    }
    out.push_str("\nSubject To\n");
    for (k, con) in model.constraints.iter().enumerate() {
        let label = if con.name.is_empty() {
            format!("c{k}")
        } else {
            con.name.clone()
        };
        let _ = write!(out, " {label}: ");
        write_expr(&mut out, model, &con.expr);
        let op = match con.cmp {
            Cmp::Le => "<=",
            Cmp::Eq => "=",
            Cmp::Ge => ">=",
        };
        let _ = writeln!(out, " {op} {}", con.rhs);
    }
    out.push_str("Bounds\n");
    for (k, def) in model.vars.iter().enumerate() {
        if def.kind == VarKind::Binary {
            continue;
        }
        let name = if def.name.is_empty() {
            format!("x{k}")
        } else {
            def.name.clone()
        };
        match (def.lower.is_finite(), def.upper.is_finite()) {
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", def.lower, def.upper);
            }
            (true, false) => {
                let _ = writeln!(out, " {} <= {name}", def.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", def.upper);
            }
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
        }
    }
    let binaries: Vec<_> = model
        .vars
        .iter()
        .filter(|d| d.kind == VarKind::Binary)
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for def in binaries {
            let _ = writeln!(out, " {}", def.name);
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::{Cmp, LinExpr, Model, Sense};

    #[test]
    fn deterministic_export() {
        let build = || {
            let mut m = Model::new("export", Sense::Minimize);
            let x = m.add_var("x", 0.0, 2.5);
            let b = m.add_binary("b");
            let mut e = LinExpr::new();
            e.add(x, 1.0).add(b, -3.0);
            m.add_constraint("link", e, Cmp::Le, 0.5).unwrap();
            m.set_objective(LinExpr::term(x, 2.0)).unwrap();
            m
        };
        let a = write_lp(&build());
        let b = write_lp(&build());
        assert_eq!(a, b);
        assert!(a.contains("Minimize"));
        assert!(a.contains("link: x - 3 b <= 0.5"));
        assert!(a.contains("Binaries"));
    }
}
