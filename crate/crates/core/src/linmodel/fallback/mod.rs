//! Pure-Rust fallback backend: branch-and-bound over the dense simplex.

mod simplex;

pub(crate) use simplex::{solve_dense_lp, DenseLp, LpStatus};

use crate::error::{Error, Result};
use crate::linmodel::{Backend, Model, Sense, SolveParams, SolveResult, SolveStatus, VarKind};

const INT_TOL: f64 = 1e-6;
const NODE_CAP: usize = 500_000;

/// Branch-and-bound MILP solver over [`solve_dense_lp`].
///
/// Depth-first with best-child plunging; exact on the desk-scale models this
/// crate builds, not tuned for large instances.
pub struct FallbackBackend;

impl FallbackBackend {
    pub fn new() -> Self {
        FallbackBackend
    }
}

impl Default for FallbackBackend {
    fn default() -> Self {
        Self::new()
    }
}

struct Node {
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// LP bound of the parent, used for pruning before the node is solved.
    parent_bound: f64,
}

impl Backend for FallbackBackend {
    fn name(&self) -> &'static str {
        "fallback"
    }

    fn solve(&self, model: &Model, params: &SolveParams) -> Result<SolveResult> {
        let n = model.num_vars();
        let flip = match model.sense() {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut obj = vec![0.0; n];
        for &(v, c) in model.objective().terms() {
            obj[v.index()] += flip * c;
        }
        let obj_constant = flip * model.objective().constant_part();

        let rows: Vec<_> = model
            .constraints
            .iter()
            .map(|con| {
                let terms: Vec<_> = con
                    .expr
                    .terms()
                    .iter()
                    .map(|&(v, c)| (v.index(), c))
                    .collect();
                (terms, con.cmp, con.rhs)
            })
            .collect();

        let binaries: Vec<usize> = model
            .vars
            .iter()
            .enumerate()
            .filter(|(_, d)| d.kind == VarKind::Binary)
            .map(|(k, _)| k)
            .collect();

        let root_lower: Vec<f64> = model.vars.iter().map(|d| d.lower).collect();
        let root_upper: Vec<f64> = model.vars.iter().map(|d| d.upper).collect();

        let lp_for = |lower: &[f64], upper: &[f64]| DenseLp {
            obj: obj.clone(),
            col_lower: lower.to_vec(),
            col_upper: upper.to_vec(),
            rows: rows.clone(),
        };

        let mut incumbent: Option<(f64, Vec<f64>)> = None;
        let mut stack = vec![Node {
            lower: root_lower,
            upper: root_upper,
            parent_bound: f64::NEG_INFINITY,
        }];
        let mut nodes = 0usize;
        let mut root_status: Option<LpStatus> = None;
        let mut hit_cap = false;

        while let Some(node) = stack.pop() {
            if nodes >= NODE_CAP {
                hit_cap = true;
                break;
            }
            nodes += 1;

            if let Some((best, _)) = &incumbent {
                if node.parent_bound >= *best - 1e-12 * best.abs().max(1.0) {
                    continue;
                }
            }

            let sol = solve_dense_lp(&lp_for(&node.lower, &node.upper))?;
            if nodes == 1 {
                root_status = Some(sol.status);
            }
            match sol.status {
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => {
                    if binaries.is_empty() {
                        return Ok(SolveResult {
                            status: SolveStatus::Unbounded,
                            objective_value: f64::NAN,
                            primal: vec![0.0; n],
                            mip_gap: f64::INFINITY,
                        });
                    }
                    // A bounded-binary relaxation can only be unbounded in
                    // its continuous part; the MILP is unbounded too.
                    return Ok(SolveResult {
                        status: SolveStatus::Unbounded,
                        objective_value: f64::NAN,
                        primal: vec![0.0; n],
                        mip_gap: f64::INFINITY,
                    });
                }
                LpStatus::Optimal => {}
            }
            if let Some((best, _)) = &incumbent {
                if sol.objective >= *best - params.mip_gap * best.abs().max(1.0) {
                    continue;
                }
            }

            // Most fractional binary.
            let mut branch: Option<(usize, f64)> = None;
            for &j in &binaries {
                let frac = (sol.x[j] - sol.x[j].round()).abs();
                if frac > INT_TOL && branch.is_none_or(|(_, f)| frac > f) {
                    branch = Some((j, frac));
                }
            }

            match branch {
                None => {
                    let mut x = sol.x.clone();
                    for &j in &binaries {
                        x[j] = x[j].round();
                    }
                    let value: f64 =
                        obj.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>() + obj_constant;
                    if incumbent.as_ref().is_none_or(|(best, _)| value < *best) {
                        incumbent = Some((value, x));
                    }
                }
                Some((j, _)) => {
                    let mut zero = Node {
                        lower: node.lower.clone(),
                        upper: node.upper.clone(),
                        parent_bound: sol.objective,
                    };
                    zero.upper[j] = 0.0;
                    let mut one = Node {
                        lower: node.lower,
                        upper: node.upper,
                        parent_bound: sol.objective,
                    };
                    one.lower[j] = 1.0;
                    // Push the side the relaxation points away from first, so
                    // the rounded side is explored next (LIFO).
                    if sol.x[j] >= 0.5 {
                        stack.push(zero);
                        stack.push(one);
                    } else {
                        stack.push(one);
                        stack.push(zero);
                    }
                }
            }
        }

        match incumbent {
            Some((value, x)) => Ok(SolveResult {
                status: if hit_cap {
                    SolveStatus::Limit
                } else {
                    SolveStatus::Optimal
                },
                objective_value: flip * value,
                primal: x,
                mip_gap: if hit_cap { f64::INFINITY } else { 0.0 },
            }),
            None => {
                if hit_cap {
                    return Err(Error::Backend {
                        backend: "fallback".into(),
                        message: format!("node cap {NODE_CAP} reached without an incumbent"),
                    });
                }
                let status = match root_status {
                    Some(LpStatus::Unbounded) => SolveStatus::Unbounded,
                    _ => SolveStatus::Infeasible,
                };
                Ok(SolveResult {
                    status,
                    objective_value: f64::NAN,
                    primal: vec![0.0; n],
                    mip_gap: f64::INFINITY,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::{Cmp, LinExpr};

    #[test]
    fn knapsack_is_exact() {
        // max 10a + 13b + 7c st 3a + 4b + 2c <= 6 -> {a, c} = 17 vs {b} = 13
        // vs {a,b} infeasible; best is a + c + slack... check: a+c weight 5
        // fits, value 17; b+c weight 6 fits, value 20. Optimum 20.
        let mut m = Model::new("knapsack", Sense::Maximize);
        let a = m.add_binary("a");
        let b = m.add_binary("b");
        let c = m.add_binary("c");
        let mut w = LinExpr::new();
        w.add(a, 3.0).add(b, 4.0).add(c, 2.0);
        m.add_constraint("weight", w, Cmp::Le, 6.0).unwrap();
        let mut v = LinExpr::new();
        v.add(a, 10.0).add(b, 13.0).add(c, 7.0);
        m.set_objective(v).unwrap();
        let r = FallbackBackend::new()
            .solve(&m, &SolveParams::default())
            .unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective_value - 20.0).abs() < 1e-9);
    }

    #[test]
    fn big_m_indicator() {
        // min y st x <= 10*b, x >= 4, y >= b, x <= 10 -> b must be 1.
        let mut m = Model::new("indicator", Sense::Minimize);
        let x = m.add_var("x", 0.0, 10.0);
        let b = m.add_binary("b");
        let y = m.add_var("y", 0.0, 1.0);
        let mut link = LinExpr::new();
        link.add(x, 1.0).add(b, -10.0);
        m.add_constraint("link", link, Cmp::Le, 0.0).unwrap();
        m.add_constraint("floor", LinExpr::term(x, 1.0), Cmp::Ge, 4.0)
            .unwrap();
        let mut yb = LinExpr::new();
        yb.add(y, 1.0).add(b, -1.0);
        m.add_constraint("yb", yb, Cmp::Ge, 0.0).unwrap();
        m.set_objective(LinExpr::term(y, 1.0)).unwrap();
        let r = FallbackBackend::new()
            .solve(&m, &SolveParams::default())
            .unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective_value - 1.0).abs() < 1e-9);
    }
}
