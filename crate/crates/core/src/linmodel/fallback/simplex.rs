//! Dense bounded-variable primal simplex, two-phase.
//!
//! Kept deliberately simple: explicit basis inverse, Dantzig pricing with a
//! switch to Bland's rule after a run of degenerate steps, periodic
//! refactorization. Adequate for desk-scale instances; not a sparse solver.

use crate::error::{Error, Result};
use crate::linmodel::Cmp;

const PIVOT_TOL: f64 = 1e-9;
const RCOST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-6;
const DEGENERATE_STEP: f64 = 1e-10;
const BLAND_TRIGGER: usize = 120;
const REFACTOR_EVERY: usize = 120;

/// LP in row form: minimize `obj . x` subject to `rows` and column bounds.
pub struct DenseLp {
    pub obj: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    /// Sparse rows: (terms, comparison, rhs).
    pub rows: Vec<(Vec<(usize, f64)>, Cmp, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum NonbasicAt {
    Lower,
    Upper,
    /// Free variable resting at zero.
    Zero,
}

struct Tableau {
    /// Columns of the full system (structurals, slacks, artificials).
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    nrows: usize,
    basis: Vec<usize>,
    basis_pos: Vec<Option<usize>>,
    at: Vec<NonbasicAt>,
    binv: Vec<Vec<f64>>,
    xb: Vec<f64>,
}

impl Tableau {
    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.at[j] {
            NonbasicAt::Lower => self.lower[j],
            NonbasicAt::Upper => self.upper[j],
            NonbasicAt::Zero => 0.0,
        }
    }

    /// x_B = B^-1 (rhs - A_N x_N), recomputed from scratch.
    fn recompute_xb(&mut self) {
        let mut adjusted = self.rhs.clone();
        for j in 0..self.cols.len() {
            if self.basis_pos[j].is_some() {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v != 0.0 {
                for &(i, a) in &self.cols[j] {
                    adjusted[i] -= a * v;
                }
            }
        }
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for i in 0..self.nrows {
                acc += self.binv[r][i] * adjusted[i];
            }
            self.xb[r] = acc;
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination.
    fn refactorize(&mut self) -> Result<()> {
        let m = self.nrows;
        let mut aug = vec![vec![0.0; 2 * m]; m];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[j] {
                aug[i][r] = a;
            }
        }
        for r in 0..m {
            aug[r][m + r] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            for r in col + 1..m {
                if aug[r][col].abs() > aug[piv][col].abs() {
                    piv = r;
                }
            }
            if aug[piv][col].abs() < 1e-12 {
                return Err(Error::Backend {
                    backend: "fallback".into(),
                    message: "singular basis during refactorization".into(),
                });
            }
            aug.swap(col, piv);
            let scale = aug[col][col];
            for v in aug[col].iter_mut() {
                *v /= scale;
            }
            for r in 0..m {
                if r != col && aug[r][col] != 0.0 {
                    let factor = aug[r][col];
                    let (head, tail) = if r < col {
                        let (a, b) = aug.split_at_mut(col);
                        (&mut a[r], &b[0])
                    } else {
                        let (a, b) = aug.split_at_mut(r);
                        (&mut b[0], &a[col])
                    };
                    for k in 0..2 * m {
                        head[k] -= factor * tail[k];
                    }
                }
            }
        }
        for r in 0..m {
            for i in 0..m {
                self.binv[r][i] = aug[r][m + i];
            }
        }
        self.recompute_xb();
        Ok(())
    }

    fn column_through_binv(&self, j: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows];
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for &(i, a) in &self.cols[j] {
                acc += self.binv[r][i] * a;
            }
            d[r] = acc;
        }
        d
    }

    /// One simplex phase on the given cost vector. Returns false when the
    /// problem is unbounded in this phase.
    fn optimize(&mut self, cost: &[f64], iteration_cap: usize) -> Result<bool> {
        let ncols = self.cols.len();
        let mut bland = false;
        let mut degenerate_run = 0usize;
        let mut since_refactor = 0usize;

        for _ in 0..iteration_cap {
            // y = c_B B^-1
            let mut y = vec![0.0; self.nrows];
            for r in 0..self.nrows {
                let cb = cost[self.basis[r]];
                if cb != 0.0 {
                    for i in 0..self.nrows {
                        y[i] += cb * self.binv[r][i];
                    }
                }
            }

            // Entering variable.
            let mut entering: Option<(usize, f64, f64)> = None; // (col, dir, score)
            for j in 0..ncols {
                if self.basis_pos[j].is_some() || self.lower[j] == self.upper[j] {
                    continue;
                }
                let mut rc = cost[j];
                for &(i, a) in &self.cols[j] {
                    rc -= y[i] * a;
                }
                let candidate = match self.at[j] {
                    NonbasicAt::Lower => (rc < -RCOST_TOL).then_some((j, 1.0, -rc)),
                    NonbasicAt::Upper => (rc > RCOST_TOL).then_some((j, -1.0, rc)),
                    NonbasicAt::Zero => {
                        if rc < -RCOST_TOL {
                            Some((j, 1.0, -rc))
                        } else if rc > RCOST_TOL {
                            Some((j, -1.0, rc))
                        } else {
                            None
                        }
                    }
                };
                if let Some(c) = candidate {
                    if bland {
                        entering = Some(c);
                        break;
                    }
                    if entering.is_none_or(|(_, _, best)| c.2 > best) {
                        entering = Some(c);
                    }
                }
            }
            let Some((e, dir, _)) = entering else {
                return Ok(true); // optimal for this phase
            };

            let d = self.column_through_binv(e);

            // Ratio test.
            let own_range = self.upper[e] - self.lower[e]; // may be +inf
            let mut t_best = own_range;
            let mut leaving: Option<(usize, bool)> = None; // (row, hits_upper)
            for r in 0..self.nrows {
                let delta = -dir * d[r];
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[r];
                let (room, hits_upper) = if delta > 0.0 {
                    if self.upper[b].is_infinite() {
                        continue;
                    }
                    (((self.upper[b] - self.xb[r]) / delta).max(0.0), true)
                } else {
                    if self.lower[b].is_infinite() {
                        continue;
                    }
                    (((self.lower[b] - self.xb[r]) / delta).max(0.0), false)
                };
                let better = match leaving {
                    None => room < t_best,
                    Some((cur, _)) => {
                        room < t_best - 1e-12
                            || (room <= t_best + 1e-12
                                && if bland {
                                    self.basis[r] < self.basis[cur]
                                } else {
                                    d[r].abs() > d[cur].abs()
                                })
                    }
                };
                if better {
                    t_best = room.min(t_best);
                    leaving = Some((r, hits_upper));
                }
            }

            if t_best.is_infinite() {
                return Ok(false); // unbounded ray
            }
            if t_best < DEGENERATE_STEP {
                degenerate_run += 1;
                if degenerate_run > BLAND_TRIGGER {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }

            let start = match self.at[e] {
                NonbasicAt::Lower => self.lower[e],
                NonbasicAt::Upper => self.upper[e],
                NonbasicAt::Zero => 0.0,
            };

            match leaving {
                Some((r, hits_upper)) if t_best < own_range - 1e-12 || own_range.is_infinite() => {
                    // Basis change.
                    let leaving_col = self.basis[r];
                    self.at[leaving_col] = if hits_upper {
                        NonbasicAt::Upper
                    } else {
                        NonbasicAt::Lower
                    };
                    self.basis_pos[leaving_col] = None;

                    // Update remaining basic values, then pivot the inverse.
                    for i in 0..self.nrows {
                        self.xb[i] -= dir * d[i] * t_best;
                    }
                    self.xb[r] = start + dir * t_best;

                    let pivot = d[r];
                    if pivot.abs() < PIVOT_TOL {
                        self.refactorize()?;
                        continue;
                    }
                    let pivot_row: Vec<f64> = self.binv[r].iter().map(|v| v / pivot).collect();
                    for i in 0..self.nrows {
                        if i != r && d[i] != 0.0 {
                            let factor = d[i];
                            for k in 0..self.nrows {
                                self.binv[i][k] -= factor * pivot_row[k];
                            }
                        }
                    }
                    self.binv[r] = pivot_row;
                    self.basis[r] = e;
                    self.basis_pos[e] = Some(r);

                    since_refactor += 1;
                    if since_refactor >= REFACTOR_EVERY {
                        since_refactor = 0;
                        self.refactorize()?;
                    }
                }
                _ => {
                    // Bound flip: entering moves across its own range.
                    self.at[e] = match self.at[e] {
                        NonbasicAt::Lower => NonbasicAt::Upper,
                        NonbasicAt::Upper => NonbasicAt::Lower,
                        NonbasicAt::Zero => unreachable!("free variables have no finite range"),
                    };
                    for i in 0..self.nrows {
                        self.xb[i] -= dir * d[i] * t_best;
                    }
                }
            }
        }
        Err(Error::Backend {
            backend: "fallback".into(),
            message: "simplex iteration limit exceeded".into(),
        })
    }
}

/// Solves the LP, ignoring any integrality markers.
pub fn solve_dense_lp(lp: &DenseLp) -> Result<LpSolution> {
    let n = lp.obj.len();
    let m = lp.rows.len();

    for j in 0..n {
        if lp.col_lower[j] > lp.col_upper[j] {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                x: vec![0.0; n],
            });
        }
    }
    if m == 0 {
        // Bounds-only problem: each variable sits at its best bound.
        let mut x = vec![0.0; n];
        for j in 0..n {
            let c = lp.obj[j];
            x[j] = if c > 0.0 {
                if lp.col_lower[j].is_infinite() {
                    return Ok(LpSolution {
                        status: LpStatus::Unbounded,
                        objective: f64::NEG_INFINITY,
                        x,
                    });
                }
                lp.col_lower[j]
            } else if c < 0.0 {
                if lp.col_upper[j].is_infinite() {
                    return Ok(LpSolution {
                        status: LpStatus::Unbounded,
                        objective: f64::NEG_INFINITY,
                        x,
                    });
                }
                lp.col_upper[j]
            } else if lp.col_lower[j].is_finite() {
                lp.col_lower[j]
            } else if lp.col_upper[j].is_finite() {
                lp.col_upper[j].min(0.0)
            } else {
                0.0
            };
        }
        let objective = lp.obj.iter().zip(&x).map(|(c, v)| c * v).sum();
        return Ok(LpSolution {
            status: LpStatus::Optimal,
            objective,
            x,
        });
    }

    // Assemble columns: structurals, then slacks, then artificials on demand.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut lower = lp.col_lower.clone();
    let mut upper = lp.col_upper.clone();
    let mut rhs = vec![0.0; m];
    for (i, (terms, cmp, b)) in lp.rows.iter().enumerate() {
        rhs[i] = *b;
        for &(j, a) in terms {
            if a != 0.0 {
                cols[j].push((i, a));
            }
        }
        let _ = cmp;
    }
    let slack_base = n;
    for (i, (_, cmp, _)) in lp.rows.iter().enumerate() {
        cols.push(vec![(i, 1.0)]);
        match cmp {
            Cmp::Le => {
                lower.push(0.0);
                upper.push(f64::INFINITY);
            }
            Cmp::Ge => {
                lower.push(f64::NEG_INFINITY);
                upper.push(0.0);
            }
            Cmp::Eq => {
                lower.push(0.0);
                upper.push(0.0);
            }
        }
    }

    let ncols_no_art = cols.len();
    let mut at = Vec::with_capacity(ncols_no_art);
    for j in 0..ncols_no_art {
        at.push(if lower[j].is_finite() {
            NonbasicAt::Lower
        } else if upper[j].is_finite() {
            NonbasicAt::Upper
        } else {
            NonbasicAt::Zero
        });
    }

    // Residual of each row at the initial nonbasic point.
    let mut residual = rhs.clone();
    for (j, col) in cols.iter().enumerate().take(ncols_no_art) {
        let v = match at[j] {
            NonbasicAt::Lower => lower[j],
            NonbasicAt::Upper => upper[j],
            NonbasicAt::Zero => 0.0,
        };
        if v != 0.0 {
            for &(i, a) in col {
                residual[i] -= a * v;
            }
        }
    }

    // Choose the initial basis: the slack where it can absorb the residual,
    // an artificial column otherwise.
    let mut basis = Vec::with_capacity(m);
    let mut need_phase1 = false;
    for i in 0..m {
        let s = slack_base + i;
        // The slack residual must land inside the slack bounds; its own
        // initial nonbasic value is at a bound, so compare directly.
        let r = residual[i];
        let slack_ok = r >= lower[s] - FEAS_TOL && r <= upper[s] + FEAS_TOL;
        if slack_ok {
            basis.push(s);
        } else {
            let sign = if r >= 0.0 { 1.0 } else { -1.0 };
            cols.push(vec![(i, sign)]);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            at.push(NonbasicAt::Lower);
            basis.push(cols.len() - 1);
            need_phase1 = true;
        }
    }

    let ncols = cols.len();
    let mut basis_pos = vec![None; ncols];
    for (r, &j) in basis.iter().enumerate() {
        basis_pos[j] = Some(r);
    }

    let mut tab = Tableau {
        cols,
        lower,
        upper,
        rhs,
        nrows: m,
        basis,
        basis_pos,
        at,
        binv: vec![vec![0.0; m]; m],
        xb: vec![0.0; m],
    };
    tab.refactorize()?;

    let iteration_cap = 20_000 + 200 * (ncols + m);

    if need_phase1 {
        let mut phase1_cost = vec![0.0; ncols];
        for j in ncols_no_art..ncols {
            phase1_cost[j] = 1.0;
        }
        let bounded = tab.optimize(&phase1_cost, iteration_cap)?;
        debug_assert!(bounded, "phase 1 objective is bounded below by zero");
        let infeas: f64 = (ncols_no_art..ncols)
            .map(|j| match tab.basis_pos[j] {
                Some(r) => tab.xb[r].max(0.0),
                None => tab.nonbasic_value(j),
            })
            .sum();
        if infeas > FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                x: vec![0.0; n],
            });
        }
        // Freeze artificials at zero for phase 2.
        for j in ncols_no_art..ncols {
            tab.lower[j] = 0.0;
            tab.upper[j] = 0.0;
            if tab.basis_pos[j].is_none() {
                tab.at[j] = NonbasicAt::Lower;
            }
        }
    }

    let mut cost = vec![0.0; ncols];
    cost[..n].copy_from_slice(&lp.obj);
    let bounded = tab.optimize(&cost, iteration_cap)?;
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: f64::NEG_INFINITY,
            x: vec![0.0; n],
        });
    }

    let mut x = vec![0.0; n];
    for (j, slot) in x.iter_mut().enumerate() {
        *slot = match tab.basis_pos[j] {
            Some(r) => tab.xb[r],
            None => tab.nonbasic_value(j),
        };
    }
    let objective = lp.obj.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective,
        x,
    })
}
