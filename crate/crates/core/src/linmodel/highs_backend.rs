//! Backend adapter for the HiGHS engine.

use highs::{HighsModelStatus, RowProblem, Sense as HighsSense};

use crate::error::{Error, Result};
use crate::linmodel::{Backend, Cmp, Model, Sense, SolveParams, SolveResult, SolveStatus, VarKind};

/// Wraps HiGHS behind the [`Backend`] contract.
///
/// Every solve builds a fresh single-threaded HiGHS instance with a fixed
/// random seed, so repeated solves of the same model are deterministic and
/// concurrent solves of distinct models are safe.
pub struct HighsBackend;

impl HighsBackend {
    pub fn new() -> Self {
        HighsBackend
    }
}

impl Default for HighsBackend {
    fn default() -> Self {
        Self::new()
    }
}

impl Backend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, model: &Model, params: &SolveParams) -> Result<SolveResult> {
        if model.num_vars() == 0 {
            return Ok(SolveResult {
                status: SolveStatus::Optimal,
                objective_value: model.objective().constant_part(),
                primal: Vec::new(),
                mip_gap: 0.0,
            });
        }

        let mut objective = vec![0.0; model.num_vars()];
        for &(v, c) in model.objective().terms() {
            objective[v.index()] += c;
        }

        let mut pb = RowProblem::default();
        let mut cols = Vec::with_capacity(model.num_vars());
        let mut has_integer = false;
        for (k, def) in model.vars.iter().enumerate() {
            let col = match def.kind {
                VarKind::Continuous => pb.add_column(objective[k], def.lower..=def.upper),
                VarKind::Binary => {
                    has_integer = true;
                    pb.add_integer_column(objective[k], def.lower..=def.upper)
                }
            };
            cols.push(col);
        }
        for con in &model.constraints {
            let factors: Vec<_> = con
                .expr
                .terms()
                .iter()
                .map(|&(v, c)| (cols[v.index()], c))
                .collect();
            match con.cmp {
                Cmp::Le => pb.add_row(..=con.rhs, &factors),
                Cmp::Ge => pb.add_row(con.rhs.., &factors),
                Cmp::Eq => pb.add_row(con.rhs..=con.rhs, &factors),
            };
        }

        let sense = match model.sense() {
            Sense::Minimize => HighsSense::Minimise,
            Sense::Maximize => HighsSense::Maximise,
        };
        let mut highs_model = pb.optimise(sense);
        highs_model.set_option("output_flag", false);
        highs_model.set_option("threads", 1);
        highs_model.set_option("random_seed", (params.seed & 0x7fff_ffff) as i32);
        highs_model.set_option("mip_rel_gap", params.mip_gap);
        highs_model.set_option("primal_feasibility_tolerance", params.feasibility_tol);
        highs_model.set_option("time_limit", params.time_limit);

        let solved = highs_model.try_solve().map_err(|status| Error::Backend {
            backend: "highs".into(),
            message: format!(
                "solve call failed with status {status:?} on model `{}` \
                 ({} vars, {} rows)",
                model.name(),
                model.num_vars(),
                model.num_constraints()
            ),
        })?;

        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                SolveStatus::Unbounded
            }
            HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
                SolveStatus::Limit
            }
            other => {
                return Err(Error::Backend {
                    backend: "highs".into(),
                    message: format!("unexpected model status {other:?}"),
                })
            }
        };

        let (primal, objective_value, mip_gap) = if status == SolveStatus::Optimal {
            let primal = solved.get_solution().columns().to_vec();
            let value = model.objective().eval(&primal);
            let gap = if has_integer {
                let g = solved.mip_gap();
                if g.is_finite() {
                    g
                } else {
                    0.0
                }
            } else {
                0.0
            };
            (primal, value, gap)
        } else {
            (vec![0.0; model.num_vars()], f64::NAN, f64::INFINITY)
        };

        Ok(SolveResult {
            status,
            objective_value,
            primal,
            mip_gap,
        })
    }
}
