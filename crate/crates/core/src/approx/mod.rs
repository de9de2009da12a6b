//! Cut families and the φ fragments that embed cuts into stage subproblems.

pub mod registry;

use serde::{Deserialize, Serialize};

use crate::ambiguity::{wasserstein_polytope, worst_case_distribution};
use crate::lp::{lp_relaxation, solve_lp, solve_mip, LpProblem, LpSolution, LpStatus, Relation};
use crate::model::{build_subproblem, ApproxFragment, LinkMode, ScenarioSupport, StageScenario, StageTemplate, Subproblem};
use crate::{Error, Result};

pub use registry::{builtin_registry, CutLayout, RefineInput, Registry, StageCuts, ValueApproximation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    Benders,
    StrengthenedBenders,
    IntegerOptimality,
    DrrAggregate,
    DroAggregate,
    Expectation,
    DdWasserstein,
    Floor,
}

/// Affine minorant `αᵀx + β` in the state of stage `stage`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub stage: usize,
    /// Next-stage realization the cut belongs to; `None` for aggregate cuts.
    pub scenario: Option<usize>,
    pub alpha: Vec<f64>,
    pub beta: f64,
    pub kind: CutKind,
    pub iteration: usize,
}

impl Cut {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.beta + self.alpha.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }

    pub fn constant(stage: usize, scenario: Option<usize>, d_x: usize, value: f64) -> Self {
        Cut { stage, scenario, alpha: vec![0.0; d_x], beta: value, kind: CutKind::Floor, iteration: 0 }
    }
}

/// Benders cut read off an optimal LP relaxation at `x_prev`:
/// α = −Cᵀy over the stage rows, β = value − αᵀx_prev.
pub fn benders_cut(sub: &Subproblem, sol: &LpSolution, data: &StageScenario, x_prev: &[f64]) -> Cut {
    let d = x_prev.len();
    let mut alpha = vec![0.0; d];
    for (k, r) in sub.stage_rows.clone().enumerate() {
        let y = sol.duals[r];
        if y != 0.0 {
            for j in 0..d {
                alpha[j] -= y * data.rows.c[k][j];
            }
        }
    }
    let beta = sol.objective - alpha.iter().zip(x_prev).map(|(a, x)| a * x).sum::<f64>();
    Cut { stage: 0, scenario: None, alpha, beta, kind: CutKind::Benders, iteration: 0 }
}

/// `Q ≥ (q̂ − L)(Σ 2x̂_i x_i − x_i − x̂_i) + q̂`.
pub fn integer_optimality_cut(q_hat: f64, x_hat: &[f64], lower: f64) -> Result<Cut> {
    if lower > q_hat + 1e-9 * (1.0 + q_hat.abs()) {
        return Err(Error::BadBound { lower, value: q_hat });
    }
    let gap = (q_hat - lower).max(0.0);
    let alpha: Vec<f64> = x_hat.iter().map(|&x| gap * (2.0 * x - 1.0)).collect();
    let beta = q_hat - gap * x_hat.iter().sum::<f64>();
    Ok(Cut { stage: 0, scenario: None, alpha, beta, kind: CutKind::IntegerOptimality, iteration: 0 })
}

fn stage_failure(status: LpStatus) -> Error {
    Error::StageFailure {
        stage: 0,
        scenario: 0,
        status: if status == LpStatus::Infeasible { "is infeasible" } else { "is unbounded" },
    }
}

/// Plain Benders cut from the LP relaxation of the stage subproblem.
pub fn lp_benders_cut(stage: &StageTemplate, data: &StageScenario, x_prev: &[f64], fragment: &ApproxFragment) -> Result<Cut> {
    let sub = build_subproblem(stage, data, LinkMode::Fixed(x_prev), fragment)?;
    let sol = solve_lp(&lp_relaxation(&sub.mip))?;
    if sol.status != LpStatus::Optimal {
        return Err(stage_failure(sol.status));
    }
    Ok(benders_cut(&sub, &sol, data, x_prev))
}

/// LP-dual slope with the intercept recomputed by the Lagrangian
/// `min f + φ − αᵀz` over the stage MIP with a free state copy `z ∈ [0,1]`.
pub fn strengthened_benders_cut(
    stage: &StageTemplate,
    data: &StageScenario,
    x_prev: &[f64],
    fragment: &ApproxFragment,
    tol_mip: f64,
) -> Result<Cut> {
    let plain = lp_benders_cut(stage, data, x_prev, fragment)?;
    let lag = build_subproblem(stage, data, LinkMode::Relaxed { penalty: &plain.alpha }, fragment)?;
    let s = solve_mip(&lag.mip, tol_mip)?;
    if s.status != LpStatus::Optimal {
        return Err(stage_failure(s.status));
    }
    // B&B stops within tol_mip of the optimum; the remaining slack keeps the cut valid.
    let value = s.incumbent_bound.min(s.objective);
    Ok(Cut { beta: value.max(plain.beta), kind: CutKind::StrengthenedBenders, ..plain })
}

/// Expected cut under the worst-case distribution of the scenario cut values at x̂.
pub fn dro_separation_cut(cuts: &[Cut], x_hat: &[f64], support: &ScenarioSupport, epsilon: f64) -> Result<Cut> {
    if cuts.len() != support.len() {
        return Err(Error::DimensionMismatch(format!("{} cuts for {} scenarios", cuts.len(), support.len())));
    }
    let values: Vec<f64> = cuts.iter().map(|c| c.value(x_hat)).collect();
    let (p, _) = worst_case_distribution(&values, support, epsilon)?;
    let mut cut = weighted(cuts, &p.probs);
    cut.kind = CutKind::DroAggregate;
    Ok(cut)
}

/// Probability-weighted combination of per-scenario cuts.
pub fn weighted(cuts: &[Cut], probs: &[f64]) -> Cut {
    let d = cuts[0].alpha.len();
    let mut alpha = vec![0.0; d];
    let mut beta = 0.0;
    for (c, &p) in cuts.iter().zip(probs) {
        for j in 0..d {
            alpha[j] += p * c.alpha[j];
        }
        beta += p * c.beta;
    }
    Cut { stage: cuts[0].stage, scenario: None, alpha, beta, kind: CutKind::Expectation, iteration: cuts[0].iteration }
}

fn check_cut_lists(per_scenario: &[Vec<Cut>], support: &ScenarioSupport, d_x: usize) -> Result<()> {
    if per_scenario.len() != support.len() {
        return Err(Error::DimensionMismatch(format!("{} cut lists for {} scenarios", per_scenario.len(), support.len())));
    }
    for (i, list) in per_scenario.iter().enumerate() {
        if list.is_empty() {
            return Err(Error::DimensionMismatch(format!("scenario {i} has no cuts")));
        }
        if list.iter().any(|c| c.alpha.len() != d_x) {
            return Err(Error::DimensionMismatch(format!("scenario {i} cut length differs from state dimension {d_x}")));
        }
    }
    Ok(())
}

/// Adds ρ ≥ 0, ν_i free with objective ερ + Σ p̄_i ν_i and rows
/// ν_i + d_ij ρ ≥ α_jᵀx + β_j for every pair (i, j) and every cut of j.
pub fn dro_dual_rows(lp: &mut LpProblem, x: &[usize], per_scenario: &[Vec<Cut>], support: &ScenarioSupport, epsilon: f64) -> Result<()> {
    check_cut_lists(per_scenario, support, x.len())?;
    let n = support.len();
    let d = support.distances();
    let rho = lp.add_column(epsilon, 0.0, f64::INFINITY);
    let nu: Vec<usize> = (0..n)
        .map(|i| lp.add_column(support.reference_probs[i], f64::NEG_INFINITY, f64::INFINITY))
        .collect();
    for i in 0..n {
        for (j, list) in per_scenario.iter().enumerate() {
            for c in list {
                let mut coefs = vec![(nu[i], 1.0)];
                if d[i][j] != 0.0 {
                    coefs.push((rho, d[i][j]));
                }
                coefs.extend(x.iter().zip(&c.alpha).filter(|(_, a)| **a != 0.0).map(|(&k, &a)| (k, -a)));
                lp.add_row(coefs, Relation::Ge, c.beta);
            }
        }
    }
    Ok(())
}

/// Adds the Wasserstein ball on p, products η_i = p_i·x linearized by
/// McCormick envelopes, and θ̄_i ≥ α_iᵀη_i + β_i p_i; objective Σ θ̄_i.
pub fn drr_mccormick_rows(lp: &mut LpProblem, x: &[usize], per_scenario: &[Vec<Cut>], support: &ScenarioSupport, epsilon: f64) -> Result<()> {
    check_cut_lists(per_scenario, support, x.len())?;
    let n = support.len();
    let d = x.len();
    let poly = wasserstein_polytope(lp, support, epsilon);
    for i in 0..n {
        let p = poly.p[i];
        let theta = lp.add_column(1.0, f64::NEG_INFINITY, f64::INFINITY);
        let needs_eta = per_scenario[i].iter().any(|c| c.alpha.iter().any(|&a| a != 0.0));
        let eta: Vec<usize> = if needs_eta { (0..d).map(|_| lp.add_column(0.0, 0.0, 1.0)).collect() } else { vec![] };
        for (j, &e) in eta.iter().enumerate() {
            lp.add_row(vec![(e, 1.0), (x[j], -1.0)], Relation::Le, 0.0);
            lp.add_row(vec![(e, 1.0), (p, -1.0)], Relation::Le, 0.0);
            lp.add_row(vec![(e, 1.0), (p, -1.0), (x[j], -1.0)], Relation::Ge, -1.0);
        }
        for c in &per_scenario[i] {
            let mut coefs = vec![(theta, 1.0)];
            if c.beta != 0.0 {
                coefs.push((p, -c.beta));
            }
            for (j, &a) in c.alpha.iter().enumerate() {
                if a != 0.0 {
                    coefs.push((eta[j], -a));
                }
            }
            lp.add_row(coefs, Relation::Ge, 0.0);
        }
    }
    Ok(())
}
