use std::ops::Range;

use super::{ConstraintBlock, MultistageModel, StageScenario, StageTemplate};
use crate::approx::{dro_dual_rows, drr_mccormick_rows, Cut};
use crate::lp::{lp_relaxation, solve_lp, LpProblem, LpStatus, MipProblem, Relation};
use crate::model::ScenarioSupport;
use crate::{Error, Result};

/// How the cost-to-go term φ enters a stage subproblem.
#[derive(Clone, Copy, Debug)]
pub enum ApproxFragment<'a> {
    /// Terminal stage: φ = 0.
    None,
    /// φ ≥ floor and φ ≥ αᵀx + β for every aggregate cut.
    Epigraph { floor: f64, cuts: &'a [Cut] },
    /// Optimistic reformulation with McCormick envelopes on p·x.
    McCormick { per_scenario: &'a [Vec<Cut>], support: &'a ScenarioSupport, epsilon: f64 },
    /// Dual of the worst-case expectation over the ball.
    WassersteinDual { per_scenario: &'a [Vec<Cut>], support: &'a ScenarioSupport, epsilon: f64 },
}

/// How the incoming state enters.
#[derive(Clone, Copy, Debug)]
pub enum LinkMode<'a> {
    Fixed(&'a [f64]),
    /// State copy `z ∈ [0,1]` as free columns with objective term `−penaltyᵀz`.
    Relaxed { penalty: &'a [f64] },
}

#[derive(Clone, Debug)]
pub struct Subproblem {
    pub mip: MipProblem,
    pub x: Range<usize>,
    pub y: Range<usize>,
    pub z: Range<usize>,
    pub stage_rows: Range<usize>,
    /// Column carrying φ in epigraph mode.
    pub phi: Option<usize>,
}

impl Subproblem {
    pub fn x_of<'v>(&self, primal: &'v [f64]) -> &'v [f64] {
        &primal[self.x.clone()]
    }

    pub fn y_of<'v>(&self, primal: &'v [f64]) -> &'v [f64] {
        &primal[self.y.clone()]
    }
}

pub(crate) fn add_block_rows(
    lp: &mut LpProblem,
    block: &ConstraintBlock,
    x: &Range<usize>,
    y: &Range<usize>,
    link: LinkMode,
    z: &Range<usize>,
) {
    for r in 0..block.len() {
        let mut coefs = Vec::new();
        for (k, &a) in block.a[r].iter().enumerate() {
            if a != 0.0 {
                coefs.push((x.start + k, a));
            }
        }
        for (k, &b) in block.b[r].iter().enumerate() {
            if b != 0.0 {
                coefs.push((y.start + k, b));
            }
        }
        let mut rhs = block.rhs[r];
        match link {
            LinkMode::Fixed(xp) => {
                rhs -= block.c[r].iter().zip(xp).map(|(c, v)| c * v).sum::<f64>();
            }
            LinkMode::Relaxed { .. } => {
                for (k, &c) in block.c[r].iter().enumerate() {
                    if c != 0.0 {
                        coefs.push((z.start + k, c));
                    }
                }
            }
        }
        lp.add_row(coefs, block.relations[r], rhs);
    }
}

/// Stage problem `min f_t(x, y) + φ` over the stage set at the given link,
/// with φ modelled by `fragment`. Ordinary (non-disjunctive) stages only.
pub fn build_subproblem(
    stage: &StageTemplate,
    data: &StageScenario,
    link: LinkMode,
    fragment: &ApproxFragment,
) -> Result<Subproblem> {
    if !data.disjuncts.is_empty() {
        return Err(Error::invalid("stages.disjuncts", "disjunctive stages are solved by the dp driver"));
    }
    match link {
        LinkMode::Fixed(xp) if xp.len() != stage.d_x_prev => {
            return Err(Error::DimensionMismatch(format!("state has {} entries, stage expects {}", xp.len(), stage.d_x_prev)))
        }
        LinkMode::Relaxed { penalty } if penalty.len() != stage.d_x_prev => {
            return Err(Error::DimensionMismatch("penalty length differs from state dimension".into()))
        }
        _ => {}
    }
    let mut mip = MipProblem::new(LpProblem::minimize());
    let xs = mip.base.num_cols();
    for k in 0..stage.d_x {
        mip.add_binary(data.cost_x[k]);
    }
    let x = xs..mip.base.num_cols();
    let ys = mip.base.num_cols();
    for k in 0..stage.d_y {
        let j = mip.base.add_column(data.cost_y[k], 0.0, stage.y_bound(k));
        if stage.y_binary[k] {
            mip.binary.push(j);
        }
    }
    let y = ys..mip.base.num_cols();
    let zs = mip.base.num_cols();
    if let LinkMode::Relaxed { penalty } = link {
        for &pk in penalty {
            mip.base.add_column(-pk, 0.0, 1.0);
        }
    }
    let z = zs..mip.base.num_cols();
    let rs = mip.base.num_rows();
    add_block_rows(&mut mip.base, &data.rows, &x, &y, link, &z);
    let stage_rows = rs..mip.base.num_rows();
    let xcols: Vec<usize> = x.clone().collect();
    let mut phi = None;
    match *fragment {
        ApproxFragment::None => {}
        ApproxFragment::Epigraph { floor, cuts } => {
            let f = mip.base.add_column(1.0, floor, f64::INFINITY);
            for c in cuts {
                if c.alpha.len() != stage.d_x {
                    return Err(Error::DimensionMismatch(format!("cut has {} coefficients, stage has {}", c.alpha.len(), stage.d_x)));
                }
                let mut coefs = vec![(f, 1.0)];
                coefs.extend(xcols.iter().zip(&c.alpha).filter(|(_, a)| **a != 0.0).map(|(&j, &a)| (j, -a)));
                mip.base.add_row(coefs, Relation::Ge, c.beta);
            }
            phi = Some(f);
        }
        ApproxFragment::McCormick { per_scenario, support, epsilon } => {
            drr_mccormick_rows(&mut mip.base, &xcols, per_scenario, support, epsilon)?;
        }
        ApproxFragment::WassersteinDual { per_scenario, support, epsilon } => {
            dro_dual_rows(&mut mip.base, &xcols, per_scenario, support, epsilon)?;
        }
    }
    Ok(Subproblem { mip, x, y, z, stage_rows, phi })
}

/// Lower bounds `L_t ≤ Q_t(x_prev, ω)` for every stage, state, and realization,
/// each from one LP relaxation with the incoming state free in the unit box.
/// A 1% margin is subtracted.
pub fn stage_lower_bounds(m: &MultistageModel) -> Result<Vec<f64>> {
    let t_len = m.horizon;
    let mut floors = vec![0.0; t_len];
    for t in (0..t_len).rev() {
        let st = &m.stages[t];
        let zero = vec![0.0; st.d_x_prev];
        let mut best = f64::INFINITY;
        for (i, sc) in st.scenarios.iter().enumerate() {
            let blocks: Vec<ConstraintBlock> = if sc.disjuncts.is_empty() {
                vec![sc.rows.clone()]
            } else {
                sc.disjuncts
                    .iter()
                    .map(|d| {
                        let mut b = sc.rows.clone();
                        b.extend(d);
                        b
                    })
                    .collect()
            };
            for block in blocks {
                let plain = StageScenario { rows: block, disjuncts: vec![], ..sc.clone() };
                let fragment = if t + 1 < t_len {
                    ApproxFragment::Epigraph { floor: floors[t + 1], cuts: &[] }
                } else {
                    ApproxFragment::None
                };
                let sub = build_subproblem(st, &plain, LinkMode::Relaxed { penalty: &zero }, &fragment)?;
                let s = solve_lp(&lp_relaxation(&sub.mip))?;
                match s.status {
                    LpStatus::Optimal => best = best.min(s.objective),
                    LpStatus::Infeasible => {}
                    LpStatus::Unbounded => {
                        return Err(Error::StageFailure { stage: t + 1, scenario: i, status: "is unbounded" })
                    }
                }
            }
        }
        if !best.is_finite() {
            return Err(Error::StageFailure { stage: t + 1, scenario: 0, status: "is infeasible for every state" });
        }
        floors[t] = best - 0.01 * best.abs().max(1.0);
    }
    Ok(floors)
}
