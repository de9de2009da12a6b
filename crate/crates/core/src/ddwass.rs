//! Optimistic cost-to-go under a Wasserstein ball whose radius depends on
//! the incoming state, over a continuous box support with right-hand-side
//! uncertainty `A x_t ≥ ω − C x_{t−1}` and l1 ground distance.

use crate::ambiguity::{AmbiguityKind, AmbiguitySpec};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense};
use crate::model::MultistageModel;
use crate::{Error, Result};

/// ε(x) = base + slopeᵀx.
#[derive(Clone, Debug, PartialEq)]
pub struct DdRadius {
    pub base: f64,
    pub slope: Vec<f64>,
}

impl DdRadius {
    pub fn from_spec(spec: &AmbiguitySpec) -> Result<Self> {
        if spec.kind != AmbiguityKind::WassersteinDdContinuous {
            return Err(Error::invalid("ambiguity.kind", "expected wasserstein_dd_continuous"));
        }
        let base = spec.base.ok_or_else(|| Error::invalid("ambiguity.base", "missing"))?;
        let slope = spec.slope.clone().ok_or_else(|| Error::invalid("ambiguity.slope", "missing"))?;
        Ok(DdRadius { base, slope })
    }

    /// Rejects radii that go negative at some binary state.
    pub fn check(&self) -> Result<()> {
        let min = self.base + self.slope.iter().map(|s| s.min(0.0)).sum::<f64>();
        if min < 0.0 {
            return Err(Error::NegativeRadius(min));
        }
        Ok(())
    }
}

pub fn dd_radius_eval(r: &DdRadius, x: &[f64]) -> Result<f64> {
    if x.len() != r.slope.len() {
        return Err(Error::DimensionMismatch(format!("state has {} entries, slope {}", x.len(), r.slope.len())));
    }
    let v = r.base + r.slope.iter().zip(x).map(|(s, v)| s * v).sum::<f64>();
    if v < 0.0 {
        return Err(Error::NegativeRadius(v));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxSupport {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Empirical points, equally weighted.
    pub points: Vec<Vec<f64>>,
}

/// Stage set `A x ≥ ω − C x_prev` with cost `costᵀx`.
#[derive(Clone, Debug, PartialEq)]
pub struct DdStageData {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub cost: Vec<f64>,
}

impl DdStageData {
    /// Extracts the right-hand-side-uncertainty form from stage `t` of a model.
    pub fn from_stage(m: &MultistageModel, t: usize) -> Result<Self> {
        let st = &m.stages[t];
        let field = format!("stages[{t}]");
        if st.d_y != 0 {
            return Err(Error::invalid(format!("{field}.d_y"), "decision-dependent stages take no local variables"));
        }
        let s0 = &st.scenarios[0];
        for (i, sc) in st.scenarios.iter().enumerate() {
            if sc.cost_x != s0.cost_x || sc.rows.a != s0.rows.a || sc.rows.c != s0.rows.c {
                return Err(Error::invalid(format!("{field}.scenarios[{i}]"), "only the right-hand side may vary"));
            }
            if sc.rows.relations.iter().any(|r| *r != Relation::Ge) {
                return Err(Error::invalid(format!("{field}.scenarios[{i}].rows.relations"), "all rows must be >="));
            }
            if sc.rows.rhs != m.supports[t].realizations[i] {
                return Err(Error::invalid(format!("{field}.scenarios[{i}].rows.rhs"), "must equal the realization"));
            }
        }
        Ok(DdStageData { a: s0.rows.a.clone(), c: s0.rows.c.clone(), cost: s0.cost_x.clone() })
    }
}

/// Solves the cut-generating LP at `x_hat` and returns `(alpha, beta)` of a cut
/// valid for the optimistic cost-to-go at every incoming state.
pub fn dd_cut_generate(
    data: &DdStageData,
    support: &BoxSupport,
    radius: &DdRadius,
    next_cuts: &[(Vec<f64>, f64)],
    x_hat: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let rows = data.a.len();
    let d_x = data.cost.len();
    let d_prev = x_hat.len();
    let n = support.points.len();
    if next_cuts.is_empty() {
        return Err(Error::DualInfeasible);
    }
    if support.lower.len() != rows || support.upper.len() != rows || support.points.iter().any(|w| w.len() != rows) {
        return Err(Error::DimensionMismatch("support dimension differs from row count".into()));
    }
    if data.c.iter().any(|r| r.len() != d_prev) || radius.slope.len() != d_prev {
        return Err(Error::DimensionMismatch("state dimension mismatch".into()));
    }
    let eps = dd_radius_eval(radius, x_hat)?;
    let cx: Vec<f64> = data.c.iter().map(|r| r.iter().zip(x_hat).map(|(a, b)| a * b).sum()).collect();
    let w = 1.0 / n as f64;
    let k = next_cuts.len();

    let mut lp = LpProblem::new(Sense::Maximize);
    let rho = lp.add_column(-eps, 0.0, f64::INFINITY);
    struct Block {
        lam: Vec<usize>,
        mu: Vec<usize>,
        nu: Vec<usize>,
        zeta: Vec<usize>,
    }
    let mut blocks = Vec::with_capacity(n);
    for omega in &support.points {
        let lam: Vec<usize> = (0..rows).map(|r| lp.add_column(w * (omega[r] - cx[r]), 0.0, f64::INFINITY)).collect();
        let mu: Vec<usize> = (0..rows).map(|r| lp.add_column(w * (support.lower[r] - omega[r]), 0.0, f64::INFINITY)).collect();
        let nu: Vec<usize> = (0..rows).map(|r| lp.add_column(w * (omega[r] - support.upper[r]), 0.0, f64::INFINITY)).collect();
        let zeta: Vec<usize> = next_cuts.iter().map(|(_, g)| lp.add_column(w * g, 0.0, f64::INFINITY)).collect();
        for j in 0..d_x {
            let mut coefs: Vec<(usize, f64)> = (0..rows).filter(|&r| data.a[r][j] != 0.0).map(|r| (lam[r], data.a[r][j])).collect();
            for q in 0..k {
                let pi = next_cuts[q].0[j];
                if pi != 0.0 {
                    coefs.push((zeta[q], -pi));
                }
            }
            lp.add_row(coefs, Relation::Eq, data.cost[j]);
        }
        lp.add_row(zeta.iter().map(|&z| (z, 1.0)).collect(), Relation::Eq, 1.0);
        for r in 0..rows {
            lp.add_row(vec![(lam[r], 1.0), (mu[r], -1.0), (nu[r], 1.0), (rho, -1.0)], Relation::Le, 0.0);
            lp.add_row(vec![(lam[r], -1.0), (mu[r], 1.0), (nu[r], -1.0), (rho, -1.0)], Relation::Le, 0.0);
        }
        blocks.push(Block { lam, mu, nu, zeta });
    }
    let s = solve_lp(&lp)?;
    match s.status {
        LpStatus::Infeasible => return Err(Error::DualInfeasible),
        LpStatus::Unbounded => {
            return Err(Error::StageFailure { stage: 0, scenario: 0, status: "has an empty stage set for some outcome" })
        }
        LpStatus::Optimal => {}
    }
    let x = &s.primal;
    let r_val = x[rho];
    let mut alpha: Vec<f64> = radius.slope.iter().map(|s| -r_val * s).collect();
    let mut beta = -radius.base * r_val;
    for (b, omega) in blocks.iter().zip(&support.points) {
        for r in 0..rows {
            let l = x[b.lam[r]];
            let mu = x[b.mu[r]];
            let nu = x[b.nu[r]];
            for j in 0..d_prev {
                alpha[j] -= w * l * data.c[r][j];
            }
            beta += w * (mu * support.lower[r] - nu * support.upper[r] + (l - mu + nu) * omega[r]);
        }
        for q in 0..k {
            beta += w * x[b.zeta[q]] * next_cuts[q].1;
        }
    }
    Ok((alpha, beta))
}
