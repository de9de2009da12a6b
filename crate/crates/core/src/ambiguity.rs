//! Wasserstein ambiguity over a finite support and the inner min/max over it.

use serde::{Deserialize, Serialize};

use crate::approx::{Cut, CutKind};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation, Sense};
use crate::model::{MultistageModel, ScenarioSupport};
use crate::{Error, Result};

/// Direction of the inner optimization over the ambiguity set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Risk {
    Neutral,
    /// Pessimistic: worst-case expectation.
    Dro,
    /// Optimistic: best-case expectation.
    Drr,
}

impl Risk {
    pub fn as_str(&self) -> &'static str {
        match self {
            Risk::Neutral => "neutral",
            Risk::Dro => "dro",
            Risk::Drr => "drr",
        }
    }

    /// Expected value of `values` under this posture.
    pub fn aggregate(&self, values: &[f64], support: &ScenarioSupport, epsilon: f64) -> Result<(DistributionVector, f64)> {
        match self {
            Risk::Neutral => extreme(values, support, 0.0, Sense::Minimize),
            Risk::Dro => worst_case_distribution(values, support, epsilon),
            Risk::Drr => best_case_distribution(values, support, epsilon),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityKind {
    #[default]
    Singleton,
    WassersteinFinite,
    WassersteinDdContinuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L1,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct AmbiguitySpec {
    pub kind: AmbiguityKind,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub norm: Norm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_upper: Option<Vec<f64>>,
}

impl AmbiguitySpec {
    pub fn singleton() -> Self {
        AmbiguitySpec::default()
    }

    pub fn wasserstein(epsilon: f64) -> Self {
        AmbiguitySpec { kind: AmbiguityKind::WassersteinFinite, epsilon, ..Default::default() }
    }

    /// Radius of the finite-support ball; zero for the singleton kind.
    pub fn radius(&self) -> f64 {
        match self.kind {
            AmbiguityKind::Singleton => 0.0,
            _ => self.epsilon,
        }
    }

    pub(crate) fn validate(&self, m: &MultistageModel) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid("ambiguity.epsilon", "must be finite and nonnegative"));
        }
        if self.kind == AmbiguityKind::WassersteinDdContinuous {
            let dd = crate::ddwass::DdRadius::from_spec(self)?;
            let d_prev: Vec<usize> = m.stages.iter().skip(1).map(|s| s.d_x_prev).collect();
            for d in d_prev {
                if dd.slope.len() != d {
                    return Err(Error::invalid("ambiguity.slope", format!("expected {d} entries")));
                }
            }
            dd.check()?;
            let (lo, hi) = match (&self.box_lower, &self.box_upper) {
                (Some(l), Some(u)) => (l, u),
                _ => return Err(Error::invalid("ambiguity.box_lower", "box bounds are required")),
            };
            for (t, sup) in m.supports.iter().enumerate().skip(1) {
                for (i, w) in sup.realizations.iter().enumerate() {
                    if w.len() != lo.len() || w.len() != hi.len() {
                        return Err(Error::invalid("ambiguity.box_lower", "dimension differs from realizations"));
                    }
                    if w.iter().zip(lo).zip(hi).any(|((v, l), u)| v < l || v > u) {
                        return Err(Error::invalid(format!("supports[{t}].realizations[{i}]"), "outside the support box"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionVector {
    pub probs: Vec<f64>,
}

impl DistributionVector {
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.probs.iter().zip(values).map(|(p, v)| p * v).sum()
    }
}

/// Column indices of the probability and transport variables.
#[derive(Clone, Debug)]
pub struct PolytopeCols {
    pub p: Vec<usize>,
    pub transport: Vec<usize>,
}

fn trivial(support: &ScenarioSupport, epsilon: f64) -> bool {
    epsilon == 0.0 || support.len() == 1
}

/// Appends the Wasserstein ball around `support.reference_probs` to `lp`.
pub fn wasserstein_polytope(lp: &mut LpProblem, support: &ScenarioSupport, epsilon: f64) -> PolytopeCols {
    let n = support.len();
    let pbar = &support.reference_probs;
    if trivial(support, epsilon) {
        let p = (0..n).map(|i| lp.add_column(0.0, pbar[i], pbar[i])).collect();
        return PolytopeCols { p, transport: vec![] };
    }
    let p: Vec<usize> = (0..n).map(|_| lp.add_column(0.0, 0.0, 1.0)).collect();
    let v: Vec<usize> = (0..n * n).map(|_| lp.add_column(0.0, 0.0, f64::INFINITY)).collect();
    let d = support.distances();
    for i in 0..n {
        let mut row: Vec<(usize, f64)> = (0..n).map(|j| (v[i * n + j], 1.0)).collect();
        row.push((p[i], -1.0));
        lp.add_row(row, Relation::Eq, 0.0);
    }
    for j in 0..n {
        lp.add_row((0..n).map(|i| (v[i * n + j], 1.0)).collect(), Relation::Eq, pbar[j]);
    }
    let budget: Vec<(usize, f64)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .filter(|&(i, j)| d[i][j] > 0.0)
        .map(|(i, j)| (v[i * n + j], d[i][j]))
        .collect();
    lp.add_row(budget, Relation::Le, epsilon);
    lp.add_row(p.iter().map(|&c| (c, 1.0)).collect(), Relation::Eq, 1.0);
    PolytopeCols { p, transport: v }
}

/// Optimizes a linear function of `p` over the ball.
fn extreme(values: &[f64], support: &ScenarioSupport, epsilon: f64, sense: Sense) -> Result<(DistributionVector, f64)> {
    if values.len() != support.len() {
        return Err(Error::DimensionMismatch(format!("{} values for {} scenarios", values.len(), support.len())));
    }
    if trivial(support, epsilon) {
        let d = DistributionVector { probs: support.reference_probs.clone() };
        let v = d.expectation(values);
        return Ok((d, v));
    }
    let mut lp = LpProblem::new(sense);
    let cols = wasserstein_polytope(&mut lp, support, epsilon);
    for (i, &c) in cols.p.iter().enumerate() {
        lp.cost[c] = values[i];
    }
    let s = solve_lp(&lp)?;
    if s.status != LpStatus::Optimal {
        return Err(Error::NumericalFailure("ambiguity LP not optimal".into()));
    }
    let probs: Vec<f64> = cols.p.iter().map(|&c| s.primal[c].max(0.0)).collect();
    Ok((DistributionVector { probs }, s.objective))
}

pub fn worst_case_distribution(values: &[f64], support: &ScenarioSupport, epsilon: f64) -> Result<(DistributionVector, f64)> {
    extreme(values, support, epsilon, Sense::Maximize)
}

pub fn best_case_distribution(values: &[f64], support: &ScenarioSupport, epsilon: f64) -> Result<(DistributionVector, f64)> {
    extreme(values, support, epsilon, Sense::Minimize)
}

/// Aggregates one cut per scenario into an optimistic cut: coefficient `j`
/// takes the minimum (x̂_j = 0) or maximum (x̂_j = 1) of the weighted
/// coefficients over the ball, and the intercept the best case at x̂.
pub fn drr_cut_coefficients(cuts: &[Cut], x_hat: &[f64], support: &ScenarioSupport, epsilon: f64) -> Result<Cut> {
    let n = support.len();
    if cuts.len() != n {
        return Err(Error::DimensionMismatch(format!("{} cuts for {} scenarios", cuts.len(), n)));
    }
    let d = x_hat.len();
    if let Some(c) = cuts.iter().find(|c| c.alpha.len() != d) {
        return Err(Error::DimensionMismatch(format!("cut has {} coefficients, state has {d}", c.alpha.len())));
    }
    let mut pi = vec![0.0; d];
    for j in 0..d {
        let col: Vec<f64> = cuts.iter().map(|c| c.alpha[j]).collect();
        pi[j] = if col.iter().all(|&a| a == col[0]) {
            col[0]
        } else if x_hat[j] > 0.5 {
            worst_case_distribution(&col, support, epsilon)?.1
        } else {
            best_case_distribution(&col, support, epsilon)?.1
        };
    }
    let at_hat: Vec<f64> = cuts.iter().map(|c| c.value(x_hat)).collect();
    let gamma = best_case_distribution(&at_hat, support, epsilon)?.1;
    let beta = gamma - pi.iter().zip(x_hat).map(|(p, x)| p * x).sum::<f64>();
    Ok(Cut { stage: cuts[0].stage, scenario: None, alpha: pi, beta, kind: CutKind::DrrAggregate, iteration: cuts[0].iteration })
}
