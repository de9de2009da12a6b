//! Exact backward recursion over binary states, used as ground truth.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;

use super::{build_subproblem, ApproxFragment, LinkMode, MultistageModel, StageScenario};
use crate::ambiguity::{AmbiguityKind, AmbiguitySpec, Risk};
use crate::lp::{solve_mip, LpStatus};
use crate::{Error, Result};

const MAX_DX: usize = 12;
const MAX_T: usize = 4;
const MAX_N: usize = 4;
const EXACT_TOL: f64 = 1e-9;

fn bits(x: &[f64]) -> u64 {
    x.iter().enumerate().fold(0, |acc, (k, &v)| if v > 0.5 { acc | (1 << k) } else { acc })
}

fn state(b: u64, d: usize) -> Vec<f64> {
    (0..d).map(|k| ((b >> k) & 1) as f64).collect()
}

/// Caches `min_y f_t(x, y)` for every `(t, x_prev, ω, x)` it has visited so
/// that the recursion can be re-run under several ambiguity settings.
pub struct ExactOracle<'a> {
    model: &'a MultistageModel,
    local: Mutex<HashMap<(usize, u64, usize), std::sync::Arc<Vec<f64>>>>,
}

impl<'a> ExactOracle<'a> {
    pub fn new(model: &'a MultistageModel) -> Result<Self> {
        model.validate()?;
        if model.horizon > MAX_T {
            return Err(Error::TooLarge(format!("horizon {} > {MAX_T}", model.horizon)));
        }
        for (t, st) in model.stages.iter().enumerate() {
            if st.d_x > MAX_DX {
                return Err(Error::TooLarge(format!("stage {t} has {} state columns > {MAX_DX}", st.d_x)));
            }
            if model.supports[t].len() > MAX_N {
                return Err(Error::TooLarge(format!("stage {t} has {} realizations > {MAX_N}", model.supports[t].len())));
            }
        }
        Ok(ExactOracle { model, local: Mutex::new(HashMap::new()) })
    }

    pub fn model(&self) -> &MultistageModel {
        self.model
    }

    /// `g[x] = min_y f_t(x, y)` over the stage set at `(x_prev, ω_i)`; +∞ when empty.
    fn local_costs(&self, t: usize, xp: u64, i: usize) -> Result<std::sync::Arc<Vec<f64>>> {
        if let Some(v) = self.local.lock().unwrap().get(&(t, xp, i)) {
            return Ok(v.clone());
        }
        let st = &self.model.stages[t];
        let x_prev = state(xp, st.d_x_prev);
        let sc = &st.scenarios[i];
        let blocks: Vec<StageScenario> = if sc.disjuncts.is_empty() {
            vec![sc.clone()]
        } else {
            sc.disjuncts
                .iter()
                .map(|d| {
                    let mut rows = sc.rows.clone();
                    rows.extend(d);
                    StageScenario { rows, disjuncts: vec![], ..sc.clone() }
                })
                .collect()
        };
        let subs = blocks
            .iter()
            .map(|b| build_subproblem(st, b, LinkMode::Fixed(&x_prev), &ApproxFragment::None))
            .collect::<Result<Vec<_>>>()?;
        let g: Vec<f64> = (0..1u64 << st.d_x)
            .into_par_iter()
            .map(|xb| {
                let x = state(xb, st.d_x);
                let mut best = f64::INFINITY;
                for sub in &subs {
                    let mut mip = sub.mip.clone();
                    for (k, j) in sub.x.clone().enumerate() {
                        mip.base.bounds[j] = (x[k], x[k]);
                    }
                    let s = solve_mip(&mip, EXACT_TOL)?;
                    match s.status {
                        LpStatus::Optimal => best = best.min(s.objective),
                        LpStatus::Infeasible => {}
                        LpStatus::Unbounded => {
                            return Err(Error::StageFailure { stage: t + 1, scenario: i, status: "is unbounded" })
                        }
                    }
                }
                Ok(best)
            })
            .collect::<Result<_>>()?;
        let g = std::sync::Arc::new(g);
        self.local.lock().unwrap().insert((t, xp, i), g.clone());
        Ok(g)
    }

    /// Exact stage-1 value under `amb` and `risk`.
    pub fn value(&self, amb: &AmbiguitySpec, risk: Risk) -> Result<f64> {
        if amb.kind == AmbiguityKind::WassersteinDdContinuous {
            return Err(Error::invalid("ambiguity.kind", "the exact recursion covers finite supports only"));
        }
        let mut memo = Memo::default();
        let x0 = bits(&self.model.x0);
        let v = self.stage_value(0, x0, 0, amb, risk, &mut memo)?;
        if !v.is_finite() {
            return Err(Error::StageFailure { stage: 1, scenario: 0, status: "is infeasible" });
        }
        Ok(v)
    }

    /// `Q_t(x_prev, ω_i)` with exact expected cost-to-go.
    pub fn stage_value_at(&self, t: usize, x_prev: &[f64], i: usize, amb: &AmbiguitySpec, risk: Risk) -> Result<f64> {
        self.stage_value(t, bits(x_prev), i, amb, risk, &mut Memo::default())
    }

    /// Expected cost-to-go `𝒬_{t+1}(x)` of a stage-`t` state; zero past the horizon.
    pub fn expected_cost_to_go(&self, t: usize, x: &[f64], amb: &AmbiguitySpec, risk: Risk) -> Result<f64> {
        self.ctg(t, bits(x), amb, risk, &mut Memo::default())
    }

    fn stage_value(&self, t: usize, xp: u64, i: usize, amb: &AmbiguitySpec, risk: Risk, memo: &mut Memo) -> Result<f64> {
        if let Some(&v) = memo.q.get(&(t, xp, i)) {
            return Ok(v);
        }
        let g = self.local_costs(t, xp, i)?;
        let mut best = f64::INFINITY;
        for (xb, &gx) in g.iter().enumerate() {
            if !gx.is_finite() {
                continue;
            }
            let v = gx + self.ctg(t, xb as u64, amb, risk, memo)?;
            best = best.min(v);
        }
        memo.q.insert((t, xp, i), best);
        Ok(best)
    }

    fn ctg(&self, t: usize, xb: u64, amb: &AmbiguitySpec, risk: Risk, memo: &mut Memo) -> Result<f64> {
        if t + 1 >= self.model.horizon {
            return Ok(0.0);
        }
        if let Some(&v) = memo.ctg.get(&(t, xb)) {
            return Ok(v);
        }
        let sup = &self.model.supports[t + 1];
        let mut vals = Vec::with_capacity(sup.len());
        for i in 0..sup.len() {
            vals.push(self.stage_value(t + 1, xb, i, amb, risk, memo)?);
        }
        let v = if vals.iter().any(|v| !v.is_finite()) {
            f64::INFINITY
        } else {
            risk.aggregate(&vals, sup, amb.radius())?.1
        };
        memo.ctg.insert((t, xb), v);
        Ok(v)
    }
}

#[derive(Default)]
struct Memo {
    q: HashMap<(usize, u64, usize), f64>,
    ctg: HashMap<(usize, u64), f64>,
}

pub fn exact_value_dp(m: &MultistageModel, amb: &AmbiguitySpec, risk: Risk) -> Result<f64> {
    ExactOracle::new(m)?.value(amb, risk)
}
