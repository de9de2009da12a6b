//! Random covering instances with complete recourse: every binary state
//! admits a feasible stage solution under every realization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ConstraintBlock, MultistageModel, ScenarioSupport, StageScenario, StageTemplate};
use crate::ambiguity::AmbiguitySpec;
use crate::lp::Relation;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomParams {
    pub horizon: usize,
    pub d_x: usize,
    pub d_y: usize,
    /// Covering rows per stage; each is one coordinate of ω.
    pub rows: usize,
    pub scenarios: usize,
    /// Cap on new state activations per stage.
    pub budget: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams { horizon: 3, d_x: 3, d_y: 2, rows: 2, scenarios: 2, budget: 2, epsilon: 0.0, seed: 0 }
    }
}

/// Stage `t` rows: `a x + b y + c x_prev ≥ ω` with `a, c ≥ 0`, `b > 0`,
/// `y ∈ [0, 10]`; monotone rows `x_k ≥ x_prev_k` on about half the columns;
/// and `Σx − Σx_prev ≤ budget`.
pub fn random_instance(p: &RandomParams) -> Result<MultistageModel> {
    if p.d_y == 0 || p.horizon == 0 || p.scenarios == 0 {
        return Err(crate::Error::invalid("generator", "need d_y, horizon, and scenarios positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut stages = Vec::with_capacity(p.horizon);
    let mut supports = Vec::with_capacity(p.horizon);
    let d = p.d_x;
    let monotone: Vec<usize> = (0..d).filter(|_| rng.gen_bool(0.5)).collect();
    for t in 0..p.horizon {
        let n = if t == 0 { 1 } else { p.scenarios };
        let a: Vec<Vec<f64>> = (0..p.rows).map(|_| (0..d).map(|_| round2(rng.gen_range(0.0..2.0))).collect()).collect();
        let b: Vec<Vec<f64>> = (0..p.rows).map(|_| (0..p.d_y).map(|_| round2(rng.gen_range(0.5..1.5))).collect()).collect();
        let c: Vec<Vec<f64>> = (0..p.rows)
            .map(|_| (0..d).map(|_| if t == 0 { 0.0 } else { round2(rng.gen_range(0.0..1.0)) }).collect())
            .collect();
        let cost_y: Vec<f64> = (0..p.d_y).map(|_| round2(rng.gen_range(1.0..4.0))).collect();
        let base_x: Vec<f64> = (0..d).map(|_| round2(rng.gen_range(0.5..3.0))).collect();
        let mut realizations = Vec::with_capacity(n);
        let mut scenarios = Vec::with_capacity(n);
        for _ in 0..n {
            let omega: Vec<f64> = (0..p.rows).map(|_| round2(rng.gen_range(0.0..3.0))).collect();
            let cost_x: Vec<f64> = base_x.iter().map(|v| round2(v * rng.gen_range(0.8..1.2))).collect();
            let mut rows = ConstraintBlock::empty();
            for r in 0..p.rows {
                rows.push(a[r].clone(), b[r].clone(), c[r].clone(), Relation::Ge, omega[r]);
            }
            if t > 0 {
                for &k in &monotone {
                    let mut ax = vec![0.0; d];
                    ax[k] = 1.0;
                    let mut cx = vec![0.0; d];
                    cx[k] = -1.0;
                    rows.push(ax, vec![0.0; p.d_y], cx, Relation::Ge, 0.0);
                }
            }
            rows.push(vec![1.0; d], vec![0.0; p.d_y], vec![if t == 0 { 0.0 } else { -1.0 }; d], Relation::Le, p.budget as f64);
            realizations.push(omega);
            scenarios.push(StageScenario { cost_x, cost_y: cost_y.clone(), rows, disjuncts: vec![] });
        }
        stages.push(StageTemplate {
            d_x: d,
            d_y: p.d_y,
            d_x_prev: d,
            y_binary: vec![false; p.d_y],
            y_upper: vec![Some(10.0); p.d_y],
            scenarios,
        });
        supports.push(ScenarioSupport::uniform(realizations));
    }
    let ambiguity = if p.epsilon > 0.0 { AmbiguitySpec::wasserstein(p.epsilon) } else { AmbiguitySpec::singleton() };
    let m = MultistageModel {
        horizon: p.horizon,
        x0: vec![0.0; d],
        stages,
        supports,
        ambiguity,
        objective_sign: 1.0,
        generator: Some(super::GeneratorInfo::Random(p.clone())),
    };
    m.validate()?;
    Ok(m)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}
