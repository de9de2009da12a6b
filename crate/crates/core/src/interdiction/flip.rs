use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::truncated_normal;
use crate::ambiguity::AmbiguitySpec;
use crate::lp::Relation;
use crate::model::{ConstraintBlock, GeneratorInfo, MultistageModel, ScenarioSupport, StageScenario, StageTemplate};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipParams {
    pub demand_points: usize,
    pub facilities: usize,
    pub horizon: usize,
    pub support_size: usize,
    /// Interdictions per stage.
    pub budget: usize,
    #[serde(default)]
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for FlipParams {
    fn default() -> Self {
        FlipParams { demand_points: 3, facilities: 4, horizon: 2, support_size: 2, budget: 1, epsilon: 0.0, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct FlipInstance {
    pub demands: Vec<(f64, f64)>,
    pub facilities: Vec<(f64, f64)>,
    pub distance: Vec<Vec<f64>>,
    /// Demand per stage, realization, and point.
    pub demand: Vec<Vec<Vec<f64>>>,
    pub model: MultistageModel,
}

impl FlipInstance {
    /// `y[l][m]` column of the stage program.
    pub fn y_col(&self, l: usize, m: usize) -> usize {
        l * self.facilities.len() + m
    }
}

/// Stage programs with points given; `demand[t][i][l]` is the demand of
/// point `l` in realization `i` of stage `t`. Maximization is negated.
pub fn flip_from_points(
    demands: Vec<(f64, f64)>,
    facilities: Vec<(f64, f64)>,
    demand: Vec<Vec<Vec<f64>>>,
    budget: usize,
    epsilon: f64,
) -> Result<FlipInstance> {
    let (nl, nm) = (demands.len(), facilities.len());
    if nl == 0 || nm == 0 {
        return Err(Error::invalid("generator", "need at least one demand point and one facility"));
    }
    let horizon = demand.len();
    if budget * horizon > nm - 1 {
        return Err(Error::invalid("generator.budget", "interdictions over the horizon must leave a facility open"));
    }
    let distance: Vec<Vec<f64>> =
        demands.iter().map(|&(a, b)| facilities.iter().map(|&(c, d)| ((a - c).powi(2) + (b - d).powi(2)).sqrt()).collect()).collect();
    if distance.iter().flatten().any(|&d| d == 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    let d_y = nl * nm;
    let col = |l: usize, m: usize| l * nm + m;
    let mut stages = Vec::with_capacity(horizon);
    let mut supports = Vec::with_capacity(horizon);
    for real in &demand {
        let mut rows = ConstraintBlock::empty();
        for l in 0..nl {
            let mut b = vec![0.0; d_y];
            for m in 0..nm {
                b[col(l, m)] = 1.0;
            }
            rows.push(vec![0.0; nm], b, vec![0.0; nm], Relation::Eq, 1.0);
        }
        for m in 0..nm {
            let mut a = vec![0.0; nm];
            a[m] = 1.0;
            let mut c = vec![0.0; nm];
            c[m] = -1.0;
            rows.push(a, vec![0.0; d_y], c, Relation::Ge, 0.0);
        }
        rows.push(vec![1.0; nm], vec![0.0; d_y], vec![-1.0; nm], Relation::Eq, budget as f64);
        for l in 0..nl {
            for m in 0..nm {
                let farther: Vec<usize> = (0..nm).filter(|&n| distance[l][n] > distance[l][m]).collect();
                if farther.is_empty() {
                    continue;
                }
                let mut a = vec![0.0; nm];
                a[m] = -1.0;
                let mut b = vec![0.0; d_y];
                for n in farther {
                    b[col(l, n)] = 1.0;
                }
                rows.push(a, b, vec![0.0; nm], Relation::Le, 0.0);
            }
        }
        let scenarios = real
            .iter()
            .map(|a| StageScenario {
                cost_x: vec![0.0; nm],
                cost_y: (0..d_y).map(|k| -a[k / nm] * distance[k / nm][k % nm]).collect(),
                rows: rows.clone(),
                disjuncts: vec![],
            })
            .collect();
        stages.push(StageTemplate { d_x: nm, d_y, d_x_prev: nm, y_binary: vec![true; d_y], y_upper: vec![Some(1.0); d_y], scenarios });
        supports.push(ScenarioSupport::uniform(real.clone()));
    }
    let ambiguity = if epsilon > 0.0 { AmbiguitySpec::wasserstein(epsilon) } else { AmbiguitySpec::singleton() };
    let model = MultistageModel { horizon, x0: vec![0.0; nm], stages, supports, ambiguity, objective_sign: -1.0, generator: None };
    model.validate()?;
    Ok(FlipInstance { demands, facilities, distance, demand, model })
}

/// Points drawn without replacement from the 100×100 integer grid; mean
/// demands uniform on {20, …, 40}; realizations truncated normal(μ, μ/4) on [1, 60].
pub fn gen_flip_instance(p: &FlipParams) -> Result<FlipInstance> {
    if p.horizon == 0 || p.support_size == 0 {
        return Err(Error::invalid("generator", "horizon and support size must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let total = p.demand_points + p.facilities;
    let cells = sample(&mut rng, 100 * 100, total).into_vec();
    let pts: Vec<(f64, f64)> = cells.iter().map(|&c| ((c % 100) as f64, (c / 100) as f64)).collect();
    let demands = pts[..p.demand_points].to_vec();
    let facilities = pts[p.demand_points..].to_vec();
    let mu: Vec<f64> = (0..p.demand_points).map(|_| rng.gen_range(20..=40) as f64).collect();
    let demand: Vec<Vec<Vec<f64>>> = (0..p.horizon)
        .map(|t| {
            let n = if t == 0 { 1 } else { p.support_size };
            (0..n)
                .map(|_| mu.iter().map(|&m| (truncated_normal(&mut rng, m, m / 4.0, 1.0, 60.0) * 1000.0).round() / 1000.0).collect())
                .collect()
        })
        .collect();
    let mut inst = flip_from_points(demands, facilities, demand, p.budget, p.epsilon)?;
    inst.model.generator = Some(GeneratorInfo::Flip(p.clone()));
    Ok(inst)
}
