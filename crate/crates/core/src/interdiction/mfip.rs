use std::ops::Range;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{truncated_normal, Network};
use crate::ambiguity::AmbiguitySpec;
use crate::lp::{solve_mip, LpStatus, Relation};
use crate::model::{
    build_subproblem, ApproxFragment, ConstraintBlock, GeneratorInfo, LinkMode, MultistageModel, ScenarioSupport, StageScenario,
    StageTemplate,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CapacityLaw {
    Uniform { lo: f64, hi: f64 },
    TruncNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
}

impl CapacityLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CapacityLaw::Uniform { lo, hi } => {
                if hi > lo {
                    rng.gen_range(lo..hi)
                } else {
                    lo
                }
            }
            CapacityLaw::TruncNormal { mean, sd, lo, hi } => truncated_normal(rng, mean, sd, lo, hi),
        }
    }

    fn check(&self) -> Result<()> {
        let (lo, hi) = match *self {
            CapacityLaw::Uniform { lo, hi } => (lo, hi),
            CapacityLaw::TruncNormal { sd, lo, hi, .. } => {
                if !(sd > 0.0) {
                    return Err(Error::invalid("generator.law.sd", "must be positive"));
                }
                (lo, hi)
            }
        };
        if !(lo >= 0.0 && lo <= hi) {
            return Err(Error::invalid("generator.law", "need 0 <= lo <= hi"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfipParams {
    pub rows: usize,
    pub cols: usize,
    pub horizon: usize,
    pub support_size: usize,
    /// Interdiction budget per stage (a single entry is reused for every stage).
    pub budgets: Vec<f64>,
    pub law: CapacityLaw,
    #[serde(default = "default_fraction")]
    pub interdictable_fraction: f64,
    #[serde(default)]
    pub epsilon: f64,
    pub seed: u64,
    /// When false, stage 1 only interdicts and flow starts at stage 2.
    #[serde(default = "yes")]
    pub flow_in_first_stage: bool,
}

fn default_fraction() -> f64 {
    0.8
}

fn yes() -> bool {
    true
}

impl Default for MfipParams {
    fn default() -> Self {
        MfipParams {
            rows: 2,
            cols: 2,
            horizon: 2,
            support_size: 3,
            budgets: vec![1.0],
            law: CapacityLaw::Uniform { lo: 30.0, hi: 60.0 },
            interdictable_fraction: 0.8,
            epsilon: 0.0,
            seed: 0,
            flow_in_first_stage: true,
        }
    }
}

impl MfipParams {
    pub fn budget(&self, t: usize) -> f64 {
        self.budgets[t.min(self.budgets.len() - 1)]
    }
}

/// Column layout of the single-level stage program: `x` over interdictable
/// arcs, then `y = (π over nodes, w over finite arcs, z over interdictable arcs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MfipLayout {
    pub interdictable: Vec<usize>,
    pub finite: Vec<usize>,
    pub pi: Range<usize>,
    pub w: Range<usize>,
    pub z: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct MfipInstance {
    pub network: Network,
    pub model: MultistageModel,
    pub layout: MfipLayout,
    pub budgets: Vec<f64>,
    pub flow_in_first_stage: bool,
    /// Capacities per stage and realization, in finite-arc order.
    pub caps: Vec<Vec<Vec<f64>>>,
    /// Arcs whose interdiction fails in corrupted realizations.
    pub critical: Vec<usize>,
    pub corrupted: Vec<Vec<bool>>,
}

/// Grid network: `rows × cols` grid nodes, source 0, sink 1.
pub fn grid_network<R: Rng + ?Sized>(rows: usize, cols: usize, fraction: f64, rng: &mut R) -> Result<Network> {
    if rows < 1 || cols < 2 {
        return Err(Error::BadGrid(format!("{rows}x{cols}: need at least one row and two columns")));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::BadGrid(format!("interdictable fraction {fraction} outside [0, 1]")));
    }
    let node = |i: usize, j: usize| 2 + i * cols + j;
    let mut net = Network::new(2 + rows * cols, 0, 1);
    for i in 0..rows {
        net.add_arc(0, node(i, 0), false, true);
    }
    let mut finite = Vec::new();
    for i in 0..rows {
        for j in 0..cols - 1 {
            finite.push(net.add_arc(node(i, j), node(i, j + 1), false, false));
        }
    }
    for i in 0..rows.saturating_sub(1) {
        for j in 0..cols {
            let down = j == 0 || j == cols - 1 || rng.gen_bool(0.5);
            let (u, v) = if down { (node(i, j), node(i + 1, j)) } else { (node(i + 1, j), node(i, j)) };
            finite.push(net.add_arc(u, v, false, false));
        }
    }
    for i in 0..rows {
        net.add_arc(node(i, cols - 1), 1, false, true);
    }
    let k = (fraction * finite.len() as f64).round() as usize;
    let mut chosen = sample(rng, finite.len(), k).into_vec();
    chosen.sort_unstable();
    for c in chosen {
        net.arcs[finite[c]].interdictable = true;
    }
    net.close();
    Ok(net)
}

impl MfipInstance {
    fn has_flow(&self, t: usize) -> bool {
        t > 0 || self.flow_in_first_stage
    }

    /// Stage data for capacities `caps` (finite-arc order).
    pub fn scenario_data(&self, t: usize, caps: &[f64], corrupted: bool) -> StageScenario {
        stage_data(&self.network, &self.layout, self.budgets[t], self.has_flow(t), caps, if corrupted { &self.critical } else { &[] })
    }

    /// Outcome vector: capacities, then one coordinate per critical arc that
    /// carries the capacity when the realization is corrupted and zero otherwise.
    fn omega(&self, caps: &[f64], corrupted: bool) -> Vec<f64> {
        let mut w = caps.to_vec();
        for &a in &self.critical {
            let k = self.layout.finite.iter().position(|&f| f == a).unwrap();
            w.push(if corrupted { caps[k] } else { 0.0 });
        }
        w
    }

    fn rebuild(&mut self) {
        for t in 0..self.model.horizon {
            let mut scen = Vec::new();
            let mut real = Vec::new();
            for (i, caps) in self.caps[t].iter().enumerate() {
                let c = self.corrupted[t][i];
                scen.push(self.scenario_data(t, caps, c));
                real.push(self.omega(caps, c));
            }
            self.model.stages[t].scenarios = scen;
            let probs = self.model.supports[t].reference_probs.clone();
            self.model.supports[t] = ScenarioSupport { realizations: real, reference_probs: probs };
        }
    }
}

fn stage_data(net: &Network, lay: &MfipLayout, budget: f64, flow: bool, caps: &[f64], failing: &[usize]) -> StageScenario {
    let d_x = lay.interdictable.len();
    let d_y = if flow { lay.z.end } else { 0 };
    let mut rows = ConstraintBlock::empty();
    let zero_c = vec![0.0; d_x];
    if flow {
        for (a, arc) in net.arcs.iter().enumerate() {
            if net.is_dummy(a) {
                continue;
            }
            let mut b = vec![0.0; d_y];
            b[lay.pi.start + arc.tail] += 1.0;
            b[lay.pi.start + arc.head] -= 1.0;
            if let Some(k) = lay.finite.iter().position(|&f| f == a) {
                b[lay.w.start + k] = 1.0;
            }
            rows.push(vec![0.0; d_x], b, zero_c.clone(), Relation::Ge, 0.0);
        }
        let mut b = vec![0.0; d_y];
        b[lay.pi.start + net.sink] = 1.0;
        b[lay.pi.start + net.source] = -1.0;
        rows.push(vec![0.0; d_x], b, zero_c.clone(), Relation::Ge, 1.0);
        for (k, &a) in lay.interdictable.iter().enumerate() {
            let wk = lay.w.start + lay.finite.iter().position(|&f| f == a).unwrap();
            let zk = lay.z.start + k;
            let mut ax = vec![0.0; d_x];
            ax[k] = -1.0;
            let mut b = vec![0.0; d_y];
            b[zk] = 1.0;
            rows.push(ax.clone(), b.clone(), zero_c.clone(), Relation::Le, 0.0);
            b[wk] = -1.0;
            rows.push(vec![0.0; d_x], b.clone(), zero_c.clone(), Relation::Le, 0.0);
            rows.push(ax, b, zero_c.clone(), Relation::Ge, -1.0);
        }
    }
    for k in 0..d_x {
        let mut ax = vec![0.0; d_x];
        ax[k] = 1.0;
        let mut cx = vec![0.0; d_x];
        cx[k] = -1.0;
        rows.push(ax, vec![0.0; d_y], cx, Relation::Ge, 0.0);
    }
    let f: Vec<f64> = lay.interdictable.iter().map(|&a| net.arcs[a].cost).collect();
    rows.push(f.clone(), vec![0.0; d_y], f.iter().map(|v| -v).collect(), Relation::Le, budget);
    let mut cost_y = vec![0.0; d_y];
    if flow {
        for (k, c) in caps.iter().enumerate() {
            cost_y[lay.w.start + k] = *c;
        }
        for (k, &a) in lay.interdictable.iter().enumerate() {
            let fk = lay.finite.iter().position(|&f| f == a).unwrap();
            cost_y[lay.z.start + k] = if failing.contains(&a) { 0.0 } else { -caps[fk] };
        }
    }
    StageScenario { cost_x: vec![0.0; d_x], cost_y, rows, disjuncts: vec![] }
}

/// Single-level stage programs from the dual of max flow. `caps[t][i]` lists
/// finite-arc capacities of realization `i` at stage `t`; stage 0 has one.
pub fn build_mfip(net: &Network, caps: Vec<Vec<Vec<f64>>>, budgets: &[f64], epsilon: f64, flow_in_first_stage: bool) -> Result<MfipInstance> {
    let horizon = caps.len();
    if horizon == 0 || budgets.len() != horizon {
        return Err(Error::invalid("budgets", format!("expected {horizon} stage budgets")));
    }
    let interdictable = net.interdictable_arcs();
    let finite = net.finite_arcs();
    if interdictable.iter().any(|a| !finite.contains(a)) {
        return Err(Error::invalid("network.arcs", "interdictable arcs need finite capacity"));
    }
    let n = net.num_nodes;
    let layout = MfipLayout {
        pi: 0..n,
        w: n..n + finite.len(),
        z: n + finite.len()..n + finite.len() + interdictable.len(),
        interdictable,
        finite,
    };
    let d_x = layout.interdictable.len();
    let mut stages = Vec::with_capacity(horizon);
    let mut supports = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let flow = t > 0 || flow_in_first_stage;
        let d_y = if flow { layout.z.end } else { 0 };
        stages.push(StageTemplate {
            d_x,
            d_y,
            d_x_prev: d_x,
            y_binary: vec![false; d_y],
            y_upper: vec![Some(1.0); d_y],
            scenarios: vec![],
        });
        supports.push(ScenarioSupport::uniform(vec![vec![]; caps[t].len()]));
    }
    let ambiguity = if epsilon > 0.0 { AmbiguitySpec::wasserstein(epsilon) } else { AmbiguitySpec::singleton() };
    let model = MultistageModel {
        horizon,
        x0: vec![0.0; d_x],
        stages,
        supports,
        ambiguity,
        objective_sign: 1.0,
        generator: None,
    };
    let corrupted = caps.iter().map(|c| vec![false; c.len()]).collect();
    let mut inst = MfipInstance {
        network: net.clone(),
        model,
        layout,
        budgets: budgets.to_vec(),
        flow_in_first_stage,
        caps,
        critical: vec![],
        corrupted,
    };
    inst.rebuild();
    inst.model.validate()?;
    Ok(inst)
}

pub fn gen_mfip_instance(p: &MfipParams) -> Result<MfipInstance> {
    if p.horizon == 0 || p.support_size == 0 {
        return Err(Error::invalid("generator", "horizon and support size must be positive"));
    }
    if p.budgets.is_empty() {
        return Err(Error::invalid("generator.budgets", "at least one budget is required"));
    }
    p.law.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let net = grid_network(p.rows, p.cols, p.interdictable_fraction, &mut rng)?;
    let nf = net.finite_arcs().len();
    let caps: Vec<Vec<Vec<f64>>> = (0..p.horizon)
        .map(|t| {
            let n = if t == 0 { 1 } else { p.support_size };
            (0..n).map(|_| (0..nf).map(|_| round3(p.law.sample(&mut rng))).collect()).collect()
        })
        .collect();
    let budgets: Vec<f64> = (0..p.horizon).map(|t| p.budget(t)).collect();
    let mut inst = build_mfip(&net, caps, &budgets, p.epsilon, p.flow_in_first_stage)?;
    inst.model.generator = Some(GeneratorInfo::Mfip(p.clone()));
    Ok(inst)
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Arcs interdicted by the deterministic single-stage problem at `mean_caps`.
pub fn critical_arcs(net: &Network, mean_caps: &[f64], budget: f64) -> Result<Vec<usize>> {
    let inst = build_mfip(net, vec![vec![mean_caps.to_vec()]], &[budget], 0.0, true)?;
    let st = &inst.model.stages[0];
    let sub = build_subproblem(st, &st.scenarios[0], LinkMode::Fixed(&inst.model.x0), &ApproxFragment::None)?;
    let s = solve_mip(&sub.mip, 1e-9)?;
    if s.status != LpStatus::Optimal {
        return Err(Error::StageFailure { stage: 1, scenario: 0, status: "is not solvable" });
    }
    Ok(inst.layout.interdictable.iter().zip(sub.x_of(&s.primal)).filter(|(_, &v)| v > 0.5).map(|(&a, _)| a).collect())
}

/// Marks `⌈α·N⌉` realizations of every random stage as corrupted: in them,
/// interdicting a critical arc leaves its capacity in place.
pub fn corrupt_samples(inst: &MfipInstance, alpha_bar: f64, critical: &[usize], seed: u64) -> Result<MfipInstance> {
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::invalid("alpha_bar", "must lie in [0, 1]"));
    }
    if let Some(a) = critical.iter().find(|a| !inst.layout.interdictable.contains(a)) {
        return Err(Error::invalid("critical", format!("arc {a} is not interdictable")));
    }
    let mut out = inst.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    out.critical = critical.to_vec();
    for t in 1..out.model.horizon {
        let n = out.caps[t].len();
        let k = (alpha_bar * n as f64 - 1e-9).ceil().max(0.0) as usize;
        let mut flags = vec![false; n];
        for i in sample(&mut rng, n, k.min(n)) {
            flags[i] = true;
        }
        out.corrupted[t] = flags;
    }
    out.rebuild();
    out.model.validate()?;
    Ok(out)
}
