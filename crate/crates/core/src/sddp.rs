//! Sampling, forward and backward passes, and the outer loop.

use std::sync::Arc;
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::{AmbiguityKind, AmbiguitySpec};
use crate::approx::{
    builtin_registry, integer_optimality_cut, lp_benders_cut, strengthened_benders_cut, Cut, CutLayout, RefineInput, StageCuts,
    ValueApproximation,
};
use crate::harness::sig9;
use crate::lp::{solve_mip, LpStatus, MipSolution};
use crate::model::{build_subproblem, stage_lower_bounds, ApproxFragment, LinkMode, MultistageModel, StageScenario, Subproblem};
use crate::{Error, Result};

/// Which per-scenario cut the backward pass generates at iteration `l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutSchedule {
    /// Integer optimality cuts on even iterations, strengthened Benders on odd ones.
    Parity,
    IntegerOnly,
    StrengthenedOnly,
    BendersOnly,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub variant: String,
    pub seed: u64,
    pub max_iters: usize,
    pub time_limit_secs: f64,
    pub stall_iters: usize,
    /// Smallest lower-bound gain that counts as progress.
    pub stall_tol: f64,
    pub paths_per_iter: usize,
    pub tol_mip: f64,
    /// 0 uses the global rayon pool.
    pub threads: usize,
    /// When false the `time_s` column is written as 0 so logs are byte-reproducible.
    pub record_time: bool,
    pub schedule: CutSchedule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            variant: "neutral".into(),
            seed: 0,
            max_iters: 5000,
            time_limit_secs: 3600.0,
            stall_iters: 100,
            stall_tol: 1e-6,
            paths_per_iter: 1,
            tol_mip: 1e-9,
            threads: 0,
            record_time: true,
            schedule: CutSchedule::Parity,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stall_iters == 0 {
            return Err(Error::invalid("stall_iters", "must be at least 1"));
        }
        if self.paths_per_iter == 0 {
            return Err(Error::invalid("paths_per_iter", "must be at least 1"));
        }
        if !(self.tol_mip >= 0.0) {
            return Err(Error::invalid("tol_mip", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Cut collections defining the decision rule; `cuts[t]` approximates the
/// expected cost-to-go seen from stage `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub variant: String,
    pub ambiguity: AmbiguitySpec,
    pub floors: Vec<f64>,
    pub cuts: Vec<StageCuts>,
}

impl Policy {
    pub fn new(model: &MultistageModel, approx: &dyn ValueApproximation, amb: &AmbiguitySpec) -> Result<Self> {
        let floors = if amb.kind == AmbiguityKind::WassersteinDdContinuous {
            stage_lower_bounds(&box_floor_model(model, amb))?
        } else {
            stage_lower_bounds(model)?
        };
        let mut cuts = vec![StageCuts::default(); model.horizon];
        if approx.layout() == CutLayout::PerScenario {
            for t in 0..model.horizon.saturating_sub(1) {
                let d_x = model.stages[t].d_x;
                cuts[t].per_scenario =
                    (0..model.num_scenarios(t + 1)).map(|i| vec![Cut::constant(t, Some(i), d_x, floors[t + 1])]).collect();
            }
        }
        Ok(Policy { variant: approx.name().to_string(), ambiguity: amb.clone(), floors, cuts })
    }

    pub fn approx(&self) -> Result<Arc<dyn ValueApproximation>> {
        builtin_registry().get(&self.variant)
    }

    pub fn fragment<'a>(&'a self, model: &'a MultistageModel, approx: &dyn ValueApproximation, t: usize) -> ApproxFragment<'a> {
        if t + 1 >= model.horizon {
            ApproxFragment::None
        } else {
            approx.fragment(&self.cuts[t], self.floors[t + 1], &model.supports[t + 1], &self.ambiguity)
        }
    }

    pub fn num_cuts(&self) -> usize {
        self.cuts.iter().map(StageCuts::len).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Replaces every random stage's support by the box lower corner, where the
/// stage value over a `≥`-row box is smallest.
fn box_floor_model(model: &MultistageModel, amb: &AmbiguitySpec) -> MultistageModel {
    let mut m = model.clone();
    if let Some(lo) = &amb.box_lower {
        for t in 1..m.horizon {
            let mut sc = m.stages[t].scenarios[0].clone();
            sc.rows.rhs = lo.clone();
            m.stages[t].scenarios = vec![sc];
            m.supports[t] = crate::model::ScenarioSupport::singleton(lo.clone());
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    ConvergedStall,
    IterLimit,
    TimeLimit,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::ConvergedStall => "converged_stall",
            SolveStatus::IterLimit => "iter_limit",
            SolveStatus::TimeLimit => "time_limit",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub paths: Vec<Vec<usize>>,
    pub fwd_obj: f64,
    pub lb: f64,
    pub time_s: f64,
    pub cuts_added: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveLog {
    pub records: Vec<IterRecord>,
    pub status: SolveStatus,
    pub objective_sign: f64,
}

impl SolveLog {
    /// Stage-1 lower bound of the minimization form.
    pub fn final_lb(&self) -> f64 {
        self.records.last().map_or(f64::NEG_INFINITY, |r| r.lb)
    }

    /// `iter,lb,fwd_obj,time_s,cuts_added`, bounds in the source problem's sign.
    pub fn to_csv(&self) -> String {
        let s = self.objective_sign;
        let mut out = String::from("iter,lb,fwd_obj,time_s,cuts_added\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{},{}\n", r.iter, sig9(s * r.lb), sig9(s * r.fwd_obj), sig9(r.time_s), r.cuts_added));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub path: Vec<usize>,
    pub states: Vec<Vec<f64>>,
    pub locals: Vec<Vec<f64>>,
    pub stage_costs: Vec<f64>,
    /// Σ f_t along the path.
    pub objective: f64,
    /// Stage-1 subproblem value, the lower bound under the current cuts.
    pub first_value: f64,
}

pub fn sample_path<R: rand::Rng + ?Sized>(rng: &mut R, model: &MultistageModel) -> Vec<usize> {
    let mut path = Vec::with_capacity(model.horizon);
    path.push(0);
    for t in 1..model.horizon {
        let p = &model.supports[t].reference_probs;
        if p.len() == 1 {
            path.push(0);
        } else {
            let d = WeightedIndex::new(p).expect("validated probabilities");
            path.push(d.sample(rng));
        }
    }
    path
}

fn tag_failure(e: Error, t: usize, i: usize) -> Error {
    match e {
        Error::StageFailure { status, .. } => Error::StageFailure { stage: t + 1, scenario: i, status },
        e => e,
    }
}

/// Solves the stage-`t` subproblem of the current policy at `x_prev`.
pub fn solve_stage(
    model: &MultistageModel,
    policy: &Policy,
    approx: &dyn ValueApproximation,
    t: usize,
    x_prev: &[f64],
    data: &StageScenario,
    tol_mip: f64,
) -> Result<(Subproblem, MipSolution)> {
    let frag = policy.fragment(model, approx, t);
    let sub = build_subproblem(&model.stages[t], data, LinkMode::Fixed(x_prev), &frag)?;
    let s = solve_mip(&sub.mip, tol_mip)?;
    match s.status {
        LpStatus::Optimal => Ok((sub, s)),
        LpStatus::Infeasible => Err(Error::StageFailure { stage: t + 1, scenario: 0, status: "is infeasible" }),
        LpStatus::Unbounded => Err(Error::StageFailure { stage: t + 1, scenario: 0, status: "is unbounded" }),
    }
}

/// Forward simulation with explicit stage data (realization `path[t]` supplies the label only).
pub fn forward_with_data(
    model: &MultistageModel,
    policy: &Policy,
    approx: &dyn ValueApproximation,
    path: &[usize],
    data: &[&StageScenario],
    tol_mip: f64,
) -> Result<Trajectory> {
    let mut x_prev = model.x0.clone();
    let mut traj = Trajectory {
        path: path.to_vec(),
        states: vec![],
        locals: vec![],
        stage_costs: vec![],
        objective: 0.0,
        first_value: f64::NAN,
    };
    for t in 0..model.horizon {
        let (sub, s) = solve_stage(model, policy, approx, t, &x_prev, data[t], tol_mip).map_err(|e| tag_failure(e, t, path[t]))?;
        if t == 0 {
            traj.first_value = s.objective;
        }
        let x: Vec<f64> = sub.x_of(&s.primal).iter().map(|v| v.round()).collect();
        let y = sub.y_of(&s.primal).to_vec();
        let cost = MultistageModel::stage_cost(data[t], &x, &y);
        traj.objective += cost;
        traj.stage_costs.push(cost);
        traj.states.push(x.clone());
        traj.locals.push(y);
        x_prev = x;
    }
    Ok(traj)
}

pub fn forward_pass(model: &MultistageModel, policy: &Policy, approx: &dyn ValueApproximation, path: &[usize], tol_mip: f64) -> Result<Trajectory> {
    let data: Vec<&StageScenario> = path.iter().enumerate().map(|(t, &i)| model.scenario(t, i)).collect();
    forward_with_data(model, policy, approx, path, &data, tol_mip)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    IntegerOptimality,
    Strengthened,
    Benders,
}

fn family(schedule: CutSchedule, iteration: usize) -> Family {
    match schedule {
        CutSchedule::Parity if iteration % 2 == 0 => Family::IntegerOptimality,
        CutSchedule::Parity | CutSchedule::StrengthenedOnly => Family::Strengthened,
        CutSchedule::IntegerOnly => Family::IntegerOptimality,
        CutSchedule::BendersOnly => Family::Benders,
    }
}

/// Cut on `Q̂_t(·, ω_i)` at `x_prev` under the current stage-`t` approximation.
fn scenario_cut(
    model: &MultistageModel,
    policy: &Policy,
    approx: &dyn ValueApproximation,
    t: usize,
    i: usize,
    x_prev: &[f64],
    fam: Family,
    tol_mip: f64,
) -> Result<Cut> {
    let st = &model.stages[t];
    let data = model.scenario(t, i);
    let frag = policy.fragment(model, approx, t);
    let mut cut = match fam {
        Family::IntegerOptimality => {
            let (_, s) = solve_stage(model, policy, approx, t, x_prev, data, tol_mip)?;
            let q = s.objective.min(s.incumbent_bound);
            integer_optimality_cut(q, x_prev, policy.floors[t].min(q))?
        }
        Family::Strengthened => strengthened_benders_cut(st, data, x_prev, &frag, tol_mip)?,
        Family::Benders => lp_benders_cut(st, data, x_prev, &frag)?,
    };
    cut.stage = t - 1;
    cut.scenario = Some(i);
    Ok(cut)
}

/// Refines stages `T-1, …, 1` along the given trajectories; returns the number of cuts added.
pub fn backward_pass(
    model: &MultistageModel,
    policy: &mut Policy,
    approx: &dyn ValueApproximation,
    trajectories: &[Trajectory],
    iteration: usize,
    cfg: &SolverConfig,
) -> Result<usize> {
    let fam = family(cfg.schedule, iteration);
    let mut added = 0;
    for t in (1..model.horizon).rev() {
        for traj in trajectories {
            let x_hat = &traj.states[t - 1];
            let scenario_cuts: Vec<Cut> = if approx.uses_scenario_cuts() {
                let pol: &Policy = policy;
                (0..model.num_scenarios(t))
                    .into_par_iter()
                    .map(|i| scenario_cut(model, pol, approx, t, i, x_hat, fam, cfg.tol_mip).map_err(|e| tag_failure(e, t, i)))
                    .collect::<Result<_>>()?
            } else {
                vec![]
            };
            let own = if t + 1 < model.horizon { Some(&policy.cuts[t]) } else { None };
            let input = RefineInput {
                model,
                t,
                x_hat,
                scenario_cuts: &scenario_cuts,
                support: &model.supports[t],
                ambiguity: &policy.ambiguity,
                own_cuts: own,
                own_floor: if t + 1 < model.horizon { policy.floors[t + 1] } else { 0.0 },
                iteration,
            };
            for c in approx.refine(&input)? {
                let pool = match (approx.layout(), c.scenario) {
                    (CutLayout::PerScenario, Some(i)) => &mut policy.cuts[t - 1].per_scenario[i],
                    _ => &mut policy.cuts[t - 1].aggregate,
                };
                if !pool.iter().any(|o| same_cut(o, &c)) {
                    pool.push(c);
                    added += 1;
                }
            }
        }
    }
    Ok(added)
}

/// Repeated states regenerate the same cut; keeping one copy bounds the pool.
fn same_cut(a: &Cut, b: &Cut) -> bool {
    (a.beta - b.beta).abs() <= 1e-9 && a.alpha.iter().zip(&b.alpha).all(|(x, y)| (x - y).abs() <= 1e-9)
}

fn check_variant(approx: &dyn ValueApproximation, amb: &AmbiguitySpec) -> Result<()> {
    let dd = amb.kind == AmbiguityKind::WassersteinDdContinuous;
    if dd != (approx.name() == "drr-dd") {
        return Err(Error::invalid(
            "ambiguity.kind",
            if dd { "wasserstein_dd_continuous needs the drr-dd variant" } else { "drr-dd needs wasserstein_dd_continuous" },
        ));
    }
    Ok(())
}

/// Runs the method with the named variant from the built-in registry.
pub fn run(model: &MultistageModel, amb: &AmbiguitySpec, cfg: &SolverConfig) -> Result<(Policy, SolveLog)> {
    let approx = builtin_registry().get(&cfg.variant)?;
    run_with(model, approx, amb, cfg)
}

pub fn run_with(model: &MultistageModel, approx: Arc<dyn ValueApproximation>, amb: &AmbiguitySpec, cfg: &SolverConfig) -> Result<(Policy, SolveLog)> {
    cfg.validate()?;
    model.validate()?;
    let mut m = model.clone();
    m.ambiguity = amb.clone();
    m.validate()?;
    check_variant(approx.as_ref(), amb)?;
    in_pool(cfg.threads, || run_inner(&m, approx.as_ref(), amb, cfg))
}

/// Runs `f` on a dedicated pool of `threads` workers (0 keeps the global pool).
pub fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn run_inner(m: &MultistageModel, approx: &dyn ValueApproximation, amb: &AmbiguitySpec, cfg: &SolverConfig) -> Result<(Policy, SolveLog)> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = Policy::new(m, approx, amb)?;
    let mut records = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut last_gain = 0;
    let status = loop {
        let iter = records.len() + 1;
        let paths: Vec<Vec<usize>> = (0..cfg.paths_per_iter).map(|_| sample_path(&mut rng, m)).collect();
        let trajs = paths.iter().map(|p| forward_pass(m, &policy, approx, p, cfg.tol_mip)).collect::<Result<Vec<_>>>()?;
        let fwd_obj = trajs.iter().map(|t| t.objective).sum::<f64>() / trajs.len() as f64;
        let cuts_added = backward_pass(m, &mut policy, approx, &trajs, iter, cfg)?;
        let lb = {
            let st0 = m.scenario(0, 0);
            solve_stage(m, &policy, approx, 0, &m.x0, st0, cfg.tol_mip).map_err(|e| tag_failure(e, 0, 0))?.1.objective
        };
        let time_s = if cfg.record_time { start.elapsed().as_secs_f64() } else { 0.0 };
        records.push(IterRecord { iter, paths, fwd_obj, lb, time_s, cuts_added });
        if lb > best + cfg.stall_tol {
            best = lb;
            last_gain = iter;
        }
        if start.elapsed().as_secs_f64() >= cfg.time_limit_secs {
            break SolveStatus::TimeLimit;
        }
        if iter - last_gain >= cfg.stall_iters {
            break SolveStatus::ConvergedStall;
        }
        if iter >= cfg.max_iters {
            break SolveStatus::IterLimit;
        }
    };
    Ok((policy, SolveLog { records, status, objective_sign: m.objective_sign }))
}

/// Realized cost `Σ f_t` of the policy along `path`, without modifying it.
pub fn evaluate_policy_path(model: &MultistageModel, policy: &Policy, path: &[usize], tol_mip: f64) -> Result<f64> {
    let approx = policy.approx()?;
    Ok(forward_pass(model, policy, approx.as_ref(), path, tol_mip)?.objective)
}
