//! Experiment orchestration: training policies per (variant, ε), out-of-sample
//! simulation on the generating law, the corruption study, and CSV output.

mod cli;

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ambiguity::{AmbiguityKind, AmbiguitySpec, Risk};
use crate::disjunctive::dasddp_dp_run;
use crate::interdiction::{gen_mfip_instance, CapacityLaw, MfipInstance};
use crate::model::{GeneratorInfo, MultistageModel, StageScenario};
use crate::sddp::{forward_with_data, run, sample_path, Policy, SolveLog, SolverConfig};
use crate::{Error, Result};

pub use cli::cli_main;

/// `%.9g` formatting.
pub fn sig9(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if !(-4..9).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mant}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{v:.*}", (8 - exp) as usize)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Nearest-rank percentile of an ascending slice: the value of rank `⌈p·n/100⌉`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64 - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

pub fn percentiles(values: &[f64], ps: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    ps.iter().map(|&p| percentile(&v, p)).collect()
}

/// Scenario law used to draw out-of-sample paths.
#[derive(Clone, Debug)]
pub enum OosWorld {
    /// Resample the training support with its reference probabilities.
    Empirical,
    /// Fresh finite-arc capacities, one law per finite arc, for every stage after the first.
    Capacities { inst: MfipInstance, laws: Vec<CapacityLaw> },
}

impl OosWorld {
    /// Generating law of a generated instance; the empirical support otherwise.
    pub fn for_model(model: &MultistageModel) -> Result<Self> {
        match &model.generator {
            Some(GeneratorInfo::Mfip(p)) => {
                let inst = gen_mfip_instance(p)?;
                let laws = vec![p.law.clone(); inst.layout.finite.len()];
                Ok(OosWorld::Capacities { inst, laws })
            }
            _ => Ok(OosWorld::Empirical),
        }
    }

    /// Stage data along `n` fresh paths.
    pub fn sample(&self, model: &MultistageModel, n: usize, seed: u64) -> Vec<Vec<StageScenario>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| match self {
                OosWorld::Empirical => {
                    let path = sample_path(&mut rng, model);
                    path.iter().enumerate().map(|(t, &i)| model.scenario(t, i).clone()).collect()
                }
                OosWorld::Capacities { inst, laws } => (0..model.horizon)
                    .map(|t| {
                        if t == 0 {
                            model.scenario(0, 0).clone()
                        } else {
                            let caps: Vec<f64> = laws.iter().map(|l| round3(l.sample(&mut rng))).collect();
                            inst.scenario_data(t, &caps, false)
                        }
                    })
                    .collect(),
            })
            .collect()
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Ambiguity set of radius `epsilon` in the model's own family.
pub fn ambiguity_for(model: &MultistageModel, epsilon: f64) -> AmbiguitySpec {
    let mut a = model.ambiguity.clone();
    match a.kind {
        AmbiguityKind::WassersteinDdContinuous => a.base = Some(epsilon),
        _ => {
            a = AmbiguitySpec { norm: a.norm, ..AmbiguitySpec::wasserstein(epsilon) };
        }
    }
    a.epsilon = epsilon;
    a
}

/// Trains one policy. `dp` runs the LP-subproblem driver under `risk`.
pub fn train(
    model: &MultistageModel,
    variant: &str,
    epsilon: f64,
    risk: Risk,
    level: Option<usize>,
    cfg: &SolverConfig,
) -> Result<(Policy, SolveLog)> {
    let amb = ambiguity_for(model, epsilon);
    if variant == "dp" {
        dasddp_dp_run(model, &amb, risk, level, cfg)
    } else {
        let cfg = SolverConfig { variant: variant.to_string(), ..cfg.clone() };
        run(model, &amb, &cfg)
    }
}

/// Realized objectives (source-problem sign) of `policy` on the given paths.
pub fn evaluate_paths(model: &MultistageModel, policy: &Policy, paths: &[Vec<StageScenario>], tol_mip: f64) -> Result<Vec<f64>> {
    let approx = policy.approx()?;
    let labels = vec![0; model.horizon];
    paths
        .par_iter()
        .map(|data| {
            let refs: Vec<&StageScenario> = data.iter().collect();
            Ok(model.objective_sign * forward_with_data(model, policy, approx.as_ref(), &labels, &refs, tol_mip)?.objective)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub variants: Vec<String>,
    pub epsilons: Vec<f64>,
    pub oos_paths: usize,
    pub oos_seed: u64,
    pub percentiles: Vec<f64>,
    /// Risk posture for the `dp` variant.
    pub risk: Risk,
    pub level: Option<usize>,
    pub cfg: SolverConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.oos_paths == 0 {
            return Err(Error::invalid("oos_paths", "must be at least 1"));
        }
        if let Some(p) = self.percentiles.iter().find(|&&p| !(p > 0.0 && p < 100.0)) {
            return Err(Error::invalid("percentiles", format!("{p} is outside (0, 100)")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OosRow {
    pub variant: String,
    pub epsilon: f64,
    pub objectives: Vec<f64>,
    pub percentiles: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OosReport {
    pub percentiles: Vec<f64>,
    pub rows: Vec<OosRow>,
}

impl OosRow {
    pub fn new(variant: &str, epsilon: f64, objectives: Vec<f64>, ps: &[f64]) -> Self {
        let mean = objectives.iter().sum::<f64>() / objectives.len() as f64;
        OosRow { variant: variant.to_string(), epsilon, percentiles: percentiles(&objectives, ps), objectives, mean }
    }
}

impl OosReport {
    pub fn row(&self, variant: &str, epsilon: f64) -> Option<&OosRow> {
        self.rows.iter().find(|r| r.variant == variant && r.epsilon == epsilon)
    }

    /// `path,variant,epsilon,objective`.
    pub fn oos_csv(&self) -> String {
        let mut out = String::from("path,variant,epsilon,objective\n");
        for r in &self.rows {
            for (k, v) in r.objectives.iter().enumerate() {
                let _ = writeln!(out, "{k},{},{},{}", r.variant, sig9(r.epsilon), sig9(*v));
            }
        }
        out
    }

    /// `variant,epsilon,mean,p<q>...`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("variant,epsilon,mean");
        for p in &self.percentiles {
            let _ = write!(out, ",p{}", sig9(*p));
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.variant, sig9(r.epsilon), sig9(r.mean));
            for v in &r.percentiles {
                let _ = write!(out, ",{}", sig9(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Trains every (variant, ε) on `model` and simulates each policy on the same
/// fresh paths drawn from `world`.
pub fn run_out_of_sample(model: &MultistageModel, world: &OosWorld, spec: &ExperimentSpec) -> Result<OosReport> {
    spec.validate()?;
    let paths = world.sample(model, spec.oos_paths, spec.oos_seed);
    let mut rows = Vec::new();
    for v in &spec.variants {
        for &eps in &spec.epsilons {
            let (policy, _) = train(model, v, eps, spec.risk, spec.level, &spec.cfg)?;
            let obj = evaluate_paths(model, &policy, &paths, spec.cfg.tol_mip)?;
            rows.push(OosRow::new(v, eps, obj, &spec.percentiles));
        }
    }
    Ok(OosReport { percentiles: spec.percentiles.clone(), rows })
}

#[derive(Clone, Debug)]
pub struct CorruptionSpec {
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub variants: Vec<String>,
    pub clean_paths: usize,
    pub seed: u64,
    pub cfg: SolverConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionRow {
    pub alpha: f64,
    pub epsilon: f64,
    pub variant: String,
    /// Interdicted arcs of the first-stage decision.
    pub interdicted: Vec<usize>,
    pub objectives: Vec<f64>,
    pub mean: f64,
}

/// Corrupts the training samples at each α on `critical`, trains every
/// (variant, ε), and evaluates the first-stage decision on clean draws from `laws`.
pub fn run_corruption_study(
    inst: &MfipInstance,
    laws: &[CapacityLaw],
    critical: &[usize],
    spec: &CorruptionSpec,
) -> Result<Vec<CorruptionRow>> {
    if inst.model.horizon != 2 || inst.flow_in_first_stage {
        return Err(Error::invalid("generator", "the corruption study needs a two-stage model with interdiction only in stage 1"));
    }
    if laws.len() != inst.layout.finite.len() {
        return Err(Error::DimensionMismatch(format!("{} laws for {} finite arcs", laws.len(), inst.layout.finite.len())));
    }
    if spec.clean_paths == 0 {
        return Err(Error::invalid("clean_paths", "must be at least 1"));
    }
    let world = OosWorld::Capacities { inst: inst.clone(), laws: laws.to_vec() };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let clean = world.sample(&inst.model, spec.clean_paths, rng.gen());
    let mut rows = Vec::new();
    for &alpha in &spec.alphas {
        let corrupted = crate::interdiction::corrupt_samples(inst, alpha, critical, rng.gen())?;
        for &eps in &spec.epsilons {
            for v in &spec.variants {
                let (policy, _) = train(&corrupted.model, v, eps, Risk::Neutral, None, &spec.cfg)?;
                let approx = policy.approx()?;
                let first = forward_with_data(
                    &corrupted.model,
                    &policy,
                    approx.as_ref(),
                    &[0, 0],
                    &[corrupted.model.scenario(0, 0), corrupted.model.scenario(1, 0)],
                    spec.cfg.tol_mip,
                )?;
                let x = &first.states[0];
                let interdicted = inst.layout.interdictable.iter().zip(x).filter(|(_, &v)| v > 0.5).map(|(&a, _)| a).collect();
                let objectives = clean
                    .par_iter()
                    .map(|data| clean_value(inst, x, &data[1], spec.cfg.tol_mip))
                    .collect::<Result<Vec<_>>>()?;
                let mean = objectives.iter().sum::<f64>() / objectives.len() as f64;
                rows.push(CorruptionRow { alpha, epsilon: eps, variant: v.clone(), interdicted, objectives, mean });
            }
        }
    }
    Ok(rows)
}

/// Second-stage value with the first-stage interdiction fixed.
fn clean_value(inst: &MfipInstance, x: &[f64], data: &StageScenario, tol_mip: f64) -> Result<f64> {
    use crate::lp::{solve_mip, LpStatus};
    use crate::model::{build_subproblem, ApproxFragment, LinkMode};
    let sub = build_subproblem(&inst.model.stages[1], data, LinkMode::Fixed(x), &ApproxFragment::None)?;
    let s = solve_mip(&sub.mip, tol_mip)?;
    if s.status != LpStatus::Optimal {
        return Err(Error::StageFailure { stage: 2, scenario: 0, status: "is not solvable" });
    }
    Ok(s.objective)
}

/// `alpha,epsilon,variant,mean,interdicted`.
pub fn corruption_csv(rows: &[CorruptionRow]) -> String {
    let mut out = String::from("alpha,epsilon,variant,mean,interdicted\n");
    for r in rows {
        let arcs: Vec<String> = r.interdicted.iter().map(|a| a.to_string()).collect();
        let _ = writeln!(out, "{},{},{},{},{}", sig9(r.alpha), sig9(r.epsilon), r.variant, sig9(r.mean), arcs.join(";"));
    }
    out
}
