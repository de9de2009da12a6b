use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use super::{
    ambiguity_for, corruption_csv, evaluate_paths, run_corruption_study, sig9, train, CorruptionSpec, OosReport, OosRow, OosWorld,
};
use crate::ambiguity::Risk;
use crate::interdiction::{critical_arcs, gen_flip_instance, gen_mfip_instance, CapacityLaw, FlipParams, MfipParams};
use crate::model::{exact_value_dp, random_instance, GeneratorInfo, MultistageModel, RandomParams};
use crate::sddp::{CutSchedule, Policy, SolveStatus, SolverConfig};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "dasddp", about = "Risk-receptive and robust multistage stochastic integer programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Mfip,
    Flip,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RiskArg {
    Neutral,
    Drr,
    Dro,
}

impl From<RiskArg> for Risk {
    fn from(r: RiskArg) -> Self {
        match r {
            RiskArg::Neutral => Risk::Neutral,
            RiskArg::Drr => Risk::Drr,
            RiskArg::Dro => Risk::Dro,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScheduleArg {
    Parity,
    IntegerOnly,
    StrengthenedOnly,
    BendersOnly,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a generated instance as JSON.
    Generate {
        family: Family,
        /// Generator parameters as a JSON file; defaults are used otherwise.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy; writes bounds.csv and policy.json.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "neutral")]
        variant: String,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
        /// Seconds.
        #[arg(long, default_value_t = 3600.0)]
        time_limit: f64,
        #[arg(long, default_value_t = 100)]
        stall_iters: usize,
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Write time_s as 0.
        #[arg(long)]
        no_time: bool,
        /// Risk posture of the `dp` variant.
        #[arg(long, value_enum, default_value = "neutral")]
        risk: RiskArg,
        /// Hierarchy level of the `dp` variant on stages without disjuncts.
        #[arg(long)]
        hierarchy_level: Option<usize>,
        #[arg(long, value_enum, default_value = "parity")]
        schedule: ScheduleArg,
    },
    /// Simulate a saved policy on fresh paths; writes oos.csv and summary.csv.
    Evaluate {
        instance: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 3000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 50.0, 90.0, 95.0])]
        percentiles: Vec<f64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the exact (drr, neutral, dro) values by enumeration.
    Oracle {
        instance: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
    /// Corrupted-sample study on a generated two-stage MFIP instance; writes corruption.csv.
    CorruptStudy {
        instance: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.2, 0.4])]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 5.0])]
        epsilons: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values = ["neutral", "drr-c", "dro-c"])]
        variants: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Exit codes: 0 success, 1 usage, 2 model error, 3 limit hit (outputs still written).
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NodeLimit(_) => 3,
                _ => 2,
            }
        }
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn read_params<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::Generate { family, params, seed, out } => {
            let model = match family {
                Family::Mfip => {
                    let mut p: MfipParams = read_params(&params)?;
                    p.seed = seed.unwrap_or(p.seed);
                    gen_mfip_instance(&p)?.model
                }
                Family::Flip => {
                    let mut p: FlipParams = read_params(&params)?;
                    p.seed = seed.unwrap_or(p.seed);
                    gen_flip_instance(&p)?.model
                }
                Family::Random => {
                    let mut p: RandomParams = read_params(&params)?;
                    p.seed = seed.unwrap_or(p.seed);
                    random_instance(&p)?
                }
            };
            model.save(&out)?;
            Ok(0)
        }
        Cmd::Solve {
            instance,
            variant,
            epsilon,
            seed,
            max_iters,
            time_limit,
            stall_iters,
            threads,
            out,
            no_time,
            risk,
            hierarchy_level,
            schedule,
        } => {
            let model = MultistageModel::load(&instance)?;
            let cfg = SolverConfig {
                seed,
                max_iters,
                time_limit_secs: time_limit,
                stall_iters,
                threads,
                record_time: !no_time,
                schedule: match schedule {
                    ScheduleArg::Parity => CutSchedule::Parity,
                    ScheduleArg::IntegerOnly => CutSchedule::IntegerOnly,
                    ScheduleArg::StrengthenedOnly => CutSchedule::StrengthenedOnly,
                    ScheduleArg::BendersOnly => CutSchedule::BendersOnly,
                },
                ..SolverConfig::default()
            };
            let (policy, log) = train(&model, &variant, epsilon, risk.into(), hierarchy_level, &cfg)?;
            write(&out, "bounds.csv", &log.to_csv())?;
            write(&out, "policy.json", &policy.to_json()?)?;
            println!("status {} lb {} iters {}", log.status.as_str(), sig9(model.objective_sign * log.final_lb()), log.records.len());
            Ok(match log.status {
                SolveStatus::ConvergedStall => 0,
                _ => 3,
            })
        }
        Cmd::Evaluate { instance, policy, paths, seed, percentiles, out } => {
            let model = MultistageModel::load(&instance)?;
            let pol = Policy::from_json(&fs::read_to_string(&policy)?)?;
            if paths == 0 {
                return Err(Error::invalid("paths", "must be at least 1"));
            }
            if let Some(p) = percentiles.iter().find(|&&p| !(p > 0.0 && p < 100.0)) {
                return Err(Error::invalid("percentiles", format!("{p} is outside (0, 100)")));
            }
            let world = OosWorld::for_model(&model)?;
            let data = world.sample(&model, paths, seed);
            let obj = evaluate_paths(&model, &pol, &data, SolverConfig::default().tol_mip)?;
            let report = OosReport { rows: vec![OosRow::new(&pol.variant, pol.ambiguity.epsilon, obj, &percentiles)], percentiles };
            write(&out, "oos.csv", &report.oos_csv())?;
            write(&out, "summary.csv", &report.summary_csv())?;
            print!("{}", report.summary_csv());
            Ok(0)
        }
        Cmd::Oracle { instance, epsilon } => {
            let model = MultistageModel::load(&instance)?;
            let amb = ambiguity_for(&model, epsilon);
            let s = model.objective_sign;
            let drr = exact_value_dp(&model, &amb, Risk::Drr)?;
            let neutral = exact_value_dp(&model, &amb, Risk::Neutral)?;
            let dro = exact_value_dp(&model, &amb, Risk::Dro)?;
            println!("drr,neutral,dro");
            println!("{},{},{}", sig9(s * drr), sig9(s * neutral), sig9(s * dro));
            Ok(0)
        }
        Cmd::CorruptStudy { instance, alphas, epsilons, variants, paths, seed, max_iters, out } => {
            let model = MultistageModel::load(&instance)?;
            let Some(GeneratorInfo::Mfip(p)) = &model.generator else {
                return Err(Error::invalid("generator", "the corruption study needs a generated MFIP instance"));
            };
            let inst = gen_mfip_instance(p)?;
            let laws = vec![p.law.clone(); inst.layout.finite.len()];
            let mean = law_mean(&p.law);
            let critical = critical_arcs(&inst.network, &vec![mean; laws.len()], p.budget(0))?;
            let cfg = SolverConfig { seed, max_iters, ..SolverConfig::default() };
            let spec = CorruptionSpec { alphas, epsilons, variants, clean_paths: paths, seed, cfg };
            let rows = run_corruption_study(&inst, &laws, &critical, &spec)?;
            let text = corruption_csv(&rows);
            write(&out, "corruption.csv", &text)?;
            print!("{text}");
            Ok(0)
        }
    }
}

fn law_mean(l: &CapacityLaw) -> f64 {
    match *l {
        CapacityLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
        CapacityLaw::TruncNormal { mean, .. } => mean,
    }
}
