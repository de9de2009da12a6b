//! One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

use std::time::Instant;

use dasddp::ambiguity::{drr_cut_coefficients, AmbiguitySpec, Risk};
use dasddp::approx::{dro_separation_cut, drr_mccormick_rows, Cut, CutKind};
use dasddp::ddwass::{dd_cut_generate, dd_radius_eval, BoxSupport, DdRadius, DdStageData};
use dasddp::disjunctive::{hierarchy_relaxation, tight_extended_formulation};
use dasddp::harness::{run_corruption_study, run_out_of_sample, CorruptionSpec, ExperimentSpec, OosWorld};
use dasddp::interdiction::{build_mfip, critical_arcs, gen_mfip_instance, grid_network, max_flow, CapacityLaw, MfipParams, Network};
use dasddp::lp::{solve_lp, solve_mip, LpProblem, LpStatus, Relation, Sense};
use dasddp::model::*;
use dasddp::sddp::{run, SolveLog, SolveStatus, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn binary_points(d: usize) -> Vec<Vec<f64>> {
    (0..1u32 << d).map(|b| (0..d).map(|k| ((b >> k) & 1) as f64).collect()).collect()
}

fn cut(alpha: Vec<f64>, beta: f64) -> Cut {
    Cut { stage: 0, scenario: None, alpha, beta, kind: CutKind::Benders, iteration: 0 }
}

/// Extreme expectation over the ball, built from scratch: transport plan π with
/// row sums p̄, column sums p, and cost Σ π_ij d_ij ≤ ε.
fn direct_extreme(values: &[f64], sup: &ScenarioSupport, eps: f64, sense: Sense) -> f64 {
    let n = sup.len();
    let d = sup.distances();
    let mut lp = LpProblem::new(sense);
    let pi: Vec<Vec<usize>> = (0..n).map(|_| (0..n).map(|_| lp.add_column(0.0, 0.0, f64::INFINITY)).collect()).collect();
    for i in 0..n {
        lp.add_row(pi[i].iter().map(|&c| (c, 1.0)).collect(), Relation::Eq, sup.reference_probs[i]);
    }
    let mut budget = Vec::new();
    for i in 0..n {
        for j in 0..n {
            lp.cost[pi[i][j]] = values[j];
            budget.push((pi[i][j], d[i][j]));
        }
    }
    lp.add_row(budget, Relation::Le, eps);
    let s = solve_lp(&lp).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    s.objective
}

fn random_support(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> ScenarioSupport {
    ScenarioSupport::uniform((0..n).map(|_| (0..dim).map(|_| rng.gen_range(0.0..3.0)).collect()).collect())
}

struct BatteryItem {
    model: MultistageModel,
    eps: f64,
}

fn battery() -> Vec<BatteryItem> {
    (0..12)
        .map(|i| {
            let p = RandomParams {
                horizon: 2 + i % 2,
                d_x: 2 + i % 5,
                d_y: 2,
                rows: 2,
                scenarios: 2 + (i / 2) % 2,
                budget: 2,
                epsilon: 0.0,
                seed: 1000 + i as u64,
            };
            BatteryItem { model: random_instance(&p).unwrap(), eps: [0.0, 0.2, 1.0][i % 3] }
        })
        .collect()
}

fn risk_of(variant: &str) -> Risk {
    if variant.starts_with("drr") {
        Risk::Drr
    } else {
        Risk::Dro
    }
}

/// Criteria 1 and 2 share the same solves.
fn battery_runs(items: &[BatteryItem]) -> (Outcome, Outcome) {
    let variants = ["drr-c", "drr-r", "dro-c", "dro-r"];
    let mut worst_gap: f64 = 0.0;
    let mut worst_time: f64 = 0.0;
    let mut max_iters = 0;
    let mut ok1 = true;
    let mut ok2 = true;
    let mut worst_cr: f64 = 0.0;
    for (k, it) in items.iter().enumerate() {
        let amb = AmbiguitySpec::wasserstein(it.eps);
        let o = ExactOracle::new(&it.model).unwrap();
        let mut lbs = Vec::new();
        for v in variants {
            let cfg = SolverConfig { variant: v.into(), max_iters: 5000, record_time: false, ..SolverConfig::default() };
            let start = Instant::now();
            let (_, log): (_, SolveLog) = run(&it.model, &amb, &cfg).unwrap();
            let secs = start.elapsed().as_secs_f64();
            let exact = o.value(&amb, risk_of(v)).unwrap();
            let gap = (log.final_lb() - exact).abs();
            worst_gap = worst_gap.max(gap);
            worst_time = worst_time.max(secs);
            max_iters = max_iters.max(log.records.len());
            if gap > 1e-4 || secs >= 60.0 || log.status != SolveStatus::ConvergedStall {
                ok1 = false;
                eprintln!("  instance {k} {v}: gap {gap:.3e}, {secs:.1}s, {}", log.status.as_str());
            }
            lbs.push(log.final_lb());
        }
        let cr = (lbs[0] - lbs[1]).abs().max((lbs[2] - lbs[3]).abs());
        worst_cr = worst_cr.max(cr);
        if cr > 1e-4 {
            ok2 = false;
        }
    }
    (
        outcome(ok1, format!("48 solves, max |LB - exact| {worst_gap:.2e}, max {max_iters} iters, max {worst_time:.1}s")),
        outcome(ok2, format!("max C/R gap {worst_cr:.2e}")),
    )
}

fn risk_ordering(items: &[BatteryItem]) -> Outcome {
    let mut ok = true;
    for (k, it) in items.iter().enumerate() {
        let o = ExactOracle::new(&it.model).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for eps in [0.0, 0.1, 0.5, 2.0] {
            let amb = AmbiguitySpec::wasserstein(eps);
            let drr = o.value(&amb, Risk::Drr).unwrap();
            let neu = o.value(&amb, Risk::Neutral).unwrap();
            let dro = o.value(&amb, Risk::Dro).unwrap();
            let mut good = drr <= neu + 1e-9 && neu <= dro + 1e-9;
            if eps == 0.0 {
                good &= (drr - neu).abs() <= 1e-6 && (dro - neu).abs() <= 1e-6;
            }
            if let Some((r, d)) = prev {
                good &= drr <= r + 1e-9 && dro >= d - 1e-9;
            }
            if !good {
                ok = false;
                eprintln!("  instance {k} eps {eps}: drr {drr} neutral {neu} dro {dro}");
            }
            prev = Some((drr, dro));
        }
    }
    outcome(ok, "12 instances x 4 radii")
}

fn cut_validity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let d = rng.gen_range(1..=10);
        let n = rng.gen_range(2..=4);
        let sup = random_support(&mut rng, n, 2);
        let eps = rng.gen_range(0.0..2.0);
        let cuts: Vec<Cut> = (0..n).map(|_| cut((0..d).map(|_| rng.gen_range(-3.0..3.0)).collect(), rng.gen_range(-2.0..2.0))).collect();
        let x_hat: Vec<f64> = (0..d).map(|_| rng.gen_range(0..2) as f64).collect();
        let agg = drr_cut_coefficients(&cuts, &x_hat, &sup, eps).unwrap();
        let sep = dro_separation_cut(&cuts, &x_hat, &sup, eps).unwrap();
        for x in binary_points(d) {
            let vals: Vec<f64> = cuts.iter().map(|c| c.value(&x)).collect();
            worst = worst.min(direct_extreme(&vals, &sup, eps, Sense::Minimize) - agg.value(&x));
            worst = worst.min(direct_extreme(&vals, &sup, eps, Sense::Maximize) - sep.value(&x));
        }
    }
    outcome(worst >= -1e-7, format!("200 tuples, min margin {worst:.2e}"))
}

fn mccormick() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.gen_range(1..=5);
        let n = rng.gen_range(1..=4);
        let sup = random_support(&mut rng, n, 2);
        let eps = rng.gen_range(0.0..2.0);
        let k = rng.gen_range(1..=3);
        let per: Vec<Vec<Cut>> =
            (0..n).map(|_| (0..k).map(|_| cut((0..d).map(|_| rng.gen_range(-3.0..3.0)).collect(), rng.gen_range(-2.0..2.0))).collect()).collect();
        for x in binary_points(d) {
            let mut lp = LpProblem::minimize();
            let cols: Vec<usize> = x.iter().map(|&v| lp.add_column(0.0, v, v)).collect();
            drr_mccormick_rows(&mut lp, &cols, &per, &sup, eps).unwrap();
            let s = solve_lp(&lp).unwrap();
            let vals: Vec<f64> = per.iter().map(|l| l.iter().map(|c| c.value(&x)).fold(f64::NEG_INFINITY, f64::max)).collect();
            worst = worst.max((s.objective - direct_extreme(&vals, &sup, eps, Sense::Minimize)).abs());
        }
    }
    outcome(worst <= 1e-7, format!("100 tuples, max error {worst:.2e}"))
}

fn max_flow_dual() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let net = grid_network(rng.gen_range(1..=5), rng.gen_range(2..=4), 0.8, &mut rng).unwrap();
        let finite = net.finite_arcs();
        let caps: Vec<f64> = finite.iter().map(|_| rng.gen_range(10.0..50.0)).collect();
        let inst = build_mfip(&net, vec![vec![caps.clone()]], &[0.0], 0.0, true).unwrap();
        let x: Vec<f64> = inst.layout.interdictable.iter().map(|_| rng.gen_range(0..2) as f64).collect();
        let st = &inst.model.stages[0];
        let sub = build_subproblem(st, &st.scenarios[0], LinkMode::Fixed(&x), &ApproxFragment::None).unwrap();
        let s = solve_mip(&sub.mip, 1e-9).unwrap();
        let mut arc_caps = vec![0.0; net.arcs.len()];
        for (k, &a) in finite.iter().enumerate() {
            arc_caps[a] = caps[k];
        }
        let mut cut = vec![0.0; net.arcs.len()];
        for (k, &a) in inst.layout.interdictable.iter().enumerate() {
            cut[a] = x[k];
        }
        worst = worst.max((s.objective - max_flow(&net, &arc_caps, &cut)).abs());
    }
    outcome(worst <= 1e-6, format!("100 grids, max error {worst:.2e}"))
}

/// Feasible x spelled out as equality disjuncts over a covering row.
fn encoded_stage(rng: &mut ChaCha8Rng, d: usize) -> (StageTemplate, StageScenario) {
    let mut rows = ConstraintBlock::empty();
    rows.push(vec![1.0; d], vec![1.0], vec![0.0], Relation::Ge, rng.gen_range(0.0..d as f64));
    let mut pats: Vec<u32> = (0..1u32 << d).filter(|_| rng.gen_bool(0.5)).collect();
    if pats.is_empty() {
        pats.push(rng.gen_range(0..1u32 << d));
    }
    let disjuncts = pats
        .iter()
        .map(|&p| {
            let mut b = ConstraintBlock::empty();
            for k in 0..d {
                let mut a = vec![0.0; d];
                a[k] = 1.0;
                b.push(a, vec![0.0], vec![0.0], Relation::Eq, ((p >> k) & 1) as f64);
            }
            b
        })
        .collect();
    let data = StageScenario {
        cost_x: (0..d).map(|_| rng.gen_range(-2.0..3.0)).collect(),
        cost_y: vec![rng.gen_range(0.5..4.0)],
        rows,
        disjuncts,
    };
    let st = StageTemplate { d_x: d, d_y: 1, d_x_prev: 1, y_binary: vec![false], y_upper: vec![Some(10.0)], scenarios: vec![data.clone()] };
    (st, data)
}

fn disjunctive_mip(st: &StageTemplate, data: &StageScenario, x_prev: &[f64]) -> f64 {
    let blocks: Vec<StageScenario> = if data.disjuncts.is_empty() {
        vec![data.clone()]
    } else {
        data.disjuncts
            .iter()
            .map(|d| {
                let mut rows = data.rows.clone();
                rows.extend(d);
                StageScenario { rows, disjuncts: vec![], ..data.clone() }
            })
            .collect()
    };
    blocks
        .iter()
        .map(|b| {
            let sub = build_subproblem(st, b, LinkMode::Fixed(x_prev), &ApproxFragment::None).unwrap();
            let s = solve_mip(&sub.mip, 1e-12).unwrap();
            if s.status == LpStatus::Optimal {
                s.objective
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn hull_and_hierarchy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut hull_err: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.gen_range(1..=3);
        let (st, data) = encoded_stage(&mut rng, d);
        let l = tight_extended_formulation(&st, &data, &[], None, &[0.0]).unwrap();
        let v = l.solve().unwrap().objective;
        hull_err = hull_err.max((v - disjunctive_mip(&st, &data, &[0.0])).abs());
    }
    let mut chain_ok = true;
    let mut top_err: f64 = 0.0;
    for i in 0..50 {
        let d = 2 + i % 3;
        let m = random_instance(&RandomParams { horizon: 2, d_x: d, d_y: 2, rows: 2, scenarios: 2, budget: d, epsilon: 0.0, seed: 500 + i as u64 })
            .unwrap();
        let st = &m.stages[1];
        let data = &st.scenarios[i % 2];
        let x_prev: Vec<f64> = (0..d).map(|_| rng.gen_range(0..2) as f64).collect();
        let vals: Vec<f64> = (0..=d)
            .map(|s| hierarchy_relaxation(st, data, &[], None, &x_prev, s).unwrap().solve().unwrap().objective)
            .collect();
        chain_ok &= vals.windows(2).all(|w| w[0] <= w[1] + 1e-7);
        top_err = top_err.max((vals[d] - disjunctive_mip(st, data, &x_prev)).abs());
    }
    outcome(
        hull_err <= 1e-6 && chain_ok && top_err <= 1e-6,
        format!("hull max error {hull_err:.2e}; 50 chains monotone {chain_ok}, top level error {top_err:.2e}"),
    )
}

const GRID: usize = 10_000;

/// One moving outcome coordinate over [0, 2]; the unit box on x enters as
/// rows whose right-hand sides are pinned by a degenerate box.
fn dd_toy(c: [f64; 2], cost: [f64; 2], points: [f64; 2]) -> (DdStageData, BoxSupport) {
    let a = vec![vec![1.0, 1.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]];
    let cm = vec![c.to_vec(), vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]];
    let fixed = [0.0, 0.0, -1.0, -1.0];
    let support = BoxSupport {
        lower: [&[0.0][..], &fixed].concat(),
        upper: [&[2.0][..], &fixed].concat(),
        points: points.iter().map(|&w| [&[w][..], &fixed].concat()).collect(),
    };
    (DdStageData { a, c: cm, cost: cost.to_vec() }, support)
}

fn dd_grid_oracle(data: &DdStageData, support: &BoxSupport, next: &[(Vec<f64>, f64)], eps: f64, xp: &[f64]) -> f64 {
    let shift: f64 = data.c[0].iter().zip(xp).map(|(a, b)| a * b).sum();
    let value = |w: f64| {
        binary_points(2)
            .into_iter()
            .filter(|x| x[0] + x[1] >= w - shift - 1e-12)
            .map(|x| {
                let f: f64 = data.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
                f + next.iter().map(|(p, g)| g + p.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let grid: Vec<f64> = (0..GRID).map(|g| 2.0 * g as f64 / (GRID - 1) as f64).collect();
    let v: Vec<f64> = grid.iter().map(|&w| value(w)).collect();
    let n = support.points.len() as f64;
    let dual = |rho: f64| {
        -eps * rho
            + support.points.iter().map(|p| grid.iter().zip(&v).map(|(g, val)| val + rho * (g - p[0]).abs()).fold(f64::INFINITY, f64::min)).sum::<f64>()
                / n
    };
    let (mut lo, mut hi) = (0.0, 1e3);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if dual(m1) < dual(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    dual(lo).max(dual(0.0))
}

fn dd_cut() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = f64::INFINITY;
    let mut cuts = 0;
    for _ in 0..10 {
        let c = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        let cost = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
        let (data, support) = dd_toy(c, cost, [rng.gen_range(0.1..1.9), rng.gen_range(0.1..1.9)]);
        let radius = DdRadius { base: rng.gen_range(0.05..0.6), slope: vec![rng.gen_range(-0.02..0.3), rng.gen_range(-0.02..0.3)] };
        let next = vec![(vec![0.0, 0.0], 0.0), (vec![rng.gen_range(-1.0..0.5), rng.gen_range(-1.0..0.5)], rng.gen_range(0.0..1.0))];
        for x_hat in binary_points(2) {
            let k = dd_cut_generate(&data, &support, &radius, &next, &x_hat).unwrap();
            cuts += 1;
            for x in binary_points(2) {
                let truth = dd_grid_oracle(&data, &support, &next, dd_radius_eval(&radius, &x).unwrap(), &x);
                let at = k.1 + k.0.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
                worst = worst.min(truth - at);
            }
        }
    }
    outcome(worst >= -1e-4, format!("{cuts} cuts x 4 states, min margin {worst:.2e}"))
}

/// Percentiles of identical policies can differ by summation-order noise.
fn at_most(a: f64, b: f64) -> bool {
    a <= b + 1e-9 * b.abs().max(1.0)
}

fn out_of_sample() -> Outcome {
    let mut dro_ok = 0;
    let mut drr_ok = 0;
    for seed in 0..5 {
        let p = MfipParams {
            rows: 3,
            cols: 3,
            horizon: 3,
            support_size: 3,
            budgets: vec![1.0],
            law: CapacityLaw::TruncNormal { mean: 30.0, sd: 5.0, lo: 10.0, hi: 50.0 },
            seed,
            ..MfipParams::default()
        };
        let inst = gen_mfip_instance(&p).unwrap();
        let world = OosWorld::for_model(&inst.model).unwrap();
        let spec = ExperimentSpec {
            variants: vec!["neutral".into(), "dro-c".into(), "drr-c".into()],
            epsilons: vec![0.0, 0.1, 0.3, 0.5],
            oos_paths: 500,
            oos_seed: 100 + seed,
            percentiles: vec![5.0, 90.0],
            risk: Risk::Neutral,
            level: None,
            cfg: SolverConfig { seed, record_time: false, ..SolverConfig::default() },
        };
        let r = run_out_of_sample(&inst.model, &world, &spec).unwrap();
        let neutral = r.row("neutral", 0.0).unwrap();
        if [0.1, 0.3].iter().all(|&e| at_most(r.row("dro-c", e).unwrap().percentiles[1], neutral.percentiles[1])) {
            dro_ok += 1;
        }
        if [0.1, 0.5].iter().all(|&e| at_most(r.row("drr-c", e).unwrap().percentiles[0], neutral.percentiles[0])) {
            drr_ok += 1;
        }
    }

    let mut net = Network::new(2, 0, 1);
    for _ in 0..3 {
        net.add_arc(0, 1, true, false);
    }
    net.close();
    let means = [40.0, 25.0, 20.0];
    let laws: Vec<CapacityLaw> = means.iter().map(|&m| CapacityLaw::TruncNormal { mean: m, sd: m / 4.0, lo: 0.0, hi: 2.0 * m }).collect();
    let critical = critical_arcs(&net, &means, 1.0).unwrap();
    let mut corr_ok = 0;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<Vec<f64>> = (0..30).map(|_| laws.iter().map(|l| l.sample(&mut rng)).collect()).collect();
        let inst = build_mfip(&net, vec![vec![means.to_vec()], draws], &[1.0, 0.0], 0.0, false).unwrap();
        let spec = CorruptionSpec {
            alphas: vec![0.4],
            epsilons: vec![10.0],
            variants: vec!["drr-c".into(), "dro-c".into()],
            clean_paths: 1000,
            seed,
            cfg: SolverConfig { seed, record_time: false, ..SolverConfig::default() },
        };
        let rows = run_corruption_study(&inst, &laws, &critical, &spec).unwrap();
        if at_most(rows[0].mean, rows[1].mean) {
            corr_ok += 1;
        }
    }
    outcome(
        dro_ok >= 4 && drr_ok >= 4 && corr_ok >= 4 && critical == vec![0],
        format!("DRO p90 {dro_ok}/5, DRR p5 {drr_ok}/5, corruption DRR <= DRO {corr_ok}/5 (critical arc {critical:?})"),
    )
}

fn determinism() -> Outcome {
    let m = random_instance(&RandomParams { horizon: 3, d_x: 4, d_y: 2, rows: 2, scenarios: 3, budget: 2, epsilon: 0.0, seed: 77 }).unwrap();
    let amb = AmbiguitySpec::wasserstein(0.3);
    let mut ok = true;
    for v in ["drr-c", "drr-r", "dro-c", "dro-r", "neutral"] {
        let cfg = |threads| SolverConfig { variant: v.into(), threads, seed: 5, record_time: false, ..SolverConfig::default() };
        let a = run(&m, &amb, &cfg(2)).unwrap().1.to_csv();
        let b = run(&m, &amb, &cfg(2)).unwrap().1.to_csv();
        let one = run(&m, &amb, &cfg(1)).unwrap().1;
        let eight = run(&m, &amb, &cfg(8)).unwrap().1;
        ok &= a == b && one.final_lb() == eight.final_lb();
    }
    outcome(ok, "5 variants, repeat runs byte-identical, 1 vs 8 threads equal final LB")
}

fn report(name: &str, o: Outcome, failed: &mut usize) {
    println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    *failed += usize::from(!o.pass);
}

fn main() {
    let start = Instant::now();
    let mut failed = 0;
    let items = battery();
    let (c1, c2) = battery_runs(&items);
    report("1 oracle convergence", c1, &mut failed);
    report("2 C/R agreement", c2, &mut failed);
    report("3 risk ordering and radius monotonicity", risk_ordering(&items), &mut failed);
    report("4 cut validity", cut_validity(), &mut failed);
    report("5 McCormick equivalence", mccormick(), &mut failed);
    report("6 max-flow dualization", max_flow_dual(), &mut failed);
    report("7 hull and hierarchy", hull_and_hierarchy(), &mut failed);
    report("8 decision-dependent cut", dd_cut(), &mut failed);
    report("9 out-of-sample direction", out_of_sample(), &mut failed);
    report("10 determinism", determinism(), &mut failed);
    println!("{} of 10 criteria pass ({:.0}s)", 10 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
