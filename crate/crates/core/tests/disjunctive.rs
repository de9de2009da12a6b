use dasddp::disjunctive::*;
use dasddp::interdiction::{gen_flip_instance, FlipParams};
use dasddp::lp::{lp_relaxation, solve_lp, LpStatus, Relation};
use dasddp::model::*;
use dasddp::Error;

fn binary_points(d: usize) -> Vec<Vec<f64>> {
    (0..1u32 << d).map(|b| (0..d).map(|k| ((b >> k) & 1) as f64).collect()).collect()
}

/// min over binary x of the LP in y, by enumeration.
fn brute_stage(st: &StageTemplate, data: &StageScenario, x_prev: &[f64]) -> f64 {
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
    let mut best = f64::INFINITY;
    for b in &blocks {
        let sub = build_subproblem(st, b, LinkMode::Fixed(x_prev), &ApproxFragment::None).unwrap();
        for x in binary_points(st.d_x) {
            let mut lp = lp_relaxation(&sub.mip);
            for (k, j) in sub.x.clone().enumerate() {
                lp.bounds[j] = (x[k], x[k]);
            }
            let s = solve_lp(&lp).unwrap();
            if s.status == LpStatus::Optimal {
                best = best.min(s.objective);
            }
        }
    }
    best
}

fn terminal_stage(seed: u64, d_x: usize) -> MultistageModel {
    random_instance(&RandomParams { horizon: 2, d_x, d_y: 2, rows: 2, scenarios: 2, budget: 2, epsilon: 0.0, seed }).unwrap()
}

#[test]
fn full_hierarchy_matches_enumeration_on_covering_stages() {
    for seed in 0..15 {
        let m = terminal_stage(seed, 3);
        let st = &m.stages[1];
        for x_prev in binary_points(3) {
            for data in &st.scenarios {
                let l = hierarchy_relaxation(st, data, &[], None, &x_prev, 3).unwrap();
                let v = l.solve().unwrap().objective;
                let b = brute_stage(st, data, &x_prev);
                assert!((v - b).abs() < 1e-6, "seed {seed} x_prev {x_prev:?}: lifted {v} enumeration {b}");
            }
        }
    }
}

#[test]
fn full_hierarchy_matches_enumeration_on_flip_stage() {
    let inst = gen_flip_instance(&FlipParams { demand_points: 2, facilities: 3, horizon: 2, support_size: 2, budget: 1, epsilon: 0.0, seed: 5 })
        .unwrap();
    let st = &inst.model.stages[1];
    for x_prev in binary_points(3).into_iter().filter(|x| x.iter().sum::<f64>() <= 1.0) {
        for data in &st.scenarios {
            let l = hierarchy_relaxation(st, data, &[], None, &x_prev, 3).unwrap();
            let s = l.solve().unwrap();
            let b = brute_stage(st, data, &x_prev);
            assert!((s.objective - b).abs() < 1e-6, "x_prev {x_prev:?}: lifted {} enumeration {b}", s.objective);
        }
    }
}

#[test]
fn hierarchy_levels_increase_to_the_integer_value() {
    for seed in 0..10 {
        let m = terminal_stage(100 + seed, 4);
        let st = &m.stages[1];
        let data = &st.scenarios[0];
        let x_prev = vec![0.0, 1.0, 0.0, 0.0];
        let vals: Vec<f64> =
            (0..=4).map(|s| hierarchy_relaxation(st, data, &[], None, &x_prev, s).unwrap().solve().unwrap().objective).collect();
        for w in vals.windows(2) {
            assert!(w[0] <= w[1] + 1e-7, "seed {seed}: {vals:?}");
        }
        let b = brute_stage(st, data, &x_prev);
        assert!((vals[4] - b).abs() < 1e-6, "seed {seed}: {} vs {b}", vals[4]);
    }
}

#[test]
fn lifted_cut_is_tight_and_valid() {
    for seed in 0..10 {
        let m = terminal_stage(200 + seed, 3);
        let st = &m.stages[1];
        let data = &st.scenarios[1];
        let mut l = hierarchy_relaxation(st, data, &[], None, &[0.0; 3], 3).unwrap();
        for x_hat in binary_points(3) {
            l.set_state(&x_hat);
            let s = l.solve().unwrap();
            let (alpha, beta) = l.cut_from(&s);
            let at = |x: &[f64]| beta + alpha.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
            assert!((at(&x_hat) - s.objective).abs() < 1e-6);
            for x in binary_points(3) {
                let truth = brute_stage(st, data, &x);
                assert!(at(&x) <= truth + 1e-6, "seed {seed}: cut {} above {truth} at {x:?}", at(&x));
            }
        }
    }
}

/// Stage with d_x = 2 whose feasible x are spelled out as disjuncts.
fn encoded_stage(patterns: &[[f64; 2]], cost: [f64; 2], w: f64) -> (StageTemplate, StageScenario) {
    let mut rows = ConstraintBlock::empty();
    rows.push(vec![1.0, 1.0], vec![1.0], vec![0.0], Relation::Ge, w);
    let disjuncts = patterns
        .iter()
        .map(|p| {
            let mut b = ConstraintBlock::empty();
            for k in 0..2 {
                let mut a = vec![0.0; 2];
                a[k] = 1.0;
                b.push(a, vec![0.0], vec![0.0], Relation::Eq, p[k]);
            }
            b
        })
        .collect();
    let data = StageScenario { cost_x: cost.to_vec(), cost_y: vec![3.0], rows, disjuncts };
    let st = StageTemplate { d_x: 2, d_y: 1, d_x_prev: 1, y_binary: vec![false], y_upper: vec![Some(5.0)], scenarios: vec![data.clone()] };
    (st, data)
}

#[test]
fn tight_formulation_matches_disjunctive_enumeration() {
    let all = [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
    for mask in 1..16u32 {
        let pats: Vec<[f64; 2]> = (0..4).filter(|k| mask >> k & 1 == 1).map(|k| all[k]).collect();
        for (c0, c1, w) in [(1.0, 2.0, 1.5), (-1.0, 4.0, 2.5), (2.0, 2.0, 0.5)] {
            let (st, data) = encoded_stage(&pats, [c0, c1], w);
            let l = tight_extended_formulation(&st, &data, &[], None, &[0.0]).unwrap();
            let v = l.solve().unwrap().objective;
            let b = brute_stage(&st, &data, &[0.0]);
            assert!((v - b).abs() < 1e-6, "patterns {pats:?}: {v} vs {b}");
        }
    }
}

#[test]
fn empty_disjunct_is_rejected() {
    let (st, mut data) = encoded_stage(&[[0.0, 1.0]], [1.0, 1.0], 1.0);
    let mut bad = ConstraintBlock::empty();
    bad.push(vec![1.0, 0.0], vec![0.0], vec![0.0], Relation::Ge, 2.0);
    data.disjuncts.push(bad);
    assert!(matches!(tight_extended_formulation(&st, &data, &[], None, &[0.0]), Err(Error::EmptyDisjunct(1))));
}

#[test]
fn oversized_hierarchy_is_rejected() {
    assert_eq!(hierarchy_size(4, 2), 24);
    assert_eq!(hierarchy_size(3, 0), 1);
    let m = random_instance(&RandomParams { horizon: 2, d_x: 14, d_y: 1, rows: 1, scenarios: 1, budget: 14, epsilon: 0.0, seed: 0 }).unwrap();
    let st = &m.stages[1];
    let r = hierarchy_relaxation(st, &st.scenarios[0], &[], None, &[0.0; 14], 14);
    assert!(matches!(r, Err(Error::TooManyDisjuncts(n)) if n == 1 << 14));
}

#[test]
fn lp_driver_matches_exact_values() {
    use dasddp::ambiguity::{AmbiguitySpec, Risk};
    use dasddp::sddp::SolverConfig;
    let cfg = SolverConfig { stall_iters: 30, record_time: false, ..SolverConfig::default() };
    let flip = gen_flip_instance(&FlipParams { demand_points: 3, facilities: 3, horizon: 2, support_size: 2, budget: 1, epsilon: 0.0, seed: 2 })
        .unwrap()
        .model;
    let covering = random_instance(&RandomParams { horizon: 3, d_x: 2, d_y: 2, rows: 2, scenarios: 2, budget: 1, epsilon: 0.0, seed: 9 }).unwrap();
    for m in [flip, covering] {
        for risk in [Risk::Neutral, Risk::Drr, Risk::Dro] {
            let amb = AmbiguitySpec::wasserstein(0.3);
            let exact = exact_value_dp(&m, &amb, risk).unwrap();
            let (_, log) = dasddp_dp_run(&m, &amb, risk, None, &cfg).unwrap();
            assert!((log.final_lb() - exact).abs() < 1e-4, "{risk:?}: {} vs {exact}", log.final_lb());
        }
    }
}

#[test]
fn fractional_state_is_reported() {
    use dasddp::ambiguity::{AmbiguitySpec, Risk};
    use dasddp::sddp::SolverConfig;
    // With level 0 the first stage is the plain LP relaxation, whose optimum is x = 1/2.
    let mut rows = ConstraintBlock::empty();
    rows.push(vec![2.0], vec![0.0], vec![0.0], Relation::Ge, 1.0);
    let data = StageScenario { cost_x: vec![1.0], cost_y: vec![0.0], rows, disjuncts: vec![] };
    let st = StageTemplate { d_x: 1, d_y: 1, d_x_prev: 1, y_binary: vec![false], y_upper: vec![Some(1.0)], scenarios: vec![data] };
    let m = MultistageModel {
        horizon: 1,
        x0: vec![0.0],
        stages: vec![st],
        supports: vec![ScenarioSupport::singleton(vec![])],
        ambiguity: AmbiguitySpec::singleton(),
        objective_sign: 1.0,
        generator: None,
    };
    let r = dasddp_dp_run(&m, &AmbiguitySpec::singleton(), Risk::Neutral, Some(0), &SolverConfig::default());
    assert!(matches!(r, Err(Error::InvalidModel { .. })));
    let (_, log) = dasddp_dp_run(&m, &AmbiguitySpec::singleton(), Risk::Neutral, Some(1), &SolverConfig { stall_iters: 2, ..SolverConfig::default() }).unwrap();
    assert!((log.final_lb() - 1.0).abs() < 1e-9);
}
