use dasddp::ambiguity::{AmbiguitySpec, Risk};
use dasddp::lp::Relation;
use dasddp::model::*;
use dasddp::Error;

fn small(seed: u64) -> MultistageModel {
    random_instance(&RandomParams { horizon: 3, d_x: 3, d_y: 2, rows: 2, scenarios: 2, budget: 2, epsilon: 0.0, seed }).unwrap()
}

fn field_of(r: dasddp::Result<()>) -> String {
    match r {
        Err(Error::InvalidModel { field, .. }) => field,
        other => panic!("expected an invalid-model error, got {other:?}"),
    }
}

#[test]
fn validation_names_the_offending_field() {
    let base = small(0);
    let mut m = base.clone();
    m.stages[1].d_x_prev = 5;
    assert_eq!(field_of(m.validate()), "stages[1].d_x_prev");
    let mut m = base.clone();
    m.stages[2].scenarios[1].cost_x.pop();
    assert_eq!(field_of(m.validate()), "stages[2].scenarios[1].cost_x");
    let mut m = base.clone();
    m.stages[1].scenarios[0].rows.a[1].push(0.0);
    assert_eq!(field_of(m.validate()), "stages[1].scenarios[0].rows.a[1]");
    let mut m = base.clone();
    m.stages[1].scenarios[0].rows.rhs[0] = f64::NAN;
    assert_eq!(field_of(m.validate()), "stages[1].scenarios[0].rows.rhs");
    let mut m = base.clone();
    m.supports[0] = ScenarioSupport::uniform(vec![vec![0.0], vec![1.0]]);
    assert_eq!(field_of(m.validate()), "supports[0]");
    let mut m = base.clone();
    m.supports[2].reference_probs = vec![0.7, 0.7];
    assert_eq!(field_of(m.validate()), "supports[2].reference_probs");
    let mut m = base.clone();
    m.objective_sign = 2.0;
    assert_eq!(field_of(m.validate()), "objective_sign");
    let mut m = base.clone();
    m.x0[0] = 0.5;
    assert_eq!(field_of(m.validate()), "x0");
    let mut m = base.clone();
    m.ambiguity = AmbiguitySpec::wasserstein(-0.1);
    assert_eq!(field_of(m.validate()), "ambiguity.epsilon");
    let mut m = base.clone();
    m.stages[1].y_binary = vec![true; 2];
    m.stages[1].y_upper[0] = Some(3.0);
    assert_eq!(field_of(m.validate()), "stages[1].y_upper[0]");
    let mut m = base;
    m.stages.pop();
    assert_eq!(field_of(m.validate()), "stages");
}

#[test]
fn json_round_trip() {
    let mut m = small(4);
    m.ambiguity = AmbiguitySpec::wasserstein(0.25);
    let text = m.to_json().unwrap();
    assert_eq!(MultistageModel::from_json(&text).unwrap(), m);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    m.save(&path).unwrap();
    assert_eq!(MultistageModel::load(&path).unwrap(), m);
    assert!(matches!(MultistageModel::from_json("{\"horizon\": 1}"), Err(Error::Json(_))));
}

#[test]
fn generator_is_deterministic_with_complete_recourse() {
    assert_eq!(small(7), small(7));
    assert_ne!(small(7), small(8));
    for seed in 0..5 {
        let m = small(seed);
        let o = ExactOracle::new(&m).unwrap();
        let amb = AmbiguitySpec::singleton();
        for t in 1..m.horizon {
            for b in 0..8u32 {
                let x: Vec<f64> = (0..3).map(|k| ((b >> k) & 1) as f64).collect();
                for i in 0..m.num_scenarios(t) {
                    assert!(o.stage_value_at(t, &x, i, &amb, Risk::Neutral).unwrap().is_finite());
                }
            }
        }
    }
}

/// Stage 1: integer `x ∈ {0..U}` at unit cost, `x + y ≥ 2.5` with `y` at 3.
/// Stage 2: `y ≥ ω − x_prev` at 2, `ω ∈ {1, 4}`.
fn integer_model() -> MultistageModel {
    let mut r1 = ConstraintBlock::empty();
    r1.push(vec![1.0], vec![1.0], vec![0.0], Relation::Ge, 2.5);
    let s1 = StageScenario { cost_x: vec![1.0], cost_y: vec![3.0], rows: r1, disjuncts: vec![] };
    let s2 = |w: f64| {
        let mut r = ConstraintBlock::empty();
        r.push(vec![0.0], vec![1.0], vec![1.0], Relation::Ge, w);
        StageScenario { cost_x: vec![0.0], cost_y: vec![2.0], rows: r, disjuncts: vec![] }
    };
    MultistageModel {
        horizon: 2,
        x0: vec![0.0],
        stages: vec![
            StageTemplate { d_x: 1, d_y: 1, d_x_prev: 1, y_binary: vec![false], y_upper: vec![Some(10.0)], scenarios: vec![s1] },
            StageTemplate { d_x: 1, d_y: 1, d_x_prev: 1, y_binary: vec![false], y_upper: vec![None], scenarios: vec![s2(1.0), s2(4.0)] },
        ],
        supports: vec![ScenarioSupport::singleton(vec![]), ScenarioSupport::uniform(vec![vec![1.0], vec![4.0]])],
        ambiguity: AmbiguitySpec::singleton(),
        objective_sign: 1.0,
        generator: None,
    }
}

fn closed_form(u: u64, eps: f64, risk: Risk) -> f64 {
    (0..=u)
        .map(|x| {
            let x = x as f64;
            let (v1, v4) = (2.0 * (1.0 - x).max(0.0), 2.0 * (4.0 - x).max(0.0));
            let shift = (eps / 3.0).min(0.5) * (v4 - v1);
            let e = 0.5 * (v1 + v4)
                + match risk {
                    Risk::Neutral => 0.0,
                    Risk::Dro => shift,
                    Risk::Drr => -shift,
                };
            x + 3.0 * (2.5 - x).max(0.0) + e
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn expansion_preserves_integer_values() {
    let m = integer_model();
    for u in [1u64, 2, 3, 5] {
        let (e, layout) = binary_expand(&m, &[vec![0], vec![0]], &[vec![Some(u)], vec![Some(u)]]).unwrap();
        let bits = (64 - u.leading_zeros()) as usize;
        assert_eq!(e.stages[0].d_x, bits);
        assert_eq!(e.stages[1].d_x_prev, bits);
        assert_eq!(layout.columns[0], vec![(0, bits)]);
        for eps in [0.0, 0.6, 3.0] {
            for risk in [Risk::Neutral, Risk::Dro, Risk::Drr] {
                let v = exact_value_dp(&e, &AmbiguitySpec::wasserstein(eps), risk).unwrap();
                let want = closed_form(u, eps, risk);
                assert!((v - want).abs() < 1e-7, "U {u} eps {eps} {risk:?}: {v} vs {want}");
            }
        }
    }
}

#[test]
fn decoding_reads_binary_digits() {
    let m = integer_model();
    let (_, layout) = binary_expand(&m, &[vec![0], vec![]], &[vec![Some(6)], vec![None]]).unwrap();
    assert_eq!(layout.columns[1], vec![(0, 1)]);
    for v in 0..=6u32 {
        let bits: Vec<f64> = (0..3).map(|b| ((v >> b) & 1) as f64).collect();
        assert_eq!(decode_expanded(&layout, 0, &bits), vec![v as f64]);
    }
}

#[test]
fn expansion_needs_finite_ranges() {
    let m = integer_model();
    assert!(matches!(binary_expand(&m, &[vec![0], vec![]], &[vec![None], vec![None]]), Err(Error::UnboundedInteger(0))));
    assert!(matches!(binary_expand(&m, &[vec![0]], &[vec![Some(2)]]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn oracle_rejects_large_instances() {
    let wide = random_instance(&RandomParams { horizon: 2, d_x: 13, ..RandomParams::default() }).unwrap();
    assert!(matches!(ExactOracle::new(&wide), Err(Error::TooLarge(_))));
    let long = random_instance(&RandomParams { horizon: 5, ..RandomParams::default() }).unwrap();
    assert!(matches!(exact_value_dp(&long, &AmbiguitySpec::singleton(), Risk::Neutral), Err(Error::TooLarge(_))));
    let many = random_instance(&RandomParams { scenarios: 5, ..RandomParams::default() }).unwrap();
    assert!(matches!(ExactOracle::new(&many), Err(Error::TooLarge(_))));
}

#[test]
fn risk_postures_are_ordered_and_monotone() {
    for seed in 0..6 {
        let m = small(30 + seed);
        let o = ExactOracle::new(&m).unwrap();
        let mut prev: Option<(f64, f64)> = None;
        for eps in [0.0, 0.1, 0.5, 2.0] {
            let amb = AmbiguitySpec::wasserstein(eps);
            let drr = o.value(&amb, Risk::Drr).unwrap();
            let neu = o.value(&amb, Risk::Neutral).unwrap();
            let dro = o.value(&amb, Risk::Dro).unwrap();
            assert!(drr <= neu + 1e-9 && neu <= dro + 1e-9, "seed {seed} eps {eps}: {drr} {neu} {dro}");
            if eps == 0.0 {
                assert!((drr - neu).abs() < 1e-9 && (dro - neu).abs() < 1e-9);
            }
            if let Some((r, d)) = prev {
                assert!(drr <= r + 1e-9 && dro >= d - 1e-9);
            }
            prev = Some((drr, dro));
        }
    }
}

#[test]
fn stage_floors_bound_every_stage_value() {
    for seed in 0..5 {
        let m = small(50 + seed);
        let floors = stage_lower_bounds(&m).unwrap();
        let o = ExactOracle::new(&m).unwrap();
        for t in 0..m.horizon {
            let d = m.stages[t].d_x_prev;
            for b in 0..1u32 << d {
                let x: Vec<f64> = (0..d).map(|k| ((b >> k) & 1) as f64).collect();
                for i in 0..m.num_scenarios(t) {
                    for risk in [Risk::Drr, Risk::Dro] {
                        let v = o.stage_value_at(t, &x, i, &AmbiguitySpec::wasserstein(1.0), risk).unwrap();
                        assert!(floors[t] <= v + 1e-9, "seed {seed} stage {t}: floor {} above {v}", floors[t]);
                    }
                }
            }
        }
    }
}
