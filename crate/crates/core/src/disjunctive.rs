//! Lifted LP-subproblems whose projection is the convex hull of a
//! disjunctive stage set, the hierarchy of binary relaxations built from
//! them, and the driver that runs the decomposition on LP-subproblems only.

use std::ops::Range;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::ambiguity::{AmbiguitySpec, Risk};
use crate::approx::{builtin_registry, Cut, CutKind, RefineInput};
use crate::lp::{solve_lp, LpProblem, LpSolution, LpStatus, Relation};
use crate::model::{ConstraintBlock, MultistageModel, StageScenario, StageTemplate};
use crate::sddp::{in_pool, sample_path, IterRecord, Policy, SolveLog, SolveStatus, SolverConfig};
use crate::{Error, Result};

/// Cap on lifted disjuncts per subproblem.
pub const MAX_DISJUNCTS: usize = 10_000;

const BINARY_TOL: f64 = 1e-6;

/// Lifted LP over disjunct copies `ζ^h = (ζ0, ζ1, ζ2, ζ3, ζ4)`, kept alive so
/// that cuts and the incoming state can be updated in place.
#[derive(Clone, Debug)]
pub struct LiftedSubproblem {
    pub lp: LpProblem,
    pub x: Range<usize>,
    pub y: Range<usize>,
    pub phi: Option<usize>,
    pub zeta0: Vec<usize>,
    pub zeta1: Vec<usize>,
    pub zeta4: Vec<usize>,
    /// Row `Σ ζ0 = 1`.
    pub sum0_row: usize,
    /// Rows `Σ ζ3 = x_prev`.
    pub sum3_rows: Range<usize>,
    pub num_disjuncts: usize,
}

fn combined(data: &StageScenario) -> Vec<ConstraintBlock> {
    if data.disjuncts.is_empty() {
        return vec![data.rows.clone()];
    }
    data.disjuncts
        .iter()
        .map(|d| {
            let mut b = data.rows.clone();
            b.extend(d);
            b
        })
        .collect()
}

fn build(
    stage: &StageTemplate,
    data: &StageScenario,
    blocks: &[ConstraintBlock],
    cuts: &[Cut],
    floor: Option<f64>,
    x_prev: &[f64],
) -> Result<LiftedSubproblem> {
    let (dx, dy, dp) = (stage.d_x, stage.d_y, stage.d_x_prev);
    if x_prev.len() != dp {
        return Err(Error::DimensionMismatch(format!("state has {} entries, stage expects {dp}", x_prev.len())));
    }
    if blocks.len() > MAX_DISJUNCTS {
        return Err(Error::TooManyDisjuncts(blocks.len()));
    }
    let terminal = floor.is_none();
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let mut lp = LpProblem::minimize();
    let xs = lp.num_cols();
    for k in 0..dx {
        lp.add_column(data.cost_x[k], free.0, free.1);
    }
    let x = xs..lp.num_cols();
    let ys = lp.num_cols();
    for k in 0..dy {
        lp.add_column(data.cost_y[k], free.0, free.1);
    }
    let y = ys..lp.num_cols();
    let phi = if terminal { None } else { Some(lp.add_column(1.0, free.0, free.1)) };
    let h_n = blocks.len();
    let mut z0 = Vec::with_capacity(h_n);
    let mut z1 = Vec::with_capacity(h_n);
    let mut z2 = Vec::with_capacity(h_n);
    let mut z3 = Vec::with_capacity(h_n);
    let mut z4 = Vec::with_capacity(h_n);
    for _ in 0..h_n {
        z0.push(lp.add_column(0.0, 0.0, f64::INFINITY));
        z1.push(lp.num_cols());
        for _ in 0..dx {
            lp.add_column(0.0, 0.0, f64::INFINITY);
        }
        z2.push(lp.num_cols());
        for _ in 0..dy {
            lp.add_column(0.0, 0.0, f64::INFINITY);
        }
        z3.push(lp.num_cols());
        for _ in 0..dp {
            lp.add_column(0.0, 0.0, f64::INFINITY);
        }
        if !terminal {
            // Bounded below by the floor-cut copy, so costs may be negative.
            z4.push(lp.add_column(0.0, free.0, free.1));
        }
    }
    let sum0_row = lp.add_row(z0.iter().map(|&c| (c, 1.0)).collect(), Relation::Eq, 1.0);
    for k in 0..dx {
        let mut row: Vec<(usize, f64)> = z1.iter().map(|&s| (s + k, 1.0)).collect();
        row.push((x.start + k, -1.0));
        lp.add_row(row, Relation::Eq, 0.0);
    }
    for k in 0..dy {
        let mut row: Vec<(usize, f64)> = z2.iter().map(|&s| (s + k, 1.0)).collect();
        row.push((y.start + k, -1.0));
        lp.add_row(row, Relation::Eq, 0.0);
    }
    let s3 = lp.num_rows();
    for k in 0..dp {
        lp.add_row(z3.iter().map(|&s| (s + k, 1.0)).collect(), Relation::Eq, x_prev[k]);
    }
    let sum3_rows = s3..lp.num_rows();
    if let Some(p) = phi {
        let mut row: Vec<(usize, f64)> = z4.iter().map(|&c| (c, 1.0)).collect();
        row.push((p, -1.0));
        lp.add_row(row, Relation::Eq, 0.0);
    }
    for (h, b) in blocks.iter().enumerate() {
        for r in 0..b.len() {
            let mut row = Vec::new();
            row.extend(b.a[r].iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, &v)| (z1[h] + k, v)));
            row.extend(b.b[r].iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, &v)| (z2[h] + k, v)));
            row.extend(b.c[r].iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(k, &v)| (z3[h] + k, v)));
            if b.rhs[r] != 0.0 {
                row.push((z0[h], -b.rhs[r]));
            }
            lp.add_row(row, b.relations[r], 0.0);
        }
        // Homogenized unit box on x and x_prev, and the y bounds.
        for k in 0..dx {
            lp.add_row(vec![(z1[h] + k, 1.0), (z0[h], -1.0)], Relation::Le, 0.0);
        }
        for k in 0..dp {
            lp.add_row(vec![(z3[h] + k, 1.0), (z0[h], -1.0)], Relation::Le, 0.0);
        }
        for k in 0..dy {
            let u = stage.y_bound(k);
            if u.is_finite() {
                lp.add_row(vec![(z2[h] + k, 1.0), (z0[h], -u)], Relation::Le, 0.0);
            }
        }
    }
    let mut lifted = LiftedSubproblem { lp, x, y, phi, zeta0: z0, zeta1: z1, zeta4: z4, sum0_row, sum3_rows, num_disjuncts: h_n };
    if let Some(f) = floor {
        lifted.add_cut(&vec![0.0; dx], f);
    }
    for c in cuts {
        if c.alpha.len() != dx {
            return Err(Error::DimensionMismatch(format!("cut has {} coefficients, stage has {dx}", c.alpha.len())));
        }
        lifted.add_cut(&c.alpha, c.beta);
    }
    Ok(lifted)
}

impl LiftedSubproblem {
    /// Copies `φ ≥ αᵀx + β` into every disjunct: `ζ4 − αᵀζ1 − βζ0 ≥ 0`.
    pub fn add_cut(&mut self, alpha: &[f64], beta: f64) {
        for h in 0..self.num_disjuncts {
            let mut row = vec![(self.zeta4[h], 1.0)];
            row.extend(alpha.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(k, &a)| (self.zeta1[h] + k, -a)));
            if beta != 0.0 {
                row.push((self.zeta0[h], -beta));
            }
            self.lp.add_row(row, Relation::Ge, 0.0);
        }
    }

    pub fn set_state(&mut self, x_prev: &[f64]) {
        for (r, &v) in self.sum3_rows.clone().zip(x_prev) {
            self.lp.rows[r].rhs = v;
        }
    }

    pub fn solve(&self) -> Result<LpSolution> {
        let s = solve_lp(&self.lp)?;
        match s.status {
            LpStatus::Optimal => Ok(s),
            LpStatus::Infeasible => Err(Error::StageFailure { stage: 0, scenario: 0, status: "LP-subproblem is infeasible" }),
            LpStatus::Unbounded => Err(Error::StageFailure { stage: 0, scenario: 0, status: "LP-subproblem is unbounded" }),
        }
    }

    /// `(α, β)` with α the duals of `Σζ3 = x_prev` and β the dual of `Σζ0 = 1`;
    /// every other row has zero right-hand side, so `β + αᵀx_prev` is the optimum.
    pub fn cut_from(&self, sol: &LpSolution) -> (Vec<f64>, f64) {
        let alpha = self.sum3_rows.clone().map(|r| sol.duals[r]).collect();
        (alpha, sol.duals[self.sum0_row])
    }
}

/// Lifted LP of `rows ∧ (∨_h disjuncts[h])` with φ bounded below by `floor`
/// (`None` marks the terminal stage, where φ is absent).
pub fn tight_extended_formulation(
    stage: &StageTemplate,
    data: &StageScenario,
    cuts: &[Cut],
    floor: Option<f64>,
    x_prev: &[f64],
) -> Result<LiftedSubproblem> {
    let blocks = combined(data);
    if !data.disjuncts.is_empty() {
        for (h, b) in blocks.iter().enumerate() {
            let single = StageScenario { rows: b.clone(), disjuncts: vec![], ..data.clone() };
            let probe = build(stage, &single, std::slice::from_ref(b), &[], floor.map(|_| 0.0), x_prev)?;
            if solve_lp(&probe.lp)?.status == LpStatus::Infeasible {
                return Err(Error::EmptyDisjunct(h));
            }
        }
    }
    build(stage, data, &blocks, cuts, floor, x_prev)
}

/// Number of pairs `(J1, J2)` with `|J1 ∪ J2| = s` over `d` coordinates.
pub fn hierarchy_size(d: usize, s: usize) -> usize {
    if s > d {
        return 0;
    }
    let mut c: usize = 1;
    for i in 0..s {
        c = c * (d - i) / (i + 1);
    }
    c.saturating_mul(1usize.checked_shl(s as u32).unwrap_or(usize::MAX))
}

fn subsets(d: usize, s: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, d: usize, s: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == s {
            out.push(cur.clone());
            return;
        }
        for j in start..d {
            if d - j < s - cur.len() {
                break;
            }
            cur.push(j);
            rec(j + 1, d, s, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, d, s, &mut Vec::new(), &mut out);
    out
}

/// Level-`s` relaxation: one lifted copy per pair `(J1, J2)` fixing `x_j = 0`
/// on `J1` and `x_j = 1` on `J2`. Binary restrictions on y are dropped.
pub fn hierarchy_relaxation(
    stage: &StageTemplate,
    data: &StageScenario,
    cuts: &[Cut],
    floor: Option<f64>,
    x_prev: &[f64],
    s: usize,
) -> Result<LiftedSubproblem> {
    if !data.disjuncts.is_empty() {
        return Err(Error::invalid("stages.disjuncts", "the hierarchy applies to mixed-binary stages"));
    }
    let d = stage.d_x;
    if s > d {
        return Err(Error::DimensionMismatch(format!("level {s} exceeds state dimension {d}")));
    }
    let n = hierarchy_size(d, s);
    if n > MAX_DISJUNCTS {
        return Err(Error::TooManyDisjuncts(n));
    }
    let mut blocks = Vec::with_capacity(n);
    for set in subsets(d, s) {
        for mask in 0..1usize << s {
            let mut b = data.rows.clone();
            for (q, &j) in set.iter().enumerate() {
                let mut a = vec![0.0; d];
                if mask >> q & 1 == 1 {
                    a[j] = 1.0;
                    b.push(a, vec![0.0; stage.d_y], vec![0.0; stage.d_x_prev], Relation::Ge, 1.0);
                } else {
                    a[j] = -1.0;
                    b.push(a, vec![0.0; stage.d_y], vec![0.0; stage.d_x_prev], Relation::Ge, 0.0);
                }
            }
            blocks.push(b);
        }
    }
    build(stage, data, &blocks, cuts, floor, x_prev)
}

fn lifted_for(
    model: &MultistageModel,
    t: usize,
    i: usize,
    floor: Option<f64>,
    level: Option<usize>,
) -> Result<LiftedSubproblem> {
    let st = &model.stages[t];
    let data = model.scenario(t, i);
    let zero = vec![0.0; st.d_x_prev];
    if data.disjuncts.is_empty() {
        hierarchy_relaxation(st, data, &[], floor, &zero, level.unwrap_or(st.d_x).min(st.d_x))
    } else {
        tight_extended_formulation(st, data, &[], floor, &zero)
    }
}

fn binary_state(sol: &LpSolution, l: &LiftedSubproblem, t: usize) -> Result<Vec<f64>> {
    let x = &sol.primal[l.x.clone()];
    if x.iter().any(|v| (v - v.round()).abs() > BINARY_TOL) {
        return Err(Error::invalid(format!("stages[{t}]"), "LP-subproblem returned a fractional state; raise the hierarchy level"));
    }
    Ok(x.iter().map(|v| v.round()).collect())
}

/// Decomposition on LP-subproblems. Per-scenario cuts come from the lifted
/// duals and are aggregated under `risk` as in the cutting-plane variants.
/// Stages without disjuncts are lifted at hierarchy level `level` (all
/// coordinates when `None`).
pub fn dasddp_dp_run(
    model: &MultistageModel,
    amb: &AmbiguitySpec,
    risk: Risk,
    level: Option<usize>,
    cfg: &SolverConfig,
) -> Result<(Policy, SolveLog)> {
    in_pool(cfg.threads, || dp_inner(model, amb, risk, level, cfg))
}

fn dp_inner(model: &MultistageModel, amb: &AmbiguitySpec, risk: Risk, level: Option<usize>, cfg: &SolverConfig) -> Result<(Policy, SolveLog)> {
    cfg.validate()?;
    let mut m = model.clone();
    m.ambiguity = amb.clone();
    m.validate()?;
    let name = match risk {
        Risk::Neutral => "neutral",
        Risk::Drr => "drr-c",
        Risk::Dro => "dro-c",
    };
    let approx = builtin_registry().get(name)?;
    let mut policy = Policy::new(&m, approx.as_ref(), amb)?;
    let horizon = m.horizon;
    let floor_of = |t: usize| if t + 1 < horizon { Some(policy.floors[t + 1]) } else { None };
    let mut lifted: Vec<Vec<LiftedSubproblem>> = (0..horizon)
        .map(|t| (0..m.num_scenarios(t)).map(|i| lifted_for(&m, t, i, floor_of(t), level)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut last_gain = 0;
    let fail = |e: Error, t: usize, i: usize| match e {
        Error::StageFailure { status, .. } => Error::StageFailure { stage: t + 1, scenario: i, status },
        e => e,
    };
    let status = loop {
        let iter = records.len() + 1;
        let path = sample_path(&mut rng, &m);
        let mut states = Vec::with_capacity(horizon);
        let mut x_prev = m.x0.clone();
        let mut fwd = 0.0;
        for t in 0..horizon {
            let l = &mut lifted[t][path[t]];
            l.set_state(&x_prev);
            let s = l.solve().map_err(|e| fail(e, t, path[t]))?;
            let x = binary_state(&s, l, t)?;
            let y = &s.primal[l.y.clone()];
            fwd += MultistageModel::stage_cost(m.scenario(t, path[t]), &x, y);
            states.push(x.clone());
            x_prev = x;
        }
        let mut added = 0;
        for t in (1..horizon).rev() {
            let x_hat = &states[t - 1];
            let scenario_cuts: Vec<Cut> = lifted[t]
                .par_iter_mut()
                .enumerate()
                .map(|(i, l)| {
                    l.set_state(x_hat);
                    let s = l.solve().map_err(|e| fail(e, t, i))?;
                    let (alpha, beta) = l.cut_from(&s);
                    Ok(Cut { stage: t - 1, scenario: Some(i), alpha, beta, kind: CutKind::Benders, iteration: iter })
                })
                .collect::<Result<_>>()?;
            let new = approx.refine(&RefineInput {
                model: &m,
                t,
                x_hat,
                scenario_cuts: &scenario_cuts,
                support: &m.supports[t],
                ambiguity: amb,
                own_cuts: None,
                own_floor: 0.0,
                iteration: iter,
            })?;
            for c in new {
                for l in lifted[t - 1].iter_mut() {
                    l.add_cut(&c.alpha, c.beta);
                }
                policy.cuts[t - 1].aggregate.push(c);
                added += 1;
            }
        }
        let l0 = &mut lifted[0][0];
        l0.set_state(&m.x0);
        let lb = l0.solve().map_err(|e| fail(e, 0, 0))?.objective;
        let time_s = if cfg.record_time { start.elapsed().as_secs_f64() } else { 0.0 };
        records.push(IterRecord { iter, paths: vec![path], fwd_obj: fwd, lb, time_s, cuts_added: added });
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
