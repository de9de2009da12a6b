use super::{LpProblem, LpSolution, LpStatus, Relation, Sense};
use crate::{Error, Result};

const PIV_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum State {
    Basic,
    Lower,
    Upper,
    Zero,
}

enum Outcome {
    Optimal,
    Unbounded,
}

/// Revised simplex over `A x + s (+ art) = b` with an explicit dense basis inverse.
struct Tableau<'a> {
    p: &'a LpProblem,
    m: usize,
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
    art_sign: Vec<f64>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: usize,
}

impl<'a> Tableau<'a> {
    fn new(p: &'a LpProblem) -> Self {
        let m = p.num_rows();
        let n = p.num_cols();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in p.rows.iter().enumerate() {
            for &(j, a) in &row.coefs {
                if a != 0.0 {
                    cols[j].push((i, a));
                }
            }
        }
        for col in cols.iter_mut() {
            merge_duplicates(col);
        }
        let total = n + 2 * m;
        let mut lb = Vec::with_capacity(total);
        let mut ub = Vec::with_capacity(total);
        for &(lo, hi) in &p.bounds {
            lb.push(lo);
            ub.push(hi);
        }
        for row in &p.rows {
            let (lo, hi) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lb.push(lo);
            ub.push(hi);
        }
        for _ in 0..m {
            lb.push(0.0);
            ub.push(0.0);
        }
        Tableau {
            p,
            m,
            n,
            cols,
            art_sign: vec![1.0; m],
            lb,
            ub,
            x: vec![0.0; total],
            state: vec![State::Lower; total],
            basis: vec![0; m],
            binv: vec![0.0; m * m],
            pivots_since_refactor: 0,
            iterations: 0,
        }
    }

    fn total(&self) -> usize {
        self.n + 2 * self.m
    }

    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                f(i, a);
            }
        } else if j < self.n + self.m {
            f(j - self.n, 1.0);
        } else {
            let i = j - self.n - self.m;
            f(i, self.art_sign[i]);
        }
    }

    /// Initial basis of slacks, with artificials where the slack cannot absorb the residual.
    fn crash(&mut self) -> bool {
        let (n, m) = (self.n, self.m);
        for j in 0..n {
            let (lo, hi) = (self.lb[j], self.ub[j]);
            if lo.is_finite() {
                self.x[j] = lo;
                self.state[j] = State::Lower;
            } else if hi.is_finite() {
                self.x[j] = hi;
                self.state[j] = State::Upper;
            } else {
                self.x[j] = 0.0;
                self.state[j] = State::Zero;
            }
        }
        let mut resid: Vec<f64> = self.p.rows.iter().map(|r| r.rhs).collect();
        for j in 0..n {
            if self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    resid[i] -= a * self.x[j];
                }
            }
        }
        let mut needs_phase1 = false;
        for i in 0..m {
            let s = n + i;
            let a = n + m + i;
            let r = resid[i];
            let clamped = r.max(self.lb[s]).min(self.ub[s]);
            if (r - clamped).abs() <= 1e-12 * (1.0 + r.abs()) {
                self.x[s] = r;
                self.state[s] = State::Basic;
                self.basis[i] = s;
                self.x[a] = 0.0;
                self.state[a] = State::Lower;
                self.binv[i * m + i] = 1.0;
            } else {
                self.x[s] = clamped;
                self.state[s] = if clamped == self.lb[s] { State::Lower } else { State::Upper };
                let sign = if r > clamped { 1.0 } else { -1.0 };
                self.art_sign[i] = sign;
                self.x[a] = (r - clamped).abs();
                self.ub[a] = f64::INFINITY;
                self.state[a] = State::Basic;
                self.basis[i] = a;
                self.binv[i * m + i] = sign;
                needs_phase1 = true;
            }
        }
        needs_phase1
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for r in 0..m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for k in 0..m {
                    y[k] += cb * row[k];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        self.for_col(j, |i, a| d -= a * y[i]);
        d
    }

    fn eligible(&self, j: usize, d: f64, tol: f64) -> bool {
        if self.lb[j] == self.ub[j] {
            return false;
        }
        match self.state[j] {
            State::Basic => false,
            State::Lower => d < -tol,
            State::Upper => d > tol,
            State::Zero => d.abs() > tol,
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        self.pivots_since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut b = vec![0.0; m * m];
        for r in 0..m {
            let j = self.basis[r];
            self.for_col(j, |i, a| b[i * m + r] = a);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let mut piv = c;
            let mut best = b[c * m + c].abs();
            for r in c + 1..m {
                let v = b[r * m + c].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-13 {
                return Err(Error::NumericalFailure("singular basis".into()));
            }
            if piv != c {
                for k in 0..m {
                    b.swap(c * m + k, piv * m + k);
                    inv.swap(c * m + k, piv * m + k);
                }
            }
            let d = b[c * m + c];
            for k in 0..m {
                b[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = b[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            b[r * m + k] -= f * b[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        // x_B = B^{-1}(b - N x_N)
        let mut rhs: Vec<f64> = self.p.rows.iter().map(|r| r.rhs).collect();
        for j in 0..self.total() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                let v = self.x[j];
                self.for_col(j, |i, a| rhs[i] -= a * v);
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.basis[r]] = v;
        }
        Ok(())
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= p;
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (prow, after) = rest.split_at_mut(m);
        for (i, chunk) in before.chunks_mut(m).enumerate() {
            let f = alpha[i];
            if f != 0.0 {
                for k in 0..m {
                    chunk[k] -= f * prow[k];
                }
            }
        }
        for (off, chunk) in after.chunks_mut(m).enumerate() {
            let f = alpha[r + 1 + off];
            if f != 0.0 {
                for k in 0..m {
                    chunk[k] -= f * prow[k];
                }
            }
        }
        self.pivots_since_refactor += 1;
    }

    fn run(&mut self, cost: &[f64], max_iters: usize) -> Result<Outcome> {
        let m = self.m;
        let total = self.total();
        let cmax = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let dtol = 1e-9 * cmax;
        let stall_cap = 5 * (self.m + self.n);
        let mut stall = 0usize;
        let mut bland = false;
        let mut obj: f64 = (0..total).map(|j| cost[j] * self.x[j]).sum();
        let mut alpha = vec![0.0; m];
        loop {
            if self.iterations >= max_iters {
                return Err(Error::NumericalFailure(format!(
                    "iteration cap {max_iters} reached"
                )));
            }
            let y = self.duals(cost);
            let mut enter = None;
            let mut best = 0.0;
            for j in 0..total {
                if self.state[j] == State::Basic {
                    continue;
                }
                let d = self.reduced_cost(cost, &y, j);
                if self.eligible(j, d, dtol) {
                    if bland {
                        enter = Some((j, d));
                        break;
                    }
                    if d.abs() > best {
                        best = d.abs();
                        enter = Some((j, d));
                    }
                }
            }
            let Some((q, dq)) = enter else {
                return Ok(Outcome::Optimal);
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            alpha.iter_mut().for_each(|a| *a = 0.0);
            self.for_col(q, |i, a| {
                for r in 0..m {
                    alpha[r] += self.binv[r * m + i] * a;
                }
            });

            // Harris two-pass ratio test.
            let mut relaxed = f64::INFINITY;
            for r in 0..m {
                let rate = -dir * alpha[r];
                if rate.abs() <= PIV_TOL {
                    continue;
                }
                let b = self.basis[r];
                let lim = if rate < 0.0 {
                    if self.lb[b].is_finite() {
                        (self.x[b] - self.lb[b] + HARRIS_TOL) / -rate
                    } else {
                        continue;
                    }
                } else if self.ub[b].is_finite() {
                    (self.ub[b] - self.x[b] + HARRIS_TOL) / rate
                } else {
                    continue;
                };
                relaxed = relaxed.min(lim);
            }
            let mut leave: Option<(usize, f64)> = None;
            if relaxed.is_finite() {
                let mut best_piv = 0.0;
                let mut best_idx = usize::MAX;
                for r in 0..m {
                    let rate = -dir * alpha[r];
                    if rate.abs() <= PIV_TOL {
                        continue;
                    }
                    let b = self.basis[r];
                    let ratio = if rate < 0.0 {
                        if !self.lb[b].is_finite() {
                            continue;
                        }
                        (self.x[b] - self.lb[b]) / -rate
                    } else {
                        if !self.ub[b].is_finite() {
                            continue;
                        }
                        (self.ub[b] - self.x[b]) / rate
                    };
                    if ratio <= relaxed {
                        let take = if bland {
                            b < best_idx
                        } else {
                            alpha[r].abs() > best_piv
                        };
                        if take {
                            best_piv = alpha[r].abs();
                            best_idx = b;
                            leave = Some((r, ratio.max(0.0)));
                        }
                    }
                }
            }
            let span = self.ub[q] - self.lb[q];
            let flip = span.is_finite() && leave.map_or(true, |(_, t)| span <= t);
            let theta = if flip {
                span
            } else if let Some((_, t)) = leave {
                t
            } else {
                return Ok(Outcome::Unbounded);
            };

            self.iterations += 1;
            if theta != 0.0 {
                for r in 0..m {
                    if alpha[r] != 0.0 {
                        let b = self.basis[r];
                        self.x[b] -= dir * theta * alpha[r];
                    }
                }
                self.x[q] += dir * theta;
            }
            let delta = dq * dir * theta;
            if delta < -1e-12 * (1.0 + obj.abs()) {
                stall = 0;
            } else {
                stall += 1;
                if stall > stall_cap {
                    bland = true;
                }
            }
            obj += delta;

            if flip {
                self.state[q] = if dir > 0.0 { State::Upper } else { State::Lower };
                self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                continue;
            }
            let (r, _) = leave.unwrap();
            let out = self.basis[r];
            let rate = -dir * alpha[r];
            if rate < 0.0 {
                self.x[out] = self.lb[out];
                self.state[out] = State::Lower;
            } else {
                self.x[out] = self.ub[out];
                self.state[out] = State::Upper;
            }
            if self.lb[out] == self.ub[out] {
                self.state[out] = State::Lower;
            }
            self.state[q] = State::Basic;
            self.basis[r] = q;
            self.pivot(r, &alpha);
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
                obj = (0..total).map(|j| cost[j] * self.x[j]).sum();
            }
        }
    }

    fn solve_phase(&mut self, cost: &[f64], max_iters: usize) -> Result<Outcome> {
        for _ in 0..4 {
            match self.run(cost, max_iters)? {
                Outcome::Unbounded => return Ok(Outcome::Unbounded),
                Outcome::Optimal => {
                    self.refactor()?;
                    let y = self.duals(cost);
                    let cmax = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
                    let clean = (0..self.total()).all(|j| {
                        self.state[j] == State::Basic
                            || !self.eligible(j, self.reduced_cost(cost, &y, j), 1e-9 * cmax)
                    });
                    if clean {
                        return Ok(Outcome::Optimal);
                    }
                }
            }
        }
        Ok(Outcome::Optimal)
    }
}

fn merge_duplicates(col: &mut Vec<(usize, f64)>) {
    col.sort_by_key(|&(i, _)| i);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(col.len());
    for &(i, a) in col.iter() {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += a,
            _ => out.push((i, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    *col = out;
}

pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let m = p.num_rows();
    let n = p.num_cols();
    let mut t = Tableau::new(p);
    let total = t.total();
    let max_iters = 50_000usize.max(100 * (m + n));
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    let infeasible = |n: usize, m: usize| LpSolution {
        status: LpStatus::Infeasible,
        primal: vec![0.0; n],
        objective: f64::NAN,
        duals: vec![0.0; m],
        reduced_costs: vec![0.0; n],
        iterations: 0,
    };

    if t.crash() {
        let mut c1 = vec![0.0; total];
        for i in 0..m {
            c1[n + m + i] = 1.0;
        }
        if let Outcome::Unbounded = t.solve_phase(&c1, max_iters)? {
            return Err(Error::NumericalFailure("phase one reported unbounded".into()));
        }
        let infeas: f64 = (0..m).map(|i| t.x[n + m + i]).sum();
        let bmax = p.rows.iter().fold(1.0f64, |a, r| a.max(r.rhs.abs()));
        if infeas > 1e-7 * bmax {
            let mut s = infeasible(n, m);
            s.iterations = t.iterations;
            return Ok(s);
        }
        for i in 0..m {
            let a = n + m + i;
            t.ub[a] = 0.0;
            if t.state[a] != State::Basic {
                t.x[a] = 0.0;
                t.state[a] = State::Lower;
            }
        }
    }

    let mut c2 = vec![0.0; total];
    for j in 0..n {
        c2[j] = sign * p.cost[j];
    }
    let outcome = t.solve_phase(&c2, max_iters)?;
    let mut primal: Vec<f64> = t.x[..n].to_vec();
    for j in 0..n {
        // snap tiny bound violations left by floating point drift
        primal[j] = primal[j].max(p.bounds[j].0).min(p.bounds[j].1);
    }
    if let Outcome::Unbounded = outcome {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: sign * f64::NEG_INFINITY,
            primal,
            duals: vec![0.0; m],
            reduced_costs: vec![0.0; n],
            iterations: t.iterations,
        });
    }
    let y = t.duals(&c2);
    let mut reduced = vec![0.0; n];
    for j in 0..n {
        if t.state[j] != State::Basic {
            reduced[j] = sign * t.reduced_cost(&c2, &y, j);
        }
    }
    let viol = p.max_violation(&primal);
    if viol > 1e-5 {
        return Err(Error::NumericalFailure(format!("final primal violation {viol:e}")));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: p.objective_at(&primal),
        primal,
        duals: y.iter().map(|v| sign * v).collect(),
        reduced_costs: reduced,
        iterations: t.iterations,
    })
}
