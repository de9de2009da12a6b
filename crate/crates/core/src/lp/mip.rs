use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{solve_lp, LpProblem, LpStatus, Sense, TOL_MIP};
use crate::{Error, Result};

const INT_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct MipProblem {
    pub base: LpProblem,
    pub binary: Vec<usize>,
}

impl MipProblem {
    pub fn new(base: LpProblem) -> Self {
        MipProblem { base, binary: Vec::new() }
    }

    pub fn add_binary(&mut self, cost: f64) -> usize {
        let j = self.base.add_column(cost, 0.0, 1.0);
        self.binary.push(j);
        j
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MipOptions {
    pub tol_mip: f64,
    pub node_limit: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions { tol_mip: TOL_MIP, node_limit: 200_000 }
    }
}

#[derive(Clone, Debug)]
pub struct MipSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    pub objective: f64,
    pub incumbent_bound: f64,
    pub nodes: usize,
}

pub fn lp_relaxation(p: &MipProblem) -> LpProblem {
    let mut lp = p.base.clone();
    for &j in &p.binary {
        let (lo, hi) = lp.bounds[j];
        lp.bounds[j] = (lo.max(0.0), hi.min(1.0));
    }
    lp
}

pub fn solve_mip(p: &MipProblem, tol_mip: f64) -> Result<MipSolution> {
    solve_mip_with(p, &MipOptions { tol_mip, ..MipOptions::default() })
}

struct Node {
    bound: f64,
    id: usize,
    fixes: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then oldest node.
    fn cmp(&self, o: &Self) -> Ordering {
        o.bound.total_cmp(&self.bound).then(o.id.cmp(&self.id))
    }
}

/// Best-bound branch-and-bound on the most fractional binary (lowest index on ties).
pub fn solve_mip_with(p: &MipProblem, opts: &MipOptions) -> Result<MipSolution> {
    let sign = match p.base.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut lp = lp_relaxation(p);
    let root_bounds = lp.bounds.clone();
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, id: 0, fixes: Vec::new() });
    let mut next_id = 1;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;
    let mut unbounded = false;

    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if node.bound >= inc - opts.tol_mip * (1.0 + inc.abs()) {
                heap.clear();
                break;
            }
        }
        if nodes >= opts.node_limit {
            heap.push(node);
            break;
        }
        nodes += 1;
        lp.bounds.copy_from_slice(&root_bounds);
        for &(j, v) in &node.fixes {
            lp.bounds[j] = (v, v);
        }
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                unbounded = true;
                break;
            }
            LpStatus::Optimal => {}
        }
        let value = sign * sol.objective;
        if let Some((inc, _)) = &incumbent {
            if value >= inc - opts.tol_mip * (1.0 + inc.abs()) {
                continue;
            }
        }
        let mut branch = None;
        let mut best_frac = INT_TOL;
        for &j in &p.binary {
            let v = sol.primal[j];
            let frac = (v - v.round()).abs();
            if frac > best_frac + 1e-12 {
                best_frac = frac;
                branch = Some(j);
            }
        }
        match branch {
            None => {
                let mut x = sol.primal;
                for &j in &p.binary {
                    x[j] = x[j].round();
                }
                incumbent = Some((value, x));
            }
            Some(j) => {
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    heap.push(Node { bound: value, id: next_id, fixes });
                    next_id += 1;
                }
            }
        }
    }

    if unbounded {
        return Ok(MipSolution {
            status: LpStatus::Unbounded,
            primal: vec![0.0; p.base.num_cols()],
            objective: sign * f64::NEG_INFINITY,
            incumbent_bound: sign * f64::NEG_INFINITY,
            nodes,
        });
    }
    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        None if heap.is_empty() => Ok(MipSolution {
            status: LpStatus::Infeasible,
            primal: vec![0.0; p.base.num_cols()],
            objective: f64::NAN,
            incumbent_bound: f64::NAN,
            nodes,
        }),
        None => Err(Error::NodeLimit(opts.node_limit)),
        Some((value, x)) => {
            if !heap.is_empty() && open_bound < value - opts.tol_mip * (1.0 + value.abs()) {
                return Err(Error::NodeLimit(opts.node_limit));
            }
            Ok(MipSolution {
                status: LpStatus::Optimal,
                objective: p.base.objective_at(&x),
                incumbent_bound: sign * open_bound.min(value),
                primal: x,
                nodes,
            })
        }
    }
}
