//! Interdiction applications: max-flow interdiction on grid networks and
//! facility-location interdiction.

mod flip;
mod mfip;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub use flip::{flip_from_points, gen_flip_instance, FlipInstance, FlipParams};
pub use mfip::{
    build_mfip, corrupt_samples, critical_arcs, gen_mfip_instance, grid_network, CapacityLaw, MfipInstance, MfipLayout, MfipParams,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetArc {
    pub tail: usize,
    pub head: usize,
    pub interdictable: bool,
    /// Interdiction cost f_a.
    pub cost: f64,
    /// Arcs with unlimited capacity carry no capacity data.
    pub infinite: bool,
}

/// Directed network with source, sink, and the dummy return arc `sink → source`
/// stored as the last arc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub num_nodes: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<NetArc>,
}

impl Network {
    pub fn new(num_nodes: usize, source: usize, sink: usize) -> Self {
        Network { num_nodes, source, sink, arcs: vec![] }
    }

    pub fn add_arc(&mut self, tail: usize, head: usize, interdictable: bool, infinite: bool) -> usize {
        self.arcs.push(NetArc { tail, head, interdictable, cost: 1.0, infinite });
        self.arcs.len() - 1
    }

    /// Appends the dummy arc; call once after all real arcs.
    pub fn close(&mut self) {
        self.arcs.push(NetArc { tail: self.sink, head: self.source, interdictable: false, cost: f64::INFINITY, infinite: true });
    }

    pub fn is_dummy(&self, a: usize) -> bool {
        a + 1 == self.arcs.len() && self.arcs[a].tail == self.sink && self.arcs[a].head == self.source
    }

    /// Indices of arcs carrying capacity data, in arc order.
    pub fn finite_arcs(&self) -> Vec<usize> {
        (0..self.arcs.len()).filter(|&a| !self.arcs[a].infinite).collect()
    }

    pub fn interdictable_arcs(&self) -> Vec<usize> {
        (0..self.arcs.len()).filter(|&a| self.arcs[a].interdictable).collect()
    }
}

/// Edmonds–Karp max flow from source to sink. `caps` has one entry per arc
/// (ignored for infinite arcs and the dummy arc); arcs with `interdicted[a] > 0.5`
/// have zero capacity. Returns +∞ when an uncapacitated path exists.
pub fn max_flow(net: &Network, caps: &[f64], interdicted: &[f64]) -> f64 {
    let n = net.num_nodes;
    // Residual graph as edge list with paired reverse edges.
    let mut to = Vec::new();
    let mut cap = Vec::new();
    let mut adj = vec![Vec::new(); n];
    for (a, arc) in net.arcs.iter().enumerate() {
        if net.is_dummy(a) {
            continue;
        }
        let c = if interdicted.get(a).copied().unwrap_or(0.0) > 0.5 {
            0.0
        } else if arc.infinite {
            f64::INFINITY
        } else {
            caps[a]
        };
        adj[arc.tail].push(to.len());
        to.push(arc.head);
        cap.push(c);
        adj[arc.head].push(to.len());
        to.push(arc.tail);
        cap.push(0.0);
    }
    let mut flow = 0.0;
    loop {
        let mut pred = vec![usize::MAX; n];
        let mut q = VecDeque::from([net.source]);
        let mut seen = vec![false; n];
        seen[net.source] = true;
        while let Some(u) = q.pop_front() {
            for &e in &adj[u] {
                if cap[e] > 1e-12 && !seen[to[e]] {
                    seen[to[e]] = true;
                    pred[to[e]] = e;
                    q.push_back(to[e]);
                }
            }
        }
        if !seen[net.sink] {
            return flow;
        }
        let mut push = f64::INFINITY;
        let mut v = net.sink;
        while v != net.source {
            let e = pred[v];
            push = push.min(cap[e]);
            v = to[e ^ 1];
        }
        if push.is_infinite() {
            return f64::INFINITY;
        }
        let mut v = net.sink;
        while v != net.source {
            let e = pred[v];
            cap[e] -= push;
            cap[e ^ 1] += push;
            v = to[e ^ 1];
        }
        flow += push;
    }
}

/// Inverse-CDF draw from a normal law truncated to `[lo, hi]`.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let d = Normal::new(mean, sd).expect("positive standard deviation");
    let (a, b) = (d.cdf(lo), d.cdf(hi));
    let u: f64 = rng.gen();
    let p = (a + u * (b - a)).clamp(1e-300, 1.0 - 1e-16);
    d.inverse_cdf(p).clamp(lo, hi)
}
