//! Successive-shortest-path min-cost flow.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

/// Residual capacity treated as unbounded.
pub(crate) const INF: u64 = u64::MAX / 4;

#[derive(Clone, Debug)]
struct Residual {
    to: usize,
    cap: u64,
    cost: f64,
}

/// Arc `k` of the caller is stored at `2k` with its reverse at `2k + 1`.
#[derive(Clone, Debug)]
pub(crate) struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    res: Vec<Residual>,
    initial: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum McfFailure {
    /// Arc ids (caller numbering) of a negative-cost cycle.
    NegativeCycle(Vec<usize>),
    /// Supplies could not all be routed; carries the routed amount.
    Unrouted(u64),
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (distance, node).
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl FlowNetwork {
    pub(crate) fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            res: Vec::new(),
            initial: Vec::new(),
        }
    }

    pub(crate) fn add_node(&mut self) -> usize {
        self.adj.push(Vec::new());
        self.adj.len() - 1
    }

    pub(crate) fn add_arc(&mut self, from: usize, to: usize, cap: u64, cost: f64) -> usize {
        let k = self.initial.len();
        self.adj[from].push(self.res.len());
        self.res.push(Residual { to, cap, cost });
        self.adj[to].push(self.res.len());
        self.res.push(Residual {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.initial.push(cap);
        k
    }

    pub(crate) fn flow(&self, arc: usize) -> u64 {
        self.res[2 * arc + 1].cap
    }

    fn tail_of(&self, r: usize) -> usize {
        self.res[r ^ 1].to
    }

    /// Potentials making every residual reduced cost non-negative, or a
    /// negative cycle.
    fn initial_potentials(&self) -> Result<Vec<f64>, McfFailure> {
        let n = self.adj.len();
        let mut pot = vec![0.0; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        for round in 0..=n {
            let mut changed = None;
            for u in 0..n {
                for &r in &self.adj[u] {
                    let a = &self.res[r];
                    if a.cap > 0 && pot[u] + a.cost < pot[a.to] {
                        pot[a.to] = pot[u] + a.cost;
                        pred[a.to] = Some(r);
                        changed = Some(a.to);
                    }
                }
            }
            match changed {
                None => return Ok(pot),
                Some(v) if round == n => return Err(McfFailure::NegativeCycle(self.cycle_from(v, &pred))),
                Some(_) => {}
            }
        }
        Ok(pot)
    }

    fn cycle_from(&self, mut v: usize, pred: &[Option<usize>]) -> Vec<usize> {
        for _ in 0..self.adj.len() {
            v = self.tail_of(pred[v].expect("on a relaxation chain"));
        }
        let start = v;
        let mut arcs = Vec::new();
        loop {
            let r = pred[v].expect("on the cycle");
            arcs.push(r / 2);
            v = self.tail_of(r);
            if v == start {
                break;
            }
        }
        arcs.reverse();
        arcs
    }

    /// Routes `supply[v] > 0` units out of and `−supply[v]` units into each
    /// node at minimum cost. Returns the cost of the routed flow.
    pub(crate) fn solve(&mut self, supply: &[i64]) -> Result<f64, McfFailure> {
        let n = self.adj.len();
        let source = self.add_node();
        let sink = self.add_node();
        let mut required = 0u64;
        for (v, &b) in supply.iter().enumerate().take(n) {
            if b > 0 {
                self.add_arc(source, v, b as u64, 0.0);
                required += b as u64;
            } else if b < 0 {
                self.add_arc(v, sink, b.unsigned_abs(), 0.0);
            }
        }
        let n = self.adj.len();
        let mut pot = self.initial_potentials()?;
        let mut routed = 0u64;
        let mut total = 0.0;
        while routed < required {
            let mut dist = vec![f64::INFINITY; n];
            let mut pred: Vec<Option<usize>> = vec![None; n];
            let mut done = vec![false; n];
            let mut heap = BinaryHeap::new();
            dist[source] = 0.0;
            heap.push(Key(0.0, source));
            while let Some(Key(d, u)) = heap.pop() {
                if done[u] {
                    continue;
                }
                done[u] = true;
                for &r in &self.adj[u] {
                    let a = &self.res[r];
                    if a.cap == 0 || done[a.to] {
                        continue;
                    }
                    let rc = (a.cost + pot[u] - pot[a.to]).max(0.0);
                    let nd = d + rc;
                    if nd < dist[a.to] {
                        dist[a.to] = nd;
                        pred[a.to] = Some(r);
                        heap.push(Key(nd, a.to));
                    }
                }
            }
            if !done[sink] {
                break;
            }
            for v in 0..n {
                if done[v] {
                    pot[v] += dist[v];
                }
            }
            let mut push = required - routed;
            let mut v = sink;
            while v != source {
                let r = pred[v].expect("sink reached");
                push = push.min(self.res[r].cap);
                v = self.tail_of(r);
            }
            let mut v = sink;
            while v != source {
                let r = pred[v].expect("sink reached");
                self.res[r].cap -= push;
                self.res[r ^ 1].cap += push;
                total += self.res[r].cost * push as f64;
                v = self.tail_of(r);
            }
            routed += push;
        }
        if routed < required {
            return Err(McfFailure::Unrouted(routed));
        }
        Ok(total)
    }

    #[cfg(test)]
    pub(crate) fn capacity(&self, arc: usize) -> u64 {
        self.initial[arc]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefers_cheap_parallel_route() {
        let mut g = FlowNetwork::new(2);
        let cheap = g.add_arc(0, 1, 3, 2.0);
        let dear = g.add_arc(0, 1, 10, 5.0);
        let cost = g.solve(&[5, -5]).unwrap();
        assert_eq!(g.flow(cheap), 3);
        assert_eq!(g.flow(dear), 2);
        assert_eq!(g.capacity(cheap), 3);
        assert_eq!(cost, 16.0);
    }

    #[test]
    fn negative_arc_without_cycle_is_fine() {
        let mut g = FlowNetwork::new(3);
        g.add_arc(0, 1, 5, -3.0);
        g.add_arc(1, 2, 5, 1.0);
        g.add_arc(0, 2, 5, 0.0);
        assert_eq!(g.solve(&[2, 0, -2]).unwrap(), -4.0);
    }

    #[test]
    fn negative_cycle_is_reported() {
        let mut g = FlowNetwork::new(3);
        g.add_arc(0, 1, 1, 1.0);
        g.add_arc(1, 2, 1, -2.0);
        g.add_arc(2, 0, 1, -1.0);
        match g.solve(&[0, 0, 0]) {
            Err(McfFailure::NegativeCycle(c)) => {
                let mut c = c;
                c.sort();
                assert_eq!(c, [0, 1, 2]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unroutable_supply_is_reported() {
        let mut g = FlowNetwork::new(2);
        g.add_arc(0, 1, 1, 0.0);
        assert_eq!(g.solve(&[3, -3]), Err(McfFailure::Unrouted(1)));
    }
}
