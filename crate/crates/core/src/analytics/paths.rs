use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Dense};
use crate::graph::{EdgeId, GraphSnapshot, LayerFilter, NodeId, WeightKey};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub src: NodeId,
    pub dst: NodeId,
    /// Sum of the path's edge weights; infinite when unreachable.
    pub total_weight: f64,
    pub edges: Vec<EdgeId>,
    pub reachable: bool,
}

/// Single-source distances with a shortest-path tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub src: NodeId,
    /// Reachable nodes only.
    pub dist: BTreeMap<NodeId, f64>,
    pub pred: BTreeMap<NodeId, EdgeId>,
}

impl Distances {
    /// Edges of the tree path from the source, or `None` if unreachable.
    pub fn path_to(&self, snapshot: &GraphSnapshot, node: &NodeId) -> Option<Vec<EdgeId>> {
        if !self.dist.contains_key(node) {
            return None;
        }
        let mut edges = Vec::new();
        let mut cur = node.clone();
        while cur != self.src {
            let e = self.pred.get(&cur)?;
            edges.push(e.clone());
            cur = snapshot.edge(e)?.src.clone();
            if edges.len() > self.dist.len() {
                return None;
            }
        }
        edges.reverse();
        Some(edges)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum BellmanFord {
    Distances(Distances),
    /// A cycle reachable from the source whose weights sum below zero.
    NegativeCycle {
        edges: Vec<EdgeId>,
        weight: f64,
    },
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_nonnegative(g: &Dense<'_>) -> Result<(), AnalyticsError> {
    match g.edges.iter().find(|e| e.3 < 0.0) {
        Some(e) => Err(AnalyticsError::NegativeWeightPresent {
            edge: e.0.clone(),
            weight: e.3,
        }),
        None => Ok(()),
    }
}

/// Distances and predecessor edges from `src`; `reverse` walks edges
/// backwards (distances *to* `src`).
fn dijkstra(g: &Dense<'_>, src: usize, reverse: bool) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = g.n();
    let mut inc: Vec<Vec<usize>> = Vec::new();
    if reverse {
        inc = vec![Vec::new(); n];
        for (k, e) in g.edges.iter().enumerate() {
            inc[e.2].push(k);
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Key(0.0, src));
    while let Some(Key(d, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        let arcs = if reverse { &inc[u] } else { &g.out[u] };
        for &k in arcs {
            let (_, s, t, w) = g.edges[k];
            let v = if reverse { s } else { t };
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(k);
                heap.push(Key(nd, v));
            }
        }
    }
    (dist, pred)
}

fn tight(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Lexicographically smallest simple path (by edge ids) among the shortest
/// ones, found by depth-first search over tight edges in id order.
fn smallest_tight_path(g: &Dense<'_>, src: usize, dst: usize, from: &[f64], to: &[f64]) -> Option<Vec<usize>> {
    let total = from[dst];
    let mut on_stack = vec![false; g.n()];
    let mut path = Vec::new();
    #[allow(clippy::too_many_arguments)]
    fn go(
        g: &Dense<'_>,
        u: usize,
        dst: usize,
        total: f64,
        from: &[f64],
        to: &[f64],
        on_stack: &mut [bool],
        path: &mut Vec<usize>,
    ) -> bool {
        if u == dst {
            return true;
        }
        on_stack[u] = true;
        for &k in &g.out[u] {
            let (_, _, v, w) = g.edges[k];
            if on_stack[v] || !tight(from[u] + w, from[v]) || !tight(from[v] + to[v], total) {
                continue;
            }
            path.push(k);
            if go(g, v, dst, total, from, to, on_stack, path) {
                return true;
            }
            path.pop();
        }
        on_stack[u] = false;
        false
    }
    go(g, src, dst, total, from, to, &mut on_stack, &mut path).then_some(path)
}

/// Shortest path under non-negative weights. Among equally short paths the
/// lexicographically smallest edge-id sequence wins.
pub fn shortest_path_dijkstra(
    snapshot: &GraphSnapshot,
    src: &NodeId,
    dst: &NodeId,
    key: WeightKey,
    filter: LayerFilter,
) -> Result<PathResult, AnalyticsError> {
    let g = Dense::new(snapshot, filter, Some(key));
    let (s, d) = (g.node(src)?, g.node(dst)?);
    check_nonnegative(&g)?;
    let unreachable = PathResult {
        src: src.clone(),
        dst: dst.clone(),
        total_weight: f64::INFINITY,
        edges: Vec::new(),
        reachable: false,
    };
    let (from, pred) = dijkstra(&g, s, false);
    if from[d].is_infinite() {
        return Ok(unreachable);
    }
    let (to, _) = dijkstra(&g, d, true);
    let ks = smallest_tight_path(&g, s, d, &from, &to).unwrap_or_else(|| {
        let mut ks = Vec::new();
        let mut v = d;
        while v != s {
            let k = pred[v].expect("reachable");
            ks.push(k);
            v = g.edges[k].1;
        }
        ks.reverse();
        ks
    });
    Ok(PathResult {
        src: src.clone(),
        dst: dst.clone(),
        total_weight: ks.iter().map(|&k| g.edges[k].3).sum(),
        edges: ks.iter().map(|&k| g.edges[k].0.clone()).collect(),
        reachable: true,
    })
}

fn distances(g: &Dense<'_>, src: &NodeId, dist: &[f64], pred: &[Option<usize>]) -> Distances {
    let mut out = Distances {
        src: src.clone(),
        dist: BTreeMap::new(),
        pred: BTreeMap::new(),
    };
    for (i, &d) in dist.iter().enumerate() {
        if d.is_finite() {
            out.dist.insert(g.ids[i].clone(), d);
            if let Some(k) = pred[i] {
                out.pred.insert(g.ids[i].clone(), g.edges[k].0.clone());
            }
        }
    }
    out
}

/// All single-source distances by Dijkstra.
pub fn dijkstra_distances(
    snapshot: &GraphSnapshot,
    src: &NodeId,
    key: WeightKey,
    filter: LayerFilter,
) -> Result<Distances, AnalyticsError> {
    let g = Dense::new(snapshot, filter, Some(key));
    let s = g.node(src)?;
    check_nonnegative(&g)?;
    let (dist, pred) = dijkstra(&g, s, false);
    Ok(distances(&g, src, &dist, &pred))
}

/// Single-source distances under arbitrary weights, or a negative cycle
/// reachable from `src`.
pub fn shortest_path_bellman_ford(
    snapshot: &GraphSnapshot,
    src: &NodeId,
    key: WeightKey,
    filter: LayerFilter,
) -> Result<BellmanFord, AnalyticsError> {
    let g = Dense::new(snapshot, filter, Some(key));
    let s = g.node(src)?;
    let n = g.n();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    dist[s] = 0.0;
    let mut relaxed = None;
    for _ in 0..n {
        relaxed = None;
        for (k, &(_, u, v, w)) in g.edges.iter().enumerate() {
            if dist[u].is_finite() && dist[u] + w < dist[v] {
                dist[v] = dist[u] + w;
                pred[v] = Some(k);
                relaxed = Some(v);
            }
        }
        if relaxed.is_none() {
            break;
        }
    }
    let Some(mut v) = relaxed else {
        return Ok(BellmanFord::Distances(distances(&g, src, &dist, &pred)));
    };
    // Still relaxing after n rounds: walk back n steps to land on the cycle.
    for _ in 0..n {
        v = g.edges[pred[v].expect("relaxed node has a predecessor")].1;
    }
    let start = v;
    let mut cycle = Vec::new();
    loop {
        let k = pred[v].expect("cycle node has a predecessor");
        cycle.push(k);
        v = g.edges[k].1;
        if v == start {
            break;
        }
    }
    cycle.reverse();
    Ok(BellmanFord::NegativeCycle {
        weight: cycle.iter().map(|&k| g.edges[k].3).sum(),
        edges: cycle.into_iter().map(|k| g.edges[k].0.clone()).collect(),
    })
}

/// All-pairs distances with the first edge of each shortest path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllPairs {
    pub nodes: Vec<NodeId>,
    /// `dist[i][j]`, infinite when unreachable.
    pub dist: Vec<Vec<f64>>,
    pub next: Vec<Vec<Option<EdgeId>>>,
    #[serde(skip)]
    heads: BTreeMap<EdgeId, usize>,
}

impl AllPairs {
    fn index(&self, id: &NodeId) -> Option<usize> {
        self.nodes.binary_search(id).ok()
    }

    pub fn distance(&self, a: &NodeId, b: &NodeId) -> Option<f64> {
        let d = self.dist[self.index(a)?][self.index(b)?];
        d.is_finite().then_some(d)
    }

    /// Reconstructs the path by following next-hop edges.
    pub fn path(&self, a: &NodeId, b: &NodeId) -> Option<Vec<EdgeId>> {
        let (mut i, j) = (self.index(a)?, self.index(b)?);
        if !self.dist[i][j].is_finite() {
            return None;
        }
        let mut edges = Vec::new();
        while i != j {
            let e = self.next[i][j].clone()?;
            i = self.heads[&e];
            edges.push(e);
            if edges.len() > self.nodes.len() {
                return None;
            }
        }
        Some(edges)
    }
}

pub fn all_pairs_floyd_warshall(
    snapshot: &GraphSnapshot,
    key: WeightKey,
    filter: LayerFilter,
) -> Result<AllPairs, AnalyticsError> {
    let g = Dense::new(snapshot, filter, Some(key));
    let n = g.n();
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    let mut next: Vec<Vec<Option<usize>>> = vec![vec![None; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for (k, &(_, u, v, w)) in g.edges.iter().enumerate() {
        if w < dist[u][v] {
            dist[u][v] = w;
            next[u][v] = Some(k);
        }
    }
    for k in 0..n {
        for i in 0..n {
            if !dist[i][k].is_finite() {
                continue;
            }
            for j in 0..n {
                let through = dist[i][k] + dist[k][j];
                if through < dist[i][j] {
                    dist[i][j] = through;
                    next[i][j] = next[i][k];
                }
            }
        }
    }
    if let Some(i) = (0..n).find(|&i| dist[i][i] < 0.0) {
        return Err(AnalyticsError::NegativeCycleDetected(g.ids[i].clone()));
    }
    Ok(AllPairs {
        nodes: g.ids.iter().map(|id| (*id).clone()).collect(),
        next: next
            .into_iter()
            .map(|row| row.into_iter().map(|k| k.map(|k| g.edges[k].0.clone())).collect())
            .collect(),
        dist,
        heads: g.edges.iter().map(|e| (e.0.clone(), e.2)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeRecord, EntityKind, EntityNode, LayerKind, WeightVector};

    fn w(cost: f64) -> WeightVector {
        WeightVector {
            cost_per_unit: cost,
            capacity: 10,
            ..WeightVector::default()
        }
    }

    fn graph(n: usize, edges: &[(&str, usize, usize, f64)]) -> GraphSnapshot {
        let nodes = (0..n).map(|i| EntityNode::new(alloc::format!("n{i}").as_str(), EntityKind::Warehouse));
        let edges = edges.iter().map(|&(id, s, d, c)| {
            let layer = if c < 0.0 {
                LayerKind::Financial
            } else {
                LayerKind::Material
            };
            EdgeRecord::new(
                id,
                alloc::format!("n{s}").as_str(),
                alloc::format!("n{d}").as_str(),
                layer,
                w(c),
            )
        });
        GraphSnapshot::new(0, nodes, edges)
    }

    #[test]
    fn same_source_and_target_is_empty() {
        let g = graph(2, &[("a", 0, 1, 1.0)]);
        let p =
            shortest_path_dijkstra(&g, &"n0".into(), &"n0".into(), WeightKey::CostPerUnit, LayerFilter::All).unwrap();
        assert!(p.reachable);
        assert_eq!(p.total_weight, 0.0);
        assert!(p.edges.is_empty());
    }

    #[test]
    fn disconnected_pair_is_unreachable() {
        let g = graph(3, &[("a", 0, 1, 1.0)]);
        let p =
            shortest_path_dijkstra(&g, &"n0".into(), &"n2".into(), WeightKey::CostPerUnit, LayerFilter::All).unwrap();
        assert!(!p.reachable);
    }

    #[test]
    fn ties_prefer_smallest_edge_sequence() {
        // Two routes of weight 2 and a parallel edge.
        let g = graph(
            4,
            &[
                ("d", 0, 1, 1.0),
                ("c", 1, 3, 1.0),
                ("b", 0, 2, 1.0),
                ("e", 2, 3, 1.0),
                ("a", 0, 3, 3.0),
            ],
        );
        let p =
            shortest_path_dijkstra(&g, &"n0".into(), &"n3".into(), WeightKey::CostPerUnit, LayerFilter::All).unwrap();
        assert_eq!(p.edges, [EdgeId::from("b"), EdgeId::from("e")]);
        assert_eq!(p.total_weight, 2.0);
    }

    #[test]
    fn negative_weight_is_rejected_by_dijkstra() {
        let g = graph(2, &[("a", 0, 1, -1.0)]);
        let err = shortest_path_dijkstra(&g, &"n0".into(), &"n1".into(), WeightKey::CostPerUnit, LayerFilter::All);
        assert!(matches!(err, Err(AnalyticsError::NegativeWeightPresent { .. })));
        let err = shortest_path_dijkstra(&g, &"zz".into(), &"n1".into(), WeightKey::CostPerUnit, LayerFilter::All);
        assert!(matches!(err, Err(AnalyticsError::UnknownNode(_))));
    }

    #[test]
    fn bellman_ford_certifies_negative_cycle() {
        let g = graph(3, &[("x", 0, 1, 1.0), ("y", 1, 2, -2.0), ("z", 2, 0, -1.0)]);
        match shortest_path_bellman_ford(&g, &"n0".into(), WeightKey::CostPerUnit, LayerFilter::All).unwrap() {
            BellmanFord::NegativeCycle { mut edges, weight } => {
                edges.sort();
                assert_eq!(edges, [EdgeId::from("x"), EdgeId::from("y"), EdgeId::from("z")]);
                assert_eq!(weight, -2.0);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            all_pairs_floyd_warshall(&g, WeightKey::CostPerUnit, LayerFilter::All),
            Err(AnalyticsError::NegativeCycleDetected(_))
        ));
    }

    #[test]
    fn single_node_distance_zero() {
        let g = graph(1, &[]);
        match shortest_path_bellman_ford(&g, &"n0".into(), WeightKey::CostPerUnit, LayerFilter::All).unwrap() {
            BellmanFord::Distances(d) => assert_eq!(d.dist[&NodeId::from("n0")], 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn floyd_warshall_paths_match_distances() {
        let g = graph(
            4,
            &[("a", 0, 1, 2.0), ("b", 1, 2, 2.0), ("c", 0, 2, 5.0), ("d", 2, 3, 1.0)],
        );
        let ap = all_pairs_floyd_warshall(&g, WeightKey::CostPerUnit, LayerFilter::All).unwrap();
        assert_eq!(ap.distance(&"n0".into(), &"n3".into()), Some(5.0));
        assert_eq!(
            ap.path(&"n0".into(), &"n3".into()).unwrap(),
            [EdgeId::from("a"), EdgeId::from("b"), EdgeId::from("d")]
        );
        assert_eq!(ap.distance(&"n3".into(), &"n0".into()), None);
    }
}
