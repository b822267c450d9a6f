//! Instance generators and reference implementations shared by the
//! integration tests and the acceptance target.
#![allow(dead_code, clippy::needless_range_loop, clippy::type_complexity)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chaintwin_core::analytics::AllPairs;
use chaintwin_core::graph::WeightKey;
use chaintwin_core::simulation::{Disturbance, NodeRates, Scenario, Schedule, Target};
use chaintwin_core::{EdgeId, EdgeRecord, EntityKind, EntityNode, GraphSnapshot, LayerKind, NodeId, WeightVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn node_id(i: usize) -> NodeId {
    NodeId::from(format!("n{i:02}").as_str())
}

pub fn edge_id(i: usize) -> EdgeId {
    EdgeId::from(format!("e{i:02}").as_str())
}

// ---------------------------------------------------------------------------
// Path graphs

/// Random graph with integer-valued non-negative costs, so path sums are
/// exact in floating point. Parallel edges and all three layers occur.
pub fn random_path_graph(r: &mut ChaCha8Rng, max_nodes: usize) -> GraphSnapshot {
    let n = r.random_range(1..=max_nodes);
    let m = if n < 2 { 0 } else { r.random_range(0..=n * 3) };
    let nodes = (0..n).map(|i| EntityNode::new(node_id(i), EntityKind::Warehouse));
    let mut edges = Vec::new();
    for k in 0..m {
        let a = r.random_range(0..n);
        let mut b = r.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let layer = [LayerKind::Material, LayerKind::Information, LayerKind::Financial][r.random_range(0..3)];
        let w = WeightVector {
            cost_per_unit: r.random_range(0..=20) as f64,
            transit_time: r.random_range(1..=9),
            capacity: 10,
            ..WeightVector::default()
        };
        edges.push(EdgeRecord::new(edge_id(k), node_id(a), node_id(b), layer, w));
    }
    GraphSnapshot::new(0, nodes, edges)
}

/// Random non-negative graph plus a planted cycle through `n00` whose
/// financial-layer costs sum to a negative number.
pub fn negative_cycle_graph(r: &mut ChaCha8Rng) -> GraphSnapshot {
    let n = r.random_range(3..=12);
    let nodes: Vec<_> = (0..n)
        .map(|i| EntityNode::new(node_id(i), EntityKind::Distributor))
        .collect();
    let mut edges = Vec::new();
    let mut k = 0;
    let mut push = |edges: &mut Vec<EdgeRecord>, a: usize, b: usize, cost: f64| {
        let w = WeightVector {
            cost_per_unit: cost,
            ..WeightVector::default()
        };
        edges.push(EdgeRecord::new(
            edge_id(k),
            node_id(a),
            node_id(b),
            LayerKind::Financial,
            w,
        ));
        k += 1;
    };
    for _ in 0..r.random_range(0..=2 * n) {
        let a = r.random_range(0..n);
        let b = (a + r.random_range(1..n)) % n;
        push(&mut edges, a, b, r.random_range(0..=10) as f64);
    }
    let len = r.random_range(2..=n);
    let mut cycle: Vec<usize> = vec![0];
    let mut rest: Vec<usize> = (1..n).collect();
    for _ in 1..len {
        let i = r.random_range(0..rest.len());
        cycle.push(rest.swap_remove(i));
    }
    let mut costs: Vec<f64> = (0..len).map(|_| r.random_range(0..=5) as f64).collect();
    let total: f64 = costs.iter().sum();
    costs[0] -= total + r.random_range(1..=5) as f64;
    for i in 0..len {
        push(&mut edges, cycle[i], cycle[(i + 1) % len], costs[i]);
    }
    GraphSnapshot::new(0, nodes, edges)
}

/// Checks a negative-cycle certificate: consecutive edges of the snapshot
/// that close a cycle and sum to a negative cost.
pub fn valid_certificate(g: &GraphSnapshot, edges: &[EdgeId], reported: f64) -> bool {
    if edges.is_empty() {
        return false;
    }
    let recs: Option<Vec<&EdgeRecord>> = edges.iter().map(|e| g.edge(e)).collect();
    let Some(recs) = recs else { return false };
    for i in 0..recs.len() {
        if recs[i].dst != recs[(i + 1) % recs.len()].src {
            return false;
        }
    }
    let sum: f64 = recs.iter().map(|e| e.weights.cost_per_unit).sum();
    sum < 0.0 && sum == reported
}

/// Floyd-Warshall row of `src` as a map over reachable nodes.
pub fn fw_row(ap: &AllPairs, src: &NodeId) -> BTreeMap<NodeId, f64> {
    ap.nodes
        .iter()
        .filter_map(|d| ap.distance(src, d).map(|w| (d.clone(), w)))
        .collect()
}

pub fn path_cost(g: &GraphSnapshot, edges: &[EdgeId], key: WeightKey) -> f64 {
    edges.iter().map(|e| g.edge(e).unwrap().weights.key(key)).sum()
}

// ---------------------------------------------------------------------------
// Betweenness by enumeration

/// Directed betweenness from every simple path: for each ordered pair the
/// shortest (fewest hops) paths are counted and each interior node gets its
/// share.
pub fn brute_betweenness(n: usize, arcs: &BTreeSet<(usize, usize)>) -> Vec<f64> {
    let mut out = vec![Vec::new(); n];
    for &(a, b) in arcs {
        out[a].push(b);
    }
    let mut score = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t {
                continue;
            }
            let mut paths: Vec<Vec<usize>> = Vec::new();
            let mut stack = vec![s];
            let mut on = vec![false; n];
            on[s] = true;
            enumerate(&out, t, &mut stack, &mut on, &mut paths);
            let Some(best) = paths.iter().map(Vec::len).min() else {
                continue;
            };
            let shortest: Vec<&Vec<usize>> = paths.iter().filter(|p| p.len() == best).collect();
            let sigma = shortest.len() as f64;
            for v in 0..n {
                if v == s || v == t {
                    continue;
                }
                let through = shortest.iter().filter(|p| p.contains(&v)).count() as f64;
                score[v] += through / sigma;
            }
        }
    }
    score
}

fn enumerate(out: &[Vec<usize>], t: usize, stack: &mut Vec<usize>, on: &mut [bool], paths: &mut Vec<Vec<usize>>) {
    let u = *stack.last().unwrap();
    if u == t {
        paths.push(stack.clone());
        return;
    }
    for &v in &out[u] {
        if !on[v] {
            on[v] = true;
            stack.push(v);
            enumerate(out, t, stack, on, paths);
            stack.pop();
            on[v] = false;
        }
    }
}

/// Snapshot with one material edge per arc, node `i` named `n{i:02}`.
pub fn arcs_snapshot(n: usize, arcs: &[(usize, usize)]) -> GraphSnapshot {
    GraphSnapshot::new(
        0,
        (0..n).map(|i| EntityNode::new(node_id(i), EntityKind::Warehouse)),
        arcs.iter().enumerate().map(|(k, &(a, b))| {
            EdgeRecord::material(
                edge_id(k),
                node_id(a),
                node_id(b),
                WeightVector {
                    capacity: 1,
                    ..WeightVector::default()
                },
            )
        }),
    )
}

// ---------------------------------------------------------------------------
// Modularity

/// Newman modularity on the undirected simple graph obtained by dropping
/// direction and merging parallel edges:
/// Q = (1/2m) Σ_ij [A_ij − k_i k_j / 2m] δ(c_i, c_j).
pub fn reference_modularity(n: usize, arcs: &[(usize, usize)], label: &[usize]) -> f64 {
    let pairs: BTreeSet<(usize, usize)> = arcs.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let m = pairs.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let mut a = vec![vec![0.0; n]; n];
    let mut k = vec![0.0; n];
    for &(x, y) in &pairs {
        a[x][y] = 1.0;
        a[y][x] = 1.0;
        k[x] += 1.0;
        k[y] += 1.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if label[i] == label[j] {
                q += a[i][j] - k[i] * k[j] / (2.0 * m);
            }
        }
    }
    q / (2.0 * m)
}

/// Two cliques of sizes `a` and `b` joined by one bridge edge between
/// their first members. Nodes `0..a` form the first clique.
pub fn two_cliques(a: usize, b: usize) -> Vec<(usize, usize)> {
    let mut arcs = Vec::new();
    for (lo, hi) in [(0, a), (a, a + b)] {
        for i in lo..hi {
            for j in i + 1..hi {
                arcs.push((i, j));
            }
        }
    }
    arcs.push((0, a));
    arcs
}

// ---------------------------------------------------------------------------
// Small flow instances and exhaustive planning

#[derive(Clone, Debug)]
pub struct FlowNode {
    pub kind: EntityKind,
    pub inventory: u64,
    /// Per-tick supply.
    pub supply: Vec<u64>,
    /// Per-tick demand (customers only).
    pub demand: Vec<u64>,
    pub lost_sales: bool,
}

#[derive(Clone, Debug)]
pub struct FlowEdge {
    pub src: usize,
    pub dst: usize,
    pub cost: f64,
    pub capacity: u64,
    pub transit: u64,
}

#[derive(Clone, Debug)]
pub struct FlowInstance {
    pub horizon: u64,
    pub nodes: Vec<FlowNode>,
    pub edges: Vec<FlowEdge>,
    pub rates: NodeRates,
}

impl FlowInstance {
    pub fn snapshot(&self) -> GraphSnapshot {
        let nodes = self.nodes.iter().enumerate().map(|(i, n)| {
            let mut node = EntityNode::new(node_id(i), n.kind).with_inventory(n.inventory);
            if n.kind == EntityKind::Customer {
                node = node.with_demand_rate(0);
            }
            if n.kind == EntityKind::Manufacturer {
                node = node.with_capacity(1000);
            }
            node
        });
        let edges = self.edges.iter().enumerate().map(|(k, e)| {
            EdgeRecord::material(
                edge_id(k),
                node_id(e.src),
                node_id(e.dst),
                WeightVector {
                    cost_per_unit: e.cost,
                    transit_time: e.transit,
                    capacity: e.capacity,
                    reliability: 1.0,
                    carbon_per_unit: 0.5,
                },
            )
        });
        GraphSnapshot::new(0, nodes, edges)
    }

    pub fn scenario(&self) -> Scenario {
        let mut s = Scenario::named("instance");
        for (i, n) in self.nodes.iter().enumerate() {
            s.supply.insert(node_id(i), Schedule::PerTick(n.supply.clone()));
            if n.kind == EntityKind::Customer {
                s.demand.insert(node_id(i), Schedule::PerTick(n.demand.clone()));
                if n.lost_sales {
                    s.lost_sales.insert(node_id(i));
                }
            }
        }
        s
    }

    /// Cost of the start-of-tick state at `t` plus this tick's decisions,
    /// followed by the transition. `None` when the flows are infeasible.
    fn transition(&self, t: u64, st: &RefState, flows: &[u64]) -> Option<(f64, RefState)> {
        let n = self.nodes.len();
        let r = self.rates;
        let mut cost = 0.0;
        for i in 0..n {
            cost += r.holding_rate * st.inventory[i] as f64 + r.backlog_rate * st.backlog[i] as f64;
            cost += r.action_rate * self.nodes[i].supply[t as usize] as f64;
        }
        let mut out = vec![0u64; n];
        for (k, e) in self.edges.iter().enumerate() {
            if flows[k] > e.capacity {
                return None;
            }
            out[e.src] += flows[k];
            cost += (e.cost + r.action_rate) * flows[k] as f64;
        }
        let mut next = RefState {
            inventory: vec![0; n],
            backlog: vec![0; n],
            pipeline: st.pipeline.clone(),
        };
        for (k, e) in self.edges.iter().enumerate() {
            if flows[k] > 0 {
                *next.pipeline.entry((t + e.transit, e.dst)).or_default() += flows[k];
            }
        }
        for i in 0..n {
            let available = st.inventory[i] + self.nodes[i].supply[t as usize];
            if out[i] > available {
                return None;
            }
            let mut remaining = available - out[i];
            if self.nodes[i].kind == EntityKind::Customer {
                let outstanding = st.backlog[i] + self.nodes[i].demand[t as usize];
                let consumed = remaining.min(outstanding);
                remaining -= consumed;
                next.backlog[i] = if self.nodes[i].lost_sales {
                    0
                } else {
                    outstanding - consumed
                };
            }
            next.inventory[i] = remaining + next.pipeline.remove(&(t + 1, i)).unwrap_or(0);
        }
        Some((cost, next))
    }

    fn initial(&self) -> RefState {
        RefState {
            inventory: self.nodes.iter().map(|n| n.inventory).collect(),
            backlog: vec![0; self.nodes.len()],
            pipeline: BTreeMap::new(),
        }
    }

    /// Cost of a complete flow schedule `flows[t][edge]`; `None` if any
    /// tick is infeasible.
    pub fn reference_cost(&self, flows: &[Vec<u64>]) -> Option<f64> {
        let mut st = self.initial();
        let mut total = 0.0;
        for t in 0..self.horizon {
            let (c, next) = self.transition(t, &st, &flows[t as usize])?;
            total += c;
            st = next;
        }
        Some(total)
    }

    /// Minimum cost over every feasible integer flow schedule. Each tick
    /// tries every flow vector within capacity and stock; identical
    /// subproblems are answered from a memo table.
    pub fn exhaustive_optimum(&self) -> f64 {
        let mut memo = HashMap::new();
        self.best_from(0, &self.initial(), &mut memo)
    }

    fn best_from(&self, t: u64, st: &RefState, memo: &mut HashMap<(u64, RefState), f64>) -> f64 {
        if t == self.horizon {
            return 0.0;
        }
        if let Some(&v) = memo.get(&(t, st.clone())) {
            return v;
        }
        let bounds: Vec<u64> = self
            .edges
            .iter()
            .map(|e| {
                e.capacity
                    .min(st.inventory[e.src] + self.nodes[e.src].supply[t as usize])
            })
            .collect();
        let mut best = f64::INFINITY;
        let mut flows = vec![0u64; self.edges.len()];
        loop {
            if let Some((c, next)) = self.transition(t, st, &flows) {
                let v = c + self.best_from(t + 1, &next, memo);
                if v < best {
                    best = v;
                }
            }
            let mut k = 0;
            loop {
                if k == flows.len() {
                    memo.insert((t, st.clone()), best);
                    return best;
                }
                if flows[k] < bounds[k] {
                    flows[k] += 1;
                    break;
                }
                flows[k] = 0;
                k += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct RefState {
    inventory: Vec<u64>,
    backlog: Vec<u64>,
    pipeline: BTreeMap<(u64, usize), u64>,
}

/// The topologies of the exhaustive sweep, as `(kinds, arcs)`.
pub fn sweep_topologies() -> Vec<(Vec<EntityKind>, Vec<(usize, usize)>)> {
    use EntityKind::*;
    vec![
        (vec![Supplier, Customer], vec![(0, 1)]),
        (vec![Supplier, Customer], vec![(0, 1), (0, 1)]),
        (vec![Supplier, Warehouse, Customer], vec![(0, 1), (1, 2)]),
        (vec![Supplier, Warehouse, Customer], vec![(0, 1), (1, 2), (0, 2)]),
        (
            vec![Supplier, Warehouse, Distributor, Customer],
            vec![(0, 1), (0, 2), (1, 3), (2, 3)],
        ),
        (
            vec![Supplier, Warehouse, Customer, Customer],
            vec![(0, 1), (1, 2), (1, 3)],
        ),
        (
            vec![Supplier, Supplier, Warehouse, Customer],
            vec![(0, 2), (1, 2), (2, 3)],
        ),
        (
            vec![Warehouse, Warehouse, Customer],
            vec![(0, 1), (1, 0), (0, 2), (1, 2)],
        ),
        (
            vec![Supplier, Manufacturer, Warehouse, Customer],
            vec![(0, 1), (1, 2), (2, 3), (1, 3)],
        ),
    ]
}

/// Every instance of the exhaustive sweep: each topology for horizons 1 to
/// 3, capacities 0 to 4 (uniform or staggered), transit 1 or 2 on the first
/// edge, backlogged or lost sales, and two cost models.
pub fn exhaustive_sweep() -> Vec<FlowInstance> {
    let mut out = Vec::new();
    for (kinds, arcs) in sweep_topologies() {
        for horizon in 1..=3u64 {
            for cap in 0..=4u64 {
                for staggered in [false, true] {
                    for slow_first in [false, true] {
                        for lost in [false, true] {
                            for action in [0.0, 0.5] {
                                out.push(sweep_instance(
                                    &kinds, &arcs, horizon, cap, staggered, slow_first, lost, action,
                                ));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn sweep_instance(
    kinds: &[EntityKind],
    arcs: &[(usize, usize)],
    horizon: u64,
    cap: u64,
    staggered: bool,
    slow_first: bool,
    lost: bool,
    action: f64,
) -> FlowInstance {
    let t = horizon as usize;
    let nodes = kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| FlowNode {
            kind,
            inventory: match kind {
                EntityKind::Supplier => 2,
                EntityKind::Customer => 0,
                _ => (i as u64) % 2,
            },
            supply: (0..t)
                .map(|k| {
                    if kind == EntityKind::Supplier {
                        (k as u64 + i as u64) % 2
                    } else {
                        0
                    }
                })
                .collect(),
            demand: (0..t)
                .map(|k| if kind == EntityKind::Customer { [1, 2, 1][k] } else { 0 })
                .collect(),
            lost_sales: lost && kind == EntityKind::Customer,
        })
        .collect();
    let edges = arcs
        .iter()
        .enumerate()
        .map(|(k, &(src, dst))| FlowEdge {
            src,
            dst,
            cost: [0.5, 1.0, 1.5, 0.0][k % 4],
            capacity: if staggered { (cap + k as u64) % 5 } else { cap },
            transit: if slow_first && k == 0 { 2 } else { 1 },
        })
        .collect();
    FlowInstance {
        horizon,
        nodes,
        edges,
        rates: NodeRates {
            holding_rate: 1.0,
            backlog_rate: 5.0,
            action_rate: action,
        },
    }
}

/// Random layered supply network with dyadic costs so every objective is
/// exact in floating point.
pub fn random_instance(r: &mut ChaCha8Rng, max_nodes: usize, max_horizon: u64) -> FlowInstance {
    let n = r.random_range(2..=max_nodes.max(2));
    let horizon = r.random_range(1..=max_horizon);
    let t = horizon as usize;
    let customers = r.random_range(1..=(n / 2).max(1));
    let mut kinds = vec![EntityKind::Supplier];
    for i in 1..n {
        kinds.push(if i >= n - customers {
            EntityKind::Customer
        } else if r.random_bool(0.5) {
            EntityKind::Warehouse
        } else {
            EntityKind::Distributor
        });
    }
    let nodes = kinds
        .iter()
        .map(|&kind| FlowNode {
            kind,
            inventory: if kind == EntityKind::Customer {
                0
            } else {
                r.random_range(0..=6)
            },
            supply: (0..t)
                .map(|_| {
                    if kind == EntityKind::Supplier {
                        r.random_range(0..=4)
                    } else {
                        0
                    }
                })
                .collect(),
            demand: (0..t)
                .map(|_| {
                    if kind == EntityKind::Customer {
                        r.random_range(0..=3)
                    } else {
                        0
                    }
                })
                .collect(),
            lost_sales: kind == EntityKind::Customer && r.random_bool(0.2),
        })
        .collect();
    let mut edges = Vec::new();
    for dst in 1..n {
        let src = r.random_range(0..dst.min(n - customers).max(1));
        edges.push(random_edge(r, src, dst));
    }
    for _ in 0..r.random_range(0..=n) {
        let a = r.random_range(0..n);
        let b = r.random_range(0..n);
        if a != b && kinds[a] != EntityKind::Customer {
            edges.push(random_edge(r, a, b));
        }
    }
    FlowInstance {
        horizon,
        nodes,
        edges,
        rates: NodeRates {
            holding_rate: [0.25, 0.5, 1.0][r.random_range(0..3)],
            backlog_rate: [2.0, 5.0, 8.0][r.random_range(0..3)],
            action_rate: [0.0, 0.25][r.random_range(0..2)],
        },
    }
}

fn random_edge(r: &mut ChaCha8Rng, src: usize, dst: usize) -> FlowEdge {
    FlowEdge {
        src,
        dst,
        cost: r.random_range(0..=8) as f64 * 0.25,
        capacity: r.random_range(0..=6),
        transit: r.random_range(1..=3),
    }
}

/// Random deterministic disturbances: outages and capacity halving.
pub fn random_disruptions(r: &mut ChaCha8Rng, inst: &FlowInstance, scenario: &mut Scenario) {
    for _ in 0..r.random_range(0..=2) {
        let from = r.random_range(0..inst.horizon);
        let until = r.random_range(from + 1..=inst.horizon);
        let d = match r.random_range(0..3) {
            0 if !inst.edges.is_empty() => {
                Disturbance::edge_outage(edge_id(r.random_range(0..inst.edges.len())), from, until)
            }
            1 => Disturbance::node_outage(node_id(r.random_range(0..inst.nodes.len())), from, until),
            _ if !inst.edges.is_empty() => Disturbance::capacity_scale(
                Target::edge(edge_id(r.random_range(0..inst.edges.len()))),
                from,
                until,
                0.5,
            ),
            _ => continue,
        };
        scenario.disturbances.push(d);
    }
}

// ---------------------------------------------------------------------------
// Feedback loop

/// Closed predict/observe/recalibrate loop over `edges` parallel edges whose
/// true transit time is `truth` while the twin starts at `belief`. Entry `k`
/// is the mean absolute prediction error of the cycle that follows `k`
/// recalibrations.
pub fn feedback_errors(truth: f64, belief: u64, alpha: f64, cycles: usize, edges: usize) -> Vec<f64> {
    use chaintwin_core::feedback::{CalibrationConfig, CalibrationState, NewPrediction, PredictionStore};
    use chaintwin_core::ingestion::{CleanRecord, SubjectKind};
    use chaintwin_core::{Provenance, SourceKind, Timeline};

    let mut tl = Timeline::new();
    tl.add_node(0, EntityNode::new("A", EntityKind::Warehouse)).unwrap();
    tl.add_node(0, EntityNode::new("B", EntityKind::Distributor)).unwrap();
    for e in 0..edges {
        let w = WeightVector {
            transit_time: belief,
            capacity: 10,
            ..WeightVector::default()
        };
        tl.add_edge(0, EdgeRecord::material(edge_id(e), "A", "B", w)).unwrap();
    }
    let mut cal = CalibrationState::new(CalibrationConfig {
        alpha,
        ..CalibrationConfig::default()
    });
    let mut store = PredictionStore::new();
    let mut errors = Vec::with_capacity(cycles);
    for c in 0..cycles as u64 {
        let target = c + 1;
        let mut observations = Vec::new();
        let mut error = 0.0;
        for e in 0..edges {
            let subject = edge_id(e).as_str().to_string();
            let predicted = cal.predict(&tl, &subject, "transit_time").unwrap();
            error += (predicted - truth).abs();
            store
                .record_prediction(NewPrediction {
                    issued_tick: c,
                    target_tick: target,
                    subject: subject.clone(),
                    measure: "transit_time".into(),
                    predicted,
                    provenance: format!("cycle-{c}"),
                })
                .unwrap();
            observations.push(CleanRecord {
                subject: subject.clone(),
                subject_kind: SubjectKind::Edge,
                measure: "transit_time".into(),
                value: truth,
                observed_tick: target,
                provenance: Provenance {
                    source: SourceKind::Logistics,
                    source_event_id: format!("{subject}-{target}"),
                },
                imputed: false,
                imputation: None,
            });
        }
        errors.push(error / edges as f64);
        let found = store.reconcile(&observations, &cal.config.tolerances);
        assert_eq!(found.len(), edges);
        cal.recalibrate(&mut tl, &found, target).unwrap();
    }
    errors
}
