use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::mcf::{FlowNetwork, McfFailure, INF};
use super::OptimizerError;
use crate::graph::{EdgeId, EntityKind, GraphSnapshot, LayerKind, NodeId, Tick, Units};
use crate::simulation::{CostModel, Scenario};

/// A vertex of the time-expanded network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TenNode {
    /// Stock at `node` available during `tick` (on hand plus supply).
    Stock { node: NodeId, tick: Tick },
    /// Demand of `customer` raised at `tick`.
    Demand { customer: NodeId, tick: Tick },
    /// Everything left at the end of the horizon, and unmet demand.
    Balance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArcKind {
    /// Shipment over a material edge sent at `tick`.
    Movement { edge: EdgeId, tick: Tick },
    /// Stock carried from `tick` to `tick + 1`.
    Holding { node: NodeId, tick: Tick },
    /// Demand served at `tick`.
    Consume { customer: NodeId, tick: Tick },
    /// Demand carried from `tick` to `tick + 1`.
    Backlog { customer: NodeId, tick: Tick },
    /// Demand dropped at `tick` (lost-sales customers).
    Lost { customer: NodeId, tick: Tick },
    /// Stock left at the horizon.
    Final { node: NodeId },
    /// Backlog left at the horizon.
    Open { customer: NodeId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TenArc {
    pub from: usize,
    pub to: usize,
    /// `None` is unbounded.
    pub capacity: Option<Units>,
    pub cost: f64,
    pub kind: ArcKind,
}

/// Layered copy of the material network for ticks `0..=T`.
///
/// A flow in this network is a plan: stock at `(i, t)` either ships over a
/// movement arc to `(j, t + d)`, is held to `(i, t + 1)`, or (at a customer)
/// serves the demand vertex of tick `t`. Demand vertices are chained
/// backwards so that serving demand late costs the backlog rate per tick.
/// The balance vertex absorbs what is left at the horizon and supplies
/// whatever demand is never met. Prices follow the simulation's cost
/// functional: holding of `x(t)` is charged on the arcs entering `(i, t)`
/// for `1 ≤ t ≤ T − 1`, and everything fixed by the scenario goes into
/// [`TimeExpandedNetwork::constant`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeExpandedNetwork {
    pub horizon: Tick,
    pub nodes: Vec<TenNode>,
    pub arcs: Vec<TenArc>,
    /// Net supply of each vertex; sums to zero.
    pub supply: Vec<i64>,
    /// Cost terms that no decision can change.
    pub constant: f64,
    pub(crate) snapshot: GraphSnapshot,
    pub(crate) scenario: Scenario,
    pub(crate) cost: CostModel,
}

impl TimeExpandedNetwork {
    pub fn count(&self, pred: impl Fn(&ArcKind) -> bool) -> usize {
        self.arcs.iter().filter(|a| pred(&a.kind)).count()
    }

    pub fn movement_arcs(&self) -> usize {
        self.count(|k| matches!(k, ArcKind::Movement { .. }))
    }

    pub fn holding_arcs(&self) -> usize {
        self.count(|k| matches!(k, ArcKind::Holding { .. }))
    }

    /// Σ_t Σ_i s_i(t) hooked into the network.
    pub fn scheduled_supply(&self) -> Units {
        self.snapshot
            .node_ids()
            .map(|id| {
                (0..self.horizon)
                    .map(|t| self.scenario.realized_supply(&self.snapshot, id, t))
                    .sum::<Units>()
            })
            .sum()
    }

    pub fn snapshot(&self) -> &GraphSnapshot {
        &self.snapshot
    }

    /// The noise-free scenario the network was built from.
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn cost_model(&self) -> &CostModel {
        &self.cost
    }

    /// Solves for a min-cost flow; returns per-arc flows and the objective
    /// including [`TimeExpandedNetwork::constant`].
    pub(crate) fn solve(&self) -> Result<(Vec<Units>, f64), OptimizerError> {
        let mut g = FlowNetwork::new(self.nodes.len());
        for a in &self.arcs {
            g.add_arc(a.from, a.to, a.capacity.unwrap_or(INF), a.cost);
        }
        let cost = g.solve(&self.supply).map_err(|e| match e {
            McfFailure::NegativeCycle(arcs) => OptimizerError::UnboundedNegativeCycle(
                arcs.into_iter()
                    .filter(|&k| k < self.arcs.len())
                    .map(|k| self.describe(k))
                    .collect(),
            ),
            McfFailure::Unrouted(routed) => OptimizerError::Infeasible(format!("only {routed} units could be routed")),
        })?;
        let flows = (0..self.arcs.len()).map(|k| g.flow(k)).collect();
        Ok((flows, cost + self.constant))
    }

    fn describe(&self, arc: usize) -> String {
        format!("{:?}", self.arcs[arc].kind)
    }
}

struct Builder {
    nodes: Vec<TenNode>,
    arcs: Vec<TenArc>,
    index: BTreeMap<(u8, NodeId, Tick), usize>,
}

impl Builder {
    fn vertex(&mut self, node: TenNode) -> usize {
        let key = match &node {
            TenNode::Stock { node, tick } => (0, node.clone(), *tick),
            TenNode::Demand { customer, tick } => (1, customer.clone(), *tick),
            TenNode::Balance => (2, NodeId::from(""), 0),
        };
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.nodes.push(node);
        self.index.insert(key, self.nodes.len() - 1);
        self.nodes.len() - 1
    }

    fn stock(&self, node: &NodeId, tick: Tick) -> usize {
        self.index[&(0, node.clone(), tick)]
    }

    fn demand(&self, customer: &NodeId, tick: Tick) -> usize {
        self.index[&(1, customer.clone(), tick)]
    }

    fn arc(&mut self, from: usize, to: usize, capacity: Option<Units>, cost: f64, kind: ArcKind) {
        self.arcs.push(TenArc {
            from,
            to,
            capacity,
            cost,
            kind,
        });
    }
}

/// Builds the network for the noise-free projection of `scenario`.
pub fn build_time_expanded(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    horizon: Tick,
    cost: &CostModel,
) -> Result<TimeExpandedNetwork, OptimizerError> {
    if horizon == 0 {
        return Err(OptimizerError::ZeroHorizon);
    }
    if snapshot.edges_in(LayerKind::Material.into()).next().is_none() {
        return Err(OptimizerError::EmptyMaterialLayer);
    }
    cost.validate()?;
    scenario.validate(snapshot, horizon)?;
    let scenario = scenario.without_noise();
    let t_end = horizon;
    let priced = |t: Tick| t < t_end;

    let mut b = Builder {
        nodes: Vec::new(),
        arcs: Vec::new(),
        index: BTreeMap::new(),
    };
    let customers: Vec<&NodeId> = snapshot.nodes_of_kind(EntityKind::Customer).map(|n| &n.id).collect();
    for id in snapshot.node_ids() {
        for t in 0..=t_end {
            b.vertex(TenNode::Stock {
                node: id.clone(),
                tick: t,
            });
        }
    }
    for &c in &customers {
        for t in 0..=t_end {
            b.vertex(TenNode::Demand {
                customer: c.clone(),
                tick: t,
            });
        }
    }
    let balance = b.vertex(TenNode::Balance);

    for e in snapshot.edges_in(LayerKind::Material.into()) {
        let d = e.weights.transit_time.max(1);
        let action = cost.rates(&e.src).action_rate;
        for t in 0..t_end {
            let arrive = t + d;
            let (to, hold) = if arrive <= t_end {
                let h = if priced(arrive) {
                    cost.rates(&e.dst).holding_rate
                } else {
                    0.0
                };
                (b.stock(&e.dst, arrive), h)
            } else {
                (balance, 0.0)
            };
            let cap = scenario.effective_capacity(e, e.weights.capacity, t);
            let from = b.stock(&e.src, t);
            b.arc(
                from,
                to,
                Some(cap),
                e.weights.cost_per_unit + action + hold,
                ArcKind::Movement {
                    edge: e.id.clone(),
                    tick: t,
                },
            );
        }
    }
    for id in snapshot.node_ids() {
        let holding = cost.rates(id).holding_rate;
        for t in 0..t_end {
            let h = if priced(t + 1) { holding } else { 0.0 };
            let (from, to) = (b.stock(id, t), b.stock(id, t + 1));
            b.arc(
                from,
                to,
                None,
                h,
                ArcKind::Holding {
                    node: id.clone(),
                    tick: t,
                },
            );
        }
        let last = b.stock(id, t_end);
        b.arc(last, balance, None, 0.0, ArcKind::Final { node: id.clone() });
    }
    for &c in &customers {
        let rate = cost.rates(c).backlog_rate;
        let lost = scenario.is_lost_sales(c);
        for t in 0..t_end {
            let (from, to) = (b.stock(c, t), b.demand(c, t));
            b.arc(
                from,
                to,
                None,
                0.0,
                ArcKind::Consume {
                    customer: c.clone(),
                    tick: t,
                },
            );
            if lost {
                b.arc(
                    balance,
                    to,
                    None,
                    0.0,
                    ArcKind::Lost {
                        customer: c.clone(),
                        tick: t,
                    },
                );
            } else {
                let h = if priced(t + 1) { rate } else { 0.0 };
                let later = b.demand(c, t + 1);
                b.arc(
                    later,
                    to,
                    None,
                    h,
                    ArcKind::Backlog {
                        customer: c.clone(),
                        tick: t,
                    },
                );
            }
        }
        if !lost {
            let end = b.demand(c, t_end);
            b.arc(balance, end, None, 0.0, ArcKind::Open { customer: c.clone() });
        }
    }

    let mut supply = alloc::vec![0i64; b.nodes.len()];
    let mut constant = 0.0;
    let mut total: i64 = 0;
    for node in snapshot.nodes() {
        let id = &node.id;
        let rates = cost.rates(id);
        let i0 = scenario.initial_inventory_of(snapshot, id);
        let b0 = node.state.backlog;
        constant += rates.holding_rate * i0 as f64;
        if node.kind == EntityKind::Customer {
            constant += rates.backlog_rate * b0 as f64;
            supply[b.demand(id, 0)] -= b0 as i64;
            total -= b0 as i64;
        } else {
            // Non-customer backlog is never served and is charged each tick.
            constant += rates.backlog_rate * b0 as f64 * horizon as f64;
        }
        supply[b.stock(id, 0)] += i0 as i64;
        total += i0 as i64;
        for t in 0..t_end {
            let s = scenario.realized_supply(snapshot, id, t);
            constant += rates.action_rate * s as f64;
            supply[b.stock(id, t)] += s as i64;
            total += s as i64;
            if node.kind == EntityKind::Customer {
                let d = scenario.demand_at(snapshot, id, t);
                supply[b.demand(id, t)] -= d as i64;
                total -= d as i64;
            }
        }
    }
    supply[balance] -= total;

    Ok(TimeExpandedNetwork {
        horizon,
        nodes: b.nodes,
        arcs: b.arcs,
        supply,
        constant,
        snapshot: snapshot.clone(),
        scenario,
        cost: cost.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EdgeRecord, EntityNode, WeightVector};
    use crate::simulation::{Disturbance, Schedule};

    fn pair() -> GraphSnapshot {
        let w = WeightVector {
            transit_time: 1,
            capacity: 4,
            cost_per_unit: 1.0,
            ..WeightVector::default()
        };
        GraphSnapshot::new(
            0,
            [
                EntityNode::new("A", EntityKind::Warehouse).with_inventory(3),
                EntityNode::new("B", EntityKind::Warehouse),
            ],
            [EdgeRecord::material("AB", "A", "B", w)],
        )
    }

    #[test]
    fn arc_counts() {
        let n = build_time_expanded(&pair(), &Scenario::named("s"), 2, &CostModel::default()).unwrap();
        assert_eq!(n.movement_arcs(), 2);
        assert_eq!(n.holding_arcs(), 4);
        assert_eq!(n.supply.iter().sum::<i64>(), 0);
    }

    #[test]
    fn outage_zeroes_that_ticks_arc() {
        let sc = Scenario::named("s").with_disturbance(Disturbance::edge_outage("AB", 1, 2));
        let n = build_time_expanded(&pair(), &sc, 3, &CostModel::default()).unwrap();
        let caps: Vec<_> = n
            .arcs
            .iter()
            .filter_map(|a| match a.kind {
                ArcKind::Movement { tick, .. } => Some((tick, a.capacity)),
                _ => None,
            })
            .collect();
        assert_eq!(caps, [(0, Some(4)), (1, Some(0)), (2, Some(4))]);
    }

    #[test]
    fn supply_hookup_matches_schedule() {
        let sc = Scenario::named("s").with_supply("A", Schedule::PerTick(alloc::vec![2, 0, 5]));
        let n = build_time_expanded(&pair(), &sc, 3, &CostModel::default()).unwrap();
        assert_eq!(n.scheduled_supply(), 7);
    }

    #[test]
    fn refuses_degenerate_inputs() {
        let sc = Scenario::named("s");
        assert_eq!(
            build_time_expanded(&pair(), &sc, 0, &CostModel::default()),
            Err(OptimizerError::ZeroHorizon)
        );
        let lone = GraphSnapshot::new(0, [EntityNode::new("A", EntityKind::Warehouse)], []);
        assert_eq!(
            build_time_expanded(&lone, &sc, 2, &CostModel::default()),
            Err(OptimizerError::EmptyMaterialLayer)
        );
    }
}
