use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    ControlAction, ControlKind, FlowAssignment, PlanViolation, Scenario, SimState, ViolationReason, WeightUpdate,
};
use crate::graph::{EdgeId, EntityKind, GraphSnapshot, LayerKind, NodeId, Tick, Units};
use crate::optimizer::FlowPlan;

/// What a policy sees when deciding a tick.
#[derive(Clone, Copy, Debug)]
pub struct PolicyContext<'a> {
    pub tick: Tick,
    pub snapshot: &'a GraphSnapshot,
    pub scenario: &'a Scenario,
    pub state: &'a SimState,
    pub weights: &'a WeightUpdate,
}

impl PolicyContext<'_> {
    pub fn available(&self, node: &NodeId) -> Units {
        self.state.available(self.snapshot, self.scenario, node)
    }

    fn stock(&self) -> BTreeMap<NodeId, Units> {
        self.snapshot
            .node_ids()
            .map(|id| (id.clone(), self.available(id)))
            .collect()
    }

    fn residual(&self) -> BTreeMap<EdgeId, Units> {
        self.snapshot
            .edges_in(LayerKind::Material.into())
            .map(|e| (e.id.clone(), self.weights.capacity(&e.id)))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Decision {
    pub flows: Vec<FlowAssignment>,
    pub controls: Vec<ControlAction>,
    pub violations: Vec<PlanViolation>,
}

impl Decision {
    fn from_shipped(tick: Tick, snapshot: &GraphSnapshot, shipped: BTreeMap<EdgeId, Units>) -> Self {
        let mut orders: BTreeMap<NodeId, Units> = BTreeMap::new();
        let mut flows = Vec::new();
        for (edge, quantity) in shipped {
            if quantity == 0 {
                continue;
            }
            let src = &snapshot.edge(&edge).expect("shipped on known edge").src;
            *orders.entry(src.clone()).or_default() += quantity;
            flows.push(FlowAssignment { edge, tick, quantity });
        }
        let controls = orders
            .into_iter()
            .map(|(node, quantity)| ControlAction {
                node,
                tick,
                kind: ControlKind::Order,
                quantity,
            })
            .collect();
        Decision {
            flows,
            controls,
            violations: Vec::new(),
        }
    }
}

/// Chooses flows f_ij(t) and control actions u_i(t) for each tick.
pub trait FlowPolicy {
    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Decision;
}

/// How a run chooses its flows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "plan", rename_all = "snake_case")]
pub enum PolicySpec {
    Greedy,
    Fixed(FlowPlan),
}

impl PolicySpec {
    pub fn build(&self) -> Box<dyn FlowPolicy> {
        match self {
            PolicySpec::Greedy => Box::new(GreedyPolicy::default()),
            PolicySpec::Fixed(plan) => Box::new(FixedPlanPolicy::new(plan.clone())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Earmarked {
    arrival: Tick,
    dst: NodeId,
    customer: NodeId,
    quantity: Units,
}

/// Ships toward unmet customer demand along the cheapest edge with spare
/// capacity, recomputed every tick. Units sent toward a customer stay
/// earmarked for it at intermediate nodes and are forwarded on later ticks.
///
/// Ties between equally cheap routes go to the smaller node id for the
/// source and the smaller edge id for each hop.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GreedyPolicy {
    /// `(holder, customer) → units` parked at an intermediate node.
    held: BTreeMap<(NodeId, NodeId), Units>,
    moving: Vec<Earmarked>,
}

struct Routes {
    dist: BTreeMap<NodeId, f64>,
    next_hop: BTreeMap<NodeId, EdgeId>,
}

/// Cheapest cost-per-unit route from every node to `target` over material
/// edges that still have residual capacity.
fn routes_to(ctx: &PolicyContext<'_>, target: &NodeId, residual: &BTreeMap<EdgeId, Units>) -> Routes {
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut next_hop: BTreeMap<NodeId, EdgeId> = BTreeMap::new();
    let mut done: BTreeMap<NodeId, ()> = BTreeMap::new();
    dist.insert(target.clone(), 0.0);
    while let Some((v, dv)) = dist
        .iter()
        .filter(|(n, _)| !done.contains_key(*n))
        .min_by(|a, b| a.1.total_cmp(b.1).then_with(|| a.0.cmp(b.0)))
        .map(|(n, d)| (n.clone(), *d))
    {
        done.insert(v.clone(), ());
        for e in ctx.snapshot.in_edges(&v, LayerKind::Material) {
            if residual.get(&e.id).copied().unwrap_or(0) == 0 || done.contains_key(&e.src) {
                continue;
            }
            let cost = ctx
                .weights
                .effective
                .get(&e.id)
                .map_or(e.weights.cost_per_unit, |w| w.cost_per_unit);
            let nd = dv + cost;
            let better = match dist.get(&e.src) {
                None => true,
                Some(&cur) => nd < cur || (nd == cur && next_hop.get(&e.src).is_some_and(|h| e.id < *h)),
            };
            if better {
                dist.insert(e.src.clone(), nd);
                next_hop.insert(e.src.clone(), e.id.clone());
            }
        }
    }
    Routes { dist, next_hop }
}

impl GreedyPolicy {
    fn held_at(&self, holder: &NodeId) -> Units {
        self.held.iter().filter(|((h, _), _)| h == holder).map(|(_, q)| q).sum()
    }

    fn pipeline(&self, customer: &NodeId) -> Units {
        let held: Units = self
            .held
            .iter()
            .filter(|((_, c), _)| c == customer)
            .map(|(_, q)| q)
            .sum();
        let moving: Units = self
            .moving
            .iter()
            .filter(|m| &m.customer == customer)
            .map(|m| m.quantity)
            .sum();
        held + moving
    }

    #[allow(clippy::too_many_arguments)]
    fn ship(
        &mut self,
        ctx: &PolicyContext<'_>,
        edge: &EdgeId,
        quantity: Units,
        customer: &NodeId,
        residual: &mut BTreeMap<EdgeId, Units>,
        shipped: &mut BTreeMap<EdgeId, Units>,
        stock: &mut BTreeMap<NodeId, Units>,
    ) {
        let record = ctx.snapshot.edge(edge).expect("route uses known edges");
        let transit = ctx
            .weights
            .effective
            .get(edge)
            .map_or(record.weights.transit_time, |w| w.transit_time)
            .max(1);
        *residual.get_mut(edge).expect("material edge") -= quantity;
        *stock.get_mut(&record.src).expect("known node") -= quantity;
        *shipped.entry(edge.clone()).or_default() += quantity;
        self.moving.push(Earmarked {
            arrival: ctx.tick + transit,
            dst: record.dst.clone(),
            customer: customer.clone(),
            quantity,
        });
    }
}

impl FlowPolicy for GreedyPolicy {
    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Decision {
        let t = ctx.tick;
        let (landed, moving): (Vec<_>, Vec<_>) = self.moving.drain(..).partition(|m| m.arrival <= t);
        self.moving = moving;
        for m in landed {
            if m.dst != m.customer {
                *self.held.entry((m.dst, m.customer)).or_default() += m.quantity;
            }
        }

        let mut stock = ctx.stock();
        // Noise can remove earmarked units; never hold more than is on hand.
        let mut budget = stock.clone();
        for ((holder, _), q) in self.held.iter_mut() {
            let b = budget.get_mut(holder).expect("holder is a known node");
            *q = (*q).min(*b);
            *b -= *q;
        }
        self.held.retain(|_, q| *q > 0);

        let mut residual = ctx.residual();
        let mut shipped: BTreeMap<EdgeId, Units> = BTreeMap::new();

        let keys: Vec<(NodeId, NodeId)> = self.held.keys().cloned().collect();
        for key in keys {
            let (holder, customer) = &key;
            let routes = routes_to(ctx, customer, &residual);
            let Some(edge) = routes.next_hop.get(holder).cloned() else {
                continue;
            };
            let q = self.held[&key].min(residual[&edge]).min(stock[holder]);
            if q == 0 {
                continue;
            }
            *self.held.get_mut(&key).expect("key present") -= q;
            self.ship(ctx, &edge, q, customer, &mut residual, &mut shipped, &mut stock);
        }
        self.held.retain(|_, q| *q > 0);

        let customers: Vec<NodeId> = ctx
            .snapshot
            .nodes_of_kind(EntityKind::Customer)
            .map(|n| n.id.clone())
            .collect();
        for customer in &customers {
            let wanted = ctx.state.backlog(customer) + ctx.scenario.demand_at(ctx.snapshot, customer, t);
            let covered = ctx.available(customer) + self.pipeline(customer);
            let mut need = wanted.saturating_sub(covered);
            while need > 0 {
                let routes = routes_to(ctx, customer, &residual);
                let source = routes
                    .dist
                    .iter()
                    .filter(|(n, _)| *n != customer && routes.next_hop.contains_key(*n))
                    .filter(|(n, _)| {
                        ctx.snapshot.node(n).is_some_and(|x| x.kind != EntityKind::Customer)
                            && stock[*n] > self.held_at(n)
                    })
                    .min_by(|a, b| a.1.total_cmp(b.1).then_with(|| a.0.cmp(b.0)))
                    .map(|(n, _)| n.clone());
                let Some(source) = source else {
                    break;
                };
                let edge = routes.next_hop[&source].clone();
                let free = stock[&source] - self.held_at(&source);
                let q = need.min(free).min(residual[&edge]);
                self.ship(ctx, &edge, q, customer, &mut residual, &mut shipped, &mut stock);
                need -= q;
            }
        }

        Decision::from_shipped(t, ctx.snapshot, shipped)
    }
}

/// Replays a precomputed plan, clipping flows that no longer fit the
/// effective capacity or the stock on hand and reporting each clip.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPlanPolicy {
    by_tick: BTreeMap<Tick, Vec<FlowAssignment>>,
}

impl FixedPlanPolicy {
    pub fn new(plan: FlowPlan) -> Self {
        let mut by_tick: BTreeMap<Tick, Vec<FlowAssignment>> = BTreeMap::new();
        for tick in plan.ticks {
            by_tick.entry(tick.tick).or_default().extend(tick.flows);
        }
        for flows in by_tick.values_mut() {
            flows.sort();
        }
        Self { by_tick }
    }
}

impl FlowPolicy for FixedPlanPolicy {
    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Decision {
        let t = ctx.tick;
        let mut stock = ctx.stock();
        let mut residual = ctx.residual();
        let mut shipped: BTreeMap<EdgeId, Units> = BTreeMap::new();
        let mut violations = Vec::new();
        for f in self.by_tick.get(&t).into_iter().flatten() {
            let Some(edge) = ctx.snapshot.edge(&f.edge).filter(|e| e.layer == LayerKind::Material) else {
                violations.push(PlanViolation {
                    edge: f.edge.clone(),
                    tick: t,
                    planned: f.quantity,
                    applied: 0,
                    reason: ViolationReason::UnknownEdge,
                });
                continue;
            };
            let cap = residual[&f.edge];
            let have = stock[&edge.src];
            let q = f.quantity.min(cap).min(have);
            if q < f.quantity {
                violations.push(PlanViolation {
                    edge: f.edge.clone(),
                    tick: t,
                    planned: f.quantity,
                    applied: q,
                    reason: if cap < f.quantity {
                        ViolationReason::Capacity
                    } else {
                        ViolationReason::Stock
                    },
                });
            }
            *residual.get_mut(&f.edge).expect("material edge") -= q;
            *stock.get_mut(&edge.src).expect("known node") -= q;
            *shipped.entry(f.edge.clone()).or_default() += q;
        }
        let mut d = Decision::from_shipped(t, ctx.snapshot, shipped);
        d.violations = violations;
        d
    }
}
