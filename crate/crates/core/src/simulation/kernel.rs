use alloc::collections::{BTreeMap, VecDeque};
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{
    ActiveDisturbance, ControlAction, ControlKind, DisturbanceKind, FlowAssignment, Fulfillment, NodeTick, NoiseSource,
    RuleSet, Scenario, Shipment, SimError, Target, TickRecord, UpdateContext, WeightUpdate,
};
use crate::graph::{EdgeId, EntityKind, GraphSnapshot, LayerKind, NodeId, StateVector, Tick, Units};

/// Mutable simulation state between ticks.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub tick: Tick,
    pub nodes: BTreeMap<NodeId, StateVector>,
    /// Shipments keyed by the tick at which they are credited.
    pub in_transit: BTreeMap<Tick, Vec<Shipment>>,
    /// Outstanding customer demand as `(ordered tick, units)`, oldest first.
    orders: BTreeMap<NodeId, VecDeque<(Tick, Units)>>,
}

impl SimState {
    pub fn initial(snapshot: &GraphSnapshot, scenario: &Scenario) -> Self {
        let mut nodes = BTreeMap::new();
        let mut orders = BTreeMap::new();
        for node in snapshot.nodes() {
            let mut state = node.state.clone();
            state.inventory = scenario.initial_inventory_of(snapshot, &node.id);
            state.throughput_used = 0;
            if node.kind == EntityKind::Customer {
                let mut q = VecDeque::new();
                if state.backlog > 0 {
                    q.push_back((0, state.backlog));
                }
                orders.insert(node.id.clone(), q);
            }
            nodes.insert(node.id.clone(), state);
        }
        Self {
            tick: 0,
            nodes,
            in_transit: BTreeMap::new(),
            orders,
        }
    }

    pub fn inventory(&self, node: &NodeId) -> Units {
        self.nodes.get(node).map_or(0, |s| s.inventory)
    }

    pub fn backlog(&self, node: &NodeId) -> Units {
        self.nodes.get(node).map_or(0, |s| s.backlog)
    }

    /// Units on hand plus realized supply of the current tick: what the node
    /// can ship or consume now.
    pub fn available(&self, snapshot: &GraphSnapshot, scenario: &Scenario, node: &NodeId) -> Units {
        self.inventory(node) + scenario.realized_supply(snapshot, node, self.tick)
    }

    pub fn in_transit_units(&self) -> Units {
        self.in_transit.values().flatten().map(|s| s.quantity).sum()
    }

    pub fn shipments(&self) -> impl Iterator<Item = &Shipment> {
        self.in_transit.values().flatten()
    }
}

/// Advances `state` by one tick.
///
/// All inputs are validated before anything is mutated, so on error the
/// state is unchanged. Flows must be dated `state.tick`, travel on material
/// edges and fit the effective capacity in `weights`; a node cannot ship
/// more than it has on hand plus its realized supply.
#[allow(clippy::too_many_arguments)]
pub fn step(
    snapshot: &GraphSnapshot,
    state: &mut SimState,
    flows: &[FlowAssignment],
    controls: &[ControlAction],
    scenario: &Scenario,
    weights: &WeightUpdate,
    noise: &NoiseSource,
    rules: RuleSet<'_>,
) -> Result<TickRecord, SimError> {
    let t = state.tick;

    for c in controls {
        if !snapshot.contains_node(&c.node) {
            return Err(SimError::UnknownElement(c.node.0.clone()));
        }
        if c.kind == ControlKind::Produce {
            return Err(SimError::InvalidControl {
                node: c.node.clone(),
                reason: "production follows the supply schedule".to_string(),
            });
        }
        if c.tick != t {
            return Err(SimError::InvalidControl {
                node: c.node.clone(),
                reason: format!("dated tick {} during tick {t}", c.tick),
            });
        }
    }

    let mut per_edge: BTreeMap<&EdgeId, Units> = BTreeMap::new();
    for f in flows {
        if f.tick != t {
            return Err(SimError::WrongTick {
                edge: f.edge.clone(),
                expected: t,
                got: f.tick,
            });
        }
        let edge = snapshot
            .edge(&f.edge)
            .ok_or_else(|| SimError::UnknownElement(f.edge.0.clone()))?;
        if edge.layer != LayerKind::Material {
            return Err(SimError::NotMaterial(f.edge.clone()));
        }
        *per_edge.entry(&f.edge).or_default() += f.quantity;
    }
    let mut outflow: BTreeMap<&NodeId, Units> = BTreeMap::new();
    for (&id, &q) in &per_edge {
        let capacity = weights.capacity(id);
        if q > capacity {
            return Err(SimError::CapacityExceeded {
                edge: id.clone(),
                tick: t,
                quantity: q,
                capacity,
            });
        }
        let edge = snapshot.edge(id).expect("checked above");
        *outflow.entry(&edge.src).or_default() += q;
    }
    let mut supplied: BTreeMap<&NodeId, Units> = BTreeMap::new();
    for node in snapshot.node_ids() {
        let s = scenario.realized_supply(snapshot, node, t);
        let available = state.inventory(node) + s;
        let out = outflow.get(node).copied().unwrap_or(0);
        if out > available {
            return Err(SimError::InsufficientInventory {
                node: node.clone(),
                tick: t,
                requested: out,
                available,
            });
        }
        supplied.insert(node, s);
    }

    // Validation done; from here on the tick is committed.
    let mut applied = Vec::new();
    for (&id, &q) in &per_edge {
        if q == 0 {
            continue;
        }
        let edge = snapshot.edge(id).expect("checked above");
        let transit = weights
            .effective
            .get(id)
            .map_or(edge.weights.transit_time, |w| w.transit_time)
            .max(1);
        state.in_transit.entry(t + transit).or_default().push(Shipment {
            edge: id.clone(),
            dst: edge.dst.clone(),
            sent: t,
            arrival: t + transit,
            quantity: q,
        });
        applied.push(FlowAssignment {
            edge: id.clone(),
            tick: t,
            quantity: q,
        });
    }
    let mut arrivals: BTreeMap<NodeId, Units> = BTreeMap::new();
    for s in state.in_transit.remove(&(t + 1)).unwrap_or_default() {
        *arrivals.entry(s.dst).or_default() += s.quantity;
    }

    let mut node_noise: BTreeMap<&NodeId, i64> = BTreeMap::new();
    let mut active = Vec::new();
    for (index, d) in scenario.active_with_index(t) {
        active.push(ActiveDisturbance {
            index,
            kind: d.kind,
            target: d.target.clone(),
        });
        if let (DisturbanceKind::NodeNoise, Target::Node { node }) = (d.kind, &d.target) {
            let xi = noise.uniform_units(node.as_str(), t, 1 + index as u64, d.magnitude);
            *node_noise.entry(node).or_default() += xi;
        }
    }

    let mut next_nodes = BTreeMap::new();
    let mut ticks = BTreeMap::new();
    let mut fulfilled = Vec::new();
    for node in snapshot.nodes() {
        let id = &node.id;
        let prior = &state.nodes[id];
        let s = supplied[id];
        let out = outflow.get(id).copied().unwrap_or(0);
        let inflow = arrivals.get(id).copied().unwrap_or(0);
        let remaining = prior.inventory + s - out;

        let mut rec = NodeTick {
            supplied: s,
            shipped: out,
            received: inflow,
            ..NodeTick::default()
        };
        let mut backlog = prior.backlog;
        if let Some(queue) = state.orders.get_mut(id) {
            let demand = scenario.demand_at(snapshot, id, t);
            if demand > 0 {
                queue.push_back((t, demand));
            }
            let outstanding: Units = queue.iter().map(|(_, q)| q).sum();
            let consumed = remaining.min(outstanding);
            let mut left = consumed;
            while left > 0 {
                let front = queue.front_mut().expect("outstanding covers consumption");
                let take = left.min(front.1);
                fulfilled.push(Fulfillment {
                    customer: id.clone(),
                    ordered: front.0,
                    delivered: t,
                    quantity: take,
                });
                if front.0 == t {
                    rec.on_time += take;
                }
                front.1 -= take;
                left -= take;
                if front.1 == 0 {
                    queue.pop_front();
                }
            }
            if scenario.is_lost_sales(id) {
                queue.clear();
            }
            rec.demand = demand;
            rec.consumed = consumed;
            rec.unmet = outstanding - consumed;
            backlog = queue.iter().map(|(_, q)| q).sum();
        }

        let influence: f64 = snapshot
            .in_edges(id, LayerKind::Material)
            .map(|e| {
                let w = weights.effective.get(&e.id).unwrap_or(&e.weights);
                rules.influence.influence(w, &state.nodes[&e.src])
            })
            .sum();
        let xi = node_noise.get(id).copied().unwrap_or(0);
        let ctx = UpdateContext {
            node: id,
            state: prior,
            inflow,
            outflow: out,
            supplied: s,
            consumed: rec.consumed,
            noise: xi,
            influence,
        };
        let raw = rules.update.next_inventory(&ctx);
        if raw < 0 && xi == 0 {
            return Err(SimError::NegativeInventoryUnclamped {
                node: id.clone(),
                tick: t,
            });
        }
        let inventory = raw.max(0) as Units;
        let balance = (remaining - rec.consumed + inflow) as i64;
        rec.loss = (-raw).max(0) as Units;
        rec.adjustment = inventory as i64 - balance;

        let mut next = prior.clone();
        next.inventory = inventory;
        next.backlog = backlog;
        next.throughput_used = s;
        next_nodes.insert(id.clone(), next);
        ticks.insert(id.clone(), rec);
    }

    let mut all_controls: Vec<ControlAction> = controls.to_vec();
    for (id, rec) in &ticks {
        if rec.supplied > 0 {
            all_controls.push(ControlAction {
                node: id.clone(),
                tick: t,
                kind: ControlKind::Produce,
                quantity: rec.supplied,
            });
        }
    }
    all_controls.sort_by(|a, b| (&a.node, a.kind).cmp(&(&b.node, b.kind)));

    state.nodes = next_nodes;
    state.tick = t + 1;

    Ok(TickRecord {
        tick: t,
        flows: applied,
        controls: all_controls,
        nodes: ticks,
        edges: weights.effective.clone(),
        disturbances: active,
        fulfilled,
        violations: Vec::new(),
    })
}
