//! Discrete-time simulation of the supply network.
//!
//! Each tick runs [`update_edge_weights`], asks a [`FlowPolicy`] for flows
//! and control actions, then applies [`step`], which advances every node by
//! the inventory balance
//!
//! ```text
//! x_i(t+1) = x_i(t) + Σ_j f_ji(t) − Σ_j f_ij(t) + s_i(t)
//! ```
//!
//! where inflows sent over an edge with transit time `d` are credited `d`
//! ticks after they were sent. Customer demand is served from what remains
//! after shipping; shortfalls become backlog.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{EdgeId, NodeId, StateVector, Tick, Units, WeightVector};

mod cost;
mod kernel;
mod noise;
mod policy;
mod rules;
mod run;
mod scenario;
mod weights;

pub use cost::{evaluate_cost, evaluate_cost_window, CostError, CostModel, CostReport, NodeRates, TermCost, TickCost};
pub use kernel::{step, SimState};
pub use noise::NoiseSource;
pub use policy::{Decision, FixedPlanPolicy, FlowPolicy, GreedyPolicy, PolicyContext, PolicySpec};
pub use rules::{FlowBalance, InfluenceRule, RuleSet, StateUpdateRule, UpdateContext, WeightedSum};
pub use run::{run, run_on_snapshot, run_with_rules, what_if, WhatIf};
pub use scenario::{Disturbance, DisturbanceKind, Scenario, ScenarioPatch, Schedule, Target};
pub use weights::{update_edge_weights, WeightPatch, WeightState, WeightUpdate};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of ticks simulated.
    pub horizon: Tick,
    pub seed: u64,
    #[serde(default = "default_update_rule")]
    pub state_update_hook: String,
    #[serde(default = "default_influence_rule")]
    pub influence_rule: String,
    /// Timeline tick whose snapshot is simulated.
    #[serde(default)]
    pub snapshot_tick: Tick,
}

fn default_update_rule() -> String {
    String::from(rules::FLOW_BALANCE)
}

fn default_influence_rule() -> String {
    String::from(rules::WEIGHTED_SUM)
}

impl SimConfig {
    pub fn new(horizon: Tick, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            state_update_hook: default_update_rule(),
            influence_rule: default_influence_rule(),
            snapshot_tick: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Order,
    Produce,
    Hold,
}

/// A control action u_i(t).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlAction {
    pub node: NodeId,
    pub tick: Tick,
    pub kind: ControlKind,
    pub quantity: Units,
}

/// Units sent over a material edge at a tick, f_ij(t).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowAssignment {
    pub edge: EdgeId,
    pub tick: Tick,
    pub quantity: Units,
}

/// Units travelling over an edge, credited to `dst` at `arrival`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shipment {
    pub edge: EdgeId,
    pub dst: NodeId,
    pub sent: Tick,
    pub arrival: Tick,
    pub quantity: Units,
}

/// A batch of customer demand delivered, possibly late.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fulfillment {
    pub customer: NodeId,
    pub ordered: Tick,
    pub delivered: Tick,
    pub quantity: Units,
}

impl Fulfillment {
    pub fn lead_time(&self) -> Tick {
        self.delivered - self.ordered
    }
}

/// Planned flow the executing policy could not apply in full.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanViolation {
    pub edge: EdgeId,
    pub tick: Tick,
    pub planned: Units,
    pub applied: Units,
    pub reason: ViolationReason,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationReason {
    Capacity,
    Stock,
    UnknownEdge,
}

/// Per-node quantities of one tick.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTick {
    /// Realized supply s_i(t).
    pub supplied: Units,
    pub shipped: Units,
    /// Units credited at the end of the tick (arrivals for t+1).
    pub received: Units,
    pub demand: Units,
    pub consumed: Units,
    /// Consumed units that served demand raised this tick.
    pub on_time: Units,
    /// Outstanding demand after consumption.
    pub unmet: Units,
    /// Signed inventory change applied by noise and clamping.
    pub adjustment: i64,
    /// Units removed by clamping negative inventory at zero.
    pub loss: Units,
}

/// A disturbance active during a tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveDisturbance {
    pub index: usize,
    pub kind: DisturbanceKind,
    pub target: Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: Tick,
    pub flows: Vec<FlowAssignment>,
    pub controls: Vec<ControlAction>,
    pub nodes: BTreeMap<NodeId, NodeTick>,
    /// Effective (post-disturbance) weights of every edge.
    pub edges: BTreeMap<EdgeId, WeightVector>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disturbances: Vec<ActiveDisturbance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fulfilled: Vec<Fulfillment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<PlanViolation>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub initial_inventory: Units,
    pub final_inventory: Units,
    pub final_backlog: Units,
    pub supplied: Units,
    pub shipped: Units,
    pub demand: Units,
    pub consumed: Units,
    pub on_time: Units,
    /// Net signed change from noise and clamping.
    pub adjustment: i64,
    pub loss: Units,
    pub in_transit_at_end: Units,
    pub violations: usize,
}

impl TraceSummary {
    /// Material balance: initial + supplied − consumed + adjustment equals
    /// final on hand plus what is still travelling.
    pub fn is_balanced(&self) -> bool {
        let lhs =
            self.initial_inventory as i128 + self.supplied as i128 - self.consumed as i128 + self.adjustment as i128;
        let rhs = self.final_inventory as i128 + self.in_transit_at_end as i128;
        lhs == rhs
    }
}

/// Complete record of a run: `horizon + 1` states and `horizon` ticks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub scenario: String,
    pub seed: u64,
    pub horizon: Tick,
    pub states: Vec<BTreeMap<NodeId, StateVector>>,
    pub ticks: Vec<TickRecord>,
    pub in_transit_at_end: Vec<Shipment>,
    pub summary: TraceSummary,
}

impl SimTrace {
    pub fn is_complete(&self) -> bool {
        self.ticks.len() as u64 == self.horizon && self.states.len() as u64 == self.horizon + 1
    }

    pub fn total_inventory(&self, tick: usize) -> Units {
        self.states[tick].values().map(|s| s.inventory).sum()
    }

    pub fn violations(&self) -> impl Iterator<Item = &PlanViolation> {
        self.ticks.iter().flat_map(|t| t.violations.iter())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("flow of {quantity} on edge `{edge}` at tick {tick} exceeds capacity {capacity}")]
    CapacityExceeded {
        edge: EdgeId,
        tick: Tick,
        quantity: Units,
        capacity: Units,
    },
    #[error("node `{node}` ships {requested} at tick {tick} but holds only {available}")]
    InsufficientInventory {
        node: NodeId,
        tick: Tick,
        requested: Units,
        available: Units,
    },
    #[error("inventory of `{node}` went negative at tick {tick} without a noise term")]
    NegativeInventoryUnclamped { node: NodeId, tick: Tick },
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("edge `{0}` is not on the material layer")]
    NotMaterial(EdgeId),
    #[error("invalid control action at `{node}`: {reason}")]
    InvalidControl { node: NodeId, reason: String },
    #[error("flow on edge `{edge}` is dated tick {got}, expected {expected}")]
    WrongTick { edge: EdgeId, expected: Tick, got: Tick },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error(transparent)]
    Cost(#[from] CostError),
}
