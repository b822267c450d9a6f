//! Flow planning against the cost functional J.
//!
//! [`build_time_expanded`] turns a snapshot and the noise-free part of a
//! scenario into a min-cost-flow instance; [`plan_flows`] solves it with
//! successive shortest paths and reads the result back as a [`FlowPlan`].
//! [`greedy_baseline`] records what the simulation's greedy policy does on
//! the same instance, for comparison.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{GraphSnapshot, NodeId, Tick, Units};
use crate::simulation::{
    evaluate_cost, run_on_snapshot, ControlAction, ControlKind, CostError, CostModel, FlowAssignment, PlanViolation,
    PolicySpec, Scenario, SimConfig, SimError, SimTrace,
};

mod mcf;
mod ten;

pub use ten::{build_time_expanded, ArcKind, TenArc, TenNode, TimeExpandedNetwork};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("planning needs a horizon of at least one tick")]
    ZeroHorizon,
    #[error("the snapshot has no material-layer edges")]
    EmptyMaterialLayer,
    #[error("cost model admits unbounded gain around {0:?}")]
    UnboundedNegativeCycle(Vec<String>),
    #[error("network is infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanTick {
    pub tick: Tick,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub controls: Vec<ControlAction>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flows: Vec<FlowAssignment>,
}

/// Per-tick control actions u_i(t) and flows f_ij(t) with the planned
/// objective Ĵ, which is the cost of the plan's predicted trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowPlan {
    pub horizon: Tick,
    pub ticks: Vec<PlanTick>,
    /// Ĵ.
    pub objective: f64,
}

impl FlowPlan {
    pub fn empty(horizon: Tick) -> Self {
        Self {
            horizon,
            ticks: (0..horizon)
                .map(|tick| PlanTick {
                    tick,
                    ..PlanTick::default()
                })
                .collect(),
            objective: 0.0,
        }
    }

    pub fn flows(&self) -> impl Iterator<Item = &FlowAssignment> {
        self.ticks.iter().flat_map(|t| t.flows.iter())
    }

    pub fn shipped(&self) -> Units {
        self.flows().map(|f| f.quantity).sum()
    }

    fn from_trace(trace: &SimTrace) -> Self {
        let ticks = trace
            .ticks
            .iter()
            .map(|r| PlanTick {
                tick: r.tick,
                controls: r.controls.clone(),
                flows: r.flows.clone(),
            })
            .collect();
        Self {
            horizon: trace.horizon,
            ticks,
            objective: 0.0,
        }
    }
}

/// Solution of a time-expanded network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Planned {
    pub plan: FlowPlan,
    /// Optimal objective of the network, constant terms included. Equals
    /// `plan.objective` up to float rounding.
    pub network_objective: f64,
    /// Simulation of the plan under the noise-free scenario.
    pub predicted: SimTrace,
}

fn noise_free(horizon: Tick) -> SimConfig {
    SimConfig::new(horizon, 0)
}

/// Min-cost flow on the network, read back as a plan.
pub fn plan_flows(network: &TimeExpandedNetwork) -> Result<Planned, OptimizerError> {
    let (flows, network_objective) = network.solve()?;
    let horizon = network.horizon;
    let mut ticks: Vec<PlanTick> = (0..horizon)
        .map(|tick| PlanTick {
            tick,
            ..PlanTick::default()
        })
        .collect();
    let mut orders: BTreeMap<(Tick, NodeId), Units> = BTreeMap::new();
    for (arc, &q) in network.arcs.iter().zip(&flows) {
        if let ArcKind::Movement { edge, tick } = &arc.kind {
            if q == 0 {
                continue;
            }
            let src = &network.snapshot.edge(edge).expect("network built from snapshot").src;
            *orders.entry((*tick, src.clone())).or_default() += q;
            ticks[*tick as usize].flows.push(FlowAssignment {
                edge: edge.clone(),
                tick: *tick,
                quantity: q,
            });
        }
    }
    for ((tick, node), quantity) in orders {
        ticks[tick as usize].controls.push(ControlAction {
            node,
            tick,
            kind: ControlKind::Order,
            quantity,
        });
    }
    for id in network.snapshot.node_ids() {
        for t in 0..horizon {
            let s = network.scenario.realized_supply(&network.snapshot, id, t);
            if s > 0 {
                ticks[t as usize].controls.push(ControlAction {
                    node: id.clone(),
                    tick: t,
                    kind: ControlKind::Produce,
                    quantity: s,
                });
            }
        }
    }
    for t in &mut ticks {
        t.flows.sort();
        t.controls.sort_by(|a, b| (&a.node, a.kind).cmp(&(&b.node, b.kind)));
    }
    let mut plan = FlowPlan {
        horizon,
        ticks,
        objective: 0.0,
    };
    let predicted = run_on_snapshot(
        &network.snapshot,
        &network.scenario,
        &noise_free(horizon),
        &PolicySpec::Fixed(plan.clone()),
    )?;
    plan.objective = evaluate_cost(&predicted, &network.cost)?.total;
    Ok(Planned {
        plan,
        network_objective,
        predicted,
    })
}

/// Builds and solves in one call.
pub fn optimize(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    horizon: Tick,
    cost: &CostModel,
) -> Result<Planned, OptimizerError> {
    plan_flows(&build_time_expanded(snapshot, scenario, horizon, cost)?)
}

/// The greedy policy run on the noise-free scenario, recorded as a plan.
pub fn greedy_baseline(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    horizon: Tick,
    cost: &CostModel,
) -> Result<FlowPlan, OptimizerError> {
    let trace = run_on_snapshot(
        snapshot,
        &scenario.without_noise(),
        &noise_free(horizon),
        &PolicySpec::Greedy,
    )?;
    let mut plan = FlowPlan::from_trace(&trace);
    plan.objective = evaluate_cost(&trace, cost)?.total;
    Ok(plan)
}

/// Result of executing a plan through the simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanValidation {
    pub trace: SimTrace,
    pub planned: f64,
    pub realized: f64,
    /// `realized − planned`.
    pub discrepancy: f64,
    /// Flows clipped because they no longer fit capacity or stock.
    pub violations: Vec<PlanViolation>,
}

impl PlanValidation {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Runs `plan` with the fixed-plan policy under the full scenario, noise
/// included.
pub fn validate_plan(
    plan: &FlowPlan,
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    config: &SimConfig,
    cost: &CostModel,
) -> Result<PlanValidation, OptimizerError> {
    let trace = run_on_snapshot(snapshot, scenario, config, &PolicySpec::Fixed(plan.clone()))?;
    let realized = evaluate_cost(&trace, cost)?.total;
    let violations = trace.violations().cloned().collect();
    Ok(PlanValidation {
        planned: plan.objective,
        realized,
        discrepancy: realized - plan.objective,
        violations,
        trace,
    })
}
