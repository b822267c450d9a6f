//! The cost functional
//!
//! ```text
//! J = Σ_{t=0}^{T−1} [ Σ_i c_i(x_i(t), u_i(t)) + Σ_(i,j) c_ij(w_ij(t), f_ij(t)) ]
//! ```
//!
//! with linear defaults `c_i = holding·inventory + backlog·backlog +
//! action·u` and `c_ij = cost_per_unit·f`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ControlKind, SimTrace};
use crate::graph::{EdgeId, NodeId, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRates {
    /// Currency per unit held per tick.
    pub holding_rate: f64,
    /// Currency per unit of backlog per tick.
    pub backlog_rate: f64,
    /// Currency per unit ordered or produced.
    pub action_rate: f64,
}

impl Default for NodeRates {
    fn default() -> Self {
        Self {
            holding_rate: 1.0,
            backlog_rate: 5.0,
            action_rate: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    #[serde(default)]
    pub default: NodeRates,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub nodes: BTreeMap<NodeId, NodeRates>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum CostError {
    #[error("trace is incomplete: {states} states and {ticks} ticks for horizon {horizon}")]
    IncompleteTrace { horizon: Tick, states: usize, ticks: usize },
    #[error("rate `{field}` of `{scope}` must be finite and >= 0")]
    InvalidRate { scope: String, field: &'static str },
    #[error("window [{from}, {to}) is outside the trace horizon {horizon}")]
    WindowOutOfRange { from: Tick, to: Tick, horizon: Tick },
}

impl CostModel {
    pub fn uniform(rates: NodeRates) -> Self {
        Self {
            default: rates,
            nodes: BTreeMap::new(),
        }
    }

    pub fn rates(&self, node: &NodeId) -> NodeRates {
        self.nodes.get(node).copied().unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let all = core::iter::once(("default".to_string(), &self.default))
            .chain(self.nodes.iter().map(|(id, r)| (id.0.clone(), r)));
        for (scope, r) in all {
            for (field, v) in [
                ("holding_rate", r.holding_rate),
                ("backlog_rate", r.backlog_rate),
                ("action_rate", r.action_rate),
            ] {
                if !v.is_finite() || v < 0.0 {
                    return Err(CostError::InvalidRate { scope, field });
                }
            }
        }
        Ok(())
    }
}

/// Cost split by term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermCost {
    pub holding: f64,
    pub backlog: f64,
    pub action: f64,
    pub transport: f64,
}

impl TermCost {
    pub fn total(&self) -> f64 {
        self.holding + self.backlog + self.action + self.transport
    }

    pub fn add(&mut self, other: &TermCost) {
        self.holding += other.holding;
        self.backlog += other.backlog;
        self.action += other.action;
        self.transport += other.transport;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickCost {
    pub tick: Tick,
    pub terms: TermCost,
    /// Node terms c_i (transport is zero here).
    pub nodes: BTreeMap<NodeId, TermCost>,
    /// Edge terms c_ij.
    pub edges: BTreeMap<EdgeId, f64>,
}

impl TickCost {
    pub fn total(&self) -> f64 {
        self.terms.total()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub from: Tick,
    pub to: Tick,
    /// J over `[from, to)`: the sum of the per-tick totals.
    pub total: f64,
    pub terms: TermCost,
    pub ticks: Vec<TickCost>,
}

pub fn evaluate_cost(trace: &SimTrace, model: &CostModel) -> Result<CostReport, CostError> {
    evaluate_cost_window(trace, model, 0, trace.horizon)
}

/// Cost of ticks `from..to`. Windows compose: the totals of adjacent
/// windows add up to the total of their union.
pub fn evaluate_cost_window(
    trace: &SimTrace,
    model: &CostModel,
    from: Tick,
    to: Tick,
) -> Result<CostReport, CostError> {
    if !trace.is_complete() {
        return Err(CostError::IncompleteTrace {
            horizon: trace.horizon,
            states: trace.states.len(),
            ticks: trace.ticks.len(),
        });
    }
    if from > to || to > trace.horizon {
        return Err(CostError::WindowOutOfRange {
            from,
            to,
            horizon: trace.horizon,
        });
    }
    model.validate()?;

    let mut ticks = Vec::with_capacity((to - from) as usize);
    let mut terms = TermCost::default();
    let mut total = 0.0;
    for t in from..to {
        let record = &trace.ticks[t as usize];
        let states = &trace.states[t as usize];
        let mut u: BTreeMap<&NodeId, u64> = BTreeMap::new();
        for c in &record.controls {
            if matches!(c.kind, ControlKind::Order | ControlKind::Produce) {
                *u.entry(&c.node).or_default() += c.quantity;
            }
        }
        let mut tick_terms = TermCost::default();
        let mut nodes = BTreeMap::new();
        for (id, x) in states {
            let r = model.rates(id);
            let c = TermCost {
                holding: r.holding_rate * x.inventory as f64,
                backlog: r.backlog_rate * x.backlog as f64,
                action: r.action_rate * u.get(id).copied().unwrap_or(0) as f64,
                transport: 0.0,
            };
            tick_terms.add(&c);
            nodes.insert(id.clone(), c);
        }
        let mut edges: BTreeMap<EdgeId, f64> = BTreeMap::new();
        for f in &record.flows {
            let unit = record.edges.get(&f.edge).map_or(0.0, |w| w.cost_per_unit);
            let c = unit * f.quantity as f64;
            tick_terms.transport += c;
            *edges.entry(f.edge.clone()).or_default() += c;
        }
        terms.add(&tick_terms);
        total += tick_terms.total();
        ticks.push(TickCost {
            tick: t,
            terms: tick_terms,
            nodes,
            edges,
        });
    }
    Ok(CostReport {
        from,
        to,
        total,
        terms,
        ticks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EntityKind, EntityNode, GraphSnapshot};
    use crate::simulation::{run_on_snapshot, PolicySpec, Scenario, SimConfig};

    fn trace(horizon: Tick) -> SimTrace {
        let g = GraphSnapshot::new(
            0,
            [
                EntityNode::new("A", EntityKind::Warehouse).with_inventory(10),
                EntityNode::new("B", EntityKind::Warehouse).with_inventory(5),
            ],
            [],
        );
        run_on_snapshot(
            &g,
            &Scenario::named("flat"),
            &SimConfig::new(horizon, 0),
            &PolicySpec::Greedy,
        )
        .unwrap()
    }

    #[test]
    fn empty_horizon_costs_nothing() {
        let r = evaluate_cost(&trace(0), &CostModel::default()).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(r.ticks.is_empty());
    }

    #[test]
    fn constant_stock_two_ticks() {
        let r = evaluate_cost(&trace(2), &CostModel::default()).unwrap();
        assert_eq!(r.total, 30.0);
        assert_eq!(r.terms.holding, 30.0);
        assert_eq!(r.ticks.iter().map(TickCost::total).sum::<f64>(), r.total);
    }

    #[test]
    fn truncated_trace_is_incomplete() {
        let mut t = trace(2);
        t.states.pop();
        assert!(matches!(
            evaluate_cost(&t, &CostModel::default()),
            Err(CostError::IncompleteTrace { .. })
        ));
    }
}
