use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::graph::{EntityKind, GraphSnapshot, LayerKind, NodeId};
use crate::kpi::{compute_kpis, KpiWindow};
use crate::simulation::{run_on_snapshot, CostModel, Disturbance, PolicySpec, Scenario, SimConfig, Target};

/// Impact of removing one element for the whole horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressEntry {
    pub element: Target,
    pub delta_cost: f64,
    /// Change in demand not served on time.
    pub delta_unmet: i64,
    /// Customers that lose every material route from a source.
    pub disconnected_customers: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressReport {
    pub baseline_cost: f64,
    pub baseline_unmet: u64,
    /// Most critical first.
    pub entries: Vec<StressEntry>,
}

/// Cost, unmet demand and connected customers of the unperturbed run.
#[derive(Clone, Debug, PartialEq)]
pub struct StressBaseline {
    pub cost: f64,
    pub unmet: u64,
    connected: BTreeSet<NodeId>,
}

fn outcome(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    config: &SimConfig,
    policy: &PolicySpec,
    cost: &CostModel,
) -> Result<(f64, u64), AnalyticsError> {
    let trace = run_on_snapshot(snapshot, scenario, config, policy)?;
    let kpis = compute_kpis(&trace, snapshot, cost, KpiWindow::full(config.horizon))
        .map_err(crate::simulation::SimError::from)?;
    Ok((kpis.total_cost, kpis.unmet))
}

/// Customers reachable over material edges from any node that can hold or
/// receive supply, skipping `removed`.
fn connected_customers(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    horizon: u64,
    removed: Option<&Target>,
) -> BTreeSet<NodeId> {
    let node_gone = |id: &NodeId| matches!(removed, Some(Target::Node { node: n }) if n == id);
    let mut seen: BTreeSet<&NodeId> = BTreeSet::new();
    let mut queue: VecDeque<&NodeId> = snapshot
        .nodes()
        .filter(|n| !node_gone(&n.id))
        .filter(|n| {
            n.kind == EntityKind::Supplier
                || scenario.initial_inventory_of(snapshot, &n.id) > 0
                || (0..horizon).any(|t| scenario.scheduled_supply(snapshot, &n.id, t) > 0)
        })
        .map(|n| &n.id)
        .collect();
    seen.extend(queue.iter().copied());
    while let Some(u) = queue.pop_front() {
        for e in snapshot.out_edges(u, LayerKind::Material) {
            if matches!(removed, Some(Target::Edge { edge: x }) if *x == e.id) || node_gone(&e.dst) {
                continue;
            }
            if seen.insert(&e.dst) {
                queue.push_back(&e.dst);
            }
        }
    }
    seen.into_iter()
        .filter(|id| snapshot.node(id).is_some_and(|n| n.kind == EntityKind::Customer))
        .cloned()
        .collect()
}

pub fn stress_baseline(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    config: &SimConfig,
    policy: &PolicySpec,
    cost: &CostModel,
) -> Result<StressBaseline, AnalyticsError> {
    let (cost, unmet) = outcome(snapshot, scenario, config, policy, cost)?;
    Ok(StressBaseline {
        cost,
        unmet,
        connected: connected_customers(snapshot, scenario, config.horizon, None),
    })
}

/// Re-runs the scenario with `element` out for the whole horizon.
pub fn stress_one(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    config: &SimConfig,
    policy: &PolicySpec,
    cost: &CostModel,
    baseline: &StressBaseline,
    element: &Target,
) -> Result<StressEntry, AnalyticsError> {
    let outage = match element {
        Target::Node { node: n } => {
            if !snapshot.contains_node(n) {
                return Err(AnalyticsError::UnknownNode(n.clone()));
            }
            Disturbance::node_outage(n.clone(), 0, config.horizon)
        }
        Target::Edge { edge: e } => Disturbance::edge_outage(e.clone(), 0, config.horizon),
    };
    let stressed = scenario.clone().with_disturbance(outage);
    let (c, unmet) = outcome(snapshot, &stressed, config, policy, cost)?;
    let after = connected_customers(snapshot, scenario, config.horizon, Some(element));
    Ok(StressEntry {
        element: element.clone(),
        delta_cost: c - baseline.cost,
        delta_unmet: unmet as i64 - baseline.unmet as i64,
        disconnected_customers: baseline.connected.difference(&after).cloned().collect(),
    })
}

/// Δunmet descending, then Δcost descending, then element id.
pub fn rank_stress(entries: &mut [StressEntry]) {
    entries.sort_by(|a, b| {
        b.delta_unmet
            .cmp(&a.delta_unmet)
            .then_with(|| b.delta_cost.partial_cmp(&a.delta_cost).unwrap_or(Ordering::Equal))
            .then_with(|| a.element.cmp(&b.element))
    });
}

/// Ablation ranking of `candidates`; every node when empty.
pub fn critical_rank(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    config: &SimConfig,
    policy: &PolicySpec,
    cost: &CostModel,
    candidates: &[Target],
) -> Result<StressReport, AnalyticsError> {
    let baseline = stress_baseline(snapshot, scenario, config, policy, cost)?;
    let all: Vec<Target>;
    let candidates = if candidates.is_empty() {
        all = snapshot.node_ids().cloned().map(Target::node).collect();
        &all[..]
    } else {
        candidates
    };
    let mut entries = candidates
        .iter()
        .map(|t| stress_one(snapshot, scenario, config, policy, cost, &baseline, t))
        .collect::<Result<Vec<_>, _>>()?;
    rank_stress(&mut entries);
    Ok(StressReport {
        baseline_cost: baseline.cost,
        baseline_unmet: baseline.unmet,
        entries,
    })
}
