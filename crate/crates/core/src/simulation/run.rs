use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    step, update_edge_weights, CostModel, FlowPolicy, NoiseSource, PolicyContext, PolicySpec, RuleSet, Scenario,
    ScenarioPatch, SimConfig, SimError, SimState, SimTrace, TraceSummary, WeightState,
};
use crate::graph::{GraphSnapshot, Timeline};
use crate::kpi::{compute_kpis, KpiDelta, KpiReport, KpiWindow};

/// Simulates the timeline's snapshot at `config.snapshot_tick`.
pub fn run(
    timeline: &Timeline,
    scenario: &Scenario,
    config: &SimConfig,
    policy: &PolicySpec,
) -> Result<SimTrace, SimError> {
    run_on_snapshot(&timeline.snapshot_at(config.snapshot_tick), scenario, config, policy)
}

pub fn run_on_snapshot(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    config: &SimConfig,
    policy: &PolicySpec,
) -> Result<SimTrace, SimError> {
    let rules = RuleSet::resolve(&config.state_update_hook, &config.influence_rule)?;
    let mut policy = policy.build();
    run_with_rules(snapshot, scenario, config, policy.as_mut(), rules)
}

/// The simulation loop: for each tick, weights, then policy, then step.
pub fn run_with_rules(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    config: &SimConfig,
    policy: &mut dyn FlowPolicy,
    rules: RuleSet<'_>,
) -> Result<SimTrace, SimError> {
    scenario.validate(snapshot, config.horizon)?;
    let noise = NoiseSource::new(config.seed);
    let mut state = SimState::initial(snapshot, scenario);
    let mut weights = WeightState::new(snapshot);
    let mut states = Vec::with_capacity(config.horizon as usize + 1);
    let mut ticks = Vec::with_capacity(config.horizon as usize);
    states.push(state.nodes.clone());

    for t in 0..config.horizon {
        let update = update_edge_weights(snapshot, scenario, t, &noise, &mut weights);
        let decision = policy.decide(&PolicyContext {
            tick: t,
            snapshot,
            scenario,
            state: &state,
            weights: &update,
        });
        let mut record = step(
            snapshot,
            &mut state,
            &decision.flows,
            &decision.controls,
            scenario,
            &update,
            &noise,
            rules,
        )?;
        record.violations = decision.violations;
        ticks.push(record);
        states.push(state.nodes.clone());
    }

    let in_transit_at_end: Vec<_> = state.shipments().cloned().collect();
    let mut summary = TraceSummary {
        initial_inventory: states[0].values().map(|s| s.inventory).sum(),
        final_inventory: state.nodes.values().map(|s| s.inventory).sum(),
        final_backlog: state.nodes.values().map(|s| s.backlog).sum(),
        in_transit_at_end: in_transit_at_end.iter().map(|s| s.quantity).sum(),
        ..TraceSummary::default()
    };
    for record in &ticks {
        summary.violations += record.violations.len();
        for n in record.nodes.values() {
            summary.supplied += n.supplied;
            summary.shipped += n.shipped;
            summary.demand += n.demand;
            summary.consumed += n.consumed;
            summary.on_time += n.on_time;
            summary.adjustment += n.adjustment;
            summary.loss += n.loss;
        }
    }

    Ok(SimTrace {
        scenario: scenario.name.clone(),
        seed: config.seed,
        horizon: config.horizon,
        states,
        ticks,
        in_transit_at_end,
        summary,
    })
}

/// Base and patched runs of a what-if comparison, same seed and policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhatIf {
    pub base: SimTrace,
    pub patched: SimTrace,
    pub base_kpis: KpiReport,
    pub patched_kpis: KpiReport,
    pub delta: KpiDelta,
}

/// Runs `base` and `base` with `patch` applied. Nothing is written to the
/// timeline.
pub fn what_if(
    timeline: &Timeline,
    base: &Scenario,
    patch: &ScenarioPatch,
    config: &SimConfig,
    policy: &PolicySpec,
    cost: &CostModel,
) -> Result<WhatIf, SimError> {
    let snapshot = timeline.snapshot_at(config.snapshot_tick);
    let patched_scenario = base.patched(patch);
    let base_trace = run_on_snapshot(&snapshot, base, config, policy)?;
    let patched_trace = run_on_snapshot(&snapshot, &patched_scenario, config, policy)?;
    let window = KpiWindow::full(config.horizon);
    let base_kpis = compute_kpis(&base_trace, &snapshot, cost, window)?;
    let patched_kpis = compute_kpis(&patched_trace, &snapshot, cost, window)?;
    let delta = KpiDelta::between(&base_kpis, &patched_kpis).with_customers(&base_trace, &patched_trace);
    Ok(WhatIf {
        base: base_trace,
        patched: patched_trace,
        base_kpis,
        patched_kpis,
        delta,
    })
}
