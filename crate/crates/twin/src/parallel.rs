//! Data-parallel versions of embarrassingly parallel analyses.

use chaintwin_core::analytics::{rank_stress, stress_baseline, stress_one, StressReport};
use chaintwin_core::simulation::{CostModel, PolicySpec, Scenario, SimConfig, Target};
use chaintwin_core::GraphSnapshot;
use rayon::prelude::*;

use crate::error::Result;

/// Ablation ranking with one simulation per candidate on the rayon pool.
/// Every node is a candidate when `candidates` is empty. Equal to the
/// sequential ranking.
pub fn critical_rank(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    config: &SimConfig,
    policy: &PolicySpec,
    cost: &CostModel,
    candidates: &[Target],
) -> Result<StressReport> {
    let baseline = stress_baseline(snapshot, scenario, config, policy, cost)?;
    let all: Vec<Target>;
    let candidates = if candidates.is_empty() {
        all = snapshot.node_ids().cloned().map(Target::node).collect();
        &all[..]
    } else {
        candidates
    };
    let mut entries = candidates
        .par_iter()
        .map(|t| stress_one(snapshot, scenario, config, policy, cost, &baseline, t))
        .collect::<Result<Vec<_>, _>>()?;
    rank_stress(&mut entries);
    Ok(StressReport {
        baseline_cost: baseline.cost,
        baseline_unmet: baseline.unmet,
        entries,
    })
}
