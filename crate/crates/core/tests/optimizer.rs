mod support;

use chaintwin_core::optimizer::{build_time_expanded, greedy_baseline, optimize, plan_flows, validate_plan};
use chaintwin_core::simulation::{CostModel, SimConfig};
use support::*;

fn flows_by_tick(inst: &FlowInstance, plan: &chaintwin_core::optimizer::FlowPlan) -> Vec<Vec<u64>> {
    let mut out = vec![vec![0u64; inst.edges.len()]; inst.horizon as usize];
    for f in plan.flows() {
        let k: usize = f.edge.as_str()[1..].parse().unwrap();
        out[f.tick as usize][k] += f.quantity;
    }
    out
}

#[test]
fn plan_matches_exhaustive_optimum_on_the_sweep() {
    let sweep = exhaustive_sweep();
    assert!(sweep.len() >= 2000);
    let mut shipping = 0;
    for (i, inst) in sweep.iter().enumerate() {
        let cost = CostModel::uniform(inst.rates);
        let planned =
            plan_flows(&build_time_expanded(&inst.snapshot(), &inst.scenario(), inst.horizon, &cost).unwrap()).unwrap();
        let best = inst.exhaustive_optimum();
        assert_eq!(planned.plan.objective, best, "instance {i}: {inst:?}");
        assert_eq!(inst.reference_cost(&flows_by_tick(inst, &planned.plan)), Some(best));
        assert!((planned.network_objective - best).abs() <= 1e-9 * best.abs().max(1.0));
        shipping += usize::from(planned.plan.shipped() > 0);
    }
    // Horizon-1 and zero-capacity instances cannot usefully ship.
    assert!(
        shipping * 3 > sweep.len(),
        "{shipping} of {} instances ship",
        sweep.len()
    );
}

#[test]
fn plan_never_costs_more_than_greedy() {
    let mut r = rng(31);
    let mut strictly_better = 0;
    for i in 0..500 {
        let inst = random_instance(&mut r, 10, 12);
        let cost = CostModel::uniform(inst.rates);
        let (g, s) = (inst.snapshot(), inst.scenario());
        let planned = optimize(&g, &s, inst.horizon, &cost).unwrap();
        let greedy = greedy_baseline(&g, &s, inst.horizon, &cost).unwrap();
        assert!(
            planned.plan.objective <= greedy.objective,
            "instance {i}: {} > {}",
            planned.plan.objective,
            greedy.objective
        );
        assert_eq!(
            inst.reference_cost(&flows_by_tick(&inst, &greedy)),
            Some(greedy.objective)
        );
        strictly_better += usize::from(planned.plan.objective < greedy.objective);
    }
    eprintln!("plan strictly cheaper than greedy on {strictly_better} of 500");
    assert!(strictly_better > 100);
}

#[test]
fn realized_cost_equals_planned_cost_without_noise() {
    let mut r = rng(41);
    for seed in 0..150 {
        let inst = random_instance(&mut r, 12, 20);
        let cost = CostModel::uniform(inst.rates);
        let g = inst.snapshot();
        let mut s = inst.scenario();
        random_disruptions(&mut r, &inst, &mut s);
        let planned = optimize(&g, &s, inst.horizon, &cost).unwrap();
        let v = validate_plan(&planned.plan, &g, &s, &SimConfig::new(inst.horizon, seed), &cost).unwrap();
        assert!(v.is_feasible());
        let scale = planned.network_objective.abs().max(1.0);
        assert!(
            (v.realized - planned.network_objective).abs() <= 1e-9 * scale,
            "seed {seed}"
        );
        assert_eq!(v.realized, planned.plan.objective);
    }
}
