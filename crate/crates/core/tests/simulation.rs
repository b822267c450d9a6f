mod support;

use chaintwin_core::simulation::{
    evaluate_cost, run, run_on_snapshot, what_if, CostModel, Disturbance, DisturbanceKind, PolicySpec, Scenario,
    ScenarioPatch, SimConfig, Target,
};
use chaintwin_core::{EdgeRecord, EntityKind, EntityNode, GraphSnapshot, Timeline, WeightVector};
use proptest::prelude::*;
use rand::Rng;
use support::*;

fn chain(w_inventory: u64, demand: u64, capacity: u64) -> GraphSnapshot {
    let w = WeightVector {
        cost_per_unit: 1.0,
        capacity,
        ..WeightVector::default()
    };
    GraphSnapshot::new(
        0,
        [
            EntityNode::new("S", EntityKind::Supplier),
            EntityNode::new("W", EntityKind::Warehouse).with_inventory(w_inventory),
            EntityNode::new("C", EntityKind::Customer).with_demand_rate(demand),
        ],
        [
            EdgeRecord::material("SW", "S", "W", w),
            EdgeRecord::material("WC", "W", "C", w),
        ],
    )
}

/// Hand-stepped greedy run of S → W → C with W→C out on ticks 2 and 3.
/// W starts with 10, C demands 2 per tick, both edges carry 5 per tick at
/// cost 1 and take one tick.
///
/// t0: C needs 2, W ships 2.            C consumes 0, backlog 2.
/// t1: needs 4, holds 2, W ships 2.     C consumes 2, backlog 2.
/// t2: edge out.                        C consumes 2, backlog 2.
/// t3: edge out.                        C consumes 0, backlog 4.
/// t4: needs 6, W ships the cap of 5.   C consumes 0, backlog 6.
/// t5: needs 8, holds 5, W ships its 1. C consumes 5, backlog 3.
#[test]
fn chain_outage_matches_hand_stepped_run() {
    let g = chain(10, 2, 5);
    let scenario = Scenario::named("outage").with_disturbance(Disturbance::edge_outage("WC", 2, 4));
    let trace = run_on_snapshot(&g, &scenario, &SimConfig::new(6, 0), &PolicySpec::Greedy).unwrap();

    let w: Vec<u64> = trace.states.iter().map(|s| s[&"W".into()].inventory).collect();
    let c: Vec<u64> = trace.states.iter().map(|s| s[&"C".into()].inventory).collect();
    let bl: Vec<u64> = trace.states.iter().map(|s| s[&"C".into()].backlog).collect();
    assert_eq!(w, [10, 8, 6, 6, 6, 1, 0]);
    assert_eq!(c, [0, 2, 2, 0, 0, 5, 1]);
    assert_eq!(bl, [0, 2, 2, 2, 4, 6, 3]);
    let shipped: Vec<u64> = trace
        .ticks
        .iter()
        .map(|t| t.flows.iter().map(|f| f.quantity).sum())
        .collect();
    assert_eq!(shipped, [2, 2, 0, 0, 5, 1]);
    assert_eq!(trace.summary.consumed, 9);
    assert_eq!(trace.summary.on_time, 0);

    // Holding on W + C, backlog at 5 per unit, transport at 1 per unit:
    // 10 + (10+10) + (8+10) + (6+10) + (6+20) + (6+30) + 10 = 136.
    assert_eq!(evaluate_cost(&trace, &CostModel::default()).unwrap().total, 136.0);
}

#[test]
fn material_balance_holds_on_random_scenarios() {
    let mut r = rng(21);
    for i in 0..500 {
        let inst = random_instance(&mut r, 20, 50);
        let g = inst.snapshot();
        let mut scenario = inst.scenario();
        scenario.lost_sales.clear();
        random_disruptions(&mut r, &inst, &mut scenario);
        if r.random_bool(0.3) {
            let mut d = Disturbance::new(
                Target::edge(edge_id(0)),
                DisturbanceKind::EdgeNoise,
                0,
                inst.horizon,
                0.3,
            );
            d.field = Some(chaintwin_core::EdgeField::TransitTime);
            scenario.disturbances.push(d);
        }
        let trace = run_on_snapshot(&g, &scenario, &SimConfig::new(inst.horizon, i), &PolicySpec::Greedy).unwrap();

        let t = inst.horizon;
        let supplied: u64 = (0..t)
            .flat_map(|k| g.node_ids().map(move |n| (n, k)))
            .map(|(n, k)| scenario.realized_supply(&g, n, k))
            .sum();
        let demand: u64 = (0..t)
            .flat_map(|k| g.node_ids().map(move |n| (n, k)))
            .map(|(n, k)| scenario.demand_at(&g, n, k))
            .sum();
        let final_backlog: u64 = trace.states[t as usize].values().map(|s| s.backlog).sum();
        let consumed = demand - final_backlog;
        let in_flight: u64 = trace
            .ticks
            .iter()
            .flat_map(|rec| rec.flows.iter().map(move |f| (rec, f)))
            .filter(|(rec, f)| rec.tick + rec.edges[&f.edge].transit_time.max(1) > t)
            .map(|(_, f)| f.quantity)
            .sum();
        let start = trace.total_inventory(0);
        let end = trace.total_inventory(t as usize);
        assert_eq!(end + in_flight, start + supplied - consumed, "scenario {i}");
        assert_eq!(consumed, trace.summary.consumed);
        assert_eq!(in_flight, trace.summary.in_transit_at_end);
    }
}

#[test]
fn noise_and_clamping_are_accounted_in_the_summary() {
    let mut r = rng(22);
    for i in 0..200 {
        let inst = random_instance(&mut r, 10, 30);
        let mut scenario = inst.scenario();
        for n in 0..inst.nodes.len() {
            scenario.disturbances.push(Disturbance::new(
                Target::node(node_id(n)),
                DisturbanceKind::NodeNoise,
                0,
                inst.horizon,
                3.0,
            ));
        }
        let trace = run_on_snapshot(
            &inst.snapshot(),
            &scenario,
            &SimConfig::new(inst.horizon, i),
            &PolicySpec::Greedy,
        )
        .unwrap();
        assert!(trace.summary.is_balanced(), "scenario {i}: {:?}", trace.summary);
        assert!(trace
            .states
            .iter()
            .flat_map(|s| s.values())
            .all(|x| x.backlog <= trace.summary.demand));
    }
}

#[test]
fn same_seed_gives_identical_traces() {
    let mut r = rng(23);
    for seed in 0..20 {
        let inst = random_instance(&mut r, 12, 20);
        let mut scenario = inst.scenario();
        scenario.disturbances.push(Disturbance::new(
            Target::node(node_id(0)),
            DisturbanceKind::NodeNoise,
            0,
            inst.horizon,
            2.0,
        ));
        scenario.disturbances.push(Disturbance::new(
            Target::edge(edge_id(0)),
            DisturbanceKind::EdgeNoise,
            0,
            inst.horizon,
            0.2,
        ));
        let config = SimConfig::new(inst.horizon, seed);
        let a = run_on_snapshot(&inst.snapshot(), &scenario, &config, &PolicySpec::Greedy).unwrap();
        let b = run_on_snapshot(&inst.snapshot(), &scenario, &config, &PolicySpec::Greedy).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}

fn timeline_of(g: &GraphSnapshot) -> Timeline {
    let mut tl = Timeline::new();
    for n in g.nodes() {
        tl.add_node(0, n.clone()).unwrap();
    }
    for e in g.edges() {
        tl.add_edge(0, e.clone()).unwrap();
    }
    tl
}

#[test]
fn empty_patch_changes_nothing() {
    let tl = timeline_of(&chain(10, 2, 5));
    let out = what_if(
        &tl,
        &Scenario::named("base"),
        &ScenarioPatch::default(),
        &SimConfig::new(10, 4),
        &PolicySpec::Greedy,
        &CostModel::default(),
    )
    .unwrap();
    assert!(out.delta.is_zero());
    assert_eq!(out.base, out.patched);
    let direct = run(
        &tl,
        &Scenario::named("base"),
        &SimConfig::new(10, 4),
        &PolicySpec::Greedy,
    )
    .unwrap();
    assert_eq!(out.base, direct);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// On a single chain an edge outage can only delay deliveries.
    #[test]
    fn outage_never_improves_service_on_a_chain(
        inventory in 0u64..30,
        demand in 0u64..5,
        capacity in 1u64..7,
        from in 0u64..12,
        len in 1u64..6,
        edge in prop::sample::select(vec!["SW", "WC"]),
    ) {
        let tl = timeline_of(&chain(inventory, demand, capacity));
        let mut patch = ScenarioPatch::default();
        patch.disturbances.push(Disturbance::edge_outage(edge, from, from + len));
        let out = what_if(&tl, &Scenario::named("base"), &patch, &SimConfig::new(12, 0), &PolicySpec::Greedy, &CostModel::default()).unwrap();
        prop_assert!(out.delta.unmet >= 0);
        prop_assert!(out.patched.summary.consumed <= out.base.summary.consumed);
    }
}
