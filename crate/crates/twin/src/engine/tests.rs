use chaintwin_core::feedback::{NewPrediction, ParamId};
use chaintwin_core::simulation::{Disturbance, ScenarioPatch, Schedule};
use chaintwin_core::{EntityKind, LayerKind, WeightVector};

use super::*;

fn plant() -> (Vec<EntityNode>, Vec<EdgeRecord>) {
    let nodes = vec![
        EntityNode::new("S1", EntityKind::Supplier).with_inventory(40),
        EntityNode::new("W1", EntityKind::Warehouse).with_inventory(20),
        EntityNode::new("C1", EntityKind::Customer).with_demand_rate(3),
    ];
    let w = WeightVector {
        capacity: 10,
        transit_time: 2,
        ..WeightVector::default()
    };
    let edges = vec![
        EdgeRecord::material("S1-W1", "S1", "W1", w),
        EdgeRecord::material("W1-C1", "W1", "C1", w),
    ];
    (nodes, edges)
}

fn fresh() -> (tempfile::TempDir, Config) {
    let dir = tempfile::tempdir().unwrap();
    let config = Config {
        data_dir: dir.path().join("data"),
        ..Config::default()
    };
    Engine::init(&config).unwrap();
    (dir, config)
}

fn seeded() -> (tempfile::TempDir, Config, Engine) {
    let (dir, config) = fresh();
    let mut e = Engine::open(config.clone()).unwrap();
    let (n, ed) = plant();
    e.load_graph(n, ed, 0).unwrap();
    (dir, config, e)
}

fn line(id: &str, tick: u64, subject: &str, measure: &str, value: f64) -> String {
    format!(
        r#"{{"source_event_id":"{id}","observed_tick":{tick},"subject":"{subject}","measure":"{measure}","value":{value}}}"#
    )
}

#[test]
fn open_requires_init_and_is_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let config = Config {
        data_dir: dir.path().to_path_buf(),
        ..Config::default()
    };
    assert!(matches!(
        Engine::open(config.clone()),
        Err(EngineError::NotInitialized(_))
    ));
    Engine::init(&config).unwrap();
    let first = Engine::open(config.clone()).unwrap();
    assert!(matches!(Engine::open(config.clone()), Err(EngineError::Locked(_))));
    drop(first);
    Engine::open(config).unwrap();
}

#[test]
fn fresh_snapshot_is_empty() {
    let (_d, config) = fresh();
    let e = Engine::open(config).unwrap();
    let doc = e.snapshot_doc(Some(0));
    assert!(doc.nodes.is_empty() && doc.edges.is_empty());
    assert_eq!(doc.layers.len(), LayerKind::ALL.len());
}

#[test]
fn reopening_replays_to_the_same_state() {
    let (_d, config, mut e) = seeded();
    let lines: Vec<String> = (0..30)
        .map(|i| {
            line(
                &format!("e{i}"),
                i / 3,
                ["S1", "W1", "C1"][i as usize % 3],
                "inventory",
                (i % 7) as f64,
            )
        })
        .collect();
    let r = e.ingest(SourceKind::Iot, lines.clone()).unwrap();
    assert_eq!(r.total, 30);
    let (hash, log, alerts) = (e.snapshot_hash(), e.log_hash(), e.alert_cursor());
    e.acknowledge_alert(1).unwrap();
    drop(e);

    let mut e = Engine::open(config).unwrap();
    assert_eq!(
        (e.snapshot_hash(), e.log_hash(), e.alert_cursor()),
        (hash.clone(), log, alerts)
    );
    assert!(e.alerts_since(0, 1).items[0].acknowledged);
    let again = e.ingest(SourceKind::Iot, lines).unwrap();
    assert_eq!(again.accepted, 0);
    assert_eq!(again.dropped, 30);
    assert_eq!(e.snapshot_hash(), hash);
}

#[test]
fn batch_counts_cover_every_line() {
    let (_d, _c, mut e) = seeded();
    let lines = vec![
        line("a", 1, "W1", "inventory", 5.0),
        line("a", 1, "W1", "inventory", 5.0),
        line("b", 1, "W9", "inventory", 5.0),
        "not json".to_string(),
    ];
    let r = e.ingest(SourceKind::Erp, lines).unwrap();
    assert_eq!((r.accepted, r.dropped, r.parked, r.rejected, r.total), (1, 1, 1, 1, 4));
    assert_eq!(r.parked_by_reason.get("unknown-subject"), Some(&1));
    assert_eq!(r.rejections.len(), 1);
}

#[test]
fn scenarios_register_once() {
    let (_d, config, mut e) = seeded();
    let s = Scenario::named("base").with_demand("C1", Schedule::Constant(3));
    assert_eq!(e.register_scenario(s.clone()).unwrap(), "base");
    e.register_scenario(s.clone()).unwrap();
    let other = Scenario::named("base").with_demand("C1", Schedule::Constant(4));
    assert!(matches!(e.register_scenario(other), Err(EngineError::Conflict(_))));
    assert!(matches!(
        e.register_scenario(Scenario::named("../x")),
        Err(EngineError::Malformed(_))
    ));
    let ghost = Scenario::named("ghost").with_demand("C9", Schedule::Constant(1));
    assert!(matches!(e.register_scenario(ghost), Err(EngineError::Invariant { .. })));
    drop(e);
    let e = Engine::open(config).unwrap();
    assert_eq!(e.scenario("base").unwrap(), &s);
}

#[test]
fn optimized_plan_realizes_its_cost_when_simulated() {
    let (_d, config, mut e) = seeded();
    e.register_scenario(Scenario::named("base")).unwrap();
    let opt = e
        .run(RunRequest {
            scenario: "base".into(),
            mode: RunMode::Optimize,
            horizon: 12,
            seed: 1,
            snapshot_tick: None,
            plan: None,
        })
        .unwrap();
    let oc = opt.cost.clone().unwrap();
    assert_eq!(opt.status, RunStatus::Completed);
    assert!((oc.realized - oc.planned.unwrap()).abs() <= 1e-9 * oc.realized.abs().max(1.0));

    let sim = e
        .run(RunRequest {
            scenario: "base".into(),
            mode: RunMode::Simulate,
            horizon: 12,
            seed: 1,
            snapshot_tick: None,
            plan: Some(PlanSource::Run(opt.id.clone())),
        })
        .unwrap();
    let sc = sim.cost.clone().unwrap();
    assert_eq!(sc.realized, oc.realized);
    assert_eq!(sc.violations, 0);
    assert_eq!(e.kpis(Some(&sim.id), None, None).unwrap(), sim.kpis.clone().unwrap());
    assert_eq!(e.kpi_series(None, 4).unwrap().len(), 3);
    drop(e);
    let e = Engine::open(config).unwrap();
    assert_eq!(e.run_record(&sim.id).unwrap(), &sim);
}

#[test]
fn short_runs_raise_a_critical_alert() {
    let (_d, _c, mut e) = seeded();
    let s = Scenario::named("cut").with_disturbance(Disturbance::edge_outage("W1-C1", 0, 10));
    e.register_scenario(s).unwrap();
    let req = RunRequest {
        scenario: "cut".into(),
        mode: RunMode::Simulate,
        horizon: 10,
        seed: 0,
        snapshot_tick: None,
        plan: None,
    };
    let rec = e.run(req).unwrap();
    assert!(rec.kpis.unwrap().service_level < 1.0);
    let alerts = e.alerts_since(0, 10).items;
    let a = alerts.iter().find(|a| a.rule == "unmet_demand").unwrap();
    assert_eq!(a.subject, rec.id);
    assert_eq!(a.severity, Severity::Critical);
}

#[test]
fn empty_patch_gives_zero_delta() {
    let (_d, _c, mut e) = seeded();
    e.register_scenario(Scenario::named("base")).unwrap();
    let mut req = WhatIfRequest {
        base: "base".into(),
        patch: ScenarioPatch::default(),
        horizon: 10,
        seed: 4,
        snapshot_tick: None,
    };
    let doc = e.whatif(&req).unwrap();
    assert!(doc.delta.is_zero());
    req.patch.disturbances.push(Disturbance::edge_outage("S1-W1", 0, 10));
    req.horizon = 30;
    assert!(!e.whatif(&req).unwrap().delta.is_zero());
    req.horizon = e.config().budgets.sync_max_horizon + 1;
    assert!(matches!(e.whatif(&req), Err(EngineError::Invariant { .. })));
}

#[test]
fn predictions_close_and_recalibrate_across_restarts() {
    let (_d, config, mut e) = seeded();
    e.record_prediction(NewPrediction {
        issued_tick: 0,
        target_tick: 3,
        subject: "S1-W1".into(),
        measure: "transit_time".into(),
        predicted: 2.0,
        provenance: "test".into(),
    })
    .unwrap();
    let dup = NewPrediction {
        issued_tick: 1,
        target_tick: 3,
        subject: "S1-W1".into(),
        measure: "transit_time".into(),
        predicted: 2.0,
        provenance: "test".into(),
    };
    assert!(matches!(e.record_prediction(dup), Err(EngineError::Conflict(_))));
    let r = e
        .ingest(SourceKind::Logistics, vec![line("t1", 3, "S1-W1", "transit_time", 6.0)])
        .unwrap();
    assert_eq!(r.discrepancies.len(), 1);
    assert!(r.discrepancies[0].flagged);
    let doc = e.calibration_doc();
    assert_eq!(doc.predictions.closed, 1);
    let p = doc.params.iter().find(|p| p.id == "S1-W1/transit_time").unwrap();
    assert!((p.estimate - (2.0 + 0.3 * 4.0)).abs() < 1e-12, "{p:?}");
    let hash = e.snapshot_hash();
    drop(e);
    let e = Engine::open(config).unwrap();
    assert_eq!(e.calibration_doc(), doc);
    assert_eq!(e.snapshot_hash(), hash);
    assert!(matches!(
        Engine::open(e.config().clone()).err(),
        Some(EngineError::Locked(_))
    ));
}

#[test]
fn unknown_ids_are_not_found() {
    let (_d, _c, mut e) = seeded();
    assert!(matches!(e.acknowledge_alert(7), Err(EngineError::NotFound { .. })));
    assert!(matches!(
        e.acknowledge_param(ParamId::new("S1", "lead_time")),
        Err(EngineError::NotFound { .. })
    ));
    assert!(matches!(e.run_record("run-000009"), Err(EngineError::NotFound { .. })));
    assert!(matches!(e.kpis(None, None, None), Err(EngineError::NotFound { .. })));
}

#[test]
fn alert_pages_chain_through_next() {
    let (_d, _c, mut e) = seeded();
    let lines: Vec<String> = (0..6)
        .map(|i| line(&format!("x{i}"), i, "W1", "inventory", 0.0))
        .collect();
    e.ingest(SourceKind::Iot, lines).unwrap();
    let total = e.alert_cursor();
    assert!(total >= 3, "{total}");
    let mut cursor = 0;
    let mut seen = Vec::new();
    loop {
        let page = e.alerts_since(cursor, 2);
        seen.extend(page.items.iter().map(|a| a.id));
        match page.next {
            Some(n) => cursor = n,
            None => break,
        }
    }
    assert_eq!(seen, (1..=total).collect::<Vec<_>>());
}
