//! Read-only documents served by the API and the CLI.

use std::collections::BTreeMap;

use chaintwin_core::analytics::{
    all_pairs_floyd_warshall, centrality, community_detect, dijkstra_distances, shortest_path_bellman_ford,
    shortest_path_dijkstra, BellmanFord, CentralityMeasure, CentralityReport, CommunityAssignment, Distances,
    StressReport,
};
use chaintwin_core::feedback::{ParamId, ParamState, PredictionCounts, PredictionRecord};
use chaintwin_core::graph::{EdgeId, LayerFilter, NodeId, Tick, WeightKey};
use chaintwin_core::kpi::{compute_kpis, kpi_series, KpiReport, KpiWindow};
use chaintwin_core::simulation::{PolicySpec, SimConfig, Target};
use chaintwin_core::{EdgeRecord, EntityNode, GraphSnapshot, LayerKind};
use serde::{Deserialize, Serialize};

use super::runs::RunStatus;
use super::Engine;
use crate::error::{EngineError, Result};

/// One page of a cursor-ordered list. Pass `next` as the cursor to resume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub next: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDoc {
    pub tick: Tick,
    pub nodes: Vec<EntityNode>,
    pub edges: Vec<EdgeRecord>,
    /// Edge ids per layer.
    pub layers: BTreeMap<LayerKind, Vec<EdgeId>>,
}

impl SnapshotDoc {
    pub fn of(g: &GraphSnapshot) -> Self {
        let mut layers: BTreeMap<LayerKind, Vec<EdgeId>> = LayerKind::ALL.iter().map(|&l| (l, Vec::new())).collect();
        for e in g.edges() {
            layers.entry(e.layer).or_default().push(e.id.clone());
        }
        Self {
            tick: g.tick(),
            nodes: g.nodes().cloned().collect(),
            edges: g.edges().cloned().collect(),
            layers,
        }
    }
}

/// Which snapshot and layer an analysis looks at.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphQuery {
    /// Newest tick when absent.
    #[serde(default)]
    pub tick: Option<Tick>,
    /// Every layer when absent.
    #[serde(default)]
    pub layer: Option<LayerKind>,
}

impl GraphQuery {
    pub fn filter(&self) -> LayerFilter {
        self.layer.map_or(LayerFilter::All, LayerFilter::Only)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathAlgorithm {
    #[default]
    Dijkstra,
    BellmanFord,
    FloydWarshall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathQuery {
    #[serde(default)]
    pub algorithm: PathAlgorithm,
    #[serde(default)]
    pub src: Option<NodeId>,
    #[serde(default)]
    pub dst: Option<NodeId>,
    #[serde(default = "default_weight")]
    pub weight: WeightKey,
}

fn default_weight() -> WeightKey {
    WeightKey::CostPerUnit
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub src: NodeId,
    pub dst: NodeId,
    /// `None` when `dst` is unreachable.
    pub distance: Option<f64>,
    pub edges: Vec<EdgeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeCycle {
    pub edges: Vec<EdgeId>,
    pub weight: f64,
}

/// Same shape for every algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathsDoc {
    pub tick: Tick,
    pub algorithm: PathAlgorithm,
    pub weight: WeightKey,
    pub paths: Vec<PathEntry>,
    pub negative_cycle: Option<NegativeCycle>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StressQuery {
    pub scenario: String,
    pub horizon: Tick,
    #[serde(default)]
    pub seed: u64,
    /// Elements to remove one at a time; every node when both are empty.
    #[serde(default)]
    pub nodes: Vec<NodeId>,
    #[serde(default)]
    pub edges: Vec<EdgeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDoc {
    pub id: String,
    pub subject: String,
    pub measure: String,
    pub estimate: f64,
    pub samples: usize,
    pub flagged: usize,
    pub falsified: bool,
}

impl ParamDoc {
    pub fn of(id: &ParamId, st: &ParamState) -> Self {
        Self {
            id: id.to_string(),
            subject: id.subject.clone(),
            measure: id.measure.clone(),
            estimate: st.estimate,
            samples: st.history.len(),
            flagged: st.history.iter().filter(|s| s.flagged).count(),
            falsified: st.falsified,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDoc {
    pub params: Vec<ParamDoc>,
    /// Ids of parameters frozen until acknowledged.
    pub falsified: Vec<String>,
    pub predictions: PredictionCounts,
    pub open_predictions: Vec<PredictionRecord>,
}

fn path_entry(g: &GraphSnapshot, d: &Distances, dst: &NodeId) -> PathEntry {
    PathEntry {
        src: d.src.clone(),
        dst: dst.clone(),
        distance: d.dist.get(dst).copied(),
        edges: d.path_to(g, dst).unwrap_or_default(),
    }
}

fn known(g: &GraphSnapshot, id: &NodeId) -> Result<()> {
    if g.contains_node(id) {
        Ok(())
    } else {
        Err(EngineError::not_found("node", id.as_str()))
    }
}

impl Engine {
    fn snapshot_for(&self, tick: Option<Tick>) -> GraphSnapshot {
        self.timeline
            .snapshot_at(tick.unwrap_or_else(|| self.timeline.max_tick()))
    }

    pub fn snapshot_doc(&self, tick: Option<Tick>) -> SnapshotDoc {
        SnapshotDoc::of(&self.snapshot_for(tick))
    }

    /// The newest completed run, the default for KPI queries.
    pub fn latest_run(&self) -> Result<&str> {
        self.runs
            .values()
            .rev()
            .find(|r| r.status == RunStatus::Completed)
            .map(|r| r.id.as_str())
            .ok_or_else(|| EngineError::not_found("run", "latest completed"))
    }

    /// KPIs of a run over `[from, to)`; the whole horizon by default.
    pub fn kpis(&self, run: Option<&str>, from: Option<Tick>, to: Option<Tick>) -> Result<KpiReport> {
        let id = match run {
            Some(id) => id,
            None => self.latest_run()?,
        };
        let trace = self.run_trace(id)?;
        let g = self.run_snapshot(id)?;
        let window = KpiWindow::new(from.unwrap_or(0), to.unwrap_or(trace.horizon));
        Ok(compute_kpis(&trace, &g, &self.config.cost, window)?)
    }

    /// KPIs of a run over consecutive windows of `stride` ticks.
    pub fn kpi_series(&self, run: Option<&str>, stride: Tick) -> Result<Vec<KpiReport>> {
        let id = match run {
            Some(id) => id,
            None => self.latest_run()?,
        };
        let trace = self.run_trace(id)?;
        let g = self.run_snapshot(id)?;
        Ok(kpi_series(&trace, &g, &self.config.cost, stride)?)
    }

    pub fn centrality(&self, q: &GraphQuery, measure: CentralityMeasure, top_k: Option<usize>) -> CentralityReport {
        centrality(&self.snapshot_for(q.tick), measure, q.filter(), top_k)
    }

    pub fn communities(&self, q: &GraphQuery) -> Result<CommunityAssignment> {
        Ok(community_detect(&self.snapshot_for(q.tick), q.filter())?)
    }

    pub fn paths(&self, q: &GraphQuery, p: &PathQuery) -> Result<PathsDoc> {
        let g = self.snapshot_for(q.tick);
        let filter = q.filter();
        for id in p.src.iter().chain(&p.dst) {
            known(&g, id)?;
        }
        let need_src = || {
            p.src
                .clone()
                .ok_or_else(|| EngineError::Malformed(format!("{:?} needs a source node", p.algorithm)))
        };
        let mut doc = PathsDoc {
            tick: g.tick(),
            algorithm: p.algorithm,
            weight: p.weight,
            paths: Vec::new(),
            negative_cycle: None,
        };
        match p.algorithm {
            PathAlgorithm::Dijkstra => {
                let src = need_src()?;
                if let Some(dst) = &p.dst {
                    let r = shortest_path_dijkstra(&g, &src, dst, p.weight, filter)?;
                    doc.paths.push(PathEntry {
                        src: r.src,
                        dst: r.dst,
                        distance: r.reachable.then_some(r.total_weight),
                        edges: r.edges,
                    });
                } else {
                    let d = dijkstra_distances(&g, &src, p.weight, filter)?;
                    doc.paths = g.node_ids().map(|n| path_entry(&g, &d, n)).collect();
                }
            }
            PathAlgorithm::BellmanFord => {
                let src = need_src()?;
                match shortest_path_bellman_ford(&g, &src, p.weight, filter)? {
                    BellmanFord::Distances(d) => {
                        doc.paths = match &p.dst {
                            Some(dst) => vec![path_entry(&g, &d, dst)],
                            None => g.node_ids().map(|n| path_entry(&g, &d, n)).collect(),
                        };
                    }
                    BellmanFord::NegativeCycle { edges, weight } => {
                        doc.negative_cycle = Some(NegativeCycle { edges, weight });
                    }
                }
            }
            PathAlgorithm::FloydWarshall => {
                let ap = all_pairs_floyd_warshall(&g, p.weight, filter)?;
                for a in &ap.nodes {
                    if p.src.as_ref().is_some_and(|s| s != a) {
                        continue;
                    }
                    for b in &ap.nodes {
                        if p.dst.as_ref().is_some_and(|d| d != b) {
                            continue;
                        }
                        let distance = ap.distance(a, b).filter(|d| d.is_finite());
                        doc.paths.push(PathEntry {
                            src: a.clone(),
                            dst: b.clone(),
                            distance,
                            edges: distance.and_then(|_| ap.path(a, b)).unwrap_or_default(),
                        });
                    }
                }
            }
        }
        Ok(doc)
    }

    /// Removes each candidate for the whole horizon and ranks the impact.
    /// Candidates are evaluated in parallel.
    pub fn stress(&self, q: &GraphQuery, s: &StressQuery) -> Result<StressReport> {
        let scenario = self.scenario(&s.scenario)?;
        let g = self.snapshot_for(q.tick);
        let mut config = SimConfig::new(s.horizon, s.seed);
        config.snapshot_tick = g.tick();
        scenario.validate(&g, s.horizon)?;
        let mut targets: Vec<Target> = s.nodes.iter().cloned().map(Target::node).collect();
        targets.extend(s.edges.iter().cloned().map(Target::edge));
        for t in &targets {
            if let Target::Edge { edge } = t {
                if g.edge(edge).is_none() {
                    return Err(EngineError::not_found("edge", edge.as_str()));
                }
            }
        }
        crate::parallel::critical_rank(&g, scenario, &config, &PolicySpec::Greedy, &self.config.cost, &targets)
    }

    pub fn calibration_doc(&self) -> CalibrationDoc {
        let params: Vec<ParamDoc> = self.calibration.params().map(|(id, st)| ParamDoc::of(id, st)).collect();
        CalibrationDoc {
            falsified: params.iter().filter(|p| p.falsified).map(|p| p.id.clone()).collect(),
            params,
            predictions: self.predictions.counts(),
            open_predictions: self.predictions.open().cloned().collect(),
        }
    }
}
