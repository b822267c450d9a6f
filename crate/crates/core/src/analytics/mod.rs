//! Structural analysis of a snapshot: shortest paths, centrality,
//! communities and ablation-based stress ranking.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::graph::{EdgeId, GraphSnapshot, LayerFilter, NodeId, WeightKey};
use crate::simulation::SimError;

mod centrality;
mod community;
mod paths;
mod stress;

pub use centrality::{centrality, CentralityMeasure, CentralityReport};
pub use community::{community_detect, modularity, CommunityAssignment};
pub use paths::{
    all_pairs_floyd_warshall, dijkstra_distances, shortest_path_bellman_ford, shortest_path_dijkstra, AllPairs,
    BellmanFord, Distances, PathResult,
};
pub use stress::{critical_rank, rank_stress, stress_baseline, stress_one, StressEntry, StressReport};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("edge `{edge}` has negative weight {weight}; use Bellman-Ford")]
    NegativeWeightPresent { edge: EdgeId, weight: f64 },
    #[error("negative cycle through node `{0}`")]
    NegativeCycleDetected(NodeId),
    #[error("unknown centrality measure `{0}`")]
    UnknownMeasure(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Dense view of the admitted edges: nodes indexed in id order, edges in
/// id order.
struct Dense<'a> {
    ids: Vec<&'a NodeId>,
    index: BTreeMap<&'a NodeId, usize>,
    /// `(edge id, src, dst, weight)`.
    edges: Vec<(&'a EdgeId, usize, usize, f64)>,
    out: Vec<Vec<usize>>,
}

impl<'a> Dense<'a> {
    fn new(snapshot: &'a GraphSnapshot, filter: LayerFilter, key: Option<WeightKey>) -> Self {
        let ids: Vec<&NodeId> = snapshot.node_ids().collect();
        let index: BTreeMap<&NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let edges: Vec<_> = snapshot
            .edges_in(filter)
            .map(|e| {
                let w = key.map_or(1.0, |k| e.weights.key(k));
                (&e.id, index[&e.src], index[&e.dst], w)
            })
            .collect();
        let mut out = alloc::vec![Vec::new(); ids.len()];
        for (k, e) in edges.iter().enumerate() {
            out[e.1].push(k);
        }
        Self { ids, index, edges, out }
    }

    fn node(&self, id: &NodeId) -> Result<usize, AnalyticsError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| AnalyticsError::UnknownNode(id.clone()))
    }

    fn n(&self) -> usize {
        self.ids.len()
    }

    /// Out-neighbors with parallel edges collapsed, sorted.
    fn simple_out(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = alloc::vec![Vec::new(); self.n()];
        for &(_, s, d, _) in &self.edges {
            adj[s].push(d);
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}
