use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Dense};
use crate::graph::{GraphSnapshot, LayerFilter, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentralityMeasure {
    /// In plus out edge count.
    Degree,
    /// Unnormalized Brandes betweenness over ordered pairs.
    Betweenness,
    /// `(r − 1) / Σ d` over the `r` nodes reachable by directed hops.
    Closeness,
}

impl FromStr for CentralityMeasure {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "degree" => Ok(Self::Degree),
            "betweenness" => Ok(Self::Betweenness),
            "closeness" => Ok(Self::Closeness),
            other => Err(AnalyticsError::UnknownMeasure(other.to_string())),
        }
    }
}

impl fmt::Display for CentralityMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Degree => "degree",
            Self::Betweenness => "betweenness",
            Self::Closeness => "closeness",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentralityReport {
    pub measure: CentralityMeasure,
    pub scores: BTreeMap<NodeId, f64>,
    /// Descending by score, ties by id; truncated to `top_k`.
    pub ranking: Vec<(NodeId, f64)>,
}

pub fn centrality(
    snapshot: &GraphSnapshot,
    measure: CentralityMeasure,
    filter: LayerFilter,
    top_k: Option<usize>,
) -> CentralityReport {
    let g = Dense::new(snapshot, filter, None);
    let raw = match measure {
        CentralityMeasure::Degree => degree(&g),
        CentralityMeasure::Betweenness => betweenness(&g.simple_out()),
        CentralityMeasure::Closeness => closeness(&g.simple_out()),
    };
    let scores: BTreeMap<NodeId, f64> = g.ids.iter().map(|id| (*id).clone()).zip(raw).collect();
    let mut ranking: Vec<(NodeId, f64)> = scores.iter().map(|(k, v)| (k.clone(), *v)).collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(k) = top_k {
        ranking.truncate(k);
    }
    CentralityReport {
        measure,
        scores,
        ranking,
    }
}

fn degree(g: &Dense<'_>) -> Vec<f64> {
    let mut d = vec![0.0; g.n()];
    for &(_, s, t, _) in &g.edges {
        d[s] += 1.0;
        d[t] += 1.0;
    }
    d
}

fn bfs(adj: &[Vec<usize>], s: usize) -> Vec<Option<u64>> {
    let mut dist = vec![None; adj.len()];
    dist[s] = Some(0);
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes have a distance");
        for &v in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

pub(crate) fn betweenness(adj: &[Vec<usize>]) -> Vec<f64> {
    let n = adj.len();
    let mut bc = vec![0.0; n];
    for s in 0..n {
        let mut order = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist: Vec<Option<u64>> = vec![None; n];
        sigma[s] = 1.0;
        dist[s] = Some(0);
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let du = dist[u].expect("queued");
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
                if dist[v] == Some(du + 1) {
                    sigma[v] += sigma[u];
                    preds[v].push(u);
                }
            }
        }
        let mut delta = vec![0.0f64; n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                bc[w] += delta[w];
            }
        }
    }
    bc
}

fn closeness(adj: &[Vec<usize>]) -> Vec<f64> {
    (0..adj.len())
        .map(|s| {
            let dist = bfs(adj, s);
            let (r, total) = dist.iter().flatten().fold((0u64, 0u64), |(r, t), d| (r + 1, t + d));
            if total == 0 {
                0.0
            } else {
                (r - 1) as f64 / total as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_center_carries_all_paths() {
        // 1 -> 0 -> 2, 3 -> 0 -> 4: node 0 sits on 4 ordered pairs.
        let adj = vec![vec![2, 4], vec![0], vec![], vec![0], vec![]];
        let bc = betweenness(&adj);
        assert_eq!(bc, [4.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn split_paths_share_credit() {
        // 0 -> {1, 2} -> 3.
        let adj = vec![vec![1, 2], vec![3], vec![3], vec![]];
        assert_eq!(betweenness(&adj), [0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn closeness_of_chain() {
        let adj = vec![vec![1], vec![2], vec![]];
        let c = closeness(&adj);
        assert_eq!(c, [2.0 / 3.0, 1.0, 0.0]);
    }

    #[test]
    fn parse_measure() {
        assert_eq!(
            "closeness".parse::<CentralityMeasure>().unwrap(),
            CentralityMeasure::Closeness
        );
        assert!(matches!(
            "pagerank".parse::<CentralityMeasure>(),
            Err(AnalyticsError::UnknownMeasure(_))
        ));
    }
}
