use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Dense};
use crate::graph::{GraphSnapshot, LayerFilter, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    /// Community index per node. Indices follow the smallest member id.
    pub membership: BTreeMap<NodeId, usize>,
    pub communities: Vec<Vec<NodeId>>,
    pub modularity: f64,
}

/// Undirected simple projection: unordered pairs and degrees.
struct Projection {
    pairs: BTreeSet<(usize, usize)>,
    deg: Vec<i64>,
}

impl Projection {
    fn new(g: &Dense<'_>) -> Self {
        let pairs: BTreeSet<(usize, usize)> = g
            .edges
            .iter()
            .filter(|e| e.1 != e.2)
            .map(|e| (e.1.min(e.2), e.1.max(e.2)))
            .collect();
        let mut deg = vec![0i64; g.n()];
        for &(a, b) in &pairs {
            deg[a] += 1;
            deg[b] += 1;
        }
        Self { pairs, deg }
    }

    fn m(&self) -> i64 {
        self.pairs.len() as i64
    }

    fn modularity(&self, label: &[usize]) -> f64 {
        let m = self.m();
        if m == 0 {
            return 0.0;
        }
        let mut internal: BTreeMap<usize, i64> = BTreeMap::new();
        let mut degree: BTreeMap<usize, i64> = BTreeMap::new();
        for &(a, b) in &self.pairs {
            if label[a] == label[b] {
                *internal.entry(label[a]).or_default() += 1;
            }
        }
        for (i, &d) in self.deg.iter().enumerate() {
            *degree.entry(label[i]).or_default() += d;
        }
        let m = m as f64;
        degree
            .iter()
            .map(|(c, &d)| {
                let l = internal.get(c).copied().unwrap_or(0) as f64;
                let a = d as f64 / (2.0 * m);
                l / m - a * a
            })
            .sum()
    }
}

/// Greedy agglomerative modularity maximization on the undirected simple
/// projection. Each step merges the pair of adjacent communities with the
/// largest positive gain; ties go to the smallest pair of labels.
pub fn community_detect(snapshot: &GraphSnapshot, filter: LayerFilter) -> Result<CommunityAssignment, AnalyticsError> {
    let g = Dense::new(snapshot, filter, None);
    if g.n() == 0 {
        return Err(AnalyticsError::EmptyGraph);
    }
    let p = Projection::new(&g);
    let label = merge(&p, g.n());
    Ok(assignment(&g, &p, &label))
}

/// Labels are the smallest member index of each community.
fn merge(p: &Projection, n: usize) -> Vec<usize> {
    let mut label: Vec<usize> = (0..n).collect();
    let m2 = 2 * p.m();
    let mut between: BTreeMap<(usize, usize), i64> = p.pairs.iter().map(|&k| (k, 1)).collect();
    let mut degree: BTreeMap<usize, i64> = p.deg.iter().copied().enumerate().collect();
    loop {
        let mut best: Option<((usize, usize), i64)> = None;
        for (&(a, b), &e) in &between {
            let gain = m2 * e - degree[&a] * degree[&b];
            if gain > 0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some(((a, b), gain));
            }
        }
        let Some(((a, b), _)) = best else { break };
        let db = degree.remove(&b).expect("live community");
        *degree.get_mut(&a).expect("live community") += db;
        for l in label.iter_mut().filter(|l| **l == b) {
            *l = a;
        }
        let moved: Vec<((usize, usize), i64)> = between
            .iter()
            .filter(|(k, _)| k.0 == b || k.1 == b)
            .map(|(k, e)| (*k, *e))
            .collect();
        between.remove(&(a, b));
        for (k, e) in moved {
            between.remove(&k);
            let other = if k.0 == b { k.1 } else { k.0 };
            if other == a {
                continue;
            }
            *between.entry((a.min(other), a.max(other))).or_default() += e;
        }
    }
    label
}

fn assignment(g: &Dense<'_>, p: &Projection, label: &[usize]) -> CommunityAssignment {
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in label {
        let next = index.len();
        index.entry(l).or_insert(next);
    }
    let mut communities = vec![Vec::new(); index.len()];
    let mut membership = BTreeMap::new();
    for (i, l) in label.iter().enumerate() {
        let c = index[l];
        communities[c].push(g.ids[i].clone());
        membership.insert(g.ids[i].clone(), c);
    }
    CommunityAssignment {
        membership,
        communities,
        modularity: p.modularity(label),
    }
}

/// Modularity of a given partition on the undirected simple projection.
/// Nodes absent from `membership` count as singletons.
pub fn modularity(snapshot: &GraphSnapshot, filter: LayerFilter, membership: &BTreeMap<NodeId, usize>) -> f64 {
    let g = Dense::new(snapshot, filter, None);
    let p = Projection::new(&g);
    let offset = membership.values().max().map_or(0, |m| m + 1);
    let label: Vec<usize> = g
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| membership.get(*id).copied().unwrap_or(offset + i))
        .collect();
    p.modularity(&label)
}
