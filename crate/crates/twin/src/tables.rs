//! Bootstrap tables for `load-graph`.
//!
//! `nodes.csv`: `id,kind[,label,inventory,backlog,capacity,lead_time,
//! demand_rate,reliability,carbon_intensity,x,y]`.
//! `edges.csv`: `id,src,dst[,layer,cost_per_unit,transit_time,capacity,
//! reliability,carbon_per_unit,valid_from,valid_until]`.
//! Empty cells take the defaults.

use std::io::Read;

use chaintwin_core::graph::{Tick, Units, Validity};
use chaintwin_core::{EdgeRecord, EntityKind, EntityNode, LayerKind, WeightVector};
use serde::Deserialize;

use crate::error::{EngineError, Result};

#[derive(Debug, Deserialize)]
struct NodeRow {
    id: String,
    kind: String,
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    inventory: Option<Units>,
    #[serde(default)]
    backlog: Option<Units>,
    #[serde(default)]
    capacity: Option<Units>,
    #[serde(default)]
    lead_time: Option<Tick>,
    #[serde(default)]
    demand_rate: Option<Units>,
    #[serde(default)]
    reliability: Option<f64>,
    #[serde(default)]
    carbon_intensity: Option<f64>,
    #[serde(default)]
    x: Option<f64>,
    #[serde(default)]
    y: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    id: String,
    src: String,
    dst: String,
    #[serde(default)]
    layer: Option<String>,
    #[serde(default)]
    cost_per_unit: Option<f64>,
    #[serde(default)]
    transit_time: Option<Tick>,
    #[serde(default)]
    capacity: Option<Units>,
    #[serde(default)]
    reliability: Option<f64>,
    #[serde(default)]
    carbon_per_unit: Option<f64>,
    #[serde(default)]
    valid_from: Option<Tick>,
    #[serde(default)]
    valid_until: Option<Tick>,
}

fn rows<T: for<'de> Deserialize<'de>>(input: impl Read, table: &str) -> Result<Vec<(usize, T)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    reader
        .deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map(|row| (i + 2, row))
                .map_err(|e| EngineError::Malformed(format!("{table} line {}: {e}", i + 2)))
        })
        .collect()
}

pub fn read_nodes(input: impl Read) -> Result<Vec<EntityNode>> {
    rows::<NodeRow>(input, "nodes")?
        .into_iter()
        .map(|(line, r)| {
            let kind: EntityKind = r
                .kind
                .parse()
                .map_err(|e| EngineError::Malformed(format!("nodes line {line}: {e}")))?;
            let mut node = EntityNode::new(r.id.as_str(), kind);
            if let Some(label) = r.label.filter(|l| !l.is_empty()) {
                node.label = label;
            }
            node.state.inventory = r.inventory.unwrap_or(0);
            node.state.backlog = r.backlog.unwrap_or(0);
            node.attrs.capacity = r.capacity;
            node.attrs.lead_time = r.lead_time;
            node.attrs.demand_rate = r.demand_rate;
            node.attrs.reliability = r.reliability;
            node.attrs.carbon_intensity = r.carbon_intensity;
            node.location = r.x.zip(r.y).map(|(x, y)| [x, y]);
            Ok(node)
        })
        .collect()
}

pub fn read_edges(input: impl Read) -> Result<Vec<EdgeRecord>> {
    rows::<EdgeRow>(input, "edges")?
        .into_iter()
        .map(|(line, r)| {
            let layer: LayerKind = match r.layer.as_deref() {
                None | Some("") => LayerKind::Material,
                Some(s) => s
                    .parse()
                    .map_err(|e| EngineError::Malformed(format!("edges line {line}: {e}")))?,
            };
            let d = WeightVector::default();
            let weights = WeightVector {
                cost_per_unit: r.cost_per_unit.unwrap_or(d.cost_per_unit),
                transit_time: r.transit_time.unwrap_or(d.transit_time),
                capacity: r.capacity.unwrap_or(d.capacity),
                reliability: r.reliability.unwrap_or(d.reliability),
                carbon_per_unit: r.carbon_per_unit.unwrap_or(d.carbon_per_unit),
            };
            let validity = Validity {
                from: r.valid_from.unwrap_or(0),
                until: r.valid_until,
            };
            Ok(EdgeRecord::new(r.id.as_str(), r.src.as_str(), r.dst.as_str(), layer, weights).with_validity(validity))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_columns_take_defaults() {
        let nodes = read_nodes("id,kind,inventory,demand_rate\nS1,supplier,40,\nC1,customer,,3\n".as_bytes()).unwrap();
        assert_eq!(nodes.len(), 2);
        assert_eq!(nodes[0].state.inventory, 40);
        assert_eq!(nodes[1].attrs.demand_rate, Some(3));
        let edges = read_edges("id,src,dst,capacity,valid_until\nE1,S1,C1,10,\nE2,C1,S1,,5\n".as_bytes()).unwrap();
        assert_eq!(edges[0].layer, LayerKind::Material);
        assert_eq!(edges[0].weights.capacity, 10);
        assert_eq!(
            edges[1].weights,
            WeightVector {
                ..WeightVector::default()
            }
        );
        assert_eq!(edges[1].validity.until, Some(5));
    }

    #[test]
    fn bad_kind_names_the_line() {
        let err = read_nodes("id,kind\nA,supplier\nB,factory\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
