use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{DisturbanceKind, NoiseSource, Scenario, Target};
use crate::graph::{EdgeField, EdgeId, GraphSnapshot, LayerKind, Tick, WeightVector};
use crate::num::round;

const FIELDS: [EdgeField; 5] = [
    EdgeField::CostPerUnit,
    EdgeField::TransitTime,
    EdgeField::Capacity,
    EdgeField::Reliability,
    EdgeField::CarbonPerUnit,
];

fn slot(field: EdgeField) -> usize {
    FIELDS.iter().position(|f| *f == field).expect("all fields listed")
}

/// Drifting edge weights carried from tick to tick. Integer weights drift
/// on a continuous value and are rounded when read.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightState {
    drift: BTreeMap<EdgeId, (LayerKind, [f64; 5])>,
}

impl WeightState {
    pub fn new(snapshot: &GraphSnapshot) -> Self {
        let drift = snapshot
            .edges()
            .map(|e| {
                let w = &e.weights;
                (
                    e.id.clone(),
                    (
                        e.layer,
                        [
                            w.cost_per_unit,
                            w.transit_time as f64,
                            w.capacity as f64,
                            w.reliability,
                            w.carbon_per_unit,
                        ],
                    ),
                )
            })
            .collect();
        Self { drift }
    }

    fn current(&self, edge: &EdgeId) -> Option<WeightVector> {
        let (layer, v) = self.drift.get(edge)?;
        let min_transit = if *layer == LayerKind::Material { 1.0 } else { 0.0 };
        Some(WeightVector {
            cost_per_unit: v[0],
            transit_time: round(v[1]).max(min_transit) as Tick,
            capacity: round(v[2]).max(0.0) as u64,
            reliability: v[3],
            carbon_per_unit: v[4],
        })
    }
}

/// One weight that differs from the snapshot at a tick.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightPatch {
    pub edge: EdgeId,
    pub field: EdgeField,
    pub from: f64,
    pub to: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightUpdate {
    pub tick: Tick,
    /// Post-disturbance weights of every edge.
    pub effective: BTreeMap<EdgeId, WeightVector>,
    pub patches: Vec<WeightPatch>,
}

impl WeightUpdate {
    pub fn capacity(&self, edge: &EdgeId) -> u64 {
        self.effective.get(edge).map_or(0, |w| w.capacity)
    }
}

fn clamp(layer: LayerKind, field: EdgeField, value: f64) -> f64 {
    match field {
        EdgeField::CostPerUnit if layer != LayerKind::Financial => value.max(0.0),
        EdgeField::CostPerUnit => value,
        EdgeField::TransitTime if layer == LayerKind::Material => value.max(1.0),
        EdgeField::TransitTime | EdgeField::Capacity | EdgeField::CarbonPerUnit => value.max(0.0),
        EdgeField::Reliability => value.clamp(0.0, 1.0),
    }
}

/// Advances the weights to `tick`: edge noise drifts the carried weights
/// (w ← w·(1 + η), clamped to the field's range), then capacity scaling
/// and outages are applied for this tick only.
pub fn update_edge_weights(
    snapshot: &GraphSnapshot,
    scenario: &Scenario,
    tick: Tick,
    noise: &NoiseSource,
    state: &mut WeightState,
) -> WeightUpdate {
    for (index, d) in scenario.active_with_index(tick) {
        if d.kind != DisturbanceKind::EdgeNoise {
            continue;
        }
        let Target::Edge { edge } = &d.target else {
            continue;
        };
        let Some((layer, values)) = state.drift.get_mut(edge) else {
            continue;
        };
        let field = d.field.unwrap_or(EdgeField::CostPerUnit);
        let eta = noise.uniform(edge.as_str(), tick, 1 + index as u64, d.magnitude);
        let v = &mut values[slot(field)];
        *v = clamp(*layer, field, *v * (1.0 + eta));
    }

    let mut effective = BTreeMap::new();
    let mut patches = Vec::new();
    for edge in snapshot.edges() {
        let mut w = state.current(&edge.id).unwrap_or(edge.weights);
        w.capacity = scenario.effective_capacity(edge, w.capacity, tick);
        for field in FIELDS {
            let (from, to) = (edge.weights.get(field), w.get(field));
            if from != to {
                patches.push(WeightPatch {
                    edge: edge.id.clone(),
                    field,
                    from,
                    to,
                });
            }
        }
        effective.insert(edge.id.clone(), w);
    }
    WeightUpdate {
        tick,
        effective,
        patches,
    }
}
