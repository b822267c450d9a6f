//! Core engine of a graph-based supply-chain digital twin.
//!
//! Everything in this crate is pure computation over owned values: the
//! time-evolving multi-layer graph ([`graph`]), telemetry clean-up and
//! loading ([`ingestion`]), the discrete-time simulation kernel
//! ([`simulation`]), structural analytics ([`analytics`]), min-cost flow
//! planning on a time-expanded network ([`optimizer`]), KPI computation
//! ([`kpi`]) and the prediction/recalibration loop ([`feedback`]).
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the ingestion
//! queue, persistence, the HTTP service and the CLI live in the `chaintwin`
//! companion crate.
#![no_std]

extern crate alloc;

pub mod analytics;
pub mod feedback;
pub mod graph;
pub mod ingestion;
pub mod kpi;
pub mod optimizer;
pub mod provenance;
pub mod simulation;

mod num;

pub use graph::{
    Direction, EdgeField, EdgeId, EdgeRecord, EntityKind, EntityNode, GraphDelta, GraphError, GraphSnapshot,
    LayerFilter, LayerKind, NodeAttrs, NodeField, NodeId, StateVector, Tick, Timeline, Units, Validity, WeightVector,
};
pub use provenance::{Provenance, SourceKind};
