use std::io;
use std::path::PathBuf;

use chaintwin_core::analytics::AnalyticsError;
use chaintwin_core::feedback::FeedbackError;
use chaintwin_core::graph::GraphError;
use chaintwin_core::ingestion::CommitError;
use chaintwin_core::optimizer::OptimizerError;
use chaintwin_core::simulation::{CostError, SimError};

/// Every failure of the engine, the store or a request.
#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("{invariant}: {message}")]
    Invariant { invariant: String, message: String },
    #[error("ingestion queue is full")]
    QueueFull,
    #[error("data directory {0} is not initialized; run `init`")]
    NotInitialized(PathBuf),
    #[error("data directory {0} is locked by another process")]
    Locked(PathBuf),
    #[error("journal line {line} is corrupt: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("internal: {0}")]
    Internal(String),
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

impl EngineError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        EngineError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn invariant(invariant: &str, message: impl ToString) -> Self {
        EngineError::Invariant {
            invariant: invariant.to_string(),
            message: message.to_string(),
        }
    }

    pub fn not_found(kind: &'static str, id: impl Into<String>) -> Self {
        EngineError::NotFound { kind, id: id.into() }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Malformed(_) => "malformed",
            EngineError::NotFound { .. } => "not_found",
            EngineError::Conflict(_) => "conflict",
            EngineError::Invariant { .. } => "invariant_violation",
            EngineError::QueueFull => "queue_full",
            EngineError::NotInitialized(_) => "not_initialized",
            EngineError::Locked(_) => "locked",
            EngineError::Corrupt { .. } => "corrupt_journal",
            EngineError::Io { .. } => "io",
            EngineError::Internal(_) => "internal",
        }
    }

    /// Caused by the caller's input rather than by the system.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            EngineError::Malformed(_)
                | EngineError::NotFound { .. }
                | EngineError::Conflict(_)
                | EngineError::Invariant { .. }
                | EngineError::NotInitialized(_)
        )
    }
}

impl From<GraphError> for EngineError {
    fn from(e: GraphError) -> Self {
        let invariant = match &e {
            GraphError::DuplicateId(_) => "unique_id",
            GraphError::InvalidAttribute { .. } => "node_attribute_bounds",
            GraphError::InvalidWeight { .. } => "edge_weight_bounds",
            GraphError::UnknownEndpoint { .. } => "edge_endpoints_live",
            GraphError::UnknownNode(_) | GraphError::UnknownEdge(_) => "known_element",
            GraphError::StaleTick { .. } => "append_after_horizon",
            GraphError::SequenceGap { .. } => "contiguous_sequence",
        };
        EngineError::invariant(invariant, e)
    }
}

impl From<CommitError> for EngineError {
    fn from(e: CommitError) -> Self {
        match e {
            CommitError::Graph(g) => g.into(),
            CommitError::Storage(s) => EngineError::Internal(s),
        }
    }
}

impl From<SimError> for EngineError {
    fn from(e: SimError) -> Self {
        let invariant = match &e {
            SimError::CapacityExceeded { .. } => "edge_capacity",
            SimError::InsufficientInventory { .. } => "outflow_within_stock",
            SimError::NegativeInventoryUnclamped { .. } => "nonnegative_inventory",
            SimError::UnknownElement(_) => "known_element",
            SimError::NotMaterial(_) => "material_layer_flow",
            SimError::InvalidControl { .. } => "valid_control",
            SimError::WrongTick { .. } => "flow_tick",
            SimError::InvalidScenario(_) => "valid_scenario",
            SimError::UnknownRule(_) => "known_rule",
            SimError::Cost(_) => "valid_cost_model",
        };
        EngineError::invariant(invariant, e)
    }
}

impl From<CostError> for EngineError {
    fn from(e: CostError) -> Self {
        EngineError::invariant("valid_cost_model", e)
    }
}

impl From<OptimizerError> for EngineError {
    fn from(e: OptimizerError) -> Self {
        match e {
            OptimizerError::Sim(s) => s.into(),
            OptimizerError::Cost(c) => c.into(),
            OptimizerError::ZeroHorizon => EngineError::invariant("positive_horizon", e),
            OptimizerError::EmptyMaterialLayer => EngineError::invariant("material_layer_present", e),
            OptimizerError::UnboundedNegativeCycle(_) => EngineError::invariant("bounded_objective", e),
            OptimizerError::Infeasible(_) => EngineError::invariant("feasible_network", e),
        }
    }
}

impl From<AnalyticsError> for EngineError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Sim(s) => s.into(),
            AnalyticsError::UnknownNode(ref n) => EngineError::not_found("node", n.as_str()),
            AnalyticsError::UnknownMeasure(ref m) => {
                EngineError::Malformed(format!("unknown centrality measure `{m}`"))
            }
            AnalyticsError::NegativeWeightPresent { .. } => EngineError::invariant("nonnegative_weights", e),
            AnalyticsError::NegativeCycleDetected(_) => EngineError::invariant("no_negative_cycle", e),
            AnalyticsError::EmptyGraph => EngineError::invariant("nonempty_graph", e),
        }
    }
}

impl From<FeedbackError> for EngineError {
    fn from(e: FeedbackError) -> Self {
        match e {
            FeedbackError::DuplicateOpenPrediction { .. } => EngineError::Conflict(e.to_string()),
            FeedbackError::UnknownParameter(ref p) => EngineError::not_found("parameter", p.to_string()),
        }
    }
}
