//! Pluggable node update f_i and neighbor influence φ_ij.

use alloc::string::ToString;

use super::SimError;
use crate::graph::{NodeId, StateVector, Units, WeightVector};

pub(crate) const FLOW_BALANCE: &str = "flow_balance";
pub(crate) const WEIGHTED_SUM: &str = "weighted_sum";

/// Inputs to a node update for one tick.
#[derive(Clone, Copy, Debug)]
pub struct UpdateContext<'a> {
    pub node: &'a NodeId,
    pub state: &'a StateVector,
    /// Units credited at the end of the tick.
    pub inflow: Units,
    pub outflow: Units,
    pub supplied: Units,
    pub consumed: Units,
    /// ξ_i(t), already drawn.
    pub noise: i64,
    /// Σ_j φ_ij(w_ij, x_j) over material in-neighbors.
    pub influence: f64,
}

/// Computes the next inventory before clamping at zero.
pub trait StateUpdateRule {
    fn name(&self) -> &str;
    fn next_inventory(&self, ctx: &UpdateContext<'_>) -> i64;
}

pub trait InfluenceRule {
    fn name(&self) -> &str;
    fn influence(&self, weights: &WeightVector, neighbor: &StateVector) -> f64;
}

/// Inventory balance with additive noise. Ignores influence.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlowBalance;

impl StateUpdateRule for FlowBalance {
    fn name(&self) -> &str {
        FLOW_BALANCE
    }

    fn next_inventory(&self, c: &UpdateContext<'_>) -> i64 {
        c.state.inventory as i64 + c.inflow as i64 - c.outflow as i64 + c.supplied as i64 - c.consumed as i64 + c.noise
    }
}

/// φ_ij = reliability_ij · inventory_j.
#[derive(Clone, Copy, Debug, Default)]
pub struct WeightedSum;

impl InfluenceRule for WeightedSum {
    fn name(&self) -> &str {
        WEIGHTED_SUM
    }

    fn influence(&self, weights: &WeightVector, neighbor: &StateVector) -> f64 {
        weights.reliability * neighbor.inventory as f64
    }
}

#[derive(Clone, Copy)]
pub struct RuleSet<'r> {
    pub update: &'r dyn StateUpdateRule,
    pub influence: &'r dyn InfluenceRule,
}

impl RuleSet<'static> {
    pub fn standard() -> Self {
        RuleSet {
            update: &FlowBalance,
            influence: &WeightedSum,
        }
    }

    /// Looks up the built-in rules by name.
    pub fn resolve(update: &str, influence: &str) -> Result<Self, SimError> {
        let update: &'static dyn StateUpdateRule = match update {
            FLOW_BALANCE => &FlowBalance,
            other => return Err(SimError::UnknownRule(other.to_string())),
        };
        let influence: &'static dyn InfluenceRule = match influence {
            WEIGHTED_SUM => &WeightedSum,
            other => return Err(SimError::UnknownRule(other.to_string())),
        };
        Ok(RuleSet { update, influence })
    }
}

impl core::fmt::Debug for RuleSet<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("RuleSet")
            .field("update", &self.update.name())
            .field("influence", &self.influence.name())
            .finish()
    }
}
