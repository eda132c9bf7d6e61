//! Survivable mesh design under a delay bound.

mod acceptability;
mod design;
pub(crate) mod graph;

use thiserror::Error;

use crate::geometry::{Network, NodeId};

pub use acceptability::{
    check_acceptable, complete_graph_violation, primary_path, secondary_path, Path, Verdict,
    Violation, ViolationReason,
};
pub use design::{
    evo_design, evo_iteration, opt_design, opt_iteration, DesignParams, EvoOutcome, InventoryPolicy,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("node {0} is not part of the network")]
    UnknownNode(NodeId),
    #[error("path endpoints must differ, got {0} twice")]
    SameNode(NodeId),
    #[error("node {0} appears more than once")]
    DuplicateNode(NodeId),
    #[error("mesh design needs at least 3 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("invalid design parameters: {0}")]
    InvalidParams(String),
    #[error("no acceptable network after {iterations} iterations{}", .violation.map(|v| format!(" (last violation: {v})")).unwrap_or_default())]
    NoAcceptableNetwork {
        iterations: usize,
        violation: Option<Violation>,
    },
}

/// Whether every node pair has primary and secondary paths within the delay bound.
pub fn is_acceptable(net: &Network, params: &DesignParams) -> Verdict {
    check_acceptable(net, params.delay_bound)
}
