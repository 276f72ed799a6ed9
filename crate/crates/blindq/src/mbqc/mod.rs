//! Measurement-pattern representation, the circuit-to-pattern compiler,
//! pattern-to-circuit lowering, and byproduct (Pauli frame) calibration.
//!
//! Patterns are chain+bridge graphs: each logical wire is a 1D chain of
//! nodes measured in the X-Y plane, and entangling gates become CZ edges
//! bridging chains. A measured node with angle phi realizes the factor
//! H*Rz(phi) on its wire, so a chain computes a product of such factors and
//! bridges interleave CZs at the aligned positions.

mod compile;
mod frame;
mod lower;

pub use compile::{compile_1q, compile_circuit};
pub use frame::{calibrate_frame, PauliFrame};
pub use lower::{lower_to_circuit, lower_with_preps, LowerLayout, WireInput};

use crate::angle::Angle8;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "in")]
    Input,
    #[serde(rename = "body")]
    Body,
    #[serde(rename = "out")]
    Output,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub wire: usize,
    pub role: Role,
    #[serde(rename = "k", default, skip_serializing_if = "Option::is_none")]
    pub angle: Option<Angle8>,
}

/// Node ordering is deterministic: wire-major, then chain position; ids are
/// assigned in that order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub nodes: Vec<Node>,
    pub edges: BTreeSet<(NodeId, NodeId)>,
}

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("node ids must equal their index (got {0})")]
    BadNodeId(NodeId),
    #[error("output node {0} carries a measurement angle")]
    AngleOnOutput(NodeId),
    #[error("measured node {0} is missing an angle")]
    MissingAngle(NodeId),
    #[error("edge ({0}, {1}) is invalid")]
    BadEdge(NodeId, NodeId),
    #[error("wire {0} nodes do not form a chain")]
    BrokenChain(usize),
    #[error("input map missing wire {0}")]
    MissingWireInput(usize),
    #[error("unsupported gate {0} in pattern compiler")]
    UnsupportedGate(&'static str),
    #[error("branch {bits}: no exact Pauli byproduct on the outputs")]
    NoExactPauli { bits: String },
    #[error("branch-to-Pauli map is not XOR-linear")]
    FrameNotLinear,
    #[error("pattern produced a zero-probability branch {0}; cannot calibrate")]
    ZeroBranch(String),
    #[error("frame node set does not match the decoded pattern")]
    FrameMismatch,
    #[error(transparent)]
    Sim(#[from] crate::qsim::SimError),
}

impl Pattern {
    /// Single-wire chain with the given measurement angles plus one output
    /// node; an empty slice yields the output-only pattern.
    pub fn chain(angles: &[Angle8]) -> Pattern {
        Pattern::from_wires(vec![angles.to_vec()], BTreeSet::new())
    }

    /// Builds the wire-major pattern from per-wire measured angles and
    /// bridge edges given as ((wire, pos), (wire, pos)).
    pub fn from_wires(
        wires: Vec<Vec<Angle8>>,
        bridges: BTreeSet<((usize, usize), (usize, usize))>,
    ) -> Pattern {
        let mut nodes = Vec::new();
        let mut offsets = Vec::new();
        for (w, angles) in wires.iter().enumerate() {
            offsets.push(nodes.len());
            let m = angles.len();
            for (pos, &angle) in angles.iter().enumerate() {
                let role = if pos == 0 { Role::Input } else { Role::Body };
                nodes.push(Node {
                    id: nodes.len(),
                    wire: w,
                    role,
                    angle: Some(angle),
                });
            }
            nodes.push(Node {
                id: nodes.len(),
                wire: w,
                role: Role::Output,
                angle: None,
            });
            let _ = m;
        }
        let mut edges = BTreeSet::new();
        for (w, angles) in wires.iter().enumerate() {
            for pos in 0..angles.len() {
                let a = offsets[w] + pos;
                edges.insert((a, a + 1));
            }
        }
        for ((w1, p1), (w2, p2)) in bridges {
            let a = offsets[w1] + p1;
            let b = offsets[w2] + p2;
            edges.insert((a.min(b), a.max(b)));
        }
        Pattern { nodes, edges }
    }

    pub fn num_wires(&self) -> usize {
        self.nodes.iter().map(|n| n.wire + 1).max().unwrap_or(0)
    }

    pub fn measured_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.angle.is_some())
            .map(|n| n.id)
            .collect()
    }

    pub fn output_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.role == Role::Output)
            .map(|n| n.id)
            .collect()
    }

    /// First node of each wire (carries the wire's input state).
    pub fn input_node_of_wire(&self, wire: usize) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.wire == wire).map(|n| n.id)
    }

    /// Returns a copy with measurement angles substituted per node.
    pub fn with_angles(&self, angles: &BTreeMap<NodeId, Angle8>) -> Pattern {
        let mut out = self.clone();
        for node in &mut out.nodes {
            if node.angle.is_some() {
                node.angle = Some(angles[&node.id]);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), PatternError> {
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(PatternError::BadNodeId(node.id));
            }
            match (node.role, node.angle) {
                (Role::Output, Some(_)) => return Err(PatternError::AngleOnOutput(node.id)),
                (Role::Output, None) => {}
                (_, None) => return Err(PatternError::MissingAngle(node.id)),
                (_, Some(_)) => {}
            }
        }
        for &(a, b) in &self.edges {
            if a >= b || b >= self.nodes.len() {
                return Err(PatternError::BadEdge(a, b));
            }
        }
        // each wire's nodes must form a path under same-wire edges
        for wire in 0..self.num_wires() {
            let ids: Vec<NodeId> = self
                .nodes
                .iter()
                .filter(|n| n.wire == wire)
                .map(|n| n.id)
                .collect();
            for pair in ids.windows(2) {
                if !self.edges.contains(&(pair[0], pair[1])) {
                    return Err(PatternError::BrokenChain(wire));
                }
            }
            // no same-wire chords
            for (i, &a) in ids.iter().enumerate() {
                for &b in ids.iter().skip(i + 2) {
                    if self.edges.contains(&(a, b)) {
                        return Err(PatternError::BrokenChain(wire));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&PatternJson::from(self)).expect("pattern serialization")
    }

    pub fn from_json(text: &str) -> Result<Pattern, PatternError> {
        let raw: PatternJson = serde_json::from_str(text)
            .map_err(|e| crate::qsim::SimError::BadJson(e.to_string()))?;
        let pattern = Pattern {
            nodes: raw.nodes,
            edges: raw.edges.into_iter().map(|[a, b]| (a, b)).collect(),
        };
        pattern.validate()?;
        Ok(pattern)
    }
}

#[derive(Serialize, Deserialize)]
struct PatternJson {
    nodes: Vec<Node>,
    edges: Vec<[NodeId; 2]>,
}

impl From<&Pattern> for PatternJson {
    fn from(p: &Pattern) -> PatternJson {
        PatternJson {
            nodes: p.nodes.clone(),
            edges: p.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}
