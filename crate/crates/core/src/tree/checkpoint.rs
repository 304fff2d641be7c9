use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{MousseConfig, MousseTree, NodeEntry, NodeRole};
use crate::error::{MousseError, Result};
use crate::subset::{NodeId, SubsetNode};
use crate::tracking::PetrelsState;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON document holding the full tree state. Floats are written
/// in shortest round-trip form, so a save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeCheckpoint {
    pub version: u32,
    pub dim: usize,
    pub config: MousseConfig,
    pub eps_avg: f64,
    pub last_e: f64,
    pub steps: u64,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub level: u32,
    pub index: u64,
    pub role: NodeRole,
    /// Basis columns.
    pub basis: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub delta: f64,
    /// Row-major `d×d` inverse correlation matrices, one per ambient row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub petrels: Option<Vec<Vec<f64>>>,
}

impl MousseTree {
    pub fn checkpoint(&self) -> TreeCheckpoint {
        let nodes = self
            .nodes
            .iter()
            .map(|(&id, entry)| {
                let s = &entry.subset;
                NodeRecord {
                    level: id.level,
                    index: id.index,
                    role: self.role(id).expect("stored node has a role"),
                    basis: s.basis.column_iter().map(|c| c.iter().copied().collect()).collect(),
                    center: s.center.iter().copied().collect(),
                    lambdas: s.lambdas.iter().copied().collect(),
                    delta: s.delta,
                    petrels: entry.petrels.as_ref().map(|p| {
                        p.r_inv
                            .iter()
                            .map(|r| r.transpose().iter().copied().collect())
                            .collect()
                    }),
                }
            })
            .collect();
        TreeCheckpoint {
            version: CHECKPOINT_VERSION,
            dim: self.dim,
            config: self.config,
            eps_avg: self.eps_avg,
            last_e: self.last_e,
            steps: self.steps,
            nodes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.checkpoint()).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TreeCheckpoint =
            serde_json::from_str(text).map_err(|e| MousseError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(doc)
    }

    pub fn from_checkpoint(doc: TreeCheckpoint) -> Result<Self> {
        if doc.version != CHECKPOINT_VERSION {
            return Err(MousseError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                doc.version
            )));
        }
        doc.config.validate(doc.dim)?;
        let dim = doc.dim;
        let d = doc.config.d;
        let bad = |msg: String| MousseError::Checkpoint(msg);
        let mut nodes = BTreeMap::new();
        let mut leaves = BTreeSet::new();
        let mut members = BTreeSet::new();
        for rec in doc.nodes {
            let id = NodeId::new(rec.level, rec.index);
            if rec.basis.len() != d || rec.basis.iter().any(|c| c.len() != dim) {
                return Err(bad(format!("node {id}: basis must be {d} columns of length {dim}")));
            }
            let basis = DMatrix::from_fn(dim, d, |i, j| rec.basis[j][i]);
            let mut subset = SubsetNode::new(
                id,
                basis,
                DVector::from_vec(rec.center),
                DVector::from_vec(rec.lambdas),
                rec.delta,
            )
            .map_err(|e| bad(format!("node {id}: {e}")))?;
            subset.is_virtual = rec.role == NodeRole::Virtual;
            let petrels = match rec.petrels {
                None => None,
                Some(rows) => {
                    if rows.len() != dim || rows.iter().any(|r| r.len() != d * d) {
                        return Err(bad(format!("node {id}: malformed PETRELS state")));
                    }
                    let r_inv = rows
                        .into_iter()
                        .map(|r| DMatrix::from_row_slice(d, d, &r))
                        .collect();
                    Some(PetrelsState { r_inv })
                }
            };
            match rec.role {
                NodeRole::Leaf => {
                    leaves.insert(id);
                    members.insert(id);
                }
                NodeRole::Internal => {
                    members.insert(id);
                }
                NodeRole::Virtual => {}
            }
            if nodes.insert(id, NodeEntry { subset, petrels }).is_some() {
                return Err(bad(format!("duplicate node {id}")));
            }
        }
        let mut tree = MousseTree::from_parts(dim, doc.config, nodes, leaves, members);
        tree.eps_avg = doc.eps_avg;
        tree.last_e = doc.last_e;
        tree.steps = doc.steps;
        tree.check_invariants().map_err(bad)?;
        Ok(tree)
    }
}
