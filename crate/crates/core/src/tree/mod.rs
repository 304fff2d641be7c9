//! Multiscale union-of-subsets model.
//!
//! Nodes live in a map keyed by [`NodeId`]. The leaf set `A_t` holds the
//! subsets that make up the current approximation; `T_t` holds every
//! non-virtual node (leaves and their ancestors). Each leaf additionally owns
//! two virtual children that are updated alongside it and promoted when the
//! leaf splits.

mod checkpoint;
mod init;

use std::collections::{BTreeMap, BTreeSet};

use log::{debug, trace};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{MousseError, Result};
use crate::subset::{residual, NodeId, Observation, ProjectionResult, SubsetNode};
use crate::tracking::{self, PetrelsState, TrackerKind};

pub use checkpoint::{TreeCheckpoint, CHECKPOINT_VERSION};
pub use init::{fit_subset, kmeans_bipartition, KMEANS_MAX_ITER};

/// Which subsets receive each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdatePolicy {
    /// Nearest leaf, its ancestors and its closest virtual child.
    #[default]
    Nearest,
    /// Every node, with step sizes proportional to inverse distance.
    All,
}

/// When the split/merge tests measure the sample's distance to the leaf,
/// its closest virtual child and its parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceTiming {
    /// After the nodes have absorbed the sample.
    #[default]
    AfterUpdate,
    /// With the parameters the sample was assigned under.
    BeforeUpdate,
}

/// When the initial recursive partition stops refining a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStop {
    /// Mean minor eigenvalue `δ < ε`.
    MinorEigenvalue,
    /// Expected off-subset energy `(D − d) δ < ε`, on the scale of `e²`.
    #[default]
    ResidualEnergy,
}

/// Normalization of the exponentially forgotten residual energy `ε_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualAverage {
    /// `ε_{t+1} = α ε_t + (1 − α) e²_{t+1}`, on the same scale as `e²`.
    #[default]
    Weighted,
    /// `ε_{t+1} = α ε_t + e²_{t+1}`, the undiscounted-weight sum.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MousseConfig {
    /// Intrinsic dimension of every subset.
    pub d: usize,
    /// Residual tolerance `ε` for splitting, merging and initialization.
    pub eps: f64,
    /// Forgetting factor.
    pub alpha: f64,
    /// Complexity weight per subset.
    pub mu: f64,
    pub tracker: TrackerKind,
    /// Deepest level a leaf may occupy. `0` pins the model to a single subset.
    pub max_depth: u32,
    pub update_policy: UpdatePolicy,
    pub residual_average: ResidualAverage,
    #[serde(default)]
    pub distance_timing: DistanceTiming,
    #[serde(default)]
    pub init_stop: InitStop,
}

impl Default for MousseConfig {
    fn default() -> Self {
        MousseConfig {
            d: 1,
            eps: 0.1,
            alpha: 0.9,
            mu: 0.1,
            tracker: TrackerKind::PetrelsFo,
            max_depth: 12,
            update_policy: UpdatePolicy::Nearest,
            residual_average: ResidualAverage::Weighted,
            distance_timing: DistanceTiming::AfterUpdate,
            init_stop: InitStop::ResidualEnergy,
        }
    }
}

impl MousseConfig {
    /// Configuration of the single-subspace baseline: one PETRELS-FO subset,
    /// never split or merged.
    pub fn single_subspace(mut self) -> Self {
        self.max_depth = 0;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(MousseError::InvalidConfig(msg));
        if self.d == 0 || self.d >= dim {
            return bad(format!("d = {} must satisfy 1 <= d < D = {dim}", self.d));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} must lie in (0, 1)", self.alpha));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps = {} must be positive", self.eps));
        }
        if !(self.mu > 0.0) {
            return bad(format!("mu = {} must be positive", self.mu));
        }
        if self.max_depth > 60 {
            return bad(format!("max_depth = {} exceeds 60", self.max_depth));
        }
        self.tracker.validate()
    }
}

/// Role of a stored node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    Internal,
    Leaf,
    Virtual,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct NodeEntry {
    pub subset: SubsetNode,
    pub petrels: Option<PetrelsState>,
}

/// Structural decision taken at the end of a step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StructureAction {
    None,
    Split,
    SplitDeclinedDepth,
    Merge,
    MergeDeclinedSibling,
}

/// Inputs and outcome of the split/merge tests for one step, kept so the
/// decision can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub leaf: NodeId,
    pub leaf_distance: f64,
    pub virtual_child: Option<NodeId>,
    pub child_distance: Option<f64>,
    pub parent: Option<NodeId>,
    pub parent_distance: Option<f64>,
    pub eps: f64,
    pub eps_tolerance: f64,
    pub mu: f64,
    pub k_before: usize,
    pub action: StructureAction,
}

impl DecisionTrace {
    pub fn split_condition(&self) -> bool {
        let k = self.k_before as f64;
        self.eps > self.eps_tolerance
            && self
                .child_distance
                .is_some_and(|dc| dc + self.mu * (k + 1.0) < self.leaf_distance + self.mu * k)
    }

    pub fn merge_condition(&self) -> bool {
        let k = self.k_before as f64;
        self.eps < self.eps_tolerance
            && self
                .parent_distance
                .is_some_and(|dp| dp + self.mu * (k - 1.0) < self.leaf_distance + self.mu * k)
    }
}

/// Result of feeding one observation to the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub t: u64,
    pub e: f64,
    pub eps: f64,
    pub k: usize,
    pub skipped: bool,
    pub nearest: Option<NodeId>,
    /// Nodes whose parameters this step updated.
    pub touched: Vec<NodeId>,
    pub trace: Option<DecisionTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MousseTree {
    dim: usize,
    config: MousseConfig,
    nodes: BTreeMap<NodeId, NodeEntry>,
    leaves: BTreeSet<NodeId>,
    members: BTreeSet<NodeId>,
    eps_avg: f64,
    last_e: f64,
    steps: u64,
}

impl MousseTree {
    /// Builds a tree from a complete training batch by recursive 2-means.
    pub fn init_from_batch(samples: &[DVector<f64>], config: MousseConfig) -> Result<Self> {
        init::build(samples, config)
    }

    pub(crate) fn from_parts(
        dim: usize,
        config: MousseConfig,
        nodes: BTreeMap<NodeId, NodeEntry>,
        leaves: BTreeSet<NodeId>,
        members: BTreeSet<NodeId>,
    ) -> Self {
        MousseTree {
            dim,
            config,
            nodes,
            leaves,
            members,
            eps_avg: 0.0,
            last_e: 0.0,
            steps: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &MousseConfig {
        &self.config
    }

    /// Number of leaves `K_t`.
    pub fn k(&self) -> usize {
        self.leaves.len()
    }

    pub fn eps_avg(&self) -> f64 {
        self.eps_avg
    }

    pub fn last_residual(&self) -> f64 {
        self.last_e
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Deepest leaf level.
    pub fn depth(&self) -> u32 {
        self.leaves.iter().map(|id| id.level).max().unwrap_or(0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.leaves.iter().copied()
    }

    /// All non-virtual nodes `T_t`.
    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.members.iter().copied()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&SubsetNode> {
        self.nodes.get(&id).map(|e| &e.subset)
    }

    pub fn petrels_state(&self, id: NodeId) -> Option<&PetrelsState> {
        self.nodes.get(&id).and_then(|e| e.petrels.as_ref())
    }

    pub fn role(&self, id: NodeId) -> Option<NodeRole> {
        if self.leaves.contains(&id) {
            Some(NodeRole::Leaf)
        } else if self.members.contains(&id) {
            Some(NodeRole::Internal)
        } else if self.nodes.contains_key(&id) {
            Some(NodeRole::Virtual)
        } else {
            None
        }
    }

    /// Leaf minimizing the scaled distance; ties go to the smaller id.
    pub fn nearest_subset(&self, obs: &Observation) -> Result<(NodeId, ProjectionResult, f64)> {
        obs.check_dim(self.dim)?;
        let mut best: Option<(NodeId, ProjectionResult, f64)> = None;
        for &id in &self.leaves {
            let node = &self.nodes[&id].subset;
            let Ok(pr) = node.project(obs) else { continue };
            let dist = node.scaled_distance(&pr);
            if best.as_ref().is_none_or(|(_, _, b)| dist < *b) {
                best = Some((id, pr, dist));
            }
        }
        best.ok_or_else(|| {
            MousseError::RankDeficient(format!("no leaf can project sample t = {}", obs.t))
        })
    }

    /// Scaled distance of `obs` to every leaf, in id order (`None` where the
    /// projection is rank deficient).
    pub fn leaf_distances(&self, obs: &Observation) -> Vec<(NodeId, Option<f64>)> {
        self.leaves
            .iter()
            .map(|&id| (id, self.nodes[&id].subset.distance_to(obs).ok()))
            .collect()
    }

    fn closest_virtual_child(&self, leaf: NodeId, obs: &Observation) -> Option<NodeId> {
        leaf.children()
            .into_iter()
            .filter_map(|id| {
                let node = &self.nodes.get(&id)?.subset;
                node.distance_to(obs).ok().map(|dist| (id, dist))
            })
            .fold(None, |best: Option<(NodeId, f64)>, (id, dist)| match best {
                Some((_, b)) if b <= dist => best,
                _ => Some((id, dist)),
            })
            .map(|(id, _)| id)
    }

    /// Processes one sample: nearest leaf, residual, parameter updates,
    /// residual average and the split/merge tests.
    pub fn step(&mut self, obs: &Observation) -> Result<StepOutcome> {
        obs.check_dim(self.dim)?;
        self.steps += 1;
        let (leaf, leaf_pr, leaf_dist) = match self.nearest_subset(obs) {
            Ok(found) => found,
            Err(MousseError::RankDeficient(msg)) => {
                debug!("skipping sample t = {}: {msg}", obs.t);
                return Ok(StepOutcome {
                    t: obs.t,
                    e: self.last_e,
                    eps: self.eps_avg,
                    k: self.k(),
                    skipped: true,
                    nearest: None,
                    touched: Vec::new(),
                    trace: None,
                });
            }
            Err(err) => return Err(err),
        };
        let e = residual(leaf_dist);
        let virtual_child = self.closest_virtual_child(leaf, obs);
        let before = (self.config.distance_timing == DistanceTiming::BeforeUpdate)
            .then(|| self.test_distances(leaf, virtual_child, obs));

        let touched = match self.config.update_policy {
            UpdatePolicy::Nearest => {
                let mut touched = Vec::with_capacity(leaf.level as usize + 2);
                self.update_node(leaf, obs, Some(leaf_pr), 1.0);
                touched.push(leaf);
                for id in leaf.ancestors() {
                    if self.update_node(id, obs, None, 1.0) {
                        touched.push(id);
                    }
                }
                if let Some(child) = virtual_child {
                    if self.update_node(child, obs, None, 1.0) {
                        touched.push(child);
                    }
                }
                touched
            }
            UpdatePolicy::All => self.update_all(obs),
        };

        let alpha = self.config.alpha;
        self.eps_avg = match self.config.residual_average {
            ResidualAverage::Weighted => alpha * self.eps_avg + (1.0 - alpha) * e * e,
            ResidualAverage::Sum => alpha * self.eps_avg + e * e,
        };
        self.last_e = e;

        let distances = before.unwrap_or_else(|| self.test_distances(leaf, virtual_child, obs));
        let trace = self.structure_update(leaf, virtual_child, distances);
        Ok(StepOutcome {
            t: obs.t,
            e,
            eps: self.eps_avg,
            k: self.k(),
            skipped: false,
            nearest: Some(leaf),
            touched,
            trace: Some(trace),
        })
    }

    /// Updates one node's scalar parameters and basis; returns false when the
    /// node cannot project the sample.
    fn update_node(
        &mut self,
        id: NodeId,
        obs: &Observation,
        pr: Option<ProjectionResult>,
        weight: f64,
    ) -> bool {
        let Some(entry) = self.nodes.get_mut(&id) else {
            return false;
        };
        let pr = match pr {
            Some(pr) => pr,
            None => match entry.subset.project(obs) {
                Ok(pr) => pr,
                Err(_) => return false,
            },
        };
        let alpha = 1.0 - (1.0 - self.config.alpha) * weight;
        entry.subset.update_scalar_params(obs, &pr, alpha);
        update_basis(entry, self.config.tracker, obs, &pr, alpha, weight);
        true
    }

    fn update_all(&mut self, obs: &Observation) -> Vec<NodeId> {
        let projected: Vec<(NodeId, ProjectionResult, f64)> = self
            .nodes
            .iter()
            .filter_map(|(&id, entry)| {
                let pr = entry.subset.project(obs).ok()?;
                let dist = entry.subset.scaled_distance(&pr);
                Some((id, pr, dist))
            })
            .collect();
        let inverse: Vec<f64> = projected
            .iter()
            .map(|(_, _, dist)| 1.0 / dist.max(f64::MIN_POSITIVE))
            .collect();
        let total: f64 = inverse.iter().sum();
        let mut touched = Vec::with_capacity(projected.len());
        for ((id, pr, _), inv) in projected.into_iter().zip(inverse) {
            let weight = if total.is_finite() { inv / total } else { 1.0 };
            if self.update_node(id, obs, Some(pr), weight) {
                touched.push(id);
            }
        }
        touched
    }

    /// Distances of `obs` to the leaf, the virtual child and the parent.
    fn test_distances(
        &self,
        leaf: NodeId,
        virtual_child: Option<NodeId>,
        obs: &Observation,
    ) -> (f64, Option<f64>, Option<f64>) {
        let distance = |id: NodeId| {
            self.nodes
                .get(&id)
                .and_then(|e| e.subset.distance_to(obs).ok())
        };
        (
            distance(leaf).unwrap_or(f64::INFINITY),
            virtual_child.and_then(distance),
            leaf.parent().and_then(distance),
        )
    }

    fn structure_update(
        &mut self,
        leaf: NodeId,
        virtual_child: Option<NodeId>,
        (leaf_distance, child_distance, parent_distance): (f64, Option<f64>, Option<f64>),
    ) -> DecisionTrace {
        let parent = leaf.parent();
        let mut trace = DecisionTrace {
            leaf,
            leaf_distance,
            virtual_child,
            child_distance,
            parent,
            parent_distance,
            eps: self.eps_avg,
            eps_tolerance: self.config.eps,
            mu: self.config.mu,
            k_before: self.k(),
            action: StructureAction::None,
        };
        if trace.split_condition() {
            trace.action = match self.split_node(leaf) {
                Ok(()) => StructureAction::Split,
                Err(err) => {
                    trace!("{err}");
                    StructureAction::SplitDeclinedDepth
                }
            };
        } else if trace.merge_condition() {
            trace.action = match self.merge_node(leaf) {
                Ok(()) => StructureAction::Merge,
                Err(err) => {
                    trace!("{err}");
                    StructureAction::MergeDeclinedSibling
                }
            };
        }
        trace
    }

    /// Promotes the two virtual children of `leaf` to leaves and seeds their
    /// own virtual children.
    pub fn split_node(&mut self, leaf: NodeId) -> Result<()> {
        if !self.leaves.contains(&leaf) {
            return Err(MousseError::NotALeaf(leaf));
        }
        if leaf.level + 1 > self.config.max_depth {
            return Err(MousseError::DepthLimit(leaf));
        }
        self.leaves.remove(&leaf);
        for child in leaf.children() {
            let entry = self.nodes.get_mut(&child).expect("leaf owns its virtual children");
            entry.subset.is_virtual = false;
            self.leaves.insert(child);
            self.members.insert(child);
            let seeded = seed_virtual_children(entry);
            for grandchild in seeded {
                self.nodes.insert(grandchild.subset.id, grandchild);
            }
        }
        debug!("split {leaf}: K = {}", self.k());
        Ok(())
    }

    /// Collapses `leaf` and its sibling into their parent.
    pub fn merge_node(&mut self, leaf: NodeId) -> Result<()> {
        if !self.leaves.contains(&leaf) {
            return Err(MousseError::NotALeaf(leaf));
        }
        let (Some(parent), Some(sibling)) = (leaf.parent(), leaf.sibling()) else {
            return Err(MousseError::NotALeaf(leaf));
        };
        if !self.leaves.contains(&sibling) {
            return Err(MousseError::SiblingNotLeaf(leaf));
        }
        for id in [leaf, sibling] {
            for grandchild in id.children() {
                self.nodes.remove(&grandchild);
            }
            self.leaves.remove(&id);
            self.members.remove(&id);
            if let Some(entry) = self.nodes.get_mut(&id) {
                entry.subset.is_virtual = true;
            }
        }
        self.leaves.insert(parent);
        debug!("merge {leaf} into {parent}: K = {}", self.k());
        Ok(())
    }

    /// Checks every structural invariant, describing the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.leaves.is_empty() {
            return Err("empty leaf set".into());
        }
        if !self.members.contains(&NodeId::ROOT) {
            return Err("root missing from T_t".into());
        }
        for &leaf in &self.leaves {
            if !self.members.contains(&leaf) {
                return Err(format!("leaf {leaf} not in T_t"));
            }
            if leaf.ancestors().any(|a| self.leaves.contains(&a)) {
                return Err(format!("leaf {leaf} has a leaf ancestor"));
            }
            for child in leaf.children() {
                match self.nodes.get(&child) {
                    Some(e) if e.subset.is_virtual && !self.members.contains(&child) => {}
                    _ => return Err(format!("leaf {leaf} lacks virtual child {child}")),
                }
            }
        }
        for &id in &self.members {
            let Some(entry) = self.nodes.get(&id) else {
                return Err(format!("member {id} missing from node store"));
            };
            if entry.subset.is_virtual {
                return Err(format!("member {id} flagged virtual"));
            }
            if let Some(parent) = id.parent() {
                if !self.members.contains(&parent) || self.leaves.contains(&parent) {
                    return Err(format!("member {id} has no internal parent"));
                }
            }
            if !self.leaves.contains(&id) {
                for child in id.children() {
                    if !self.members.contains(&child) {
                        return Err(format!("internal node {id} lacks child {child}"));
                    }
                }
            }
        }
        for (&id, entry) in &self.nodes {
            if entry.subset.id != id {
                return Err(format!("node stored at {id} carries id {}", entry.subset.id));
            }
            if !self.members.contains(&id) {
                let owner_is_leaf = id.parent().is_some_and(|p| self.leaves.contains(&p));
                if !owner_is_leaf {
                    return Err(format!("virtual node {id} not owned by a leaf"));
                }
            }
            if entry.subset.orthonormality_error() > 1e-8 {
                return Err(format!(
                    "node {id} basis not orthonormal: {:e}",
                    entry.subset.orthonormality_error()
                ));
            }
        }
        Ok(())
    }
}

pub(crate) fn new_entry(subset: SubsetNode, tracker: TrackerKind) -> NodeEntry {
    let petrels = tracker
        .uses_petrels()
        .then(|| PetrelsState::new(subset.ambient_dim(), subset.intrinsic_dim()));
    NodeEntry { subset, petrels }
}

fn update_basis(
    entry: &mut NodeEntry,
    tracker: TrackerKind,
    obs: &Observation,
    pr: &ProjectionResult,
    alpha: f64,
    weight: f64,
) {
    let basis = &mut entry.subset.basis;
    match tracker {
        TrackerKind::Grouse { eta0 } => {
            tracking::grouse_step(basis, obs, pr, eta0 * weight);
            if crate::subset::orthonormality_error(basis) > 1e-10 {
                if let Ok(q) = tracking::orthonormalize_fo(basis) {
                    *basis = q;
                }
            }
        }
        TrackerKind::PetrelsGs | TrackerKind::PetrelsFo => {
            let state = entry.petrels.get_or_insert_with(|| {
                PetrelsState::new(basis.nrows(), basis.ncols())
            });
            let mut raw = basis.clone();
            tracking::petrels_step(&mut raw, state, obs, pr, alpha);
            let ortho = if tracker == TrackerKind::PetrelsGs {
                tracking::orthonormalize_gs(&raw)
            } else {
                tracking::orthonormalize_fo(&raw)
            };
            match ortho {
                Ok(q) => *basis = q,
                Err(err) => debug!("basis update of {} rejected: {err}", entry.subset.id),
            }
        }
    }
}

/// Virtual children of `parent`: centers offset by `±sqrt(λ_max) u_max / 2`
/// along the dominant direction, whose shape eigenvalue is halved.
pub(crate) fn seed_virtual_children(parent: &NodeEntry) -> [NodeEntry; 2] {
    let node = &parent.subset;
    let m = node.dominant_direction();
    let lambda_max = node.lambdas[m];
    let offset = node.basis.column(m) * (lambda_max.sqrt() / 2.0);
    let [left, right] = node.id.children();
    let make = |id: NodeId, sign: f64| {
        let mut child = node.clone();
        child.id = id;
        child.is_virtual = true;
        child.center = &node.center + &offset * sign;
        child.lambdas[m] = lambda_max / 2.0;
        child.apply_floors();
        NodeEntry {
            subset: child,
            petrels: parent.petrels.clone(),
        }
    };
    [make(left, 1.0), make(right, -1.0)]
}
