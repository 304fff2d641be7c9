use std::collections::{BTreeMap, BTreeSet};

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use super::{new_entry, seed_virtual_children, InitStop, MousseConfig, MousseTree, NodeEntry};
use crate::error::{MousseError, Result};
use crate::subset::{NodeId, SubsetNode};

pub const KMEANS_MAX_ITER: usize = 50;

/// PCA fit of a subset to the samples at `indices`: top-`d` eigenpairs of the
/// unbiased sample covariance give `U` and `Λ`, the mean of the remaining
/// `D − d` eigenvalues gives `δ`.
pub fn fit_subset(
    id: NodeId,
    samples: &[DVector<f64>],
    indices: &[usize],
    d: usize,
) -> Result<SubsetNode> {
    let n = indices.len();
    if n < 2 {
        return Err(MousseError::InsufficientData(format!(
            "node {id} has {n} samples; at least 2 are needed"
        )));
    }
    let dim = samples[indices[0]].len();
    let mut mean = DVector::zeros(dim);
    for &i in indices {
        mean += &samples[i];
    }
    mean /= n as f64;
    let mut centered = DMatrix::zeros(dim, n);
    for (col, &i) in indices.iter().enumerate() {
        centered.set_column(col, &(&samples[i] - &mean));
    }
    let scale = 1.0 / (n - 1) as f64;
    let total_variance = centered.norm_squared() * scale;

    let (values, mut basis) = if n - 1 < dim {
        // Small-sample route through the n×n Gram matrix.
        let gram = centered.transpose() * &centered * scale;
        let (values, vectors) = sorted_eigen(gram, d);
        let mut basis = DMatrix::zeros(dim, d);
        for m in 0..d.min(values.len()) {
            if values[m] > 1e-14 * total_variance.max(f64::MIN_POSITIVE) {
                let u = &centered * vectors.column(m) / ((n - 1) as f64 * values[m]).sqrt();
                basis.set_column(m, &u);
            }
        }
        (values, basis)
    } else {
        let cov = &centered * centered.transpose() * scale;
        sorted_eigen(cov, d)
    };
    complete_basis(&mut basis);

    let mut lambdas = DVector::zeros(d);
    for m in 0..d.min(values.len()) {
        lambdas[m] = values[m].max(0.0);
    }
    let delta = ((total_variance - lambdas.sum()) / (dim - d) as f64).max(0.0);
    for mut col in basis.column_iter_mut() {
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    SubsetNode::new(id, basis, mean, lambdas, delta)
}

/// Top-`d` eigenpairs in decreasing eigenvalue order.
fn sorted_eigen(sym: DMatrix<f64>, d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let take = d.min(order.len());
    let values = order[..take].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(eig.eigenvectors.nrows(), d);
    for (m, &i) in order[..take].iter().enumerate() {
        vectors.set_column(m, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Orthonormalizes the columns in order, replacing zero or dependent ones
/// with coordinate axes.
fn complete_basis(basis: &mut DMatrix<f64>) {
    let (dim, d) = basis.shape();
    let mut axis = 0;
    for j in 0..d {
        let mut v = basis.column(j).clone_owned();
        loop {
            for _ in 0..2 {
                for i in 0..j {
                    let proj = basis.column(i).dot(&v);
                    v.axpy(-proj, &basis.column(i), 1.0);
                }
            }
            let norm = v.norm();
            if norm > 1e-6 {
                basis.set_column(j, &(v / norm));
                break;
            }
            v = DVector::zeros(dim);
            v[axis] = 1.0;
            axis += 1;
        }
    }
}

/// Splits `indices` into two clusters with Lloyd iterations seeded by the
/// farthest pair of points.
pub fn kmeans_bipartition(samples: &[DVector<f64>], indices: &[usize]) -> (Vec<usize>, Vec<usize>) {
    if indices.len() < 2 {
        return (indices.to_vec(), Vec::new());
    }
    let mut seeds = (indices[0], indices[1]);
    let mut farthest = -1.0;
    for (a, &i) in indices.iter().enumerate() {
        for &j in &indices[a + 1..] {
            let dist = (&samples[i] - &samples[j]).norm_squared();
            if dist > farthest {
                farthest = dist;
                seeds = (i, j);
            }
        }
    }
    let mut centers = [samples[seeds.0].clone(), samples[seeds.1].clone()];
    let mut assignment = vec![0u8; indices.len()];
    for iter in 0..KMEANS_MAX_ITER {
        let mut changed = iter == 0;
        for (slot, &i) in assignment.iter_mut().zip(indices) {
            let d0 = (&samples[i] - &centers[0]).norm_squared();
            let d1 = (&samples[i] - &centers[1]).norm_squared();
            let label = u8::from(d1 < d0);
            changed |= *slot != label;
            *slot = label;
        }
        if !changed {
            break;
        }
        for (label, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = indices
                .iter()
                .zip(&assignment)
                .filter(|(_, &l)| l as usize == label)
                .map(|(&i, _)| i)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut sum = DVector::zeros(center.len());
            for &i in &members {
                sum += &samples[i];
            }
            *center = sum / members.len() as f64;
        }
    }
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (&i, &label) in indices.iter().zip(&assignment) {
        if label == 0 {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}

pub(super) fn build(samples: &[DVector<f64>], config: MousseConfig) -> Result<MousseTree> {
    let Some(first) = samples.first() else {
        return Err(MousseError::InsufficientData("empty training batch".into()));
    };
    let dim = first.len();
    config.validate(dim)?;
    if let Some(bad) = samples.iter().position(|s| s.len() != dim) {
        return Err(MousseError::DimensionMismatch {
            expected: dim,
            got: samples[bad].len(),
        });
    }
    if samples.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(MousseError::InsufficientData(
            "training batch must be complete and finite".into(),
        ));
    }
    let d = config.d;
    let needed = 4 * (d + 1);
    if samples.len() < needed {
        return Err(MousseError::InsufficientData(format!(
            "{} training samples; at least 4(d + 1) = {needed} are needed",
            samples.len()
        )));
    }

    let mut nodes = BTreeMap::new();
    let mut leaves = BTreeSet::new();
    let mut members = BTreeSet::new();
    let mut stack = vec![(NodeId::ROOT, (0..samples.len()).collect::<Vec<_>>())];
    while let Some((id, indices)) = stack.pop() {
        let subset = fit_subset(id, samples, &indices, d)?;
        members.insert(id);
        let mut split = None;
        let spread = match config.init_stop {
            InitStop::MinorEigenvalue => subset.delta,
            InitStop::ResidualEnergy => subset.delta * (dim - d) as f64,
        };
        if spread >= config.eps && id.level < config.max_depth {
            let (left, right) = kmeans_bipartition(samples, &indices);
            if left.len() < d + 1 || right.len() < d + 1 || left.len() < 2 || right.len() < 2 {
                warn!(
                    "node {id}: partition cells of {} and {} samples are too small; keeping it as a leaf",
                    left.len(),
                    right.len()
                );
            } else {
                split = Some((left, right));
            }
        }
        let entry = new_entry(subset, config.tracker);
        match split {
            Some((left, right)) => {
                let [l, r] = id.children();
                stack.push((r, right));
                stack.push((l, left));
            }
            None => {
                for child in virtual_children(&entry, samples, &indices, config) {
                    nodes.insert(child.subset.id, child);
                }
                leaves.insert(id);
            }
        }
        nodes.insert(id, entry);
    }
    debug!("initialized tree: K = {}, {} nodes", leaves.len(), nodes.len());
    Ok(MousseTree::from_parts(dim, config, nodes, leaves, members))
}

/// Virtual children fitted from a 2-means split of the leaf's samples, falling
/// back to the split-rule seeding when a cell is too small.
fn virtual_children(
    leaf: &NodeEntry,
    samples: &[DVector<f64>],
    indices: &[usize],
    config: MousseConfig,
) -> [NodeEntry; 2] {
    let d = config.d;
    let (left, right) = kmeans_bipartition(samples, indices);
    let [l, r] = leaf.subset.id.children();
    let fitted = (|| {
        if left.len() < (d + 1).max(2) || right.len() < (d + 1).max(2) {
            return None;
        }
        let a = fit_subset(l, samples, &left, d).ok()?;
        let b = fit_subset(r, samples, &right, d).ok()?;
        Some([a, b])
    })();
    match fitted {
        Some(pair) => pair.map(|mut subset| {
            subset.is_virtual = true;
            new_entry(subset, config.tracker)
        }),
        None => seed_virtual_children(leaf),
    }
}
