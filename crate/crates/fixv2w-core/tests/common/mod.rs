//! Naive oracle implementations shared by the integration suites. Each
//! oracle recomputes a result from first principles, independently of the
//! indexed/optimized paths it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use fixv2w_core::embed::{loss_and_gradient, Batch, EmbeddingModel, Norm, TrainingConfig};
use fixv2w_core::graph::{KnowledgeGraph, RelationKind};
use fixv2w_core::EntityId;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).expect("fixture file readable")
}

/// Undirected ChildOf edge list of a graph, as id pairs.
pub fn hierarchy_edges(graph: &KnowledgeGraph) -> Vec<(EntityId, EntityId)> {
    graph
        .triples()
        .filter(|t| t.relation == RelationKind::ChildOf)
        .map(|t| (t.head, t.tail))
        .collect()
}

/// Breadth-first shortest path over an explicit undirected edge list.
pub fn bfs_distance(
    edges: &[(EntityId, EntityId)],
    a: &EntityId,
    b: &EntityId,
) -> Option<u32> {
    if a == b {
        return Some(0);
    }
    let mut adjacency: HashMap<&EntityId, Vec<&EntityId>> = HashMap::new();
    for (x, y) in edges {
        adjacency.entry(x).or_default().push(y);
        adjacency.entry(y).or_default().push(x);
    }
    let mut dist: HashMap<&EntityId, u32> = HashMap::from([(a, 0)]);
    let mut queue = VecDeque::from([a]);
    while let Some(cur) = queue.pop_front() {
        let d = dist[cur];
        for &next in adjacency.get(cur).into_iter().flatten() {
            if next == b {
                return Some(d + 1);
            }
            if !dist.contains_key(next) {
                dist.insert(next, d + 1);
                queue.push_back(next);
            }
        }
    }
    None
}

/// Transitive ancestors (including the node itself) by exhaustive DFS over
/// directed child->parent edges.
pub fn ancestor_closure(
    edges: &[(EntityId, EntityId)],
    node: &EntityId,
) -> BTreeSet<EntityId> {
    let mut parents: HashMap<&EntityId, Vec<&EntityId>> = HashMap::new();
    for (child, parent) in edges {
        parents.entry(child).or_default().push(parent);
    }
    let mut out: BTreeSet<EntityId> = BTreeSet::from([node.clone()]);
    let mut stack = vec![node];
    while let Some(cur) = stack.pop() {
        for &parent in parents.get(cur).into_iter().flatten() {
            if out.insert(parent.clone()) {
                stack.push(parent);
            }
        }
    }
    out
}

/// Transitive descendants (excluding the node) by exhaustive DFS.
pub fn descendant_closure(
    edges: &[(EntityId, EntityId)],
    node: &EntityId,
) -> BTreeSet<EntityId> {
    let mut children: HashMap<&EntityId, Vec<&EntityId>> = HashMap::new();
    for (child, parent) in edges {
        children.entry(parent).or_default().push(child);
    }
    let mut out: BTreeSet<EntityId> = BTreeSet::new();
    let mut stack = vec![node];
    while let Some(cur) = stack.pop() {
        for &child in children.get(cur).into_iter().flatten() {
            if out.insert(child.clone()) {
                stack.push(child);
            }
        }
    }
    out
}

/// Loss of the batch under a model whose raw vectors are given explicitly;
/// used to evaluate finite differences through the public constructor only.
pub fn loss_for_vectors(
    dim: usize,
    norm: Norm,
    entities: &[(EntityId, Vec<f32>)],
    relations: &[(RelationKind, Vec<f32>)],
    batch: &Batch,
    config: &TrainingConfig,
) -> f64 {
    let model =
        EmbeddingModel::from_vectors(dim, norm, entities.to_vec(), relations.to_vec()).unwrap();
    loss_and_gradient(&model, batch, config).0
}

/// Central finite differences of the batch loss with respect to every
/// entity and relation component.
pub struct NumericalGradients {
    pub entity: BTreeMap<usize, Vec<f64>>,
    pub relation: BTreeMap<usize, Vec<f64>>,
}

pub fn finite_difference_gradients(
    dim: usize,
    norm: Norm,
    entities: &[(EntityId, Vec<f32>)],
    relations: &[(RelationKind, Vec<f32>)],
    batch: &Batch,
    config: &TrainingConfig,
    step: f64,
) -> NumericalGradients {
    let mut out = NumericalGradients { entity: BTreeMap::new(), relation: BTreeMap::new() };
    for row in 0..entities.len() {
        let mut grad = vec![0.0; dim];
        for (i, slot) in grad.iter_mut().enumerate() {
            let mut plus = entities.to_vec();
            plus[row].1[i] = (plus[row].1[i] as f64 + step) as f32;
            let mut minus = entities.to_vec();
            minus[row].1[i] = (minus[row].1[i] as f64 - step) as f32;
            let f_plus = loss_for_vectors(dim, norm, &plus, relations, batch, config);
            let f_minus = loss_for_vectors(dim, norm, &minus, relations, batch, config);
            *slot = (f_plus - f_minus) / (2.0 * step);
        }
        out.entity.insert(row, grad);
    }
    for row in 0..relations.len() {
        let mut grad = vec![0.0; dim];
        for (i, slot) in grad.iter_mut().enumerate() {
            let mut plus = relations.to_vec();
            plus[row].1[i] = (plus[row].1[i] as f64 + step) as f32;
            let mut minus = relations.to_vec();
            minus[row].1[i] = (minus[row].1[i] as f64 - step) as f32;
            let f_plus = loss_for_vectors(dim, norm, entities, &plus, batch, config);
            let f_minus = loss_for_vectors(dim, norm, entities, &minus, batch, config);
            *slot = (f_plus - f_minus) / (2.0 * step);
        }
        out.relation.insert(row, grad);
    }
    out
}

pub fn max_relative_error(
    analytic: &BTreeMap<usize, Vec<f64>>,
    numeric: &BTreeMap<usize, Vec<f64>>,
    dim: usize,
) -> f64 {
    let mut worst: f64 = 0.0;
    for (row, fd) in numeric {
        let zero = vec![0.0; dim];
        let a = analytic.get(row).unwrap_or(&zero);
        for i in 0..dim {
            let denom = a[i].abs().max(fd[i].abs()).max(1e-6);
            worst = worst.max((a[i] - fd[i]).abs() / denom);
        }
    }
    worst
}
