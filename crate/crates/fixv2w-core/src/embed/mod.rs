//! Translational embedding engine.
//!
//! Entities and relations are dense vectors; a triple (h, r, t) is scored by
//! `-‖h + r − t‖_p`, so higher scores mean more plausible facts and the
//! analytic optimum (score 0) is reached when the tail sits exactly at the
//! head translated by the relation.
//!
//! Vectors are stored as 32-bit floats; all arithmetic runs in f64 so that
//! scores and gradients are reproducible and finite-difference checkable.

mod loss;
mod storage;
mod train;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::entity::EntityId;
use crate::error::EmbedError;
use crate::graph::{RelationKind, Triple};

pub use loss::{loss_and_gradient, Batch, Example, Gradients};
pub use train::{train, TrainingConfig, TrainingRun};

/// Distance norm for the scoring function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Norm {
    L1,
    #[default]
    L2,
}

impl Norm {
    pub fn from_p(p: u32) -> Result<Self, EmbedError> {
        match p {
            1 => Ok(Norm::L1),
            2 => Ok(Norm::L2),
            other => Err(EmbedError::InvalidConfig(format!("norm_p must be 1 or 2, got {other}"))),
        }
    }

    fn apply(self, diff: &[f64]) -> f64 {
        match self {
            Norm::L1 => diff.iter().map(|d| d.abs()).sum(),
            Norm::L2 => diff.iter().map(|d| d * d).sum::<f64>().sqrt(),
        }
    }
}

/// Dense vectors for every entity and relation of a training graph, plus the
/// scoring function over them.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    dim: usize,
    norm: Norm,
    entity_ids: Vec<EntityId>,
    entity_index: HashMap<EntityId, usize>,
    relations: Vec<RelationKind>,
    relation_index: HashMap<RelationKind, usize>,
    entity_vecs: Vec<f32>,
    relation_vecs: Vec<f32>,
}

impl EmbeddingModel {
    /// Assemble a model from explicit vectors. Used by tests and tools that
    /// need hand-set embeddings; training uses [`train`].
    pub fn from_vectors(
        dim: usize,
        norm: Norm,
        entities: Vec<(EntityId, Vec<f32>)>,
        relations: Vec<(RelationKind, Vec<f32>)>,
    ) -> Result<Self, EmbedError> {
        let mut model = Self {
            dim,
            norm,
            entity_ids: Vec::with_capacity(entities.len()),
            entity_index: HashMap::new(),
            relations: Vec::with_capacity(relations.len()),
            relation_index: HashMap::new(),
            entity_vecs: Vec::with_capacity(entities.len() * dim),
            relation_vecs: Vec::with_capacity(relations.len() * dim),
        };
        for (id, vec) in entities {
            if vec.len() != dim {
                return Err(EmbedError::Format(format!(
                    "entity {id} has {} components, expected {dim}",
                    vec.len()
                )));
            }
            model.entity_index.insert(id.clone(), model.entity_ids.len());
            model.entity_ids.push(id);
            model.entity_vecs.extend_from_slice(&vec);
        }
        for (kind, vec) in relations {
            if vec.len() != dim {
                return Err(EmbedError::Format(format!(
                    "relation {kind} has {} components, expected {dim}",
                    vec.len()
                )));
            }
            model.relation_index.insert(kind, model.relations.len());
            model.relations.push(kind);
            model.relation_vecs.extend_from_slice(&vec);
        }
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    pub fn entity_count(&self) -> usize {
        self.entity_ids.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.entity_ids.iter()
    }

    pub fn entity_row(&self, id: &EntityId) -> Option<usize> {
        self.entity_index.get(id).copied()
    }

    pub fn relation_row(&self, kind: RelationKind) -> Option<usize> {
        self.relation_index.get(&kind).copied()
    }

    pub fn contains_entity(&self, id: &EntityId) -> bool {
        self.entity_index.contains_key(id)
    }

    pub fn entity_vector(&self, id: &EntityId) -> Option<&[f32]> {
        self.entity_row(id).map(|r| self.entity_slice(r))
    }

    pub fn relation_vector(&self, kind: RelationKind) -> Option<&[f32]> {
        self.relation_row(kind).map(|r| self.relation_slice(r))
    }

    pub(crate) fn entity_slice(&self, row: usize) -> &[f32] {
        &self.entity_vecs[row * self.dim..(row + 1) * self.dim]
    }

    pub(crate) fn entity_slice_mut(&mut self, row: usize) -> &mut [f32] {
        &mut self.entity_vecs[row * self.dim..(row + 1) * self.dim]
    }

    pub(crate) fn relation_slice(&self, row: usize) -> &[f32] {
        &self.relation_vecs[row * self.dim..(row + 1) * self.dim]
    }

    pub(crate) fn relation_slice_mut(&mut self, row: usize) -> &mut [f32] {
        &mut self.relation_vecs[row * self.dim..(row + 1) * self.dim]
    }

    /// Score `-‖h + r − t‖_p`. Strictly higher means more plausible; the
    /// maximum 0 is attained when t = h + r exactly.
    pub fn score(&self, triple: &Triple) -> Result<f64, EmbedError> {
        let h = self
            .entity_row(&triple.head)
            .ok_or_else(|| EmbedError::UnknownEntity(triple.head.clone()))?;
        let r = self
            .relation_row(triple.relation)
            .ok_or(EmbedError::UnknownRelation(triple.relation))?;
        let t = self
            .entity_row(&triple.tail)
            .ok_or_else(|| EmbedError::UnknownEntity(triple.tail.clone()))?;
        Ok(self.score_rows(h, r, t))
    }

    pub(crate) fn score_rows(&self, head: usize, relation: usize, tail: usize) -> f64 {
        let h = self.entity_slice(head);
        let r = self.relation_slice(relation);
        let t = self.entity_slice(tail);
        let diff: Vec<f64> = (0..self.dim)
            .map(|i| h[i] as f64 + r[i] as f64 - t[i] as f64)
            .collect();
        -self.norm.apply(&diff)
    }

    /// The `k` pool entities closest to `anchor` in plain L2 distance,
    /// ascending, ties broken by id ascending. When `k` exceeds the pool
    /// size the whole pool is returned.
    pub fn nearest_neighbors(
        &self,
        anchor: &EntityId,
        pool: &[EntityId],
        k: usize,
    ) -> Result<Vec<(EntityId, f64)>, EmbedError> {
        let a = self
            .entity_row(anchor)
            .ok_or_else(|| EmbedError::UnknownEntity(anchor.clone()))?;
        let anchor_vec = self.entity_slice(a);
        let mut scored = Vec::with_capacity(pool.len());
        for id in pool {
            let row = self.entity_row(id).ok_or_else(|| EmbedError::UnknownEntity(id.clone()))?;
            let v = self.entity_slice(row);
            let dist = (0..self.dim)
                .map(|i| {
                    let d = anchor_vec[i] as f64 - v[i] as f64;
                    d * d
                })
                .sum::<f64>()
                .sqrt();
            scored.push((id.clone(), dist));
        }
        scored.sort_by(|x, y| x.1.total_cmp(&y.1).then_with(|| x.0.cmp(&y.0)));
        scored.truncate(k);
        Ok(scored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cwe(n: u32) -> EntityId {
        EntityId::cwe(n)
    }

    fn toy_model() -> EmbeddingModel {
        EmbeddingModel::from_vectors(
            2,
            Norm::L2,
            vec![
                (EntityId::cve("CVE-2020-17533").unwrap(), vec![1.0, 2.0]),
                (cwe(252), vec![1.5, 2.5]),
                (cwe(235), vec![-3.0, 0.5]),
            ],
            vec![(RelationKind::MatchingCwe, vec![0.5, 0.5])],
        )
        .unwrap()
    }

    #[test]
    fn exact_translation_scores_zero() {
        let m = toy_model();
        let t = Triple::new(
            EntityId::cve("CVE-2020-17533").unwrap(),
            RelationKind::MatchingCwe,
            cwe(252),
        )
        .unwrap();
        // tail = head + relation exactly, the analytic maximum.
        assert!(m.score(&t).unwrap().abs() < 1e-9);
    }

    #[test]
    fn score_matches_hand_computed_norm() {
        let m = toy_model();
        let t = Triple::new(
            EntityId::cve("CVE-2020-17533").unwrap(),
            RelationKind::MatchingCwe,
            cwe(235),
        )
        .unwrap();
        // h + r - t = (4.5, 2.0); ||.||_2 = sqrt(24.25)
        let expected = -(24.25f64).sqrt();
        assert!((m.score(&t).unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn l1_norm_scoring() {
        let m = EmbeddingModel::from_vectors(
            2,
            Norm::L1,
            vec![(cwe(1), vec![1.0, 1.0]), (cwe(2), vec![0.0, 3.0])],
            vec![(RelationKind::RelatedTo, vec![1.0, -1.0])],
        )
        .unwrap();
        let t = Triple::new(cwe(1), RelationKind::RelatedTo, cwe(2)).unwrap();
        // |1+1-0| + |1-1-3| = 5
        assert!((m.score(&t).unwrap() + 5.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_entity_error_names_the_id() {
        let m = toy_model();
        let t = Triple::new(
            EntityId::cve("CVE-1999-0001").unwrap(),
            RelationKind::MatchingCwe,
            cwe(252),
        )
        .unwrap();
        match m.score(&t).unwrap_err() {
            EmbedError::UnknownEntity(id) => assert_eq!(id.key(), "CVE-1999-0001"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn nearest_neighbors_orders_by_distance_then_id() {
        let m = EmbeddingModel::from_vectors(
            2,
            Norm::L2,
            vec![
                (cwe(10), vec![0.0, 0.0]),
                (cwe(20), vec![1.0, 0.0]),
                (cwe(30), vec![0.0, 2.0]),
                (cwe(5), vec![0.0, 1.0]), // same distance as CWE-20
            ],
            vec![],
        )
        .unwrap();
        let pool = [cwe(20), cwe(30), cwe(5)];
        let nn = m.nearest_neighbors(&cwe(10), &pool, 2).unwrap();
        assert_eq!(nn[0].0, cwe(5)); // tie with CWE-20 broken by id
        assert_eq!(nn[1].0, cwe(20));
    }

    #[test]
    fn nearest_neighbors_pool_of_self_and_oversized_k() {
        let m = toy_model();
        let anchor = cwe(252);
        let nn = m.nearest_neighbors(&anchor, std::slice::from_ref(&anchor), 5).unwrap();
        assert_eq!(nn.len(), 1);
        assert_eq!(nn[0].0, anchor);
        assert_eq!(nn[0].1, 0.0);
    }
}
