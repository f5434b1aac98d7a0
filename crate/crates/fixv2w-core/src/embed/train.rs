//! Seeded training loop: Adam over the multiclass NLL with tail-only
//! corruption sampling and per-step entity renormalization.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::embed::{loss_and_gradient, Batch, EmbeddingModel, Example, Gradients, Norm};
use crate::error::EmbedError;
use crate::graph::KnowledgeGraph;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Hyperparameters of a training run. A fixed seed makes the run fully
/// deterministic (bit-identical vectors across repeats).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub negatives_per_positive: usize,
    pub regularizer_weight: f64,
    pub regularizer_order: u32,
    pub seed: u64,
    pub norm: Norm,
    pub normalize_entities: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            epochs: 300,
            batch_size: 512,
            learning_rate: 1e-3,
            negatives_per_positive: 50,
            regularizer_weight: 1e-5,
            regularizer_order: 3,
            seed: 42,
            norm: Norm::L2,
            normalize_entities: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let positive = [
            ("dim", self.dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("negatives_per_positive", self.negatives_per_positive),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(EmbedError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(EmbedError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.regularizer_weight < 0.0 {
            return Err(EmbedError::InvalidConfig("regularizer_weight must be non-negative".into()));
        }
        if self.regularizer_order == 0 {
            return Err(EmbedError::InvalidConfig("regularizer_order must be at least 1".into()));
        }
        Ok(())
    }
}

/// A trained model together with the per-epoch mean loss curve.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub model: EmbeddingModel,
    pub epoch_losses: Vec<f64>,
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }
}

/// Train an embedding model on the frozen graph.
///
/// Model rows are assigned in sorted entity/relation order, so the result
/// depends only on the graph's fact set, not on the order triples were
/// inserted.
pub fn train(graph: &KnowledgeGraph, config: &TrainingConfig) -> Result<TrainingRun, EmbedError> {
    config.validate()?;
    if graph.is_empty() {
        return Err(EmbedError::EmptyGraph);
    }

    let mut entity_ids: Vec<_> = graph.entities().cloned().collect();
    entity_ids.sort_unstable();
    let mut relations: Vec<_> = {
        let mut seen: Vec<_> = graph.triples().map(|t| t.relation).collect();
        seen.sort_unstable();
        seen.dedup();
        seen
    };
    relations.sort_unstable();

    let dim = config.dim;
    let mut model = EmbeddingModel::from_vectors(
        dim,
        config.norm,
        entity_ids.iter().map(|id| (id.clone(), vec![0.0; dim])).collect(),
        relations.iter().map(|&k| (k, vec![0.0; dim])).collect(),
    )?;

    // Canonically sorted training triples, as model rows.
    let mut triples: Vec<(usize, usize, usize)> = graph
        .triples()
        .map(|t| {
            (
                model.entity_row(&t.head).expect("interned"),
                model.relation_row(t.relation).expect("interned"),
                model.entity_row(&t.tail).expect("interned"),
            )
        })
        .collect();
    triples.sort_unstable();
    triples.dedup();

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    initialize(&mut model, &mut rng, config.normalize_entities);

    let n_entities = model.entity_count();
    let mut entity_adam = AdamState::new(n_entities * dim);
    let mut relation_adam = AdamState::new(model.relation_count() * dim);

    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        triples.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for positives in triples.chunks(config.batch_size) {
            let batch = sample_batch(positives, n_entities, config.negatives_per_positive, &mut rng);
            let (loss, grads) = loss_and_gradient(&model, &batch, config);
            if !loss.is_finite() {
                return Err(EmbedError::Diverged { epoch });
            }
            loss_sum += loss * positives.len() as f64;
            apply_update(&mut model, &grads, &mut entity_adam, &mut relation_adam, config);
        }
        epoch_losses.push(loss_sum / triples.len() as f64);
    }

    Ok(TrainingRun { model, epoch_losses })
}

fn initialize(model: &mut EmbeddingModel, rng: &mut ChaCha20Rng, normalize: bool) {
    // Xavier-uniform with fan_in = fan_out = dim.
    let dim = model.dim();
    let bound = (3.0 / dim as f64).sqrt();
    for row in 0..model.entity_count() {
        let slice = model.entity_slice_mut(row);
        for x in slice.iter_mut() {
            *x = rng.random_range(-bound..bound) as f32;
        }
        if normalize {
            renormalize_row(slice);
        }
    }
    for row in 0..model.relation_count() {
        for x in model.relation_slice_mut(row).iter_mut() {
            *x = rng.random_range(-bound..bound) as f32;
        }
    }
}

fn sample_batch(
    positives: &[(usize, usize, usize)],
    n_entities: usize,
    negatives: usize,
    rng: &mut ChaCha20Rng,
) -> Batch {
    let examples = positives
        .iter()
        .map(|&(head, relation, tail)| {
            let mut negative_tails = Vec::with_capacity(negatives);
            if n_entities > 1 {
                while negative_tails.len() < negatives {
                    let cand = rng.random_range(0..n_entities);
                    if cand != tail {
                        negative_tails.push(cand);
                    }
                }
            }
            Example { head, relation, tail, negative_tails }
        })
        .collect();
    Batch { examples }
}

fn apply_update(
    model: &mut EmbeddingModel,
    grads: &Gradients,
    entity_adam: &mut AdamState,
    relation_adam: &mut AdamState,
    config: &TrainingConfig,
) {
    let dim = model.dim();
    entity_adam.step += 1;
    relation_adam.step += 1;
    let bc1 = 1.0 - BETA1.powi(entity_adam.step as i32);
    let bc2 = 1.0 - BETA2.powi(entity_adam.step as i32);

    for (&row, g) in &grads.entity {
        let offset = row * dim;
        adam_row(
            model.entity_slice_mut(row),
            g,
            &mut entity_adam.m[offset..offset + dim],
            &mut entity_adam.v[offset..offset + dim],
            config.learning_rate,
            bc1,
            bc2,
        );
        if config.normalize_entities {
            renormalize_row(model.entity_slice_mut(row));
        }
    }
    for (&row, g) in &grads.relation {
        let offset = row * dim;
        adam_row(
            model.relation_slice_mut(row),
            g,
            &mut relation_adam.m[offset..offset + dim],
            &mut relation_adam.v[offset..offset + dim],
            config.learning_rate,
            bc1,
            bc2,
        );
    }
}

fn adam_row(params: &mut [f32], grad: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, bc1: f64, bc2: f64) {
    for i in 0..params.len() {
        let g = grad[i];
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] = (params[i] as f64 - lr * m_hat / (v_hat.sqrt() + ADAM_EPS)) as f32;
    }
}

fn renormalize_row(row: &mut [f32]) {
    let norm = row.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for x in row.iter_mut() {
            *x = (*x as f64 / norm) as f32;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entity::EntityId;
    use crate::graph::{GraphBuilder, RelationKind, Triple};

    fn single_triple_graph() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_triple(
            Triple::new(
                EntityId::cve("CVE-2020-17533").unwrap(),
                RelationKind::MatchingCwe,
                EntityId::cwe(252),
            )
            .unwrap(),
        )
        .unwrap();
        b.freeze()
    }

    fn small_config() -> TrainingConfig {
        TrainingConfig {
            dim: 8,
            epochs: 200,
            batch_size: 16,
            negatives_per_positive: 4,
            learning_rate: 5e-2,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn single_triple_outscores_its_corruption() {
        let g = single_triple_graph();
        let run = train(&g, &small_config()).unwrap();
        let cve = EntityId::cve("CVE-2020-17533").unwrap();
        let positive = run
            .model
            .score(&Triple::new(cve.clone(), RelationKind::MatchingCwe, EntityId::cwe(252)).unwrap())
            .unwrap();
        // The only possible tail corruption replaces CWE-252 with the CVE itself.
        let corrupted = run
            .model
            .score_rows(
                run.model.entity_row(&cve).unwrap(),
                run.model.relation_row(RelationKind::MatchingCwe).unwrap(),
                run.model.entity_row(&cve).unwrap(),
            );
        assert!(positive > corrupted, "positive {positive} vs corrupted {corrupted}");
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let g = single_triple_graph();
        let a = train(&g, &small_config()).unwrap();
        let b = train(&g, &small_config()).unwrap();
        assert_eq!(a.model.entity_vecs, b.model.entity_vecs);
        assert_eq!(a.model.relation_vecs, b.model.relation_vecs);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn entity_rows_stay_unit_norm() {
        let g = single_triple_graph();
        let run = train(&g, &small_config()).unwrap();
        for row in 0..run.model.entity_count() {
            let norm: f64 =
                run.model.entity_slice(row).iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-5, "row {row} has norm {norm}");
        }
    }

    #[test]
    fn empty_graph_is_rejected() {
        let g = GraphBuilder::new().freeze();
        assert!(matches!(train(&g, &small_config()), Err(EmbedError::EmptyGraph)));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let g = single_triple_graph();
        let bad = TrainingConfig { epochs: 0, ..TrainingConfig::default() };
        assert!(matches!(train(&g, &bad), Err(EmbedError::InvalidConfig(_))));
    }
}
