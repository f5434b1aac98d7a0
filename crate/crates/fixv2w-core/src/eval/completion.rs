//! Graph-completion evaluation: filtered tail ranking over the view-1003
//! pool.
//!
//! Open-world mode scores triples revealed after the training cutoff and
//! rejects any eval triple already present in the training graph; closed
//! world scores a held-out split of the training-era graph. In both modes,
//! competing tails known true for the same head are removed from the
//! ranking (the filtered setting), so a known-true tail can never outrank
//! the query tail.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::embed::EmbeddingModel;
use crate::entity::EntityId;
use crate::error::EvalError;
use crate::eval::{known_true_tails, rank_metrics, RankObservation, RankReport};
use crate::graph::{KnowledgeGraph, RelationKind, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompletionMode {
    Open,
    Closed,
}

impl std::str::FromStr for CompletionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "open" => Ok(CompletionMode::Open),
            "closed" => Ok(CompletionMode::Closed),
            other => Err(format!("unknown mode {other:?} (expected open|closed)")),
        }
    }
}

/// Rank each eval triple's tail over the view-1003 Allowed pool of the
/// training graph, filtered, then aggregate with [`rank_metrics`].
///
/// The training graph is the basis for the filter set and, in open mode,
/// the leakage check; pass the factual pre-cutoff graph here even when the
/// model was trained on a fixed variant, so compared models rank over the
/// same filtered pools.
pub fn graph_completion_eval(
    train_graph: &KnowledgeGraph,
    eval_triples: &[Triple],
    mode: CompletionMode,
    model: &EmbeddingModel,
) -> Result<RankReport, EvalError> {
    let pool: Vec<EntityId> = {
        let mut pool: Vec<EntityId> = train_graph
            .cwe_nodes()
            .filter(|n| n.is_candidate_eligible())
            .map(|n| n.id().clone())
            .collect();
        pool.sort_unstable();
        pool
    };

    // Known-true tails per head across the eval set itself.
    let mut eval_tails: BTreeMap<&EntityId, BTreeSet<&EntityId>> = BTreeMap::new();
    for t in eval_triples {
        eval_tails.entry(&t.head).or_default().insert(&t.tail);
    }

    let relation = model.relation_row(RelationKind::MatchingCwe);
    let mut observations = Vec::with_capacity(eval_triples.len());
    for triple in eval_triples {
        if mode == CompletionMode::Open && train_graph.contains(triple) {
            return Err(EvalError::Leakage { head: triple.head.clone(), tail: triple.tail.clone() });
        }
        let mut known = known_true_tails(train_graph, &triple.head);
        known.extend(eval_tails[&triple.head].iter().map(|&t| t.clone()));
        known.remove(&triple.tail);

        let candidates: Vec<&EntityId> =
            pool.iter().filter(|id| !known.contains(id)).collect();
        let candidate_count = candidates.len();

        let (Some(head), Some(relation), Some(tail)) = (
            model.entity_row(&triple.head),
            relation,
            model.entity_row(&triple.tail),
        ) else {
            log::warn!(
                "completion eval: ({}, {}) not fully embedded, counted as unfound",
                triple.head,
                triple.tail
            );
            observations.push(RankObservation::unfound(candidate_count));
            continue;
        };
        if !candidates.contains(&&triple.tail) {
            observations.push(RankObservation::unfound(candidate_count));
            continue;
        }

        let true_score = model.score_rows(head, relation, tail);
        let mut rank = 1usize;
        for candidate in candidates {
            if candidate == &triple.tail {
                continue;
            }
            let Some(row) = model.entity_row(candidate) else { continue };
            let score = model.score_rows(head, relation, row);
            // Descending score, ties by ascending id: same total order as
            // the prediction ranking.
            if score > true_score || (score == true_score && candidate < &triple.tail) {
                rank += 1;
            }
        }
        observations.push(RankObservation::found(rank, candidate_count));
    }
    rank_metrics(&observations)
}

/// Hold out a seeded fraction of the MatchingCWE triples for closed-world
/// evaluation: returns the reduced graph and the held-out triples.
pub fn split_matching_cwe(
    graph: &KnowledgeGraph,
    holdout_fraction: f64,
    seed: u64,
) -> (KnowledgeGraph, Vec<Triple>) {
    let mut mapping_triples: Vec<Triple> =
        graph.triples().filter(|t| t.relation == RelationKind::MatchingCwe).collect();
    mapping_triples.sort_unstable();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    mapping_triples.shuffle(&mut rng);
    let holdout_len =
        ((mapping_triples.len() as f64) * holdout_fraction.clamp(0.0, 1.0)).round() as usize;
    let holdout: Vec<Triple> = mapping_triples[..holdout_len].to_vec();

    let mut builder = graph.to_builder();
    builder.remove_triples(holdout.iter().cloned());
    (builder.freeze(), holdout)
}
