//! Candidate ranking for invalid mappings, and graph fixing with the top-N
//! predictions.
//!
//! The ranking loop scores one candidate triple (cve, MatchingCWE, w) per
//! candidate and reorders the set by descending score, ties broken by CWE id
//! ascending, so rankings are total and deterministic. Scoring is read-only
//! over the frozen graph and model and runs in parallel across cases.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateBuilder, CandidateSet, CandidateStrategy};
use crate::embed::EmbeddingModel;
use crate::entity::EntityId;
use crate::error::RemapError;
use crate::graph::{KnowledgeGraph, MappingStatus, RelationKind, Triple};

/// Population selector for invalid mappings. Placeholder mappings are
/// counted in statistics but belong to neither population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusFilter {
    Prohibited,
    Discouraged,
}

impl StatusFilter {
    pub fn matches(self, status: MappingStatus) -> bool {
        match self {
            StatusFilter::Prohibited => status == MappingStatus::Prohibited,
            StatusFilter::Discouraged => status == MappingStatus::Discouraged,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StatusFilter::Prohibited => "prohibited",
            StatusFilter::Discouraged => "discouraged",
        }
    }
}

impl std::fmt::Display for StatusFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StatusFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "prohibited" => Ok(StatusFilter::Prohibited),
            "discouraged" => Ok(StatusFilter::Discouraged),
            other => Err(format!("unknown status {other:?} (expected prohibited|discouraged)")),
        }
    }
}

/// One scored candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCwe {
    pub cwe: EntityId,
    pub score: f64,
}

/// One test/prediction instance: a CVE with an invalid old mapping, the
/// candidate set built for it, the ranked predictions, and the ground-truth
/// replacement CWEs when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemapCase {
    pub cve: EntityId,
    pub old_cwe: EntityId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<BTreeSet<EntityId>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate_set: Option<CandidateSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<ScoredCwe>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl RemapCase {
    pub fn unranked(cve: EntityId, old_cwe: EntityId) -> Self {
        Self { cve, old_cwe, truth: None, candidate_set: None, predictions: None, diagnostic: None }
    }

    /// Predicted CWE at a 1-based rank.
    pub fn prediction_at(&self, rank: usize) -> Option<&EntityId> {
        self.predictions.as_ref()?.get(rank.checked_sub(1)?).map(|s| &s.cwe)
    }
}

/// Scan the graph for CVEs mapped to an invalid CWE of the requested
/// population: one case per (CVE, invalid CWE) mapping, without truth
/// labels.
pub fn determine_invalid(graph: &KnowledgeGraph, filter: StatusFilter) -> Vec<RemapCase> {
    let mut cases: Vec<RemapCase> = graph
        .triples()
        .filter(|t| t.relation == RelationKind::MatchingCwe)
        .filter(|t| {
            graph.cwe_node(&t.tail).is_some_and(|node| filter.matches(node.status()))
        })
        .map(|t| RemapCase::unranked(t.head, t.tail))
        .collect();
    cases.sort_by(|a, b| (&a.cve, &a.old_cwe).cmp(&(&b.cve, &b.old_cwe)));
    cases.dedup_by(|a, b| a.cve == b.cve && a.old_cwe == b.old_cwe);
    cases
}

/// Rank replacement candidates for every case: build the candidate set under
/// `strategy`, score each candidate triple, and attach the descending-sorted
/// ranking. Cases whose CVE or old CWE is unknown to the model come back
/// unranked with a diagnostic instead of failing the run.
pub fn fix_v2w(
    builder: &CandidateBuilder<'_>,
    model: &EmbeddingModel,
    cases: Vec<RemapCase>,
    strategy: CandidateStrategy,
) -> Vec<RemapCase> {
    cases
        .into_par_iter()
        .map(|case| rank_case(builder, model, case, strategy))
        .collect()
}

fn rank_case(
    builder: &CandidateBuilder<'_>,
    model: &EmbeddingModel,
    mut case: RemapCase,
    strategy: CandidateStrategy,
) -> RemapCase {
    let Some(head) = model.entity_row(&case.cve) else {
        case.diagnostic = Some(format!("{} is not embedded in the model", case.cve));
        return case;
    };
    if !model.contains_entity(&case.old_cwe) {
        case.diagnostic = Some(format!("{} is not embedded in the model", case.old_cwe));
        return case;
    }
    let Some(relation) = model.relation_row(RelationKind::MatchingCwe) else {
        case.diagnostic = Some("MatchingCWE is not embedded in the model".to_string());
        return case;
    };

    let candidate_set = match builder.build(&case.cve, &case.old_cwe, strategy) {
        Ok(set) => set,
        Err(e) => {
            case.diagnostic = Some(e.to_string());
            return case;
        }
    };

    let mut scored = Vec::with_capacity(candidate_set.cwes.len());
    for cwe in &candidate_set.cwes {
        match model.entity_row(cwe) {
            Some(tail) => {
                scored.push(ScoredCwe { cwe: cwe.clone(), score: model.score_rows(head, relation, tail) })
            }
            None => {
                case.diagnostic = Some(format!("candidate {cwe} is not embedded, dropped"));
            }
        }
    }
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.cwe.cmp(&b.cwe)));

    if let Some(diag) = &candidate_set.diagnostic {
        case.diagnostic = Some(diag.clone());
    }
    case.candidate_set = Some(candidate_set);
    case.predictions = Some(scored);
    case
}

/// Prediction report lines: one JSON object per case, shaped
/// `{cve, old_cwe, strategy, ranked: [{cwe, score, rank}], truth?}`.
/// Unranked cases carry a `diagnostic` instead of `ranked`.
pub fn prediction_lines(cases: &[RemapCase]) -> Vec<serde_json::Value> {
    cases
        .iter()
        .map(|case| {
            let mut line = serde_json::json!({
                "cve": case.cve,
                "old_cwe": case.old_cwe,
            });
            if let Some(set) = &case.candidate_set {
                line["strategy"] = serde_json::json!(set.strategy);
                if let Some(fill) = set.fill_source {
                    line["fill_source"] = serde_json::json!(fill);
                }
            }
            if let Some(predictions) = &case.predictions {
                line["ranked"] = predictions
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        serde_json::json!({"cwe": s.cwe, "score": s.score, "rank": i + 1})
                    })
                    .collect();
            }
            if let Some(truth) = &case.truth {
                line["truth"] = serde_json::json!(truth);
            }
            if let Some(diagnostic) = &case.diagnostic {
                line["diagnostic"] = serde_json::json!(diagnostic);
            }
            line
        })
        .collect()
}

/// The result of applying top-N fixes.
#[derive(Debug)]
pub struct FixOutcome {
    pub graph: KnowledgeGraph,
    /// (CVE, old CWE) pairs whose mapping was replaced.
    pub fixed: Vec<(EntityId, EntityId)>,
    /// Cases skipped because they were unranked or had no predictions.
    pub skipped: usize,
}

/// Replace each case's invalid MatchingCWE triple with triples to its top-N
/// predicted CWEs. All other facts are preserved; unranked cases are skipped
/// with a diagnostic.
pub fn apply_fixes(
    graph: &KnowledgeGraph,
    cases: &[RemapCase],
    top_n: usize,
) -> Result<FixOutcome, RemapError> {
    if !(1..=3).contains(&top_n) {
        return Err(RemapError::InvalidTopN(top_n));
    }
    let mut builder = graph.to_builder();
    let mut fixed = Vec::new();
    let mut skipped = 0usize;
    let mut removals = Vec::new();
    let mut additions = Vec::new();
    for case in cases {
        let replacements: Vec<&EntityId> = match &case.predictions {
            Some(preds) if !preds.is_empty() => preds.iter().take(top_n).map(|s| &s.cwe).collect(),
            _ => {
                log::warn!("apply_fixes: skipping unranked case ({}, {})", case.cve, case.old_cwe);
                skipped += 1;
                continue;
            }
        };
        removals.push(Triple::new(
            case.cve.clone(),
            RelationKind::MatchingCwe,
            case.old_cwe.clone(),
        )?);
        for cwe in replacements {
            additions.push(Triple::new(case.cve.clone(), RelationKind::MatchingCwe, (*cwe).clone())?);
        }
        fixed.push((case.cve.clone(), case.old_cwe.clone()));
    }
    builder.remove_triples(removals);
    for triple in additions {
        builder.add_triple(triple)?;
    }
    Ok(FixOutcome { graph: builder.freeze(), fixed, skipped })
}
