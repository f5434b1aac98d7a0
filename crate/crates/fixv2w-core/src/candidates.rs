//! Allowed-CWE candidate sets for invalid mappings.
//!
//! Every strategy output is a subset of the view-1003 Allowed pool, never
//! contains the old CWE, and is rebuilt deterministically from a frozen
//! graph. Hierarchy strategies (Descendants/Family) apply to Discouraged
//! weaknesses; membership strategies (Members/MembersFnn) to Prohibited
//! categories and views; the two baselines apply to both, and are the only
//! legal choice for placeholder and deprecated old CWEs.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingModel;
use crate::entity::EntityId;
use crate::error::{CandidateError, GraphError};
use crate::graph::{CweKind, CweNode, KnowledgeGraph, MappingStatus};
use crate::remap::RemapCase;

/// The candidate selection strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateStrategy {
    Cwe1003,
    Top25,
    Descendants,
    Family,
    Members,
    MembersFnn,
    PerCweTailored,
}

impl CandidateStrategy {
    pub fn name(self) -> &'static str {
        match self {
            CandidateStrategy::Cwe1003 => "cwe1003",
            CandidateStrategy::Top25 => "top25",
            CandidateStrategy::Descendants => "descendants",
            CandidateStrategy::Family => "family",
            CandidateStrategy::Members => "members",
            CandidateStrategy::MembersFnn => "members-fnn",
            CandidateStrategy::PerCweTailored => "tailored",
        }
    }
}

impl fmt::Display for CandidateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CandidateStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "cwe1003" | "cwe-1003" => Ok(CandidateStrategy::Cwe1003),
            "top25" | "top-25" => Ok(CandidateStrategy::Top25),
            "descendants" => Ok(CandidateStrategy::Descendants),
            "family" => Ok(CandidateStrategy::Family),
            "members" => Ok(CandidateStrategy::Members),
            "members-fnn" | "fnn" => Ok(CandidateStrategy::MembersFnn),
            "tailored" => Ok(CandidateStrategy::PerCweTailored),
            other => Err(format!("unknown strategy {other:?}")),
        }
    }
}

/// How an undersized candidate set was topped up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FillSource {
    ParentExpansion,
    FnnFill,
}

/// The candidate set built for one (CVE, old CWE) pair. Serializes to the
/// audit line shape `{cve, old_cwe, strategy, candidates[], fill_source}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub cve: EntityId,
    pub old_cwe: EntityId,
    pub strategy: CandidateStrategy,
    #[serde(rename = "candidates")]
    pub cwes: Vec<EntityId>,
    pub fill_source: Option<FillSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Builds candidate sets against a frozen graph. Construction precomputes
/// the view-1003 Allowed pool; all build calls are read-only and can run in
/// parallel across cases.
pub struct CandidateBuilder<'a> {
    graph: &'a KnowledgeGraph,
    model: Option<&'a EmbeddingModel>,
    top25: Vec<EntityId>,
    min_candidates: usize,
    tailored: BTreeMap<EntityId, CandidateStrategy>,
    pool_1003: Vec<EntityId>,
}

impl<'a> CandidateBuilder<'a> {
    pub fn new(graph: &'a KnowledgeGraph) -> Self {
        let mut pool_1003: Vec<EntityId> = graph
            .cwe_nodes()
            .filter(|n| n.is_candidate_eligible())
            .map(|n| n.id().clone())
            .collect();
        pool_1003.sort_unstable();
        Self { graph, model: None, top25: Vec::new(), min_candidates: 10, tailored: BTreeMap::new(), pool_1003 }
    }

    pub fn with_model(mut self, model: &'a EmbeddingModel) -> Self {
        self.model = Some(model);
        self
    }

    /// The yearly Top-25 list, supplied as data (the list is an external
    /// artifact, not computed here).
    pub fn with_top25(mut self, top25: Vec<EntityId>) -> Self {
        self.top25 = top25;
        self
    }

    /// Minimum candidate count below which Family expands to the parent's
    /// descendants and MembersFnn tops up with nearest neighbors.
    pub fn with_min_candidates(mut self, min: usize) -> Self {
        self.min_candidates = min;
        self
    }

    pub fn with_tailored_table(mut self, table: BTreeMap<EntityId, CandidateStrategy>) -> Self {
        self.tailored = table;
        self
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        self.graph
    }

    /// The maximal legal candidate set: all Allowed view-1003 weaknesses.
    pub fn pool_1003(&self) -> &[EntityId] {
        &self.pool_1003
    }

    /// Build the candidate set for one case under the given strategy.
    pub fn build(
        &self,
        cve: &EntityId,
        old_cwe: &EntityId,
        strategy: CandidateStrategy,
    ) -> Result<CandidateSet, CandidateError> {
        let node = self
            .graph
            .cwe_node(old_cwe)
            .ok_or_else(|| GraphError::UnknownCwe(old_cwe.clone()))?;
        self.check_legal(node, strategy)?;

        let mut fill_source = None;
        let mut diagnostic = None;
        let resolved = if strategy == CandidateStrategy::PerCweTailored {
            let resolved = self.resolve_tailored(node);
            diagnostic = Some(format!("tailored resolved to {resolved}"));
            resolved
        } else {
            strategy
        };

        let mut cwes: Vec<EntityId> = match resolved {
            CandidateStrategy::Cwe1003 => self.pool_1003.clone(),
            CandidateStrategy::Top25 => {
                self.top25.iter().filter(|id| self.eligible(id)).cloned().collect()
            }
            CandidateStrategy::Descendants => self.descendant_candidates(old_cwe)?,
            CandidateStrategy::Family => {
                let mut set = self.descendant_candidates(old_cwe)?;
                if set.len() < self.min_candidates {
                    // One step up: the parents' in-view descendants.
                    for parent in self.graph.parents_of(old_cwe)? {
                        set.extend(self.descendant_candidates(&parent)?);
                    }
                    set.sort_unstable();
                    set.dedup();
                    fill_source = Some(FillSource::ParentExpansion);
                }
                set
            }
            CandidateStrategy::Members => self.member_candidates(old_cwe)?,
            CandidateStrategy::MembersFnn => {
                let mut set = self.member_candidates(old_cwe)?;
                if set.len() < self.min_candidates {
                    match self.fnn_fill(old_cwe, &mut set) {
                        Ok(filled) if filled => fill_source = Some(FillSource::FnnFill),
                        Ok(_) => {}
                        Err(CandidateError::ModelRequired(s)) => {
                            return Err(CandidateError::ModelRequired(s))
                        }
                        Err(e) => diagnostic = Some(format!("nearest-neighbor fill skipped: {e}")),
                    }
                }
                set
            }
            CandidateStrategy::PerCweTailored => unreachable!("resolved above"),
        };

        cwes.retain(|id| id != old_cwe);
        if cwes.is_empty() && diagnostic.is_none() {
            diagnostic = Some("empty candidate set".to_string());
        }
        Ok(CandidateSet {
            cve: cve.clone(),
            old_cwe: old_cwe.clone(),
            strategy,
            cwes,
            fill_source,
            diagnostic,
        })
    }

    fn check_legal(&self, node: &CweNode, strategy: CandidateStrategy) -> Result<(), CandidateError> {
        let mismatch = |why: &str| {
            Err(CandidateError::StrategyMismatch {
                strategy: strategy.to_string(),
                old_cwe: node.id().clone(),
                status: format!("{} ({why})", node.status()),
            })
        };
        match node.status() {
            MappingStatus::Allowed => mismatch("already a valid mapping"),
            MappingStatus::Placeholder => match strategy {
                CandidateStrategy::Cwe1003 | CandidateStrategy::Top25 | CandidateStrategy::PerCweTailored => Ok(()),
                _ => mismatch("placeholders have no hierarchy"),
            },
            MappingStatus::Discouraged => match strategy {
                CandidateStrategy::Members | CandidateStrategy::MembersFnn => {
                    mismatch("membership strategies need a Prohibited category or view")
                }
                _ => Ok(()),
            },
            MappingStatus::Prohibited => match strategy {
                CandidateStrategy::Descendants | CandidateStrategy::Family => {
                    mismatch("hierarchy strategies need a Discouraged weakness")
                }
                CandidateStrategy::Members | CandidateStrategy::MembersFnn
                    if !matches!(node.kind(), CweKind::Category | CweKind::View) =>
                {
                    mismatch("membership strategies need a category or view")
                }
                _ => Ok(()),
            },
        }
    }

    fn resolve_tailored(&self, node: &CweNode) -> CandidateStrategy {
        if let Some(&strategy) = self.tailored.get(node.id()) {
            return strategy;
        }
        // No pre-cutoff history: fall back per population.
        match node.status() {
            MappingStatus::Discouraged => CandidateStrategy::Family,
            MappingStatus::Prohibited if matches!(node.kind(), CweKind::Category | CweKind::View) => {
                CandidateStrategy::Members
            }
            _ => CandidateStrategy::Cwe1003,
        }
    }

    fn eligible(&self, id: &EntityId) -> bool {
        self.graph.cwe_node(id).is_some_and(CweNode::is_candidate_eligible)
    }

    fn descendant_candidates(&self, of: &EntityId) -> Result<Vec<EntityId>, CandidateError> {
        Ok(self
            .graph
            .descendants_in_view(of)?
            .into_iter()
            .filter(|id| self.eligible(id))
            .collect())
    }

    /// In-view Allowed members of the category/view, plus their in-view
    /// Allowed descendants.
    fn member_candidates(&self, of: &EntityId) -> Result<Vec<EntityId>, CandidateError> {
        let members: BTreeSet<EntityId> = self
            .graph
            .members_of(of)?
            .into_iter()
            .filter(|id| self.eligible(id))
            .collect();
        let mut out = members.clone();
        for member in &members {
            out.extend(self.descendant_candidates(member)?);
        }
        Ok(out.into_iter().collect())
    }

    /// Top up with the nearest view-1003 entities to the old CWE in
    /// embedding space. Returns whether anything was added.
    fn fnn_fill(&self, old_cwe: &EntityId, set: &mut Vec<EntityId>) -> Result<bool, CandidateError> {
        let model = self
            .model
            .ok_or_else(|| CandidateError::ModelRequired(CandidateStrategy::MembersFnn.to_string()))?;
        let have: BTreeSet<&EntityId> = set.iter().collect();
        let pool: Vec<EntityId> = self
            .pool_1003
            .iter()
            .filter(|id| !have.contains(id) && *id != old_cwe && model.contains_entity(id))
            .cloned()
            .collect();
        let want = self.min_candidates.saturating_sub(set.len());
        let neighbors = model.nearest_neighbors(old_cwe, &pool, want)?;
        let filled = !neighbors.is_empty();
        set.extend(neighbors.into_iter().map(|(id, _)| id));
        Ok(filled)
    }
}

/// Choose, for each old CWE seen in pre-cutoff history, the strategy whose
/// candidate set contained the historical true label most often. Ties break
/// Descendants > Members > Top25 > Cwe1003. Cases without truth labels are
/// ignored.
pub fn tailored_strategy_table(
    builder: &CandidateBuilder<'_>,
    history: &[RemapCase],
) -> BTreeMap<EntityId, CandidateStrategy> {
    // Vote order doubles as the tie-break priority.
    const VOTE_ORDER: [CandidateStrategy; 4] = [
        CandidateStrategy::Descendants,
        CandidateStrategy::Members,
        CandidateStrategy::Top25,
        CandidateStrategy::Cwe1003,
    ];

    let mut by_old: BTreeMap<EntityId, Vec<&RemapCase>> = BTreeMap::new();
    for case in history {
        if case.truth.is_some() {
            by_old.entry(case.old_cwe.clone()).or_default().push(case);
        }
    }

    let mut table = BTreeMap::new();
    for (old, cases) in by_old {
        let mut best: Option<(usize, CandidateStrategy)> = None;
        for strategy in VOTE_ORDER {
            let Ok(set) = builder.build(&cases[0].cve, &old, strategy) else {
                continue;
            };
            let members: BTreeSet<&EntityId> = set.cwes.iter().collect();
            let hits = cases
                .iter()
                .filter(|c| {
                    c.truth.as_ref().is_some_and(|t| t.iter().any(|w| members.contains(w)))
                })
                .count();
            // Strictly-greater keeps the earlier (higher-priority) strategy on ties.
            if best.is_none_or(|(best_hits, _)| hits > best_hits) {
                best = Some((hits, strategy));
            }
        }
        if let Some((_, strategy)) = best {
            table.insert(old, strategy);
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Norm;
    use crate::error::CandidateError;
    use crate::graph::{Abstraction, GraphBuilder};
    use crate::testkit::{self, child_of, cve, cwe, weakness};

    fn numeric_graph() -> KnowledgeGraph {
        testkit::numeric_errors_builder().freeze()
    }

    fn build(
        graph: &KnowledgeGraph,
        old: u32,
        strategy: CandidateStrategy,
    ) -> Result<CandidateSet, CandidateError> {
        CandidateBuilder::new(graph).build(&cve("CVE-2020-0001"), &cwe(old), strategy)
    }

    #[test]
    fn members_for_numeric_errors_matches_the_bold_rows_plus_descendants() {
        let g = numeric_graph();
        let set = build(&g, 189, CandidateStrategy::Members).unwrap();
        let expected: Vec<EntityId> = [190, 191, 193, 369, 680, 681].map(cwe).to_vec();
        assert_eq!(set.cwes, expected);
        assert!(set.fill_source.is_none());
    }

    #[test]
    fn members_for_empty_category_is_empty_with_diagnostic() {
        let g = numeric_graph();
        let set = build(&g, 264, CandidateStrategy::Members).unwrap();
        assert!(set.cwes.is_empty());
        assert!(set.diagnostic.is_some());
    }

    #[test]
    fn members_fnn_requires_a_model() {
        let g = numeric_graph();
        assert!(matches!(
            build(&g, 264, CandidateStrategy::MembersFnn),
            Err(CandidateError::ModelRequired(_))
        ));
    }

    #[test]
    fn members_fnn_fills_up_to_the_threshold_from_the_pool() {
        let g = numeric_graph();
        let dim = 2;
        let entities: Vec<(EntityId, Vec<f32>)> = g
            .entities()
            .enumerate()
            .map(|(i, id)| (id.clone(), vec![i as f32, 0.0]))
            .collect();
        let model = crate::embed::EmbeddingModel::from_vectors(dim, Norm::L2, entities, vec![])
            .unwrap();
        let builder =
            CandidateBuilder::new(&g).with_model(&model).with_min_candidates(4);
        let set = builder.build(&cve("CVE-2020-0001"), &cwe(264), CandidateStrategy::MembersFnn)
            .unwrap();
        assert_eq!(set.fill_source, Some(FillSource::FnnFill));
        // Pool has 6 eligible entries, threshold 4: exactly 4 after filling.
        assert_eq!(set.cwes.len(), 4);
        let members = builder.build(&cve("CVE-2020-0001"), &cwe(264), CandidateStrategy::Members)
            .unwrap();
        assert!(members.cwes.iter().all(|c| set.cwes.contains(c)));

        // When the threshold exceeds the pool, the fill stops at the pool:
        // |result| >= min(threshold, |pool|).
        let wide = CandidateBuilder::new(&g).with_model(&model).with_min_candidates(50);
        let pool_len = wide.pool_1003().len();
        let capped = wide
            .build(&cve("CVE-2020-0001"), &cwe(264), CandidateStrategy::MembersFnn)
            .unwrap();
        assert_eq!(capped.cwes.len(), 50.min(pool_len));
    }

    #[test]
    fn family_expands_to_the_parents_descendants_when_small() {
        // 269 is a Discouraged leaf; its parent 284 has the in-view child 732.
        let mut b = GraphBuilder::new();
        weakness(&mut b, 284, Abstraction::Class, MappingStatus::Discouraged, false);
        weakness(&mut b, 269, Abstraction::Class, MappingStatus::Discouraged, true);
        weakness(&mut b, 732, Abstraction::Base, MappingStatus::Allowed, true);
        child_of(&mut b, 269, 284);
        child_of(&mut b, 732, 284);
        let g = b.freeze();

        let descendants = build(&g, 269, CandidateStrategy::Descendants).unwrap();
        assert!(descendants.cwes.is_empty());
        let family = build(&g, 269, CandidateStrategy::Family).unwrap();
        assert_eq!(family.cwes, vec![cwe(732)]);
        assert_eq!(family.fill_source, Some(FillSource::ParentExpansion));
        // Family is always a superset of Descendants.
        assert!(descendants.cwes.iter().all(|c| family.cwes.contains(c)));
    }

    #[test]
    fn every_strategy_output_is_a_subset_of_the_1003_pool() {
        let g = numeric_graph();
        let builder = CandidateBuilder::new(&g);
        let pool: BTreeSet<&EntityId> = builder.pool_1003().iter().collect();
        for strategy in [CandidateStrategy::Cwe1003, CandidateStrategy::Members] {
            let set = builder.build(&cve("CVE-2020-0001"), &cwe(189), strategy).unwrap();
            assert!(set.cwes.iter().all(|c| pool.contains(c)), "{strategy} escaped the pool");
            assert!(!set.cwes.contains(&cwe(189)));
        }
    }

    #[test]
    fn top25_is_filtered_to_eligible_entries() {
        let g = numeric_graph();
        let builder = CandidateBuilder::new(&g)
            .with_top25(vec![cwe(190), cwe(128), cwe(9999), cwe(680)]);
        let set =
            builder.build(&cve("CVE-2020-0001"), &cwe(189), CandidateStrategy::Top25).unwrap();
        // 128 is out of view, 9999 unknown.
        assert_eq!(set.cwes, vec![cwe(190), cwe(680)]);
    }

    #[test]
    fn strategy_status_mismatches_are_rejected() {
        let g = numeric_graph();
        // Hierarchy strategies need a Discouraged weakness, not a category.
        assert!(matches!(
            build(&g, 189, CandidateStrategy::Descendants),
            Err(CandidateError::StrategyMismatch { .. })
        ));
        let hg = testkit::hierarchy_graph();
        let b2 = CandidateBuilder::new(&hg);
        assert!(matches!(
            b2.build(&cve("CVE-2020-0001"), &cwe(138), CandidateStrategy::Members),
            Err(CandidateError::StrategyMismatch { .. })
        ));
        // Allowed old CWEs are not remap targets at all.
        assert!(matches!(
            b2.build(&cve("CVE-2020-0001"), &cwe(140), CandidateStrategy::Cwe1003),
            Err(CandidateError::StrategyMismatch { .. })
        ));
    }

    #[test]
    fn placeholders_admit_only_baseline_strategies() {
        let mut b = testkit::numeric_errors_builder();
        b.add_cwe_node(
            CweNode::placeholder(EntityId::cwe_token("NVD-CWE-noinfo").unwrap()).unwrap(),
        )
        .unwrap();
        let g = b.freeze();
        let noinfo = EntityId::cwe_token("NVD-CWE-noinfo").unwrap();
        let builder = CandidateBuilder::new(&g);
        let ok = builder.build(&cve("CVE-2020-0001"), &noinfo, CandidateStrategy::Cwe1003);
        assert!(ok.is_ok());
        assert!(matches!(
            builder.build(&cve("CVE-2020-0001"), &noinfo, CandidateStrategy::Members),
            Err(CandidateError::StrategyMismatch { .. })
        ));
    }

    #[test]
    fn candidate_sets_rebuild_deterministically() {
        let g = numeric_graph();
        let a = build(&g, 189, CandidateStrategy::Members).unwrap();
        let b = build(&g, 189, CandidateStrategy::Members).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tailored_votes_for_the_containing_strategy() {
        // Truth sits among 400's descendants, so Descendants wins the vote.
        let g = testkit::hierarchy_graph();
        let builder = CandidateBuilder::new(&g);
        let history = vec![RemapCase {
            cve: cve("CVE-2019-0001"),
            old_cwe: cwe(400),
            truth: Some([cwe(772)].into_iter().collect()),
            candidate_set: None,
            predictions: None,
            diagnostic: None,
        }];
        let table = tailored_strategy_table(&builder, &history);
        assert_eq!(table.get(&cwe(400)), Some(&CandidateStrategy::Descendants));
    }

    #[test]
    fn tailored_majority_and_tie_break() {
        let g = numeric_graph();
        let builder = CandidateBuilder::new(&g);
        let case = |id: &str, truth: u32| RemapCase {
            cve: cve(id),
            old_cwe: cwe(189),
            truth: Some([cwe(truth)].into_iter().collect()),
            candidate_set: None,
            predictions: None,
            diagnostic: None,
        };
        // All three truths are covered by both Members and Cwe1003; the tie
        // breaks toward Members.
        let history =
            vec![case("CVE-2019-0001", 190), case("CVE-2019-0002", 191), case("CVE-2019-0003", 680)];
        let table = tailored_strategy_table(&builder, &history);
        assert_eq!(table.get(&cwe(189)), Some(&CandidateStrategy::Members));
    }

    #[test]
    fn tailored_prefers_top25_when_it_alone_contains_the_truth() {
        let mut b = GraphBuilder::new();
        weakness(&mut b, 400, Abstraction::Class, MappingStatus::Discouraged, true);
        weakness(&mut b, 79, Abstraction::Base, MappingStatus::Allowed, true);
        let g = b.freeze();
        let builder = CandidateBuilder::new(&g).with_top25(vec![cwe(79)]);
        let history = vec![RemapCase {
            cve: cve("CVE-2019-0001"),
            old_cwe: cwe(400),
            truth: Some([cwe(79)].into_iter().collect()),
            candidate_set: None,
            predictions: None,
            diagnostic: None,
        }];
        // Descendants misses; Top25 and Cwe1003 both hit; Top25 has priority.
        let table = tailored_strategy_table(&builder, &history);
        assert_eq!(table.get(&cwe(400)), Some(&CandidateStrategy::Top25));
    }

    #[test]
    fn tailored_build_falls_back_per_population_without_history() {
        let g = numeric_graph();
        let set = build(&g, 189, CandidateStrategy::PerCweTailored).unwrap();
        // Default for a Prohibited category is Members.
        let members = build(&g, 189, CandidateStrategy::Members).unwrap();
        assert_eq!(set.cwes, members.cwes);
        assert_eq!(set.strategy, CandidateStrategy::PerCweTailored);
        assert!(set.diagnostic.unwrap().contains("members"));
    }

    #[test]
    fn unknown_old_cwe_is_an_error() {
        let g = numeric_graph();
        assert!(matches!(
            build(&g, 9999, CandidateStrategy::Cwe1003),
            Err(CandidateError::Graph(GraphError::UnknownCwe(_)))
        ));
    }
}
