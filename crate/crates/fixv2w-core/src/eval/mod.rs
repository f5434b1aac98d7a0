//! Evaluation machinery: match classification over ranked predictions,
//! rank-based metrics, per-strategy coverage tables, graph-completion
//! evaluation, and the exploited-CVE study.
//!
//! Match classification scans the sorted candidate list in priority order:
//! the full list (up to the cutoff) is searched for an exact match first;
//! only failing that for a fine-grain match (a direct hierarchy neighbor of
//! a truth label), and only then for a coarse-grain match (same branch as a
//! truth label). An exact match therefore wins even when a fine or coarse
//! match ranks earlier.

mod completion;
mod exploit;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::candidates::CandidateStrategy;
use crate::entity::EntityId;
use crate::error::EvalError;
use crate::graph::{KnowledgeGraph, RelationKind};
use crate::remap::RemapCase;

pub use completion::{graph_completion_eval, split_matching_cwe, CompletionMode};
pub use exploit::{exploit_analysis, ExploitCaseDetail, ExploitCounts, ExploitReport};

pub const DEFAULT_CUTOFF: usize = 10;

/// How a ranked case matched its truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchKind {
    Exact,
    Fine,
    Coarse,
    None,
}

impl std::fmt::Display for MatchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MatchKind::Exact => "exact",
            MatchKind::Fine => "fine",
            MatchKind::Coarse => "coarse",
            MatchKind::None => "none",
        };
        f.write_str(s)
    }
}

/// Outcome of match classification for one case. `rank` is 1-based, at most
/// the cutoff, and absent exactly when `kind` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub kind: MatchKind,
    pub rank: Option<usize>,
}

/// First qualifying rank for each match level within the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MatchScan {
    pub exact: Option<usize>,
    pub fine: Option<usize>,
    pub coarse: Option<usize>,
}

/// Scan a ranked, truth-labeled case for the first exact / fine / coarse
/// rank within the cutoff. A match against any truth label qualifies.
pub fn scan_matches(
    case: &RemapCase,
    graph: &KnowledgeGraph,
    cutoff: usize,
) -> Result<MatchScan, EvalError> {
    let truth = case.truth.as_ref().ok_or_else(|| EvalError::UnlabeledCase(case.cve.clone()))?;
    let predictions =
        case.predictions.as_ref().ok_or_else(|| EvalError::UnrankedCase(case.cve.clone()))?;

    let mut scan = MatchScan::default();
    for (i, scored) in predictions.iter().take(cutoff).enumerate() {
        let rank = i + 1;
        let pred = &scored.cwe;
        if scan.exact.is_none() && truth.contains(pred) {
            scan.exact = Some(rank);
        }
        if scan.fine.is_none() && is_direct_neighbor(graph, pred, truth) {
            scan.fine = Some(rank);
        }
        if scan.coarse.is_none()
            && truth.iter().any(|t| graph.same_branch(pred, t).unwrap_or(false))
        {
            scan.coarse = Some(rank);
        }
        if scan.exact.is_some() && scan.fine.is_some() && scan.coarse.is_some() {
            break;
        }
    }
    Ok(scan)
}

/// One-hop ChildOf/ParentOf neighbor of any truth label, in the full CWE
/// graph.
fn is_direct_neighbor(graph: &KnowledgeGraph, pred: &EntityId, truth: &std::collections::BTreeSet<EntityId>) -> bool {
    let mut neighbors = graph.parents_of(pred).unwrap_or_default();
    neighbors.extend(graph.children_of(pred).unwrap_or_default());
    neighbors.iter().any(|n| truth.contains(n))
}

/// Priority classification: exact beats fine beats coarse, regardless of
/// rank order; within the winning kind the first qualifying rank is
/// reported.
pub fn classify_match(
    case: &RemapCase,
    graph: &KnowledgeGraph,
    cutoff: usize,
) -> Result<MatchOutcome, EvalError> {
    let scan = scan_matches(case, graph, cutoff)?;
    let outcome = if let Some(rank) = scan.exact {
        MatchOutcome { kind: MatchKind::Exact, rank: Some(rank) }
    } else if let Some(rank) = scan.fine {
        MatchOutcome { kind: MatchKind::Fine, rank: Some(rank) }
    } else if let Some(rank) = scan.coarse {
        MatchOutcome { kind: MatchKind::Coarse, rank: Some(rank) }
    } else {
        MatchOutcome { kind: MatchKind::None, rank: None }
    };
    Ok(outcome)
}

/// How unfound truths enter the metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum UnfoundPolicy {
    /// Contribute rank = |candidates| + 1 to MR and 0 to the reciprocal sum.
    #[default]
    PenaltyRank,
    /// Drop unfound observations from every metric.
    Exclude,
}

/// One ranking observation: the 1-based rank at which the truth appeared
/// (if it did), and how many candidates competed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankObservation {
    pub rank: Option<usize>,
    pub candidate_count: usize,
}

impl RankObservation {
    pub fn found(rank: usize, candidate_count: usize) -> Self {
        Self { rank: Some(rank), candidate_count }
    }

    pub fn unfound(candidate_count: usize) -> Self {
        Self { rank: None, candidate_count }
    }
}

/// MR, MRR, and Hits@{1,3,5,10,20} over a set of observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankReport {
    pub mean_rank: f64,
    pub mrr: f64,
    pub hits: BTreeMap<u32, f64>,
    pub total: usize,
    pub found: usize,
    pub unfound_policy: UnfoundPolicy,
}

pub const HITS_LEVELS: [u32; 5] = [1, 3, 5, 10, 20];

pub fn rank_metrics(observations: &[RankObservation]) -> Result<RankReport, EvalError> {
    rank_metrics_with_policy(observations, UnfoundPolicy::PenaltyRank)
}

pub fn rank_metrics_with_policy(
    observations: &[RankObservation],
    policy: UnfoundPolicy,
) -> Result<RankReport, EvalError> {
    let counted: Vec<&RankObservation> = match policy {
        UnfoundPolicy::PenaltyRank => observations.iter().collect(),
        UnfoundPolicy::Exclude => observations.iter().filter(|o| o.rank.is_some()).collect(),
    };
    if counted.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = counted.len() as f64;
    let mut rank_sum = 0.0;
    let mut reciprocal_sum = 0.0;
    let mut found = 0usize;
    let mut hits: BTreeMap<u32, f64> = HITS_LEVELS.iter().map(|&k| (k, 0.0)).collect();
    for obs in &counted {
        match obs.rank {
            Some(rank) => {
                found += 1;
                rank_sum += rank as f64;
                reciprocal_sum += 1.0 / rank as f64;
                for (&k, hit) in hits.iter_mut() {
                    if rank <= k as usize {
                        *hit += 1.0;
                    }
                }
            }
            None => rank_sum += (obs.candidate_count + 1) as f64,
        }
    }
    for hit in hits.values_mut() {
        *hit /= n;
    }
    Ok(RankReport {
        mean_rank: rank_sum / n,
        mrr: reciprocal_sum / n,
        hits,
        total: counted.len(),
        found,
        unfound_policy: policy,
    })
}

/// Fractions of cases whose classified match landed at rank 1, ranks 2-5,
/// ranks 6-10, or found no match within the cutoff.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CoverageBuckets {
    pub rank1: f64,
    pub ranks_2_5: f64,
    pub ranks_6_10: f64,
    pub beyond: f64,
}

/// Per-rank match-kind counts (the stacked-bar data).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RankKindCounts {
    pub rank: usize,
    pub exact: u64,
    pub fine: u64,
    pub coarse: u64,
}

impl RankKindCounts {
    pub fn overall(&self) -> u64 {
        self.exact + self.fine + self.coarse
    }
}

/// Coverage for one strategy's case population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyCoverage {
    pub strategy: CandidateStrategy,
    pub total: usize,
    pub unranked: usize,
    pub buckets: CoverageBuckets,
    pub per_rank: Vec<RankKindCounts>,
}

impl StrategyCoverage {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket,fraction\n");
        out.push_str(&format!("1,{:.6}\n", self.buckets.rank1));
        out.push_str(&format!("2-5,{:.6}\n", self.buckets.ranks_2_5));
        out.push_str(&format!("6-10,{:.6}\n", self.buckets.ranks_6_10));
        out.push_str(&format!("10+,{:.6}\n", self.buckets.beyond));
        out.push_str("\nrank,exact,fine,coarse,overall\n");
        for row in &self.per_rank {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.rank,
                row.exact,
                row.fine,
                row.coarse,
                row.overall()
            ));
        }
        out
    }
}

/// Classify every ranked case and tabulate coverage per strategy. Cases
/// without a candidate set or ranking are tallied as unranked under their
/// strategy when known, and skipped otherwise.
pub fn coverage_report(
    cases: &[RemapCase],
    graph: &KnowledgeGraph,
    cutoff: usize,
) -> Result<BTreeMap<CandidateStrategy, StrategyCoverage>, EvalError> {
    let mut grouped: BTreeMap<CandidateStrategy, Vec<&RemapCase>> = BTreeMap::new();
    for case in cases {
        if let Some(set) = &case.candidate_set {
            grouped.entry(set.strategy).or_default().push(case);
        }
    }

    let mut out = BTreeMap::new();
    for (strategy, cases) in grouped {
        let mut per_rank: Vec<RankKindCounts> = (1..=cutoff)
            .map(|rank| RankKindCounts { rank, ..RankKindCounts::default() })
            .collect();
        let mut buckets = CoverageBuckets::default();
        let mut unranked = 0usize;
        let total = cases.len();
        for case in cases {
            if case.truth.is_none() || case.predictions.is_none() {
                unranked += 1;
                buckets.beyond += 1.0;
                continue;
            }
            let outcome = classify_match(case, graph, cutoff)?;
            match outcome.rank {
                Some(1) => buckets.rank1 += 1.0,
                Some(r) if (2..=5).contains(&r) => buckets.ranks_2_5 += 1.0,
                Some(r) if (6..=cutoff).contains(&r) => buckets.ranks_6_10 += 1.0,
                _ => buckets.beyond += 1.0,
            }
            if let Some(rank) = outcome.rank {
                let row = &mut per_rank[rank - 1];
                match outcome.kind {
                    MatchKind::Exact => row.exact += 1,
                    MatchKind::Fine => row.fine += 1,
                    MatchKind::Coarse => row.coarse += 1,
                    MatchKind::None => {}
                }
            }
        }
        if total > 0 {
            let n = total as f64;
            buckets.rank1 /= n;
            buckets.ranks_2_5 /= n;
            buckets.ranks_6_10 /= n;
            buckets.beyond /= n;
        }
        out.insert(strategy, StrategyCoverage { strategy, total, unranked, buckets, per_rank });
    }
    Ok(out)
}

/// Observation for a classified case: the winning rank, unfound when no
/// match landed within the cutoff.
pub fn observation_for_case(
    case: &RemapCase,
    graph: &KnowledgeGraph,
    cutoff: usize,
) -> Result<RankObservation, EvalError> {
    let outcome = classify_match(case, graph, cutoff)?;
    let candidate_count =
        case.predictions.as_ref().map(Vec::len).unwrap_or_default();
    Ok(match outcome.rank {
        Some(rank) => RankObservation::found(rank, candidate_count),
        None => RankObservation::unfound(candidate_count),
    })
}

pub(crate) fn known_true_tails(
    graph: &KnowledgeGraph,
    head: &EntityId,
) -> std::collections::BTreeSet<EntityId> {
    graph
        .triples_head_rel(head, RelationKind::MatchingCwe)
        .into_iter()
        .map(|t| t.tail)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Abstraction, CweNode, GraphBuilder, MappingStatus, Triple};
    use std::collections::BTreeSet;

    fn cwe(n: u32) -> EntityId {
        EntityId::cwe(n)
    }

    /// Pillar 707; classes 228, 138 below it; base 140 below 138.
    fn hierarchy() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        for (id, abs, status, in_view) in [
            (707, Abstraction::Pillar, MappingStatus::Discouraged, false),
            (228, Abstraction::Class, MappingStatus::Discouraged, false),
            (138, Abstraction::Class, MappingStatus::Discouraged, false),
            (140, Abstraction::Base, MappingStatus::Allowed, true),
        ] {
            b.add_cwe_node(
                CweNode::weakness(cwe(id), Some(abs), status, in_view, format!("CWE-{id}")).unwrap(),
            )
            .unwrap();
        }
        for (child, parent) in [(228, 707), (138, 707), (140, 138)] {
            b.add_triple(Triple::new(cwe(child), RelationKind::ChildOf, cwe(parent)).unwrap())
                .unwrap();
        }
        b.freeze()
    }

    fn ranked_case(truth: &[u32], ranking: &[u32]) -> RemapCase {
        RemapCase {
            cve: EntityId::cve("CVE-2020-0001").unwrap(),
            old_cwe: cwe(707),
            truth: Some(truth.iter().map(|&n| cwe(n)).collect::<BTreeSet<_>>()),
            candidate_set: None,
            predictions: Some(
                ranking
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| crate::remap::ScoredCwe {
                        cwe: cwe(n),
                        score: -(i as f64),
                    })
                    .collect(),
            ),
            diagnostic: None,
        }
    }

    #[test]
    fn worked_example_exact_at_four_fine_at_two_coarse_at_one() {
        let g = hierarchy();
        let case = ranked_case(&[140], &[228, 138, 707, 140]);
        let scan = scan_matches(&case, &g, 10).unwrap();
        assert_eq!(scan.exact, Some(4));
        assert_eq!(scan.fine, Some(2));
        assert_eq!(scan.coarse, Some(1));
        let outcome = classify_match(&case, &g, 10).unwrap();
        assert_eq!(outcome.kind, MatchKind::Exact);
        assert_eq!(outcome.rank, Some(4));
    }

    #[test]
    fn truth_at_rank_one_is_exact() {
        let g = hierarchy();
        let case = ranked_case(&[140], &[140, 138]);
        let outcome = classify_match(&case, &g, 10).unwrap();
        assert_eq!(outcome.kind, MatchKind::Exact);
        assert_eq!(outcome.rank, Some(1));
    }

    #[test]
    fn truth_outside_cutoff_but_neighbor_inside_is_fine() {
        let g = hierarchy();
        // Truth 140 never appears in the top 10; its parent 138 sits at rank 3.
        let mut ranking = vec![228, 707, 138];
        ranking.extend([228; 9]);
        let mut case = ranked_case(&[140], &ranking);
        // Make the list long enough that 140 would only appear beyond cutoff.
        case.predictions.as_mut().unwrap().truncate(10);
        let outcome = classify_match(&case, &g, 10).unwrap();
        assert_eq!(outcome.kind, MatchKind::Fine);
        assert_eq!(outcome.rank, Some(3));
    }

    #[test]
    fn no_match_is_kind_none_with_no_rank() {
        let mut b = GraphBuilder::new();
        b.add_cwe_node(
            CweNode::weakness(cwe(79), None, MappingStatus::Allowed, true, "XSS").unwrap(),
        )
        .unwrap();
        b.add_cwe_node(
            CweNode::weakness(cwe(140), None, MappingStatus::Allowed, true, "Delimiters").unwrap(),
        )
        .unwrap();
        let g = b.freeze();
        let case = ranked_case(&[140], &[79]);
        let outcome = classify_match(&case, &g, 10).unwrap();
        assert_eq!(outcome, MatchOutcome { kind: MatchKind::None, rank: None });
    }

    #[test]
    fn unlabeled_case_is_an_error() {
        let g = hierarchy();
        let mut case = ranked_case(&[140], &[140]);
        case.truth = None;
        assert!(matches!(classify_match(&case, &g, 10), Err(EvalError::UnlabeledCase(_))));
    }

    #[test]
    fn perfect_ranks_give_perfect_metrics() {
        let obs = vec![RankObservation::found(1, 50); 4];
        let report = rank_metrics(&obs).unwrap();
        assert_eq!(report.mean_rank, 1.0);
        assert_eq!(report.mrr, 1.0);
        for (_, hit) in report.hits {
            assert_eq!(hit, 1.0);
        }
    }

    #[test]
    fn metric_arithmetic_on_ranks_1_2_4() {
        let obs = vec![
            RankObservation::found(1, 50),
            RankObservation::found(2, 50),
            RankObservation::found(4, 50),
        ];
        let report = rank_metrics(&obs).unwrap();
        assert!((report.mrr - (1.0 + 0.5 + 0.25) / 3.0).abs() < 1e-9);
        assert!((report.mean_rank - 7.0 / 3.0).abs() < 1e-9);
        assert!((report.hits[&1] - 1.0 / 3.0).abs() < 1e-9);
        assert!((report.hits[&3] - 2.0 / 3.0).abs() < 1e-9);
        assert!((report.hits[&5] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn unfound_truths_use_the_penalty_rank() {
        let obs = vec![RankObservation::found(1, 9), RankObservation::unfound(9)];
        let report = rank_metrics(&obs).unwrap();
        // MR = (1 + 10) / 2, MRR = (1 + 0) / 2
        assert!((report.mean_rank - 5.5).abs() < 1e-9);
        assert!((report.mrr - 0.5).abs() < 1e-9);
        assert_eq!(report.found, 1);

        let excluded = rank_metrics_with_policy(&obs, UnfoundPolicy::Exclude).unwrap();
        assert_eq!(excluded.total, 1);
        assert_eq!(excluded.mean_rank, 1.0);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(rank_metrics(&[]), Err(EvalError::EmptyInput)));
    }

    #[test]
    fn single_exact_rank_one_case_fills_the_first_bucket() {
        let g = hierarchy();
        let mut case = ranked_case(&[140], &[140, 138]);
        case.candidate_set = Some(crate::candidates::CandidateSet {
            cve: case.cve.clone(),
            old_cwe: case.old_cwe.clone(),
            strategy: crate::candidates::CandidateStrategy::Family,
            cwes: vec![cwe(140), cwe(138)],
            fill_source: None,
            diagnostic: None,
        });
        let report = coverage_report(std::slice::from_ref(&case), &g, 10).unwrap();
        let table = &report[&crate::candidates::CandidateStrategy::Family];
        assert_eq!(table.buckets.rank1, 1.0);
        assert_eq!(table.buckets.ranks_2_5, 0.0);
        assert_eq!(table.per_rank[0].exact, 1);
    }

    #[test]
    fn five_case_coverage_matches_a_hand_tally() {
        let g = hierarchy();
        // Outcomes by construction: exact@1, exact@4, fine@2, coarse@1, none.
        let rankings: [&[u32]; 5] = [
            &[140, 138],
            &[228, 138, 707, 140],
            &[999, 138],
            &[228, 999],
            &[999],
        ];
        let cases: Vec<RemapCase> = rankings
            .iter()
            .map(|ranking| {
                let mut case = ranked_case(&[140], ranking);
                case.candidate_set = Some(crate::candidates::CandidateSet {
                    cve: case.cve.clone(),
                    old_cwe: case.old_cwe.clone(),
                    strategy: crate::candidates::CandidateStrategy::Cwe1003,
                    cwes: ranking.iter().map(|&n| cwe(n)).collect(),
                    fill_source: None,
                    diagnostic: None,
                });
                case
            })
            .collect();
        let report = coverage_report(&cases, &g, 10).unwrap();
        let table = &report[&crate::candidates::CandidateStrategy::Cwe1003];
        assert_eq!(table.total, 5);
        assert_eq!(table.buckets.rank1, 2.0 / 5.0);
        assert_eq!(table.buckets.ranks_2_5, 2.0 / 5.0);
        assert_eq!(table.buckets.ranks_6_10, 0.0);
        assert_eq!(table.buckets.beyond, 1.0 / 5.0);
        assert_eq!(table.per_rank[0].exact, 1);
        assert_eq!(table.per_rank[0].coarse, 1);
        assert_eq!(table.per_rank[1].fine, 1);
        assert_eq!(table.per_rank[3].exact, 1);
    }

    #[test]
    fn hits_are_monotone_and_bound_mrr() {
        let obs = vec![
            RankObservation::found(2, 30),
            RankObservation::found(7, 30),
            RankObservation::unfound(30),
            RankObservation::found(15, 30),
        ];
        let report = rank_metrics(&obs).unwrap();
        let hits: Vec<f64> = report.hits.values().copied().collect();
        assert!(hits.windows(2).all(|w| w[0] <= w[1]));
        assert!(report.hits[&1] <= report.mrr);
        assert!(report.mrr <= 1.0);
    }
}
