//! Exploited-CVE study: of the test cases whose CVE shows up in the exploit
//! data, how many were remapped only after the exploit, and for how many of
//! those the Top-10 ranking contains a correct match.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::Serialize;

use crate::entity::EntityId;
use crate::error::EvalError;
use crate::eval::{classify_match, MatchKind, MatchOutcome};
use crate::graph::{KnowledgeGraph, MappingStatus};
use crate::ingest::{ChangeEvent, ExploitEvent};
use crate::remap::{RemapCase, StatusFilter};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExploitCounts {
    /// Exploited CVEs holding an invalid pre-exploit mapping (and remapped
    /// within the study window, since only those appear as cases).
    pub exploited_with_invalid: u64,
    /// Of those, remapped only after the exploit date.
    pub remapped_after_exploit: u64,
    /// Of those remapped after the exploit, cases whose Top-10 ranking
    /// contains an exact, fine, or coarse match.
    pub correctly_predicted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExploitCaseDetail {
    pub cve: EntityId,
    pub old_cwe: EntityId,
    pub status: StatusFilter,
    pub exploit_date: NaiveDate,
    pub remap_date: Option<NaiveDate>,
    pub remapped_after_exploit: bool,
    pub match_kind: MatchKind,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExploitReport {
    pub discouraged: ExploitCounts,
    pub prohibited: ExploitCounts,
    pub details: Vec<ExploitCaseDetail>,
}

impl ExploitReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "cve,old_cwe,status,exploit_date,remap_date,remapped_after_exploit,match_kind,rank\n",
        );
        for d in &self.details {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                d.cve,
                d.old_cwe,
                d.status,
                d.exploit_date,
                d.remap_date.map(|d| d.to_string()).unwrap_or_default(),
                d.remapped_after_exploit,
                d.match_kind,
                d.rank.map(|r| r.to_string()).unwrap_or_default(),
            ));
        }
        out
    }
}

/// Cross the ranked, truth-labeled cases with the exploit observations.
/// The remap date of a case is the earliest change event that added one of
/// its truth labels; a case's exploit date is the earliest exploit across
/// sources.
pub fn exploit_analysis(
    cases: &[RemapCase],
    exploits: &[ExploitEvent],
    history: &[ChangeEvent],
    graph: &KnowledgeGraph,
    cutoff: usize,
) -> Result<ExploitReport, EvalError> {
    let mut exploit_dates: BTreeMap<&EntityId, NaiveDate> = BTreeMap::new();
    for e in exploits {
        exploit_dates
            .entry(&e.cve)
            .and_modify(|d| *d = (*d).min(e.exploit_date))
            .or_insert(e.exploit_date);
    }

    let mut report = ExploitReport::default();
    for case in cases {
        let Some(&exploit_date) = exploit_dates.get(&case.cve) else {
            continue;
        };
        let status = match graph.cwe_node(&case.old_cwe).map(|n| n.status()) {
            Some(MappingStatus::Discouraged) => StatusFilter::Discouraged,
            Some(MappingStatus::Prohibited) => StatusFilter::Prohibited,
            _ => continue,
        };

        let remap_date = remap_date(case, history);
        let remapped_after = remap_date.is_some_and(|d| d > exploit_date);
        let outcome = match (&case.truth, &case.predictions) {
            (Some(_), Some(_)) => classify_match(case, graph, cutoff)?,
            _ => MatchOutcome { kind: MatchKind::None, rank: None },
        };

        let counts = match status {
            StatusFilter::Discouraged => &mut report.discouraged,
            StatusFilter::Prohibited => &mut report.prohibited,
        };
        counts.exploited_with_invalid += 1;
        if remapped_after {
            counts.remapped_after_exploit += 1;
            if outcome.kind != MatchKind::None {
                counts.correctly_predicted += 1;
            }
        }

        report.details.push(ExploitCaseDetail {
            cve: case.cve.clone(),
            old_cwe: case.old_cwe.clone(),
            status,
            exploit_date,
            remap_date,
            remapped_after_exploit: remapped_after,
            match_kind: outcome.kind,
            rank: outcome.rank,
        });
    }
    Ok(report)
}

/// Earliest event that added one of the case's truth labels.
fn remap_date(case: &RemapCase, history: &[ChangeEvent]) -> Option<NaiveDate> {
    let truth = case.truth.as_ref()?;
    history
        .iter()
        .filter(|e| e.cve == case.cve)
        .filter(|e| {
            e.added_cwes
                .iter()
                .filter_map(|t| EntityId::cwe_token(t).ok())
                .any(|added| truth.contains(&added))
        })
        .map(|e| e.timestamp.date_naive())
        .min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CweNode, GraphBuilder};
    use crate::ingest::ExploitSource;
    use crate::remap::ScoredCwe;
    use std::collections::BTreeSet;

    fn cwe(n: u32) -> EntityId {
        EntityId::cwe(n)
    }

    fn cve(key: &str) -> EntityId {
        EntityId::cve(key).unwrap()
    }

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn graph() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_cwe_node(
            CweNode::weakness(cwe(119), None, MappingStatus::Discouraged, false, "Memory Buffer")
                .unwrap(),
        )
        .unwrap();
        b.add_cwe_node(
            CweNode::weakness(cwe(125), None, MappingStatus::Allowed, true, "OOB Read").unwrap(),
        )
        .unwrap();
        b.freeze()
    }

    fn case(id: &str, rank_of_truth: usize) -> RemapCase {
        let mut predictions: Vec<ScoredCwe> = Vec::new();
        for i in 0..rank_of_truth.saturating_sub(1) {
            predictions.push(ScoredCwe { cwe: cwe(1000 + i as u32), score: -(i as f64) });
        }
        predictions.push(ScoredCwe { cwe: cwe(125), score: -(rank_of_truth as f64) });
        RemapCase {
            cve: cve(id),
            old_cwe: cwe(119),
            truth: Some(BTreeSet::from([cwe(125)])),
            candidate_set: None,
            predictions: Some(predictions),
            diagnostic: None,
        }
    }

    fn exploit(id: &str, day: &str) -> ExploitEvent {
        ExploitEvent {
            cve: cve(id),
            source: ExploitSource::Kev,
            exploit_date: date(day),
            verified: true,
        }
    }

    fn remap_event(id: &str, day: &str) -> ChangeEvent {
        ChangeEvent {
            cve: cve(id),
            timestamp: format!("{day}T12:00:00")
                .parse::<chrono::NaiveDateTime>()
                .unwrap()
                .and_utc(),
            removed_cwes: vec!["CWE-119".into()],
            added_cwes: vec!["CWE-125".into()],
        }
    }

    #[test]
    fn exploited_before_remap_with_truth_at_rank_one_counts() {
        let g = graph();
        let cases = vec![case("CVE-2014-0160", 1)];
        let exploits = vec![exploit("CVE-2014-0160", "2022-05-04")];
        let history = vec![remap_event("CVE-2014-0160", "2023-02-10")];
        let report = exploit_analysis(&cases, &exploits, &history, &g, 10).unwrap();
        assert_eq!(report.discouraged.exploited_with_invalid, 1);
        assert_eq!(report.discouraged.remapped_after_exploit, 1);
        assert_eq!(report.discouraged.correctly_predicted, 1);
        assert_eq!(report.prohibited, ExploitCounts::default());
    }

    #[test]
    fn mixed_dates_classify_by_order_of_exploit_and_remap() {
        let g = graph();
        let cases =
            vec![case("CVE-2014-0160", 1), case("CVE-2015-0001", 1), case("CVE-2016-0002", 11)];
        let exploits = vec![
            exploit("CVE-2014-0160", "2022-05-04"), // remapped after
            exploit("CVE-2015-0001", "2024-01-01"), // remapped before the exploit
            exploit("CVE-2016-0002", "2022-01-01"), // remapped after, but not predicted
        ];
        let history = vec![
            remap_event("CVE-2014-0160", "2023-02-10"),
            remap_event("CVE-2015-0001", "2023-02-10"),
            remap_event("CVE-2016-0002", "2023-02-10"),
        ];
        let report = exploit_analysis(&cases, &exploits, &history, &g, 10).unwrap();
        assert_eq!(report.discouraged.exploited_with_invalid, 3);
        assert_eq!(report.discouraged.remapped_after_exploit, 2);
        assert_eq!(report.discouraged.correctly_predicted, 1);
    }

    #[test]
    fn unexploited_cases_are_ignored() {
        let g = graph();
        let cases = vec![case("CVE-2014-0160", 1)];
        let report = exploit_analysis(&cases, &[], &[], &g, 10).unwrap();
        assert_eq!(report.discouraged, ExploitCounts::default());
        assert!(report.details.is_empty());
    }
}
