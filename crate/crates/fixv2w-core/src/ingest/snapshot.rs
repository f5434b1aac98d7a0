//! Date-replayed snapshots and the remap test set.
//!
//! A snapshot replays the base feed forward through every CWE change event
//! with a timestamp at or before `as_of`. Replay is a pure function of its
//! inputs: CVEs are processed in sorted order and the final mapping state is
//! inserted in sorted order, so repeated runs produce byte-identical triple
//! dumps.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use crate::entity::EntityId;
use crate::error::IngestError;
use crate::graph::{CweNode, GraphBuilder, MappingStatus, RelationKind, Triple};
use crate::ingest::{ChangeEvent, CweCatalog, CveRecord, Snapshot};
use crate::remap::{RemapCase, StatusFilter};

/// Build the graph state at `as_of`. CVEs published after the date are
/// absent; events for CVEs missing from the feed are logged and skipped.
pub fn build_snapshot(
    feed: &[CveRecord],
    history: &[ChangeEvent],
    catalog: &CweCatalog,
    as_of: NaiveDate,
) -> Result<Snapshot, IngestError> {
    if !feed.is_empty() && feed.iter().all(|r| r.published > as_of) {
        return Err(IngestError::DateOutOfRange { as_of });
    }

    let mut records: BTreeMap<&EntityId, &CveRecord> = BTreeMap::new();
    for record in feed {
        if records.insert(&record.id, record).is_some() {
            log::warn!("duplicate feed record for {}, keeping the last", record.id);
        }
    }

    // Per-CVE events sorted by timestamp (stable within equal timestamps).
    let mut events: BTreeMap<&EntityId, Vec<&ChangeEvent>> = BTreeMap::new();
    for event in history {
        if event.timestamp.date_naive() > as_of {
            continue;
        }
        if !records.contains_key(&event.cve) {
            log::warn!("change event for {} absent from the base feed, skipped", event.cve);
            continue;
        }
        events.entry(&event.cve).or_default().push(event);
    }
    for per_cve in events.values_mut() {
        per_cve.sort_by_key(|e| e.timestamp);
    }

    let mut builder = GraphBuilder::new();
    catalog.apply(&mut builder)?;

    for (id, record) in &records {
        if record.published > as_of {
            continue;
        }
        let mut state: BTreeSet<EntityId> = BTreeSet::new();
        for tag in &record.cwe_ids {
            match EntityId::cwe_token(tag) {
                Ok(cwe) => {
                    state.insert(cwe);
                }
                Err(_) => log::warn!("{id}: unparseable CWE tag {tag:?} in feed, skipped"),
            }
        }
        for event in events.get(id).into_iter().flatten() {
            apply_event(&mut state, event);
        }
        for cwe in state {
            ensure_placeholder_node(&mut builder, &cwe)?;
            builder.add_triple(Triple::new((*id).clone(), RelationKind::MatchingCwe, cwe)?)?;
        }
        for uri in &record.cpe_uris {
            match EntityId::cpe(uri) {
                Ok(cpe) => {
                    builder.add_triple(Triple::new((*id).clone(), RelationKind::MatchingCpe, cpe)?)?;
                }
                Err(_) => log::warn!("{id}: unparseable CPE uri {uri:?}, skipped"),
            }
        }
    }

    Ok(Snapshot { as_of, graph: builder.freeze() })
}

fn apply_event(state: &mut BTreeSet<EntityId>, event: &ChangeEvent) {
    for tag in &event.removed_cwes {
        if let Ok(cwe) = EntityId::cwe_token(tag) {
            state.remove(&cwe);
        }
    }
    for tag in &event.added_cwes {
        if let Ok(cwe) = EntityId::cwe_token(tag) {
            state.insert(cwe);
        }
    }
}

/// The sentinel tokens are not catalog entries; give them ontology nodes on
/// first use so status lookups and statistics see them.
fn ensure_placeholder_node(builder: &mut GraphBuilder, cwe: &EntityId) -> Result<(), IngestError> {
    if cwe.is_placeholder() {
        builder.add_cwe_node(CweNode::placeholder(cwe.clone())?)?;
    }
    Ok(())
}

/// One labeled case per (CVE, old invalid CWE) pair: the CVE maps to an
/// invalid CWE of the requested population in the training snapshot, and
/// the validation snapshot adds at least one Allowed mapping for it. The
/// newly added Allowed CWEs become the truth labels; a CVE whose mappings
/// did not change, or that moved to a still-invalid CWE, is excluded.
pub fn build_test_set(
    train: &Snapshot,
    valid: &Snapshot,
    status_filter: StatusFilter,
) -> Vec<RemapCase> {
    let mut cases = Vec::new();
    let mut cves: Vec<&EntityId> = train
        .graph
        .entities()
        .filter(|id| id.namespace() == crate::entity::Namespace::Cve)
        .collect();
    cves.sort_unstable();

    for cve in cves {
        let train_mappings: BTreeSet<EntityId> = train.graph.mapped_cwes(cve).into_iter().collect();
        let old_cwes: Vec<&EntityId> = train_mappings
            .iter()
            .filter(|w| {
                train.graph.cwe_node(w).is_some_and(|n| status_filter.matches(n.status()))
            })
            .collect();
        if old_cwes.is_empty() {
            continue;
        }
        let truth: BTreeSet<EntityId> = valid
            .graph
            .mapped_cwes(cve)
            .into_iter()
            .filter(|w| !train_mappings.contains(w))
            .filter(|w| {
                valid.graph.cwe_node(w).is_some_and(|n| n.status() == MappingStatus::Allowed)
            })
            .collect();
        if truth.is_empty() {
            continue;
        }
        for old in old_cwes {
            cases.push(RemapCase {
                cve: cve.clone(),
                old_cwe: old.clone(),
                truth: Some(truth.clone()),
                candidate_set: None,
                predictions: None,
                diagnostic: None,
            });
        }
    }
    cases
}
