//! Historical statistics over CWE change events: hop-distance distribution
//! of remaps, remap pair frequencies, cumulative invalid-mapping counts per
//! year, and the most added/removed CWEs.
//!
//! An event that removes m CWEs and adds n generates the m×n cross-product
//! of (old, new) pairs. Every statistic here is a pure single pass over
//! immutable inputs and is checked against naive recomputation in tests.

use std::collections::BTreeMap;

use chrono::Datelike;
use serde::Serialize;

use crate::entity::{EntityId, PLACEHOLDER_NOINFO, PLACEHOLDER_OTHER};
use crate::graph::{CweKind, KnowledgeGraph, MappingStatus, RelationKind};
use crate::ingest::{ChangeEvent, Snapshot};

/// (old, new) pairs from one event's cross-product, keeping only tokens that
/// parse as CWE ids.
fn event_pairs(event: &ChangeEvent) -> Vec<(EntityId, EntityId)> {
    let removed: Vec<EntityId> =
        event.removed_cwes.iter().filter_map(|t| EntityId::cwe_token(t).ok()).collect();
    let added: Vec<EntityId> =
        event.added_cwes.iter().filter_map(|t| EntityId::cwe_token(t).ok()).collect();
    let mut out = Vec::with_capacity(removed.len() * added.len());
    for old in &removed {
        for new in &added {
            out.push((old.clone(), new.clone()));
        }
    }
    out
}

fn is_catalog_cwe(graph: &KnowledgeGraph, id: &EntityId) -> bool {
    !id.is_placeholder() && graph.cwe_node(id).is_some()
}

/// Histogram of remap hop distances over the buckets {1, 2, 3, 4+, no-path}.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DistanceDistribution {
    pub hops1: u64,
    pub hops2: u64,
    pub hops3: u64,
    pub hops4_plus: u64,
    pub no_path: u64,
    /// Self-remaps (distance 0), excluded from the buckets.
    pub excluded_self: u64,
    /// Pairs skipped because a side is a placeholder or unknown to the
    /// catalog (only populated when those pairs are excluded).
    pub excluded_invalid: u64,
    /// Diagnostic: paths of 5 or more hops; these are also counted in
    /// `hops4_plus`.
    pub beyond_four_hops: u64,
}

impl DistanceDistribution {
    /// Counted remaps: the bucket counts partition this total exactly.
    pub fn total(&self) -> u64 {
        self.hops1 + self.hops2 + self.hops3 + self.hops4_plus + self.no_path
    }

    /// Bucket fractions in order {1, 2, 3, 4+, no-path}; they sum to 1 over
    /// counted remaps.
    pub fn fractions(&self) -> [f64; 5] {
        let total = self.total();
        if total == 0 {
            return [0.0; 5];
        }
        let t = total as f64;
        [
            self.hops1 as f64 / t,
            self.hops2 as f64 / t,
            self.hops3 as f64 / t,
            self.hops4_plus as f64 / t,
            self.no_path as f64 / t,
        ]
    }

    pub fn to_csv(&self) -> String {
        let f = self.fractions();
        let mut out = String::from("bucket,count,fraction\n");
        for (name, count, frac) in [
            ("1", self.hops1, f[0]),
            ("2", self.hops2, f[1]),
            ("3", self.hops3, f[2]),
            ("4+", self.hops4_plus, f[3]),
            ("no-path", self.no_path, f[4]),
        ] {
            out.push_str(&format!("{name},{count},{frac:.6}\n"));
        }
        out
    }
}

/// Hop-distance distribution between old and new CWEs of every remap pair.
/// With `include_placeholders` false, pairs touching a placeholder or a CWE
/// unknown to the catalog are excluded from the population entirely; with
/// true they count as no-path (they have no hierarchy).
pub fn remap_distance_distribution(
    events: &[ChangeEvent],
    graph: &KnowledgeGraph,
    include_placeholders: bool,
) -> DistanceDistribution {
    let mut dist = DistanceDistribution::default();
    for event in events {
        for (old, new) in event_pairs(event) {
            if !is_catalog_cwe(graph, &old) || !is_catalog_cwe(graph, &new) {
                if include_placeholders {
                    dist.no_path += 1;
                } else {
                    dist.excluded_invalid += 1;
                }
                continue;
            }
            match graph.hop_distance(&old, &new).expect("both ids checked") {
                Some(0) => dist.excluded_self += 1,
                Some(1) => dist.hops1 += 1,
                Some(2) => dist.hops2 += 1,
                Some(3) => dist.hops3 += 1,
                Some(d) => {
                    dist.hops4_plus += 1;
                    if d >= 5 {
                        dist.beyond_four_hops += 1;
                    }
                }
                None => dist.no_path += 1,
            }
        }
    }
    dist
}

/// One observed (old, new) remap pair with its count and relationship
/// classification. `is_member` is present only when the old CWE is a
/// category or view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RemapPair {
    pub old_cwe: EntityId,
    pub new_cwe: EntityId,
    pub count: u64,
    pub same_branch: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_member: Option<bool>,
}

/// Pair frequencies, with remaps into a placeholder aggregated into one row
/// per placeholder (they have no meaningful old-CWE structure).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PairFrequencyReport {
    pub pairs: Vec<RemapPair>,
    /// (placeholder new CWE, count) over all old CWEs.
    pub placeholder_rows: Vec<(EntityId, u64)>,
    pub total_remaps: u64,
}

impl PairFrequencyReport {
    pub fn share(&self, count: u64) -> f64 {
        if self.total_remaps == 0 {
            0.0
        } else {
            count as f64 / self.total_remaps as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("old_cwe,new_cwe,count,share,same_branch,is_member\n");
        for (new, count) in &self.placeholder_rows {
            out.push_str(&format!("CWE-Any,{new},{count},{:.6},,\n", self.share(*count)));
        }
        for p in &self.pairs {
            let member = p.is_member.map(|m| if m { "yes" } else { "no" }).unwrap_or("");
            out.push_str(&format!(
                "{},{},{},{:.6},{},{member}\n",
                p.old_cwe,
                p.new_cwe,
                p.count,
                self.share(p.count),
                if p.same_branch { "yes" } else { "no" },
            ));
        }
        out
    }
}

/// Count every remap pair, sorted by count descending with ties broken by
/// (old, new) id ascending.
pub fn remap_pair_frequencies(events: &[ChangeEvent], graph: &KnowledgeGraph) -> PairFrequencyReport {
    let mut counts: BTreeMap<(EntityId, EntityId), u64> = BTreeMap::new();
    let mut placeholder_counts: BTreeMap<EntityId, u64> = BTreeMap::new();
    let mut total = 0u64;
    for event in events {
        for (old, new) in event_pairs(event) {
            total += 1;
            if new.is_placeholder() {
                *placeholder_counts.entry(new).or_default() += 1;
            } else {
                *counts.entry((old, new)).or_default() += 1;
            }
        }
    }

    let mut pairs: Vec<RemapPair> = counts
        .into_iter()
        .map(|((old, new), count)| {
            let same_branch = graph.same_branch(&old, &new).unwrap_or(false);
            let is_member = graph
                .cwe_node(&old)
                .filter(|n| matches!(n.kind(), CweKind::Category | CweKind::View))
                .map(|_| {
                    graph.members_of(&old).map(|members| members.contains(&new)).unwrap_or(false)
                });
            RemapPair { old_cwe: old, new_cwe: new, count, same_branch, is_member }
        })
        .collect();
    pairs.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then_with(|| a.old_cwe.cmp(&b.old_cwe))
            .then_with(|| a.new_cwe.cmp(&b.new_cwe))
    });

    let mut placeholder_rows: Vec<(EntityId, u64)> = placeholder_counts.into_iter().collect();
    placeholder_rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    PairFrequencyReport { pairs, placeholder_rows, total_remaps: total }
}

/// Mapping-population counts for one yearly snapshot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct YearCounts {
    pub year: i32,
    pub discouraged: u64,
    pub prohibited: u64,
    pub placeholder_other: u64,
    pub placeholder_noinfo: u64,
    pub allowed: u64,
    /// CVE entities present in the snapshot with no CWE mapping at all.
    pub unmapped_cves: u64,
}

/// Count Discouraged/Prohibited (and placeholder) mappings in each yearly
/// snapshot. Counts are not asserted monotone: removals can lower them.
pub fn cumulative_invalid_counts(snapshots: &[Snapshot]) -> Vec<YearCounts> {
    let mut out: Vec<YearCounts> = snapshots
        .iter()
        .map(|snap| {
            let graph = &snap.graph;
            let mut counts = YearCounts { year: snap.as_of.year(), ..YearCounts::default() };
            for triple in graph.triples() {
                if triple.relation != RelationKind::MatchingCwe {
                    continue;
                }
                match graph.cwe_node(&triple.tail).map(|n| n.status()) {
                    Some(MappingStatus::Discouraged) => counts.discouraged += 1,
                    Some(MappingStatus::Prohibited) => counts.prohibited += 1,
                    Some(MappingStatus::Allowed) => counts.allowed += 1,
                    Some(MappingStatus::Placeholder) => {
                        if triple.tail.key() == PLACEHOLDER_OTHER {
                            counts.placeholder_other += 1;
                        } else if triple.tail.key() == PLACEHOLDER_NOINFO {
                            counts.placeholder_noinfo += 1;
                        }
                    }
                    None => {}
                }
            }
            counts.unmapped_cves = graph
                .entities()
                .filter(|id| id.namespace() == crate::entity::Namespace::Cve)
                .filter(|id| graph.mapped_cwes(id).is_empty())
                .count() as u64;
            counts
        })
        .collect();
    out.sort_by_key(|c| c.year);
    out
}

pub fn year_counts_to_csv(counts: &[YearCounts]) -> String {
    let mut out = String::from(
        "year,discouraged,prohibited,placeholder_other,placeholder_noinfo,allowed,unmapped_cves\n",
    );
    for c in counts {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            c.year,
            c.discouraged,
            c.prohibited,
            c.placeholder_other,
            c.placeholder_noinfo,
            c.allowed,
            c.unmapped_cves
        ));
    }
    out
}

/// CWE occurrence counts, most frequent first.
pub type RankedCwes = Vec<(EntityId, u64)>;

/// The `n` most newly-mapped and most removed CWEs across all events, by
/// occurrence count, ties broken by id ascending. Placeholder tokens count
/// like any other target.
pub fn top_added_removed(events: &[ChangeEvent], n: usize) -> (RankedCwes, RankedCwes) {
    let mut added: BTreeMap<EntityId, u64> = BTreeMap::new();
    let mut removed: BTreeMap<EntityId, u64> = BTreeMap::new();
    for event in events {
        for token in &event.added_cwes {
            if let Ok(id) = EntityId::cwe_token(token) {
                *added.entry(id).or_default() += 1;
            }
        }
        for token in &event.removed_cwes {
            if let Ok(id) = EntityId::cwe_token(token) {
                *removed.entry(id).or_default() += 1;
            }
        }
    }
    let rank = |m: BTreeMap<EntityId, u64>| {
        let mut v: Vec<(EntityId, u64)> = m.into_iter().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(n);
        v
    };
    (rank(added), rank(removed))
}

pub fn ranked_cwes_to_csv(ranked: &[(EntityId, u64)]) -> String {
    let mut out = String::from("cwe,count\n");
    for (id, count) in ranked {
        out.push_str(&format!("{id},{count}\n"));
    }
    out
}
