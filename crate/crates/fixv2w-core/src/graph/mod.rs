//! Indexed triple store over CVE/CWE/CPE entities with the CWE ontology
//! overlay (hierarchy, membership, mapping status).
//!
//! The graph is built through a single-writer [`GraphBuilder`] and then
//! frozen into an immutable [`KnowledgeGraph`] that is safe to share across
//! threads. Hierarchy and membership edges are stored in canonical direction
//! (`ChildOf`, `MemberOf`); the inverse relations are synthesized by the
//! query methods, so inserting either side of an inverse pair makes both
//! queryable.

mod dump;
mod node;
mod ontology;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entity::{EntityId, Namespace};
use crate::error::GraphError;

pub use node::{Abstraction, CweKind, CweNode, MappingStatus};

/// Edge labels of the knowledge graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationKind {
    MatchingCwe,
    MatchingCpe,
    ChildOf,
    ParentOf,
    MemberOf,
    HasMember,
    RelatedTo,
}

impl RelationKind {
    pub const ALL: [RelationKind; 7] = [
        RelationKind::MatchingCwe,
        RelationKind::MatchingCpe,
        RelationKind::ChildOf,
        RelationKind::ParentOf,
        RelationKind::MemberOf,
        RelationKind::HasMember,
        RelationKind::RelatedTo,
    ];

    /// The mutual inverse, for the two invertible pairs.
    pub fn inverse(self) -> Option<RelationKind> {
        match self {
            RelationKind::ChildOf => Some(RelationKind::ParentOf),
            RelationKind::ParentOf => Some(RelationKind::ChildOf),
            RelationKind::MemberOf => Some(RelationKind::HasMember),
            RelationKind::HasMember => Some(RelationKind::MemberOf),
            _ => None,
        }
    }

    /// Storage direction: `ParentOf`/`HasMember` are flipped to their
    /// canonical partner. Returns the canonical kind and whether head/tail
    /// must be swapped.
    fn canonical(self) -> (RelationKind, bool) {
        match self {
            RelationKind::ParentOf => (RelationKind::ChildOf, true),
            RelationKind::HasMember => (RelationKind::MemberOf, true),
            other => (other, false),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationKind::MatchingCwe => "MatchingCWE",
            RelationKind::MatchingCpe => "MatchingCPE",
            RelationKind::ChildOf => "ChildOf",
            RelationKind::ParentOf => "ParentOf",
            RelationKind::MemberOf => "MemberOf",
            RelationKind::HasMember => "HasMember",
            RelationKind::RelatedTo => "RelatedTo",
        }
    }

    fn expected_namespaces(self) -> (Namespace, Namespace) {
        match self {
            RelationKind::MatchingCwe => (Namespace::Cve, Namespace::Cwe),
            RelationKind::MatchingCpe => (Namespace::Cve, Namespace::Cpe),
            _ => (Namespace::Cwe, Namespace::Cwe),
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationKind {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, GraphError> {
        RelationKind::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| GraphError::UnparseableId { key: s.to_string() })
    }
}

/// One (head, relation, tail) fact.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationKind,
    pub tail: EntityId,
}

impl Triple {
    /// Build a triple, enforcing the namespace rules of the relation:
    /// `MatchingCWE` links CVE to CWE, `MatchingCPE` links CVE to CPE, and
    /// all hierarchy/membership relations link CWE to CWE.
    pub fn new(head: EntityId, relation: RelationKind, tail: EntityId) -> Result<Self, GraphError> {
        let (h, t) = relation.expected_namespaces();
        if head.namespace() != h || tail.namespace() != t {
            return Err(GraphError::NamespaceMismatch { head, relation, tail });
        }
        Ok(Self { head, relation, tail })
    }

    /// The storage form: inverse relations flipped to their canonical side.
    pub fn canonical(self) -> Triple {
        let (relation, swap) = self.relation.canonical();
        if swap {
            Triple { head: self.tail, relation, tail: self.head }
        } else {
            Triple { relation, ..self }
        }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct StoredTriple {
    head: u32,
    relation: RelationKind,
    tail: u32,
}

/// Interned entity table. Dense indices are assigned in first-seen order and
/// are stable for a loaded snapshot.
#[derive(Debug, Clone, Default)]
struct EntityTable {
    ids: Vec<EntityId>,
    index: HashMap<EntityId, u32>,
}

impl EntityTable {
    fn intern(&mut self, id: &EntityId) -> u32 {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len() as u32;
        self.ids.push(id.clone());
        self.index.insert(id.clone(), i);
        i
    }

    fn get(&self, id: &EntityId) -> Option<u32> {
        self.index.get(id).copied()
    }
}

/// Mutable build phase of the knowledge graph. Single writer; call
/// [`GraphBuilder::freeze`] to obtain the immutable, index-backed graph.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    entities: EntityTable,
    triples: Vec<StoredTriple>,
    seen: HashSet<StoredTriple>,
    cwe_nodes: HashMap<u32, CweNode>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Intern an entity without attaching any triple.
    pub fn intern(&mut self, id: &EntityId) -> u32 {
        self.entities.intern(id)
    }

    /// Insert a triple. Inverse-direction hierarchy/membership edges are
    /// normalized to their canonical side, so the insert is idempotent
    /// across both spellings. Returns `false` when the fact was already
    /// present.
    pub fn add_triple(&mut self, triple: Triple) -> Result<bool, GraphError> {
        // Re-validate: Triple values can also arrive via deserialization.
        let triple = Triple::new(triple.head, triple.relation, triple.tail)?.canonical();
        let stored = StoredTriple {
            head: self.entities.intern(&triple.head),
            relation: triple.relation,
            tail: self.entities.intern(&triple.tail),
        };
        if !self.seen.insert(stored) {
            return Ok(false);
        }
        self.triples.push(stored);
        Ok(true)
    }

    /// Register a CWE ontology node. Replaces any previous node for the id.
    pub fn add_cwe_node(&mut self, node: CweNode) -> Result<(), GraphError> {
        node.validate()?;
        let idx = self.entities.intern(node.id());
        self.cwe_nodes.insert(idx, node);
        Ok(())
    }

    /// Remove every triple in `remove` (canonicalized) in one pass.
    pub fn remove_triples<I: IntoIterator<Item = Triple>>(&mut self, remove: I) {
        let targets: HashSet<StoredTriple> = remove
            .into_iter()
            .map(|t| t.canonical())
            .filter_map(|t| {
                Some(StoredTriple {
                    head: self.entities.get(&t.head)?,
                    relation: t.relation,
                    tail: self.entities.get(&t.tail)?,
                })
            })
            .collect();
        if targets.is_empty() {
            return;
        }
        self.triples.retain(|t| !targets.contains(t));
        self.seen.retain(|t| !targets.contains(t));
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// End the build phase. The returned graph is immutable and safe for
    /// unlimited concurrent readers.
    pub fn freeze(self) -> KnowledgeGraph {
        let mut by_head: HashMap<u32, Vec<u32>> = HashMap::new();
        let mut by_tail: HashMap<u32, Vec<u32>> = HashMap::new();
        let mut by_head_rel: HashMap<(u32, RelationKind), Vec<u32>> = HashMap::new();
        let mut by_rel_tail: HashMap<(RelationKind, u32), Vec<u32>> = HashMap::new();
        for (i, t) in self.triples.iter().enumerate() {
            let i = i as u32;
            by_head.entry(t.head).or_default().push(i);
            by_tail.entry(t.tail).or_default().push(i);
            by_head_rel.entry((t.head, t.relation)).or_default().push(i);
            by_rel_tail.entry((t.relation, t.tail)).or_default().push(i);
        }
        KnowledgeGraph {
            entities: self.entities,
            triples: self.triples,
            cwe_nodes: self.cwe_nodes,
            by_head,
            by_tail,
            by_head_rel,
            by_rel_tail,
        }
    }
}

/// Frozen, index-backed knowledge graph.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: EntityTable,
    triples: Vec<StoredTriple>,
    cwe_nodes: HashMap<u32, CweNode>,
    by_head: HashMap<u32, Vec<u32>>,
    by_tail: HashMap<u32, Vec<u32>>,
    by_head_rel: HashMap<(u32, RelationKind), Vec<u32>>,
    by_rel_tail: HashMap<(RelationKind, u32), Vec<u32>>,
}

impl KnowledgeGraph {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.ids.len()
    }

    /// Dense index assigned to the entity at interning time.
    pub fn entity_index(&self, id: &EntityId) -> Option<u32> {
        self.entities.get(id)
    }

    pub fn entity_at(&self, index: u32) -> Option<&EntityId> {
        self.entities.ids.get(index as usize)
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityId> {
        self.entities.ids.iter()
    }

    /// Stored (canonical-direction) triples in insertion order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.triples.iter().map(|t| self.materialize(*t))
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        let t = triple.clone().canonical();
        let (Some(h), Some(tl)) = (self.entities.get(&t.head), self.entities.get(&t.tail)) else {
            return false;
        };
        self.by_head_rel
            .get(&(h, t.relation))
            .is_some_and(|idxs| idxs.iter().any(|&i| self.triples[i as usize].tail == tl))
    }

    /// All triples with the given head, including synthesized inverse edges
    /// (a stored `ChildOf(a, b)` appears as `ParentOf(b, a)` when querying
    /// head `b`, and likewise for membership).
    pub fn triples_with_head(&self, head: &EntityId) -> Vec<Triple> {
        let Some(h) = self.entities.get(head) else {
            return Vec::new();
        };
        let mut out: Vec<Triple> = self
            .by_head
            .get(&h)
            .into_iter()
            .flatten()
            .map(|&i| self.materialize(self.triples[i as usize]))
            .collect();
        for canonical in [RelationKind::ChildOf, RelationKind::MemberOf] {
            let inverse = canonical.inverse().expect("invertible");
            out.extend(
                self.by_rel_tail
                    .get(&(canonical, h))
                    .into_iter()
                    .flatten()
                    .map(|&i| self.flip(self.triples[i as usize], inverse)),
            );
        }
        out
    }

    /// All triples with the given tail, including synthesized inverse edges.
    pub fn triples_with_tail(&self, tail: &EntityId) -> Vec<Triple> {
        let Some(t) = self.entities.get(tail) else {
            return Vec::new();
        };
        let mut out: Vec<Triple> = self
            .by_tail
            .get(&t)
            .into_iter()
            .flatten()
            .map(|&i| self.materialize(self.triples[i as usize]))
            .collect();
        for canonical in [RelationKind::ChildOf, RelationKind::MemberOf] {
            let inverse = canonical.inverse().expect("invertible");
            out.extend(
                self.by_head_rel
                    .get(&(t, canonical))
                    .into_iter()
                    .flatten()
                    .map(|&i| self.flip(self.triples[i as usize], inverse)),
            );
        }
        out
    }

    /// Triples matching (head, relation); inverse relations are answered
    /// from the canonical index.
    pub fn triples_head_rel(&self, head: &EntityId, relation: RelationKind) -> Vec<Triple> {
        let Some(h) = self.entities.get(head) else {
            return Vec::new();
        };
        let (canonical, swap) = relation.canonical();
        if swap {
            self.by_rel_tail
                .get(&(canonical, h))
                .into_iter()
                .flatten()
                .map(|&i| self.flip(self.triples[i as usize], relation))
                .collect()
        } else {
            self.by_head_rel
                .get(&(h, canonical))
                .into_iter()
                .flatten()
                .map(|&i| self.materialize(self.triples[i as usize]))
                .collect()
        }
    }

    /// Triples matching (relation, tail); inverse relations are answered
    /// from the canonical index.
    pub fn triples_rel_tail(&self, relation: RelationKind, tail: &EntityId) -> Vec<Triple> {
        let Some(t) = self.entities.get(tail) else {
            return Vec::new();
        };
        let (canonical, swap) = relation.canonical();
        if swap {
            self.by_head_rel
                .get(&(t, canonical))
                .into_iter()
                .flatten()
                .map(|&i| self.flip(self.triples[i as usize], relation))
                .collect()
        } else {
            self.by_rel_tail
                .get(&(canonical, t))
                .into_iter()
                .flatten()
                .map(|&i| self.materialize(self.triples[i as usize]))
                .collect()
        }
    }

    /// CWE ids a CVE maps to via `MatchingCWE`.
    pub fn mapped_cwes(&self, cve: &EntityId) -> Vec<EntityId> {
        self.triples_head_rel(cve, RelationKind::MatchingCwe)
            .into_iter()
            .map(|t| t.tail)
            .collect()
    }

    pub fn cwe_node(&self, id: &EntityId) -> Option<&CweNode> {
        let idx = self.entities.get(id)?;
        self.cwe_nodes.get(&idx)
    }

    pub fn cwe_nodes(&self) -> impl Iterator<Item = &CweNode> {
        // Index order == insertion order, kept deterministic for callers.
        let mut idxs: Vec<&u32> = self.cwe_nodes.keys().collect();
        idxs.sort_unstable();
        idxs.into_iter().map(|i| &self.cwe_nodes[i])
    }

    /// Reopen a build phase seeded with this graph's contents.
    pub fn to_builder(&self) -> GraphBuilder {
        GraphBuilder {
            entities: self.entities.clone(),
            triples: self.triples.clone(),
            seen: self.triples.iter().copied().collect(),
            cwe_nodes: self.cwe_nodes.clone(),
        }
    }

    fn materialize(&self, t: StoredTriple) -> Triple {
        Triple {
            head: self.entities.ids[t.head as usize].clone(),
            relation: t.relation,
            tail: self.entities.ids[t.tail as usize].clone(),
        }
    }

    fn flip(&self, t: StoredTriple, as_relation: RelationKind) -> Triple {
        Triple {
            head: self.entities.ids[t.tail as usize].clone(),
            relation: as_relation,
            tail: self.entities.ids[t.head as usize].clone(),
        }
    }

    pub(crate) fn stored_head_rel_tails(&self, head: u32, relation: RelationKind) -> &[u32] {
        static EMPTY: [u32; 0] = [];
        match self.by_head_rel.get(&(head, relation)) {
            Some(v) => v,
            None => &EMPTY,
        }
    }

    pub(crate) fn stored_tail(&self, triple_index: u32) -> u32 {
        self.triples[triple_index as usize].tail
    }

    pub(crate) fn stored_head(&self, triple_index: u32) -> u32 {
        self.triples[triple_index as usize].head
    }

    pub(crate) fn stored_rel_tail_heads(&self, relation: RelationKind, tail: u32) -> &[u32] {
        static EMPTY: [u32; 0] = [];
        match self.by_rel_tail.get(&(relation, tail)) {
            Some(v) => v,
            None => &EMPTY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cwe(n: u32) -> EntityId {
        EntityId::cwe(n)
    }

    #[test]
    fn add_and_lookup_by_every_index() {
        let mut b = GraphBuilder::new();
        let cve = EntityId::cve("CVE-2020-17533").unwrap();
        let t = Triple::new(cve.clone(), RelationKind::MatchingCwe, cwe(252)).unwrap();
        assert!(b.add_triple(t.clone()).unwrap());
        let g = b.freeze();

        assert_eq!(g.triples_with_head(&cve), vec![t.clone()]);
        assert_eq!(g.triples_with_tail(&cwe(252)), vec![t.clone()]);
        assert_eq!(g.triples_head_rel(&cve, RelationKind::MatchingCwe), vec![t.clone()]);
        assert_eq!(g.triples_rel_tail(RelationKind::MatchingCwe, &cwe(252)), vec![t.clone()]);
        assert!(g.contains(&t));
    }

    #[test]
    fn duplicate_insert_keeps_size_stable() {
        let mut b = GraphBuilder::new();
        let t = Triple::new(
            EntityId::cve("CVE-2020-17533").unwrap(),
            RelationKind::MatchingCwe,
            cwe(252),
        )
        .unwrap();
        assert!(b.add_triple(t.clone()).unwrap());
        assert!(!b.add_triple(t).unwrap());
        assert_eq!(b.triple_count(), 1);
    }

    #[test]
    fn namespace_mismatch_is_rejected() {
        let err = Triple::new(
            cwe(252),
            RelationKind::MatchingCwe,
            EntityId::cve("CVE-2020-17533").unwrap(),
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::NamespaceMismatch { .. }));
    }

    #[test]
    fn inverse_edge_is_queryable_and_deduplicated() {
        let mut b = GraphBuilder::new();
        b.add_triple(Triple::new(cwe(140), RelationKind::ChildOf, cwe(138)).unwrap()).unwrap();
        // The flipped spelling is the same fact.
        assert!(!b
            .add_triple(Triple::new(cwe(138), RelationKind::ParentOf, cwe(140)).unwrap())
            .unwrap());
        let g = b.freeze();

        let parent_of = g.triples_head_rel(&cwe(138), RelationKind::ParentOf);
        assert_eq!(parent_of.len(), 1);
        assert_eq!(parent_of[0].tail, cwe(140));

        assert!(g
            .triples_with_head(&cwe(138))
            .iter()
            .any(|t| t.relation == RelationKind::ParentOf && t.tail == cwe(140)));
        assert!(g
            .triples_with_tail(&cwe(140))
            .iter()
            .any(|t| t.relation == RelationKind::ParentOf && t.head == cwe(138)));
    }

    #[test]
    fn membership_inverse_is_queryable() {
        let mut b = GraphBuilder::new();
        // HasMember points category -> member.
        b.add_triple(Triple::new(cwe(189), RelationKind::HasMember, cwe(190)).unwrap()).unwrap();
        let g = b.freeze();
        let member_of = g.triples_head_rel(&cwe(190), RelationKind::MemberOf);
        assert_eq!(member_of.len(), 1);
        assert_eq!(member_of[0].tail, cwe(189));
    }

    #[test]
    fn remove_triples_drops_facts() {
        let mut b = GraphBuilder::new();
        let cve = EntityId::cve("CVE-2019-0001").unwrap();
        let keep = Triple::new(cve.clone(), RelationKind::MatchingCwe, cwe(79)).unwrap();
        let drop = Triple::new(cve.clone(), RelationKind::MatchingCwe, cwe(189)).unwrap();
        b.add_triple(keep.clone()).unwrap();
        b.add_triple(drop.clone()).unwrap();
        b.remove_triples([drop.clone()]);
        let g = b.freeze();
        assert!(g.contains(&keep));
        assert!(!g.contains(&drop));
        assert_eq!(g.len(), 1);
    }
}
