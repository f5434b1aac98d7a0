//! Traversals over the CWE hierarchy and membership overlay.
//!
//! Distance and branch computations use ChildOf/ParentOf edges only, treated
//! as a single undirected edge set; MemberOf and RelatedTo edges never
//! contribute to hop distance.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use crate::entity::EntityId;
use crate::error::GraphError;
use crate::graph::{CweKind, KnowledgeGraph, RelationKind};

impl KnowledgeGraph {
    fn cwe_index(&self, id: &EntityId) -> Result<u32, GraphError> {
        self.entity_index(id)
            .filter(|idx| self.cwe_node_at(*idx).is_some())
            .ok_or_else(|| GraphError::UnknownCwe(id.clone()))
    }

    fn cwe_node_at(&self, idx: u32) -> Option<&super::CweNode> {
        self.entity_at(idx).and_then(|id| self.cwe_node(id))
    }

    /// Hierarchy neighbors in both directions: parents (ChildOf tails) and
    /// children (ChildOf heads pointing at `idx`).
    fn hierarchy_neighbors(&self, idx: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .stored_head_rel_tails(idx, RelationKind::ChildOf)
            .iter()
            .map(|&i| self.stored_tail(i))
            .collect();
        out.extend(
            self.stored_rel_tail_heads(RelationKind::ChildOf, idx)
                .iter()
                .map(|&i| self.stored_head(i)),
        );
        out
    }

    fn parent_indices(&self, idx: u32) -> Vec<u32> {
        self.stored_head_rel_tails(idx, RelationKind::ChildOf)
            .iter()
            .map(|&i| self.stored_tail(i))
            .collect()
    }

    fn child_indices(&self, idx: u32) -> Vec<u32> {
        self.stored_rel_tail_heads(RelationKind::ChildOf, idx)
            .iter()
            .map(|&i| self.stored_head(i))
            .collect()
    }

    /// Direct parents of a CWE (tails of its ChildOf edges).
    pub fn parents_of(&self, id: &EntityId) -> Result<Vec<EntityId>, GraphError> {
        let idx = self.cwe_index(id)?;
        Ok(self
            .parent_indices(idx)
            .into_iter()
            .filter_map(|i| self.entity_at(i).cloned())
            .collect())
    }

    /// Direct children of a CWE (heads of ChildOf edges pointing at it).
    pub fn children_of(&self, id: &EntityId) -> Result<Vec<EntityId>, GraphError> {
        let idx = self.cwe_index(id)?;
        Ok(self
            .child_indices(idx)
            .into_iter()
            .filter_map(|i| self.entity_at(i).cloned())
            .collect())
    }

    /// Shortest-path length between two CWEs over undirected ChildOf edges;
    /// `None` when no path exists.
    pub fn hop_distance(&self, a: &EntityId, b: &EntityId) -> Result<Option<u32>, GraphError> {
        let start = self.cwe_index(a)?;
        let goal = self.cwe_index(b)?;
        if start == goal {
            return Ok(Some(0));
        }
        let mut dist: HashMap<u32, u32> = HashMap::new();
        dist.insert(start, 0);
        let mut queue = VecDeque::from([start]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[&cur];
            for next in self.hierarchy_neighbors(cur) {
                if next == goal {
                    return Ok(Some(d + 1));
                }
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(next) {
                    e.insert(d + 1);
                    queue.push_back(next);
                }
            }
        }
        Ok(None)
    }

    /// Pillar-level branch roots of a CWE: every Pillar in its transitive
    /// ChildOf ancestry, including the node itself when it is a Pillar.
    pub fn branch_roots(&self, id: &EntityId) -> Result<BTreeSet<EntityId>, GraphError> {
        let start = self.cwe_index(id)?;
        let mut seen = HashSet::from([start]);
        let mut stack = vec![start];
        let mut roots = BTreeSet::new();
        while let Some(cur) = stack.pop() {
            if let Some(node) = self.cwe_node_at(cur) {
                if node.abstraction() == Some(super::Abstraction::Pillar) {
                    roots.insert(node.id().clone());
                }
            }
            for parent in self.parent_indices(cur) {
                if seen.insert(parent) {
                    stack.push(parent);
                }
            }
        }
        Ok(roots)
    }

    /// True when the two CWEs share at least one Pillar-level branch root.
    pub fn same_branch(&self, a: &EntityId, b: &EntityId) -> Result<bool, GraphError> {
        let ra = self.branch_roots(a)?;
        if ra.is_empty() {
            return Ok(false);
        }
        let rb = self.branch_roots(b)?;
        Ok(!ra.is_disjoint(&rb))
    }

    /// All transitive ChildOf descendants of `id` flagged as view-1003
    /// members, excluding `id` itself. Traversal does not stop at
    /// out-of-view nodes, so in-view grandchildren below an out-of-view
    /// child are still reported.
    pub fn descendants_in_view(&self, id: &EntityId) -> Result<BTreeSet<EntityId>, GraphError> {
        let start = self.cwe_index(id)?;
        let mut seen = HashSet::from([start]);
        let mut stack = vec![start];
        let mut out = BTreeSet::new();
        while let Some(cur) = stack.pop() {
            for child in self.child_indices(cur) {
                if seen.insert(child) {
                    if let Some(node) = self.cwe_node_at(child) {
                        if node.in_view_1003() {
                            out.insert(node.id().clone());
                        }
                    }
                    stack.push(child);
                }
            }
        }
        Ok(out)
    }

    /// CWEs holding a MemberOf edge to the given category or view.
    pub fn members_of(&self, id: &EntityId) -> Result<BTreeSet<EntityId>, GraphError> {
        let idx = self.cwe_index(id)?;
        let node = self.cwe_node_at(idx).expect("checked by cwe_index");
        if !matches!(node.kind(), CweKind::Category | CweKind::View) {
            return Err(GraphError::KindMismatch {
                id: id.clone(),
                kind: node.kind().to_string(),
                expected: "Category or View".into(),
            });
        }
        Ok(self
            .stored_rel_tail_heads(RelationKind::MemberOf, idx)
            .iter()
            .filter_map(|&i| self.entity_at(self.stored_head(i)).cloned())
            .collect())
    }
}
