//! Deterministic fixture builders shared by tests and benchmarks.
//!
//! Nothing here is used by the pipeline itself; the builders produce small
//! graphs with known topology so expected values can be computed by hand or
//! by naive oracles.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::entity::EntityId;
use crate::graph::{
    Abstraction, CweKind, CweNode, GraphBuilder, KnowledgeGraph, MappingStatus, RelationKind,
    Triple,
};

pub fn cwe(n: u32) -> EntityId {
    EntityId::cwe(n)
}

pub fn cve(key: &str) -> EntityId {
    EntityId::cve(key).expect("valid CVE key")
}

pub fn weakness(
    builder: &mut GraphBuilder,
    id: u32,
    abstraction: Abstraction,
    status: MappingStatus,
    in_view: bool,
) {
    builder
        .add_cwe_node(
            CweNode::weakness(cwe(id), Some(abstraction), status, in_view, format!("CWE-{id}"))
                .expect("valid weakness"),
        )
        .expect("valid node");
}

pub fn category(builder: &mut GraphBuilder, id: u32, name: &str) {
    builder
        .add_cwe_node(CweNode::container(cwe(id), CweKind::Category, name).expect("valid category"))
        .expect("valid node");
}

pub fn child_of(builder: &mut GraphBuilder, child: u32, parent: u32) {
    builder
        .add_triple(Triple::new(cwe(child), RelationKind::ChildOf, cwe(parent)).unwrap())
        .unwrap();
}

pub fn member_of(builder: &mut GraphBuilder, member: u32, container: u32) {
    builder
        .add_triple(Triple::new(cwe(member), RelationKind::MemberOf, cwe(container)).unwrap())
        .unwrap();
}

pub fn mapping(builder: &mut GraphBuilder, cve_key: &str, cwe_id: u32) {
    builder
        .add_triple(Triple::new(cve(cve_key), RelationKind::MatchingCwe, cwe(cwe_id)).unwrap())
        .unwrap();
}

/// The hierarchy slice used across the suite: Pillar CWE-707 with Class
/// children CWE-228 and CWE-138 (all Discouraged), Base CWE-140 below
/// CWE-138 and Variant CWE-141 below CWE-140 (both Allowed, in view), plus
/// a disjoint Pillar CWE-664 over Discouraged CWE-400.
pub fn hierarchy_builder() -> GraphBuilder {
    let mut b = GraphBuilder::new();
    weakness(&mut b, 707, Abstraction::Pillar, MappingStatus::Discouraged, false);
    weakness(&mut b, 228, Abstraction::Class, MappingStatus::Discouraged, false);
    weakness(&mut b, 138, Abstraction::Class, MappingStatus::Discouraged, false);
    weakness(&mut b, 140, Abstraction::Base, MappingStatus::Allowed, true);
    weakness(&mut b, 141, Abstraction::Variant, MappingStatus::Allowed, true);
    weakness(&mut b, 664, Abstraction::Pillar, MappingStatus::Discouraged, false);
    weakness(&mut b, 400, Abstraction::Class, MappingStatus::Discouraged, true);
    weakness(&mut b, 772, Abstraction::Base, MappingStatus::Allowed, true);
    child_of(&mut b, 228, 707);
    child_of(&mut b, 138, 707);
    child_of(&mut b, 140, 138);
    child_of(&mut b, 141, 140);
    child_of(&mut b, 400, 664);
    child_of(&mut b, 772, 400);
    b
}

pub fn hierarchy_graph() -> KnowledgeGraph {
    hierarchy_builder().freeze()
}

/// The Numeric Errors category fixture: CWE-189 with its ten members, the
/// five bold view-1003 members Allowed and in view, CWE-680 as an in-view
/// child of CWE-190, and the memberless category CWE-264.
pub fn numeric_errors_builder() -> GraphBuilder {
    let mut b = GraphBuilder::new();
    category(&mut b, 189, "Numeric Errors");
    category(&mut b, 264, "Permissions, Privileges, and Access Controls");
    // In-view members (bold in the category listing).
    for id in [190, 191, 193, 369, 681] {
        weakness(&mut b, id, Abstraction::Base, MappingStatus::Allowed, true);
    }
    // Out-of-view members.
    for id in [128, 839, 1135, 1139, 1389] {
        weakness(&mut b, id, Abstraction::Base, MappingStatus::Allowed, false);
    }
    for id in [128, 190, 191, 193, 369, 681, 839, 1135, 1139, 1389] {
        member_of(&mut b, id, 189);
    }
    // An in-view descendant below a bold member.
    weakness(&mut b, 680, Abstraction::Base, MappingStatus::Allowed, true);
    child_of(&mut b, 680, 190);
    // Hierarchy above the members: pillar 682 keeps branch queries meaningful.
    weakness(&mut b, 682, Abstraction::Pillar, MappingStatus::Discouraged, false);
    for id in [190, 191, 193, 369, 681] {
        child_of(&mut b, id, 682);
    }
    b
}

/// A synthetic clustered graph: `clusters` groups of CVEs share per-cluster
/// CWEs and a per-cluster CPE, so the mapping structure is learnable. Every
/// CWE is an Allowed in-view weakness. Triple count is
/// `clusters * cves_per_cluster * 2`.
pub fn planted_graph(clusters: usize, cves_per_cluster: usize, cwes_per_cluster: usize) -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    for c in 0..clusters {
        for w in 0..cwes_per_cluster {
            let id = (100 + c * cwes_per_cluster + w) as u32;
            weakness(&mut b, id, Abstraction::Base, MappingStatus::Allowed, true);
        }
    }
    for c in 0..clusters {
        let cpe = EntityId::cpe(&format!("cpe:2.3:a:vendor{c}:product{c}:1.0:*:*:*:*:*:*:*"))
            .unwrap();
        for v in 0..cves_per_cluster {
            let cve_id = cve(&format!("CVE-2020-{:04}", 1000 + c * cves_per_cluster + v));
            let cwe_id = (100 + c * cwes_per_cluster + (v % cwes_per_cluster)) as u32;
            b.add_triple(Triple::new(cve_id.clone(), RelationKind::MatchingCwe, cwe(cwe_id)).unwrap())
                .unwrap();
            b.add_triple(Triple::new(cve_id, RelationKind::MatchingCpe, cpe.clone()).unwrap())
                .unwrap();
        }
    }
    b.freeze()
}

/// A random CWE hierarchy for oracle checks: node ids 1..=n, each node after
/// the first gets one or two parents among earlier nodes (seeded), so the
/// undirected hierarchy is connected unless `extra_component` adds an
/// isolated tree.
pub fn random_hierarchy(n: u32, seed: u64, extra_component: bool) -> KnowledgeGraph {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    for id in 1..=n {
        let abstraction = if id == 1 { Abstraction::Pillar } else { Abstraction::Base };
        weakness(&mut b, id, abstraction, MappingStatus::Allowed, id % 2 == 0);
    }
    let ids: Vec<u32> = (1..=n).collect();
    for id in 2..=n {
        let parents = &ids[..(id - 1) as usize];
        let first = *parents.choose(&mut rng).unwrap();
        child_of(&mut b, id, first);
        if id % 3 == 0 {
            let second = *parents.choose(&mut rng).unwrap();
            if second != first {
                child_of(&mut b, id, second);
            }
        }
    }
    if extra_component {
        weakness(&mut b, n + 1, Abstraction::Pillar, MappingStatus::Allowed, false);
        weakness(&mut b, n + 2, Abstraction::Base, MappingStatus::Allowed, true);
        child_of(&mut b, n + 2, n + 1);
    }
    b.freeze()
}
