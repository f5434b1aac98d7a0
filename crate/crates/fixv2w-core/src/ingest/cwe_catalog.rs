//! MITRE CWE catalog XML parsing, plus the CSV view exports used for the
//! view-1003 slice and the yearly Top-25 lists.
//!
//! From the catalog we keep: every weakness/category/view as a node with
//! its abstraction and mapping-usage status, `ChildOf` hierarchy edges,
//! `MemberOf` edges from category/view member lists, and all other
//! related-weakness natures collapsed into `RelatedTo`. A weakness counts as
//! a view-1003 member when it appears in the view's member list or carries a
//! hierarchy edge scoped to that view.

use std::collections::{BTreeMap, BTreeSet};

use quick_xml::events::Event;
use quick_xml::Reader;

use crate::entity::EntityId;
use crate::error::IngestError;
use crate::graph::{Abstraction, CweKind, CweNode, GraphBuilder, KnowledgeGraph, MappingStatus, RelationKind, Triple};

/// Parsed catalog: ontology nodes plus hierarchy/membership/related edges.
#[derive(Debug, Clone, Default)]
pub struct CweCatalog {
    pub nodes: Vec<CweNode>,
    pub triples: Vec<Triple>,
}

impl CweCatalog {
    /// Attach the whole overlay to a graph build phase.
    pub fn apply(&self, builder: &mut GraphBuilder) -> Result<(), IngestError> {
        for node in &self.nodes {
            builder.add_cwe_node(node.clone())?;
        }
        for triple in &self.triples {
            builder.add_triple(triple.clone())?;
        }
        Ok(())
    }

    /// Freeze the overlay alone into a graph (used by the longitudinal
    /// statistics, which need hierarchy queries without any CVE edges).
    pub fn to_graph(&self) -> Result<KnowledgeGraph, IngestError> {
        let mut b = GraphBuilder::new();
        self.apply(&mut b)?;
        Ok(b.freeze())
    }
}

#[derive(Debug)]
struct RawEntry {
    id: u32,
    name: String,
    kind: CweKind,
    abstraction: Option<Abstraction>,
    deprecated: bool,
    usage: Option<String>,
}

impl RawEntry {
    fn new(kind: CweKind) -> Self {
        Self { id: 0, name: String::new(), kind, abstraction: None, deprecated: false, usage: None }
    }
}

const VIEW_1003: u32 = 1003;

/// Parse the catalog XML export.
pub fn parse_cwe_catalog(bytes: &[u8]) -> Result<CweCatalog, IngestError> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);

    let mut entries: Vec<RawEntry> = Vec::new();
    let mut child_edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut related_edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    // member -> containers, in document order for determinism.
    let mut member_edges: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut in_view_1003: BTreeSet<u32> = BTreeSet::new();

    // Element context while walking the tree.
    let mut current: Option<RawEntry> = None;
    let mut in_mapping_notes = false;
    let mut capture_usage = false;

    let mut buf = Vec::new();
    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| IngestError::MalformedXml(format!("{e} at byte {}", reader.buffer_position())))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let name = e.name().as_ref().to_vec();
                let is_empty = matches!(event, Event::Empty(_));
                match name.as_slice() {
                    b"Weakness" | b"Category" | b"View" => {
                        let mut entry = RawEntry::new(match name.as_slice() {
                            b"Weakness" => CweKind::Weakness,
                            b"Category" => CweKind::Category,
                            _ => CweKind::View,
                        });
                        for attr in e.attributes().flatten() {
                            let value = String::from_utf8_lossy(&attr.value).into_owned();
                            match attr.key.as_ref() {
                                b"ID" => {
                                    entry.id = value.parse().map_err(|_| {
                                        IngestError::MalformedXml(format!("non-numeric ID {value:?}"))
                                    })?
                                }
                                b"Name" => entry.name = value,
                                b"Abstraction" => entry.abstraction = parse_abstraction(&value),
                                b"Status" => entry.deprecated = value == "Deprecated",
                                _ => {}
                            }
                        }
                        if entry.id == 0 {
                            return Err(IngestError::MalformedXml(format!(
                                "{} element without an ID attribute",
                                String::from_utf8_lossy(&name)
                            )));
                        }
                        if is_empty {
                            entries.push(entry);
                        } else {
                            current = Some(entry);
                        }
                    }
                    b"Related_Weakness" => {
                        if let Some(entry) = current.as_ref().filter(|e| e.kind == CweKind::Weakness) {
                            let mut nature = String::new();
                            let mut target: Option<u32> = None;
                            let mut view: Option<u32> = None;
                            for attr in e.attributes().flatten() {
                                let value = String::from_utf8_lossy(&attr.value).into_owned();
                                match attr.key.as_ref() {
                                    b"Nature" => nature = value,
                                    b"CWE_ID" => target = value.parse().ok(),
                                    b"View_ID" => view = value.parse().ok(),
                                    _ => {}
                                }
                            }
                            if let Some(target) = target {
                                match nature.as_str() {
                                    "ChildOf" => {
                                        child_edges.insert((entry.id, target));
                                    }
                                    "ParentOf" => {
                                        child_edges.insert((target, entry.id));
                                    }
                                    _ => {
                                        related_edges.insert((entry.id, target));
                                    }
                                }
                                if view == Some(VIEW_1003) {
                                    in_view_1003.insert(entry.id);
                                }
                            }
                        }
                    }
                    b"Has_Member" => {
                        let mut member: Option<u32> = None;
                        for attr in e.attributes().flatten() {
                            if attr.key.as_ref() == b"CWE_ID" {
                                member = String::from_utf8_lossy(&attr.value).parse().ok();
                            }
                        }
                        if let (Some(container), Some(member)) = (current.as_ref(), member) {
                            member_edges.insert((member, container.id));
                            if container.kind == CweKind::View && container.id == VIEW_1003 {
                                in_view_1003.insert(member);
                            }
                        }
                    }
                    b"Mapping_Notes" => in_mapping_notes = !is_empty,
                    b"Usage" => capture_usage = in_mapping_notes && !is_empty,
                    _ => {}
                }
            }
            Event::Text(t) => {
                if capture_usage {
                    if let Some(entry) = current.as_mut() {
                        let text = t
                            .unescape()
                            .map_err(|e| IngestError::MalformedXml(e.to_string()))?;
                        entry.usage = Some(text.trim().to_string());
                    }
                }
            }
            Event::End(ref e) => match e.name().as_ref() {
                b"Weakness" | b"Category" | b"View" => {
                    if let Some(entry) = current.take() {
                        entries.push(entry);
                    }
                }
                b"Mapping_Notes" => in_mapping_notes = false,
                b"Usage" => capture_usage = false,
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }

    assemble(entries, child_edges, related_edges, member_edges, in_view_1003)
}

fn assemble(
    entries: Vec<RawEntry>,
    child_edges: BTreeSet<(u32, u32)>,
    related_edges: BTreeSet<(u32, u32)>,
    member_edges: BTreeSet<(u32, u32)>,
    in_view_1003: BTreeSet<u32>,
) -> Result<CweCatalog, IngestError> {
    let mut by_id: BTreeMap<u32, RawEntry> = BTreeMap::new();
    for entry in entries {
        by_id.insert(entry.id, entry);
    }

    let mut nodes = Vec::with_capacity(by_id.len());
    for entry in by_id.values() {
        let id = EntityId::cwe(entry.id);
        let node = if entry.deprecated {
            CweNode::deprecated(id, entry.name.clone())?
        } else if entry.kind == CweKind::Weakness {
            let status = match entry.usage.as_deref() {
                Some("Allowed") | Some("Allowed-with-Review") => MappingStatus::Allowed,
                Some("Discouraged") => MappingStatus::Discouraged,
                Some("Prohibited") => MappingStatus::Prohibited,
                other => {
                    if let Some(other) = other {
                        log::warn!("CWE-{}: unknown mapping usage {other:?}, defaulting to Allowed", entry.id);
                    } else {
                        log::warn!("CWE-{}: no mapping usage recorded, defaulting to Allowed", entry.id);
                    }
                    MappingStatus::Allowed
                }
            };
            let in_view = in_view_1003.contains(&entry.id);
            if in_view && status == MappingStatus::Prohibited {
                log::warn!("CWE-{}: Prohibited weakness listed in view 1003, dropping the view flag", entry.id);
                CweNode::weakness(id, entry.abstraction, status, false, entry.name.clone())?
            } else {
                CweNode::weakness(id, entry.abstraction, status, in_view, entry.name.clone())?
            }
        } else {
            CweNode::container(id, entry.kind, entry.name.clone())?
        };
        nodes.push(node);
    }

    let mut triples = Vec::new();
    for (child, parent) in child_edges {
        triples.push(Triple::new(EntityId::cwe(child), RelationKind::ChildOf, EntityId::cwe(parent))?);
    }
    for (member, container) in member_edges {
        triples.push(Triple::new(EntityId::cwe(member), RelationKind::MemberOf, EntityId::cwe(container))?);
    }
    for (a, b) in related_edges {
        triples.push(Triple::new(EntityId::cwe(a), RelationKind::RelatedTo, EntityId::cwe(b))?);
    }
    Ok(CweCatalog { nodes, triples })
}

fn parse_abstraction(s: &str) -> Option<Abstraction> {
    match s {
        "Pillar" => Some(Abstraction::Pillar),
        "Class" => Some(Abstraction::Class),
        "Base" => Some(Abstraction::Base),
        "Variant" => Some(Abstraction::Variant),
        _ => None,
    }
}

/// Parse a CSV view export (view 1003 or a Top-25 list): the `CWE-ID` (or
/// `ID`) column yields ids, in file order.
pub fn parse_view_csv(bytes: &[u8]) -> Result<Vec<EntityId>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedXml(format!("bad CSV header: {e}")))?
        .clone();
    let column = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("CWE-ID") || h.eq_ignore_ascii_case("ID"))
        .ok_or_else(|| IngestError::MalformedXml("no CWE-ID column in view CSV".into()))?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| IngestError::MalformedXml(format!("bad CSV row: {e}")))?;
        let Some(raw) = row.get(column) else { continue };
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let id = match raw.strip_prefix("CWE-") {
            Some(n) => n,
            None => raw,
        };
        let number: u32 = id
            .parse()
            .map_err(|_| IngestError::MalformedXml(format!("bad CWE id {raw:?} in view CSV")))?;
        out.push(EntityId::cwe(number));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"<?xml version="1.0"?>
<Weakness_Catalog Name="CWE" Version="4.6">
  <Weaknesses>
    <Weakness ID="707" Name="Improper Neutralization" Abstraction="Pillar" Structure="Simple" Status="Stable">
      <Mapping_Notes><Usage>Discouraged</Usage></Mapping_Notes>
    </Weakness>
    <Weakness ID="138" Name="Improper Neutralization of Special Elements" Abstraction="Class" Status="Draft">
      <Related_Weaknesses>
        <Related_Weakness Nature="ChildOf" CWE_ID="707" View_ID="1000" Ordinal="Primary"/>
      </Related_Weaknesses>
      <Mapping_Notes><Usage>Discouraged</Usage></Mapping_Notes>
    </Weakness>
    <Weakness ID="140" Name="Improper Neutralization of Delimiters" Abstraction="Base" Status="Draft">
      <Related_Weaknesses>
        <Related_Weakness Nature="ChildOf" CWE_ID="138" View_ID="1000"/>
        <Related_Weakness Nature="ChildOf" CWE_ID="138" View_ID="1003"/>
        <Related_Weakness Nature="PeerOf" CWE_ID="141" View_ID="1000"/>
      </Related_Weaknesses>
      <Mapping_Notes><Usage>Allowed</Usage></Mapping_Notes>
    </Weakness>
    <Weakness ID="225" Name="DEPRECATED: General Information Management Problems" Abstraction="Base" Status="Deprecated"/>
  </Weaknesses>
  <Categories>
    <Category ID="189" Name="Numeric Errors" Status="Draft">
      <Relationships>
        <Has_Member CWE_ID="128" View_ID="699"/>
        <Has_Member CWE_ID="190" View_ID="699"/>
      </Relationships>
    </Category>
  </Categories>
  <Views>
    <View ID="1003" Name="Weaknesses for Simplified Mapping of Published Vulnerabilities" Type="Graph" Status="Stable">
      <Members>
        <Has_Member CWE_ID="190" View_ID="1003"/>
      </Members>
    </View>
  </Views>
</Weakness_Catalog>"#;

    fn node(catalog: &CweCatalog, id: u32) -> &CweNode {
        catalog.nodes.iter().find(|n| n.id() == &EntityId::cwe(id)).unwrap()
    }

    #[test]
    fn weakness_statuses_and_abstractions() {
        let catalog = parse_cwe_catalog(FIXTURE.as_bytes()).unwrap();
        let w707 = node(&catalog, 707);
        assert_eq!(w707.status(), MappingStatus::Discouraged);
        assert_eq!(w707.abstraction(), Some(Abstraction::Pillar));
        assert_eq!(node(&catalog, 140).status(), MappingStatus::Allowed);
    }

    #[test]
    fn category_becomes_prohibited_container_with_members() {
        let catalog = parse_cwe_catalog(FIXTURE.as_bytes()).unwrap();
        let cat = node(&catalog, 189);
        assert_eq!(cat.kind(), CweKind::Category);
        assert_eq!(cat.status(), MappingStatus::Prohibited);
        let members: Vec<_> = catalog
            .triples
            .iter()
            .filter(|t| t.relation == RelationKind::MemberOf && t.tail == EntityId::cwe(189))
            .map(|t| t.head.clone())
            .collect();
        assert_eq!(members, vec![EntityId::cwe(128), EntityId::cwe(190)]);
    }

    #[test]
    fn hierarchy_and_related_edges_are_split() {
        let catalog = parse_cwe_catalog(FIXTURE.as_bytes()).unwrap();
        assert!(catalog.triples.iter().any(|t| t.relation == RelationKind::ChildOf
            && t.head == EntityId::cwe(140)
            && t.tail == EntityId::cwe(138)));
        assert!(catalog.triples.iter().any(|t| t.relation == RelationKind::RelatedTo
            && t.head == EntityId::cwe(140)
            && t.tail == EntityId::cwe(141)));
    }

    #[test]
    fn view_membership_from_members_and_scoped_edges() {
        let catalog = parse_cwe_catalog(FIXTURE.as_bytes()).unwrap();
        // 190 via the view member list, 140 via a View_ID=1003 hierarchy edge.
        assert!(node(&catalog, 140).in_view_1003());
        assert!(!node(&catalog, 138).in_view_1003());
        // 190 has no Weakness element in this fixture, so only the edge exists.
        assert!(catalog.triples.iter().any(|t| t.relation == RelationKind::MemberOf
            && t.head == EntityId::cwe(190)
            && t.tail == EntityId::cwe(1003)));
    }

    #[test]
    fn missing_or_unknown_usage_defaults_to_allowed() {
        let xml = br#"<?xml version="1.0"?>
<Weakness_Catalog Name="CWE" Version="4.6">
  <Weaknesses>
    <Weakness ID="1" Name="No Notes" Abstraction="Base" Status="Draft"/>
    <Weakness ID="2" Name="Odd Usage" Abstraction="Base" Status="Draft">
      <Mapping_Notes><Usage>Sometimes</Usage></Mapping_Notes>
    </Weakness>
  </Weaknesses>
</Weakness_Catalog>"#;
        let catalog = parse_cwe_catalog(xml).unwrap();
        assert_eq!(node(&catalog, 1).status(), MappingStatus::Allowed);
        assert_eq!(node(&catalog, 2).status(), MappingStatus::Allowed);
    }

    #[test]
    fn deprecated_entries_are_prohibited() {
        let catalog = parse_cwe_catalog(FIXTURE.as_bytes()).unwrap();
        let dep = node(&catalog, 225);
        assert_eq!(dep.kind(), CweKind::Deprecated);
        assert_eq!(dep.status(), MappingStatus::Prohibited);
    }

    #[test]
    fn empty_catalog_gives_empty_outputs() {
        let catalog =
            parse_cwe_catalog(br#"<?xml version="1.0"?><Weakness_Catalog/>"#).unwrap();
        assert!(catalog.nodes.is_empty());
        assert!(catalog.triples.is_empty());
    }

    #[test]
    fn malformed_xml_is_an_error() {
        assert!(matches!(
            parse_cwe_catalog(b"<Weakness_Catalog></Wrong>"),
            Err(IngestError::MalformedXml(_))
        ));
    }

    #[test]
    fn view_csv_accepts_prefixed_and_bare_ids() {
        let csv = "CWE-ID,Name\nCWE-787,Out-of-bounds Write\n79,XSS\n";
        let ids = parse_view_csv(csv.as_bytes()).unwrap();
        assert_eq!(ids, vec![EntityId::cwe(787), EntityId::cwe(79)]);
    }
}
