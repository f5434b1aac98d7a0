//! Byte-stable triple dump: UTF-8 `head<TAB>relation<TAB>tail` lines, sorted
//! lexicographically, LF endings. Intended for snapshot diffing, so two
//! graphs with the same fact set always dump identically.

use std::io::{BufRead, BufReader, Read, Write};

use crate::entity::EntityId;
use crate::error::GraphError;
use crate::graph::{GraphBuilder, KnowledgeGraph, RelationKind, Triple};

impl KnowledgeGraph {
    /// Serialize the stored (canonical-direction) triples.
    pub fn dump_tsv(&self) -> String {
        let mut lines: Vec<String> = self
            .triples()
            .map(|t| format!("{}\t{}\t{}", t.head.key(), t.relation, t.tail.key()))
            .collect();
        lines.sort_unstable();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.dump_tsv().as_bytes())
    }

    /// Parse a dump back into a build phase. The CWE ontology overlay is not
    /// part of the dump and must be re-attached by the caller.
    pub fn load_tsv<R: Read>(r: R) -> Result<GraphBuilder, GraphError> {
        let mut builder = GraphBuilder::new();
        for (n, line) in BufReader::new(r).lines().enumerate() {
            let line = line.map_err(|e| GraphError::MalformedDump {
                line: n + 1,
                reason: e.to_string(),
            })?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(head), Some(rel), Some(tail), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(GraphError::MalformedDump {
                    line: n + 1,
                    reason: "expected exactly three tab-separated fields".into(),
                });
            };
            let triple = Triple::new(
                EntityId::parse(head)?,
                rel.parse::<RelationKind>()?,
                EntityId::parse(tail)?,
            )?;
            builder.add_triple(triple)?;
        }
        Ok(builder)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_is_sorted_and_lf_terminated() {
        let mut b = GraphBuilder::new();
        let cve = EntityId::cve("CVE-2020-17533").unwrap();
        b.add_triple(
            Triple::new(cve.clone(), RelationKind::MatchingCwe, EntityId::cwe(252)).unwrap(),
        )
        .unwrap();
        b.add_triple(
            Triple::new(
                cve,
                RelationKind::MatchingCpe,
                EntityId::cpe("cpe:2.3:a:x:y:1.0:*:*:*:*:*:*:*").unwrap(),
            )
            .unwrap(),
        )
        .unwrap();
        let dump = b.freeze().dump_tsv();
        assert_eq!(
            dump,
            "CVE-2020-17533\tMatchingCPE\tcpe:2.3:a:x:y:1.0:*:*:*:*:*:*:*\n\
             CVE-2020-17533\tMatchingCWE\tCWE-252\n"
        );
    }

    #[test]
    fn dump_is_insertion_order_independent() {
        let t1 = Triple::new(
            EntityId::cve("CVE-2019-0001").unwrap(),
            RelationKind::MatchingCwe,
            EntityId::cwe(79),
        )
        .unwrap();
        let t2 = Triple::new(EntityId::cwe(140), RelationKind::ChildOf, EntityId::cwe(138)).unwrap();

        let mut a = GraphBuilder::new();
        a.add_triple(t1.clone()).unwrap();
        a.add_triple(t2.clone()).unwrap();
        let mut b = GraphBuilder::new();
        b.add_triple(t2).unwrap();
        b.add_triple(t1).unwrap();

        assert_eq!(a.freeze().dump_tsv(), b.freeze().dump_tsv());
    }

    #[test]
    fn round_trip_preserves_fact_set() {
        let mut b = GraphBuilder::new();
        b.add_triple(Triple::new(EntityId::cwe(140), RelationKind::ChildOf, EntityId::cwe(138)).unwrap())
            .unwrap();
        b.add_triple(
            Triple::new(
                EntityId::cve("CVE-2014-0160").unwrap(),
                RelationKind::MatchingCwe,
                EntityId::cwe(119),
            )
            .unwrap(),
        )
        .unwrap();
        let g = b.freeze();
        let dump = g.dump_tsv();
        let reloaded = KnowledgeGraph::load_tsv(dump.as_bytes()).unwrap().freeze();
        assert_eq!(reloaded.dump_tsv(), dump);
        assert_eq!(reloaded.len(), g.len());
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = KnowledgeGraph::load_tsv("CWE-140\tChildOf\n".as_bytes()).unwrap_err();
        match err {
            GraphError::MalformedDump { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error: {other}"),
        }
    }
}
