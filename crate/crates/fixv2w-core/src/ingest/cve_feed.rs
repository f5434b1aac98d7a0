//! NVD CVE feed parsing. Accepts the API 2.0 document layout and the legacy
//! 1.1 yearly feed, auto-detected by top-level key. A malformed record is
//! skipped and logged rather than failing the whole document.

use chrono::NaiveDate;
use serde_json::{json, Value};

use crate::entity::EntityId;
use crate::error::IngestError;
use crate::ingest::CveRecord;

/// Parse a feed document into records.
pub fn parse_cve_feed(bytes: &[u8]) -> Result<Vec<CveRecord>, IngestError> {
    let doc: Value = parse_document(bytes)?;
    if let Some(entries) = doc.get("vulnerabilities").and_then(Value::as_array) {
        Ok(collect_records(entries, parse_v2_entry))
    } else if let Some(entries) = doc.get("CVE_Items").and_then(Value::as_array) {
        Ok(collect_records(entries, parse_v1_entry))
    } else {
        Err(IngestError::UnknownFeedLayout)
    }
}

/// Emit records back to the API 2.0 schema. Round-trips through
/// [`parse_cve_feed`].
pub fn emit_cve_feed(records: &[CveRecord]) -> Value {
    let vulnerabilities: Vec<Value> = records
        .iter()
        .map(|r| {
            let weaknesses: Vec<Value> = if r.cwe_ids.is_empty() {
                Vec::new()
            } else {
                vec![json!({
                    "source": "nvd@nist.gov",
                    "type": "Primary",
                    "description": r.cwe_ids.iter()
                        .map(|c| json!({"lang": "en", "value": c}))
                        .collect::<Vec<_>>(),
                })]
            };
            let cpe_match: Vec<Value> = r
                .cpe_uris
                .iter()
                .map(|uri| json!({"vulnerable": true, "criteria": uri}))
                .collect();
            let configurations: Vec<Value> = if cpe_match.is_empty() {
                Vec::new()
            } else {
                vec![json!({"nodes": [{"operator": "OR", "cpeMatch": cpe_match}]})]
            };
            json!({"cve": {
                "id": r.id.key(),
                "published": format!("{}T00:00:00.000", r.published),
                "weaknesses": weaknesses,
                "configurations": configurations,
            }})
        })
        .collect();
    json!({
        "resultsPerPage": records.len(),
        "startIndex": 0,
        "totalResults": records.len(),
        "format": "NVD_CVE",
        "version": "2.0",
        "vulnerabilities": vulnerabilities,
    })
}

pub(crate) fn parse_document(bytes: &[u8]) -> Result<Value, IngestError> {
    serde_json::from_slice(bytes).map_err(|e| {
        let (line, column) = (e.line(), e.column());
        IngestError::MalformedDocument {
            offset: byte_offset(bytes, line, column),
            line,
            column,
            reason: e.to_string(),
        }
    })
}

/// Translate serde_json's 1-based line/column into a byte offset.
pub(crate) fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut current_line = 1usize;
    let mut line_start = 0usize;
    for (i, &b) in bytes.iter().enumerate() {
        if current_line == line {
            break;
        }
        if b == b'\n' {
            current_line += 1;
            line_start = i + 1;
        }
    }
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn collect_records(entries: &[Value], parse: fn(&Value) -> Option<CveRecord>) -> Vec<CveRecord> {
    let mut out = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        match parse(entry) {
            Some(record) => out.push(record),
            None => log::warn!("skipping malformed feed entry #{i}"),
        }
    }
    out
}

fn parse_v2_entry(entry: &Value) -> Option<CveRecord> {
    let cve = entry.get("cve")?;
    let id = EntityId::cve(cve.get("id")?.as_str()?).ok()?;
    let published = parse_date(cve.get("published")?.as_str()?)?;

    let mut cwe_ids = Vec::new();
    for weakness in cve.get("weaknesses").and_then(Value::as_array).into_iter().flatten() {
        for desc in weakness.get("description").and_then(Value::as_array).into_iter().flatten() {
            if let Some(value) = desc.get("value").and_then(Value::as_str) {
                push_cwe_tag(&mut cwe_ids, value);
            }
        }
    }

    let mut cpe_uris = Vec::new();
    for configuration in cve.get("configurations").and_then(Value::as_array).into_iter().flatten() {
        for node in configuration.get("nodes").and_then(Value::as_array).into_iter().flatten() {
            collect_v2_cpes(node, &mut cpe_uris);
        }
    }

    Some(CveRecord { id, published, cwe_ids, cpe_uris })
}

fn collect_v2_cpes(node: &Value, out: &mut Vec<String>) {
    for m in node.get("cpeMatch").and_then(Value::as_array).into_iter().flatten() {
        if let Some(uri) = m.get("criteria").and_then(Value::as_str) {
            push_unique(out, uri);
        }
    }
    for child in node.get("children").and_then(Value::as_array).into_iter().flatten() {
        collect_v2_cpes(child, out);
    }
}

fn parse_v1_entry(entry: &Value) -> Option<CveRecord> {
    let cve = entry.get("cve")?;
    let id = EntityId::cve(cve.pointer("/CVE_data_meta/ID")?.as_str()?).ok()?;
    let published = parse_date(entry.get("publishedDate")?.as_str()?)?;

    let mut cwe_ids = Vec::new();
    for ptd in cve.pointer("/problemtype/problemtype_data").and_then(Value::as_array).into_iter().flatten()
    {
        for desc in ptd.get("description").and_then(Value::as_array).into_iter().flatten() {
            if let Some(value) = desc.get("value").and_then(Value::as_str) {
                push_cwe_tag(&mut cwe_ids, value);
            }
        }
    }

    let mut cpe_uris = Vec::new();
    for node in entry.pointer("/configurations/nodes").and_then(Value::as_array).into_iter().flatten()
    {
        collect_v1_cpes(node, &mut cpe_uris);
    }

    Some(CveRecord { id, published, cwe_ids, cpe_uris })
}

fn collect_v1_cpes(node: &Value, out: &mut Vec<String>) {
    for m in node.get("cpe_match").and_then(Value::as_array).into_iter().flatten() {
        if let Some(uri) = m.get("cpe23Uri").and_then(Value::as_str) {
            push_unique(out, uri);
        }
    }
    for child in node.get("children").and_then(Value::as_array).into_iter().flatten() {
        collect_v1_cpes(child, out);
    }
}

/// CWE tags are preserved verbatim when they are well-formed tokens; other
/// values (free-text problem types in old feeds) are dropped with a warning.
fn push_cwe_tag(out: &mut Vec<String>, value: &str) {
    let value = value.trim();
    if EntityId::cwe_token(value).is_ok() {
        push_unique(out, value);
    } else if !value.is_empty() {
        log::warn!("ignoring non-CWE weakness tag {value:?}");
    }
}

fn push_unique(out: &mut Vec<String>, value: &str) {
    if !out.iter().any(|v| v == value) {
        out.push(value.to_string());
    }
}

/// Feed timestamps come in several ISO-8601 flavors; the record keeps the
/// UTC date part.
pub(crate) fn parse_date(s: &str) -> Option<NaiveDate> {
    let date_part = s.get(..10)?;
    NaiveDate::parse_from_str(date_part, "%Y-%m-%d").ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v2_fixture() -> Vec<u8> {
        serde_json::to_vec(&json!({
            "resultsPerPage": 3, "startIndex": 0, "totalResults": 3,
            "format": "NVD_CVE", "version": "2.0",
            "vulnerabilities": [
                {"cve": {
                    "id": "CVE-2020-17533",
                    "published": "2020-12-29T18:15:00.000",
                    "weaknesses": [
                        {"source": "nvd@nist.gov", "type": "Primary",
                         "description": [{"lang": "en", "value": "CWE-252"}]}
                    ],
                    "configurations": [{"nodes": [{"operator": "OR", "cpeMatch": [
                        {"vulnerable": true, "criteria": "cpe:2.3:a:apache:accumulo:1.5.0:*:*:*:*:*:*:*"}
                    ]}]}]
                }},
                {"cve": {
                    "id": "CVE-2021-0001",
                    "published": "2021-06-09T19:15:00.000",
                    "weaknesses": [
                        {"source": "nvd@nist.gov", "type": "Primary",
                         "description": [{"lang": "en", "value": "NVD-CWE-noinfo"}]}
                    ]
                }},
                {"cve": {
                    "id": "CVE-2021-0002",
                    "published": "2021-06-09T19:15:00.000"
                }}
            ]
        }))
        .unwrap()
    }

    #[test]
    fn v2_fixture_parses_three_records() {
        let records = parse_cve_feed(&v2_fixture()).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].id.key(), "CVE-2020-17533");
        assert_eq!(records[0].cwe_ids, vec!["CWE-252"]);
        assert_eq!(records[0].cpe_uris.len(), 1);
        assert_eq!(records[1].cwe_ids, vec!["NVD-CWE-noinfo"]);
        assert!(records[2].cwe_ids.is_empty());
        assert_eq!(records[0].published, NaiveDate::from_ymd_opt(2020, 12, 29).unwrap());
    }

    #[test]
    fn legacy_feed_is_autodetected() {
        let doc = json!({
            "CVE_data_type": "CVE",
            "CVE_Items": [{
                "cve": {
                    "CVE_data_meta": {"ID": "CVE-2014-0160"},
                    "problemtype": {"problemtype_data": [
                        {"description": [{"lang": "en", "value": "CWE-119"}]}
                    ]}
                },
                "configurations": {"nodes": [
                    {"operator": "OR", "cpe_match": [
                        {"vulnerable": true, "cpe23Uri": "cpe:2.3:a:openssl:openssl:1.0.1:*:*:*:*:*:*:*"}
                    ]}
                ]},
                "publishedDate": "2014-04-07T22:55Z"
            }]
        });
        let records = parse_cve_feed(&serde_json::to_vec(&doc).unwrap()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].id.key(), "CVE-2014-0160");
        assert_eq!(records[0].cwe_ids, vec!["CWE-119"]);
        assert_eq!(records[0].cpe_uris.len(), 1);
    }

    #[test]
    fn bad_record_is_salvaged_not_fatal() {
        let doc = json!({
            "vulnerabilities": [
                {"cve": {"id": "not-a-cve", "published": "2020-01-01T00:00:00.000"}},
                {"cve": {"id": "CVE-2020-0001", "published": "2020-01-01T00:00:00.000"}}
            ]
        });
        let records = parse_cve_feed(&serde_json::to_vec(&doc).unwrap()).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].id.key(), "CVE-2020-0001");
    }

    #[test]
    fn malformed_document_reports_byte_offset() {
        let bytes = b"{\n  \"vulnerabilities\": [,]\n}";
        match parse_cve_feed(bytes).unwrap_err() {
            IngestError::MalformedDocument { offset, line, .. } => {
                assert_eq!(line, 2);
                assert_eq!(bytes[offset], b',');
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn unknown_layout_is_rejected() {
        assert!(matches!(
            parse_cve_feed(b"{\"foo\": []}"),
            Err(IngestError::UnknownFeedLayout)
        ));
    }

    #[test]
    fn emit_then_parse_round_trips() {
        let records = parse_cve_feed(&v2_fixture()).unwrap();
        let emitted = serde_json::to_vec(&emit_cve_feed(&records)).unwrap();
        let reparsed = parse_cve_feed(&emitted).unwrap();
        assert_eq!(records, reparsed);
    }
}
