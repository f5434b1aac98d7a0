//! NVD change-history parsing: only CWE-affecting modifications are kept.

use chrono::{DateTime, NaiveDateTime, Utc};
use regex::Regex;
use serde_json::Value;
use std::sync::OnceLock;

use crate::entity::EntityId;
use crate::error::IngestError;
use crate::ingest::cve_feed::parse_document;
use crate::ingest::ChangeEvent;

fn cwe_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"CWE-[1-9][0-9]*|NVD-CWE-Other|NVD-CWE-noinfo").unwrap())
}

/// Parse a change-history document (API 2.0 `cveChanges` layout). Events
/// that touch no CWE detail (CVSS edits, reference changes, ...) are
/// filtered out; a well-formed event always has at least one removed or
/// added CWE.
pub fn parse_change_history(bytes: &[u8]) -> Result<Vec<ChangeEvent>, IngestError> {
    let doc = parse_document(bytes)?;
    let Some(changes) = doc.get("cveChanges").and_then(Value::as_array) else {
        return Err(IngestError::UnknownFeedLayout);
    };
    let mut out = Vec::new();
    for (i, entry) in changes.iter().enumerate() {
        match parse_change(entry) {
            Ok(Some(event)) => out.push(event),
            Ok(None) => {}
            Err(reason) => log::warn!("skipping malformed change entry #{i}: {reason}"),
        }
    }
    Ok(out)
}

fn parse_change(entry: &Value) -> Result<Option<ChangeEvent>, String> {
    let change = entry.get("change").ok_or("missing `change` object")?;
    let cve = EntityId::cve(
        change.get("cveId").and_then(Value::as_str).ok_or("missing cveId")?,
    )
    .map_err(|e| e.to_string())?;
    let created = change.get("created").and_then(Value::as_str).ok_or("missing created")?;
    let timestamp = parse_timestamp(created).ok_or_else(|| format!("bad timestamp {created:?}"))?;

    let mut removed = Vec::new();
    let mut added = Vec::new();
    for detail in change.get("details").and_then(Value::as_array).into_iter().flatten() {
        let detail_type = detail.get("type").and_then(Value::as_str).unwrap_or_default();
        if !detail_type.eq_ignore_ascii_case("CWE") {
            continue;
        }
        let action = detail.get("action").and_then(Value::as_str).unwrap_or_default();
        let old_value = detail.get("oldValue").and_then(Value::as_str).unwrap_or_default();
        let new_value = detail.get("newValue").and_then(Value::as_str).unwrap_or_default();
        // Values are source-prefixed in the wild ("NIST CWE-416"); harvest
        // every well-formed token.
        match action {
            "Removed" => extract_tokens(old_value, &mut removed),
            "Added" => extract_tokens(new_value, &mut added),
            "Changed" => {
                extract_tokens(old_value, &mut removed);
                extract_tokens(new_value, &mut added);
            }
            other => return Err(format!("unknown CWE action {other:?}")),
        }
    }
    if removed.is_empty() && added.is_empty() {
        return Ok(None);
    }
    Ok(Some(ChangeEvent { cve, timestamp, removed_cwes: removed, added_cwes: added }))
}

fn extract_tokens(value: &str, out: &mut Vec<String>) {
    for m in cwe_token_re().find_iter(value) {
        let token = m.as_str().to_string();
        if !out.contains(&token) {
            out.push(token);
        }
    }
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(naive.and_utc());
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn doc(changes: Vec<Value>) -> Vec<u8> {
        serde_json::to_vec(&json!({"resultsPerPage": changes.len(), "cveChanges": changes}))
            .unwrap()
    }

    fn cwe_change(cve: &str, created: &str, details: Value) -> Value {
        json!({"change": {"cveId": cve, "eventName": "CVE Modified", "created": created,
                          "details": details}})
    }

    #[test]
    fn remap_event_yields_removed_and_added() {
        let bytes = doc(vec![cwe_change(
            "CVE-2017-0001",
            "2021-03-01T10:00:00.000",
            json!([
                {"action": "Removed", "type": "CWE", "oldValue": "NIST CWE-119"},
                {"action": "Added", "type": "CWE", "newValue": "CWE-787"}
            ]),
        )]);
        let events = parse_change_history(&bytes).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].removed_cwes, vec!["CWE-119"]);
        assert_eq!(events[0].added_cwes, vec!["CWE-787"]);
        assert_eq!(events[0].timestamp.to_rfc3339(), "2021-03-01T10:00:00+00:00");
    }

    #[test]
    fn non_cwe_changes_are_filtered() {
        let bytes = doc(vec![cwe_change(
            "CVE-2017-0002",
            "2021-03-01T10:00:00.000",
            json!([{"action": "Changed", "type": "CVSS V3.1", "oldValue": "7.5", "newValue": "9.8"}]),
        )]);
        assert!(parse_change_history(&bytes).unwrap().is_empty());
    }

    #[test]
    fn mixed_fixture_keeps_only_cwe_events() {
        let mut changes = Vec::new();
        for i in 0..10 {
            if i % 2 == 0 {
                changes.push(cwe_change(
                    &format!("CVE-2020-{:04}", 1000 + i),
                    "2022-01-01T00:00:00.000",
                    json!([{"action": "Added", "type": "CWE", "newValue": "CWE-79"}]),
                ));
            } else {
                changes.push(cwe_change(
                    &format!("CVE-2020-{:04}", 1000 + i),
                    "2022-01-01T00:00:00.000",
                    json!([{"action": "Changed", "type": "Reference", "oldValue": "a", "newValue": "b"}]),
                ));
            }
        }
        assert_eq!(parse_change_history(&doc(changes)).unwrap().len(), 5);
    }

    #[test]
    fn placeholder_tokens_are_recognized() {
        let bytes = doc(vec![cwe_change(
            "CVE-2019-0003",
            "2023-05-05T12:00:00.000",
            json!([{"action": "Changed", "type": "CWE",
                    "oldValue": "CWE-200", "newValue": "NVD-CWE-noinfo"}]),
        )]);
        let events = parse_change_history(&bytes).unwrap();
        assert_eq!(events[0].removed_cwes, vec!["CWE-200"]);
        assert_eq!(events[0].added_cwes, vec!["NVD-CWE-noinfo"]);
    }
}
