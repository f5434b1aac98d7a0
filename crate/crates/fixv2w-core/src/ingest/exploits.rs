//! Exploit observations from the CISA KEV catalog and the Exploit-DB index.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use regex::Regex;
use serde_json::Value;
use std::sync::OnceLock;

use crate::entity::EntityId;
use crate::error::IngestError;
use crate::ingest::cve_feed::{parse_date, parse_document};
use crate::ingest::{ExploitEvent, ExploitSource};

fn cve_token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"CVE-[0-9]{4}-[0-9]{4,}").unwrap())
}

/// Merge KEV and Exploit-DB inputs into one deduplicated event list. KEV
/// accepts the JSON catalog or its CSV export; Exploit-DB is the CSV index,
/// and only independently verified rows are retained. Deduplication is by
/// (cve, source), keeping the earliest date.
pub fn parse_exploits(
    kev: Option<&[u8]>,
    exploitdb: Option<&[u8]>,
) -> Result<Vec<ExploitEvent>, IngestError> {
    let mut dedup: BTreeMap<(EntityId, ExploitSource), NaiveDate> = BTreeMap::new();
    if let Some(bytes) = kev {
        for (cve, date) in parse_kev(bytes)? {
            merge(&mut dedup, cve, ExploitSource::Kev, date);
        }
    }
    if let Some(bytes) = exploitdb {
        for (cve, date) in parse_exploitdb(bytes)? {
            merge(&mut dedup, cve, ExploitSource::ExploitDb, date);
        }
    }
    Ok(dedup
        .into_iter()
        .map(|((cve, source), exploit_date)| ExploitEvent {
            cve,
            source,
            exploit_date,
            verified: true,
        })
        .collect())
}

fn merge(
    dedup: &mut BTreeMap<(EntityId, ExploitSource), NaiveDate>,
    cve: EntityId,
    source: ExploitSource,
    date: NaiveDate,
) {
    dedup
        .entry((cve, source))
        .and_modify(|d| *d = (*d).min(date))
        .or_insert(date);
}

fn parse_kev(bytes: &[u8]) -> Result<Vec<(EntityId, NaiveDate)>, IngestError> {
    if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
        parse_kev_json(bytes)
    } else {
        parse_kev_csv(bytes)
    }
}

fn parse_kev_json(bytes: &[u8]) -> Result<Vec<(EntityId, NaiveDate)>, IngestError> {
    let doc = parse_document(bytes)?;
    let Some(vulns) = doc.get("vulnerabilities").and_then(Value::as_array) else {
        return Err(IngestError::UnknownFeedLayout);
    };
    let mut out = Vec::new();
    for (i, v) in vulns.iter().enumerate() {
        let cve = v.get("cveID").and_then(Value::as_str).and_then(|s| EntityId::cve(s).ok());
        let date = v.get("dateAdded").and_then(Value::as_str).and_then(parse_date);
        match (cve, date) {
            (Some(cve), Some(date)) => out.push((cve, date)),
            _ => log::warn!("skipping malformed KEV entry #{i}"),
        }
    }
    Ok(out)
}

fn parse_kev_csv(bytes: &[u8]) -> Result<Vec<(EntityId, NaiveDate)>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedXml(format!("bad KEV CSV header: {e}")))?
        .clone();
    let cve_col = column(&headers, &["cveID"])?;
    let date_col = column(&headers, &["dateAdded"])?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| IngestError::MalformedXml(format!("bad KEV CSV row: {e}")))?;
        let cve = row.get(cve_col).and_then(|s| EntityId::cve(s.trim()).ok());
        let date = row.get(date_col).and_then(|s| parse_date(s.trim()));
        match (cve, date) {
            (Some(cve), Some(date)) => out.push((cve, date)),
            _ => log::warn!("skipping malformed KEV CSV row #{i}"),
        }
    }
    Ok(out)
}

/// Exploit-DB `files_exploits.csv`: CVE ids live in the `codes` column
/// (semicolon-separated, mixed with OSVDB ids); `verified` is 0/1.
fn parse_exploitdb(bytes: &[u8]) -> Result<Vec<(EntityId, NaiveDate)>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedXml(format!("bad Exploit-DB CSV header: {e}")))?
        .clone();
    let date_col = column(&headers, &["date_published", "date"])?;
    let verified_col = column(&headers, &["verified"])?;
    let codes_col = column(&headers, &["codes"])?;
    let mut out = Vec::new();
    for row in reader.records() {
        let row =
            row.map_err(|e| IngestError::MalformedXml(format!("bad Exploit-DB CSV row: {e}")))?;
        let verified = row.get(verified_col).map(str::trim) == Some("1");
        if !verified {
            continue;
        }
        let Some(date) = row.get(date_col).and_then(|s| parse_date(s.trim())) else {
            continue;
        };
        for m in cve_token_re().find_iter(row.get(codes_col).unwrap_or_default()) {
            if let Ok(cve) = EntityId::cve(m.as_str()) {
                out.push((cve, date));
            }
        }
    }
    Ok(out)
}

fn column(headers: &csv::StringRecord, names: &[&str]) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
        .ok_or_else(|| {
            IngestError::MalformedXml(format!("missing column (one of {names:?}) in CSV header"))
        })
}
