//! Parsers for the external data sources and the date-replayed snapshot
//! machinery.
//!
//! Everything accepts local byte streams so pipelines run offline; the
//! optional `fetch` feature adds a thin caching HTTP client for the NVD
//! APIs.

mod change_history;
mod cve_feed;
mod cwe_catalog;
mod exploits;
#[cfg(feature = "fetch")]
pub mod fetch;
mod snapshot;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::entity::EntityId;
use crate::graph::KnowledgeGraph;

pub use change_history::parse_change_history;
pub use cve_feed::{emit_cve_feed, parse_cve_feed};
pub use cwe_catalog::{parse_cwe_catalog, parse_view_csv, CweCatalog};
pub use exploits::parse_exploits;
pub use snapshot::{build_snapshot, build_test_set};

/// One vulnerability entry from an NVD feed. CWE tags are kept verbatim,
/// including the placeholder tokens; an empty tag list is legal and distinct
/// from a placeholder mapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CveRecord {
    pub id: EntityId,
    pub published: NaiveDate,
    pub cwe_ids: Vec<String>,
    pub cpe_uris: Vec<String>,
}

/// One CWE-affecting modification from the NVD change history.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeEvent {
    pub cve: EntityId,
    pub timestamp: DateTime<Utc>,
    pub removed_cwes: Vec<String>,
    pub added_cwes: Vec<String>,
}

/// The graph state of the NVD at a given date: base feed replayed with all
/// change events up to and including `as_of`.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub as_of: NaiveDate,
    pub graph: KnowledgeGraph,
}

/// Where an exploit observation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ExploitSource {
    Kev,
    ExploitDb,
}

impl std::fmt::Display for ExploitSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExploitSource::Kev => write!(f, "KEV"),
            ExploitSource::ExploitDb => write!(f, "ExploitDB"),
        }
    }
}

/// A known exploit for a CVE. Exploit-DB rows are kept only when
/// independently verified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploitEvent {
    pub cve: EntityId,
    pub source: ExploitSource,
    pub exploit_date: NaiveDate,
    pub verified: bool,
}
