//! Knowledge-graph pipeline for correcting invalid CVE-CWE root-cause
//! mappings.
//!
//! The crate builds a CVE-CWE-CPE knowledge graph from NVD and MITRE data,
//! trains a translational embedding model on it, and ranks replacement CWE
//! candidates for vulnerabilities mapped to Prohibited or Discouraged
//! weaknesses, together with the evaluation and longitudinal machinery
//! around that task.
//!
//! Subsystems:
//!
//! - [`graph`]: interned triple store with the CWE ontology overlay
//! - [`ingest`]: parsers for NVD feeds, change history, the CWE catalog,
//!   KEV, and Exploit-DB, plus date-replayed snapshots
//! - [`longitudinal`]: historical remap statistics
//! - [`embed`]: translational embedding training, scoring, persistence
//! - [`candidates`]: allowed-CWE candidate set strategies
//! - [`remap`]: candidate ranking and graph fixing
//! - [`eval`]: coverage and rank metrics, graph-completion and exploit
//!   studies

pub mod candidates;
pub mod embed;
pub mod entity;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod longitudinal;
pub mod remap;
pub mod report;
pub mod testkit;

pub use entity::{EntityId, Namespace};
pub use error::{CandidateError, EmbedError, EvalError, GraphError, IngestError, RemapError};
pub use graph::{
    Abstraction, CweKind, CweNode, GraphBuilder, KnowledgeGraph, MappingStatus, RelationKind,
    Triple,
};
