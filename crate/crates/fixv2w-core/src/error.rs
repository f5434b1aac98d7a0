//! Error types for each subsystem.

use thiserror::Error;

use crate::entity::{EntityId, Namespace};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid {namespace} key: {key:?}")]
    InvalidKey { namespace: Namespace, key: String },

    #[error("cannot infer a namespace for id {key:?}")]
    UnparseableId { key: String },

    #[error("triple ({head}, {relation}, {tail}) violates namespace rules for {relation}")]
    NamespaceMismatch { head: EntityId, relation: crate::graph::RelationKind, tail: EntityId },

    #[error("unknown CWE: {0}")]
    UnknownCwe(EntityId),

    #[error("{id} has kind {kind}, expected {expected}")]
    KindMismatch { id: EntityId, kind: String, expected: String },

    #[error("invalid CWE node {id}: {reason}")]
    InvalidCweNode { id: EntityId, reason: String },

    #[error("malformed triple dump at line {line}: {reason}")]
    MalformedDump { line: usize, reason: String },
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed document at byte offset {offset} (line {line}, column {column}): {reason}")]
    MalformedDocument { offset: usize, line: usize, column: usize, reason: String },

    #[error("unrecognized feed layout: expected `vulnerabilities` (API 2.0) or `CVE_Items` (feed 1.1)")]
    UnknownFeedLayout,

    #[error("malformed XML catalog: {0}")]
    MalformedXml(String),

    #[error("snapshot date {as_of} predates every record in the feed")]
    DateOutOfRange { as_of: chrono::NaiveDate },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("entity {0} is not embedded in the model")]
    UnknownEntity(EntityId),

    #[error("relation {0} is not embedded in the model")]
    UnknownRelation(crate::graph::RelationKind),

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("cannot train on an empty graph")]
    EmptyGraph,

    #[error("model file format error: {0}")]
    Format(String),

    #[error("unsupported model file version: magic {found:?}, expected {expected:?}")]
    VersionMismatch { found: String, expected: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("strategy {strategy} is not legal for {old_cwe} with status {status}")]
    StrategyMismatch { strategy: String, old_cwe: EntityId, status: String },

    #[error("strategy {0} requires an embedding model")]
    ModelRequired(String),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Error)]
pub enum RemapError {
    #[error("top_n must be 1, 2, or 3, got {0}")]
    InvalidTopN(usize),

    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("case for {0} has no ground-truth labels")]
    UnlabeledCase(EntityId),

    #[error("case for {0} has no ranked predictions")]
    UnrankedCase(EntityId),

    #[error("rank metrics need at least one observation")]
    EmptyInput,

    #[error("open-world leakage: eval triple ({head}, MatchingCWE, {tail}) appears in the training graph")]
    Leakage { head: EntityId, tail: EntityId },

    #[error("top_n must be 1, 2, or 3, got {0}")]
    InvalidTopN(usize),

    #[error(transparent)]
    Graph(#[from] GraphError),

    #[error(transparent)]
    Embed(#[from] EmbedError),
}
