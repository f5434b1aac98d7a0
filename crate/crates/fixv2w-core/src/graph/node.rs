//! CWE catalog node: kind, abstraction, mapping status, view membership.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::entity::{EntityId, Namespace};
use crate::error::GraphError;

/// What kind of catalog entry a CWE id denotes. `Placeholder` covers the NVD
/// sentinels `NVD-CWE-Other` / `NVD-CWE-noinfo`, which are not catalog
/// entries but participate in mapping statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CweKind {
    Weakness,
    Category,
    View,
    Deprecated,
    Placeholder,
}

impl fmt::Display for CweKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CweKind::Weakness => "Weakness",
            CweKind::Category => "Category",
            CweKind::View => "View",
            CweKind::Deprecated => "Deprecated",
            CweKind::Placeholder => "Placeholder",
        };
        f.write_str(s)
    }
}

/// Abstraction level of a weakness entry, from most to least general.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Abstraction {
    Pillar,
    Class,
    Base,
    Variant,
}

impl fmt::Display for Abstraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Abstraction::Pillar => "Pillar",
            Abstraction::Class => "Class",
            Abstraction::Base => "Base",
            Abstraction::Variant => "Variant",
        };
        f.write_str(s)
    }
}

/// Root-cause mapping policy for a CWE. `Placeholder` is the sentinel
/// status for the NVD tokens: counted separately in statistics, never a
/// candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MappingStatus {
    Allowed,
    Discouraged,
    Prohibited,
    Placeholder,
}

impl MappingStatus {
    /// Anything other than `Allowed` makes a CVE mapping invalid.
    pub fn is_invalid(self) -> bool {
        self != MappingStatus::Allowed
    }
}

impl fmt::Display for MappingStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MappingStatus::Allowed => "Allowed",
            MappingStatus::Discouraged => "Discouraged",
            MappingStatus::Prohibited => "Prohibited",
            MappingStatus::Placeholder => "Placeholder",
        };
        f.write_str(s)
    }
}

/// A CWE catalog entry as used by the graph overlay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CweNode {
    id: EntityId,
    kind: CweKind,
    abstraction: Option<Abstraction>,
    status: MappingStatus,
    in_view_1003: bool,
    name: String,
}

impl CweNode {
    /// A weakness entry. Abstraction defaults to `Base` when the catalog
    /// omits it.
    pub fn weakness(
        id: EntityId,
        abstraction: Option<Abstraction>,
        status: MappingStatus,
        in_view_1003: bool,
        name: impl Into<String>,
    ) -> Result<Self, GraphError> {
        let node = Self {
            id,
            kind: CweKind::Weakness,
            abstraction: Some(abstraction.unwrap_or(Abstraction::Base)),
            status,
            in_view_1003,
            name: name.into(),
        };
        node.validate()?;
        Ok(node)
    }

    /// A category or view entry; always Prohibited, never in view 1003.
    pub fn container(id: EntityId, kind: CweKind, name: impl Into<String>) -> Result<Self, GraphError> {
        let node = Self {
            id,
            kind,
            abstraction: None,
            status: MappingStatus::Prohibited,
            in_view_1003: false,
            name: name.into(),
        };
        node.validate()?;
        Ok(node)
    }

    /// A deprecated entry; always Prohibited.
    pub fn deprecated(id: EntityId, name: impl Into<String>) -> Result<Self, GraphError> {
        let node = Self {
            id,
            kind: CweKind::Deprecated,
            abstraction: None,
            status: MappingStatus::Prohibited,
            in_view_1003: false,
            name: name.into(),
        };
        node.validate()?;
        Ok(node)
    }

    /// Sentinel node for `NVD-CWE-Other` / `NVD-CWE-noinfo`.
    pub fn placeholder(id: EntityId) -> Result<Self, GraphError> {
        if !id.is_placeholder() {
            return Err(GraphError::InvalidCweNode {
                id,
                reason: "placeholder nodes require a placeholder id".into(),
            });
        }
        let name = id.key().to_string();
        Ok(Self {
            id,
            kind: CweKind::Placeholder,
            abstraction: None,
            status: MappingStatus::Placeholder,
            in_view_1003: false,
            name,
        })
    }

    pub(crate) fn validate(&self) -> Result<(), GraphError> {
        let fail = |reason: &str| {
            Err(GraphError::InvalidCweNode { id: self.id.clone(), reason: reason.into() })
        };
        if self.id.namespace() != Namespace::Cwe {
            return fail("id is not in the CWE namespace");
        }
        match self.kind {
            CweKind::Weakness => {
                if self.abstraction.is_none() {
                    return fail("weakness entries carry an abstraction level");
                }
            }
            CweKind::Category | CweKind::View | CweKind::Deprecated => {
                if self.status != MappingStatus::Prohibited {
                    return fail("categories, views, and deprecated entries are Prohibited");
                }
                if self.abstraction.is_some() {
                    return fail("only weakness entries carry an abstraction level");
                }
            }
            CweKind::Placeholder => {
                if self.status != MappingStatus::Placeholder || !self.id.is_placeholder() {
                    return fail("placeholder kind is reserved for the NVD sentinel tokens");
                }
            }
        }
        if self.in_view_1003
            && matches!(self.status, MappingStatus::Prohibited | MappingStatus::Placeholder)
        {
            return fail("view-1003 members cannot be Prohibited");
        }
        Ok(())
    }

    pub fn id(&self) -> &EntityId {
        &self.id
    }

    pub fn kind(&self) -> CweKind {
        self.kind
    }

    pub fn abstraction(&self) -> Option<Abstraction> {
        self.abstraction
    }

    pub fn status(&self) -> MappingStatus {
        self.status
    }

    pub fn in_view_1003(&self) -> bool {
        self.in_view_1003
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Legal target for a corrected mapping: an Allowed weakness inside the
    /// view-1003 slice.
    pub fn is_candidate_eligible(&self) -> bool {
        self.in_view_1003 && self.status == MappingStatus::Allowed
    }
}
