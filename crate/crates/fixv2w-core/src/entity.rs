//! Entity identifiers for the three namespaces of the vulnerability graph.
//!
//! Identifiers are plain value types; dense interning happens at the graph
//! level (see [`crate::graph`]). Ordering is natural: numeric runs inside a
//! key compare as numbers, so `CWE-99 < CWE-140` and
//! `CVE-2020-9999 < CVE-2020-10000`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::GraphError;

/// The two sentinel tokens the NVD uses when no catalog CWE fits.
pub const PLACEHOLDER_OTHER: &str = "NVD-CWE-Other";
pub const PLACEHOLDER_NOINFO: &str = "NVD-CWE-noinfo";

/// Namespace of an identifier: vulnerability, weakness, or platform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Namespace {
    Cve,
    Cwe,
    Cpe,
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Namespace::Cve => write!(f, "CVE"),
            Namespace::Cwe => write!(f, "CWE"),
            Namespace::Cpe => write!(f, "CPE"),
        }
    }
}

/// A validated identifier: namespace plus canonical key string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId {
    namespace: Namespace,
    key: String,
}

impl EntityId {
    /// A CVE id of the form `CVE-YYYY-NNNN+`.
    pub fn cve(key: &str) -> Result<Self, GraphError> {
        if is_valid_cve_key(key) {
            Ok(Self { namespace: Namespace::Cve, key: key.to_string() })
        } else {
            Err(GraphError::InvalidKey { namespace: Namespace::Cve, key: key.to_string() })
        }
    }

    /// A CWE id from its numeric suffix, e.g. `cwe(252)` is `CWE-252`.
    pub fn cwe(number: u32) -> Self {
        Self { namespace: Namespace::Cwe, key: format!("CWE-{number}") }
    }

    /// A CWE id from a raw token: `CWE-<n>` or one of the NVD placeholder
    /// sentinels (`NVD-CWE-Other`, `NVD-CWE-noinfo`).
    pub fn cwe_token(key: &str) -> Result<Self, GraphError> {
        if is_valid_cwe_key(key) {
            Ok(Self { namespace: Namespace::Cwe, key: key.to_string() })
        } else {
            Err(GraphError::InvalidKey { namespace: Namespace::Cwe, key: key.to_string() })
        }
    }

    /// A CPE 2.3 colon-form URI.
    pub fn cpe(uri: &str) -> Result<Self, GraphError> {
        if is_valid_cpe_key(uri) {
            Ok(Self { namespace: Namespace::Cpe, key: uri.to_string() })
        } else {
            Err(GraphError::InvalidKey { namespace: Namespace::Cpe, key: uri.to_string() })
        }
    }

    /// Parse a key and infer its namespace from the syntax. The three
    /// namespaces have disjoint grammars, so sniffing is unambiguous.
    pub fn parse(key: &str) -> Result<Self, GraphError> {
        if is_valid_cve_key(key) {
            Self::cve(key)
        } else if is_valid_cwe_key(key) {
            Self::cwe_token(key)
        } else if is_valid_cpe_key(key) {
            Self::cpe(key)
        } else {
            Err(GraphError::UnparseableId { key: key.to_string() })
        }
    }

    pub fn namespace(&self) -> Namespace {
        self.namespace
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    /// True for the sentinel CWE entities `NVD-CWE-Other` / `NVD-CWE-noinfo`.
    pub fn is_placeholder(&self) -> bool {
        self.namespace == Namespace::Cwe
            && (self.key == PLACEHOLDER_OTHER || self.key == PLACEHOLDER_NOINFO)
    }

    /// Numeric suffix of a catalog CWE id; `None` for placeholders and other
    /// namespaces.
    pub fn cwe_number(&self) -> Option<u32> {
        if self.namespace != Namespace::Cwe {
            return None;
        }
        self.key.strip_prefix("CWE-").and_then(|n| n.parse().ok())
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> String {
        id.key
    }
}

impl TryFrom<String> for EntityId {
    type Error = GraphError;

    fn try_from(key: String) -> Result<Self, GraphError> {
        EntityId::parse(&key)
    }
}

impl Ord for EntityId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.namespace
            .cmp(&other.namespace)
            .then_with(|| natural_cmp(&self.key, &other.key))
    }
}

impl PartialOrd for EntityId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn is_valid_cve_key(key: &str) -> bool {
    let Some(rest) = key.strip_prefix("CVE-") else {
        return false;
    };
    let Some((year, seq)) = rest.split_once('-') else {
        return false;
    };
    year.len() == 4
        && year.bytes().all(|b| b.is_ascii_digit())
        && seq.len() >= 4
        && seq.bytes().all(|b| b.is_ascii_digit())
}

fn is_valid_cwe_key(key: &str) -> bool {
    if key == PLACEHOLDER_OTHER || key == PLACEHOLDER_NOINFO {
        return true;
    }
    let Some(num) = key.strip_prefix("CWE-") else {
        return false;
    };
    !num.is_empty() && !num.starts_with('0') && num.bytes().all(|b| b.is_ascii_digit())
}

/// CPE 2.3 colon form: `cpe:2.3:` followed by 11 more colon-separated
/// components (colons may be escaped with a backslash inside a component).
fn is_valid_cpe_key(key: &str) -> bool {
    if !key.starts_with("cpe:2.3:") {
        return false;
    }
    let mut fields = 1usize;
    let mut escaped = false;
    for b in key.bytes() {
        match (escaped, b) {
            (true, _) => escaped = false,
            (false, b'\\') => escaped = true,
            (false, b':') => fields += 1,
            _ => {}
        }
    }
    fields == 13
}

/// Byte-wise comparison except that maximal ASCII digit runs compare as
/// unsigned integers (longer run of significant digits wins).
fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (a, b) = (a.as_bytes(), b.as_bytes());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let (ca, cb) = (a[i], b[j]);
        if ca.is_ascii_digit() && cb.is_ascii_digit() {
            let (da, ni) = digit_run(a, i);
            let (db, nj) = digit_run(b, j);
            let ord = da.len().cmp(&db.len()).then_with(|| da.cmp(db));
            if ord != Ordering::Equal {
                return ord;
            }
            i = ni;
            j = nj;
        } else {
            let ord = ca.cmp(&cb);
            if ord != Ordering::Equal {
                return ord;
            }
            i += 1;
            j += 1;
        }
    }
    (a.len() - i).cmp(&(b.len() - j))
}

/// Digit run starting at `i` with leading zeros stripped (but keeping at
/// least one digit), plus the index one past the run.
fn digit_run(s: &[u8], i: usize) -> (&[u8], usize) {
    let mut end = i;
    while end < s.len() && s[end].is_ascii_digit() {
        end += 1;
    }
    let mut start = i;
    while start + 1 < end && s[start] == b'0' {
        start += 1;
    }
    (&s[start..end], end)
}
