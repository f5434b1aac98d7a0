//! Thin caching client for the NVD APIs (enabled by the `fetch` feature).
//!
//! Pages are fetched with `resultsPerPage`/`startIndex` and merged into one
//! document; every page is cached on disk keyed by URL and date window, so
//! repeated runs are offline after the first fetch. All parsers accept local
//! files, and nothing else in the crate touches the network.

use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::IngestError;

pub const CVE_ENDPOINT: &str = "https://services.nvd.nist.gov/rest/json/cves/2.0";
pub const HISTORY_ENDPOINT: &str = "https://services.nvd.nist.gov/rest/json/cvehistory/2.0";
const PAGE_SIZE: usize = 2000;

pub struct NvdClient {
    cache_dir: PathBuf,
    api_key: Option<String>,
}

impl NvdClient {
    pub fn new(cache_dir: impl Into<PathBuf>, api_key: Option<String>) -> Self {
        Self { cache_dir: cache_dir.into(), api_key }
    }

    /// Fetch every page of a CVE feed window (`pubStartDate`/`pubEndDate`)
    /// and merge the `vulnerabilities` arrays.
    pub fn fetch_cves(&self, from: &str, to: &str) -> Result<Vec<u8>, IngestError> {
        self.fetch_paged(
            CVE_ENDPOINT,
            &[("pubStartDate", from), ("pubEndDate", to)],
            "vulnerabilities",
        )
    }

    /// Fetch every page of the change-history window
    /// (`changeStartDate`/`changeEndDate`) and merge the `cveChanges`
    /// arrays.
    pub fn fetch_history(&self, from: &str, to: &str) -> Result<Vec<u8>, IngestError> {
        self.fetch_paged(
            HISTORY_ENDPOINT,
            &[("changeStartDate", from), ("changeEndDate", to)],
            "cveChanges",
        )
    }

    fn fetch_paged(
        &self,
        endpoint: &str,
        window: &[(&str, &str)],
        array_key: &str,
    ) -> Result<Vec<u8>, IngestError> {
        let mut merged: Vec<Value> = Vec::new();
        let mut start_index = 0usize;
        loop {
            let mut url = format!("{endpoint}?resultsPerPage={PAGE_SIZE}&startIndex={start_index}");
            for (key, value) in window {
                url.push_str(&format!("&{key}={value}"));
            }
            let page = self.get_cached(&url)?;
            let doc: Value = serde_json::from_slice(&page).map_err(|e| {
                IngestError::MalformedDocument {
                    offset: 0,
                    line: e.line(),
                    column: e.column(),
                    reason: format!("bad page at startIndex {start_index}: {e}"),
                }
            })?;
            let total =
                doc.get("totalResults").and_then(Value::as_u64).unwrap_or_default() as usize;
            if let Some(items) = doc.get(array_key).and_then(Value::as_array) {
                merged.extend(items.iter().cloned());
            }
            start_index += PAGE_SIZE;
            if start_index >= total || total == 0 {
                break;
            }
        }
        let document = serde_json::json!({
            "resultsPerPage": merged.len(),
            "startIndex": 0,
            "totalResults": merged.len(),
            array_key: merged,
        });
        Ok(serde_json::to_vec(&document).expect("serializable"))
    }

    /// Disk cache first; the network only on a miss.
    fn get_cached(&self, url: &str) -> Result<Vec<u8>, IngestError> {
        let path = self.cache_path(url);
        if path.exists() {
            return Ok(std::fs::read(&path)?);
        }
        let body = self.get(url)?;
        std::fs::create_dir_all(&self.cache_dir)?;
        std::fs::write(&path, &body)?;
        Ok(body)
    }

    fn get(&self, url: &str) -> Result<Vec<u8>, IngestError> {
        log::info!("fetching {url}");
        let mut request = ureq::get(url);
        if let Some(key) = &self.api_key {
            request = request.header("apiKey", key);
        }
        let mut response = request
            .call()
            .map_err(|e| IngestError::MalformedXml(format!("request to {url} failed: {e}")))?;
        let mut body = Vec::new();
        std::io::Read::read_to_end(&mut response.body_mut().as_reader(), &mut body)?;
        Ok(body)
    }

    fn cache_path(&self, url: &str) -> PathBuf {
        self.cache_dir.join(format!("{}.json", fnv1a(url.as_bytes())))
    }
}

/// FNV-1a over the URL; collisions are irrelevant for a local cache key.
fn fnv1a(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Look up a cached window document without any client (offline mode).
pub fn cached_document(cache_dir: &Path, url: &str) -> Option<Vec<u8>> {
    let path = cache_dir.join(format!("{}.json", fnv1a(url.as_bytes())));
    std::fs::read(path).ok()
}
