use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::Manifest;
use crate::error::{Error, Result};

/// Outcome of downloading one manifest entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchRecord {
    pub id: String,
    pub url: String,
    /// `ok`, `failed(<http status>)` or `failed(<error>)`.
    pub status: String,
    pub sha256: Option<String>,
    pub bytes: Option<u64>,
}

impl FetchRecord {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn file_name(id: &str, url: &str) -> String {
    let path = url.split(['?', '#']).next().unwrap_or(url);
    let last = path.rsplit('/').next().unwrap_or("");
    match last.rsplit_once('.') {
        Some((_, ext)) if !ext.is_empty() && ext.len() <= 5 && ext.chars().all(|c| c.is_ascii_alphanumeric()) => {
            format!("{id}.{ext}")
        }
        _ => id.to_string(),
    }
}

/// Downloads every URL-sourced entry into `dest_dir`. Individual failures are
/// recorded in the report; only an unusable `dest_dir` aborts the run.
pub fn fetch_manifest_sources(manifest: &Manifest, dest_dir: impl AsRef<Path>) -> Result<Vec<FetchRecord>> {
    let dest = dest_dir.as_ref();
    let urls: Vec<_> = manifest.entries.iter().filter(|e| e.is_url()).collect();
    if urls.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dest).map_err(Error::at(dest))?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(120)))
        .build()
        .into();
    let mut report = Vec::with_capacity(urls.len());
    for entry in urls {
        let mut record = FetchRecord {
            id: entry.id.clone(),
            url: entry.source.clone(),
            status: String::new(),
            sha256: None,
            bytes: None,
        };
        let body = match agent.get(&entry.source).call() {
            Ok(mut resp) => resp
                .body_mut()
                .with_config()
                .limit(u64::MAX)
                .read_to_vec()
                .map_err(|e| e.to_string()),
            Err(ureq::Error::StatusCode(code)) => Err(code.to_string()),
            Err(e) => Err(e.to_string()),
        };
        match body {
            Ok(bytes) => {
                let target = dest.join(file_name(&entry.id, &entry.source));
                match std::fs::write(&target, &bytes) {
                    Ok(()) => {
                        record.status = "ok".into();
                        record.sha256 = Some(hex(&Sha256::digest(&bytes)));
                        record.bytes = Some(bytes.len() as u64);
                    }
                    Err(e) => record.status = format!("failed({e})"),
                }
            }
            Err(why) => record.status = format!("failed({why})"),
        }
        log::info!("fetch {} -> {}", record.id, record.status);
        report.push(record);
    }
    Ok(report)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
