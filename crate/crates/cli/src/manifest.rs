//! Output bundles and their manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 over a git blob header and the content, hex encoded.
pub fn blob_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// One named output file, relative to the output directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Output {
    pub fn new(name: impl Into<String>, bytes: Vec<u8>) -> Self {
        Output {
            name: name.into(),
            bytes,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: &'a str,
    pub seed: u64,
    pub config: serde_json::Value,
    pub outputs: BTreeMap<String, String>,
}

/// Writes all outputs and `manifest.json` into `dir`. On failure, every
/// file written so far is removed again.
pub fn write_bundle(
    dir: &Path,
    outputs: &[Output],
    manifest: &Manifest<'_>,
) -> io::Result<Vec<PathBuf>> {
    let mut written: Vec<PathBuf> = Vec::new();
    let result = (|| {
        fs::create_dir_all(dir)?;
        for out in outputs {
            let path = dir.join(&out.name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            written.push(path.clone());
            fs::write(&path, &out.bytes)?;
        }
        let path = dir.join("manifest.json");
        written.push(path.clone());
        let mut json = serde_json::to_vec_pretty(manifest).map_err(io::Error::other)?;
        json.push(b'\n');
        fs::write(&path, json)
    })();
    match result {
        Ok(()) => Ok(written),
        Err(e) => {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git_layout() {
        // sha256 of "blob 6\0hello\n", as produced by a sha256 git repository.
        assert_eq!(
            blob_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }
}
