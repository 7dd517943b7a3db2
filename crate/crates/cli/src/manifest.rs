//! Run manifests: enough to re-run a command and compare its outputs.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use polybreak::verify::Guard;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    /// Arguments after the program name, without `--run-manifest`.
    pub command: Vec<String>,
    pub global_seed: Option<u64>,
    pub instance_file: Option<PathBuf>,
    pub template: Vec<String>,
    pub profile: Vec<String>,
    pub generator_product_length: Option<usize>,
    pub guard: Option<Guard>,
    pub outputs: Vec<OutputHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn hash_outputs(paths: &[PathBuf]) -> Result<Vec<OutputHash>> {
    paths
        .iter()
        .map(|p| {
            Ok(OutputHash {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

pub fn write(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn read(path: &Path) -> Result<RunManifest> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Drops `--run-manifest PATH` and `--run-manifest=PATH` from `args`.
pub fn strip_manifest_flag(args: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--run-manifest" {
            skip = true;
        } else if !a.starts_with("--run-manifest=") {
            out.push(a);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_flag_in_both_forms() {
        let args = [
            "solve",
            "--run-manifest",
            "m.json",
            "--instance",
            "i.json",
            "--run-manifest=x",
        ];
        assert_eq!(
            strip_manifest_flag(args.map(String::from)),
            ["solve", "--instance", "i.json"]
        );
    }

    #[test]
    fn hashes_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        std::fs::write(&p, "abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
