//! Run manifests: every command records its resolved configuration hash,
//! seed, version, and output file names next to the outputs. Nothing
//! time- or path-dependent goes in, so reruns are byte-identical.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    config_hash: String,
    outputs: Vec<String>,
}

/// Hash of the resolved configuration (canonical JSON bytes).
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Write `<stem>.manifest.json` next to the first output.
pub fn write_manifest<T: Serialize>(
    subcommand: &str,
    seed: u64,
    config: &T,
    outputs: &[&Path],
) -> Result<(), std::io::Error> {
    let first = outputs.first().expect("at least one output");
    write_manifest_at(
        &first.with_extension("manifest.json"),
        subcommand,
        seed,
        config,
        outputs,
    )
}

/// Write the manifest to an explicit path.
pub fn write_manifest_at<T: Serialize>(
    manifest_path: &Path,
    subcommand: &str,
    seed: u64,
    config: &T,
    outputs: &[&Path],
) -> Result<(), std::io::Error> {
    let manifest = Manifest {
        tool: "symdistill",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        seed,
        config_hash: config_hash(config),
        outputs: outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.to_string_lossy().into_owned())
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(manifest_path, json + "\n")
}
