//! Run reproducibility support: seeded shot sampling and run manifests.
//!
//! Sampling uses ChaCha20 with a Fisher-Yates shuffle so shot selection
//! is portable across platforms, not tied to the process RNG.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("requested {requested} samples from {available} records")]
    InsufficientData { requested: usize, available: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Indices of a deterministic k-sample without replacement: the first k
/// positions of a seeded Fisher-Yates permutation of 0..n.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, RunError> {
    if k > n {
        return Err(RunError::InsufficientData {
            requested: k,
            available: n,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    indices.truncate(k);
    Ok(indices)
}

/// Select k exemplars from `dataset` with the seeded permutation.
pub fn sample_shots<T: Clone>(dataset: &[T], k: usize, seed: u64) -> Result<Vec<T>, RunError> {
    Ok(sample_indices(dataset.len(), k, seed)?
        .into_iter()
        .map(|i| dataset[i].clone())
        .collect())
}

/// sha256 hex digest of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String, RunError> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buffer = [0u8; 64 * 1024];
    loop {
        let read = file.read(&mut buffer)?;
        if read == 0 {
            break;
        }
        hasher.update(&buffer[..read]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Record of one run, written beside its outputs; sufficient to re-run
/// in replay mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub subcommand: String,
    /// Serialized effective configuration, flag overrides applied.
    pub config: serde_json::Value,
    /// input path -> sha256 digest
    pub input_digests: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Manifest {
    pub fn new(subcommand: impl Into<String>, config: serde_json::Value) -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.into(),
            config,
            input_digests: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), RunError> {
        self.input_digests
            .insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    /// Write next to `output` as `<output>.manifest.json`.
    pub fn write_beside(&self, output: &Path) -> Result<std::path::PathBuf, RunError> {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = output.with_file_name(name);
        let serialized = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, serialized)?;
        Ok(path)
    }
}
