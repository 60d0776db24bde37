use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{extract, load_representation, persist_representation, LayerSpec, RepresentationBackend, RepresentationSequence};
use crate::error::Result;
use crate::signal::Waveform;

/// Overrides the default cache root.
pub const CACHE_ENV_VAR: &str = "REPTTS_CACHE_DIR";

/// On-disk representation cache keyed by (audio content, backend id, layer spec).
///
/// Entries are written atomically, so concurrent writers of the same key are safe.
#[derive(Debug, Clone)]
pub struct RepresentationCache {
    root: PathBuf,
}

impl RepresentationCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `$REPTTS_CACHE_DIR` if set, `default` otherwise.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_ENV_VAR) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(default),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn key(wav: &Waveform, spec: LayerSpec, backend: &dyn RepresentationBackend) -> String {
        let mut h = Sha256::new();
        h.update(wav.content_hash().as_bytes());
        h.update(b"\0");
        h.update(backend.id().as_bytes());
        h.update(b"\0");
        h.update(spec.tag().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(format!("{key}.rep"))
    }

    /// Returns the cached frames, extracting and storing them on a miss.
    /// The flag is `true` on a cache hit.
    pub fn get_or_extract(
        &self,
        wav: &Waveform,
        spec: LayerSpec,
        backend: &dyn RepresentationBackend,
    ) -> Result<(RepresentationSequence, PathBuf, bool)> {
        let path = self.path_for(&Self::key(wav, spec, backend));
        if path.exists() {
            if let Ok(seq) = load_representation(&path, Some(backend.dim())) {
                return Ok((seq, path, true));
            }
            log::warn!("discarding unreadable cache entry {}", path.display());
        }
        let seq = extract(wav, spec, backend)?;
        persist_representation(&seq, &path)?;
        Ok((seq, path, false))
    }
}
