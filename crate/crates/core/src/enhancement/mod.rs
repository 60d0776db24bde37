//! Frozen speech-enhancement front ends. Every enhancer maps a waveform to a
//! waveform of the same rate and length and is never trained here.

mod external;
mod spectral;

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::signal::Waveform;

pub use external::{external_enhancer, ExternalEnhancer, ExternalEnhancerConfig};
pub use spectral::{spectral_subtraction_enhancer, SpectralSubtraction, SpectralSubtractionConfig};

pub trait Enhancer: Send + Sync {
    /// Stable identity, part of preparation cache keys.
    fn id(&self) -> String;
    fn enhance(&self, wav: &Waveform) -> Result<Waveform>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityEnhancer;

pub fn identity_enhancer() -> IdentityEnhancer {
    IdentityEnhancer
}

impl Enhancer for IdentityEnhancer {
    fn id(&self) -> String {
        "identity".into()
    }

    fn enhance(&self, wav: &Waveform) -> Result<Waveform> {
        Ok(wav.clone())
    }
}

/// Enhancer selection as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnhancerConfig {
    Identity,
    SpectralSubtraction(SpectralSubtractionConfig),
    External(ExternalEnhancerConfig),
}

impl Default for EnhancerConfig {
    fn default() -> Self {
        EnhancerConfig::SpectralSubtraction(SpectralSubtractionConfig::default())
    }
}

impl EnhancerConfig {
    pub fn build(&self) -> Result<Box<dyn Enhancer>> {
        Ok(match self {
            EnhancerConfig::Identity => Box::new(IdentityEnhancer),
            EnhancerConfig::SpectralSubtraction(c) => Box::new(SpectralSubtraction::new(*c)?),
            EnhancerConfig::External(c) => Box::new(external_enhancer(c)?),
        })
    }
}

/// Counts calls to the wrapped enhancer, so callers can check that each
/// utterance is enhanced exactly once.
pub struct Audited<E> {
    inner: E,
    calls: AtomicUsize,
}

impl<E: Enhancer> Audited<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<E: Enhancer> Enhancer for Audited<E> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn enhance(&self, wav: &Waveform) -> Result<Waveform> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.enhance(wav)
    }
}

impl Enhancer for Box<dyn Enhancer> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn enhance(&self, wav: &Waveform) -> Result<Waveform> {
        (**self).enhance(wav)
    }
}
