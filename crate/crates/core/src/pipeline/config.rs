use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acoustic::AcousticConfig;
use crate::enhancement::EnhancerConfig;
use crate::error::{Error, IoContext, Result};
use crate::representation::{ExternalBackend, LayerSpec, MockBackend, RepresentationBackend, RepresentationCache, REP_DIM};
use crate::vocoder::VocoderConfig;

/// File name of the config echo written into every artifact directory.
pub const CONFIG_ECHO: &str = "experiment.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Clean multi-speaker corpus for the vocoder.
    pub vocoder_manifest: PathBuf,
    /// Single-speaker text/audio corpus for the acoustic model; mixed with noise.
    pub acoustic_manifest: PathBuf,
    /// Directory of noise WAV clips.
    pub noise_dir: PathBuf,
    #[serde(default = "default_snr")]
    pub mix_snr_db: f64,
    /// Preparation fails when more than this fraction of utterances fail.
    #[serde(default = "default_failure_fraction")]
    pub max_failure_fraction: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_snr() -> f64 {
    5.0
}
fn default_failure_fraction() -> f64 {
    0.1
}
fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    /// Seeded stand-in for a pretrained model.
    Mock {
        seed: u64,
        n_layers: usize,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    External(ExternalBackend),
}

fn default_dim() -> usize {
    REP_DIM
}

impl BackendConfig {
    pub fn build(&self) -> Result<Box<dyn RepresentationBackend>> {
        Ok(match self {
            BackendConfig::Mock { seed, n_layers, dim } => Box::new(MockBackend::new(*seed, *n_layers, *dim)),
            BackendConfig::External(e) => {
                e.check()?;
                Box::new(e.clone())
            }
        })
    }

    pub fn n_layers(&self) -> usize {
        match self {
            BackendConfig::Mock { n_layers, .. } => (*n_layers).max(1),
            BackendConfig::External(e) => e.n_layers,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            BackendConfig::Mock { dim, .. } => *dim,
            BackendConfig::External(e) => e.dim,
        }
    }
}

/// Everything one experiment run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Representation cache root; `$REPTTS_CACHE_DIR` overrides, default `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    pub layer: LayerSpec,
    pub data: DataConfig,
    pub enhancer: EnhancerConfig,
    pub backend: BackendConfig,
    pub vocoder: VocoderConfig,
    pub acoustic: AcousticConfig,
}

impl ExperimentConfig {
    /// Desk-scale preset over a corpus written by `write_toy_corpus` into `root`.
    pub fn toy(root: &Path) -> Self {
        Self {
            output_dir: root.join("runs"),
            seed: 1234,
            cache_dir: None,
            layer: LayerSpec::Single(6),
            data: DataConfig {
                vocoder_manifest: root.join("vocoder.jsonl"),
                acoustic_manifest: root.join("acoustic.jsonl"),
                noise_dir: root.join("noise"),
                mix_snr_db: default_snr(),
                max_failure_fraction: default_failure_fraction(),
                workers: default_workers(),
            },
            enhancer: EnhancerConfig::default(),
            backend: BackendConfig::Mock {
                seed: 7,
                n_layers: 13,
                dim: REP_DIM,
            },
            vocoder: VocoderConfig::toy(),
            acoustic: AcousticConfig::toy(),
        }
    }

    /// Parses a TOML file; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_overrides(path, &[])
    }

    /// As [`ExperimentConfig::load`], after applying `key.path=value`
    /// overrides to the parsed tree. Values are TOML literals; anything that
    /// does not parse as one is taken as a string.
    pub fn load_with_overrides(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_path("read config", path)?;
        let mut tree: toml::Table =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let mut cfg: Self = tree
            .try_into()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_relative(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.data.vocoder_manifest);
        fix(&mut self.data.acoustic_manifest);
        fix(&mut self.data.noise_dir);
        if let Some(c) = &mut self.cache_dir {
            fix(c);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.layer.validate(self.backend.n_layers())?;
        self.vocoder.validate()?;
        self.acoustic.validate()?;
        let dim = self.backend.dim();
        if self.vocoder.generator.input_dim != dim || self.acoustic.output_dim != dim {
            return Err(Error::Config(format!(
                "backend width {dim}, vocoder input_dim {}, acoustic output_dim {} must agree",
                self.vocoder.generator.input_dim, self.acoustic.output_dim
            )));
        }
        let d = &self.data;
        if !d.mix_snr_db.is_finite() || !(0.0..=1.0).contains(&d.max_failure_fraction) || d.workers == 0 {
            return Err(Error::Config("data: mix_snr_db finite, max_failure_fraction in [0, 1], workers >= 1".into()));
        }
        Ok(())
    }

    pub fn cache_root(&self) -> PathBuf {
        RepresentationCache::from_env_or(
            self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache")),
        )
        .root()
        .to_path_buf()
    }

    /// Writes the config echo into `dir`, or checks an existing echo matches.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_path("create artifact directory", dir)?;
        let path = dir.join(CONFIG_ECHO);
        let text = self.to_toml()?;
        if path.exists() {
            let existing = std::fs::read_to_string(&path).with_path("read config echo", &path)?;
            let previous: Self = toml::from_str(&existing)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if previous != *self {
                return Err(Error::Config(format!(
                    "{} was produced by a different configuration; use a fresh output directory",
                    dir.display()
                )));
            }
            return Ok(());
        }
        std::fs::write(&path, text).with_path("write config echo", &path)
    }
}

fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut node = tree;
    for p in parents {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {p} is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_path("create output directory", dir)?;
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Config(format!(
                "{} is locked by another run (remove {} if that run is gone)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(format!("create {}", path.display()), e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_config_round_trips_and_validates() {
        let cfg = ExperimentConfig::toy(Path::new("/tmp/toy"));
        cfg.validate().unwrap();
        let back: ExperimentConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn inconsistent_configs_are_rejected() {
        let mut cfg = ExperimentConfig::toy(Path::new("/tmp/toy"));
        cfg.layer = LayerSpec::Single(13);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = ExperimentConfig::toy(Path::new("/tmp/toy"));
        cfg.vocoder.generator.input_dim = 80;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::toy(Path::new("/tmp/toy"));
        cfg.acoustic.output_dim = 64;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::toy(Path::new("/tmp/toy"));
        cfg.vocoder.mel = crate::signal::SpectralConfig::BASELINE;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::toy(Path::new("corpus"));
        cfg.output_dir = "out".into();
        let p = dir.path().join("exp.toml");
        std::fs::write(&p, cfg.to_toml().unwrap()).unwrap();
        let loaded = ExperimentConfig::load(&p).unwrap();
        assert_eq!(loaded.output_dir, dir.path().join("out"));
        assert_eq!(loaded.data.noise_dir, dir.path().join("corpus/noise"));
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.toml");
        std::fs::write(&p, ExperimentConfig::toy(Path::new("c")).to_toml().unwrap()).unwrap();
        let o = |s: &str| s.to_string();
        let cfg = ExperimentConfig::load_with_overrides(
            &p,
            &[o("vocoder.steps=7"), o("layer=average"), o("data.mix_snr_db=0.0"), o("output_dir=elsewhere")],
        )
        .unwrap();
        assert_eq!(cfg.vocoder.steps, 7);
        assert_eq!(cfg.layer, LayerSpec::AverageAll);
        assert_eq!(cfg.data.mix_snr_db, 0.0);
        assert_eq!(cfg.output_dir, dir.path().join("elsewhere"));
        assert!(ExperimentConfig::load_with_overrides(&p, &[o("seed")]).is_err());
        assert!(ExperimentConfig::load_with_overrides(&p, &[o("seed=\"x\"")]).is_err());
    }

    #[test]
    fn echo_detects_changed_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::toy(Path::new("/tmp/toy"));
        cfg.echo_into(dir.path()).unwrap();
        cfg.echo_into(dir.path()).unwrap();
        let other = ExperimentConfig { seed: 9, ..cfg };
        assert!(matches!(other.echo_into(dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn lock_is_exclusive_until_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunLock::acquire(dir.path()).unwrap();
        assert!(RunLock::acquire(dir.path()).is_err());
        drop(a);
        RunLock::acquire(dir.path()).unwrap();
    }
}
