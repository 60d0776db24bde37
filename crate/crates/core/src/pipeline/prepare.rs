use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::manifest::{load_manifest, UtteranceRecord};
use crate::enhancement::Enhancer;
use crate::error::{Error, IoContext, Result};
use crate::representation::{RepresentationBackend, RepresentationCache};
use crate::signal::{load_audio, mix_at_snr, read_wav, write_wav, MixOutput, WavFormat, Waveform, PIPELINE_RATE};

pub const PREPARED_DIR: &str = "prepared";
pub const REPORT_FILE: &str = "report.json";

/// Noise clips available for mixing, in file-name order.
#[derive(Debug, Clone)]
pub struct NoiseCorpus {
    clips: Vec<(String, Waveform)>,
}

impl NoiseCorpus {
    pub fn load(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = match std::fs::read_dir(dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(Error::io(format!("list {}", dir.display()), e)),
        };
        paths.sort();
        let clips = paths
            .iter()
            .map(|p| {
                let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
                Ok((name, load_audio(p, PIPELINE_RATE)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(clips).map_err(|_| Error::Data(format!("noise corpus {} has no WAV clips", dir.display())))
    }

    pub fn new(clips: Vec<(String, Waveform)>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::Data("noise corpus is empty".into()));
        }
        Ok(Self { clips })
    }

    /// Mixes `clean` with the clip picked by a seeded hash of `id`.
    pub fn mix(&self, id: &str, clean: &Waveform, snr_db: f64, seed: u64) -> Result<(String, MixOutput)> {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(id.as_bytes());
        let d = h.finalize();
        let pick = u64::from_le_bytes(d[..8].try_into().unwrap());
        let mix_seed = u64::from_le_bytes(d[8..16].try_into().unwrap());
        let (name, noise) = &self.clips[(pick % self.clips.len() as u64) as usize];
        Ok((name.clone(), mix_at_snr(clean, noise, snr_db, mix_seed)?))
    }
}

/// SNR of a mixture measured against the noise actually added.
pub fn achieved_snr_db(clean: &Waveform, mix: &MixOutput) -> f64 {
    let p = |w: &Waveform| w.samples().iter().map(|&v| (v as f64).powi(2)).sum::<f64>();
    10.0 * (p(clean) / p(&mix.scaled_noise)).log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedUtterance {
    pub id: String,
    pub noise_clip: String,
    pub noise_offset: usize,
    pub achieved_snr_db: f64,
    pub enhanced: PathBuf,
    /// Hash of the noisy input and enhancer identity the enhanced file came from.
    pub enhance_key: String,
    pub representation: PathBuf,
    /// Enhanced audio reused from an earlier run.
    pub enhance_reused: bool,
    pub cache_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparationReport {
    pub enhancer: String,
    pub backend: String,
    pub layer: String,
    pub target_snr_db: f64,
    pub utterances: Vec<PreparedUtterance>,
    pub rejections: Vec<Rejection>,
}

impl PreparationReport {
    pub fn path(config: &ExperimentConfig) -> PathBuf {
        config.output_dir.join(PREPARED_DIR).join(REPORT_FILE)
    }

    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let path = Self::path(config);
        if !path.exists() {
            return Err(Error::Data(format!("{} not found; run prepare-data first", path.display())));
        }
        let text = std::fs::read_to_string(&path).with_path("read", &path)?;
        serde_json::from_str(&text).map_err(|e| Error::corrupt(&path, e.to_string()))
    }

    pub fn all_cache_hits(&self) -> bool {
        self.utterances.iter().all(|u| u.cache_hit && u.enhance_reused)
    }
}

/// Builds the enhancer and backend named by the config and runs preparation.
pub fn prepare_data(config: &ExperimentConfig) -> Result<PreparationReport> {
    let enhancer = config.enhancer.build()?;
    let backend = config.backend.build()?;
    prepare_data_with(config, &enhancer, backend.as_ref())
}

/// Mixes every acoustic-corpus utterance with noise, enhances it once and
/// caches its representation. Per-utterance failures are recorded; the run
/// fails when they exceed the configured fraction.
pub fn prepare_data_with(
    config: &ExperimentConfig,
    enhancer: &dyn Enhancer,
    backend: &dyn RepresentationBackend,
) -> Result<PreparationReport> {
    config.layer.validate(backend.n_layers())?;
    let noise = NoiseCorpus::load(&config.data.noise_dir)?;
    let records = load_manifest(&config.data.acoustic_manifest)?;
    if records.is_empty() {
        return Err(Error::Data("acoustic manifest is empty".into()));
    }
    let dir = config.output_dir.join(PREPARED_DIR);
    config.echo_into(&dir)?;
    let previous = PreparationReport::load(config).ok();
    let cache = RepresentationCache::from_env_or(config.cache_root());
    let job = Job {
        config,
        enhancer,
        backend,
        noise: &noise,
        cache: &cache,
        dir: &dir,
        previous: previous.as_ref(),
    };

    let workers = config.data.workers.min(records.len()).max(1);
    let mut results: Vec<Option<Result<PreparedUtterance>>> = (0..records.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let job = &job;
                let records = &records;
                s.spawn(move || {
                    (w..records.len())
                        .step_by(workers)
                        .map(|i| (i, job.run(&records[i])))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("preparation worker panicked") {
                results[i] = Some(r);
            }
        }
    });

    let mut utterances = Vec::new();
    let mut rejections = Vec::new();
    for (rec, r) in records.iter().zip(results) {
        match r.expect("every utterance is processed") {
            Ok(u) => utterances.push(u),
            Err(e) => {
                log::warn!("{}: rejected: {e}", rec.id);
                rejections.push(Rejection {
                    id: rec.id.clone(),
                    reason: e.to_string(),
                });
            }
        }
    }
    let report = PreparationReport {
        enhancer: enhancer.id(),
        backend: backend.id(),
        layer: config.layer.tag(),
        target_snr_db: config.data.mix_snr_db,
        utterances,
        rejections,
    };
    let path = PreparationReport::path(config);
    crate::binfmt::atomic_write(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    let failed = report.rejections.len() as f64 / records.len() as f64;
    if failed > config.data.max_failure_fraction {
        return Err(Error::Data(format!(
            "{} of {} utterances failed preparation (limit {:.0}%), see {}",
            report.rejections.len(),
            records.len(),
            config.data.max_failure_fraction * 100.0,
            path.display()
        )));
    }
    Ok(report)
}

struct Job<'a> {
    config: &'a ExperimentConfig,
    enhancer: &'a dyn Enhancer,
    backend: &'a dyn RepresentationBackend,
    noise: &'a NoiseCorpus,
    cache: &'a RepresentationCache,
    dir: &'a Path,
    previous: Option<&'a PreparationReport>,
}

impl Job<'_> {
    fn run(&self, rec: &UtteranceRecord) -> Result<PreparedUtterance> {
        let clean = load_audio(&rec.audio, PIPELINE_RATE)?;
        let (noise_clip, mix) = self.noise.mix(&rec.id, &clean, self.config.data.mix_snr_db, self.config.seed)?;
        let achieved = achieved_snr_db(&clean, &mix);
        let mut h = Sha256::new();
        h.update(mix.mixed.content_hash().as_bytes());
        h.update(b"\0");
        h.update(self.enhancer.id().as_bytes());
        let enhance_key = hex::encode(h.finalize());
        let enhanced_path = self.dir.join("enhanced").join(format!("{}.wav", rec.id));

        let reusable = self
            .previous
            .and_then(|p| p.utterances.iter().find(|u| u.id == rec.id))
            .is_some_and(|u| u.enhance_key == enhance_key && enhanced_path.is_file());
        let (enhanced, enhance_reused) = match reusable.then(|| read_wav(&enhanced_path)) {
            Some(Ok(w)) => (w, true),
            _ => {
                let w = self.enhancer.enhance(&mix.mixed)?;
                if w.len() != mix.mixed.len() || w.sample_rate() != PIPELINE_RATE {
                    return Err(Error::Data(format!(
                        "{}: enhancer changed the signal length or rate",
                        rec.id
                    )));
                }
                write_wav(&enhanced_path, &w, WavFormat::Float32)?;
                (w, false)
            }
        };
        let (_, rep_path, cache_hit) = self.cache.get_or_extract(&enhanced, self.config.layer, self.backend)?;
        Ok(PreparedUtterance {
            id: rec.id.clone(),
            noise_clip,
            noise_offset: mix.noise_offset,
            achieved_snr_db: achieved,
            enhanced: enhanced_path,
            enhance_key,
            representation: rep_path,
            enhance_reused,
            cache_hit,
        })
    }
}
