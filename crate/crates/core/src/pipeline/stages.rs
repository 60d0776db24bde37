use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::config::{ExperimentConfig, RunLock};
use super::features::{Feature, FeatureExtractor};
use super::manifest::load_manifest;
use super::prepare::PreparationReport;
use crate::acoustic::{uniform_alignment, Acoustic, AcousticExample, AcousticTrainOutputs, AcousticTrainer, PhonemeSequence};
use crate::error::{Error, Result};
use crate::representation::{load_representation, RepresentationBackend, RepresentationCache};
use crate::signal::{load_audio, read_wav, Waveform, PIPELINE_RATE};
use crate::vocoder::{TrainOutputs, Vocoder, VocoderConfig, VocoderExample, VocoderTrainer, SAMPLES_PER_FRAME};

pub fn vocoder_dir(config: &ExperimentConfig, feature: Feature) -> PathBuf {
    config.output_dir.join("vocoder").join(feature.tag())
}

pub fn acoustic_dir(config: &ExperimentConfig) -> PathBuf {
    config.output_dir.join("acoustic").join(config.layer.tag())
}

/// The configured vocoder with its input width set for `feature`.
pub fn vocoder_config_for(config: &ExperimentConfig, feature: Feature, backend: &dyn RepresentationBackend) -> VocoderConfig {
    let mut v = config.vocoder.clone();
    v.generator.input_dim = feature.dim(backend);
    v
}

pub fn feature_extractor<'a>(config: &ExperimentConfig, backend: &'a dyn RepresentationBackend) -> FeatureExtractor<'a> {
    FeatureExtractor {
        backend,
        cache: RepresentationCache::from_env_or(config.cache_root()),
    }
}

/// Clean vocoder-corpus utterances paired with their features.
pub fn vocoder_examples(config: &ExperimentConfig, fx: &FeatureExtractor, feature: Feature) -> Result<Vec<VocoderExample>> {
    let records = load_manifest(&config.data.vocoder_manifest)?;
    if records.is_empty() {
        return Err(Error::Data("vocoder manifest is empty".into()));
    }
    records
        .iter()
        .map(|r| {
            let audio = load_audio(&r.audio, PIPELINE_RATE)?;
            let (rep, _) = fx.extract(&audio, feature)?;
            VocoderExample::new(&r.id, rep, audio)
        })
        .collect()
}

/// Trains (or resumes) the vocoder for `feature` under `<output_dir>/vocoder/<tag>`.
pub fn train_vocoder_stage(config: &ExperimentConfig, feature: Feature, resume: Option<&Path>) -> Result<TrainOutputs> {
    let backend = config.backend.build()?;
    let out = vocoder_dir(config, feature);
    train_vocoder_into(config, feature, backend.as_ref(), &out, resume)
}

pub(crate) fn train_vocoder_into(
    config: &ExperimentConfig,
    feature: Feature,
    backend: &dyn RepresentationBackend,
    out: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutputs> {
    let _lock = RunLock::acquire(out)?;
    config.echo_into(out)?;
    let fx = feature_extractor(config, backend);
    let data = vocoder_examples(config, &fx, feature)?;
    let mut trainer = match resume {
        Some(p) => VocoderTrainer::resume(p)?,
        None => VocoderTrainer::new(&vocoder_config_for(config, feature, backend), &feature.tag())?,
    };
    trainer.train(&data, out)
}

/// Acoustic examples for the `train` split of the prepared corpus: targets are
/// representations of enhanced speech, pitch and energy come from the enhanced
/// audio, and missing durations fall back to a uniform alignment.
pub fn acoustic_examples(config: &ExperimentConfig, report: &PreparationReport, split: &str) -> Result<Vec<AcousticExample>> {
    if report.layer != config.layer.tag() {
        return Err(Error::Incompatible(format!(
            "prepared corpus holds {} representations, config asks for {}",
            report.layer,
            config.layer.tag()
        )));
    }
    let records: HashMap<_, _> = load_manifest(&config.data.acoustic_manifest)?
        .into_iter()
        .map(|r| (r.id.clone(), r))
        .collect();
    let dim = config.backend.dim();
    let mut out = Vec::new();
    for u in &report.utterances {
        let rec = records
            .get(&u.id)
            .ok_or_else(|| Error::Data(format!("{} is in the prepared corpus but not the manifest", u.id)))?;
        if rec.split != split {
            continue;
        }
        let target = load_representation(&u.representation, Some(dim))?;
        let enhanced = read_wav(&u.enhanced)?;
        let mut phonemes = rec.phoneme_sequence();
        if phonemes.durations.is_none() {
            phonemes.durations = Some(uniform_alignment(phonemes.len(), target.n_frames())?);
        }
        let ex = if phonemes.pitch.is_some() && phonemes.energy.is_some() {
            AcousticExample::new(&u.id, phonemes, target)?
        } else {
            AcousticExample::from_audio(&u.id, phonemes, target, &enhanced)?
        };
        out.push(ex);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("no prepared utterances in split {split:?}")));
    }
    Ok(out)
}

/// Trains (or resumes) the acoustic model under `<output_dir>/acoustic/<tag>`.
pub fn train_acoustic_stage(config: &ExperimentConfig, resume: Option<&Path>) -> Result<AcousticTrainOutputs> {
    let report = PreparationReport::load(config)?;
    let out = acoustic_dir(config);
    let _lock = RunLock::acquire(&out)?;
    config.echo_into(&out)?;
    let data = acoustic_examples(config, &report, "train")?;
    let mut trainer = match resume {
        Some(p) => AcousticTrainer::resume(p)?,
        None => AcousticTrainer::new(&config.acoustic, &config.layer.tag(), &data)?,
    };
    trainer.train(&data, &out)
}

/// Text to waveform through the acoustic model and vocoder.
/// `durations` overrides the predicted frames per phoneme.
pub fn synthesize(
    phonemes: &PhonemeSequence,
    acoustic: &Acoustic,
    vocoder: &Vocoder,
    durations: Option<&[u32]>,
) -> Result<Waveform> {
    if acoustic.layer_tag != vocoder.layer_tag {
        return Err(Error::Incompatible(format!(
            "acoustic model predicts {} features but the vocoder was trained on {}",
            acoustic.layer_tag, vocoder.layer_tag
        )));
    }
    let out_dim = acoustic.model().config().output_dim;
    if out_dim != vocoder.config.generator.input_dim {
        return Err(Error::Incompatible(format!(
            "acoustic output width {out_dim} != vocoder input width {}",
            vocoder.config.generator.input_dim
        )));
    }
    phonemes.validate(acoustic.model().config().vocab_size)?;
    let (rep, _) = acoustic.synthesize(phonemes, durations)?;
    let wav = vocoder.generate(&rep)?;
    if wav.len() != rep.n_frames() * SAMPLES_PER_FRAME {
        return Err(Error::Shape(format!(
            "vocoder produced {} samples for {} frames",
            wav.len(),
            rep.n_frames()
        )));
    }
    Ok(wav)
}
