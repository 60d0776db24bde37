use std::collections::HashMap;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::features::Feature;
use super::manifest::load_manifest;
use super::prepare::{NoiseCorpus, PreparationReport};
use super::stages::{feature_extractor, train_vocoder_into};
use crate::error::{Error, IoContext, Result};
use crate::evaluation::{evaluate_corpus, spectrogram_figure, Condition, EvalItem, EvalReport, MelSpeakerEmbedder, Metric, QualityAdapter};
use crate::representation::LayerSpec;
use crate::signal::{load_audio, read_wav, write_wav, WavFormat, PIPELINE_RATE};
use crate::vocoder::Vocoder;

pub const SWEEP_DIR: &str = "sweep";

/// Report label of a condition, e.g. `rep_layer12`, `rep_avg`, `mel`.
pub fn condition_label(feature: Feature) -> String {
    match feature {
        Feature::Representation(_) => format!("rep_{}", feature.tag()),
        Feature::Mel => "mel".into(),
    }
}

/// Per-layer vocoder evaluation on noisy input: each condition's vocoder is
/// trained on clean speech, then fed features of the prepared corpus's
/// test-split utterances mixed with noise at the configured SNR. Reports SNR
/// of the output and speaker similarity to the clean recording.
pub fn run_layer_sweep(config: &ExperimentConfig, layers: &[LayerSpec]) -> Result<EvalReport> {
    let features: Vec<Feature> = layers.iter().map(|&l| Feature::Representation(l)).collect();
    run_sweep(config, &features, true)
}

/// As [`run_layer_sweep`] over arbitrary features. With `train_missing`
/// false, a condition without a trained vocoder is an error.
pub fn run_sweep(config: &ExperimentConfig, features: &[Feature], train_missing: bool) -> Result<EvalReport> {
    if features.is_empty() {
        return Err(Error::Config("layer sweep needs at least one condition".into()));
    }
    let backend = config.backend.build()?;
    for f in features {
        if let Feature::Representation(l) = f {
            l.validate(backend.n_layers())?;
        }
    }
    let report = PreparationReport::load(config)?;
    let records: HashMap<_, _> = load_manifest(&config.data.acoustic_manifest)?
        .into_iter()
        .map(|r| (r.id.clone(), r))
        .collect();
    let mut eval_ids: Vec<&str> = report
        .utterances
        .iter()
        .filter(|u| records.get(&u.id).is_some_and(|r| r.split == "test"))
        .map(|u| u.id.as_str())
        .collect();
    if eval_ids.is_empty() {
        eval_ids = report.utterances.iter().map(|u| u.id.as_str()).collect();
    }
    if eval_ids.is_empty() {
        return Err(Error::Data("prepared corpus has no utterances".into()));
    }
    let noise = NoiseCorpus::load(&config.data.noise_dir)?;
    let mut inputs = Vec::new();
    for id in &eval_ids {
        let clean = load_audio(&records[*id].audio, PIPELINE_RATE)?;
        let (_, mix) = noise.mix(id, &clean, config.data.mix_snr_db, config.seed)?;
        inputs.push((id.to_string(), clean, mix.mixed));
    }

    let root = config.output_dir.join(SWEEP_DIR);
    let fx = feature_extractor(config, backend.as_ref());
    let mut conditions = Vec::new();
    for &feature in features {
        let dir = root.join(feature.tag());
        let ckpt = dir.join("vocoder.ckpt");
        if !ckpt.exists() {
            if !train_missing {
                return Err(Error::Data(format!("missing vocoder checkpoint {}", ckpt.display())));
            }
            train_vocoder_into(config, feature, backend.as_ref(), &dir, None)?;
        } else {
            config.echo_into(&dir)?;
        }
        let vocoder = Vocoder::load(&ckpt)?;
        if vocoder.layer_tag != feature.tag() {
            return Err(Error::Incompatible(format!(
                "{} holds a {} vocoder",
                ckpt.display(),
                vocoder.layer_tag
            )));
        }
        let mut items = Vec::new();
        for (id, clean, noisy) in &inputs {
            let (rep, _) = fx.extract(noisy, feature)?;
            let audio = vocoder.generate(&rep)?;
            write_wav(&dir.join("samples").join(format!("{id}.wav")), &audio, WavFormat::Float32)?;
            items.push(EvalItem {
                id: id.clone(),
                audio: Some(audio),
                reference: Some(clean.clone()),
            });
        }
        conditions.push(Condition {
            label: condition_label(feature),
            items,
        });
    }
    let report = evaluate_corpus(
        &conditions,
        &[Metric::SnrDb, Metric::SpeakerSimilarity],
        &MelSpeakerEmbedder::default(),
        None,
    )?;
    report.write(&root, "sweep")?;
    let (first_id, clean, noisy) = &inputs[0];
    let mut clips = vec![("clean".to_string(), clean.clone()), ("noisy".to_string(), noisy.clone())];
    for c in &conditions {
        clips.push((c.label.clone(), c.items[0].audio.clone().expect("generated above")));
    }
    spectrogram_figure(&clips, &root.join(format!("figure_{first_id}.png")))?;
    Ok(report)
}

/// Scores directories of WAV files. Each condition directory is matched to
/// `reference_dir` by file name; files without a reference get none.
pub fn evaluate_dirs(
    conditions: &[(String, PathBuf)],
    reference_dir: Option<&Path>,
    metrics: &[Metric],
    quality: Option<&QualityAdapter>,
) -> Result<EvalReport> {
    let mut out = Vec::new();
    for (label, dir) in conditions {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .with_path("list", dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Data(format!("{} contains no WAV files", dir.display())));
        }
        let mut items = Vec::new();
        for f in files {
            let name = f.file_name().unwrap_or_default();
            let reference = match reference_dir.map(|r| r.join(name)) {
                Some(r) if r.is_file() => Some(read_wav(&r)?),
                _ => None,
            };
            items.push(EvalItem {
                id: f.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                audio: Some(read_wav(&f)?),
                reference,
            });
        }
        out.push(Condition {
            label: label.clone(),
            items,
        });
    }
    evaluate_corpus(&out, metrics, &MelSpeakerEmbedder::default(), quality)
}
