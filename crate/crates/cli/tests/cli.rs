use std::path::Path;
use std::process::{Command, Output};

use reptts::acoustic::AcousticConfig;
use reptts::pipeline::{write_toy_corpus, BackendConfig, ToyCorpusSpec};
use reptts::representation::LayerSpec;
use reptts::signal::read_wav;
use reptts::vocoder::{DiscriminatorConfig, GeneratorConfig};

fn reptts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reptts"))
        .args(args)
        .env_remove("REPTTS_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = reptts(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Toy corpus with a config shrunk to run in seconds.
fn tiny_setup(root: &Path) -> String {
    let spec = ToyCorpusSpec {
        vocoder_utterances: 2,
        vocoder_speakers: 2,
        acoustic_utterances: 3,
        test_utterances: 1,
        seed: 9,
    };
    let mut cfg = write_toy_corpus(root, &spec).unwrap();
    cfg.output_dir = "runs".into();
    cfg.data.vocoder_manifest = "vocoder.jsonl".into();
    cfg.data.acoustic_manifest = "acoustic.jsonl".into();
    cfg.data.noise_dir = "noise".into();
    cfg.backend = BackendConfig::Mock {
        seed: 1,
        n_layers: 3,
        dim: 12,
    };
    cfg.layer = LayerSpec::Single(1);
    cfg.vocoder.generator = GeneratorConfig::tiny(12);
    cfg.vocoder.discriminator = DiscriminatorConfig::tiny();
    cfg.vocoder.segment_frames = 4;
    cfg.vocoder.steps = 2;
    cfg.vocoder.checkpoint_every = 0;
    cfg.acoustic = AcousticConfig {
        output_dim: 12,
        steps: 2,
        checkpoint_every: 0,
        ..AcousticConfig::tiny()
    };
    let path = root.join("tiny.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn full_procedure_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let c = cfg.as_str();
    let runs = dir.path().join("runs");

    let out = ok(&["prepare-data", "--config", c]);
    assert!(out.contains("prepared 3 utterances (0 rejected, 0 from cache)"), "{out}");
    let out = ok(&["prepare-data", "--config", c]);
    assert!(out.contains("3 from cache"), "{out}");

    let voc = ok(&["train-vocoder", "--config", c]);
    assert!(voc.trim().ends_with("vocoder.ckpt"));
    let ac = ok(&["train-acoustic", "--config", c]);
    assert!(ac.trim().ends_with("acoustic.ckpt"));

    let wav = dir.path().join("hello.wav");
    ok(&[
        "synthesize",
        "--config",
        c,
        "--phonemes",
        "HH AH L",
        "--durations",
        "2,1,3",
        "--out",
        wav.to_str().unwrap(),
    ]);
    assert_eq!(read_wav(&wav).unwrap().len(), 2880);

    let out = ok(&["sweep-layers", "--config", c, "--layers", "layer:0,average"]);
    assert!(out.starts_with("condition,snr_db,speaker_similarity,mos"), "{out}");
    assert_eq!(out.lines().count(), 3);

    let samples = runs.join("sweep/layer0/samples");
    let reference = dir.path().join("audio");
    let report_dir = dir.path().join("eval");
    let fig = dir.path().join("fig.png");
    ok(&[
        "evaluate",
        "--condition",
        &format!("layer0={}", samples.display()),
        "--condition",
        &format!("avg={}", runs.join("sweep/avg/samples").display()),
        "--reference",
        reference.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
        "--figure",
        fig.to_str().unwrap(),
    ]);
    let long = std::fs::read_to_string(report_dir.join("report_long.csv")).unwrap();
    assert!(long.starts_with("condition,metric,utterance_id,value"));
    assert!(long.contains("layer0,speaker_similarity,ac002,"));
    assert!(std::fs::metadata(&fig).unwrap().len() > 0);
}

#[test]
fn failures_exit_with_their_class() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    let c = cfg.as_str();
    let code = |args: &[&str]| reptts(args).status.code().unwrap();

    assert_eq!(code(&["prepare-data", "--config", "/nonexistent.toml"]), 2);
    assert_eq!(code(&["prepare-data", "--config", c, "--layer", "layer:7"]), 2);
    assert_eq!(code(&["prepare-data", "--config", c, "--set", "data.mix_snr_db=\"loud\""]), 2);
    assert_eq!(code(&["sweep-layers", "--config", c, "--layers", "layer:0"]), 3);
    assert_eq!(code(&["train-acoustic", "--config", c]), 3);

    std::fs::remove_dir_all(dir.path().join("noise")).unwrap();
    assert_eq!(code(&["prepare-data", "--config", c]), 3);
    assert_eq!(code(&["synthesize", "--phonemes", "AH", "--out", "x.wav"]), 2);
    assert_eq!(code(&["no-such-verb"]), 2);
}

#[test]
fn overrides_reach_the_config_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_setup(dir.path());
    ok(&["prepare-data", "--config", &cfg, "--seed", "77", "--set", "data.workers=2"]);
    let echo = std::fs::read_to_string(dir.path().join("runs/prepared/experiment.toml")).unwrap();
    assert!(echo.contains("seed = 77"));
    assert!(echo.contains("workers = 2"));
}

#[test]
fn toy_corpus_verb_writes_a_loadable_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "toy-corpus",
        "--out",
        dir.path().to_str().unwrap(),
        "--vocoder-utterances",
        "1",
        "--acoustic-utterances",
        "2",
        "--test-utterances",
        "1",
    ]);
    assert!(out.trim().ends_with("experiment.toml"));
    reptts::pipeline::ExperimentConfig::load(&dir.path().join("experiment.toml")).unwrap();
}
