use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use reptts::acoustic::{Acoustic, PhonemeSequence};
use reptts::error::{Error, ErrorKind};
use reptts::evaluation::{spectrogram_figure, Metric, QualityAdapter, QualityAdapterConfig};
use reptts::pipeline::{
    acoustic_dir, evaluate_dirs, prepare_data, run_sweep, synthesize, train_acoustic_stage, train_vocoder_stage,
    vocoder_dir, write_toy_corpus, ExperimentConfig, Feature, ToyCorpusSpec,
};
use reptts::representation::{LayerSpec, CACHE_ENV_VAR};
use reptts::signal::{read_wav, write_wav, WavFormat};
use reptts::vocoder::Vocoder;

#[derive(Parser)]
#[command(name = "reptts", version, about = "Noise-robust TTS through self-supervised speech representations")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus and a matching experiment.toml.
    ToyCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        vocoder_utterances: usize,
        #[arg(long, default_value_t = 20)]
        acoustic_utterances: usize,
        #[arg(long, default_value_t = 4)]
        test_utterances: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Mix the acoustic corpus with noise, enhance it and cache representations.
    PrepareData(ConfigArgs),
    /// Train the vocoder on clean speech.
    TrainVocoder {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input feature: layer:N, average or mel. Defaults to the config's layer.
        #[arg(long)]
        feature: Option<Feature>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the acoustic model on enhanced-speech representations.
    TrainAcoustic {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Text (phoneme symbols) to waveform.
    Synthesize {
        #[command(flatten)]
        config: OptionalConfigArgs,
        /// Space-separated phoneme symbols, e.g. "HH AH L OW".
        #[arg(long)]
        phonemes: String,
        /// Comma-separated frames per phoneme, overriding the predicted durations.
        #[arg(long, value_delimiter = ',')]
        durations: Option<Vec<u32>>,
        /// Defaults to the acoustic checkpoint of the config's output directory.
        #[arg(long)]
        acoustic: Option<PathBuf>,
        /// Defaults to the vocoder checkpoint for the config's layer.
        #[arg(long)]
        vocoder: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Write 16-bit PCM instead of 32-bit float.
        #[arg(long)]
        pcm16: bool,
    },
    /// Score directories of WAV files and write report CSVs.
    Evaluate {
        #[command(flatten)]
        config: OptionalConfigArgs,
        /// label=directory; repeat per condition.
        #[arg(long = "condition", required = true, value_parser = parse_condition)]
        conditions: Vec<(String, PathBuf)>,
        /// Reference recordings, matched by file name.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "snr_db,speaker_similarity")]
        metrics: Vec<String>,
        /// Quality meter invoked as `<tool> [args] <ref.wav> <test.wav>`.
        #[arg(long)]
        quality_tool: Option<PathBuf>,
        #[arg(long = "quality-arg", allow_hyphen_values = true)]
        quality_args: Vec<String>,
        /// Defaults to `<output_dir>/eval` with --config, else the current directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "report")]
        stem: String,
        /// Also render the first utterance of every condition as a spectrogram figure.
        #[arg(long)]
        figure: Option<PathBuf>,
    },
    /// Train or load one vocoder per condition and compare them on noisy input.
    SweepLayers {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated layer specs, e.g. layer:0,layer:12,average.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<LayerSpec>,
        /// Add the mel-spectrogram baseline condition.
        #[arg(long)]
        mel_baseline: bool,
        /// Fail instead of training conditions without a checkpoint.
        #[arg(long)]
        no_train: bool,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct OptionalConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct Overrides {
    /// Override any config key, e.g. --set vocoder.steps=100. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    layer: Option<LayerSpec>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, env = CACHE_ENV_VAR)]
    cache_dir: Option<PathBuf>,
}

impl Overrides {
    fn load(&self, path: &Path) -> reptts::error::Result<ExperimentConfig> {
        if !path.is_file() {
            return Err(Error::Config(format!("config file {} not found", path.display())));
        }
        let mut cfg = ExperimentConfig::load_with_overrides(path, &self.set)?;
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.layer {
            cfg.layer = l;
        }
        if let Some(w) = self.workers {
            cfg.data.workers = w;
        }
        if let Some(c) = &self.cache_dir {
            cfg.cache_dir = Some(c.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl ConfigArgs {
    fn load(&self) -> reptts::error::Result<ExperimentConfig> {
        self.overrides.load(&self.config)
    }
}

impl OptionalConfigArgs {
    fn load(&self) -> reptts::error::Result<Option<ExperimentConfig>> {
        self.config.as_deref().map(|p| self.overrides.load(p)).transpose()
    }
}

fn parse_condition(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((label, dir)) if !label.is_empty() && !dir.is_empty() => Ok((label.to_string(), dir.into())),
        _ => Err(format!("expected label=directory, got {s:?}")),
    }
}

fn parse_metric(s: &str) -> anyhow::Result<Metric> {
    Ok(match s.trim() {
        "snr_db" | "snr" => Metric::SnrDb,
        "speaker_similarity" | "similarity" => Metric::SpeakerSimilarity,
        "mos_lqo" | "mos" => Metric::MosLqo,
        other => return Err(Error::Config(format!("unknown metric {other:?}")).into()),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::ToyCorpus {
            out,
            vocoder_utterances,
            acoustic_utterances,
            test_utterances,
            seed,
        } => {
            let spec = ToyCorpusSpec {
                vocoder_utterances,
                acoustic_utterances,
                test_utterances,
                seed,
                ..ToyCorpusSpec::default()
            };
            write_toy_corpus(&out, &spec)?;
            println!("{}", out.join("experiment.toml").display());
        }
        Command::PrepareData(args) => {
            let cfg = args.load()?;
            let report = prepare_data(&cfg)?;
            println!(
                "prepared {} utterances ({} rejected, {} from cache)",
                report.utterances.len(),
                report.rejections.len(),
                report.utterances.iter().filter(|u| u.cache_hit).count()
            );
        }
        Command::TrainVocoder { config, feature, resume } => {
            let cfg = config.load()?;
            let feature = feature.unwrap_or(Feature::Representation(cfg.layer));
            let out = train_vocoder_stage(&cfg, feature, resume.as_deref())?;
            println!("{}", out.checkpoints.last().context("no checkpoint written")?.display());
        }
        Command::TrainAcoustic { config, resume } => {
            let cfg = config.load()?;
            let out = train_acoustic_stage(&cfg, resume.as_deref())?;
            println!("{}", out.checkpoints.last().context("no checkpoint written")?.display());
        }
        Command::Synthesize {
            config,
            phonemes,
            durations,
            acoustic,
            vocoder,
            out,
            pcm16,
        } => {
            let cfg = config.load()?;
            let pick = |given: Option<PathBuf>, default: &dyn Fn(&ExperimentConfig) -> PathBuf, what: &str| {
                given
                    .or_else(|| cfg.as_ref().map(default))
                    .ok_or_else(|| Error::Config(format!("pass --{what} or --config")))
            };
            let acoustic = pick(acoustic, &|c| acoustic_dir(c).join("acoustic.ckpt"), "acoustic")?;
            let vocoder = pick(
                vocoder,
                &|c| vocoder_dir(c, Feature::Representation(c.layer)).join("vocoder.ckpt"),
                "vocoder",
            )?;
            let symbols: Vec<&str> = phonemes.split_whitespace().collect();
            let seq = PhonemeSequence::from_symbols(&symbols)?;
            let wav = synthesize(&seq, &Acoustic::load(&acoustic)?, &Vocoder::load(&vocoder)?, durations.as_deref())?;
            let format = if pcm16 { WavFormat::Pcm16 } else { WavFormat::Float32 };
            write_wav(&out, &wav, format)?;
            println!("{} samples -> {}", wav.len(), out.display());
        }
        Command::Evaluate {
            config,
            conditions,
            reference,
            metrics,
            quality_tool,
            quality_args,
            out,
            stem,
            figure,
        } => {
            let cfg = config.load()?;
            let metrics = metrics.iter().map(|m| parse_metric(m)).collect::<anyhow::Result<Vec<_>>>()?;
            let quality = quality_tool
                .map(|tool| {
                    QualityAdapter::new(&QualityAdapterConfig {
                        tool,
                        args: quality_args,
                    })
                })
                .transpose()?;
            let report = evaluate_dirs(&conditions, reference.as_deref(), &metrics, quality.as_ref())?;
            let out = out
                .or_else(|| cfg.map(|c| c.output_dir.join("eval")))
                .unwrap_or_else(|| PathBuf::from("."));
            let (long, table) = report.write(&out, &stem)?;
            println!("{}\n{}", long.display(), table.display());
            if let Some(fig) = figure {
                let mut clips = Vec::new();
                for (label, dir) in &conditions {
                    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x == "wav"))
                        .collect();
                    files.sort();
                    clips.push((label.clone(), read_wav(&files[0])?));
                }
                spectrogram_figure(&clips, &fig)?;
                println!("{}", fig.display());
            }
        }
        Command::SweepLayers {
            config,
            layers,
            mel_baseline,
            no_train,
        } => {
            let cfg = config.load()?;
            if layers.is_empty() {
                bail!(Error::Config("--layers is empty".into()));
            }
            let mut features: Vec<Feature> = Vec::new();
            if mel_baseline {
                features.push(Feature::Mel);
            }
            features.extend(layers.into_iter().map(Feature::Representation));
            let report = run_sweep(&cfg, &features, !no_train)?;
            print!("{}", report.table_csv()?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Numeric) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
