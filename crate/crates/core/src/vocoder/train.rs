use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{VocoderConfig, SAMPLES_PER_FRAME};
use super::discriminator::Discriminator;
use super::generator::Generator;
use super::loss::{adv_loss_d, GeneratorLosses, LossBreakdown, TensorMel};
use crate::checkpoint::Checkpoint;
use crate::error::{Error, IoContext, Result};
use crate::nn::{scalar, Adam, AdamState, ParamStore};
use crate::representation::RepresentationSequence;
use crate::signal::{Waveform, PIPELINE_RATE};

pub const VOCODER_KIND: &str = "vocoder";

/// A representation sequence paired with the waveform it was extracted from,
/// trimmed or padded to exactly 480 samples per frame.
#[derive(Debug, Clone)]
pub struct VocoderExample {
    pub id: String,
    pub rep: RepresentationSequence,
    pub audio: Waveform,
}

impl VocoderExample {
    pub fn new(id: impl Into<String>, rep: RepresentationSequence, audio: Waveform) -> Result<Self> {
        let id = id.into();
        if audio.sample_rate() != PIPELINE_RATE {
            return Err(Error::RateMismatch {
                expected: PIPELINE_RATE,
                actual: audio.sample_rate(),
            });
        }
        if rep.n_frames() == 0 {
            return Err(Error::Data(format!("{id}: empty representation")));
        }
        let audio = audio.fit_to_len(rep.n_frames() * SAMPLES_PER_FRAME);
        Ok(Self { id, rep, audio })
    }
}

/// Inference-side vocoder: generator weights plus the config they were trained with.
#[derive(Debug)]
pub struct Vocoder {
    pub config: VocoderConfig,
    pub layer_tag: String,
    pub step: u64,
    store: ParamStore,
    generator: Generator,
}

impl Vocoder {
    pub fn new(config: &VocoderConfig, layer_tag: &str) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new(DType::F32);
        let generator = Generator::new(&mut store, &config.generator, &mut rng)?;
        Ok(Self {
            config: config.clone(),
            layer_tag: layer_tag.to_string(),
            step: 0,
            store,
            generator,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load_kind(path, VOCODER_KIND)?;
        let config: VocoderConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| Error::corrupt(path, format!("config echo: {e}")))?;
        let mut v = Self::new(&config, &ckpt.layer_tag)?;
        v.store.import(&ckpt.tensors_with_prefix("g/"))?;
        v.store.check_finite()?;
        v.step = ckpt.step;
        Ok(v)
    }

    pub fn generate(&self, rep: &RepresentationSequence) -> Result<Waveform> {
        self.generator.generate(rep, DType::F32)
    }

    pub fn fingerprint(&self) -> Result<String> {
        self.store.fingerprint()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainerState {
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    opt_g: AdamState,
    opt_d: AdamState,
}

/// Where a training run wrote its artifacts.
#[derive(Debug, Clone)]
pub struct TrainOutputs {
    pub checkpoints: Vec<PathBuf>,
    pub loss_log: PathBuf,
    pub history: Vec<(u64, LossBreakdown)>,
}

/// Alternating discriminator/generator optimization.
pub struct VocoderTrainer {
    config: VocoderConfig,
    layer_tag: String,
    dtype: DType,
    gen_store: ParamStore,
    generator: Generator,
    disc_store: ParamStore,
    discriminator: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    mel: TensorMel,
    step: u64,
    state: TrainerState,
}

impl VocoderTrainer {
    pub fn new(config: &VocoderConfig, layer_tag: &str) -> Result<Self> {
        Self::with_dtype(config, layer_tag, DType::F32)
    }

    pub fn with_dtype(config: &VocoderConfig, layer_tag: &str, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut gen_store = ParamStore::new(dtype);
        let generator = Generator::new(&mut gen_store, &config.generator, &mut rng)?;
        let mut disc_store = ParamStore::new(dtype);
        let discriminator = Discriminator::new(&mut disc_store, &config.discriminator, &mut rng)?;
        let opt_g = Adam::new(&gen_store, config.learning_rate, config.adam_betas, 1e-8)?;
        let opt_d = Adam::new(&disc_store, config.learning_rate, config.adam_betas, 1e-8)?;
        let state = TrainerState {
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
            rng,
            opt_g: opt_g.state(),
            opt_d: opt_d.state(),
        };
        Ok(Self {
            mel: TensorMel::new(&config.mel, dtype)?,
            config: config.clone(),
            layer_tag: layer_tag.to_string(),
            dtype,
            gen_store,
            generator,
            disc_store,
            discriminator,
            opt_g,
            opt_d,
            step: 0,
            state,
        })
    }

    /// Restores a trainer from a checkpoint so that continuing reproduces an
    /// uninterrupted run.
    pub fn resume(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load_kind(path, VOCODER_KIND)?;
        let config: VocoderConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| Error::corrupt(path, format!("config echo: {e}")))?;
        let state: TrainerState = serde_json::from_value(ckpt.state.clone())
            .map_err(|e| Error::corrupt(path, format!("trainer state: {e}")))?;
        let mut t = Self::new(&config, &ckpt.layer_tag)?;
        t.gen_store.import(&ckpt.tensors_with_prefix("g/"))?;
        t.disc_store.import(&ckpt.tensors_with_prefix("d/"))?;
        t.opt_g.import("opt_g", &ckpt.tensors, &state.opt_g)?;
        t.opt_d.import("opt_d", &ckpt.tensors, &state.opt_d)?;
        t.step = ckpt.step;
        t.state = state;
        Ok(t)
    }

    pub fn config(&self) -> &VocoderConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn gen_store(&self) -> &ParamStore {
        &self.gen_store
    }

    pub fn disc_store(&self) -> &ParamStore {
        &self.disc_store
    }

    pub fn tensor_mel(&self) -> &TensorMel {
        &self.mel
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut tensors = Vec::new();
        for t in self.gen_store.export()? {
            tensors.push(crate::nn::HostTensor {
                name: format!("g/{}", t.name),
                ..t
            });
        }
        for t in self.disc_store.export()? {
            tensors.push(crate::nn::HostTensor {
                name: format!("d/{}", t.name),
                ..t
            });
        }
        tensors.extend(self.opt_g.export("opt_g")?);
        tensors.extend(self.opt_d.export("opt_d")?);
        let mut state = self.state.clone();
        state.opt_g = self.opt_g.state();
        state.opt_d = self.opt_d.state();
        Ok(Checkpoint {
            kind: VOCODER_KIND.into(),
            step: self.step,
            layer_tag: self.layer_tag.clone(),
            config: serde_json::to_value(&self.config)?,
            state: serde_json::to_value(&state)?,
            tensors,
        })
    }

    fn next_indices(&mut self, n_data: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.config.batch_size);
        while out.len() < self.config.batch_size {
            if self.state.cursor >= self.state.order.len() {
                if !self.state.order.is_empty() {
                    self.state.epoch += 1;
                    self.opt_g.lr *= self.config.lr_decay;
                    self.opt_d.lr *= self.config.lr_decay;
                }
                self.state.order = (0..n_data).collect();
                self.state.order.shuffle(&mut self.state.rng);
                self.state.cursor = 0;
            }
            out.push(self.state.order[self.state.cursor]);
            self.state.cursor += 1;
        }
        out
    }

    /// Random grid-aligned crops, zero-padded to the segment length.
    /// Returns `(batch, dim, frames)` and `(batch, 1, frames * 480)` tensors.
    pub fn next_batch(&mut self, data: &[VocoderExample]) -> Result<(Tensor, Tensor)> {
        if data.is_empty() {
            return Err(Error::Data("vocoder training set is empty".into()));
        }
        let dim = self.config.generator.input_dim;
        let seg = self.config.segment_frames;
        let idx = self.next_indices(data.len());
        let mut reps = Vec::with_capacity(idx.len() * seg * dim);
        let mut wavs = Vec::with_capacity(idx.len() * seg * SAMPLES_PER_FRAME);
        for i in idx {
            let ex = &data[i];
            if ex.rep.dim() != dim {
                return Err(Error::Shape(format!(
                    "{}: representation dim {} but generator expects {dim}",
                    ex.id,
                    ex.rep.dim()
                )));
            }
            let n = ex.rep.n_frames();
            let start = if n > seg { self.state.rng.random_range(0..=n - seg) } else { 0 };
            let take = seg.min(n);
            let mut block = vec![0f32; seg * dim];
            for (t, row) in ex.rep.frames.rows().into_iter().skip(start).take(take).enumerate() {
                for (j, v) in row.iter().enumerate() {
                    block[j * seg + t] = *v;
                }
            }
            reps.extend(block);
            let s = &ex.audio.samples()[start * SAMPLES_PER_FRAME..(start + take) * SAMPLES_PER_FRAME];
            wavs.extend_from_slice(s);
            wavs.extend(std::iter::repeat_n(0f32, (seg - take) * SAMPLES_PER_FRAME));
        }
        let b = reps.len() / (seg * dim);
        let rep = Tensor::from_vec(reps, (b, dim, seg), &Device::Cpu)?.to_dtype(self.dtype)?;
        let wav = Tensor::from_vec(wavs, (b, 1, seg * SAMPLES_PER_FRAME), &Device::Cpu)?.to_dtype(self.dtype)?;
        Ok((rep, wav))
    }

    /// Generator-side losses for a batch under the current discriminator.
    pub fn generator_losses(&self, rep: &Tensor, wav: &Tensor) -> Result<GeneratorLosses> {
        let fake = self.generator.forward(rep)?;
        let real_out = self.discriminator.forward(wav)?.detach();
        let fake_out = self.discriminator.forward(&fake)?;
        let mel_real = self.mel.forward(wav)?.detach();
        GeneratorLosses::compute(
            &real_out,
            &fake_out,
            &mel_real,
            &fake,
            &self.mel,
            self.config.alpha,
            self.config.beta,
        )
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&mut self, data: &[VocoderExample]) -> Result<LossBreakdown> {
        let (rep, wav) = self.next_batch(data)?;

        let fake = self.generator.forward(&rep)?.detach();
        let real_out = self.discriminator.forward(&wav)?;
        let fake_out = self.discriminator.forward(&fake)?;
        let loss_d = adv_loss_d(&real_out.scores, &fake_out.scores)?;
        let adv_d = scalar(&loss_d)?;
        if !adv_d.is_finite() {
            return Err(Error::NonFinite(format!("adv_d = {adv_d} at step {}", self.step + 1)));
        }
        let grads = loss_d.backward()?;
        self.opt_d.step(&self.disc_store, &grads)?;

        let losses = self.generator_losses(&rep, &wav)?;
        let breakdown = losses
            .breakdown(adv_d, self.config.alpha, self.config.beta)
            .map_err(|e| Error::NonFinite(format!("{e} at step {}", self.step + 1)))?;
        if !breakdown.total_g.is_finite() {
            return Err(Error::NonFinite(format!("total_g at step {}", self.step + 1)));
        }
        let grads = losses.total.backward()?;
        self.opt_g.step(&self.gen_store, &grads)?;
        self.step += 1;
        Ok(breakdown)
    }

    /// Runs until `config.steps`, checkpointing into `out_dir` and appending
    /// one CSV row per step to `out_dir/loss_log.csv`. A non-finite loss
    /// writes `diagnostic.ckpt` and aborts.
    pub fn train(&mut self, data: &[VocoderExample], out_dir: &Path) -> Result<TrainOutputs> {
        std::fs::create_dir_all(out_dir).with_path("create output directory", out_dir)?;
        let loss_log = out_dir.join("loss_log.csv");
        let fresh = self.step == 0 || !loss_log.exists();
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(!fresh)
            .truncate(fresh)
            .open(&loss_log)
            .with_path("open loss log", &loss_log)?;
        let mut log = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            log.write_record(["step", "adv_d", "adv_g", "fm", "mel", "total_g"])?;
            log.flush().with_path("write loss log", &loss_log)?;
        }
        let mut checkpoints = Vec::new();
        if self.step == 0 {
            checkpoints.push(self.save_numbered(out_dir)?);
        }
        let mut history = Vec::new();
        while self.step < self.config.steps {
            let b = match self.train_step(data) {
                Ok(b) => b,
                Err(e @ Error::NonFinite(_)) => {
                    let diag = out_dir.join("diagnostic.ckpt");
                    self.checkpoint()?.save(&diag)?;
                    log::error!("non-finite loss, diagnostic snapshot at {}", diag.display());
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            log.write_record(&[
                self.step.to_string(),
                b.adv_d.to_string(),
                b.adv_g.to_string(),
                b.fm.to_string(),
                b.mel.to_string(),
                b.total_g.to_string(),
            ])?;
            history.push((self.step, b));
            if self.step % 50 == 0 {
                log::info!(
                    "vocoder step {} adv_d {:.4} adv_g {:.4} fm {:.4} mel {:.4}",
                    self.step,
                    b.adv_d,
                    b.adv_g,
                    b.fm,
                    b.mel
                );
            }
            if self.config.checkpoint_every > 0 && self.step % self.config.checkpoint_every == 0 {
                log.flush().with_path("write loss log", &loss_log)?;
                checkpoints.push(self.save_numbered(out_dir)?);
            }
        }
        log.flush().with_path("write loss log", &loss_log)?;
        let last = out_dir.join("vocoder.ckpt");
        self.checkpoint()?.save(&last)?;
        checkpoints.push(last);
        Ok(TrainOutputs {
            checkpoints,
            loss_log,
            history,
        })
    }

    fn save_numbered(&self, out_dir: &Path) -> Result<PathBuf> {
        let p = out_dir.join(format!("vocoder_{:08}.ckpt", self.step));
        self.checkpoint()?.save(&p)?;
        Ok(p)
    }
}

/// Trains a fresh vocoder on `data`.
pub fn train_vocoder(
    data: &[VocoderExample],
    config: &VocoderConfig,
    layer_tag: &str,
    out_dir: &Path,
) -> Result<TrainOutputs> {
    if data.is_empty() {
        return Err(Error::Data("vocoder training set is empty".into()));
    }
    VocoderTrainer::new(config, layer_tag)?.train(data, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocoder::config::{DiscriminatorConfig, GeneratorConfig};
    use ndarray::Array2;

    fn tiny_config() -> VocoderConfig {
        VocoderConfig {
            generator: GeneratorConfig::tiny(8),
            discriminator: DiscriminatorConfig::tiny(),
            segment_frames: 3,
            steps: 4,
            checkpoint_every: 2,
            ..VocoderConfig::toy()
        }
    }

    fn example(frames: usize) -> VocoderExample {
        let rep = Array2::from_shape_fn((frames, 8), |(i, j)| ((i + 2 * j) as f32 * 0.3).cos());
        let rep = RepresentationSequence::new(rep, 20.0, 24_000).unwrap();
        let audio: Vec<f32> = (0..frames * 480).map(|i| (i as f32 * 0.06).sin() * 0.4).collect();
        VocoderExample::new("u", rep, Waveform::new(audio, 24_000).unwrap()).unwrap()
    }

    #[test]
    fn steps_touch_only_their_own_parameters() {
        let mut t = VocoderTrainer::new(&tiny_config(), "layer0").unwrap();
        let data = [example(5)];
        let (rep, wav) = t.next_batch(&data).unwrap();

        let g0 = t.gen_store.fingerprint().unwrap();
        let d0 = t.disc_store.fingerprint().unwrap();
        let fake = t.generator.forward(&rep).unwrap().detach();
        let r = t.discriminator.forward(&wav).unwrap();
        let f = t.discriminator.forward(&fake).unwrap();
        let grads = adv_loss_d(&r.scores, &f.scores).unwrap().backward().unwrap();
        t.opt_d.step(&t.disc_store, &grads).unwrap();
        assert_eq!(t.gen_store.fingerprint().unwrap(), g0);
        let d1 = t.disc_store.fingerprint().unwrap();
        assert_ne!(d1, d0);

        let grads = t.generator_losses(&rep, &wav).unwrap().total.backward().unwrap();
        t.opt_g.step(&t.gen_store, &grads).unwrap();
        assert_eq!(t.disc_store.fingerprint().unwrap(), d1);
        assert_ne!(t.gen_store.fingerprint().unwrap(), g0);
    }

    #[test]
    fn zero_steps_writes_initial_checkpoint_and_empty_log() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = VocoderConfig { steps: 0, ..tiny_config() };
        let out = train_vocoder(&[example(4)], &cfg, "layer0", dir.path()).unwrap();
        assert!(out.history.is_empty());
        assert!(out.checkpoints[0].ends_with("vocoder_00000000.ckpt"));
        let log = std::fs::read_to_string(out.loss_log).unwrap();
        assert_eq!(log.trim(), "step,adv_d,adv_g,fm,mel,total_g");
    }

    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let data = [example(6), example(4)];
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let full = train_vocoder(&data, &tiny_config(), "layer0", a.path()).unwrap();

        let half = VocoderConfig { steps: 2, ..tiny_config() };
        train_vocoder(&data, &half, "layer0", b.path()).unwrap();
        let mut ckpt = Checkpoint::load(&b.path().join("vocoder.ckpt")).unwrap();
        ckpt.config = serde_json::to_value(tiny_config()).unwrap();
        let resumed_path = b.path().join("resume.ckpt");
        ckpt.save(&resumed_path).unwrap();
        let mut t = VocoderTrainer::resume(&resumed_path).unwrap();
        t.train(&data, b.path()).unwrap();

        assert_eq!(
            std::fs::read_to_string(full.loss_log).unwrap(),
            std::fs::read_to_string(b.path().join("loss_log.csv")).unwrap()
        );
        let va = Vocoder::load(&a.path().join("vocoder.ckpt")).unwrap();
        let vb = Vocoder::load(&b.path().join("vocoder.ckpt")).unwrap();
        assert_eq!(va.fingerprint().unwrap(), vb.fingerprint().unwrap());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            train_vocoder(&[], &tiny_config(), "layer0", dir.path()),
            Err(Error::Data(_))
        ));
    }
}
