use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::align::reconcile_durations;
use super::config::AcousticConfig;
use super::loss::{log_duration_target, AcousticLossBreakdown, LossTerms};
use super::model::{AcousticModel, Dropout, Durations, VarianceOutputs};
use super::prosody::{frame_energy, frame_pitch, phoneme_average, VarianceStats};
use super::PhonemeSequence;
use crate::checkpoint::Checkpoint;
use crate::error::{Error, IoContext, Result};
use crate::nn::{Adam, AdamState, ParamStore};
use crate::representation::RepresentationSequence;
use crate::signal::Waveform;

pub const ACOUSTIC_KIND: &str = "acoustic";

/// A phoneme sequence with reconciled durations and variance targets, paired
/// with its target representation.
#[derive(Debug, Clone)]
pub struct AcousticExample {
    pub id: String,
    pub phonemes: PhonemeSequence,
    pub target: RepresentationSequence,
}

impl AcousticExample {
    /// Requires durations, pitch and energy on `phonemes`. Durations within
    /// two frames of the target length are adjusted to match it.
    pub fn new(id: impl Into<String>, mut phonemes: PhonemeSequence, target: RepresentationSequence) -> Result<Self> {
        let id = id.into();
        if phonemes.is_empty() || target.n_frames() == 0 {
            return Err(Error::Data(format!("{id}: empty phonemes or representation")));
        }
        let durations = phonemes
            .durations
            .as_ref()
            .ok_or_else(|| Error::Data(format!("{id}: missing durations")))?;
        phonemes.durations = Some(
            reconcile_durations(durations, target.n_frames()).map_err(|e| Error::Data(format!("{id}: {e}")))?,
        );
        if phonemes.pitch.is_none() || phonemes.energy.is_none() {
            return Err(Error::Data(format!("{id}: missing pitch or energy targets")));
        }
        Ok(Self { id, phonemes, target })
    }

    /// Fills pitch and energy targets from `audio` (phoneme-level averages of
    /// frame values), then reconciles durations as in [`AcousticExample::new`].
    pub fn from_audio(
        id: impl Into<String>,
        mut phonemes: PhonemeSequence,
        target: RepresentationSequence,
        audio: &Waveform,
    ) -> Result<Self> {
        let id = id.into();
        let durations = phonemes
            .durations
            .as_ref()
            .ok_or_else(|| Error::Data(format!("{id}: missing durations")))?;
        let durations =
            reconcile_durations(durations, target.n_frames()).map_err(|e| Error::Data(format!("{id}: {e}")))?;
        let n = target.n_frames();
        phonemes.pitch = Some(phoneme_average(&frame_pitch(audio, n), &durations, true)?);
        phonemes.energy = Some(phoneme_average(&frame_energy(audio, n), &durations, false)?);
        phonemes.durations = Some(durations);
        Self::new(id, phonemes, target)
    }
}

/// Inference-side acoustic model restored from a checkpoint.
#[derive(Debug)]
pub struct Acoustic {
    pub layer_tag: String,
    pub step: u64,
    store: ParamStore,
    model: AcousticModel,
}

impl Acoustic {
    pub fn load(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load_kind(path, ACOUSTIC_KIND)?;
        let config: AcousticConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| Error::corrupt(path, format!("config echo: {e}")))?;
        let state: TrainerState = serde_json::from_value(ckpt.state.clone())
            .map_err(|e| Error::corrupt(path, format!("trainer state: {e}")))?;
        let mut store = ParamStore::new(DType::F32);
        let model = AcousticModel::new(&mut store, &config, state.stats, &mut ChaCha8Rng::seed_from_u64(config.seed))?;
        store.import(&ckpt.tensors_with_prefix("m/"))?;
        store.check_finite()?;
        Ok(Self {
            layer_tag: ckpt.layer_tag,
            step: ckpt.step,
            store,
            model,
        })
    }

    pub fn model(&self) -> &AcousticModel {
        &self.model
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn synthesize(
        &self,
        phonemes: &PhonemeSequence,
        durations: Option<&[u32]>,
    ) -> Result<(RepresentationSequence, VarianceOutputs)> {
        self.model.synthesize(phonemes, durations)
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
    opt: AdamState,
    stats: VarianceStats,
}

#[derive(Debug, Clone)]
pub struct AcousticTrainOutputs {
    pub checkpoints: Vec<PathBuf>,
    pub loss_log: PathBuf,
    pub history: Vec<(u64, AcousticLossBreakdown)>,
}

pub struct AcousticTrainer {
    config: AcousticConfig,
    layer_tag: String,
    dtype: DType,
    store: ParamStore,
    model: AcousticModel,
    opt: Adam,
    step: u64,
    state: TrainerState,
}

impl AcousticTrainer {
    /// Variance statistics are taken from `data`.
    pub fn new(config: &AcousticConfig, layer_tag: &str, data: &[AcousticExample]) -> Result<Self> {
        Self::with_dtype(config, layer_tag, data, DType::F32)
    }

    pub fn with_dtype(config: &AcousticConfig, layer_tag: &str, data: &[AcousticExample], dtype: DType) -> Result<Self> {
        Self::build(
            config,
            layer_tag,
            VarianceStats::from_sequences(data.iter().map(|e| &e.phonemes)),
            dtype,
        )
    }

    fn build(config: &AcousticConfig, layer_tag: &str, stats: VarianceStats, dtype: DType) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new(dtype);
        let model = AcousticModel::new(&mut store, config, stats, &mut rng)?;
        let opt = Adam::new(&store, config.learning_rate(1), config.adam_betas, 1e-9)?;
        let state = TrainerState {
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
            rng,
            opt: opt.state(),
            stats,
        };
        Ok(Self {
            config: config.clone(),
            layer_tag: layer_tag.to_string(),
            dtype,
            store,
            model,
            opt,
            step: 0,
            state,
        })
    }

    pub fn resume(path: &Path) -> Result<Self> {
        let ckpt = Checkpoint::load_kind(path, ACOUSTIC_KIND)?;
        let config: AcousticConfig = serde_json::from_value(ckpt.config.clone())
            .map_err(|e| Error::corrupt(path, format!("config echo: {e}")))?;
        let state: TrainerState = serde_json::from_value(ckpt.state.clone())
            .map_err(|e| Error::corrupt(path, format!("trainer state: {e}")))?;
        let mut t = Self::build(&config, &ckpt.layer_tag, state.stats, DType::F32)?;
        t.store.import(&ckpt.tensors_with_prefix("m/"))?;
        t.opt.import("opt", &ckpt.tensors, &state.opt)?;
        t.step = ckpt.step;
        t.state = state;
        Ok(t)
    }

    pub fn config(&self) -> &AcousticConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn model(&self) -> &AcousticModel {
        &self.model
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let mut tensors: Vec<_> = self
            .store
            .export()?
            .into_iter()
            .map(|t| crate::nn::HostTensor {
                name: format!("m/{}", t.name),
                ..t
            })
            .collect();
        tensors.extend(self.opt.export("opt")?);
        let mut state = self.state.clone();
        state.opt = self.opt.state();
        Ok(Checkpoint {
            kind: ACOUSTIC_KIND.into(),
            step: self.step,
            layer_tag: self.layer_tag.clone(),
            config: serde_json::to_value(&self.config)?,
            state: serde_json::to_value(&state)?,
            tensors,
        })
    }

    fn next_indices(&mut self, n_data: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.config.batch_size);
        while out.len() < self.config.batch_size.min(n_data) {
            if self.state.cursor >= self.state.order.len() {
                if !self.state.order.is_empty() {
                    self.state.epoch += 1;
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

    fn loss_terms(&self, batch: &[&AcousticExample], drop: Option<Dropout<'_>>) -> Result<LossTerms> {
        let seqs: Vec<&PhonemeSequence> = batch.iter().map(|e| &e.phonemes).collect();
        let f = self.model.forward(&seqs, Durations::Teacher, drop)?;
        let (b, t_max, dim) = f.rep.dims3()?;
        let n_max = f.phone_mask.dims()[1];
        let mut rep = vec![0f32; b * t_max * dim];
        for (bi, ex) in batch.iter().enumerate() {
            if ex.target.dim() != dim || ex.target.n_frames() != f.frame_lens[bi] {
                return Err(Error::Shape(format!(
                    "{}: target is {}x{}, model expands to {}x{dim}",
                    ex.id,
                    ex.target.n_frames(),
                    ex.target.dim(),
                    f.frame_lens[bi]
                )));
            }
            let off = bi * t_max * dim;
            for (i, v) in ex.target.frames.iter().enumerate() {
                rep[off + i] = *v;
            }
        }
        let rep = Tensor::from_vec(rep, (b, t_max, dim), &Device::Cpu)?.to_dtype(self.dtype)?;
        let stats = self.model.stats();
        let mut dur = vec![0f64; b * n_max];
        let mut pitch = vec![0f64; b * n_max];
        let mut energy = vec![0f64; b * n_max];
        for (bi, s) in seqs.iter().enumerate() {
            let d = s.durations.as_ref().expect("checked by the forward pass");
            let p = s.pitch.as_ref().expect("checked by the forward pass");
            let e = s.energy.as_ref().expect("checked by the forward pass");
            for i in 0..s.len() {
                dur[bi * n_max + i] = log_duration_target(d[i]);
                pitch[bi * n_max + i] = stats.normalize_pitch(p[i] as f64);
                energy[bi * n_max + i] = stats.normalize_energy(e[i] as f64);
            }
        }
        let row = |v: Vec<f64>| -> Result<Tensor> {
            Ok(Tensor::from_vec(v, (b, n_max), &Device::Cpu)?.to_dtype(self.dtype)?)
        };
        let targets = [row(dur)?, row(pitch)?, row(energy)?];
        LossTerms::compute(
            &f.rep,
            &rep,
            &f.frame_mask,
            [&f.log_duration, &f.pitch, &f.energy],
            [&targets[0], &targets[1], &targets[2]],
            &f.phone_mask,
            &self.config.loss_weights,
        )
    }

    /// Teacher-forced loss without dropout; returns the graph scalar and its breakdown.
    pub fn loss(&self, batch: &[&AcousticExample]) -> Result<(Tensor, AcousticLossBreakdown)> {
        let terms = self.loss_terms(batch, None)?;
        let b = terms.breakdown()?;
        Ok((terms.total, b))
    }

    pub fn train_step(&mut self, data: &[AcousticExample]) -> Result<AcousticLossBreakdown> {
        if data.is_empty() {
            return Err(Error::Data("acoustic training set is empty".into()));
        }
        let idx = self.next_indices(data.len());
        let batch: Vec<&AcousticExample> = idx.iter().map(|&i| &data[i]).collect();
        let mut rng = self.state.rng.clone();
        let drop = (self.config.dropout > 0.0 || self.config.predictor_dropout > 0.0).then_some(Dropout {
            rng: &mut rng,
            p: self.config.dropout,
            predictor_p: self.config.predictor_dropout,
        });
        let terms = self.loss_terms(&batch, drop)?;
        self.state.rng = rng;
        let b = terms
            .breakdown()
            .map_err(|e| Error::NonFinite(format!("{e} at step {}", self.step + 1)))?;
        let grads = terms.total.backward()?;
        self.opt.lr = self.config.learning_rate(self.step + 1);
        self.opt.step(&self.store, &grads)?;
        self.step += 1;
        Ok(b)
    }

    /// Runs until `config.steps`, writing `loss_log.csv`, numbered checkpoints
    /// and `acoustic.ckpt` into `out_dir`.
    pub fn train(&mut self, data: &[AcousticExample], out_dir: &Path) -> Result<AcousticTrainOutputs> {
        if data.is_empty() {
            return Err(Error::Data("acoustic training set is empty".into()));
        }
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
            log.write_record(["step", "rep_l1", "dur_mse", "pitch_mse", "energy_mse", "total"])?;
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
                b.rep_l1.to_string(),
                b.dur_mse.to_string(),
                b.pitch_mse.to_string(),
                b.energy_mse.to_string(),
                b.total.to_string(),
            ])?;
            history.push((self.step, b));
            if self.step % 100 == 0 {
                log::info!("acoustic step {} rep_l1 {:.4} total {:.4}", self.step, b.rep_l1, b.total);
            }
            if self.config.checkpoint_every > 0 && self.step % self.config.checkpoint_every == 0 {
                log.flush().with_path("write loss log", &loss_log)?;
                checkpoints.push(self.save_numbered(out_dir)?);
            }
        }
        log.flush().with_path("write loss log", &loss_log)?;
        let last = out_dir.join("acoustic.ckpt");
        self.checkpoint()?.save(&last)?;
        checkpoints.push(last);
        Ok(AcousticTrainOutputs {
            checkpoints,
            loss_log,
            history,
        })
    }

    fn save_numbered(&self, out_dir: &Path) -> Result<PathBuf> {
        let p = out_dir.join(format!("acoustic_{:08}.ckpt", self.step));
        self.checkpoint()?.save(&p)?;
        Ok(p)
    }
}

/// Trains a fresh acoustic model on `data`.
pub fn train_acoustic(
    data: &[AcousticExample],
    config: &AcousticConfig,
    layer_tag: &str,
    out_dir: &Path,
) -> Result<AcousticTrainOutputs> {
    if data.is_empty() {
        return Err(Error::Data("acoustic training set is empty".into()));
    }
    AcousticTrainer::new(config, layer_tag, data)?.train(data, out_dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn tiny() -> AcousticConfig {
        AcousticConfig {
            dropout: 0.1,
            predictor_dropout: 0.2,
            ..AcousticConfig::tiny()
        }
    }

    fn example(k: usize, n_ph: usize) -> AcousticExample {
        let mut p = PhonemeSequence::new((0..n_ph).map(|i| (3 + (i * 5 + k) % 39) as u32).collect());
        let d: Vec<u32> = (0..n_ph).map(|i| 1 + ((i + k) % 3) as u32).collect();
        let frames: usize = d.iter().map(|&x| x as usize).sum();
        p.durations = Some(d);
        p.pitch = Some((0..n_ph).map(|i| if i % 3 == 0 { 0.0 } else { 100.0 + 10.0 * i as f32 }).collect());
        p.energy = Some((0..n_ph).map(|i| 0.05 + 0.01 * i as f32).collect());
        let rep = Array2::from_shape_fn((frames, 10), |(t, j)| ((t * 3 + j + k) as f32 * 0.2).sin());
        AcousticExample::new(format!("u{k}"), p, RepresentationSequence::new(rep, 20.0, 24_000).unwrap()).unwrap()
    }

    #[test]
    fn examples_reconcile_small_gaps_only() {
        let ex = example(0, 4);
        let frames = ex.target.n_frames();
        let short = RepresentationSequence::new(Array2::zeros((frames + 2, 10)), 20.0, 24_000).unwrap();
        let fixed = AcousticExample::new("a", ex.phonemes.clone(), short).unwrap();
        assert_eq!(fixed.phonemes.total_frames(), Some(frames + 2));
        let far = RepresentationSequence::new(Array2::zeros((frames + 3, 10)), 20.0, 24_000).unwrap();
        assert!(matches!(AcousticExample::new("b", ex.phonemes, far), Err(Error::Data(_))));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let data: Vec<_> = (0..3).map(|k| example(k, 3 + k)).collect();
        let cfg = AcousticConfig {
            steps: 30,
            peak_lr: 1e-2,
            warmup_steps: 5,
            checkpoint_every: 0,
            ..tiny()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ra = train_acoustic(&data, &cfg, "layer0", a.path()).unwrap();
        train_acoustic(&data, &cfg, "layer0", b.path()).unwrap();
        assert_eq!(
            std::fs::read_to_string(&ra.loss_log).unwrap(),
            std::fs::read_to_string(b.path().join("loss_log.csv")).unwrap()
        );
        let first = ra.history[0].1.total;
        let last = ra.history.last().unwrap().1.total;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn resume_reproduces_uninterrupted_run() {
        let data: Vec<_> = (0..3).map(|k| example(k, 4)).collect();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let full = train_acoustic(&data, &tiny(), "layer0", a.path()).unwrap();
        let half = AcousticConfig { steps: 2, ..tiny() };
        train_acoustic(&data, &half, "layer0", b.path()).unwrap();
        let mut ckpt = Checkpoint::load(&b.path().join("acoustic.ckpt")).unwrap();
        ckpt.config = serde_json::to_value(tiny()).unwrap();
        let p = b.path().join("resume.ckpt");
        ckpt.save(&p).unwrap();
        AcousticTrainer::resume(&p).unwrap().train(&data, b.path()).unwrap();
        assert_eq!(
            std::fs::read_to_string(full.loss_log).unwrap(),
            std::fs::read_to_string(b.path().join("loss_log.csv")).unwrap()
        );
        let ma = Acoustic::load(&a.path().join("acoustic.ckpt")).unwrap();
        let mb = Acoustic::load(&b.path().join("acoustic.ckpt")).unwrap();
        assert_eq!(ma.fingerprint().unwrap(), mb.fingerprint().unwrap());
    }

    #[test]
    fn loaded_model_synthesizes_with_duration_override() {
        let data = [example(1, 3)];
        let dir = tempfile::tempdir().unwrap();
        train_acoustic(&data, &AcousticConfig { steps: 1, ..tiny() }, "layer0", dir.path()).unwrap();
        let m = Acoustic::load(&dir.path().join("acoustic.ckpt")).unwrap();
        let (rep, var) = m.synthesize(&PhonemeSequence::new(vec![4, 5, 6]), Some(&[2, 1, 3])).unwrap();
        assert_eq!((rep.n_frames(), rep.dim()), (6, 10));
        assert_eq!(var.expanded_len(), 6);
        assert!(m.synthesize(&PhonemeSequence::new(vec![4, 5, 6]), Some(&[2, 1])).is_err());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(train_acoustic(&[], &tiny(), "l", dir.path()), Err(Error::Data(_))));
    }
}
