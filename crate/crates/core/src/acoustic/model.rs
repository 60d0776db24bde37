use candle_core::{DType, Device, Tensor, D};
use ndarray::Array2;
use rand_chacha::ChaCha8Rng;

use super::config::AcousticConfig;
use super::prosody::{bucketize, VarianceStats};
use super::{PhonemeSequence, PAD_ID};
use crate::error::{Error, Result};
use crate::nn::{dropout, Conv1d, ConvSpec, Embedding, Init, LayerNorm, Linear, ParamStore, softmax_last};
use crate::representation::{RepresentationSequence, FRAME_SHIFT_MS};
use crate::signal::PIPELINE_RATE;

/// Repeats row `i` of `hidden` (`n x h`) `durations[i]` times.
pub fn length_regulate(hidden: &Tensor, durations: &[i64]) -> Result<Tensor> {
    let (n, h) = hidden.dims2()?;
    if durations.len() != n {
        return Err(Error::Shape(format!("{} durations for {n} hidden vectors", durations.len())));
    }
    if let Some(d) = durations.iter().find(|&&d| d < 0) {
        return Err(Error::Data(format!("negative duration {d}")));
    }
    let idx: Vec<u32> = durations
        .iter()
        .enumerate()
        .flat_map(|(i, &d)| std::iter::repeat_n(i as u32, d as usize))
        .collect();
    if idx.is_empty() {
        return Ok(Tensor::zeros((0, h), hidden.dtype(), hidden.device())?);
    }
    let len = idx.len();
    Ok(hidden.index_select(&Tensor::from_vec(idx, len, hidden.device())?, 0)?)
}

fn positional_encoding(len: usize, dim: usize, dtype: DType) -> Result<Tensor> {
    let mut pe = vec![0f64; len * dim];
    for pos in 0..len {
        for i in 0..dim / 2 {
            let angle = pos as f64 / 10_000f64.powf(2.0 * i as f64 / dim as f64);
            pe[pos * dim + 2 * i] = angle.sin();
            pe[pos * dim + 2 * i + 1] = angle.cos();
        }
    }
    Ok(Tensor::from_vec(pe, (len, dim), &Device::Cpu)?.to_dtype(dtype)?)
}

/// `(batch, len)` 0/1 mask from lengths.
fn length_mask(lens: &[usize], max_len: usize, dtype: DType) -> Result<Tensor> {
    let v: Vec<f64> = lens
        .iter()
        .flat_map(|&l| (0..max_len).map(move |t| if t < l { 1.0 } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(v, (lens.len(), max_len), &Device::Cpu)?.to_dtype(dtype)?)
}

/// Dropout state threaded through a training forward pass.
pub struct Dropout<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub p: f64,
    pub predictor_p: f64,
}

fn maybe_dropout(x: &Tensor, drop: &mut Option<Dropout<'_>>, predictor: bool) -> Result<Tensor> {
    match drop {
        Some(d) => dropout(x, if predictor { d.predictor_p } else { d.p }, d.rng),
        None => Ok(x.clone()),
    }
}

#[derive(Debug, Clone)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
    heads: usize,
}

impl Attention {
    fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, rng)?,
            k: Linear::new(store, &format!("{name}.k"), dim, dim, rng)?,
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng)?,
            out: Linear::new(store, &format!("{name}.o"), dim, dim, rng)?,
            heads,
        })
    }

    /// `key_bias` is `(batch, 1, 1, len)`: 0 for real keys, large negative for padding.
    fn forward(&self, x: &Tensor, key_bias: &Tensor) -> Result<Tensor> {
        let (b, n, h) = x.dims3()?;
        let d = h / self.heads;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((b, n, self.heads, d))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(x)?)?;
        let k = split(self.k.forward(x)?)?;
        let v = split(self.v.forward(x)?)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? / (d as f64).sqrt())?.broadcast_add(key_bias)?;
        let attn = softmax_last(&scores)?;
        let y = attn.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, n, h))?;
        self.out.forward(&y)
    }
}

/// Post-norm transformer block with a convolutional feed-forward part.
#[derive(Debug, Clone)]
struct FftBlock {
    attn: Attention,
    ln1: LayerNorm,
    conv1: Conv1d,
    conv2: Conv1d,
    ln2: LayerNorm,
}

impl FftBlock {
    fn new(store: &mut ParamStore, name: &str, cfg: &AcousticConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (k1, k2) = cfg.ffn_kernels;
        Ok(Self {
            attn: Attention::new(store, &format!("{name}.attn"), cfg.hidden, cfg.heads, rng)?,
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), cfg.hidden)?,
            conv1: Conv1d::new(
                store,
                &format!("{name}.ff1"),
                ConvSpec::same(cfg.hidden, cfg.ffn_hidden, k1, 1),
                Init::FanIn,
                rng,
            )?,
            conv2: Conv1d::new(
                store,
                &format!("{name}.ff2"),
                ConvSpec::same(cfg.ffn_hidden, cfg.hidden, k2, 1),
                Init::FanIn,
                rng,
            )?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), cfg.hidden)?,
        })
    }

    /// `mask` is `(batch, len, 1)`.
    fn forward(&self, x: &Tensor, mask: &Tensor, key_bias: &Tensor, drop: &mut Option<Dropout<'_>>) -> Result<Tensor> {
        let a = maybe_dropout(&self.attn.forward(x, key_bias)?, drop, false)?;
        let x = self.ln1.forward(&(x + a)?)?.broadcast_mul(mask)?;
        let cmask = mask.transpose(1, 2)?;
        let f = self.conv1.forward(&x.transpose(1, 2)?)?.relu()?.broadcast_mul(&cmask)?;
        let f = self.conv2.forward(&f)?.transpose(1, 2)?;
        let f = maybe_dropout(&f, drop, false)?;
        Ok(self.ln2.forward(&(x + f)?)?.broadcast_mul(mask)?)
    }
}

/// Two conv-relu-norm layers and a scalar projection per position.
#[derive(Debug, Clone)]
struct VariancePredictor {
    conv1: Conv1d,
    ln1: LayerNorm,
    conv2: Conv1d,
    ln2: LayerNorm,
    out: Linear,
}

impl VariancePredictor {
    fn new(store: &mut ParamStore, name: &str, cfg: &AcousticConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let (f, k) = (cfg.predictor_filter, cfg.predictor_kernel);
        Ok(Self {
            conv1: Conv1d::new(store, &format!("{name}.c1"), ConvSpec::same(cfg.hidden, f, k, 1), Init::FanIn, rng)?,
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), f)?,
            conv2: Conv1d::new(store, &format!("{name}.c2"), ConvSpec::same(f, f, k, 1), Init::FanIn, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), f)?,
            out: Linear::new(store, &format!("{name}.out"), f, 1, rng)?,
        })
    }

    /// `(batch, len, hidden)` to `(batch, len)`.
    fn forward(&self, x: &Tensor, mask: &Tensor, drop: &mut Option<Dropout<'_>>) -> Result<Tensor> {
        let y = self.conv1.forward(&x.transpose(1, 2)?)?.relu()?.transpose(1, 2)?;
        let y = maybe_dropout(&self.ln1.forward(&y)?.broadcast_mul(mask)?, drop, true)?;
        let y = self.conv2.forward(&y.transpose(1, 2)?)?.relu()?.transpose(1, 2)?;
        let y = maybe_dropout(&self.ln2.forward(&y)?.broadcast_mul(mask)?, drop, true)?;
        Ok(self.out.forward(&y)?.squeeze(D::Minus1)?.broadcast_mul(&mask.squeeze(D::Minus1)?)?)
    }
}

/// Predicted variances of one utterance and the durations used to expand it.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceOutputs {
    pub log_duration: Vec<f32>,
    /// Normalized pitch.
    pub pitch: Vec<f32>,
    /// Normalized energy.
    pub energy: Vec<f32>,
    pub durations: Vec<u32>,
}

impl VarianceOutputs {
    pub fn expanded_len(&self) -> usize {
        self.durations.iter().map(|&d| d as usize).sum()
    }
}

/// Graph outputs of a batched forward pass. Padded positions are zero.
pub struct Forward {
    /// `(batch, frames, output_dim)`
    pub rep: Tensor,
    pub frame_mask: Tensor,
    pub frame_lens: Vec<usize>,
    /// `(batch, phonemes)`
    pub phone_mask: Tensor,
    pub log_duration: Tensor,
    pub pitch: Tensor,
    pub energy: Tensor,
    pub durations: Vec<Vec<u32>>,
}

/// Where expansion durations come from.
pub enum Durations<'a> {
    /// Ground-truth targets; pitch and energy targets condition the embeddings.
    Teacher,
    /// `max(1, round(exp(predicted log-duration)))`.
    Predicted,
    /// Caller-supplied frame counts with predicted pitch and energy.
    Given(&'a [Vec<u32>]),
}

#[derive(Debug)]
pub struct AcousticModel {
    config: AcousticConfig,
    stats: VarianceStats,
    dtype: DType,
    embed: Embedding,
    encoder: Vec<FftBlock>,
    duration: VariancePredictor,
    pitch: VariancePredictor,
    energy: VariancePredictor,
    pitch_embed: Embedding,
    energy_embed: Embedding,
    decoder: Vec<FftBlock>,
    proj: Linear,
}

impl AcousticModel {
    pub fn new(
        store: &mut ParamStore,
        config: &AcousticConfig,
        stats: VarianceStats,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let embed = Embedding::new(store, "embed", config.vocab_size, config.hidden, rng)?;
        let encoder = (0..config.encoder_layers)
            .map(|i| FftBlock::new(store, &format!("enc{i}"), config, rng))
            .collect::<Result<Vec<_>>>()?;
        let duration = VariancePredictor::new(store, "var.duration", config, rng)?;
        let pitch = VariancePredictor::new(store, "var.pitch", config, rng)?;
        let energy = VariancePredictor::new(store, "var.energy", config, rng)?;
        let pitch_embed = Embedding::new(store, "var.pitch_embed", config.n_bins, config.hidden, rng)?;
        let energy_embed = Embedding::new(store, "var.energy_embed", config.n_bins, config.hidden, rng)?;
        let decoder = (0..config.decoder_layers)
            .map(|i| FftBlock::new(store, &format!("dec{i}"), config, rng))
            .collect::<Result<Vec<_>>>()?;
        let proj = Linear::new(store, "proj", config.hidden, config.output_dim, rng)?;
        Ok(Self {
            config: config.clone(),
            stats,
            dtype: store.dtype(),
            embed,
            encoder,
            duration,
            pitch,
            energy,
            pitch_embed,
            energy_embed,
            decoder,
            proj,
        })
    }

    pub fn config(&self) -> &AcousticConfig {
        &self.config
    }

    pub fn stats(&self) -> &VarianceStats {
        &self.stats
    }

    fn stack(
        &self,
        blocks: &[FftBlock],
        x: Tensor,
        lens: &[usize],
        drop: &mut Option<Dropout<'_>>,
    ) -> Result<Tensor> {
        let (_, n, h) = x.dims3()?;
        let mask = length_mask(lens, n, self.dtype)?;
        let key_bias = ((mask.ones_like()? - &mask)? * -1e9)?.unsqueeze(1)?.unsqueeze(1)?;
        let mask = mask.unsqueeze(2)?;
        let mut x = x
            .broadcast_add(&positional_encoding(n, h, self.dtype)?.unsqueeze(0)?)?
            .broadcast_mul(&mask)?;
        for block in blocks {
            x = block.forward(&x, &mask, &key_bias, drop)?;
        }
        Ok(x)
    }

    /// Encoder states of a padded batch, `(batch, max_len, hidden)`.
    fn encode_batch(&self, seqs: &[&PhonemeSequence], drop: &mut Option<Dropout<'_>>) -> Result<(Tensor, Vec<usize>)> {
        if seqs.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        for s in seqs {
            if s.is_empty() {
                return Err(Error::Data("empty phoneme sequence".into()));
            }
            s.validate(self.config.vocab_size)?;
        }
        let lens: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let n = *lens.iter().max().expect("nonempty");
        let ids: Vec<u32> = seqs
            .iter()
            .flat_map(|s| s.ids.iter().copied().chain(std::iter::repeat_n(PAD_ID, n - s.len())))
            .collect();
        let x = self.embed.forward(&ids)?.reshape((seqs.len(), n, self.config.hidden))?;
        Ok((self.stack(&self.encoder, x, &lens, drop)?, lens))
    }

    /// One hidden vector per phoneme, `(len, hidden)`, in eval mode.
    pub fn encode(&self, phonemes: &PhonemeSequence) -> Result<Tensor> {
        let (h, _) = self.encode_batch(&[phonemes], &mut None)?;
        Ok(h.squeeze(0)?)
    }

    fn bucket_ids(&self, values: &[Vec<f64>], range: (f64, f64)) -> Vec<u32> {
        values
            .iter()
            .flatten()
            .map(|&v| bucketize(v, range, self.config.n_bins))
            .collect()
    }

    fn host_rows(t: &Tensor) -> Result<Vec<Vec<f64>>> {
        Ok(t.to_dtype(DType::F64)?.to_vec2::<f64>()?)
    }

    /// Batched forward pass through encoder, variance adaptor and decoder.
    pub fn forward(
        &self,
        seqs: &[&PhonemeSequence],
        durations: Durations<'_>,
        mut drop: Option<Dropout<'_>>,
    ) -> Result<Forward> {
        let (hidden, lens) = self.encode_batch(seqs, &mut drop)?;
        let (b, n, h) = hidden.dims3()?;
        let phone_mask = length_mask(&lens, n, self.dtype)?;
        let pmask3 = phone_mask.unsqueeze(2)?;

        let padded = |f: &dyn Fn(&PhonemeSequence) -> Option<Vec<f64>>, what: &str| -> Result<Vec<Vec<f64>>> {
            seqs.iter()
                .map(|s| {
                    let mut v = f(s).ok_or_else(|| Error::Data(format!("teacher forcing needs {what} targets")))?;
                    v.resize(n, 0.0);
                    Ok(v)
                })
                .collect()
        };

        let log_duration = self.duration.forward(&hidden, &pmask3, &mut drop)?;
        let pitch = self.pitch.forward(&hidden, &pmask3, &mut drop)?;
        let pitch_values = match durations {
            Durations::Teacher => padded(
                &|s| s.pitch.as_ref().map(|p| p.iter().map(|&v| self.stats.normalize_pitch(v as f64)).collect()),
                "pitch",
            )?,
            _ => Self::host_rows(&pitch)?,
        };
        let ids = self.bucket_ids(&pitch_values, self.stats.pitch_range);
        let pe = self.pitch_embed.forward(&ids)?.reshape((b, n, h))?;
        let hidden = (hidden + pe)?.broadcast_mul(&pmask3)?;

        let energy = self.energy.forward(&hidden, &pmask3, &mut drop)?;
        let energy_values = match durations {
            Durations::Teacher => padded(
                &|s| s.energy.as_ref().map(|e| e.iter().map(|&v| self.stats.normalize_energy(v as f64)).collect()),
                "energy",
            )?,
            _ => Self::host_rows(&energy)?,
        };
        let ids = self.bucket_ids(&energy_values, self.stats.energy_range);
        let ee = self.energy_embed.forward(&ids)?.reshape((b, n, h))?;
        let hidden = (hidden + ee)?.broadcast_mul(&pmask3)?;

        let durs: Vec<Vec<u32>> = match durations {
            Durations::Teacher => seqs
                .iter()
                .map(|s| s.durations.clone().ok_or_else(|| Error::Data("teacher forcing needs durations".into())))
                .collect::<Result<_>>()?,
            Durations::Given(d) => {
                if d.len() != b || d.iter().zip(&lens).any(|(d, &l)| d.len() != l) {
                    return Err(Error::Shape("duration override does not match the phoneme sequences".into()));
                }
                d.to_vec()
            }
            Durations::Predicted => Self::host_rows(&log_duration)?
                .iter()
                .zip(&lens)
                .map(|(row, &l)| row[..l].iter().map(|v| v.exp().round().max(1.0) as u32).collect())
                .collect(),
        };
        let frame_lens: Vec<usize> = durs.iter().map(|d| d.iter().map(|&x| x as usize).sum()).collect();
        let t_max = *frame_lens.iter().max().expect("nonempty");
        if t_max == 0 {
            return Err(Error::Data("all durations are zero".into()));
        }
        let mut idx = Vec::with_capacity(b * t_max);
        for (bi, d) in durs.iter().enumerate() {
            for (i, &k) in d.iter().enumerate() {
                idx.extend(std::iter::repeat_n((bi * n + i) as u32, k as usize));
            }
            idx.extend(std::iter::repeat_n((bi * n) as u32, t_max - frame_lens[bi]));
        }
        let frame_mask = length_mask(&frame_lens, t_max, self.dtype)?;
        let fmask3 = frame_mask.unsqueeze(2)?;
        let idx = Tensor::from_vec(idx, b * t_max, &Device::Cpu)?;
        let expanded = hidden
            .reshape((b * n, h))?
            .index_select(&idx, 0)?
            .reshape((b, t_max, h))?
            .broadcast_mul(&fmask3)?;

        let decoded = if self.decoder.is_empty() {
            expanded
        } else {
            self.stack(&self.decoder, expanded, &frame_lens, &mut drop)?
        };
        let rep = self.proj.forward(&decoded)?.broadcast_mul(&fmask3)?;
        Ok(Forward {
            rep,
            frame_mask,
            frame_lens,
            phone_mask,
            log_duration,
            pitch,
            energy,
            durations: durs,
        })
    }

    /// Maps expanded frame states `(frames, hidden)` to `(frames, output_dim)`.
    pub fn decode(&self, expanded: &Tensor) -> Result<Tensor> {
        let (t, _) = expanded.dims2()?;
        if t == 0 {
            return Err(Error::Data("empty expanded sequence".into()));
        }
        let x = expanded.unsqueeze(0)?;
        let x = if self.decoder.is_empty() { x } else { self.stack(&self.decoder, x, &[t], &mut None)? };
        Ok(self.proj.forward(&x)?.squeeze(0)?)
    }

    /// Predicts a representation sequence; `durations` overrides the
    /// duration predictor.
    pub fn synthesize(
        &self,
        phonemes: &PhonemeSequence,
        durations: Option<&[u32]>,
    ) -> Result<(RepresentationSequence, VarianceOutputs)> {
        let given;
        let mode = match durations {
            Some(d) => {
                given = vec![d.to_vec()];
                Durations::Given(&given)
            }
            None => Durations::Predicted,
        };
        let f = self.forward(&[phonemes], mode, None)?;
        let t = f.frame_lens[0];
        let rep = f.rep.squeeze(0)?.to_dtype(DType::F32)?.to_vec2::<f32>()?;
        let flat: Vec<f32> = rep.into_iter().flatten().collect();
        let frames = Array2::from_shape_vec((t, self.config.output_dim), flat)
            .map_err(|e| Error::Shape(e.to_string()))?;
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("acoustic model produced non-finite output".into()));
        }
        let row = |x: &Tensor| -> Result<Vec<f32>> { Ok(x.squeeze(0)?.to_dtype(DType::F32)?.to_vec1::<f32>()?) };
        let outputs = VarianceOutputs {
            log_duration: row(&f.log_duration)?,
            pitch: row(&f.pitch)?,
            energy: row(&f.energy)?,
            durations: f.durations[0].clone(),
        };
        Ok((
            RepresentationSequence::new(frames, FRAME_SHIFT_MS as f32, PIPELINE_RATE)?,
            outputs,
        ))
    }
}
