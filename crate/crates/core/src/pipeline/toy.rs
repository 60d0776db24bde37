//! Synthetic corpus for desk-scale runs: formant-filtered pulse trains and
//! noise bursts laid out on the 20 ms frame grid, with exact alignments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::acoustic::{symbol_id, PhonemeSequence, INVENTORY};
use crate::error::Result;
use crate::signal::{Waveform, PIPELINE_RATE};
use crate::vocoder::SAMPLES_PER_FRAME;

/// Approximate first three formants (Hz) of each vowel.
const VOWELS: &[(&str, [f64; 3])] = &[
    ("AA", [730.0, 1090.0, 2440.0]),
    ("AE", [660.0, 1720.0, 2410.0]),
    ("AH", [640.0, 1190.0, 2390.0]),
    ("AO", [570.0, 840.0, 2410.0]),
    ("EH", [530.0, 1840.0, 2480.0]),
    ("ER", [490.0, 1350.0, 1690.0]),
    ("IH", [390.0, 1990.0, 2550.0]),
    ("IY", [270.0, 2290.0, 3010.0]),
    ("OW", [450.0, 880.0, 2400.0]),
    ("UH", [440.0, 1020.0, 2240.0]),
    ("UW", [300.0, 870.0, 2240.0]),
];

const FRICATIVES: &[&str] = &["F", "S", "SH", "TH", "HH", "CH", "Z", "ZH", "V", "DH", "JH"];
const STOPS: &[&str] = &["P", "T", "K", "B", "D", "G"];
const VOICED_NOISY: &[&str] = &["Z", "ZH", "V", "DH", "JH", "B", "D", "G"];

#[derive(Debug, Clone, Copy)]
struct PhoneSound {
    formants: [f64; 3],
    bandwidths: [f64; 3],
    voiced: bool,
    noisy: bool,
    gain: f64,
}

fn sound_of(symbol: &str) -> PhoneSound {
    if let Some((_, f)) = VOWELS.iter().find(|(s, _)| *s == symbol) {
        return PhoneSound {
            formants: *f,
            bandwidths: [80.0, 100.0, 140.0],
            voiced: true,
            noisy: false,
            gain: 1.0,
        };
    }
    let id = symbol_id(symbol).unwrap_or(1) as f64;
    let noisy = FRICATIVES.contains(&symbol) || STOPS.contains(&symbol);
    let voiced = !noisy || VOICED_NOISY.contains(&symbol);
    if noisy {
        // fricative-like: high, broad resonances
        PhoneSound {
            formants: [1800.0 + 97.0 * id % 1500.0, 3500.0 + 131.0 * id % 2500.0, 6500.0 + 53.0 * id % 2500.0],
            bandwidths: [400.0, 600.0, 900.0],
            voiced,
            noisy: true,
            gain: 0.5,
        }
    } else {
        // nasals, liquids, glides
        PhoneSound {
            formants: [250.0 + 37.0 * id % 200.0, 1000.0 + 71.0 * id % 900.0, 2300.0 + 43.0 * id % 500.0],
            bandwidths: [60.0, 150.0, 200.0],
            voiced: true,
            noisy: false,
            gain: 0.7,
        }
    }
}

/// Two-pole resonator with unity gain at DC.
#[derive(Debug, Clone, Copy, Default)]
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn tune(&mut self, freq: f64, bw: f64, rate: f64) {
        let t = 1.0 / rate;
        self.c = -(-2.0 * std::f64::consts::PI * bw * t).exp();
        self.b = 2.0 * (-std::f64::consts::PI * bw * t).exp() * (2.0 * std::f64::consts::PI * freq * t).cos();
        self.a = 1.0 - self.b - self.c;
    }

    fn process(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// One synthetic utterance with its exact frame alignment.
#[derive(Debug, Clone)]
pub struct ToyUtterance {
    pub id: String,
    pub speaker: String,
    pub symbols: Vec<String>,
    pub phonemes: PhonemeSequence,
    pub audio: Waveform,
}

#[derive(Debug, Clone, Copy)]
pub struct ToySpeaker {
    pub base_f0: f64,
    /// Multiplies every formant frequency (vocal-tract length).
    pub formant_scale: f64,
}

impl ToySpeaker {
    pub fn numbered(index: usize) -> Self {
        const F0: [f64; 4] = [110.0, 210.0, 140.0, 180.0];
        const SCALE: [f64; 4] = [1.0, 1.15, 0.93, 1.08];
        Self {
            base_f0: F0[index % 4] * (1.0 + 0.05 * (index / 4) as f64),
            formant_scale: SCALE[index % 4],
        }
    }
}

/// Renders a phoneme/duration sequence (durations in 20 ms frames).
pub fn render(symbols: &[String], durations: &[u32], speaker: ToySpeaker, seed: u64) -> Result<Waveform> {
    let rate = PIPELINE_RATE as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = durations.iter().map(|&d| d as usize).sum::<usize>() * SAMPLES_PER_FRAME;
    let mut out = Vec::with_capacity(total);
    let mut res = [Resonator::default(); 3];
    let mut phase = 0.0f64;
    let mut t_global = 0usize;
    for (sym, &dur) in symbols.iter().zip(durations) {
        let n = dur as usize * SAMPLES_PER_FRAME;
        if sym == "sil" || sym == "sp" {
            out.extend(std::iter::repeat_n(0.0f32, n));
            t_global += n;
            continue;
        }
        let s = sound_of(sym);
        for (r, (f, bw)) in res.iter_mut().zip(s.formants.iter().zip(&s.bandwidths)) {
            let f = (f * speaker.formant_scale).min(0.45 * rate);
            r.tune(f, *bw, rate);
        }
        let ramp = (0.01 * rate) as usize;
        for i in 0..n {
            let t = t_global as f64 / rate;
            let f0 = speaker.base_f0 * (1.0 + 0.08 * (2.0 * std::f64::consts::PI * 2.5 * t).sin());
            phase += f0 / rate;
            let mut src = 0.0;
            if s.voiced {
                // band-limited sawtooth
                let harmonics = ((0.45 * rate) / f0).floor().min(40.0) as usize;
                for h in 1..=harmonics {
                    src += (2.0 * std::f64::consts::PI * h as f64 * phase).sin() / h as f64;
                }
                src *= 0.3;
            }
            if s.noisy {
                let z: f64 = StandardNormal.sample(&mut rng);
                src = 0.4 * src + 0.6 * z;
            }
            let y = res.iter_mut().fold(0.0, |acc, r| acc + r.process(src));
            let env = (i.min(n - 1 - i) as f64 / ramp as f64).min(1.0);
            let env = 0.5 - 0.5 * (std::f64::consts::PI * env).cos();
            out.push((s.gain * env * y) as f32);
            t_global += 1;
        }
    }
    let peak = out.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = 0.5 / peak;
        out.iter_mut().for_each(|v| *v *= g);
    }
    Waveform::new(out, PIPELINE_RATE)
}

/// A random utterance: leading and trailing silence around 5 to 9 phonemes,
/// sometimes with a short pause.
pub fn toy_utterance(id: &str, speaker_index: usize, seed: u64) -> Result<ToyUtterance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speakable: Vec<&str> = INVENTORY[3..].to_vec();
    let mut symbols = vec!["sil".to_string()];
    let mut durations = vec![rng.random_range(8..13)];
    let n = rng.random_range(5..10);
    for k in 0..n {
        if k == n / 2 && rng.random_bool(0.5) {
            symbols.push("sp".into());
            durations.push(rng.random_range(3..6));
        }
        let sym = speakable[rng.random_range(0..speakable.len())];
        let is_vowel = VOWELS.iter().any(|(s, _)| *s == sym);
        durations.push(if is_vowel { rng.random_range(6..12) } else { rng.random_range(3..7) });
        symbols.push(sym.to_string());
    }
    symbols.push("sil".into());
    durations.push(rng.random_range(8..13));

    let audio = render(&symbols, &durations, ToySpeaker::numbered(speaker_index), seed ^ 0x5EED)?;
    let mut phonemes = PhonemeSequence::from_symbols(&symbols)?;
    phonemes.durations = Some(durations);
    Ok(ToyUtterance {
        id: id.to_string(),
        speaker: format!("spk{speaker_index}"),
        symbols,
        phonemes,
        audio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    White,
    /// 1/f spectrum.
    Pink,
    /// Low-passed noise with slow amplitude modulation.
    Rumble,
}

/// Stationary synthetic noise at unit-ish RMS scaled to 0.1.
pub fn toy_noise(kind: NoiseKind, len: usize, seed: u64) -> Result<Waveform> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut white = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut v: Vec<f64> = match kind {
        NoiseKind::White => (0..len).map(|_| white()).collect(),
        NoiseKind::Pink => {
            // Paul Kellet's refined pink filter
            let mut b = [0.0f64; 7];
            (0..len)
                .map(|_| {
                    let w = white();
                    b[0] = 0.99886 * b[0] + w * 0.0555179;
                    b[1] = 0.99332 * b[1] + w * 0.0750759;
                    b[2] = 0.96900 * b[2] + w * 0.1538520;
                    b[3] = 0.86650 * b[3] + w * 0.3104856;
                    b[4] = 0.55000 * b[4] + w * 0.5329522;
                    b[5] = -0.7616 * b[5] - w * 0.0168980;
                    let y = b.iter().sum::<f64>() + w * 0.5362;
                    b[6] = w * 0.115926;
                    y
                })
                .collect()
        }
        NoiseKind::Rumble => {
            let mut lp = Resonator::default();
            lp.tune(300.0, 400.0, PIPELINE_RATE as f64);
            (0..len)
                .map(|i| {
                    let m = 1.0 + 0.3 * (2.0 * std::f64::consts::PI * 0.7 * i as f64 / PIPELINE_RATE as f64).sin();
                    m * lp.process(white())
                })
                .collect()
        }
    };
    let rms = (v.iter().map(|x| x * x).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        v.iter_mut().for_each(|x| *x *= 0.1 / rms);
    }
    Waveform::new(v.into_iter().map(|x| x as f32).collect(), PIPELINE_RATE)
}
