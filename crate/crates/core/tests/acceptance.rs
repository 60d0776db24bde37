//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines always
//! reach the terminal. Optional arguments filter criteria by number or name.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use candle_core::{backprop::GradStore, DType, Device, Tensor, Var};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use reptts::acoustic::{
    acoustic_loss, length_regulate, Acoustic, AcousticConfig, AcousticExample, AcousticTrainer, PhonemeSequence,
    VarianceOutputs,
};
use reptts::enhancement::{spectral_subtraction_enhancer, Audited};
use reptts::evaluation::{
    evaluate_corpus, render_spectrogram_figure, speaker_similarity, spectrogram_figure, Condition, EvalItem,
    MelSpeakerEmbedder, Metric,
};
use reptts::pipeline::{
    prepare_data_with, synthesize, toy_noise, toy_utterance, write_toy_corpus, NoiseCorpus, NoiseKind, ToyCorpusSpec,
};
use reptts::representation::{extract, mock_backend, LayerSpec, RepresentationSequence};
use reptts::signal::{estimate_snr, mix_at_snr, Waveform, PIPELINE_RATE};
use reptts::vocoder::{
    adv_loss_d, adv_loss_g, feature_matching_loss, mel_loss, total_generator_loss, DiscriminatorConfig,
    GeneratorConfig, Vocoder, VocoderConfig, VocoderExample, VocoderTrainer,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn dev() -> Device {
    Device::Cpu
}

fn tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::from_vec(v, shape, &dev()).unwrap()
}

fn flat(t: &Tensor) -> Vec<f64> {
    t.flatten_all().unwrap().to_vec1::<f64>().unwrap()
}

fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// 1 -------------------------------------------------------------------------

fn loss_arithmetic() -> Outcome {
    let ones = Tensor::ones((2, 1, 9), DType::F64, &dev()).unwrap();
    let zeros = Tensor::zeros((2, 1, 9), DType::F64, &dev()).unwrap();
    let perfect = ok(adv_loss_d(&[ones.clone(), ones.clone()], &[zeros.clone(), zeros]))?;
    ensure!(scalar(&perfect) == 0.0, "perfect discriminator gives {}", scalar(&perfect));
    let fooled = ok(adv_loss_g(&[ones.clone(), ones]))?;
    ensure!(scalar(&fooled) == 0.0, "fooled discriminator gives {}", scalar(&fooled));
    let total = ok(total_generator_loss(0.5, 0.1, 0.2, 2.0, 45.0))?.total_g;
    ensure!(total == 9.7, "weighted total is {total}, want 9.7");

    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0f64;
    for _ in 0..100 {
        let n_sub = rng.random_range(1..4);
        let shapes: Vec<Vec<usize>> = (0..n_sub).map(|_| vec![rng.random_range(1..3), 1, rng.random_range(1..12)]).collect();
        let real: Vec<Tensor> = shapes.iter().map(|s| tensor(&mut rng, s)).collect();
        let fake: Vec<Tensor> = shapes.iter().map(|s| tensor(&mut rng, s)).collect();
        let want_d: f64 = real
            .iter()
            .zip(&fake)
            .map(|(r, f)| mean(&flat(r).iter().map(|x| (x - 1.0).powi(2)).collect::<Vec<_>>()) + mean(&flat(f).iter().map(|x| x * x).collect::<Vec<_>>()))
            .sum();
        let want_g: f64 = fake.iter().map(|f| mean(&flat(f).iter().map(|x| (x - 1.0).powi(2)).collect::<Vec<_>>())).sum();
        let feats_r: Vec<Vec<Tensor>> = shapes.iter().map(|s| vec![tensor(&mut rng, s), tensor(&mut rng, &[1, 3, 4])]).collect();
        let feats_f: Vec<Vec<Tensor>> = feats_r
            .iter()
            .map(|layers| layers.iter().map(|t| tensor(&mut rng, t.dims())).collect())
            .collect();
        let want_fm: f64 = feats_r
            .iter()
            .zip(&feats_f)
            .flat_map(|(a, b)| a.iter().zip(b))
            .map(|(a, b)| mean(&flat(a).iter().zip(flat(b)).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>()))
            .sum();
        let got_d = scalar(&ok(adv_loss_d(&real, &fake))?);
        let got_g = scalar(&ok(adv_loss_g(&fake))?);
        let got_fm = scalar(&ok(feature_matching_loss(&feats_r, &feats_f))?);
        let (alpha, beta) = (rng.random_range(0.0..5.0), rng.random_range(0.0..60.0));
        let mel = rng.random_range(0.0..3.0);
        let got_total = ok(total_generator_loss(got_g, got_fm, mel, alpha, beta))?.total_g;
        let want_total = want_g + alpha * want_fm + beta * mel;

        let frames = rng.random_range(1..8);
        let dim = rng.random_range(1..6);
        let phones = rng.random_range(1..5);
        let mut cell = || rng.random_range(-3.0f32..3.0);
        let a = RepresentationSequence::new(Array2::from_shape_fn((frames, dim), |_| cell()), 20.0, 24_000).unwrap();
        let b = RepresentationSequence::new(Array2::from_shape_fn((frames, dim), |_| cell()), 20.0, 24_000).unwrap();
        let var = |rng: &mut ChaCha8Rng| {
            let mut v = || (0..phones).map(|_| rng.random_range(-2.0f32..2.0)).collect::<Vec<_>>();
            VarianceOutputs {
                log_duration: v(),
                pitch: v(),
                energy: v(),
                durations: vec![1; phones],
            }
        };
        let (va, vb) = (var(&mut rng), var(&mut rng));
        let got_ac = ok(acoustic_loss(&a, &b, &va, &vb))?.total;
        let l1 = a.frames.iter().zip(b.frames.iter()).map(|(x, y)| (x - y).abs() as f64).sum::<f64>() / (frames * dim) as f64;
        let mse = |x: &[f32], y: &[f32]| x.iter().zip(y).map(|(p, q)| ((p - q) as f64).powi(2)).sum::<f64>() / phones as f64;
        let want_ac = l1 + mse(&va.log_duration, &vb.log_duration) + mse(&va.pitch, &vb.pitch) + mse(&va.energy, &vb.energy);

        for (got, want) in [(got_d, want_d), (got_g, want_g), (got_fm, want_fm), (got_total, want_total), (got_ac, want_ac)] {
            worst = worst.max((got - want).abs());
        }
    }
    ensure!(worst < 1e-6, "worst deviation from oracles {worst:e}");
    Ok(format!("edge cases exact, 100 random cases max |err| {worst:.1e}"))
}

// 2 -------------------------------------------------------------------------

fn snr_mixer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0f64;
    for i in 0..1000 {
        let n = rng.random_range(200..4000);
        let m = rng.random_range(50..6000);
        let gain_c = rng.random_range(0.01..1.0);
        let gain_n = rng.random_range(0.001..2.0);
        let clean: Vec<f32> = (0..n).map(|_| (gain_c * Distribution::<f64>::sample(&StandardNormal, &mut rng)) as f32).collect();
        let noise: Vec<f32> = (0..m).map(|_| (gain_n * Distribution::<f64>::sample(&StandardNormal, &mut rng)) as f32).collect();
        let target = rng.random_range(-10.0..=20.0);
        let clean = Waveform::new(clean, PIPELINE_RATE).unwrap();
        let noise = Waveform::new(noise, PIPELINE_RATE).unwrap();
        let mix = ok(mix_at_snr(&clean, &noise, target, i))?;
        let p = |w: &Waveform| w.samples().iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / n as f64;
        ensure!(mix.mixed.len() == n && mix.scaled_noise.len() == n, "length changed");
        let measured = 10.0 * (p(&clean) / p(&mix.scaled_noise)).log10();
        worst = worst.max((measured - target).abs());
    }
    ensure!(worst < 1e-6, "worst SNR deviation {worst:e} dB");
    Ok(format!("1000 triples, max deviation {worst:.1e} dB"))
}

// 3 -------------------------------------------------------------------------

fn tiny_acoustic_config(output_dim: usize) -> AcousticConfig {
    AcousticConfig {
        output_dim,
        ..AcousticConfig::tiny()
    }
}

fn random_example(id: &str, rng: &mut ChaCha8Rng, dim: usize) -> AcousticExample {
    let n = rng.random_range(3..7);
    let ids = (0..n).map(|_| rng.random_range(1..40)).collect();
    let durations: Vec<u32> = (0..n).map(|_| rng.random_range(1..4)).collect();
    let frames: usize = durations.iter().map(|&d| d as usize).sum();
    let mut seq = PhonemeSequence::new(ids);
    seq.pitch = Some((0..n).map(|_| if rng.random_bool(0.7) { rng.random_range(90.0..250.0) } else { 0.0 }).collect());
    seq.energy = Some((0..n).map(|_| rng.random_range(0.01..0.3)).collect());
    seq.durations = Some(durations);
    let target = Array2::from_shape_fn((frames, dim), |_| rng.random_range(-1.0f32..1.0));
    AcousticExample::new(id, seq, RepresentationSequence::new(target, 20.0, 24_000).unwrap()).unwrap()
}

fn shape_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let vocoder = ok(Vocoder::new(&VocoderConfig::toy(), "layer0"))?;
    for n in [1usize, 7, 50] {
        let rep = RepresentationSequence::new(Array2::from_shape_fn((n, 768), |(i, j)| ((i * 3 + j) as f32 * 0.01).sin()), 20.0, 24_000).unwrap();
        let wav = ok(vocoder.generate(&rep))?;
        ensure!(wav.len() == n * 480, "generator: {n} frames -> {} samples", wav.len());
    }

    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        let h = rng.random_range(1..5);
        let durations: Vec<i64> = (0..n).map(|_| rng.random_range(0..8)).collect();
        let hidden = Tensor::zeros((n, h), DType::F32, &dev()).unwrap();
        let out = ok(length_regulate(&hidden, &durations))?;
        ensure!(out.dims() == [durations.iter().sum::<i64>() as usize, h], "regulator shape {:?}", out.dims());
    }

    let dir = tempfile::tempdir().unwrap();
    let data = vec![random_example("a", &mut rng, 12), random_example("b", &mut rng, 12)];
    let trainer = ok(AcousticTrainer::new(&tiny_acoustic_config(12), "layer0", &data))?;
    let path = dir.path().join("a.ckpt");
    ok(ok(trainer.checkpoint())?.save(&path))?;
    let acoustic = ok(Acoustic::load(&path))?;
    let mut voc_cfg = VocoderConfig::toy();
    voc_cfg.generator = GeneratorConfig::tiny(12);
    let vocoder = ok(Vocoder::new(&voc_cfg, "layer0"))?;
    for _ in 0..20 {
        let n = rng.random_range(1..8);
        let seq = PhonemeSequence::new((0..n).map(|_| rng.random_range(1..40)).collect());
        let durations: Vec<u32> = (0..n).map(|_| rng.random_range(1..5)).collect();
        let wav = ok(synthesize(&seq, &acoustic, &vocoder, Some(&durations)))?;
        let frames: u32 = durations.iter().sum();
        ensure!(wav.len() == frames as usize * 480, "synthesis: {frames} frames -> {} samples", wav.len());
        let free = ok(synthesize(&seq, &acoustic, &vocoder, None))?;
        ensure!(free.len() % 480 == 0 && !free.is_empty(), "free-running synthesis length {}", free.len());
    }
    Ok("generator n in {1,7,50}, 1000 regulator vectors, 40 end-to-end syntheses".into())
}

// 4 -------------------------------------------------------------------------

/// Central differences for every scalar parameter. Returns (checked, passed, skipped).
fn finite_difference(params: &[(String, Var)], grads: &GradStore, loss: &dyn Fn() -> f64) -> (usize, usize, usize) {
    let (mut checked, mut passed, mut skipped) = (0, 0, 0);
    for (_, var) in params {
        let g = grads.get(var).map(flat).unwrap_or_else(|| vec![0.0; var.elem_count()]);
        let base = flat(var.as_tensor());
        let dims = var.dims().to_vec();
        let set = |v: &[f64]| var.set(&Tensor::from_slice(v, dims.as_slice(), &dev()).unwrap()).unwrap();
        let mut work = base.clone();
        for i in 0..base.len() {
            if g[i].abs() < 1e-8 {
                skipped += 1;
                continue;
            }
            let h = 1e-5 * base[i].abs().max(1.0);
            work[i] = base[i] + h;
            set(&work);
            let up = loss();
            work[i] = base[i] - h;
            set(&work);
            let down = loss();
            work[i] = base[i];
            let fd = (up - down) / (2.0 * h);
            checked += 1;
            if (fd - g[i]).abs() <= 1e-3 * fd.abs().max(g[i].abs()) {
                passed += 1;
            }
        }
        set(&base);
    }
    (checked, passed, skipped)
}

fn gradient_checks() -> Outcome {
    let mut report = Vec::new();

    let mut cfg = VocoderConfig::toy();
    cfg.generator = GeneratorConfig::tiny(6);
    cfg.discriminator = DiscriminatorConfig::tiny();
    cfg.segment_frames = 2;
    let mut trainer = ok(VocoderTrainer::with_dtype(&cfg, "t", DType::F64))?;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let rep = RepresentationSequence::new(Array2::from_shape_fn((2, 6), |_| rng.random_range(-1.0f32..1.0)), 20.0, 24_000).unwrap();
    let audio = Waveform::new((0..960).map(|i| ((i as f32) * 0.043).sin() * 0.3 + rng.random_range(-0.05f32..0.05)).collect(), PIPELINE_RATE).unwrap();
    // The 0.01-std init leaves the output under the log-mel floor, so probe a
    // fan-in scaled random point where every path carries gradient.
    for (_, var) in trainer.gen_store().named() {
        let d = var.dims().to_vec();
        let scale = if d.len() > 1 { 3.0 / d[1..].iter().product::<usize>() as f64 } else { 0.03 };
        let v: Vec<f64> = (0..var.elem_count()).map(|_| rng.random_range(-1.0..1.0) * scale.sqrt()).collect();
        ok(var.set(&Tensor::from_vec(v, d.as_slice(), &dev()).unwrap()))?;
    }
    let (rep_t, wav_t) = ok(trainer.next_batch(&[ok(VocoderExample::new("g", rep, audio))?]))?;
    let objective = || scalar(&trainer.generator_losses(&rep_t, &wav_t).unwrap().total);
    let grads = ok(ok(trainer.generator_losses(&rep_t, &wav_t))?.total.backward())?;
    let (c, p, s) = finite_difference(trainer.gen_store().named(), &grads, &objective);
    let voc_rate = p as f64 / c as f64;
    report.push(format!("generator {p}/{c} ({s} tiny grads skipped)"));

    let data = vec![random_example("a", &mut rng, 10), random_example("b", &mut rng, 10)];
    let acoustic = ok(AcousticTrainer::with_dtype(&tiny_acoustic_config(10), "t", &data, DType::F64))?;
    let batch: Vec<&AcousticExample> = data.iter().collect();
    let objective = || scalar(&acoustic.loss(&batch).unwrap().0);
    let grads = ok(ok(acoustic.loss(&batch))?.0.backward())?;
    let (c2, p2, s2) = finite_difference(acoustic.store().named(), &grads, &objective);
    let ac_rate = p2 as f64 / c2 as f64;
    report.push(format!("acoustic {p2}/{c2} ({s2} tiny grads skipped)"));

    ensure!(voc_rate >= 0.99 && ac_rate >= 0.99, "{}", report.join(", "));
    Ok(report.join(", "))
}

// 5 -------------------------------------------------------------------------

fn overfit() -> Outcome {
    let backend = mock_backend(7, 13);
    let u = ok(toy_utterance("u0", 0, 11))?;
    let rep = ok(extract(&u.audio, LayerSpec::Single(5), &backend))?;
    let cfg = VocoderConfig::toy();
    let mut trainer = ok(VocoderTrainer::new(&cfg, "layer5"))?;
    let full_mel = |t: &VocoderTrainer| -> Result<f64, String> {
        let w = ok(t.generator().generate(&rep, DType::F32))?;
        ok(mel_loss(&u.audio, &w, &cfg.mel))
    };
    let m0 = full_mel(&trainer)?;
    let data = [ok(VocoderExample::new("u0", rep.clone(), u.audio.clone()))?];
    for _ in 0..cfg.steps {
        ok(trainer.train_step(&data))?;
    }
    let m1 = full_mel(&trainer)?;
    let voc_ratio = m1 / m0;

    let data: Vec<AcousticExample> = (0..5)
        .map(|i| {
            let u = toy_utterance(&format!("u{i}"), i % 2, 100 + i as u64).unwrap();
            let rep = extract(&u.audio, LayerSpec::Single(5), &backend).unwrap();
            AcousticExample::from_audio(&u.id, u.phonemes.clone(), rep, &u.audio).unwrap()
        })
        .collect();
    let acfg = AcousticConfig::toy();
    let mut trainer = ok(AcousticTrainer::new(&acfg, "layer5", &data))?;
    let batch: Vec<&AcousticExample> = data.iter().collect();
    let r0 = ok(trainer.loss(&batch))?.1.rep_l1;
    for _ in 0..acfg.steps {
        ok(trainer.train_step(&data))?;
    }
    let r1 = ok(trainer.loss(&batch))?.1.rep_l1;
    let ac_ratio = r1 / r0;
    let detail = format!(
        "vocoder mel {m0:.3} -> {m1:.3} ({:.1}%) after {} steps, acoustic rep L1 {r0:.3} -> {r1:.3} ({:.1}%) after {} steps",
        voc_ratio * 100.0,
        cfg.steps,
        ac_ratio * 100.0,
        acfg.steps
    );
    ensure!(voc_ratio < 0.20 && ac_ratio < 0.25, "{detail}");
    Ok(detail)
}

// 6 -------------------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut vcfg = VocoderConfig::toy();
    vcfg.generator = GeneratorConfig::tiny(8);
    vcfg.discriminator = DiscriminatorConfig::tiny();
    vcfg.segment_frames = 3;
    vcfg.steps = 200;
    vcfg.checkpoint_every = 100;
    let rep = RepresentationSequence::new(Array2::from_shape_fn((9, 8), |_| rng.random_range(-1.0f32..1.0)), 20.0, 24_000).unwrap();
    let audio = Waveform::new((0..9 * 480).map(|i| ((i as f32) * 0.05).sin() * 0.4).collect(), PIPELINE_RATE).unwrap();
    let vdata = [ok(VocoderExample::new("v", rep, audio))?];
    let read = |p: &Path| std::fs::read(p).unwrap();

    let a = ok(ok(VocoderTrainer::new(&vcfg, "t"))?.train(&vdata, &dir.path().join("va")))?;
    let b = ok(ok(VocoderTrainer::new(&vcfg, "t"))?.train(&vdata, &dir.path().join("vb")))?;
    ensure!(read(&a.loss_log) == read(&b.loss_log), "vocoder loss logs differ between identical runs");
    let mid = dir.path().join("va/vocoder_00000100.ckpt");
    let resumed_dir = dir.path().join("vr");
    std::fs::create_dir_all(&resumed_dir).unwrap();
    let head: String = String::from_utf8(read(&a.loss_log)).unwrap().lines().take(101).map(|l| format!("{l}\n")).collect();
    std::fs::write(resumed_dir.join("loss_log.csv"), head).unwrap();
    let r = ok(ok(VocoderTrainer::resume(&mid))?.train(&vdata, &resumed_dir))?;
    ensure!(read(&r.loss_log) == read(&a.loss_log), "vocoder resume diverges from the uninterrupted run");

    let acfg = AcousticConfig {
        steps: 200,
        checkpoint_every: 100,
        ..tiny_acoustic_config(8)
    };
    let adata: Vec<AcousticExample> = (0..3).map(|i| random_example(&format!("x{i}"), &mut rng, 8)).collect();
    let a = ok(ok(AcousticTrainer::new(&acfg, "t", &adata))?.train(&adata, &dir.path().join("aa")))?;
    let b = ok(ok(AcousticTrainer::new(&acfg, "t", &adata))?.train(&adata, &dir.path().join("ab")))?;
    ensure!(read(&a.loss_log) == read(&b.loss_log), "acoustic loss logs differ between identical runs");
    let mid = dir.path().join("aa/acoustic_00000100.ckpt");
    let resumed_dir = dir.path().join("ar");
    std::fs::create_dir_all(&resumed_dir).unwrap();
    let head: String = String::from_utf8(read(&a.loss_log)).unwrap().lines().take(101).map(|l| format!("{l}\n")).collect();
    std::fs::write(resumed_dir.join("loss_log.csv"), head).unwrap();
    let r = ok(ok(AcousticTrainer::resume(&mid))?.train(&adata, &resumed_dir))?;
    ensure!(read(&r.loss_log) == read(&a.loss_log), "acoustic resume diverges from the uninterrupted run");

    let acoustic = ok(Acoustic::load(a.checkpoints.last().unwrap()))?;
    let again = ok(Acoustic::load(a.checkpoints.last().unwrap()))?;
    let vpath = dir.path().join("va/vocoder.ckpt");
    let (v1, v2) = (ok(Vocoder::load(&vpath))?, ok(Vocoder::load(&vpath))?);
    let seq = PhonemeSequence::from_symbols(&["HH", "AH", "L", "OW"]).unwrap();
    let w1 = ok(synthesize(&seq, &acoustic, &v1, None))?;
    let w2 = ok(synthesize(&seq, &again, &v2, None))?;
    let w3 = ok(synthesize(&seq, &acoustic, &v1, None))?;
    let bits = |w: &Waveform| w.samples().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure!(bits(&w1) == bits(&w2) && bits(&w1) == bits(&w3), "synthesis is not bit-identical");
    Ok(format!("200-step runs and resumes at step 100 match bit-for-bit, synthesis of {} samples repeatable", w1.len()))
}

// 7 -------------------------------------------------------------------------

fn noise_robustness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec = ToyCorpusSpec {
        vocoder_utterances: 1,
        acoustic_utterances: 20,
        test_utterances: 0,
        ..ToyCorpusSpec::default()
    };
    let cfg = ok(write_toy_corpus(dir.path(), &spec))?;
    let enhancer = Audited::new(ok(spectral_subtraction_enhancer(20.0, 1.5))?);
    let backend = mock_backend(7, 13);
    let report = ok(prepare_data_with(&cfg, &enhancer, &backend))?;
    ensure!(enhancer.calls() == 20 && report.utterances.len() == 20, "expected 20 single enhancements");
    let noise = ok(NoiseCorpus::load(&cfg.data.noise_dir))?;
    let records = ok(reptts::pipeline::load_manifest(&cfg.data.acoustic_manifest))?;
    let mut improved = 0;
    let mut gains = Vec::new();
    for (rec, u) in records.iter().zip(&report.utterances) {
        let clean = ok(reptts::signal::load_audio(&rec.audio, PIPELINE_RATE))?;
        let (_, mix) = ok(noise.mix(&rec.id, &clean, cfg.data.mix_snr_db, cfg.seed))?;
        let enhanced = ok(reptts::signal::read_wav(&u.enhanced))?;
        let before = ok(estimate_snr(&mix.mixed))?.db();
        let after = ok(estimate_snr(&enhanced))?.db();
        if let (Some(b), Some(a)) = (before, after) {
            gains.push(a - b);
            if a > b {
                improved += 1;
            }
        }
    }
    let detail = format!(
        "estimated SNR improved on {improved}/20 utterances (mean gain {:.2} dB)",
        mean(&gains)
    );
    ensure!(improved >= 16, "{detail}");
    Ok(detail)
}

// 8 -------------------------------------------------------------------------

fn evaluation_harness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let embedder = MelSpeakerEmbedder::default();
    let utts: Vec<_> = (0..3).map(|i| toy_utterance(&format!("e{i}"), i, 800 + i as u64).unwrap()).collect();
    let self_sim = ok(speaker_similarity(&utts[0].audio, &utts[0].audio, &embedder))?;
    ensure!((self_sim - 1.0).abs() <= 1e-6, "self similarity {self_sim}");

    let conditions: Vec<Condition> = [("clean", None), ("noisy_white", Some(NoiseKind::White)), ("noisy_pink", Some(NoiseKind::Pink))]
        .iter()
        .map(|(label, kind)| Condition {
            label: label.to_string(),
            items: utts
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let audio = match kind {
                        None => u.audio.clone(),
                        Some(k) => {
                            let n = toy_noise(*k, u.audio.len(), 900 + i as u64).unwrap();
                            mix_at_snr(&u.audio, &n, 5.0, i as u64).unwrap().mixed
                        }
                    };
                    EvalItem {
                        id: u.id.clone(),
                        audio: Some(audio),
                        reference: Some(u.audio.clone()),
                    }
                })
                .collect(),
        })
        .collect();
    let metrics = [Metric::SnrDb, Metric::SpeakerSimilarity];
    let first = ok(evaluate_corpus(&conditions, &metrics, &embedder, None))?;
    let second = ok(evaluate_corpus(&conditions, &metrics, &embedder, None))?;
    ok(first.write(&dir.path().join("a"), "table"))?;
    ok(second.write(&dir.path().join("b"), "table"))?;
    for f in ["table_long.csv", "table_table.csv"] {
        let (x, y) = (std::fs::read(dir.path().join("a").join(f)).unwrap(), std::fs::read(dir.path().join("b").join(f)).unwrap());
        ensure!(x == y && !x.is_empty(), "{f} differs between regenerations");
    }
    let table = std::fs::read_to_string(dir.path().join("a/table_table.csv")).unwrap();
    ensure!(table.lines().count() == 4, "table has {} lines", table.lines().count());
    let clean_sim = first.row("clean", Metric::SpeakerSimilarity).unwrap().mean;
    ensure!((clean_sim - 1.0).abs() <= 1e-6, "clean-vs-clean similarity {clean_sim}");

    let clips: Vec<(String, Waveform)> = conditions.iter().map(|c| (c.label.clone(), c.items[0].audio.clone().unwrap())).collect();
    let fig = dir.path().join("fig.png");
    ok(spectrogram_figure(&clips, &fig))?;
    let size = std::fs::metadata(&fig).map(|m| m.len()).unwrap_or(0);
    ensure!(size > 0, "figure not written");
    let img = render_spectrogram_figure(&clips).map_err(|e| e.to_string())?;
    ensure!(img == render_spectrogram_figure(&clips).unwrap(), "figure rendering is not deterministic");
    Ok(format!("CSVs byte-identical, self similarity {self_sim:.9}, 3-panel figure {}x{} ({size} bytes)", img.width(), img.height()))
}

// ---------------------------------------------------------------------------

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria = [
        Criterion { id: 1, name: "loss arithmetic", budget: Duration::from_secs(10), run: loss_arithmetic },
        Criterion { id: 2, name: "snr mixer", budget: Duration::from_secs(30), run: snr_mixer },
        Criterion { id: 3, name: "shape laws", budget: Duration::from_secs(60), run: shape_laws },
        Criterion { id: 4, name: "gradient checks", budget: Duration::from_secs(300), run: gradient_checks },
        Criterion { id: 5, name: "overfit smoke", budget: Duration::from_secs(1200), run: overfit },
        Criterion { id: 6, name: "determinism", budget: Duration::MAX, run: determinism },
        Criterion { id: 7, name: "noise-robustness trend", budget: Duration::MAX, run: noise_robustness },
        Criterion { id: 8, name: "evaluation harness", budget: Duration::MAX, run: evaluation_harness },
    ];
    let selected = |c: &Criterion| filters.is_empty() || filters.iter().any(|f| *f == c.id.to_string() || c.name.contains(f.as_str()));
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in criteria.iter().filter(|c| selected(c)) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let timing = if c.budget == Duration::MAX {
            format!("{:.1}s", elapsed.as_secs_f64())
        } else {
            format!("{:.1}s of {}s budget", elapsed.as_secs_f64(), c.budget.as_secs())
        };
        let outcome = match outcome {
            Ok(d) if elapsed > c.budget => Err(format!("{d}; over time budget")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("[PASS] criterion {} {}: {detail} ({timing})", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {} {}: {detail} ({timing})", c.id, c.name);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
