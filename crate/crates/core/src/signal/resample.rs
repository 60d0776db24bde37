use super::Waveform;
use crate::error::{Error, Result};

/// Zero crossings of the interpolation kernel on each side of its center.
const KERNEL_ZEROS: usize = 24;
const KAISER_BETA: f64 = 8.6;

/// Band-limited rational resampling with a Kaiser-windowed sinc kernel.
///
/// The cutoff sits at the lower of the two Nyquist frequencies; output length
/// is `ceil(len * target / source)`. Equal rates return the input unchanged.
pub fn resample(wav: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidAudio("target sample rate must be positive".into()));
    }
    let source_rate = wav.sample_rate();
    if source_rate == target_rate {
        return Ok(wav.clone());
    }
    let g = gcd(source_rate as u64, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = source_rate as u64 / g;
    let input = wav.samples();
    let out_len = ((input.len() as u64 * up + down - 1) / down) as usize;

    let cutoff = (up as f64 / down as f64).min(1.0);
    let half_width = (KERNEL_ZEROS as f64 / cutoff).ceil() as i64;
    let norm = bessel_i0(KAISER_BETA);

    // one tap table per fractional phase
    let taps: Vec<Vec<f64>> = (0..up)
        .map(|phase| {
            let frac = phase as f64 / up as f64;
            (-half_width + 1..=half_width)
                .map(|j| {
                    let dt = frac - j as f64;
                    let w = dt / half_width as f64;
                    if w.abs() >= 1.0 {
                        return 0.0;
                    }
                    let window = bessel_i0(KAISER_BETA * (1.0 - w * w).sqrt()) / norm;
                    cutoff * sinc(cutoff * dt) * window
                })
                .collect()
        })
        .collect();

    let n_in = input.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let table = &taps[(pos % up) as usize];
        let mut acc = 0.0f64;
        for (t, j) in table.iter().zip(-half_width + 1..=half_width) {
            let k = base + j;
            if (0..n_in).contains(&k) {
                acc += input[k as usize] as f64 * t;
            }
        }
        out.push(acc as f32);
    }
    Waveform::new(out, target_rate)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
