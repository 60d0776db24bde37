use std::path::Path;

use image::{Rgb, RgbImage};

use super::font::{glyph, GLYPH_H, GLYPH_W};
use crate::error::{Error, IoContext, Result};
use crate::signal::{mel_spectrogram, resample, SpectralConfig, Waveform};

/// Pixels above each panel reserved for its label.
pub const LABEL_HEIGHT: u32 = 2 * GLYPH_H + 6;
/// Background rows between panels.
pub const PANEL_GAP: u32 = 4;
const CELL_W: u32 = 2;
const CELL_H: u32 = 2;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([0, 0, 0]);

/// Dark-blue to yellow ramp.
const RAMP: [[f64; 3]; 5] = [
    [12.0, 7.0, 60.0],
    [70.0, 30.0, 130.0],
    [180.0, 55.0, 110.0],
    [245.0, 140.0, 40.0],
    [250.0, 250.0, 160.0],
];

fn color(v: f64) -> Rgb<u8> {
    let x = v.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (RAMP[i][k] + (RAMP[i + 1][k] - RAMP[i][k]) * f).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn draw_text(img: &mut RgbImage, text: &str, x0: u32, y0: u32, scale: u32) {
    let mut x = x0;
    for ch in text.chars() {
        let g = glyph(ch);
        for (row, bits) in g.iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - col)) != 0 {
                    for dy in 0..scale {
                        for dx in 0..scale {
                            let (px, py) = (x + col * scale + dx, y0 + row as u32 * scale + dy);
                            if px < img.width() && py < img.height() {
                                img.put_pixel(px, py, INK);
                            }
                        }
                    }
                }
            }
        }
        x += (GLYPH_W + 1) * scale;
    }
}

/// Stacked log-mel panels (20 ms analysis) on one color scale, each with its
/// label above it; low frequencies at the bottom of each panel.
pub fn render_spectrogram_figure(clips: &[(String, Waveform)]) -> Result<RgbImage> {
    if clips.is_empty() {
        return Err(Error::Data("figure needs at least one clip".into()));
    }
    let cfg = SpectralConfig::REP_ALIGNED;
    let mels = clips
        .iter()
        .map(|(_, w)| Ok(mel_spectrogram(&resample(w, cfg.sample_rate)?, &cfg)?.frames))
        .collect::<Result<Vec<_>>>()?;
    let floor = cfg.log_floor.ln();
    let lo = mels.iter().flat_map(|m| m.iter()).cloned().fold(f64::INFINITY, f64::min).max(floor);
    let hi = mels.iter().flat_map(|m| m.iter()).cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };

    let max_frames = mels.iter().map(|m| m.nrows()).max().unwrap_or(0) as u32;
    let label_w = clips
        .iter()
        .map(|(l, _)| l.chars().count() as u32 * (GLYPH_W + 1) * 2)
        .max()
        .unwrap_or(0);
    let width = (max_frames * CELL_W).max(label_w + 4).max(1);
    let panel_h = cfg.n_mels as u32 * CELL_H;
    let height = clips.len() as u32 * (LABEL_HEIGHT + panel_h + PANEL_GAP);
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    for (p, ((label, _), mel)) in clips.iter().zip(&mels).enumerate() {
        let top = p as u32 * (LABEL_HEIGHT + panel_h + PANEL_GAP);
        draw_text(&mut img, label, 2, top + 3, 2);
        let y0 = top + LABEL_HEIGHT;
        for (t, row) in mel.rows().into_iter().enumerate() {
            for (m, &v) in row.iter().enumerate() {
                let c = color((v - lo) / span);
                let y = y0 + (cfg.n_mels - 1 - m) as u32 * CELL_H;
                for dy in 0..CELL_H {
                    for dx in 0..CELL_W {
                        img.put_pixel(t as u32 * CELL_W + dx, y + dy, c);
                    }
                }
            }
        }
    }
    Ok(img)
}

/// Renders [`render_spectrogram_figure`] to a PNG at `out_path`.
pub fn spectrogram_figure(clips: &[(String, Waveform)], out_path: &Path) -> Result<()> {
    let img = render_spectrogram_figure(clips)?;
    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_path("create figure directory", dir)?;
    }
    img.save_with_format(out_path, image::ImageFormat::Png)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chirp() -> Waveform {
        Waveform::new(
            (0..24_000)
                .map(|i| {
                    let t = i as f64 / 24_000.0;
                    (0.3 * (2.0 * std::f64::consts::PI * (200.0 + 2000.0 * t) * t).sin()) as f32
                })
                .collect(),
            24_000,
        )
        .unwrap()
    }

    fn panel(img: &RgbImage, p: u32, frames: u32) -> Vec<Rgb<u8>> {
        let panel_h = 80 * CELL_H;
        let y0 = p * (LABEL_HEIGHT + panel_h + PANEL_GAP) + LABEL_HEIGHT;
        let mut v = Vec::new();
        for y in y0..y0 + panel_h {
            for x in 0..frames * CELL_W {
                v.push(*img.get_pixel(x, y));
            }
        }
        v
    }

    #[test]
    fn three_clips_write_a_png() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fig/fig2.png");
        let clips = vec![
            ("clean".to_string(), chirp()),
            ("noisy 5db".to_string(), chirp().scaled(0.5)),
            ("layer 6".to_string(), Waveform::silence(24_000, 24_000)),
        ];
        spectrogram_figure(&clips, &path).unwrap();
        assert!(std::fs::metadata(&path).unwrap().len() > 0);
        let img = image::open(&path).unwrap().to_rgb8();
        assert_eq!(img.height(), 3 * (LABEL_HEIGHT + 160 + PANEL_GAP));
    }

    #[test]
    fn silence_panel_is_uniform_floor() {
        let img = render_spectrogram_figure(&[
            ("tone".into(), chirp()),
            ("quiet".into(), Waveform::silence(24_000, 24_000)),
        ])
        .unwrap();
        let px = panel(&img, 1, img.width() / CELL_W);
        assert!(px.iter().all(|&c| c == px[0]));
        assert_eq!(px[0], color(0.0));
    }

    #[test]
    fn identical_clips_render_identically() {
        let img = render_spectrogram_figure(&[("a".into(), chirp()), ("a".into(), chirp())]).unwrap();
        let w = img.width() / CELL_W;
        assert_eq!(panel(&img, 0, w), panel(&img, 1, w));
    }

    #[test]
    fn empty_list_is_rejected() {
        assert!(render_spectrogram_figure(&[]).is_err());
    }
}
