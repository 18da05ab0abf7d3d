//! Bundled handwritten-digit corpus.
//!
//! The crate embeds the UCI optical-recognition digit glyphs (1797 8x8
//! grayscale scans, public domain) and expands them into arbitrarily many
//! 28x28 images through seeded random affine distortion, intensity jitter and
//! pixel noise. The result is an MNIST-shaped classification corpus that
//! works offline; real MNIST IDX files slot into the same experiments when
//! available.

use crate::data::{LabeledDataset, Labels};
use crate::error::{CoreError, Result};
use crate::linalg::DenseMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

static GLYPHS: &[u8] = include_bytes!("../../assets/digits8x8.bin");
const GLYPH_SIDE: usize = 8;
const OUT_SIDE: usize = 28;
/// Glyphs render into a 20x20 box centered in the 28x28 frame, like MNIST.
const RENDER_SIDE: f64 = 20.0;

struct Glyph {
    pixels: [f64; GLYPH_SIDE * GLYPH_SIDE], // 0..1
    label: u32,
}

fn glyphs() -> &'static [Glyph] {
    static PARSED: OnceLock<Vec<Glyph>> = OnceLock::new();
    PARSED.get_or_init(|| {
        assert_eq!(&GLYPHS[..4], b"DGT1", "corrupt glyph asset");
        let count = u32::from_le_bytes(GLYPHS[4..8].try_into().unwrap()) as usize;
        let mut out = Vec::with_capacity(count);
        let mut at = 8;
        for _ in 0..count {
            let mut pixels = [0.0; GLYPH_SIDE * GLYPH_SIDE];
            for (p, &b) in pixels.iter_mut().zip(&GLYPHS[at..at + 64]) {
                *p = b as f64 / 16.0;
            }
            let label = GLYPHS[at + 64] as u32;
            out.push(Glyph { pixels, label });
            at += 65;
        }
        out
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DigitsConfig {
    /// Max rotation, degrees (uniform in +-).
    pub rotate_deg: f64,
    /// Log-uniform scale jitter, fraction (uniform in +-).
    pub scale_jitter: f64,
    /// Horizontal shear coefficient (uniform in +-).
    pub shear: f64,
    /// Translation in output pixels (uniform in +-).
    pub translate_px: f64,
    /// Peak stroke intensity drawn from [1 - jitter, 1].
    pub intensity_jitter: f64,
    /// Additive Gaussian pixel noise sigma.
    pub noise_sigma: f64,
    /// Fraction of examples rendered with the harsh profile below. Real
    /// handwriting corpora mix legible and barely-legible samples; the harsh
    /// slice reproduces that quality spread.
    pub hard_fraction: f64,
    pub hard_rotate_deg: f64,
    pub hard_noise_sigma: f64,
    pub hard_intensity_floor: f64,
    pub hard_translate_px: f64,
    /// Probability that a harsh-profile example also carries a wrong label
    /// (annotation errors concentrate on barely-legible digits).
    pub hard_label_noise: f64,
}

impl Default for DigitsConfig {
    fn default() -> Self {
        DigitsConfig {
            rotate_deg: 12.0,
            scale_jitter: 0.12,
            shear: 0.15,
            translate_px: 1.5,
            intensity_jitter: 0.25,
            noise_sigma: 0.03,
            hard_fraction: 0.25,
            hard_rotate_deg: 50.0,
            hard_noise_sigma: 0.22,
            hard_intensity_floor: 0.4,
            hard_translate_px: 4.0,
            hard_label_noise: 0.3,
        }
    }
}

/// Generate `n` distorted 28x28 digit images with class labels.
pub fn gen_digits(n: usize, seed: u64, cfg: &DigitsConfig) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(CoreError::domain("digit corpus size must be positive"));
    }
    let glyphs = glyphs();
    let mut rng = crate::rng::stream(seed, "digits", 0);
    let mut data = vec![0.0f64; n * OUT_SIDE * OUT_SIDE];
    let mut labels = Vec::with_capacity(n);
    let mut source_id = Vec::with_capacity(n);
    for i in 0..n {
        let glyph = &glyphs[rng.gen_range(0..glyphs.len())];
        let hard = rng.gen::<f64>() < cfg.hard_fraction;
        source_id.push(hard as u32);
        let label = if hard && rng.gen::<f64>() < cfg.hard_label_noise {
            let mut pick = rng.gen_range(0..9u32);
            if pick >= glyph.label {
                pick += 1;
            }
            pick
        } else {
            glyph.label
        };
        labels.push(label);
        let (rot, noise_sigma, trans) = if hard {
            (cfg.hard_rotate_deg, cfg.hard_noise_sigma, cfg.hard_translate_px)
        } else {
            (cfg.rotate_deg, cfg.noise_sigma, cfg.translate_px)
        };

        let theta = rng.gen_range(-rot..=rot).to_radians();
        let scale = 1.0 + rng.gen_range(-cfg.scale_jitter..=cfg.scale_jitter);
        let shear = rng.gen_range(-cfg.shear..=cfg.shear);
        let tx = rng.gen_range(-trans..=trans);
        let ty = rng.gen_range(-trans..=trans);
        let intensity = if hard {
            rng.gen_range(cfg.hard_intensity_floor..=1.0)
        } else {
            1.0 - rng.gen_range(0.0..=cfg.intensity_jitter)
        };

        // Inverse map: output pixel -> glyph coordinates.
        let (sin_t, cos_t) = theta.sin_cos();
        let px_per_cell = RENDER_SIDE / GLYPH_SIDE as f64 * scale;
        let center = (OUT_SIDE as f64 - 1.0) / 2.0;
        let img = &mut data[i * OUT_SIDE * OUT_SIDE..(i + 1) * OUT_SIDE * OUT_SIDE];
        for y in 0..OUT_SIDE {
            for x in 0..OUT_SIDE {
                let dx = x as f64 - center - tx;
                let dy = y as f64 - center - ty;
                // undo rotation
                let rx = cos_t * dx + sin_t * dy;
                let ry = -sin_t * dx + cos_t * dy;
                // undo shear [1 k; 0 1]
                let sx = rx - shear * ry;
                let sy = ry;
                let gx = sx / px_per_cell + (GLYPH_SIDE as f64 - 1.0) / 2.0;
                let gy = sy / px_per_cell + (GLYPH_SIDE as f64 - 1.0) / 2.0;
                let v = bilinear(&glyph.pixels, gx, gy) * intensity;
                let noise = if noise_sigma > 0.0 { noise_sigma * gaussian(&mut rng) } else { 0.0 };
                img[y * OUT_SIDE + x] = (v + noise).clamp(0.0, 1.0);
            }
        }
    }
    // source_id 1 marks the harsh-profile slice, when both slices exist
    let ids = (source_id.contains(&0) && source_id.contains(&1)).then_some(source_id);
    LabeledDataset::new(
        DenseMatrix::from_vec(n, OUT_SIDE * OUT_SIDE, data)?,
        Labels::Class(labels),
        ids,
    )
}

fn bilinear(pixels: &[f64; GLYPH_SIDE * GLYPH_SIDE], x: f64, y: f64) -> f64 {
    let sample = |ix: i64, iy: i64| -> f64 {
        if ix < 0 || iy < 0 || ix >= GLYPH_SIDE as i64 || iy >= GLYPH_SIDE as i64 {
            0.0
        } else {
            pixels[iy as usize * GLYPH_SIDE + ix as usize]
        }
    };
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (ix, iy) = (x0 as i64, y0 as i64);
    let top = sample(ix, iy) * (1.0 - fx) + sample(ix + 1, iy) * fx;
    let bot = sample(ix, iy + 1) * (1.0 - fx) + sample(ix + 1, iy + 1) * fx;
    top * (1.0 - fy) + bot * fy
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
