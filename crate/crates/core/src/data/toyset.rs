//! Seeded synthetic dataset of coloured shapes on a noisy dark background.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SampleRecord;
use crate::error::{Error, Result};
use crate::nn::Tensor;

const SHAPES: [&str; 8] = [
    "disk", "square", "triangle", "cross", "ring", "diamond", "hbar", "vbar",
];

/// Foreground colours. Channel means are pairwise distinct, and for the
/// first four classes the product of shape area and mean intensity spreads
/// over a wide range, so even a single-plane intensity model can separate
/// them.
const COLORS: [[f64; 3]; 8] = [
    [0.95, 0.55, 0.10],
    [0.95, 0.95, 0.95],
    [0.25, 0.75, 0.05],
    [0.90, 0.15, 0.15],
    [0.95, 0.85, 0.10],
    [0.15, 0.35, 0.95],
    [0.25, 0.95, 0.95],
    [0.85, 0.25, 0.65],
];

pub const MAX_TOY_CLASSES: usize = SHAPES.len() * COLORS.len();

fn class_style(class: usize) -> (usize, usize) {
    let shape = class % SHAPES.len();
    let color = (class + class / SHAPES.len()) % COLORS.len();
    (shape, color)
}

pub fn toy_class_name(class: usize) -> String {
    let (s, _) = class_style(class);
    format!("{}_{}", SHAPES[s], class)
}

pub fn toy_edible(class: usize) -> bool {
    class % 2 == 0
}

fn inside(shape: usize, u: f64, v: f64) -> bool {
    let r = (u * u + v * v).sqrt();
    match shape {
        0 => r < 0.6,
        1 => u.abs().max(v.abs()) < 0.5,
        2 => (-0.55..0.55).contains(&v) && u.abs() < (v + 0.55) * 0.55,
        3 => (u.abs() < 0.2 && v.abs() < 0.65) || (v.abs() < 0.2 && u.abs() < 0.65),
        4 => (0.35..0.65).contains(&r),
        5 => u.abs() + v.abs() < 0.6,
        6 => u.abs() < 0.7 && v.abs() < 0.22,
        _ => v.abs() < 0.7 && u.abs() < 0.22,
    }
}

fn sample_rng(seed: u64, class: usize, index: usize) -> ChaCha8Rng {
    let mut s = [0u8; 32];
    s[..8].copy_from_slice(&seed.to_le_bytes());
    s[8..16].copy_from_slice(&(class as u64).to_le_bytes());
    s[16..24].copy_from_slice(&(index as u64).to_le_bytes());
    s[24..].copy_from_slice(b"toyset\0\0");
    ChaCha8Rng::from_seed(s)
}

/// One `[size, size, 3]` image. Pixels are 8-bit quantised so that a PPM
/// round trip reproduces them exactly.
pub fn toy_image(seed: u64, class: usize, index: usize, size: usize) -> Tensor {
    let mut rng = sample_rng(seed, class, index);
    let (shape, color) = class_style(class);
    let half = size as f64 / 2.0;
    let jitter = size as f64 / 8.0;
    let cy = half - 0.5 + rng.random_range(-jitter..=jitter);
    let cx = half - 0.5 + rng.random_range(-jitter..=jitter);
    let scale = half * rng.random_range(0.85..=1.0);
    let gain = rng.random_range(0.9..=1.05);
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let u = (x as f64 - cx) / scale;
            let v = (y as f64 - cy) / scale;
            let fg = inside(shape, u, v);
            for ch in 0..3 {
                let noise = rng.random_range(0.0..0.12);
                let val = if fg {
                    (COLORS[color][ch] * gain - noise / 2.0).clamp(0.0, 1.0)
                } else {
                    noise
                };
                data.push((val * 255.0).round() / 255.0);
            }
        }
    }
    Tensor::new(vec![size, size, 3], data).expect("toy image shape")
}

/// `n_classes * n_per_class` records, class-major, with relative image paths.
pub fn synthetic_toyset(
    seed: u64,
    n_classes: usize,
    n_per_class: usize,
    size: usize,
) -> Result<Vec<(SampleRecord, Tensor)>> {
    if n_classes == 0 || n_classes > MAX_TOY_CLASSES {
        return Err(Error::Config(format!(
            "toyset supports 1..={MAX_TOY_CLASSES} classes, got {n_classes}"
        )));
    }
    if size < 4 {
        return Err(Error::Config(format!("toyset image size {size} below 4")));
    }
    let mut out = Vec::with_capacity(n_classes * n_per_class);
    for c in 0..n_classes {
        for i in 0..n_per_class {
            let rec = SampleRecord {
                image_path: format!("img_{c:02}_{i:04}.ppm").into(),
                species: c,
                edible: toy_edible(c),
            };
            out.push((rec, toy_image(seed, c, i, size)));
        }
    }
    Ok(out)
}
