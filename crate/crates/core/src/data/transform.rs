//! Geometric and photometric transforms on `[H, W, C]` images.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;

fn dims(image: &Tensor) -> Result<(usize, usize, usize)> {
    match *image.shape() {
        [h, w, c] if h > 0 && w > 0 && c > 0 => Ok((h, w, c)),
        _ => Err(Error::Dimension(format!(
            "expected a non-empty [H, W, C] image, got {:?}",
            image.shape()
        ))),
    }
}

/// Bilinear resampling with half-pixel centres and edge clamping.
pub fn resize(image: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = dims(image)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Dimension("resize target must be non-empty".into()));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let src = image.data();
    let axis = |o: usize, n_in: usize, n_out: usize| {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = vec![0.0; out_h * out_w * c];
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, h, out_h);
        for x in 0..out_w {
            let (x0, x1, fx) = axis(x, w, out_w);
            for ch in 0..c {
                let p = |yy: usize, xx: usize| src[(yy * w + xx) * c + ch];
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bot = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                out[(y * out_w + x) * c + ch] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Tensor::new(vec![out_h, out_w, c], out)
}

/// Rotation by `degrees` about the image centre with bilinear sampling;
/// samples falling outside the source read as zero.
pub fn rotate(image: &Tensor, degrees: f64) -> Result<Tensor> {
    let (h, w, c) = dims(image)?;
    if degrees == 0.0 {
        return Ok(image.clone());
    }
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let src = image.data();
    let fetch = |yy: isize, xx: isize, ch: usize| {
        if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
            0.0
        } else {
            src[(yy as usize * w + xx as usize) * c + ch]
        }
    };
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            // inverse map: rotate the destination point by -degrees
            let sx = cx + cos * dx + sin * dy;
            let sy = cy - sin * dx + cos * dy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ch in 0..c {
                let top = fetch(y0, x0, ch) * (1.0 - fx) + fetch(y0, x0 + 1, ch) * fx;
                let bot = fetch(y0 + 1, x0, ch) * (1.0 - fx) + fetch(y0 + 1, x0 + 1, ch) * fx;
                out[(y * w + x) * c + ch] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// 3x3 mean filter with replicated borders.
pub fn box_blur(image: &Tensor) -> Result<Tensor> {
    let (h, w, c) = dims(image)?;
    let src = image.data();
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        acc += src[(yy * w + xx) * c + ch];
                    }
                }
                out[(y * w + x) * c + ch] = acc / 9.0;
            }
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// `factor * image + (1 - factor) * blur(image)`, clamped to `[0, 1]`.
/// 0 blurs, 1 is the identity, values above 1 sharpen.
pub fn adjust_sharpness(image: &Tensor, factor: f64) -> Result<Tensor> {
    if !factor.is_finite() || factor < 0.0 {
        return Err(Error::Config(format!("sharpness factor {factor}")));
    }
    if factor == 1.0 {
        dims(image)?;
        return Ok(image.clone());
    }
    let blur = box_blur(image)?;
    let data = image
        .data()
        .iter()
        .zip(blur.data())
        .map(|(&o, &b)| (factor * o + (1.0 - factor) * b).clamp(0.0, 1.0))
        .collect();
    Tensor::new(image.shape().to_vec(), data)
}

/// Training-time augmentation. Randomness is a pure function of
/// `(seed, epoch, index)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentSpec {
    pub resize_to: (usize, usize),
    pub max_rotation_deg: f64,
    pub sharpness_prob: f64,
    /// Sharpness factors are drawn uniformly from this range.
    pub sharpness_range: (f64, f64),
    pub seed: u64,
}

impl AugmentSpec {
    pub fn new(resize_to: (usize, usize), seed: u64) -> Self {
        AugmentSpec {
            resize_to,
            max_rotation_deg: 20.0,
            sharpness_prob: 0.5,
            sharpness_range: (0.5, 2.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.sharpness_prob) {
            return Err(Error::Config(format!("sharpness probability {}", self.sharpness_prob)));
        }
        if !(0.0..=180.0).contains(&self.max_rotation_deg) {
            return Err(Error::Config(format!("rotation bound {}", self.max_rotation_deg)));
        }
        let (lo, hi) = self.sharpness_range;
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
            return Err(Error::Config("sharpness range".into()));
        }
        Ok(())
    }

    pub fn rng(&self, epoch: u64, index: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&self.seed.to_le_bytes());
        seed[8..16].copy_from_slice(&epoch.to_le_bytes());
        seed[16..24].copy_from_slice(&index.to_le_bytes());
        seed[24..].copy_from_slice(b"augment\0");
        ChaCha8Rng::from_seed(seed)
    }

    /// Resize, random rotation, then random sharpness.
    pub fn apply(&self, image: &Tensor, epoch: u64, index: u64) -> Result<Tensor> {
        let mut rng = self.rng(epoch, index);
        let mut out = resize(image, self.resize_to.0, self.resize_to.1)?;
        if self.max_rotation_deg > 0.0 {
            let deg = rng.random_range(-self.max_rotation_deg..=self.max_rotation_deg);
            out = rotate(&out, deg)?;
        }
        if rng.random::<f64>() < self.sharpness_prob {
            let (lo, hi) = self.sharpness_range;
            out = adjust_sharpness(&out, rng.random_range(lo..=hi))?;
        }
        Ok(out)
    }
}
