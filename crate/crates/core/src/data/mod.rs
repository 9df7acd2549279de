//! Dataset manifests, per-channel normalisation, stratified splits, image
//! transforms and the synthetic toyset.

mod ppm;
mod toyset;
mod transform;

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};
pub use toyset::{synthetic_toyset, toy_class_name, toy_edible, toy_image, MAX_TOY_CLASSES};
pub use transform::{adjust_sharpness, box_blur, resize, rotate, AugmentSpec};

/// Minimum divisor used by [`normalize`].
pub const SIGMA_FLOOR: f64 = 1e-6;

/// One manifest row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRecord {
    pub image_path: PathBuf,
    pub species: usize,
    pub edible: bool,
}

/// Reads a `path,species,edible` CSV. Relative image paths are resolved
/// against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<SampleRecord>> {
    let bad = |msg: String| Error::format("manifest", msg);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "species", "edible"] {
        return Err(bad(format!("header must be `path,species,edible`, got {headers:?}")));
    }
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let line = i + 2;
        let species = row[1]
            .parse::<usize>()
            .map_err(|_| bad(format!("line {line}: species `{}`", &row[1])))?;
        let edible = match &row[2] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("line {line}: edible `{other}` is not 0 or 1"))),
        };
        let p = PathBuf::from(&row[0]);
        records.push(SampleRecord {
            image_path: if p.is_absolute() { p } else { base.join(p) },
            species,
            edible,
        });
    }
    Ok(records)
}

/// Writes paths as given; callers pass paths relative to the manifest.
pub fn write_manifest(path: &Path, records: &[SampleRecord]) -> Result<()> {
    fs::write(path, manifest_text(records)).map_err(|e| Error::io(path, e))
}

pub fn manifest_text(records: &[SampleRecord]) -> String {
    let mut s = String::from("path,species,edible\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{}\n",
            r.image_path.display(),
            r.species,
            u8::from(r.edible)
        ));
    }
    s
}

/// `1 + max species id`.
pub fn infer_n_classes(records: &[SampleRecord]) -> Result<usize> {
    records
        .iter()
        .map(|r| r.species + 1)
        .max()
        .ok_or_else(|| Error::Degenerate("empty manifest".into()))
}

/// Species-to-edibility table; species absent from the records map to
/// toxic. Conflicting rows are an error.
pub fn edibility_map(records: &[SampleRecord], n_classes: usize) -> Result<Vec<bool>> {
    let mut map: Vec<Option<bool>> = vec![None; n_classes];
    for r in records {
        let slot = map
            .get_mut(r.species)
            .ok_or_else(|| Error::Index(format!("species {} of {n_classes}", r.species)))?;
        match slot {
            Some(e) if *e != r.edible => {
                return Err(Error::format(
                    "manifest",
                    format!("species {} listed as both edible and toxic", r.species),
                ))
            }
            _ => *slot = Some(r.edible),
        }
    }
    Ok(map.into_iter().map(|e| e.unwrap_or(false)).collect())
}

/// Per-channel population mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        NormStats {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }
}

fn channels_of(image: &Tensor) -> Result<usize> {
    match *image.shape() {
        [_, _, c] if c > 0 => Ok(c),
        _ => Err(Error::Dimension(format!(
            "expected an [H, W, C] image, got {:?}",
            image.shape()
        ))),
    }
}

/// Two passes over every pixel of every image.
pub fn compute_norm_stats(images: &[Tensor]) -> Result<NormStats> {
    let first = images
        .first()
        .ok_or_else(|| Error::Degenerate("no images for normalisation statistics".into()))?;
    let c = channels_of(first)?;
    let mut sum = vec![0.0; c];
    let mut count = 0usize;
    for img in images {
        if channels_of(img)? != c {
            return Err(Error::Dimension("images disagree on channel count".into()));
        }
        for px in img.data().chunks_exact(c) {
            for (s, v) in sum.iter_mut().zip(px) {
                *s += v;
            }
        }
        count += img.len() / c;
    }
    if count == 0 {
        return Err(Error::Degenerate("images have no pixels".into()));
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; c];
    for img in images {
        for px in img.data().chunks_exact(c) {
            for ((s, v), m) in sq.iter_mut().zip(px).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    let std = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
    Ok(NormStats { mean, std })
}

/// `(x - mean_c) / max(std_c, SIGMA_FLOOR)`.
pub fn normalize(image: &Tensor, stats: &NormStats) -> Result<Tensor> {
    map_channels(image, stats, |v, m, s| (v - m) / s.max(SIGMA_FLOOR))
}

pub fn denormalize(image: &Tensor, stats: &NormStats) -> Result<Tensor> {
    map_channels(image, stats, |v, m, s| v * s.max(SIGMA_FLOOR) + m)
}

fn map_channels(image: &Tensor, stats: &NormStats, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
    let c = channels_of(image)?;
    if c != stats.channels() || stats.std.len() != c {
        return Err(Error::Dimension(format!(
            "image has {c} channels, statistics {}",
            stats.channels()
        )));
    }
    let mut out = image.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        for (ch, v) in px.iter_mut().enumerate() {
            *v = f(*v, stats.mean[ch], stats.std[ch]);
        }
    }
    Ok(out)
}

/// Indices of a three-way split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified by species. Within each species the indices are shuffled by
/// `seed`, then the first `round(f_train * n)` go to train, the next
/// `round(f_val * n)` to validation and the remainder to test. Each part is
/// returned in ascending order.
pub fn split(records: &[SampleRecord], fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (ft, fv, fe) = fractions;
    let sum = ft + fv + fe;
    if [ft, fv, fe].iter().any(|f| !f.is_finite() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be nonnegative and sum to 1"
        )));
    }
    let n_classes = records.iter().map(|r| r.species + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, r) in records.iter().enumerate() {
        by_class[r.species].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for mut idx in by_class {
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = ((ft * n as f64).round() as usize).min(n);
        let n_val = ((fv * n as f64).round() as usize).min(n - n_train);
        let n_test = if fe == 0.0 { 0 } else { n - n_train - n_val };
        // rounding leftovers go to train when no test share was requested
        let n_train = n - n_val - n_test;
        out.train.extend(&idx[..n_train]);
        out.val.extend(&idx[n_train..n_train + n_val]);
        out.test.extend(&idx[n_train + n_val..]);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
