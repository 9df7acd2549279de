//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//! `"QMVIT1"`, u32 length + config echo (UTF-8), u64 seed, u32 length + RNG
//! state, u32 array count, then per array: u32 length + name, u32 rank,
//! u64 per dimension, f64 payload.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::models::Model;

pub const MAGIC: &[u8; 6] = b"QMVIT1";

pub const NORM_MEAN: &str = "data.norm_mean";
pub const NORM_STD: &str = "data.norm_std";
pub const EDIBLE: &str = "data.edible";

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub seed: u64,
    pub rng_state: Vec<u8>,
    pub arrays: Vec<NamedArray>,
}

/// A model plus the preprocessing and label metadata it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Restored {
    pub config: RunConfig,
    pub model: Model,
    pub stats: NormStats,
    pub edible: Vec<bool>,
}

/// Seed, stream and word position of a ChaCha generator.
pub fn rng_state(rng: &ChaCha8Rng) -> Vec<u8> {
    let mut v = rng.get_seed().to_vec();
    v.extend(rng.get_stream().to_le_bytes());
    v.extend(rng.get_word_pos().to_le_bytes());
    v
}

pub fn rng_from_state(state: &[u8]) -> Result<ChaCha8Rng> {
    if state.len() != 56 {
        return Err(Error::format("checkpoint", format!("RNG state of {} bytes", state.len())));
    }
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&state[..32]);
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(u64::from_le_bytes(state[32..40].try_into().expect("8 bytes")));
    rng.set_word_pos(u128::from_le_bytes(state[40..56].try_into().expect("16 bytes")));
    Ok(rng)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("checkpoint", format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn blob(&mut self) -> Result<&'a [u8]> {
        let n = self.u32()?;
        self.take(n)
    }

    fn text(&mut self) -> Result<String> {
        String::from_utf8(self.blob()?.to_vec()).map_err(|_| Error::format("checkpoint", "non-UTF-8 text"))
    }
}

fn put_blob(out: &mut Vec<u8>, b: &[u8]) {
    out.extend((b.len() as u32).to_le_bytes());
    out.extend(b);
}

impl Checkpoint {
    pub fn new(
        config: &RunConfig,
        n_classes: usize,
        model: &Model,
        stats: &NormStats,
        edible: &[bool],
        rng: &ChaCha8Rng,
    ) -> Self {
        let mut arrays = Vec::new();
        let flat = model.flatten();
        let mut offset = 0;
        for (name, shape) in model.param_layout() {
            let n: usize = shape.iter().product();
            arrays.push(NamedArray {
                name,
                shape,
                data: flat[offset..offset + n].to_vec(),
            });
            offset += n;
        }
        let vector = |name: &str, data: Vec<f64>| NamedArray {
            name: name.into(),
            shape: vec![data.len()],
            data,
        };
        arrays.push(vector(NORM_MEAN, stats.mean.clone()));
        arrays.push(vector(NORM_STD, stats.std.clone()));
        arrays.push(vector(EDIBLE, edible.iter().map(|&e| f64::from(u8::from(e))).collect()));
        Checkpoint {
            config: RunConfig {
                n_classes,
                ..config.clone()
            },
            seed: config.seed,
            rng_state: rng_state(rng),
            arrays,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        put_blob(&mut out, self.config.to_text().as_bytes());
        out.extend(self.seed.to_le_bytes());
        put_blob(&mut out, &self.rng_state);
        out.extend((self.arrays.len() as u32).to_le_bytes());
        for a in &self.arrays {
            put_blob(&mut out, a.name.as_bytes());
            out.extend((a.shape.len() as u32).to_le_bytes());
            for &d in &a.shape {
                out.extend((d as u64).to_le_bytes());
            }
            for v in &a.data {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::format("checkpoint", "missing QMVIT1 header"));
        }
        let config = RunConfig::parse_text(&r.text()?)?;
        let seed = r.u64()?;
        let rng_state = r.blob()?.to_vec();
        let count = r.u32()?;
        let mut arrays = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name = r.text()?;
            let rank = r.u32()?;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::format("checkpoint", format!("shape overflow in `{name}`")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::format("checkpoint", "payload size"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            arrays.push(NamedArray { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Checkpoint {
            config,
            seed,
            rng_state,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn array(&self, name: &str) -> Result<&NamedArray> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::format("checkpoint", format!("no array `{name}`")))
    }

    pub fn rng(&self) -> Result<ChaCha8Rng> {
        rng_from_state(&self.rng_state)
    }

    /// Rebuilds the model from the config echo and fills every parameter by
    /// name; shapes must match exactly.
    pub fn restore(&self) -> Result<Restored> {
        let n_classes = self.config.n_classes;
        if n_classes == 0 {
            return Err(Error::format("checkpoint", "class count missing from config echo"));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut model = crate::train::build_model(&self.config, n_classes, &mut init_rng)?;
        let mut flat = Vec::new();
        for (name, shape) in model.param_layout() {
            let a = self.array(&name)?;
            if a.shape != shape {
                return Err(Error::format(
                    "checkpoint",
                    format!("`{name}` has shape {:?}, model expects {shape:?}", a.shape),
                ));
            }
            flat.extend_from_slice(&a.data);
        }
        model.load_flat(&flat)?;
        let stats = NormStats {
            mean: self.array(NORM_MEAN)?.data.clone(),
            std: self.array(NORM_STD)?.data.clone(),
        };
        let edible = self.array(EDIBLE)?.data.iter().map(|&v| v != 0.0).collect::<Vec<_>>();
        if edible.len() != n_classes {
            return Err(Error::format("checkpoint", "edibility table size"));
        }
        Ok(Restored {
            config: self.config.clone(),
            model,
            stats,
            edible,
        })
    }
}
