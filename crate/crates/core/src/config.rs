//! Run configuration as flat `key = value` text with per-key overrides.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::AugmentSpec;
use crate::encoding::RescaleMode;
use crate::error::{Error, Result};
use crate::models::qnn::QNNConfig;
use crate::models::vit::ViTConfig;
use crate::models::ModelKind;
use crate::pqc::Entangler;
use crate::qattention::{LoaderKind, QMViTConfig};

/// Everything that determines a training run. The output directory and the
/// worker count are deliberately not part of it: they do not affect results.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub manifest: PathBuf,
    /// 0 infers `1 + max species id` from the manifest.
    pub n_classes: usize,
    pub image_size: usize,
    pub patch_size: usize,

    pub qubits: usize,
    pub layers: usize,
    pub entangler: Entangler,
    pub loader: LoaderKind,
    pub rescale: RescaleMode,
    pub blocks: usize,

    pub vit_embed: usize,
    pub vit_heads: usize,
    pub vit_hidden: usize,

    pub qnn_patch: usize,
    pub qnn_stride: usize,
    pub qnn_layers: usize,
    pub qnn_trainable: bool,

    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub test_fraction: f64,

    pub augment: bool,
    pub max_rotation_deg: f64,
    pub sharpness_prob: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::QMViT,
            manifest: PathBuf::new(),
            n_classes: 0,
            image_size: 32,
            patch_size: 8,
            qubits: 4,
            layers: 1,
            entangler: Entangler::Ring,
            loader: LoaderKind::Rx,
            rescale: RescaleMode::PiTanh,
            blocks: 1,
            vit_embed: 16,
            vit_heads: 4,
            vit_hidden: 32,
            qnn_patch: 2,
            qnn_stride: 2,
            qnn_layers: 1,
            qnn_trainable: false,
            epochs: 10,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 0.0,
            seed: 0,
            val_fraction: 0.2,
            test_fraction: 0.0,
            augment: false,
            max_rotation_deg: 20.0,
            sharpness_prob: 0.5,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}` cannot take value `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}` expects a boolean, got `{value}`"))),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "model" => self.model = v.parse()?,
            "manifest" => self.manifest = PathBuf::from(v),
            "n_classes" => self.n_classes = parse(key, v)?,
            "image_size" => self.image_size = parse(key, v)?,
            "patch_size" => self.patch_size = parse(key, v)?,
            "qubits" => self.qubits = parse(key, v)?,
            "layers" | "quantum_layers" => self.layers = parse(key, v)?,
            "entangler" => self.entangler = v.parse()?,
            "loader" => self.loader = v.parse()?,
            "rescale" => self.rescale = v.parse()?,
            "blocks" => self.blocks = parse(key, v)?,
            "vit_embed" => self.vit_embed = parse(key, v)?,
            "vit_heads" => self.vit_heads = parse(key, v)?,
            "vit_hidden" => self.vit_hidden = parse(key, v)?,
            "qnn_patch" => self.qnn_patch = parse(key, v)?,
            "qnn_stride" => self.qnn_stride = parse(key, v)?,
            "qnn_layers" => self.qnn_layers = parse(key, v)?,
            "qnn_trainable" => self.qnn_trainable = parse_bool(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" | "batch" => self.batch_size = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "val_fraction" => self.val_fraction = parse(key, v)?,
            "test_fraction" => self.test_fraction = parse(key, v)?,
            "augment" => self.augment = parse_bool(key, v)?,
            "max_rotation_deg" => self.max_rotation_deg = parse(key, v)?,
            "sharpness_prob" => self.sharpness_prob = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Defaults for `model`. The quanvolutional baseline's head sees small,
    /// strongly offset pooled features and needs a larger step size.
    pub fn for_model(model: ModelKind) -> Self {
        let mut cfg = RunConfig {
            model,
            ..RunConfig::default()
        };
        if model == ModelKind::QNN {
            cfg.lr = 0.05;
            cfg.batch_size = 8;
        }
        cfg
    }

    /// Flat `key = value` lines; `#` starts a comment. Keys not given take
    /// the defaults of the selected model.
    pub fn parse_text(text: &str) -> Result<Self> {
        Self::from_pairs(&Self::pairs(text)?)
    }

    /// Applies `pairs` over the defaults of the model they select.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut probe = RunConfig::default();
        for (k, v) in pairs {
            if k.trim() == "model" {
                probe.set(k, v)?;
            }
        }
        let mut cfg = Self::for_model(probe.model);
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn pairs(text: &str) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", i + 1))
            })?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    /// Canonical echo; `parse_text(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("model", self.model.to_string());
        kv("manifest", self.manifest.display().to_string());
        kv("n_classes", self.n_classes.to_string());
        kv("image_size", self.image_size.to_string());
        kv("patch_size", self.patch_size.to_string());
        kv("qubits", self.qubits.to_string());
        kv("layers", self.layers.to_string());
        kv("entangler", self.entangler.to_string());
        kv("loader", self.loader.to_string());
        kv("rescale", self.rescale.to_string());
        kv("blocks", self.blocks.to_string());
        kv("vit_embed", self.vit_embed.to_string());
        kv("vit_heads", self.vit_heads.to_string());
        kv("vit_hidden", self.vit_hidden.to_string());
        kv("qnn_patch", self.qnn_patch.to_string());
        kv("qnn_stride", self.qnn_stride.to_string());
        kv("qnn_layers", self.qnn_layers.to_string());
        kv("qnn_trainable", self.qnn_trainable.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lr", format!("{:?}", self.lr));
        kv("weight_decay", format!("{:?}", self.weight_decay));
        kv("seed", self.seed.to_string());
        kv("val_fraction", format!("{:?}", self.val_fraction));
        kv("test_fraction", format!("{:?}", self.test_fraction));
        kv("augment", self.augment.to_string());
        kv("max_rotation_deg", format!("{:?}", self.max_rotation_deg));
        kv("sharpness_prob", format!("{:?}", self.sharpness_prob));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay {}", self.weight_decay)));
        }
        let (v, t) = (self.val_fraction, self.test_fraction);
        if !(0.0..1.0).contains(&v) || !(0.0..1.0).contains(&t) || v + t >= 1.0 {
            return Err(Error::Config(format!(
                "validation {v} and test {t} fractions must leave a training share"
            )));
        }
        self.augment_spec().validate()?;
        if self.n_classes > 0 {
            match self.model {
                ModelKind::QMViT => self.qmvit_config(self.n_classes)?.validate()?,
                ModelKind::ViT => self.vit_config(self.n_classes).validate()?,
                ModelKind::QNN => self.qnn_config(self.n_classes).validate()?,
            }
        }
        Ok(())
    }

    /// The table preset for `(qubits, layers)` with geometry and circuit
    /// overrides applied.
    pub fn qmvit_config(&self, n_classes: usize) -> Result<QMViTConfig> {
        let mut cfg = QMViTConfig::preset(self.qubits, self.layers, n_classes)?;
        cfg.image_size = self.image_size;
        cfg.patch_size = self.patch_size;
        cfg.n_blocks = self.blocks;
        cfg.loader = self.loader;
        cfg.entangler = self.entangler;
        cfg.rescale = self.rescale;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn vit_config(&self, n_classes: usize) -> ViTConfig {
        ViTConfig {
            image_size: self.image_size,
            patch_size: self.patch_size,
            embed_dim: self.vit_embed,
            n_heads: self.vit_heads,
            n_blocks: self.blocks,
            mlp_hidden: self.vit_hidden,
            ..ViTConfig::small(n_classes)
        }
    }

    pub fn qnn_config(&self, n_classes: usize) -> QNNConfig {
        QNNConfig {
            image_size: self.image_size,
            patch: self.qnn_patch,
            stride: self.qnn_stride,
            n_layers: self.qnn_layers,
            trainable_circuit: self.qnn_trainable,
            ..QNNConfig::small(n_classes)
        }
    }

    pub fn augment_spec(&self) -> AugmentSpec {
        AugmentSpec {
            max_rotation_deg: self.max_rotation_deg,
            sharpness_prob: self.sharpness_prob,
            ..AugmentSpec::new((self.image_size, self.image_size), self.seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("model", "vit").unwrap();
        cfg.set("lr", "0.003").unwrap();
        cfg.set("qnn-trainable", "true").unwrap();
        cfg.set("manifest", "data/manifest.csv").unwrap();
        assert_eq!(RunConfig::parse_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse_text("epochs = ten").is_err());
        assert!(RunConfig::parse_text("colour = red").is_err());
        assert!(RunConfig::parse_text("just words").is_err());
        let cfg = RunConfig::parse_text("qubits = 5\nn_classes = 3\n").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn presets_constructible() {
        for (q, l) in [(4, 1), (8, 1), (4, 2), (8, 2)] {
            let cfg = RunConfig { qubits: q, layers: l, n_classes: 4, ..RunConfig::default() };
            cfg.validate().unwrap();
            assert_eq!(cfg.qmvit_config(4).unwrap().n_qubits, q);
        }
    }

    #[test]
    fn model_presets_yield_to_explicit_keys() {
        let cfg = RunConfig::parse_text("model = qnn").unwrap();
        assert_eq!((cfg.lr, cfg.batch_size), (0.05, 8));
        let cfg = RunConfig::parse_text("lr = 0.01\nmodel = qnn").unwrap();
        assert_eq!((cfg.lr, cfg.batch_size), (0.01, 8));
        assert_eq!(RunConfig::parse_text("model = vit").unwrap().lr, 1e-3);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::parse_text("# run\n\nepochs = 3 # short\nseed=9\n").unwrap();
        assert_eq!((cfg.epochs, cfg.seed), (3, 9));
    }
}
