//! Trainable classifiers sharing one parameter-visiting scheme.
//!
//! Parameters are exposed as named flat buffers in a fixed order. Gradients
//! are returned flattened in that same order, which is what the optimizer and
//! the checkpoint format consume.

pub mod qmvit;
pub mod qnn;
pub mod vit;

mod common;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use common::{Embedding, Readout};
pub use qmvit::QMViT;
pub use qnn::QNN;
pub use vit::ViT;

/// A named, shaped view of one parameter buffer.
pub struct ParamRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
}

impl<'a> ParamRef<'a> {
    pub fn tensor(name: impl Into<String>, t: &'a mut Tensor) -> Self {
        let shape = t.shape().to_vec();
        ParamRef {
            name: name.into(),
            shape,
            data: t.data_mut(),
        }
    }

    pub fn vector(name: impl Into<String>, v: &'a mut [f64]) -> Self {
        ParamRef {
            name: name.into(),
            shape: vec![v.len()],
            data: v,
        }
    }
}

pub trait Params: Clone {
    fn params_mut(&mut self) -> Vec<ParamRef<'_>>;

    /// Names and shapes in visiting order.
    fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut c = self.clone();
        c.params_mut().into_iter().map(|p| (p.name, p.shape)).collect()
    }

    fn n_params(&self) -> usize {
        self.param_layout()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    fn flatten(&self) -> Vec<f64> {
        let mut c = self.clone();
        c.params_mut().into_iter().flat_map(|p| p.data.to_vec()).collect()
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.data.len();
            let src = flat.get(offset..offset + n).ok_or_else(|| {
                Error::Dimension(format!("flat buffer too short at `{}`", p.name))
            })?;
            p.data.copy_from_slice(src);
            offset += n;
        }
        if offset != flat.len() {
            return Err(Error::Dimension(format!(
                "flat buffer has {} values, model {offset}",
                flat.len()
            )));
        }
        Ok(())
    }
}

/// Per-image classifier with a manual backward pass.
pub trait Classifier: Params + Send + Sync {
    type Cache: Send;

    fn n_classes(&self) -> usize;

    /// Expected `H x W x C` input shape.
    fn input_shape(&self) -> [usize; 3];

    fn forward_train(&self, image: &Tensor) -> Result<(Vec<f64>, Self::Cache)>;

    fn logits(&self, image: &Tensor) -> Result<Vec<f64>> {
        Ok(self.forward_train(image)?.0)
    }

    /// Flattened parameter gradient for one sample.
    fn backward(&self, cache: &Self::Cache, dlogits: &[f64]) -> Result<Vec<f64>>;

    fn check_input(&self, image: &Tensor) -> Result<()> {
        if image.shape() != self.input_shape() {
            return Err(Error::Dimension(format!(
                "image shape {:?}, model expects {:?}",
                image.shape(),
                self.input_shape()
            )));
        }
        if !image.is_finite() {
            return Err(Error::NonFinite("input image".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    QMViT,
    ViT,
    QNN,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::QMViT => "qmvit",
            ModelKind::ViT => "vit",
            ModelKind::QNN => "qnn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qmvit" => Ok(ModelKind::QMViT),
            "vit" => Ok(ModelKind::ViT),
            "qnn" => Ok(ModelKind::QNN),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Any of the three classifiers.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    QMViT(QMViT),
    ViT(ViT),
    QNN(QNN),
}

/// Runs `$body` with `$m` bound to the concrete model.
#[macro_export]
macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            $crate::models::Model::QMViT($m) => $body,
            $crate::models::Model::ViT($m) => $body,
            $crate::models::Model::QNN($m) => $body,
        }
    };
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::QMViT(_) => ModelKind::QMViT,
            Model::ViT(_) => ModelKind::ViT,
            Model::QNN(_) => ModelKind::QNN,
        }
    }

    pub fn logits(&self, image: &Tensor) -> Result<Vec<f64>> {
        with_model!(self, m => m.logits(image))
    }

    pub fn n_classes(&self) -> usize {
        with_model!(self, m => m.n_classes())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        with_model!(self, m => m.input_shape())
    }

    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        with_model!(self, m => m.param_layout())
    }

    pub fn flatten(&self) -> Vec<f64> {
        with_model!(self, m => m.flatten())
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        with_model!(self, m => m.load_flat(flat))
    }
}
