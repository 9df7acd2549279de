use rand::Rng;

use crate::error::{Error, Result};
use crate::models::ParamRef;
use crate::nn::conv::{conv2d, conv2d_backward, ConvSpec};
use crate::nn::linear::Linear;
use crate::nn::norm::{LayerNorm, LayerNormCache};
use crate::nn::Tensor;

/// Strided patch convolution, class token and positional embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub patch: ConvSpec,
    /// `E`
    pub cls: Tensor,
    /// `(patches + 1) x E`
    pub pos: Tensor,
}

impl Embedding {
    pub fn init<R: Rng + ?Sized>(image: usize, patch: usize, channels: usize, embed: usize, rng: &mut R) -> Self {
        let fan_in = (patch * patch * channels) as f64;
        let seq = (image / patch).pow(2) + 1;
        Embedding {
            patch: ConvSpec {
                filter: Tensor::uniform(&[patch, patch, channels, embed], 1.0 / fan_in.sqrt(), rng),
                bias: Tensor::zeros(&[embed]),
                stride: patch,
            },
            cls: Tensor::randn(&[embed], 0.02, rng),
            pos: Tensor::randn(&[seq, embed], 0.02, rng),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.cls.len()
    }

    /// `seq x E` token matrix, class token first, patches in row-major order.
    pub fn forward(&self, image: &Tensor) -> Result<Tensor> {
        let z = conv2d(image, &self.patch)?;
        let e = self.embed_dim();
        let n = z.len() / e;
        if n + 1 != self.pos.rows() {
            return Err(Error::Dimension(format!(
                "{n} patches for {} positional rows",
                self.pos.rows()
            )));
        }
        let mut tokens = self.pos.clone();
        for (t, c) in tokens.row_mut(0).iter_mut().zip(self.cls.data()) {
            *t += c;
        }
        for (t, v) in tokens.data_mut()[e..].iter_mut().zip(z.data()) {
            *t += v;
        }
        Ok(tokens)
    }

    /// Gradient with respect to every embedding parameter, in embedding form.
    pub fn backward(&self, image: &Tensor, dtokens: &Tensor) -> Result<Embedding> {
        let e = self.embed_dim();
        let side = ((dtokens.rows() - 1) as f64).sqrt().round() as usize;
        let dz = Tensor::new(vec![side, side, e], dtokens.data()[e..].to_vec())?;
        let (_, filter, bias) = conv2d_backward(image, &self.patch, &dz)?;
        Ok(Embedding {
            patch: ConvSpec {
                filter,
                bias,
                stride: self.patch.stride,
            },
            cls: Tensor::new(vec![e], dtokens.row(0).to_vec())?,
            pos: dtokens.clone(),
        })
    }

    pub fn params_mut(&mut self) -> Vec<ParamRef<'_>> {
        vec![
            ParamRef::tensor("embed.patch.filter", &mut self.patch.filter),
            ParamRef::tensor("embed.patch.bias", &mut self.patch.bias),
            ParamRef::tensor("embed.cls", &mut self.cls),
            ParamRef::tensor("embed.pos", &mut self.pos),
        ]
    }
}

/// Final layer norm on the class row, then the classifier head.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout {
    pub norm: LayerNorm,
    pub head: Linear,
}

#[derive(Clone, Debug)]
pub struct ReadoutCache {
    cls: Tensor,
    ln: LayerNormCache,
    normed: Tensor,
}

impl Readout {
    pub fn init<R: Rng + ?Sized>(embed: usize, n_classes: usize, rng: &mut R) -> Self {
        Readout {
            norm: LayerNorm::new(embed),
            head: Linear::init(embed, n_classes, rng),
        }
    }

    pub fn forward(&self, tokens: &Tensor) -> Result<(Vec<f64>, ReadoutCache)> {
        let cls = Tensor::new(vec![1, tokens.cols()], tokens.row(0).to_vec())?;
        let (normed, ln) = self.norm.forward(&cls)?;
        let logits = self.head.forward(&normed)?.into_data();
        Ok((logits, ReadoutCache { cls, ln, normed }))
    }

    /// Token gradient (only the class row is nonzero) and the parameter
    /// gradient in readout form.
    pub fn backward(&self, cache: &ReadoutCache, dlogits: &[f64], seq: usize) -> Result<(Tensor, Readout)> {
        let dy = Tensor::new(vec![1, dlogits.len()], dlogits.to_vec())?;
        let hg = self.head.backward(&cache.normed, &dy)?;
        let ng = self.norm.backward(&cache.ln, &hg.dx)?;
        let e = cache.cls.cols();
        let mut dtokens = Tensor::zeros(&[seq, e]);
        dtokens.row_mut(0).copy_from_slice(ng.dx.data());
        let grad = Readout {
            norm: LayerNorm {
                gamma: ng.dgamma,
                beta: ng.dbeta,
                eps: self.norm.eps,
            },
            head: Linear {
                weight: hg.dweight,
                bias: hg.dbias,
            },
        };
        Ok((dtokens, grad))
    }

    pub fn params_mut(&mut self) -> Vec<ParamRef<'_>> {
        vec![
            ParamRef::tensor("norm.gamma", &mut self.norm.gamma),
            ParamRef::tensor("norm.beta", &mut self.norm.beta),
            ParamRef::tensor("head.weight", &mut self.head.weight),
            ParamRef::tensor("head.bias", &mut self.head.bias),
        ]
    }
}

pub(crate) fn linear_params<'a>(prefix: &str, l: &'a mut Linear) -> [ParamRef<'a>; 2] {
    [
        ParamRef::tensor(format!("{prefix}.weight"), &mut l.weight),
        ParamRef::tensor(format!("{prefix}.bias"), &mut l.bias),
    ]
}

pub(crate) fn norm_params<'a>(prefix: &str, n: &'a mut LayerNorm) -> [ParamRef<'a>; 2] {
    [
        ParamRef::tensor(format!("{prefix}.gamma"), &mut n.gamma),
        ParamRef::tensor(format!("{prefix}.beta"), &mut n.beta),
    ]
}

/// `x + y` for same-shaped tensors.
pub(crate) fn residual(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    x.add(y)
}
