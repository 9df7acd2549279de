use rand::Rng;

use crate::error::{Error, Result};
use crate::models::common::{linear_params, norm_params, residual, Embedding, Readout, ReadoutCache};
use crate::models::{Classifier, ParamRef, Params};
use crate::nn::linear::Linear;
use crate::nn::norm::{LayerNorm, LayerNormCache};
use crate::nn::Tensor;
use crate::pqc::ParamVector;
use crate::qattention::{
    multi_head_backward, multi_head_forward, MultiHeadCache, QMLPParams, QMViTConfig, QmlpCache,
    QuantumHeadParams,
};

/// Pre-norm block: quantum attention then quantum MLP, both residual.
#[derive(Clone, Debug, PartialEq)]
pub struct QBlock {
    pub ln1: LayerNorm,
    pub heads: Vec<QuantumHeadParams>,
    pub w_o: Linear,
    pub ln2: LayerNorm,
    pub mlp: QMLPParams,
}

#[derive(Clone, Debug)]
pub struct QBlockCache {
    ln1: LayerNormCache,
    attn: MultiHeadCache,
    ln2: LayerNormCache,
    mlp: QmlpCache,
}

impl QBlock {
    pub fn init<R: Rng + ?Sized>(cfg: &QMViTConfig, rng: &mut R) -> Self {
        let e = cfg.embed_dim;
        QBlock {
            ln1: LayerNorm::new(e),
            heads: (0..cfg.n_heads)
                .map(|_| QuantumHeadParams::init(cfg.circuit(), cfg.rescale, rng))
                .collect(),
            w_o: Linear::init(e, e, rng),
            ln2: LayerNorm::new(e),
            mlp: QMLPParams {
                rescale: cfg.rescale,
                ..QMLPParams::init(e, cfg.circuit(), rng)
            },
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, QBlockCache)> {
        let (n1, ln1) = self.ln1.forward(x)?;
        let (a, attn) = multi_head_forward(&n1, &self.heads, &self.w_o)?;
        let h = residual(x, &a)?;
        let (n2, ln2) = self.ln2.forward(&h)?;
        let (m, mlp) = self.mlp.forward(&n2)?;
        let y = residual(&h, &m)?;
        Ok((y, QBlockCache { ln1, attn, ln2, mlp }))
    }

    /// Input gradient and the parameter gradient in block form.
    pub fn backward(&self, cache: &QBlockCache, dy: &Tensor) -> Result<(Tensor, QBlock)> {
        let mg = self.mlp.backward(&cache.mlp, dy)?;
        let n2g = self.ln2.backward(&cache.ln2, &mg.dx)?;
        let dh = dy.add(&n2g.dx)?;
        let ag = multi_head_backward(&self.heads, &self.w_o, &cache.attn, &dh)?;
        let n1g = self.ln1.backward(&cache.ln1, &ag.dx)?;
        let dx = dh.add(&n1g.dx)?;

        let heads = self
            .heads
            .iter()
            .zip(ag.heads)
            .map(|(h, g)| QuantumHeadParams {
                theta_q: ParamVector(g.theta_q),
                theta_k: ParamVector(g.theta_k),
                theta_v: ParamVector(g.theta_v),
                ..h.clone()
            })
            .collect();
        let grad = QBlock {
            ln1: LayerNorm {
                gamma: n1g.dgamma,
                beta: n1g.dbeta,
                eps: self.ln1.eps,
            },
            heads,
            w_o: Linear {
                weight: ag.w_o.dweight,
                bias: ag.w_o.dbias,
            },
            ln2: LayerNorm {
                gamma: n2g.dgamma,
                beta: n2g.dbeta,
                eps: self.ln2.eps,
            },
            mlp: QMLPParams {
                linear_in: Linear {
                    weight: mg.linear_in.dweight,
                    bias: mg.linear_in.dbias,
                },
                theta: ParamVector(mg.theta),
                linear_out: Linear {
                    weight: mg.linear_out.dweight,
                    bias: mg.linear_out.dbias,
                },
                ..self.mlp.clone()
            },
        };
        Ok((dx, grad))
    }

    fn params_mut(&mut self, prefix: &str) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        out.extend(norm_params(&format!("{prefix}.ln1"), &mut self.ln1));
        for (h, head) in self.heads.iter_mut().enumerate() {
            out.push(ParamRef::vector(format!("{prefix}.heads.{h}.theta_q"), &mut head.theta_q.0));
            out.push(ParamRef::vector(format!("{prefix}.heads.{h}.theta_k"), &mut head.theta_k.0));
            out.push(ParamRef::vector(format!("{prefix}.heads.{h}.theta_v"), &mut head.theta_v.0));
        }
        out.extend(linear_params(&format!("{prefix}.w_o"), &mut self.w_o));
        out.extend(norm_params(&format!("{prefix}.ln2"), &mut self.ln2));
        out.extend(linear_params(&format!("{prefix}.mlp.linear_in"), &mut self.mlp.linear_in));
        out.push(ParamRef::vector(format!("{prefix}.mlp.theta"), &mut self.mlp.theta.0));
        out.extend(linear_params(&format!("{prefix}.mlp.linear_out"), &mut self.mlp.linear_out));
        out
    }
}

/// Patch embedding, quantum transformer blocks, class-token readout.
#[derive(Clone, Debug, PartialEq)]
pub struct QMViT {
    pub cfg: QMViTConfig,
    pub embed: Embedding,
    pub blocks: Vec<QBlock>,
    pub readout: Readout,
}

#[derive(Clone, Debug)]
pub struct QMViTCache {
    image: Tensor,
    blocks: Vec<QBlockCache>,
    readout: ReadoutCache,
}

impl QMViT {
    pub fn init<R: Rng + ?Sized>(cfg: &QMViTConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(QMViT {
            embed: Embedding::init(cfg.image_size, cfg.patch_size, cfg.channels, cfg.embed_dim, rng),
            blocks: (0..cfg.n_blocks).map(|_| QBlock::init(cfg, rng)).collect(),
            readout: Readout::init(cfg.embed_dim, cfg.n_classes, rng),
            cfg: cfg.clone(),
        })
    }

    /// Token matrix entering the first block.
    pub fn tokens(&self, image: &Tensor) -> Result<Tensor> {
        self.check_input(image)?;
        self.embed.forward(image)
    }
}

impl Params for QMViT {
    fn params_mut(&mut self) -> Vec<ParamRef<'_>> {
        let mut out = self.embed.params_mut();
        for (b, block) in self.blocks.iter_mut().enumerate() {
            out.extend(block.params_mut(&format!("blocks.{b}")));
        }
        out.extend(self.readout.params_mut());
        out
    }
}

impl Classifier for QMViT {
    type Cache = QMViTCache;

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn input_shape(&self) -> [usize; 3] {
        [self.cfg.image_size, self.cfg.image_size, self.cfg.channels]
    }

    fn forward_train(&self, image: &Tensor) -> Result<(Vec<f64>, QMViTCache)> {
        let mut x = self.tokens(image)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(&x)?;
            caches.push(c);
            x = y;
        }
        let (logits, readout) = self.readout.forward(&x)?;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok((
            logits,
            QMViTCache {
                image: image.clone(),
                blocks: caches,
                readout,
            },
        ))
    }

    fn backward(&self, cache: &QMViTCache, dlogits: &[f64]) -> Result<Vec<f64>> {
        let (mut dx, readout) = self.readout.backward(&cache.readout, dlogits, self.cfg.seq_len())?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (block, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let (d, g) = block.backward(c, &dx)?;
            blocks.push(g);
            dx = d;
        }
        blocks.reverse();
        let grad = QMViT {
            cfg: self.cfg.clone(),
            embed: self.embed.backward(&cache.image, &dx)?,
            blocks,
            readout,
        };
        Ok(grad.flatten())
    }
}

/// Logits for a batch of preprocessed `H x W x C` images, one row per image.
pub fn qmvit_forward(batch: &[Tensor], model: &QMViT) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(batch.len());
    for image in batch {
        rows.push(model.logits(image)?);
    }
    if rows.is_empty() {
        return Ok(Tensor::zeros(&[0, model.cfg.n_classes]));
    }
    Tensor::from_rows(&rows)
}
