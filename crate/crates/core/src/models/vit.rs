use rand::Rng;

use crate::error::{Error, Result};
use crate::models::common::{linear_params, norm_params, residual, Embedding, Readout, ReadoutCache};
use crate::models::{Classifier, ParamRef, Params};
use crate::nn::attention::{classical_attention, classical_attention_backward, AttentionCache};
use crate::nn::linear::{FFNParams, FfnCache, Linear};
use crate::nn::norm::{LayerNorm, LayerNormCache};
use crate::nn::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub mlp_hidden: usize,
    pub n_classes: usize,
}

impl ViTConfig {
    /// Same token geometry as the quantum presets, classical sublayers.
    pub fn small(n_classes: usize) -> Self {
        ViTConfig {
            image_size: 32,
            patch_size: 8,
            channels: 3,
            embed_dim: 16,
            n_heads: 4,
            n_blocks: 1,
            mlp_hidden: 32,
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || self.embed_dim % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "embed_dim {} not divisible into {} heads",
                self.embed_dim, self.n_heads
            )));
        }
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "image size {} not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.n_classes == 0 || self.channels == 0 || self.mlp_hidden == 0 {
            return Err(Error::Config("empty ViT dimension".into()));
        }
        Ok(())
    }

    pub fn seq_len(&self) -> usize {
        (self.image_size / self.patch_size).pow(2) + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub ln1: LayerNorm,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub w_o: Linear,
    pub ln2: LayerNorm,
    pub ffn: FFNParams,
}

#[derive(Clone, Debug)]
pub struct BlockCache {
    ln1: LayerNormCache,
    n1: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: Vec<AttentionCache>,
    concat: Tensor,
    ln2: LayerNormCache,
    n2: Tensor,
    ffn: FfnCache,
}

impl Block {
    fn init<R: Rng + ?Sized>(cfg: &ViTConfig, rng: &mut R) -> Self {
        let e = cfg.embed_dim;
        Block {
            ln1: LayerNorm::new(e),
            wq: Linear::init(e, e, rng),
            wk: Linear::init(e, e, rng),
            wv: Linear::init(e, e, rng),
            w_o: Linear::init(e, e, rng),
            ln2: LayerNorm::new(e),
            ffn: FFNParams::init(e, cfg.mlp_hidden, rng),
        }
    }

    fn forward(&self, x: &Tensor, n_heads: usize) -> Result<(Tensor, BlockCache)> {
        let (n1, ln1) = self.ln1.forward(x)?;
        let q = self.wq.forward(&n1)?;
        let k = self.wk.forward(&n1)?;
        let v = self.wv.forward(&n1)?;
        let dh = x.cols() / n_heads;
        let mut concat = Tensor::zeros(x.shape());
        let mut heads = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let (o, c) = classical_attention(
                &q.columns(h * dh, dh)?,
                &k.columns(h * dh, dh)?,
                &v.columns(h * dh, dh)?,
                dh,
            )?;
            concat.set_columns(h * dh, &o)?;
            heads.push(c);
        }
        let hres = residual(x, &self.w_o.forward(&concat)?)?;
        let (n2, ln2) = self.ln2.forward(&hres)?;
        let (m, ffn) = self.ffn.forward(&n2)?;
        let y = residual(&hres, &m)?;
        Ok((
            y,
            BlockCache {
                ln1,
                n1,
                q,
                k,
                v,
                heads,
                concat,
                ln2,
                n2,
                ffn,
            },
        ))
    }

    fn backward(&self, c: &BlockCache, dy: &Tensor) -> Result<(Tensor, Block)> {
        let fg = self.ffn.backward(&c.n2, &c.ffn, dy)?;
        let n2g = self.ln2.backward(&c.ln2, &fg.dx)?;
        let dh_res = dy.add(&n2g.dx)?;
        let og = self.w_o.backward(&c.concat, &dh_res)?;
        let n_heads = c.heads.len();
        let dh = dy.cols() / n_heads;
        let mut dq = Tensor::zeros(c.q.shape());
        let mut dk = Tensor::zeros(c.k.shape());
        let mut dv = Tensor::zeros(c.v.shape());
        for (h, hc) in c.heads.iter().enumerate() {
            let g = classical_attention_backward(
                &c.q.columns(h * dh, dh)?,
                &c.k.columns(h * dh, dh)?,
                &c.v.columns(h * dh, dh)?,
                hc,
                &og.dx.columns(h * dh, dh)?,
            )?;
            dq.set_columns(h * dh, &g.dq)?;
            dk.set_columns(h * dh, &g.dk)?;
            dv.set_columns(h * dh, &g.dv)?;
        }
        let qg = self.wq.backward(&c.n1, &dq)?;
        let kg = self.wk.backward(&c.n1, &dk)?;
        let vg = self.wv.backward(&c.n1, &dv)?;
        let mut dn1 = qg.dx.clone();
        dn1.add_assign(&kg.dx)?;
        dn1.add_assign(&vg.dx)?;
        let n1g = self.ln1.backward(&c.ln1, &dn1)?;
        let dx = dh_res.add(&n1g.dx)?;
        let lin = |g: crate::nn::linear::LinearGrad| Linear {
            weight: g.dweight,
            bias: g.dbias,
        };
        let grad = Block {
            ln1: LayerNorm {
                gamma: n1g.dgamma,
                beta: n1g.dbeta,
                eps: self.ln1.eps,
            },
            wq: lin(qg),
            wk: lin(kg),
            wv: lin(vg),
            w_o: lin(og),
            ln2: LayerNorm {
                gamma: n2g.dgamma,
                beta: n2g.dbeta,
                eps: self.ln2.eps,
            },
            ffn: FFNParams {
                fc1: lin(fg.fc1),
                fc2: lin(fg.fc2),
            },
        };
        Ok((dx, grad))
    }

    fn params_mut(&mut self, prefix: &str) -> Vec<ParamRef<'_>> {
        let mut out = Vec::new();
        out.extend(norm_params(&format!("{prefix}.ln1"), &mut self.ln1));
        out.extend(linear_params(&format!("{prefix}.wq"), &mut self.wq));
        out.extend(linear_params(&format!("{prefix}.wk"), &mut self.wk));
        out.extend(linear_params(&format!("{prefix}.wv"), &mut self.wv));
        out.extend(linear_params(&format!("{prefix}.w_o"), &mut self.w_o));
        out.extend(norm_params(&format!("{prefix}.ln2"), &mut self.ln2));
        out.extend(linear_params(&format!("{prefix}.ffn.fc1"), &mut self.ffn.fc1));
        out.extend(linear_params(&format!("{prefix}.ffn.fc2"), &mut self.ffn.fc2));
        out
    }
}

/// Classical vision transformer baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct ViT {
    pub cfg: ViTConfig,
    pub embed: Embedding,
    pub blocks: Vec<Block>,
    pub readout: Readout,
}

#[derive(Clone, Debug)]
pub struct ViTCache {
    image: Tensor,
    blocks: Vec<BlockCache>,
    readout: ReadoutCache,
}

impl ViT {
    pub fn init<R: Rng + ?Sized>(cfg: &ViTConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(ViT {
            embed: Embedding::init(cfg.image_size, cfg.patch_size, cfg.channels, cfg.embed_dim, rng),
            blocks: (0..cfg.n_blocks).map(|_| Block::init(cfg, rng)).collect(),
            readout: Readout::init(cfg.embed_dim, cfg.n_classes, rng),
            cfg: cfg.clone(),
        })
    }
}

impl Params for ViT {
    fn params_mut(&mut self) -> Vec<ParamRef<'_>> {
        let mut out = self.embed.params_mut();
        for (b, block) in self.blocks.iter_mut().enumerate() {
            out.extend(block.params_mut(&format!("blocks.{b}")));
        }
        out.extend(self.readout.params_mut());
        out
    }
}

impl Classifier for ViT {
    type Cache = ViTCache;

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn input_shape(&self) -> [usize; 3] {
        [self.cfg.image_size, self.cfg.image_size, self.cfg.channels]
    }

    fn forward_train(&self, image: &Tensor) -> Result<(Vec<f64>, ViTCache)> {
        self.check_input(image)?;
        let mut x = self.embed.forward(image)?;
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(&x, self.cfg.n_heads)?;
            caches.push(c);
            x = y;
        }
        let (logits, readout) = self.readout.forward(&x)?;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        Ok((
            logits,
            ViTCache {
                image: image.clone(),
                blocks: caches,
                readout,
            },
        ))
    }

    fn backward(&self, cache: &ViTCache, dlogits: &[f64]) -> Result<Vec<f64>> {
        let (mut dx, readout) = self.readout.backward(&cache.readout, dlogits, self.cfg.seq_len())?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for (block, c) in self.blocks.iter().zip(&cache.blocks).rev() {
            let (d, g) = block.backward(c, &dx)?;
            blocks.push(g);
            dx = d;
        }
        blocks.reverse();
        let grad = ViT {
            cfg: self.cfg.clone(),
            embed: self.embed.backward(&cache.image, &dx)?,
            blocks,
            readout,
        };
        Ok(grad.flatten())
    }
}
