use rand::Rng;

use crate::error::{Error, Result};
use crate::models::common::linear_params;
use crate::models::{Classifier, ParamRef, Params};
use crate::nn::conv::{pool, PoolSpec};
use crate::nn::linear::Linear;
use crate::nn::Tensor;
use crate::quanvolution::{pixels_to_angles, quanv_layer, quanv_theta_grad, QuanvSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct QNNConfig {
    pub image_size: usize,
    pub channels: usize,
    pub patch: usize,
    pub stride: usize,
    pub n_layers: usize,
    pub n_classes: usize,
    pub trainable_circuit: bool,
}

impl QNNConfig {
    pub fn small(n_classes: usize) -> Self {
        QNNConfig {
            image_size: 32,
            channels: 3,
            patch: 2,
            stride: 2,
            n_layers: 1,
            n_classes,
            trainable_circuit: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.channels == 0 || self.patch > self.image_size {
            return Err(Error::Config("invalid QNN dimensions".into()));
        }
        Ok(())
    }
}

/// Quanvolution on the channel-mean plane, global average pooling, linear head.
///
/// Expects raw `[0, 1]` pixels, which are mapped onto `[0, pi]` angles.
#[derive(Clone, Debug, PartialEq)]
pub struct QNN {
    pub cfg: QNNConfig,
    pub quanv: QuanvSpec,
    pub head: Linear,
}

#[derive(Clone, Debug)]
pub struct QNNCache {
    angles: Tensor,
    map_cells: usize,
    pooled: Tensor,
}

impl QNN {
    pub fn init<R: Rng + ?Sized>(cfg: &QNNConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let mut quanv = QuanvSpec::random(cfg.patch, cfg.stride, cfg.n_layers, rng)?;
        quanv.trainable = cfg.trainable_circuit;
        let head = Linear::init(quanv.channels_out(), cfg.n_classes, rng);
        Ok(QNN {
            cfg: cfg.clone(),
            quanv,
            head,
        })
    }
}

/// Quanvolution, pooling and head for a batch of `[0, 1]` images.
pub fn qnn_baseline_forward(batch: &[Tensor], spec: &QuanvSpec, head: &Linear) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(batch.len());
    for image in batch {
        let map = quanv_layer(&pixels_to_angles(image), spec)?;
        let pooled = pool(&map, &PoolSpec::global_average())?;
        rows.push(head.forward_vec(pooled.data())?);
    }
    if rows.is_empty() {
        return Ok(Tensor::zeros(&[0, head.d_out()]));
    }
    Tensor::from_rows(&rows)
}

impl Params for QNN {
    fn params_mut(&mut self) -> Vec<ParamRef<'_>> {
        let mut out = vec![ParamRef::vector("quanv.theta", &mut self.quanv.theta.0)];
        out.extend(linear_params("head", &mut self.head));
        out
    }
}

impl Classifier for QNN {
    type Cache = QNNCache;

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn input_shape(&self) -> [usize; 3] {
        [self.cfg.image_size, self.cfg.image_size, self.cfg.channels]
    }

    fn forward_train(&self, image: &Tensor) -> Result<(Vec<f64>, QNNCache)> {
        self.check_input(image)?;
        let angles = pixels_to_angles(image);
        let map = quanv_layer(&angles, &self.quanv)?;
        let pooled = pool(&map, &PoolSpec::global_average())?;
        let logits = self.head.forward_vec(pooled.data())?;
        let c = self.quanv.channels_out();
        Ok((
            logits,
            QNNCache {
                angles,
                map_cells: map.len() / c,
                pooled: Tensor::new(vec![1, c], pooled.into_data())?,
            },
        ))
    }

    fn backward(&self, cache: &QNNCache, dlogits: &[f64]) -> Result<Vec<f64>> {
        let dy = Tensor::new(vec![1, dlogits.len()], dlogits.to_vec())?;
        let hg = self.head.backward(&cache.pooled, &dy)?;
        let theta = if self.quanv.trainable {
            let c = self.quanv.channels_out();
            let per_cell: Vec<f64> = hg.dx.data().iter().map(|g| g / cache.map_cells as f64).collect();
            let dmap = Tensor::new(
                vec![cache.map_cells, c],
                per_cell.iter().copied().cycle().take(cache.map_cells * c).collect(),
            )?;
            quanv_theta_grad(&cache.angles, &self.quanv, &dmap)?
        } else {
            vec![0.0; self.quanv.theta.len()]
        };
        let mut grad = self.clone();
        grad.quanv.theta.0 = theta;
        grad.head = Linear {
            weight: hg.dweight,
            bias: hg.dbias,
        };
        Ok(grad.flatten())
    }
}
