use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Learnable affine layer normalisation over the last axis of a 2-D input.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNormGrad {
    pub dx: Tensor,
    pub dgamma: Tensor,
    pub dbeta: Tensor,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        LayerNorm {
            gamma: Tensor::filled(&[d], 1.0),
            beta: Tensor::zeros(&[d]),
            eps: LAYER_NORM_EPS,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LayerNormCache)> {
        let (r, d) = x.expect_2d("layer norm input")?;
        if self.gamma.shape() != [d] || self.beta.shape() != [d] {
            return Err(Error::Dimension(format!(
                "layer norm over {d} features with gamma {:?}",
                self.gamma.shape()
            )));
        }
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(r);
        for row in xhat.data_mut().chunks_exact_mut(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std.push(is);
        }
        let mut y = xhat.clone();
        for row in y.data_mut().chunks_exact_mut(d) {
            for ((v, g), b) in row.iter_mut().zip(self.gamma.data()).zip(self.beta.data()) {
                *v = *v * g + b;
            }
        }
        Ok((y, LayerNormCache { xhat, inv_std }))
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Tensor) -> Result<LayerNormGrad> {
        let (_, d) = dy.expect_2d("layer norm gradient")?;
        if dy.shape() != cache.xhat.shape() {
            return Err(Error::Dimension("layer norm gradient shape".into()));
        }
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        let mut dx = vec![0.0; dy.len()];
        let n = d as f64;
        for (r, (drow, xrow)) in dy
            .data()
            .chunks_exact(d)
            .zip(cache.xhat.data().chunks_exact(d))
            .enumerate()
        {
            let mut dxhat = vec![0.0; d];
            for c in 0..d {
                dgamma[c] += drow[c] * xrow[c];
                dbeta[c] += drow[c];
                dxhat[c] = drow[c] * self.gamma.data()[c];
            }
            let mean_d = dxhat.iter().sum::<f64>() / n;
            let mean_dx = dxhat.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>() / n;
            for c in 0..d {
                dx[r * d + c] = cache.inv_std[r] * (dxhat[c] - mean_d - xrow[c] * mean_dx);
            }
        }
        Ok(LayerNormGrad {
            dx: Tensor::new(dy.shape().to_vec(), dx)?,
            dgamma: Tensor::new(vec![d], dgamma)?,
            dbeta: Tensor::new(vec![d], dbeta)?,
        })
    }
}

/// `(x - mean) / sqrt(var + eps) * gamma + beta` on a single feature vector.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    let ln = LayerNorm {
        gamma: Tensor::new(vec![gamma.len()], gamma.to_vec())?,
        beta: Tensor::new(vec![beta.len()], beta.to_vec())?,
        eps,
    };
    let t = Tensor::new(vec![1, x.len()], x.to_vec())?;
    Ok(ln.forward(&t)?.0.into_data())
}
