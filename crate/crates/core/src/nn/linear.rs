use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::activation::{gelu, gelu_grad};
use crate::nn::Tensor;

/// Affine map `y = x W + b` applied to every row of `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `in x out`
    pub weight: Tensor,
    /// `out`
    pub bias: Tensor,
}

/// Gradients of a [`Linear`] layer plus the input gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrad {
    pub dx: Tensor,
    pub dweight: Tensor,
    pub dbias: Tensor,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        let (_, out) = weight.expect_2d("linear weight")?;
        if bias.shape() != [out] {
            return Err(Error::Dimension(format!(
                "bias {:?} for {out} outputs",
                bias.shape()
            )));
        }
        Ok(Linear { weight, bias })
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[d_in, d_out]),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn identity(d: usize) -> Self {
        Linear {
            weight: Tensor::identity(d),
            bias: Tensor::zeros(&[d]),
        }
    }

    /// Uniform in `[-1/sqrt(in), 1/sqrt(in)]`, zero bias.
    pub fn init<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        Linear {
            weight: Tensor::uniform(&[d_in, d_out], bound, rng),
            bias: Tensor::zeros(&[d_out]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = x.matmul(&self.weight)?;
        let out = self.d_out();
        for row in y.data_mut().chunks_exact_mut(out) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        Ok(y)
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = Tensor::new(vec![1, x.len()], x.to_vec())?;
        Ok(self.forward(&t)?.into_data())
    }

    pub fn backward(&self, x: &Tensor, dy: &Tensor) -> Result<LinearGrad> {
        Ok(LinearGrad {
            dx: dy.matmul_t(&self.weight)?,
            dweight: x.t_matmul(dy)?,
            dbias: dy.sum_rows()?,
        })
    }
}

/// Position-wise feed-forward block `GELU(x W1 + b1) W2 + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct FFNParams {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Clone, Debug)]
pub struct FfnCache {
    pre: Tensor,
    act: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FfnGrad {
    pub dx: Tensor,
    pub fc1: LinearGrad,
    pub fc2: LinearGrad,
}

impl FFNParams {
    pub fn init<R: Rng + ?Sized>(d: usize, hidden: usize, rng: &mut R) -> Self {
        FFNParams {
            fc1: Linear::init(d, hidden, rng),
            fc2: Linear::init(hidden, d, rng),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, FfnCache)> {
        let pre = self.fc1.forward(x)?;
        let act = pre.map(gelu);
        let y = self.fc2.forward(&act)?;
        Ok((y, FfnCache { pre, act }))
    }

    pub fn backward(&self, x: &Tensor, cache: &FfnCache, dy: &Tensor) -> Result<FfnGrad> {
        let fc2 = self.fc2.backward(&cache.act, dy)?;
        let mut dpre = fc2.dx.clone();
        for (d, &p) in dpre.data_mut().iter_mut().zip(cache.pre.data()) {
            *d *= gelu_grad(p);
        }
        let fc1 = self.fc1.backward(x, &dpre)?;
        Ok(FfnGrad {
            dx: fc1.dx.clone(),
            fc1,
            fc2,
        })
    }
}

pub fn ffn(x: &Tensor, params: &FFNParams) -> Result<Tensor> {
    Ok(params.forward(x)?.0)
}
