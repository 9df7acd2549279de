//! 2-D convolution and pooling over `H x W x C` feature maps.

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Filter `F_h x F_w x C_in x C_out`, one bias per output channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub filter: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

impl ConvSpec {
    pub fn dims(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.filter.shape() {
            [fh, fw, cin, cout] if fh > 0 && fw > 0 && cin > 0 && cout > 0 => {
                if self.bias.shape() != [cout] {
                    return Err(Error::Dimension(format!(
                        "bias shape {:?} for {cout} output channels",
                        self.bias.shape()
                    )));
                }
                if self.stride == 0 {
                    return Err(Error::Config("convolution stride must be positive".into()));
                }
                Ok((fh, fw, cin, cout))
            }
            ref s => Err(Error::Dimension(format!("filter shape {s:?}"))),
        }
    }
}

fn hwc(x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(Error::Dimension(format!("expected H x W x C, got {s:?}"))),
    }
}

fn out_size(input: usize, window: usize, stride: usize) -> Result<usize> {
    if window > input {
        return Err(Error::Dimension(format!(
            "window {window} larger than input {input}"
        )));
    }
    Ok((input - window) / stride + 1)
}

/// `Z[i, j, o] = sum_{m, n, c} X[i*s + m, j*s + n, c] f[m, n, c, o] + b[o]`.
pub fn conv2d(x: &Tensor, spec: &ConvSpec) -> Result<Tensor> {
    let (fh, fw, cin, cout) = spec.dims()?;
    let (h, w, c) = hwc(x)?;
    if c != cin {
        return Err(Error::Dimension(format!(
            "input has {c} channels, filter expects {cin}"
        )));
    }
    let s = spec.stride;
    let (oh, ow) = (out_size(h, fh, s)?, out_size(w, fw, s)?);
    let xd = x.data();
    let fd = spec.filter.data();
    let mut out = vec![0.0; oh * ow * cout];
    for i in 0..oh {
        for j in 0..ow {
            let o = &mut out[(i * ow + j) * cout..(i * ow + j + 1) * cout];
            o.copy_from_slice(spec.bias.data());
            for m in 0..fh {
                for n in 0..fw {
                    let px = &xd[((i * s + m) * w + j * s + n) * cin..][..cin];
                    for (ci, &xv) in px.iter().enumerate() {
                        let frow = &fd[((m * fw + n) * cin + ci) * cout..][..cout];
                        for (ov, &fv) in o.iter_mut().zip(frow) {
                            *ov += xv * fv;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, cout], out)
}

/// Gradients of [`conv2d`] with respect to input, filter and bias.
pub fn conv2d_backward(
    x: &Tensor,
    spec: &ConvSpec,
    dz: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (fh, fw, cin, cout) = spec.dims()?;
    let (h, w, _) = hwc(x)?;
    let s = spec.stride;
    let (oh, ow) = (out_size(h, fh, s)?, out_size(w, fw, s)?);
    if dz.shape() != [oh, ow, cout] {
        return Err(Error::Dimension(format!(
            "upstream gradient {:?}, expected {:?}",
            dz.shape(),
            [oh, ow, cout]
        )));
    }
    let xd = x.data();
    let fd = spec.filter.data();
    let gd = dz.data();
    let mut dx = vec![0.0; x.len()];
    let mut df = vec![0.0; spec.filter.len()];
    let mut db = vec![0.0; cout];
    for i in 0..oh {
        for j in 0..ow {
            let g = &gd[(i * ow + j) * cout..][..cout];
            for (b, gv) in db.iter_mut().zip(g) {
                *b += gv;
            }
            for m in 0..fh {
                for n in 0..fw {
                    let base = ((i * s + m) * w + j * s + n) * cin;
                    for ci in 0..cin {
                        let fidx = ((m * fw + n) * cin + ci) * cout;
                        let xv = xd[base + ci];
                        let mut acc = 0.0;
                        for o in 0..cout {
                            df[fidx + o] += xv * g[o];
                            acc += fd[fidx + o] * g[o];
                        }
                        dx[base + ci] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(spec.filter.shape().to_vec(), df)?,
        Tensor::new(vec![cout], db)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Average,
    /// Mean over the whole map per channel; window and stride are ignored.
    GlobalAverage,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub window: (usize, usize),
    pub stride: usize,
}

impl PoolSpec {
    pub fn global_average() -> Self {
        PoolSpec {
            kind: PoolKind::GlobalAverage,
            window: (1, 1),
            stride: 1,
        }
    }
}

/// Pooled map; `GlobalAverage` yields shape `1 x 1 x C`.
pub fn pool(x: &Tensor, spec: &PoolSpec) -> Result<Tensor> {
    let (h, w, c) = hwc(x)?;
    let xd = x.data();
    if spec.kind == PoolKind::GlobalAverage {
        if h == 0 || w == 0 {
            return Err(Error::Dimension("global pooling of an empty map".into()));
        }
        let mut out = vec![0.0; c];
        for px in xd.chunks_exact(c) {
            for (o, v) in out.iter_mut().zip(px) {
                *o += v;
            }
        }
        let n = (h * w) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        return Tensor::new(vec![1, 1, c], out);
    }
    let (k, l) = spec.window;
    if k == 0 || l == 0 || spec.stride == 0 {
        return Err(Error::Config("pool window and stride must be positive".into()));
    }
    let s = spec.stride;
    let (oh, ow) = (out_size(h, k, s)?, out_size(w, l, s)?);
    let mut out = vec![0.0; oh * ow * c];
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let vals = (0..k).flat_map(|m| (0..l).map(move |n| (m, n)));
                let at = |(m, n): (usize, usize)| xd[((i * s + m) * w + j * s + n) * c + ch];
                out[(i * ow + j) * c + ch] = match spec.kind {
                    PoolKind::Max => vals.map(at).fold(f64::NEG_INFINITY, f64::max),
                    PoolKind::Average => vals.map(at).sum::<f64>() / (k * l) as f64,
                    PoolKind::L2 => vals.map(|p| at(p).powi(2)).sum::<f64>().sqrt(),
                    PoolKind::GlobalAverage => unreachable!(),
                };
            }
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

/// Input gradient of [`pool`]. Max-pool routes to the first maximal element in
/// row-major window order; L2 pooling of an all-zero window passes zero.
pub fn pool_backward(x: &Tensor, spec: &PoolSpec, dy: &Tensor) -> Result<Tensor> {
    let (h, w, c) = hwc(x)?;
    let y = pool(x, spec)?;
    if dy.shape() != y.shape() {
        return Err(Error::Dimension(format!(
            "upstream gradient {:?}, expected {:?}",
            dy.shape(),
            y.shape()
        )));
    }
    let xd = x.data();
    let gd = dy.data();
    let mut dx = vec![0.0; x.len()];
    if spec.kind == PoolKind::GlobalAverage {
        let n = (h * w) as f64;
        for d in dx.chunks_exact_mut(c) {
            for (dv, g) in d.iter_mut().zip(gd) {
                *dv = g / n;
            }
        }
        return Tensor::new(x.shape().to_vec(), dx);
    }
    let (k, l) = spec.window;
    let s = spec.stride;
    let (oh, ow) = (y.shape()[0], y.shape()[1]);
    for i in 0..oh {
        for j in 0..ow {
            for ch in 0..c {
                let g = gd[(i * ow + j) * c + ch];
                let yv = y.data()[(i * ow + j) * c + ch];
                let idx = |m: usize, n: usize| ((i * s + m) * w + j * s + n) * c + ch;
                match spec.kind {
                    PoolKind::Max => {
                        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
                        for m in 0..k {
                            for n in 0..l {
                                if xd[idx(m, n)] > best {
                                    best = xd[idx(m, n)];
                                    arg = idx(m, n);
                                }
                            }
                        }
                        dx[arg] += g;
                    }
                    PoolKind::Average => {
                        let share = g / (k * l) as f64;
                        for m in 0..k {
                            for n in 0..l {
                                dx[idx(m, n)] += share;
                            }
                        }
                    }
                    PoolKind::L2 => {
                        if yv > 0.0 {
                            for m in 0..k {
                                for n in 0..l {
                                    dx[idx(m, n)] += g * xd[idx(m, n)] / yv;
                                }
                            }
                        }
                    }
                    PoolKind::GlobalAverage => unreachable!(),
                }
            }
        }
    }
    Tensor::new(x.shape().to_vec(), dx)
}
