//! QMViT forward pass and loss in double-double, written from the model's
//! definition rather than the library's kernels. Finite differences of this
//! loss carry no meaningful rounding noise at `h = 1e-5`.

use qmvit::models::{Params, QMViT};
use qmvit::nn::linear::Linear;
use qmvit::nn::norm::LayerNorm;
use qmvit::nn::Tensor;
use qmvit::encoding::{Axis, RescaleMode};
use qmvit::pqc::{EncodedAnsatz, ParamVector};

use super::dd::{run, DGate, DD};
use super::grad::{rel_err, H};

type Mat = Vec<Vec<DD>>;

fn dd(v: &[f64]) -> Vec<DD> {
    v.iter().map(|&x| DD::from(x)).collect()
}

fn linear(x: &Mat, l: &Linear) -> Mat {
    let (din, dout) = (l.weight.shape()[0], l.weight.shape()[1]);
    let w = l.weight.data();
    x.iter()
        .map(|row| {
            assert_eq!(row.len(), din);
            (0..dout)
                .map(|j| {
                    let mut acc = DD::from(l.bias.data()[j]);
                    for (i, &xi) in row.iter().enumerate() {
                        acc = acc + xi * DD::from(w[i * dout + j]);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn layer_norm(x: &Mat, ln: &LayerNorm) -> Mat {
    x.iter()
        .map(|row| {
            let d = row.len() as f64;
            let mean = row.iter().fold(DD::ZERO, |a, &v| a + v).div_f64(d);
            let var = row.iter().fold(DD::ZERO, |a, &v| a + (v - mean) * (v - mean)).div_f64(d);
            let inv = DD::ONE / (var + DD::from(ln.eps)).sqrt();
            row.iter()
                .enumerate()
                .map(|(j, &v)| (v - mean) * inv * DD::from(ln.gamma.data()[j]) + DD::from(ln.beta.data()[j]))
                .collect()
        })
        .collect()
}

fn rescale(v: DD, mode: RescaleMode) -> DD {
    match mode {
        RescaleMode::Identity => v,
        RescaleMode::PiTanh => DD::PI * v.tanh(),
    }
}

/// Loader column, optional Hadamard column, then per layer (re-upload,)
/// `RX(theta)` on every qubit and the entangler's CNOTs.
fn circuit_z(c: &EncodedAnsatz, x: &[DD], theta: &ParamVector) -> Vec<DD> {
    let n = c.n_qubits();
    assert!(c.loader.axes.iter().all(|&a| a == Axis::X), "oracle covers RX loaders only");
    let had = c.loader.prepend_hadamard;
    let load = |j: usize| DGate::Rx(j, if had { -x[j] } else { x[j] });
    let mut g = Vec::new();
    for j in 0..n {
        if had {
            g.push(DGate::H(j));
        }
        g.push(load(j));
    }
    if c.ansatz.initial_hadamard {
        g.extend((0..n).map(DGate::H));
    }
    let th = theta.values();
    for l in 0..c.ansatz.n_layers {
        if c.reupload && l > 0 {
            g.extend((0..n).map(load));
        }
        g.extend((0..n).map(|q| DGate::Rx(q, DD::from(th[l * n + q]))));
        for (control, target) in c.ansatz.entangler.pairs(n) {
            g.push(DGate::Cnot { control, target });
        }
    }
    let s = run(n, &g);
    (0..n).map(|q| s.expectation_z(q)).collect()
}

fn softmax(row: &[DD]) -> Vec<DD> {
    let max = row.iter().map(|v| v.hi).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<DD> = row.iter().map(|&v| (v - DD::from(max)).exp()).collect();
    let sum = e.iter().fold(DD::ZERO, |a, &v| a + v);
    e.into_iter().map(|v| v / sum).collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(&x, &y)| x + y).collect())
        .collect()
}

/// Logits of one image.
pub fn logits(model: &QMViT, image: &Tensor) -> Vec<DD> {
    let cfg = &model.cfg;
    let (p, ch, e) = (cfg.patch_size, cfg.channels, cfg.embed_dim);
    let side = cfg.image_size / p;
    let img = image.data();
    let filt = model.embed.patch.filter.data();
    let w = cfg.image_size;

    let mut x: Mat = (0..cfg.seq_len()).map(|t| dd(model.embed.pos.row(t))).collect();
    for (v, &c) in x[0].iter_mut().zip(model.embed.cls.data()) {
        *v = *v + DD::from(c);
    }
    for pi in 0..side {
        for pj in 0..side {
            let tok = &mut x[1 + pi * side + pj];
            for (o, t) in tok.iter_mut().enumerate() {
                let mut acc = DD::from(model.embed.patch.bias.data()[o]);
                for m in 0..p {
                    for n in 0..p {
                        for c in 0..ch {
                            let xv = img[((pi * p + m) * w + pj * p + n) * ch + c];
                            let fv = filt[((m * p + n) * ch + c) * e + o];
                            acc = acc + DD::from(xv) * DD::from(fv);
                        }
                    }
                }
                *t = *t + acc;
            }
        }
    }

    for block in &model.blocks {
        let n1 = layer_norm(&x, &block.ln1);
        let seq = n1.len();
        let mut concat: Mat = vec![Vec::with_capacity(e); seq];
        let mut start = 0;
        for head in &block.heads {
            let dh = head.dh();
            let angles: Mat = n1
                .iter()
                .map(|r| r[start..start + dh].iter().map(|&v| rescale(v, head.rescale)).collect())
                .collect();
            let q: Vec<DD> = angles.iter().map(|a| circuit_z(&head.circuit, a, &head.theta_q)[0]).collect();
            let k: Vec<DD> = angles.iter().map(|a| circuit_z(&head.circuit, a, &head.theta_k)[0]).collect();
            let v: Mat = angles.iter().map(|a| circuit_z(&head.circuit, a, &head.theta_v)).collect();
            let scale = DD::ONE / DD::from(dh as f64).sqrt();
            for i in 0..seq {
                let scores: Vec<DD> = k.iter().map(|&kj| -((q[i] - kj) * (q[i] - kj)) * scale).collect();
                let a = softmax(&scores);
                for d in 0..dh {
                    let mut acc = DD::ZERO;
                    for j in 0..seq {
                        acc = acc + a[j] * v[j][d];
                    }
                    concat[i].push(acc);
                }
            }
            start += dh;
        }
        let h = add(&x, &linear(&concat, &block.w_o));
        let n2 = layer_norm(&h, &block.ln2);
        let mlp = &block.mlp;
        let pre = linear(&n2, &mlp.linear_in);
        let readout: Mat = pre
            .iter()
            .map(|r| {
                let a: Vec<DD> = r.iter().map(|&v| rescale(v, mlp.rescale)).collect();
                circuit_z(&mlp.circuit, &a, &mlp.theta)
            })
            .collect();
        x = add(&h, &linear(&readout, &mlp.linear_out));
    }

    let cls = layer_norm(&vec![x[0].clone()], &model.readout.norm);
    linear(&cls, &model.readout.head).remove(0)
}

pub fn cross_entropy(logits: &[DD], target: usize) -> DD {
    let max = logits.iter().map(|v| v.hi).fold(f64::NEG_INFINITY, f64::max);
    let sum = logits.iter().fold(DD::ZERO, |a, &v| a + (v - DD::from(max)).exp());
    sum.ln() + DD::from(max) - logits[target]
}

pub fn loss(model: &QMViT, images: &[Tensor], labels: &[usize]) -> DD {
    images
        .iter()
        .zip(labels)
        .fold(DD::ZERO, |a, (img, &y)| a + cross_entropy(&logits(model, img), y))
}

/// Largest deviation between the library's logits and the oracle's.
pub fn logit_deviation(model: &QMViT, images: &[Tensor]) -> f64 {
    use qmvit::models::Classifier;
    let mut worst: f64 = 0.0;
    for img in images {
        let lib = model.logits(img).expect("valid image");
        for (a, b) in lib.iter().zip(logits(model, img)) {
            worst = worst.max((a - b.to_f64()).abs());
        }
    }
    worst
}

/// Central difference of the oracle loss in parameter `i` with step `h`,
/// divided by the spacing actually representable around the parameter.
fn central(probe: &mut QMViT, flat: &[f64], i: usize, h: f64, images: &[Tensor], labels: &[usize]) -> f64 {
    let mut v = flat.to_vec();
    v[i] = flat[i] + h;
    let up = v[i];
    probe.load_flat(&v).unwrap();
    let lp = loss(probe, images, labels);
    v[i] = flat[i] - h;
    let down = v[i];
    probe.load_flat(&v).unwrap();
    let lm = loss(probe, images, labels);
    (lp - lm).to_f64() / (up - down)
}

/// Worst relative error of the library's full-parameter gradient against
/// double-double central differences, and where it occurred.
///
/// Differences at `H` and `2H` are Richardson-combined, which removes the
/// `h^2` truncation term; without it parameters whose gradient is small
/// next to the loss curvature show errors near 1e-4 from truncation alone.
pub fn grad_check(model: &QMViT, images: &[Tensor], labels: &[usize], floor: f64) -> (f64, String) {
    let (_, grad) = super::grad::model_loss_and_grad(model, images, labels);
    let flat = model.flatten();
    let mut owner = Vec::with_capacity(flat.len());
    for (name, shape) in model.param_layout() {
        owner.extend(std::iter::repeat(name).take(shape.iter().product()));
    }
    let mut probe = model.clone();
    let mut worst = (0.0, String::new());
    for i in 0..flat.len() {
        let d1 = central(&mut probe, &flat, i, H, images, labels);
        let d2 = central(&mut probe, &flat, i, 2.0 * H, images, labels);
        let fd = (4.0 * d1 - d2) / 3.0;
        let err = rel_err(grad[i], fd, floor);
        if err > worst.0 {
            worst = (err, format!("{}[{i}] analytic {:.3e} fd {fd:.3e}", owner[i], grad[i]));
        }
    }
    worst
}
