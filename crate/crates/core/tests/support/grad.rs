//! Finite-difference oracles for circuit, layer and model gradients.

use std::f64::consts::PI;

use qmvit::encoding::RescaleMode;
use qmvit::models::Classifier;
use qmvit::nn::attention::{classical_attention, classical_attention_backward, softmax_rows, softmax_rows_backward};
use qmvit::nn::conv::{conv2d, conv2d_backward, pool, pool_backward, ConvSpec, PoolKind, PoolSpec};
use qmvit::nn::linear::{FFNParams, Linear};
use qmvit::nn::loss::{cross_entropy, cross_entropy_with_grad};
use qmvit::nn::norm::LayerNorm;
use qmvit::nn::{gelu, gelu_grad, relu, relu_grad, Tensor};
use qmvit::pqc::{AnsatzSpec, EncodedAnsatz, Entangler, ObservableSpec, ParamVector};
use qmvit::qattention::LoaderKind;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::dd::{run, DGate, DD};

pub const H: f64 = 1e-5;

/// `|a - f| / max(|f|, floor)`.
pub fn rel_err(analytic: f64, fd: f64, floor: f64) -> f64 {
    (analytic - fd).abs() / fd.abs().max(floor)
}

#[derive(Clone, Debug)]
pub struct PqcInstance {
    pub n: usize,
    pub layers: usize,
    pub entangler: Entangler,
    pub loader: LoaderKind,
    pub reupload: bool,
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    pub targets: Vec<usize>,
}

impl PqcInstance {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(1..=5);
        let layers = rng.random_range(0..=3);
        let mut targets: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if targets.is_empty() {
            targets.push(rng.random_range(0..n));
        }
        PqcInstance {
            n,
            layers,
            entangler: if rng.random_bool(0.5) { Entangler::Ring } else { Entangler::Chain },
            loader: if rng.random_bool(0.5) { LoaderKind::Rx } else { LoaderKind::HadamardRx },
            reupload: rng.random_bool(0.3),
            x: (0..n).map(|_| rng.random_range(-PI..PI)).collect(),
            theta: (0..n * layers).map(|_| rng.random_range(-PI..PI)).collect(),
            targets,
        }
    }

    pub fn library(&self) -> EncodedAnsatz {
        let mut e = EncodedAnsatz::new(
            self.loader.spec(self.n),
            AnsatzSpec::new(self.n, self.layers).with_entangler(self.entangler),
        );
        e.reupload = self.reupload;
        e
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.n;
        let mut p: Vec<(usize, usize)> = (0..n.saturating_sub(1)).map(|q| (q, q + 1)).collect();
        if self.entangler == Entangler::Ring && n >= 2 {
            p.push((n - 1, 0));
        }
        p
    }

    /// Gate list written out independently of the library's builders.
    fn gates(&self, x: &[DD], theta: &[DD]) -> Vec<DGate> {
        let had = self.loader == LoaderKind::HadamardRx;
        let load = |j: usize| DGate::Rx(j, if had { -x[j] } else { x[j] });
        let mut g = Vec::new();
        for j in 0..self.n {
            if had {
                g.push(DGate::H(j));
            }
            g.push(load(j));
        }
        for l in 0..self.layers {
            if self.reupload && l > 0 {
                for j in 0..self.n {
                    g.push(load(j));
                }
            }
            for q in 0..self.n {
                g.push(DGate::Rx(q, theta[l * self.n + q]));
            }
            for (c, t) in self.pairs() {
                g.push(DGate::Cnot { control: c, target: t });
            }
        }
        g
    }

    fn expectations(&self, x: &[DD], theta: &[DD]) -> Vec<DD> {
        let s = run(self.n, &self.gates(x, theta));
        self.targets.iter().map(|&t| s.expectation_z(t)).collect()
    }

    /// Central differences in double-double: `(d_params, d_inputs)` per target.
    pub fn finite_differences(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let x: Vec<DD> = self.x.iter().map(|&v| DD::from(v)).collect();
        let th: Vec<DD> = self.theta.iter().map(|&v| DD::from(v)).collect();
        let rows = self.targets.len();
        let mut dp = vec![vec![0.0; th.len()]; rows];
        let mut dx = vec![vec![0.0; x.len()]; rows];
        for k in 0..th.len() {
            let (mut p, mut m) = (th.clone(), th.clone());
            p[k] = DD::exact_sum(self.theta[k], H);
            m[k] = DD::exact_sum(self.theta[k], -H);
            let (ep, em) = (self.expectations(&x, &p), self.expectations(&x, &m));
            for r in 0..rows {
                dp[r][k] = (ep[r] - em[r]).to_f64() / (2.0 * H);
            }
        }
        for j in 0..x.len() {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[j] = DD::exact_sum(self.x[j], H);
            m[j] = DD::exact_sum(self.x[j], -H);
            let (ep, em) = (self.expectations(&p, &th), self.expectations(&m, &th));
            for r in 0..rows {
                dx[r][j] = (ep[r] - em[r]).to_f64() / (2.0 * H);
            }
        }
        (dp, dx)
    }

    /// Worst relative error of the shift-rule Jacobians, plus the worst
    /// absolute deviation of the values from the oracle.
    pub fn check(&self) -> (f64, f64) {
        let jac = self
            .library()
            .jacobians(&self.x, &ParamVector(self.theta.clone()), &ObservableSpec::new(self.targets.clone()))
            .expect("valid instance");
        let x: Vec<DD> = self.x.iter().map(|&v| DD::from(v)).collect();
        let th: Vec<DD> = self.theta.iter().map(|&v| DD::from(v)).collect();
        let vals = self.expectations(&x, &th);
        let mut value_err: f64 = 0.0;
        for (a, b) in jac.values.iter().zip(&vals) {
            value_err = value_err.max((a - b.to_f64()).abs());
        }
        let (dp, dx) = self.finite_differences();
        let mut worst: f64 = 0.0;
        for r in 0..self.targets.len() {
            for (a, f) in jac.d_params[r].iter().zip(&dp[r]) {
                worst = worst.max(rel_err(*a, *f, 1e-8));
            }
            for (a, f) in jac.d_inputs[r].iter().zip(&dx[r]) {
                worst = worst.max(rel_err(*a, *f, 1e-8));
            }
        }
        (worst, value_err)
    }
}

/// Worst relative error of `analytic` against central differences of `f`.
pub fn fd_check(f: &dyn Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], floor: f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        xp[i] = x[i] + H;
        let fp = f(&xp);
        xp[i] = x[i] - H;
        let fm = f(&xp);
        xp[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (fp - fm) / (2.0 * H), floor));
    }
    worst
}

fn weighted(out: &Tensor, w: &Tensor) -> f64 {
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

fn with_shape(shape: &[usize], v: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
}

/// Every layer's backward pass against finite differences; returns
/// `(name, worst relative error)` pairs.
pub fn nn_vjp_errors(rng: &mut ChaCha8Rng) -> Vec<(&'static str, f64)> {
    let floor = 1e-8;
    let mut out = Vec::new();

    // linear
    let lin = Linear::new(Tensor::randn(&[4, 3], 1.0, rng), Tensor::randn(&[3], 1.0, rng)).unwrap();
    let x = Tensor::randn(&[5, 4], 1.0, rng);
    let w = Tensor::randn(&[5, 3], 1.0, rng);
    let g = lin.backward(&x, &w).unwrap();
    let e1 = fd_check(&|v| weighted(&lin.forward(&with_shape(&[5, 4], v)).unwrap(), &w), x.data(), g.dx.data(), floor);
    let e2 = fd_check(
        &|v| weighted(&Linear::new(with_shape(&[4, 3], v), lin.bias.clone()).unwrap().forward(&x).unwrap(), &w),
        lin.weight.data(),
        g.dweight.data(),
        floor,
    );
    let e3 = fd_check(
        &|v| weighted(&Linear::new(lin.weight.clone(), with_shape(&[3], v)).unwrap().forward(&x).unwrap(), &w),
        lin.bias.data(),
        g.dbias.data(),
        floor,
    );
    out.push(("linear", e1.max(e2).max(e3)));

    // conv2d
    let spec = ConvSpec {
        filter: Tensor::randn(&[2, 3, 2, 3], 1.0, rng),
        bias: Tensor::randn(&[3], 1.0, rng),
        stride: 2,
    };
    let x = Tensor::randn(&[6, 7, 2], 1.0, rng);
    let z = conv2d(&x, &spec).unwrap();
    let w = Tensor::randn(z.shape(), 1.0, rng);
    let (dx, df, db) = conv2d_backward(&x, &spec, &w).unwrap();
    let e1 = fd_check(&|v| weighted(&conv2d(&with_shape(&[6, 7, 2], v), &spec).unwrap(), &w), x.data(), dx.data(), floor);
    let e2 = fd_check(
        &|v| {
            let s = ConvSpec {
                filter: with_shape(&[2, 3, 2, 3], v),
                ..spec.clone()
            };
            weighted(&conv2d(&x, &s).unwrap(), &w)
        },
        spec.filter.data(),
        df.data(),
        floor,
    );
    let e3 = fd_check(
        &|v| {
            let s = ConvSpec {
                bias: with_shape(&[3], v),
                ..spec.clone()
            };
            weighted(&conv2d(&x, &s).unwrap(), &w)
        },
        spec.bias.data(),
        db.data(),
        floor,
    );
    out.push(("conv2d", e1.max(e2).max(e3)));

    // pooling
    for (name, kind) in [
        ("pool max", PoolKind::Max),
        ("pool average", PoolKind::Average),
        ("pool global average", PoolKind::GlobalAverage),
        ("pool l2", PoolKind::L2),
    ] {
        let p = PoolSpec {
            kind,
            window: (2, 3),
            stride: 1,
        };
        let x = Tensor::randn(&[5, 6, 2], 1.0, rng);
        let y = pool(&x, &p).unwrap();
        let w = Tensor::randn(y.shape(), 1.0, rng);
        let dx = pool_backward(&x, &p, &w).unwrap();
        let e = fd_check(&|v| weighted(&pool(&with_shape(&[5, 6, 2], v), &p).unwrap(), &w), x.data(), dx.data(), floor);
        out.push((name, e));
    }

    // activations, away from the relu kink
    let xs: Vec<f64> = (0..40)
        .map(|_| {
            let v: f64 = rng.random_range(-4.0..4.0);
            if v.abs() < 1e-3 { 0.5 } else { v }
        })
        .collect();
    let e_relu = xs
        .iter()
        .map(|&v| rel_err(relu_grad(v), (relu(v + H) - relu(v - H)) / (2.0 * H), floor))
        .fold(0.0, f64::max);
    out.push(("relu", e_relu));
    let e_gelu = xs
        .iter()
        .map(|&v| rel_err(gelu_grad(v), (gelu(v + H) - gelu(v - H)) / (2.0 * H), floor))
        .fold(0.0, f64::max);
    out.push(("gelu", e_gelu));

    // softmax
    let z = Tensor::randn(&[3, 5], 2.0, rng);
    let w = Tensor::randn(&[3, 5], 1.0, rng);
    let s = softmax_rows(&z).unwrap();
    let dz = softmax_rows_backward(&s, &w).unwrap();
    out.push((
        "softmax",
        fd_check(&|v| weighted(&softmax_rows(&with_shape(&[3, 5], v)).unwrap(), &w), z.data(), dz.data(), floor),
    ));

    // attention
    let (q, k, v) = (
        Tensor::randn(&[4, 3], 1.0, rng),
        Tensor::randn(&[4, 3], 1.0, rng),
        Tensor::randn(&[4, 2], 1.0, rng),
    );
    let (o, cache) = classical_attention(&q, &k, &v, 3).unwrap();
    let w = Tensor::randn(o.shape(), 1.0, rng);
    let g = classical_attention_backward(&q, &k, &v, &cache, &w).unwrap();
    let att = |q: &Tensor, k: &Tensor, v: &Tensor| weighted(&classical_attention(q, k, v, 3).unwrap().0, &w);
    let e1 = fd_check(&|x| att(&with_shape(&[4, 3], x), &k, &v), q.data(), g.dq.data(), floor);
    let e2 = fd_check(&|x| att(&q, &with_shape(&[4, 3], x), &v), k.data(), g.dk.data(), floor);
    let e3 = fd_check(&|x| att(&q, &k, &with_shape(&[4, 2], x)), v.data(), g.dv.data(), floor);
    out.push(("attention", e1.max(e2).max(e3)));

    // ffn
    let p = FFNParams::init(3, 5, rng);
    let x = Tensor::randn(&[4, 3], 1.0, rng);
    let (y, cache) = p.forward(&x).unwrap();
    let w = Tensor::randn(y.shape(), 1.0, rng);
    let g = p.backward(&x, &cache, &w).unwrap();
    let run_ffn = |p: &FFNParams, x: &Tensor| weighted(&p.forward(x).unwrap().0, &w);
    let mut e = fd_check(&|v| run_ffn(&p, &with_shape(&[4, 3], v)), x.data(), g.dx.data(), floor);
    e = e.max(fd_check(
        &|v| {
            let mut q = p.clone();
            q.fc1.weight = with_shape(&[3, 5], v);
            run_ffn(&q, &x)
        },
        p.fc1.weight.data(),
        g.fc1.dweight.data(),
        floor,
    ));
    e = e.max(fd_check(
        &|v| {
            let mut q = p.clone();
            q.fc1.bias = with_shape(&[5], v);
            run_ffn(&q, &x)
        },
        p.fc1.bias.data(),
        g.fc1.dbias.data(),
        floor,
    ));
    e = e.max(fd_check(
        &|v| {
            let mut q = p.clone();
            q.fc2.weight = with_shape(&[5, 3], v);
            run_ffn(&q, &x)
        },
        p.fc2.weight.data(),
        g.fc2.dweight.data(),
        floor,
    ));
    out.push(("ffn", e));

    // layer norm
    let mut ln = LayerNorm::new(6);
    ln.gamma = Tensor::randn(&[6], 1.0, rng);
    ln.beta = Tensor::randn(&[6], 1.0, rng);
    let x = Tensor::randn(&[3, 6], 2.0, rng);
    let (y, cache) = ln.forward(&x).unwrap();
    let w = Tensor::randn(y.shape(), 1.0, rng);
    let g = ln.backward(&cache, &w).unwrap();
    let run_ln = |l: &LayerNorm, x: &Tensor| weighted(&l.forward(x).unwrap().0, &w);
    let mut e = fd_check(&|v| run_ln(&ln, &with_shape(&[3, 6], v)), x.data(), g.dx.data(), floor);
    e = e.max(fd_check(
        &|v| {
            let mut l = ln.clone();
            l.gamma = with_shape(&[6], v);
            run_ln(&l, &x)
        },
        ln.gamma.data(),
        g.dgamma.data(),
        floor,
    ));
    e = e.max(fd_check(
        &|v| {
            let mut l = ln.clone();
            l.beta = with_shape(&[6], v);
            run_ln(&l, &x)
        },
        ln.beta.data(),
        g.dbeta.data(),
        floor,
    ));
    out.push(("layer norm", e));

    // cross entropy
    let logits: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
    let (_, g) = cross_entropy_with_grad(&logits, 2).unwrap();
    out.push(("cross entropy", fd_check(&|v| cross_entropy(v, 2).unwrap(), &logits, &g, floor)));

    // rescaling used ahead of every encoder
    let e_rescale = xs
        .iter()
        .map(|&v| {
            let m = RescaleMode::PiTanh;
            rel_err(m.derivative(v), (m.apply(v + H) - m.apply(v - H)) / (2.0 * H), floor)
        })
        .fold(0.0, f64::max);
    out.push(("pi tanh rescale", e_rescale));

    out
}

/// Summed cross-entropy over a batch and its analytic flat gradient.
pub fn model_loss_and_grad<M: Classifier>(model: &M, images: &[Tensor], labels: &[usize]) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.n_params()];
    for (img, &y) in images.iter().zip(labels) {
        let (logits, cache) = model.forward_train(img).unwrap();
        let (l, d) = cross_entropy_with_grad(&logits, y).unwrap();
        loss += l;
        for (a, b) in grad.iter_mut().zip(model.backward(&cache, &d).unwrap()) {
            *a += b;
        }
    }
    (loss, grad)
}

pub fn model_loss<M: Classifier>(model: &M, images: &[Tensor], labels: &[usize]) -> f64 {
    images
        .iter()
        .zip(labels)
        .map(|(img, &y)| cross_entropy(&model.logits(img).unwrap(), y).unwrap())
        .sum()
}

/// Worst relative error over every parameter of the model, with the given
/// denominator floor, plus the name of the worst parameter buffer.
pub fn model_grad_check<M: Classifier>(model: &M, images: &[Tensor], labels: &[usize], floor: f64) -> (f64, String) {
    let (_, grad) = model_loss_and_grad(model, images, labels);
    let flat = model.flatten();
    let layout = model.param_layout();
    let mut owner = Vec::with_capacity(flat.len());
    for (name, shape) in &layout {
        owner.extend(std::iter::repeat(name.clone()).take(shape.iter().product()));
    }
    let mut probe = model.clone();
    let mut worst = (0.0, String::new());
    for i in 0..flat.len() {
        let mut v = flat.clone();
        v[i] = flat[i] + H;
        probe.load_flat(&v).unwrap();
        let lp = model_loss(&probe, images, labels);
        v[i] = flat[i] - H;
        probe.load_flat(&v).unwrap();
        let lm = model_loss(&probe, images, labels);
        let e = rel_err(grad[i], (lp - lm) / (2.0 * H), floor);
        if e > worst.0 {
            worst = (e, format!("{}[{}] analytic {:.3e} fd {:.3e}", owner[i], i, grad[i], (lp - lm) / (2.0 * H)));
        }
    }
    worst
}
