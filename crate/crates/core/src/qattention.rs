//! Hybrid quantum self-attention and the quantum MLP.
//!
//! Every head evaluates three circuits per sequence row: a query and a key
//! circuit read out `<Z_0>`, a value circuit reads out `<Z_j>` for every
//! qubit. Scores are negated squared query/key distances.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::encoding::{AngleEncodingSpec, RescaleMode};
use crate::error::{Error, Result};
use crate::nn::attention::{softmax_rows, softmax_rows_backward};
use crate::nn::linear::{Linear, LinearGrad};
use crate::nn::Tensor;
use crate::pqc::{AnsatzSpec, EncodedAnsatz, Entangler, ObservableSpec, ParamVector};
use crate::qsim::MAX_QUBITS;

pub use crate::models::qmvit::{qmvit_forward, QMViT};

/// Which rotation block loads a feature row into the register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LoaderKind {
    /// `RX(x_j)` on every qubit.
    #[default]
    Rx,
    /// `H` then `RX(-x_j)` on every qubit.
    HadamardRx,
}

impl LoaderKind {
    pub fn spec(self, n_qubits: usize) -> AngleEncodingSpec {
        match self {
            LoaderKind::Rx => AngleEncodingSpec::rotations(n_qubits),
            LoaderKind::HadamardRx => AngleEncodingSpec::data_loader(n_qubits),
        }
    }
}

impl fmt::Display for LoaderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LoaderKind::Rx => "rx",
            LoaderKind::HadamardRx => "hadamard_rx",
        })
    }
}

impl FromStr for LoaderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rx" => Ok(LoaderKind::Rx),
            "hadamard_rx" | "h_rx" => Ok(LoaderKind::HadamardRx),
            other => Err(Error::Config(format!("unknown loader `{other}`"))),
        }
    }
}

/// Parameters of one quantum attention head; `dh` is the circuit width.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantumHeadParams {
    pub theta_q: ParamVector,
    pub theta_k: ParamVector,
    pub theta_v: ParamVector,
    pub circuit: EncodedAnsatz,
    pub rescale: RescaleMode,
}

impl QuantumHeadParams {
    pub fn init<R: Rng + ?Sized>(circuit: EncodedAnsatz, rescale: RescaleMode, rng: &mut R) -> Self {
        let a = &circuit.ansatz;
        QuantumHeadParams {
            theta_q: ParamVector::init_uniform(a, rng),
            theta_k: ParamVector::init_uniform(a, rng),
            theta_v: ParamVector::init_uniform(a, rng),
            circuit,
            rescale,
        }
    }

    pub fn zeros(circuit: EncodedAnsatz, rescale: RescaleMode) -> Self {
        let a = &circuit.ansatz;
        QuantumHeadParams {
            theta_q: ParamVector::zeros(a),
            theta_k: ParamVector::zeros(a),
            theta_v: ParamVector::zeros(a),
            circuit,
            rescale,
        }
    }

    pub fn dh(&self) -> usize {
        self.circuit.n_qubits()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.circuit.ansatz.n_params();
        for (name, t) in [("Q", &self.theta_q), ("K", &self.theta_k), ("V", &self.theta_v)] {
            if t.len() != n {
                return Err(Error::Dimension(format!(
                    "theta_{name} has {} entries, ansatz needs {n}",
                    t.len()
                )));
            }
        }
        Ok(())
    }
}

fn check_row(x: &[f64], circuit: &EncodedAnsatz) -> Result<()> {
    if x.len() != circuit.n_qubits() {
        return Err(Error::Dimension(format!(
            "row of width {} for a {}-qubit head",
            x.len(),
            circuit.n_qubits()
        )));
    }
    Ok(())
}

/// `<x| Q^dagger Z_0 Q |x>` for an already rescaled row.
pub fn quantum_query(x: &[f64], theta_q: &ParamVector, circuit: &EncodedAnsatz) -> Result<f64> {
    check_row(x, circuit)?;
    Ok(circuit.evaluate(x, theta_q, &ObservableSpec::single(0))?[0])
}

pub fn quantum_key(x: &[f64], theta_k: &ParamVector, circuit: &EncodedAnsatz) -> Result<f64> {
    quantum_query(x, theta_k, circuit)
}

/// `<Z_j>` for every qubit after the value circuit.
pub fn quantum_values(x: &[f64], theta_v: &ParamVector, circuit: &EncodedAnsatz) -> Result<Vec<f64>> {
    check_row(x, circuit)?;
    circuit.evaluate(x, theta_v, &ObservableSpec::all(circuit.n_qubits()))
}

/// `A_ij = -(Q_i - K_j)^2`.
pub fn attention_scores(q: &[f64], k: &[f64]) -> Result<Tensor> {
    if q.len() != k.len() {
        return Err(Error::Dimension(format!(
            "{} queries against {} keys",
            q.len(),
            k.len()
        )));
    }
    let n = q.len();
    let mut data = Vec::with_capacity(n * n);
    for &qi in q {
        for &kj in k {
            data.push(-(qi - kj) * (qi - kj));
        }
    }
    Tensor::new(vec![n, n], data)
}

fn rescale_matrix(x: &Tensor, mode: RescaleMode) -> Result<Tensor> {
    if !x.is_finite() {
        return Err(Error::NonFinite("head input".into()));
    }
    Ok(x.map(|v| mode.apply(v)))
}

#[derive(Clone, Debug)]
pub struct HeadCache {
    x: Tensor,
    angles: Tensor,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Tensor,
    /// Post-softmax attention weights.
    pub weights: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrad {
    pub dx: Tensor,
    pub theta_q: Vec<f64>,
    pub theta_k: Vec<f64>,
    pub theta_v: Vec<f64>,
}

pub fn hybrid_head_forward(x: &Tensor, params: &QuantumHeadParams) -> Result<(Tensor, HeadCache)> {
    params.validate()?;
    let (n, w) = x.expect_2d("head input")?;
    let dh = params.dh();
    if w != dh || n == 0 {
        return Err(Error::Dimension(format!(
            "head input {:?} for head width {dh}",
            x.shape()
        )));
    }
    let angles = rescale_matrix(x, params.rescale)?;
    let c = &params.circuit;
    let mut q = Vec::with_capacity(n);
    let mut k = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n * dh);
    for i in 0..n {
        let row = angles.row(i);
        q.push(quantum_query(row, &params.theta_q, c)?);
        k.push(quantum_key(row, &params.theta_k, c)?);
        v.extend(quantum_values(row, &params.theta_v, c)?);
    }
    let v = Tensor::new(vec![n, dh], v)?;
    let mut scores = attention_scores(&q, &k)?;
    scores.scale(1.0 / (dh as f64).sqrt());
    let weights = softmax_rows(&scores)?;
    let out = weights.matmul(&v)?;
    Ok((
        out,
        HeadCache {
            x: x.clone(),
            angles,
            q,
            k,
            v,
            weights,
        },
    ))
}

/// `softmax(A / sqrt(dh)) V` over the rows of `x`.
pub fn hybrid_head(x: &Tensor, params: &QuantumHeadParams) -> Result<Tensor> {
    Ok(hybrid_head_forward(x, params)?.0)
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in acc.iter_mut().zip(x) {
        *o += a * v;
    }
}

pub fn hybrid_head_backward(params: &QuantumHeadParams, cache: &HeadCache, dout: &Tensor) -> Result<HeadGrad> {
    let n = cache.q.len();
    let dh = params.dh();
    let dv = cache.weights.t_matmul(dout)?;
    let dw = dout.matmul_t(&cache.v)?;
    let mut da = softmax_rows_backward(&cache.weights, &dw)?;
    da.scale(1.0 / (dh as f64).sqrt());

    let mut dq = vec![0.0; n];
    let mut dk = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let g = da.get2(i, j) * 2.0 * (cache.q[i] - cache.k[j]);
            dq[i] -= g;
            dk[j] += g;
        }
    }

    let np = params.circuit.ansatz.n_params();
    let mut grad = HeadGrad {
        dx: Tensor::zeros(&[n, dh]),
        theta_q: vec![0.0; np],
        theta_k: vec![0.0; np],
        theta_v: vec![0.0; np],
    };
    let c = &params.circuit;
    let z0 = ObservableSpec::single(0);
    let all = ObservableSpec::all(dh);
    for i in 0..n {
        let row = cache.angles.row(i);
        let mut dangle = vec![0.0; dh];
        let jq = c.jacobians(row, &params.theta_q, &z0)?;
        axpy(&mut grad.theta_q, dq[i], &jq.d_params[0]);
        axpy(&mut dangle, dq[i], &jq.d_inputs[0]);
        let jk = c.jacobians(row, &params.theta_k, &z0)?;
        axpy(&mut grad.theta_k, dk[i], &jk.d_params[0]);
        axpy(&mut dangle, dk[i], &jk.d_inputs[0]);
        let jv = c.jacobians(row, &params.theta_v, &all)?;
        for r in 0..dh {
            let g = dv.get2(i, r);
            axpy(&mut grad.theta_v, g, &jv.d_params[r]);
            axpy(&mut dangle, g, &jv.d_inputs[r]);
        }
        let xr = cache.x.row(i);
        let out = grad.dx.row_mut(i);
        for col in 0..dh {
            out[col] = dangle[col] * params.rescale.derivative(xr[col]);
        }
    }
    Ok(grad)
}

#[derive(Clone, Debug)]
pub struct MultiHeadCache {
    heads: Vec<(Tensor, HeadCache)>,
    concat: Tensor,
}

impl MultiHeadCache {
    pub fn head_weights(&self, h: usize) -> Option<&Tensor> {
        self.heads.get(h).map(|(_, c)| &c.weights)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadGrad {
    pub dx: Tensor,
    pub heads: Vec<HeadGrad>,
    pub w_o: LinearGrad,
}

fn check_heads(x: &Tensor, heads: &[QuantumHeadParams]) -> Result<usize> {
    let (_, e) = x.expect_2d("multi-head input")?;
    let total: usize = heads.iter().map(|h| h.dh()).sum();
    if heads.is_empty() || total != e {
        return Err(Error::Dimension(format!(
            "{} heads of total width {total} for embedding {e}",
            heads.len()
        )));
    }
    Ok(e)
}

pub fn multi_head_forward(x: &Tensor, heads: &[QuantumHeadParams], w_o: &Linear) -> Result<(Tensor, MultiHeadCache)> {
    check_heads(x, heads)?;
    let mut concat = Tensor::zeros(&[x.rows(), x.cols()]);
    let mut caches = Vec::with_capacity(heads.len());
    let mut start = 0;
    for h in heads {
        let xs = x.columns(start, h.dh())?;
        let (out, cache) = hybrid_head_forward(&xs, h)?;
        concat.set_columns(start, &out)?;
        caches.push((xs, cache));
        start += h.dh();
    }
    let y = w_o.forward(&concat)?;
    Ok((y, MultiHeadCache { heads: caches, concat }))
}

/// Heads on column slices of `x`, concatenated and projected by `w_o`.
pub fn multi_head(x: &Tensor, heads: &[QuantumHeadParams], w_o: &Linear) -> Result<Tensor> {
    Ok(multi_head_forward(x, heads, w_o)?.0)
}

pub fn multi_head_backward(
    heads: &[QuantumHeadParams],
    w_o: &Linear,
    cache: &MultiHeadCache,
    dout: &Tensor,
) -> Result<MultiHeadGrad> {
    let w_o_grad = w_o.backward(&cache.concat, dout)?;
    let mut dx = Tensor::zeros(cache.concat.shape());
    let mut grads = Vec::with_capacity(heads.len());
    let mut start = 0;
    for (h, (_, hc)) in heads.iter().zip(&cache.heads) {
        let dslice = w_o_grad.dx.columns(start, h.dh())?;
        let g = hybrid_head_backward(h, hc, &dslice)?;
        dx.set_columns(start, &g.dx)?;
        grads.push(g);
        start += h.dh();
    }
    Ok(MultiHeadGrad {
        dx,
        heads: grads,
        w_o: w_o_grad,
    })
}

/// Linear down to the register width, a measured circuit, linear back up.
#[derive(Clone, Debug, PartialEq)]
pub struct QMLPParams {
    pub linear_in: Linear,
    pub circuit: EncodedAnsatz,
    pub theta: ParamVector,
    pub linear_out: Linear,
    pub rescale: RescaleMode,
}

#[derive(Clone, Debug)]
pub struct QmlpCache {
    x: Tensor,
    pre: Tensor,
    angles: Tensor,
    readout: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QmlpGrad {
    pub dx: Tensor,
    pub linear_in: LinearGrad,
    pub theta: Vec<f64>,
    pub linear_out: LinearGrad,
}

impl QMLPParams {
    pub fn init<R: Rng + ?Sized>(embed_dim: usize, circuit: EncodedAnsatz, rng: &mut R) -> Self {
        let q = circuit.n_qubits();
        QMLPParams {
            linear_in: Linear::init(embed_dim, q, rng),
            theta: ParamVector::init_uniform(&circuit.ansatz, rng),
            linear_out: Linear::init(q, embed_dim, rng),
            circuit,
            rescale: RescaleMode::PiTanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.circuit.n_qubits();
        if self.linear_in.d_out() != q || self.linear_out.d_in() != q {
            return Err(Error::Dimension(format!(
                "quantum MLP chain {} -> {} -> {} around a {q}-qubit circuit",
                self.linear_in.d_in(),
                self.linear_in.d_out(),
                self.linear_out.d_in()
            )));
        }
        if self.theta.len() != self.circuit.ansatz.n_params() {
            return Err(Error::Dimension("quantum MLP angle count".into()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, QmlpCache)> {
        self.validate()?;
        let pre = self.linear_in.forward(x)?;
        let angles = rescale_matrix(&pre, self.rescale)?;
        let q = self.circuit.n_qubits();
        let obs = ObservableSpec::all(q);
        let mut readout = Vec::with_capacity(pre.len());
        for i in 0..angles.rows() {
            readout.extend(self.circuit.evaluate(angles.row(i), &self.theta, &obs)?);
        }
        let readout = Tensor::new(vec![angles.rows(), q], readout)?;
        let y = self.linear_out.forward(&readout)?;
        Ok((
            y,
            QmlpCache {
                x: x.clone(),
                pre,
                angles,
                readout,
            },
        ))
    }

    pub fn backward(&self, cache: &QmlpCache, dy: &Tensor) -> Result<QmlpGrad> {
        let linear_out = self.linear_out.backward(&cache.readout, dy)?;
        let q = self.circuit.n_qubits();
        let obs = ObservableSpec::all(q);
        let mut theta = vec![0.0; self.theta.len()];
        let mut dpre = Tensor::zeros(cache.pre.shape());
        for i in 0..cache.angles.rows() {
            let jac = self.circuit.jacobians(cache.angles.row(i), &self.theta, &obs)?;
            let mut dangle = vec![0.0; q];
            for r in 0..q {
                let g = linear_out.dx.get2(i, r);
                axpy(&mut theta, g, &jac.d_params[r]);
                axpy(&mut dangle, g, &jac.d_inputs[r]);
            }
            let pre = cache.pre.row(i);
            for (j, d) in dpre.row_mut(i).iter_mut().enumerate() {
                *d = dangle[j] * self.rescale.derivative(pre[j]);
            }
        }
        let linear_in = self.linear_in.backward(&cache.x, &dpre)?;
        Ok(QmlpGrad {
            dx: linear_in.dx.clone(),
            linear_in,
            theta,
            linear_out,
        })
    }
}

/// Quantum MLP on a single embedding vector.
pub fn quantum_mlp(x: &[f64], p: &QMLPParams) -> Result<Vec<f64>> {
    let t = Tensor::new(vec![1, x.len()], x.to_vec())?;
    Ok(p.forward(&t)?.0.into_data())
}

/// Shape of a QMViT model.
#[derive(Clone, Debug, PartialEq)]
pub struct QMViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub n_qubits: usize,
    pub n_layers: usize,
    pub n_classes: usize,
    pub loader: LoaderKind,
    pub entangler: Entangler,
    pub rescale: RescaleMode,
}

impl QMViTConfig {
    /// Table preset: `qubits` per head, `layers` per ansatz, embedding 16.
    pub fn preset(qubits: usize, layers: usize, n_classes: usize) -> Result<Self> {
        let heads = match qubits {
            4 => 4,
            8 => 2,
            _ => {
                return Err(Error::Config(format!(
                    "no preset for {qubits} qubits (expected 4 or 8)"
                )))
            }
        };
        if !(1..=2).contains(&layers) {
            return Err(Error::Config(format!(
                "no preset for {layers} layers (expected 1 or 2)"
            )));
        }
        let cfg = QMViTConfig {
            image_size: 32,
            patch_size: 8,
            channels: 3,
            embed_dim: 16,
            n_heads: heads,
            n_blocks: 1,
            n_qubits: qubits,
            n_layers: layers,
            n_classes,
            loader: LoaderKind::Rx,
            entangler: Entangler::Ring,
            rescale: RescaleMode::PiTanh,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(Error::Config(format!("{} qubits per head", self.n_qubits)));
        }
        if self.embed_dim != self.n_heads * self.n_qubits {
            return Err(Error::Config(format!(
                "embed_dim {} != {} heads x {} qubits",
                self.embed_dim, self.n_heads, self.n_qubits
            )));
        }
        if self.patch_size == 0 || self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::Config(format!(
                "image size {} not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.n_classes == 0 || self.channels == 0 {
            return Err(Error::Config("need at least one class and one channel".into()));
        }
        Ok(())
    }

    pub fn n_patches(&self) -> usize {
        (self.image_size / self.patch_size).pow(2)
    }

    /// Patches plus the class token.
    pub fn seq_len(&self) -> usize {
        self.n_patches() + 1
    }

    pub fn circuit(&self) -> EncodedAnsatz {
        EncodedAnsatz::new(
            self.loader.spec(self.n_qubits),
            AnsatzSpec::new(self.n_qubits, self.n_layers).with_entangler(self.entangler),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::{dense_unitary, Circuit, StateVector};
    use crate::pqc::build_ansatz;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn enc(kind: LoaderKind, n: usize, l: usize) -> EncodedAnsatz {
        EncodedAnsatz::new(kind.spec(n), AnsatzSpec::new(n, l))
    }

    fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    /// Loader and ansatz as separate dense matrices, composed by hand.
    fn oracle_z(c: &EncodedAnsatz, x: &[f64], theta: &ParamVector) -> Vec<f64> {
        let n = c.n_qubits();
        let load = dense_unitary(&c.loader.circuit(x).unwrap()).unwrap();
        let ans = dense_unitary(&build_ansatz(&c.ansatz, theta).unwrap()).unwrap();
        let u = ans.matmul(&load);
        let dim = 1 << n;
        let psi: Vec<Complex64> = (0..dim).map(|r| u.get(r, 0)).collect();
        (0..n)
            .map(|j| {
                psi.iter()
                    .enumerate()
                    .map(|(idx, a)| if idx >> j & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn query_with_empty_ansatz_is_zero() {
        let c = enc(LoaderKind::HadamardRx, 4, 0);
        let theta = ParamVector::zeros(&c.ansatz);
        assert!(quantum_query(&[0.0; 4], &theta, &c).unwrap().abs() < 1e-12);
        assert!(quantum_key(&[0.0; 4], &theta, &c).unwrap().abs() < 1e-12);
        let v = quantum_values(&[0.0; 4], &theta, &c).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn hadamard_loader_ignores_its_input() {
        // H then RX(-x) leaves |+> invariant up to phase
        let c = enc(LoaderKind::HadamardRx, 3, 0);
        let theta = ParamVector::zeros(&c.ansatz);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = random_row(&mut rng, 3);
            let v = quantum_values(&x, &theta, &c).unwrap();
            assert!(v.iter().all(|z| z.abs() < 1e-12));
        }
    }

    #[test]
    fn rx_loader_zero_input_gives_ground_state() {
        let c = enc(LoaderKind::Rx, 4, 0);
        let theta = ParamVector::zeros(&c.ansatz);
        let v = quantum_values(&[0.0; 4], &theta, &c).unwrap();
        for z in v {
            assert!((z - 1.0).abs() < 1e-12);
        }
        let oracle = oracle_z(&c, &[0.0; 4], &theta);
        assert!(oracle.iter().all(|z| (z - 1.0).abs() < 1e-12));
    }

    #[test]
    fn circuits_match_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for kind in [LoaderKind::Rx, LoaderKind::HadamardRx] {
            let c = enc(kind, 4, 1);
            for _ in 0..5 {
                let x = random_row(&mut rng, 4);
                let theta = ParamVector((0..4).map(|_| rng.random_range(-3.0..3.0)).collect());
                let oracle = oracle_z(&c, &x, &theta);
                let q = quantum_query(&x, &theta, &c).unwrap();
                assert!((q - oracle[0]).abs() < 1e-10);
                assert_eq!(quantum_key(&x, &theta, &c).unwrap(), q);
                let v = quantum_values(&x, &theta, &c).unwrap();
                for j in 0..4 {
                    assert!((v[j] - oracle[j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn scores_examples() {
        let a = attention_scores(&[0.2, -0.4], &[0.2, -0.4]).unwrap();
        assert_eq!(a.get2(0, 0), 0.0);
        assert_eq!(a.get2(1, 1), 0.0);
        let a = attention_scores(&[1.0], &[-1.0]).unwrap();
        assert_eq!(a.get2(0, 0), -4.0);
        assert!(attention_scores(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn single_row_head_returns_value_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = QuantumHeadParams::init(enc(LoaderKind::Rx, 4, 1), RescaleMode::PiTanh, &mut rng);
        let x = Tensor::new(vec![1, 4], random_row(&mut rng, 4)).unwrap();
        let out = hybrid_head(&x, &p).unwrap();
        let angles = rescale_for(&x, RescaleMode::PiTanh);
        let v = quantum_values(&angles, &p.theta_v, &p.circuit).unwrap();
        assert_eq!(out.data(), &v[..]);
    }

    fn rescale_for(x: &Tensor, m: RescaleMode) -> Vec<f64> {
        x.data().iter().map(|&v| m.apply(v)).collect()
    }

    #[test]
    fn head_matches_sub_operation_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = QuantumHeadParams::init(enc(LoaderKind::Rx, 4, 1), RescaleMode::PiTanh, &mut rng);
        let x = Tensor::randn(&[3, 4], 1.0, &mut rng);
        let (out, cache) = hybrid_head_forward(&x, &p).unwrap();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| x.row(i).iter().map(|&v| RescaleMode::PiTanh.apply(v)).collect())
            .collect();
        let q: Vec<f64> = rows.iter().map(|r| quantum_query(r, &p.theta_q, &p.circuit).unwrap()).collect();
        let k: Vec<f64> = rows.iter().map(|r| quantum_key(r, &p.theta_k, &p.circuit).unwrap()).collect();
        let v: Vec<Vec<f64>> = rows.iter().map(|r| quantum_values(r, &p.theta_v, &p.circuit).unwrap()).collect();
        for i in 0..3 {
            let s: Vec<f64> = (0..3).map(|j| -(q[i] - k[j]).powi(2) / 2.0).collect();
            let z: f64 = s.iter().map(|a| a.exp()).sum();
            assert!((cache.weights.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for c in 0..4 {
                let o: f64 = (0..3).map(|j| s[j].exp() / z * v[j][c]).sum();
                assert!((out.get2(i, c) - o).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_ansatz_identical_rows_average_values() {
        let c = enc(LoaderKind::Rx, 3, 0);
        let p = QuantumHeadParams::zeros(c, RescaleMode::Identity);
        let x = Tensor::from_rows(&vec![vec![0.3, -0.2, 1.0]; 4]).unwrap();
        let (out, cache) = hybrid_head_forward(&x, &p).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((cache.weights.get2(i, j) - 0.25).abs() < 1e-12);
            }
        }
        let mean: Vec<f64> = (0..3).map(|c| (0..4).map(|r| cache.v.get2(r, c)).sum::<f64>() / 4.0).collect();
        for i in 0..4 {
            for c in 0..3 {
                assert!((out.get2(i, c) - mean[c]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn permuting_rows_permutes_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = QuantumHeadParams::init(enc(LoaderKind::Rx, 3, 1), RescaleMode::PiTanh, &mut rng);
        let x = Tensor::randn(&[5, 3], 1.0, &mut rng);
        let perm = [3, 0, 4, 1, 2];
        let xp = Tensor::from_rows(&perm.iter().map(|&r| x.row(r).to_vec()).collect::<Vec<_>>()).unwrap();
        let y = hybrid_head(&x, &p).unwrap();
        let yp = hybrid_head(&xp, &p).unwrap();
        for (i, &r) in perm.iter().enumerate() {
            for c in 0..3 {
                assert!((yp.get2(i, c) - y.get2(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_head_identity_projection_is_the_head() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let p = QuantumHeadParams::init(enc(LoaderKind::Rx, 4, 1), RescaleMode::PiTanh, &mut rng);
        let x = Tensor::randn(&[5, 4], 1.0, &mut rng);
        let y = multi_head(&x, std::slice::from_ref(&p), &Linear::identity(4)).unwrap();
        assert_eq!(y, hybrid_head(&x, &p).unwrap());
    }

    #[test]
    fn two_heads_match_manual_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let heads: Vec<_> = (0..2)
            .map(|_| QuantumHeadParams::init(enc(LoaderKind::Rx, 3, 1), RescaleMode::PiTanh, &mut rng))
            .collect();
        let w_o = Linear::init(6, 6, &mut rng);
        let x = Tensor::randn(&[4, 6], 1.0, &mut rng);
        let y = multi_head(&x, &heads, &w_o).unwrap();
        assert_eq!(y.shape(), x.shape());
        let left = hybrid_head(&x.columns(0, 3).unwrap(), &heads[0]).unwrap();
        let right = hybrid_head(&x.columns(3, 3).unwrap(), &heads[1]).unwrap();
        for r in 0..4 {
            for o in 0..6 {
                let mut acc = w_o.bias.data()[o];
                for c in 0..3 {
                    acc += left.get2(r, c) * w_o.weight.get2(c, o);
                    acc += right.get2(r, c) * w_o.weight.get2(c + 3, o);
                }
                assert!((y.get2(r, o) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quantum_mlp_composition_and_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let mut p = QMLPParams::init(8, enc(LoaderKind::Rx, 4, 1), &mut rng);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-50.0..50.0)).collect();
        let y = quantum_mlp(&x, &p).unwrap();
        let pre = p.linear_in.forward_vec(&x).unwrap();
        let angles = rescale_for(&Tensor::new(vec![4], pre).unwrap(), RescaleMode::PiTanh);
        let z = p.circuit.evaluate(&angles, &p.theta, &ObservableSpec::all(4)).unwrap();
        assert!(z.iter().all(|v| (-1.0..=1.0).contains(v)));
        let direct = p.linear_out.forward_vec(&z).unwrap();
        for (a, b) in y.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        p.linear_out = Linear::zeros(4, 8);
        assert!(quantum_mlp(&x, &p).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn presets_are_consistent() {
        for (q, l) in [(4, 1), (8, 1), (4, 2), (8, 2)] {
            let cfg = QMViTConfig::preset(q, l, 100).unwrap();
            assert_eq!(cfg.embed_dim, cfg.n_heads * cfg.n_qubits);
            assert_eq!(cfg.seq_len(), 17);
        }
        assert!(QMViTConfig::preset(5, 1, 10).is_err());
    }

    #[test]
    fn dense_oracle_sanity() {
        let c = Circuit::from_gates(1, vec![]).unwrap();
        let u = dense_unitary(&c).unwrap();
        let s = u.apply(StateVector::zero(1).unwrap().amplitudes());
        assert_eq!(s[0], Complex64::new(1.0, 0.0));
    }
}
