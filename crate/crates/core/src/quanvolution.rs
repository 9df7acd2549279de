//! Quanvolution: a small measured circuit slid over an image plane.
//!
//! Every `k x k` window is loaded one pixel per qubit with `RX`, run through
//! the ansatz, and read out as `<Z_j>` per qubit; qubit `j` becomes output
//! channel `j`.

use std::f64::consts::PI;

use rand::Rng;

use crate::encoding::AngleEncodingSpec;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::pqc::{AnsatzSpec, EncodedAnsatz, ObservableSpec, ParamVector};
use crate::qsim::MAX_QUBITS;

#[derive(Clone, Debug, PartialEq)]
pub struct QuanvSpec {
    pub patch: usize,
    pub stride: usize,
    pub circuit: EncodedAnsatz,
    pub theta: ParamVector,
    /// Whether training updates `theta`; otherwise it stays at its seeded draw.
    pub trainable: bool,
}

impl QuanvSpec {
    pub fn new(patch: usize, stride: usize, circuit: AnsatzSpec, theta: ParamVector) -> Result<Self> {
        let n = patch * patch;
        let spec = QuanvSpec {
            patch,
            stride,
            circuit: EncodedAnsatz::new(AngleEncodingSpec::rotations(n), circuit),
            theta,
            trainable: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Random fixed circuit with `layers` ansatz layers.
    pub fn random<R: Rng + ?Sized>(patch: usize, stride: usize, layers: usize, rng: &mut R) -> Result<Self> {
        let ansatz = AnsatzSpec::new(patch * patch, layers);
        if patch * patch > MAX_QUBITS {
            return Err(Error::Capacity(format!("{patch}x{patch} window needs {} qubits", patch * patch)));
        }
        let theta = ParamVector(
            (0..ansatz.n_params())
                .map(|_| rng.random_range(0.0..2.0 * PI))
                .collect(),
        );
        Self::new(patch, stride, ansatz, theta)
    }

    pub fn n_qubits(&self) -> usize {
        self.patch * self.patch
    }

    pub fn channels_out(&self) -> usize {
        self.n_qubits()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.patch * self.patch;
        if n == 0 || n > MAX_QUBITS {
            return Err(Error::Capacity(format!(
                "{0}x{0} window needs {n} qubits (limit {MAX_QUBITS})",
                self.patch
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("quanvolution stride must be positive".into()));
        }
        if self.circuit.n_qubits() != n || self.circuit.loader.prepend_hadamard {
            return Err(Error::Config("quanvolution circuit must be a plain rotation loader over the window".into()));
        }
        if self.theta.len() != self.circuit.ansatz.n_params() {
            return Err(Error::Dimension("quanvolution angle count".into()));
        }
        Ok(())
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        output_dims(h, w, self.patch, self.stride)
    }
}

fn output_dims(h: usize, w: usize, k: usize, s: usize) -> Result<(usize, usize)> {
    if k == 0 || s == 0 {
        return Err(Error::Config("window and stride must be positive".into()));
    }
    if k > h || k > w {
        return Err(Error::Dimension(format!("{k}x{k} window on a {h}x{w} image")));
    }
    Ok(((h - k) / s + 1, (w - k) / s + 1))
}

/// Collapses `H x W x C` to `H x W` by channel mean; `H x W` passes through.
pub fn channel_mean(image: &Tensor) -> Result<Tensor> {
    match *image.shape() {
        [_, _] => Ok(image.clone()),
        [h, w, c] if c > 0 => {
            let data = image
                .data()
                .chunks_exact(c)
                .map(|px| px.iter().sum::<f64>() / c as f64)
                .collect();
            Tensor::new(vec![h, w], data)
        }
        ref s => Err(Error::Dimension(format!("image shape {s:?}"))),
    }
}

/// Flattened `k x k` windows of the channel-mean plane, row-major.
pub fn extract_patches(image: &Tensor, k: usize, s: usize) -> Result<Vec<Vec<f64>>> {
    let plane = channel_mean(image)?;
    let (h, w) = (plane.shape()[0], plane.shape()[1]);
    let (oh, ow) = output_dims(h, w, k, s)?;
    let mut out = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            let mut p = Vec::with_capacity(k * k);
            for m in 0..k {
                p.extend_from_slice(&plane.row(i * s + m)[j * s..j * s + k]);
            }
            out.push(p);
        }
    }
    Ok(out)
}

/// Linear map of `[0, 1]` pixels onto `[0, pi]` angles.
pub fn pixels_to_angles(image: &Tensor) -> Tensor {
    image.map(|p| PI * p)
}

/// `H' x W' x k^2` map of `<Z_j>` readouts; input entries are angles.
pub fn quanv_layer(image: &Tensor, spec: &QuanvSpec) -> Result<Tensor> {
    spec.validate()?;
    let patches = extract_patches(image, spec.patch, spec.stride)?;
    let (h, w) = (image.shape()[0], image.shape()[1]);
    let (oh, ow) = spec.output_dims(h, w)?;
    let obs = ObservableSpec::all(spec.n_qubits());
    let mut data = Vec::with_capacity(patches.len() * spec.n_qubits());
    for p in &patches {
        data.extend(spec.circuit.evaluate(p, &spec.theta, &obs)?);
    }
    Tensor::new(vec![oh, ow, spec.n_qubits()], data)
}

/// Gradient of `sum(dmap * quanv_layer(image))` with respect to `theta`.
pub fn quanv_theta_grad(image: &Tensor, spec: &QuanvSpec, dmap: &Tensor) -> Result<Vec<f64>> {
    let patches = extract_patches(image, spec.patch, spec.stride)?;
    let n = spec.n_qubits();
    if dmap.len() != patches.len() * n {
        return Err(Error::Dimension("quanvolution upstream gradient".into()));
    }
    let obs = ObservableSpec::all(n);
    let mut g = vec![0.0; spec.theta.len()];
    for (p, d) in patches.iter().zip(dmap.data().chunks_exact(n)) {
        let jac = spec.circuit.jacobians(p, &spec.theta, &obs)?;
        for (r, &dr) in d.iter().enumerate() {
            for (gk, jk) in g.iter_mut().zip(&jac.d_params[r]) {
                *gk += dr * jk;
            }
        }
    }
    Ok(g)
}
