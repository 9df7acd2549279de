//! Classical-to-quantum feature maps: angle (data-loader and per-qubit
//! rotation forms), amplitude and basis encodings.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qsim::{Circuit, Gate, StateVector, MAX_QUBITS};

/// Rotation axis of a single-qubit encoding gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn gate(self, target: usize, angle: f64) -> Gate {
        match self {
            Axis::X => Gate::rx(target, angle),
            Axis::Y => Gate::ry(target, angle),
            Axis::Z => Gate::rz(target, angle),
        }
    }
}

/// Squashing applied to features before they become rotation angles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RescaleMode {
    Identity,
    /// `pi * tanh(v)`, keeping angles inside (-pi, pi).
    #[default]
    PiTanh,
}

impl RescaleMode {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            RescaleMode::Identity => v,
            RescaleMode::PiTanh => PI * v.tanh(),
        }
    }

    /// d(apply)/dv.
    pub fn derivative(self, v: f64) -> f64 {
        match self {
            RescaleMode::Identity => 1.0,
            RescaleMode::PiTanh => {
                let t = v.tanh();
                PI * (1.0 - t * t)
            }
        }
    }
}

impl fmt::Display for RescaleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RescaleMode::Identity => "identity",
            RescaleMode::PiTanh => "pi_tanh",
        })
    }
}

impl FromStr for RescaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(RescaleMode::Identity),
            "pi_tanh" => Ok(RescaleMode::PiTanh),
            _ => Err(Error::Config(format!("unknown rescale mode {s:?}"))),
        }
    }
}

pub fn rescale_for_encoding(v: &[f64], mode: RescaleMode) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("feature passed to rescale".into()));
    }
    Ok(v.iter().map(|&x| mode.apply(x)).collect())
}

/// Per-qubit angle encoding of an `n_qubits`-long feature vector.
///
/// With `prepend_hadamard` every qubit gets `H` followed by the adjoint
/// rotation `R_axis(-x_j)` (the transformer data loader). Without it each qubit
/// gets `R_axis(x_j) = exp(-i x_j/2 P_axis)` applied to |0>.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AngleEncodingSpec {
    pub n_qubits: usize,
    pub axes: Vec<Axis>,
    pub prepend_hadamard: bool,
}

impl AngleEncodingSpec {
    /// `H` then `RX(-x_j)` on every qubit.
    pub fn data_loader(n_qubits: usize) -> Self {
        AngleEncodingSpec {
            n_qubits,
            axes: vec![Axis::X; n_qubits],
            prepend_hadamard: true,
        }
    }

    /// `RX(x_j)` on every qubit, no Hadamard column.
    pub fn rotations(n_qubits: usize) -> Self {
        Self::rotations_about(n_qubits, Axis::X)
    }

    pub fn rotations_about(n_qubits: usize, axis: Axis) -> Self {
        AngleEncodingSpec {
            n_qubits,
            axes: vec![axis; n_qubits],
            prepend_hadamard: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > MAX_QUBITS {
            return Err(Error::Capacity(format!(
                "angle encoding over {} qubits",
                self.n_qubits
            )));
        }
        if self.axes.len() != self.n_qubits {
            return Err(Error::Dimension(format!(
                "{} axes for {} qubits",
                self.axes.len(),
                self.n_qubits
            )));
        }
        Ok(())
    }

    /// Sign relating a feature to its gate angle: the data loader applies the
    /// adjoint rotation, so its angle is `-x`.
    pub fn angle_sign(&self) -> f64 {
        if self.prepend_hadamard {
            -1.0
        } else {
            1.0
        }
    }

    /// Data rotation for feature `j` (no Hadamard).
    pub fn rotation(&self, j: usize, x: f64) -> Gate {
        self.axes[j].gate(j, self.angle_sign() * x)
    }

    /// Circuit that prepares the encoded state from |0...0>.
    pub fn circuit(&self, x: &[f64]) -> Result<Circuit> {
        self.validate()?;
        if x.len() != self.n_qubits {
            return Err(Error::Dimension(format!(
                "{} features for {} qubits",
                x.len(),
                self.n_qubits
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoded feature".into()));
        }
        let mut gates = Vec::with_capacity(2 * self.n_qubits);
        for (j, &xj) in x.iter().enumerate() {
            if self.prepend_hadamard {
                gates.push(Gate::h(j));
            }
            gates.push(self.rotation(j, xj));
        }
        Circuit::from_gates(self.n_qubits, gates)
    }

    pub fn encode(&self, x: &[f64]) -> Result<StateVector> {
        let circuit = self.circuit(x)?;
        let mut state = StateVector::zero(self.n_qubits)?;
        state.run(&circuit)?;
        Ok(state)
    }
}

/// Transformer data loader: `H` then `RX(-x_j)` on every qubit.
pub fn angle_encode(x: &[f64]) -> Result<StateVector> {
    check_len(x.len())?;
    AngleEncodingSpec::data_loader(x.len()).encode(x)
}

/// Quanvolution encoding: `exp(-i x_j/2 P_axis(j))` on every qubit of |0...0>.
pub fn quanv_encode(x: &[f64], spec: &AngleEncodingSpec) -> Result<StateVector> {
    check_len(x.len())?;
    if spec.prepend_hadamard {
        return Err(Error::Config(
            "quanvolution encoding does not prepend a Hadamard column".into(),
        ));
    }
    spec.encode(x)
}

fn check_len(m: usize) -> Result<()> {
    if m == 0 || m > MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "{m} features; angle encoding supports 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

/// Zero-pads `x` to a power of two and L2-normalises it into amplitudes.
pub fn amplitude_encode(x: &[f64]) -> Result<StateVector> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("amplitude feature".into()));
    }
    let len = x.len().max(2).next_power_of_two();
    if len.trailing_zeros() as usize > MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "{} features need more than {MAX_QUBITS} qubits",
            x.len()
        )));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate("zero vector cannot be amplitude encoded".into()));
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); len];
    for (a, &v) in amps.iter_mut().zip(x) {
        *a = Complex64::new(v / norm, 0.0);
    }
    StateVector::from_amplitudes(amps)
}

/// Uniform superposition over the distinct bitstrings of `dataset`.
///
/// Bitstrings are written most-significant qubit first, so `"01"` sets
/// qubit 0 and leaves qubit 1 clear. Duplicates collapse into one term.
pub fn basis_encode<S: AsRef<str>>(dataset: &[S]) -> Result<StateVector> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Degenerate("basis encoding of an empty set".into()))?;
    let width = first.as_ref().len();
    if width == 0 || width > MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "bitstrings of length {width}; supported 1..={MAX_QUBITS}"
        )));
    }
    let mut indices = BTreeSet::new();
    for s in dataset {
        let s = s.as_ref();
        if s.len() != width {
            return Err(Error::Dimension(format!(
                "bitstring {s:?} has length {}, expected {width}",
                s.len()
            )));
        }
        let idx = usize::from_str_radix(s, 2)
            .ok()
            .filter(|_| s.bytes().all(|b| b == b'0' || b == b'1'))
            .ok_or_else(|| Error::format("bitstring", s.to_string()))?;
        indices.insert(idx);
    }
    let amp = 1.0 / (indices.len() as f64).sqrt();
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << width];
    for idx in indices {
        amps[idx] = Complex64::new(amp, 0.0);
    }
    StateVector::from_amplitudes(amps)
}
