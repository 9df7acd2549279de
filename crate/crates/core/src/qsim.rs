//! Dense statevector simulation.
//!
//! Amplitudes are stored little-endian: bit `q` of an amplitude index holds the
//! basis value of qubit `q`. Gates act in place on strided amplitude pairs, so a
//! single gate costs O(2^n). [`dense_unitary`] builds the full 2^n x 2^n matrix
//! of a small circuit and exists as an independent oracle for tests.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Amplitude = Complex64;

/// Largest register the simulator accepts (16 MiB of amplitudes).
pub const MAX_QUBITS: usize = 20;

/// Largest register [`dense_unitary`] will expand.
pub const MAX_DENSE_QUBITS: usize = 6;

const NORM_TOLERANCE: f64 = 1e-9;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// A pure state over `n_qubits` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Amplitude>,
}

impl StateVector {
    /// The all-zero computational basis state |0...0>.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_capacity(n_qubits)?;
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(StateVector { n_qubits, amps })
    }

    /// Wraps an amplitude vector after checking its length, finiteness and norm.
    pub fn from_amplitudes(amps: Vec<Amplitude>) -> Result<Self> {
        let len = amps.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::Dimension(format!(
                "amplitude count {len} is not a power of two"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_capacity(n_qubits)?;
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite("state amplitude".into()));
        }
        let state = StateVector { n_qubits, amps };
        let norm = state.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Degenerate(format!("state norm {norm} is not 1")));
        }
        Ok(state)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Amplitude] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Applies a single gate in place.
    pub fn apply(&mut self, gate: &Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        match *gate {
            Gate::H(q) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                self.apply_1q(q, [[c(s), c(s)], [c(s), c(-s)]]);
            }
            Gate::Rx { target, angle } => self.apply_1q(target, rx_matrix(angle)),
            Gate::Ry { target, angle } => self.apply_1q(target, ry_matrix(angle)),
            Gate::Rz { target, angle } => self.apply_1q(target, rz_matrix(angle)),
            Gate::Cnot { control, target } => self.apply_cnot(control, target),
        }
        Ok(())
    }

    /// Applies every gate of `circuit` in order.
    pub fn run(&mut self, circuit: &Circuit) -> Result<()> {
        if circuit.n_qubits != self.n_qubits {
            return Err(Error::Dimension(format!(
                "circuit acts on {} qubits, state has {}",
                circuit.n_qubits, self.n_qubits
            )));
        }
        for gate in &circuit.gates {
            self.apply(gate)?;
        }
        Ok(())
    }

    /// Pauli-Z expectation of qubit `j`.
    pub fn expectation_z(&self, j: usize) -> Result<f64> {
        if j >= self.n_qubits {
            return Err(Error::Index(format!(
                "qubit {j} on a {}-qubit state",
                self.n_qubits
            )));
        }
        let mask = 1usize << j;
        let value = self
            .amps
            .iter()
            .enumerate()
            .map(|(k, a)| {
                if k & mask == 0 {
                    a.norm_sqr()
                } else {
                    -a.norm_sqr()
                }
            })
            .sum::<f64>();
        Ok(value.clamp(-1.0, 1.0))
    }

    /// Pauli-Z expectations of every qubit, in one pass over the amplitudes.
    pub fn expectations_z(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_qubits];
        for (k, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (j, e) in out.iter_mut().enumerate() {
                if k >> j & 1 == 0 {
                    *e += p;
                } else {
                    *e -= p;
                }
            }
        }
        for e in &mut out {
            *e = e.clamp(-1.0, 1.0);
        }
        out
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    fn apply_1q(&mut self, q: usize, m: [[Complex64; 2]; 2]) {
        let stride = 1usize << q;
        for base in (0..self.amps.len()).step_by(stride << 1) {
            for i in base..base + stride {
                let a0 = self.amps[i];
                let a1 = self.amps[i + stride];
                self.amps[i] = m[0][0] * a0 + m[0][1] * a1;
                self.amps[i + stride] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let cmask = 1usize << control;
        let tmask = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
    }
}

fn check_capacity(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::Capacity(format!(
            "{n} qubits requested, supported range is 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

#[inline]
fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// RX(angle) = exp(-i angle X / 2).
pub fn rx_matrix(angle: f64) -> [[Complex64; 2]; 2] {
    let (s, co) = (angle / 2.0).sin_cos();
    let mis = Complex64::new(0.0, -s);
    [[c(co), mis], [mis, c(co)]]
}

/// RY(angle) = exp(-i angle Y / 2).
pub fn ry_matrix(angle: f64) -> [[Complex64; 2]; 2] {
    let (s, co) = (angle / 2.0).sin_cos();
    [[c(co), c(-s)], [c(s), c(co)]]
}

/// RZ(angle) = exp(-i angle Z / 2).
pub fn rz_matrix(angle: f64) -> [[Complex64; 2]; 2] {
    let (s, co) = (angle / 2.0).sin_cos();
    [[Complex64::new(co, -s), ZERO], [ZERO, Complex64::new(co, s)]]
}

/// A single gate of the supported set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    H(usize),
    Rx { target: usize, angle: f64 },
    Ry { target: usize, angle: f64 },
    Rz { target: usize, angle: f64 },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn h(q: usize) -> Self {
        Gate::H(q)
    }

    pub fn rx(target: usize, angle: f64) -> Self {
        Gate::Rx { target, angle }
    }

    pub fn ry(target: usize, angle: f64) -> Self {
        Gate::Ry { target, angle }
    }

    pub fn rz(target: usize, angle: f64) -> Self {
        Gate::Rz { target, angle }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot { control, target }
    }

    pub fn target(&self) -> usize {
        match *self {
            Gate::H(q) => q,
            Gate::Rx { target, .. }
            | Gate::Ry { target, .. }
            | Gate::Rz { target, .. }
            | Gate::Cnot { target, .. } => target,
        }
    }

    pub fn control(&self) -> Option<usize> {
        match *self {
            Gate::Cnot { control, .. } => Some(control),
            _ => None,
        }
    }

    /// Rotation angle, for the rotation kinds.
    pub fn angle(&self) -> Option<f64> {
        match *self {
            Gate::Rx { angle, .. } | Gate::Ry { angle, .. } | Gate::Rz { angle, .. } => {
                Some(angle)
            }
            _ => None,
        }
    }

    /// Same gate with `delta` added to its rotation angle. Non-rotations are
    /// returned unchanged.
    pub fn shifted(&self, delta: f64) -> Self {
        match *self {
            Gate::Rx { target, angle } => Gate::Rx {
                target,
                angle: angle + delta,
            },
            Gate::Ry { target, angle } => Gate::Ry {
                target,
                angle: angle + delta,
            },
            Gate::Rz { target, angle } => Gate::Rz {
                target,
                angle: angle + delta,
            },
            g => g,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Gate::H(_) => "H",
            Gate::Rx { .. } => "RX",
            Gate::Ry { .. } => "RY",
            Gate::Rz { .. } => "RZ",
            Gate::Cnot { .. } => "CNOT",
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        let target = self.target();
        if target >= n_qubits {
            return Err(Error::Index(format!(
                "{} target {target} on {n_qubits} qubits",
                self.kind_name()
            )));
        }
        if let Some(control) = self.control() {
            if control >= n_qubits {
                return Err(Error::Index(format!(
                    "CNOT control {control} on {n_qubits} qubits"
                )));
            }
            if control == target {
                return Err(Error::Index(format!(
                    "CNOT control and target are both {target}"
                )));
            }
        }
        if let Some(angle) = self.angle() {
            if !angle.is_finite() {
                return Err(Error::NonFinite(format!("{} angle", self.kind_name())));
            }
        }
        Ok(())
    }

    /// 2x2 matrix of a single-qubit gate.
    fn matrix_1q(&self) -> Option<[[Complex64; 2]; 2]> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match *self {
            Gate::H(_) => Some([[c(s), c(s)], [c(s), c(-s)]]),
            Gate::Rx { angle, .. } => Some(rx_matrix(angle)),
            Gate::Ry { angle, .. } => Some(ry_matrix(angle)),
            Gate::Rz { angle, .. } => Some(rz_matrix(angle)),
            Gate::Cnot { .. } => None,
        }
    }
}

impl fmt::Display for Gate {
    /// `KIND target [control] [angle]`; angles print in shortest round-trip form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Gate::H(q) => write!(f, "H {q}"),
            Gate::Rx { target, angle } => write!(f, "RX {target} {angle:?}"),
            Gate::Ry { target, angle } => write!(f, "RY {target} {angle:?}"),
            Gate::Rz { target, angle } => write!(f, "RZ {target} {angle:?}"),
            Gate::Cnot { control, target } => write!(f, "CNOT {target} {control}"),
        }
    }
}

impl FromStr for Gate {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::format("gate line", format!("{msg}: {line:?}"));
        let qubit = |s: &str| s.parse::<usize>().map_err(|_| bad("bad qubit index"));
        let angle = |s: &str| s.parse::<f64>().map_err(|_| bad("bad angle"));
        match fields.as_slice() {
            ["H", q] => Ok(Gate::H(qubit(q)?)),
            ["RX", q, a] => Ok(Gate::rx(qubit(q)?, angle(a)?)),
            ["RY", q, a] => Ok(Gate::ry(qubit(q)?, angle(a)?)),
            ["RZ", q, a] => Ok(Gate::rz(qubit(q)?, angle(a)?)),
            ["CNOT", t, ctl] => Ok(Gate::cnot(qubit(ctl)?, qubit(t)?)),
            _ => Err(bad("unrecognised gate")),
        }
    }
}

/// An ordered gate program over a fixed register.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Circuit {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        for g in &gates {
            g.validate(n_qubits)?;
        }
        Ok(Circuit { n_qubits, gates })
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        gate.validate(self.n_qubits)?;
        self.gates.push(gate);
        Ok(())
    }

    /// Appends all gates of `other`, which must act on the same register.
    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.n_qubits != self.n_qubits {
            return Err(Error::Dimension(format!(
                "cannot append a {}-qubit circuit to a {}-qubit one",
                other.n_qubits, self.n_qubits
            )));
        }
        self.gates.extend_from_slice(&other.gates);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }
}

impl fmt::Display for Circuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "QUBITS {}", self.n_qubits)?;
        for g in &self.gates {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for Circuit {
    type Err = Error;

    /// Parses the text dump produced by `Display`. Blank lines and lines
    /// starting with `#` are ignored.
    fn from_str(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::format("circuit", "empty listing"))?;
        let n_qubits = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["QUBITS", n] => n
                .parse::<usize>()
                .map_err(|_| Error::format("circuit", format!("bad header {header:?}")))?,
            _ => {
                return Err(Error::format(
                    "circuit",
                    format!("expected QUBITS header, found {header:?}"),
                ))
            }
        };
        let gates = lines.map(str::parse).collect::<Result<Vec<Gate>>>()?;
        Circuit::from_gates(n_qubits, gates)
    }
}

/// Fresh |0...0> register.
pub fn new_zero_state(n: usize) -> Result<StateVector> {
    StateVector::zero(n)
}

pub fn apply_gate(mut state: StateVector, gate: &Gate) -> Result<StateVector> {
    state.apply(gate)?;
    Ok(state)
}

pub fn run_circuit(circuit: &Circuit, init: &StateVector) -> Result<StateVector> {
    let mut state = init.clone();
    state.run(circuit)?;
    Ok(state)
}

pub fn expectation_z(state: &StateVector, j: usize) -> Result<f64> {
    state.expectation_z(j)
}

pub fn probabilities(state: &StateVector) -> Vec<f64> {
    state.probabilities()
}

/// Square complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        DenseMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn matmul(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        DenseMatrix { dim: n, data }
    }

    pub fn adjoint(&self) -> DenseMatrix {
        let n = self.dim;
        let mut data = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        DenseMatrix { dim: n, data }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        (0..n)
            .map(|i| (0..n).map(|j| self.data[i * n + j] * v[j]).sum())
            .collect()
    }

    fn kron(&self, rhs: &DenseMatrix) -> DenseMatrix {
        let (n, m) = (self.dim, rhs.dim);
        let dim = n * m;
        let mut data = vec![ZERO; dim * dim];
        for i in 0..n {
            for j in 0..n {
                let a = self.data[i * n + j];
                for k in 0..m {
                    for l in 0..m {
                        data[(i * m + k) * dim + j * m + l] = a * rhs.data[k * m + l];
                    }
                }
            }
        }
        DenseMatrix { dim, data }
    }

    fn from_2x2(m: [[Complex64; 2]; 2]) -> Self {
        DenseMatrix {
            dim: 2,
            data: vec![m[0][0], m[0][1], m[1][0], m[1][1]],
        }
    }
}

/// Full matrix of a single gate on `n` qubits, built from Kronecker products
/// (qubit 0 is the rightmost factor).
fn gate_dense(gate: &Gate, n: usize) -> DenseMatrix {
    match gate.matrix_1q() {
        Some(m) => {
            let q = gate.target();
            let high = DenseMatrix::identity(1 << (n - q - 1));
            let low = DenseMatrix::identity(1 << q);
            high.kron(&DenseMatrix::from_2x2(m)).kron(&low)
        }
        None => {
            let (control, target) = (gate.control().unwrap(), gate.target());
            let dim = 1usize << n;
            let mut data = vec![ZERO; dim * dim];
            for col in 0..dim {
                let row = if col >> control & 1 == 1 {
                    col ^ (1 << target)
                } else {
                    col
                };
                data[row * dim + col] = ONE;
            }
            DenseMatrix { dim, data }
        }
    }
}

/// Product of the per-gate matrices in application order.
pub fn dense_unitary(circuit: &Circuit) -> Result<DenseMatrix> {
    let n = circuit.n_qubits;
    if n == 0 || n > MAX_DENSE_QUBITS {
        return Err(Error::Capacity(format!(
            "dense unitary of {n} qubits; limit is {MAX_DENSE_QUBITS}"
        )));
    }
    let mut u = DenseMatrix::identity(1 << n);
    for g in &circuit.gates {
        u = gate_dense(g, n).matmul(&u);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn zero_state_shapes() {
        assert_eq!(StateVector::zero(1).unwrap().amplitudes(), &[ONE, ZERO]);
        assert_eq!(
            StateVector::zero(2).unwrap().amplitudes(),
            &[ONE, ZERO, ZERO, ZERO]
        );
        assert!(matches!(StateVector::zero(21), Err(Error::Capacity(_))));
        assert!(matches!(StateVector::zero(0), Err(Error::Capacity(_))));
    }

    #[test]
    fn hadamard_and_rx_columns() {
        let s = apply_gate(new_zero_state(1).unwrap(), &Gate::h(0)).unwrap();
        assert!(close(s.amplitudes()[0], c(FRAC_1_SQRT_2), 1e-15));
        assert!(close(s.amplitudes()[1], c(FRAC_1_SQRT_2), 1e-15));

        let s = apply_gate(new_zero_state(1).unwrap(), &Gate::rx(0, PI)).unwrap();
        assert!(close(s.amplitudes()[0], ZERO, 1e-15));
        assert!(close(s.amplitudes()[1], Complex64::new(0.0, -1.0), 1e-15));
    }

    #[test]
    fn cnot_truth_table() {
        // qubit0 = 1, qubit1 = 0 is index 0b01
        let mut s = StateVector::zero(2).unwrap();
        s.apply(&Gate::rx(0, PI)).unwrap();
        s.apply(&Gate::cnot(0, 1)).unwrap();
        let p = s.probabilities();
        assert!((p[0b11] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gate_index_errors() {
        let mut s = StateVector::zero(2).unwrap();
        assert!(matches!(s.apply(&Gate::h(2)), Err(Error::Index(_))));
        assert!(matches!(s.apply(&Gate::cnot(1, 1)), Err(Error::Index(_))));
        assert!(matches!(s.apply(&Gate::cnot(3, 0)), Err(Error::Index(_))));
        assert!(matches!(
            s.apply(&Gate::rx(0, f64::NAN)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn run_circuit_basics() {
        let init = StateVector::zero(3).unwrap();
        let out = run_circuit(&Circuit::new(3), &init).unwrap();
        assert_eq!(out, init);

        let c2 = Circuit::from_gates(1, vec![Gate::h(0), Gate::h(0)]).unwrap();
        let out = run_circuit(&c2, &StateVector::zero(1).unwrap()).unwrap();
        assert!(close(out.amplitudes()[0], ONE, 1e-12));
        assert!(close(out.amplitudes()[1], ZERO, 1e-12));

        assert!(matches!(
            run_circuit(&c2, &StateVector::zero(2).unwrap()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn z_expectations() {
        let zero = StateVector::zero(1).unwrap();
        assert_eq!(expectation_z(&zero, 0).unwrap(), 1.0);
        let plus = apply_gate(zero.clone(), &Gate::h(0)).unwrap();
        assert!(expectation_z(&plus, 0).unwrap().abs() < 1e-12);
        assert!(matches!(expectation_z(&plus, 1), Err(Error::Index(_))));
    }

    #[test]
    fn rx_pi_third_expectation_matches_dense_oracle() {
        let circuit = Circuit::from_gates(1, vec![Gate::rx(0, PI / 3.0)]).unwrap();
        let u = dense_unitary(&circuit).unwrap();
        let psi = u.apply(&[ONE, ZERO]);
        let oracle = psi[0].norm_sqr() - psi[1].norm_sqr();
        let state = run_circuit(&circuit, &StateVector::zero(1).unwrap()).unwrap();
        let z = state.expectation_z(0).unwrap();
        assert!((z - oracle).abs() < 1e-12);
        assert!((z - 0.5).abs() < 1e-12);
    }

    #[test]
    fn probabilities_of_plus() {
        let plus = apply_gate(StateVector::zero(1).unwrap(), &Gate::h(0)).unwrap();
        let p = probabilities(&plus);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dense_unitary_small_cases() {
        let u = dense_unitary(&Circuit::new(2)).unwrap();
        assert_eq!(u, DenseMatrix::identity(4));

        let u = dense_unitary(&Circuit::from_gates(1, vec![Gate::h(0)]).unwrap()).unwrap();
        let s = FRAC_1_SQRT_2;
        assert!(close(u.get(0, 0), c(s), 1e-15));
        assert!(close(u.get(0, 1), c(s), 1e-15));
        assert!(close(u.get(1, 0), c(s), 1e-15));
        assert!(close(u.get(1, 1), c(-s), 1e-15));

        assert!(matches!(
            dense_unitary(&Circuit::new(7)),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn from_amplitudes_validates() {
        assert!(StateVector::from_amplitudes(vec![ONE, ZERO, ZERO]).is_err());
        assert!(StateVector::from_amplitudes(vec![ONE, ONE]).is_err());
        assert!(StateVector::from_amplitudes(vec![c(f64::NAN), ZERO]).is_err());
        assert!(StateVector::from_amplitudes(vec![ZERO, ONE]).is_ok());
    }

    #[test]
    fn circuit_text_round_trip() {
        let c = Circuit::from_gates(
            3,
            vec![
                Gate::h(0),
                Gate::rx(1, 0.1 + 0.2),
                Gate::ry(2, -1e-300),
                Gate::rz(0, PI),
                Gate::cnot(2, 0),
            ],
        )
        .unwrap();
        let text = c.to_string();
        assert!(text.contains("CNOT 0 2"));
        let back: Circuit = text.parse().unwrap();
        assert_eq!(back, c);
        assert!("QUBITS 1\nCNOT 0 0\n".parse::<Circuit>().is_err());
        assert!("H 0\n".parse::<Circuit>().is_err());
    }
}
