//! Layered parametrized ansatz and exact gradients via the parameter-shift rule.
//!
//! Every trainable or data-carrying gate is a Pauli rotation, so the derivative
//! of any Z expectation with respect to its angle is
//! `[E(angle + pi/2) - E(angle - pi/2)] / 2`. Gates whose angle is an affine
//! function of a parameter or an input carry a [`Slot`] recording that
//! dependence; [`TracedCircuit::jacobians`] walks the slots once.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::encoding::AngleEncodingSpec;
use crate::error::{Error, Result};
use crate::qsim::{Circuit, Gate, StateVector};

/// CNOT pattern closing each ansatz layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Entangler {
    /// (0->1), (1->2), ..., (n-1 -> 0)
    #[default]
    Ring,
    /// (0->1), ..., (n-2 -> n-1)
    Chain,
}

impl fmt::Display for Entangler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Entangler::Ring => "cnot_ring",
            Entangler::Chain => "cnot_chain",
        })
    }
}

impl FromStr for Entangler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnot_ring" | "ring" => Ok(Entangler::Ring),
            "cnot_chain" | "chain" => Ok(Entangler::Chain),
            _ => Err(Error::Config(format!("unknown entangler {s:?}"))),
        }
    }
}

impl Entangler {
    /// (control, target) pairs for one layer on `n` qubits.
    pub fn pairs(self, n: usize) -> Vec<(usize, usize)> {
        if n < 2 {
            return Vec::new();
        }
        let mut pairs: Vec<_> = (0..n - 1).map(|q| (q, q + 1)).collect();
        if self == Entangler::Ring {
            pairs.push((n - 1, 0));
        }
        pairs
    }
}

/// Shape of the layered template: optional Hadamard column, then per layer an
/// RX on every qubit followed by the entangler.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnsatzSpec {
    pub n_qubits: usize,
    pub n_layers: usize,
    pub entangler: Entangler,
    pub initial_hadamard: bool,
}

impl AnsatzSpec {
    pub fn new(n_qubits: usize, n_layers: usize) -> Self {
        AnsatzSpec {
            n_qubits,
            n_layers,
            entangler: Entangler::Ring,
            initial_hadamard: false,
        }
    }

    pub fn with_entangler(mut self, entangler: Entangler) -> Self {
        self.entangler = entangler;
        self
    }

    pub fn n_params(&self) -> usize {
        self.n_layers * self.n_qubits
    }

    pub fn gate_count(&self) -> usize {
        let h = if self.initial_hadamard { self.n_qubits } else { 0 };
        h + self.n_layers * (self.n_qubits + self.entangler.pairs(self.n_qubits).len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(Error::Config("ansatz needs at least one qubit".into()));
        }
        Ok(())
    }
}

/// Rotation angles of an ansatz, layer-major (`values[l * n_qubits + q]`).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(spec: &AnsatzSpec) -> Self {
        ParamVector(vec![0.0; spec.n_params()])
    }

    /// Uniform draw in [-pi/8, pi/8].
    pub fn init_uniform<R: Rng + ?Sized>(spec: &AnsatzSpec, rng: &mut R) -> Self {
        ParamVector(
            (0..spec.n_params())
                .map(|_| rng.random_range(-FRAC_PI_8..=FRAC_PI_8))
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check(&self, spec: &AnsatzSpec) -> Result<()> {
        if self.0.len() != spec.n_params() {
            return Err(Error::Dimension(format!(
                "{} parameters for an ansatz needing {}",
                self.0.len(),
                spec.n_params()
            )));
        }
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ansatz parameter".into()));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

/// Qubits read out as Pauli-Z expectations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservableSpec {
    pub targets: Vec<usize>,
}

impl ObservableSpec {
    pub fn new(targets: Vec<usize>) -> Self {
        ObservableSpec { targets }
    }

    pub fn single(q: usize) -> Self {
        ObservableSpec { targets: vec![q] }
    }

    pub fn all(n_qubits: usize) -> Self {
        ObservableSpec {
            targets: (0..n_qubits).collect(),
        }
    }

    fn check(&self, n_qubits: usize) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::Config("observable has no targets".into()));
        }
        if let Some(&bad) = self.targets.iter().find(|&&t| t >= n_qubits) {
            return Err(Error::Index(format!(
                "observable target {bad} on {n_qubits} qubits"
            )));
        }
        Ok(())
    }
}

/// What a gate angle depends on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Param(usize),
    Input(usize),
}

/// `gates[gate].angle = coeff * source + const`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slot {
    pub gate: usize,
    pub source: Source,
    pub coeff: f64,
}

/// A gate list plus the angle dependencies needed for shift-rule gradients.
#[derive(Clone, Debug)]
pub struct TracedCircuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    slots: Vec<Slot>,
    n_params: usize,
    n_inputs: usize,
}

/// Expectations and their Jacobians; rows follow the observable's targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobians {
    pub values: Vec<f64>,
    /// `d_params[r][k] = d values[r] / d theta_k`
    pub d_params: Vec<Vec<f64>>,
    /// `d_inputs[r][j] = d values[r] / d x_j`
    pub d_inputs: Vec<Vec<f64>>,
}

impl TracedCircuit {
    fn new(n_qubits: usize, n_params: usize, n_inputs: usize) -> Self {
        TracedCircuit {
            n_qubits,
            gates: Vec::new(),
            slots: Vec::new(),
            n_params,
            n_inputs,
        }
    }

    fn push(&mut self, gate: Gate, dep: Option<(Source, f64)>) {
        if let Some((source, coeff)) = dep {
            self.slots.push(Slot {
                gate: self.gates.len(),
                source,
                coeff,
            });
        }
        self.gates.push(gate);
    }

    pub fn circuit(&self) -> Result<Circuit> {
        Circuit::from_gates(self.n_qubits, self.gates.clone())
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    fn measure(state: &StateVector, obs: &ObservableSpec) -> Vec<f64> {
        if obs.targets.len() == 1 {
            // validated up front, cannot fail
            vec![state.expectation_z(obs.targets[0]).unwrap_or(0.0)]
        } else {
            let all = state.expectations_z();
            obs.targets.iter().map(|&t| all[t]).collect()
        }
    }

    fn apply_all(state: &mut StateVector, gates: &[Gate]) -> Result<()> {
        for g in gates {
            state.apply(g)?;
        }
        Ok(())
    }

    /// Runs the circuit on `init` and reads out the observable.
    pub fn evaluate(&self, init: &StateVector, obs: &ObservableSpec) -> Result<Vec<f64>> {
        self.check(init, obs)?;
        let mut state = init.clone();
        Self::apply_all(&mut state, &self.gates)?;
        Ok(Self::measure(&state, obs))
    }

    fn check(&self, init: &StateVector, obs: &ObservableSpec) -> Result<()> {
        if init.n_qubits() != self.n_qubits {
            return Err(Error::Dimension(format!(
                "input state has {} qubits, circuit {}",
                init.n_qubits(),
                self.n_qubits
            )));
        }
        obs.check(self.n_qubits)
    }

    /// Values plus exact Jacobians with respect to every parameter and input.
    ///
    /// Shifted evaluations reuse the prefix state up to the shifted gate, and
    /// contributions are accumulated in slot order.
    pub fn jacobians(&self, init: &StateVector, obs: &ObservableSpec) -> Result<Jacobians> {
        self.check(init, obs)?;
        let rows = obs.targets.len();
        let mut d_params = vec![vec![0.0; self.n_params]; rows];
        let mut d_inputs = vec![vec![0.0; self.n_inputs]; rows];

        let mut prefix = init.clone();
        let mut applied = 0;
        for slot in &self.slots {
            Self::apply_all(&mut prefix, &self.gates[applied..slot.gate])?;
            applied = slot.gate;
            let mut shifted = [Vec::new(), Vec::new()];
            for (out, delta) in shifted.iter_mut().zip([FRAC_PI_2, -FRAC_PI_2]) {
                let mut s = prefix.clone();
                s.apply(&self.gates[slot.gate].shifted(delta))?;
                Self::apply_all(&mut s, &self.gates[slot.gate + 1..])?;
                *out = Self::measure(&s, obs);
            }
            for r in 0..rows {
                let g = slot.coeff * 0.5 * (shifted[0][r] - shifted[1][r]);
                match slot.source {
                    Source::Param(k) => d_params[r][k] += g,
                    Source::Input(j) => d_inputs[r][j] += g,
                }
            }
        }
        Self::apply_all(&mut prefix, &self.gates[applied..])?;
        Ok(Jacobians {
            values: Self::measure(&prefix, obs),
            d_params,
            d_inputs,
        })
    }
}

fn append_ansatz(tc: &mut TracedCircuit, spec: &AnsatzSpec, theta: &ParamVector, data: Option<(&AngleEncodingSpec, &[f64])>) {
    let n = spec.n_qubits;
    if spec.initial_hadamard {
        for q in 0..n {
            tc.push(Gate::h(q), None);
        }
    }
    for l in 0..spec.n_layers {
        if let Some((loader, x)) = data.filter(|_| l > 0) {
            for (j, &xj) in x.iter().enumerate() {
                tc.push(loader.rotation(j, xj), Some((Source::Input(j), loader.angle_sign())));
            }
        }
        for q in 0..n {
            let k = l * n + q;
            tc.push(Gate::rx(q, theta.0[k]), Some((Source::Param(k), 1.0)));
        }
        for (ctl, tgt) in spec.entangler.pairs(n) {
            tc.push(Gate::cnot(ctl, tgt), None);
        }
    }
}

fn trace_ansatz(spec: &AnsatzSpec, theta: &ParamVector) -> Result<TracedCircuit> {
    spec.validate()?;
    theta.check(spec)?;
    let mut tc = TracedCircuit::new(spec.n_qubits, spec.n_params(), 0);
    append_ansatz(&mut tc, spec, theta, None);
    Ok(tc)
}

/// Gate sequence of the ansatz for the given angles.
pub fn build_ansatz(spec: &AnsatzSpec, theta: &ParamVector) -> Result<Circuit> {
    trace_ansatz(spec, theta)?.circuit()
}

/// Runs the ansatz on `state_in` and returns `<Z_t>` for each target.
pub fn expectation_head(
    state_in: &StateVector,
    spec: &AnsatzSpec,
    theta: &ParamVector,
    obs: &ObservableSpec,
) -> Result<Vec<f64>> {
    trace_ansatz(spec, theta)?.evaluate(state_in, obs)
}

fn pick_row(mut rows: Vec<Vec<f64>>, obs: &ObservableSpec, t: usize) -> Result<Vec<f64>> {
    if t >= obs.targets.len() {
        return Err(Error::Index(format!(
            "target position {t} of an observable with {} targets",
            obs.targets.len()
        )));
    }
    Ok(rows.swap_remove(t))
}

/// Gradient of the `t`-th observable entry with respect to every ansatz angle.
pub fn param_shift_grad(
    state_in: &StateVector,
    spec: &AnsatzSpec,
    theta: &ParamVector,
    obs: &ObservableSpec,
    t: usize,
) -> Result<Vec<f64>> {
    let jac = trace_ansatz(spec, theta)?.jacobians(state_in, obs)?;
    pick_row(jac.d_params, obs, t)
}

/// Encoder followed by the ansatz, optionally re-applying the data rotations
/// before every layer after the first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedAnsatz {
    pub loader: AngleEncodingSpec,
    pub ansatz: AnsatzSpec,
    pub reupload: bool,
}

impl EncodedAnsatz {
    pub fn new(loader: AngleEncodingSpec, ansatz: AnsatzSpec) -> Self {
        EncodedAnsatz {
            loader,
            ansatz,
            reupload: false,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.ansatz.n_qubits
    }

    pub fn trace(&self, x: &[f64], theta: &ParamVector) -> Result<TracedCircuit> {
        self.ansatz.validate()?;
        self.loader.validate()?;
        theta.check(&self.ansatz)?;
        if self.loader.n_qubits != self.ansatz.n_qubits || x.len() != self.loader.n_qubits {
            return Err(Error::Dimension(format!(
                "{} inputs, loader on {} qubits, ansatz on {}",
                x.len(),
                self.loader.n_qubits,
                self.ansatz.n_qubits
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoded input".into()));
        }
        let mut tc = TracedCircuit::new(self.ansatz.n_qubits, self.ansatz.n_params(), x.len());
        let sign = self.loader.angle_sign();
        for (j, &xj) in x.iter().enumerate() {
            if self.loader.prepend_hadamard {
                tc.push(Gate::h(j), None);
            }
            tc.push(self.loader.rotation(j, xj), Some((Source::Input(j), sign)));
        }
        let data = self.reupload.then_some((&self.loader, x));
        append_ansatz(&mut tc, &self.ansatz, theta, data);
        Ok(tc)
    }

    pub fn evaluate(&self, x: &[f64], theta: &ParamVector, obs: &ObservableSpec) -> Result<Vec<f64>> {
        let zero = StateVector::zero(self.n_qubits())?;
        self.trace(x, theta)?.evaluate(&zero, obs)
    }

    pub fn jacobians(&self, x: &[f64], theta: &ParamVector, obs: &ObservableSpec) -> Result<Jacobians> {
        let zero = StateVector::zero(self.n_qubits())?;
        self.trace(x, theta)?.jacobians(&zero, obs)
    }
}

/// Gradient of the `t`-th observable entry with respect to the encoder inputs.
pub fn input_shift_grad(
    loader: &AngleEncodingSpec,
    x: &[f64],
    spec: &AnsatzSpec,
    theta: &ParamVector,
    obs: &ObservableSpec,
    t: usize,
) -> Result<Vec<f64>> {
    let jac = EncodedAnsatz::new(loader.clone(), spec.clone()).jacobians(x, theta, obs)?;
    pick_row(jac.d_inputs, obs, t)
}
