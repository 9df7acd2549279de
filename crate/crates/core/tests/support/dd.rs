//! Double-double arithmetic and a statevector simulator built on it.
//!
//! Roughly 32 significant digits, enough that central differences of circuit
//! expectations are limited by truncation error alone.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DD {
    pub const ZERO: DD = DD { hi: 0.0, lo: 0.0 };
    pub const ONE: DD = DD { hi: 1.0, lo: 0.0 };

    pub fn from(x: f64) -> DD {
        DD { hi: x, lo: 0.0 }
    }

    /// `a + b` without rounding.
    pub fn exact_sum(a: f64, b: f64) -> DD {
        let (hi, lo) = two_sum(a, b);
        DD { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn half(self) -> DD {
        DD {
            hi: self.hi * 0.5,
            lo: self.lo * 0.5,
        }
    }

    pub fn abs(self) -> DD {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn div_f64(self, d: f64) -> DD {
        let q1 = self.hi / d;
        let r = self - DD::from(d) * DD::from(q1);
        let q2 = r.hi / d;
        let r = r - DD::from(d) * DD::from(q2);
        let q3 = r.hi / d;
        let (s, e) = quick_two_sum(q1, q2);
        DD { hi: s, lo: e } + DD::from(q3)
    }

    pub fn sqrt_half() -> DD {
        let s = 0.5f64.sqrt();
        let r = DD::from(0.5) - DD::from(s) * DD::from(s);
        DD::from(s) + DD::from(r.hi / (2.0 * s))
    }

    pub const PI: DD = DD {
        hi: std::f64::consts::PI,
        lo: 1.224_646_799_147_353_2e-16,
    };
    const LN2: DD = DD {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    pub fn sqrt(self) -> DD {
        if self.hi <= 0.0 {
            return DD::ZERO;
        }
        let x = DD::from(self.hi.sqrt());
        x + (self - x * x).div_f64(2.0 * x.hi)
    }

    /// Argument reduction by `ln 2`, Taylor series on `r / 1024`, then ten
    /// squarings.
    pub fn exp(self) -> DD {
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = (self - DD::LN2 * DD::from(k)).div_f64(1024.0);
        let mut sum = DD::ONE;
        let mut term = DD::ONE;
        let mut i = 1.0;
        while term.hi.abs() > 1e-40 {
            term = (term * r).div_f64(i);
            sum = sum + term;
            i += 1.0;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        let scale = 2f64.powi(k as i32);
        DD {
            hi: sum.hi * scale,
            lo: sum.lo * scale,
        }
    }

    /// Two Newton steps on `exp(y) = self`.
    pub fn ln(self) -> DD {
        let mut y = DD::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - DD::ONE;
        }
        y
    }

    pub fn tanh(self) -> DD {
        let e = (DD::from(-2.0) * self.abs()).exp();
        let t = (DD::ONE - e) / (DD::ONE + e);
        if self.hi < 0.0 {
            -t
        } else {
            t
        }
    }

    /// `(sin x, cos x)` by Taylor series; intended for `|x| < 8`.
    pub fn sin_cos(self) -> (DD, DD) {
        let x2 = self * self;
        let mut sin = self;
        let mut cos = DD::ONE;
        let mut ts = self;
        let mut tc = DD::ONE;
        let mut k = 1.0;
        loop {
            ts = -(ts * x2).div_f64((2.0 * k) * (2.0 * k + 1.0));
            tc = -(tc * x2).div_f64((2.0 * k - 1.0) * (2.0 * k));
            sin = sin + ts;
            cos = cos + tc;
            if ts.hi.abs() < 1e-36 && tc.hi.abs() < 1e-36 {
                break;
            }
            k += 1.0;
        }
        (sin, cos)
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, y: DD) -> DD {
        let (s, e) = two_sum(self.hi, y.hi);
        let (t, f) = two_sum(self.lo, y.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, y: DD) -> DD {
        self + (-y)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, y: DD) -> DD {
        let (p, e) = two_prod(self.hi, y.hi);
        let e = e + (self.hi * y.lo + self.lo * y.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DD { hi, lo }
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, y: DD) -> DD {
        let q1 = self.hi / y.hi;
        let r = self - y * DD::from(q1);
        let q2 = r.hi / y.hi;
        let r = r - y * DD::from(q2);
        let q3 = r.hi / y.hi;
        let (s, e) = quick_two_sum(q1, q2);
        DD { hi: s, lo: e } + DD::from(q3)
    }
}

#[derive(Clone, Copy, Debug)]
pub enum DGate {
    H(usize),
    Rx(usize, DD),
    Cnot { control: usize, target: usize },
}

pub struct DState {
    pub n: usize,
    pub re: Vec<DD>,
    pub im: Vec<DD>,
}

impl DState {
    pub fn zero(n: usize) -> DState {
        let mut re = vec![DD::ZERO; 1 << n];
        re[0] = DD::ONE;
        DState {
            n,
            re,
            im: vec![DD::ZERO; 1 << n],
        }
    }

    pub fn apply(&mut self, g: &DGate) {
        match *g {
            DGate::H(q) => {
                let s = DD::sqrt_half();
                let bit = 1 << q;
                for i in 0..self.re.len() {
                    if i & bit == 0 {
                        let j = i | bit;
                        let (ar, ai, br, bi) = (self.re[i], self.im[i], self.re[j], self.im[j]);
                        self.re[i] = (ar + br) * s;
                        self.im[i] = (ai + bi) * s;
                        self.re[j] = (ar - br) * s;
                        self.im[j] = (ai - bi) * s;
                    }
                }
            }
            DGate::Rx(q, angle) => {
                let (sn, c) = angle.half().sin_cos();
                let bit = 1 << q;
                for i in 0..self.re.len() {
                    if i & bit == 0 {
                        let j = i | bit;
                        let (ar, ai, br, bi) = (self.re[i], self.im[i], self.re[j], self.im[j]);
                        self.re[i] = c * ar + sn * bi;
                        self.im[i] = c * ai - sn * br;
                        self.re[j] = sn * ai + c * br;
                        self.im[j] = c * bi - sn * ar;
                    }
                }
            }
            DGate::Cnot { control, target } => {
                let (cb, tb) = (1 << control, 1 << target);
                for i in 0..self.re.len() {
                    if i & cb != 0 && i & tb == 0 {
                        let j = i | tb;
                        self.re.swap(i, j);
                        self.im.swap(i, j);
                    }
                }
            }
        }
    }

    pub fn expectation_z(&self, q: usize) -> DD {
        let mut acc = DD::ZERO;
        for i in 0..self.re.len() {
            let p = self.re[i] * self.re[i] + self.im[i] * self.im[i];
            acc = if i >> q & 1 == 0 { acc + p } else { acc - p };
        }
        acc
    }
}

pub fn run(n: usize, gates: &[DGate]) -> DState {
    let mut s = DState::zero(n);
    for g in gates {
        s.apply(g);
    }
    s
}
