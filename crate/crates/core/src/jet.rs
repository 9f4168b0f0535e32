//! Truncated Taylor jets in `x` with one first-order `t` tangent.
//!
//! A jet of order `M` carries a value, the pure spatial derivatives of
//! orders `1..=M` and the first time derivative. Internally all arithmetic
//! happens on Taylor coefficients (`a_k = f^(k) / k!`) in the commutative
//! algebra `R[e]/(e^(M+1)) x R[tau]/(tau^2)` with the mixed `tau * e^k`
//! terms quotiented out, so sums, products and quotients stay exact.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Highest spatial derivative order the batched kernels support.
pub const MAX_ORDER: usize = 4;

/// Maximum number of components per jet: value, `MAX_ORDER` x-coefficients, dt.
pub const MAX_COMP: usize = MAX_ORDER + 2;

/// Denominators with magnitude below this are treated as poles.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coord {
    X,
    T,
}

/// Value, pure x-derivatives of orders `1..=order`, and the first t-derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub val: f64,
    pub dx: Vec<f64>,
    pub dt: f64,
}

impl Jet {
    pub fn constant(val: f64, order: usize) -> Self {
        Jet {
            val,
            dx: vec![0.0; order],
            dt: 0.0,
        }
    }

    pub fn seed(coord: f64, which: Coord, order: usize) -> Self {
        let mut jet = Jet::constant(coord, order);
        match which {
            Coord::X => {
                if order > 0 {
                    jet.dx[0] = 1.0;
                }
            }
            Coord::T => jet.dt = 1.0,
        }
        jet
    }

    pub fn order(&self) -> usize {
        self.dx.len()
    }

    /// Layout of this jet when packed with its time component.
    pub fn layout(&self) -> JetLayout {
        JetLayout::new(self.order(), true)
    }

    /// Packs into Taylor-coefficient form `[a0, a1, .., aM, dt]`.
    pub fn to_taylor(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.order() + 2);
        out.push(self.val);
        let mut fact = 1.0;
        for (k, d) in self.dx.iter().enumerate() {
            fact *= (k + 1) as f64;
            out.push(d / fact);
        }
        out.push(self.dt);
        out
    }

    pub fn from_taylor(coeffs: &[f64], layout: JetLayout) -> Self {
        let mut dx = Vec::with_capacity(layout.order);
        let mut fact = 1.0;
        for k in 1..=layout.order {
            fact *= k as f64;
            dx.push(coeffs[k] * fact);
        }
        Jet {
            val: coeffs[0],
            dx,
            dt: if layout.time { coeffs[layout.order + 1] } else { 0.0 },
        }
    }

    fn check_order(&self, other: &Jet) -> Result<()> {
        if self.order() != other.order() {
            return Err(Error::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }
}

pub fn jet_add(a: &Jet, b: &Jet) -> Result<Jet> {
    a.check_order(b)?;
    Ok(Jet {
        val: a.val + b.val,
        dx: a.dx.iter().zip(&b.dx).map(|(x, y)| x + y).collect(),
        dt: a.dt + b.dt,
    })
}

pub fn jet_sub(a: &Jet, b: &Jet) -> Result<Jet> {
    a.check_order(b)?;
    Ok(Jet {
        val: a.val - b.val,
        dx: a.dx.iter().zip(&b.dx).map(|(x, y)| x - y).collect(),
        dt: a.dt - b.dt,
    })
}

pub fn jet_mul(a: &Jet, b: &Jet) -> Result<Jet> {
    a.check_order(b)?;
    let layout = a.layout();
    let (ta, tb) = (a.to_taylor(), b.to_taylor());
    let mut out = vec![0.0; layout.ncomp()];
    series::mul(layout, &ta, &tb, &mut out);
    Ok(Jet::from_taylor(&out, layout))
}

pub fn jet_div(a: &Jet, b: &Jet) -> Result<Jet> {
    a.check_order(b)?;
    let layout = a.layout();
    let (ta, tb) = (a.to_taylor(), b.to_taylor());
    let mut out = vec![0.0; layout.ncomp()];
    series::div(layout, &ta, &tb, &mut out)?;
    Ok(Jet::from_taylor(&out, layout))
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        jet_add(self, rhs).expect("jet order mismatch")
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        jet_sub(self, rhs).expect("jet order mismatch")
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        jet_mul(self, rhs).expect("jet order mismatch")
    }
}

/// Shape of a packed jet: spatial order and whether a time tangent is carried.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JetLayout {
    pub order: usize,
    pub time: bool,
}

impl JetLayout {
    pub const SCALAR: JetLayout = JetLayout {
        order: 0,
        time: false,
    };

    pub fn new(order: usize, time: bool) -> Self {
        JetLayout { order, time }
    }

    pub fn ncomp(&self) -> usize {
        self.order + 1 + usize::from(self.time)
    }

    pub fn time_index(&self) -> Option<usize> {
        self.time.then_some(self.order + 1)
    }
}

/// Arithmetic on packed Taylor coefficients `[a0..aM, (dt)]`.
pub(crate) mod series {
    use super::{JetLayout, DENOMINATOR_FLOOR};
    use crate::error::{Error, Result};

    pub fn mul(l: JetLayout, a: &[f64], b: &[f64], out: &mut [f64]) {
        // Terms are paired symmetrically so that `mul(a, b) == mul(b, a)` bitwise.
        for k in 0..=l.order {
            let mut acc = 0.0;
            for i in 0..(k + 1) / 2 {
                acc += a[i] * b[k - i] + a[k - i] * b[i];
            }
            if k % 2 == 0 {
                acc += a[k / 2] * b[k / 2];
            }
            out[k] = acc;
        }
        if let Some(t) = l.time_index() {
            out[t] = a[t] * b[0] + a[0] * b[t];
        }
    }

    pub fn div(l: JetLayout, a: &[f64], b: &[f64], out: &mut [f64]) -> Result<()> {
        let b0 = b[0];
        if b0.abs() < DENOMINATOR_FLOOR || !b0.is_finite() {
            return Err(Error::DivisionByZero { value: b0 });
        }
        for k in 0..=l.order {
            let mut acc = a[k];
            for i in 1..=k {
                acc -= b[i] * out[k - i];
            }
            out[k] = acc / b0;
        }
        if let Some(t) = l.time_index() {
            out[t] = (a[t] - out[0] * b[t]) / b0;
        }
        Ok(())
    }

    /// Reciprocal series `1 / b`.
    pub fn inv(l: JetLayout, b: &[f64], out: &mut [f64]) -> Result<()> {
        let mut one = [0.0; super::MAX_COMP];
        one[0] = 1.0;
        div(l, &one[..l.ncomp()], b, out)
    }

    /// `acc += T(s)^T g` where `T(s)` is multiplication by `s`.
    pub fn tmul_acc(l: JetLayout, s: &[f64], g: &[f64], acc: &mut [f64]) {
        for i in 0..=l.order {
            let mut sum = 0.0;
            for k in i..=l.order {
                sum += s[k - i] * g[k];
            }
            acc[i] += sum;
        }
        if let Some(t) = l.time_index() {
            acc[0] += s[t] * g[t];
            acc[t] += s[0] * g[t];
        }
    }

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}
