//! Trainable type-(3,2) rational activations and the fixed alternatives.

use std::sync::OnceLock;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{series, Jet, JetLayout, DENOMINATOR_FLOOR, MAX_COMP};
use crate::linalg::lstsq_min_norm;

/// Number of trainable coefficients in one rational activation.
pub const RATIONAL_PARAMS: usize = 7;

/// `(a0 + a1 z + a2 z^2 + a3 z^3) / (b0 + b1 z + b2 z^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalActivation {
    pub num: [f64; 4],
    pub den: [f64; 3],
}

impl RationalActivation {
    pub const IDENTITY: RationalActivation = RationalActivation {
        num: [0.0, 1.0, 0.0, 0.0],
        den: [1.0, 0.0, 0.0],
    };

    pub fn from_slice(c: &[f64]) -> Self {
        RationalActivation {
            num: [c[0], c[1], c[2], c[3]],
            den: [c[4], c[5], c[6]],
        }
    }

    pub fn to_array(&self) -> [f64; RATIONAL_PARAMS] {
        let [a0, a1, a2, a3] = self.num;
        let [b0, b1, b2] = self.den;
        [a0, a1, a2, a3, b0, b1, b2]
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let [a0, a1, a2, a3] = self.num;
        let [b0, b1, b2] = self.den;
        let p = ((a3 * x + a2) * x + a1) * x + a0;
        let q = (b2 * x + b1) * x + b0;
        if q.abs() < DENOMINATOR_FLOOR {
            return Err(Error::Pole { value: q, row: 0 });
        }
        Ok(p / q)
    }

    /// Real roots of the denominator, if any.
    pub fn denominator_roots(&self) -> Vec<f64> {
        let [c, b, a] = self.den;
        if a.abs() < 1e-300 {
            return if b.abs() < 1e-300 { vec![] } else { vec![-c / b] };
        }
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return vec![];
        }
        let s = disc.sqrt();
        let q = -0.5 * (b + b.signum() * s);
        let mut roots = vec![q / a];
        if q != 0.0 {
            roots.push(c / q);
        }
        roots
    }
}

/// Evaluates the activation on a jet by Horner's rule on numerator and
/// denominator followed by one jet division.
pub fn activation_eval(act: &RationalActivation, z: &Jet) -> Result<Jet> {
    let layout = z.layout();
    let tz = z.to_taylor();
    let n = layout.ncomp();
    let coeffs = act.to_array();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    horner(layout, &coeffs[..4], &tz, &mut p, &mut tmp);
    horner(layout, &coeffs[4..], &tz, &mut q, &mut tmp);
    let mut out = vec![0.0; n];
    series::div(layout, &p, &q, &mut out).map_err(|_| Error::Pole { value: q[0], row: 0 })?;
    Ok(Jet::from_taylor(&out, layout))
}

fn horner(l: JetLayout, coeffs: &[f64], z: &[f64], out: &mut [f64], tmp: &mut [f64]) {
    out.fill(0.0);
    out[0] = coeffs[coeffs.len() - 1];
    for &c in coeffs.iter().rev().skip(1) {
        series::mul(l, out, z, tmp);
        out.copy_from_slice(tmp);
        out[0] += c;
    }
}

/// Batched kernels on fixed-size stack buffers.
pub(crate) mod kernel {
    use super::*;

    #[inline]
    fn horner_fixed(l: JetLayout, coeffs: &[f64], z: &[f64], out: &mut [f64; MAX_COMP]) {
        let n = l.ncomp();
        let mut tmp = [0.0; MAX_COMP];
        *out = [0.0; MAX_COMP];
        out[0] = coeffs[coeffs.len() - 1];
        for &c in coeffs.iter().rev().skip(1) {
            series::mul(l, &out[..n], z, &mut tmp[..n]);
            out[..n].copy_from_slice(&tmp[..n]);
            out[0] += c;
        }
    }

    /// Forward value of the rational on one packed jet. Returns the
    /// denominator value on a pole.
    #[inline]
    pub fn rational_forward(
        l: JetLayout,
        coeffs: &[f64],
        z: &[f64],
        out: &mut [f64],
    ) -> std::result::Result<(), f64> {
        let n = l.ncomp();
        if n == 1 {
            let x = z[0];
            let p = ((coeffs[3] * x + coeffs[2]) * x + coeffs[1]) * x + coeffs[0];
            let q = (coeffs[6] * x + coeffs[5]) * x + coeffs[4];
            if q.abs() < DENOMINATOR_FLOOR || !q.is_finite() {
                return Err(q);
            }
            out[0] = p / q;
            return Ok(());
        }
        let mut p = [0.0; MAX_COMP];
        let mut q = [0.0; MAX_COMP];
        horner_fixed(l, &coeffs[..4], z, &mut p);
        horner_fixed(l, &coeffs[4..7], z, &mut q);
        series::div(l, &p[..n], &q[..n], out).map_err(|_| q[0])
    }

    /// Reverse pass of the rational: accumulates into `adj_z` and `grad`.
    #[inline]
    pub fn rational_backward(
        l: JetLayout,
        coeffs: &[f64],
        z: &[f64],
        g: &[f64],
        adj_z: &mut [f64],
        grad: &mut [f64],
    ) {
        let n = l.ncomp();
        let (a, b) = (&coeffs[..4], &coeffs[4..7]);
        let mut z2 = [0.0; MAX_COMP];
        let mut z3 = [0.0; MAX_COMP];
        series::mul(l, z, z, &mut z2[..n]);
        series::mul(l, &z2[..n], z, &mut z3[..n]);
        let mut one = [0.0; MAX_COMP];
        one[0] = 1.0;
        let pow: [&[f64]; 4] = [&one[..n], z, &z2[..n], &z3[..n]];

        let mut p = [0.0; MAX_COMP];
        let mut q = [0.0; MAX_COMP];
        let mut dp = [0.0; MAX_COMP];
        let mut dq = [0.0; MAX_COMP];
        for k in 0..n {
            p[k] = a[0] * pow[0][k] + a[1] * pow[1][k] + a[2] * pow[2][k] + a[3] * pow[3][k];
            q[k] = b[0] * pow[0][k] + b[1] * pow[1][k] + b[2] * pow[2][k];
            dp[k] = a[1] * pow[0][k] + 2.0 * a[2] * pow[1][k] + 3.0 * a[3] * pow[2][k];
            dq[k] = b[1] * pow[0][k] + 2.0 * b[2] * pow[1][k];
        }
        let mut r = [0.0; MAX_COMP];
        // The forward pass already rejected poles.
        if series::inv(l, &q[..n], &mut r[..n]).is_err() {
            return;
        }
        let mut y = [0.0; MAX_COMP];
        series::mul(l, &p[..n], &r[..n], &mut y[..n]);
        let mut yr = [0.0; MAX_COMP];
        series::mul(l, &y[..n], &r[..n], &mut yr[..n]);

        let mut pbar = [0.0; MAX_COMP];
        series::tmul_acc(l, &r[..n], g, &mut pbar[..n]);
        let mut qbar = [0.0; MAX_COMP];
        series::tmul_acc(l, &yr[..n], g, &mut qbar[..n]);
        for v in &mut qbar[..n] {
            *v = -*v;
        }
        for i in 0..4 {
            grad[i] += series::dot(pow[i], &pbar[..n]);
        }
        for i in 0..3 {
            grad[4 + i] += series::dot(pow[i], &qbar[..n]);
        }
        series::tmul_acc(l, &dp[..n], &pbar[..n], adj_z);
        series::tmul_acc(l, &dq[..n], &qbar[..n], adj_z);
    }

    /// Functions with `f' = w(f)` for a quadratic `w`: tanh and the logistic sigmoid.
    #[derive(Clone, Copy)]
    pub enum Smooth {
        Tanh,
        Sigmoid,
    }

    impl Smooth {
        fn value(self, x: f64) -> f64 {
            match self {
                Smooth::Tanh => x.tanh(),
                Smooth::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            }
        }

        /// Series of `f'(z)` given the series `y = f(z)` up to index `m`.
        fn deriv_coeff(self, y: &[f64], m: usize) -> f64 {
            let mut yy = 0.0;
            for i in 0..=m {
                yy += y[i] * y[m - i];
            }
            match self {
                Smooth::Tanh => f64::from(m == 0) - yy,
                Smooth::Sigmoid => y[m] - yy,
            }
        }
    }

    /// Returns `y = f(z)` and `w = f'(z)` as packed series.
    #[inline]
    pub fn smooth_series(
        l: JetLayout,
        f: Smooth,
        z: &[f64],
        y: &mut [f64],
        w: &mut [f64; MAX_COMP],
    ) {
        y[0] = f.value(z[0]);
        w[0] = f.deriv_coeff(y, 0);
        for k in 1..=l.order {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * z[j] * w[k - j];
            }
            y[k] = acc / k as f64;
            w[k] = f.deriv_coeff(y, k);
        }
        if let Some(t) = l.time_index() {
            y[t] = w[0] * z[t];
            w[t] = match f {
                Smooth::Tanh => -2.0 * y[0] * y[t],
                Smooth::Sigmoid => y[t] - 2.0 * y[0] * y[t],
            };
        }
    }
}

/// Which activation a network's hidden layers use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[default]
    Rational,
    Tanh,
    Sigmoid,
}

impl ActivationKind {
    pub fn params_per_layer(self) -> usize {
        match self {
            ActivationKind::Rational => RATIONAL_PARAMS,
            ActivationKind::Tanh | ActivationKind::Sigmoid => 0,
        }
    }
}

const FIT_GRID: usize = 2001;
const FIT_ITERS: usize = 200;

/// Near-minimax type-(3,2) rational approximation of ReLU on `[-1, 1]`.
///
/// Lawson-style reweighting of the linearized problem
/// `min sum w_i (P(x_i) - f_i Q(x_i))^2 / Q_prev(x_i)^2` with `b0 = 1`;
/// the iterate with the smallest maximum error is returned.
pub fn init_rational_relu_fit() -> Result<RationalActivation> {
    let x: Vec<f64> = (0..FIT_GRID)
        .map(|i| -1.0 + 2.0 * i as f64 / (FIT_GRID - 1) as f64)
        .collect();
    let f: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let mut w = vec![1.0 / FIT_GRID as f64; FIT_GRID];
    let mut q_prev = vec![1.0; FIT_GRID];
    let mut best: Option<(f64, RationalActivation)> = None;

    for _ in 0..FIT_ITERS {
        let mut a = Array2::zeros((FIT_GRID, 6));
        let mut rhs = Array1::zeros(FIT_GRID);
        for i in 0..FIT_GRID {
            let s = w[i].sqrt() / q_prev[i];
            let xi = x[i];
            let row = [1.0, xi, xi * xi, xi * xi * xi, -f[i] * xi, -f[i] * xi * xi];
            for (j, v) in row.iter().enumerate() {
                a[(i, j)] = v * s;
            }
            rhs[i] = f[i] * s;
        }
        let th = lstsq_min_norm(a.view(), rhs.view());
        let act = RationalActivation {
            num: [th[0], th[1], th[2], th[3]],
            den: [1.0, th[4], th[5]],
        };
        let mut max_err = 0.0f64;
        let mut errs = vec![0.0; FIT_GRID];
        let mut positive = true;
        for i in 0..FIT_GRID {
            let q = (act.den[2] * x[i] + act.den[1]) * x[i] + act.den[0];
            if q <= 0.0 {
                positive = false;
                break;
            }
            let p = ((act.num[3] * x[i] + act.num[2]) * x[i] + act.num[1]) * x[i] + act.num[0];
            errs[i] = p / q - f[i];
            max_err = max_err.max(errs[i].abs());
            q_prev[i] = q;
        }
        if !positive || !max_err.is_finite() {
            break;
        }
        if best.as_ref().is_none_or(|(e, _)| max_err < *e) {
            best = Some((max_err, act));
        }
        let mut total = 0.0;
        for i in 0..FIT_GRID {
            w[i] *= errs[i].abs();
            total += w[i];
        }
        if total <= 0.0 {
            break;
        }
        for v in &mut w {
            *v /= total;
        }
    }

    let (err, act) = best.ok_or_else(|| Error::FitFailure("no admissible iterate".into()))?;
    if err > 0.05 {
        return Err(Error::FitFailure(format!("max error {err} above 0.05")));
    }
    if act.denominator_roots().iter().any(|r| r.abs() <= 10.0) {
        return Err(Error::FitFailure("denominator has a root in [-10, 10]".into()));
    }
    Ok(act)
}

/// Cached ReLU fit used to initialize every rational layer.
pub fn default_rational() -> RationalActivation {
    static FIT: OnceLock<RationalActivation> = OnceLock::new();
    *FIT.get_or_init(|| init_rational_relu_fit().expect("ReLU fit is deterministic and validated"))
}
