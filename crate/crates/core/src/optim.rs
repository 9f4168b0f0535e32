//! First- and quasi-second-order optimizers over a flat parameter vector.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient length");
        assert_eq!(params.len(), self.m.len(), "optimizer state length");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Result of one L-BFGS iteration.
#[derive(Clone, Debug)]
pub struct LbfgsStep {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// False when no decrease was found; parameters are then unchanged.
    pub accepted: bool,
    pub halvings: usize,
}

#[derive(Clone, Debug)]
pub struct Lbfgs {
    pub lr: f64,
    pub history: usize,
    pub max_halvings: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Lbfgs {
    pub fn new(lr: f64) -> Self {
        Lbfgs {
            lr,
            history: 10,
            max_halvings: 20,
            pairs: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        self.pairs.clear();
    }

    pub fn stored_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Two-loop recursion: `-H g` for the current inverse-Hessian estimate.
    pub fn direction(&self, grad: &[f64]) -> Vec<f64> {
        let mut q = grad.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    /// One iteration from `params` where the objective is `loss` with gradient `grad`.
    ///
    /// Tries `params + lr * 2^-j * d` for `j = 0..=max_halvings` and accepts the
    /// first trial with a strictly smaller loss. A trial that hits a pole in
    /// the objective counts as a failed trial; any other error propagates.
    pub fn step<F>(&mut self, params: &mut [f64], loss: f64, grad: &[f64], mut objective: F) -> Result<LbfgsStep>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let mut d = self.direction(grad);
        if dot(&d, grad) >= 0.0 {
            // Curvature pairs went stale; fall back to steepest descent.
            self.pairs.clear();
            d = grad.iter().map(|g| -g).collect();
        }
        let mut step = self.lr;
        let mut trial = params.to_vec();
        for halvings in 0..=self.max_halvings {
            for i in 0..params.len() {
                trial[i] = params[i] + step * d[i];
            }
            match objective(&trial) {
                Ok((f, g)) if f.is_finite() && f < loss => {
                    let s: Vec<f64> = trial.iter().zip(params.iter()).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g.iter().zip(grad).map(|(a, b)| a - b).collect();
                    let sy = dot(&s, &y);
                    if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                        if self.pairs.len() == self.history {
                            self.pairs.pop_front();
                        }
                        self.pairs.push_back((s, y, 1.0 / sy));
                    }
                    params.copy_from_slice(&trial);
                    return Ok(LbfgsStep {
                        loss: f,
                        grad: g,
                        accepted: true,
                        halvings,
                    });
                }
                Ok(_) | Err(Error::Pole { .. }) | Err(Error::DivisionByZero { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        Ok(LbfgsStep {
            loss,
            grad: grad.to_vec(),
            accepted: false,
            halvings: self.max_halvings,
        })
    }
}
