//! Reverse-mode adjoints over batched jet computations.
//!
//! Every node on an [`AdjointTape`] stores the full block of jets it
//! produced. Replaying the tape backwards propagates adjoints through the
//! jet algebra, so gradients of derivative-dependent losses (such as a PDE
//! residual built from `D_x^m U` and `D_t U`) are exact.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, ArrayView2};

use crate::block::{self, ActivationFn, JetBlock};
use crate::error::{Error, Result};
use crate::jet::{series, JetLayout, MAX_COMP};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(0);

/// A contiguous, row-major parameter matrix inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSlot {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSlot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn shifted(self, base: usize) -> Self {
        ParamSlot {
            offset: self.offset + base,
            ..self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId {
    tape: u64,
    index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationOp {
    Rational(ParamSlot),
    Tanh,
    Sigmoid,
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(ParamSlot),
    Affine {
        input: usize,
        weight: ParamSlot,
        bias: ParamSlot,
    },
    Activate {
        input: usize,
        act: ActivationOp,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Derivatives(usize),
    TimeDerivative(usize),
    SumSquares {
        input: usize,
        scale: f64,
    },
}

/// Append-only record of jet operations over a borrowed parameter vector.
pub struct AdjointTape<'p> {
    id: u64,
    params: &'p [f64],
    ops: Vec<Op>,
    values: Vec<JetBlock>,
}

impl<'p> AdjointTape<'p> {
    pub fn new(params: &'p [f64]) -> Self {
        AdjointTape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            params,
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p [f64] {
        self.params
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    fn push(&mut self, op: Op, value: JetBlock) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        NodeId {
            tape: self.id,
            index: self.ops.len() - 1,
        }
    }

    fn index(&self, node: NodeId) -> Result<usize> {
        if node.tape != self.id || node.index >= self.ops.len() {
            return Err(Error::DanglingNode);
        }
        Ok(node.index)
    }

    fn slot(&self, slot: ParamSlot) -> Result<&'p [f64]> {
        self.params
            .get(slot.range())
            .ok_or_else(|| Error::Shape(format!("parameter slot {slot:?} out of range")))
    }

    fn matrix(&self, slot: ParamSlot) -> Result<ArrayView2<'p, f64>> {
        ArrayView2::from_shape((slot.rows, slot.cols), self.slot(slot)?)
            .map_err(|e| Error::Shape(e.to_string()))
    }

    pub fn value(&self, node: NodeId) -> Result<&JetBlock> {
        Ok(&self.values[self.index(node)?])
    }

    pub fn scalar(&self, node: NodeId) -> Result<f64> {
        let v = self.value(node)?;
        if v.rows() != 1 || v.cols() != 1 {
            return Err(Error::NotScalar {
                rows: v.rows(),
                cols: v.cols(),
            });
        }
        Ok(v.value(0, 0))
    }

    pub fn constant(&mut self, block: JetBlock) -> NodeId {
        self.push(Op::Constant, block)
    }

    /// Parameters as constant jets of the given layout.
    pub fn param(&mut self, slot: ParamSlot, layout: JetLayout) -> Result<NodeId> {
        let vals = self.slot(slot)?;
        let mut block = JetBlock::zeros(slot.rows, slot.cols, layout);
        for r in 0..slot.rows {
            for c in 0..slot.cols {
                block.set(r, 0, c, vals[r * slot.cols + c]);
            }
        }
        Ok(self.push(Op::Param(slot), block))
    }

    /// `x W^T + b` with `W` a `fan_out x fan_in` slot.
    pub fn affine(&mut self, input: NodeId, weight: ParamSlot, bias: ParamSlot) -> Result<NodeId> {
        let i = self.index(input)?;
        let w = self.matrix(weight)?;
        let b = self.slot(bias)?;
        let out = block::affine_forward(&self.values[i], w, b)?;
        Ok(self.push(
            Op::Affine {
                input: i,
                weight,
                bias,
            },
            out,
        ))
    }

    pub fn activate(&mut self, input: NodeId, act: ActivationOp) -> Result<NodeId> {
        let i = self.index(input)?;
        let f = match act {
            ActivationOp::Rational(slot) => ActivationFn::Rational(self.slot(slot)?),
            ActivationOp::Tanh => ActivationFn::Tanh,
            ActivationOp::Sigmoid => ActivationFn::Sigmoid,
        };
        let out = block::activation_forward(&self.values[i], f)?;
        Ok(self.push(Op::Activate { input: i, act }, out))
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        op: fn(usize, usize) -> Op,
        f: fn(JetLayout, &[f64], &[f64], &mut [f64]) -> Result<()>,
    ) -> Result<NodeId> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let out = block::elementwise(&self.values[ia], &self.values[ib], f)?;
        Ok(self.push(op(ia, ib), out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Add, |_, x, y, z| {
            for k in 0..z.len() {
                z[k] = x[k] + y[k];
            }
            Ok(())
        })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Sub, |_, x, y, z| {
            for k in 0..z.len() {
                z[k] = x[k] - y[k];
            }
            Ok(())
        })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Mul, |l, x, y, z| {
            series::mul(l, x, y, z);
            Ok(())
        })
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, Op::Div, series::div)
    }

    /// Column of order-`M` jets to plain values `[U, D_x U, .., D_x^M U]`.
    pub fn derivatives(&mut self, input: NodeId) -> Result<NodeId> {
        let i = self.index(input)?;
        let out = block::derivatives(&self.values[i]);
        Ok(self.push(Op::Derivatives(i), out))
    }

    /// Time components of a block as plain values.
    pub fn time_derivative(&mut self, input: NodeId) -> Result<NodeId> {
        let i = self.index(input)?;
        let src = &self.values[i];
        let t = src
            .layout()
            .time_index()
            .ok_or_else(|| Error::Shape("block carries no time component".into()))?;
        let mut out = JetBlock::zeros(src.rows(), src.cols(), JetLayout::SCALAR);
        for r in 0..src.rows() {
            for c in 0..src.cols() {
                out.set(r, 0, c, src.get(r, t, c));
            }
        }
        Ok(self.push(Op::TimeDerivative(i), out))
    }

    /// `scale * sum(values^2)` as a scalar node.
    pub fn sum_squares(&mut self, input: NodeId, scale: f64) -> Result<NodeId> {
        let i = self.index(input)?;
        let src = &self.values[i];
        let mut acc = 0.0;
        for r in 0..src.rows() {
            for c in 0..src.cols() {
                let v = src.value(r, c);
                acc += v * v;
            }
        }
        let out = JetBlock::from_scalars(1, 1, &[scale * acc])?;
        Ok(self.push(Op::SumSquares { input: i, scale }, out))
    }

    /// Gradient of a scalar output with respect to every parameter.
    ///
    /// The result has one entry per parameter of the borrowed vector;
    /// parameters that did not participate get exactly zero.
    pub fn backward(&self, output: NodeId) -> Result<Vec<f64>> {
        let out = self.index(output)?;
        self.scalar(output)?;
        let mut grads = vec![0.0; self.params.len()];
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; out + 1];
        let mut seed = Array2::zeros(self.values[out].data().dim());
        seed[(0, 0)] = 1.0;
        adj[out] = Some(seed);

        for n in (0..=out).rev() {
            let Some(g) = adj[n].take() else { continue };
            match &self.ops[n] {
                Op::Constant => {}
                Op::Param(slot) => {
                    let nc = self.values[n].layout().ncomp();
                    for r in 0..slot.rows {
                        for c in 0..slot.cols {
                            grads[slot.offset + r * slot.cols + c] += g[(r * nc, c)];
                        }
                    }
                }
                Op::Affine {
                    input,
                    weight,
                    bias,
                } => {
                    let w = self.matrix(*weight)?;
                    let x = &self.values[*input];
                    let needs_input = !matches!(self.ops[*input], Op::Constant);
                    let mut adj_in = needs_input.then(|| take_or_zeros(&mut adj, *input, x));
                    let (gw, gb) = split_two(&mut grads, weight.range(), bias.range());
                    block::affine_backward(x, w, &g, adj_in.as_mut(), gw, gb);
                    if let Some(a) = adj_in {
                        adj[*input] = Some(a);
                    }
                }
                Op::Activate { input, act } => {
                    let x = &self.values[*input];
                    let mut adj_in = take_or_zeros(&mut adj, *input, x);
                    match act {
                        ActivationOp::Rational(slot) => {
                            let coeffs = self.slot(*slot)?;
                            let mut gc = [0.0; 7];
                            block::activation_backward(
                                x,
                                ActivationFn::Rational(coeffs),
                                &g,
                                &mut adj_in,
                                &mut gc,
                            );
                            for (k, v) in gc.iter().enumerate() {
                                grads[slot.offset + k] += v;
                            }
                        }
                        ActivationOp::Tanh => {
                            block::activation_backward(x, ActivationFn::Tanh, &g, &mut adj_in, &mut [])
                        }
                        ActivationOp::Sigmoid => {
                            block::activation_backward(x, ActivationFn::Sigmoid, &g, &mut adj_in, &mut [])
                        }
                    }
                    adj[*input] = Some(adj_in);
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(self.ops[n], Op::Sub(..)) { -1.0 } else { 1.0 };
                    let mut ga = take_or_zeros(&mut adj, *a, &self.values[*a]);
                    ga += &g;
                    adj[*a] = Some(ga);
                    let mut gb = take_or_zeros(&mut adj, *b, &self.values[*b]);
                    gb.scaled_add(sign, &g);
                    adj[*b] = Some(gb);
                }
                Op::Mul(a, b) => self.binary_backward(&mut adj, *a, *b, &g, |_, x, y, da, db| {
                    da.copy_from_slice(y);
                    db.copy_from_slice(x);
                }),
                Op::Div(a, b) => self.binary_backward(&mut adj, *a, *b, &g, |l, x, y, da, db| {
                    let n = l.ncomp();
                    let mut q = [0.0; MAX_COMP];
                    // Forward already succeeded, so the denominator is safe.
                    let _ = series::inv(l, y, da);
                    let _ = series::div(l, x, y, &mut q[..n]);
                    series::mul(l, &q[..n], da, db);
                    for v in db.iter_mut() {
                        *v = -*v;
                    }
                }),
                Op::Derivatives(input) => {
                    let x = &self.values[*input];
                    let mut adj_in = take_or_zeros(&mut adj, *input, x);
                    block::derivatives_backward(x, &g, &mut adj_in);
                    adj[*input] = Some(adj_in);
                }
                Op::TimeDerivative(input) => {
                    let x = &self.values[*input];
                    let t = x.layout().time_index().expect("checked on record");
                    let nc = x.layout().ncomp();
                    let mut adj_in = take_or_zeros(&mut adj, *input, x);
                    for r in 0..x.rows() {
                        for c in 0..x.cols() {
                            adj_in[(r * nc + t, c)] += g[(r, c)];
                        }
                    }
                    adj[*input] = Some(adj_in);
                }
                Op::SumSquares { input, scale } => {
                    let x = &self.values[*input];
                    let nc = x.layout().ncomp();
                    let mut adj_in = take_or_zeros(&mut adj, *input, x);
                    let s = 2.0 * scale * g[(0, 0)];
                    for r in 0..x.rows() {
                        for c in 0..x.cols() {
                            adj_in[(r * nc, c)] += s * x.value(r, c);
                        }
                    }
                    adj[*input] = Some(adj_in);
                }
            }
        }
        Ok(grads)
    }

    fn binary_backward(
        &self,
        adj: &mut [Option<Array2<f64>>],
        a: usize,
        b: usize,
        g: &Array2<f64>,
        partials: impl Fn(JetLayout, &[f64], &[f64], &mut [f64], &mut [f64]),
    ) {
        let (xa, xb) = (&self.values[a], &self.values[b]);
        let mut ga = take_or_zeros(adj, a, xa);
        if a == b {
            block::elementwise_backward(xa, xb, g, Some(&mut ga), None, &partials);
            let mut gb = Array2::zeros(ga.dim());
            block::elementwise_backward(xa, xb, g, None, Some(&mut gb), &partials);
            ga += &gb;
            adj[a] = Some(ga);
            return;
        }
        let mut gb = take_or_zeros(adj, b, xb);
        block::elementwise_backward(xa, xb, g, Some(&mut ga), Some(&mut gb), partials);
        adj[a] = Some(ga);
        adj[b] = Some(gb);
    }
}

fn take_or_zeros(adj: &mut [Option<Array2<f64>>], i: usize, like: &JetBlock) -> Array2<f64> {
    adj[i]
        .take()
        .unwrap_or_else(|| Array2::zeros(like.data().dim()))
}

fn split_two(
    grads: &mut [f64],
    a: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a.end <= b.start, "weight slot precedes bias slot");
    let (head, tail) = grads.split_at_mut(b.start);
    (&mut head[a], &mut tail[..b.end - b.start])
}

/// Gradient of `output` with respect to every parameter of the tape.
pub fn tape_backward(tape: &AdjointTape, output: NodeId) -> Result<Vec<f64>> {
    tape.backward(output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{Coord, Jet};

    fn slot(offset: usize) -> ParamSlot {
        ParamSlot {
            offset,
            rows: 1,
            cols: 1,
        }
    }

    #[test]
    fn linear_gradient() {
        let params = [2.0];
        let mut tape = AdjointTape::new(&params);
        let w = tape.param(slot(0), JetLayout::SCALAR).unwrap();
        let x = tape.constant(JetBlock::from_scalars(1, 1, &[3.0]).unwrap());
        let y = tape.mul(w, x).unwrap();
        assert_eq!(tape.scalar(y).unwrap(), 6.0);
        assert_eq!(tape_backward(&tape, y).unwrap(), vec![3.0]);
    }

    #[test]
    fn quadratic_gradient() {
        let params = [1.5, 4.0];
        let mut tape = AdjointTape::new(&params);
        let w = tape.param(slot(0), JetLayout::SCALAR).unwrap();
        let y = tape.mul(w, w).unwrap();
        // The second parameter never participates.
        assert_eq!(tape.backward(y).unwrap(), vec![3.0, 0.0]);
    }

    #[test]
    fn foreign_node_is_dangling() {
        let params = [1.0];
        let mut a = AdjointTape::new(&params);
        let b = AdjointTape::new(&params);
        let n = a.param(slot(0), JetLayout::SCALAR).unwrap();
        assert!(matches!(b.backward(n), Err(Error::DanglingNode)));
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let params = [1.0, 2.0];
        let mut tape = AdjointTape::new(&params);
        let n = tape
            .param(ParamSlot { offset: 0, rows: 1, cols: 2 }, JetLayout::SCALAR)
            .unwrap();
        assert!(matches!(tape.backward(n), Err(Error::NotScalar { .. })));
    }

    /// Gradient through a derivative: d/dw of (d/dx (w x^2))^2 at x = 3 is
    /// 2 (2 w x) (2 x) = 8 w x^2.
    #[test]
    fn gradient_through_spatial_derivative() {
        let params = [0.7];
        let l = JetLayout::new(1, true);
        let mut tape = AdjointTape::new(&params);
        let w = tape.param(slot(0), l).unwrap();
        let x = tape.constant(JetBlock::from_jets(1, 1, &[Jet::seed(3.0, Coord::X, 1)]).unwrap());
        let xx = tape.mul(x, x).unwrap();
        let f = tape.mul(w, xx).unwrap();
        let d = tape.derivatives(f).unwrap();
        // Column 1 holds f'; square it via sum of squares over both columns
        // and subtract the value part analytically.
        let loss = tape.sum_squares(d, 1.0).unwrap();
        let g = tape.backward(loss).unwrap()[0];
        let (wv, xv) = (0.7, 3.0f64);
        let expected = 2.0 * (wv * xv * xv) * xv * xv + 8.0 * wv * xv * xv;
        assert!((g - expected).abs() < 1e-12, "{g} vs {expected}");
    }
}
