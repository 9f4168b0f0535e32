//! Batches of jets and the dense kernels that act on them.
//!
//! A `JetBlock` holds `rows x cols` jets. Storage is a matrix with one row
//! per (point, component) pair and one column per unit, so an affine layer
//! applied to every component of every jet is a single matrix product.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

use crate::activation::kernel::{self, Smooth};
use crate::error::{Error, Result};
use crate::jet::{Jet, JetLayout, MAX_COMP};

#[derive(Clone, Debug, PartialEq)]
pub struct JetBlock {
    rows: usize,
    cols: usize,
    layout: JetLayout,
    data: Array2<f64>,
}

impl JetBlock {
    pub fn zeros(rows: usize, cols: usize, layout: JetLayout) -> Self {
        JetBlock {
            rows,
            cols,
            layout,
            data: Array2::zeros((rows * layout.ncomp(), cols)),
        }
    }

    /// Plain values, `values` in row-major order.
    pub fn from_scalars(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} block",
                values.len()
            )));
        }
        let data = Array2::from_shape_vec((rows, cols), values.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(JetBlock {
            rows,
            cols,
            layout: JetLayout::SCALAR,
            data,
        })
    }

    /// Two-column input block `(x, t)` with `x` seeded in space and `t` in time.
    pub fn seeded_coords(points: &[[f64; 2]], layout: JetLayout) -> Self {
        let mut block = JetBlock::zeros(points.len(), 2, layout);
        for (r, &[x, t]) in points.iter().enumerate() {
            block.set(r, 0, 0, x);
            block.set(r, 0, 1, t);
            if layout.order > 0 {
                block.set(r, 1, 0, 1.0);
            }
            if let Some(ti) = layout.time_index() {
                block.set(r, ti, 1, 1.0);
            }
        }
        block
    }

    /// Builds a block from row-major jets that all share one order.
    pub fn from_jets(rows: usize, cols: usize, jets: &[Jet]) -> Result<Self> {
        if jets.len() != rows * cols || jets.is_empty() {
            return Err(Error::Shape(format!("{} jets for {rows}x{cols}", jets.len())));
        }
        let layout = jets[0].layout();
        let mut block = JetBlock::zeros(rows, cols, layout);
        for (i, jet) in jets.iter().enumerate() {
            if jet.order() != layout.order {
                return Err(Error::OrderMismatch {
                    left: layout.order,
                    right: jet.order(),
                });
            }
            let (r, c) = (i / cols, i % cols);
            for (k, v) in jet.to_taylor().into_iter().enumerate() {
                block.set(r, k, c, v);
            }
        }
        Ok(block)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> JetLayout {
        self.layout
    }

    /// Taylor component `k` of jet `(r, c)`.
    #[inline]
    pub fn get(&self, r: usize, k: usize, c: usize) -> f64 {
        self.data[(r * self.layout.ncomp() + k, c)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, k: usize, c: usize, v: f64) {
        let nc = self.layout.ncomp();
        self.data[(r * nc + k, c)] = v;
    }

    pub fn value(&self, r: usize, c: usize) -> f64 {
        self.get(r, 0, c)
    }

    pub fn jet(&self, r: usize, c: usize) -> Jet {
        let coeffs: Vec<f64> = (0..self.layout.ncomp()).map(|k| self.get(r, k, c)).collect();
        Jet::from_taylor(&coeffs, self.layout)
    }

    /// Values (component 0) of column `c`.
    pub fn column_values(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.value(r, c)).collect()
    }

    pub(crate) fn data(&self) -> &Array2<f64> {
        &self.data
    }

    /// Applies `(v - shift[c]) * scale[c]` to every jet in column `c`.
    pub fn affine_columns(&mut self, shift: &[f64], scale: &[f64]) {
        let nc = self.layout.ncomp();
        for r in 0..self.rows {
            for c in 0..self.cols {
                for k in 0..nc {
                    let v = self.get(r, k, c);
                    let v = if k == 0 { v - shift[c] } else { v };
                    self.set(r, k, c, v * scale[c]);
                }
            }
        }
    }

    fn same_shape(&self, other: &JetBlock) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols || self.layout != other.layout {
            return Err(Error::Shape(format!(
                "{}x{} {:?} vs {}x{} {:?}",
                self.rows, self.cols, self.layout, other.rows, other.cols, other.layout
            )));
        }
        Ok(())
    }
}

/// Elementwise activation applied to a block.
#[derive(Clone, Copy, Debug)]
pub enum ActivationFn<'a> {
    Rational(&'a [f64]),
    Tanh,
    Sigmoid,
}

#[inline]
fn gather(data: &[f64], nc: usize, cols: usize, r: usize, c: usize, out: &mut [f64; MAX_COMP]) {
    for k in 0..nc {
        out[k] = data[(r * nc + k) * cols + c];
    }
}

#[inline]
fn scatter(data: &mut [f64], nc: usize, cols: usize, r: usize, c: usize, v: &[f64]) {
    for k in 0..nc {
        data[(r * nc + k) * cols + c] = v[k];
    }
}

#[inline]
fn scatter_add(data: &mut [f64], nc: usize, cols: usize, r: usize, c: usize, v: &[f64]) {
    for k in 0..nc {
        data[(r * nc + k) * cols + c] += v[k];
    }
}

pub(crate) fn affine_forward(
    input: &JetBlock,
    weight: ArrayView2<f64>,
    bias: &[f64],
) -> Result<JetBlock> {
    if weight.ncols() != input.cols || weight.nrows() != bias.len() {
        return Err(Error::Shape(format!(
            "affine {}x{} on {} inputs",
            weight.nrows(),
            weight.ncols(),
            input.cols
        )));
    }
    let nc = input.layout.ncomp();
    let mut data = input.data.dot(&weight.t());
    if !data.is_standard_layout() {
        data = data.as_standard_layout().into_owned();
    }
    for r in 0..input.rows {
        let mut row = data.row_mut(r * nc);
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(JetBlock {
        rows: input.rows,
        cols: weight.nrows(),
        layout: input.layout,
        data,
    })
}

/// Accumulates input adjoint and weight/bias gradients of an affine layer.
pub(crate) fn affine_backward(
    input: &JetBlock,
    weight: ArrayView2<f64>,
    adj_out: &Array2<f64>,
    adj_in: Option<&mut Array2<f64>>,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) {
    let nc = input.layout.ncomp();
    if let Some(adj_in) = adj_in {
        general_mat_mul(1.0, adj_out, &weight, 1.0, adj_in);
    }
    let mut gw = ArrayViewMut2::from_shape(weight.dim(), grad_w).expect("weight slot shape");
    general_mat_mul(1.0, &adj_out.t(), &input.data, 1.0, &mut gw);
    for (r, row) in adj_out.axis_iter(Axis(0)).enumerate() {
        if r % nc == 0 {
            for (g, v) in grad_b.iter_mut().zip(row) {
                *g += v;
            }
        }
    }
}

pub(crate) fn activation_forward(input: &JetBlock, act: ActivationFn) -> Result<JetBlock> {
    let l = input.layout;
    let nc = l.ncomp();
    let cols = input.cols;
    let mut out = JetBlock::zeros(input.rows, cols, l);
    let src = input.data.as_slice().expect("standard layout");
    let dst = out.data.as_slice_mut().expect("standard layout");
    let mut z = [0.0; MAX_COMP];
    let mut y = [0.0; MAX_COMP];
    let mut w = [0.0; MAX_COMP];
    for r in 0..input.rows {
        for c in 0..cols {
            gather(src, nc, cols, r, c, &mut z);
            match act {
                ActivationFn::Rational(coeffs) => {
                    kernel::rational_forward(l, coeffs, &z[..nc], &mut y[..nc])
                        .map_err(|value| Error::Pole { value, row: r })?;
                }
                ActivationFn::Tanh => kernel::smooth_series(l, Smooth::Tanh, &z[..nc], &mut y[..nc], &mut w),
                ActivationFn::Sigmoid => {
                    kernel::smooth_series(l, Smooth::Sigmoid, &z[..nc], &mut y[..nc], &mut w)
                }
            }
            scatter(dst, nc, cols, r, c, &y[..nc]);
        }
    }
    Ok(out)
}

pub(crate) fn activation_backward(
    input: &JetBlock,
    act: ActivationFn,
    adj_out: &Array2<f64>,
    adj_in: &mut Array2<f64>,
    grad_coeffs: &mut [f64],
) {
    let l = input.layout;
    let nc = l.ncomp();
    let cols = input.cols;
    let src = input.data.as_slice().expect("standard layout");
    let g_all = adj_out.as_slice().expect("standard layout");
    let dst = adj_in.as_slice_mut().expect("standard layout");
    let mut z = [0.0; MAX_COMP];
    let mut g = [0.0; MAX_COMP];
    let mut y = [0.0; MAX_COMP];
    let mut w = [0.0; MAX_COMP];
    for r in 0..input.rows {
        for c in 0..cols {
            gather(g_all, nc, cols, r, c, &mut g);
            if g[..nc].iter().all(|v| *v == 0.0) {
                continue;
            }
            gather(src, nc, cols, r, c, &mut z);
            let mut adj = [0.0; MAX_COMP];
            match act {
                ActivationFn::Rational(coeffs) => kernel::rational_backward(
                    l,
                    coeffs,
                    &z[..nc],
                    &g[..nc],
                    &mut adj[..nc],
                    grad_coeffs,
                ),
                ActivationFn::Tanh | ActivationFn::Sigmoid => {
                    let f = if matches!(act, ActivationFn::Tanh) {
                        Smooth::Tanh
                    } else {
                        Smooth::Sigmoid
                    };
                    kernel::smooth_series(l, f, &z[..nc], &mut y[..nc], &mut w);
                    crate::jet::series::tmul_acc(l, &w[..nc], &g[..nc], &mut adj[..nc]);
                }
            }
            scatter_add(dst, nc, cols, r, c, &adj[..nc]);
        }
    }
}

pub(crate) fn elementwise(
    a: &JetBlock,
    b: &JetBlock,
    f: impl Fn(JetLayout, &[f64], &[f64], &mut [f64]) -> Result<()>,
) -> Result<JetBlock> {
    a.same_shape(b)?;
    let l = a.layout;
    let nc = l.ncomp();
    let cols = a.cols;
    let mut out = JetBlock::zeros(a.rows, cols, l);
    let (sa, sb) = (
        a.data.as_slice().expect("standard layout"),
        b.data.as_slice().expect("standard layout"),
    );
    let dst = out.data.as_slice_mut().expect("standard layout");
    let (mut x, mut y, mut z) = ([0.0; MAX_COMP], [0.0; MAX_COMP], [0.0; MAX_COMP]);
    for r in 0..a.rows {
        for c in 0..cols {
            gather(sa, nc, cols, r, c, &mut x);
            gather(sb, nc, cols, r, c, &mut y);
            f(l, &x[..nc], &y[..nc], &mut z[..nc]).map_err(|e| match e {
                Error::DivisionByZero { value } => Error::Pole { value, row: r },
                other => other,
            })?;
            scatter(dst, nc, cols, r, c, &z[..nc]);
        }
    }
    Ok(out)
}

/// Elementwise reverse pass: `adj_a += T(da)^T g`, `adj_b += T(db)^T g`
/// where `da`, `db` are the per-element partial-derivative series.
pub(crate) fn elementwise_backward(
    a: &JetBlock,
    b: &JetBlock,
    adj_out: &Array2<f64>,
    mut adj_a: Option<&mut Array2<f64>>,
    mut adj_b: Option<&mut Array2<f64>>,
    partials: impl Fn(JetLayout, &[f64], &[f64], &mut [f64], &mut [f64]),
) {
    let l = a.layout;
    let nc = l.ncomp();
    let cols = a.cols;
    let (sa, sb) = (
        a.data.as_slice().expect("standard layout"),
        b.data.as_slice().expect("standard layout"),
    );
    let g_all = adj_out.as_slice().expect("standard layout");
    let (mut x, mut y, mut g) = ([0.0; MAX_COMP], [0.0; MAX_COMP], [0.0; MAX_COMP]);
    for r in 0..a.rows {
        for c in 0..cols {
            gather(g_all, nc, cols, r, c, &mut g);
            gather(sa, nc, cols, r, c, &mut x);
            gather(sb, nc, cols, r, c, &mut y);
            let (mut da, mut db) = ([0.0; MAX_COMP], [0.0; MAX_COMP]);
            partials(l, &x[..nc], &y[..nc], &mut da[..nc], &mut db[..nc]);
            if let Some(adj) = adj_a.as_deref_mut() {
                let mut acc = [0.0; MAX_COMP];
                crate::jet::series::tmul_acc(l, &da[..nc], &g[..nc], &mut acc[..nc]);
                scatter_add(adj.as_slice_mut().expect("standard layout"), nc, cols, r, c, &acc[..nc]);
            }
            if let Some(adj) = adj_b.as_deref_mut() {
                let mut acc = [0.0; MAX_COMP];
                crate::jet::series::tmul_acc(l, &db[..nc], &g[..nc], &mut acc[..nc]);
                scatter_add(adj.as_slice_mut().expect("standard layout"), nc, cols, r, c, &acc[..nc]);
            }
        }
    }
}

/// Spreads a block of order-`M` jets into plain values
/// `[f, f', .., f^(M)]` per input column.
pub(crate) fn derivatives(input: &JetBlock) -> JetBlock {
    let m = input.layout.order;
    let mut out = JetBlock::zeros(input.rows, input.cols * (m + 1), JetLayout::SCALAR);
    for r in 0..input.rows {
        for c in 0..input.cols {
            let mut fact = 1.0;
            for k in 0..=m {
                if k > 0 {
                    fact *= k as f64;
                }
                out.data[(r, c * (m + 1) + k)] = input.get(r, k, c) * fact;
            }
        }
    }
    out
}

pub(crate) fn derivatives_backward(input: &JetBlock, adj_out: &Array2<f64>, adj_in: &mut Array2<f64>) {
    let m = input.layout.order;
    let nc = input.layout.ncomp();
    for r in 0..input.rows {
        for c in 0..input.cols {
            let mut fact = 1.0;
            for k in 0..=m {
                if k > 0 {
                    fact *= k as f64;
                }
                adj_in[(r * nc + k, c)] += fact * adj_out[(r, c * (m + 1) + k)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Coord;

    #[test]
    fn seeded_coords_match_jet_seeds() {
        let l = JetLayout::new(2, true);
        let block = JetBlock::seeded_coords(&[[3.0, 0.5]], l);
        assert_eq!(block.jet(0, 0), Jet::seed(3.0, Coord::X, 2));
        assert_eq!(block.jet(0, 1), Jet::seed(0.5, Coord::T, 2));
    }

    #[test]
    fn jets_round_trip_through_blocks() {
        let jets = vec![
            Jet { val: 1.0, dx: vec![2.0, 6.0], dt: 0.5 },
            Jet { val: -1.0, dx: vec![0.0, 4.0], dt: 1.5 },
        ];
        let block = JetBlock::from_jets(1, 2, &jets).unwrap();
        assert_eq!(block.jet(0, 0), jets[0]);
        assert_eq!(block.jet(0, 1), jets[1]);
    }

    #[test]
    fn derivative_spread_scales_by_factorial() {
        let jets = vec![Jet { val: 1.0, dx: vec![2.0, 6.0, 24.0], dt: 0.0 }];
        let block = JetBlock::from_jets(1, 1, &jets).unwrap();
        let spread = derivatives(&block);
        assert_eq!(spread.column_values(0), vec![1.0]);
        assert_eq!((0..4).map(|c| spread.value(0, c)).collect::<Vec<_>>(), vec![1.0, 2.0, 6.0, 24.0]);
    }
}
