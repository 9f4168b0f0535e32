//! Polynomial candidate terms in `(U, D_x U, .., D_x^M U)` and the linear
//! system `b(N) ~ L(U) c` assembled at extraction points.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::JetBlock;
use crate::datasets::Rect;
use crate::error::{Error, Result};
use crate::jet::{Jet, JetLayout};
use crate::network::RationalNetwork;
use crate::rng::{self, Stream};

/// Columns with a smaller Euclidean norm make the system degenerate.
pub const ZERO_COLUMN_NORM: f64 = 1e-14;

/// Monomial `prod_m (D_x^m U)^{e_m}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermSpec {
    pub exponents: Vec<u32>,
}

impl TermSpec {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// Highest derivative order this term can refer to.
    pub fn order(&self) -> usize {
        self.exponents.len() - 1
    }

    /// Value at a point with features `[U, D_x U, .., D_x^M U]`.
    pub fn eval(&self, features: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(features)
            .fold(1.0, |acc, (&e, &v)| if e == 0 { acc } else { acc * v.powi(e as i32) })
    }

    pub fn name(&self) -> String {
        let factors: Vec<String> = self
            .exponents
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(m, &e)| {
                let base = derivative_name(m);
                if e == 1 {
                    format!("({base})")
                } else {
                    format!("({base})^{e}")
                }
            })
            .collect();
        if factors.is_empty() {
            "1".into()
        } else {
            factors.join(" ")
        }
    }
}

/// `U`, `D_x U`, `D_x^2 U`, ...
pub fn derivative_name(m: usize) -> String {
    match m {
        0 => "U".into(),
        1 => "D_x U".into(),
        _ => format!("D_x^{m} U"),
    }
}

/// Product of jet components; the jet must have order at least `term.order()`.
pub fn term_eval(term: &TermSpec, jet: &Jet) -> f64 {
    let mut features = vec![jet.val];
    features.extend_from_slice(&jet.dx);
    term.eval(&features)
}

pub fn term_name(term: &TermSpec) -> String {
    term.name()
}

/// All monomials of degree `<= k` in `m + 1` features.
///
/// Ordered by degree, then by exponent vector in descending lexicographic
/// order, so lower derivatives come first within a degree:
/// `1, U, D_x U, (U)^2, (U) (D_x U), (D_x U)^2, ..`.
pub fn enumerate_terms(m: usize, k: u32) -> Vec<TermSpec> {
    fn fill(prefix: &mut Vec<u32>, left: u32, slots: usize, out: &mut Vec<TermSpec>) {
        if slots == 1 {
            prefix.push(left);
            out.push(TermSpec { exponents: prefix.clone() });
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            fill(prefix, left - e, slots - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for degree in 0..=k {
        fill(&mut Vec::with_capacity(m + 1), degree, m + 1, &mut out);
    }
    out
}

/// `n` extraction points drawn from their own random stream.
pub fn sample_extraction(domain: Rect, n: usize, seed: u64) -> Vec<[f64; 2]> {
    domain.sample(n, &mut rng::stream(seed, Stream::Extraction))
}

/// `L` (one column per term), `b`, and the column norms of `L`.
#[derive(Clone, Debug, PartialEq)]
pub struct LibrarySystem {
    pub terms: Vec<TermSpec>,
    pub l: Array2<f64>,
    pub b: Array1<f64>,
    pub column_norms: Vec<f64>,
}

impl LibrarySystem {
    /// Checks shapes and column norms of a raw system.
    pub fn new(terms: Vec<TermSpec>, l: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        if l.ncols() != terms.len() || l.nrows() != b.len() || l.nrows() == 0 {
            return Err(Error::Shape(format!(
                "library {:?} with {} terms and {} targets",
                l.dim(),
                terms.len(),
                b.len()
            )));
        }
        let column_norms: Vec<f64> = l
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        if let Some(index) = column_norms.iter().position(|&n| !(n >= ZERO_COLUMN_NORM)) {
            return Err(Error::ZeroColumn {
                index,
                name: terms[index].name(),
            });
        }
        Ok(LibrarySystem {
            terms,
            l,
            b,
            column_norms,
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(TermSpec::name).collect()
    }

    /// `L'` with unit-norm columns.
    pub fn normalized(&self) -> Array2<f64> {
        let mut out = self.l.clone();
        for (mut col, n) in out.columns_mut().into_iter().zip(&self.column_norms) {
            col.mapv_inplace(|v| v / n);
        }
        out
    }

    /// CSV with one column per term and a final `b` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = self.names().join(",");
        text.push_str(",b\n");
        for (row, b) in self.l.rows().into_iter().zip(&self.b) {
            for v in row {
                let _ = write!(text, "{v:?},");
            }
            let _ = writeln!(text, "{b:?}");
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Points per batched network evaluation when assembling a system.
const ROWS_PER_BATCH: usize = 512;

/// `[U, D_x U, .., D_x^M U]` and `D_t U` of `u` at every point.
pub fn features(u: &RationalNetwork, points: &[[f64; 2]], order: usize) -> Result<(Array2<f64>, Vec<f64>)> {
    let layout = JetLayout::new(order, true);
    let chunks: Vec<JetBlock> = points
        .par_chunks(ROWS_PER_BATCH)
        .map(|chunk| u.forward_block(&JetBlock::seeded_coords(chunk, layout)))
        .collect::<Result<_>>()?;
    let mut feats = Array2::zeros((points.len(), order + 1));
    let mut dt = Vec::with_capacity(points.len());
    let mut row = 0;
    for block in chunks {
        for r in 0..block.rows() {
            let jet = block.jet(r, 0);
            feats[(row, 0)] = jet.val;
            for (m, d) in jet.dx.iter().enumerate() {
                feats[(row, m + 1)] = *d;
            }
            dt.push(jet.dt);
            row += 1;
        }
    }
    Ok((feats, dt))
}

/// Evaluates the library from `u` and the targets from `n` at `points`.
pub fn build_system(
    u: &RationalNetwork,
    n: &RationalNetwork,
    points: &[[f64; 2]],
    terms: &[TermSpec],
) -> Result<LibrarySystem> {
    let order = n.input_width() - 1;
    if points.is_empty() {
        return Err(Error::Config("no extraction points".into()));
    }
    if let Some(t) = terms.iter().find(|t| t.order() > order) {
        return Err(Error::Config(format!("term {} needs derivatives beyond order {order}", t.name())));
    }
    let (feats, _) = features(u, points, order)?;
    let rows: Vec<(Vec<f64>, f64)> = feats
        .rows()
        .into_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|f| {
            let f = f.as_slice().expect("row-major features");
            let b = n.eval(f)?;
            Ok((terms.iter().map(|t| t.eval(f)).collect(), b))
        })
        .collect::<Result<_>>()?;
    let mut l = Array2::zeros((points.len(), terms.len()));
    let mut b = Array1::zeros(points.len());
    for (i, (row, bi)) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            l[(i, j)] = v;
        }
        b[i] = bi;
    }
    LibrarySystem::new(terms.to_vec(), l, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: u64, k: u64) -> u64 {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn counts_and_order() {
        assert_eq!(enumerate_terms(3, 5).len(), 126);
        let names: Vec<String> = enumerate_terms(1, 2).iter().map(TermSpec::name).collect();
        assert_eq!(names, ["1", "(U)", "(D_x U)", "(U)^2", "(U) (D_x U)", "(D_x U)^2"]);
        assert_eq!(enumerate_terms(0, 1).len(), 2);
        assert_eq!(enumerate_terms(2, 2).len(), 10);
        for m in 0..=4u64 {
            for k in 1..=6u64 {
                assert_eq!(enumerate_terms(m as usize, k as u32).len() as u64, binom(m + 1 + k, k));
            }
        }
    }

    #[test]
    fn term_values() {
        let jet = Jet { val: 2.0, dx: vec![3.0, 5.0], dt: 0.0 };
        let t = |e: &[u32]| TermSpec { exponents: e.to_vec() };
        assert_eq!(term_eval(&t(&[0, 0, 0]), &jet), 1.0);
        assert_eq!(term_eval(&t(&[1, 1, 0]), &jet), 6.0);
        assert_eq!(term_eval(&t(&[2, 0, 1]), &jet), 20.0);
        assert_eq!(t(&[2, 0, 1]).name(), "(U)^2 (D_x^2 U)");
    }

    #[test]
    fn zero_columns_are_rejected() {
        let terms = enumerate_terms(0, 1);
        let l = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let err = LibrarySystem::new(terms, l, Array1::zeros(2)).unwrap_err();
        assert!(matches!(err, Error::ZeroColumn { index: 1, .. }), "{err}");
    }
}
