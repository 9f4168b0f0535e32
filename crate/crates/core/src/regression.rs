//! Recursive feature elimination over a unit-column library and ranking of
//! the resulting candidates by how much the residual grows at the next
//! elimination step.

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::library::LibrarySystem;
use crate::linalg::{lstsq_min_norm, reduce_system, residual_sq};

/// Relative floor on residuals used as ratio denominators.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// How many ranked candidates a report lists.
pub const REPORT_SIZE: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Term indices with nonzero coefficients, ascending.
    pub support: Vec<usize>,
    /// Coefficients of every term in the original (denormalized) scale.
    pub coeffs: Vec<f64>,
    /// The same coefficients against the unit-norm columns.
    pub normalized: Vec<f64>,
    /// `||L c - b||^2`
    pub residual: f64,
}

/// Candidates from densest to sparsest, and `||b||^2` (the residual of `c = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct CandidatePath {
    pub candidates: Vec<Candidate>,
    pub b_norm_sq: f64,
}

fn columns(a: ArrayView2<f64>, support: &[usize]) -> Array2<f64> {
    a.select(Axis(1), support)
}

/// Minimum-norm least squares using only the `support` columns of `a`.
///
/// Returns a full-length coefficient vector (zeros off the support) and the
/// residual `||a x - b||^2`.
pub fn least_squares(a: ArrayView2<f64>, b: ArrayView1<f64>, support: &[usize]) -> (Vec<f64>, f64) {
    let sub = columns(a, support);
    let x = lstsq_min_norm(sub.view(), b);
    let mut full = vec![0.0; a.ncols()];
    for (&j, v) in support.iter().zip(&x) {
        full[j] = *v;
    }
    let residual = residual_sq(sub.view(), x.view(), b);
    (full, residual)
}

/// Index into `support` of the smallest `|c'_k|`; exact ties go to the higher term index.
fn least_important(support: &[usize], normalized: &[f64]) -> usize {
    let mut best = 0;
    for (pos, &k) in support.iter().enumerate() {
        if normalized[k].abs() <= normalized[support[best]].abs() {
            best = pos;
        }
    }
    best
}

/// Full elimination path on `L'`, one candidate per support size.
pub fn rfe_path(system: &LibrarySystem) -> CandidatePath {
    let normalized = system.normalized();
    rfe_path_raw(normalized.view(), system.b.view(), &system.column_norms)
}

/// Elimination path on an already normalized matrix with the given column norms.
pub fn rfe_path_raw(a: ArrayView2<f64>, b: ArrayView1<f64>, column_norms: &[f64]) -> CandidatePath {
    let n = a.ncols();
    // All restricted problems share the triangular factor of [A | b].
    let r = reduce_system(a, b);
    let rb = r.column(n).to_owned();
    let mut support: Vec<usize> = (0..n).collect();
    let mut candidates = Vec::with_capacity(n);
    while !support.is_empty() {
        // ||A_S c - b|| = ||R_S c - r_b|| since [A | b] = Q R with orthonormal Q.
        let (normalized, residual) = least_squares(r.view().slice_move(s![.., ..n]), rb.view(), &support);
        let coeffs = normalized.iter().zip(column_norms).map(|(c, s)| c / s).collect();
        let drop = least_important(&support, &normalized);
        candidates.push(Candidate {
            support: support.clone(),
            coeffs,
            normalized,
            residual,
        });
        support.remove(drop);
    }
    CandidatePath {
        candidates,
        b_norm_sq: b.dot(&b),
    }
}

/// `R(c - c_k e_k) - R(c)` for every `k` in the support, from the current residual.
pub fn residual_increase_check(
    a: ArrayView2<f64>,
    b: ArrayView1<f64>,
    coeffs: &[f64],
    support: &[usize],
) -> Vec<(usize, f64)> {
    let c = Array1::from(coeffs.to_vec());
    let r = a.dot(&c) - b;
    // ||r - c_k A_k||^2 - ||r||^2 expanded, avoiding cancellation between
    // two nearly equal residuals.
    support
        .iter()
        .map(|&k| {
            let col = a.column(k);
            (k, coeffs[k] * coeffs[k] * col.dot(&col) - 2.0 * coeffs[k] * col.dot(&r))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    /// 1-based position on the elimination path (1 = densest).
    pub path_index: usize,
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub residual: f64,
    /// `R(c^{k+1}) / R(c^k)`
    pub ratio: f64,
    pub ratio_percent: f64,
    pub equation: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub order: usize,
    pub degree: u32,
    pub n_extract: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PDEReport {
    pub meta: ReportMeta,
    pub candidates: Vec<RankedCandidate>,
}

/// `R(c^{k+1}) / max(R(c^k), eps ||b||^2)` along the path, with `R(0) = ||b||^2` last.
pub fn path_ratios(path: &CandidatePath) -> Vec<f64> {
    let floor = (RESIDUAL_FLOOR * path.b_norm_sq).max(f64::MIN_POSITIVE);
    let res: Vec<f64> = path.candidates.iter().map(|c| c.residual).collect();
    (0..res.len())
        .map(|k| {
            let next = res.get(k + 1).copied().unwrap_or(path.b_norm_sq);
            next / res[k].max(floor)
        })
        .collect()
}

fn format_coeff(c: f64) -> String {
    let a = c.abs();
    if a == 0.0 || (1e-3..1e4).contains(&a) {
        format!("{a:.6}")
    } else {
        format!("{a:.6e}")
    }
}

/// `D_t U = (0.1)(D_x^2 U) - (1)(U) (D_x U)` for the given terms and coefficients.
pub fn equation_text(names: &[String], coeffs: &[f64]) -> String {
    let mut out = String::from("D_t U =");
    if names.is_empty() {
        out.push_str(" 0");
    }
    for (i, (name, &c)) in names.iter().zip(coeffs).enumerate() {
        let sign = match (i, c < 0.0) {
            (0, false) => " ",
            (0, true) => " -",
            (_, false) => " + ",
            (_, true) => " - ",
        };
        let _ = write!(out, "{sign}({})", format_coeff(c));
        if name != "1" {
            out.push_str(name);
        }
    }
    out
}

/// Sorts the path by ratio (largest first) and keeps the top candidates.
pub fn rank_candidates(path: &CandidatePath, names: &[String], meta: ReportMeta) -> PDEReport {
    let ratios = path_ratios(path);
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&i, &j| ratios[j].total_cmp(&ratios[i]).then(i.cmp(&j)));
    let candidates = order
        .into_iter()
        .take(REPORT_SIZE)
        .map(|k| {
            let c = &path.candidates[k];
            let terms: Vec<String> = c.support.iter().map(|&j| names[j].clone()).collect();
            let coefficients: Vec<f64> = c.support.iter().map(|&j| c.coeffs[j]).collect();
            RankedCandidate {
                path_index: k + 1,
                equation: equation_text(&terms, &coefficients),
                terms,
                coefficients,
                residual: c.residual,
                ratio: ratios[k],
                ratio_percent: 100.0 * ratios[k],
            }
        })
        .collect();
    PDEReport { meta, candidates }
}

impl PDEReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "Top {} candidates (M = {}, K = {}, {} extraction points)\n\n",
            self.candidates.len(),
            self.meta.order,
            self.meta.degree,
            self.meta.n_extract
        );
        for (i, c) in self.candidates.iter().enumerate() {
            let _ = writeln!(out, "{}. {}", i + 1, c.equation);
            let _ = writeln!(
                out,
                "   residual = {:.6e}, next-sparsest residual ratio = {:.2}%",
                c.residual, c.ratio_percent
            );
        }
        out
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
