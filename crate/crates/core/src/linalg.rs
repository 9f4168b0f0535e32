//! Householder QR with column pivoting and minimum-norm least squares.
//!
//! Matrices are handled column-wise (`Vec` per column) so reflector
//! application streams through contiguous memory.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

struct Factorization {
    /// Columns after factorization; the upper triangle holds `R`.
    cols: Vec<Vec<f64>>,
    /// `perm[j]` is the original index of factored column `j`.
    perm: Vec<usize>,
    rank: usize,
    /// `Q^T b`.
    qtb: Vec<f64>,
}

/// Builds a reflector from `x` in place. Returns `(beta, tau)` with
/// `(I - tau v v^T) x = beta e1`, `v[0] = 1` stored implicitly.
fn make_reflector(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let tail: f64 = x[1..].iter().map(|v| v * v).sum();
    if tail == 0.0 {
        return (alpha, 0.0);
    }
    let norm = (alpha * alpha + tail).sqrt();
    let beta = if alpha >= 0.0 { -norm } else { norm };
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    (beta, tau)
}

fn apply_reflector(v_tail: &[f64], tau: f64, y: &mut [f64]) {
    if tau == 0.0 {
        return;
    }
    let mut dot = y[0];
    for (a, b) in v_tail.iter().zip(&y[1..]) {
        dot += a * b;
    }
    let s = tau * dot;
    y[0] -= s;
    for (a, b) in v_tail.iter().zip(&mut y[1..]) {
        *b -= s * a;
    }
}

fn factor(mut cols: Vec<Vec<f64>>, mut qtb: Vec<f64>, pivot: bool) -> Factorization {
    let n = cols.len();
    let m = qtb.len();
    let steps = m.min(n);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut r00 = 0.0f64;
    let mut rank = steps;
    for j in 0..steps {
        if pivot {
            let mut best = j;
            let mut best_norm = -1.0;
            for (k, col) in cols.iter().enumerate().skip(j) {
                let nrm: f64 = col[j..].iter().map(|v| v * v).sum();
                if nrm > best_norm {
                    best_norm = nrm;
                    best = k;
                }
            }
            cols.swap(j, best);
            perm.swap(j, best);
        }
        let (head, rest) = cols.split_at_mut(j + 1);
        let pivot_col = &mut head[j];
        let (beta, tau) = make_reflector(&mut pivot_col[j..]);
        let v_tail = &pivot_col[j + 1..];
        for col in rest.iter_mut() {
            apply_reflector(v_tail, tau, &mut col[j..]);
        }
        apply_reflector(v_tail, tau, &mut qtb[j..]);
        if j == 0 {
            r00 = beta.abs();
        }
        if pivot {
            let tol = (m.max(n) as f64) * f64::EPSILON * r00;
            if beta.abs() <= tol {
                rank = j;
                break;
            }
        }
    }
    if r00 == 0.0 {
        rank = 0;
    }
    Factorization {
        cols,
        perm,
        rank,
        qtb,
    }
}

fn columns_of(a: ArrayView2<f64>) -> Vec<Vec<f64>> {
    a.columns().into_iter().map(|c| c.to_vec()).collect()
}

/// Solves `min ||A x - b||` returning the minimum-norm minimizer.
///
/// Rank is revealed by column-pivoted QR; rank-deficient systems are
/// completed with a second (LQ-style) factorization of `[R11 R12]`.
pub fn lstsq_min_norm(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let (m, n) = a.dim();
    assert_eq!(m, b.len(), "lstsq: row mismatch");
    let mut x = Array1::zeros(n);
    if n == 0 || m == 0 {
        return x;
    }
    let f = factor(columns_of(a), b.to_vec(), true);
    let r = f.rank;
    if r == 0 {
        return x;
    }
    let rhs = &f.qtb[..r];
    let w = if r == n {
        back_substitute(&f.cols, rhs)
    } else {
        // Rtop^T = [R11 R12]^T is n x r; factor it as Z T.
        let mut zt: Vec<Vec<f64>> = (0..r)
            .map(|i| (0..n).map(|j| if i <= j { f.cols[j][i] } else { 0.0 }).collect())
            .collect();
        let mut taus = Vec::with_capacity(r);
        for i in 0..r {
            let (head, rest) = zt.split_at_mut(i + 1);
            let col = &mut head[i];
            let (_, tau) = make_reflector(&mut col[i..]);
            taus.push(tau);
            for other in rest.iter_mut() {
                apply_reflector(&col[i + 1..], tau, &mut other[i..]);
            }
        }
        // Solve T^T y = rhs (T upper triangular, stored in zt[i][..=i]).
        let mut y = vec![0.0; n];
        for i in 0..r {
            let mut acc = rhs[i];
            for k in 0..i {
                acc -= zt[i][k] * y[k];
            }
            y[i] = acc / zt[i][i];
        }
        // w = Z y: apply reflectors in reverse.
        for i in (0..r).rev() {
            apply_reflector(&zt[i][i + 1..], taus[i], &mut y[i..]);
        }
        y
    };
    for (j, &orig) in f.perm.iter().enumerate() {
        x[orig] = w[j];
    }
    x
}

fn back_substitute(cols: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in i + 1..n {
            acc -= cols[j][i] * x[j];
        }
        x[i] = acc / cols[i][i];
    }
    x
}

/// Triangular factor `R` of the thin QR of `[A | b]`.
///
/// For any `c` and column subset `S`, `||A_S c - b|| = ||R_S c - r_b||`
/// where `r_b` is the last column of the returned matrix, so restricted
/// least-squares problems can be solved on this small matrix instead.
pub fn reduce_system(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let (m, n) = a.dim();
    let mut cols = columns_of(a);
    cols.push(b.to_vec());
    let f = factor(cols, vec![0.0; m], false);
    let k = m.min(n + 1);
    Array2::from_shape_fn((k, n + 1), |(i, j)| if i <= j { f.cols[j][i] } else { 0.0 })
}

pub fn residual_sq(a: ArrayView2<f64>, x: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let r = a.dot(&x) - b;
    r.dot(&r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_system() {
        let a = Array2::eye(3);
        let b = array![3.0, 2.0, 1.0];
        let x = lstsq_min_norm(a.view(), b.view());
        assert_eq!(x, b);
    }

    #[test]
    fn overdetermined_average() {
        let a = array![[1.0], [1.0]];
        let b = array![1.0, 3.0];
        let x = lstsq_min_norm(a.view(), b.view());
        assert!((x[0] - 2.0).abs() < 1e-15);
        assert!((residual_sq(a.view(), x.view(), b.view()) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn duplicated_column_splits_evenly() {
        let a = array![[1.0, 1.0], [2.0, 2.0], [0.5, 0.5]];
        let b = array![2.0, 4.0, 1.0];
        let x = lstsq_min_norm(a.view(), b.view());
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12, "{x}");
    }

    #[test]
    fn matches_pseudo_inverse_on_rank_deficient_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for trial in 0..50 {
            let m = rng.random_range(3..30);
            let n = rng.random_range(2..10);
            let mut a = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
            // Duplicate or combine columns to force rank deficiency.
            if n > 2 {
                let c0 = a.column(0).to_owned();
                let c1 = a.column(1).to_owned();
                a.column_mut(n - 1).assign(&(&c0 * 2.0 - &c1));
            }
            if trial % 2 == 0 {
                let c = a.column(0).to_owned();
                a.column_mut(1).assign(&c);
            }
            let b = Array1::from_shape_fn(m, |_| rng.random_range(-1.0..1.0));
            let x = lstsq_min_norm(a.view(), b.view());

            // Pseudo-inverse solution from the eigendecomposition of A^T A.
            let na = nalgebra::DMatrix::from_fn(m, n, |i, j| a[(i, j)]);
            let nb = nalgebra::DVector::from_fn(m, |i, _| b[i]);
            let eig = (na.transpose() * &na).symmetric_eigen();
            let atb = na.transpose() * nb;
            let cutoff = 1e-10 * eig.eigenvalues.max();
            let mut oracle = nalgebra::DVector::zeros(n);
            for k in 0..n {
                let l = eig.eigenvalues[k];
                if l > cutoff {
                    let v = eig.eigenvectors.column(k);
                    oracle += v * (v.dot(&atb) / l);
                }
            }
            for j in 0..n {
                assert!((x[j] - oracle[j]).abs() < 1e-10, "trial {trial}: {} vs {}", x[j], oracle[j]);
            }
        }
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let a = Array2::zeros((4, 2));
        let b = array![1.0, 2.0, 3.0, 4.0];
        assert_eq!(lstsq_min_norm(a.view(), b.view()), array![0.0, 0.0]);
    }

    #[test]
    fn reduction_preserves_restricted_residuals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = Array2::from_shape_fn((40, 5), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(40, |_| rng.random_range(-1.0..1.0));
        let r = reduce_system(a.view(), b.view());
        let support = [0usize, 2, 4];
        let a_s = a.select(ndarray::Axis(1), &support);
        let r_s = r.select(ndarray::Axis(1), &support);
        let rb = r.column(5);
        let x_full = lstsq_min_norm(a_s.view(), b.view());
        let x_red = lstsq_min_norm(r_s.view(), rb);
        for (p, q) in x_full.iter().zip(&x_red) {
            assert!((p - q).abs() < 1e-12);
        }
        let res_full = residual_sq(a_s.view(), x_full.view(), b.view());
        let res_red = residual_sq(r_s.view(), x_red.view(), rb);
        assert!((res_full - res_red).abs() < 1e-12 * res_full.max(1.0));
    }
}
