//! Self-check suites runnable from the command line.
//!
//! Each suite compares library results with an independent oracle
//! (finite differences, brute-force enumeration, exhaustive subset search,
//! direct residual recomputation, sample statistics).

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::activation::ActivationKind;
use crate::datasets::{gen_heat, inject_noise, std_dev, Grid1, HeatIc, SampleSet};
use crate::error::Result;
use crate::fd;
use crate::jet::{Coord, Jet};
use crate::library::enumerate_terms;
use crate::linalg::residual_sq;
use crate::network::{parameter_count, RationalNetwork};
use crate::regression::{least_squares, rank_candidates, residual_increase_check, rfe_path_raw, ReportMeta};
use crate::trainer::{joint_params, loss_and_grad};

pub const SUITES: [u8; 6] = [1, 2, 3, 4, 5, 9];

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub fn suite_name(id: u8) -> Option<&'static str> {
    Some(match id {
        1 => "differentiation exactness",
        2 => "parameter counts",
        3 => "library counts",
        4 => "elimination theorem",
        5 => "planted recovery",
        9 => "noise calibration",
        _ => return None,
    })
}

pub fn run_suite(id: u8) -> Result<SuiteReport> {
    let name = suite_name(id).ok_or_else(|| crate::Error::Config(format!("no suite {id}; available: 1 2 3 4 5 9")))?;
    let clock = Instant::now();
    let (passed, detail) = match id {
        1 => differentiation()?,
        2 => counts(),
        3 => library_counts(),
        4 => elimination_theorem(),
        5 => planted_recovery(),
        9 => noise_calibration()?,
        _ => unreachable!(),
    };
    Ok(SuiteReport {
        id,
        name,
        passed,
        detail,
        seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Relative error with the denominator floored at `floor`.
fn rel_err(exact: f64, approx: f64, floor: f64) -> f64 {
    (exact - approx).abs() / exact.abs().max(approx.abs()).max(floor)
}

fn perturbed(widths: &[usize], seed: u64, rng: &mut ChaCha8Rng) -> Result<RationalNetwork> {
    let mut net = RationalNetwork::new(widths, ActivationKind::Rational)?.init_weights(seed);
    for layer in 0..net.hidden_layers() {
        let mut act = net.activation(layer).expect("rational layer");
        act.num.iter_mut().for_each(|c| *c += rng.random_range(-0.05..0.05));
        act.den[1] += rng.random_range(-0.05..0.05);
        net.set_activation(layer, &act);
    }
    Ok(net)
}

/// Network jets and training-loss gradients against finite differences.
pub fn differentiation() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_jet = 0.0f64;
    for k in 0..100u64 {
        let depth = rng.random_range(1..=5);
        let width = rng.random_range(2..=50);
        let mut widths = vec![2];
        widths.extend(std::iter::repeat_n(width, depth));
        widths.push(1);
        let net = perturbed(&widths, k, &mut rng)?;
        let (x, t) = (rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
        let jet = net.forward(&[Jet::seed(x, Coord::X, 3), Jet::seed(t, Coord::T, 3)])?;
        for order in 1..=3 {
            let approx = fd::derivative(|v| net.eval(&[v, t]).unwrap_or(f64::NAN), x, order, 1e-3, 1);
            worst_jet = worst_jet.max(rel_err(jet.dx[order - 1], approx, 1e-2));
        }
        let approx = fd::derivative(|v| net.eval(&[x, v]).unwrap_or(f64::NAN), t, 1, 1e-3, 1);
        worst_jet = worst_jet.max(rel_err(jet.dt, approx, 1e-2));
    }

    let mut worst_grad = 0.0f64;
    let mut checked = 0usize;
    for k in 0..12u64 {
        let big = k >= 10;
        let order = 1 + (k as usize % 3);
        let (uw, nw): (Vec<usize>, Vec<usize>) = if big {
            (vec![2, 50, 50, 50, 50, 50, 1], vec![order + 1, 100, 100, 1])
        } else {
            (vec![2, 6, 6, 1], vec![order + 1, 5, 1])
        };
        let u = perturbed(&uw, 2 * k, &mut rng)?;
        let n = perturbed(&nw, 2 * k + 1, &mut rng)?;
        let mut samples = SampleSet::default();
        for _ in 0..10 {
            samples.push(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let points: Vec<[f64; 2]> = (0..10).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let params = joint_params(&u, &n);
        let eval = loss_and_grad(&u, &n, &params, &samples, &points, order, 64)?;
        let indices: Vec<usize> = if big {
            (0..100).map(|_| rng.random_range(0..params.len())).collect()
        } else {
            (0..params.len()).collect()
        };
        for i in indices {
            let loss_at = |v: f64| {
                let mut p = params.clone();
                p[i] = v;
                loss_and_grad(&u, &n, &p, &samples, &points, order, 64).map_or(f64::NAN, |e| e.total())
            };
            let approx = fd::derivative(loss_at, params[i], 1, 1e-5, 0);
            worst_grad = worst_grad.max(rel_err(eval.grad[i], approx, 1e-6));
            checked += 1;
        }
    }
    let passed = worst_jet < 1e-4 && worst_grad < 1e-4;
    Ok((
        passed,
        format!("100 networks: worst jet rel err {worst_jet:.2e}; {checked} loss gradients: worst rel err {worst_grad:.2e}"),
    ))
}

pub fn counts() -> (bool, String) {
    let w = [2, 50, 50, 50, 50, 50, 1];
    let fixed = parameter_count(&w, ActivationKind::Tanh);
    let rational = parameter_count(&w, ActivationKind::Rational);
    let tiny = parameter_count(&[1, 1], ActivationKind::Tanh);
    (
        fixed == 10401 && rational == 10436 && tiny == 2,
        format!("fixed {fixed}, rational {rational}, (1,1) {tiny}"),
    )
}

/// Every exponent vector of length `m + 1` with total degree `<= k`, by brute force.
fn brute_force_terms(m: usize, k: u32) -> BTreeSet<Vec<u32>> {
    let mut out = BTreeSet::new();
    let total = (k as usize + 1).pow(m as u32 + 1);
    for code in 0..total {
        let mut c = code;
        let e: Vec<u32> = (0..=m)
            .map(|_| {
                let d = (c % (k as usize + 1)) as u32;
                c /= k as usize + 1;
                d
            })
            .collect();
        if e.iter().sum::<u32>() <= k {
            out.insert(e);
        }
    }
    out
}

pub fn library_counts() -> (bool, String) {
    let mut ok = enumerate_terms(3, 5).len() == 126;
    for m in 0..=4 {
        for k in 1..=6 {
            let terms = enumerate_terms(m, k);
            let set: BTreeSet<Vec<u32>> = terms.iter().map(|t| t.exponents.clone()).collect();
            let graded = terms.windows(2).all(|w| w[0].degree() <= w[1].degree());
            ok &= set.len() == terms.len() && set == brute_force_terms(m, k) && graded;
        }
    }
    (ok, "(3, 5) -> 126; all M <= 4, K <= 6 match brute force".into())
}

fn unit_columns(rng: &mut ChaCha8Rng, m: usize, n: usize) -> Array2<f64> {
    let mut a = Array2::from_shape_fn((m, n), |_| -> f64 { StandardNormal.sample(rng) });
    for mut col in a.columns_mut() {
        let norm = col.dot(&col).sqrt();
        col.mapv_inplace(|v| v / norm);
    }
    a
}

/// Least-important-feature identity on unit-norm columns.
pub fn elimination_theorem() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut argmin_ok, mut systems, mut worst_rel, mut monotone) = (0, 0, 0.0f64, true);
    while systems < 200 {
        let n = rng.random_range(2..=12);
        let m = rng.random_range(n..=100);
        let a = unit_columns(&mut rng, m, n);
        let b = Array1::from_shape_fn(m, |_| StandardNormal.sample(&mut rng));
        let support: Vec<usize> = (0..n).collect();
        let (c, _) = least_squares(a.view(), b.view(), &support);
        let mut mags: Vec<f64> = c.iter().map(|v| v.abs()).collect();
        mags.sort_by(f64::total_cmp);
        if mags[1] - mags[0] < 1e-9 * mags[1] {
            continue; // skip near-ties
        }
        systems += 1;
        let inc = residual_increase_check(a.view(), b.view(), &c, &support);
        let by_increase = inc.iter().min_by(|x, y| x.1.total_cmp(&y.1)).map(|x| x.0);
        let by_coeff = (0..n).min_by(|&i, &j| c[i].abs().total_cmp(&c[j].abs()));
        argmin_ok += usize::from(by_increase == by_coeff);
        for (k, d) in &inc {
            worst_rel = worst_rel.max((d - c[*k] * c[*k]).abs() / (c[*k] * c[*k]));
        }
        let path = rfe_path_raw(a.view(), b.view(), &vec![1.0; n]);
        let mut res: Vec<f64> = path.candidates.iter().map(|c| c.residual).collect();
        res.push(path.b_norm_sq);
        // Allow roundoff-level wiggle relative to ||b||^2.
        monotone &= res.windows(2).all(|w| w[1] >= w[0] - 1e-12 * path.b_norm_sq);
        monotone &= (residual_sq(a.view(), Array1::from(path.candidates[0].normalized.clone()).view(), b.view())
            - res[0])
            .abs()
            <= 1e-10 * path.b_norm_sq;
    }
    (
        argmin_ok == 200 && worst_rel < 1e-9 && monotone,
        format!("argmin agreement {argmin_ok}/200, worst increase rel err {worst_rel:.2e}, monotone path: {monotone}"),
    )
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

/// Planted sparse systems: the top-ranked candidate against exhaustive search.
pub fn planted_recovery() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (m, n) = (60, 10);
    let (mut hits, mut oracle_agrees) = (0, 0);
    for _ in 0..100 {
        let a = unit_columns(&mut rng, m, n);
        let k = rng.random_range(2..=3);
        let mut truth = rand::seq::index::sample(&mut rng, n, k).into_vec();
        truth.sort_unstable();
        let mut c = Array1::zeros(n);
        for &j in &truth {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            c[j] = sign * rng.random_range(1.0..2.0);
        }
        let y = a.dot(&c);
        let sigma = 0.01 * std_dev(y.iter());
        let b = y.mapv(|v| v + sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng));

        let best = subsets(n, k)
            .into_iter()
            .map(|s| {
                let (_, r) = least_squares(a.view(), b.view(), &s);
                (s, r)
            })
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .map(|x| x.0)
            .expect("nonempty subsets");
        oracle_agrees += usize::from(best == truth);

        let path = rfe_path_raw(a.view(), b.view(), &vec![1.0; n]);
        let names: Vec<String> = (0..n).map(|j| j.to_string()).collect();
        let report = rank_candidates(&path, &names, ReportMeta::default());
        let top = &path.candidates[report.candidates[0].path_index - 1].support;
        hits += usize::from(*top == best && best == truth);
    }
    (
        hits >= 95,
        format!("top-ranked support = planted = exhaustive optimum in {hits}/100 (oracle recovers planted in {oracle_agrees}/100)"),
    )
}

pub fn noise_calibration() -> Result<(bool, String)> {
    let g = Grid1 { lo: 0.0, hi: 10.0, n: 201, endpoint: true };
    let ds = gen_heat(0.05, &HeatIc::Sine, g, g)?;
    let clean = std_dev(ds.values.iter());
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, p) in [0.1, 0.5, 1.0].into_iter().enumerate() {
        let noisy = inject_noise(&ds, p, 900 + i as u64)?;
        let diff: Vec<f64> = noisy.values.iter().zip(&ds.values).map(|(a, b)| a - b).collect();
        let ratio = std_dev(&diff) / clean;
        ok &= (ratio - p).abs() / p < 0.02;
        parts.push(format!("p={p}: {ratio:.4}"));
    }
    Ok((ok, format!("measured ratios {}", parts.join(", "))))
}
