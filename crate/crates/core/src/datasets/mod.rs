//! Ground-truth grids, noise injection, subsampling and dataset files.

mod io;
mod spectral;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub use io::{read_dataset, read_samples_csv, write_dataset, write_samples_csv, MAGIC};
pub use spectral::{gen_burgers, gen_heat, gen_kdv, BurgersIc, HeatIc, KdvIc};

/// Uniform grid over `[lo, hi]` (or `[lo, hi)` when the endpoint is dropped).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1 {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub endpoint: bool,
}

impl Grid1 {
    pub fn points(&self) -> Vec<f64> {
        let div = if self.endpoint { self.n - 1 } else { self.n } as f64;
        let h = (self.hi - self.lo) / div;
        (0..self.n).map(|i| self.lo + h * i as f64).collect()
    }
}

/// Axis-aligned `(x, t)` rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: (f64, f64),
    pub t: (f64, f64),
}

impl Rect {
    /// Shift/scale per coordinate `(x, t)` mapping the rectangle onto `[-1, 1]^2`.
    pub fn normalization(&self) -> ([f64; 2], [f64; 2]) {
        let mid = |(a, b): (f64, f64)| 0.5 * (a + b);
        let inv = |(a, b): (f64, f64)| if b > a { 2.0 / (b - a) } else { 1.0 };
        ([mid(self.x), mid(self.t)], [inv(self.x), inv(self.t)])
    }

    /// `n` i.i.d. uniform `(x, t)` points in the open rectangle.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
        let open = |rng: &mut R, (a, b): (f64, f64)| loop {
            let v: f64 = rng.random_range(a..b);
            if v > a {
                return v;
            }
        };
        (0..n).map(|_| [open(rng, self.x), open(rng, self.t)]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub equation: String,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    #[serde(default)]
    pub ic: String,
    #[serde(default = "default_boundary")]
    pub boundary: String,
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub noise_seed: Option<u64>,
}

fn default_boundary() -> String {
    "periodic".into()
}

impl Metadata {
    pub fn new(equation: &str, ic: &str) -> Self {
        Metadata {
            equation: equation.into(),
            coefficients: BTreeMap::new(),
            ic: ic.into(),
            boundary: default_boundary(),
            noise_level: 0.0,
            noise_seed: None,
        }
    }
}

/// Field values on a full tensor grid; `values[(i, j)] = u(t_i, x_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDataset {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Array2<f64>,
    pub meta: Metadata,
}

impl GridDataset {
    pub fn new(x: Vec<f64>, t: Vec<f64>, values: Array2<f64>, meta: Metadata) -> Result<Self> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]) && !v.is_empty();
        if !increasing(&x) || !increasing(&t) {
            return Err(Error::Shape("grids must be nonempty and strictly increasing".into()));
        }
        if values.dim() != (t.len(), x.len()) {
            return Err(Error::Shape(format!(
                "values {:?} for a {}x{} grid",
                values.dim(),
                t.len(),
                x.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite grid value".into()));
        }
        Ok(GridDataset { x, t, values, meta })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn domain(&self) -> Rect {
        Rect {
            x: (self.x[0], self.x[self.x.len() - 1]),
            t: (self.t[0], self.t[self.t.len() - 1]),
        }
    }

    /// Every grid node as a sample, in row-major `(t, x)` order.
    pub fn all_samples(&self) -> SampleSet {
        let mut s = SampleSet::default();
        for (i, &t) in self.t.iter().enumerate() {
            for (j, &x) in self.x.iter().enumerate() {
                s.push(t, x, self.values[(i, j)]);
            }
        }
        s
    }
}

/// Scattered samples `u(t_i, x_i)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn push(&mut self, t: f64, x: f64, u: f64) {
        self.t.push(t);
        self.x.push(x);
        self.u.push(u);
    }

    /// Coordinates in network input order `(x, t)`.
    pub fn points(&self) -> Vec<[f64; 2]> {
        self.x.iter().zip(&self.t).map(|(&x, &t)| [x, t]).collect()
    }

    /// Bounding rectangle of the sample coordinates.
    pub fn bounds(&self) -> Option<Rect> {
        if self.is_empty() {
            return None;
        }
        let span = |v: &[f64]| {
            v.iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)))
        };
        Some(Rect {
            x: span(&self.x),
            t: span(&self.t),
        })
    }
}

/// Population standard deviation.
pub fn std_dev<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().copied().collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Adds i.i.d. Gaussian noise with standard deviation `p * std(values)`.
pub fn inject_noise(ds: &GridDataset, p: f64, seed: u64) -> Result<GridDataset> {
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::Config(format!("noise level must be >= 0, got {p}")));
    }
    let mut out = ds.clone();
    out.meta.noise_level = p;
    out.meta.noise_seed = Some(seed);
    if p == 0.0 {
        return Ok(out);
    }
    let sigma = p * std_dev(ds.values.iter());
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = rng::stream(seed, Stream::Noise);
    for v in out.values.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Uniform selection of `n_data` distinct grid nodes.
pub fn subsample(ds: &GridDataset, n_data: usize, seed: u64) -> Result<SampleSet> {
    if n_data == 0 || n_data > ds.len() {
        return Err(Error::Config(format!(
            "cannot draw {n_data} samples from a grid of {}",
            ds.len()
        )));
    }
    let mut rng = rng::stream(seed, Stream::Subsample);
    let mut idx = rand::seq::index::sample(&mut rng, ds.len(), n_data).into_vec();
    idx.sort_unstable();
    let nx = ds.x.len();
    let mut s = SampleSet::default();
    for k in idx {
        let (i, j) = (k / nx, k % nx);
        s.push(ds.t[i], ds.x[j], ds.values[(i, j)]);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GridDataset {
        let x = vec![0.0, 1.0, 2.0];
        let t = vec![0.0, 0.5];
        let values = Array2::from_shape_fn((2, 3), |(i, j)| (i * 3 + j) as f64);
        GridDataset::new(x, t, values, Metadata::new("test", "none")).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = tiny();
        assert_eq!(inject_noise(&ds, 0.0, 3).unwrap().values, ds.values);
    }

    #[test]
    fn full_subsample_takes_every_node_once() {
        let ds = tiny();
        let s = subsample(&ds, 6, 1).unwrap();
        let mut seen: Vec<(u64, u64)> = s.t.iter().zip(&s.x).map(|(t, x)| (t.to_bits(), x.to_bits())).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 6);
        assert!(subsample(&ds, 7, 1).is_err());
    }

    #[test]
    fn samples_are_inside_open_rectangle() {
        let r = Rect { x: (0.0, 1.0), t: (0.0, 1.0) };
        let pts = r.sample(1000, &mut rng::stream(4, Stream::Collocation));
        let (mut mx, mut mt) = (0.0, 0.0);
        for [x, t] in &pts {
            assert!(*x > 0.0 && *x < 1.0 && *t > 0.0 && *t < 1.0);
            mx += x / 1000.0;
            mt += t / 1000.0;
        }
        assert!((mx - 0.5f64).abs() < 0.05 && (mt - 0.5f64).abs() < 0.05);
        assert_eq!(r.sample(1, &mut rng::stream(4, Stream::Collocation)).len(), 1);
    }

    #[test]
    fn normalization_maps_to_unit_box() {
        let r = Rect { x: (-8.0, 8.0), t: (0.0, 10.0) };
        let (shift, scale) = r.normalization();
        assert_eq!(((8.0 - shift[0]) * scale[0], (0.0 - shift[1]) * scale[1]), (1.0, -1.0));
    }
}
