//! End-to-end discovery runs: data preparation, training, extraction and
//! reporting, with every artifact written to a run directory.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::datasets::{
    self, gen_burgers, gen_heat, gen_kdv, read_dataset, read_samples_csv, std_dev, write_dataset,
    write_samples_csv, BurgersIc, Grid1, GridDataset, HeatIc, KdvIc, Rect, SampleSet,
};
use crate::error::{Error, Result};
use crate::library::{build_system, enumerate_terms, features, sample_extraction};
use crate::network::RationalNetwork;
use crate::regression::{rank_candidates, rfe_path, PDEReport, ReportMeta};
use crate::rng::{self, Stream};
use crate::trainer::{train, TrainConfig, TrainHistory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Equation {
    Heat,
    Burgers,
    Kdv,
}

impl std::str::FromStr for Equation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heat" => Ok(Equation::Heat),
            "burgers" => Ok(Equation::Burgers),
            "kdv" => Ok(Equation::Kdv),
            other => Err(Error::Config(format!("unknown equation {other:?} (heat, burgers, kdv)"))),
        }
    }
}

/// Synthetic dataset description; unset fields take per-equation defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub equation: Equation,
    #[serde(default)]
    pub ic: Option<String>,
    /// Diffusivity for heat, viscosity for Burgers; unused for KdV.
    #[serde(default)]
    pub coefficient: Option<f64>,
    #[serde(default)]
    pub nx: Option<usize>,
    #[serde(default)]
    pub nt: Option<usize>,
    /// Largest internal time step of the Burgers/KdV integrators.
    #[serde(default)]
    pub dt: Option<f64>,
}

pub const DEFAULT_DT: f64 = 1e-3;

impl GeneratorSpec {
    pub fn new(equation: Equation) -> Self {
        GeneratorSpec {
            equation,
            ic: None,
            coefficient: None,
            nx: None,
            nt: None,
            dt: None,
        }
    }

    pub fn generate(&self) -> Result<GridDataset> {
        let ic = self.ic.as_deref().unwrap_or("sine");
        let dt = self.dt.unwrap_or(DEFAULT_DT);
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let bad_ic = || Error::Config(format!("unknown initial condition {ic:?} for {:?}", self.equation));
        let grid = |lo, hi, n, endpoint| Grid1 { lo, hi, n, endpoint };
        match self.equation {
            Equation::Heat => {
                let ic = match ic {
                    "sine" => HeatIc::Sine,
                    "gaussian-sine" => HeatIc::GaussianSine,
                    _ => return Err(bad_ic()),
                };
                let x = grid(0.0, 10.0, self.nx.unwrap_or(201), true);
                let t = grid(0.0, 10.0, self.nt.unwrap_or(201), true);
                gen_heat(self.coefficient.unwrap_or(0.05), &ic, x, t)
            }
            Equation::Burgers => {
                let (ic, nt) = match ic {
                    "sine" => (BurgersIc::Sine, 201),
                    "gaussian" => (BurgersIc::Gaussian, 101),
                    _ => return Err(bad_ic()),
                };
                let x = grid(-8.0, 8.0, self.nx.unwrap_or(256), false);
                let t = grid(0.0, 10.0, self.nt.unwrap_or(nt), true);
                gen_burgers(self.coefficient.unwrap_or(0.1), &ic, x, t, dt)
            }
            Equation::Kdv => {
                if ic != "sine" {
                    return Err(bad_ic());
                }
                let x = grid(-20.0, 20.0, self.nx.unwrap_or(512), false);
                let t = grid(0.0, 40.0, self.nt.unwrap_or(201), true);
                gen_kdv(&KdvIc::Sine, x, t, dt)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    /// A dataset file, or a `t,x,u` CSV of samples.
    Path(PathBuf),
    Generate(GeneratorSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Noise level: noise std over clean-data std.
    #[serde(default)]
    pub noise: f64,
    pub n_data: usize,
    #[serde(default = "default_u_widths")]
    pub u_widths: Vec<usize>,
    /// Hidden widths of N; its input width is `train.order + 1`.
    #[serde(default = "default_n_hidden")]
    pub n_hidden: Vec<usize>,
    #[serde(default)]
    pub activation: ActivationKind,
    #[serde(default)]
    pub train: TrainConfig,
    /// Maximum total degree of library terms.
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "default_n_extract")]
    pub n_extract: usize,
    /// Master seed; every random stream (and `train.seed`) derives from it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Also write the assembled library system as CSV.
    #[serde(default)]
    pub dump_system: bool,
}

fn default_u_widths() -> Vec<usize> {
    vec![2, 50, 50, 50, 50, 50, 1]
}

fn default_n_hidden() -> Vec<usize> {
    vec![100, 100]
}

fn default_degree() -> u32 {
    2
}

fn default_n_extract() -> usize {
    20_000
}

/// Presets shipped with the binary, `(name, json)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("heat-desk", include_str!("../presets/heat-desk.json")),
    ("heat-full", include_str!("../presets/heat-full.json")),
    ("burgers-desk", include_str!("../presets/burgers-desk.json")),
    ("burgers-full", include_str!("../presets/burgers-full.json")),
    ("kdv-desk", include_str!("../presets/kdv-desk.json")),
    ("kdv-full", include_str!("../presets/kdv-full.json")),
];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset {name:?}; available: {}", names.join(", ")))
        })?;
        Self::from_json(text)
    }

    pub fn order(&self) -> usize {
        self.train.order
    }

    pub fn n_widths(&self) -> Vec<usize> {
        let mut w = vec![self.order() + 1];
        w.extend_from_slice(&self.n_hidden);
        w.push(1);
        w
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=6).contains(&self.degree) {
            return bad(format!("degree must be in 1..=6, got {}", self.degree));
        }
        if self.u_widths.len() < 2 || self.u_widths[0] != 2 || self.u_widths.last() != Some(&1) {
            return bad(format!("u_widths must start with 2 and end with 1, got {:?}", self.u_widths));
        }
        if self.u_widths.contains(&0) || self.n_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.n_data == 0 || self.n_extract == 0 {
            return bad("n_data and n_extract must be positive".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if let DatasetSource::Path(p) = &self.dataset {
            if !p.exists() {
                return bad(format!("dataset {} does not exist", p.display()));
            }
        }
        Ok(())
    }
}

/// Training data, before or after corruption.
#[derive(Clone, Debug)]
pub enum Source {
    Grid(GridDataset),
    Samples(SampleSet),
}

pub fn load_source(src: &DatasetSource) -> Result<Source> {
    match src {
        DatasetSource::Generate(spec) => Ok(Source::Grid(spec.generate()?)),
        DatasetSource::Path(p) => match read_dataset(p) {
            Ok(ds) => Ok(Source::Grid(ds)),
            Err(Error::Format { .. }) if p.extension().is_some_and(|e| e == "csv") => {
                Ok(Source::Samples(read_samples_csv(p)?))
            }
            Err(e) => Err(e),
        },
    }
}

fn noisy_samples(s: &SampleSet, p: f64, seed: u64) -> Result<SampleSet> {
    let mut out = s.clone();
    if p > 0.0 {
        let normal = Normal::new(0.0, p * std_dev(&s.u)).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = rng::stream(seed, Stream::Noise);
        out.u.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    Ok(out)
}

fn subsample_samples(s: &SampleSet, n: usize, seed: u64) -> Result<SampleSet> {
    if n > s.len() {
        return Err(Error::Config(format!("cannot draw {n} samples from {}", s.len())));
    }
    let mut idx = index::sample(&mut rng::stream(seed, Stream::Subsample), s.len(), n).into_vec();
    idx.sort_unstable();
    let mut out = SampleSet::default();
    for k in idx {
        out.push(s.t[k], s.x[k], s.u[k]);
    }
    Ok(out)
}

/// Everything a discovery run produces.
#[derive(Debug)]
pub struct RunOutput {
    pub report: PDEReport,
    pub history: TrainHistory,
    pub u: RationalNetwork,
    pub n: RationalNetwork,
    pub noisy: Option<GridDataset>,
    pub samples: SampleSet,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    package: &'a str,
    version: &'a str,
    seed: u64,
    threads: usize,
    epochs_run: usize,
    stopped_early: Option<&'a str>,
    training_seconds: f64,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs corrupt, subsample, train, extract and rank; writes artifacts when
/// `cfg.output_dir` is set.
pub fn discover(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let out_dir = cfg.output_dir.clone();
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("config.json"), &serde_json::to_string_pretty(cfg)?)?;
    }

    let (noisy, samples, domain) = match load_source(&cfg.dataset)? {
        Source::Grid(ds) => {
            let noisy = datasets::inject_noise(&ds, cfg.noise, cfg.seed)?;
            let samples = datasets::subsample(&noisy, cfg.n_data, cfg.seed)?;
            let domain = noisy.domain();
            (Some(noisy), samples, domain)
        }
        Source::Samples(s) => {
            let s = subsample_samples(&noisy_samples(&s, cfg.noise, cfg.seed)?, cfg.n_data, cfg.seed)?;
            let domain = s.bounds().expect("nonempty samples");
            (None, s, domain)
        }
    };
    if let Some(dir) = &out_dir {
        if let Some(ds) = &noisy {
            write_dataset(ds, &dir.join("dataset.pdrd"))?;
        }
        write_samples_csv(&samples, &dir.join("samples.csv"))?;
    }

    let mut u = RationalNetwork::new(&cfg.u_widths, cfg.activation)?.init_weights(seed_for(cfg.seed, Stream::InitU));
    let (shift, scale) = domain.normalization();
    u.set_input_normalization(&shift, &scale)?;
    let mut n = RationalNetwork::new(&cfg.n_widths(), cfg.activation)?.init_weights(seed_for(cfg.seed, Stream::InitN));

    let history = match &out_dir {
        Some(dir) => {
            let path = dir.join("train_log.ndjson");
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            let h = train(&mut u, &mut n, &samples, domain, &train_cfg, Some(&mut w))?;
            w.flush().map_err(|e| Error::io(&path, e))?;
            h
        }
        None => train(&mut u, &mut n, &samples, domain, &train_cfg, None)?,
    };
    if let Some(dir) = &out_dir {
        u.save(&dir.join("u.json"))?;
        n.save(&dir.join("n.json"))?;
    }

    let report = extract(&u, &n, domain, cfg, out_dir.as_deref())?;
    if let Some(dir) = &out_dir {
        write_file(&dir.join("report.json"), &report.to_json()?)?;
        write_file(&dir.join("report.txt"), &report.to_text())?;
        let info = RunInfo {
            package: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            threads: rayon::current_num_threads(),
            epochs_run: history.len(),
            stopped_early: history.stopped_early.as_deref(),
            training_seconds: history.records.last().map_or(0.0, |r| r.wall_time),
        };
        write_file(&dir.join("run_info.json"), &serde_json::to_string_pretty(&info)?)?;
    }
    Ok(RunOutput {
        report,
        history,
        u,
        n,
        noisy,
        samples,
    })
}

/// Network initialization seed for one of the streams.
fn seed_for(seed: u64, which: Stream) -> u64 {
    use rand::RngCore;
    rng::stream(seed, which).next_u64()
}

/// Builds the library system from trained networks and ranks the RFE path.
pub fn extract(
    u: &RationalNetwork,
    n: &RationalNetwork,
    domain: Rect,
    cfg: &ExperimentConfig,
    dump_dir: Option<&Path>,
) -> Result<PDEReport> {
    let terms = enumerate_terms(cfg.order(), cfg.degree);
    let points = sample_extraction(domain, cfg.n_extract, cfg.seed);
    let system = build_system(u, n, &points, &terms)?;
    if let (true, Some(dir)) = (cfg.dump_system, dump_dir) {
        system.write_csv(&dir.join("system.csv"))?;
    }
    let path = rfe_path(&system);
    let meta = ReportMeta {
        order: cfg.order(),
        degree: cfg.degree,
        n_extract: cfg.n_extract,
        seed: cfg.seed,
    };
    Ok(rank_candidates(&path, &system.names(), meta))
}

/// File names written by [`export_plots`].
pub const PLOT_FILES: [&str; 4] = ["noisy_data.csv", "learned_u.csv", "abs_error.csv", "pde_residual.csv"];

/// Writes the noisy data, learned `U`, `|U - data|` and PDE residual on the
/// dataset grid as `t,x,value` CSV files.
pub fn export_plots(run_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cfg = ExperimentConfig::load(&run_dir.join("config.json"))?;
    let ds = read_dataset(&run_dir.join("dataset.pdrd"))?;
    let u = RationalNetwork::load(&run_dir.join("u.json"))?;
    let n = RationalNetwork::load(&run_dir.join("n.json"))?;
    let points: Vec<[f64; 2]> = ds
        .t
        .iter()
        .flat_map(|&t| ds.x.iter().map(move |&x| [x, t]))
        .collect();
    let (feats, dt) = features(&u, &points, cfg.order())?;
    let rhs = n.forward_block(&crate::block::JetBlock::from_scalars(
        points.len(),
        cfg.order() + 1,
        feats.as_slice().expect("row-major features"),
    )?)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut grids: [String; 4] = Default::default();
    for g in &mut grids {
        g.push_str("t,x,value\n");
    }
    for (k, [x, t]) in points.iter().enumerate() {
        let data = ds.values[(k / ds.x.len(), k % ds.x.len())];
        let learned = feats[(k, 0)];
        let residual = (dt[k] - rhs.value(k, 0)).abs();
        for (g, v) in grids.iter_mut().zip([data, learned, (learned - data).abs(), residual]) {
            g.push_str(&format!("{t:?},{x:?},{v:?}\n"));
        }
    }
    let mut written = Vec::new();
    for (name, text) in PLOT_FILES.iter().zip(grids) {
        let path = out_dir.join(name);
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
