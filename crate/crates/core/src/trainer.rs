//! Joint training of the solution network `U` and the PDE network `N`.
//!
//! The loss is `mean_i (U(x_i, t_i) - u_i)^2 + mean_j (D_t U - N(U, D_x U, ..))^2`,
//! the first over data points and the second over collocation points that
//! are re-drawn every `n_select` epochs.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::JetBlock;
use crate::datasets::{Rect, SampleSet};
use crate::error::{Error, Result};
use crate::jet::{JetLayout, MAX_ORDER};
use crate::network::RationalNetwork;
use crate::optim::{Adam, Lbfgs};
use crate::rng::{self, Stream};
use crate::tape::{AdjointTape, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_coll: usize,
    pub n_select: usize,
    pub adam_epochs: usize,
    pub adam_lr: f64,
    pub lbfgs_epochs: usize,
    pub lbfgs_lr: f64,
    /// Highest spatial derivative fed to `N`.
    pub order: usize,
    pub seed: u64,
    /// Points per independently recorded tape; sums are taken in shard order.
    pub shard_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_coll: 10_000,
            n_select: 1,
            adam_epochs: 2000,
            adam_lr: 1e-3,
            lbfgs_epochs: 200,
            lbfgs_lr: 0.1,
            order: 2,
            seed: 0,
            shard_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_coll == 0 {
            return bad("n_coll must be at least 1");
        }
        if self.n_select == 0 {
            return bad("n_select must be at least 1");
        }
        if !(1..=MAX_ORDER).contains(&self.order) {
            return bad("derivative order must be in 1..=4");
        }
        if self.shard_size == 0 {
            return bad("shard_size must be at least 1");
        }
        if !(self.adam_lr > 0.0 && self.lbfgs_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adam,
    Lbfgs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub data_loss: f64,
    pub coll_loss: f64,
    pub reselected: bool,
    #[serde(skip)]
    pub line_search_failed: bool,
    #[serde(skip)]
    pub wall_time: f64,
}

impl EpochRecord {
    pub fn total(&self) -> f64 {
        self.data_loss + self.coll_loss
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Why the L-BFGS phase ended before its budget, if it did.
    pub stopped_early: Option<String>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Both networks' parameters as one vector, `U` first.
pub fn joint_params(u: &RationalNetwork, n: &RationalNetwork) -> Vec<f64> {
    let mut p = u.params().to_vec();
    p.extend_from_slice(n.params());
    p
}

fn split_params(u: &mut RationalNetwork, n: &mut RationalNetwork, p: &[f64]) -> Result<()> {
    let k = u.params().len();
    u.set_params(&p[..k])?;
    n.set_params(&p[k..])
}

/// Records `scale * sum (U - target)^2` over `points`.
pub fn record_data_loss(
    tape: &mut AdjointTape,
    u: &RationalNetwork,
    base: usize,
    points: &[[f64; 2]],
    targets: &[f64],
    scale: f64,
) -> Result<NodeId> {
    let input = JetBlock::seeded_coords(points, JetLayout::SCALAR);
    let out = u.record(tape, &input, base)?;
    let target = tape.constant(JetBlock::from_scalars(targets.len(), 1, targets)?);
    let diff = tape.sub(out, target)?;
    tape.sum_squares(diff, scale)
}

/// Records `scale * sum (D_t U - N(U, D_x U, .., D_x^M U))^2` over `points`.
#[allow(clippy::too_many_arguments)]
pub fn record_collocation_loss(
    tape: &mut AdjointTape,
    u: &RationalNetwork,
    u_base: usize,
    n: &RationalNetwork,
    n_base: usize,
    points: &[[f64; 2]],
    order: usize,
    scale: f64,
) -> Result<NodeId> {
    let input = JetBlock::seeded_coords(points, JetLayout::new(order, true));
    let out = u.record(tape, &input, u_base)?;
    let ut = tape.time_derivative(out)?;
    let features = tape.derivatives(out)?;
    let rhs = n.record_node(tape, features, n_base)?;
    let residual = tape.sub(ut, rhs)?;
    tape.sum_squares(residual, scale)
}

/// Loss terms and their gradient over the joint parameter vector.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub data: f64,
    pub coll: f64,
    pub grad: Vec<f64>,
}

impl LossEval {
    pub fn total(&self) -> f64 {
        self.data + self.coll
    }
}

fn offset_pole(e: Error, start: usize) -> Error {
    match e {
        Error::Pole { value, row } => Error::Pole {
            value,
            row: row + start,
        },
        other => other,
    }
}

/// Evaluates both loss terms at the joint parameters `params`.
///
/// Points are split into fixed shards, each recorded on its own tape; the
/// per-shard values and gradients are summed in shard order, so the result
/// does not depend on the number of worker threads.
pub fn loss_and_grad(
    u: &RationalNetwork,
    n: &RationalNetwork,
    params: &[f64],
    samples: &SampleSet,
    points: &[[f64; 2]],
    order: usize,
    shard_size: usize,
) -> Result<LossEval> {
    let n_base = u.params().len();
    if params.len() != n_base + n.params().len() {
        return Err(Error::Shape(format!("{} joint parameters", params.len())));
    }
    let data_pts = samples.points();
    let data_scale = 1.0 / samples.len() as f64;
    let coll_scale = 1.0 / points.len() as f64;

    let jobs: Vec<(bool, usize)> = (0..data_pts.len())
        .step_by(shard_size)
        .map(|s| (true, s))
        .chain((0..points.len()).step_by(shard_size).map(|s| (false, s)))
        .collect();
    let parts: Vec<(bool, f64, Vec<f64>)> = jobs
        .par_iter()
        .map(|&(is_data, start)| -> Result<_> {
            let mut tape = AdjointTape::new(params);
            let node = if is_data {
                let end = (start + shard_size).min(data_pts.len());
                record_data_loss(&mut tape, u, 0, &data_pts[start..end], &samples.u[start..end], data_scale)
            } else {
                let end = (start + shard_size).min(points.len());
                record_collocation_loss(&mut tape, u, 0, n, n_base, &points[start..end], order, coll_scale)
            }
            .map_err(|e| offset_pole(e, start))?;
            Ok((is_data, tape.scalar(node)?, tape.backward(node)?))
        })
        .collect::<Result<_>>()?;

    let mut eval = LossEval {
        data: 0.0,
        coll: 0.0,
        grad: vec![0.0; params.len()],
    };
    for (is_data, value, grad) in parts {
        if is_data {
            eval.data += value;
        } else {
            eval.coll += value;
        }
        for (a, b) in eval.grad.iter_mut().zip(&grad) {
            *a += b;
        }
    }
    Ok(eval)
}

/// Plain mean-squared data misfit.
pub fn data_loss(u: &RationalNetwork, samples: &SampleSet) -> Result<f64> {
    let mut tape = AdjointTape::new(u.params());
    let node = record_data_loss(&mut tape, u, 0, &samples.points(), &samples.u, 1.0 / samples.len() as f64)?;
    tape.scalar(node)
}

/// Plain mean-squared PDE residual.
pub fn collocation_loss(
    u: &RationalNetwork,
    n: &RationalNetwork,
    points: &[[f64; 2]],
    order: usize,
) -> Result<f64> {
    let params = joint_params(u, n);
    let mut tape = AdjointTape::new(&params);
    let node = record_collocation_loss(
        &mut tape,
        u,
        0,
        n,
        u.params().len(),
        points,
        order,
        1.0 / points.len() as f64,
    )?;
    tape.scalar(node)
}

fn check_networks(u: &RationalNetwork, n: &RationalNetwork, order: usize) -> Result<()> {
    if u.input_width() != 2 || u.widths().last() != Some(&1) {
        return Err(Error::Config("U must map (x, t) to one output".into()));
    }
    if n.input_width() != order + 1 || n.widths().last() != Some(&1) {
        return Err(Error::Config(format!(
            "N must map {} derivative features to one output",
            order + 1
        )));
    }
    Ok(())
}

fn emit(log: &mut Option<&mut dyn Write>, rec: &EpochRecord) -> Result<()> {
    if let Some(w) = log.as_mut() {
        let line = serde_json::to_string(rec)?;
        writeln!(w, "{line}").map_err(|e| Error::io("<training log>", e))?;
    }
    Ok(())
}

/// Stop L-BFGS after this many consecutive iterations with negligible progress.
const STALL_ITERS: usize = 5;
const STALL_REL: f64 = 1e-8;

/// Full-batch Adam epochs followed by L-BFGS epochs.
///
/// Each record holds the losses at the parameters the epoch started from.
pub fn train(
    u: &mut RationalNetwork,
    n: &mut RationalNetwork,
    samples: &SampleSet,
    domain: Rect,
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    check_networks(u, n, cfg.order)?;
    if samples.is_empty() {
        return Err(Error::Config("no training samples".into()));
    }
    let mut params = joint_params(u, n);
    let mut coll_rng = rng::stream(cfg.seed, Stream::Collocation);
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut history = TrainHistory::default();
    let clock = Instant::now();
    let abort = |epoch: usize| move |e: Error| Error::TrainingAborted {
        epoch,
        source: Box::new(e),
    };
    let evaluate = |p: &[f64], pts: &[[f64; 2]]| -> Result<LossEval> {
        let eval = loss_and_grad(u, n, p, samples, pts, cfg.order, cfg.shard_size)?;
        if !eval.total().is_finite() {
            return Err(Error::Instability("non-finite loss".into()));
        }
        Ok(eval)
    };

    let mut adam = Adam::new(params.len(), cfg.adam_lr);
    for epoch in 0..cfg.adam_epochs {
        let reselected = epoch % cfg.n_select == 0;
        if reselected {
            points = domain.sample(cfg.n_coll, &mut coll_rng);
        }
        let eval = evaluate(&params, &points).map_err(abort(epoch))?;
        adam.step(&mut params, &eval.grad);
        let rec = EpochRecord {
            epoch,
            phase: Phase::Adam,
            data_loss: eval.data,
            coll_loss: eval.coll,
            reselected,
            line_search_failed: false,
            wall_time: clock.elapsed().as_secs_f64(),
        };
        emit(&mut log, &rec)?;
        history.records.push(rec);
    }

    let mut lbfgs = Lbfgs::new(cfg.lbfgs_lr);
    let mut current: Option<LossEval> = None;
    let (mut stalled, mut failures) = (0, 0);
    for k in 0..cfg.lbfgs_epochs {
        let epoch = cfg.adam_epochs + k;
        let reselected = epoch % cfg.n_select == 0 || points.is_empty();
        if reselected {
            points = domain.sample(cfg.n_coll, &mut coll_rng);
            current = None;
        }
        let start = match current.take() {
            Some(e) => e,
            None => evaluate(&params, &points).map_err(abort(epoch))?,
        };
        let mut last: Option<LossEval> = None;
        let step = lbfgs
            .step(&mut params, start.total(), &start.grad, |p| {
                let e = evaluate(p, &points)?;
                let out = (e.total(), e.grad.clone());
                last = Some(e);
                Ok(out)
            })
            .map_err(abort(epoch))?;
        let rec = EpochRecord {
            epoch,
            phase: Phase::Lbfgs,
            data_loss: start.data,
            coll_loss: start.coll,
            reselected,
            line_search_failed: !step.accepted,
            wall_time: clock.elapsed().as_secs_f64(),
        };
        emit(&mut log, &rec)?;
        history.records.push(rec);

        if step.accepted {
            failures = 0;
            let rel = (start.total() - step.loss) / start.total().abs().max(f64::MIN_POSITIVE);
            stalled = if rel < STALL_REL { stalled + 1 } else { 0 };
            current = last;
        } else {
            failures += 1;
            current = Some(start);
        }
        if failures >= 2 {
            history.stopped_early = Some(format!("line search failed twice at epoch {epoch}"));
            break;
        }
        if stalled >= STALL_ITERS {
            history.stopped_early = Some(format!("loss stalled at epoch {epoch}"));
            break;
        }
    }
    split_params(u, n, &params)?;
    Ok(history)
}
