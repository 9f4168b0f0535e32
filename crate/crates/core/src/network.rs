//! Dense feed-forward networks with per-layer trainable activations.

use std::path::Path;

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{default_rational, ActivationKind, RationalActivation, RATIONAL_PARAMS};
use crate::block::{self, ActivationFn, JetBlock};
use crate::error::{Error, Result};
use crate::jet::{Jet, MAX_ORDER};
use crate::tape::{ActivationOp, AdjointTape, NodeId, ParamSlot};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Total trainable parameters for the given layer widths.
pub fn parameter_count(widths: &[usize], kind: ActivationKind) -> usize {
    let dense: usize = widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let hidden = widths.len().saturating_sub(2);
    dense + kind.params_per_layer() * hidden
}

/// Parameter slots of one layer, in flat-vector order.
#[derive(Clone, Copy, Debug)]
pub struct LayerSlots {
    pub weight: ParamSlot,
    pub bias: ParamSlot,
    pub activation: Option<ParamSlot>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalNetwork {
    widths: Vec<usize>,
    activation: ActivationKind,
    params: Vec<f64>,
    /// Inputs are mapped through `(v - shift) * scale` before the first layer.
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    #[serde(flatten)]
    network: RationalNetwork,
}

impl RationalNetwork {
    /// Zero weights and biases; rational layers start at the ReLU fit.
    pub fn new(widths: &[usize], activation: ActivationKind) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let mut net = RationalNetwork {
            widths: widths.to_vec(),
            activation,
            params: vec![0.0; parameter_count(widths, activation)],
            input_shift: vec![0.0; widths[0]],
            input_scale: vec![1.0; widths[0]],
            seed: 0,
        };
        if activation == ActivationKind::Rational {
            let fit = default_rational();
            for layer in 0..net.hidden_layers() {
                net.set_activation(layer, &fit);
            }
        }
        Ok(net)
    }

    /// Glorot-uniform weights, zero biases, deterministic under `seed`.
    pub fn init_weights(mut self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slots in self.layer_slots(0) {
            let (fan_out, fan_in) = (slots.weight.rows, slots.weight.cols);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut self.params[slots.weight.range()] {
                *w = rng.random_range(-limit..limit);
            }
            self.params[slots.bias.range()].fill(0.0);
        }
        if self.activation == ActivationKind::Rational {
            let fit = default_rational();
            for layer in 0..self.hidden_layers() {
                self.set_activation(layer, &fit);
            }
        }
        self.seed = seed;
        self
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation_kind(&self) -> ActivationKind {
        self.activation
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn set_input_normalization(&mut self, shift: &[f64], scale: &[f64]) -> Result<()> {
        if shift.len() != self.input_width() || scale.len() != self.input_width() {
            return Err(Error::Shape("normalization width".into()));
        }
        self.input_shift = shift.to_vec();
        self.input_scale = scale.to_vec();
        Ok(())
    }

    pub fn input_normalization(&self) -> (&[f64], &[f64]) {
        (&self.input_shift, &self.input_scale)
    }

    /// Slots of every layer, offset by `base` within a larger vector.
    pub fn layer_slots(&self, base: usize) -> Vec<LayerSlots> {
        let rational = self.activation == ActivationKind::Rational;
        let last = self.widths.len() - 2;
        let mut offset = base;
        let mut out = Vec::with_capacity(self.widths.len() - 1);
        for (l, w) in self.widths.windows(2).enumerate() {
            let weight = ParamSlot {
                offset,
                rows: w[1],
                cols: w[0],
            };
            offset += weight.len();
            let bias = ParamSlot {
                offset,
                rows: 1,
                cols: w[1],
            };
            offset += bias.len();
            let activation = (rational && l < last).then(|| {
                let slot = ParamSlot {
                    offset,
                    rows: 1,
                    cols: RATIONAL_PARAMS,
                };
                offset += RATIONAL_PARAMS;
                slot
            });
            out.push(LayerSlots {
                weight,
                bias,
                activation,
            });
        }
        out
    }

    pub fn activation(&self, layer: usize) -> Option<RationalActivation> {
        let slot = self.layer_slots(0)[layer].activation?;
        Some(RationalActivation::from_slice(&self.params[slot.range()]))
    }

    pub fn set_activation(&mut self, layer: usize, act: &RationalActivation) {
        if let Some(slot) = self.layer_slots(0)[layer].activation {
            self.params[slot.range()].copy_from_slice(&act.to_array());
        }
    }

    fn check_input(&self, block: &JetBlock) -> Result<()> {
        if block.cols() != self.input_width() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                block.cols()
            )));
        }
        if block.layout().order > MAX_ORDER {
            return Err(Error::OrderTooHigh(block.layout().order));
        }
        Ok(())
    }

    fn hidden_fn<'a>(&self, params: &'a [f64], slots: &LayerSlots) -> ActivationFn<'a> {
        match (self.activation, slots.activation) {
            (ActivationKind::Rational, Some(s)) => ActivationFn::Rational(&params[s.range()]),
            (ActivationKind::Tanh, _) => ActivationFn::Tanh,
            (ActivationKind::Sigmoid, _) => ActivationFn::Sigmoid,
            (ActivationKind::Rational, None) => unreachable!("rational hidden layer without slot"),
        }
    }

    /// Forward pass on a block of jets without recording.
    pub fn forward_block(&self, input: &JetBlock) -> Result<JetBlock> {
        self.check_input(input)?;
        let mut x = input.clone();
        x.affine_columns(&self.input_shift, &self.input_scale);
        let slots = self.layer_slots(0);
        let last = slots.len() - 1;
        for (l, s) in slots.iter().enumerate() {
            let w = ArrayView2::from_shape((s.weight.rows, s.weight.cols), &self.params[s.weight.range()])
                .expect("slot shape");
            x = block::affine_forward(&x, w, &self.params[s.bias.range()])?;
            if l < last {
                x = block::activation_forward(&x, self.hidden_fn(&self.params, s))?;
            }
        }
        Ok(x)
    }

    /// Exact derivatives of the (scalar) output with respect to the seeded inputs.
    pub fn forward(&self, input: &[Jet]) -> Result<Jet> {
        let block = JetBlock::from_jets(1, input.len(), input)?;
        let out = self.forward_block(&block)?;
        Ok(out.jet(0, 0))
    }

    /// Scalar fast path.
    pub fn eval(&self, input: &[f64]) -> Result<f64> {
        if input.len() != self.input_width() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                input.len()
            )));
        }
        let mut x: Vec<f64> = input
            .iter()
            .zip(&self.input_shift)
            .zip(&self.input_scale)
            .map(|((v, s), k)| (v - s) * k)
            .collect();
        let slots = self.layer_slots(0);
        let last = slots.len() - 1;
        for (l, s) in slots.iter().enumerate() {
            let w = &self.params[s.weight.range()];
            let b = &self.params[s.bias.range()];
            let mut y: Vec<f64> = (0..s.weight.rows)
                .map(|j| {
                    let row = &w[j * s.weight.cols..(j + 1) * s.weight.cols];
                    row.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>() + b[j]
                })
                .collect();
            if l < last {
                match self.activation {
                    ActivationKind::Rational => {
                        let act = RationalActivation::from_slice(
                            &self.params[s.activation.expect("rational slot").range()],
                        );
                        for v in &mut y {
                            *v = act.eval(*v)?;
                        }
                    }
                    ActivationKind::Tanh => y.iter_mut().for_each(|v| *v = v.tanh()),
                    ActivationKind::Sigmoid => {
                        y.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()))
                    }
                }
            }
            x = y;
        }
        Ok(x[0])
    }

    /// Records the forward pass on `tape`, reading parameters at `base`.
    pub fn record(&self, tape: &mut AdjointTape, input: &JetBlock, base: usize) -> Result<NodeId> {
        self.check_input(input)?;
        let mut x = input.clone();
        x.affine_columns(&self.input_shift, &self.input_scale);
        let node = tape.constant(x);
        self.record_layers(tape, node, base)
    }

    /// Like [`record`](Self::record) but reads its input from an existing node.
    pub fn record_node(&self, tape: &mut AdjointTape, input: NodeId, base: usize) -> Result<NodeId> {
        let block = tape.value(input)?;
        self.check_input(block)?;
        let (rows, layout) = (block.rows(), block.layout());
        let identity = self.input_shift.iter().all(|&s| s == 0.0)
            && self.input_scale.iter().all(|&s| s == 1.0);
        if identity {
            return self.record_layers(tape, input, base);
        }
        let mut shift = JetBlock::zeros(rows, self.input_width(), layout);
        let mut scale = JetBlock::zeros(rows, self.input_width(), layout);
        for r in 0..rows {
            for c in 0..self.input_width() {
                shift.set(r, 0, c, self.input_shift[c]);
                scale.set(r, 0, c, self.input_scale[c]);
            }
        }
        let shift = tape.constant(shift);
        let scale = tape.constant(scale);
        let centered = tape.sub(input, shift)?;
        let node = tape.mul(centered, scale)?;
        self.record_layers(tape, node, base)
    }

    fn record_layers(&self, tape: &mut AdjointTape, mut node: NodeId, base: usize) -> Result<NodeId> {
        let slots = self.layer_slots(base);
        let last = slots.len() - 1;
        for (l, s) in slots.iter().enumerate() {
            node = tape.affine(node, s.weight, s.bias)?;
            if l < last {
                let op = match self.activation {
                    ActivationKind::Rational => ActivationOp::Rational(s.activation.expect("slot")),
                    ActivationKind::Tanh => ActivationOp::Tanh,
                    ActivationKind::Sigmoid => ActivationOp::Sigmoid,
                };
                node = tape.activate(node, op)?;
            }
        }
        Ok(node)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Checkpoint {
            format_version: CHECKPOINT_VERSION,
            network: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint version {}",
                ck.format_version
            )));
        }
        let net = ck.network;
        if net.widths.len() < 2 || net.params.len() != parameter_count(&net.widths, net.activation) {
            return Err(Error::Config("checkpoint parameter count does not match widths".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::format(path, j.to_string()),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Coord;

    const DEFAULT_U: [usize; 7] = [2, 50, 50, 50, 50, 50, 1];

    #[test]
    fn parameter_counts() {
        assert_eq!(parameter_count(&DEFAULT_U, ActivationKind::Tanh), 10401);
        assert_eq!(parameter_count(&DEFAULT_U, ActivationKind::Rational), 10436);
        assert_eq!(parameter_count(&[1, 1], ActivationKind::Rational), 2);
        let net = RationalNetwork::new(&DEFAULT_U, ActivationKind::Rational).unwrap();
        assert_eq!(net.params().len(), 10436);
    }

    #[test]
    fn single_affine_layer() {
        let mut net = RationalNetwork::new(&[2, 1], ActivationKind::Rational).unwrap();
        net.set_params(&[2.0, 0.0, 1.0]).unwrap();
        let out = net
            .forward(&[Jet::seed(3.0, Coord::X, 2), Jet::seed(0.0, Coord::T, 2)])
            .unwrap();
        assert_eq!(out, Jet { val: 7.0, dx: vec![2.0, 0.0], dt: 0.0 });
    }

    #[test]
    fn identity_activations_give_an_affine_map() {
        let mut net = RationalNetwork::new(&[2, 8, 8, 1], ActivationKind::Rational)
            .unwrap()
            .init_weights(4);
        for l in 0..net.hidden_layers() {
            net.set_activation(l, &RationalActivation::IDENTITY);
        }
        let out = net
            .forward(&[Jet::seed(0.3, Coord::X, 4), Jet::seed(1.1, Coord::T, 4)])
            .unwrap();
        assert!(out.dx[1..].iter().all(|v| *v == 0.0), "{:?}", out.dx);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = RationalNetwork::new(&DEFAULT_U, ActivationKind::Rational).unwrap().init_weights(9);
        let b = RationalNetwork::new(&DEFAULT_U, ActivationKind::Rational).unwrap().init_weights(9);
        assert_eq!(a.params(), b.params());
        let mut n = 0usize;
        let mut sum = 0.0;
        for s in a.layer_slots(0) {
            assert!(a.params()[s.bias.range()].iter().all(|v| *v == 0.0));
            sum += a.params()[s.weight.range()].iter().sum::<f64>();
            n += s.weight.len();
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn scalar_path_matches_jet_path() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..100 {
            let depth = rng.random_range(1..4);
            let mut widths = vec![2];
            widths.extend((0..depth).map(|_| rng.random_range(1..12)));
            widths.push(1);
            let net = RationalNetwork::new(&widths, ActivationKind::Rational)
                .unwrap()
                .init_weights(i);
            let (x, t) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let jet = net.forward(&[Jet::seed(x, Coord::X, 2), Jet::seed(t, Coord::T, 2)]).unwrap();
            let scalar = net.eval(&[x, t]).unwrap();
            assert!((jet.val - scalar).abs() <= 1e-12 * scalar.abs().max(1.0));
        }
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let net = RationalNetwork::new(&[2, 3, 1], ActivationKind::Tanh).unwrap();
        assert!(net.eval(&[1.0]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut net = RationalNetwork::new(&[2, 5, 5, 1], ActivationKind::Rational)
            .unwrap()
            .init_weights(77);
        net.set_input_normalization(&[0.1, -3.0], &[1.0 / 3.0, 0.7]).unwrap();
        let back = RationalNetwork::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
        for (a, b) in back.params().iter().zip(net.params()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
