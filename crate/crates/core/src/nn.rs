//! Fully connected layer helpers shared by the encoder, the pose heads and
//! the SDF decoders.

use rand::Rng;

use crate::autodiff::{AutodiffError, NodeId, ParamStore, Tape, Tensor};

/// Weight names for layer `i` of a block with the given prefix.
pub fn weight_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}.l{layer}.weight")
}

pub fn bias_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}.l{layer}.bias")
}

/// Uniform fan-in initialization: weights and biases in +-1/sqrt(fan_in).
pub fn init_linear<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    layer: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<(), AutodiffError> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
    let b = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
    store.insert(weight_name(prefix, layer), Tensor::matrix(fan_in, fan_out, w))?;
    store.insert(bias_name(prefix, layer), Tensor::matrix(1, fan_out, b))?;
    Ok(())
}

/// `x W + b` for layer `layer` of `prefix`.
pub fn linear(
    tape: &mut Tape,
    store: &ParamStore,
    prefix: &str,
    layer: usize,
    x: NodeId,
) -> Result<NodeId, AutodiffError> {
    let w = tape.param(store, &weight_name(prefix, layer))?;
    let b = tape.param(store, &bias_name(prefix, layer))?;
    tape.affine(x, w, Some(b))
}

/// A plain MLP: relu between layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub prefix: String,
    pub widths: Vec<usize>,
}

impl Mlp {
    pub fn new(prefix: &str, widths: &[usize]) -> Self {
        Self { prefix: prefix.to_string(), widths: widths.to_vec() }
    }

    pub fn init<R: Rng>(&self, store: &mut ParamStore, rng: &mut R) -> Result<(), AutodiffError> {
        for (i, w) in self.widths.windows(2).enumerate() {
            init_linear(store, &self.prefix, i, w[0], w[1], rng)?;
        }
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId, AutodiffError> {
        let layers = self.widths.len() - 1;
        let mut h = x;
        for i in 0..layers {
            h = linear(tape, store, &self.prefix, i, h)?;
            if i + 1 < layers {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("mlp has layers")
    }
}
