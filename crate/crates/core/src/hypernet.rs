//! MLP hypernetworks mapping a preference vector to a decision vector, or to
//! the flat weights of a small target network.
//!
//! Weights are stored flat, layer by layer: the `in × out` weight matrix in
//! row-major order followed by the `out` biases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::prefs::PreferenceVector;
use crate::problems::{FeasibleSet, ProblemId, ProblemSpec, MTL_LITE_INPUT_DIM};

/// Output head applied after the last linear layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Head {
    /// `lo + (hi − lo) · sigmoid(z)`.
    SigmoidBox {
        lo: f64,
        hi: f64,
    },
    Raw,
    /// `sqrt(softmax(z))`, which lands on the positive unit sphere.
    SoftmaxSqrt,
}

/// A relu MLP whose weights are produced by the hypernetwork.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetNetSpec {
    pub widths: Vec<usize>,
}

impl TargetNetSpec {
    pub fn mtl_lite() -> Self {
        Self {
            widths: vec![MTL_LITE_INPUT_DIM, 32, 32, 2],
        }
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.widths)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Contract(format!("bad target widths {:?}", self.widths)));
        }
        Ok(())
    }

    /// Differentiable forward pass of a `B × in` batch through the network
    /// described by `theta`.
    pub fn forward<'t>(&self, theta: Var<'t>, x: Var<'t>) -> Result<Var<'t>> {
        self.validate()?;
        if theta.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "target network needs {} parameters, got {}",
                self.param_count(),
                theta.len()
            )));
        }
        let theta = theta.reshape(&[theta.len()])?;
        mlp(theta, &self.widths, x)
    }

    /// Plain-value forward pass of one input row.
    pub fn forward_values(&self, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.param_count() || x.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "target network needs {} parameters and {} inputs, got {} and {}",
                self.param_count(),
                self.input_dim(),
                theta.len(),
                x.len()
            )));
        }
        Ok(mlp_values(theta, &self.widths, x))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypernetArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub head: Head,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetNetSpec>,
}

impl HypernetArch {
    /// Default architecture for a registered problem.
    pub fn for_problem(problem: &ProblemSpec) -> Self {
        let m = problem.m;
        let n = problem.n;
        let sigmoid_box = || match problem.feasible {
            FeasibleSet::Box { lo, hi } => Head::SigmoidBox { lo, hi },
            FeasibleSet::UnitSpherePositive => Head::SoftmaxSqrt,
        };
        let (hidden, head) = match problem.id {
            ProblemId::Ex71 => (vec![100; 2], sigmoid_box()),
            ProblemId::Ex72 => (vec![100; 3], Head::Raw),
            ProblemId::Ex73 => (vec![100; 4], Head::SoftmaxSqrt),
            _ => (vec![100; 2], sigmoid_box()),
        };
        Self {
            input_dim: m,
            hidden,
            output_dim: n,
            head,
            target: None,
        }
    }

    /// Two hidden layers of 128 with a raw head emitting the target weights.
    pub fn for_target(m: usize, target: TargetNetSpec) -> Self {
        Self {
            input_dim: m,
            hidden: vec![128; 2],
            output_dim: target.param_count(),
            head: Head::Raw,
            target: Some(target),
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.widths())
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() {
            return Err(Error::Contract("hypernetwork needs at least one hidden layer".into()));
        }
        if self.widths().contains(&0) {
            return Err(Error::Contract(format!("zero-width layer in {:?}", self.widths())));
        }
        if let Head::SigmoidBox { lo, hi } = self.head {
            if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                return Err(Error::Contract(format!("bad box head bounds [{lo}, {hi}]")));
            }
        }
        if let Some(target) = &self.target {
            target.validate()?;
            if self.head == Head::SoftmaxSqrt {
                return Err(Error::Contract(
                    "softmax-sqrt head is for sphere-constrained problems".into(),
                ));
            }
            if target.param_count() != self.output_dim {
                return Err(Error::Contract(format!(
                    "hypernetwork output {} does not match target parameter count {}",
                    self.output_dim,
                    target.param_count()
                )));
            }
        }
        Ok(())
    }

    /// Differentiable forward pass of a `B × m` batch of preferences through
    /// the weights `phi`, including the head.
    pub fn forward<'t>(&self, phi: Var<'t>, rs: Var<'t>) -> Result<Var<'t>> {
        if phi.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "hypernetwork needs {} weights, got {}",
                self.param_count(),
                phi.len()
            )));
        }
        let z = mlp(phi, &self.widths(), rs)?;
        apply_head(self.head, z)
    }

    /// Plain-value forward pass for one preference.
    pub fn forward_values(&self, phi: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.input_dim {
            return Err(Error::Contract(format!(
                "preference has {} entries, model expects {}",
                r.len(),
                self.input_dim
            )));
        }
        if phi.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "hypernetwork needs {} weights, got {}",
                self.param_count(),
                phi.len()
            )));
        }
        let mut z = mlp_values(phi, &self.widths(), r);
        match self.head {
            Head::Raw => {}
            Head::SigmoidBox { lo, hi } => {
                for v in &mut z {
                    *v = lo + (hi - lo) * crate::autodiff::sigmoid(*v);
                }
            }
            Head::SoftmaxSqrt => {
                let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = z.iter().map(|v| (v - top).exp()).collect();
                let total: f64 = exps.iter().sum();
                z = exps.iter().map(|e| (e / total).sqrt()).collect();
            }
        }
        Ok(z)
    }
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn mlp<'t>(theta: Var<'t>, widths: &[usize], input: Var<'t>) -> Result<Var<'t>> {
    let tape = theta.tape();
    let mut h = match input.shape().as_slice() {
        [d] => input.reshape(&[1, *d])?,
        [_, _] => input,
        other => {
            return Err(Error::Shape {
                op: "mlp",
                lhs: vec![widths[0]],
                rhs: other.to_vec(),
            })
        }
    };
    let batch = h.shape()[0];
    let ones = (batch > 1).then(|| tape.constant(Tensor::new(vec![batch, 1], vec![1.0; batch]).expect("ones")));
    let mut offset = 0;
    let layers = widths.len() - 1;
    for (layer, w) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = theta.slice(offset, fan_in * fan_out)?.reshape(&[fan_in, fan_out])?;
        offset += fan_in * fan_out;
        let bias = theta.slice(offset, fan_out)?.reshape(&[1, fan_out])?;
        offset += fan_out;
        let bias = match ones {
            Some(ones) => ones.matmul(bias)?,
            None => bias,
        };
        h = h.matmul(weights)?.add(bias)?;
        if layer + 1 < layers {
            h = h.relu();
        }
    }
    Ok(h)
}

fn mlp_values(theta: &[f64], widths: &[usize], input: &[f64]) -> Vec<f64> {
    let mut h = input.to_vec();
    let mut offset = 0;
    let layers = widths.len() - 1;
    for (layer, w) in widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &theta[offset..offset + fan_in * fan_out];
        offset += fan_in * fan_out;
        let bias = &theta[offset..offset + fan_out];
        offset += fan_out;
        let mut next = vec![0.0; fan_out];
        for (i, &hi) in h.iter().enumerate() {
            let row = &weights[i * fan_out..(i + 1) * fan_out];
            for (acc, &wij) in next.iter_mut().zip(row) {
                *acc += hi * wij;
            }
        }
        for (acc, &b) in next.iter_mut().zip(bias) {
            *acc += b;
            if layer + 1 < layers && *acc < 0.0 {
                *acc = 0.0;
            }
        }
        h = next;
    }
    h
}

fn apply_head<'t>(head: Head, z: Var<'t>) -> Result<Var<'t>> {
    match head {
        Head::Raw => Ok(z),
        Head::SigmoidBox { lo, hi } => Ok(z.sigmoid().scale(hi - lo).add_scalar(lo)),
        Head::SoftmaxSqrt => {
            let shape = z.shape();
            let (rows, cols) = (shape[0], shape[1]);
            let parts = (0..rows)
                .map(|i| z.slice(i * cols, cols)?.softmax()?.sqrt())
                .collect::<Result<Vec<_>>>()?;
            let joined = if parts.len() == 1 {
                parts[0]
            } else {
                z.tape().concat(&parts)?
            };
            joined.reshape(&[rows, cols])
        }
    }
}

/// A hypernetwork architecture with concrete weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypernetModel {
    pub arch: HypernetArch,
    pub weights: Vec<f64>,
    pub seed: u64,
}

impl HypernetModel {
    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights and zero biases.
    pub fn build(arch: HypernetArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(arch.param_count());
        for w in arch.widths().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.extend((0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)));
            weights.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self { arch, weights, seed })
    }

    pub fn from_weights(arch: HypernetArch, weights: Vec<f64>, seed: u64) -> Result<Self> {
        arch.validate()?;
        if weights.len() != arch.param_count() {
            return Err(Error::ModelMismatch(format!(
                "architecture needs {} weights, got {}",
                arch.param_count(),
                weights.len()
            )));
        }
        Ok(Self { arch, weights, seed })
    }

    /// `h(r)`: the decision vector, or the target weights in MTL mode.
    pub fn forward(&self, r: &PreferenceVector) -> Result<Vec<f64>> {
        self.arch.forward_values(&self.weights, r.as_slice())
    }

    /// Differentiable forward pass with the model weights as constants.
    pub fn forward_var<'t>(&self, tape: &'t Tape, r: &PreferenceVector) -> Result<Var<'t>> {
        let phi = tape.constant(Tensor::vector(self.weights.clone()));
        let out = self.arch.forward(phi, tape.vector(r.as_slice()))?;
        out.reshape(&[self.arch.output_dim])
    }
}
