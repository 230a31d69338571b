//! Three-layer perceptron mapping rig parameters to blendshape weights.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const HIDDEN_DIM: usize = 128;

/// Fully connected layer, weights stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform init in `±1/sqrt(in_dim)` for weights and biases.
    pub fn uniform<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim);
        for w in &mut layer.weight {
            *w = rng.gen_range(-bound..bound);
        }
        for b in &mut layer.bias {
            *b = rng.gen_range(-bound..bound);
        }
        layer
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (o, row) in out.iter_mut().zip(self.weight.chunks_exact(self.in_dim)) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        out
    }

    /// Accumulates weight/bias gradients into `grad` and returns the input gradient.
    fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                grad_in[i] += g * row[i];
            }
        }
        grad_in
    }

    fn scalars_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Weights of `H → 128 → 128 → K` with ReLU between layers and a linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpWeights {
    pub layers: [Dense; 3],
}

impl MlpWeights {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        Self {
            layers: [
                Dense::zeros(input_dim, hidden_dim),
                Dense::zeros(hidden_dim, hidden_dim),
                Dense::zeros(hidden_dim, output_dim),
            ],
        }
    }

    /// Every layer uniform in `±1/sqrt(fan_in)`. A zero output layer would
    /// pair with the zero-initialized deltas into a stationary point where
    /// neither receives gradient.
    pub fn new<R: Rng>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        Self::with_hidden(input_dim, HIDDEN_DIM, output_dim, rng)
    }

    pub fn with_hidden<R: Rng>(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            layers: [
                Dense::uniform(input_dim, hidden_dim, rng),
                Dense::uniform(hidden_dim, hidden_dim, rng),
                Dense::uniform(hidden_dim, output_dim, rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers[0].out_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].out_dim
    }

    pub fn validate(&self) -> Result<()> {
        for layer in &self.layers {
            check_dim("mlp weight", layer.in_dim * layer.out_dim, layer.weight.len())?;
            check_dim("mlp bias", layer.out_dim, layer.bias.len())?;
        }
        check_dim("mlp layer 2 input", self.layers[0].out_dim, self.layers[1].in_dim)?;
        check_dim("mlp layer 3 input", self.layers[1].out_dim, self.layers[2].in_dim)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn scalars_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let [a, b, c] = &mut self.layers;
        a.scalars_mut().chain(b.scalars_mut()).chain(c.scalars_mut())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn fill_zero(&mut self) {
        self.scalars_mut().for_each(|v| *v = 0.0);
    }

    pub fn add_assign(&mut self, other: &MlpWeights) {
        for (a, b) in self.scalars_mut().zip(other.flatten()) {
            *a += b;
        }
    }
}

fn relu(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// ψ = L₃(ReLU(L₂(ReLU(L₁ θ)))).
pub fn map_params(mlp: &MlpWeights, theta: &[f64]) -> Result<Vec<f64>> {
    check_dim("rig parameters", mlp.input_dim(), theta.len())?;
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return Err(Error::Config(format!("rig parameter {i} is not finite")));
    }
    let mut h1 = mlp.layers[0].forward(theta);
    relu(&mut h1);
    let mut h2 = mlp.layers[1].forward(&h1);
    relu(&mut h2);
    Ok(mlp.layers[2].forward(&h2))
}

/// Adjoint of [`map_params`]: returns (weight gradients, θ gradient).
pub fn mlp_backward(
    mlp: &MlpWeights,
    theta: &[f64],
    grad_psi: &[f64],
) -> Result<(MlpWeights, Vec<f64>)> {
    let mut grads = MlpWeights::zeros(mlp.input_dim(), mlp.hidden_dim(), mlp.output_dim());
    let grad_theta = mlp_backward_into(mlp, theta, grad_psi, &mut grads)?;
    Ok((grads, grad_theta))
}

/// Same as [`mlp_backward`] but accumulates into an existing gradient buffer.
pub fn mlp_backward_into(
    mlp: &MlpWeights,
    theta: &[f64],
    grad_psi: &[f64],
    grads: &mut MlpWeights,
) -> Result<Vec<f64>> {
    check_dim("rig parameters", mlp.input_dim(), theta.len())?;
    check_dim("blendshape weight gradient", mlp.output_dim(), grad_psi.len())?;
    let [l1, l2, l3] = &mlp.layers;
    let pre1 = l1.forward(theta);
    let mut h1 = pre1.clone();
    relu(&mut h1);
    let pre2 = l2.forward(&h1);
    let mut h2 = pre2.clone();
    relu(&mut h2);

    let [g1, g2, g3] = &mut grads.layers;
    let mut gh2 = l3.backward(&h2, grad_psi, g3);
    for (g, p) in gh2.iter_mut().zip(&pre2) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
    let mut gh1 = l2.backward(&h1, &gh2, g2);
    for (g, p) in gh1.iter_mut().zip(&pre1) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(l1.backward(theta, &gh1, g1))
}
