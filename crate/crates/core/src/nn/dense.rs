//! Fully connected layer with hand-derived gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activated output.
    #[inline]
    pub fn derivative_from_output(&self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// max(0, min(1, 0.2x + 0.5)); derivative 0.2 strictly inside (-2.5, 2.5),
/// 0 at the kinks and outside.
#[inline]
pub fn hard_sigmoid(x: f64) -> f64 {
    (0.2 * x + 0.5).clamp(0.0, 1.0)
}

/// Derivative of [`hard_sigmoid`] recovered from its output value.
#[inline]
pub fn hard_sigmoid_derivative_from_output(y: f64) -> f64 {
    if y > 0.0 && y < 1.0 {
        0.2
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Matrix, // out × in
    pub b: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn init(input: usize, output: usize, activation: Activation, rng: &mut impl Rng) -> Dense {
        let a = (6.0 / (input + output) as f64).sqrt();
        let data = (0..output * input).map(|_| rng.gen_range(-a..a)).collect();
        Dense {
            w: Matrix::from_vec(output, input, data),
            b: vec![0.0; output],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows
    }

    pub fn param_count(&self) -> usize {
        self.w.data.len() + self.b.len()
    }

    /// out = act(W x + b)
    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
        self.w.matvec_add(x, out);
        for v in out.iter_mut() {
            *v = self.activation.apply(*v);
        }
    }

    /// Given input `x`, activated output `y`, and upstream gradient `dy`,
    /// accumulates parameter gradients and writes the input gradient.
    pub fn backward(
        &self,
        x: &[f64],
        y: &[f64],
        dy: &[f64],
        grads: &mut DenseGrads,
        dx: &mut [f64],
    ) {
        let mut delta = vec![0.0; y.len()];
        for i in 0..y.len() {
            delta[i] = dy[i] * self.activation.derivative_from_output(y[i]);
        }
        grads.w.outer_add(&delta, x);
        for (g, d) in grads.b.iter_mut().zip(&delta) {
            *g += d;
        }
        for v in dx.iter_mut() {
            *v = 0.0;
        }
        self.w.matvec_transpose_add(&delta, dx);
    }

    pub fn zero_grads(&self) -> DenseGrads {
        DenseGrads {
            w: Matrix::zeros(self.w.rows, self.w.cols),
            b: vec![0.0; self.b.len()],
        }
    }
}
