//! Single LSTM layer with backpropagation through time.
//!
//! Gate activations use the hard sigmoid, the candidate and cell output use
//! tanh. Only the final hidden state is returned (return-sequences false).
//! Gradients flow to all parameters, the input sequence, and the initial
//! states, so a learned initial-state path can train through this layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{hard_sigmoid, hard_sigmoid_derivative_from_output};
use super::matrix::Matrix;

/// Gate block order inside the packed weight matrices.
const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_G: usize = 2;
const GATE_O: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub units: usize,
    pub input_dim: usize,
    /// Input kernels, gates packed row-wise as [i, f, g, o]: (4·units) × input_dim.
    pub w_x: Matrix,
    /// Recurrent kernels, same packing: (4·units) × units.
    pub w_h: Matrix,
    /// Gate biases, same packing: 4·units.
    pub b: Vec<f64>,
}

/// Forward-pass values needed by the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub steps: usize,
    /// Activated gate values per step, 4·units each, [i, f, g, o] packing.
    pub gates: Vec<f64>,
    /// Hidden states h_0..h_T, (steps + 1)·units, h_0 first.
    pub hs: Vec<f64>,
    /// Cell states c_0..c_T, (steps + 1)·units.
    pub cs: Vec<f64>,
    /// tanh(c_t) per step, steps·units.
    pub tanh_cs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_x: Matrix,
    pub w_h: Matrix,
    pub b: Vec<f64>,
}

impl Lstm {
    /// Glorot-uniform input and recurrent kernels, forget-gate bias 1,
    /// other biases 0.
    pub fn init(input_dim: usize, units: usize, rng: &mut impl Rng) -> Lstm {
        let a_x = (6.0 / (input_dim + units) as f64).sqrt();
        let w_x = Matrix::from_vec(
            4 * units,
            input_dim,
            (0..4 * units * input_dim).map(|_| rng.gen_range(-a_x..a_x)).collect(),
        );
        let a_h = (6.0 / (units + units) as f64).sqrt();
        let w_h = Matrix::from_vec(
            4 * units,
            units,
            (0..4 * units * units).map(|_| rng.gen_range(-a_h..a_h)).collect(),
        );
        let mut b = vec![0.0; 4 * units];
        b[GATE_F * units..(GATE_F + 1) * units].fill(1.0);
        Lstm {
            units,
            input_dim,
            w_x,
            w_h,
            b,
        }
    }

    pub fn param_count(&self) -> usize {
        self.w_x.data.len() + self.w_h.data.len() + self.b.len()
    }

    /// Runs the recurrence over `steps` timesteps of `sequence`
    /// (row-major steps × input_dim). Returns the final hidden state and the
    /// cache for [`Lstm::backward`].
    pub fn forward(
        &self,
        sequence: &[f64],
        steps: usize,
        h0: &[f64],
        c0: &[f64],
    ) -> (Vec<f64>, LstmCache) {
        let u = self.units;
        assert_eq!(sequence.len(), steps * self.input_dim, "sequence shape mismatch");
        assert_eq!(h0.len(), u);
        assert_eq!(c0.len(), u);

        let mut cache = LstmCache {
            steps,
            gates: vec![0.0; steps * 4 * u],
            hs: vec![0.0; (steps + 1) * u],
            cs: vec![0.0; (steps + 1) * u],
            tanh_cs: vec![0.0; steps * u],
        };
        cache.hs[..u].copy_from_slice(h0);
        cache.cs[..u].copy_from_slice(c0);

        let mut pre = vec![0.0; 4 * u];
        for t in 0..steps {
            let x_t = &sequence[t * self.input_dim..(t + 1) * self.input_dim];
            pre.copy_from_slice(&self.b);
            self.w_x.matvec_add(x_t, &mut pre);
            let (h_prev, h_rest) = cache.hs.split_at_mut((t + 1) * u);
            let h_prev = &h_prev[t * u..];
            self.w_h.matvec_add(h_prev, &mut pre);

            let gates = &mut cache.gates[t * 4 * u..(t + 1) * 4 * u];
            for k in 0..u {
                gates[GATE_I * u + k] = hard_sigmoid(pre[GATE_I * u + k]);
                gates[GATE_F * u + k] = hard_sigmoid(pre[GATE_F * u + k]);
                gates[GATE_G * u + k] = pre[GATE_G * u + k].tanh();
                gates[GATE_O * u + k] = hard_sigmoid(pre[GATE_O * u + k]);
            }

            let (c_prev, c_rest) = cache.cs.split_at_mut((t + 1) * u);
            let c_prev = &c_prev[t * u..];
            let c_t = &mut c_rest[..u];
            let h_t = &mut h_rest[..u];
            let tanh_c = &mut cache.tanh_cs[t * u..(t + 1) * u];
            for k in 0..u {
                let c = gates[GATE_F * u + k] * c_prev[k] + gates[GATE_I * u + k] * gates[GATE_G * u + k];
                c_t[k] = c;
                tanh_c[k] = c.tanh();
                h_t[k] = gates[GATE_O * u + k] * tanh_c[k];
            }
        }
        let h_final = cache.hs[steps * u..].to_vec();
        (h_final, cache)
    }

    /// BPTT. `grad_h_final` is dL/dh_T. Accumulates parameter gradients into
    /// `grads`, writes input-sequence gradients into `dx` (steps × input_dim),
    /// and returns (dh0, dc0).
    pub fn backward(
        &self,
        sequence: &[f64],
        cache: &LstmCache,
        grad_h_final: &[f64],
        grads: &mut LstmGrads,
        dx: &mut [f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let u = self.units;
        let steps = cache.steps;
        assert_eq!(grad_h_final.len(), u);
        assert_eq!(dx.len(), steps * self.input_dim);

        let mut dh = grad_h_final.to_vec();
        let mut dc = vec![0.0; u];
        let mut d_pre = vec![0.0; 4 * u];

        for t in (0..steps).rev() {
            let gates = &cache.gates[t * 4 * u..(t + 1) * 4 * u];
            let tanh_c = &cache.tanh_cs[t * u..(t + 1) * u];
            let c_prev = &cache.cs[t * u..(t + 1) * u];
            let h_prev = &cache.hs[t * u..(t + 1) * u];
            let x_t = &sequence[t * self.input_dim..(t + 1) * self.input_dim];

            for k in 0..u {
                let i = gates[GATE_I * u + k];
                let f = gates[GATE_F * u + k];
                let g = gates[GATE_G * u + k];
                let o = gates[GATE_O * u + k];
                let tc = tanh_c[k];

                let d_o = dh[k] * tc;
                let dc_total = dh[k] * o * (1.0 - tc * tc) + dc[k];
                let d_i = dc_total * g;
                let d_f = dc_total * c_prev[k];
                let d_g = dc_total * i;

                d_pre[GATE_I * u + k] = d_i * hard_sigmoid_derivative_from_output(i);
                d_pre[GATE_F * u + k] = d_f * hard_sigmoid_derivative_from_output(f);
                d_pre[GATE_G * u + k] = d_g * (1.0 - g * g);
                d_pre[GATE_O * u + k] = d_o * hard_sigmoid_derivative_from_output(o);

                dc[k] = dc_total * f;
            }

            grads.w_x.outer_add(&d_pre, x_t);
            grads.w_h.outer_add(&d_pre, h_prev);
            for (gb, d) in grads.b.iter_mut().zip(&d_pre) {
                *gb += d;
            }

            let dx_t = &mut dx[t * self.input_dim..(t + 1) * self.input_dim];
            self.w_x.matvec_transpose_add(&d_pre, dx_t);

            dh.fill(0.0);
            self.w_h.matvec_transpose_add(&d_pre, &mut dh);
        }
        (dh, dc)
    }

    pub fn zero_grads(&self) -> LstmGrads {
        LstmGrads {
            w_x: Matrix::zeros(self.w_x.rows, self.w_x.cols),
            w_h: Matrix::zeros(self.w_h.rows, self.w_h.cols),
            b: vec![0.0; self.b.len()],
        }
    }
}
