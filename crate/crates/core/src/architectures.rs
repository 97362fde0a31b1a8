//! The seven comparable classifiers: three sequential-only baselines and four
//! hybrid networks combining temporal and aggregate inputs.

use std::io::{Read as IoRead, Write as IoWrite};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{flatten, LabeledSample};
use crate::forest::{fit_forest, Forest, ForestConfig};
use crate::nn::dense::DenseGrads;
use crate::nn::lstm::LstmGrads;
use crate::nn::{bce_single, train, Activation, Dense, GradientModel, Lstm, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArchitectureId {
    #[serde(alias = "rf")]
    BaselineRF,
    #[serde(alias = "ann")]
    BaselineANN,
    #[serde(alias = "lstm")]
    BaselineLSTM,
    #[serde(alias = "lstm-agg")]
    LstmPlusAggregated,
    #[serde(alias = "lstm-pred-agg")]
    LstmPredictPlusAggregated,
    #[serde(alias = "lstm-hidden")]
    LstmHiddenState,
    #[serde(alias = "static-in-lstm")]
    StaticInLstm,
}

impl ArchitectureId {
    pub const ALL: [ArchitectureId; 7] = [
        ArchitectureId::BaselineRF,
        ArchitectureId::BaselineANN,
        ArchitectureId::BaselineLSTM,
        ArchitectureId::LstmPlusAggregated,
        ArchitectureId::LstmPredictPlusAggregated,
        ArchitectureId::LstmHiddenState,
        ArchitectureId::StaticInLstm,
    ];

    /// CLI spelling.
    pub fn as_str(&self) -> &'static str {
        match self {
            ArchitectureId::BaselineRF => "rf",
            ArchitectureId::BaselineANN => "ann",
            ArchitectureId::BaselineLSTM => "lstm",
            ArchitectureId::LstmPlusAggregated => "lstm-agg",
            ArchitectureId::LstmPredictPlusAggregated => "lstm-pred-agg",
            ArchitectureId::LstmHiddenState => "lstm-hidden",
            ArchitectureId::StaticInLstm => "static-in-lstm",
        }
    }

    pub fn parse(s: &str) -> Option<ArchitectureId> {
        ArchitectureId::ALL.iter().copied().find(|a| a.as_str() == s)
    }

    /// Human-readable label used in reports.
    pub fn display_name(&self) -> &'static str {
        match self {
            ArchitectureId::BaselineRF => "Baseline RF",
            ArchitectureId::BaselineANN => "Baseline ANN",
            ArchitectureId::BaselineLSTM => "Baseline LSTM",
            ArchitectureId::LstmPlusAggregated => "LSTM + Aggregated",
            ArchitectureId::LstmPredictPlusAggregated => "LSTM Predict + Aggr.",
            ArchitectureId::LstmHiddenState => "LSTM Hidden State",
            ArchitectureId::StaticInLstm => "Static in LSTM",
        }
    }

    pub fn is_neural(&self) -> bool {
        !matches!(self, ArchitectureId::BaselineRF)
    }
}

/// Input dimensions shared by every architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Dims {
    pub n_t: usize,
    pub n_f: usize,
    pub n_agg: usize,
    pub units: usize,
    /// Hidden width of the flattened feed-forward baseline.
    pub ann_hidden: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            n_t: 14,
            n_f: 10,
            n_agg: 36,
            units: 16,
            ann_hidden: 64,
        }
    }
}

/// One assembled neural classifier. Which components are present depends on
/// the architecture; `head` is always the final sigmoid output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub arch: ArchitectureId,
    pub dims: Dims,
    pub lstm: Option<Lstm>,
    /// Frozen stage-1 sigmoid head (LstmPredictPlusAggregated only).
    pub lstm_head: Option<Dense>,
    /// Learned initial-state transforms (LstmHiddenState only).
    pub h0_dense: Option<Dense>,
    pub c0_dense: Option<Dense>,
    /// Hidden layer of the flattened feed-forward baseline.
    pub hidden: Option<Dense>,
    pub head: Dense,
}

#[derive(Debug, Clone)]
pub struct NetGrads {
    pub lstm: Option<LstmGrads>,
    pub lstm_head: Option<DenseGrads>,
    pub h0_dense: Option<DenseGrads>,
    pub c0_dense: Option<DenseGrads>,
    pub hidden: Option<DenseGrads>,
    pub head: DenseGrads,
}

/// A trained classifier of any of the seven architectures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)] // short-lived by-value moves only
pub enum ModelGraph {
    Neural(NeuralNet),
    Forest(Forest),
}

impl ModelGraph {
    pub fn architecture(&self) -> ArchitectureId {
        match self {
            ModelGraph::Neural(n) => n.arch,
            ModelGraph::Forest(_) => ArchitectureId::BaselineRF,
        }
    }

    /// Probability that the sample is a churner. Neural paths expect scaled
    /// features; the forest path consumes unscaled flattened features.
    pub fn predict(&self, sample: &LabeledSample) -> Result<f64> {
        match self {
            ModelGraph::Neural(n) => n.forward(sample),
            ModelGraph::Forest(f) => f.predict(&flatten(sample, false)),
        }
    }
}

/// Builds an untrained model with seeded initialization. The forest variant
/// has no parameters until fitted; it is returned empty here.
pub fn build(id: ArchitectureId, dims: &Dims, seed: u64) -> ModelGraph {
    match id {
        ArchitectureId::BaselineRF => ModelGraph::Forest(Forest::empty(dims.n_t * dims.n_f)),
        _ => ModelGraph::Neural(NeuralNet::build(id, dims, seed)),
    }
}

impl NeuralNet {
    pub fn build(arch: ArchitectureId, dims: &Dims, seed: u64) -> NeuralNet {
        assert!(arch.is_neural(), "BaselineRF is not a neural architecture");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = *dims;
        let (lstm, lstm_head, h0_dense, c0_dense, hidden, head) = match arch {
            ArchitectureId::BaselineANN => {
                let flat = d.n_t * d.n_f;
                let hidden = Dense::init(flat, d.ann_hidden, Activation::Relu, &mut rng);
                let head = Dense::init(d.ann_hidden, 1, Activation::Sigmoid, &mut rng);
                (None, None, None, None, Some(hidden), head)
            }
            ArchitectureId::BaselineLSTM => {
                let lstm = Lstm::init(d.n_f, d.units, &mut rng);
                let head = Dense::init(d.units, 1, Activation::Sigmoid, &mut rng);
                (Some(lstm), None, None, None, None, head)
            }
            ArchitectureId::LstmPlusAggregated => {
                let lstm = Lstm::init(d.n_f, d.units, &mut rng);
                let head = Dense::init(d.units + d.n_agg, 1, Activation::Sigmoid, &mut rng);
                (Some(lstm), None, None, None, None, head)
            }
            ArchitectureId::LstmPredictPlusAggregated => {
                let lstm = Lstm::init(d.n_f, d.units, &mut rng);
                let lstm_head = Dense::init(d.units, 1, Activation::Sigmoid, &mut rng);
                let head = Dense::init(1 + d.n_agg, 1, Activation::Sigmoid, &mut rng);
                (Some(lstm), Some(lstm_head), None, None, None, head)
            }
            ArchitectureId::LstmHiddenState => {
                let lstm = Lstm::init(d.n_f, d.units, &mut rng);
                let h0 = Dense::init(d.n_agg, d.units, Activation::Linear, &mut rng);
                let c0 = Dense::init(d.n_agg, d.units, Activation::Linear, &mut rng);
                let head = Dense::init(d.units, 1, Activation::Sigmoid, &mut rng);
                (Some(lstm), None, Some(h0), Some(c0), None, head)
            }
            ArchitectureId::StaticInLstm => {
                let lstm = Lstm::init(d.n_f + d.n_agg, d.units, &mut rng);
                let head = Dense::init(d.units, 1, Activation::Sigmoid, &mut rng);
                (Some(lstm), None, None, None, None, head)
            }
            ArchitectureId::BaselineRF => unreachable!(),
        };
        NeuralNet {
            arch,
            dims: d,
            lstm,
            lstm_head,
            h0_dense,
            c0_dense,
            hidden,
            head,
        }
    }

    pub fn param_count(&self) -> usize {
        self.lstm.as_ref().map_or(0, |l| l.param_count())
            + self.lstm_head.as_ref().map_or(0, |d| d.param_count())
            + self.h0_dense.as_ref().map_or(0, |d| d.param_count())
            + self.c0_dense.as_ref().map_or(0, |d| d.param_count())
            + self.hidden.as_ref().map_or(0, |d| d.param_count())
            + self.head.param_count()
    }

    fn check_input(&self, sample: &LabeledSample) -> Result<()> {
        let d = &self.dims;
        if sample.temporal.n_t != d.n_t || sample.temporal.values.len() != d.n_t * d.n_f {
            return Err(Error::Shape(format!(
                "temporal input must be {}x{}, got {} values over {} rows",
                d.n_t,
                d.n_f,
                sample.temporal.values.len(),
                sample.temporal.n_t
            )));
        }
        if sample.aggregate.values.len() != d.n_agg {
            return Err(Error::Shape(format!(
                "aggregate input must have {} entries, got {}",
                d.n_agg,
                sample.aggregate.values.len()
            )));
        }
        Ok(())
    }

    /// Builds the per-timestep input sequence for the Static-in-LSTM wiring:
    /// each step is the temporal row with the aggregate vector appended.
    fn static_in_sequence(&self, sample: &LabeledSample) -> Vec<f64> {
        let d = &self.dims;
        let mut seq = Vec::with_capacity(d.n_t * (d.n_f + d.n_agg));
        for t in 0..d.n_t {
            seq.extend_from_slice(sample.temporal.row(t));
            seq.extend_from_slice(&sample.aggregate.values);
        }
        seq
    }

    /// Forward pass returning the churn probability.
    pub fn forward(&self, sample: &LabeledSample) -> Result<f64> {
        Ok(self.forward_cached(sample)?.0)
    }

    fn forward_cached(&self, sample: &LabeledSample) -> Result<(f64, ForwardCache)> {
        self.check_input(sample)?;
        let d = &self.dims;
        let agg = &sample.aggregate.values;
        let mut cache = ForwardCache::default();
        let p = match self.arch {
            ArchitectureId::BaselineANN => {
                let x = flatten(sample, false);
                let hidden = self.hidden.as_ref().unwrap();
                let mut h = vec![0.0; hidden.output_dim()];
                hidden.forward(&x, &mut h);
                let mut out = [0.0];
                self.head.forward(&h, &mut out);
                cache.ann_hidden_out = h;
                out[0]
            }
            ArchitectureId::BaselineLSTM => {
                let lstm = self.lstm.as_ref().unwrap();
                let zero = vec![0.0; d.units];
                let (h_t, lstm_cache) =
                    lstm.forward(&sample.temporal.values, d.n_t, &zero, &zero);
                let mut out = [0.0];
                self.head.forward(&h_t, &mut out);
                cache.h_final = h_t;
                cache.lstm = Some(lstm_cache);
                out[0]
            }
            ArchitectureId::LstmPlusAggregated => {
                let lstm = self.lstm.as_ref().unwrap();
                let zero = vec![0.0; d.units];
                let (h_t, lstm_cache) =
                    lstm.forward(&sample.temporal.values, d.n_t, &zero, &zero);
                let mut merged = h_t.clone();
                merged.extend_from_slice(agg);
                let mut out = [0.0];
                self.head.forward(&merged, &mut out);
                cache.h_final = h_t;
                cache.head_input = merged;
                cache.lstm = Some(lstm_cache);
                out[0]
            }
            ArchitectureId::LstmPredictPlusAggregated => {
                let lstm = self.lstm.as_ref().unwrap();
                let zero = vec![0.0; d.units];
                let (h_t, lstm_cache) =
                    lstm.forward(&sample.temporal.values, d.n_t, &zero, &zero);
                let mut p1 = [0.0];
                self.lstm_head.as_ref().unwrap().forward(&h_t, &mut p1);
                let mut merged = vec![p1[0]];
                merged.extend_from_slice(agg);
                let mut out = [0.0];
                self.head.forward(&merged, &mut out);
                cache.h_final = h_t;
                cache.head_input = merged;
                cache.lstm = Some(lstm_cache);
                out[0]
            }
            ArchitectureId::LstmHiddenState => {
                let lstm = self.lstm.as_ref().unwrap();
                let h0_dense = self.h0_dense.as_ref().unwrap();
                let c0_dense = self.c0_dense.as_ref().unwrap();
                let mut h0 = vec![0.0; d.units];
                let mut c0 = vec![0.0; d.units];
                h0_dense.forward(agg, &mut h0);
                c0_dense.forward(agg, &mut c0);
                let (h_t, lstm_cache) =
                    lstm.forward(&sample.temporal.values, d.n_t, &h0, &c0);
                let mut out = [0.0];
                self.head.forward(&h_t, &mut out);
                cache.h_final = h_t;
                cache.h0 = h0;
                cache.c0 = c0;
                cache.lstm = Some(lstm_cache);
                out[0]
            }
            ArchitectureId::StaticInLstm => {
                let lstm = self.lstm.as_ref().unwrap();
                let zero = vec![0.0; d.units];
                let seq = self.static_in_sequence(sample);
                let (h_t, lstm_cache) = lstm.forward(&seq, d.n_t, &zero, &zero);
                let mut out = [0.0];
                self.head.forward(&h_t, &mut out);
                cache.h_final = h_t;
                cache.static_seq = seq;
                cache.lstm = Some(lstm_cache);
                out[0]
            }
            ArchitectureId::BaselineRF => unreachable!(),
        };
        cache.probability = p;
        Ok((p, cache))
    }

    /// Backpropagates dL/dp into `grads`. The LstmPredictPlusAggregated
    /// wiring only receives gradients on its combiner head; the stage-1 LSTM
    /// is frozen by contract.
    fn backward(&self, sample: &LabeledSample, cache: &ForwardCache, d_p: f64, grads: &mut NetGrads) {
        let d = &self.dims;
        let head_out = [cache.probability];
        let d_head_out = [d_p];
        match self.arch {
            ArchitectureId::BaselineANN => {
                let hidden = self.hidden.as_ref().unwrap();
                let x = flatten(sample, false);
                let mut d_hidden_out = vec![0.0; hidden.output_dim()];
                self.head.backward(
                    &cache.ann_hidden_out,
                    &head_out,
                    &d_head_out,
                    &mut grads.head,
                    &mut d_hidden_out,
                );
                let mut dx = vec![0.0; x.len()];
                hidden.backward(
                    &x,
                    &cache.ann_hidden_out,
                    &d_hidden_out,
                    grads.hidden.as_mut().unwrap(),
                    &mut dx,
                );
            }
            ArchitectureId::BaselineLSTM | ArchitectureId::StaticInLstm => {
                let lstm = self.lstm.as_ref().unwrap();
                let mut d_h = vec![0.0; d.units];
                self.head.backward(
                    &cache.h_final,
                    &head_out,
                    &d_head_out,
                    &mut grads.head,
                    &mut d_h,
                );
                let seq: &[f64] = if self.arch == ArchitectureId::StaticInLstm {
                    &cache.static_seq
                } else {
                    &sample.temporal.values
                };
                let mut dx = vec![0.0; seq.len()];
                lstm.backward(
                    seq,
                    cache.lstm.as_ref().unwrap(),
                    &d_h,
                    grads.lstm.as_mut().unwrap(),
                    &mut dx,
                );
            }
            ArchitectureId::LstmPlusAggregated => {
                let lstm = self.lstm.as_ref().unwrap();
                let mut d_merged = vec![0.0; d.units + d.n_agg];
                self.head.backward(
                    &cache.head_input,
                    &head_out,
                    &d_head_out,
                    &mut grads.head,
                    &mut d_merged,
                );
                let mut dx = vec![0.0; sample.temporal.values.len()];
                lstm.backward(
                    &sample.temporal.values,
                    cache.lstm.as_ref().unwrap(),
                    &d_merged[..d.units],
                    grads.lstm.as_mut().unwrap(),
                    &mut dx,
                );
            }
            ArchitectureId::LstmPredictPlusAggregated => {
                // stage-1 components are frozen: only the combiner learns
                let mut d_merged = vec![0.0; 1 + d.n_agg];
                self.head.backward(
                    &cache.head_input,
                    &head_out,
                    &d_head_out,
                    &mut grads.head,
                    &mut d_merged,
                );
            }
            ArchitectureId::LstmHiddenState => {
                let lstm = self.lstm.as_ref().unwrap();
                let mut d_h = vec![0.0; d.units];
                self.head.backward(
                    &cache.h_final,
                    &head_out,
                    &d_head_out,
                    &mut grads.head,
                    &mut d_h,
                );
                let mut dx = vec![0.0; sample.temporal.values.len()];
                let (d_h0, d_c0) = lstm.backward(
                    &sample.temporal.values,
                    cache.lstm.as_ref().unwrap(),
                    &d_h,
                    grads.lstm.as_mut().unwrap(),
                    &mut dx,
                );
                let agg = &sample.aggregate.values;
                let mut d_agg = vec![0.0; d.n_agg];
                self.h0_dense.as_ref().unwrap().backward(
                    agg,
                    &cache.h0,
                    &d_h0,
                    grads.h0_dense.as_mut().unwrap(),
                    &mut d_agg,
                );
                self.c0_dense.as_ref().unwrap().backward(
                    agg,
                    &cache.c0,
                    &d_c0,
                    grads.c0_dense.as_mut().unwrap(),
                    &mut d_agg,
                );
            }
            ArchitectureId::BaselineRF => unreachable!(),
        }
    }

    pub fn zero_grads(&self) -> NetGrads {
        NetGrads {
            lstm: self.lstm.as_ref().map(|l| l.zero_grads()),
            lstm_head: self.lstm_head.as_ref().map(|d| d.zero_grads()),
            h0_dense: self.h0_dense.as_ref().map(|d| d.zero_grads()),
            c0_dense: self.c0_dense.as_ref().map(|d| d.zero_grads()),
            hidden: self.hidden.as_ref().map(|d| d.zero_grads()),
            head: self.head.zero_grads(),
        }
    }

    /// Component slices in canonical order. Frozen components are excluded
    /// from the trainable view but always present in the full view.
    fn component_is_trainable(&self, component: usize) -> bool {
        // components: 0 lstm, 1 lstm_head, 2 h0, 3 c0, 4 hidden, 5 head
        if self.arch == ArchitectureId::LstmPredictPlusAggregated {
            component == 5
        } else {
            true
        }
    }

    fn param_slices(&self) -> Vec<(usize, &[f64])> {
        let mut out: Vec<(usize, &[f64])> = Vec::new();
        if let Some(l) = &self.lstm {
            out.push((0, &l.w_x.data));
            out.push((0, &l.w_h.data));
            out.push((0, &l.b));
        }
        if let Some(d) = &self.lstm_head {
            out.push((1, &d.w.data));
            out.push((1, &d.b));
        }
        if let Some(d) = &self.h0_dense {
            out.push((2, &d.w.data));
            out.push((2, &d.b));
        }
        if let Some(d) = &self.c0_dense {
            out.push((3, &d.w.data));
            out.push((3, &d.b));
        }
        if let Some(d) = &self.hidden {
            out.push((4, &d.w.data));
            out.push((4, &d.b));
        }
        out.push((5, &self.head.w.data));
        out.push((5, &self.head.b));
        out
    }

    fn param_slices_mut(&mut self) -> Vec<(usize, &mut [f64])> {
        let mut out: Vec<(usize, &mut [f64])> = Vec::new();
        if let Some(l) = &mut self.lstm {
            out.push((0, &mut l.w_x.data));
            out.push((0, &mut l.w_h.data));
            out.push((0, &mut l.b));
        }
        if let Some(d) = &mut self.lstm_head {
            out.push((1, &mut d.w.data));
            out.push((1, &mut d.b));
        }
        if let Some(d) = &mut self.h0_dense {
            out.push((2, &mut d.w.data));
            out.push((2, &mut d.b));
        }
        if let Some(d) = &mut self.c0_dense {
            out.push((3, &mut d.w.data));
            out.push((3, &mut d.b));
        }
        if let Some(d) = &mut self.hidden {
            out.push((4, &mut d.w.data));
            out.push((4, &mut d.b));
        }
        out.push((5, &mut self.head.w.data));
        out.push((5, &mut self.head.b));
        out
    }

    fn grad_slices(grads: &NetGrads) -> Vec<(usize, &[f64])> {
        let mut out: Vec<(usize, &[f64])> = Vec::new();
        if let Some(l) = &grads.lstm {
            out.push((0, &l.w_x.data));
            out.push((0, &l.w_h.data));
            out.push((0, &l.b));
        }
        if let Some(d) = &grads.lstm_head {
            out.push((1, &d.w.data));
            out.push((1, &d.b));
        }
        if let Some(d) = &grads.h0_dense {
            out.push((2, &d.w.data));
            out.push((2, &d.b));
        }
        if let Some(d) = &grads.c0_dense {
            out.push((3, &d.w.data));
            out.push((3, &d.b));
        }
        if let Some(d) = &grads.hidden {
            out.push((4, &d.w.data));
            out.push((4, &d.b));
        }
        out.push((5, &grads.head.w.data));
        out.push((5, &grads.head.b));
        out
    }

    /// All parameters flattened in canonical order (serialization view).
    pub fn all_params(&self) -> Vec<f64> {
        self.param_slices().iter().flat_map(|(_, s)| s.iter().copied()).collect()
    }

    pub fn set_all_params(&mut self, params: &[f64]) -> Result<()> {
        let total: usize = self.param_slices().iter().map(|(_, s)| s.len()).sum();
        if params.len() != total {
            return Err(Error::Shape(format!(
                "expected {total} parameters, got {}",
                params.len()
            )));
        }
        let mut offset = 0;
        for (_, slice) in self.param_slices_mut() {
            slice.copy_from_slice(&params[offset..offset + slice.len()]);
            offset += slice.len();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct ForwardCache {
    probability: f64,
    lstm: Option<crate::nn::LstmCache>,
    h_final: Vec<f64>,
    head_input: Vec<f64>,
    ann_hidden_out: Vec<f64>,
    static_seq: Vec<f64>,
    h0: Vec<f64>,
    c0: Vec<f64>,
}

impl GradientModel for NeuralNet {
    fn trainable_params(&self) -> Vec<f64> {
        self.param_slices()
            .iter()
            .filter(|(c, _)| self.component_is_trainable(*c))
            .flat_map(|(_, s)| s.iter().copied())
            .collect()
    }

    fn set_trainable_params(&mut self, params: &[f64]) {
        let mask: Vec<bool> = self
            .param_slices()
            .iter()
            .map(|(c, _)| self.component_is_trainable(*c))
            .collect();
        let mut offset = 0;
        for ((_, slice), trainable) in self.param_slices_mut().into_iter().zip(mask) {
            if trainable {
                slice.copy_from_slice(&params[offset..offset + slice.len()]);
                offset += slice.len();
            }
        }
        assert_eq!(offset, params.len(), "trainable parameter length mismatch");
    }

    fn batch_loss_grad(&self, batch: &[&LabeledSample]) -> (f64, Vec<f64>) {
        let n = batch.len() as f64;
        let mut grads = self.zero_grads();
        let mut total_loss = 0.0;
        for sample in batch {
            let (p, cache) = self
                .forward_cached(sample)
                .expect("training batch contains a mis-shaped sample");
            let (loss, d_p) = bce_single(p, sample.label as f64);
            total_loss += loss;
            self.backward(sample, &cache, d_p / n, &mut grads);
        }
        let flat: Vec<f64> = Self::grad_slices(&grads)
            .iter()
            .filter(|(c, _)| self.component_is_trainable(*c))
            .flat_map(|(_, s)| s.iter().copied())
            .collect();
        (total_loss / n, flat)
    }

    fn batch_loss(&self, batch: &[&LabeledSample]) -> f64 {
        let mut total = 0.0;
        for sample in batch {
            let p = self
                .forward(sample)
                .expect("validation batch contains a mis-shaped sample");
            total += bce_single(p, sample.label as f64).0;
        }
        total / batch.len() as f64
    }
}

/// Trains an architecture on already-featurized (and, for neural paths,
/// scaled) samples. The LstmPredictPlusAggregated wiring trains in two
/// stages: a baseline LSTM to convergence, then the combiner over the frozen
/// stage-1 probability and the aggregates.
pub fn train_architecture(
    id: ArchitectureId,
    samples: &[LabeledSample],
    cfg: &TrainConfig,
    forest_cfg: &ForestConfig,
    dims: &Dims,
) -> Result<(ModelGraph, Option<TrainHistory>)> {
    match id {
        ArchitectureId::BaselineRF => {
            let rows: Vec<Vec<f64>> = samples.iter().map(|s| flatten(s, false)).collect();
            let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
            let forest = fit_forest(&rows, &labels, forest_cfg)?;
            Ok((ModelGraph::Forest(forest), None))
        }
        ArchitectureId::LstmPredictPlusAggregated => {
            let mut stage1 = NeuralNet::build(ArchitectureId::BaselineLSTM, dims, cfg.seed);
            train(&mut stage1, samples, cfg)?;
            let mut model = NeuralNet::build(id, dims, cfg.seed);
            model.lstm = stage1.lstm;
            model.lstm_head = Some(stage1.head);
            let history = train(&mut model, samples, cfg)?;
            Ok((ModelGraph::Neural(model), Some(history)))
        }
        _ => {
            let mut model = NeuralNet::build(id, dims, cfg.seed);
            let history = train(&mut model, samples, cfg)?;
            Ok((ModelGraph::Neural(model), Some(history)))
        }
    }
}

// ---------------------------------------------------------------------------
// Model file format: magic + version, JSON header, then a raw little-endian
// f64 parameter block (neural) or a JSON tree block (forest). Loading
// reproduces predictions bit-exactly.
// ---------------------------------------------------------------------------

const MODEL_MAGIC: &[u8; 8] = b"CHURNKM1";

#[derive(Debug, Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    architecture: ArchitectureId,
    dims: Dims,
    train_config: Option<TrainConfig>,
    param_count: usize,
}

pub fn save_model(
    model: &ModelGraph,
    train_config: Option<&TrainConfig>,
    path: &Path,
) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);

    let (dims, params, body): (Dims, usize, Vec<u8>) = match model {
        ModelGraph::Neural(n) => {
            let params = n.all_params();
            let mut body = Vec::with_capacity(params.len() * 8);
            for p in &params {
                body.extend_from_slice(&p.to_le_bytes());
            }
            // the header carries the full component layout via serde
            let mut full = serde_json::to_vec(n)?;
            let mut framed = (full.len() as u64).to_le_bytes().to_vec();
            framed.append(&mut full);
            framed.append(&mut body);
            (n.dims, params.len(), framed)
        }
        ModelGraph::Forest(f) => {
            let body = serde_json::to_vec(f)?;
            let mut framed = (body.len() as u64).to_le_bytes().to_vec();
            framed.extend_from_slice(&body);
            (Dims::default(), 0, framed)
        }
    };
    let header = ModelHeader {
        format_version: 1,
        architecture: model.architecture(),
        dims,
        train_config: train_config.cloned(),
        param_count: params,
    };
    let header_json = serde_json::to_vec(&header)?;
    w.write_all(MODEL_MAGIC).map_err(io_err)?;
    w.write_all(&(header_json.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&header_json).map_err(io_err)?;
    w.write_all(&body).map_err(io_err)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelGraph> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let fail = |msg: &str| Error::Data(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MODEL_MAGIC {
        return Err(fail("not a churnkit model file"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header_end = 16 + header_len;
    let header: ModelHeader = serde_json::from_slice(
        bytes.get(16..header_end).ok_or_else(|| fail("truncated header"))?,
    )?;
    if header.format_version != 1 {
        return Err(fail("unsupported model format version"));
    }
    let body = &bytes[header_end..];
    if body.len() < 8 {
        return Err(fail("truncated body"));
    }
    let json_len = u64::from_le_bytes(body[..8].try_into().unwrap()) as usize;
    let json = body.get(8..8 + json_len).ok_or_else(|| fail("truncated body"))?;
    match header.architecture {
        ArchitectureId::BaselineRF => Ok(ModelGraph::Forest(serde_json::from_slice(json)?)),
        _ => {
            let mut net: NeuralNet = serde_json::from_slice(json)?;
            let raw = &body[8 + json_len..];
            if raw.len() != header.param_count * 8 {
                return Err(fail("parameter block length mismatch"));
            }
            let params: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            net.set_all_params(&params)?;
            Ok(ModelGraph::Neural(net))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{AggregateVector, TemporalMatrix};
    use rand::prelude::*;

    fn sample(rng: &mut impl Rng, dims: &Dims, label: u8) -> LabeledSample {
        LabeledSample {
            player_id: "p".into(),
            prediction_date: 0,
            temporal: TemporalMatrix {
                n_t: dims.n_t,
                values: (0..dims.n_t * dims.n_f).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            },
            aggregate: AggregateVector {
                values: (0..dims.n_agg).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            },
            label,
        }
    }

    #[test]
    fn parameter_counts_match_closed_form() {
        let dims = Dims::default();
        let lstm = NeuralNet::build(ArchitectureId::BaselineLSTM, &dims, 1);
        assert_eq!(lstm.param_count(), 4 * (16 * 10 + 16 * 16 + 16) + (16 + 1));
        assert_eq!(lstm.param_count(), 1745);

        let hidden = NeuralNet::build(ArchitectureId::LstmHiddenState, &dims, 1);
        assert_eq!(hidden.param_count(), lstm.param_count() + 2 * (16 * 36 + 16));

        let static_in = NeuralNet::build(ArchitectureId::StaticInLstm, &dims, 1);
        assert_eq!(static_in.lstm.as_ref().unwrap().input_dim, 46);
    }

    #[test]
    fn forward_yields_probability_for_all_architectures() {
        let dims = Dims::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = sample(&mut rng, &dims, 1);
        for id in ArchitectureId::ALL {
            if !id.is_neural() {
                continue;
            }
            let net = NeuralNet::build(id, &dims, 5);
            let p = net.forward(&s).unwrap();
            assert!(p.is_finite() && p > 0.0 && p < 1.0, "{id:?} gave {p}");
        }
    }

    #[test]
    fn input_contract_rejects_misshaped_samples() {
        let dims = Dims::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut s = sample(&mut rng, &dims, 0);
        s.aggregate.values.pop();
        let net = NeuralNet::build(ArchitectureId::LstmPlusAggregated, &dims, 5);
        assert!(net.forward(&s).is_err());

        let mut s2 = sample(&mut rng, &dims, 0);
        s2.temporal.n_t = 13;
        s2.temporal.values.truncate(130);
        assert!(net.forward(&s2).is_err());
    }

    #[test]
    fn hidden_state_with_zero_aggregate_equals_baseline_at_init() {
        // dense biases initialize to 0, so a zero aggregate vector yields
        // h0 = c0 = 0 and the model collapses to a baseline LSTM sharing the
        // same LSTM/head weights.
        let dims = Dims::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let mut s = sample(&mut rng, &dims, 0);
        s.aggregate.values = vec![0.0; dims.n_agg];
        let hidden = NeuralNet::build(ArchitectureId::LstmHiddenState, &dims, 9);
        let mut baseline = NeuralNet::build(ArchitectureId::BaselineLSTM, &dims, 10);
        baseline.lstm = hidden.lstm.clone();
        baseline.head = hidden.head.clone();
        let a = hidden.forward(&s).unwrap();
        let b = baseline.forward(&s).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn zeroed_aggregate_path_reduces_hybrids_to_baseline() {
        let dims = Dims::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let s = sample(&mut rng, &dims, 1);

        // LstmPlusAggregated: zero the aggregate columns of the head
        let mut agg = NeuralNet::build(ArchitectureId::LstmPlusAggregated, &dims, 11);
        for c in dims.units..dims.units + dims.n_agg {
            agg.head.w.set(0, c, 0.0);
        }
        let mut baseline = NeuralNet::build(ArchitectureId::BaselineLSTM, &dims, 12);
        baseline.lstm = agg.lstm.clone();
        baseline.head.b = agg.head.b.clone();
        for c in 0..dims.units {
            baseline.head.w.set(0, c, agg.head.w.get(0, c));
        }
        assert!((agg.forward(&s).unwrap() - baseline.forward(&s).unwrap()).abs() < 1e-15);

        // LstmHiddenState: zero both initial-state dense layers
        let mut hs = NeuralNet::build(ArchitectureId::LstmHiddenState, &dims, 13);
        hs.h0_dense.as_mut().unwrap().w.data.fill(0.0);
        hs.c0_dense.as_mut().unwrap().w.data.fill(0.0);
        let mut baseline2 = NeuralNet::build(ArchitectureId::BaselineLSTM, &dims, 14);
        baseline2.lstm = hs.lstm.clone();
        baseline2.head = hs.head.clone();
        assert!((hs.forward(&s).unwrap() - baseline2.forward(&s).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn static_in_lstm_permutation_invariance() {
        // permuting aggregate entries together with the matching input-kernel
        // columns leaves the output unchanged
        let dims = Dims {
            n_t: 4,
            n_f: 3,
            n_agg: 5,
            units: 4,
            ann_hidden: 8,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let s = sample(&mut rng, &dims, 0);
        let net = NeuralNet::build(ArchitectureId::StaticInLstm, &dims, 15);
        let base = net.forward(&s).unwrap();

        let perm = [2usize, 0, 4, 1, 3];
        let mut s2 = s.clone();
        for (new_i, &old_i) in perm.iter().enumerate() {
            s2.aggregate.values[new_i] = s.aggregate.values[old_i];
        }
        let mut net2 = net.clone();
        let lstm = net2.lstm.as_mut().unwrap();
        let src = net.lstm.as_ref().unwrap();
        for r in 0..lstm.w_x.rows {
            for (new_i, &old_i) in perm.iter().enumerate() {
                let v = src.w_x.get(r, dims.n_f + old_i);
                lstm.w_x.set(r, dims.n_f + new_i, v);
            }
        }
        let permuted = net2.forward(&s2).unwrap();
        assert!((base - permuted).abs() < 1e-12, "{base} vs {permuted}");
    }

    fn toy_separable(dims: &Dims, n: usize, seed: u64) -> Vec<LabeledSample> {
        // label decided by the mean of the first temporal feature plus the
        // first aggregate entry, with a clean margin
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let label = rng.gen_bool(0.5) as u8;
                let shift = if label == 1 { 1.0 } else { -1.0 };
                let mut s = sample(&mut rng, dims, label);
                for t in 0..dims.n_t {
                    let v = s.temporal.get(t, 0);
                    s.temporal.set(t, 0, v * 0.2 + shift);
                }
                s.aggregate.values[0] = shift + rng.gen_range(-0.2..0.2);
                s
            })
            .collect()
    }

    #[test]
    fn every_architecture_fits_toy_separable_data() {
        let dims = Dims {
            n_t: 6,
            n_f: 4,
            n_agg: 6,
            units: 6,
            ann_hidden: 12,
        };
        let data = toy_separable(&dims, 200, 77);
        let cfg = TrainConfig {
            max_epochs: 60,
            patience: 8,
            batch_size: 32,
            learning_rate: 2e-2,
            seed: 5,
            ..Default::default()
        };
        let forest_cfg = ForestConfig {
            n_trees: 20,
            seed: 5,
            ..Default::default()
        };
        for id in ArchitectureId::ALL {
            let (model, _) = train_architecture(id, &data, &cfg, &forest_cfg, &dims).unwrap();
            let correct = data
                .iter()
                .filter(|s| {
                    let p = model.predict(s).unwrap();
                    (p > 0.5) == (s.label == 1)
                })
                .count();
            let acc = correct as f64 / data.len() as f64;
            assert!(acc >= 0.95, "{id:?} training accuracy {acc}");
        }
    }

    #[test]
    fn predict_stage_freeze_is_bitwise() {
        let dims = Dims {
            n_t: 5,
            n_f: 3,
            n_agg: 4,
            units: 4,
            ann_hidden: 8,
        };
        let data = toy_separable(&dims, 120, 78);
        let cfg = TrainConfig {
            max_epochs: 10,
            patience: 3,
            batch_size: 32,
            learning_rate: 1e-2,
            seed: 9,
            ..Default::default()
        };
        // replicate stage 1 exactly, then check the trained combiner model
        // still carries identical stage-1 weights
        let mut stage1 = NeuralNet::build(ArchitectureId::BaselineLSTM, &dims, cfg.seed);
        train(&mut stage1, &data, &cfg).unwrap();
        let (model, _) = train_architecture(
            ArchitectureId::LstmPredictPlusAggregated,
            &data,
            &cfg,
            &ForestConfig::default(),
            &dims,
        )
        .unwrap();
        let ModelGraph::Neural(net) = model else { panic!() };
        assert_eq!(net.lstm.as_ref().unwrap(), stage1.lstm.as_ref().unwrap());
        assert_eq!(net.lstm_head.as_ref().unwrap(), &stage1.head);
    }

    #[test]
    fn training_is_deterministic() {
        let dims = Dims {
            n_t: 5,
            n_f: 3,
            n_agg: 4,
            units: 4,
            ann_hidden: 8,
        };
        let data = toy_separable(&dims, 100, 79);
        let cfg = TrainConfig {
            max_epochs: 8,
            patience: 3,
            batch_size: 32,
            seed: 4,
            ..Default::default()
        };
        let run = || {
            let mut m = NeuralNet::build(ArchitectureId::LstmPlusAggregated, &dims, cfg.seed);
            let h = train(&mut m, &data, &cfg).unwrap();
            (m.all_params(), h)
        };
        let (p1, h1) = run();
        let (p2, h2) = run();
        assert_eq!(p1, p2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn model_file_round_trip_is_bit_exact() {
        let dims = Dims::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(91);
        let s = sample(&mut rng, &dims, 1);
        let dir = tempfile::tempdir().unwrap();
        for id in [
            ArchitectureId::BaselineLSTM,
            ArchitectureId::LstmHiddenState,
            ArchitectureId::LstmPredictPlusAggregated,
        ] {
            let model = ModelGraph::Neural(NeuralNet::build(id, &dims, 33));
            let path = dir.path().join(format!("{}.ckm", id.as_str()));
            save_model(&model, None, &path).unwrap();
            let loaded = load_model(&path).unwrap();
            assert_eq!(
                model.predict(&s).unwrap().to_bits(),
                loaded.predict(&s).unwrap().to_bits()
            );
        }
    }
}
