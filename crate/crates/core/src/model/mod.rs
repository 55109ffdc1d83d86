//! LSTM encoder with a mixture-density head, trained end to end on next-wrench prediction.

pub mod lstm;
pub mod mdn;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use thiserror::Error;

pub use lstm::{LstmCache, LstmGrads, LstmParams, LstmState};
pub use mdn::{MdnParams, MixtureParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cache mismatch: {0}")]
    CacheMismatch(String),
}

/// Names of the four parameter tensors, in [`LstmMdn::tensors`] order.
pub const TENSOR_NAMES: [&str; 4] = ["W", "U", "b", "W_z"];

#[derive(Clone, Debug, PartialEq)]
pub struct LstmMdn {
    pub lstm: LstmParams,
    pub head: MdnParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub lstm: LstmGrads,
    pub w_z: Array2<f64>,
}

impl Grads {
    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.lstm.w.as_slice().expect("contiguous"),
            self.lstm.u.as_slice().expect("contiguous"),
            self.lstm.b.as_slice().expect("contiguous"),
            self.w_z.as_slice().expect("contiguous"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.lstm.w.as_slice_mut().expect("contiguous"),
            self.lstm.u.as_slice_mut().expect("contiguous"),
            self.lstm.b.as_slice_mut().expect("contiguous"),
            self.w_z.as_slice_mut().expect("contiguous"),
        ]
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

impl LstmMdn {
    pub fn init(m: usize, c: usize, k: usize, d: usize, rng: &mut impl Rng) -> Self {
        let lstm = LstmParams::init(m, c, rng);
        let head = MdnParams::init(k, d, m, rng);
        Self { lstm, head }
    }

    pub fn hidden(&self) -> usize {
        self.lstm.hidden()
    }

    pub fn input_dim(&self) -> usize {
        self.lstm.input_dim()
    }

    pub fn check(&self) -> Result<(), ModelError> {
        self.lstm.check()?;
        self.head.check()?;
        if self.head.hidden() != self.lstm.hidden() {
            return Err(ModelError::Dimension(format!(
                "head expects m = {}, LSTM has m = {}",
                self.head.hidden(),
                self.lstm.hidden()
            )));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.lstm.num_params() + self.head.w_z.len()
    }

    pub fn tensors(&self) -> [&[f64]; 4] {
        [
            self.lstm.w.as_slice().expect("contiguous"),
            self.lstm.u.as_slice().expect("contiguous"),
            self.lstm.b.as_slice().expect("contiguous"),
            self.head.w_z.as_slice().expect("contiguous"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.lstm.w.as_slice_mut().expect("contiguous"),
            self.lstm.u.as_slice_mut().expect("contiguous"),
            self.lstm.b.as_slice_mut().expect("contiguous"),
            self.head.w_z.as_slice_mut().expect("contiguous"),
        ]
    }

    /// Shape of tensor `idx` in [`TENSOR_NAMES`] order.
    pub fn tensor_shape(&self, idx: usize) -> (usize, usize) {
        match idx {
            0 => self.lstm.w.dim(),
            1 => self.lstm.u.dim(),
            2 => (self.lstm.b.len(), 1),
            _ => self.head.w_z.dim(),
        }
    }

    /// Encodes a batch of sequences from a zero state. Each step is `B x c`.
    pub fn encode(&self, seq: &[Array2<f64>]) -> Result<LstmState, ModelError> {
        let batch = seq.first().map_or(0, |x| x.nrows());
        let mut st = LstmState::zeros(batch, self.hidden());
        for x in seq {
            st = lstm::step(&self.lstm, x.view(), &st)?;
        }
        Ok(st)
    }

    /// Mean NLL of the labels (`B x d`) given the input sequences.
    pub fn loss(&self, seq: &[Array2<f64>], y: ArrayView2<f64>) -> Result<f64, ModelError> {
        let enc = self.encode(seq)?;
        let logits = mdn::head_logits(&self.head, &enc)?;
        if y.dim() != (logits.nrows(), self.head.d) {
            return Err(ModelError::Dimension(format!("labels are {:?}", y.dim())));
        }
        let (k, d) = (self.head.k, self.head.d);
        let total: f64 = logits
            .outer_iter()
            .zip(y.outer_iter())
            .map(|(z, yr)| {
                let mix = MixtureParams::from_logits(z.as_slice().expect("contiguous"), k, d);
                mdn::nll_loss(&mix, &yr.to_vec())
            })
            .sum();
        Ok(total / logits.nrows() as f64)
    }

    /// Mean NLL and its exact gradient with respect to every parameter.
    pub fn loss_and_grad(
        &self,
        seq: &[Array2<f64>],
        y: ArrayView2<f64>,
    ) -> Result<(f64, Grads), ModelError> {
        let batch = seq.first().map_or(0, |x| x.nrows());
        let (enc, cache) = lstm::forward(&self.lstm, seq, &LstmState::zeros(batch, self.hidden()))?;
        let (loss, hg) = mdn::head_loss_and_backward(&self.head, &enc, y)?;
        let (lg, _) = lstm::backward(&self.lstm, &cache, &hg.h, &hg.c)?;
        Ok((
            loss,
            Grads {
                lstm: lg,
                w_z: hg.w_z,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn batch_of_identical_windows_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = LstmMdn::init(4, 3, 2, 2, &mut rng);
        let one: Vec<Array2<f64>> = (0..4)
            .map(|_| Array2::from_shape_fn((1, 3), |_| rng.random()))
            .collect();
        let many: Vec<Array2<f64>> = one
            .iter()
            .map(|x| ndarray::concatenate![ndarray::Axis(0), *x, *x, *x])
            .collect();
        let y1 = ndarray::array![[0.2, -0.1]];
        let y3 = ndarray::array![[0.2, -0.1], [0.2, -0.1], [0.2, -0.1]];
        let a = net.loss(&one, y1.view()).unwrap();
        let b = net.loss(&many, y3.view()).unwrap();
        assert!((a - b).abs() < 1e-14);
        let (c, _) = net.loss_and_grad(&many, y3.view()).unwrap();
        assert!((b - c).abs() < 1e-14);
    }
}
