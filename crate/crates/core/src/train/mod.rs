//! Minibatch BPTT training, gradient checking and the duration-quartile study.

pub mod checkpoint;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub use checkpoint::{
    load, save, Checkpoint, CheckpointError, Dims, TrainSummary, CHECKPOINT_VERSION,
};

use crate::demos::{
    partition_by_duration, sample_features, Demonstration, NormStats, FEATURE_DIM, WRENCH_DIM,
    WRENCH_OFFSET,
};
use crate::model::{Grads, LstmMdn, ModelError, TENSOR_NAMES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    /// Mixture components.
    pub k: usize,
    /// History length; windows hold `n + 1` steps.
    pub n: usize,
    /// LSTM cells.
    pub m: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    /// Held-out loss is evaluated every this many steps.
    pub eval_every: usize,
    pub seed: u64,
    /// Default sampling temperature used at deployment.
    pub temperature: f64,
    pub clip_norm: f64,
    pub holdout_fraction: f64,
    /// Upper bound on held-out windows used for the evaluation loss.
    pub eval_windows: usize,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            k: 4,
            n: 25,
            m: 64,
            learning_rate: 5e-4,
            batch_size: 128,
            steps: 3000,
            eval_every: 100,
            seed: 0,
            temperature: 1.0,
            clip_norm: 10.0,
            holdout_fraction: 0.1,
            eval_windows: 1024,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.k >= 1
            && self.m >= 1
            && self.batch_size >= 1
            && self.eval_every >= 1
            && self.eval_windows >= 1
            && self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.clip_norm > 0.0
            && self.temperature >= 0.0
            && (0.0..1.0).contains(&self.holdout_fraction);
        if ok {
            Ok(())
        } else {
            Err(TrainError::Hyper(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("dataset yields no training windows for N = {0}")]
    EmptyDataset(usize),
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error("non-finite loss at step {step}; offending windows (demo, pivot): {windows:?}")]
    NonFinite {
        step: usize,
        windows: Vec<(String, usize)>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One row of a learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub batch_loss: f64,
    pub eval_loss: Option<f64>,
}

pub fn write_curve_csv(curve: &[CurvePoint], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "step,batch_loss,eval_loss")?;
    for p in curve {
        match p.eval_loss {
            Some(e) => writeln!(out, "{},{},{}", p.step, p.batch_loss, e)?,
            None => writeln!(out, "{},{},", p.step, p.batch_loss)?,
        }
    }
    Ok(())
}

/// Adam moments for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(net: &LstmMdn) -> Self {
        let zeros: Vec<Vec<f64>> = net.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, net: &mut LstmMdn, grads: &Grads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (ti, (p, g)) in net
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .enumerate()
        {
            let (m, v) = (&mut self.m[ti], &mut self.v[ti]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Normalized feature rows of every sample of a demonstration.
pub fn normalized_features(demo: &Demonstration, norm: &NormStats) -> Vec<[f64; FEATURE_DIM]> {
    demo.samples
        .iter()
        .map(|s| {
            let mut f = sample_features(s);
            norm.apply_in_place(&mut f);
            f
        })
        .collect()
}

/// Normalized demonstrations plus the `(demo, pivot)` index of every window.
pub struct WindowSet<'a> {
    pub demos: Vec<&'a Demonstration>,
    pub features: Vec<Vec<[f64; FEATURE_DIM]>>,
    pub windows: Vec<(usize, usize)>,
    pub n: usize,
}

impl<'a> WindowSet<'a> {
    pub fn new(demos: Vec<&'a Demonstration>, norm: &NormStats, n: usize) -> Self {
        let features: Vec<_> = demos.iter().map(|d| normalized_features(d, norm)).collect();
        let windows = features
            .iter()
            .enumerate()
            .flat_map(|(di, f)| crate::demos::window_pivots(f.len(), n, 1).map(move |p| (di, p)))
            .collect();
        Self {
            demos,
            features,
            windows,
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Builds the `n + 1` input steps (`B x c` each) and labels (`B x d`) for the given windows.
    pub fn batch(&self, picks: &[(usize, usize)]) -> (Vec<Array2<f64>>, Array2<f64>) {
        let b = picks.len();
        let n = self.n;
        let mut seq = vec![Array2::zeros((b, FEATURE_DIM)); n + 1];
        let mut y = Array2::zeros((b, WRENCH_DIM));
        for (r, &(di, p)) in picks.iter().enumerate() {
            let f = &self.features[di];
            for (t, step) in seq.iter_mut().enumerate() {
                let row = &f[p - n + t];
                for (j, v) in row.iter().enumerate() {
                    step[[r, j]] = *v;
                }
            }
            for j in 0..WRENCH_DIM {
                y[[r, j]] = f[p + 1][WRENCH_OFFSET + j];
            }
        }
        (seq, y)
    }
}

/// Demonstration indices held out for evaluation: a seeded shuffle, 10% by default.
/// A single-demo dataset evaluates on its training demo.
pub fn split_holdout(count: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    if count < 2 || fraction <= 0.0 {
        return (idx.clone(), idx);
    }
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed));
    let held = ((count as f64 * fraction).round() as usize).clamp(1, count - 1);
    let mut eval = idx[..held].to_vec();
    let mut train = idx[held..].to_vec();
    eval.sort_unstable();
    train.sort_unstable();
    (train, eval)
}

pub struct TrainOutput {
    pub checkpoint: Checkpoint,
    pub curve: Vec<CurvePoint>,
}

/// Trains a fresh model on `demos`. Deterministic for a fixed `hyper.seed`.
pub fn train(
    demos: &[Demonstration],
    hyper: &Hyper,
    sim_config_hash: &str,
) -> Result<TrainOutput, TrainError> {
    hyper.validate()?;
    let (train_idx, eval_idx) = split_holdout(demos.len(), hyper.holdout_fraction, hyper.seed);
    let norm = NormStats::fit(train_idx.iter().map(|&i| &demos[i]));
    let train_set = WindowSet::new(
        train_idx.iter().map(|&i| &demos[i]).collect(),
        &norm,
        hyper.n,
    );
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset(hyper.n));
    }
    let eval_set = WindowSet::new(
        eval_idx.iter().map(|&i| &demos[i]).collect(),
        &norm,
        hyper.n,
    );
    let eval_set = if eval_set.is_empty() {
        &train_set
    } else {
        &eval_set
    };
    let mut eval_picks = eval_set.windows.clone();
    if eval_picks.len() > hyper.eval_windows {
        eval_picks.shuffle(&mut ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(1)));
        eval_picks.truncate(hyper.eval_windows);
    }
    let (eval_seq, eval_y) = eval_set.batch(&eval_picks);

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut net = LstmMdn::init(hyper.m, FEATURE_DIM, hyper.k, WRENCH_DIM, &mut rng);
    let mut adam = AdamState::new(&net);
    let initial_eval = net.loss(&eval_seq, eval_y.view())?;
    let mut curve = vec![CurvePoint {
        step: 0,
        batch_loss: initial_eval,
        eval_loss: Some(initial_eval),
    }];
    log::info!(
        "training on {} windows from {} demos ({} held out), {} parameters",
        train_set.len(),
        train_idx.len(),
        eval_idx.len(),
        net.num_params()
    );
    let mut last_eval = initial_eval;
    let mut last_batch = initial_eval;
    let mut picks = vec![(0, 0); hyper.batch_size];
    for step in 1..=hyper.steps {
        for p in picks.iter_mut() {
            *p = train_set.windows[rng.random_range(0..train_set.len())];
        }
        let (seq, y) = train_set.batch(&picks);
        let (loss, mut grads) = net.loss_and_grad(&seq, y.view())?;
        let norm2 = grads.global_norm();
        if !loss.is_finite() || !norm2.is_finite() {
            return Err(TrainError::NonFinite {
                step,
                windows: picks
                    .iter()
                    .map(|&(d, p)| (train_set.demos[d].id.clone(), p))
                    .collect(),
            });
        }
        if norm2 > hyper.clip_norm {
            grads.scale(hyper.clip_norm / norm2);
        }
        adam.step(&mut net, &grads, hyper.learning_rate);
        last_batch = loss;
        let eval_loss = if step % hyper.eval_every == 0 || step == hyper.steps {
            last_eval = net.loss(&eval_seq, eval_y.view())?;
            log::info!("step {step}: batch loss {loss:.4}, held-out loss {last_eval:.4}");
            Some(last_eval)
        } else {
            None
        };
        curve.push(CurvePoint {
            step,
            batch_loss: loss,
            eval_loss,
        });
    }
    let summary = TrainSummary {
        steps: hyper.steps,
        train_demos: train_idx.len(),
        eval_demos: eval_idx.len(),
        train_windows: train_set.len(),
        initial_eval_loss: initial_eval,
        final_eval_loss: last_eval,
        final_batch_loss: last_batch,
    };
    let checkpoint = Checkpoint::new(
        net,
        norm,
        hyper.clone(),
        summary,
        sim_config_hash.to_string(),
    );
    Ok(TrainOutput { checkpoint, curve })
}

/// Result of one model of the quartile study.
pub struct SubsetModel {
    pub name: &'static str,
    pub demos: Vec<usize>,
    /// `None` when the subset produced no windows.
    pub output: Option<TrainOutput>,
}

/// Trains one model per duration quartile plus one on all demonstrations, with identical
/// hyperparameters and seeds.
pub fn train_quartile_suite(
    demos: &[Demonstration],
    hyper: &Hyper,
    sim_config_hash: &str,
) -> Result<Vec<SubsetModel>, TrainError> {
    if demos.is_empty() {
        return Err(TrainError::EmptyDataset(hyper.n));
    }
    let part = partition_by_duration(demos);
    let mut out = Vec::with_capacity(5);
    for (name, idx) in part.named() {
        let subset: Vec<Demonstration> = idx.iter().map(|&i| demos[i].clone()).collect();
        let output = match train(&subset, hyper, sim_config_hash) {
            Ok(o) => Some(o),
            Err(TrainError::EmptyDataset(_)) => {
                log::warn!("subset {name} yields no windows; skipped");
                None
            }
            Err(e) => return Err(e),
        };
        out.push(SubsetModel {
            name,
            demos: idx.to_vec(),
            output,
        });
    }
    Ok(out)
}

/// Largest discrepancy found by [`grad_check`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub tensor: &'static str,
    pub index: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Denominator floor of the relative error, so coordinates whose true gradient is
/// essentially zero are judged by absolute error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_CHECK_FLOOR)
}

/// Central finite differences over every scalar parameter against the analytic gradient.
pub fn grad_check(
    net: &LstmMdn,
    seq: &[Array2<f64>],
    y: &Array2<f64>,
    eps: f64,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = net.loss_and_grad(seq, y.view())?;
    let analytic = grads.tensors();
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        tensor: TENSOR_NAMES[0],
        index: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for ti in 0..4 {
        let cols = net.tensor_shape(ti).1;
        for j in 0..analytic[ti].len() {
            let orig = net.tensors()[ti][j];
            probe.tensors_mut()[ti][j] = orig + eps;
            let fp = probe.loss(seq, y.view())?;
            probe.tensors_mut()[ti][j] = orig - eps;
            let fm = probe.loss(seq, y.view())?;
            probe.tensors_mut()[ti][j] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let err = relative_error(analytic[ti][j], numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.checked == 1 {
                report = GradCheckReport {
                    max_rel_error: err,
                    tensor: TENSOR_NAMES[ti],
                    index: (j / cols, j % cols),
                    analytic: analytic[ti][j],
                    numeric,
                    checked: report.checked,
                };
            }
        }
    }
    Ok(report)
}

/// A random small instance for gradient checking: network, `n + 1` input steps and labels.
pub fn random_instance(
    m: usize,
    k: usize,
    n: usize,
    d: usize,
    batch: usize,
    rng: &mut impl Rng,
) -> (LstmMdn, Vec<Array2<f64>>, Array2<f64>) {
    let c = FEATURE_DIM;
    let mut net = LstmMdn::init(m, c, k, d, rng);
    // Spread the head weights so responsibilities are not uniform.
    net.head.w_z.iter_mut().for_each(|v| *v *= 3.0);
    let seq = (0..=n)
        .map(|_| Array2::from_shape_fn((batch, c), |_| rng.random_range(-2.0..2.0)))
        .collect();
    let y = Array2::from_shape_fn((batch, d), |_| rng.random_range(-1.5..1.5));
    (net, seq, y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_adam_step_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = LstmMdn::init(3, FEATURE_DIM, 2, 3, &mut rng);
        let before = net.clone();
        let mut g = Grads {
            lstm: crate::model::LstmGrads {
                w: Array2::zeros(net.lstm.w.dim()),
                u: Array2::zeros(net.lstm.u.dim()),
                b: ndarray::Array1::zeros(net.lstm.b.len()),
            },
            w_z: Array2::zeros(net.head.w_z.dim()),
        };
        let mut adam = AdamState::new(&net);
        adam.step(&mut net, &g, 1e-2);
        assert_eq!(net, before);
        g.scale(2.0);
        assert_eq!(g.global_norm(), 0.0);
    }

    #[test]
    fn holdout_split_is_by_demo() {
        let (train, eval) = split_holdout(20, 0.1, 4);
        assert_eq!(eval.len(), 2);
        assert_eq!(train.len(), 18);
        assert!(eval.iter().all(|e| !train.contains(e)));
        assert_eq!(split_holdout(1, 0.1, 0), (vec![0], vec![0]));
    }

    #[test]
    fn small_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (net, seq, y) = random_instance(3, 2, 2, 3, 2, &mut rng);
        let r = grad_check(&net, &seq, &y, 1e-5).unwrap();
        assert_eq!(r.checked, net.num_params());
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn curve_csv_layout() {
        let mut buf = Vec::new();
        let curve = [
            CurvePoint {
                step: 0,
                batch_loss: 2.5,
                eval_loss: Some(2.5),
            },
            CurvePoint {
                step: 1,
                batch_loss: 2.0,
                eval_loss: None,
            },
        ];
        write_curve_csv(&curve, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,batch_loss,eval_loss\n0,2.5,2.5\n1,2,\n"
        );
    }
}
