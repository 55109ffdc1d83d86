//! Versioned JSON checkpoints holding every weight, the dimensions, the input
//! normalization and the training hyperparameters.
//!
//! Gate tensors are stored separately (`w_f`, `w_i`, `w_o`, `w_c`, `u_*`, `b_*`) as
//! nested arrays of shortest round-trip decimals, so a reload is bit-exact.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};
use thiserror::Error;

use super::Hyper;
use crate::demos::NormStats;
use crate::model::lstm::Gate;
use crate::model::{LstmMdn, LstmParams, MdnParams};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT_TAG: &str = "forcestrat-checkpoint";
const MAX_DIM: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("inconsistent checkpoint dimensions: {0}")]
    Dimension(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub m: usize,
    pub c: usize,
    pub k: usize,
    pub d: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSummary {
    pub steps: usize,
    pub train_demos: usize,
    pub eval_demos: usize,
    pub train_windows: usize,
    pub initial_eval_loss: f64,
    pub final_eval_loss: f64,
    pub final_batch_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub dims: Dims,
    pub net: LstmMdn,
    pub norm: NormStats,
    pub hyper: Hyper,
    pub summary: TrainSummary,
    pub seed: u64,
    pub sim_config_hash: String,
}

impl Checkpoint {
    pub fn new(
        net: LstmMdn,
        norm: NormStats,
        hyper: Hyper,
        summary: TrainSummary,
        sim_config_hash: String,
    ) -> Self {
        let dims = Dims {
            m: net.hidden(),
            c: net.input_dim(),
            k: net.head.k,
            d: net.head.d,
            n: hyper.n,
        };
        let seed = hyper.seed;
        Self {
            dims,
            net,
            norm,
            hyper,
            summary,
            seed,
            sim_config_hash,
        }
    }

    /// Fails unless the checkpoint consumes `c` features and predicts `d` outputs.
    pub fn expect_dims(&self, c: usize, d: usize) -> Result<(), CheckpointError> {
        if self.dims.c != c || self.dims.d != d {
            return Err(CheckpointError::Dimension(format!(
                "checkpoint has c = {}, d = {}; this configuration needs c = {c}, d = {d}",
                self.dims.c, self.dims.d
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let raw = Raw::from_checkpoint(self);
        serde_json::to_string(&raw).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let value: Value = serde_json::from_str(text).map_err(|e| {
            if e.is_eof() {
                CheckpointError::Truncated(e.to_string())
            } else {
                CheckpointError::Malformed(e.to_string())
            }
        })?;
        if value.get("format").and_then(Value::as_str) != Some(FORMAT_TAG) {
            return Err(CheckpointError::Malformed("not a checkpoint file".into()));
        }
        match value.get("version").and_then(Value::as_u64) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => {
                return Err(CheckpointError::Version {
                    found: v,
                    expected: CHECKPOINT_VERSION,
                })
            }
            None => return Err(CheckpointError::Malformed("missing version".into())),
        }
        let raw: Raw =
            serde_json::from_value(value).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        raw.into_checkpoint()
    }
}

pub fn save(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, ckpt.to_json()).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8(bytes).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    Checkpoint::from_json(&text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLstm {
    w_f: Vec<Vec<f64>>,
    w_i: Vec<Vec<f64>>,
    w_o: Vec<Vec<f64>>,
    w_c: Vec<Vec<f64>>,
    u_f: Vec<Vec<f64>>,
    u_i: Vec<Vec<f64>>,
    u_o: Vec<Vec<f64>>,
    u_c: Vec<Vec<f64>>,
    b_f: Vec<f64>,
    b_i: Vec<f64>,
    b_o: Vec<f64>,
    b_c: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    format: String,
    version: u32,
    dims: Dims,
    lstm: RawLstm,
    w_z: Vec<Vec<f64>>,
    norm: NormStats,
    hyper: Hyper,
    summary: TrainSummary,
    seed: u64,
    sim_config_hash: String,
}

fn rows(a: ndarray::ArrayView2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

fn matrix(
    name: &str,
    data: &[Vec<f64>],
    r: usize,
    c: usize,
) -> Result<Array2<f64>, CheckpointError> {
    if data.len() != r || data.iter().any(|row| row.len() != c) {
        return Err(CheckpointError::Dimension(format!(
            "{name} must be {r} x {c}"
        )));
    }
    let flat: Vec<f64> = data.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((r, c), flat).expect("shape checked"))
}

fn stack(
    name: &str,
    parts: [&Vec<Vec<f64>>; 4],
    r: usize,
    c: usize,
) -> Result<Array2<f64>, CheckpointError> {
    let mut out = Array2::zeros((4 * r, c));
    for (g, part) in parts.iter().enumerate() {
        let m = matrix(&format!("{name}_{}", Gate::ALL[g].suffix()), part, r, c)?;
        out.slice_mut(ndarray::s![g * r..(g + 1) * r, ..])
            .assign(&m);
    }
    Ok(out)
}

impl Raw {
    fn from_checkpoint(ck: &Checkpoint) -> Self {
        let p = &ck.net.lstm;
        let w = |g| rows(p.gate_w(g));
        let u = |g| rows(p.gate_u(g));
        let b = |g| p.gate_b(g).to_vec();
        Raw {
            format: FORMAT_TAG.into(),
            version: CHECKPOINT_VERSION,
            dims: ck.dims,
            lstm: RawLstm {
                w_f: w(Gate::Forget),
                w_i: w(Gate::Input),
                w_o: w(Gate::Output),
                w_c: w(Gate::Cell),
                u_f: u(Gate::Forget),
                u_i: u(Gate::Input),
                u_o: u(Gate::Output),
                u_c: u(Gate::Cell),
                b_f: b(Gate::Forget),
                b_i: b(Gate::Input),
                b_o: b(Gate::Output),
                b_c: b(Gate::Cell),
            },
            w_z: rows(ck.net.head.w_z.view()),
            norm: ck.norm.clone(),
            hyper: ck.hyper.clone(),
            summary: ck.summary.clone(),
            seed: ck.seed,
            sim_config_hash: ck.sim_config_hash.clone(),
        }
    }

    fn into_checkpoint(self) -> Result<Checkpoint, CheckpointError> {
        let Dims { m, c, k, d, n } = self.dims;
        if [m, c, k, d].iter().any(|&v| v == 0 || v > MAX_DIM) || n > 1 << 20 {
            return Err(CheckpointError::Dimension(format!(
                "dims out of range: {:?}",
                self.dims
            )));
        }
        if n != self.hyper.n || k != self.hyper.k || m != self.hyper.m {
            return Err(CheckpointError::Dimension(
                "dims disagree with hyperparameters".into(),
            ));
        }
        let l = &self.lstm;
        let w = stack("w", [&l.w_f, &l.w_i, &l.w_o, &l.w_c], m, c)?;
        let u = stack("u", [&l.u_f, &l.u_i, &l.u_o, &l.u_c], m, m)?;
        let mut b = Array1::zeros(4 * m);
        for (g, part) in [&l.b_f, &l.b_i, &l.b_o, &l.b_c].iter().enumerate() {
            if part.len() != m {
                return Err(CheckpointError::Dimension(format!(
                    "b_{} must have length {m}",
                    Gate::ALL[g].suffix()
                )));
            }
            b.slice_mut(ndarray::s![g * m..(g + 1) * m])
                .assign(&ndarray::ArrayView1::from(part.as_slice()));
        }
        let w_z = matrix("w_z", &self.w_z, k * (d + 2), 2 * m)?;
        if self.norm.mean.len() != c || self.norm.std.len() != c {
            return Err(CheckpointError::Dimension(format!(
                "normalization must have {c} features"
            )));
        }
        if self.norm.std.iter().any(|s| !(*s > 0.0)) {
            return Err(CheckpointError::Malformed(
                "normalization std must be positive".into(),
            ));
        }
        let net = LstmMdn {
            lstm: LstmParams { w, u, b },
            head: MdnParams { w_z, k, d },
        };
        Ok(Checkpoint {
            dims: self.dims,
            net,
            norm: self.norm,
            hyper: self.hyper,
            summary: self.summary,
            seed: self.seed,
            sim_config_hash: self.sim_config_hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_checkpoint(seed: u64) -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hyper = Hyper {
            m: 5,
            k: 2,
            n: 3,
            ..Hyper::default()
        };
        let net = LstmMdn::init(5, 10, 2, 3, &mut rng);
        let norm = NormStats {
            mean: (0..10).map(|i| i as f64 * 0.1 + 1e-17).collect(),
            std: vec![0.3; 10],
        };
        let summary = TrainSummary {
            steps: 10,
            train_demos: 9,
            eval_demos: 1,
            train_windows: 123,
            initial_eval_loss: 4.0,
            final_eval_loss: 1.0 / 3.0,
            final_batch_loss: -0.25,
        };
        Checkpoint::new(net, norm, hyper, summary, "abc".into())
    }

    #[test]
    fn round_trip_exact() {
        let ck = random_checkpoint(3);
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn typed_errors() {
        let text = random_checkpoint(1).to_json();
        assert!(matches!(
            Checkpoint::from_json(&text[..text.len() / 2]),
            Err(CheckpointError::Truncated(_))
        ));
        let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
        assert!(matches!(
            Checkpoint::from_json(&bumped),
            Err(CheckpointError::Version { found: 2, .. })
        ));
        let dims = text.replacen("\"m\":5", "\"m\":6", 1);
        assert!(matches!(
            Checkpoint::from_json(&dims),
            Err(CheckpointError::Dimension(_))
        ));
        assert!(matches!(
            Checkpoint::from_json("[1,2]"),
            Err(CheckpointError::Malformed(_))
        ));
    }

    #[test]
    fn dimension_guard() {
        let ck = random_checkpoint(2);
        assert!(ck.expect_dims(10, 3).is_ok());
        assert!(matches!(
            ck.expect_dims(10, 6),
            Err(CheckpointError::Dimension(_))
        ));
    }
}
