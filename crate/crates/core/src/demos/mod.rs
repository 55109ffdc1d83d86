//! Demonstration records, training windows and dataset statistics.

pub mod analysis;
pub mod io;

pub use analysis::{
    band_plot, occurrence_grid, partition_by_duration, BandBin, Feature, OccurrenceGrid, Partition,
};
pub use io::{read_dataset, read_demo, write_dataset, write_demo, DemoError, Manifest};

use serde::{Deserialize, Serialize};

use crate::sim::{goal_distance, Pose, SimState, Twist, Wrench};

/// Length of the concatenated per-step model input `[x, z, sin, cos, vx, vz, omega, fx, fz, tau]`.
pub const FEATURE_DIM: usize = 10;
/// Dimension of the predicted wrench.
pub const WRENCH_DIM: usize = 3;
/// Index of the first wrench component inside a feature vector.
pub const WRENCH_OFFSET: usize = FEATURE_DIM - WRENCH_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoSample {
    pub t: f64,
    pub pose: Pose,
    pub twist: Twist,
    /// Command issued at this step.
    pub wrench: Wrench,
}

impl DemoSample {
    pub fn goal_distance(&self) -> f64 {
        goal_distance(&SimState::at_rest(self.pose))
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.pose.is_finite()
            && self.twist.is_finite()
            && self.wrench.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Scripted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Demonstration {
    pub id: String,
    pub sim_config_hash: String,
    pub dt: f64,
    pub samples: Vec<DemoSample>,
    pub success: bool,
    pub source: Source,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn final_goal_distance(&self) -> Option<f64> {
        self.samples.last().map(DemoSample::goal_distance)
    }
}

/// Concatenated model input for one step.
pub fn features(pose: &Pose, twist: &Twist, wrench: &Wrench) -> [f64; FEATURE_DIM] {
    let (s, c) = pose.theta.sin_cos();
    [
        pose.x,
        pose.z,
        s,
        c,
        twist.vx,
        twist.vz,
        twist.omega,
        wrench.fx,
        wrench.fz,
        wrench.tau,
    ]
}

pub fn sample_features(s: &DemoSample) -> [f64; FEATURE_DIM] {
    features(&s.pose, &s.twist, &s.wrench)
}

/// An input sequence of `N + 1` feature vectors and the wrench issued right after it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingWindow {
    pub pivot: usize,
    pub inputs: Vec<[f64; FEATURE_DIM]>,
    pub label: Wrench,
}

/// Windows with pivots `N, N + stride, ...` up to `len - 2`. Demonstrations shorter
/// than `N + 2` samples yield no windows.
pub fn make_windows(demo: &Demonstration, n: usize, stride: usize) -> Vec<TrainingWindow> {
    window_pivots(demo.len(), n, stride)
        .map(|t| TrainingWindow {
            pivot: t,
            inputs: demo.samples[t - n..=t]
                .iter()
                .map(sample_features)
                .collect(),
            label: demo.samples[t + 1].wrench,
        })
        .collect()
}

pub fn window_pivots(len: usize, n: usize, stride: usize) -> impl Iterator<Item = usize> {
    let stride = stride.max(1);
    let end = len.saturating_sub(1);
    (n..end).step_by(stride)
}

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fits statistics over every sample of every demonstration. Features with zero
    /// variance get `std = 1`.
    pub fn fit<'a>(demos: impl IntoIterator<Item = &'a Demonstration>) -> Self {
        let mut count = 0usize;
        let mut sum = [0.0; FEATURE_DIM];
        let mut rows = Vec::new();
        for d in demos {
            for s in &d.samples {
                let f = sample_features(s);
                for (acc, v) in sum.iter_mut().zip(f) {
                    *acc += v;
                }
                rows.push(f);
                count += 1;
            }
        }
        if count == 0 {
            return Self::identity(FEATURE_DIM);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut var = [0.0; FEATURE_DIM];
        for r in &rows {
            for j in 0..FEATURE_DIM {
                let e = r[j] - mean[j];
                var[j] += e * e;
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / count as f64).sqrt();
                if s > 1e-12 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply_in_place(&self, x: &mut [f64]) {
        for (v, (m, s)) in x.iter_mut().zip(self.mean.iter().zip(&self.std)) {
            *v = (*v - *m) / *s;
        }
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Normalizes a wrench with the wrench-feature statistics.
    pub fn normalize_wrench(&self, w: &Wrench) -> [f64; WRENCH_DIM] {
        let a = w.to_array();
        std::array::from_fn(|i| (a[i] - self.mean[WRENCH_OFFSET + i]) / self.std[WRENCH_OFFSET + i])
    }

    pub fn denormalize_wrench(&self, y: &[f64]) -> Wrench {
        Wrench::from_array(std::array::from_fn(|i| {
            y[i] * self.std[WRENCH_OFFSET + i] + self.mean[WRENCH_OFFSET + i]
        }))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn demo_of_len(len: usize) -> Demonstration {
        let samples = (0..len)
            .map(|i| DemoSample {
                t: i as f64 * 0.01,
                pose: Pose::new(0.001 * i as f64, 0.03 - 0.0005 * i as f64, 0.01),
                twist: Twist::new(0.1, -0.05, 0.0),
                wrench: Wrench::new(i as f64, -(i as f64) * 0.5, 0.001 * i as f64),
            })
            .collect();
        Demonstration {
            id: format!("len{len}"),
            sim_config_hash: "h".into(),
            dt: 0.01,
            samples,
            success: true,
            source: Source::Scripted,
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&demo_of_len(27), 25, 1).len(), 1);
        // pivots 25..=28
        assert_eq!(make_windows(&demo_of_len(30), 25, 1).len(), 4);
        assert!(make_windows(&demo_of_len(26), 25, 1).is_empty());
        assert!(make_windows(&demo_of_len(0), 25, 1).is_empty());
        assert_eq!(make_windows(&demo_of_len(40), 25, 3).len(), 5);
        for len in 0..60usize {
            let expected = len.saturating_sub(26);
            assert_eq!(make_windows(&demo_of_len(len), 25, 1).len(), expected);
        }
    }

    #[test]
    fn labels_are_next_commands() {
        let d = demo_of_len(40);
        for w in make_windows(&d, 5, 1) {
            assert_eq!(w.inputs.len(), 6);
            assert_eq!(w.label, d.samples[w.pivot + 1].wrench);
            assert_eq!(w.inputs[5], sample_features(&d.samples[w.pivot]));
            assert_eq!(w.inputs[0], sample_features(&d.samples[w.pivot - 5]));
        }
    }

    #[test]
    fn norm_stats_examples() {
        let mut d = demo_of_len(10);
        for s in &mut d.samples {
            s.twist.omega = 3.0;
        }
        let stats = NormStats::fit([&d]);
        assert_eq!(stats.std[6], 1.0);
        let f = sample_features(&d.samples[4]);
        assert_eq!(stats.apply(&f)[6], 0.0);

        let stats = NormStats {
            mean: vec![5.0],
            std: vec![2.0],
        };
        assert_eq!(stats.apply(&[9.0]), vec![2.0]);
    }

    #[test]
    fn wrench_normalization_inverts() {
        let d = demo_of_len(30);
        let stats = NormStats::fit([&d]);
        let w = Wrench::new(3.0, -7.5, 0.02);
        let back = stats.denormalize_wrench(&stats.normalize_wrench(&w));
        assert!((back - w).norm_sq().sqrt() < 1e-12);
    }
}
