//! Duration quartiles and distance-binned statistics over a dataset.

use serde::{Deserialize, Serialize};
use std::str::FromStr;

use super::{DemoSample, Demonstration};

/// Scalar signal extracted from a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    X,
    Z,
    Theta,
    Vx,
    Vz,
    Omega,
    Fx,
    Fz,
    Tau,
}

impl Feature {
    pub fn of(&self, s: &DemoSample) -> f64 {
        match self {
            Feature::X => s.pose.x,
            Feature::Z => s.pose.z,
            Feature::Theta => s.pose.theta,
            Feature::Vx => s.twist.vx,
            Feature::Vz => s.twist.vz,
            Feature::Omega => s.twist.omega,
            Feature::Fx => s.wrench.fx,
            Feature::Fz => s.wrench.fz,
            Feature::Tau => s.wrench.tau,
        }
    }
}

impl FromStr for Feature {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "x" => Feature::X,
            "z" => Feature::Z,
            "theta" => Feature::Theta,
            "vx" => Feature::Vx,
            "vz" => Feature::Vz,
            "omega" => Feature::Omega,
            "fx" => Feature::Fx,
            "fz" => Feature::Fz,
            "tau" => Feature::Tau,
            other => return Err(format!("unknown feature '{other}'")),
        })
    }
}

/// Linear-interpolation quantile of sorted data (`q` in [0, 1]).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Dataset split by demonstration duration. Subsets hold indices into the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    /// `[0, Q1]`
    pub first: Vec<usize>,
    /// `(Q1, Q2]`
    pub second: Vec<usize>,
    /// `(Q2, Q3]`
    pub third: Vec<usize>,
    /// `(Q3, inf)`
    pub fourth: Vec<usize>,
    pub all: Vec<usize>,
}

impl Partition {
    /// The five subsets with their conventional names.
    pub fn named(&self) -> [(&'static str, &[usize]); 5] {
        [
            ("q0-q1", &self.first),
            ("q1-q2", &self.second),
            ("q2-q3", &self.third),
            ("q3-inf", &self.fourth),
            ("all", &self.all),
        ]
    }
}

/// Splits a nonempty dataset at the duration quartiles.
pub fn partition_by_duration(demos: &[Demonstration]) -> Partition {
    assert!(
        !demos.is_empty(),
        "partition_by_duration needs a nonempty dataset"
    );
    let durations: Vec<f64> = demos.iter().map(Demonstration::duration).collect();
    let mut sorted = durations.clone();
    sorted.sort_by(f64::total_cmp);
    let (q1, q2, q3) = (
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.75),
    );
    let mut p = Partition {
        q1,
        q2,
        q3,
        first: vec![],
        second: vec![],
        third: vec![],
        fourth: vec![],
        all: (0..demos.len()).collect(),
    };
    for (i, &d) in durations.iter().enumerate() {
        if d <= q1 {
            p.first.push(i);
        } else if d <= q2 {
            p.second.push(i);
        } else if d <= q3 {
            p.third.push(i);
        } else {
            p.fourth.push(i);
        }
    }
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
}

fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> Option<usize> {
    if !(v >= lo && v <= hi) {
        return None;
    }
    let span = hi - lo;
    if span <= 0.0 {
        return Some(0);
    }
    let i = ((v - lo) / span * bins as f64).floor() as usize;
    Some(i.min(bins - 1))
}

fn auto_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

/// Per-bin min/max/mean of `feature`, binned by goal distance over `[0, max distance]`
/// unless a range is supplied.
pub fn band_plot(
    demos: &[Demonstration],
    feature: Feature,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Vec<BandBin> {
    assert!(bins >= 1, "band_plot needs at least one bin");
    let samples = || demos.iter().flat_map(|d| d.samples.iter());
    let (lo, hi) =
        range.unwrap_or_else(|| (0.0, auto_range(samples().map(DemoSample::goal_distance)).1));
    let width = (hi - lo) / bins as f64;
    let mut acc: Vec<(usize, f64, f64, f64)> =
        vec![(0, f64::INFINITY, f64::NEG_INFINITY, 0.0); bins];
    for s in samples() {
        if let Some(i) = bin_index(s.goal_distance(), lo, hi, bins) {
            let v = feature.of(s);
            let a = &mut acc[i];
            a.0 += 1;
            a.1 = a.1.min(v);
            a.2 = a.2.max(v);
            a.3 += v;
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(i, (count, mn, mx, sum))| BandBin {
            lo: lo + width * i as f64,
            hi: lo + width * (i + 1) as f64,
            count,
            min: (count > 0).then_some(mn),
            max: (count > 0).then_some(mx),
            mean: (count > 0).then(|| sum / count as f64),
        })
        .collect()
}

/// Counts of `(goal distance, feature)` pairs on a `width x height` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccurrenceGrid {
    pub width: usize,
    pub height: usize,
    pub distance_range: (f64, f64),
    pub value_range: (f64, f64),
    /// Row-major, `height` rows of `width` cells; row 0 holds the lowest values.
    pub counts: Vec<u64>,
}

impl OccurrenceGrid {
    pub fn get(&self, col: usize, row: usize) -> u64 {
        self.counts[row * self.width + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum over the distance axis: a histogram of the feature values.
    pub fn value_marginal(&self) -> Vec<u64> {
        (0..self.height)
            .map(|r| {
                self.counts[r * self.width..(r + 1) * self.width]
                    .iter()
                    .sum()
            })
            .collect()
    }
}

/// Occurrence grid with ranges auto-fitted to the data unless supplied.
pub fn occurrence_grid(
    demos: &[Demonstration],
    feature: Feature,
    width: usize,
    height: usize,
    distance_range: Option<(f64, f64)>,
    value_range: Option<(f64, f64)>,
) -> OccurrenceGrid {
    assert!(width >= 1 && height >= 1, "grid needs at least one cell");
    let samples = || demos.iter().flat_map(|d| d.samples.iter());
    let dr = distance_range.unwrap_or_else(|| auto_range(samples().map(DemoSample::goal_distance)));
    let vr = value_range.unwrap_or_else(|| auto_range(samples().map(|s| feature.of(s))));
    let mut counts = vec![0u64; width * height];
    for s in samples() {
        let (Some(c), Some(r)) = (
            bin_index(s.goal_distance(), dr.0, dr.1, width),
            bin_index(feature.of(s), vr.0, vr.1, height),
        ) else {
            continue;
        };
        counts[r * width + c] += 1;
    }
    OccurrenceGrid {
        width,
        height,
        distance_range: dr,
        value_range: vr,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::tests::demo_of_len;
    use crate::demos::Source;
    use crate::sim::{Pose, Twist, Wrench};

    fn demo_with_duration(len: usize) -> Demonstration {
        let mut d = demo_of_len(len);
        d.id = format!("d{len}");
        d
    }

    #[test]
    fn four_durations_fill_each_quarter_once() {
        let demos: Vec<_> = [101, 201, 301, 401]
            .iter()
            .map(|&l| demo_with_duration(l))
            .collect();
        let p = partition_by_duration(&demos);
        assert_eq!(p.first, vec![0]);
        assert_eq!(p.second, vec![1]);
        assert_eq!(p.third, vec![2]);
        assert_eq!(p.fourth, vec![3]);
        assert_eq!(p.all, vec![0, 1, 2, 3]);
        assert!(p.q1 < p.q2 && p.q2 < p.q3);
    }

    fn flat_demo(fz: f64, dist: &[f64]) -> Demonstration {
        Demonstration {
            id: "flat".into(),
            sim_config_hash: String::new(),
            dt: 0.01,
            samples: dist
                .iter()
                .enumerate()
                .map(|(i, &z)| DemoSample {
                    t: i as f64 * 0.01,
                    pose: Pose::new(0.0, z, 0.0),
                    twist: Twist::ZERO,
                    wrench: Wrench::new(0.0, fz, 0.0),
                })
                .collect(),
            success: true,
            source: Source::Scripted,
        }
    }

    #[test]
    fn constant_feature_bands() {
        let d = flat_demo(-5.0, &[0.001, 0.004, 0.009, 0.02, 0.03]);
        for b in band_plot(&[d], Feature::Fz, 10, None) {
            if b.count > 0 {
                assert_eq!((b.min, b.max, b.mean), (Some(-5.0), Some(-5.0), Some(-5.0)));
            } else {
                assert!(b.mean.is_none());
            }
        }
    }

    #[test]
    fn two_demos_share_a_bin() {
        let a = flat_demo(-1.0, &[0.01]);
        let b = flat_demo(-3.0, &[0.01]);
        let bins = band_plot(&[a, b], Feature::Fz, 1, Some((0.0, 0.02)));
        assert_eq!(bins[0].mean, Some(-2.0));
        assert_eq!(bins[0].min, Some(-3.0));
        assert_eq!(bins[0].max, Some(-1.0));
    }

    #[test]
    fn grid_single_and_identical_samples() {
        let d = flat_demo(-2.0, &[0.01]);
        let g = occurrence_grid(&[d], Feature::Fz, 180, 60, None, None);
        assert_eq!(g.total(), 1);
        assert_eq!(g.counts.iter().filter(|&&c| c == 1).count(), 1);

        let d = flat_demo(-2.0, &[0.01; 37]);
        let g = occurrence_grid(&[d], Feature::Fz, 180, 60, None, None);
        assert_eq!(g.counts.iter().copied().max(), Some(37));
        assert_eq!(g.total(), 37);
    }

    #[test]
    fn grid_counts_only_in_range_samples() {
        let d = flat_demo(-2.0, &[0.01, 0.02, 0.5]);
        let g = occurrence_grid(
            &[d],
            Feature::Fz,
            10,
            10,
            Some((0.0, 0.1)),
            Some((-3.0, 0.0)),
        );
        assert_eq!(g.total(), 2);
    }
}
