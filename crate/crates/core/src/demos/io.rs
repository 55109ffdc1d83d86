//! Line-oriented demonstration files and dataset directories.
//!
//! A demonstration file holds one JSON object per line: a header
//! `{"version":1,"id":..,"dt":..,"sim_config_hash":..,"source":..,"success":..}`
//! followed by one sample per line `{"t":..,"pose":[x,z,theta],"twist":[vx,vz,omega],"wrench":[fx,fz,tau]}`.
//! Floats are written in shortest round-trip form, so reading reproduces every bit.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

use super::{DemoSample, Demonstration, Source};
use crate::sim::{Pose, SimConfig, Twist, Wrench};

pub const DEMO_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SIM_CONFIG_FILE: &str = "sim_config.toml";

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated input: {0}")]
    Truncated(String),
    #[error("malformed line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("invalid demonstration: {0}")]
    Invalid(String),
}

impl DemoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        DemoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    id: String,
    dt: f64,
    sim_config_hash: String,
    source: Source,
    success: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    t: f64,
    pose: [f64; 3],
    twist: [f64; 3],
    wrench: [f64; 3],
}

fn json_error(line: usize, e: serde_json::Error) -> DemoError {
    if e.is_eof() {
        DemoError::Truncated(format!("line {line}: {e}"))
    } else {
        DemoError::Malformed {
            line,
            msg: e.to_string(),
        }
    }
}

pub fn validate_demo(demo: &Demonstration) -> Result<(), DemoError> {
    if !(demo.dt.is_finite() && demo.dt > 0.0) {
        return Err(DemoError::Invalid(format!(
            "dt must be positive, got {}",
            demo.dt
        )));
    }
    for (i, s) in demo.samples.iter().enumerate() {
        if !s.is_finite() {
            return Err(DemoError::Invalid(format!("sample {i} is not finite")));
        }
    }
    let tol = 1e-6 * demo.dt;
    for (i, w) in demo.samples.windows(2).enumerate() {
        if ((w[1].t - w[0].t) - demo.dt).abs() > tol {
            return Err(DemoError::Invalid(format!(
                "samples {i} and {} are {} s apart, expected {}",
                i + 1,
                w[1].t - w[0].t,
                demo.dt
            )));
        }
    }
    Ok(())
}

/// Serializes a demonstration to its file text.
pub fn demo_to_string(demo: &Demonstration) -> Result<String, DemoError> {
    validate_demo(demo)?;
    let header = Header {
        version: DEMO_FORMAT_VERSION,
        id: demo.id.clone(),
        dt: demo.dt,
        sim_config_hash: demo.sim_config_hash.clone(),
        source: demo.source,
        success: demo.success,
    };
    let mut out = serde_json::to_string(&header).map_err(|e| DemoError::Invalid(e.to_string()))?;
    out.push('\n');
    for s in &demo.samples {
        let line = SampleLine {
            t: s.t,
            pose: s.pose.to_array(),
            twist: s.twist.to_array(),
            wrench: s.wrench.to_array(),
        };
        let text = serde_json::to_string(&line).map_err(|e| DemoError::Invalid(e.to_string()))?;
        let _ = writeln!(out, "{text}");
    }
    Ok(out)
}

pub fn parse_demo(text: &str) -> Result<Demonstration, DemoError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines
        .next()
        .ok_or_else(|| DemoError::Truncated("missing header".into()))?;
    let header: Header = serde_json::from_str(first).map_err(|e| json_error(1, e))?;
    if header.version != DEMO_FORMAT_VERSION {
        return Err(DemoError::Version {
            found: header.version,
            expected: DEMO_FORMAT_VERSION,
        });
    }
    let mut samples = Vec::new();
    for (i, line) in lines {
        let s: SampleLine = serde_json::from_str(line).map_err(|e| json_error(i + 1, e))?;
        samples.push(DemoSample {
            t: s.t,
            pose: Pose::from_array(s.pose),
            twist: Twist::from_array(s.twist),
            wrench: Wrench::from_array(s.wrench),
        });
    }
    let demo = Demonstration {
        id: header.id,
        sim_config_hash: header.sim_config_hash,
        dt: header.dt,
        samples,
        success: header.success,
        source: header.source,
    };
    validate_demo(&demo)?;
    Ok(demo)
}

pub fn write_demo(demo: &Demonstration, path: &Path) -> Result<(), DemoError> {
    let text = demo_to_string(demo)?;
    std::fs::write(path, text).map_err(|e| DemoError::io(path, e))
}

pub fn read_demo(path: &Path) -> Result<Demonstration, DemoError> {
    let bytes = std::fs::read(path).map_err(|e| DemoError::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|e| DemoError::Malformed {
        line: 0,
        msg: e.to_string(),
    })?;
    parse_demo(&text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub id: String,
    pub samples: usize,
    pub duration: f64,
    pub success: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub sim_config_hash: String,
    pub demos: Vec<ManifestEntry>,
}

fn demo_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.jsonl")
}

/// Writes every demonstration, the simulator config and a manifest into `dir`.
pub fn write_dataset(
    dir: &Path,
    demos: &[Demonstration],
    cfg: &SimConfig,
) -> Result<Manifest, DemoError> {
    std::fs::create_dir_all(dir).map_err(|e| DemoError::io(dir, e))?;
    let mut entries = Vec::with_capacity(demos.len());
    for d in demos {
        let file = demo_file_name(&d.id);
        write_demo(d, &dir.join(&file))?;
        entries.push(ManifestEntry {
            file,
            id: d.id.clone(),
            samples: d.len(),
            duration: d.duration(),
            success: d.success,
        });
    }
    let manifest = Manifest {
        version: DEMO_FORMAT_VERSION,
        sim_config_hash: cfg.hash(),
        demos: entries,
    };
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| DemoError::Invalid(e.to_string()))?;
    let mpath = dir.join(MANIFEST_FILE);
    std::fs::write(&mpath, text).map_err(|e| DemoError::io(&mpath, e))?;
    let cpath = dir.join(SIM_CONFIG_FILE);
    std::fs::write(&cpath, cfg.to_toml()).map_err(|e| DemoError::io(&cpath, e))?;
    Ok(manifest)
}

/// Reads a dataset directory in manifest order, checking sample counts.
pub fn read_dataset(dir: &Path) -> Result<(Manifest, Vec<Demonstration>), DemoError> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&mpath).map_err(|e| DemoError::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| json_error(0, e))?;
    if manifest.version != DEMO_FORMAT_VERSION {
        return Err(DemoError::Version {
            found: manifest.version,
            expected: DEMO_FORMAT_VERSION,
        });
    }
    let mut demos = Vec::with_capacity(manifest.demos.len());
    for entry in &manifest.demos {
        let d = read_demo(&dir.join(&entry.file))?;
        if d.len() != entry.samples {
            return Err(DemoError::Truncated(format!(
                "{} holds {} samples, manifest lists {}",
                entry.file,
                d.len(),
                entry.samples
            )));
        }
        demos.push(d);
    }
    Ok((manifest, demos))
}

/// Loads the simulator config stored next to a dataset, if any.
pub fn read_dataset_config(dir: &Path) -> Option<SimConfig> {
    SimConfig::load(&dir.join(SIM_CONFIG_FILE)).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::tests::demo_of_len;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut d = demo_of_len(50);
        d.samples[3].pose.x = 0.1 + 0.2;
        d.samples[4].twist.vz = -1.0e-300;
        d.samples[5].wrench.tau = std::f64::consts::PI / 7.0;
        let back = parse_demo(&demo_to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn typed_errors() {
        let text = demo_to_string(&demo_of_len(5)).unwrap();
        assert!(matches!(parse_demo(""), Err(DemoError::Truncated(_))));
        let cut = &text[..text.len() - 10];
        assert!(matches!(parse_demo(cut), Err(DemoError::Truncated(_))));
        let bumped = text.replacen("\"version\":1", "\"version\":9", 1);
        assert!(matches!(
            parse_demo(&bumped),
            Err(DemoError::Version { found: 9, .. })
        ));
        let garbage = text.replacen("\"pose\"", "\"p0se\"", 1);
        assert!(matches!(
            parse_demo(&garbage),
            Err(DemoError::Malformed { .. })
        ));
    }

    #[test]
    fn irregular_spacing_is_invalid() {
        let mut d = demo_of_len(5);
        d.samples[2].t += 0.001;
        assert!(matches!(demo_to_string(&d), Err(DemoError::Invalid(_))));
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let demos = vec![demo_of_len(30), demo_of_len(12)];
        let cfg = SimConfig::default();
        let m = write_dataset(dir.path(), &demos, &cfg).unwrap();
        assert_eq!(m.demos.len(), 2);
        let (m2, back) = read_dataset(dir.path()).unwrap();
        assert_eq!(m2, m);
        assert_eq!(back, demos);
        assert_eq!(read_dataset_config(dir.path()), Some(cfg));
    }
}
