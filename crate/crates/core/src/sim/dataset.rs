//! On-disk dataset container: JSON header + little-endian f64 arrays.

use super::{integrate, ParticleState, SimConfig, SimError, Trajectory};
use crate::derive_rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SDNB";
const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    #[serde(flatten)]
    config: SimConfig,
    n_sims: usize,
    /// 0 = train, 1 = test, per simulation index.
    split: Vec<u8>,
}

/// A set of simulated trajectories with a train/test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub config: SimConfig,
    pub split: Vec<Split>,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    /// Simulate `n_sims` trajectories. Each simulation draws its initial
    /// conditions from its own RNG stream, so the result is a pure
    /// function of `(config, n_sims)`. The last fifth of the simulation
    /// indices form the test split.
    pub fn generate(config: &SimConfig, n_sims: usize) -> Result<Dataset, SimError> {
        let trajectories: Result<Vec<Trajectory>, SimError> = (0..n_sims)
            .into_par_iter()
            .map(|i| {
                let mut rng = derive_rng(config.seed, 1 + i as u64);
                let init = super::sample::sample_with_rng(&mut rng, config.n_bodies, config.dim);
                integrate(config, &init)
            })
            .collect();
        let n_test = n_sims / 5;
        let split = (0..n_sims)
            .map(|i| {
                if i < n_sims - n_test {
                    Split::Train
                } else {
                    Split::Test
                }
            })
            .collect();
        Ok(Dataset {
            config: config.clone(),
            split,
            trajectories: trajectories?,
        })
    }

    pub fn sims_in(&self, split: Split) -> impl Iterator<Item = (usize, &Trajectory)> {
        self.split
            .iter()
            .zip(&self.trajectories)
            .enumerate()
            .filter_map(move |(i, (s, t))| (*s == split).then_some((i, t)))
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = Header {
            schema_version: SCHEMA_VERSION,
            config: self.config.clone(),
            n_sims: self.trajectories.len(),
            split: self
                .split
                .iter()
                .map(|s| if *s == Split::Test { 1 } else { 0 })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)
            .map_err(|e| SimError::Schema(format!("header encode failed: {e}")))?;
        w.write_all(MAGIC)?;
        w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
        w.write_all(&header_bytes)?;
        for traj in &self.trajectories {
            for step in &traj.states {
                for body in step {
                    write_f64s(&mut w, &body.position)?;
                    write_f64s(&mut w, &body.velocity)?;
                    write_f64s(&mut w, &[body.mass, body.charge])?;
                }
            }
            for step in &traj.accelerations {
                for body in step {
                    write_f64s(&mut w, body)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Dataset, SimError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SimError::Schema("bad magic, not a dataset file".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header_bytes)?;
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| SimError::Schema(format!("header decode failed: {e}")))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(SimError::Schema(format!(
                "schema version {} unsupported (expected {SCHEMA_VERSION})",
                header.schema_version
            )));
        }
        if header.split.len() != header.n_sims {
            return Err(SimError::Schema("split length != n_sims".into()));
        }
        let config = header.config;
        let (n_steps, n_bodies, dim) = (config.n_steps, config.n_bodies, config.dim);
        let mut trajectories = Vec::with_capacity(header.n_sims);
        for _ in 0..header.n_sims {
            let mut states = Vec::with_capacity(n_steps);
            for _ in 0..n_steps {
                let mut step = Vec::with_capacity(n_bodies);
                for _ in 0..n_bodies {
                    let position = read_f64s(&mut r, dim)?;
                    let velocity = read_f64s(&mut r, dim)?;
                    let mc = read_f64s(&mut r, 2)?;
                    step.push(ParticleState {
                        position,
                        velocity,
                        mass: mc[0],
                        charge: mc[1],
                    });
                }
                states.push(step);
            }
            let mut accelerations = Vec::with_capacity(n_steps);
            for _ in 0..n_steps {
                let mut step = Vec::with_capacity(n_bodies);
                for _ in 0..n_bodies {
                    step.push(read_f64s(&mut r, dim)?);
                }
                accelerations.push(step);
            }
            trajectories.push(Trajectory {
                states,
                accelerations,
            });
        }
        let split = header
            .split
            .iter()
            .map(|s| if *s == 1 { Split::Test } else { Split::Train })
            .collect();
        Ok(Dataset {
            config,
            split,
            trajectories,
        })
    }

    /// Load and check the header's law tag against the one the caller
    /// expects.
    pub fn load_expecting(path: &Path, law: super::Law) -> Result<Dataset, SimError> {
        let ds = Dataset::load(path)?;
        if ds.config.law != law {
            return Err(SimError::Schema(format!(
                "law tag mismatch: file has {}, expected {}",
                ds.config.law.name(),
                law.name()
            )));
        }
        Ok(ds)
    }
}

/// Simulate and write a dataset in one call.
pub fn generate_dataset(
    config: &SimConfig,
    n_sims: usize,
    path: &Path,
) -> Result<Dataset, SimError> {
    let ds = Dataset::generate(config, n_sims)?;
    ds.save(path)?;
    Ok(ds)
}

fn write_f64s(w: &mut impl Write, vals: &[f64]) -> std::io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, SimError> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
