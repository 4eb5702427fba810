//! N-body simulation under the six pairwise force laws.
//!
//! All quantities are dimensionless. Pair potentials use the softened
//! distance `r' = |r1 - r2| + 0.01` so nothing is singular; forces are
//! hand-derived analytic gradients of the potentials (a finite-difference
//! oracle checks them in the tests). Trajectories are advanced with
//! classical RK4 under a step-doubling error controller between output
//! snapshots.

mod dataset;
mod forces;
mod integrate;
mod sample;

#[cfg(test)]
mod tests;

pub use dataset::{generate_dataset, Dataset, Split};
pub use forces::{accelerations, pair_force, pair_potential, total_energy, total_momentum};
pub use integrate::{integrate, integrate_fixed};
pub use sample::sample_initial_conditions;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Distance softening added to every pairwise separation.
pub const SOFTENING: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("AdaptiveStepUnderflow: required internal step {required:e} fell below 1e-12 of step size {step_size:e}")]
    AdaptiveStepUnderflow { required: f64, step_size: f64 },
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("SchemaError: {0}")]
    Schema(String),
}

/// The six pairwise interaction laws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Law {
    /// Orbital force `-m1 m2 rhat / r`, from the potential `m1 m2 log r'`.
    InvR,
    /// Orbital force `-m1 m2 rhat / r^2`, from `-m1 m2 / r'`.
    InvR2,
    /// Springs between all particles, potential `(r' - 1)^2`.
    Spring,
    /// Spring potential plus a damping term proportional and opposite to speed.
    Damped,
    /// Charged particles, potential `q1 q2 / r'`.
    Charge,
    /// Zero force below `r' = 2`, spring potential above.
    Discontinuous,
}

impl Law {
    pub const ALL: [Law; 6] = [
        Law::InvR,
        Law::InvR2,
        Law::Spring,
        Law::Damped,
        Law::Charge,
        Law::Discontinuous,
    ];

    /// Integration step size used for this law's datasets.
    pub fn paper_step_size(self) -> f64 {
        match self {
            Law::InvR => 0.005,
            Law::InvR2 => 0.001,
            Law::Spring => 0.01,
            Law::Damped => 0.02,
            Law::Charge => 0.001,
            Law::Discontinuous => 0.01,
        }
    }

    /// Whether the dynamics conserve energy (everything except damping).
    pub fn is_conservative(self) -> bool {
        !matches!(self, Law::Damped)
    }

    pub fn name(self) -> &'static str {
        match self {
            Law::InvR => "inv_r",
            Law::InvR2 => "inv_r2",
            Law::Spring => "spring",
            Law::Damped => "damped",
            Law::Charge => "charge",
            Law::Discontinuous => "discontinuous",
        }
    }

    pub fn parse(name: &str) -> Option<Law> {
        match name {
            "inv_r" | "r1" | "1/r" => Some(Law::InvR),
            "inv_r2" | "r2" | "1/r2" => Some(Law::InvR2),
            "spring" => Some(Law::Spring),
            "damped" => Some(Law::Damped),
            "charge" => Some(Law::Charge),
            "discontinuous" | "disc" => Some(Law::Discontinuous),
            _ => None,
        }
    }
}

/// One particle: position, velocity, mass, charge.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub mass: f64,
    pub charge: f64,
}

impl ParticleState {
    pub fn dim(&self) -> usize {
        self.position.len()
    }
}

/// Configuration for one simulation / dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub law: Law,
    pub n_bodies: usize,
    pub dim: usize,
    pub n_steps: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Defaults matching the published datasets: 1000 steps with the
    /// per-law step size.
    pub fn paper_defaults(law: Law, dim: usize, n_bodies: usize, seed: u64) -> SimConfig {
        SimConfig {
            law,
            n_bodies,
            dim,
            n_steps: 1000,
            step_size: law.paper_step_size(),
            seed,
        }
    }
}

/// A simulated trajectory: `n_steps` snapshots of every particle plus the
/// instantaneous accelerations at each snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `states[step][body]`
    pub states: Vec<Vec<ParticleState>>,
    /// `accelerations[step][body]` is a D-vector.
    pub accelerations: Vec<Vec<Vec<f64>>>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len()
    }

    pub fn n_bodies(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }
}
