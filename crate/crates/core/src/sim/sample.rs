//! Initial-condition sampling.

use super::ParticleState;
use crate::derive_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Sample initial particle states: mass ~ LogNormal(0, 1), every position
/// and velocity component ~ Normal(0, 1), charge uniform on {-1, +1}.
pub fn sample_initial_conditions(seed: u64, n_bodies: usize, dim: usize) -> Vec<ParticleState> {
    let mut rng = derive_rng(seed, 0);
    sample_with_rng(&mut rng, n_bodies, dim)
}

pub(crate) fn sample_with_rng(
    rng: &mut impl Rng,
    n_bodies: usize,
    dim: usize,
) -> Vec<ParticleState> {
    (0..n_bodies)
        .map(|_| {
            let mass = f64::exp(StandardNormal.sample(rng));
            let position = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let velocity = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let charge = if rng.random::<bool>() { 1.0 } else { -1.0 };
            ParticleState {
                position,
                velocity,
                mass,
                charge,
            }
        })
        .collect()
}
