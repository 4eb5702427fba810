//! Pair potentials and their analytic gradients.

use super::{Law, ParticleState, SOFTENING};

/// Potential energy of an ordered pair (receiver, sender).
///
/// `n_bodies` enters only the damped law's velocity term.
pub fn pair_potential(
    law: Law,
    receiver: &ParticleState,
    sender: &ParticleState,
    n_bodies: usize,
) -> f64 {
    let r = softened_distance(&receiver.position, &sender.position);
    let (m1, m2) = (receiver.mass, sender.mass);
    match law {
        Law::InvR => m1 * m2 * r.ln(),
        Law::InvR2 => -m1 * m2 / r,
        Law::Spring => (r - 1.0) * (r - 1.0),
        Law::Damped => {
            let rv: f64 = receiver
                .position
                .iter()
                .zip(&receiver.velocity)
                .map(|(x, v)| x * v)
                .sum();
            (r - 1.0) * (r - 1.0) + rv / n_bodies as f64
        }
        Law::Charge => receiver.charge * sender.charge / r,
        Law::Discontinuous => {
            if r < 2.0 {
                0.0
            } else {
                (r - 1.0) * (r - 1.0)
            }
        }
    }
}

/// Force on the receiver from one sender: `-grad_{r1} U`, with velocity
/// held constant (the damped law's velocity term becomes an explicit
/// non-conservative drag per incident edge).
pub fn pair_force(
    law: Law,
    receiver: &ParticleState,
    sender: &ParticleState,
    n_bodies: usize,
) -> Vec<f64> {
    let dim = receiver.position.len();
    let mut delta = vec![0.0; dim];
    let mut d2 = 0.0;
    for k in 0..dim {
        delta[k] = receiver.position[k] - sender.position[k];
        d2 += delta[k] * delta[k];
    }
    let dist = d2.sqrt();
    let r = dist + SOFTENING;
    // dU/dr', radial derivative of the potential
    let du = match law {
        Law::InvR => receiver.mass * sender.mass / r,
        Law::InvR2 => receiver.mass * sender.mass / (r * r),
        Law::Spring => 2.0 * (r - 1.0),
        Law::Damped => 2.0 * (r - 1.0),
        Law::Charge => -receiver.charge * sender.charge / (r * r),
        Law::Discontinuous => {
            if r < 2.0 {
                0.0
            } else {
                2.0 * (r - 1.0)
            }
        }
    };
    let mut force = vec![0.0; dim];
    if dist > 0.0 {
        for k in 0..dim {
            force[k] = -du * delta[k] / dist;
        }
    }
    if law == Law::Damped {
        for k in 0..dim {
            force[k] -= receiver.velocity[k] / n_bodies as f64;
        }
    }
    force
}

/// Instantaneous accelerations `a_i = f_i / m_i` for every particle.
pub fn accelerations(law: Law, states: &[ParticleState]) -> Vec<Vec<f64>> {
    let n = states.len();
    let dim = states[0].position.len();
    let mut out = vec![vec![0.0; dim]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let f = pair_force(law, &states[i], &states[j], n);
            for k in 0..dim {
                out[i][k] += f[k] / states[i].mass;
            }
        }
    }
    out
}

/// Flat-buffer acceleration kernel used by the integrator: positions and
/// velocities as `[n * dim]` arrays, accelerations written into `out`.
pub(super) fn accel_into(
    law: Law,
    dim: usize,
    masses: &[f64],
    charges: &[f64],
    pos: &[f64],
    vel: &[f64],
    out: &mut [f64],
) {
    let n = masses.len();
    out.fill(0.0);
    let nf = n as f64;
    for i in 0..n {
        let pi = &pos[i * dim..(i + 1) * dim];
        for j in 0..n {
            if i == j {
                continue;
            }
            let pj = &pos[j * dim..(j + 1) * dim];
            let mut d2 = 0.0;
            for k in 0..dim {
                let d = pi[k] - pj[k];
                d2 += d * d;
            }
            let dist = d2.sqrt();
            let r = dist + SOFTENING;
            let du = match law {
                Law::InvR => masses[i] * masses[j] / r,
                Law::InvR2 => masses[i] * masses[j] / (r * r),
                Law::Spring | Law::Damped => 2.0 * (r - 1.0),
                Law::Charge => -charges[i] * charges[j] / (r * r),
                Law::Discontinuous => {
                    if r < 2.0 {
                        0.0
                    } else {
                        2.0 * (r - 1.0)
                    }
                }
            };
            if dist > 0.0 {
                let scale = -du / (dist * masses[i]);
                for k in 0..dim {
                    out[i * dim + k] += scale * (pi[k] - pj[k]);
                }
            }
        }
        if law == Law::Damped {
            // one drag term per incident edge
            let drag = (nf - 1.0) / (nf * masses[i]);
            for k in 0..dim {
                out[i * dim + k] -= drag * vel[i * dim + k];
            }
        }
    }
}

/// Total energy `sum p^2/2m + sum_{i<j} U_ij`. `None` for the damped law,
/// which has no conserved energy.
pub fn total_energy(law: Law, states: &[ParticleState]) -> Option<f64> {
    if !law.is_conservative() {
        return None;
    }
    let n = states.len();
    let mut e = 0.0;
    for s in states {
        let v2: f64 = s.velocity.iter().map(|v| v * v).sum();
        e += 0.5 * s.mass * v2;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            e += pair_potential(law, &states[i], &states[j], n);
        }
    }
    Some(e)
}

/// Total linear momentum `sum_i m_i v_i`.
pub fn total_momentum(states: &[ParticleState]) -> Vec<f64> {
    let dim = states[0].position.len();
    let mut p = vec![0.0; dim];
    for s in states {
        for k in 0..dim {
            p[k] += s.mass * s.velocity[k];
        }
    }
    p
}

fn softened_distance(a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    d2.sqrt() + SOFTENING
}
