//! RK4 integration with step-doubling error control.

use super::forces::{accelerations, accel_into};
use super::{ParticleState, SimConfig, SimError, Trajectory};

/// Relative tolerance of the step-doubling controller.
const RTOL: f64 = 1e-6;
const ATOL: f64 = 1e-9;
/// An internal step below this fraction of the snapshot interval aborts.
const MIN_STEP_FRACTION: f64 = 1e-12;

struct System {
    law: super::Law,
    dim: usize,
    masses: Vec<f64>,
    charges: Vec<f64>,
}

impl System {
    fn from_states(config: &SimConfig, init: &[ParticleState]) -> System {
        System {
            law: config.law,
            dim: config.dim,
            masses: init.iter().map(|s| s.mass).collect(),
            charges: init.iter().map(|s| s.charge).collect(),
        }
    }

    fn n(&self) -> usize {
        self.masses.len()
    }

    /// dy/dt for the flat state y = [positions, velocities].
    fn deriv(&self, y: &[f64], out: &mut [f64]) {
        let nd = self.n() * self.dim;
        let (pos, vel) = y.split_at(nd);
        out[..nd].copy_from_slice(vel);
        accel_into(
            self.law,
            self.dim,
            &self.masses,
            &self.charges,
            pos,
            vel,
            &mut out[nd..],
        );
    }

    fn rk4_step(&self, y: &[f64], h: f64, out: &mut [f64], scratch: &mut Scratch) {
        let n = y.len();
        self.deriv(y, &mut scratch.k1);
        for i in 0..n {
            scratch.tmp[i] = y[i] + 0.5 * h * scratch.k1[i];
        }
        self.deriv(&scratch.tmp, &mut scratch.k2);
        for i in 0..n {
            scratch.tmp[i] = y[i] + 0.5 * h * scratch.k2[i];
        }
        self.deriv(&scratch.tmp, &mut scratch.k3);
        for i in 0..n {
            scratch.tmp[i] = y[i] + h * scratch.k3[i];
        }
        self.deriv(&scratch.tmp, &mut scratch.k4);
        for i in 0..n {
            out[i] = y[i]
                + h / 6.0 * (scratch.k1[i] + 2.0 * scratch.k2[i] + 2.0 * scratch.k3[i] + scratch.k4[i]);
        }
    }

    fn states_from_flat(&self, init: &[ParticleState], y: &[f64]) -> Vec<ParticleState> {
        let nd = self.n() * self.dim;
        init.iter()
            .enumerate()
            .map(|(i, s)| ParticleState {
                position: y[i * self.dim..(i + 1) * self.dim].to_vec(),
                velocity: y[nd + i * self.dim..nd + (i + 1) * self.dim].to_vec(),
                mass: s.mass,
                charge: s.charge,
            })
            .collect()
    }
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Scratch {
        Scratch {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

fn flat_state(init: &[ParticleState], dim: usize) -> Vec<f64> {
    let n = init.len();
    let mut y = vec![0.0; 2 * n * dim];
    for (i, s) in init.iter().enumerate() {
        y[i * dim..(i + 1) * dim].copy_from_slice(&s.position);
        y[n * dim + i * dim..n * dim + (i + 1) * dim].copy_from_slice(&s.velocity);
    }
    y
}

/// Advance one snapshot interval of length `h` with adaptive sub-steps.
///
/// Step doubling: one full RK4 step is compared against two half steps;
/// the max scaled component difference is the error estimate. The two-half
/// solution is kept on acceptance (no fifth-order extrapolation, so the
/// method stays classical RK4).
fn advance_interval(
    sys: &System,
    y: &mut Vec<f64>,
    h: f64,
    scratch: &mut Scratch,
    full: &mut Vec<f64>,
    half: &mut Vec<f64>,
    half2: &mut Vec<f64>,
) -> Result<(), SimError> {
    let n = y.len();
    let mut remaining = h;
    let mut step = h;
    while remaining > 0.0 {
        if step > remaining {
            step = remaining;
        }
        if step < MIN_STEP_FRACTION * h {
            return Err(SimError::AdaptiveStepUnderflow {
                required: step,
                step_size: h,
            });
        }
        sys.rk4_step(y, step, full, scratch);
        sys.rk4_step(y, 0.5 * step, half, scratch);
        sys.rk4_step(half, 0.5 * step, half2, scratch);
        let mut err: f64 = 0.0;
        for i in 0..n {
            let scale = ATOL + RTOL * full[i].abs().max(half2[i].abs());
            err = err.max((half2[i] - full[i]).abs() / scale);
        }
        if err <= 1.0 {
            std::mem::swap(y, half2);
            remaining -= step;
            let grow = if err > 0.0 {
                (0.9 * err.powf(-0.2)).min(2.0)
            } else {
                2.0
            };
            step *= grow;
        } else {
            let shrink = if err.is_finite() {
                (0.9 * err.powf(-0.2)).max(0.2)
            } else {
                0.2
            };
            step *= shrink;
        }
    }
    Ok(())
}

/// Integrate `config.n_steps` snapshot intervals adaptively, storing each
/// snapshot state and its recomputed accelerations.
pub fn integrate(config: &SimConfig, init: &[ParticleState]) -> Result<Trajectory, SimError> {
    let sys = System::from_states(config, init);
    let mut y = flat_state(init, config.dim);
    let n = y.len();
    let mut scratch = Scratch::new(n);
    let (mut full, mut half, mut half2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);

    let mut states = Vec::with_capacity(config.n_steps);
    let mut accels = Vec::with_capacity(config.n_steps);
    let first = sys.states_from_flat(init, &y);
    accels.push(accelerations(config.law, &first));
    states.push(first);
    for _ in 1..config.n_steps {
        advance_interval(
            &sys,
            &mut y,
            config.step_size,
            &mut scratch,
            &mut full,
            &mut half,
            &mut half2,
        )?;
        let snap = sys.states_from_flat(init, &y);
        accels.push(accelerations(config.law, &snap));
        states.push(snap);
    }
    Ok(Trajectory {
        states,
        accelerations: accels,
    })
}

/// Fixed-step RK4 (one step per snapshot interval), used to measure the
/// integrator's convergence order.
pub fn integrate_fixed(config: &SimConfig, init: &[ParticleState]) -> Trajectory {
    let sys = System::from_states(config, init);
    let mut y = flat_state(init, config.dim);
    let n = y.len();
    let mut scratch = Scratch::new(n);
    let mut next = vec![0.0; n];

    let mut states = Vec::with_capacity(config.n_steps);
    let mut accels = Vec::with_capacity(config.n_steps);
    let first = sys.states_from_flat(init, &y);
    accels.push(accelerations(config.law, &first));
    states.push(first);
    for _ in 1..config.n_steps {
        sys.rk4_step(&y, config.step_size, &mut next, &mut scratch);
        std::mem::swap(&mut y, &mut next);
        let snap = sys.states_from_flat(init, &y);
        accels.push(accelerations(config.law, &snap));
        states.push(snap);
    }
    Trajectory {
        states,
        accelerations: accels,
    }
}
