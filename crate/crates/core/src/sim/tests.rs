use super::*;
use crate::derive_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn particle(pos: &[f64], vel: &[f64], mass: f64, charge: f64) -> ParticleState {
    ParticleState {
        position: pos.to_vec(),
        velocity: vel.to_vec(),
        mass,
        charge,
    }
}

#[test]
fn pair_potential_known_values() {
    // separation 0.99 => softened distance exactly 1
    let a = particle(&[0.0, 0.0], &[0.0, 0.0], 1.0, 1.0);
    let b = particle(&[0.99, 0.0], &[0.0, 0.0], 1.0, 1.0);
    assert_eq!(pair_potential(Law::Spring, &a, &b, 2), 0.0);
    assert_eq!(pair_potential(Law::Charge, &a, &b, 2), 1.0);

    let a2 = particle(&[0.0, 0.0], &[0.0, 0.0], 2.0, 1.0);
    let b2 = particle(&[0.99, 0.0], &[0.0, 0.0], 3.0, 1.0);
    assert!((pair_potential(Law::InvR2, &a2, &b2, 2) - (-6.0)).abs() < 1e-12);
}

#[test]
fn newton_third_law_and_spring_minimum() {
    let a = particle(&[0.1, -0.4], &[0.0, 0.0], 1.3, 1.0);
    let b = particle(&[1.0, 0.7], &[0.0, 0.0], 1.3, -1.0);
    for law in [Law::InvR, Law::InvR2, Law::Spring, Law::Charge, Law::Discontinuous] {
        let acc = accelerations(law, &[a.clone(), b.clone()]);
        for k in 0..2 {
            assert!(
                (acc[0][k] + acc[1][k]).abs() < 1e-12,
                "{law:?} not antisymmetric"
            );
        }
    }
    // separation 0.99 puts the spring exactly at its potential minimum
    let at_min = particle(&[0.99, 0.0], &[0.0, 0.0], 2.0, 1.0);
    let acc = accelerations(Law::Spring, &[a.clone(), at_min]);
    // a sits 0.99 + offset away; use the two placed exactly 0.99 apart
    let p = particle(&[0.0, 0.0], &[0.0, 0.0], 1.0, 1.0);
    let q = particle(&[0.99, 0.0], &[0.0, 0.0], 5.0, 1.0);
    let acc2 = accelerations(Law::Spring, &[p, q]);
    for k in 0..2 {
        assert_eq!(acc2[0][k], 0.0);
        assert_eq!(acc2[1][k], 0.0);
    }
    drop(acc);
}

#[test]
fn inv_r2_unit_masses_unit_force() {
    let p = particle(&[0.0, 0.0], &[0.0, 0.0], 1.0, 1.0);
    let q = particle(&[0.99, 0.0], &[0.0, 0.0], 1.0, 1.0);
    let acc = accelerations(Law::InvR2, &[p, q]);
    let norm = (acc[0][0] * acc[0][0] + acc[0][1] * acc[0][1]).sqrt();
    assert!((norm - 1.0).abs() < 1e-12, "|a| = {norm}");
}

/// Central finite differences of the pair potential with respect to the
/// receiver position, the independent oracle for the analytic forces.
fn fd_force(law: Law, receiver: &ParticleState, sender: &ParticleState, n: usize) -> Vec<f64> {
    let eps = 1e-5;
    (0..receiver.position.len())
        .map(|k| {
            let mut hi = receiver.clone();
            let mut lo = receiver.clone();
            hi.position[k] += eps;
            lo.position[k] -= eps;
            -(pair_potential(law, &hi, sender, n) - pair_potential(law, &lo, sender, n))
                / (2.0 * eps)
        })
        .collect()
}

/// Random pair with guards keeping finite differences away from the
/// softening kink at zero separation and the discontinuity at r' = 2.
fn random_pair(rng: &mut impl Rng, dim: usize) -> (ParticleState, ParticleState) {
    loop {
        let mut draw = || -> ParticleState {
            ParticleState {
                position: (0..dim).map(|_| StandardNormal.sample(rng)).collect(),
                velocity: (0..dim).map(|_| StandardNormal.sample(rng)).collect(),
                mass: f64::exp(StandardNormal.sample(rng)),
                charge: if rng.random::<bool>() { 1.0 } else { -1.0 },
            }
        };
        let (a, b) = (draw(), draw());
        let d2: f64 = a
            .position
            .iter()
            .zip(&b.position)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let r = d2.sqrt() + SOFTENING;
        if d2.sqrt() > 5e-3 && (r - 2.0).abs() > 1e-3 {
            return (a, b);
        }
    }
}

#[test]
fn analytic_forces_match_finite_differences() {
    let mut rng = derive_rng(7, 0);
    for law in Law::ALL {
        for dim in [2, 3] {
            for _ in 0..100 {
                let (a, b) = random_pair(&mut rng, dim);
                let f = pair_force(law, &a, &b, 4);
                let fd = fd_force(law, &a, &b, 4);
                let num: f64 = f
                    .iter()
                    .zip(&fd)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                let den = f.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
                assert!(
                    num / den < 1e-6,
                    "{law:?} dim {dim}: rel err {}",
                    num / den
                );
            }
        }
    }
}

#[test]
fn discontinuous_force_zero_inside_shell() {
    let mut rng = derive_rng(8, 0);
    for _ in 0..500 {
        let (mut a, b) = random_pair(&mut rng, 2);
        // pull the receiver inside r' < 2
        let scale: f64 = rng.random_range(0.01..0.9);
        for k in 0..2 {
            a.position[k] = b.position[k] + scale * (a.position[k] - b.position[k]);
        }
        let d: f64 = a
            .position
            .iter()
            .zip(&b.position)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        if d + SOFTENING < 2.0 {
            let f = pair_force(Law::Discontinuous, &a, &b, 2);
            assert!(f.iter().all(|&x| x == 0.0), "nonzero force at r'={}", d + SOFTENING);
        }
    }
}

#[test]
fn isolated_particle_stays_put() {
    let init = vec![particle(&[0.3, -0.2], &[0.0, 0.0], 1.0, 1.0)];
    let config = SimConfig {
        law: Law::Spring,
        n_bodies: 1,
        dim: 2,
        n_steps: 50,
        step_size: 0.01,
        seed: 0,
    };
    let traj = integrate(&config, &init).unwrap();
    for step in &traj.states {
        assert_eq!(step[0].position, init[0].position);
    }
}

fn spring_two_body(seed: u64) -> Vec<ParticleState> {
    let mut rng = derive_rng(seed, 0);
    super::sample::sample_with_rng(&mut rng, 2, 2)
}

#[test]
fn fixed_step_rk4_is_fourth_order() {
    let init = spring_two_body(3);
    let run = |h: f64, steps: usize| {
        let config = SimConfig {
            law: Law::Spring,
            n_bodies: 2,
            dim: 2,
            n_steps: steps + 1,
            step_size: h,
            seed: 0,
        };
        let traj = integrate_fixed(&config, &init);
        traj.states.last().unwrap().clone()
    };
    let h = 0.1;
    let n = 20;
    let reference = run(h / 16.0, n * 16);
    let err = |states: &[ParticleState]| -> f64 {
        states
            .iter()
            .zip(&reference)
            .flat_map(|(a, b)| {
                a.position
                    .iter()
                    .zip(&b.position)
                    .chain(a.velocity.iter().zip(&b.velocity))
                    .map(|(x, y)| (x - y) * (x - y))
            })
            .sum::<f64>()
            .sqrt()
    };
    let e1 = err(&run(h, n));
    let e2 = err(&run(h / 2.0, n * 2));
    assert!(
        e1 / e2 >= 12.0,
        "error ratio {} (e1={e1:e}, e2={e2:e})",
        e1 / e2
    );
}

#[test]
fn adaptive_spring_conserves_energy_and_momentum() {
    let init = spring_two_body(11);
    let config = SimConfig::paper_defaults(Law::Spring, 2, 2, 0);
    let traj = integrate(&config, &init).unwrap();
    let e0 = total_energy(Law::Spring, &traj.states[0]).unwrap();
    let e1 = total_energy(Law::Spring, traj.states.last().unwrap()).unwrap();
    assert!(
        ((e1 - e0) / e0).abs() < 1e-4,
        "energy drift {}",
        ((e1 - e0) / e0).abs()
    );

    let p0 = total_momentum(&traj.states[0]);
    let mut max_drift: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for step in &traj.states {
        let p = total_momentum(step);
        let d: f64 = p
            .iter()
            .zip(&p0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        max_drift = max_drift.max(d);
        let s: f64 = step
            .iter()
            .map(|b| b.mass * b.velocity.iter().map(|v| v * v).sum::<f64>().sqrt())
            .sum();
        scale = scale.max(s);
    }
    assert!(
        max_drift / scale < 1e-5,
        "momentum drift {}",
        max_drift / scale
    );
}

#[test]
fn trajectory_accelerations_are_rederivable() {
    let init = spring_two_body(5);
    let config = SimConfig {
        law: Law::Spring,
        n_bodies: 2,
        dim: 2,
        n_steps: 20,
        step_size: 0.01,
        seed: 0,
    };
    let traj = integrate(&config, &init).unwrap();
    for (states, accs) in traj.states.iter().zip(&traj.accelerations) {
        let recomputed = accelerations(Law::Spring, states);
        assert_eq!(&recomputed, accs);
    }
}

#[test]
fn sampling_is_deterministic_and_distributed_right() {
    let a = sample_initial_conditions(42, 4, 3);
    let b = sample_initial_conditions(42, 4, 3);
    assert_eq!(a, b);

    let n = 100_000;
    let states = sample_initial_conditions(1, n, 2);
    let mean_log_mass: f64 = states.iter().map(|s| s.mass.ln()).sum::<f64>() / n as f64;
    assert!(mean_log_mass.abs() < 0.02, "mean log mass {mean_log_mass}");
    let positive = states.iter().filter(|s| s.charge > 0.0).count() as f64 / n as f64;
    assert!((positive - 0.5).abs() < 0.01, "charge fraction {positive}");
    assert!(states.iter().all(|s| s.charge == 1.0 || s.charge == -1.0));
    assert!(states.iter().all(|s| s.mass > 0.0));
}

#[test]
fn dataset_roundtrip_and_schema_check() {
    let dir = std::env::temp_dir().join(format!("symdistill-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("spring2.bin");
    let config = SimConfig {
        law: Law::Spring,
        n_bodies: 4,
        dim: 2,
        n_steps: 30,
        step_size: 0.01,
        seed: 9,
    };
    let ds = generate_dataset(&config, 2, &path).unwrap();
    let loaded = Dataset::load(&path).unwrap();
    assert_eq!(ds.trajectories, loaded.trajectories);
    assert_eq!(ds.config, loaded.config);

    assert!(matches!(
        Dataset::load_expecting(&path, Law::Charge),
        Err(SimError::Schema(_))
    ));

    // purity: regenerating writes identical bytes
    let path2 = dir.join("spring2-again.bin");
    generate_dataset(&config, 2, &path2).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&path2).unwrap()
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn dataset_split_is_80_20_by_index() {
    let config = SimConfig {
        law: Law::Spring,
        n_bodies: 2,
        dim: 2,
        n_steps: 5,
        step_size: 0.01,
        seed: 0,
    };
    let ds = Dataset::generate(&config, 10).unwrap();
    let split: Vec<Split> = ds.split.clone();
    assert_eq!(split.iter().filter(|s| **s == Split::Train).count(), 8);
    assert!(split[8..].iter().all(|s| *s == Split::Test));
}
