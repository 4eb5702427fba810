//! Flattened Hamiltonian graph network: the system energy is an explicit
//! sum of per-particle and pairwise scalar terms, and dynamics come from
//! Hamilton's equations applied to that sum. Training differentiates a
//! loss that itself contains input gradients, so the backward pass runs
//! through the tape twice.

use crate::derive_rng;
use crate::graphnet::{
    merge, Checkpoint, CheckpointKind, FeatureLayout, GnError, GraphSnapshot, TrainConfig,
};
use crate::nn::{adam_step, AdamState, GradTape, LrSchedule, MlpParams, NodeId};
use crate::sim::{Dataset, Split};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use std::rc::Rc;

/// Weight of the L1 penalty on pairwise energies, which are degenerate
/// with the self term up to additive shifts.
pub const PAIR_REG: f64 = 1e-2;

/// Scalar self-energy and pair-energy networks.
#[derive(Debug, Clone)]
pub struct FlatHgn {
    pub layout: FeatureLayout,
    pub h_self: MlpParams,
    pub h_pair: MlpParams,
}

impl FlatHgn {
    pub fn init(dim: usize, hidden: usize, rng: &mut impl rand::Rng) -> FlatHgn {
        let layout = FeatureLayout::particles(dim);
        let lv = layout.n_features;
        FlatHgn {
            layout,
            h_self: MlpParams::init(&[lv, hidden, hidden, 1], rng),
            h_pair: MlpParams::init(&[2 * lv, hidden, hidden, 1], rng),
        }
    }

    pub fn n_params(&self) -> usize {
        self.h_self.n_params() + self.h_pair.n_params()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.h_self.flat();
        v.extend(self.h_pair.flat());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), crate::nn::NnError> {
        let split = self.h_self.n_params();
        self.h_self.set_flat(&flat[..split])?;
        self.h_pair.set_flat(&flat[split..])
    }

    /// Pairwise energies for every edge, `[E, 1]`.
    pub fn h_pair_outputs(&self, graph: &GraphSnapshot) -> Array2<f64> {
        let inputs = crate::graphnet::edge_model_inputs(graph);
        self.h_pair.forward_batch(&inputs)
    }

    pub fn to_checkpoint(&self, law: Option<String>) -> Checkpoint {
        Checkpoint {
            kind: CheckpointKind::FlatHgn,
            variant: None,
            layout: self.layout.clone(),
            law,
            mlps: vec![
                ("h_self".into(), self.h_self.clone()),
                ("h_pair".into(), self.h_pair.clone()),
            ],
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<FlatHgn, GnError> {
        if ckpt.kind != CheckpointKind::FlatHgn {
            return Err(GnError::Schema("checkpoint is not a FlatHGN".into()));
        }
        let find = |name: &str| -> Result<MlpParams, GnError> {
            ckpt.mlps
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| p.clone())
                .ok_or_else(|| GnError::Schema(format!("checkpoint missing mlp '{name}'")))
        };
        Ok(FlatHgn {
            layout: ckpt.layout.clone(),
            h_self: find("h_self")?,
            h_pair: find("h_pair")?,
        })
    }
}

/// Total energy: self terms summed over nodes plus pair terms summed over
/// directed edges.
pub fn total_energy(model: &FlatHgn, graph: &GraphSnapshot) -> f64 {
    let selfs = model.h_self.forward_batch(&graph.nodes).sum();
    let pairs = model.h_pair_outputs(graph).sum();
    selfs + pairs
}

/// Canonical derivatives from Hamilton's equations: `dq/dt` is the energy
/// gradient with respect to each particle's momentum block and `dp/dt`
/// is minus the gradient with respect to its position block. Both are
/// `[N, dim]`.
pub fn hamiltonian_dynamics(
    model: &FlatHgn,
    graph: &GraphSnapshot,
) -> Result<(Array2<f64>, Array2<f64>), GnError> {
    let mut tape = GradTape::new();
    let (_, _, grad) = energy_and_input_grad(&mut tape, model, graph);
    let g = tape.value(grad);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(GnError::NonFiniteGradient);
    }
    let d = model.layout.dim;
    let dqdt = g.slice(ndarray::s![.., d..2 * d]).to_owned();
    let dpdt = g.slice(ndarray::s![.., ..d]).mapv(|v| -v);
    Ok((dqdt, dpdt))
}

struct HgnNodes {
    h_self: crate::nn::MlpNodes,
    h_pair: crate::nn::MlpNodes,
}

impl HgnNodes {
    fn all(&self) -> Vec<NodeId> {
        let mut v = self.h_self.all();
        v.extend(self.h_pair.all());
        v
    }
}

/// Build the taped energy and its gradient with respect to the node
/// features. Returns `(pair-energy node, param nodes, input-grad node)`.
fn energy_and_input_grad(
    tape: &mut GradTape,
    model: &FlatHgn,
    graph: &GraphSnapshot,
) -> (NodeId, HgnNodes, NodeId) {
    let nodes = HgnNodes {
        h_self: model.h_self.leaf_on(tape),
        h_pair: model.h_pair.leaf_on(tape),
    };
    let x = tape.leaf(graph.nodes.clone());
    let receivers = Rc::new(graph.receivers.clone());
    let senders = Rc::new(graph.senders.clone());
    let recv = tape.gather_rows(x, receivers);
    let send = tape.gather_rows(x, senders);
    let edge_in = tape.concat_cols(recv, send);
    let pair = model.h_pair.forward_on(tape, &nodes.h_pair, edge_in);
    let selfs = model.h_self.forward_on(tape, &nodes.h_self, x);
    let hp = tape.sum_all(pair);
    let hs = tape.sum_all(selfs);
    let h = tape.add(hp, hs);
    let grad = tape.grad_nodes(h, &[x])[0];
    (pair, nodes, grad)
}

/// Convert trajectories to canonical snapshots: node features are
/// (position, momentum, mass, charge) and the targets stack the true
/// `dq/dt` (velocity) and `dp/dt` (mass times acceleration).
pub fn canonical_snapshots(ds: &Dataset, split: Split, per_sim: usize) -> Vec<GraphSnapshot> {
    let dim = ds.config.dim;
    let n = ds.config.n_bodies;
    let lv = 2 * dim + 2;
    let (receivers, senders) = GraphSnapshot::fully_connected_edges(n);
    let mut out = Vec::new();
    for (_, traj) in ds.sims_in(split) {
        let n_steps = traj.n_steps();
        let stride = (n_steps / per_sim).max(1);
        for snap_idx in 0..per_sim.min(n_steps) {
            let step = snap_idx * stride;
            let states = &traj.states[step];
            let mut nodes = Array2::zeros((n, lv));
            let mut targets = Array2::zeros((n, 2 * dim));
            for (i, s) in states.iter().enumerate() {
                for d in 0..dim {
                    nodes[(i, d)] = s.position[d];
                    nodes[(i, dim + d)] = s.mass * s.velocity[d];
                    targets[(i, d)] = s.velocity[d];
                    targets[(i, dim + d)] = s.mass * traj.accelerations[step][i][d];
                }
                nodes[(i, 2 * dim)] = s.mass;
                nodes[(i, 2 * dim + 1)] = s.charge;
            }
            out.push(GraphSnapshot {
                nodes,
                receivers: receivers.clone(),
                senders: senders.clone(),
                targets,
                loss_nodes: None,
            });
        }
    }
    out
}

/// Derivative prediction error of the current weights on a snapshot set:
/// mean over nodes of the l1 error of (dq/dt, dp/dt).
pub fn evaluate(model: &FlatHgn, snapshots: &[GraphSnapshot]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in snapshots.chunks(32) {
        let refs: Vec<&GraphSnapshot> = chunk.iter().collect();
        let merged = merge(&refs);
        let (dqdt, dpdt) = match hamiltonian_dynamics(model, &merged) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        let d = model.layout.dim;
        for (i, row) in merged.targets.rows().into_iter().enumerate() {
            for k in 0..d {
                total += (dqdt[(i, k)] - row[k]).abs();
                total += (dpdt[(i, k)] - row[d + k]).abs();
            }
            count += 1;
        }
    }
    total / count.max(1) as f64
}

pub struct HgnTrainResult {
    pub model: FlatHgn,
    pub curve: Vec<crate::graphnet::EpochStats>,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
}

/// Train with MAE on the canonical derivatives plus the pair-energy L1
/// penalty. Gradients flow through the taped first backward pass.
pub fn train_flathgn(ds: &Dataset, config: &TrainConfig) -> Result<HgnTrainResult, GnError> {
    let train_snaps = canonical_snapshots(ds, Split::Train, config.snapshots_per_sim);
    let test_snaps = canonical_snapshots(ds, Split::Test, config.snapshots_per_sim);
    let mut rng = derive_rng(config.seed, 200);
    let model = FlatHgn::init(ds.config.dim, config.hidden, &mut rng);
    train_flathgn_on_snapshots(model, &train_snaps, &test_snaps, config)
}

pub fn train_flathgn_on_snapshots(
    mut model: FlatHgn,
    train_snaps: &[GraphSnapshot],
    test_snaps: &[GraphSnapshot],
    config: &TrainConfig,
) -> Result<HgnTrainResult, GnError> {
    let mut rng = derive_rng(config.seed, 201);
    let n_batches = train_snaps.len().div_ceil(config.batch_size).max(1);
    let schedule = LrSchedule {
        lr_start: config.lr_start,
        lr_end: config.lr_end,
        total_steps: config.epochs * n_batches,
    };
    let mut params = model.flat();
    let mut adam = AdamState::new(params.len(), schedule);
    let mut indices: Vec<usize> = (0..train_snaps.len()).collect();
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        indices.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for chunk in indices.chunks(config.batch_size) {
            let batch: Vec<&GraphSnapshot> = chunk.iter().map(|&i| &train_snaps[i]).collect();
            let mut merged = merge(&batch);
            if config.augment {
                for d in 0..model.layout.dim {
                    let shift: f64 = StandardNormal.sample(&mut rng);
                    let shift = 3.0 * shift;
                    for v in merged.nodes.column_mut(d).iter_mut() {
                        *v += shift;
                    }
                }
            }
            let (loss, grads) = hgn_batch_gradients(&model, &merged)?;
            if !loss.is_finite() {
                return Err(GnError::DivergedLoss { epoch, loss });
            }
            epoch_loss += loss;
            batches += 1.0;
            adam_step(&mut adam, &mut params, &grads)?;
            model.set_flat(&params)?;
        }
        let test = evaluate(&model, test_snaps);
        curve.push(crate::graphnet::EpochStats {
            epoch,
            train_lv: epoch_loss / batches,
            test_lv: test,
        });
    }
    let final_train_loss = evaluate(&model, train_snaps);
    let final_test_loss = evaluate(&model, test_snaps);
    Ok(HgnTrainResult {
        model,
        curve,
        final_train_loss,
        final_test_loss,
    })
}

pub(crate) fn hgn_batch_gradients(
    model: &FlatHgn,
    graph: &GraphSnapshot,
) -> Result<(f64, Vec<f64>), GnError> {
    let mut tape = GradTape::new();
    let (pair, nodes, grad) = energy_and_input_grad(&mut tape, model, graph);
    let d = model.layout.dim;
    let dqdt = tape.slice_cols(grad, d..2 * d);
    let neg_dpdt = tape.slice_cols(grad, 0..d);
    let dpdt = tape.scale(neg_dpdt, -1.0);
    let pred = tape.concat_cols(dqdt, dpdt);
    let targets = tape.leaf(graph.targets.clone());
    let data_loss = tape.mae_rows(pred, targets);

    let n_edges = graph.n_edges().max(1);
    let abs_pair = tape.abs(pair);
    let pair_l1 = tape.sum_all(abs_pair);
    let reg = tape.scale(pair_l1, PAIR_REG / n_edges as f64);
    let total = tape.add(data_loss, reg);

    let loss_value = tape.scalar(total);
    let wrt = nodes.all();
    let grads = tape.backward(total, &wrt)?;
    Ok((
        loss_value,
        grads.iter().flat_map(|g| g.iter().copied()).collect(),
    ))
}

/// Fixed-step RK4 rollout of the learned dynamics, returning the graph at
/// every step. Masses and charges ride along unchanged.
pub fn rollout(
    model: &FlatHgn,
    start: &GraphSnapshot,
    dt: f64,
    steps: usize,
) -> Result<Vec<GraphSnapshot>, GnError> {
    let d = model.layout.dim;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start.clone());
    let mut current = start.clone();
    for _ in 0..steps {
        let k = |g: &GraphSnapshot| -> Result<Array2<f64>, GnError> {
            let (dq, dp) = hamiltonian_dynamics(model, g)?;
            let mut delta = Array2::zeros((g.n_nodes(), 2 * d));
            delta.slice_mut(ndarray::s![.., ..d]).assign(&dq);
            delta.slice_mut(ndarray::s![.., d..]).assign(&dp);
            Ok(delta)
        };
        let advance = |g: &GraphSnapshot, delta: &Array2<f64>, h: f64| -> GraphSnapshot {
            let mut next = g.clone();
            for i in 0..g.n_nodes() {
                for j in 0..2 * d {
                    next.nodes[(i, j)] += h * delta[(i, j)];
                }
            }
            next
        };
        let k1 = k(&current)?;
        let k2 = k(&advance(&current, &k1, 0.5 * dt))?;
        let k3 = k(&advance(&current, &k2, 0.5 * dt))?;
        let k4 = k(&advance(&current, &k3, dt))?;
        let mut combined = k1;
        combined
            .iter_mut()
            .zip(k2.iter().zip(k3.iter().zip(k4.iter())))
            .for_each(|(a, (b, (c, e)))| *a = (*a + 2.0 * b + 2.0 * c + e) / 6.0);
        current = advance(&current, &combined, dt);
        out.push(current.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Law, SimConfig};

    fn toy_graph(n: usize, dim: usize, seed: u64) -> GraphSnapshot {
        let mut rng = derive_rng(seed, 0);
        let lv = 2 * dim + 2;
        let (receivers, senders) = GraphSnapshot::fully_connected_edges(n);
        GraphSnapshot {
            nodes: Array2::from_shape_fn((n, lv), |_| StandardNormal.sample(&mut rng)),
            receivers,
            senders,
            targets: Array2::from_shape_fn((n, 2 * dim), |_| StandardNormal.sample(&mut rng)),
            loss_nodes: None,
        }
    }

    #[test]
    fn zero_networks_energy_is_bias_count() {
        let mut rng = derive_rng(1, 0);
        let mut model = FlatHgn::init(2, 8, &mut rng);
        for p in [&mut model.h_self, &mut model.h_pair] {
            for w in p.weights.iter_mut() {
                w.fill(0.0);
            }
            for b in p.biases.iter_mut() {
                b.fill(0.0);
            }
        }
        model.h_self.biases[2][0] = 0.3;
        model.h_pair.biases[2][0] = -0.1;
        let graph = toy_graph(4, 2, 2);
        // 4 nodes, 12 directed edges
        let h = total_energy(&model, &graph);
        assert!((h - (4.0 * 0.3 + 12.0 * (-0.1))).abs() < 1e-12);
    }

    #[test]
    fn adding_isolated_node_adds_self_energy() {
        let mut rng = derive_rng(3, 0);
        let model = FlatHgn::init(2, 8, &mut rng);
        let graph = toy_graph(3, 2, 4);
        let h0 = total_energy(&model, &graph);

        let mut bigger = graph.clone();
        let mut nodes = Array2::zeros((4, graph.nodes.ncols()));
        nodes.slice_mut(ndarray::s![..3, ..]).assign(&graph.nodes);
        let extra: Vec<f64> = (0..graph.nodes.ncols()).map(|j| 0.1 * j as f64).collect();
        for (j, v) in extra.iter().enumerate() {
            nodes[(3, j)] = *v;
        }
        bigger.nodes = nodes;
        bigger.targets = Array2::zeros((4, 4));
        // no new edges: the node is isolated
        let h1 = total_energy(&model, &bigger);
        let self_term = model.h_self.forward(&extra).unwrap()[0];
        assert!((h1 - h0 - self_term).abs() < 1e-10);
    }

    /// Hard-wired gravity Hamiltonian oracle: two unit masses at rest at
    /// unit separation have H = -1 (unsoftened).
    #[test]
    fn gravity_hamiltonian_oracle_two_body() {
        let m = [1.0, 1.0];
        let q = [[0.0, 0.0], [1.0, 0.0]];
        let p = [[0.0, 0.0], [0.0, 0.0]];
        let mut h = 0.0;
        for i in 0..2 {
            let p2: f64 = p[i].iter().map(|v| v * v).sum();
            h += p2 / (2.0 * m[i]);
        }
        for i in 0..2 {
            for j in 0..2 {
                if i != j {
                    let r: f64 = q[i]
                        .iter()
                        .zip(&q[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    h -= 0.5 * m[i] * m[j] / r;
                }
            }
        }
        assert!((h - (-1.0)).abs() < 1e-15);
    }

    /// For the analytic gravity Hamiltonian, dp/dt from Hamilton's
    /// equations must equal the direct force law on circular-orbit data.
    #[test]
    fn oracle_gravity_dynamics_match_force_law() {
        let oracle_h = |q: &[f64; 4], p: &[f64; 4]| -> f64 {
            let kinetic = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]) / 2.0;
            let dx = q[0] - q[2];
            let dy = q[1] - q[3];
            let r = (dx * dx + dy * dy).sqrt();
            kinetic - 1.0 / r
        };
        let q = [0.0, 0.0, 1.0, 0.0];
        let p = [0.0, 0.5, 0.0, -0.5];
        // analytic: dp1x/dt = -dH/dq1x = -(q1x - q2x)/r^3 = 1
        let eps = 1e-6;
        let mut qh = q;
        qh[0] += eps;
        let mut ql = q;
        ql[0] -= eps;
        let dpdt_x = -(oracle_h(&qh, &p) - oracle_h(&ql, &p)) / (2.0 * eps);
        assert!((dpdt_x - 1.0).abs() < 1e-10, "dpdt_x = {dpdt_x}");
    }

    #[test]
    fn momentum_blind_model_freezes_positions() {
        // zero the momentum-column weights so H is independent of p and
        // dq/dt = dH/dp vanishes identically
        let mut rng = derive_rng(5, 0);
        let mut model = FlatHgn::init(2, 8, &mut rng);
        for col in 2..4 {
            for i in 0..model.h_self.weights[0].ncols() {
                model.h_self.weights[0][(col, i)] = 0.0;
            }
        }
        for col in [2usize, 3, 8, 9] {
            for i in 0..model.h_pair.weights[0].ncols() {
                model.h_pair.weights[0][(col, i)] = 0.0;
            }
        }
        let graph = toy_graph(3, 2, 6);
        let (dqdt, _) = hamiltonian_dynamics(&model, &graph).unwrap();
        assert!(dqdt.iter().all(|v| *v == 0.0), "dq/dt should vanish");
    }

    #[test]
    fn learned_gradient_matches_finite_differences() {
        let mut seed = 10;
        loop {
            seed += 1;
            let mut rng = derive_rng(seed, 7);
            let model = FlatHgn::init(2, 8, &mut rng);
            let graph = toy_graph(3, 2, seed);
            if near_kink(&model, &graph, 1e-3) {
                continue;
            }
            let (dqdt, dpdt) = hamiltonian_dynamics(&model, &graph).unwrap();
            let eps = 1e-6;
            let d = 2;
            for i in 0..graph.n_nodes() {
                for k in 0..d {
                    let mut hi = graph.clone();
                    hi.nodes[(i, k)] += eps;
                    let mut lo = graph.clone();
                    lo.nodes[(i, k)] -= eps;
                    let fd =
                        (total_energy(&model, &hi) - total_energy(&model, &lo)) / (2.0 * eps);
                    let got = -dpdt[(i, k)];
                    let scale = fd.abs().max(got.abs()).max(1e-6);
                    assert!(
                        (fd - got).abs() / scale < 1e-4,
                        "dH/dq[{i},{k}]: {got} vs {fd}"
                    );

                    let mut hi = graph.clone();
                    hi.nodes[(i, d + k)] += eps;
                    let mut lo = graph.clone();
                    lo.nodes[(i, d + k)] -= eps;
                    let fd =
                        (total_energy(&model, &hi) - total_energy(&model, &lo)) / (2.0 * eps);
                    let got = dqdt[(i, k)];
                    let scale = fd.abs().max(got.abs()).max(1e-6);
                    assert!(
                        (fd - got).abs() / scale < 1e-4,
                        "dH/dp[{i},{k}]: {got} vs {fd}"
                    );
                }
            }
            break;
        }
    }

    fn near_kink(model: &FlatHgn, graph: &GraphSnapshot, margin: f64) -> bool {
        let mut min_pre = f64::INFINITY;
        for row in graph.nodes.rows() {
            for z in model.h_self.hidden_preactivations(row.as_slice().unwrap()) {
                min_pre = min_pre.min(z.abs());
            }
        }
        let edge_in = crate::graphnet::edge_model_inputs(graph);
        for row in edge_in.rows() {
            for z in model.h_pair.hidden_preactivations(row.as_slice().unwrap()) {
                min_pre = min_pre.min(z.abs());
            }
        }
        min_pre < margin
    }

    #[test]
    fn training_gradient_matches_finite_differences() {
        let mut seed = 30;
        loop {
            seed += 1;
            let mut rng = derive_rng(seed, 8);
            let model = FlatHgn::init(2, 6, &mut rng);
            let graph = toy_graph(2, 2, seed + 1);
            if near_kink(&model, &graph, 2e-3) {
                continue;
            }
            let (_, grads) = hgn_batch_gradients(&model, &graph).unwrap();
            let objective = |flat: &[f64]| -> f64 {
                let mut m = model.clone();
                m.set_flat(flat).unwrap();
                let (loss, _) = hgn_batch_gradients(&m, &graph).unwrap();
                loss
            };
            let mut flat = model.flat();
            let eps = 1e-6;
            for i in 0..flat.len() {
                let orig = flat[i];
                flat[i] = orig + eps;
                let hi = objective(&flat);
                flat[i] = orig - eps;
                let lo = objective(&flat);
                flat[i] = orig;
                let fd = (hi - lo) / (2.0 * eps);
                if grads[i].abs().max(fd.abs()) < 1e-8 {
                    continue;
                }
                let scale = grads[i].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (grads[i] - fd).abs() / scale < 1e-3,
                    "param {i}: {} vs fd {fd}",
                    grads[i]
                );
            }
            break;
        }
    }

    #[test]
    fn training_is_deterministic() {
        let config = SimConfig {
            law: Law::Charge,
            n_bodies: 2,
            dim: 2,
            n_steps: 10,
            step_size: 0.001,
            seed: 77,
        };
        let ds = Dataset::generate(&config, 6).unwrap();
        let tc = TrainConfig {
            epochs: 2,
            batch_size: 4,
            hidden: 8,
            snapshots_per_sim: 5,
            seed: 3,
            ..Default::default()
        };
        let a = train_flathgn(&ds, &tc).unwrap();
        let b = train_flathgn(&ds, &tc).unwrap();
        assert_eq!(a.model.flat(), b.model.flat());
        assert!(a.final_test_loss.is_finite());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = derive_rng(9, 0);
        let model = FlatHgn::init(2, 8, &mut rng);
        let dir = std::env::temp_dir().join(format!("symdistill-hgn-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("hgn.ckpt");
        crate::graphnet::save_checkpoint(&path, &model.to_checkpoint(Some("charge".into())))
            .unwrap();
        let loaded = crate::graphnet::load_checkpoint(&path).unwrap();
        let restored = FlatHgn::from_checkpoint(&loaded).unwrap();
        assert_eq!(model.flat(), restored.flat());
        std::fs::remove_dir_all(&dir).ok();
    }
}
