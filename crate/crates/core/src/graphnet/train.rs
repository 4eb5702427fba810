//! Mini-batch Adam training of the graph network.

use super::{
    edge_inputs, evaluate, gn_forward, particle_snapshots, FeatureLayout, GnError, GnModel,
    GraphSnapshot, Variant, ALPHA2,
};
use crate::derive_rng;
use crate::nn::{adam_step, AdamState, GradTape, LrSchedule, NodeId};
use crate::sim::{Dataset, Split};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::rc::Rc;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Whole snapshots per mini-batch.
    pub batch_size: usize,
    pub hidden: usize,
    /// Snapshots subsampled evenly from each trajectory.
    pub snapshots_per_sim: usize,
    pub seed: u64,
    /// Random translation augmentation of all positions in a batch.
    pub augment: bool,
    /// Message regularization weight; `None` takes the variant default.
    pub alpha1: Option<f64>,
    pub alpha2: f64,
    pub lr_start: f64,
    pub lr_end: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 8,
            hidden: 300,
            snapshots_per_sim: 50,
            seed: 0,
            augment: true,
            alpha1: None,
            alpha2: ALPHA2,
            lr_start: 1e-3,
            lr_end: 1e-5,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean batch prediction loss during the epoch (with augmentation).
    pub train_lv: f64,
    /// Clean prediction loss on the held-out split.
    pub test_lv: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    pub model: GnModel,
    pub curve: Vec<EpochStats>,
    /// Clean prediction loss on the training split at the final weights.
    pub final_train_lv: f64,
    pub final_test_lv: f64,
}

/// Train a variant on a simulated dataset: subsample snapshots, then run
/// mini-batch Adam with the decaying schedule.
pub fn train(ds: &Dataset, variant: Variant, config: &TrainConfig) -> Result<TrainResult, GnError> {
    let layout = FeatureLayout::particles(ds.config.dim);
    let train_snaps = particle_snapshots(ds, Split::Train, config.snapshots_per_sim);
    let test_snaps = particle_snapshots(ds, Split::Test, config.snapshots_per_sim);
    let mut rng = derive_rng(config.seed, 100);
    let model = GnModel::init(variant, layout, config.hidden, &mut rng);
    train_on_snapshots(model, &train_snaps, &test_snaps, config)
}

/// Train an already-initialized model on prepared snapshots.
pub fn train_on_snapshots(
    mut model: GnModel,
    train_snaps: &[GraphSnapshot],
    test_snaps: &[GraphSnapshot],
    config: &TrainConfig,
) -> Result<TrainResult, GnError> {
    let mut rng = derive_rng(config.seed, 101);
    let alpha1 = config.alpha1.unwrap_or(model.variant.alpha1());
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
        let mut epoch_lv = 0.0;
        let mut batches = 0.0;
        for chunk in indices.chunks(config.batch_size) {
            let batch: Vec<&GraphSnapshot> = chunk.iter().map(|&i| &train_snaps[i]).collect();
            let mut merged = merge(&batch);
            if config.augment {
                let off = model.layout.position_offset;
                for d in 0..model.layout.dim {
                    let shift: f64 = StandardNormal.sample(&mut rng);
                    let shift = 3.0 * shift;
                    for v in merged.nodes.column_mut(off + d).iter_mut() {
                        *v += shift;
                    }
                }
            }
            let (loss, lv, grads) = batch_gradients(&model, &merged, alpha1, config.alpha2, &mut rng)?;
            if !loss.is_finite() {
                return Err(GnError::DivergedLoss { epoch, loss });
            }
            epoch_lv += lv;
            batches += 1.0;
            adam_step(&mut adam, &mut params, &grads)?;
            model.set_flat(&params)?;
        }
        let test_lv = evaluate(&model, test_snaps);
        curve.push(EpochStats {
            epoch,
            train_lv: epoch_lv / batches,
            test_lv,
        });
    }

    let final_train_lv = evaluate(&model, train_snaps);
    let final_test_lv = evaluate(&model, test_snaps);
    Ok(TrainResult {
        model,
        curve,
        final_train_lv,
        final_test_lv,
    })
}

/// Stack snapshots into one block-diagonal graph.
pub fn merge(snaps: &[&GraphSnapshot]) -> GraphSnapshot {
    let total_nodes: usize = snaps.iter().map(|s| s.n_nodes()).sum();
    let total_edges: usize = snaps.iter().map(|s| s.n_edges()).sum();
    let lv = snaps[0].nodes.ncols();
    let out = snaps[0].targets.ncols();
    let mut nodes = Array2::zeros((total_nodes, lv));
    let mut targets = Array2::zeros((total_nodes, out));
    let mut receivers = Vec::with_capacity(total_edges);
    let mut senders = Vec::with_capacity(total_edges);
    let any_masked = snaps.iter().any(|s| s.loss_nodes.is_some());
    let mut loss_nodes = Vec::new();
    let mut node_off = 0;
    for s in snaps {
        let n = s.n_nodes();
        nodes
            .slice_mut(ndarray::s![node_off..node_off + n, ..])
            .assign(&s.nodes);
        targets
            .slice_mut(ndarray::s![node_off..node_off + n, ..])
            .assign(&s.targets);
        receivers.extend(s.receivers.iter().map(|&r| r + node_off));
        senders.extend(s.senders.iter().map(|&x| x + node_off));
        if any_masked {
            match &s.loss_nodes {
                Some(list) => loss_nodes.extend(list.iter().map(|&i| i + node_off)),
                None => loss_nodes.extend(node_off..node_off + n),
            }
        }
        node_off += n;
    }
    GraphSnapshot {
        nodes,
        receivers,
        senders,
        targets,
        loss_nodes: if any_masked { Some(loss_nodes) } else { None },
    }
}

/// Build the taped loss for one merged batch and return
/// `(total loss, prediction loss, flat gradients)`.
pub(crate) fn batch_gradients(
    model: &GnModel,
    graph: &GraphSnapshot,
    alpha1: f64,
    alpha2: f64,
    rng: &mut impl Rng,
) -> Result<(f64, f64, Vec<f64>), GnError> {
    let mut tape = GradTape::new();
    let e_nodes = model.phi_e.leaf_on(&mut tape);
    let v_nodes = model.phi_v.leaf_on(&mut tape);

    let x = tape.leaf(graph.nodes.clone());
    let receivers = Rc::new(graph.receivers.clone());
    let senders = Rc::new(graph.senders.clone());
    let recv_feats = tape.gather_rows(x, receivers.clone());
    let send_feats = tape.gather_rows(x, senders);
    let edge_in = tape.concat_cols(recv_feats, send_feats);
    let raw = model.phi_e.forward_on(&mut tape, &e_nodes, edge_in);

    let msg_dim = model.message_dim();
    let n_edges = graph.n_edges();
    let (messages, l_e): (NodeId, Option<NodeId>) = match model.variant {
        Variant::Kl => {
            let mu = tape.slice_cols(raw, 0..msg_dim);
            let logvar = tape.slice_cols(raw, msg_dim..2 * msg_dim);
            let half_logvar = tape.scale(logvar, 0.5);
            let sigma = tape.exp(half_logvar);
            let eps_arr =
                Array2::from_shape_fn((n_edges, msg_dim), |_| StandardNormal.sample(rng));
            let eps = tape.leaf(eps_arr);
            let noise = tape.mul(sigma, eps);
            let msg = tape.add(mu, noise);
            // KL to the unit prior: mean over edges of
            // sum_j (mu^2 + sigma^2 - log sigma^2 - 1) / 2
            let mu2 = tape.mul(mu, mu);
            let sigma2 = tape.exp(logvar);
            let s = tape.add(mu2, sigma2);
            let s = tape.sub(s, logvar);
            let total = tape.sum_all(s);
            let scaled = tape.scale(total, 0.5 / n_edges as f64);
            let offset = tape.leaf_scalar(0.5 * msg_dim as f64);
            let kl = tape.sub(scaled, offset);
            (msg, Some(kl))
        }
        Variant::L1 => {
            let a = tape.abs(raw);
            let total = tape.sum_all(a);
            let l1 = tape.scale(total, 1.0 / n_edges as f64);
            (raw, Some(l1))
        }
        _ => (raw, None),
    };

    let n_nodes = graph.n_nodes();
    let agg = tape.scatter_add_rows(messages, receivers, n_nodes);
    let node_in = tape.concat_cols(x, agg);
    let pred = model.phi_v.forward_on(&mut tape, &v_nodes, node_in);

    let targets = tape.leaf(graph.targets.clone());
    let l_v = match &graph.loss_nodes {
        None => tape.mae_rows(pred, targets),
        Some(nodes) => {
            let idx = Rc::new(nodes.clone());
            let p = tape.gather_rows(pred, idx.clone());
            let t = tape.gather_rows(targets, idx);
            tape.mae_rows(p, t)
        }
    };

    let mut wrt = e_nodes.all();
    wrt.extend(v_nodes.all());
    let mut total = l_v;
    if let Some(l_e) = l_e {
        if alpha1 != 0.0 {
            let scaled = tape.scale(l_e, alpha1);
            total = tape.add(total, scaled);
        }
    }
    if alpha2 != 0.0 {
        let mut l_n: Option<NodeId> = None;
        for &p in &wrt {
            let sq = tape.mul(p, p);
            let s = tape.sum_all(sq);
            l_n = Some(match l_n {
                Some(acc) => tape.add(acc, s),
                None => s,
            });
        }
        let scaled = tape.scale(l_n.unwrap(), alpha2);
        total = tape.add(total, scaled);
    }

    let loss_value = tape.scalar(total);
    let lv_value = tape.scalar(l_v);
    let grads = tape.backward(total, &wrt)?;
    let flat: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
    Ok((loss_value, lv_value, flat))
}

/// Loss components of a batch at the current weights, computed without a
/// tape. For the KL variant the prediction loss uses one message sample
/// when `rng` is given, the mean path otherwise.
#[derive(Debug, Clone, Copy)]
pub struct LossBreakdown {
    pub l_v: f64,
    pub l_e: f64,
    pub l_n: f64,
    pub total: f64,
}

pub fn loss(
    model: &GnModel,
    batch: &[GraphSnapshot],
    mut rng: Option<&mut dyn rand::RngCore>,
    alpha1: Option<f64>,
    alpha2: f64,
) -> LossBreakdown {
    let alpha1 = alpha1.unwrap_or(model.variant.alpha1());
    let mut l_v_total = 0.0;
    let mut nodes = 0usize;
    let mut l_e_total = 0.0;
    let mut edges = 0usize;
    for snap in batch {
        let (pred, _) = match rng {
            Some(ref mut r) => gn_forward(model, snap, Some(&mut **r)),
            None => gn_forward(model, snap, None),
        };
        match &snap.loss_nodes {
            None => {
                l_v_total += (&pred - &snap.targets).mapv(f64::abs).sum();
                nodes += snap.n_nodes();
            }
            Some(list) => {
                for &i in list {
                    for (p, t) in pred.row(i).iter().zip(snap.targets.row(i)) {
                        l_v_total += (p - t).abs();
                    }
                    nodes += 1;
                }
            }
        }
        let raw = model.edge_outputs(snap);
        let msg_dim = model.message_dim();
        match model.variant {
            Variant::Kl => {
                for row in raw.rows() {
                    for j in 0..msg_dim {
                        let mu = row[j];
                        let logvar = row[msg_dim + j];
                        l_e_total += 0.5 * (mu * mu + logvar.exp() - logvar - 1.0);
                    }
                }
            }
            Variant::L1 => {
                l_e_total += raw.mapv(f64::abs).sum();
            }
            _ => {}
        }
        edges += snap.n_edges();
    }
    let l_v = l_v_total / nodes.max(1) as f64;
    let l_e = match model.variant {
        Variant::Standard | Variant::Bottleneck => 0.0,
        _ => l_e_total / edges.max(1) as f64,
    };
    let l_n: f64 = model.flat().iter().map(|w| w * w).sum();
    LossBreakdown {
        l_v,
        l_e,
        l_n,
        total: l_v + alpha1 * l_e + alpha2 * l_n,
    }
}

/// Fast access to edge-model inputs for probing and distillation.
pub fn edge_model_inputs(graph: &GraphSnapshot) -> Array2<f64> {
    edge_inputs(graph)
}
