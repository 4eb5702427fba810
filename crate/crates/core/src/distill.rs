//! End-to-end distillation: sample the learned internal functions,
//! regress symbolic expressions onto them, compose the expressions into a
//! standalone predictor, and refit its constants on the original data.

use crate::derive_rng;
use crate::flathgn::FlatHgn;
use crate::graphnet::{
    aggregate_messages, gn_forward, particle_snapshots, GnModel, GraphSnapshot,
};
use crate::nn::{adam_step, AdamState, GradTape, LrSchedule, MlpParams};
use crate::opt::{nelder_mead, NelderMeadOptions};
use crate::probe::significant_components;
use crate::sim::{Dataset, Split};
use crate::symreg::{
    self, evolve, select_model, Expr, FrontRow, GpConfig, ParetoFront, SrDataset, SrError,
};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::rc::Rc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("NonFiniteComposite: composed predictor is non-finite on {percent:.2}% of rows")]
    NonFiniteComposite { percent: f64 },
    #[error(transparent)]
    Sr(#[from] SrError),
    #[error(transparent)]
    Gn(#[from] crate::graphnet::GnError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

/// Engineered edge features plus recorded message targets: one row per
/// sampled (snapshot, edge) pair.
#[derive(Debug, Clone)]
pub struct EdgeSampleTable {
    pub var_names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    /// `(message component, values)`, most significant component first.
    pub targets: Vec<(usize, Vec<f64>)>,
}

impl EdgeSampleTable {
    /// Regression dataset for the target at the given significance rank.
    pub fn sr_dataset(&self, rank: usize) -> SrDataset {
        SrDataset::new(
            self.var_names.clone(),
            self.columns.clone(),
            self.targets[rank].1.clone(),
        )
    }

    pub fn n_rows(&self) -> usize {
        self.targets.first().map_or(0, |(_, v)| v.len())
    }
}

fn edge_feature_names(dim: usize, with_momenta: bool) -> Vec<String> {
    let mut names: Vec<String> = ["m1", "m2", "q1", "q2"].iter().map(|s| s.to_string()).collect();
    let axes = ["dx", "dy", "dz"];
    for axis in axes.iter().take(dim) {
        names.push(axis.to_string());
    }
    names.push("r".to_string());
    if with_momenta {
        let p_axes = ["px", "py", "pz"];
        for suffix in ["1", "2"] {
            for axis in p_axes.iter().take(dim) {
                names.push(format!("{axis}{suffix}"));
            }
        }
    }
    names
}

/// Engineered features for one edge, given receiver and sender feature
/// rows laid out as (position, velocity-or-momentum, mass, charge).
fn edge_features(
    recv: ndarray::ArrayView1<f64>,
    send: ndarray::ArrayView1<f64>,
    dim: usize,
    with_momenta: bool,
) -> Vec<f64> {
    let mut row = vec![recv[2 * dim], send[2 * dim], recv[2 * dim + 1], send[2 * dim + 1]];
    let mut r2 = 0.0;
    for d in 0..dim {
        let delta = send[d] - recv[d];
        row.push(delta);
        r2 += delta * delta;
    }
    row.push(r2.sqrt());
    if with_momenta {
        for d in 0..dim {
            row.push(recv[dim + d]);
        }
        for d in 0..dim {
            row.push(send[dim + d]);
        }
    }
    row
}

/// Record engineered inputs and the significant message outputs for `k`
/// uniformly random (snapshot, edge) pairs from the training split.
pub fn record_edge_samples(
    model: &GnModel,
    ds: &Dataset,
    per_sim: usize,
    k: usize,
    seed: u64,
) -> EdgeSampleTable {
    let snapshots = particle_snapshots(ds, Split::Train, per_sim);
    record_edge_samples_from_snapshots(model, &snapshots, k, seed)
}

pub fn record_edge_samples_from_snapshots(
    model: &GnModel,
    snapshots: &[GraphSnapshot],
    k: usize,
    seed: u64,
) -> EdgeSampleTable {
    let mut rng = derive_rng(seed, 400);
    let dim = model.layout.dim;
    let lv = model.layout.n_features;
    let names = edge_feature_names(dim, false);
    let mut columns = vec![Vec::with_capacity(k); names.len()];
    let mut edge_rows = Array2::zeros((k, 2 * lv));
    for i in 0..k {
        let snap = &snapshots[rng.random_range(0..snapshots.len())];
        let e = rng.random_range(0..snap.n_edges());
        let (r, s) = (snap.receivers[e], snap.senders[e]);
        let recv = snap.nodes.row(r);
        let send = snap.nodes.row(s);
        edge_rows.row_mut(i).slice_mut(ndarray::s![..lv]).assign(&recv);
        edge_rows.row_mut(i).slice_mut(ndarray::s![lv..]).assign(&send);
        for (c, v) in columns.iter_mut().zip(edge_features(recv, send, dim, false)) {
            c.push(v);
        }
    }
    let raw = model.phi_e.forward_batch(&edge_rows);
    let (ranked, _) = significant_components(model.variant, &raw);
    let msg_dim = model.message_dim();
    let n_targets = dim.min(msg_dim);
    let targets = ranked
        .iter()
        .take(n_targets)
        .map(|&comp| (comp, raw.column(comp).to_vec()))
        .collect();
    EdgeSampleTable {
        var_names: names,
        columns,
        targets,
    }
}

/// Pairwise-energy samples from a Hamiltonian model: engineered features
/// plus momenta, with the scalar pair energy as the single target.
pub fn record_pair_energy_samples(
    model: &FlatHgn,
    ds: &Dataset,
    per_sim: usize,
    k: usize,
    seed: u64,
) -> EdgeSampleTable {
    let snapshots = crate::flathgn::canonical_snapshots(ds, Split::Test, per_sim);
    let mut rng = derive_rng(seed, 401);
    let dim = model.layout.dim;
    let lv = model.layout.n_features;
    let names = edge_feature_names(dim, true);
    let mut columns = vec![Vec::with_capacity(k); names.len()];
    let mut edge_rows = Array2::zeros((k, 2 * lv));
    for i in 0..k {
        let snap = &snapshots[rng.random_range(0..snapshots.len())];
        let e = rng.random_range(0..snap.n_edges());
        let (r, s) = (snap.receivers[e], snap.senders[e]);
        let recv = snap.nodes.row(r);
        let send = snap.nodes.row(s);
        edge_rows.row_mut(i).slice_mut(ndarray::s![..lv]).assign(&recv);
        edge_rows.row_mut(i).slice_mut(ndarray::s![lv..]).assign(&send);
        for (c, v) in columns.iter_mut().zip(edge_features(recv, send, dim, true)) {
            c.push(v);
        }
    }
    let values = model.h_pair.forward_batch(&edge_rows);
    EdgeSampleTable {
        var_names: names,
        columns,
        targets: vec![(0, values.column(0).to_vec())],
    }
}

/// The outcome of one symbolic regression: the whole front plus the
/// Occam-selected entry.
#[derive(Debug, Clone, Serialize)]
pub struct DistillReport {
    pub target: String,
    pub front: Vec<FrontRow>,
    pub selected_infix: String,
    pub selected_complexity: usize,
    pub selected_mae: f64,
    #[serde(skip)]
    pub selected: Expr,
    #[serde(skip)]
    pub var_names: Vec<String>,
}

/// Run symbolic regression on the most significant recorded message
/// component and select a model from the front.
pub fn distill_edge(table: &EdgeSampleTable, config: &GpConfig) -> Result<DistillReport, SrError> {
    distill_edge_rank(table, 0, config)
}

/// Occam selection, or the only entry when one expression dominates the
/// whole front (a perfect fit at the lowest complexity compacts the front
/// to a single row).
fn select_or_single(front: &ParetoFront) -> Result<crate::symreg::FrontEntry, SrError> {
    match select_model(front) {
        Ok(e) => Ok(e),
        Err(SrError::InsufficientFront { len: 1 }) => Ok(front.entries().remove(0)),
        Err(e) => Err(e),
    }
}

pub fn distill_edge_rank(
    table: &EdgeSampleTable,
    rank: usize,
    config: &GpConfig,
) -> Result<DistillReport, SrError> {
    let data = table.sr_dataset(rank);
    let front = evolve(&data, config)?;
    let selected = select_or_single(&front)?;
    Ok(DistillReport {
        target: format!("phi_e_{}", rank + 1),
        front: front.to_rows(&data.var_names),
        selected_infix: selected.expr.to_infix(&data.var_names),
        selected_complexity: selected.complexity,
        selected_mae: selected.mae,
        selected: selected.expr,
        var_names: data.var_names.clone(),
    })
}

fn node_feature_names(dim: usize, n_msgs: usize) -> Vec<String> {
    let axes = ["x", "y", "z"];
    let mut names: Vec<String> = axes.iter().take(dim).map(|s| s.to_string()).collect();
    let v_axes = ["vx", "vy", "vz"];
    names.extend(v_axes.iter().take(dim).map(|s| s.to_string()));
    names.push("m".to_string());
    names.push("q".to_string());
    for i in 0..n_msgs {
        names.push(format!("e{}", i + 1));
    }
    names
}

/// Symbolic fit of one output component of the node model. Inputs are the
/// node features and the summed significant messages; the target is the
/// node model's own output.
pub fn distill_node(
    model: &GnModel,
    ds: &Dataset,
    per_sim: usize,
    k: usize,
    seed: u64,
    output_component: usize,
    config: &GpConfig,
) -> Result<DistillReport, SrError> {
    let snapshots = particle_snapshots(ds, Split::Train, per_sim);
    let n_sig = model.layout.dim.min(model.message_dim());
    distill_node_components(model, &snapshots, k, seed, output_component, n_sig, config)
}

pub fn distill_node_components(
    model: &GnModel,
    snapshots: &[GraphSnapshot],
    k: usize,
    seed: u64,
    output_component: usize,
    n_components: usize,
    config: &GpConfig,
) -> Result<DistillReport, SrError> {
    let mut rng = derive_rng(seed, 402);
    let dim = model.layout.dim;
    let msg_dim = model.message_dim();
    let n_sig = n_components.clamp(1, msg_dim);

    // rank components on a sample of edges
    let sample_table = record_edge_samples_from_snapshots(model, snapshots, k.min(2000), seed);
    let sig: Vec<usize> = sample_table.targets.iter().map(|(c, _)| *c).collect();

    let names = node_feature_names(dim, n_sig);
    let mut columns = vec![Vec::with_capacity(k); names.len()];
    let mut target = Vec::with_capacity(k);
    for _ in 0..k {
        let snap = &snapshots[rng.random_range(0..snapshots.len())];
        let node = rng.random_range(0..snap.n_nodes());
        let (pred, messages) = gn_forward(model, snap, None);
        let agg = aggregate_messages(&messages, &snap.receivers, snap.n_nodes());
        let mut col = 0;
        for d in 0..dim {
            columns[col].push(snap.nodes[(node, d)]);
            col += 1;
        }
        for d in 0..dim {
            columns[col].push(snap.nodes[(node, dim + d)]);
            col += 1;
        }
        columns[col].push(snap.nodes[(node, 2 * dim)]);
        col += 1;
        columns[col].push(snap.nodes[(node, 2 * dim + 1)]);
        col += 1;
        for &comp in sig.iter().take(n_sig) {
            columns[col].push(agg[(node, comp)]);
            col += 1;
        }
        target.push(pred[(node, output_component)]);
    }
    let data = SrDataset::new(names, columns, target);
    let front = evolve(&data, config)?;
    let selected = select_or_single(&front)?;
    Ok(DistillReport {
        target: format!("phi_v_{output_component}"),
        front: front.to_rows(&data.var_names),
        selected_infix: selected.expr.to_infix(&data.var_names),
        selected_complexity: selected.complexity,
        selected_mae: selected.mae,
        selected: selected.expr,
        var_names: data.var_names.clone(),
    })
}

/// A fully symbolic replacement for the graph network: edge expressions
/// produce per-edge values that are summed per receiver and fed with the
/// node features into the node expressions.
#[derive(Debug, Clone)]
pub struct SymbolicModel {
    pub dim: usize,
    /// Message components the node expressions consume, in rank order.
    pub components: Vec<usize>,
    pub edge_exprs: Vec<Expr>,
    pub node_exprs: Vec<Expr>,
    pub edge_vars: Vec<String>,
    pub node_vars: Vec<String>,
    pub train_mae: f64,
    pub test_mae: f64,
}

impl SymbolicModel {
    /// Evaluate on one snapshot without any neural component.
    pub fn predict(&self, snap: &GraphSnapshot) -> Result<Array2<f64>, SrError> {
        let dim = self.dim;
        let n = snap.n_nodes();
        let mut sums = Array2::zeros((n, self.edge_exprs.len()));
        for e in 0..snap.n_edges() {
            let recv = snap.nodes.row(snap.receivers[e]);
            let send = snap.nodes.row(snap.senders[e]);
            let feats = edge_features(recv, send, dim, false);
            for (j, expr) in self.edge_exprs.iter().enumerate() {
                sums[(snap.receivers[e], j)] += symreg::eval_expr(expr, &feats)?;
            }
        }
        let mut pred = Array2::zeros((n, self.node_exprs.len()));
        for i in 0..n {
            let mut feats: Vec<f64> = Vec::with_capacity(2 * dim + 2 + self.edge_exprs.len());
            for d in 0..dim {
                feats.push(snap.nodes[(i, d)]);
            }
            for d in 0..dim {
                feats.push(snap.nodes[(i, dim + d)]);
            }
            feats.push(snap.nodes[(i, 2 * dim)]);
            feats.push(snap.nodes[(i, 2 * dim + 1)]);
            for j in 0..self.edge_exprs.len() {
                feats.push(sums[(i, j)]);
            }
            for (c, expr) in self.node_exprs.iter().enumerate() {
                pred[(i, c)] = symreg::eval_expr(expr, &feats)?;
            }
        }
        Ok(pred)
    }

    /// Mean over nodes of the l1 prediction error, the same metric the
    /// graph network reports.
    pub fn mae(&self, snapshots: &[GraphSnapshot]) -> Result<f64, SrError> {
        let mut total = 0.0;
        let mut count = 0usize;
        for snap in snapshots {
            let pred = self.predict(snap)?;
            for (p, t) in pred.rows().into_iter().zip(snap.targets.rows()) {
                for (a, b) in p.iter().zip(t) {
                    let d = (a - b).abs();
                    total += if d.is_finite() { d } else { f64::INFINITY };
                }
            }
            count += snap.n_nodes();
        }
        Ok(total / count.max(1) as f64)
    }

    fn constants(&self) -> Vec<f64> {
        let mut theta = Vec::new();
        for e in self.edge_exprs.iter().chain(&self.node_exprs) {
            theta.extend(e.constants());
        }
        theta
    }

    fn set_constants(&mut self, theta: &[f64]) {
        let mut off = 0;
        for e in self.edge_exprs.iter_mut().chain(self.node_exprs.iter_mut()) {
            let n = e.constants().len();
            e.set_constants(&theta[off..off + n]);
            off += n;
        }
    }
}

/// Substitute the distilled expressions for the network functions and
/// refit every constant jointly on the training data.
pub fn compose_and_refit(
    edge_reports: &[DistillReport],
    node_reports: &[DistillReport],
    components: &[usize],
    train: &[GraphSnapshot],
    test: &[GraphSnapshot],
    dim: usize,
    seed: u64,
) -> Result<SymbolicModel, DistillError> {
    let mut model = SymbolicModel {
        dim,
        components: components.to_vec(),
        edge_exprs: edge_reports.iter().map(|r| r.selected.clone()).collect(),
        node_exprs: node_reports.iter().map(|r| r.selected.clone()).collect(),
        edge_vars: edge_reports
            .first()
            .map(|r| r.var_names.clone())
            .unwrap_or_default(),
        node_vars: node_reports
            .first()
            .map(|r| r.var_names.clone())
            .unwrap_or_default(),
        train_mae: f64::INFINITY,
        test_mae: f64::INFINITY,
    };

    // reject composites that are non-finite on more than 1% of nodes
    let mut non_finite = 0usize;
    let mut rows = 0usize;
    for snap in train {
        let pred = model.predict(snap)?;
        non_finite += pred.iter().filter(|v| !v.is_finite()).count();
        rows += pred.len();
    }
    let percent = 100.0 * non_finite as f64 / rows.max(1) as f64;
    if percent > 1.0 {
        return Err(DistillError::NonFiniteComposite { percent });
    }

    // joint constant refit on the training split
    let theta0 = model.constants();
    let before = model.mae(train)?;
    if !theta0.is_empty() {
        let objective = |theta: &[f64]| -> f64 {
            let mut m = model.clone();
            m.set_constants(theta);
            m.mae(train).unwrap_or(f64::INFINITY)
        };
        let opts = NelderMeadOptions {
            max_iters: 150 * theta0.len(),
            ..Default::default()
        };
        let mut rng = derive_rng(seed, 403);
        let mut best_theta = theta0.clone();
        let mut best_val = before;
        for restart in 0..4 {
            let start: Vec<f64> = if restart == 0 {
                theta0.clone()
            } else {
                theta0
                    .iter()
                    .map(|v| {
                        let jitter: f64 = StandardNormal.sample(&mut rng);
                        v * f64::exp(0.3 * jitter)
                    })
                    .collect()
            };
            let (theta, val) = nelder_mead(objective, &start, &opts);
            if val < best_val {
                best_val = val;
                best_theta = theta;
            }
        }
        model.set_constants(&best_theta);
    }
    model.train_mae = model.mae(train)?;
    model.test_mae = model.mae(test)?;
    debug_assert!(model.train_mae <= before + 1e-12);
    Ok(model)
}

/// Direct symbolic regression on raw flattened particle features, the
/// baseline the factorized pipeline is compared against.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineReport {
    pub front: Vec<FrontRow>,
    pub best_mae: f64,
    pub target_mad: f64,
}

pub fn pure_sr_baseline(
    ds: &Dataset,
    per_sim: usize,
    k: usize,
    seed: u64,
    target_body: usize,
    target_component: usize,
    config: &GpConfig,
) -> Result<BaselineReport, SrError> {
    let snapshots = particle_snapshots(ds, Split::Train, per_sim);
    let dim = ds.config.dim;
    let n = ds.config.n_bodies;
    let axes = ["x", "y", "z"];
    let v_axes = ["vx", "vy", "vz"];
    let mut names = Vec::new();
    for b in 1..=n {
        names.push(format!("m{b}"));
        names.push(format!("q{b}"));
        for a in axes.iter().take(dim) {
            names.push(format!("{a}{b}"));
        }
        for a in v_axes.iter().take(dim) {
            names.push(format!("{a}{b}"));
        }
    }
    let mut rng = derive_rng(seed, 404);
    let mut columns = vec![Vec::with_capacity(k); names.len()];
    let mut target = Vec::with_capacity(k);
    for _ in 0..k {
        let snap = &snapshots[rng.random_range(0..snapshots.len())];
        let mut col = 0;
        for b in 0..n {
            columns[col].push(snap.nodes[(b, 2 * dim)]);
            col += 1;
            columns[col].push(snap.nodes[(b, 2 * dim + 1)]);
            col += 1;
            for d in 0..dim {
                columns[col].push(snap.nodes[(b, d)]);
                col += 1;
            }
            for d in 0..dim {
                columns[col].push(snap.nodes[(b, dim + d)]);
                col += 1;
            }
        }
        target.push(snap.targets[(target_body, target_component)]);
    }
    let data = SrDataset::new(names, columns, target);
    let front = evolve(&data, config)?;
    let best_mae = front.best_mae().unwrap_or(f64::INFINITY);
    let target_mad = symreg::constant_baseline(&data);
    Ok(BaselineReport {
        front: front.to_rows(&data.var_names),
        best_mae,
        target_mad,
    })
}

/// The nested scalar model for the high-dimensional factorization
/// example: `z = f(sum_j g(x_j))` over 100-element series of 5-vectors.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub g: MlpParams,
    pub f: MlpParams,
    /// Target standardization used during training.
    pub z_mean: f64,
    pub z_std: f64,
}

/// The true inner function of the generator.
pub fn toy_true_g(x: &[f64]) -> f64 {
    x[2].exp() + (2.0 * x[0]).cos()
}

/// Generate `n` series and their scalar targets.
pub fn toy_generate(n: usize, rng: &mut impl Rng) -> (Vec<Array2<f64>>, Vec<f64>) {
    let mut xs = Vec::with_capacity(n);
    let mut zs = Vec::with_capacity(n);
    for _ in 0..n {
        let x = Array2::from_shape_fn((100, 5), |_| StandardNormal.sample(rng));
        let y: f64 = x.rows().into_iter().map(|r| toy_true_g(r.as_slice().unwrap())).sum();
        xs.push(x);
        zs.push(y * y);
    }
    (xs, zs)
}

#[derive(Debug, Serialize)]
pub struct ToyReport {
    /// MAE of the trained nested model on held-out z, in raw z units.
    pub test_mae_z: f64,
    pub g_front: Vec<FrontRow>,
    pub g_selected: String,
    /// Relative MAE of the distilled inner function against the true one
    /// after affine alignment.
    pub g_aligned_rel_mae: f64,
    pub f_selected: String,
}

/// Train the nested model on generated data, distill both learned
/// functions, and verify the inner function against the generator.
pub fn toy_factorization_demo(seed: u64) -> Result<ToyReport, DistillError> {
    let mut rng = derive_rng(seed, 405);
    let (train_x, train_z) = toy_generate(1200, &mut rng);
    let (test_x, test_z) = toy_generate(300, &mut rng);

    let z_mean = train_z.iter().sum::<f64>() / train_z.len() as f64;
    let z_var =
        train_z.iter().map(|z| (z - z_mean) * (z - z_mean)).sum::<f64>() / train_z.len() as f64;
    let z_std = z_var.sqrt().max(1e-12);

    let hidden = 64;
    let mut model = ToyModel {
        g: MlpParams::init(&[5, hidden, hidden, 1], &mut rng),
        f: MlpParams::init(&[1, hidden, hidden, 1], &mut rng),
        z_mean,
        z_std,
    };

    let epochs = 40;
    let batch = 32;
    let n_batches = train_x.len().div_ceil(batch);
    let mut params: Vec<f64> = model.g.flat();
    params.extend(model.f.flat());
    let mut adam = AdamState::new(params.len(), LrSchedule::decaying(epochs * n_batches));
    let g_len = model.g.n_params();
    let mut indices: Vec<usize> = (0..train_x.len()).collect();

    for _ in 0..epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(batch) {
            let b = chunk.len();
            let mut stacked = Array2::zeros((b * 100, 5));
            let mut series_of_row = Vec::with_capacity(b * 100);
            let mut targets = Array2::zeros((b, 1));
            for (bi, &i) in chunk.iter().enumerate() {
                stacked
                    .slice_mut(ndarray::s![bi * 100..(bi + 1) * 100, ..])
                    .assign(&train_x[i]);
                series_of_row.extend(std::iter::repeat_n(bi, 100));
                targets[(bi, 0)] = (train_z[i] - z_mean) / z_std;
            }
            let mut tape = GradTape::new();
            let g_nodes = model.g.leaf_on(&mut tape);
            let f_nodes = model.f.leaf_on(&mut tape);
            let x = tape.leaf(stacked);
            let g_out = model.g.forward_on(&mut tape, &g_nodes, x);
            let summed = tape.scatter_add_rows(g_out, Rc::new(series_of_row), b);
            let pred = model.f.forward_on(&mut tape, &f_nodes, summed);
            let t = tape.leaf(targets);
            let loss = tape.mae_rows(pred, t);
            let mut wrt = g_nodes.all();
            wrt.extend(f_nodes.all());
            let grads = tape.backward(loss, &wrt)?;
            let flat: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
            adam_step(&mut adam, &mut params, &flat)?;
            model.g.set_flat(&params[..g_len])?;
            model.f.set_flat(&params[g_len..])?;
        }
    }

    // held-out error in raw z units
    let mut test_mae = 0.0;
    for (x, z) in test_x.iter().zip(&test_z) {
        let g_vals = model.g.forward_batch(x);
        let total = g_vals.sum();
        let f_in = Array2::from_elem((1, 1), total);
        let pred = model.f.forward_batch(&f_in)[(0, 0)] * z_std + z_mean;
        test_mae += (pred - z).abs();
    }
    test_mae /= test_z.len() as f64;

    // distill g over fresh input samples
    let n_rows = 2000;
    let mut g_inputs = Array2::zeros((n_rows, 5));
    for mut row in g_inputs.rows_mut() {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    let g_vals = model.g.forward_batch(&g_inputs);
    let g_names: Vec<String> = (1..=5).map(|i| format!("x{i}")).collect();
    let g_cols: Vec<Vec<f64>> = (0..5).map(|j| g_inputs.column(j).to_vec()).collect();
    let g_data = SrDataset::new(g_names.clone(), g_cols, g_vals.column(0).to_vec());
    let g_config = GpConfig {
        population: 1000,
        generations: 150,
        max_size: 25,
        seed: seed ^ 0x1001,
        ..Default::default()
    };
    let g_front = evolve(&g_data, &g_config)?;
    let g_selected = select_model(&g_front)?;

    // align the distilled g to the true generator by OLS on fresh rows
    let mut align_inputs = Array2::zeros((1000, 5));
    for mut row in align_inputs.rows_mut() {
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
    let mut pred_vals = Vec::with_capacity(1000);
    let mut true_vals = Vec::with_capacity(1000);
    for row in align_inputs.rows() {
        let feats: Vec<f64> = row.to_vec();
        pred_vals.push(symreg::eval_expr(&g_selected.expr, &feats)?);
        true_vals.push(toy_true_g(&feats));
    }
    let g_aligned_rel_mae = affine_aligned_rel_mae(&pred_vals, &true_vals);

    // distill f over the summed-latent range seen in training
    let mut f_inputs = Vec::with_capacity(train_x.len());
    for x in train_x.iter().take(500) {
        f_inputs.push(model.g.forward_batch(x).sum());
    }
    let f_matrix =
        Array2::from_shape_vec((f_inputs.len(), 1), f_inputs.clone()).expect("shape");
    let f_vals = model.f.forward_batch(&f_matrix);
    let f_data = SrDataset::new(
        vec!["s".to_string()],
        vec![f_inputs],
        f_vals.column(0).to_vec(),
    );
    let f_config = GpConfig {
        population: 500,
        generations: 80,
        seed: seed ^ 0x1002,
        ..Default::default()
    };
    let f_front = evolve(&f_data, &f_config)?;
    let f_selected = select_model(&f_front)?;

    Ok(ToyReport {
        test_mae_z: test_mae,
        g_front: g_front.to_rows(&g_names),
        g_selected: g_selected.expr.to_infix(&g_names),
        g_aligned_rel_mae,
        f_selected: f_selected.expr.to_infix(&["s".to_string()]),
    })
}

/// Fit `a * pred + b` to the reference by least squares and return the
/// aligned MAE relative to the reference's standard deviation.
pub fn affine_aligned_rel_mae(pred: &[f64], reference: &[f64]) -> f64 {
    let n = pred.len() as f64;
    let mean_p = pred.iter().sum::<f64>() / n;
    let mean_r = reference.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_p = 0.0;
    let mut var_r = 0.0;
    for (p, r) in pred.iter().zip(reference) {
        cov += (p - mean_p) * (r - mean_r);
        var_p += (p - mean_p) * (p - mean_p);
        var_r += (r - mean_r) * (r - mean_r);
    }
    let a = if var_p > 0.0 { cov / var_p } else { 0.0 };
    let b = mean_r - a * mean_p;
    let mae: f64 = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (a * p + b - r).abs())
        .sum::<f64>()
        / n;
    mae / (var_r / n).sqrt().max(1e-12)
}

/// Composite front utilities for reporting.
pub fn front_with_placeholder(front: &ParetoFront, names: &[String]) -> Vec<FrontRow> {
    front.to_rows(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphnet::Variant;
    use crate::sim::{Law, SimConfig};

    fn tiny_setup() -> (Dataset, GnModel) {
        let config = SimConfig {
            law: Law::Spring,
            n_bodies: 3,
            dim: 2,
            n_steps: 20,
            step_size: 0.01,
            seed: 5,
        };
        let ds = Dataset::generate(&config, 10).unwrap();
        let mut rng = derive_rng(8, 0);
        let model = GnModel::init(
            Variant::Bottleneck,
            crate::graphnet::FeatureLayout::particles(2),
            16,
            &mut rng,
        );
        (ds, model)
    }

    #[test]
    fn edge_samples_have_consistent_geometry() {
        let (ds, model) = tiny_setup();
        let table = record_edge_samples(&model, &ds, 5, 500, 3);
        assert_eq!(table.n_rows(), 500);
        let names = &table.var_names;
        let dx = names.iter().position(|n| n == "dx").unwrap();
        let dy = names.iter().position(|n| n == "dy").unwrap();
        let r = names.iter().position(|n| n == "r").unwrap();
        for i in 0..table.n_rows() {
            let expect =
                (table.columns[dx][i].powi(2) + table.columns[dy][i].powi(2)).sqrt();
            assert_eq!(table.columns[r][i], expect);
        }
        // bottleneck records exactly D = 2 message columns
        assert_eq!(table.targets.len(), 2);
    }

    #[test]
    fn edge_samples_are_deterministic() {
        let (ds, model) = tiny_setup();
        let a = record_edge_samples(&model, &ds, 5, 100, 9);
        let b = record_edge_samples(&model, &ds, 5, 100, 9);
        assert_eq!(a.columns, b.columns);
        assert_eq!(a.targets, b.targets);
    }

    #[test]
    fn delta_is_sender_minus_receiver() {
        let (ds, model) = tiny_setup();
        let snapshots = particle_snapshots(&ds, Split::Train, 5);
        let snap = &snapshots[0];
        let recv = snap.nodes.row(snap.receivers[0]);
        let send = snap.nodes.row(snap.senders[0]);
        let feats = super::edge_features(recv, send, 2, false);
        assert_eq!(feats[4], send[0] - recv[0]);
        assert_eq!(feats[5], send[1] - recv[1]);
        drop(model);
    }

    #[test]
    fn constant_node_model_distills_to_constant() {
        let (ds, mut model) = tiny_setup();
        for w in model.phi_v.weights.iter_mut() {
            w.fill(0.0);
        }
        for b in model.phi_v.biases.iter_mut() {
            b.fill(0.0);
        }
        model.phi_v.biases[2][0] = 1.25;
        let config = GpConfig {
            population: 100,
            generations: 10,
            seed: 2,
            ..Default::default()
        };
        let report = distill_node(&model, &ds, 5, 200, 1, 0, &config).unwrap();
        assert_eq!(report.selected_complexity, 1);
        assert!(report.selected_mae < 1e-12);
        assert!((symreg::eval_expr(&report.selected, &vec![0.0; 8]).unwrap() - 1.25).abs() < 1e-9);
    }

    #[test]
    fn toy_generator_values() {
        assert_eq!(toy_true_g(&[0.0, 0.0, 0.0, 0.0, 0.0]), 2.0);
        // all-zero series of length 100: z = (100 * 2)^2
        let x = Array2::zeros((100, 5));
        let y: f64 = x
            .rows()
            .into_iter()
            .map(|r| toy_true_g(r.as_slice().unwrap()))
            .sum();
        assert_eq!(y * y, 40000.0);
    }

    #[test]
    fn affine_alignment_recovers_exact_affine_images() {
        let reference: Vec<f64> = (0..100).map(|i| (i as f64) * 0.1 - 5.0).collect();
        let pred: Vec<f64> = reference.iter().map(|r| 3.0 * r + 7.0).collect();
        // pred is an affine image, so alignment should be exact
        assert!(affine_aligned_rel_mae(&pred, &reference) < 1e-12);
    }

    #[test]
    fn composite_of_known_expressions_predicts() {
        let (ds, _) = tiny_setup();
        let snapshots = particle_snapshots(&ds, Split::Train, 5);
        // hand-built symbolic model: edge value = dx, node output = e1
        let edge_report = DistillReport {
            target: "phi_e_1".into(),
            front: vec![],
            selected_infix: "dx".into(),
            selected_complexity: 1,
            selected_mae: 0.0,
            selected: Expr::Var(4),
            var_names: edge_feature_names(2, false),
        };
        let node_report = DistillReport {
            target: "phi_v_0".into(),
            front: vec![],
            selected_infix: "e1".into(),
            selected_complexity: 1,
            selected_mae: 0.0,
            selected: Expr::Var(6),
            var_names: node_feature_names(2, 1),
        };
        let model = SymbolicModel {
            dim: 2,
            components: vec![0],
            edge_exprs: vec![edge_report.selected.clone()],
            node_exprs: vec![node_report.selected.clone()],
            edge_vars: edge_report.var_names.clone(),
            node_vars: node_report.var_names.clone(),
            train_mae: 0.0,
            test_mae: 0.0,
        };
        let snap = &snapshots[0];
        let pred = model.predict(snap).unwrap();
        // node 0 output = sum over senders of (x_s - x_0)
        let expect: f64 = (1..3).map(|s| snap.nodes[(s, 0)] - snap.nodes[(0, 0)]).sum();
        assert!((pred[(0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn refit_never_hurts_training_mae() {
        let (ds, _) = tiny_setup();
        let train = particle_snapshots(&ds, Split::Train, 5);
        let test = particle_snapshots(&ds, Split::Test, 5);
        // edge value = 1.3 * dx, node output = 0.9 * e1 : refit should tune
        // the constants toward the data
        let edge = DistillReport {
            target: "phi_e_1".into(),
            front: vec![],
            selected_infix: String::new(),
            selected_complexity: 3,
            selected_mae: 0.0,
            selected: Expr::bin(
                crate::symreg::BinOp::Mul,
                Expr::Const(1.3),
                Expr::Var(4),
            ),
            var_names: edge_feature_names(2, false),
        };
        let node = DistillReport {
            target: "phi_v_0".into(),
            front: vec![],
            selected_infix: String::new(),
            selected_complexity: 3,
            selected_mae: 0.0,
            selected: Expr::bin(
                crate::symreg::BinOp::Mul,
                Expr::Const(0.9),
                Expr::Var(6),
            ),
            var_names: node_feature_names(2, 1),
        };
        let before = {
            let m = SymbolicModel {
                dim: 2,
                components: vec![0],
                edge_exprs: vec![edge.selected.clone()],
                node_exprs: vec![node.selected.clone()],
                edge_vars: edge.var_names.clone(),
                node_vars: node.var_names.clone(),
                train_mae: 0.0,
                test_mae: 0.0,
            };
            m.mae(&train).unwrap()
        };
        let node_reports = vec![node];
        let edge_reports = vec![edge];
        let refit =
            compose_and_refit(&edge_reports, &node_reports, &[0], &train, &test, 2, 1).unwrap();
        assert!(refit.train_mae <= before + 1e-12);
        assert!(refit.test_mae.is_finite());
    }

    #[test]
    fn composite_with_log_of_negative_is_rejected() {
        let (ds, _) = tiny_setup();
        let train = particle_snapshots(&ds, Split::Train, 5);
        let test = particle_snapshots(&ds, Split::Test, 5);
        // log(dx) is non-finite whenever dx <= 0, which is about half the
        // edges
        let edge = DistillReport {
            target: "phi_e_1".into(),
            front: vec![],
            selected_infix: String::new(),
            selected_complexity: 4,
            selected_mae: 0.0,
            selected: Expr::un(crate::symreg::UnOp::Log, Expr::Var(4)),
            var_names: edge_feature_names(2, false),
        };
        let node = DistillReport {
            target: "phi_v_0".into(),
            front: vec![],
            selected_infix: String::new(),
            selected_complexity: 1,
            selected_mae: 0.0,
            selected: Expr::Var(6),
            var_names: node_feature_names(2, 1),
        };
        let err = compose_and_refit(&[edge], &[node], &[0], &train, &test, 2, 1).unwrap_err();
        assert!(matches!(err, DistillError::NonFiniteComposite { .. }));
    }
}
