//! Message-passing graph network: edge model, sum aggregation, node model,
//! with four training variants that differ in how the message space is
//! constrained (none, bottleneck width, L1 penalty, KL penalty).

mod checkpoint;
mod train;


pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointKind};
pub use train::{
    edge_model_inputs, loss, merge, train, train_on_snapshots, EpochStats, LossBreakdown,
    TrainConfig, TrainResult,
};

use crate::nn::{MlpParams, NnError};
use crate::sim::{Dataset, Split};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GnError {
    #[error("DivergedLoss: loss became {loss} at epoch {epoch}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("NonFiniteGradient: energy gradient is not finite")]
    NonFiniteGradient,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("SchemaError: {0}")]
    Schema(String),
}

/// Weight-decay constant applied to the squared parameters.
pub const ALPHA2: f64 = 1e-8;

/// Training variants from the message-compactness study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Standard,
    Bottleneck,
    L1,
    Kl,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Standard, Variant::Bottleneck, Variant::L1, Variant::Kl];

    /// Output width of the edge model. The KL variant predicts a mean and
    /// a log-variance per message component, so it is twice the message
    /// width.
    pub fn phi_e_out(self, dim: usize) -> usize {
        match self {
            Variant::Standard | Variant::L1 => 100,
            Variant::Bottleneck => dim,
            Variant::Kl => 200,
        }
    }

    /// Width of the message actually summed into the receiving node.
    pub fn message_dim(self, dim: usize) -> usize {
        match self {
            Variant::Bottleneck => dim,
            _ => 100,
        }
    }

    /// Message regularization weight.
    pub fn alpha1(self) -> f64 {
        match self {
            Variant::L1 => 1e-2,
            Variant::Kl => 1.0,
            _ => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Bottleneck => "bottleneck",
            Variant::L1 => "l1",
            Variant::Kl => "kl",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "standard" => Some(Variant::Standard),
            "bottleneck" => Some(Variant::Bottleneck),
            "l1" => Some(Variant::L1),
            "kl" => Some(Variant::Kl),
            _ => None,
        }
    }
}

/// Where the spatial coordinates live inside the node feature vector,
/// plus the overall feature and target widths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    /// Spatial dimensionality of the problem.
    pub dim: usize,
    /// Node feature width L_v.
    pub n_features: usize,
    /// Column offset of the position block (length `dim`).
    pub position_offset: usize,
    /// Target width per node.
    pub out_dim: usize,
}

impl FeatureLayout {
    /// Particles carry (position, velocity, mass, charge) and the target
    /// is the acceleration.
    pub fn particles(dim: usize) -> FeatureLayout {
        FeatureLayout {
            dim,
            n_features: 2 * dim + 2,
            position_offset: 0,
            out_dim: dim,
        }
    }

    /// Halos carry (mass, position, velocity) and the target is the
    /// scalar overdensity.
    pub fn halos() -> FeatureLayout {
        FeatureLayout {
            dim: 3,
            n_features: 7,
            position_offset: 1,
            out_dim: 1,
        }
    }
}

/// One graph with node features, directed edges, and per-node targets.
#[derive(Debug, Clone)]
pub struct GraphSnapshot {
    pub nodes: Array2<f64>,
    pub receivers: Vec<usize>,
    pub senders: Vec<usize>,
    pub targets: Array2<f64>,
    /// Node rows that contribute to the loss; `None` means all of them.
    /// Subgraph mini-batches over a single large graph predict only their
    /// sampled receivers.
    pub loss_nodes: Option<Vec<usize>>,
}

impl GraphSnapshot {
    pub fn n_nodes(&self) -> usize {
        self.nodes.nrows()
    }

    pub fn n_edges(&self) -> usize {
        self.receivers.len()
    }

    /// Fully connected directed edge list without self-edges.
    pub fn fully_connected_edges(n: usize) -> (Vec<usize>, Vec<usize>) {
        let mut receivers = Vec::with_capacity(n * (n - 1));
        let mut senders = Vec::with_capacity(n * (n - 1));
        for r in 0..n {
            for s in 0..n {
                if r != s {
                    receivers.push(r);
                    senders.push(s);
                }
            }
        }
        (receivers, senders)
    }
}

/// The edge and node perceptrons plus the variant tag.
#[derive(Debug, Clone)]
pub struct GnModel {
    pub variant: Variant,
    pub layout: FeatureLayout,
    pub phi_e: MlpParams,
    pub phi_v: MlpParams,
}

impl GnModel {
    pub fn init(
        variant: Variant,
        layout: FeatureLayout,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> GnModel {
        let lv = layout.n_features;
        let phi_e = MlpParams::init(
            &[2 * lv, hidden, hidden, variant.phi_e_out(layout.dim)],
            rng,
        );
        let phi_v = MlpParams::init(
            &[lv + variant.message_dim(layout.dim), hidden, hidden, layout.out_dim],
            rng,
        );
        GnModel {
            variant,
            layout,
            phi_e,
            phi_v,
        }
    }

    pub fn message_dim(&self) -> usize {
        self.variant.message_dim(self.layout.dim)
    }

    pub fn n_params(&self) -> usize {
        self.phi_e.n_params() + self.phi_v.n_params()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.phi_e.flat();
        v.extend(self.phi_v.flat());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        let split = self.phi_e.n_params();
        self.phi_e.set_flat(&flat[..split])?;
        self.phi_v.set_flat(&flat[split..])
    }

    /// Raw edge-model outputs for every edge: `[E, phi_e_out]`. For the
    /// KL variant this is the concatenated (mean, log-variance) pair.
    pub fn edge_outputs(&self, graph: &GraphSnapshot) -> Array2<f64> {
        let inputs = edge_inputs(graph);
        self.phi_e.forward_batch(&inputs)
    }
}

pub(crate) fn edge_inputs(graph: &GraphSnapshot) -> Array2<f64> {
    let lv = graph.nodes.ncols();
    let e = graph.n_edges();
    let mut inputs = Array2::zeros((e, 2 * lv));
    for k in 0..e {
        let r = graph.nodes.row(graph.receivers[k]);
        let s = graph.nodes.row(graph.senders[k]);
        let mut row = inputs.row_mut(k);
        row.slice_mut(ndarray::s![..lv]).assign(&r);
        row.slice_mut(ndarray::s![lv..]).assign(&s);
    }
    inputs
}

/// Element-wise sum of messages into their receiving nodes.
pub fn aggregate_messages(
    messages: &Array2<f64>,
    receivers: &[usize],
    n_nodes: usize,
) -> Array2<f64> {
    let mut agg = Array2::zeros((n_nodes, messages.ncols()));
    for (k, &r) in receivers.iter().enumerate() {
        let row = messages.row(k);
        for (o, x) in agg.row_mut(r).iter_mut().zip(row) {
            *o += x;
        }
    }
    agg
}

/// Forward pass without taping: messages per edge, summed per receiver,
/// node model applied. For the KL variant, `rng` draws one sample per
/// message; passing `None` clamps the variance to zero and uses the mean
/// path.
pub fn gn_forward(
    model: &GnModel,
    graph: &GraphSnapshot,
    rng: Option<&mut dyn rand::RngCore>,
) -> (Array2<f64>, Array2<f64>) {
    let raw = model.edge_outputs(graph);
    let msg_dim = model.message_dim();
    let messages: Array2<f64> = if model.variant == Variant::Kl {
        let mu = raw.slice(ndarray::s![.., ..msg_dim]);
        let logvar = raw.slice(ndarray::s![.., msg_dim..]);
        match rng {
            Some(rng) => {
                let mut m = mu.to_owned();
                for (i, mut row) in m.rows_mut().into_iter().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let eps: f64 = StandardNormal.sample(rng);
                        *v += (0.5 * logvar[(i, j)]).exp() * eps;
                    }
                }
                m
            }
            None => mu.to_owned(),
        }
    } else {
        raw
    };

    let n = graph.n_nodes();
    let agg = aggregate_messages(&messages, &graph.receivers, n);
    let lv = graph.nodes.ncols();
    let mut node_in = Array2::zeros((n, lv + msg_dim));
    node_in.slice_mut(ndarray::s![.., ..lv]).assign(&graph.nodes);
    node_in.slice_mut(ndarray::s![.., lv..]).assign(&agg);
    let pred = model.phi_v.forward_batch(&node_in);
    (pred, messages)
}

/// Mean over loss nodes of the l1 norm of the prediction error.
pub fn evaluate(model: &GnModel, snapshots: &[GraphSnapshot]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for snap in snapshots {
        let (pred, _) = gn_forward(model, snap, None);
        match &snap.loss_nodes {
            None => {
                total += (&pred - &snap.targets).mapv(f64::abs).sum();
                count += snap.n_nodes();
            }
            Some(nodes) => {
                for &i in nodes {
                    for (p, t) in pred.row(i).iter().zip(snap.targets.row(i)) {
                        total += (p - t).abs();
                    }
                    count += 1;
                }
            }
        }
    }
    total / count.max(1) as f64
}

/// The loss a constant predictor achieves when it always answers the mean
/// target of the split.
pub fn constant_predictor_loss(snapshots: &[GraphSnapshot]) -> f64 {
    let out_dim = snapshots[0].targets.ncols();
    let mut mean = vec![0.0; out_dim];
    let mut count = 0usize;
    for snap in snapshots {
        for row in snap.targets.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        count += snap.n_nodes();
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    let mut total = 0.0;
    for snap in snapshots {
        for row in snap.targets.rows() {
            for (m, v) in mean.iter().zip(row) {
                total += (v - m).abs();
            }
        }
    }
    total / count as f64
}

/// Convert simulated trajectories into fully connected graph snapshots,
/// evenly subsampling `per_sim` snapshots from each trajectory.
pub fn particle_snapshots(ds: &Dataset, split: Split, per_sim: usize) -> Vec<GraphSnapshot> {
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
            let mut targets = Array2::zeros((n, dim));
            for (i, s) in states.iter().enumerate() {
                for d in 0..dim {
                    nodes[(i, d)] = s.position[d];
                    nodes[(i, dim + d)] = s.velocity[d];
                }
                nodes[(i, 2 * dim)] = s.mass;
                nodes[(i, 2 * dim + 1)] = s.charge;
                for d in 0..dim {
                    targets[(i, d)] = traj.accelerations[step][i][d];
                }
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
