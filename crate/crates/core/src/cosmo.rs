//! Halo catalogs: ingestion, radius-graph construction, the discovered
//! overdensity formulas, constant refitting, and the out-of-distribution
//! split.

use crate::derive_rng;
use crate::graphnet::{FeatureLayout, GnError, GnModel, GraphSnapshot, TrainConfig, Variant};
use crate::opt::{nelder_mead, NelderMeadOptions};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Serialize;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CosmoError {
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("SchemaError: {0}")]
    Schema(String),
    #[error("NonPositiveMass: line {line} has mass {mass}")]
    NonPositiveMass { line: u64, mass: f64 },
    #[error("MalformedRow: line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("DivisionDegenerate: denominator below 1e-12 for {count} halos (first: {first:?})")]
    DivisionDegenerate { count: usize, first: Vec<usize> },
    #[error(transparent)]
    Gn(#[from] GnError),
}

/// Halo masses, positions, velocities, and overdensity targets.
#[derive(Debug, Clone, Default)]
pub struct HaloCatalog {
    pub mass: Vec<f64>,
    pub position: Vec<[f64; 3]>,
    pub velocity: Vec<[f64; 3]>,
    pub delta: Vec<f64>,
}

impl HaloCatalog {
    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    fn push(&mut self, row: &[f64; 8]) {
        self.mass.push(row[0]);
        self.position.push([row[1], row[2], row[3]]);
        self.velocity.push([row[4], row[5], row[6]]);
        self.delta.push(row[7]);
    }
}

const CSV_HEADER: &str = "mass,rx,ry,rz,vx,vy,vz,delta";

/// Load a halo catalog from CSV with the fixed eight-column schema.
pub fn load_catalog(path: &Path) -> Result<HaloCatalog, CosmoError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CosmoError::Schema(format!("cannot open catalog: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| CosmoError::Schema(e.to_string()))?
        .clone();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(CosmoError::Schema(format!(
            "header is '{}', expected '{CSV_HEADER}'",
            got.join(",")
        )));
    }
    let mut catalog = HaloCatalog::default();
    for record in reader.records() {
        let record = record.map_err(|e| CosmoError::Schema(e.to_string()))?;
        let line = record
            .position()
            .map(|p| p.line())
            .unwrap_or(catalog.len() as u64 + 2);
        if record.len() != 8 {
            return Err(CosmoError::MalformedRow {
                line,
                reason: format!("{} fields, expected 8", record.len()),
            });
        }
        let mut row = [0.0; 8];
        for (i, field) in record.iter().enumerate() {
            row[i] = field.trim().parse().map_err(|_| CosmoError::MalformedRow {
                line,
                reason: format!("bad number '{field}'"),
            })?;
        }
        if row[0] <= 0.0 {
            return Err(CosmoError::NonPositiveMass {
                line,
                mass: row[0],
            });
        }
        if row[7] <= -1.0 {
            return Err(CosmoError::MalformedRow {
                line,
                reason: format!("overdensity {} is below the physical bound -1", row[7]),
            });
        }
        catalog.push(&row);
    }
    Ok(catalog)
}

/// Serialize a catalog in the same schema, shortest-roundtrip decimals.
pub fn save_catalog(path: &Path, catalog: &HaloCatalog) -> Result<(), CosmoError> {
    let mut out = String::with_capacity(catalog.len() * 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for i in 0..catalog.len() {
        let p = catalog.position[i];
        let v = catalog.velocity[i];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            catalog.mass[i], p[0], p[1], p[2], v[0], v[1], v[2], catalog.delta[i]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Directional radius graph over a catalog, built on a uniform spatial
/// grid with cell size equal to the linking radius.
#[derive(Debug, Clone)]
pub struct HaloGraph {
    pub radius: f64,
    /// Sorted neighbor indices per halo; both directions present.
    pub neighbors: Vec<Vec<usize>>,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
    cell_size: f64,
}

impl HaloGraph {
    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// All halos strictly within `radius` of halo `i`, any radius. Grid
    /// cells are scanned in a box large enough for the requested range.
    pub fn neighbors_within(&self, catalog: &HaloCatalog, i: usize, radius: f64) -> Vec<usize> {
        let p = catalog.position[i];
        let reach = (radius / self.cell_size).ceil() as i64;
        let cell = self.cell_of(&p);
        let mut out = Vec::new();
        for cx in (cell.0 - reach)..=(cell.0 + reach) {
            for cy in (cell.1 - reach)..=(cell.1 + reach) {
                for cz in (cell.2 - reach)..=(cell.2 + reach) {
                    if let Some(members) = self.cells.get(&(cx, cy, cz)) {
                        for &j in members {
                            if j != i && dist(&p, &catalog.position[j]) < radius {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn cell_of(&self, p: &[f64; 3]) -> (i64, i64, i64) {
        (
            (p[0] / self.cell_size).floor() as i64,
            (p[1] / self.cell_size).floor() as i64,
            (p[2] / self.cell_size).floor() as i64,
        )
    }
}

/// Build the halo graph: edge (i, j) exists iff the separation is
/// strictly below the radius and i != j.
pub fn build_halo_graph(catalog: &HaloCatalog, radius: f64) -> HaloGraph {
    assert!(radius > 0.0, "radius must be positive");
    let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    let key = |p: &[f64; 3]| -> (i64, i64, i64) {
        (
            (p[0] / radius).floor() as i64,
            (p[1] / radius).floor() as i64,
            (p[2] / radius).floor() as i64,
        )
    };
    for (i, p) in catalog.position.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i);
    }
    let mut neighbors = vec![Vec::new(); catalog.len()];
    for (i, p) in catalog.position.iter().enumerate() {
        let c = key(p);
        let mut list = Vec::new();
        for cx in (c.0 - 1)..=(c.0 + 1) {
            for cy in (c.1 - 1)..=(c.1 + 1) {
                for cz in (c.2 - 1)..=(c.2 + 1) {
                    if let Some(members) = cells.get(&(cx, cy, cz)) {
                        for &j in members {
                            if j != i && dist(p, &catalog.position[j]) < radius {
                                list.push(j);
                            }
                        }
                    }
                }
            }
        }
        list.sort_unstable();
        neighbors[i] = list;
    }
    HaloGraph {
        radius,
        neighbors,
        cells,
        cell_size: radius,
    }
}

/// Brute-force neighbor oracle used by the tests.
pub fn brute_force_neighbors(catalog: &HaloCatalog, radius: f64) -> Vec<Vec<usize>> {
    let n = catalog.len();
    let mut out = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dist(&catalog.position[i], &catalog.position[j]) < radius {
                out[i].push(j);
            }
        }
    }
    out
}

/// The four overdensity formulas compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaId {
    Constant,
    Simple,
    BestNoMass,
    BestWithMass,
}

impl FormulaId {
    pub fn parse(s: &str) -> Option<FormulaId> {
        match s {
            "constant" => Some(FormulaId::Constant),
            "simple" => Some(FormulaId::Simple),
            "best_no_mass" => Some(FormulaId::BestNoMass),
            "best_with_mass" => Some(FormulaId::BestWithMass),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FormulaId::Constant => "constant",
            FormulaId::Simple => "simple",
            FormulaId::BestNoMass => "best_no_mass",
            FormulaId::BestWithMass => "best_with_mass",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            FormulaId::Constant => 1,
            FormulaId::Simple => 3,
            FormulaId::BestNoMass | FormulaId::BestWithMass => 7,
        }
    }
}

/// A formula with its constants C1..Ck.
#[derive(Debug, Clone, Serialize)]
pub struct OverdensityFormula {
    pub id: FormulaId,
    pub constants: Vec<f64>,
}

impl OverdensityFormula {
    /// Published best-fit constants.
    pub fn paper(id: FormulaId) -> OverdensityFormula {
        let constants = match id {
            FormulaId::Constant => vec![0.415],
            FormulaId::Simple => vec![-0.0376, 0.0529, 0.000927],
            FormulaId::BestNoMass => vec![-0.199, 1.31, 0.027, 1.54, 50.165, 18.94, 13.21],
            FormulaId::BestWithMass => vec![-0.156, 3.80, 0.0809, 0.438, 7.06, 15.5, 20.3],
        };
        OverdensityFormula { id, constants }
    }
}

/// Radius of the hand-designed formula's mass sum, independent of the
/// graph's linking radius.
pub const SIMPLE_RADIUS: f64 = 20.0;

/// Predict the overdensity of every halo.
pub fn formula_predict(
    formula: &OverdensityFormula,
    catalog: &HaloCatalog,
    graph: &HaloGraph,
) -> Result<Vec<f64>, CosmoError> {
    assert_eq!(formula.constants.len(), formula.id.arity(), "constant arity");
    let c = &formula.constants;
    let n = catalog.len();
    let mut out = vec![0.0; n];
    let mut degenerate = Vec::new();
    match formula.id {
        FormulaId::Constant => out.fill(c[0]),
        FormulaId::Simple => {
            for i in 0..n {
                let e: f64 = graph
                    .neighbors_within(catalog, i, SIMPLE_RADIUS)
                    .iter()
                    .map(|&j| catalog.mass[j])
                    .sum();
                out[i] = c[0] + (c[1] + catalog.mass[i] * c[2]) * e;
            }
        }
        FormulaId::BestNoMass => {
            for i in 0..n {
                let vi = catalog.velocity[i];
                let speed = (vi[0] * vi[0] + vi[1] * vi[1] + vi[2] * vi[2]).sqrt();
                let mut e = 0.0;
                for &j in &graph.neighbors[i] {
                    let vj = catalog.velocity[j];
                    let dv = ((vi[0] - vj[0]).powi(2)
                        + (vi[1] - vj[1]).powi(2)
                        + (vi[2] - vj[2]).powi(2))
                    .sqrt();
                    let d = dist(&catalog.position[i], &catalog.position[j]);
                    let denom = c[4] + (c[5] * d).powf(c[6]);
                    if denom.abs() < 1e-12 {
                        degenerate.push(i);
                        continue;
                    }
                    e += (c[3] + dv) / denom;
                }
                let denom = c[1] + c[2] * e * speed;
                if denom.abs() < 1e-12 {
                    degenerate.push(i);
                    continue;
                }
                out[i] = c[0] + e / denom;
            }
        }
        FormulaId::BestWithMass => {
            for i in 0..n {
                let mut e = 0.0;
                for &j in &graph.neighbors[i] {
                    let d = dist(&catalog.position[i], &catalog.position[j]);
                    let denom = c[4] + (c[5] * d).powf(c[6]);
                    if denom.abs() < 1e-12 {
                        degenerate.push(i);
                        continue;
                    }
                    e += (c[3] + catalog.mass[j]) / denom;
                }
                let denom = c[1] + c[2] * catalog.mass[i];
                if denom.abs() < 1e-12 {
                    degenerate.push(i);
                    continue;
                }
                out[i] = c[0] + e / denom;
            }
        }
    }
    if !degenerate.is_empty() {
        degenerate.dedup();
        let count = degenerate.len();
        degenerate.truncate(8);
        return Err(CosmoError::DivisionDegenerate {
            count,
            first: degenerate,
        });
    }
    Ok(out)
}

/// Mean absolute error of a prediction vector against the targets,
/// restricted to `indices` when given.
pub fn prediction_mae(predictions: &[f64], targets: &[f64], indices: Option<&[usize]>) -> f64 {
    match indices {
        None => {
            predictions
                .iter()
                .zip(targets)
                .map(|(p, t)| (p - t).abs())
                .sum::<f64>()
                / targets.len().max(1) as f64
        }
        Some(idx) => {
            idx.iter()
                .map(|&i| (predictions[i] - targets[i]).abs())
                .sum::<f64>()
                / idx.len().max(1) as f64
        }
    }
}

/// Refit the formula constants by Nelder-Mead against MAE, with 5 random
/// restarts around the starting constants. Never worse than the input.
pub fn refit_formula(
    formula: &OverdensityFormula,
    catalog: &HaloCatalog,
    graph: &HaloGraph,
    indices: Option<&[usize]>,
    seed: u64,
) -> (OverdensityFormula, f64) {
    let objective = |theta: &[f64]| -> f64 {
        let trial = OverdensityFormula {
            id: formula.id,
            constants: theta.to_vec(),
        };
        match formula_predict(&trial, catalog, graph) {
            Ok(pred) => prediction_mae(&pred, &catalog.delta, indices),
            Err(_) => f64::INFINITY,
        }
    };
    let theta0 = formula.constants.clone();
    let mut best_theta = theta0.clone();
    let mut best_val = objective(&theta0);
    let opts = NelderMeadOptions {
        max_iters: 300 * theta0.len(),
        ..Default::default()
    };
    let mut rng = derive_rng(seed, 500);
    for restart in 0..6 {
        let start: Vec<f64> = if restart == 0 {
            theta0.clone()
        } else {
            theta0
                .iter()
                .map(|v| {
                    let jitter: f64 = StandardNormal.sample(&mut rng);
                    v * f64::exp(0.05 * jitter)
                })
                .collect()
        };
        let (theta, val) = nelder_mead(objective, &start, &opts);
        if val < best_val {
            best_val = val;
            best_theta = theta;
        }
    }
    (
        OverdensityFormula {
            id: formula.id,
            constants: best_theta,
        },
        best_val,
    )
}

/// Mask the overdense tail: halos with delta above one are held out.
pub fn ood_split(catalog: &HaloCatalog) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, &d) in catalog.delta.iter().enumerate() {
        if d > 1.0 {
            held.push(i);
        } else {
            train.push(i);
        }
    }
    (train, held)
}

/// Synthetic clustered catalog for desk-scale tests: cluster centers in a
/// 250-unit box, members tightly packed so the published kernel scale is
/// exercised, overdensities generated from the best discovered formula
/// plus Gaussian noise.
pub fn synthetic_catalog(seed: u64, n_halos: usize) -> HaloCatalog {
    let mut rng = derive_rng(seed, 501);
    let box_size = 250.0;
    let mut catalog = HaloCatalog::default();
    while catalog.len() < n_halos {
        let center = [
            rng.random_range(0.0..box_size),
            rng.random_range(0.0..box_size),
            rng.random_range(0.0..box_size),
        ];
        // cluster richness spans poor groups to rich clusters
        let log_lambda: f64 = rng.random_range(1.3..4.4);
        let lambda = log_lambda.exp();
        let members = 1 + Poisson::new(lambda).unwrap().sample(&mut rng) as usize;
        for _ in 0..members.min(n_halos - catalog.len()) {
            let offset_scale = 0.04;
            let mut pos = [0.0; 3];
            for (p, c) in pos.iter_mut().zip(&center) {
                let off: f64 = StandardNormal.sample(&mut rng);
                *p = c + offset_scale * off;
            }
            let mass = f64::exp(StandardNormal.sample(&mut rng));
            let vel = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            catalog.mass.push(mass);
            catalog.position.push(pos);
            catalog.velocity.push(vel);
            catalog.delta.push(0.0);
        }
    }
    let graph = build_halo_graph(&catalog, 50.0);
    let formula = OverdensityFormula::paper(FormulaId::BestWithMass);
    let base = formula_predict(&formula, &catalog, &graph).expect("paper constants are regular");
    for (d, b) in catalog.delta.iter_mut().zip(&base) {
        let noise: f64 = StandardNormal.sample(&mut rng);
        *d = (b + 0.01 * noise).max(-0.999);
    }
    catalog
}

/// Node features (mass, position, velocity) and the overdensity target,
/// as one large graph snapshot.
pub fn halo_snapshot(catalog: &HaloCatalog, graph: &HaloGraph) -> GraphSnapshot {
    let n = catalog.len();
    let mut nodes = Array2::zeros((n, 7));
    let mut targets = Array2::zeros((n, 1));
    for i in 0..n {
        nodes[(i, 0)] = catalog.mass[i];
        for d in 0..3 {
            nodes[(i, 1 + d)] = catalog.position[i][d];
            nodes[(i, 4 + d)] = catalog.velocity[i][d];
        }
        targets[(i, 0)] = catalog.delta[i];
    }
    let mut receivers = Vec::with_capacity(graph.n_edges());
    let mut senders = Vec::with_capacity(graph.n_edges());
    for (i, nbrs) in graph.neighbors.iter().enumerate() {
        for &j in nbrs {
            receivers.push(i);
            senders.push(j);
        }
    }
    GraphSnapshot {
        nodes,
        receivers,
        senders,
        targets,
        loss_nodes: None,
    }
}

/// Receiver mini-batches over one large halo graph: each batch keeps the
/// full node table but only the in-edges and losses of its receivers.
pub fn receiver_batches(
    base: &GraphSnapshot,
    receivers: &[usize],
    batch_size: usize,
    seed: u64,
) -> Vec<GraphSnapshot> {
    use rand::seq::SliceRandom;
    let mut order = receivers.to_vec();
    let mut rng = derive_rng(seed, 502);
    order.shuffle(&mut rng);
    // in-edge lists per receiver
    let mut in_edges: HashMap<usize, Vec<usize>> = HashMap::new();
    for (k, &r) in base.receivers.iter().enumerate() {
        in_edges.entry(r).or_default().push(k);
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let mut receivers_out = Vec::new();
            let mut senders_out = Vec::new();
            for &r in chunk {
                if let Some(edges) = in_edges.get(&r) {
                    for &k in edges {
                        receivers_out.push(base.receivers[k]);
                        senders_out.push(base.senders[k]);
                    }
                }
            }
            GraphSnapshot {
                nodes: base.nodes.clone(),
                receivers: receivers_out,
                senders: senders_out,
                targets: base.targets.clone(),
                loss_nodes: Some(chunk.to_vec()),
            }
        })
        .collect()
}

/// Train an L1 graph network to predict overdensities for the given
/// receiver set.
pub fn train_halo_gn(
    catalog: &HaloCatalog,
    graph: &HaloGraph,
    train_indices: &[usize],
    eval_indices: &[usize],
    config: &TrainConfig,
) -> Result<crate::graphnet::TrainResult, GnError> {
    let base = halo_snapshot(catalog, graph);
    let batches = receiver_batches(&base, train_indices, 64, config.seed);
    let mut eval_snap = base.clone();
    eval_snap.loss_nodes = Some(eval_indices.to_vec());
    let mut rng = derive_rng(config.seed, 503);
    let model = GnModel::init(Variant::L1, FeatureLayout::halos(), config.hidden, &mut rng);
    let inner = TrainConfig {
        batch_size: 1,
        snapshots_per_sim: 0,
        ..config.clone()
    };
    crate::graphnet::train_on_snapshots(model, &batches, std::slice::from_ref(&eval_snap), &inner)
}

/// Standard deviation of every message component over the halo graph,
/// with the count of components clearing the informative threshold.
#[derive(Debug, Clone, Serialize)]
pub struct MessageSpectrum {
    pub stds: Vec<f64>,
    pub informative: usize,
}

pub const INFORMATIVE_STD: f64 = 1e-4;

pub fn message_spectrum(model: &GnModel, snapshot: &GraphSnapshot) -> MessageSpectrum {
    let raw = model.edge_outputs(snapshot);
    let (ranked, spread) = crate::probe::significant_components(model.variant, &raw);
    let mut stds = vec![0.0; ranked.len()];
    for (rank, &comp) in ranked.iter().enumerate() {
        stds[comp] = spread[rank];
    }
    let informative = stds.iter().filter(|s| **s > INFORMATIVE_STD).count();
    MessageSpectrum { stds, informative }
}

/// Train/held-out errors of the network and the refit formula under the
/// overdense-tail mask.
#[derive(Debug, Clone, Serialize)]
pub struct OodReport {
    pub n_train: usize,
    pub n_held_out: usize,
    pub held_out_fraction: f64,
    pub gn_train_mae: f64,
    pub gn_ood_mae: f64,
    pub sym_train_mae: f64,
    pub sym_ood_mae: f64,
    pub refit_constants: Vec<f64>,
}

pub fn ood_generalization_report(
    catalog: &HaloCatalog,
    graph: &HaloGraph,
    config: &TrainConfig,
    seed: u64,
) -> Result<OodReport, CosmoError> {
    let (train_idx, held_idx) = ood_split(catalog);
    let formula = OverdensityFormula::paper(FormulaId::BestWithMass);
    let (refit, sym_train_mae) = refit_formula(&formula, catalog, graph, Some(&train_idx), seed);
    let pred = formula_predict(&refit, catalog, graph)?;
    let sym_ood_mae = prediction_mae(&pred, &catalog.delta, Some(&held_idx));

    let result = train_halo_gn(catalog, graph, &train_idx, &held_idx, config)?;
    let base = halo_snapshot(catalog, graph);
    let gn_eval = |indices: &[usize]| -> f64 {
        let mut snap = base.clone();
        snap.loss_nodes = Some(indices.to_vec());
        crate::graphnet::evaluate(&result.model, std::slice::from_ref(&snap))
    };
    Ok(OodReport {
        n_train: train_idx.len(),
        n_held_out: held_idx.len(),
        held_out_fraction: held_idx.len() as f64 / catalog.len().max(1) as f64,
        gn_train_mae: gn_eval(&train_idx),
        gn_ood_mae: if held_idx.is_empty() {
            f64::NAN
        } else {
            gn_eval(&held_idx)
        },
        sym_train_mae,
        sym_ood_mae: if held_idx.is_empty() {
            f64::NAN
        } else {
            sym_ood_mae
        },
        refit_constants: refit.constants,
    })
}

/// Predictions CSV: `halo_index,delta_true,delta_pred`.
pub fn predictions_csv(targets: &[f64], predictions: &[f64]) -> String {
    let mut out = String::from("halo_index,delta_true,delta_pred\n");
    for (i, (t, p)) in targets.iter().zip(predictions).enumerate() {
        let _ = writeln!(out, "{i},{t},{p}");
    }
    out
}
