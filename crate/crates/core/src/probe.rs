//! Probes that quantify whether learned messages are linear transforms of
//! the true pairwise forces.

use crate::graphnet::{particle_snapshots, GnModel, GraphSnapshot, Variant};
use crate::sim::{pair_force, Dataset, Law, ParticleState, Split};
use crate::derive_rng;
use ndarray::Array2;
use rand::Rng;
use serde::Serialize;

/// Ranking statistic plus linear-fit quality for the significant message
/// components.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    /// All message components, most significant first.
    pub ranked_components: Vec<usize>,
    /// Significance statistic per component, in `ranked_components` order:
    /// standard deviation, or mean KL for the variational variant.
    pub spread: Vec<f64>,
    /// OLS coefficients per fitted component: intercept then one weight
    /// per force component.
    pub coefficients: Vec<Vec<f64>>,
    /// R-squared per fitted component.
    pub r2: Vec<f64>,
    pub mean_r2: f64,
    /// Set when the force design matrix was numerically singular.
    pub degenerate: bool,
}

/// Messages and matching true forces for a set of sampled edges.
#[derive(Debug, Clone)]
pub struct ProbeSamples {
    /// `[K, message_dim]` message values (mean path for the KL variant).
    pub messages: Array2<f64>,
    /// `[K, phi_e_out]` raw edge-model outputs.
    pub raw_outputs: Array2<f64>,
    /// `[K, D]` true pairwise forces on the receiver.
    pub forces: Array2<f64>,
}

fn state_from_row(row: ndarray::ArrayView1<f64>, dim: usize) -> ParticleState {
    ParticleState {
        position: row.iter().take(dim).copied().collect(),
        velocity: row.iter().skip(dim).take(dim).copied().collect(),
        mass: row[2 * dim],
        charge: row[2 * dim + 1],
    }
}

/// Sample `k` random (snapshot, edge) pairs and record the model's
/// messages next to the true pair forces.
pub fn sample_messages_and_forces(
    model: &GnModel,
    ds: &Dataset,
    split: Split,
    per_sim: usize,
    k: usize,
    seed: u64,
) -> ProbeSamples {
    let snapshots = particle_snapshots(ds, split, per_sim);
    sample_from_snapshots(model, &snapshots, ds.config.law, ds.config.n_bodies, k, seed)
}

pub fn sample_from_snapshots(
    model: &GnModel,
    snapshots: &[GraphSnapshot],
    law: Law,
    n_bodies: usize,
    k: usize,
    seed: u64,
) -> ProbeSamples {
    let mut rng = derive_rng(seed, 300);
    let dim = model.layout.dim;
    let lv = model.layout.n_features;
    let mut edge_rows = Array2::zeros((k, 2 * lv));
    let mut forces = Array2::zeros((k, dim));
    for i in 0..k {
        let snap = &snapshots[rng.random_range(0..snapshots.len())];
        let e = rng.random_range(0..snap.n_edges());
        let (r, s) = (snap.receivers[e], snap.senders[e]);
        edge_rows
            .row_mut(i)
            .slice_mut(ndarray::s![..lv])
            .assign(&snap.nodes.row(r));
        edge_rows
            .row_mut(i)
            .slice_mut(ndarray::s![lv..])
            .assign(&snap.nodes.row(s));
        let receiver = state_from_row(snap.nodes.row(r), dim);
        let sender = state_from_row(snap.nodes.row(s), dim);
        let f = pair_force(law, &receiver, &sender, n_bodies);
        for d in 0..dim {
            forces[(i, d)] = f[d];
        }
    }
    let raw = model.phi_e.forward_batch(&edge_rows);
    let msg_dim = model.message_dim();
    let messages = raw.slice(ndarray::s![.., ..msg_dim]).to_owned();
    ProbeSamples {
        messages,
        raw_outputs: raw,
        forces,
    }
}

/// Rank message components by significance: standard deviation for the
/// plain variants, mean KL contribution for the variational one. Ties
/// break toward the lower index.
pub fn significant_components(variant: Variant, raw_outputs: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let k = raw_outputs.nrows() as f64;
    let stats: Vec<f64> = match variant {
        Variant::Kl => {
            let msg_dim = raw_outputs.ncols() / 2;
            (0..msg_dim)
                .map(|j| {
                    let mut total = 0.0;
                    for row in raw_outputs.rows() {
                        let mu = row[j];
                        let logvar = row[msg_dim + j];
                        total += mu * mu + logvar.exp() - logvar;
                    }
                    total / k
                })
                .collect()
        }
        _ => (0..raw_outputs.ncols())
            .map(|j| {
                let col = raw_outputs.column(j);
                let mean = col.sum() / k;
                (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k).sqrt()
            })
            .collect(),
    };
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats[b].total_cmp(&stats[a]).then(a.cmp(&b)));
    let spread = order.iter().map(|&i| stats[i]).collect();
    (order, spread)
}

/// Ordinary least squares of one response column on the force components
/// plus an intercept. Returns `(coefficients, r_squared)` or `None` when
/// the normal equations are singular.
fn ols_fit(forces: &Array2<f64>, response: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = forces.nrows();
    let d = forces.ncols() + 1;
    // normal equations X^T X beta = X^T y with X = [1 | forces]
    let mut xtx = vec![vec![0.0; d]; d];
    let mut xty = vec![0.0; d];
    for i in 0..n {
        let mut xi = Vec::with_capacity(d);
        xi.push(1.0);
        xi.extend(forces.row(i).iter());
        for a in 0..d {
            for b in 0..d {
                xtx[a][b] += xi[a] * xi[b];
            }
            xty[a] += xi[a] * response[i];
        }
    }
    let beta = solve_linear(&mut xtx, &mut xty)?;
    let mean_y = response.iter().sum::<f64>() / n as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        let mut pred = beta[0];
        for (j, f) in forces.row(i).iter().enumerate() {
            pred += beta[j + 1] * f;
        }
        ss_res += (response[i] - pred) * (response[i] - pred);
        ss_tot += (response[i] - mean_y) * (response[i] - mean_y);
    }
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        0.0
    };
    Some((beta, r2))
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_linear(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let scale: f64 = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v.abs()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let mut pivot = col;
        for row in (col + 1)..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// Fit the top-D significant message components to linear combinations of
/// the true force components and report per-component and mean R-squared.
pub fn linear_force_fit(variant: Variant, samples: &ProbeSamples) -> ProbeReport {
    let dim = samples.forces.ncols();
    let (ranked, spread) = significant_components(variant, &samples.raw_outputs);
    let n_fit = dim.min(ranked.len());
    let mut coefficients = Vec::with_capacity(n_fit);
    let mut r2 = Vec::with_capacity(n_fit);
    let mut degenerate = false;
    for &comp in ranked.iter().take(n_fit) {
        let response: Vec<f64> = samples.messages.column(comp).to_vec();
        match ols_fit(&samples.forces, &response) {
            Some((beta, r)) => {
                coefficients.push(beta);
                r2.push(r);
            }
            None => {
                degenerate = true;
                coefficients.push(vec![0.0; dim + 1]);
                r2.push(0.0);
            }
        }
    }
    let mean_r2 = if r2.is_empty() {
        0.0
    } else {
        r2.iter().sum::<f64>() / r2.len() as f64
    };
    ProbeReport {
        ranked_components: ranked,
        spread,
        coefficients,
        r2,
        mean_r2,
        degenerate,
    }
}

/// One row of the cross-variant probe table.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeTableRow {
    pub sim: String,
    pub variant: String,
    pub mean_r2: f64,
    pub per_component_r2: Vec<f64>,
}

/// Probe several trained models against their datasets.
pub fn probe_table(
    entries: &[(String, Variant, &GnModel, &Dataset)],
    per_sim: usize,
    k: usize,
    seed: u64,
) -> Vec<ProbeTableRow> {
    entries
        .iter()
        .map(|(sim, variant, model, ds)| {
            let samples = sample_messages_and_forces(model, ds, Split::Test, per_sim, k, seed);
            let report = linear_force_fit(*variant, &samples);
            ProbeTableRow {
                sim: sim.clone(),
                variant: variant.name().to_string(),
                mean_r2: report.mean_r2,
                per_component_r2: report.r2,
            }
        })
        .collect()
}

/// Serialize the probe table as CSV with one column per fitted component.
pub fn probe_table_csv(rows: &[ProbeTableRow]) -> String {
    let max_comps = rows.iter().map(|r| r.per_component_r2.len()).max().unwrap_or(0);
    let mut out = String::from("sim,variant,mean_r2");
    for i in 0..max_comps {
        out.push_str(&format!(",r2_component_{i}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{},{},{}", row.sim, row.variant, row.mean_r2));
        for i in 0..max_comps {
            match row.per_component_r2.get(i) {
                Some(v) => out.push_str(&format!(",{v}")),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
