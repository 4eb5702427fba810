//! Subcommand implementations.

use crate::manifest::write_manifest;
use clap::Args;
use serde::Serialize;
use serde_json::{Map, Value};
use std::error::Error;
use std::path::{Path, PathBuf};
use symdistill_core::distill::{
    compose_and_refit, distill_edge_rank, pure_sr_baseline, record_edge_samples,
    record_pair_energy_samples, toy_factorization_demo, DistillReport,
};
use symdistill_core::flathgn::{train_flathgn, FlatHgn};
use symdistill_core::graphnet::{
    load_checkpoint, particle_snapshots, save_checkpoint, Checkpoint, CheckpointKind,
    TrainConfig, Variant,
};
use symdistill_core::probe::{linear_force_fit, probe_table_csv, ProbeTableRow};
use symdistill_core::sim::{generate_dataset, Dataset, Law, SimConfig, Split};
use symdistill_core::symreg::{evolve, select_model, FrontRow, GpConfig, OpSet, SrDataset};
use symdistill_core::{cosmo as cosmo_core, distill as distill_core};

pub type CliResult = Result<(), Box<dyn Error>>;
pub type Config = Map<String, Value>;

/// An argument-level error: reported with exit code 2 like clap's own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Error for UsageError {}

pub fn load_config(path: &Path) -> Result<Config, Box<dyn Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("ConfigError: cannot read {}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| format!("ConfigError: {}: {e}", path.display()))?;
    match value {
        Value::Object(map) => Ok(map),
        _ => Err("ConfigError: config file must hold a JSON object".into()),
    }
}

fn cfg_u64(config: Option<&Config>, key: &str) -> Option<u64> {
    config?.get(key)?.as_u64()
}

fn cfg_f64(config: Option<&Config>, key: &str) -> Option<f64> {
    config?.get(key)?.as_f64()
}

fn cfg_str(config: Option<&Config>, key: &str) -> Option<String> {
    Some(config?.get(key)?.as_str()?.to_string())
}

fn parse_law(s: &str) -> Result<Law, Box<dyn Error>> {
    Law::parse(s).ok_or_else(|| {
        format!("ArgumentError: unknown law '{s}' (inv_r, inv_r2, spring, damped, charge, discontinuous)").into()
    })
}

// ---------------------------------------------------------------- simulate

#[derive(Args)]
pub struct SimulateArgs {
    /// Force law: inv_r, inv_r2, spring, damped, charge, discontinuous.
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    bodies: Option<usize>,
    #[arg(long)]
    sims: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    /// Integration step size; defaults to the per-law table.
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SimulateResolved {
    law: String,
    dim: usize,
    bodies: usize,
    sims: usize,
    steps: usize,
    step_size: f64,
    seed: u64,
}

pub fn simulate(args: SimulateArgs, config: Option<&Config>) -> CliResult {
    let law_name = args
        .law
        .or_else(|| cfg_str(config, "law"))
        .unwrap_or_else(|| "spring".to_string());
    let law = parse_law(&law_name)?;
    let resolved = SimulateResolved {
        law: law.name().to_string(),
        dim: args
            .dim
            .or_else(|| cfg_u64(config, "dim").map(|v| v as usize))
            .unwrap_or(2),
        bodies: args
            .bodies
            .or_else(|| cfg_u64(config, "bodies").map(|v| v as usize))
            .unwrap_or(4),
        sims: args
            .sims
            .or_else(|| cfg_u64(config, "sims").map(|v| v as usize))
            .unwrap_or(200),
        steps: args
            .steps
            .or_else(|| cfg_u64(config, "steps").map(|v| v as usize))
            .unwrap_or(1000),
        step_size: args
            .step_size
            .or_else(|| cfg_f64(config, "step_size"))
            .unwrap_or_else(|| law.paper_step_size()),
        seed: args.seed.or_else(|| cfg_u64(config, "seed")).unwrap_or(0),
    };
    let sim_config = SimConfig {
        law,
        n_bodies: resolved.bodies,
        dim: resolved.dim,
        n_steps: resolved.steps,
        step_size: resolved.step_size,
        seed: resolved.seed,
    };
    generate_dataset(&sim_config, resolved.sims, &args.out)?;
    write_manifest("simulate", resolved.seed, &resolved, &[&args.out])?;
    println!(
        "wrote {} ({} simulations of {} steps, law {})",
        args.out.display(),
        resolved.sims,
        resolved.steps,
        resolved.law
    );
    Ok(())
}

// ------------------------------------------------------------------- train

#[derive(Args)]
pub struct TrainArgs {
    /// standard, bottleneck, l1, kl, or flathgn.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    snapshots_per_sim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable the random translation augmentation.
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct TrainResolved {
    variant: String,
    epochs: usize,
    batch_size: usize,
    hidden: usize,
    snapshots_per_sim: usize,
    seed: u64,
    augment: bool,
}

fn resolve_train(args: &TrainArgs, config: Option<&Config>) -> TrainResolved {
    TrainResolved {
        variant: args
            .variant
            .clone()
            .or_else(|| cfg_str(config, "variant"))
            .unwrap_or_else(|| "l1".to_string()),
        epochs: args
            .epochs
            .or_else(|| cfg_u64(config, "epochs").map(|v| v as usize))
            .unwrap_or(30),
        batch_size: args
            .batch_size
            .or_else(|| cfg_u64(config, "batch_size").map(|v| v as usize))
            .unwrap_or(8),
        hidden: args
            .hidden
            .or_else(|| cfg_u64(config, "hidden").map(|v| v as usize))
            .unwrap_or(300),
        snapshots_per_sim: args
            .snapshots_per_sim
            .or_else(|| cfg_u64(config, "snapshots_per_sim").map(|v| v as usize))
            .unwrap_or(50),
        seed: args.seed.or_else(|| cfg_u64(config, "seed")).unwrap_or(0),
        augment: !args.no_augment,
    }
}

fn train_config(resolved: &TrainResolved) -> TrainConfig {
    TrainConfig {
        epochs: resolved.epochs,
        batch_size: resolved.batch_size,
        hidden: resolved.hidden,
        snapshots_per_sim: resolved.snapshots_per_sim,
        seed: resolved.seed,
        augment: resolved.augment,
        ..Default::default()
    }
}

pub fn train(args: TrainArgs, config: Option<&Config>) -> CliResult {
    let resolved = resolve_train(&args, config);
    let ds = Dataset::load(&args.data)?;
    let tc = train_config(&resolved);
    let curve_path = args.out.with_extension("curve.json");
    let law = Some(ds.config.law.name().to_string());
    if resolved.variant == "flathgn" {
        let result = train_flathgn(&ds, &tc)?;
        save_checkpoint(&args.out, &result.model.to_checkpoint(law))?;
        std::fs::write(&curve_path, serde_json::to_string_pretty(&result.curve)?)?;
        println!(
            "flathgn: final train loss {:.6}, test loss {:.6}",
            result.final_train_loss, result.final_test_loss
        );
    } else {
        let variant = Variant::parse(&resolved.variant).ok_or_else(|| {
            format!(
                "ArgumentError: unknown variant '{}' (standard, bottleneck, l1, kl, flathgn)",
                resolved.variant
            )
        })?;
        let result = symdistill_core::graphnet::train(&ds, variant, &tc)?;
        save_checkpoint(&args.out, &Checkpoint::from_gn(&result.model, law))?;
        std::fs::write(&curve_path, serde_json::to_string_pretty(&result.curve)?)?;
        println!(
            "{}: final train L_v {:.6}, test L_v {:.6}",
            variant.name(),
            result.final_train_lv,
            result.final_test_lv
        );
    }
    write_manifest("train", resolved.seed, &resolved, &[&args.out, &curve_path])?;
    Ok(())
}

// ------------------------------------------------------------------- probe

#[derive(Args)]
pub struct ProbeArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    snapshots_per_sim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct ProbeResolved {
    samples: usize,
    snapshots_per_sim: usize,
    seed: u64,
}

pub fn probe(args: ProbeArgs, config: Option<&Config>) -> CliResult {
    let resolved = ProbeResolved {
        samples: args
            .samples
            .or_else(|| cfg_u64(config, "samples").map(|v| v as usize))
            .unwrap_or(5000),
        snapshots_per_sim: args
            .snapshots_per_sim
            .or_else(|| cfg_u64(config, "snapshots_per_sim").map(|v| v as usize))
            .unwrap_or(50),
        seed: args.seed.or_else(|| cfg_u64(config, "seed")).unwrap_or(0),
    };
    let ckpt = load_checkpoint(&args.ckpt)?;
    if ckpt.kind != CheckpointKind::Gn {
        return Err("SchemaError: probe expects a graph-network checkpoint".into());
    }
    let model = ckpt.to_gn()?;
    let ds = Dataset::load(&args.data)?;
    let samples = symdistill_core::probe::sample_messages_and_forces(
        &model,
        &ds,
        Split::Test,
        resolved.snapshots_per_sim,
        resolved.samples,
        resolved.seed,
    );
    let report = linear_force_fit(model.variant, &samples);
    let row = ProbeTableRow {
        sim: format!("{}-{}", ds.config.law.name(), ds.config.dim),
        variant: model.variant.name().to_string(),
        mean_r2: report.mean_r2,
        per_component_r2: report.r2.clone(),
    };
    std::fs::write(&args.out, probe_table_csv(std::slice::from_ref(&row)))?;
    write_manifest("probe", resolved.seed, &resolved, &[&args.out])?;
    println!("mean R^2 = {:.4} (per component: {:?})", report.mean_r2, report.r2);
    Ok(())
}

// ----------------------------------------------------------------- distill

#[derive(Args)]
pub struct DistillArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    snapshots_per_sim: Option<usize>,
    /// How many significant message components to distill (default 1;
    /// the composite uses every distilled component).
    #[arg(long)]
    components: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct DistillResolved {
    seed: u64,
    samples: usize,
    snapshots_per_sim: usize,
    components: usize,
    population: usize,
    generations: usize,
    max_size: usize,
}

fn resolve_distill(args: &DistillArgs, config: Option<&Config>) -> DistillResolved {
    DistillResolved {
        seed: args.seed.or_else(|| cfg_u64(config, "seed")).unwrap_or(0),
        samples: args
            .samples
            .or_else(|| cfg_u64(config, "samples").map(|v| v as usize))
            .unwrap_or(5000),
        snapshots_per_sim: args
            .snapshots_per_sim
            .or_else(|| cfg_u64(config, "snapshots_per_sim").map(|v| v as usize))
            .unwrap_or(50),
        components: args
            .components
            .or_else(|| cfg_u64(config, "components").map(|v| v as usize))
            .unwrap_or(1),
        population: args
            .population
            .or_else(|| cfg_u64(config, "population").map(|v| v as usize))
            .unwrap_or(1000),
        generations: args
            .generations
            .or_else(|| cfg_u64(config, "generations").map(|v| v as usize))
            .unwrap_or(200),
        max_size: args
            .max_size
            .or_else(|| cfg_u64(config, "max_size").map(|v| v as usize))
            .unwrap_or(30),
    }
}

#[derive(Serialize)]
struct DistillOutput {
    target: String,
    selected_expr: String,
    front: Vec<FrontRow>,
    train_mae: f64,
    test_mae: f64,
    edge: Vec<DistillReport>,
    node: Vec<DistillReport>,
}

/// Distill a checkpoint: a graph network is distilled edge-then-node and
/// composed into a standalone predictor; a Hamiltonian checkpoint has its
/// pairwise energy distilled directly.
pub fn distill(args: DistillArgs, config: Option<&Config>) -> CliResult {
    let resolved = resolve_distill(&args, config);
    let ckpt = load_checkpoint(&args.ckpt)?;
    let ds = Dataset::load(&args.data)?;
    let gp = GpConfig {
        population: resolved.population,
        generations: resolved.generations,
        max_size: resolved.max_size,
        seed: resolved.seed,
        ..Default::default()
    };
    let output = match ckpt.kind {
        CheckpointKind::Gn => {
            let model = ckpt.to_gn()?;
            distill_gn_pipeline(&model, &ds, &resolved, &gp)?
        }
        CheckpointKind::FlatHgn => {
            let model = FlatHgn::from_checkpoint(&ckpt)?;
            distill_hgn_pipeline(&model, &ds, &resolved, &gp)?
        }
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&output)?)?;
    write_manifest("distill", resolved.seed, &resolved, &[&args.out])?;
    println!(
        "{} -> {} (train MAE {:.6}, test MAE {:.6})",
        output.target, output.selected_expr, output.train_mae, output.test_mae
    );
    Ok(())
}

fn distill_gn_pipeline(
    model: &symdistill_core::graphnet::GnModel,
    ds: &Dataset,
    resolved: &DistillResolved,
    gp: &GpConfig,
) -> Result<DistillOutput, Box<dyn Error>> {
    let table = record_edge_samples(model, ds, resolved.snapshots_per_sim, resolved.samples, resolved.seed);
    let n_components = resolved.components.clamp(1, table.targets.len());
    let mut edge_reports = Vec::new();
    for rank in 0..n_components {
        let mut cfg = gp.clone();
        cfg.seed = gp.seed.wrapping_add(rank as u64);
        edge_reports.push(distill_edge_rank(&table, rank, &cfg)?);
    }
    let train_snaps = particle_snapshots(ds, Split::Train, resolved.snapshots_per_sim);
    let test_snaps = particle_snapshots(ds, Split::Test, resolved.snapshots_per_sim);
    let mut node_reports = Vec::new();
    for out_c in 0..model.layout.out_dim {
        let mut cfg = gp.clone();
        cfg.seed = gp.seed.wrapping_add(100 + out_c as u64);
        node_reports.push(distill_core::distill_node_components(
            model,
            &train_snaps,
            resolved.samples.min(2000),
            resolved.seed,
            out_c,
            n_components,
            &cfg,
        )?);
    }
    let components: Vec<usize> = table
        .targets
        .iter()
        .take(n_components)
        .map(|(c, _)| *c)
        .collect();
    let composite = compose_and_refit(
        &edge_reports,
        &node_reports,
        &components,
        &train_snaps,
        &test_snaps,
        ds.config.dim,
        resolved.seed,
    )?;
    Ok(DistillOutput {
        target: edge_reports[0].target.clone(),
        selected_expr: edge_reports[0].selected_infix.clone(),
        front: edge_reports[0].front.clone(),
        train_mae: composite.train_mae,
        test_mae: composite.test_mae,
        edge: edge_reports,
        node: node_reports,
    })
}

fn distill_hgn_pipeline(
    model: &FlatHgn,
    ds: &Dataset,
    resolved: &DistillResolved,
    gp: &GpConfig,
) -> Result<DistillOutput, Box<dyn Error>> {
    let table = record_pair_energy_samples(model, ds, resolved.snapshots_per_sim, resolved.samples, resolved.seed);
    let report = distill_edge_rank(&table, 0, gp)?;
    // train/test MAE of the selected expression against held-out samples
    let holdout = record_pair_energy_samples(
        model,
        ds,
        resolved.snapshots_per_sim,
        resolved.samples,
        resolved.seed.wrapping_add(1),
    );
    let train_data = table.sr_dataset(0);
    let test_data = holdout.sr_dataset(0);
    let train_mae = symdistill_core::symreg::fitness(&report.selected, &train_data);
    let test_mae = symdistill_core::symreg::fitness(&report.selected, &test_data);
    Ok(DistillOutput {
        target: "h_pair".to_string(),
        selected_expr: report.selected_infix.clone(),
        front: report.front.clone(),
        train_mae,
        test_mae,
        edge: vec![report],
        node: Vec::new(),
    })
}

// ------------------------------------------------------------------ symreg

#[derive(Args)]
pub struct SymregArgs {
    #[arg(long)]
    data: PathBuf,
    /// Target column name.
    #[arg(long)]
    target: String,
    /// Comma-separated operator list.
    #[arg(long)]
    ops: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    max_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct SymregResolved {
    target: String,
    ops: String,
    seed: u64,
    population: usize,
    generations: usize,
    max_size: usize,
}

pub fn symreg(args: SymregArgs, config: Option<&Config>) -> CliResult {
    let resolved = SymregResolved {
        target: args.target.clone(),
        ops: args
            .ops
            .clone()
            .or_else(|| cfg_str(config, "ops"))
            .unwrap_or_else(|| "+,-,*,/,pow,exp,log,if,gt,lt".to_string()),
        seed: args.seed.or_else(|| cfg_u64(config, "seed")).unwrap_or(0),
        population: args
            .population
            .or_else(|| cfg_u64(config, "population").map(|v| v as usize))
            .unwrap_or(1000),
        generations: args
            .generations
            .or_else(|| cfg_u64(config, "generations").map(|v| v as usize))
            .unwrap_or(200),
        max_size: args
            .max_size
            .or_else(|| cfg_u64(config, "max_size").map(|v| v as usize))
            .unwrap_or(30),
    };
    let data = SrDataset::from_csv(&args.data, &resolved.target)?;
    let gp = GpConfig {
        population: resolved.population,
        generations: resolved.generations,
        max_size: resolved.max_size,
        ops: OpSet::parse(&resolved.ops)?,
        seed: resolved.seed,
        ..Default::default()
    };
    let front = evolve(&data, &gp)?;
    let rows = front.to_rows(&data.var_names);
    std::fs::write(&args.out, serde_json::to_string_pretty(&rows)?)?;
    write_manifest("symreg", resolved.seed, &resolved, &[&args.out])?;
    match select_model(&front) {
        Ok(sel) => println!(
            "selected complexity {} (mae {:.6e}): {}",
            sel.complexity,
            sel.mae,
            sel.expr.to_infix(&data.var_names)
        ),
        Err(_) => println!("front has a single entry"),
    }
    Ok(())
}

// ------------------------------------------------------------------- cosmo

#[derive(Args)]
pub struct CosmoArgs {
    /// predict, refit, ood, or synth (write a synthetic catalog).
    #[arg(value_parser = ["predict", "refit", "ood", "synth"])]
    action: String,
    #[arg(long)]
    catalog: PathBuf,
    /// Halo count for the synth action.
    #[arg(long)]
    halos: Option<usize>,
    /// constant, simple, best_no_mass, best_with_mass.
    #[arg(long)]
    formula: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Output file (required for predict, refit, and ood).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct CosmoResolved {
    action: String,
    formula: String,
    radius: f64,
    seed: u64,
    epochs: usize,
    hidden: usize,
}

#[derive(Serialize)]
struct RefitOutput {
    formula: String,
    constants: Vec<f64>,
    mae: f64,
}

pub fn cosmo(args: CosmoArgs, config: Option<&Config>) -> CliResult {
    let resolved = CosmoResolved {
        action: args.action.clone(),
        formula: args
            .formula
            .clone()
            .or_else(|| cfg_str(config, "formula"))
            .unwrap_or_else(|| "best_with_mass".to_string()),
        radius: args
            .radius
            .or_else(|| cfg_f64(config, "radius"))
            .unwrap_or(50.0),
        seed: args.seed.or_else(|| cfg_u64(config, "seed")).unwrap_or(0),
        epochs: args
            .epochs
            .or_else(|| cfg_u64(config, "epochs").map(|v| v as usize))
            .unwrap_or(10),
        hidden: args
            .hidden
            .or_else(|| cfg_u64(config, "hidden").map(|v| v as usize))
            .unwrap_or(500),
    };
    let formula_id = cosmo_core::FormulaId::parse(&resolved.formula).ok_or_else(|| {
        format!(
            "ArgumentError: unknown formula '{}' (constant, simple, best_no_mass, best_with_mass)",
            resolved.formula
        )
    })?;
    if resolved.action == "synth" {
        let halos = args
            .halos
            .or_else(|| cfg_u64(config, "halos").map(|v| v as usize))
            .unwrap_or(2000);
        let catalog = cosmo_core::synthetic_catalog(resolved.seed, halos);
        cosmo_core::save_catalog(&args.catalog, &catalog)?;
        write_manifest("cosmo", resolved.seed, &resolved, &[&args.catalog])?;
        println!("wrote {} halos to {}", catalog.len(), args.catalog.display());
        return Ok(());
    }
    let out = args.out.ok_or_else(|| {
        UsageError(format!(
            "error: --out is required for 'cosmo {}'",
            resolved.action
        ))
    })?;
    let catalog = cosmo_core::load_catalog(&args.catalog)?;
    let graph = cosmo_core::build_halo_graph(&catalog, resolved.radius);
    match resolved.action.as_str() {
        "predict" => {
            let formula = cosmo_core::OverdensityFormula::paper(formula_id);
            let pred = cosmo_core::formula_predict(&formula, &catalog, &graph)?;
            std::fs::write(&out, cosmo_core::predictions_csv(&catalog.delta, &pred))?;
            let mae = cosmo_core::prediction_mae(&pred, &catalog.delta, None);
            println!("{} MAE {:.6} over {} halos", formula_id.name(), mae, catalog.len());
        }
        "refit" => {
            let start = cosmo_core::OverdensityFormula::paper(formula_id);
            let (refit, mae) = cosmo_core::refit_formula(&start, &catalog, &graph, None, resolved.seed);
            let report = RefitOutput {
                formula: formula_id.name().to_string(),
                constants: refit.constants,
                mae,
            };
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!("{} refit MAE {:.6}", formula_id.name(), mae);
        }
        "ood" => {
            let tc = TrainConfig {
                epochs: resolved.epochs,
                hidden: resolved.hidden,
                seed: resolved.seed,
                ..Default::default()
            };
            let report = cosmo_core::ood_generalization_report(&catalog, &graph, &tc, resolved.seed)?;
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!(
                "gn train/ood {:.4}/{:.4}, symbolic train/ood {:.4}/{:.4}",
                report.gn_train_mae, report.gn_ood_mae, report.sym_train_mae, report.sym_ood_mae
            );
        }
        _ => unreachable!("clap restricts the action"),
    }
    write_manifest("cosmo", resolved.seed, &resolved, &[&out])?;
    Ok(())
}

// -------------------------------------------------------------------- demo

#[derive(Args)]
pub struct DemoArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct DemoResolved {
    seed: u64,
}

pub fn demo(args: DemoArgs, config: Option<&Config>) -> CliResult {
    let resolved = DemoResolved {
        seed: args.seed.or_else(|| cfg_u64(config, "seed")).unwrap_or(0),
    };
    let report = toy_factorization_demo(resolved.seed)?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&report)?)?;
    write_manifest("demo", resolved.seed, &resolved, &[&args.out])?;
    println!(
        "inner function: {} (aligned rel MAE {:.4})",
        report.g_selected, report.g_aligned_rel_mae
    );
    Ok(())
}

// ------------------------------------------------------------------- repro

#[derive(Args)]
pub struct ReproArgs {
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// standard, bottleneck, l1, or kl.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sims: Option<usize>,
    #[arg(long)]
    bodies: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    snapshots_per_sim: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Serialize, Clone)]
struct ReproResolved {
    law: String,
    dim: usize,
    variant: String,
    seed: u64,
    sims: usize,
    bodies: usize,
    epochs: usize,
    hidden: usize,
    snapshots_per_sim: usize,
    samples: usize,
    population: usize,
    generations: usize,
}

#[derive(Serialize)]
struct ReproSummary {
    law: String,
    dim: usize,
    variant: String,
    seed: u64,
    final_train_lv: f64,
    final_test_lv: f64,
    probe_mean_r2: f64,
    probe_per_component_r2: Vec<f64>,
    distilled_edge: String,
    composite_train_mae: f64,
    composite_test_mae: f64,
}

pub fn repro(args: ReproArgs, config: Option<&Config>) -> CliResult {
    let law_name = args
        .law
        .or_else(|| cfg_str(config, "law"))
        .unwrap_or_else(|| "spring".to_string());
    let law = parse_law(&law_name)?;
    let resolved = ReproResolved {
        law: law.name().to_string(),
        dim: args
            .dim
            .or_else(|| cfg_u64(config, "dim").map(|v| v as usize))
            .unwrap_or(2),
        variant: args
            .variant
            .or_else(|| cfg_str(config, "variant"))
            .unwrap_or_else(|| "l1".to_string()),
        seed: args.seed.or_else(|| cfg_u64(config, "seed")).unwrap_or(0),
        sims: args
            .sims
            .or_else(|| cfg_u64(config, "sims").map(|v| v as usize))
            .unwrap_or(200),
        bodies: args
            .bodies
            .or_else(|| cfg_u64(config, "bodies").map(|v| v as usize))
            .unwrap_or(4),
        epochs: args
            .epochs
            .or_else(|| cfg_u64(config, "epochs").map(|v| v as usize))
            .unwrap_or(30),
        hidden: args
            .hidden
            .or_else(|| cfg_u64(config, "hidden").map(|v| v as usize))
            .unwrap_or(300),
        snapshots_per_sim: args
            .snapshots_per_sim
            .or_else(|| cfg_u64(config, "snapshots_per_sim").map(|v| v as usize))
            .unwrap_or(50),
        samples: args
            .samples
            .or_else(|| cfg_u64(config, "samples").map(|v| v as usize))
            .unwrap_or(5000),
        population: args
            .population
            .or_else(|| cfg_u64(config, "population").map(|v| v as usize))
            .unwrap_or(1000),
        generations: args
            .generations
            .or_else(|| cfg_u64(config, "generations").map(|v| v as usize))
            .unwrap_or(200),
    };
    let variant = Variant::parse(&resolved.variant).ok_or_else(|| {
        format!(
            "ArgumentError: unknown variant '{}' (standard, bottleneck, l1, kl)",
            resolved.variant
        )
    })?;
    std::fs::create_dir_all(&args.out_dir)?;

    // simulate
    let data_path = args.out_dir.join("dataset.bin");
    let sim_config = SimConfig::paper_defaults(law, resolved.dim, resolved.bodies, resolved.seed);
    let ds = generate_dataset(&sim_config, resolved.sims, &data_path)?;

    // train
    let tc = TrainConfig {
        epochs: resolved.epochs,
        hidden: resolved.hidden,
        snapshots_per_sim: resolved.snapshots_per_sim,
        seed: resolved.seed,
        ..Default::default()
    };
    let result = symdistill_core::graphnet::train(&ds, variant, &tc)?;
    let ckpt_path = args.out_dir.join("model.ckpt");
    save_checkpoint(
        &ckpt_path,
        &Checkpoint::from_gn(&result.model, Some(law.name().to_string())),
    )?;

    // probe
    let samples = symdistill_core::probe::sample_messages_and_forces(
        &result.model,
        &ds,
        Split::Test,
        resolved.snapshots_per_sim,
        resolved.samples,
        resolved.seed,
    );
    let report = linear_force_fit(variant, &samples);
    let probe_path = args.out_dir.join("probe.csv");
    let row = ProbeTableRow {
        sim: format!("{}-{}", law.name(), resolved.dim),
        variant: variant.name().to_string(),
        mean_r2: report.mean_r2,
        per_component_r2: report.r2.clone(),
    };
    std::fs::write(&probe_path, probe_table_csv(std::slice::from_ref(&row)))?;

    // distill with one edge expression per spatial dimension
    let gp = GpConfig {
        population: resolved.population,
        generations: resolved.generations,
        seed: resolved.seed,
        ..Default::default()
    };
    let dresolved = DistillResolved {
        seed: resolved.seed,
        samples: resolved.samples,
        snapshots_per_sim: resolved.snapshots_per_sim,
        components: resolved.dim,
        population: resolved.population,
        generations: resolved.generations,
        max_size: gp.max_size,
    };
    let output = distill_gn_pipeline(&result.model, &ds, &dresolved, &gp)?;
    let distill_path = args.out_dir.join("distill.json");
    std::fs::write(&distill_path, serde_json::to_string_pretty(&output)?)?;

    // summary
    let summary = ReproSummary {
        law: resolved.law.clone(),
        dim: resolved.dim,
        variant: resolved.variant.clone(),
        seed: resolved.seed,
        final_train_lv: result.final_train_lv,
        final_test_lv: result.final_test_lv,
        probe_mean_r2: report.mean_r2,
        probe_per_component_r2: report.r2.clone(),
        distilled_edge: output.selected_expr.clone(),
        composite_train_mae: output.train_mae,
        composite_test_mae: output.test_mae,
    };
    let summary_path = args.out_dir.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;
    crate::manifest::write_manifest_at(
        &args.out_dir.join("manifest.json"),
        "repro",
        resolved.seed,
        &resolved,
        &[&data_path, &ckpt_path, &probe_path, &distill_path, &summary_path],
    )?;
    println!(
        "repro {}-{} {}: probe mean R^2 {:.4}, composite test MAE {:.6}",
        resolved.law, resolved.dim, resolved.variant, report.mean_r2, output.test_mae
    );
    Ok(())
}

// ------------------------------------------------- baseline (extra helper)

/// Exposed for completeness: pure symbolic regression on raw features,
/// reachable through `symreg` on exported tables or the acceptance suite.
#[allow(dead_code)]
pub fn baseline_report(
    ds: &Dataset,
    per_sim: usize,
    k: usize,
    seed: u64,
    gp: &GpConfig,
) -> Result<symdistill_core::distill::BaselineReport, Box<dyn Error>> {
    Ok(pure_sr_baseline(ds, per_sim, k, seed, 1, 0, gp)?)
}
