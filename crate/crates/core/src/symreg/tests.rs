use super::*;
use crate::derive_rng;
use proptest::prelude::*;

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

#[test]
fn eval_constant_and_if() {
    let row = [1.0, 2.0];
    assert_eq!(eval_expr(&Expr::Const(3.5), &row).unwrap(), 3.5);

    let cond = Expr::bin(BinOp::Gt, Expr::Const(2.0), Expr::Const(1.0));
    let e = Expr::if_expr(cond, Expr::Const(10.0), Expr::Const(20.0));
    assert_eq!(eval_expr(&e, &row).unwrap(), 10.0);
}

#[test]
fn eval_unbound_variable() {
    let e = Expr::Var(5);
    assert!(matches!(
        eval_expr(&e, &[1.0, 2.0]),
        Err(SrError::UnboundVariable { index: 5, .. })
    ));
}

/// The recovered 2D spring message expression, evaluated by hand at
/// dx=0, dy=1, r=1: 1.36 - 1.37 - 0.0025 = -0.0125.
#[test]
fn recovered_spring_expression_value() {
    let (dx, dy, r) = (0usize, 1usize, 2usize);
    let linear = Expr::bin(
        BinOp::Add,
        Expr::bin(BinOp::Mul, Expr::Const(1.36), Expr::Var(dy)),
        Expr::bin(BinOp::Mul, Expr::Const(0.60), Expr::Var(dx)),
    );
    let ratio = Expr::bin(
        BinOp::Div,
        Expr::bin(
            BinOp::Add,
            Expr::bin(BinOp::Mul, Expr::Const(0.60), Expr::Var(dx)),
            Expr::bin(BinOp::Mul, Expr::Const(1.37), Expr::Var(dy)),
        ),
        Expr::Var(r),
    );
    let e = Expr::bin(
        BinOp::Sub,
        Expr::bin(BinOp::Sub, linear, ratio),
        Expr::Const(0.0025),
    );
    let v = eval_expr(&e, &[0.0, 1.0, 1.0]).unwrap();
    assert!((v - (-0.0125)).abs() < 1e-12, "got {v}");
}

#[test]
fn complexity_convention() {
    assert_eq!(complexity(&Expr::Const(7.0)), 1);
    // exp(x) + y = 3 + 1 + 1 + 1
    let e = Expr::bin(
        BinOp::Add,
        Expr::un(UnOp::Exp, Expr::Var(0)),
        Expr::Var(1),
    );
    assert_eq!(complexity(&e), 6);
    // x * y / z = 5
    let e = Expr::bin(
        BinOp::Div,
        Expr::bin(BinOp::Mul, Expr::Var(0), Expr::Var(1)),
        Expr::Var(2),
    );
    assert_eq!(complexity(&e), 5);
}

fn toy_dataset() -> SrDataset {
    let x: Vec<f64> = (0..50).map(|i| -2.0 + 0.08 * i as f64).collect();
    let y: Vec<f64> = (0..50).map(|i| 1.5 - 0.06 * i as f64).collect();
    let target: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
    SrDataset::new(names(&["x", "y"]), vec![x, y], target)
}

#[test]
fn fitness_on_exact_copy_is_zero() {
    let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let data = SrDataset::new(names(&["x"]), vec![x.clone()], x);
    assert_eq!(fitness(&Expr::Var(0), &data), 0.0);
}

#[test]
fn fitness_of_constant_is_mean_absolute_deviation() {
    let data = toy_dataset();
    let mean = data.target.iter().sum::<f64>() / data.n_rows() as f64;
    let mad = data
        .target
        .iter()
        .map(|t| (t - mean).abs())
        .sum::<f64>()
        / data.n_rows() as f64;
    let got = fitness(&Expr::Const(mean), &data);
    assert!((got - mad).abs() < 1e-12);
}

#[test]
fn fitness_of_log_negative_is_infinite() {
    let neg: Vec<f64> = (1..30).map(|i| -(i as f64)).collect();
    let target = vec![0.0; neg.len()];
    let data = SrDataset::new(names(&["x"]), vec![neg], target);
    let e = Expr::un(UnOp::Log, Expr::Var(0));
    assert_eq!(fitness(&e, &data), f64::INFINITY);
}

#[test]
fn fit_constants_recovers_slope() {
    let x: Vec<f64> = (0..40).map(|i| 0.1 * i as f64 - 2.0).collect();
    let target: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let data = SrDataset::new(names(&["x"]), vec![x], target);
    let e = Expr::bin(BinOp::Mul, Expr::Const(1.0), Expr::Var(0));
    let mut rng = derive_rng(0, 0);
    let (fitted, mae) = fit_constants(&e, &data, &mut rng);
    let c = fitted.constants()[0];
    assert!((c - 2.0).abs() < 1e-3, "c = {c}");
    assert!(mae < 1e-3);
}

#[test]
fn fit_constants_never_worse() {
    let data = toy_dataset();
    // already optimal: the target is exactly x + y, expression has no
    // room to improve but must not regress
    let e = Expr::bin(
        BinOp::Add,
        Expr::bin(BinOp::Mul, Expr::Const(1.0), Expr::Var(0)),
        Expr::Var(1),
    );
    let before = fitness(&e, &data);
    let mut rng = derive_rng(1, 0);
    let (_, after) = fit_constants(&e, &data, &mut rng);
    assert!(after <= before + 1e-15);
}

#[test]
fn fit_constants_two_parameter_against_grid_oracle() {
    // target = a / (r + b) with a = 3, b = 0.5
    let r: Vec<f64> = (0..60).map(|i| 0.1 + 0.05 * i as f64).collect();
    let target: Vec<f64> = r.iter().map(|v| 3.0 / (v + 0.5)).collect();
    let data = SrDataset::new(names(&["r"]), vec![r], target);
    let e = Expr::bin(
        BinOp::Div,
        Expr::Const(1.0),
        Expr::bin(BinOp::Add, Expr::Var(0), Expr::Const(1.0)),
    );
    let mut rng = derive_rng(2, 0);
    let (fitted, mae) = fit_constants(&e, &data, &mut rng);
    let c = fitted.constants();
    assert!((c[0] - 3.0).abs() < 1e-2, "a = {}", c[0]);
    assert!((c[1] - 0.5).abs() < 1e-2, "b = {}", c[1]);

    // coarse grid search confirms this is the basin of the global optimum
    let mut grid_best = f64::INFINITY;
    for ai in 0..60 {
        for bi in 0..60 {
            let theta = [ai as f64 * 0.1, bi as f64 * 0.05];
            let v = fitness_with_consts(&e, &data, Some(&theta));
            grid_best = grid_best.min(v);
        }
    }
    assert!(mae <= grid_best + 1e-9, "mae {mae} vs grid {grid_best}");
}

#[test]
fn front_compaction_keeps_mae_decreasing() {
    let mut front = ParetoFront::new();
    front.record(&Expr::Const(1.0), 10.0);
    // higher complexity but worse: must be dropped
    let worse = Expr::bin(BinOp::Add, Expr::Var(0), Expr::Const(0.0));
    front.record(&worse, 20.0);
    let entries = front.entries();
    assert_eq!(entries.len(), 1);

    let better = Expr::bin(BinOp::Add, Expr::Var(0), Expr::Const(1.0));
    front.record(&better, 5.0);
    let entries = front.entries();
    assert_eq!(entries.len(), 2);
    for w in entries.windows(2) {
        assert!(w[1].mae < w[0].mae);
        assert!(w[1].complexity > w[0].complexity);
    }
}

#[test]
fn select_model_golden_inv_r2_table() {
    let front = ParetoFront::from_pairs(&[
        (1, 1570.0905),
        (3, 1558.9756),
        (5, 1551.3437),
        (6, 1520.9493),
        (8, 913.83751),
        (12, 160.31243),
        (14, 131.42547),
        (16, 69.447467),
        (18, 42.323236),
        (20, 18.400224),
        (22, 17.954713),
    ]);
    assert_eq!(select_model(&front).unwrap().complexity, 12);
}

#[test]
fn select_model_golden_inv_r_table() {
    let front = ParetoFront::from_pairs(&[
        (1, 103.29053),
        (2, 96.708906),
        (3, 93.052677),
        (5, 85.743106),
        (6, 68.345174),
        (8, 31.17),
        (10, 7.93),
        (12, 6.96),
        (14, 2.48),
        (16, 0.46575519),
        (18, 0.42),
        (20, 0.38),
        (22, 0.37839388),
    ]);
    assert_eq!(select_model(&front).unwrap().complexity, 16);
}

#[test]
fn select_model_two_entry_front() {
    let front = ParetoFront::from_pairs(&[(1, 10.0), (2, 1.0)]);
    assert_eq!(select_model(&front).unwrap().complexity, 2);
}

#[test]
fn select_model_needs_two_entries() {
    let front = ParetoFront::from_pairs(&[(1, 10.0)]);
    assert!(matches!(
        select_model(&front),
        Err(SrError::InsufficientFront { len: 1 })
    ));
}

fn quick_config(seed: u64, generations: usize) -> GpConfig {
    GpConfig {
        population: 200,
        generations,
        seed,
        ..Default::default()
    }
}

#[test]
fn evolve_recovers_x_plus_y() {
    let data = toy_dataset();
    let front = evolve(&data, &quick_config(3, 30)).unwrap();
    let hit = front
        .entries()
        .iter()
        .any(|e| e.mae < 1e-6 && e.complexity <= 3);
    assert!(hit, "front: {:?}", front.to_rows(&data.var_names));
}

#[test]
fn evolve_recovers_scaled_product() {
    let mut rng = derive_rng(9, 0);
    let x: Vec<f64> = (0..80).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y: Vec<f64> = (0..80).map(|_| rng.random_range(-2.0..2.0)).collect();
    let target: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.1 * a * b).collect();
    let data = SrDataset::new(names(&["x", "y"]), vec![x, y], target);
    let config = GpConfig {
        population: 500,
        generations: 100,
        seed: 4,
        ..Default::default()
    };
    let front = evolve(&data, &config).unwrap();
    let best = front.best_mae().unwrap();
    let spread = data.target.iter().map(|t| t.abs()).sum::<f64>() / data.n_rows() as f64;
    assert!(best < 1e-3 * spread.max(1.0), "best mae {best}");
}

#[test]
fn evolve_is_deterministic() {
    let data = toy_dataset();
    let a = evolve(&data, &quick_config(5, 10)).unwrap();
    let b = evolve(&data, &quick_config(5, 10)).unwrap();
    let ra = a.to_rows(&data.var_names);
    let rb = b.to_rows(&data.var_names);
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        assert_eq!(x.complexity, y.complexity);
        assert_eq!(x.mae.to_bits(), y.mae.to_bits());
        assert_eq!(x.expr_infix, y.expr_infix);
    }
}

#[test]
fn evolve_never_worse_than_constant_baseline() {
    let data = toy_dataset();
    let baseline = constant_baseline(&data);
    let front = evolve(&data, &quick_config(6, 5)).unwrap();
    for e in front.entries() {
        assert!(
            e.mae <= baseline + 1e-12,
            "entry at c={} has mae {} > baseline {baseline}",
            e.complexity,
            e.mae
        );
    }
}

#[test]
fn evolve_zero_budget_errors() {
    let data = toy_dataset();
    assert!(matches!(
        evolve(&data, &quick_config(0, 0)),
        Err(SrError::BudgetZero)
    ));
}

#[test]
fn opset_parse_roundtrip() {
    let ops = OpSet::parse("+,-,*,/,pow,exp,log,if,gt,lt").unwrap();
    assert_eq!(ops.binary.len(), 7);
    assert_eq!(ops.unary.len(), 2);
    assert!(ops.use_if);
    assert!(OpSet::parse("bogus").is_err());
}

proptest! {
    #[test]
    fn eval_is_pure(x in -10.0..10.0f64, y in -10.0..10.0f64, c in -5.0..5.0f64) {
        let e = Expr::bin(
            BinOp::Div,
            Expr::bin(BinOp::Mul, Expr::Var(0), Expr::Const(c)),
            Expr::bin(BinOp::Add, Expr::Var(1), Expr::Const(1.5)),
        );
        let a = eval_expr(&e, &[x, y]).unwrap();
        let b = eval_expr(&e, &[x, y]).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn complexity_ignores_constant_values(c1 in -100.0..100.0f64, c2 in -100.0..100.0f64) {
        let build = |c: f64| {
            Expr::bin(
                BinOp::Add,
                Expr::un(UnOp::Exp, Expr::Const(c)),
                Expr::bin(BinOp::Mul, Expr::Var(0), Expr::Const(c)),
            )
        };
        prop_assert_eq!(complexity(&build(c1)), complexity(&build(c2)));
    }

    #[test]
    fn select_model_invariant_under_mae_rescaling(scale in 1e-3..1e3f64) {
        let pairs = [(1usize, 100.0), (4, 60.0), (7, 3.0), (11, 2.1), (15, 0.5)];
        let front = ParetoFront::from_pairs(&pairs);
        let scaled: Vec<(usize, f64)> =
            pairs.iter().map(|(c, m)| (*c, m * scale)).collect();
        let front_scaled = ParetoFront::from_pairs(&scaled);
        prop_assert_eq!(
            select_model(&front).unwrap().complexity,
            select_model(&front_scaled).unwrap().complexity
        );
    }
}
