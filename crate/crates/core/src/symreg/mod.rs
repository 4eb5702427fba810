//! Genetic-programming symbolic regression.
//!
//! Expressions are trees over `+ - * / > < pow exp log IF` and real
//! constants. A tournament GP evolves a population against mean absolute
//! error, a Pareto front keeps the best expression found at every
//! complexity level, constants are polished with Nelder-Mead, and the
//! final model is the front entry with the largest fractional drop in
//! log-MAE per unit of added complexity.

mod gp;

pub use gp::{constant_baseline, evolve, GpConfig, OpSet};

use crate::opt::{nelder_mead, NelderMeadOptions};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SrError {
    #[error("UnboundVariable: expression references variable {index} but the row has {bound} columns")]
    UnboundVariable { index: usize, bound: usize },
    #[error("BudgetZero: generation budget is zero")]
    BudgetZero,
    #[error("InsufficientFront: need at least 2 entries, have {len}")]
    InsufficientFront { len: usize },
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("SchemaError: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Gt,
    Lt,
}

impl BinOp {
    pub const ALL: [BinOp; 7] = [
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Pow,
        BinOp::Gt,
        BinOp::Lt,
    ];

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
            BinOp::Gt => {
                if a > b {
                    1.0
                } else {
                    0.0
                }
            }
            BinOp::Lt => {
                if a < b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Complexity weight: pow counts triple, the rest are unit cost.
    fn cost(self) -> usize {
        match self {
            BinOp::Pow => 3,
            _ => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
            BinOp::Gt => ">",
            BinOp::Lt => "<",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Exp,
    Log,
}

impl UnOp {
    pub const ALL: [UnOp; 2] = [UnOp::Exp, UnOp::Log];

    fn apply(self, a: f64) -> f64 {
        match self {
            UnOp::Exp => a.exp(),
            UnOp::Log => a.ln(),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Exp => "exp",
            UnOp::Log => "log",
        }
    }
}

/// A symbolic expression tree with embedded real constants.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(usize),
    Const(f64),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Un(UnOp, Box<Expr>),
    If(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(i: usize) -> Expr {
        Expr::Var(i)
    }

    pub fn constant(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn un(op: UnOp, a: Expr) -> Expr {
        Expr::Un(op, Box::new(a))
    }

    pub fn if_expr(c: Expr, a: Expr, b: Expr) -> Expr {
        Expr::If(Box::new(c), Box::new(a), Box::new(b))
    }

    /// Number of tree nodes (size, not complexity).
    pub fn size(&self) -> usize {
        match self {
            Expr::Var(_) | Expr::Const(_) => 1,
            Expr::Un(_, a) => 1 + a.size(),
            Expr::Bin(_, a, b) => 1 + a.size() + b.size(),
            Expr::If(c, a, b) => 1 + c.size() + a.size() + b.size(),
        }
    }

    /// All constant values in depth-first order.
    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Const(v) = e {
                out.push(*v);
            }
        });
        out
    }

    /// Overwrite constants from `values`, depth-first order.
    pub fn set_constants(&mut self, values: &[f64]) {
        let mut i = 0;
        self.visit_mut(&mut |e| {
            if let Expr::Const(v) = e {
                *v = values[i];
                i += 1;
            }
        });
        debug_assert_eq!(i, values.len());
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Var(_) | Expr::Const(_) => {}
            Expr::Un(_, a) => a.visit(f),
            Expr::Bin(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::If(c, a, b) => {
                c.visit(f);
                a.visit(f);
                b.visit(f);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut impl FnMut(&mut Expr)) {
        f(self);
        match self {
            Expr::Var(_) | Expr::Const(_) => {}
            Expr::Un(_, a) => a.visit_mut(f),
            Expr::Bin(_, a, b) => {
                a.visit_mut(f);
                b.visit_mut(f);
            }
            Expr::If(c, a, b) => {
                c.visit_mut(f);
                a.visit_mut(f);
                b.visit_mut(f);
            }
        }
    }

    /// Canonical parenthesized infix form.
    pub fn to_infix(&self, names: &[String]) -> String {
        let mut s = String::new();
        self.write_infix(&mut s, names);
        s
    }

    fn write_infix(&self, out: &mut String, names: &[String]) {
        match self {
            Expr::Var(i) => {
                if let Some(n) = names.get(*i) {
                    out.push_str(n);
                } else {
                    let _ = write!(out, "x{i}");
                }
            }
            Expr::Const(v) => {
                let _ = write!(out, "{v}");
            }
            Expr::Un(op, a) => {
                out.push_str(op.symbol());
                out.push('(');
                a.write_infix(out, names);
                out.push(')');
            }
            Expr::Bin(op, a, b) => {
                out.push('(');
                a.write_infix(out, names);
                let _ = write!(out, " {} ", op.symbol());
                b.write_infix(out, names);
                out.push(')');
            }
            Expr::If(c, a, b) => {
                out.push_str("if(");
                c.write_infix(out, names);
                out.push_str(", ");
                a.write_infix(out, names);
                out.push_str(", ");
                b.write_infix(out, names);
                out.push(')');
            }
        }
    }

    fn max_var(&self) -> Option<usize> {
        let mut m = None;
        self.visit(&mut |e| {
            if let Expr::Var(i) = e {
                m = Some(m.map_or(*i, |cur: usize| cur.max(*i)));
            }
        });
        m
    }
}

/// Weighted complexity: constants, variables, and `+ - * / > <` count 1;
/// `pow exp log IF` count 3. Sum over all node occurrences.
pub fn complexity(expr: &Expr) -> usize {
    match expr {
        Expr::Var(_) | Expr::Const(_) => 1,
        Expr::Un(_, a) => 3 + complexity(a),
        Expr::Bin(op, a, b) => op.cost() + complexity(a) + complexity(b),
        Expr::If(c, a, b) => 3 + complexity(c) + complexity(a) + complexity(b),
    }
}

/// Evaluate on one row of variable bindings. Comparisons return 1/0,
/// `IF(c, a, b)` returns `a` when `c != 0`, and non-finite intermediate
/// values propagate.
pub fn eval_expr(expr: &Expr, row: &[f64]) -> Result<f64, SrError> {
    match expr {
        Expr::Var(i) => row
            .get(*i)
            .copied()
            .ok_or(SrError::UnboundVariable {
                index: *i,
                bound: row.len(),
            }),
        Expr::Const(v) => Ok(*v),
        Expr::Un(op, a) => Ok(op.apply(eval_expr(a, row)?)),
        Expr::Bin(op, a, b) => Ok(op.apply(eval_expr(a, row)?, eval_expr(b, row)?)),
        Expr::If(c, a, b) => {
            if eval_expr(c, row)? != 0.0 {
                eval_expr(a, row)
            } else {
                eval_expr(b, row)
            }
        }
    }
}

/// A regression table: named columns plus a target column.
#[derive(Debug, Clone)]
pub struct SrDataset {
    pub var_names: Vec<String>,
    /// Column-major values, one inner `Vec` per variable.
    pub columns: Vec<Vec<f64>>,
    pub target: Vec<f64>,
}

impl SrDataset {
    pub fn new(var_names: Vec<String>, columns: Vec<Vec<f64>>, target: Vec<f64>) -> SrDataset {
        assert_eq!(var_names.len(), columns.len());
        assert!(columns.iter().all(|c| c.len() == target.len()));
        SrDataset {
            var_names,
            columns,
            target,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    /// Read a CSV with a header row; `target` names the column to predict
    /// and every other column becomes a variable.
    pub fn from_csv(path: &std::path::Path, target: &str) -> Result<SrDataset, SrError> {
        let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let target_idx = headers
            .iter()
            .position(|h| h == target)
            .ok_or_else(|| SrError::Schema(format!("target column '{target}' not found")))?;
        let var_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target_idx)
            .map(|(_, h)| h.clone())
            .collect();
        let mut columns = vec![Vec::new(); var_names.len()];
        let mut target_col = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(csv_err)?;
            if record.len() != headers.len() {
                return Err(SrError::Schema(format!(
                    "row {} has {} fields, expected {}",
                    line + 2,
                    record.len(),
                    headers.len()
                )));
            }
            let mut k = 0;
            for (i, field) in record.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    SrError::Schema(format!("row {}: bad number '{field}'", line + 2))
                })?;
                if i == target_idx {
                    target_col.push(v);
                } else {
                    columns[k].push(v);
                    k += 1;
                }
            }
        }
        Ok(SrDataset::new(var_names, columns, target_col))
    }
}

fn csv_err(e: csv::Error) -> SrError {
    SrError::Schema(e.to_string())
}

/// Column-wise evaluation over a whole dataset. `consts`, when given,
/// overrides the expression's constants in depth-first order.
pub fn eval_batch(
    expr: &Expr,
    data: &SrDataset,
    consts: Option<&[f64]>,
) -> Result<Vec<f64>, SrError> {
    if let Some(i) = expr.max_var() {
        if i >= data.n_vars() {
            return Err(SrError::UnboundVariable {
                index: i,
                bound: data.n_vars(),
            });
        }
    }
    let mut counter = 0;
    Ok(eval_batch_inner(expr, data, consts, &mut counter))
}

fn eval_batch_inner(
    expr: &Expr,
    data: &SrDataset,
    consts: Option<&[f64]>,
    counter: &mut usize,
) -> Vec<f64> {
    let n = data.n_rows();
    match expr {
        Expr::Var(i) => data.columns[*i].clone(),
        Expr::Const(v) => {
            let value = match consts {
                Some(c) => {
                    let v = c[*counter];
                    *counter += 1;
                    v
                }
                None => *v,
            };
            vec![value; n]
        }
        Expr::Un(op, a) => {
            let mut va = eval_batch_inner(a, data, consts, counter);
            for x in va.iter_mut() {
                *x = op.apply(*x);
            }
            va
        }
        Expr::Bin(op, a, b) => {
            let mut va = eval_batch_inner(a, data, consts, counter);
            let vb = eval_batch_inner(b, data, consts, counter);
            for (x, y) in va.iter_mut().zip(&vb) {
                *x = op.apply(*x, *y);
            }
            va
        }
        Expr::If(c, a, b) => {
            let vc = eval_batch_inner(c, data, consts, counter);
            let va = eval_batch_inner(a, data, consts, counter);
            let vb = eval_batch_inner(b, data, consts, counter);
            vc.iter()
                .zip(va.iter().zip(&vb))
                .map(|(c, (a, b))| if *c != 0.0 { *a } else { *b })
                .collect()
        }
    }
}

/// Mean absolute error against the dataset target; any non-finite
/// prediction poisons the fitness to +inf.
pub fn fitness(expr: &Expr, data: &SrDataset) -> f64 {
    fitness_with_consts(expr, data, None)
}

pub(crate) fn fitness_with_consts(expr: &Expr, data: &SrDataset, consts: Option<&[f64]>) -> f64 {
    let preds = match eval_batch(expr, data, consts) {
        Ok(p) => p,
        Err(_) => return f64::INFINITY,
    };
    let mut total = 0.0;
    for (p, t) in preds.iter().zip(&data.target) {
        if !p.is_finite() {
            return f64::INFINITY;
        }
        total += (p - t).abs();
    }
    total / data.n_rows() as f64
}

/// Locally optimize the expression's constants against MAE: Nelder-Mead
/// from the current values plus 3 random restarts. Never worse than the
/// input.
pub fn fit_constants(expr: &Expr, data: &SrDataset, rng: &mut impl Rng) -> (Expr, f64) {
    let theta0 = expr.constants();
    let base = fitness(expr, data);
    if theta0.is_empty() {
        return (expr.clone(), base);
    }
    let opts = NelderMeadOptions {
        max_iters: 200 * theta0.len(),
        ..Default::default()
    };
    let objective = |theta: &[f64]| fitness_with_consts(expr, data, Some(theta));
    let mut best_theta = theta0.clone();
    let mut best_val = base;
    for restart in 0..4 {
        let start: Vec<f64> = if restart == 0 {
            theta0.clone()
        } else {
            theta0
                .iter()
                .map(|v| {
                    let jitter: f64 = StandardNormal.sample(rng);
                    let offset: f64 = StandardNormal.sample(rng);
                    v * f64::exp(0.5 * jitter) + 0.1 * offset
                })
                .collect()
        };
        let (theta, val) = nelder_mead(objective, &start, &opts);
        if val < best_val {
            best_val = val;
            best_theta = theta;
        }
    }
    let mut out = expr.clone();
    out.set_constants(&best_theta);
    (out, best_val)
}

/// One Pareto-front entry: the best expression found at a complexity.
#[derive(Debug, Clone)]
pub struct FrontEntry {
    pub complexity: usize,
    pub mae: f64,
    pub expr: Expr,
}

/// Best expression at each complexity level, kept dominance-compacted:
/// MAE is strictly decreasing as complexity increases.
#[derive(Debug, Clone, Default)]
pub struct ParetoFront {
    entries: BTreeMap<usize, (f64, Expr)>,
}

impl ParetoFront {
    pub fn new() -> ParetoFront {
        ParetoFront::default()
    }

    /// Build a front from bare `(complexity, mae)` pairs; the expressions
    /// are placeholders. Used when scoring externally produced tables.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> ParetoFront {
        let mut front = ParetoFront::new();
        for &(c, mae) in pairs {
            front.entries.insert(c, (mae, Expr::Const(0.0)));
        }
        front.compact();
        front
    }

    /// Record an expression if it beats the incumbent at its complexity.
    /// Returns true when the front changed.
    pub fn record(&mut self, expr: &Expr, mae: f64) -> bool {
        if !mae.is_finite() {
            return false;
        }
        let c = complexity(expr);
        let improved = match self.entries.get(&c) {
            Some((best, _)) => mae < *best,
            None => true,
        };
        if improved {
            self.entries.insert(c, (mae, expr.clone()));
            self.compact();
        }
        improved
    }

    fn compact(&mut self) {
        let mut best = f64::INFINITY;
        let keys: Vec<usize> = self.entries.keys().copied().collect();
        for c in keys {
            let mae = self.entries[&c].0;
            if mae >= best {
                self.entries.remove(&c);
            } else {
                best = mae;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in ascending complexity order.
    pub fn entries(&self) -> Vec<FrontEntry> {
        self.entries
            .iter()
            .map(|(&complexity, (mae, expr))| FrontEntry {
                complexity,
                mae: *mae,
                expr: expr.clone(),
            })
            .collect()
    }

    pub fn best_mae(&self) -> Option<f64> {
        self.entries.values().map(|(m, _)| *m).fold(None, |acc, m| {
            Some(acc.map_or(m, |a: f64| a.min(m)))
        })
    }

    pub fn to_rows(&self, names: &[String]) -> Vec<FrontRow> {
        self.entries()
            .into_iter()
            .map(|e| FrontRow {
                complexity: e.complexity,
                mae: e.mae,
                expr_infix: e.expr.to_infix(names),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontRow {
    pub complexity: usize,
    pub mae: f64,
    pub expr_infix: String,
}

/// Occam selection: over entries sorted by complexity, score each entry
/// against its predecessor by `(log MAE_prev - log MAE_c) / (c - c_prev)`
/// and return the maximizer. Ties go to the lower complexity.
pub fn select_model(front: &ParetoFront) -> Result<FrontEntry, SrError> {
    let entries = front.entries();
    if entries.len() < 2 {
        return Err(SrError::InsufficientFront {
            len: entries.len(),
        });
    }
    let mut best: Option<(f64, usize)> = None;
    for i in 1..entries.len() {
        let prev = &entries[i - 1];
        let cur = &entries[i];
        let score = (prev.mae.ln() - cur.mae.ln()) / (cur.complexity - prev.complexity) as f64;
        let better = match best {
            Some((s, _)) => score > s,
            None => true,
        };
        if better {
            best = Some((score, i));
        }
    }
    Ok(entries[best.unwrap().1].clone())
}

#[cfg(test)]
mod tests;
