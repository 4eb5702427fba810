//! The genetic-programming search loop.

use super::{
    eval_batch, fit_constants, fitness, BinOp, Expr, ParetoFront, SrDataset, SrError, UnOp,
};
use crate::derive_rng;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Which operators the search may use.
#[derive(Debug, Clone)]
pub struct OpSet {
    pub binary: Vec<BinOp>,
    pub unary: Vec<UnOp>,
    pub use_if: bool,
}

impl Default for OpSet {
    fn default() -> Self {
        OpSet {
            binary: BinOp::ALL.to_vec(),
            unary: UnOp::ALL.to_vec(),
            use_if: true,
        }
    }
}

impl OpSet {
    /// Parse a comma-separated list like `+,-,*,/,pow,exp,log,if,gt,lt`.
    pub fn parse(spec: &str) -> Result<OpSet, SrError> {
        let mut ops = OpSet {
            binary: Vec::new(),
            unary: Vec::new(),
            use_if: false,
        };
        for tok in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            match tok {
                "+" | "add" => ops.binary.push(BinOp::Add),
                "-" | "sub" => ops.binary.push(BinOp::Sub),
                "*" | "mul" => ops.binary.push(BinOp::Mul),
                "/" | "div" => ops.binary.push(BinOp::Div),
                "pow" | "^" => ops.binary.push(BinOp::Pow),
                "gt" | ">" => ops.binary.push(BinOp::Gt),
                "lt" | "<" => ops.binary.push(BinOp::Lt),
                "exp" => ops.unary.push(UnOp::Exp),
                "log" => ops.unary.push(UnOp::Log),
                "if" => ops.use_if = true,
                other => {
                    return Err(SrError::Schema(format!("unknown operator '{other}'")))
                }
            }
        }
        if ops.binary.is_empty() {
            return Err(SrError::Schema("operator set has no binary operators".into()));
        }
        Ok(ops)
    }
}

/// Search hyperparameters. The mutation probabilities must sum to at most
/// one; the remainder is plain reproduction of the tournament winner.
#[derive(Debug, Clone)]
pub struct GpConfig {
    pub population: usize,
    pub generations: usize,
    pub max_size: usize,
    pub tournament: usize,
    pub p_op_swap: f64,
    pub p_insert: f64,
    pub p_to_const: f64,
    pub p_const_perturb: f64,
    pub p_crossover: f64,
    /// Reinsert hall-of-fame (front) members every this many generations.
    pub hof_interval: usize,
    /// Polish front constants with Nelder-Mead every this many generations.
    pub const_opt_interval: usize,
    pub ops: OpSet,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population: 1000,
            generations: 200,
            max_size: 30,
            tournament: 10,
            p_op_swap: 0.3,
            p_insert: 0.2,
            p_to_const: 0.1,
            p_const_perturb: 0.3,
            p_crossover: 0.1,
            hof_interval: 50,
            const_opt_interval: 25,
            ops: OpSet::default(),
            seed: 0,
        }
    }
}

impl GpConfig {
    fn validate(&self) -> Result<(), SrError> {
        if self.generations == 0 {
            return Err(SrError::BudgetZero);
        }
        let p = self.p_op_swap + self.p_insert + self.p_to_const + self.p_const_perturb
            + self.p_crossover;
        assert!(p <= 1.0 + 1e-12, "mutation probabilities sum to {p} > 1");
        assert!(self.population >= 2, "population must be at least 2");
        Ok(())
    }
}

/// Evolve a population against the dataset and return the Pareto front.
/// Deterministic given the config seed.
pub fn evolve(data: &SrDataset, config: &GpConfig) -> Result<ParetoFront, SrError> {
    config.validate()?;
    let mut rng = derive_rng(config.seed, 17);
    let n_vars = data.n_vars();
    let ranges: Vec<(f64, f64)> = data
        .columns
        .iter()
        .map(|c| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in c {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        })
        .collect();
    let gen_ctx = GenCtx {
        ops: &config.ops,
        n_vars,
        ranges: &ranges,
    };

    let mut front = ParetoFront::new();

    // seed with the MAE-optimal constant predictor (the target median)
    let mut sorted = data.target.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.is_empty() {
        0.0
    } else {
        sorted[sorted.len() / 2]
    };

    let mut pop: Vec<Expr> = Vec::with_capacity(config.population);
    pop.push(Expr::Const(median));
    while pop.len() < config.population {
        let depth = 1 + (pop.len() % 4);
        pop.push(gen_ctx.random_expr(&mut rng, depth));
    }
    let mut fits: Vec<f64> = pop.par_iter().map(|e| fitness(e, data)).collect();
    for (e, f) in pop.iter().zip(&fits) {
        front.record(e, *f);
    }

    for generation in 0..config.generations {
        let mut next: Vec<Expr> = Vec::with_capacity(config.population);
        for _ in 0..config.population {
            let u: f64 = rng.random();
            let parent = tournament(&pop, &fits, config.tournament, &mut rng).clone();
            let mut child = if u < config.p_op_swap {
                gen_ctx.mutate_op_swap(parent, &mut rng)
            } else if u < config.p_op_swap + config.p_insert {
                gen_ctx.mutate_insert(parent, &mut rng)
            } else if u < config.p_op_swap + config.p_insert + config.p_to_const {
                gen_ctx.mutate_to_const(parent, data, &mut rng)
            } else if u
                < config.p_op_swap + config.p_insert + config.p_to_const + config.p_const_perturb
            {
                gen_ctx.mutate_const_perturb(parent, &mut rng)
            } else if u
                < config.p_op_swap
                    + config.p_insert
                    + config.p_to_const
                    + config.p_const_perturb
                    + config.p_crossover
            {
                let other = tournament(&pop, &fits, config.tournament, &mut rng).clone();
                gen_ctx.crossover(parent, &other, &mut rng)
            } else {
                parent
            };
            if child.size() > config.max_size {
                child = tournament(&pop, &fits, config.tournament, &mut rng).clone();
            }
            next.push(child);
        }
        pop = next;
        fits = pop.par_iter().map(|e| fitness(e, data)).collect();
        for (e, f) in pop.iter().zip(&fits) {
            front.record(e, *f);
        }

        if (generation + 1) % config.const_opt_interval == 0 {
            polish_front(&mut front, data, &mut rng);
        }
        if (generation + 1) % config.hof_interval == 0 {
            reinsert_hall_of_fame(&front, &mut pop, &mut fits, data);
        }
    }
    polish_front(&mut front, data, &mut rng);
    Ok(front)
}

/// Nelder-Mead polish of every front entry; improved entries re-enter the
/// front (possibly at the same complexity, since constant values do not
/// change complexity).
fn polish_front(front: &mut ParetoFront, data: &SrDataset, rng: &mut impl Rng) {
    for entry in front.entries() {
        if entry.expr.constants().is_empty() {
            continue;
        }
        let (better, mae) = fit_constants(&entry.expr, data, rng);
        front.record(&better, mae);
    }
}

/// Replace the worst individuals with the current front members.
fn reinsert_hall_of_fame(
    front: &ParetoFront,
    pop: &mut [Expr],
    fits: &mut [f64],
    data: &SrDataset,
) {
    let entries = front.entries();
    if entries.is_empty() {
        return;
    }
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.sort_by(|&a, &b| fits[b].total_cmp(&fits[a]));
    for (slot, entry) in order.iter().zip(entries.iter()) {
        pop[*slot] = entry.expr.clone();
        fits[*slot] = fitness(&entry.expr, data);
    }
}

fn tournament<'a>(
    pop: &'a [Expr],
    fits: &[f64],
    size: usize,
    rng: &mut impl Rng,
) -> &'a Expr {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..size {
        let challenger = rng.random_range(0..pop.len());
        if fits[challenger] < fits[best] {
            best = challenger;
        }
    }
    &pop[best]
}

struct GenCtx<'a> {
    ops: &'a OpSet,
    n_vars: usize,
    /// Observed [min, max] per variable, used to draw useful comparison
    /// thresholds.
    ranges: &'a [(f64, f64)],
}

impl GenCtx<'_> {
    fn random_leaf(&self, rng: &mut impl Rng) -> Expr {
        if self.n_vars > 0 && rng.random::<f64>() < 0.6 {
            Expr::Var(rng.random_range(0..self.n_vars))
        } else {
            let v: f64 = StandardNormal.sample(rng);
            Expr::Const(2.0 * v)
        }
    }

    fn random_expr(&self, rng: &mut impl Rng, depth: usize) -> Expr {
        if depth == 0 {
            return self.random_leaf(rng);
        }
        let u: f64 = rng.random();
        if u < 0.20 {
            self.random_leaf(rng)
        } else if u < 0.30 && !self.ops.unary.is_empty() {
            let op = *self.ops.unary.choose(rng).unwrap();
            Expr::un(op, self.random_expr(rng, depth - 1))
        } else if u < 0.36 && self.ops.use_if {
            Expr::if_expr(
                self.random_condition(rng),
                self.random_expr(rng, depth - 1),
                self.random_expr(rng, depth - 1),
            )
        } else {
            let op = *self.ops.binary.choose(rng).unwrap();
            Expr::bin(
                op,
                self.random_expr(rng, depth - 1),
                self.random_expr(rng, depth - 1),
            )
        }
    }

    /// A comparison of a random variable against a threshold drawn from
    /// that variable's observed range.
    fn random_condition(&self, rng: &mut impl Rng) -> Expr {
        if self.n_vars == 0 {
            return Expr::Const(1.0);
        }
        let v = rng.random_range(0..self.n_vars);
        let (lo, hi) = self.ranges[v];
        let threshold = if lo.is_finite() && hi.is_finite() && hi > lo {
            rng.random_range(lo..hi)
        } else {
            StandardNormal.sample(rng)
        };
        let op = if rng.random::<bool>() { BinOp::Gt } else { BinOp::Lt };
        Expr::bin(op, Expr::Var(v), Expr::Const(threshold))
    }

    /// Swap one operator for another of the same arity. An IF node swaps
    /// its branches instead.
    fn mutate_op_swap(&self, mut expr: Expr, rng: &mut impl Rng) -> Expr {
        let n = expr.size();
        let pick = rng.random_range(0..n);
        let mut i = 0;
        expr.visit_mut(&mut |e| {
            if i == pick {
                match e {
                    Expr::Bin(op, _, _) => {
                        if let Some(new) = self.ops.binary.choose(rng) {
                            *op = *new;
                        }
                    }
                    Expr::Un(op, _) => {
                        if let Some(new) = self.ops.unary.choose(rng) {
                            *op = *new;
                        }
                    }
                    Expr::If(_, a, b) => std::mem::swap(a, b),
                    _ => {}
                }
            }
            i += 1;
        });
        expr
    }

    /// Wrap a random subtree in a new operator.
    fn mutate_insert(&self, mut expr: Expr, rng: &mut impl Rng) -> Expr {
        let n = expr.size();
        let pick = rng.random_range(0..n);
        let mut i = 0;
        // leaves for the fresh argument are generated before the walk so
        // the closure does not capture rng twice
        let leaf = self.random_leaf(rng);
        let choice: f64 = rng.random();
        let unary_op = self.ops.unary.choose(rng).copied();
        let binary_op = self.ops.binary.choose(rng).copied();
        let cond = if self.ops.use_if {
            Some(self.random_condition(rng))
        } else {
            None
        };
        let left: bool = rng.random();
        expr.visit_mut(&mut |e| {
            if i == pick {
                let old = std::mem::replace(e, Expr::Const(0.0));
                *e = if choice < 0.15 && unary_op.is_some() {
                    Expr::un(unary_op.unwrap(), old)
                } else if choice < 0.30 && cond.is_some() {
                    Expr::if_expr(cond.clone().unwrap(), old, leaf.clone())
                } else if let Some(op) = binary_op {
                    if left {
                        Expr::bin(op, old, leaf.clone())
                    } else {
                        Expr::bin(op, leaf.clone(), old)
                    }
                } else {
                    old
                };
            }
            i += 1;
        });
        expr
    }

    /// Replace a random subtree with the constant equal to its mean value
    /// over the dataset (or a random constant if that is not finite).
    fn mutate_to_const(&self, mut expr: Expr, data: &SrDataset, rng: &mut impl Rng) -> Expr {
        let n = expr.size();
        let pick = rng.random_range(0..n);
        let fallback: f64 = {
            let v: f64 = StandardNormal.sample(rng);
            2.0 * v
        };
        let mut i = 0;
        expr.visit_mut(&mut |e| {
            if i == pick {
                let value = match eval_batch(e, data, None) {
                    Ok(vals) => {
                        let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
                        if mean.is_finite() {
                            mean
                        } else {
                            fallback
                        }
                    }
                    Err(_) => fallback,
                };
                *e = Expr::Const(value);
            }
            i += 1;
        });
        expr
    }

    /// Multiply one constant by exp(Normal(0, 0.5)).
    fn mutate_const_perturb(&self, mut expr: Expr, rng: &mut impl Rng) -> Expr {
        let mut const_positions = Vec::new();
        let mut i = 0;
        expr.visit(&mut |e| {
            if matches!(e, Expr::Const(_)) {
                const_positions.push(i);
            }
            i += 1;
        });
        let Some(&pick) = const_positions.as_slice().choose(rng) else {
            return expr;
        };
        let jitter: f64 = StandardNormal.sample(rng);
        let factor = f64::exp(0.5 * jitter);
        let mut j = 0;
        expr.visit_mut(&mut |e| {
            if j == pick {
                if let Expr::Const(v) = e {
                    *v *= factor;
                }
            }
            j += 1;
        });
        expr
    }

    /// Replace a random subtree of `a` with a random subtree of `b`.
    fn crossover(&self, mut a: Expr, b: &Expr, rng: &mut impl Rng) -> Expr {
        let donor = random_subtree(b, rng).clone();
        let n = a.size();
        let pick = rng.random_range(0..n);
        let mut i = 0;
        a.visit_mut(&mut |e| {
            if i == pick {
                *e = donor.clone();
            }
            i += 1;
        });
        a
    }
}

fn random_subtree<'a>(expr: &'a Expr, rng: &mut impl Rng) -> &'a Expr {
    let pick = rng.random_range(0..expr.size());
    subtree_at(expr, pick)
}

/// Preorder-indexed subtree lookup, matching the visit order used by the
/// mutation operators.
fn subtree_at(expr: &Expr, pick: usize) -> &Expr {
    fn go<'a>(e: &'a Expr, i: &mut usize, pick: usize) -> Option<&'a Expr> {
        if *i == pick {
            return Some(e);
        }
        *i += 1;
        match e {
            Expr::Var(_) | Expr::Const(_) => None,
            Expr::Un(_, a) => go(a, i, pick),
            Expr::Bin(_, a, b) => go(a, i, pick).or_else(|| go(b, i, pick)),
            Expr::If(c, a, b) => go(c, i, pick)
                .or_else(|| go(a, i, pick))
                .or_else(|| go(b, i, pick)),
        }
    }
    go(expr, &mut 0, pick).expect("pick < size")
}

/// The best complexity-1 MAE a constant predictor can reach: the MAE at
/// the target median.
pub fn constant_baseline(data: &SrDataset) -> f64 {
    let mut sorted = data.target.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        return 0.0;
    }
    let median = sorted[sorted.len() / 2];
    data.target.iter().map(|t| (t - median).abs()).sum::<f64>() / data.target.len() as f64
}
