//! Nelder-Mead simplex minimization.
//!
//! Used for constant optimization inside the symbolic regression engine
//! and for refitting formula constants on halo catalogs. Objectives may
//! return non-finite values; those are treated as +inf so the simplex
//! walks away from them.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            max_iters: 400,
            f_tol: 1e-12,
            x_tol: 1e-10,
        }
    }
}

/// Minimize `f` starting from `x0`. Returns the best point found and its
/// objective value; never returns a point worse than `x0`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let v = eval(x0);
        return (x0.to_vec(), v);
    }

    // initial simplex: x0 plus a 5% step along each axis
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if p[i] != 0.0 { 0.05 * p[i] } else { 0.1 };
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    for _ in 0..opts.max_iters {
        // order best..worst
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let reorder: Vec<Vec<f64>> = idx.iter().map(|&i| simplex[i].clone()).collect();
        let revals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
        simplex = reorder;
        values = revals;

        let f_spread = values[n] - values[0];
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if f_spread.is_finite()
            && f_spread <= opts.f_tol * (values[0].abs() + 1e-30)
            && x_spread <= opts.x_tol
        {
            break;
        }

        // centroid of all but the worst
        let mut centroid = vec![0.0; n];
        for p in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
        };

        let reflected = lerp(&centroid, &simplex[n], -alpha);
        let f_ref = eval(&reflected);
        if f_ref < values[0] {
            let expanded = lerp(&centroid, &simplex[n], -alpha * gamma);
            let f_exp = eval(&expanded);
            if f_exp < f_ref {
                simplex[n] = expanded;
                values[n] = f_exp;
            } else {
                simplex[n] = reflected;
                values[n] = f_ref;
            }
        } else if f_ref < values[n - 1] {
            simplex[n] = reflected;
            values[n] = f_ref;
        } else {
            let (contract_toward, f_toward) = if f_ref < values[n] {
                (reflected.clone(), f_ref)
            } else {
                (simplex[n].clone(), values[n])
            };
            let contracted = lerp(&centroid, &contract_toward, rho);
            let f_con = eval(&contracted);
            if f_con < f_toward {
                simplex[n] = contracted;
                values[n] = f_con;
            } else {
                // shrink toward the best point
                for i in 1..=n {
                    simplex[i] = lerp(&simplex[0], &simplex[i], sigma);
                    values[i] = eval(&simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..=n {
        if values[i] < values[best] {
            best = i;
        }
    }
    (simplex[best].clone(), values[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.5).powi(2);
        let (x, v) = nelder_mead(f, &[0.0, 0.0], &NelderMeadOptions::default());
        assert!((x[0] - 3.0).abs() < 1e-5, "x0 = {}", x[0]);
        assert!((x[1] + 1.5).abs() < 1e-5, "x1 = {}", x[1]);
        assert!(v < 1e-9);
    }

    #[test]
    fn rosenbrock_2d_improves() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            max_iters: 2000,
            ..Default::default()
        };
        let (x, v) = nelder_mead(f, &[-1.2, 1.0], &opts);
        assert!(v < 1e-6, "v = {v}, x = {x:?}");
    }

    #[test]
    fn never_worse_than_start() {
        // objective is infinite except very near the start
        let f = |x: &[f64]| {
            if (x[0] - 1.0).abs() < 0.01 {
                x[0]
            } else {
                f64::INFINITY
            }
        };
        let (_, v) = nelder_mead(f, &[1.0], &NelderMeadOptions::default());
        assert!(v <= f(&[1.0]));
    }
}
