use super::*;
use crate::derive_rng;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_x(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Independent scalar-by-scalar MLP evaluation, the oracle for the
/// matrix-based forward pass.
fn naive_forward(params: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let mut out = vec![0.0; w.ncols()];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (i, hi) in h.iter().enumerate() {
                acc += hi * w[(i, j)];
            }
            *o = acc + b[j];
        }
        if l + 1 < params.weights.len() {
            for o in out.iter_mut() {
                *o = o.max(0.0);
            }
        }
        h = out;
    }
    h
}

#[test]
fn forward_zero_weights_returns_output_bias() {
    let mut params = MlpParams::zeros(&[3, 4, 4, 2]);
    params.biases[2] = Array1::from_vec(vec![0.7, -0.3]);
    let y = params.forward(&[1.0, -2.0, 5.0]).unwrap();
    assert_eq!(y, vec![0.7, -0.3]);
}

#[test]
fn forward_relu_kills_negative_path() {
    let mut params = MlpParams::zeros(&[1, 1, 1, 1]);
    for w in params.weights.iter_mut() {
        w[(0, 0)] = 1.0;
    }
    assert_eq!(params.forward(&[-1.0]).unwrap(), vec![0.0]);
    assert_eq!(params.forward(&[2.0]).unwrap(), vec![2.0]);
}

#[test]
fn forward_matches_naive_oracle() {
    let mut rng = derive_rng(21, 0);
    for _ in 0..20 {
        let params = MlpParams::init(&[5, 7, 6, 3], &mut rng);
        let x = random_x(&mut rng, 5);
        let y = params.forward(&x).unwrap();
        let oracle = naive_forward(&params, &x);
        for (a, b) in y.iter().zip(&oracle) {
            let rel = (a - b).abs() / b.abs().max(1e-12);
            assert!(rel < 1e-12, "rel err {rel}");
        }
    }
}

#[test]
fn forward_shape_mismatch() {
    let params = MlpParams::zeros(&[3, 4, 4, 2]);
    assert!(matches!(
        params.forward(&[1.0, 2.0]),
        Err(NnError::ShapeMismatch(_))
    ));
}

#[test]
fn param_gradient_of_constant_loss_is_zero() {
    let mut rng = derive_rng(22, 0);
    let params = MlpParams::init(&[3, 4, 4, 1], &mut rng);
    let g = param_gradient(&params, |tape, _| tape.leaf_scalar(5.0)).unwrap();
    assert_eq!(g.len(), params.n_params());
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn quadratic_loss_gradient_matches_hand_formula() {
    // loss = |W x|^2 for a single linear map; d loss / d W = 2 (W x) x^T
    let mut tape = GradTape::new();
    let w = tape.leaf(Array2::from_shape_vec((2, 3), vec![1.0, -2.0, 0.5, 0.3, 1.1, -0.7]).unwrap());
    let x = tape.leaf(Array2::from_shape_vec((3, 1), vec![0.4, -1.2, 2.0]).unwrap());
    let wx = tape.matmul(w, x);
    let sq = tape.mul(wx, wx);
    let loss = tape.sum_all(sq);
    let grads = tape.backward(loss, &[w]).unwrap();
    let wx_v = [
        1.0 * 0.4 + -2.0 * -1.2 + 0.5 * 2.0,
        0.3 * 0.4 + 1.1 * -1.2 + -0.7 * 2.0,
    ];
    let x_v = [0.4, -1.2, 2.0];
    for i in 0..2 {
        for j in 0..3 {
            let expect = 2.0 * wx_v[i] * x_v[j];
            assert!(
                (grads[0][(i, j)] - expect).abs() < 1e-12,
                "grad[{i},{j}] = {} expect {expect}",
                grads[0][(i, j)]
            );
        }
    }
}

/// Evaluate an MAE loss purely from the parameter vector, for finite
/// differencing.
fn mae_loss_of_flat(template: &MlpParams, flat: &[f64], x: &Array2<f64>, t: &Array2<f64>) -> f64 {
    let mut p = template.clone();
    p.set_flat(flat).unwrap();
    let y = p.forward_batch(x);
    (&y - t).mapv(f64::abs).sum() / x.nrows() as f64
}

/// Seeds whose pre-activations sit near a ReLU kink are skipped: the
/// finite-difference oracle is invalid within 1e-3 of a kink.
fn kink_free(params: &MlpParams, xs: &Array2<f64>) -> bool {
    xs.rows()
        .into_iter()
        .all(|x| {
            params
                .hidden_preactivations(x.as_slice().unwrap())
                .iter()
                .all(|z| z.abs() > 1e-3)
        })
}

#[test]
fn param_gradient_matches_finite_differences() {
    let mut checked = 0;
    let mut seed = 0u64;
    while checked < 10 {
        seed += 1;
        let mut rng = derive_rng(seed, 1);
        let params = MlpParams::init(&[4, 6, 6, 2], &mut rng);
        let x = Array2::from_shape_fn((3, 4), |_| StandardNormal.sample(&mut rng));
        let t = Array2::from_shape_fn((3, 2), |_| StandardNormal.sample(&mut rng));
        if !kink_free(&params, &x) {
            continue;
        }
        let grad = param_gradient(&params, |tape, nodes| {
            let x_node = tape.leaf(x.clone());
            let t_node = tape.leaf(t.clone());
            let y = params.forward_on(tape, nodes, x_node);
            tape.mae_rows(y, t_node)
        })
        .unwrap();
        let flat = params.flat();
        let eps = 1e-5;
        for i in 0..flat.len() {
            let mut hi = flat.clone();
            let mut lo = flat.clone();
            hi[i] += eps;
            lo[i] -= eps;
            let fd = (mae_loss_of_flat(&params, &hi, &x, &t)
                - mae_loss_of_flat(&params, &lo, &x, &t))
                / (2.0 * eps);
            let scale = grad[i].abs().max(fd.abs()).max(1e-8);
            assert!(
                (grad[i] - fd).abs() / scale < 1e-4,
                "seed {seed} param {i}: grad {} vs fd {fd}",
                grad[i]
            );
        }
        checked += 1;
    }
}

#[test]
fn input_gradient_linear_net_returns_weights() {
    // build w^T x by zeroing hidden nonlinearity effects: single path with
    // identity-like positive weights only works past ReLU for positive
    // activations, so use the tape check instead for exactness: a 1-layer
    // linear map via MlpParams with wide positive first weights is not
    // exactly w^T x. Instead construct output = 2*x0 + 3*x1 using ReLU(x)
    // - ReLU(-x) = x decomposition.
    let mut params = MlpParams::zeros(&[2, 4, 4, 1]);
    // hidden layer 1: [x0+, x0-, x1+, x1-]
    params.weights[0][(0, 0)] = 1.0;
    params.weights[0][(0, 1)] = -1.0;
    params.weights[0][(1, 2)] = 1.0;
    params.weights[0][(1, 3)] = -1.0;
    // hidden layer 2 passes each through (all non-negative already)
    for i in 0..4 {
        params.weights[1][(i, i)] = 1.0;
    }
    // output: 2*(x0+ - x0-) + 3*(x1+ - x1-)
    params.weights[2][(0, 0)] = 2.0;
    params.weights[2][(1, 0)] = -2.0;
    params.weights[2][(2, 0)] = 3.0;
    params.weights[2][(3, 0)] = -3.0;
    let g = input_gradient(&params, &[0.7, -0.4]).unwrap();
    assert!((g[0] - 2.0).abs() < 1e-12);
    assert!((g[1] - 3.0).abs() < 1e-12);
}

#[test]
fn input_gradient_requires_scalar_output() {
    let params = MlpParams::zeros(&[2, 3, 3, 2]);
    assert!(matches!(
        input_gradient(&params, &[0.0, 0.0]),
        Err(NnError::NonScalarOutput { output_size: 2 })
    ));
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut checked = 0;
    let mut seed = 100u64;
    while checked < 10 {
        seed += 1;
        let mut rng = derive_rng(seed, 2);
        let params = MlpParams::init(&[5, 8, 8, 1], &mut rng);
        let x = random_x(&mut rng, 5);
        let xs = Array2::from_shape_vec((1, 5), x.clone()).unwrap();
        if !kink_free(&params, &xs) {
            continue;
        }
        let g = input_gradient(&params, &x).unwrap();
        let eps = 1e-5;
        for i in 0..x.len() {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[i] += eps;
            lo[i] -= eps;
            let fd = (params.forward(&hi).unwrap()[0] - params.forward(&lo).unwrap()[0])
                / (2.0 * eps);
            let scale = g[i].abs().max(fd.abs()).max(1e-8);
            assert!(
                (g[i] - fd).abs() / scale < 1e-4,
                "seed {seed} coord {i}: {} vs {fd}",
                g[i]
            );
        }
        checked += 1;
    }
}

#[test]
fn second_order_quadratic_closed_form() {
    // y = x A x^T; input gradient is x (A + A^T); with outer loss
    // sum(ig^2), d outer / d A_pq = 2 ig_q x_p + 2 ig_p x_q.
    let x_v = [0.3, -1.1, 0.8];
    let a_v = Array2::from_shape_vec(
        (3, 3),
        vec![0.5, -0.2, 1.0, 0.7, 0.1, -0.4, -0.9, 0.3, 0.6],
    )
    .unwrap();
    let mut tape = GradTape::new();
    let x = tape.leaf(Array2::from_shape_vec((1, 3), x_v.to_vec()).unwrap());
    let a = tape.leaf(a_v.clone());
    let xa = tape.matmul(x, a);
    let y = tape.matmul_nt(xa, x);
    let ig = tape.grad_nodes(y, &[x])[0];
    let sq = tape.mul(ig, ig);
    let outer = tape.sum_all(sq);
    let grads = tape.backward(outer, &[a]).unwrap();

    let mut ig_v = [0.0; 3];
    for j in 0..3 {
        for i in 0..3 {
            ig_v[j] += x_v[i] * (a_v[(i, j)] + a_v[(j, i)]);
        }
    }
    for p in 0..3 {
        for q in 0..3 {
            let expect = 2.0 * ig_v[q] * x_v[p] + 2.0 * ig_v[p] * x_v[q];
            assert!(
                (grads[0][(p, q)] - expect).abs() < 1e-12,
                "d outer / dA[{p},{q}] = {} expect {expect}",
                grads[0][(p, q)]
            );
        }
    }
}

#[test]
fn double_backprop_zero_for_input_independent_net() {
    // zero first-layer weights make the output independent of x, so the
    // input gradient is identically zero and so is the outer gradient of
    // sum(ig^2)
    let mut rng = derive_rng(33, 0);
    let mut params = MlpParams::init(&[3, 5, 5, 1], &mut rng);
    params.weights[0].fill(0.0);
    let x = Array2::from_shape_fn((4, 3), |_| StandardNormal.sample(&mut rng));
    let g = double_backprop_gradient(&params, &x, |tape, ig| {
        let sq = tape.mul(ig, ig);
        tape.sum_all(sq)
    })
    .unwrap();
    assert!(g.iter().all(|&v| v == 0.0));
}

#[test]
fn double_backprop_matches_finite_differences() {
    let outer_of_flat = |template: &MlpParams, flat: &[f64], x: &Array2<f64>| -> f64 {
        let mut p = template.clone();
        p.set_flat(flat).unwrap();
        let mut total = 0.0;
        for row in x.rows() {
            let ig = input_gradient(&p, row.as_slice().unwrap()).unwrap();
            total += ig.iter().map(|v| v * v).sum::<f64>();
        }
        total
    };
    let mut checked = 0;
    let mut seed = 200u64;
    while checked < 5 {
        seed += 1;
        let mut rng = derive_rng(seed, 3);
        let params = MlpParams::init(&[4, 6, 6, 1], &mut rng);
        let x = Array2::from_shape_fn((3, 4), |_| StandardNormal.sample(&mut rng));
        if !kink_free(&params, &x) {
            continue;
        }
        let grad = double_backprop_gradient(&params, &x, |tape, ig| {
            let sq = tape.mul(ig, ig);
            tape.sum_all(sq)
        })
        .unwrap();
        let flat = params.flat();
        let eps = 1e-5;
        for i in 0..flat.len() {
            let mut hi = flat.clone();
            let mut lo = flat.clone();
            hi[i] += eps;
            lo[i] -= eps;
            let fd =
                (outer_of_flat(&params, &hi, &x) - outer_of_flat(&params, &lo, &x)) / (2.0 * eps);
            let scale = grad[i].abs().max(fd.abs()).max(1e-6);
            assert!(
                (grad[i] - fd).abs() / scale < 1e-3,
                "seed {seed} param {i}: {} vs fd {fd}",
                grad[i]
            );
        }
        checked += 1;
    }
}

#[test]
fn tape_backward_is_single_use() {
    let mut tape = GradTape::new();
    let x = tape.leaf_scalar(2.0);
    let y = tape.mul(x, x);
    tape.backward(y, &[x]).unwrap();
    assert!(matches!(
        tape.backward(y, &[x]),
        Err(NnError::TapeExhausted)
    ));
}

#[test]
fn unused_leaf_gets_zero_adjoint() {
    let mut tape = GradTape::new();
    let x = tape.leaf_scalar(2.0);
    let unused = tape.leaf(Array2::from_elem((2, 2), 3.0));
    let y = tape.mul(x, x);
    let grads = tape.backward(y, &[unused]).unwrap();
    assert_eq!(grads[0], Array2::<f64>::zeros((2, 2)));
}

#[test]
fn adam_zero_gradient_keeps_params() {
    let mut state = AdamState::new(3, LrSchedule::constant(1e-3));
    let mut params = vec![1.0, -2.0, 0.5];
    adam_step(&mut state, &mut params, &[0.0, 0.0, 0.0]).unwrap();
    assert_eq!(params, vec![1.0, -2.0, 0.5]);
    assert_eq!(state.step, 1);
}

#[test]
fn adam_constant_gradient_moves_against_sign() {
    let mut state = AdamState::new(2, LrSchedule::constant(1e-2));
    let mut params = vec![0.0, 0.0];
    let grads = vec![3.0, -0.25];
    for _ in 0..500 {
        adam_step(&mut state, &mut params, &grads).unwrap();
    }
    // steady-state step approaches -lr * sign(g)
    assert!(params[0] < -4.0e-2 * 100.0);
    assert!(params[1] > 4.0e-2 * 100.0);
}

#[test]
fn adam_descends_quadratic() {
    let mut state = AdamState::new(1, LrSchedule::constant(1e-3));
    let mut params = vec![1.0];
    let mut losses = Vec::new();
    for _ in 0..200 {
        let g = 2.0 * params[0];
        losses.push(params[0] * params[0]);
        adam_step(&mut state, &mut params, &[g]).unwrap();
    }
    // monotone decrease after warmup
    for w in losses[10..].windows(2) {
        assert!(w[1] <= w[0] + 1e-15, "loss rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn adam_shape_mismatch() {
    let mut state = AdamState::new(2, LrSchedule::constant(1e-3));
    let mut params = vec![0.0, 0.0, 0.0];
    assert!(matches!(
        adam_step(&mut state, &mut params, &[0.0, 0.0, 0.0]),
        Err(NnError::ShapeMismatch(_))
    ));
}

#[test]
#[ignore = "timing probe, run by hand"]
fn bench_matmul() {
    let mut rng = derive_rng(1, 0);
    for (m, k, n) in [(96, 300, 300), (96, 12, 300), (96, 300, 100), (32, 300, 300)] {
        let a = Array2::from_shape_fn((m, k), |_| rng.random::<f64>());
        let b = Array2::from_shape_fn((k, n), |_| rng.random::<f64>());
        let start = std::time::Instant::now();
        let reps = 200;
        let mut acc = 0.0;
        for _ in 0..reps {
            acc += a.dot(&b)[(0, 0)];
        }
        let dt = start.elapsed().as_secs_f64();
        let gflops = (2.0 * m as f64 * k as f64 * n as f64 * reps as f64) / dt / 1e9;
        println!("[{m}x{k}x{n}] {gflops:.2} GFLOPS (acc {acc:.3})");
    }
}
