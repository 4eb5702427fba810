use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use symdistill_core::derive_rng;
use symdistill_core::distill::{affine_aligned_rel_mae, toy_generate, toy_true_g};
use symdistill_core::nn::{adam_step, AdamState, GradTape, LrSchedule, MlpParams};
use rand::seq::SliceRandom;
use std::rc::Rc;

fn main() {
    for (epochs, hidden, n_train) in [(40usize, 64usize, 1200usize), (120, 128, 2000)] {
        let mut rng = derive_rng(0, 405);
        let (train_x, train_z) = toy_generate(n_train, &mut rng);
        let z_mean = train_z.iter().sum::<f64>() / train_z.len() as f64;
        let z_var = train_z.iter().map(|z| (z - z_mean) * (z - z_mean)).sum::<f64>() / train_z.len() as f64;
        let z_std = z_var.sqrt();
        let mut g = MlpParams::init(&[5, hidden, hidden, 1], &mut rng);
        let mut f = MlpParams::init(&[1, hidden, hidden, 1], &mut rng);
        let batch = 32;
        let n_batches = train_x.len().div_ceil(batch);
        let mut params: Vec<f64> = g.flat();
        params.extend(f.flat());
        let mut adam = AdamState::new(params.len(), LrSchedule::decaying(epochs * n_batches));
        let g_len = g.n_params();
        let mut indices: Vec<usize> = (0..train_x.len()).collect();
        let t0 = std::time::Instant::now();
        for _ in 0..epochs {
            indices.shuffle(&mut rng);
            for chunk in indices.chunks(batch) {
                let b = chunk.len();
                let mut stacked = Array2::zeros((b * 100, 5));
                let mut series_of_row = Vec::with_capacity(b * 100);
                let mut targets = Array2::zeros((b, 1));
                for (bi, &i) in chunk.iter().enumerate() {
                    stacked.slice_mut(ndarray::s![bi * 100..(bi + 1) * 100, ..]).assign(&train_x[i]);
                    series_of_row.extend(std::iter::repeat_n(bi, 100));
                    targets[(bi, 0)] = (train_z[i] - z_mean) / z_std;
                }
                let mut tape = GradTape::new();
                let g_nodes = g.leaf_on(&mut tape);
                let f_nodes = f.leaf_on(&mut tape);
                let x = tape.leaf(stacked);
                let g_out = g.forward_on(&mut tape, &g_nodes, x);
                let summed = tape.scatter_add_rows(g_out, Rc::new(series_of_row), b);
                let pred = f.forward_on(&mut tape, &f_nodes, summed);
                let t = tape.leaf(targets);
                let loss = tape.mae_rows(pred, t);
                let mut wrt = g_nodes.all();
                wrt.extend(f_nodes.all());
                let grads = tape.backward(loss, &wrt).unwrap();
                let flat: Vec<f64> = grads.iter().flat_map(|gr| gr.iter().copied()).collect();
                adam_step(&mut adam, &mut params, &flat).unwrap();
                g.set_flat(&params[..g_len]).unwrap();
                f.set_flat(&params[g_len..]).unwrap();
            }
        }
        // alignment of the MLP's learned inner function vs the generator
        let mut inputs = Array2::zeros((2000, 5));
        for mut row in inputs.rows_mut() {
            for v in row.iter_mut() { *v = StandardNormal.sample(&mut rng); }
        }
        let ghat = g.forward_batch(&inputs);
        let pred: Vec<f64> = ghat.column(0).to_vec();
        let truth: Vec<f64> = inputs.rows().into_iter().map(|r| toy_true_g(r.as_slice().unwrap())).collect();
        println!("epochs {epochs} hidden {hidden} n {n_train}: mlp-g aligned rel mae = {:.4} ({:?})",
                 affine_aligned_rel_mae(&pred, &truth), t0.elapsed());
    }
}
