//! Two-hidden-layer perceptrons.

use super::tape::{GradTape, NodeId};
use super::NnError;
use ndarray::{Array1, Array2};
use rand::Rng;

/// Weights and biases of a ReLU MLP with two hidden layers: three affine
/// maps, ReLU after the first two, identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    /// `weights[l]` has shape `[in, out]`, so forward is `x . W + b`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpParams {
    /// Uniform init in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(layer_sizes: &[usize], rng: &mut impl Rng) -> MlpParams {
        assert_eq!(layer_sizes.len(), 4, "expected exactly two hidden layers");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::zeros(fan_out));
        }
        MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        }
    }

    /// All-zero parameters (useful for constructed cases in tests).
    pub fn zeros(layer_sizes: &[usize]) -> MlpParams {
        assert_eq!(layer_sizes.len(), 4, "expected exactly two hidden layers");
        MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes
                .windows(2)
                .map(|w| Array2::zeros((w[0], w[1])))
                .collect(),
            biases: layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Forward pass for a single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.in_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "input length {} != layer size {}",
                x.len(),
                self.in_dim()
            )));
        }
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        Ok(self.forward_batch(&x).row(0).to_vec())
    }

    /// Forward pass for a `[batch, in]` matrix without taping.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Array2<f64> {
        let n_layers = self.weights.len();
        let mut h = x.dot(&self.weights[0]) + &self.biases[0];
        for l in 1..n_layers {
            h.mapv_inplace(|v| v.max(0.0));
            h = h.dot(&self.weights[l]) + &self.biases[l];
        }
        h
    }

    /// Pre-activation values of both hidden layers for one input, used by
    /// tests to keep finite differences away from ReLU kinks.
    pub fn hidden_preactivations(&self, x: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap();
        let z1 = x.dot(&self.weights[0]) + &self.biases[0];
        let h1 = z1.mapv(|v| v.max(0.0));
        let z2 = h1.dot(&self.weights[1]) + &self.biases[1];
        z1.into_iter().chain(z2).collect()
    }

    /// Register the parameters as tape leaves.
    pub fn leaf_on(&self, tape: &mut GradTape) -> MlpNodes {
        MlpNodes {
            weights: self.weights.iter().map(|w| tape.leaf(w.clone())).collect(),
            biases: self
                .biases
                .iter()
                .map(|b| {
                    let row = Array2::from_shape_vec((1, b.len()), b.to_vec()).unwrap();
                    tape.leaf(row)
                })
                .collect(),
        }
    }

    /// Taped forward pass for a `[batch, in]` node.
    pub fn forward_on(&self, tape: &mut GradTape, nodes: &MlpNodes, x: NodeId) -> NodeId {
        let n_layers = nodes.weights.len();
        let mut h = x;
        for l in 0..n_layers {
            let z = tape.matmul(h, nodes.weights[l]);
            h = tape.add_row_vec(z, nodes.biases[l]);
            if l + 1 < n_layers {
                h = tape.relu(h);
            }
        }
        h
    }

    /// Concatenation of all parameters, layer by layer, weights before
    /// biases. The checkpoint format stores exactly this order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.n_params() {
            return Err(NnError::ShapeMismatch(format!(
                "flat parameter length {} != {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for v in w.iter_mut() {
                *v = flat[off];
                off += 1;
            }
            for v in b.iter_mut() {
                *v = flat[off];
                off += 1;
            }
        }
        Ok(())
    }
}

/// Tape node ids of one MLP's parameters.
pub struct MlpNodes {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

impl MlpNodes {
    pub fn all(&self) -> Vec<NodeId> {
        let mut v = Vec::with_capacity(self.weights.len() * 2);
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.push(*w);
            v.push(*b);
        }
        v
    }
}

/// Exact reverse-mode gradient of a scalar loss with respect to every
/// parameter, flattened in checkpoint order.
pub fn param_gradient(
    params: &MlpParams,
    loss: impl FnOnce(&mut GradTape, &MlpNodes) -> NodeId,
) -> Result<Vec<f64>, NnError> {
    let mut tape = GradTape::new();
    let nodes = params.leaf_on(&mut tape);
    let loss_node = loss(&mut tape, &nodes);
    let grads = tape.backward(loss_node, &nodes.all())?;
    Ok(grads.iter().flat_map(|g| g.iter().copied()).collect())
}

/// Gradient of a scalar-output network with respect to its input.
pub fn input_gradient(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>, NnError> {
    if params.out_dim() != 1 {
        return Err(NnError::NonScalarOutput {
            output_size: params.out_dim(),
        });
    }
    if x.len() != params.in_dim() {
        return Err(NnError::ShapeMismatch(format!(
            "input length {} != layer size {}",
            x.len(),
            params.in_dim()
        )));
    }
    let mut tape = GradTape::new();
    let nodes = params.leaf_on(&mut tape);
    let x_node = tape.leaf(Array2::from_shape_vec((1, x.len()), x.to_vec()).unwrap());
    let y = params.forward_on(&mut tape, &nodes, x_node);
    let grads = tape.backward(y, &[x_node])?;
    Ok(grads[0].iter().copied().collect())
}

/// Gradient of an outer loss — itself a function of the network's input
/// gradients — with respect to the parameters. The first backward pass is
/// taped, so differentiating through it is exact.
pub fn double_backprop_gradient(
    params: &MlpParams,
    x_batch: &Array2<f64>,
    outer: impl FnOnce(&mut GradTape, NodeId) -> NodeId,
) -> Result<Vec<f64>, NnError> {
    if params.out_dim() != 1 {
        return Err(NnError::NonScalarOutput {
            output_size: params.out_dim(),
        });
    }
    if x_batch.ncols() != params.in_dim() {
        return Err(NnError::ShapeMismatch(format!(
            "input width {} != layer size {}",
            x_batch.ncols(),
            params.in_dim()
        )));
    }
    let mut tape = GradTape::new();
    let nodes = params.leaf_on(&mut tape);
    let x_node = tape.leaf(x_batch.clone());
    let y = params.forward_on(&mut tape, &nodes, x_node);
    // rows are independent, so the input gradient of the summed output is
    // the per-row input gradient
    let total = tape.sum_all(y);
    let input_grads = tape.grad_nodes(total, &[x_node])[0];
    let outer_loss = outer(&mut tape, input_grads);
    let grads = tape.backward(outer_loss, &nodes.all())?;
    Ok(grads.iter().flat_map(|g| g.iter().copied()).collect())
}
