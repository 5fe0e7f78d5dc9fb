//! Forward and reverse passes through a [`NetParams`] MLP.
//!
//! Hidden layers use ReLU, the output layer is linear. The forward pass
//! records every layer's output on a [`Tape`]; that is all the reverse pass
//! needs, since `relu'(z) = 1[a > 0]` can be read off the post-activation.

use super::matrix::{matmul, matmul_a_bt, matmul_at_b, Matrix};
use super::params::{Gradients, NetParams};
use super::NnError;

/// Activations recorded by [`forward`].
#[derive(Debug, Clone)]
pub struct Tape {
    layer_sizes: Vec<usize>,
    /// `activations[0]` is the input, `activations[k + 1]` the output of layer `k`.
    activations: Vec<Matrix>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.activations[0].rows()
    }

    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("tape holds at least the input")
    }
}

/// Evaluates the network on a `batch × in_dim` input.
pub fn forward(params: &NetParams, inputs: &Matrix) -> Result<(Matrix, Tape), NnError> {
    let tape = forward_tape(params, inputs)?;
    Ok((tape.output().clone(), tape))
}

/// Like [`forward`] but keeps the output on the tape only.
pub fn forward_tape(params: &NetParams, inputs: &Matrix) -> Result<Tape, NnError> {
    if inputs.cols() != params.in_dim() {
        return Err(NnError::Shape(format!(
            "input has {} columns, network expects {}",
            inputs.cols(),
            params.in_dim()
        )));
    }
    if !inputs.is_finite() {
        return Err(NnError::NonFinite);
    }
    let batch = inputs.rows();
    let last = params.layers().len() - 1;
    let mut activations = Vec::with_capacity(params.layers().len() + 1);
    activations.push(inputs.clone());
    for (k, layer) in params.layers().iter().enumerate() {
        let (out_dim, in_dim) = layer.weight.shape();
        let mut z = Matrix::zeros(batch, out_dim);
        for r in 0..batch {
            z.row_mut(r).copy_from_slice(&layer.bias);
        }
        matmul_a_bt(
            activations[k].as_slice(),
            layer.weight.as_slice(),
            z.as_mut_slice(),
            batch,
            in_dim,
            out_dim,
            true,
        );
        if k != last {
            for v in z.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        activations.push(z);
    }
    Ok(Tape {
        layer_sizes: params.layer_sizes(),
        activations,
    })
}

/// Evaluates the network on fixed-width rows, e.g. a slice of observations.
pub fn forward_rows<const D: usize>(params: &NetParams, rows: &[[f64; D]]) -> Result<Matrix, NnError> {
    let x = Matrix::from_vec(rows.len(), D, rows.iter().flatten().copied().collect());
    Ok(forward_tape(params, &x)?.activations.pop().expect("tape holds the output"))
}

/// Gradients of `sum(outputs ⊙ output_grad)` with respect to every parameter.
pub fn backward(params: &NetParams, tape: &Tape, output_grad: &Matrix) -> Result<Gradients, NnError> {
    if tape.layer_sizes != params.layer_sizes() {
        return Err(NnError::StaleTape(format!(
            "tape recorded for {:?}, params are {:?}",
            tape.layer_sizes,
            params.layer_sizes()
        )));
    }
    if output_grad.shape() != tape.output().shape() {
        return Err(NnError::Shape(format!(
            "output gradient is {:?}, network output is {:?}",
            output_grad.shape(),
            tape.output().shape()
        )));
    }
    let batch = tape.batch();
    let mut grads = Gradients::zeros_like(params);
    let mut delta = output_grad.clone();
    for k in (0..params.layers().len()).rev() {
        let layer = &params.layers()[k];
        let (out_dim, in_dim) = layer.weight.shape();
        let input = &tape.activations[k];
        let g = &mut grads.layers[k];

        matmul_at_b(
            delta.as_slice(),
            input.as_slice(),
            g.weight.as_mut_slice(),
            out_dim,
            batch,
            in_dim,
        );
        for r in 0..batch {
            for (gb, d) in g.bias.iter_mut().zip(delta.row(r)) {
                *gb += d;
            }
        }
        if k == 0 {
            break;
        }
        let mut prev = Matrix::zeros(batch, in_dim);
        matmul(
            delta.as_slice(),
            layer.weight.as_slice(),
            prev.as_mut_slice(),
            batch,
            out_dim,
            in_dim,
        );
        for (d, a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
            if *a <= 0.0 {
                *d = 0.0;
            }
        }
        delta = prev;
    }
    Ok(grads)
}
