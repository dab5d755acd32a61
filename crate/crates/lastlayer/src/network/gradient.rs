//! Cross-entropy loss and its exact gradient by reverse accumulation.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::network::{softmax_rows_inplace, DenseLayer, NetworkParams};

/// Dropout multipliers for one minibatch, already scaled for inverted
/// dropout: each entry is 0 (dropped) or 1/(1-p) (kept).
///
/// `input` masks the input vectors themselves (the last-layer sampler drops
/// units of the feature vector feeding the output layer); `hidden[l]` masks
/// the post-ReLU activations of hidden layer `l`. Shapes match the batch.
#[derive(Debug, Clone)]
pub(crate) struct DropoutMasks {
    pub input: Option<Array2<f64>>,
    pub hidden: Vec<Array2<f64>>,
}

/// Mean cross-entropy over the batch and its gradient with respect to every
/// parameter, as a parameter-shaped structure.
///
/// The loss is `-(1/|B|) Σ_i ln p(y_i | x_i, θ)`; a non-finite loss is
/// reported as a divergence error rather than silently propagated.
pub fn loss_and_gradient(
    params: &NetworkParams,
    xs: ArrayView2<f64>,
    labels: &[usize],
) -> Result<(f64, NetworkParams)> {
    loss_and_gradient_masked(params, xs, labels, None)
}

/// [`loss_and_gradient`] with optional dropout masks applied to the forward
/// and backward pass (the MC-dropout training path).
pub(crate) fn loss_and_gradient_masked(
    params: &NetworkParams,
    xs: ArrayView2<f64>,
    labels: &[usize],
    masks: Option<&DropoutMasks>,
) -> Result<(f64, NetworkParams)> {
    let layers = params.layers();
    let batch = xs.nrows();
    if batch == 0 {
        return Err(Error::Dataset("empty minibatch".into()));
    }
    if labels.len() != batch {
        return Err(Error::Dimension(format!(
            "{batch} examples but {} labels",
            labels.len()
        )));
    }
    if xs.ncols() != params.input_dim() {
        return Err(Error::Dimension(format!(
            "input has {} columns, network expects {}",
            xs.ncols(),
            params.input_dim()
        )));
    }
    let classes = params.output_dim();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, num_classes: classes });
    }
    if let Some(m) = masks {
        if m.hidden.len() != layers.len() - 1 {
            return Err(Error::Dimension(format!(
                "{} hidden masks for {} hidden layers",
                m.hidden.len(),
                layers.len() - 1
            )));
        }
    }

    // Forward, keeping what backward needs: the (masked) input to each layer
    // and the pre-dropout activations for the ReLU derivative.
    let input = match masks.and_then(|m| m.input.as_ref()) {
        Some(mask) => &xs * mask,
        None => xs.to_owned(),
    };
    // layer_inputs[l] is what layer l consumed; relu_gates[l] the post-ReLU
    // activation of hidden layer l (mask source for its derivative).
    let mut layer_inputs: Vec<Array2<f64>> = Vec::with_capacity(layers.len());
    let mut relu_gates: Vec<Array2<f64>> = Vec::with_capacity(layers.len() - 1);
    layer_inputs.push(input);
    for (l, layer) in layers[..layers.len() - 1].iter().enumerate() {
        let z = layer_inputs[l].dot(&layer.weights.t()) + &layer.bias;
        let a = z.mapv(|v| if v > 0.0 { v } else { 0.0 });
        relu_gates.push(a.clone());
        let fed = match masks.map(|m| &m.hidden[l]) {
            Some(mask) => a * mask,
            None => a,
        };
        layer_inputs.push(fed);
    }
    let last = layers.last().expect("at least one layer");
    let mut probs =
        layer_inputs.last().expect("non-empty").dot(&last.weights.t()) + &last.bias;

    // Loss via log-sum-exp on the logits (still in `probs` here).
    let mut loss = 0.0;
    for (i, row) in probs.rows().into_iter().enumerate() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        loss -= row[labels[i]] - max - sum.ln();
    }
    loss /= batch as f64;
    if !loss.is_finite() {
        return Err(Error::Divergence(format!(
            "non-finite loss {loss} on a batch of {batch}"
        )));
    }
    softmax_rows_inplace(&mut probs);

    // Backward. delta starts as (P - Y)/|B| at the output.
    let mut delta = probs;
    for (i, &label) in labels.iter().enumerate() {
        delta[(i, label)] -= 1.0;
    }
    delta.mapv_inplace(|v| v / batch as f64);

    let mut grads: Vec<DenseLayer> = Vec::with_capacity(layers.len());
    for l in (0..layers.len()).rev() {
        let grad_w = delta.t().dot(&layer_inputs[l]);
        let grad_b = delta.sum_axis(Axis(0));
        grads.push(DenseLayer { weights: grad_w, bias: grad_b });
        if l > 0 {
            // through the linear map, the dropout mask, and the ReLU gate
            let mut upstream = delta.dot(&layers[l].weights);
            if let Some(m) = masks {
                upstream = upstream * &m.hidden[l - 1];
            }
            ndarray::Zip::from(&mut upstream).and(&relu_gates[l - 1]).for_each(|u, &a| {
                if a <= 0.0 {
                    *u = 0.0;
                }
            });
            delta = upstream;
        }
    }
    grads.reverse();
    Ok((loss, NetworkParams::from_layers(grads)))
}
