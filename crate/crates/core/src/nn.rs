//! Dense ReLU feed-forward networks with exact backpropagation.
//!
//! A model is described by an [`MlpArchitecture`] and its weights live in a
//! flat [`ParamVector`]. Layer `l` stores a row-major weight block of shape
//! `(fan_out, fan_in)` followed, when biases are enabled, by `fan_out` bias
//! entries. With no hidden layers the architecture is the plain linear model
//! `logits = W x` used by the closed-form bounds.
//!
//! All evaluation goes through the batched routines in this module; the
//! per-example helpers are one-row batches.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::math::log_sum_exp;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `max(0, z)`, with derivative 0 at the kink.
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Softmax negative log-likelihood.
    Nll,
    /// `max_j { t_j - t_y + 1[j != y] }`.
    MultiClassHinge,
}

/// Shape of a feed-forward classifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    input_dim: usize,
    class_count: usize,
    hidden_widths: Vec<usize>,
    activation: Activation,
    bias: bool,
}

/// Offsets of one layer inside a [`ParamVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    /// Offset of the bias block, if the architecture has biases.
    pub bias_offset: Option<usize>,
}

impl MlpArchitecture {
    /// General constructor. Every width must be positive.
    pub fn new(
        input_dim: usize,
        class_count: usize,
        hidden_widths: Vec<usize>,
        activation: Activation,
        bias: bool,
    ) -> Result<Self> {
        if input_dim == 0 || class_count == 0 || hidden_widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be positive (d={input_dim}, k={class_count}, hidden={hidden_widths:?})"
            )));
        }
        Ok(Self {
            input_dim,
            class_count,
            hidden_widths,
            activation,
            bias,
        })
    }

    /// The bias-free linear model `W in R^{k x d}`.
    pub fn linear(input_dim: usize, class_count: usize) -> Result<Self> {
        Self::new(input_dim, class_count, Vec::new(), Activation::Relu, false)
    }

    /// ReLU MLP with biases on every layer.
    pub fn mlp(input_dim: usize, class_count: usize, hidden_widths: Vec<usize>) -> Result<Self> {
        Self::new(input_dim, class_count, hidden_widths, Activation::Relu, true)
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    pub fn is_linear(&self) -> bool {
        self.hidden_widths.is_empty()
    }

    /// Number of weight layers; 1 for the linear model.
    pub fn depth(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    pub fn layers(&self) -> Vec<LayerShape> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.class_count);

        let mut offset = 0;
        dims.windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weight_offset = offset;
                offset += fan_in * fan_out;
                let bias_offset = self.bias.then(|| {
                    let b = offset;
                    offset += fan_out;
                    b
                });
                LayerShape {
                    fan_in,
                    fan_out,
                    weight_offset,
                    bias_offset,
                }
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.fan_in * l.fan_out + if self.bias { l.fan_out } else { 0 })
            .sum()
    }

    /// Hidden widths for a `depth`-layer MLP whose parameter count is as close
    /// as possible to `target_params`, using one uniform hidden width.
    ///
    /// `depth` counts weight layers, so `depth == 1` is the linear model and
    /// returns an empty list.
    pub fn equal_param_widths(
        input_dim: usize,
        class_count: usize,
        depth: usize,
        target_params: usize,
        bias: bool,
    ) -> Result<Vec<usize>> {
        if depth == 0 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        if depth == 1 {
            return Ok(Vec::new());
        }
        let count = |h: usize| {
            let arch = MlpArchitecture::new(
                input_dim,
                class_count,
                vec![h; depth - 1],
                Activation::Relu,
                bias,
            )
            .expect("positive widths");
            arch.param_count()
        };
        // param count is increasing in h; bisect for the closest width.
        let (mut lo, mut hi) = (1usize, 1usize);
        while count(hi) < target_params {
            lo = hi;
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if count(mid) < target_params {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let best = if target_params.abs_diff(count(lo)) <= count(hi).abs_diff(target_params) {
            lo
        } else {
            hi
        };
        Ok(vec![best; depth - 1])
    }
}

/// Flat model weights tied to an architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    arch: Arc<MlpArchitecture>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(arch: Arc<MlpArchitecture>, values: Vec<f64>) -> Result<Self> {
        let expected = arch.param_count();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} is {}", values[i])));
        }
        Ok(Self { arch, values })
    }

    pub fn zeros(arch: Arc<MlpArchitecture>) -> Self {
        let n = arch.param_count();
        Self {
            arch,
            values: vec![0.0; n],
        }
    }

    pub fn arch(&self) -> &Arc<MlpArchitecture> {
        &self.arch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Weight block of layer `l` as a `(fan_out, fan_in)` view.
    pub fn weights(&self, layer: &LayerShape) -> ArrayView2<'_, f64> {
        let n = layer.fan_in * layer.fan_out;
        ArrayView2::from_shape(
            (layer.fan_out, layer.fan_in),
            &self.values[layer.weight_offset..layer.weight_offset + n],
        )
        .expect("layer shape matches parameter layout")
    }

    pub fn bias(&self, layer: &LayerShape) -> Option<ArrayView1<'_, f64>> {
        layer
            .bias_offset
            .map(|b| ArrayView1::from(&self.values[b..b + layer.fan_out]))
    }

    /// Sum of squared weights, excluding biases.
    pub fn weight_squared_norm(&self) -> f64 {
        self.arch
            .layers()
            .iter()
            .map(|l| self.weights(l).iter().map(|w| w * w).sum::<f64>())
            .sum()
    }
}

/// Loss of the logit vector `t` against label `y`.
pub fn loss_from_logits(logits: ArrayView1<'_, f64>, y: usize, kind: LossKind) -> f64 {
    match kind {
        LossKind::Nll => {
            let lse = log_sum_exp(logits.iter().copied());
            // max(0, .) only removes a rounding residue when the softmax saturates.
            (lse - logits[y]).max(0.0)
        }
        LossKind::MultiClassHinge => {
            let j = hinge_argmax(logits, y);
            logits[j] - logits[y] + if j != y { 1.0 } else { 0.0 }
        }
    }
}

/// Gradient of the loss with respect to the logits.
pub fn logit_gradient(logits: ArrayView1<'_, f64>, y: usize, kind: LossKind) -> Array1<f64> {
    let mut g = Array1::zeros(logits.len());
    match kind {
        LossKind::Nll => {
            let lse = log_sum_exp(logits.iter().copied());
            for (gi, &t) in g.iter_mut().zip(logits.iter()) {
                *gi = (t - lse).exp();
            }
            g[y] -= 1.0;
        }
        LossKind::MultiClassHinge => {
            let j = hinge_argmax(logits, y);
            if j != y {
                g[j] += 1.0;
                g[y] -= 1.0;
            }
        }
    }
    g
}

/// Maximizer of `t_j + 1[j != y]`; ties go to the lowest index.
fn hinge_argmax(logits: ArrayView1<'_, f64>, y: usize) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (j, &t) in logits.iter().enumerate() {
        let v = t + if j != y { 1.0 } else { 0.0 };
        if v > best_val {
            best = j;
            best_val = v;
        }
    }
    best
}

/// Uniform bound `L` on `||grad_t loss(t, y)||` over all logits and labels.
///
/// Both losses give `sqrt(2)`: the NLL gradient `softmax(t) - e_y` has norm
/// below `sqrt(2)`, and the hinge subgradient is `e_j - e_y` or zero.
pub fn lipschitz_bound(kind: LossKind) -> f64 {
    match kind {
        LossKind::Nll | LossKind::MultiClassHinge => std::f64::consts::SQRT_2,
    }
}

/// Per-example results of a batched pass.
#[derive(Debug, Clone, Default)]
pub struct BatchEval {
    pub losses: Vec<f64>,
    /// `||grad_x loss||^2` per example, when requested.
    pub input_grad_sq_norms: Option<Vec<f64>>,
}

struct Forward {
    /// Layer inputs `a_0 = X, a_1, ..., a_{L-1}`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer; the last entry holds the logits.
    pre: Vec<Array2<f64>>,
}

fn check_batch(params: &ParamVector, inputs: &ArrayView2<'_, f64>, labels: &[usize]) -> Result<()> {
    let arch = params.arch();
    if inputs.ncols() != arch.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: arch.input_dim(),
            got: inputs.ncols(),
        });
    }
    if inputs.nrows() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "label count",
            expected: inputs.nrows(),
            got: labels.len(),
        });
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= arch.class_count()) {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: arch.class_count(),
        });
    }
    Ok(())
}

fn forward_pass(params: &ParamVector, inputs: ArrayView2<'_, f64>) -> Forward {
    let arch = params.arch();
    let layers = arch.layers();
    let act = arch.activation();
    let mut fwd = Forward {
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
    };
    let mut a = inputs.to_owned();
    for (l, shape) in layers.iter().enumerate() {
        let mut z = a.dot(&params.weights(shape).t());
        if let Some(b) = params.bias(shape) {
            z += &b;
        }
        let next = if l + 1 < layers.len() {
            Some(z.mapv(|v| act.apply(v)))
        } else {
            None
        };
        fwd.inputs.push(a);
        fwd.pre.push(z);
        match next {
            Some(n) => a = n,
            None => break,
        }
    }
    fwd
}

/// Logits for every row of `inputs`.
pub fn forward_batch(params: &ParamVector, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if inputs.ncols() != params.arch().input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: params.arch().input_dim(),
            got: inputs.ncols(),
        });
    }
    let mut fwd = forward_pass(params, inputs);
    Ok(fwd.pre.pop().expect("at least one layer"))
}

/// Loss-gradient rows `d loss_i / d logits_i` for the whole batch.
fn logit_deltas(logits: &Array2<f64>, labels: &[usize], kind: LossKind) -> (Vec<f64>, Array2<f64>) {
    let mut losses = Vec::with_capacity(labels.len());
    let mut delta = Array2::zeros(logits.raw_dim());
    for ((row, &y), mut d) in logits
        .axis_iter(Axis(0))
        .zip(labels)
        .zip(delta.axis_iter_mut(Axis(0)))
    {
        losses.push(loss_from_logits(row, y, kind));
        d.assign(&logit_gradient(row, y, kind));
    }
    (losses, delta)
}

/// Losses and, optionally, squared input-gradient norms for a batch.
pub fn evaluate_batch(
    params: &ParamVector,
    inputs: ArrayView2<'_, f64>,
    labels: &[usize],
    kind: LossKind,
    with_input_grads: bool,
) -> Result<BatchEval> {
    check_batch(params, &inputs, labels)?;
    let fwd = forward_pass(params, inputs);
    let logits = fwd.pre.last().expect("at least one layer");
    if !with_input_grads {
        let losses = logits
            .axis_iter(Axis(0))
            .zip(labels)
            .map(|(row, &y)| loss_from_logits(row, y, kind))
            .collect();
        return Ok(BatchEval {
            losses,
            input_grad_sq_norms: None,
        });
    }
    let (losses, delta) = logit_deltas(logits, labels, kind);
    let gx = backprop_to_input(params, &fwd, delta);
    let norms = gx
        .axis_iter(Axis(0))
        .map(|r| r.iter().map(|v| v * v).sum())
        .collect();
    Ok(BatchEval {
        losses,
        input_grad_sq_norms: Some(norms),
    })
}

fn backprop_to_input(params: &ParamVector, fwd: &Forward, mut delta: Array2<f64>) -> Array2<f64> {
    let arch = params.arch();
    let layers = arch.layers();
    let act = arch.activation();
    for l in (0..layers.len()).rev() {
        let mut back = delta.dot(&params.weights(&layers[l]));
        if l > 0 {
            back.zip_mut_with(&fwd.pre[l - 1], |g, &z| *g *= act.derivative(z));
        }
        delta = back;
    }
    delta
}

/// Input gradients `grad_x loss` for every row.
pub fn input_gradients_batch(
    params: &ParamVector,
    inputs: ArrayView2<'_, f64>,
    labels: &[usize],
    kind: LossKind,
) -> Result<Array2<f64>> {
    check_batch(params, &inputs, labels)?;
    let fwd = forward_pass(params, inputs);
    let (_, delta) = logit_deltas(fwd.pre.last().expect("at least one layer"), labels, kind);
    Ok(backprop_to_input(params, &fwd, delta))
}

/// Mean loss over the batch and its gradient with respect to the parameters.
pub fn param_gradient_batch(
    params: &ParamVector,
    inputs: ArrayView2<'_, f64>,
    labels: &[usize],
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    check_batch(params, &inputs, labels)?;
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let arch = params.arch();
    let layers = arch.layers();
    let act = arch.activation();
    let fwd = forward_pass(params, inputs);
    let (losses, mut delta) = logit_deltas(fwd.pre.last().expect("at least one layer"), labels, kind);
    let scale = 1.0 / labels.len() as f64;
    let mut grad = vec![0.0; params.len()];

    for l in (0..layers.len()).rev() {
        let shape = &layers[l];
        let gw = delta.t().dot(&fwd.inputs[l]);
        let n = shape.fan_in * shape.fan_out;
        for (g, v) in grad[shape.weight_offset..shape.weight_offset + n]
            .iter_mut()
            .zip(gw.iter())
        {
            *g = v * scale;
        }
        if let Some(b) = shape.bias_offset {
            for (g, v) in grad[b..b + shape.fan_out]
                .iter_mut()
                .zip(delta.sum_axis(Axis(0)).iter())
            {
                *g = v * scale;
            }
        }
        if l > 0 {
            let mut back = delta.dot(&params.weights(shape));
            back.zip_mut_with(&fwd.pre[l - 1], |g, &z| *g *= act.derivative(z));
            delta = back;
        }
    }
    let mean_loss = losses.iter().sum::<f64>() * scale;
    Ok((mean_loss, grad))
}

fn single_row(params: &ParamVector, x: &[f64]) -> Result<Array2<f64>> {
    if x.len() != params.arch().input_dim() {
        return Err(Error::DimensionMismatch {
            what: "input",
            expected: params.arch().input_dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input vector".into()));
    }
    Ok(Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("1 x d"))
}

/// Logits for one input.
pub fn forward(params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    let row = single_row(params, x)?;
    Ok(forward_batch(params, row.view())?.into_raw_vec_and_offset().0)
}

pub fn loss(params: &ParamVector, x: &[f64], y: usize, kind: LossKind) -> Result<f64> {
    let row = single_row(params, x)?;
    Ok(evaluate_batch(params, row.view(), &[y], kind, false)?.losses[0])
}

/// `grad_x loss(w, x, y)`.
pub fn grad_input(params: &ParamVector, x: &[f64], y: usize, kind: LossKind) -> Result<Vec<f64>> {
    let row = single_row(params, x)?;
    Ok(input_gradients_batch(params, row.view(), &[y], kind)?
        .into_raw_vec_and_offset()
        .0)
}

/// `grad_w loss(w, x, y)` in the layout of `params`.
pub fn grad_params(params: &ParamVector, x: &[f64], y: usize, kind: LossKind) -> Result<ParamVector> {
    let row = single_row(params, x)?;
    let (_, g) = param_gradient_batch(params, row.view(), &[y], kind)?;
    ParamVector::new(params.arch().clone(), g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn arch(a: MlpArchitecture) -> Arc<MlpArchitecture> {
        Arc::new(a)
    }

    #[test]
    fn param_counts() {
        let lin = MlpArchitecture::linear(784, 10).unwrap();
        assert_eq!(lin.param_count(), 7840);
        let mlp = MlpArchitecture::mlp(4, 3, vec![5, 6]).unwrap();
        assert_eq!(mlp.param_count(), (4 + 1) * 5 + (5 + 1) * 6 + (6 + 1) * 3);
        assert_eq!(mlp.clone().with_bias(false).param_count(), 4 * 5 + 5 * 6 + 6 * 3);
        assert!(MlpArchitecture::mlp(4, 3, vec![0]).is_err());
    }

    #[test]
    fn equal_param_widths_track_target() {
        for depth in 2..=5 {
            let h = MlpArchitecture::equal_param_widths(784, 10, depth, 100_000, true).unwrap();
            assert_eq!(h.len(), depth - 1);
            let n = MlpArchitecture::mlp(784, 10, h).unwrap().param_count();
            assert!((n as f64 / 100_000.0 - 1.0).abs() < 0.02, "depth {depth}: {n}");
        }
        assert!(MlpArchitecture::equal_param_widths(784, 10, 1, 100, true)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn identity_linear_model() {
        let a = arch(MlpArchitecture::linear(2, 2).unwrap());
        let p = ParamVector::new(a, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(forward(&p, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let a = arch(MlpArchitecture::mlp(3, 4, vec![5]).unwrap());
        let p = ParamVector::zeros(a);
        assert_eq!(forward(&p, &[0.3, -2.0, 7.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn uniform_logits_give_log_k() {
        for k in 2..6 {
            let t = Array1::from_elem(k, 3.25);
            let l = loss_from_logits(t.view(), 1, LossKind::Nll);
            assert!((l - (k as f64).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_softmax_does_not_overflow() {
        let t = array![1000.0, 0.0];
        let l = loss_from_logits(t.view(), 0, LossKind::Nll);
        assert!(l.is_finite() && (0.0..1e-300).contains(&l));
        let l = loss_from_logits(t.view(), 1, LossKind::Nll);
        assert!((l - 1000.0).abs() < 1e-12);
    }

    #[test]
    fn hinge_ties_pick_lowest_index() {
        // t_0 + 1 = t_2 + 1 = 2 beat t_1 = 0 for y = 1.
        let t = array![1.0, 0.0, 1.0];
        let g = logit_gradient(t.view(), 1, LossKind::MultiClassHinge);
        assert_eq!(g, array![1.0, -1.0, 0.0]);
        assert_eq!(loss_from_logits(t.view(), 1, LossKind::MultiClassHinge), 2.0);
        // y already wins by a margin: zero loss and zero gradient.
        let t = array![5.0, 0.0, 0.0];
        assert_eq!(loss_from_logits(t.view(), 0, LossKind::MultiClassHinge), 0.0);
        assert_eq!(
            logit_gradient(t.view(), 0, LossKind::MultiClassHinge),
            array![0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn label_and_dimension_errors() {
        let a = arch(MlpArchitecture::linear(2, 3).unwrap());
        let p = ParamVector::zeros(a);
        assert!(matches!(
            loss(&p, &[0.0, 0.0], 3, LossKind::Nll),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
        assert!(matches!(
            forward(&p, &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ParamVector::new(p.arch().clone(), vec![0.0; 5]).is_err());
        assert!(ParamVector::new(p.arch().clone(), vec![f64::NAN; 6]).is_err());
    }

    #[test]
    fn zero_input_zeroes_first_layer_weight_gradient() {
        let a = arch(MlpArchitecture::mlp(3, 2, vec![4]).unwrap());
        let values: Vec<f64> = (0..a.param_count()).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.1).collect();
        let p = ParamVector::new(a.clone(), values).unwrap();
        let g = grad_params(&p, &[0.0; 3], 1, LossKind::Nll).unwrap();
        let first = a.layers()[0];
        assert!(g.weights(&first).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_zero_weights_zero_input_gradient() {
        let a = arch(MlpArchitecture::linear(5, 3).unwrap());
        let p = ParamVector::zeros(a);
        let g = grad_input(&p, &[1.0, -2.0, 0.5, 3.0, 0.1], 2, LossKind::Nll).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }
}
