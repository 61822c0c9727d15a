//! Fully-connected embedding network: ReLU hidden layers, linear output,
//! manual backpropagation and plain SGD.

use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::{Error, Result, Rng};

/// One affine layer; `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn param_len(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    generation: u64,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument("layer dims need at least two positive entries"));
    }
    Ok(())
}

impl MlpModel {
    /// Builds a model from explicit layers.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::DimensionMismatch { expected: w[0].out_dim(), found: w[1].in_dim() });
            }
        }
        for l in &layers {
            if l.bias.len() != l.out_dim() {
                return Err(Error::DimensionMismatch { expected: l.out_dim(), found: l.bias.len() });
            }
            if !l.weights.is_finite() || l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite("model parameters"));
            }
        }
        Ok(Self { layers, generation: 0 })
    }

    /// All-zero parameters.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| Layer { weights: Matrix::zeros(w[1], w[0]), bias: alloc::vec![0.0; w[1]] })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// `[q, hidden.., d]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = alloc::vec![self.layers[0].in_dim()];
        dims.extend(self.layers.iter().map(Layer::out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.as_slice().len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Inverse of [`params`](Self::params). Counts as a mutation.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), found: flat.len() });
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let w = l.weights.as_mut_slice();
            w.copy_from_slice(&flat[at..at + w.len()]);
            at += w.len();
            let n = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        self.generation += 1;
        Ok(())
    }
}

/// He initialisation: weights `N(0, 2 / fan_in)`, zero biases.
pub fn init_params(layer_dims: &[usize], rng: &mut Rng) -> Result<MlpModel> {
    let mut model = MlpModel::zeros(layer_dims)?;
    for l in &mut model.layers {
        let sd = libm::sqrt(2.0 / l.in_dim() as f64);
        for w in l.weights.as_mut_slice() {
            *w = sd * rng.standard_normal();
        }
    }
    Ok(model)
}

/// Values kept from one forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    generation: u64,
    /// `activations[0]` is the input; `activations[l + 1]` the output of layer `l`.
    activations: Vec<Matrix>,
    /// Pre-activations of every layer.
    pre: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.activations[0].rows()
    }

    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }

    pub fn activations(&self) -> &[Matrix] {
        &self.activations
    }
}

/// `x W^T + b`.
fn affine(x: &Matrix, l: &Layer) -> Matrix {
    let (b, out) = (x.rows(), l.out_dim());
    let mut z = Matrix::zeros(b, out);
    for i in 0..b {
        let xi = x.row(i);
        let zi = z.row_mut(i);
        for (o, zo) in zi.iter_mut().enumerate() {
            *zo = l.bias[o] + crate::matrix::dot(l.weights.row(o), xi);
        }
    }
    z
}

fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    out.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn forward(model: &MlpModel, inputs: &Matrix) -> Result<(Matrix, ForwardTrace)> {
    if inputs.cols() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), found: inputs.cols() });
    }
    let last = model.layers.len() - 1;
    let mut activations = Vec::with_capacity(model.layers.len() + 1);
    let mut pre = Vec::with_capacity(model.layers.len());
    activations.push(inputs.clone());
    for (li, l) in model.layers.iter().enumerate() {
        let z = affine(&activations[li], l);
        let a = if li == last { z.clone() } else { relu(&z) };
        pre.push(z);
        activations.push(a);
    }
    let out = activations[last + 1].clone();
    Ok((out, ForwardTrace { generation: model.generation, activations, pre }))
}

/// Forward pass without keeping the trace.
pub fn embed(model: &MlpModel, inputs: &Matrix) -> Result<Matrix> {
    if inputs.cols() != model.input_dim() {
        return Err(Error::DimensionMismatch { expected: model.input_dim(), found: inputs.cols() });
    }
    let last = model.layers.len() - 1;
    let mut a = inputs.clone();
    for (li, l) in model.layers.iter().enumerate() {
        let z = affine(&a, l);
        a = if li == last { z } else { relu(&z) };
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrads>,
}

impl ParamGrads {
    /// Flattened in the order of [`MlpModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

/// Parameter gradients of the scalar whose gradient with respect to the
/// embeddings is `grad`.
pub fn backward(model: &MlpModel, trace: &ForwardTrace, grad: &Matrix) -> Result<ParamGrads> {
    if trace.generation != model.generation || trace.pre.len() != model.layers.len() {
        return Err(Error::StaleTrace);
    }
    let b = trace.batch_size();
    if grad.rows() != b || grad.cols() != model.output_dim() {
        return Err(Error::DimensionMismatch { expected: b * model.output_dim(), found: grad.rows() * grad.cols() });
    }
    let mut g = grad.clone();
    let mut layers = Vec::with_capacity(model.layers.len());
    for li in (0..model.layers.len()).rev() {
        let l = &model.layers[li];
        let a = &trace.activations[li];
        let (out, inp) = (l.out_dim(), l.in_dim());
        let mut gw = Matrix::zeros(out, inp);
        let mut gb = alloc::vec![0.0; out];
        for i in 0..b {
            let gi = g.row(i);
            let ai = a.row(i);
            for (o, &go) in gi.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                gb[o] += go;
                gw.row_mut(o).iter_mut().zip(ai).for_each(|(w, &x)| *w += go * x);
            }
        }
        layers.push(LayerGrads { weights: gw, bias: gb });
        if li > 0 {
            let pre = &trace.pre[li - 1];
            let mut gp = Matrix::zeros(b, inp);
            for i in 0..b {
                let gi = g.row(i);
                let row = gp.row_mut(i);
                for (o, &go) in gi.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    row.iter_mut().zip(l.weights.row(o)).for_each(|(r, &w)| *r += go * w);
                }
                row.iter_mut().zip(pre.row(i)).for_each(|(r, &z)| {
                    if z <= 0.0 {
                        *r = 0.0;
                    }
                });
            }
            g = gp;
        }
    }
    layers.reverse();
    Ok(ParamGrads { layers })
}

/// `p <- p - lr * grad(p)` for every parameter.
pub fn sgd_step(model: &mut MlpModel, grads: &ParamGrads, lr: f64) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument("learning rate must be positive"));
    }
    if grads.layers.len() != model.layers.len() {
        return Err(Error::DimensionMismatch { expected: model.layers.len(), found: grads.layers.len() });
    }
    for (l, g) in model.layers.iter().zip(&grads.layers) {
        if l.weights.rows() != g.weights.rows() || l.weights.cols() != g.weights.cols() || l.bias.len() != g.bias.len()
        {
            return Err(Error::DimensionMismatch { expected: l.param_len(), found: g.weights.as_slice().len() + g.bias.len() });
        }
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("parameter gradients"));
    }
    for (l, g) in model.layers.iter_mut().zip(&grads.layers) {
        l.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()).for_each(|(p, d)| *p -= lr * d);
        l.bias.iter_mut().zip(&g.bias).for_each(|(p, d)| *p -= lr * d);
    }
    model.generation += 1;
    Ok(())
}

/// Scales every row to unit length. Returns the normalised rows and the
/// original norms. Zero rows stay zero.
pub fn l2_normalize_rows(x: &Matrix) -> (Matrix, Vec<f64>) {
    let mut out = x.clone();
    let mut norms = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let r = out.row_mut(i);
        let n = libm::sqrt(r.iter().map(|v| v * v).sum::<f64>());
        if n > 0.0 {
            r.iter_mut().for_each(|v| *v /= n);
        }
        norms.push(n);
    }
    (out, norms)
}

/// Pulls a gradient on normalised rows `y = x / |x|` back to `x`:
/// `(g - y (y . g)) / |x|`.
pub fn l2_normalize_backward(normalized: &Matrix, norms: &[f64], grad: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for (i, &n) in norms.iter().enumerate() {
        let y = normalized.row(i);
        let r = out.row_mut(i);
        if n == 0.0 {
            r.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        let yg = crate::matrix::dot(y, r);
        r.iter_mut().zip(y).for_each(|(g, &yv)| *g = (*g - yv * yg) / n);
    }
    out
}
