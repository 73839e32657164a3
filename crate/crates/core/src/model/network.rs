use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub classes: usize,
    pub proj_hidden: usize,
    pub proj_dim: usize,
}

impl Architecture {
    /// Default widths: 64-64 encoder, 64-32 projection head.
    pub fn new(input_dim: usize, classes: usize) -> Self {
        Architecture { input_dim, hidden1: 64, hidden2: 64, classes, proj_hidden: 64, proj_dim: 32 }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.input_dim,
            self.hidden1,
            self.hidden2,
            self.classes,
            self.proj_hidden,
            self.proj_dim,
        ];
        if sizes.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        Ok(())
    }

    fn shapes(&self) -> [(usize, usize); 5] {
        [
            (self.hidden1, self.input_dim),
            (self.hidden2, self.hidden1),
            (self.classes, self.hidden2),
            (self.proj_hidden, self.hidden2),
            (self.proj_dim, self.proj_hidden),
        ]
    }
}

/// Layer names in storage order.
pub const LAYER_NAMES: [&str; 5] =
    ["encoder1", "encoder2", "classifier", "projection_hidden", "projection_out"];

/// Affine layer `y = W x + b`, `W` stored `out x in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Dense { weight: Matrix::zeros(out, inp), bias: alloc::vec![0.0; out] }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_transposed(&self.weight);
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }

    /// Accumulate parameter gradients for upstream `dy` and input `x`;
    /// returns the gradient with respect to `x`.
    fn backward(&self, x: &Matrix, dy: &Matrix, grad: &mut Dense) -> Matrix {
        let dw = dy.transposed_matmul(x);
        for (g, d) in grad.weight.as_mut_slice().iter_mut().zip(dw.as_slice()) {
            *g += d;
        }
        for row in dy.iter_rows() {
            for (g, d) in grad.bias.iter_mut().zip(row) {
                *g += d;
            }
        }
        dy.matmul(&self.weight)
    }

    pub fn tensors(&self) -> [&[f64]; 2] {
        [self.weight.as_slice(), &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [self.weight.as_mut_slice(), &mut self.bias]
    }
}

/// Weights of one network. The same type holds gradients and optimizer
/// moments, since they share every shape.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub encoder1: Dense,
    pub encoder2: Dense,
    pub classifier: Dense,
    pub projection_hidden: Dense,
    pub projection_out: Dense,
}

fn relu(mut m: Matrix) -> Matrix {
    for v in m.as_mut_slice() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    m
}

fn relu_backward(mut dy: Matrix, pre: &Matrix) -> Matrix {
    for (d, &p) in dy.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
    dy
}

impl NetworkParams {
    pub fn zeros(arch: Architecture) -> Self {
        let [e1, e2, c, ph, po] = arch.shapes();
        NetworkParams {
            arch,
            encoder1: Dense::zeros(e1.0, e1.1),
            encoder2: Dense::zeros(e2.0, e2.1),
            classifier: Dense::zeros(c.0, c.1),
            projection_hidden: Dense::zeros(ph.0, ph.1),
            projection_out: Dense::zeros(po.0, po.1),
        }
    }

    /// Gaussian weights with standard deviation `1/sqrt(fan_in)`, zero biases.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut params = Self::zeros(arch);
        let mut rng = seed::stream(seed::derive(seed, seed::INIT));
        for layer in params.layers_mut() {
            let scale = 1.0 / libm::sqrt(layer.weight.cols() as f64);
            for w in layer.weight.as_mut_slice() {
                let z: f64 = rng.sample(StandardNormal);
                *w = scale * z;
            }
        }
        Ok(params)
    }

    pub fn layers(&self) -> [&Dense; 5] {
        [
            &self.encoder1,
            &self.encoder2,
            &self.classifier,
            &self.projection_hidden,
            &self.projection_out,
        ]
    }

    pub fn layers_mut(&mut self) -> [&mut Dense; 5] {
        [
            &mut self.encoder1,
            &mut self.encoder2,
            &mut self.classifier,
            &mut self.projection_hidden,
            &mut self.projection_out,
        ]
    }

    /// Every parameter value, layer by layer, weights before biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers().into_iter().flat_map(|l| l.tensors()).flatten()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers_mut().into_iter().flat_map(|l| l.tensors_mut()).flatten()
    }

    pub fn num_params(&self) -> usize {
        self.values().count()
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        self.arch == other.arch
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardOutput> {
        Ok(self.forward_cached(x)?.output)
    }

    /// Forward pass keeping the intermediates needed by [`Self::backward`].
    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        if x.cols() != self.arch.input_dim {
            return Err(Error::invalid("input width does not match the network"));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite { term: "network input" });
        }
        let pre1 = self.encoder1.apply(x);
        let hidden1 = relu(pre1.clone());
        let pre2 = self.encoder2.apply(&hidden1);
        let features = relu(pre2.clone());
        let logits = self.classifier.apply(&features);
        let pre_proj = self.projection_hidden.apply(&features);
        let proj_hidden = relu(pre_proj.clone());
        let projections = self.projection_out.apply(&proj_hidden);
        Ok(ForwardCache {
            input: x.clone(),
            pre1,
            hidden1,
            pre2,
            pre_proj,
            proj_hidden,
            output: ForwardOutput { features, logits, projections },
        })
    }

    /// Parameter gradients given upstream gradients on the three outputs.
    pub fn backward(&self, cache: &ForwardCache, upstream: &OutputGrads) -> NetworkParams {
        let mut grad = NetworkParams::zeros(self.arch);
        let out = &cache.output;

        let mut d_features = match &upstream.features {
            Some(d) => d.clone(),
            None => Matrix::zeros(out.features.rows(), out.features.cols()),
        };
        if let Some(dz) = &upstream.projections {
            let d_hidden =
                self.projection_out.backward(&cache.proj_hidden, dz, &mut grad.projection_out);
            let d_pre = relu_backward(d_hidden, &cache.pre_proj);
            let d = self.projection_hidden.backward(&out.features, &d_pre, &mut grad.projection_hidden);
            add_into(&mut d_features, &d);
        }
        if let Some(dl) = &upstream.logits {
            let d = self.classifier.backward(&out.features, dl, &mut grad.classifier);
            add_into(&mut d_features, &d);
        }
        let d_pre2 = relu_backward(d_features, &cache.pre2);
        let d_hidden1 = self.encoder2.backward(&cache.hidden1, &d_pre2, &mut grad.encoder2);
        let d_pre1 = relu_backward(d_hidden1, &cache.pre1);
        self.encoder1.backward(&cache.input, &d_pre1, &mut grad.encoder1);
        grad
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { term: "network parameters" })
        }
    }
}

fn add_into(acc: &mut Matrix, d: &Matrix) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(d.as_slice()) {
        *a += b;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Post-rectifier encoder output, `B x hidden2`.
    pub features: Matrix,
    pub logits: Matrix,
    pub projections: Matrix,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    pre1: Matrix,
    hidden1: Matrix,
    pre2: Matrix,
    pre_proj: Matrix,
    proj_hidden: Matrix,
    pub output: ForwardOutput,
}

/// Loss gradients with respect to the forward outputs; `None` means zero.
#[derive(Debug, Clone, Default)]
pub struct OutputGrads {
    pub features: Option<Matrix>,
    pub logits: Option<Matrix>,
    pub projections: Option<Matrix>,
}
