use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use super::matrix::{gemm, Matrix};
use super::NnError;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    ReLU,
    Tanh,
    Sigmoid,
    Linear,
    Softplus,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::ReLU,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Linear,
        Activation::Softplus,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ReLU => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Linear => x,
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    /// ReLU uses subgradient 0 at the kink.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
            Activation::Softplus => -(-y).exp_m1(),
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::ReLU => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
            Activation::Linear => 3,
            Activation::Softplus => 4,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Activation::ALL.get(c as usize).copied()
    }

    fn short(self) -> &'static str {
        match self {
            Activation::ReLU => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
            Activation::Softplus => "softplus",
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: Activation,
}

impl LayerSpec {
    fn param_count(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }
}

/// Stack of affine layers with elementwise activations. Parameters live in
/// one flat buffer: per layer, the `n_out x n_in` weight matrix (row-major)
/// followed by the bias.
#[derive(Debug)]
pub struct DenseNet {
    layers: Vec<LayerSpec>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    id: u64,
    version: u64,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.params == other.params
    }
}

impl Clone for DenseNet {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            offsets: self.offsets.clone(),
            params: self.params.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

/// Layer inputs retained by [`DenseNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    net_id: u64,
    version: u64,
    /// `acts[0]` is the input, `acts[i + 1]` the output of layer `i`.
    acts: Vec<Matrix>,
}

impl Tape {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("tape holds at least the input")
    }
}

/// Per-parameter gradient buffer congruent with a [`DenseNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<f64>);

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients(vec![0.0; net.param_count()])
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        assert_eq!(self.0.len(), other.0.len());
        self.0.iter_mut().zip(&other.0).for_each(|(a, b)| *a += b);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }
}

impl DenseNet {
    /// Layers `sizes[0] -> sizes[1] -> ...`, `hidden` activation on every
    /// layer but the last. Weights and biases uniform in `+-1/sqrt(fan_in)`,
    /// the final layer further scaled by `final_scale`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        final_scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(
            sizes.len() >= 2,
            "need at least an input and an output size"
        );
        let specs: Vec<LayerSpec> = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| LayerSpec {
                n_in: w[0],
                n_out: w[1],
                activation: if i + 2 == sizes.len() { output } else { hidden },
            })
            .collect();
        let mut net = Self::zeroed(specs);
        let last = net.layers.len() - 1;
        for (li, spec) in net.layers.clone().iter().enumerate() {
            let bound = 1.0 / (spec.n_in as f64).sqrt();
            let scale = if li == last { final_scale } else { 1.0 };
            let off = net.offsets[li];
            for p in &mut net.params[off..off + spec.param_count()] {
                *p = rng.gen_range(-bound..bound) * scale;
            }
        }
        net
    }

    /// All-zero parameters with the given layer stack.
    pub fn zeroed(layers: Vec<LayerSpec>) -> Self {
        for w in layers.windows(2) {
            assert_eq!(
                w[0].n_out, w[1].n_in,
                "adjacent layer dimensions must agree"
            );
        }
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for l in &layers {
            offsets.push(total);
            total += l.param_count();
        }
        Self {
            layers,
            offsets,
            params: vec![0.0; total],
            id: fresh_id(),
            version: 0,
        }
    }

    pub fn from_parts(layers: Vec<LayerSpec>, params: Vec<f64>) -> Result<Self, NnError> {
        for w in layers.windows(2) {
            if w[0].n_out != w[1].n_in {
                return Err(NnError::Dimension(format!(
                    "layer outputs {} feed inputs {}",
                    w[0].n_out, w[1].n_in
                )));
            }
        }
        let mut net = Self::zeroed(layers);
        if params.len() != net.params.len() {
            return Err(NnError::Dimension(format!(
                "{} parameters for a net needing {}",
                params.len(),
                net.params.len()
            )));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    /// Weight `(out, in)` of layer `layer`.
    pub fn weight(&self, layer: usize, out: usize, inp: usize) -> f64 {
        self.params[self.offsets[layer] + out * self.layers[layer].n_in + inp]
    }

    pub fn bias(&self, layer: usize, out: usize) -> f64 {
        let l = &self.layers[layer];
        self.params[self.offsets[layer] + l.n_in * l.n_out + out]
    }

    /// Offset of layer `layer`'s weight block in the flat parameter buffer.
    pub fn layer_offset(&self, layer: usize) -> usize {
        self.offsets[layer]
    }

    /// Compact shape description, e.g. `4-8relu-2linear`.
    pub fn manifest(&self) -> String {
        let mut s = self.layers[0].n_in.to_string();
        for l in &self.layers {
            s.push_str(&format!("-{}{}", l.n_out, l.activation.short()));
        }
        s
    }

    pub fn check_same_architecture(&self, other: &DenseNet) -> Result<(), NnError> {
        if self.layers != other.layers {
            return Err(NnError::Architecture {
                expected: self.manifest(),
                found: other.manifest(),
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &Matrix) -> Result<(), NnError> {
        if x.cols() != self.input_dim() {
            return Err(NnError::Dimension(format!(
                "input has {} columns, network expects {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn layer_forward(&self, li: usize, x: &Matrix) -> Matrix {
        let l = &self.layers[li];
        let off = self.offsets[li];
        let w = &self.params[off..off + l.n_in * l.n_out];
        let b = &self.params[off + l.n_in * l.n_out..off + l.param_count()];
        let mut z = Matrix::zeros(x.rows(), l.n_out);
        // z = x * W^T
        gemm(
            x.rows(),
            l.n_in,
            l.n_out,
            x.data(),
            l.n_in as isize,
            1,
            w,
            1,
            l.n_in as isize,
            z.data_mut(),
        );
        for r in 0..z.rows() {
            for (v, bias) in z.row_mut(r).iter_mut().zip(b) {
                *v = l.activation.apply(*v + bias);
            }
        }
        z
    }

    /// Forward pass without retaining activations.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix, NnError> {
        self.check_input(x)?;
        let mut h = self.layer_forward(0, x);
        for li in 1..self.layers.len() {
            h = self.layer_forward(li, &h);
        }
        Ok(h)
    }

    /// Forward pass retaining the activations needed by [`DenseNet::backward`].
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Tape), NnError> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for li in 0..self.layers.len() {
            let next = self.layer_forward(li, &acts[li]);
            acts.push(next);
        }
        let out = acts.last().cloned().expect("non-empty");
        Ok((
            out,
            Tape {
                net_id: self.id,
                version: self.version,
                acts,
            },
        ))
    }

    /// Reverse-mode pass. `grad_out` is dL/d(output) per sample; parameter
    /// gradients are summed over the batch. Returns the input gradient and,
    /// when requested, the parameter gradients.
    pub fn backward(
        &self,
        tape: &Tape,
        grad_out: &Matrix,
        want_params: bool,
    ) -> Result<(Option<Gradients>, Matrix), NnError> {
        if tape.net_id != self.id || tape.version != self.version {
            return Err(NnError::StaleTape);
        }
        let batch = tape.acts[0].rows();
        if grad_out.rows() != batch || grad_out.cols() != self.output_dim() {
            return Err(NnError::Dimension(format!(
                "output gradient is {}x{}, expected {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                batch,
                self.output_dim()
            )));
        }
        let mut grads = want_params.then(|| Gradients::zeros_like(self));
        let mut delta = grad_out.clone();
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let y = &tape.acts[li + 1];
            for (d, yv) in delta.data_mut().iter_mut().zip(y.data()) {
                *d *= l.activation.derivative_from_output(*yv);
            }
            let x = &tape.acts[li];
            let off = self.offsets[li];
            if let Some(g) = grads.as_mut() {
                let (gw, gb) = g.0[off..off + l.param_count()].split_at_mut(l.n_in * l.n_out);
                // dW = delta^T * x
                gemm(
                    l.n_out,
                    batch,
                    l.n_in,
                    delta.data(),
                    1,
                    l.n_out as isize,
                    x.data(),
                    l.n_in as isize,
                    1,
                    gw,
                );
                for r in 0..batch {
                    for (b, d) in gb.iter_mut().zip(delta.row(r)) {
                        *b += d;
                    }
                }
            }
            // dx = delta * W
            let w = &self.params[off..off + l.n_in * l.n_out];
            let mut dx = Matrix::zeros(batch, l.n_in);
            gemm(
                batch,
                l.n_out,
                l.n_in,
                delta.data(),
                l.n_out as isize,
                1,
                w,
                l.n_in as isize,
                1,
                dx.data_mut(),
            );
            delta = dx;
        }
        Ok((grads, delta))
    }
}

impl fmt::Display for DenseNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DenseNet({}, {} params)",
            self.manifest(),
            self.param_count()
        )
    }
}

/// Polyak blend `target <- tau * online + (1 - tau) * target`.
pub fn soft_update(target: &mut DenseNet, online: &DenseNet, tau: f64) -> Result<(), NnError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(NnError::BadTau(tau));
    }
    online.check_same_architecture(target)?;
    if tau == 1.0 {
        target.params_mut().copy_from_slice(&online.params);
        return Ok(());
    }
    for (t, o) in target.params_mut().iter_mut().zip(&online.params) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}
