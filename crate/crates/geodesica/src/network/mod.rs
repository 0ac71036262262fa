//! The modified MLP `φ̃_θ`, its initialisation, Adam with exponential decay,
//! and checkpoint serialisation.
//!
//! Architecture: two encoder branches `U = tanh(W_u x + b_u)`,
//! `V = tanh(W_v x + b_v)`; `depth` blend blocks
//! `z ← tanh(W_k h + b_k)`, `h ← (1 − z) ⊙ U + z ⊙ V` (the first block reads
//! the lifted input); a linear scalar head. All activations are `tanh`, so
//! the output is smooth in its inputs to any order.
//!
//! Input-space derivatives propagate as tangent channels; parameter
//! gradients — including gradients of input-derivatives, which the Eikonal
//! residual loss needs — come from analytic backpropagation through the
//! tangent-carrying forward pass (see [`engine`]).

pub mod checkpoint;
pub mod engine;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointData};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffcore::Scalar;
use crate::error::{Error, Result};

/// Shape of the modified MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpArchitecture {
    /// Raw (standardized) input dimension before any Fourier lift.
    pub input_dim: usize,
    pub width: usize,
    /// Number of blend blocks (>= 1).
    pub depth: usize,
    /// Harmonics in the optional Fourier input lift; 0 disables it.
    pub fourier_features: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, width: usize, depth: usize) -> Self {
        MlpArchitecture {
            input_dim,
            width,
            depth,
            fourier_features: 0,
        }
    }

    /// Input dimension after the Fourier lift.
    pub fn lifted_dim(&self) -> usize {
        self.input_dim * (1 + 2 * self.fourier_features)
    }

    /// Closed-form parameter count: encoders and first block are
    /// `3·W·(d + 1)`, remaining blocks `(depth − 1)·W·(W + 1)`, head `W + 1`.
    pub fn param_count(&self) -> usize {
        let d = self.lifted_dim();
        let w = self.width;
        3 * w * (d + 1) + (self.depth - 1) * w * (w + 1) + w + 1
    }

    fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.width < 1 || self.depth < 1 {
            return Err(Error::argument("network dims must be >= 1"));
        }
        Ok(())
    }
}

/// Flat parameter vector with a fixed layout:
/// `W_u, b_u, W_v, b_v, (W_k, b_k) for k = 1..depth, w_head, b_head`.
/// Weight matrices are row-major `(out × in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    pub arch: MlpArchitecture,
    data: Vec<f64>,
}

pub(crate) struct Layout {
    pub wu: std::ops::Range<usize>,
    pub bu: std::ops::Range<usize>,
    pub wv: std::ops::Range<usize>,
    pub bv: std::ops::Range<usize>,
    /// Per block: (weights, bias, in_dim).
    pub blocks: Vec<(std::ops::Range<usize>, std::ops::Range<usize>, usize)>,
    pub head_w: std::ops::Range<usize>,
    pub head_b: usize,
}

impl MlpArchitecture {
    pub(crate) fn layout(&self) -> Layout {
        let d = self.lifted_dim();
        let w = self.width;
        let mut off = 0;
        let mut take = |len: usize| {
            let r = off..off + len;
            off += len;
            r
        };
        let wu = take(w * d);
        let bu = take(w);
        let wv = take(w * d);
        let bv = take(w);
        let mut blocks = Vec::with_capacity(self.depth);
        for k in 0..self.depth {
            let in_dim = if k == 0 { d } else { w };
            let wk = take(w * in_dim);
            let bk = take(w);
            blocks.push((wk, bk, in_dim));
        }
        let head_w = take(w);
        let head_b = off;
        off += 1;
        debug_assert_eq!(off, self.param_count());
        Layout {
            wu,
            bu,
            wv,
            bv,
            blocks,
            head_w,
            head_b,
        }
    }
}

impl MlpParameters {
    pub fn from_data(arch: MlpArchitecture, data: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if data.len() != arch.param_count() {
            return Err(Error::argument(format!(
                "parameter vector has {} entries, architecture needs {}",
                data.len(),
                arch.param_count()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("non-finite parameter"));
        }
        Ok(MlpParameters { arch, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Glorot-uniform weights, zero biases; deterministic for a fixed seed.
pub fn init(arch: MlpArchitecture, seed: u64) -> Result<MlpParameters> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; arch.param_count()];
    let layout = arch.layout();
    let d = arch.lifted_dim();
    let w = arch.width;
    let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize,
                    data: &mut [f64]| {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for slot in &mut data[range] {
            *slot = rng.gen_range(-limit..limit);
        }
    };
    fill(layout.wu.clone(), d, w, &mut data);
    fill(layout.wv.clone(), d, w, &mut data);
    for (wk, _, in_dim) in &layout.blocks {
        fill(wk.clone(), *in_dim, w, &mut data);
    }
    fill(layout.head_w.clone(), w, 1, &mut data);
    MlpParameters::from_data(arch, data)
}

/// Fourier input lift: `[z, sin(kπz), cos(kπz) for k = 1..=F]`, coordinate
/// by coordinate. Identity when `F = 0`.
pub fn lift_input<T: Scalar>(x: &[T], fourier: usize, out: &mut [T]) {
    let n = x.len();
    out[..n].copy_from_slice(x);
    for k in 1..=fourier {
        let freq = T::from_f64(k as f64 * std::f64::consts::PI);
        for j in 0..n {
            let arg = freq * x[j];
            out[n * (2 * k - 1) + j] = arg.sin();
            out[n * (2 * k) + j] = arg.cos();
        }
    }
}

/// Scalar forward pass generic over the scalar type, so input derivatives of
/// any order are available through [`crate::diffcore`] duals. Mirrors the
/// batched engine exactly.
pub fn forward_generic<T: Scalar>(params: &MlpParameters, x: &[T]) -> T {
    let arch = &params.arch;
    assert_eq!(x.len(), arch.input_dim);
    let layout = arch.layout();
    let d = arch.lifted_dim();
    let w = arch.width;
    let p = &params.data;

    let mut lx = vec![T::zero(); d];
    lift_input(x, arch.fourier_features, &mut lx);

    let linear = |wts: &std::ops::Range<usize>, bias: &std::ops::Range<usize>,
                  input: &[T], out: &mut Vec<T>| {
        out.clear();
        let in_dim = input.len();
        for row in 0..w {
            let mut acc = T::from_f64(p[bias.start + row]);
            let base = wts.start + row * in_dim;
            for (c, xi) in input.iter().enumerate() {
                acc = acc + T::from_f64(p[base + c]) * *xi;
            }
            out.push(acc.tanh());
        }
    };

    let mut u = Vec::with_capacity(w);
    let mut v = Vec::with_capacity(w);
    linear(&layout.wu, &layout.bu, &lx, &mut u);
    linear(&layout.wv, &layout.bv, &lx, &mut v);

    let mut h = lx;
    let mut z = Vec::with_capacity(w);
    for (wk, bk, _) in &layout.blocks {
        linear(wk, bk, &h, &mut z);
        let one = T::one();
        h = (0..w)
            .map(|i| (one - z[i]) * u[i] + z[i] * v[i])
            .collect();
    }

    let mut out = T::from_f64(p[layout.head_b]);
    for i in 0..w {
        out = out + T::from_f64(p[layout.head_w.start + i]) * h[i];
    }
    out
}

/// Plain scalar forward evaluation.
pub fn forward(params: &MlpParameters, x: &[f64]) -> f64 {
    forward_generic::<f64>(params, x)
}

/// Value, input gradient, parameter gradient, and the mixed derivatives
/// `∂(∂φ̃/∂x_i)/∂θ` — everything the Eikonal loss chain needs from the
/// network at one point.
#[derive(Debug, Clone)]
pub struct ValueAndGrads {
    pub value: f64,
    pub input_grad: Vec<f64>,
    pub param_grad: Vec<f64>,
    /// `mixed[i][j] = ∂²φ̃ / ∂θ_j ∂x_i`.
    pub mixed: Vec<Vec<f64>>,
}

/// Full per-point derivative bundle via the batched engine with a batch of
/// one and basis cotangents.
pub fn value_and_grads(params: &MlpParameters, x: &[f64]) -> Result<ValueAndGrads> {
    let n = params.arch.input_dim;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFault {
            context: "value_and_grads",
            indices: vec![],
        });
    }
    let xs = ndarray::Array2::from_shape_vec((1, n), x.to_vec()).expect("shape");
    let seeds: Vec<(usize, f64)> = (0..n).map(|j| (j, 1.0)).collect();
    let (trace, values, tangents) = engine::forward_batch(params, xs.view(), &seeds);
    let value = values[0];
    let input_grad: Vec<f64> = (0..n).map(|i| tangents[[0, i]]).collect();
    if !value.is_finite() || input_grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFault {
            context: "value_and_grads",
            indices: vec![],
        });
    }

    let zeros = ndarray::Array1::zeros(1);
    let mut cot_tan: Vec<ndarray::Array1<f64>> = vec![zeros.clone(); n];
    let cot_val = ndarray::Array1::from_elem(1, 1.0);
    let param_grad = engine::backward_batch(
        params,
        &trace,
        cot_val.view(),
        &cot_tan.iter().map(|a| a.view()).collect::<Vec<_>>(),
    );
    let mut mixed = Vec::with_capacity(n);
    let cot_val0 = ndarray::Array1::zeros(1);
    for i in 0..n {
        cot_tan[i] = ndarray::Array1::from_elem(1, 1.0);
        let g = engine::backward_batch(
            params,
            &trace,
            cot_val0.view(),
            &cot_tan.iter().map(|a| a.view()).collect::<Vec<_>>(),
        );
        cot_tan[i] = zeros.clone();
        mixed.push(g);
    }
    Ok(ValueAndGrads {
        value,
        input_grad,
        param_grad,
        mixed,
    })
}

/// Adam moments plus the exponentially decaying learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub decay_factor: f64,
    pub decay_interval: u64,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

impl OptimizerState {
    pub fn new(n_params: usize, lr: f64, decay_factor: f64, decay_interval: u64) -> Self {
        OptimizerState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            lr,
            decay_factor,
            decay_interval,
        }
    }

    /// `η · factor^⌊step / interval⌋`, piecewise constant.
    pub fn effective_lr(&self) -> f64 {
        self.lr
            * self
                .decay_factor
                .powi((self.step / self.decay_interval.max(1)) as i32)
    }
}

/// One Adam update (β₁ = 0.9, β₂ = 0.999, ε = 1e−8) at the scheduled
/// learning rate. Mutates `state` and `params` in place.
pub fn adam_step(state: &mut OptimizerState, params: &mut MlpParameters, grads: &[f64]) {
    assert_eq!(grads.len(), params.len());
    assert_eq!(state.m.len(), params.len());
    let lr = state.effective_lr();
    let t = (state.step + 1) as f64;
    let bc1 = 1.0 - ADAM_BETA1.powf(t);
    let bc2 = 1.0 - ADAM_BETA2.powf(t);
    for i in 0..grads.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        params.data[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
    }
    state.step += 1;
}
