//! Small dense networks with reverse-mode differentiation and Adam.
//!
//! Parameters of an [`Mlp`] live in one flat vector, layer by layer: the
//! weight matrix (outputs × inputs, row-major) followed by the bias.
//! Gradients, optimizer moments and soft target updates all operate on
//! that same flat layout.
//!
//! Batches are row-major [`Matrix`] values, one sample per row.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward called without a recorded forward pass")]
    EmptyTape,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// Floating-point element type of a network.
pub trait Real:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Serialize
    + for<'de> Deserialize<'de>
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;

    /// C ← α·A·B + β·C with explicit row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );
}

macro_rules! impl_real {
    ($t:ty, $name:literal, $gemm:ident) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const NAME: &'static str = $name;

            fn from_f64(x: f64) -> Self {
                x as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                let extent = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
                    }
                };
                assert!(a.len() >= extent(m, k, rsa, csa));
                assert!(b.len() >= extent(k, n, rsb, csb));
                assert!(c.len() >= extent(m, n, rsc, csc));
                // SAFETY: the asserts above bound every index the kernel
                // touches, and all strides are non-negative.
                unsafe {
                    matrixmultiply::$gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_real!(f64, "f64", dgemm);
impl_real!(f32, "f32", sgemm);

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::ZERO; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NnError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row_vector(data: Vec<T>) -> Self {
        Self {
            rows: 1,
            cols: data.len(),
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    /// Concatenates two matrices column-wise.
    pub fn hstack(&self, other: &Matrix<T>) -> Result<Self> {
        if self.rows != other.rows {
            return Err(NnError::Shape(format!(
                "hstack of {} and {} rows",
                self.rows, other.rows
            )));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Self {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Columns `start..end` as a new matrix.
    pub fn columns(&self, start: usize, end: usize) -> Self {
        let cols = end - start;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Self {
            rows: self.rows,
            cols,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    /// Offset of the weight block in the flat parameter vector.
    pub offset: usize,
}

impl LayerShape {
    fn weight_len(&self) -> usize {
        self.inputs * self.outputs
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.weight_len()
    }

    fn end(&self) -> usize {
        self.bias_offset() + self.outputs
    }
}

/// Fully connected network: ReLU on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T = f64> {
    sizes: Vec<usize>,
    layers: Vec<LayerShape>,
    params: Vec<T>,
}

/// Σ (nᵢ·nᵢ₊₁ + nᵢ₊₁) over consecutive layer sizes.
pub fn parameter_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> Mlp<T> {
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Shape(format!("invalid layer sizes {sizes:?}")));
        }
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        let mut offset = 0;
        for w in sizes.windows(2) {
            let layer = LayerShape {
                inputs: w[0],
                outputs: w[1],
                offset,
            };
            offset = layer.end();
            layers.push(layer);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
            params: vec![T::ZERO; offset],
        })
    }

    /// Uniform(−1/√fan_in, 1/√fan_in) initialization for weights and
    /// biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in net.layers.clone() {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for p in &mut net.params[layer.offset..layer.end()] {
                *p = T::from_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<T>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(NnError::Shape(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    pub fn weight(&self, layer: usize) -> &[T] {
        let l = &self.layers[layer];
        &self.params[l.offset..l.bias_offset()]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [T] {
        let l = self.layers[layer];
        &mut self.params[l.offset..l.bias_offset()]
    }

    pub fn bias(&self, layer: usize) -> &[T] {
        let l = &self.layers[layer];
        &self.params[l.bias_offset()..l.end()]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [T] {
        let l = self.layers[layer];
        &mut self.params[l.bias_offset()..l.end()]
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols != self.input_size() {
            return Err(NnError::Shape(format!(
                "input has {} columns, network expects {}",
                x.cols,
                self.input_size()
            )));
        }
        Ok(())
    }

    fn linear(&self, layer: &LayerShape, x: &Matrix<T>) -> Matrix<T> {
        let batch = x.rows;
        let mut y = Matrix::zeros(batch, layer.outputs);
        let bias = &self.params[layer.bias_offset()..layer.end()];
        for i in 0..batch {
            y.row_mut(i).copy_from_slice(bias);
        }
        let w = &self.params[layer.offset..layer.bias_offset()];
        // y = x · Wᵀ + b
        T::gemm(
            batch,
            layer.inputs,
            layer.outputs,
            T::ONE,
            &x.data,
            layer.inputs as isize,
            1,
            w,
            1,
            layer.inputs as isize,
            T::ONE,
            &mut y.data,
            layer.outputs as isize,
            1,
        );
        y
    }

    /// Evaluates a batch without recording anything.
    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = self.linear(layer, &h);
            if i < last {
                relu_in_place(&mut h);
            }
        }
        Ok(h)
    }

    /// Single-sample convenience wrapper.
    pub fn forward_one(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(&Matrix::row_vector(x.to_vec()))?.data)
    }

    /// Evaluates a batch and records every operation on `tape`, replacing
    /// whatever it held.
    pub fn forward_recorded(&self, tape: &mut GradientTape<T>, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        tape.ops.clear();
        tape.param_len = self.params.len();
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let out = self.linear(layer, &h);
            tape.ops.push(Op::Linear {
                layer: i,
                input: std::mem::replace(&mut h, out),
            });
            if i < last {
                relu_in_place(&mut h);
                tape.ops.push(Op::Relu { output: h.clone() });
            }
        }
        Ok(h)
    }

    /// Propagates `d_output` (∂loss/∂output, same shape as the recorded
    /// output) back through the tape. Parameter gradients are added into
    /// `grads`; the gradient with respect to the input batch is returned.
    pub fn backward(
        &self,
        tape: &GradientTape<T>,
        d_output: &Matrix<T>,
        grads: &mut Gradients<T>,
    ) -> Result<Matrix<T>> {
        if tape.ops.is_empty() {
            return Err(NnError::EmptyTape);
        }
        if tape.param_len != self.params.len() || grads.values.len() != self.params.len() {
            return Err(NnError::Shape("tape or gradient buffer belongs to another network".into()));
        }
        if d_output.cols != self.output_size() {
            return Err(NnError::Shape(format!(
                "output gradient has {} columns, network has {} outputs",
                d_output.cols,
                self.output_size()
            )));
        }
        let mut delta = d_output.clone();
        for op in tape.ops.iter().rev() {
            match op {
                Op::Relu { output } => {
                    for (d, &y) in delta.data.iter_mut().zip(&output.data) {
                        if !(y > T::ZERO) {
                            *d = T::ZERO;
                        }
                    }
                }
                Op::Linear { layer, input } => {
                    let l = self.layers[*layer];
                    let batch = input.rows;
                    if delta.rows != batch {
                        return Err(NnError::Shape("batch size changed between passes".into()));
                    }
                    // dW += δᵀ · x
                    let dw = &mut grads.values[l.offset..l.bias_offset()];
                    T::gemm(
                        l.outputs,
                        batch,
                        l.inputs,
                        T::ONE,
                        &delta.data,
                        1,
                        l.outputs as isize,
                        &input.data,
                        l.inputs as isize,
                        1,
                        T::ONE,
                        dw,
                        l.inputs as isize,
                        1,
                    );
                    let db = &mut grads.values[l.bias_offset()..l.end()];
                    for i in 0..batch {
                        for (b, &d) in db.iter_mut().zip(delta.row(i)) {
                            *b += d;
                        }
                    }
                    // δ ← δ · W
                    let mut next = Matrix::zeros(batch, l.inputs);
                    T::gemm(
                        batch,
                        l.outputs,
                        l.inputs,
                        T::ONE,
                        &delta.data,
                        l.outputs as isize,
                        1,
                        &self.params[l.offset..l.bias_offset()],
                        l.inputs as isize,
                        1,
                        T::ZERO,
                        &mut next.data,
                        l.inputs as isize,
                        1,
                    );
                    delta = next;
                }
            }
        }
        Ok(delta)
    }

    /// target ← (1 − τ)·target + τ·self, parameter-wise.
    pub fn soft_update_into(&self, target: &mut Mlp<T>, tau: T) -> Result<()> {
        if target.params.len() != self.params.len() {
            return Err(NnError::Shape("soft update between different networks".into()));
        }
        let keep = T::ONE - tau;
        for (t, &s) in target.params.iter_mut().zip(&self.params) {
            *t = keep * *t + tau * s;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            precision: T::NAME.to_string(),
            sizes: self.sizes.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint<T>) -> Result<Self> {
        ckpt.check_header::<T>()?;
        let mut net = Self::zeros(&ckpt.sizes).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        if ckpt.params.len() != net.params.len() {
            return Err(NnError::Checkpoint(format!(
                "{} parameters stored, sizes {:?} need {}",
                ckpt.params.len(),
                ckpt.sizes,
                net.params.len()
            )));
        }
        if !ckpt.params.iter().all(|p| p.is_finite()) {
            return Err(NnError::Checkpoint("non-finite parameter".into()));
        }
        net.params = ckpt.params;
        Ok(net)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint<T> =
            serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(ckpt)
    }
}

fn relu_in_place<T: Real>(m: &mut Matrix<T>) {
    for v in &mut m.data {
        if !(*v > T::ZERO) {
            *v = T::ZERO;
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "pars-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk network: header fields, layer sizes, and the flat row-major
/// parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub precision: String,
    pub sizes: Vec<usize>,
    pub params: Vec<T>,
}

impl<T: Real> Checkpoint<T> {
    fn check_header<U: Real>(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NnError::Checkpoint(format!("unknown format '{}'", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.precision != U::NAME {
            return Err(NnError::Checkpoint(format!(
                "precision {} does not match {}",
                self.precision,
                U::NAME
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Linear { layer: usize, input: Matrix<T> },
    Relu { output: Matrix<T> },
}

/// Operations recorded during one forward pass.
#[derive(Debug, Clone, Default)]
pub struct GradientTape<T = f64> {
    ops: Vec<Op<T>>,
    param_len: usize,
}

impl<T: Real> GradientTape<T> {
    pub fn new() -> Self {
        Self {
            ops: Vec::new(),
            param_len: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn clear(&mut self) {
        self.ops.clear();
    }
}

/// Accumulated parameter gradients, same layout as [`Mlp::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f64> {
    pub values: Vec<T>,
}

impl<T: Real> Gradients<T> {
    pub fn for_net(net: &Mlp<T>) -> Self {
        Self {
            values: vec![T::ZERO; net.params.len()],
        }
    }

    pub fn zero(&mut self) {
        self.values.iter_mut().for_each(|g| *g = T::ZERO);
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|g| g.is_finite())
    }

    pub fn scale(&mut self, factor: T) {
        self.values.iter_mut().for_each(|g| *g = *g * factor);
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam<T = f64> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    /// Updates refused because the gradient was not finite.
    pub skipped: u64,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            skipped: 0,
            m: vec![T::ZERO; param_count],
            v: vec![T::ZERO; param_count],
        }
    }

    pub fn first_moment(&self) -> &[T] {
        &self.m
    }

    pub fn second_moment(&self) -> &[T] {
        &self.v
    }

    /// Applies one update in place. Returns `false` (and counts the event)
    /// when any gradient is non-finite; parameters are then untouched.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<bool> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::Shape(format!(
                "optimizer sized for {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if !grads.iter().all(|g| g.is_finite()) {
            self.skipped += 1;
            return Ok(false);
        }
        self.step += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_b1 = T::from_f64(1.0 - self.beta1);
        let one_b2 = T::from_f64(1.0 - self.beta2);
        let bc1 = 1.0 - self.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step.min(i32::MAX as u64) as i32);
        let step_size = T::from_f64(self.learning_rate / bc1);
        let bc2_sqrt = T::from_f64(bc2.sqrt());
        let eps = T::from_f64(self.epsilon);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + one_b1 * g;
            self.v[i] = b2 * self.v[i] + one_b2 * g * g;
            let denom = self.v[i].sqrt() / bc2_sqrt + eps;
            params[i] = params[i] - step_size * self.m[i] / denom;
        }
        Ok(true)
    }
}
