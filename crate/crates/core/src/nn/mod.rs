//! The actor-critic network: three valid-padding convolutions, one 512-unit
//! dense layer, and task heads. Forward and backward passes are written by
//! hand on top of a GEMM kernel and are generic over [`Real`] so the same code
//! runs in single precision for training and double precision for gradient checks.

mod checkpoint;
mod conv;
mod loss;
mod network;
mod optim;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC};
pub use conv::{col2im, im2col, Layout};
pub(crate) use loss::argmax;
pub use loss::{a2c_loss, a2c_objective, cross_entropy_loss, log_softmax_rows, softmax_rows, A2cBatch, A2cStats, LossCoefs};
pub use network::{backward, feature_maps, forward, forward_train, ForwardCache, Outputs};
pub use optim::{RmsProp, RmsPropConfig};

use crate::engine::{OBS_CHANNELS, OBS_LEN, OBS_SIZE};
use crate::seeding::stream_rng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Debug;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss ({what}): {detail}")]
    NonFinite { what: &'static str, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scalar type the network runs in.
pub trait Real: num_traits::Float + Default + Debug + Send + Sync + std::iter::Sum + std::ops::AddAssign + 'static {
    /// `C = alpha * op(A) * op(B) + beta * C` with explicit row/column strides.
    ///
    /// # Safety
    /// The strided extents must lie inside the buffers behind the pointers.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f32(x: f32) -> Self;
    fn to_f32(self) -> f32;
    fn from_f64_lossy(x: f64) -> Self;
    fn to_f64_lossless(self) -> f64;
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn from_f32(x: f32) -> f32 {
        x
    }
    fn to_f32(self) -> f32 {
        self
    }
    fn from_f64_lossy(x: f64) -> f32 {
        x as f32
    }
    fn to_f64_lossless(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
    fn from_f32(x: f32) -> f64 {
        x as f64
    }
    fn to_f32(self) -> f32 {
        self as f32
    }
    fn from_f64_lossy(x: f64) -> f64 {
        x
    }
    fn to_f64_lossless(self) -> f64 {
        self
    }
}

/// Row-major matrix operand: `data` holds `rows x cols` when not transposed,
/// `cols x rows` when `transposed`.
#[derive(Clone, Copy)]
pub struct Mat<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, T> Mat<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Mat {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    /// The transpose of a row-major `cols x rows` buffer.
    pub fn t(data: &'a [T], rows: usize, cols: usize) -> Self {
        Mat {
            data,
            rows,
            cols,
            transposed: true,
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.rows as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out (m x n, row-major) = a * b + beta * out`.
pub fn matmul<T: Real>(a: Mat<'_, T>, b: Mat<'_, T>, beta: T, out: &mut [T]) {
    assert_eq!(a.cols, b.rows, "inner dimensions");
    assert_eq!(a.data.len(), a.rows * a.cols, "lhs buffer");
    assert_eq!(b.data.len(), b.rows * b.cols, "rhs buffer");
    assert_eq!(out.len(), a.rows * b.cols, "output buffer");
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: buffer lengths were checked against the dimensions above.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
}

/// Geometry of one convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub in_size: usize,
}

impl ConvGeom {
    pub const fn out_size(&self) -> usize {
        (self.in_size - self.kernel) / self.stride + 1
    }

    pub const fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

pub const CONV: [ConvGeom; 3] = [
    ConvGeom {
        in_channels: OBS_CHANNELS,
        out_channels: 32,
        kernel: 8,
        stride: 4,
        in_size: OBS_SIZE,
    },
    ConvGeom {
        in_channels: 32,
        out_channels: 64,
        kernel: 4,
        stride: 2,
        in_size: 20,
    },
    ConvGeom {
        in_channels: 64,
        out_channels: 64,
        kernel: 3,
        stride: 1,
        in_size: 9,
    },
];
pub const FLAT_LEN: usize = 64 * 7 * 7;
pub const HIDDEN: usize = 512;
pub const LOCATOR_CLASSES: usize = 100;

/// Which output heads sit on top of the shared trunk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heads {
    /// 4 policy logits and a scalar state value.
    ActorCritic,
    /// 100-way agent-cell classifier.
    Locator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv(ConvGeom),
    Dense { inputs: usize, outputs: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: &'static str,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv(g) => vec![g.out_channels, g.in_channels, g.kernel, g.kernel],
            LayerKind::Dense { inputs, outputs } => vec![outputs, inputs],
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv(g) => g.patch_len(),
            LayerKind::Dense { inputs, .. } => inputs,
        }
    }

    pub fn outputs(&self) -> usize {
        match self.kind {
            LayerKind::Conv(g) => g.out_channels,
            LayerKind::Dense { outputs, .. } => outputs,
        }
    }
}

pub const CONV_NAMES: [&str; 3] = ["conv1", "conv2", "conv3"];

/// Layer list for a head configuration, trunk first.
pub fn architecture(heads: Heads) -> Vec<LayerSpec> {
    let mut layers: Vec<LayerSpec> = CONV
        .iter()
        .zip(CONV_NAMES)
        .map(|(g, name)| LayerSpec {
            name,
            kind: LayerKind::Conv(*g),
        })
        .collect();
    layers.push(LayerSpec {
        name: "fc",
        kind: LayerKind::Dense {
            inputs: FLAT_LEN,
            outputs: HIDDEN,
        },
    });
    match heads {
        Heads::ActorCritic => {
            layers.push(LayerSpec {
                name: "policy",
                kind: LayerKind::Dense {
                    inputs: HIDDEN,
                    outputs: crate::engine::Action::COUNT,
                },
            });
            layers.push(LayerSpec {
                name: "value",
                kind: LayerKind::Dense { inputs: HIDDEN, outputs: 1 },
            });
        }
        Heads::Locator => layers.push(LayerSpec {
            name: "locator",
            kind: LayerKind::Dense {
                inputs: HIDDEN,
                outputs: LOCATOR_CLASSES,
            },
        }),
    }
    layers
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub name: String,
    pub weight_shape: Vec<usize>,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LayerParams<T> {
    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weights and biases of every layer plus the per-layer freeze mask.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T = f32> {
    pub heads: Heads,
    pub layers: Vec<LayerParams<T>>,
    pub freeze_mask: Vec<bool>,
    pub seed: u64,
}

const INIT_TAG: u64 = 0x696e_6974;

impl<T: Real> NetworkParams<T> {
    /// Fan-in uniform initialization: weights from `U(-b, b)` with
    /// `b = gain * sqrt(3 / fan_in)`, biases zero. See [`init_gain`]. Layer `i`
    /// draws from its own stream of `seed`.
    pub fn init(heads: Heads, seed: u64) -> Self {
        let layers = architecture(heads)
            .iter()
            .enumerate()
            .map(|(i, spec)| init_layer(spec, seed, i))
            .collect::<Vec<_>>();
        let n = layers.len();
        NetworkParams {
            heads,
            layers,
            freeze_mask: vec![false; n],
            seed,
        }
    }

    pub fn zeros(heads: Heads) -> Self {
        let layers = architecture(heads)
            .iter()
            .map(|spec| {
                let shape = spec.weight_shape();
                LayerParams {
                    name: spec.name.to_string(),
                    weight: vec![T::zero(); shape.iter().product()],
                    weight_shape: shape,
                    bias: vec![T::zero(); spec.outputs()],
                }
            })
            .collect::<Vec<_>>();
        let n = layers.len();
        NetworkParams {
            heads,
            layers,
            freeze_mask: vec![false; n],
            seed: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    pub fn layer(&self, name: &str) -> Option<&LayerParams<T>> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn is_frozen(&self, index: usize) -> bool {
        self.freeze_mask[index]
    }

    /// Checks layer names and shapes against the architecture for `self.heads`.
    pub fn check_shapes(&self) -> Result<(), NnError> {
        let arch = architecture(self.heads);
        if arch.len() != self.layers.len() || self.freeze_mask.len() != self.layers.len() {
            return Err(NnError::Shape(format!("{} layers, expected {}", self.layers.len(), arch.len())));
        }
        for (spec, l) in arch.iter().zip(&self.layers) {
            let shape = spec.weight_shape();
            if l.name != spec.name || l.weight_shape != shape || l.weight.len() != shape.iter().product::<usize>() || l.bias.len() != spec.outputs() {
                return Err(NnError::Shape(format!("layer {} does not match {}{:?}", l.name, spec.name, shape)));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> NetworkParams<U> {
        NetworkParams {
            heads: self.heads,
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    name: l.name.clone(),
                    weight_shape: l.weight_shape.clone(),
                    weight: l.weight.iter().map(|&x| U::from_f64_lossy(x.to_f64_lossless())).collect(),
                    bias: l.bias.iter().map(|&x| U::from_f64_lossy(x.to_f64_lossless())).collect(),
                })
                .collect(),
            freeze_mask: self.freeze_mask.clone(),
            seed: self.seed,
        }
    }
}

/// Output-variance gain per layer: `sqrt(2)` for the ReLU trunk, 0.01 for the
/// policy head so the initial policy is near uniform, 1 for the value and locator heads.
pub fn init_gain(name: &str) -> f64 {
    match name {
        "policy" => 0.01,
        "value" | "locator" => 1.0,
        _ => std::f64::consts::SQRT_2,
    }
}

fn init_layer<T: Real>(spec: &LayerSpec, seed: u64, index: usize) -> LayerParams<T> {
    let mut rng = stream_rng(seed, &[INIT_TAG, index as u64]);
    let bound = init_gain(spec.name) * (3.0 / spec.fan_in() as f64).sqrt();
    let shape = spec.weight_shape();
    let n: usize = shape.iter().product();
    let weight = (0..n).map(|_| T::from_f64_lossy(rng.random_range(-bound..bound) as f32 as f64)).collect();
    let bias = vec![T::zero(); spec.outputs()];
    LayerParams {
        name: spec.name.to_string(),
        weight_shape: shape,
        weight,
        bias,
    }
}

/// Per-layer gradients. `None` marks a frozen layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    pub layers: Vec<Option<LayerGrad<T>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Gradients<T> {
    pub fn global_norm(&self) -> T {
        self.layers
            .iter()
            .flatten()
            .flat_map(|g| g.weight.iter().chain(&g.bias))
            .map(|&x| x * x)
            .sum::<T>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: T) {
        let norm = self.global_norm();
        if norm > max_norm {
            let scale = max_norm / norm;
            for g in self.layers.iter_mut().flatten() {
                g.weight.iter_mut().chain(g.bias.iter_mut()).for_each(|x| *x = *x * scale);
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flatten().all(|g| g.weight.iter().chain(&g.bias).all(|x| x.is_finite()))
    }
}

/// Checks a flat observation batch and returns its size.
pub(crate) fn batch_size(inputs: &[f32]) -> Result<usize, NnError> {
    if inputs.is_empty() || !inputs.len().is_multiple_of(OBS_LEN) {
        return Err(NnError::Shape(format!("input length {} is not a positive multiple of {OBS_LEN}", inputs.len())));
    }
    Ok(inputs.len() / OBS_LEN)
}
