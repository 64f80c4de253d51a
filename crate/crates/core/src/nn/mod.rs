//! A small trainable conv/BiLSTM stack for framewise breath detection.
//!
//! Layout: every activation is `[batch, time, channel]`, row-major. Layers are
//! generic over [`Float`] so the same code trains in `f32` and is gradient
//! checked in `f64`.

mod adam;
mod io;
mod layers;
mod model;
mod train;

pub use adam::{Adam, AdamConfig};
pub use io::{load_model, read_model, save_model, write_model, write_model_with_meta, MODEL_VERSION};
pub use layers::{
    dropout_mask, relu_backward, relu_forward, BatchNorm1d, BiLstm, Conv1d, Dense, LstmDirection, MaxPool1d,
};
pub use model::{bce_loss, ArchConfig, BreathDetector, DropoutMasks, ForwardCache};
pub use train::{
    assemble_batch, make_chunks, predict_file, train, Chunk, TrainConfig, TrainReport,
};

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Scalar type the network is generic over.
pub trait Float:
    num_traits::Float + AddAssign + SubAssign + MulAssign + Sum + Default + Debug + Send + Sync + 'static
{
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Float for f32 {
    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> crate::Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(crate::Error::Shape {
                expected: shape,
                actual: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn cast<U: Float>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }
}

pub(crate) fn sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
