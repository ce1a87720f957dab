use ndarray::{ArrayD, ArrayViewD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major array of reals; the first axis is the batch axis
/// wherever a tensor is fed to a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor(ArrayD<f64>);

impl Tensor {
    pub fn new(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: values.len(),
            });
        }
        Ok(Self(
            ArrayD::from_shape_vec(IxDyn(shape), values).expect("length checked"),
        ))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self(ArrayD::zeros(IxDyn(shape)))
    }

    pub fn from_array(array: ArrayD<f64>) -> Self {
        Self(array.as_standard_layout().into_owned())
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    pub fn values(&self) -> &[f64] {
        self.0.as_slice().expect("standard layout")
    }

    pub fn view(&self) -> ArrayViewD<'_, f64> {
        self.0.view()
    }

    pub fn array(&self) -> &ArrayD<f64> {
        &self.0
    }

    pub fn into_array(self) -> ArrayD<f64> {
        self.0
    }

    pub fn batch_size(&self) -> usize {
        self.0.shape().first().copied().unwrap_or(0)
    }

    /// Rows of the batch axis in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self(self.0.select(ndarray::Axis(0), indices))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}
