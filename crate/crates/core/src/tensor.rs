//! Dense shape-tagged tensors and trainable parameters.

use ndarray::{ArrayView2, ArrayViewMut2};

use crate::error::{Error, Result};

/// A dense, row-major `f32` array with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::config(format!(
                "tensor shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Number of rows when viewed as `[rows, cols]`; the first axis.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    /// Elements per leading-axis slice.
    pub fn row_len(&self) -> usize {
        if self.shape.is_empty() {
            0
        } else {
            self.shape[1..].iter().product()
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        let w = self.row_len();
        &mut self.data[i * w..(i + 1) * w]
    }

    /// 2-D view with the leading axis as rows and everything else flattened.
    pub fn view2(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.rows(), self.row_len()), &self.data)
            .expect("tensor data length matches shape")
    }

    pub fn view2_mut(&mut self) -> ArrayViewMut2<'_, f32> {
        let (r, c) = (self.rows(), self.row_len());
        ArrayViewMut2::from_shape((r, c), &mut self.data)
            .expect("tensor data length matches shape")
    }

    pub fn fill(&mut self, v: f32) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// Panics in debug builds if any entry is NaN or infinite.
    pub fn debug_assert_finite(&self, context: &str) {
        debug_assert!(
            self.data.iter().all(|v| v.is_finite()),
            "non-finite value after {context}"
        );
    }
}

/// A trainable parameter: weights, a co-shaped gradient buffer and a
/// nonnegative, nondecreasing importance accumulator.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub theta: Tensor,
    pub grad: Tensor,
    pub omega: Tensor,
}

impl ParamTensor {
    pub fn new(theta: Tensor) -> Self {
        let shape = theta.shape().to_vec();
        ParamTensor { theta, grad: Tensor::zeros(&shape), omega: Tensor::zeros(&shape) }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        ParamTensor::new(Tensor::zeros(shape))
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn row_views() {
        let t = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(t.row(1), &[4., 5., 6.]);
        assert_eq!(t.view2()[[0, 2]], 3.);
    }

    #[test]
    fn param_tensor_shapes_match() {
        let p = ParamTensor::zeros(&[4, 5]);
        assert_eq!(p.theta.shape(), p.grad.shape());
        assert_eq!(p.theta.shape(), p.omega.shape());
    }
}
