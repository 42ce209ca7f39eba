use ndarray::linalg::general_mat_mul;

use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Tensor};

/// Affine layer `y = xW + b` with `W: [in, out]`, `b: [out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: ParamTensor,
    pub b: ParamTensor,
    cache_x: Option<Tensor>,
}

impl Dense {
    pub fn new(w: ParamTensor, b: ParamTensor) -> Result<Self> {
        if w.theta.shape().len() != 2 || b.theta.shape().len() != 1 {
            return Err(Error::config("dense expects W: [in,out], b: [out]"));
        }
        if w.theta.shape()[1] != b.theta.shape()[0] {
            return Err(Error::config(format!(
                "dense W {:?} and b {:?} disagree on output width",
                w.theta.shape(),
                b.theta.shape()
            )));
        }
        Ok(Dense { w, b, cache_x: None })
    }

    pub fn in_width(&self) -> usize {
        self.w.theta.shape()[0]
    }

    pub fn out_width(&self) -> usize {
        self.w.theta.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (d_in, d_out) = (self.in_width(), self.out_width());
        if x.row_len() != d_in {
            return Err(Error::config(format!(
                "dense input width {} != expected {}",
                x.row_len(),
                d_in
            )));
        }
        let batch = x.rows();
        let mut y = Tensor::zeros(&[batch, d_out]);
        general_mat_mul(1.0, &x.view2(), &self.w.theta.view2(), 0.0, &mut y.view2_mut());
        let bias = self.b.theta.data();
        for r in 0..batch {
            let row = y.row_mut(r);
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        y.debug_assert_finite("dense_forward");
        self.cache_x = if train { Some(x.clone()) } else { None };
        Ok(y)
    }

    /// Accumulates into `w.grad` / `b.grad` and returns the input gradient,
    /// or `None` when `want_grad_in` is false (first layer of a network).
    pub fn backward(&mut self, grad_out: &Tensor, want_grad_in: bool) -> Result<Option<Tensor>> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| Error::Usage("dense backward without forward cache".into()))?;
        let batch = x.rows();
        if grad_out.rows() != batch || grad_out.row_len() != self.out_width() {
            return Err(Error::config("dense grad_out shape mismatch"));
        }
        // dW += x^T gy
        general_mat_mul(
            1.0,
            &x.view2().t(),
            &grad_out.view2(),
            1.0,
            &mut self.w.grad.view2_mut(),
        );
        // db += column sums of gy
        let db = self.b.grad.data_mut();
        for r in 0..batch {
            for (g, gy) in db.iter_mut().zip(grad_out.row(r)) {
                *g += gy;
            }
        }
        if !want_grad_in {
            return Ok(None);
        }
        let mut gx = Tensor::zeros(&[batch, self.in_width()]);
        general_mat_mul(
            1.0,
            &grad_out.view2(),
            &self.w.theta.view2().t(),
            0.0,
            &mut gx.view2_mut(),
        );
        gx.debug_assert_finite("dense_backward");
        Ok(Some(gx))
    }

    pub fn clear_cache(&mut self) {
        self.cache_x = None;
    }

    pub fn has_cache(&self) -> bool {
        self.cache_x.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(w: Vec<f32>, shape: [usize; 2], b: Vec<f32>) -> Dense {
        let w = ParamTensor::new(Tensor::from_vec(&[shape[0], shape[1]], w).unwrap());
        let blen = b.len();
        let b = ParamTensor::new(Tensor::from_vec(&[blen], b).unwrap());
        Dense::new(w, b).unwrap()
    }

    #[test]
    fn identity_weights_pass_input() {
        let mut d = dense(vec![1., 0., 0., 1.], [2, 2], vec![0., 0.]);
        let x = Tensor::from_vec(&[1, 2], vec![1., 2.]).unwrap();
        let y = d.forward(&x, false).unwrap();
        assert_eq!(y.data(), &[1., 2.]);
    }

    #[test]
    fn zero_input_passes_bias() {
        let mut d = dense(vec![5., -2., 7., 0.], [2, 2], vec![3., -1.]);
        let x = Tensor::from_vec(&[1, 2], vec![0., 0.]).unwrap();
        let y = d.forward(&x, false).unwrap();
        assert_eq!(y.data(), &[3., -1.]);
    }

    #[test]
    fn hand_matmul() {
        let mut d = dense(vec![2., 0., 0., 3.], [2, 2], vec![1., 1.]);
        let x = Tensor::from_vec(&[1, 2], vec![1., 1.]).unwrap();
        let y = d.forward(&x, false).unwrap();
        assert_eq!(y.data(), &[3., 4.]);
    }

    #[test]
    fn backward_analytic_case() {
        let mut d = dense(vec![1., 1.], [2, 1], vec![0.]);
        let x = Tensor::from_vec(&[1, 2], vec![0.5, -0.5]).unwrap();
        d.forward(&x, true).unwrap();
        let gy = Tensor::from_vec(&[1, 1], vec![1.]).unwrap();
        let gx = d.backward(&gy, true).unwrap().unwrap();
        assert_eq!(gx.data(), &[1., 1.]);
        assert_eq!(d.w.grad.data(), &[0.5, -0.5]);
        assert_eq!(d.b.grad.data(), &[1.]);
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut d = dense(vec![1., 2., 3., 4.], [2, 2], vec![0., 0.]);
        let x = Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        d.forward(&x, true).unwrap();
        let gy = Tensor::zeros(&[2, 2]);
        let gx = d.backward(&gy, true).unwrap().unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.));
        assert!(d.w.grad.data().iter().all(|&v| v == 0.));
    }

    #[test]
    fn backward_without_forward_is_usage_error() {
        let mut d = dense(vec![1.], [1, 1], vec![0.]);
        let gy = Tensor::zeros(&[1, 1]);
        assert!(matches!(d.backward(&gy, true), Err(crate::Error::Usage(_))));
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let mut d = dense(vec![1.], [1, 1], vec![0.]);
        let x = Tensor::zeros(&[1, 3]);
        assert!(matches!(d.forward(&x, false), Err(crate::Error::Config(_))));
    }
}
