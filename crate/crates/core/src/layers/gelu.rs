use crate::error::{Error, Result};
use crate::tensor::Tensor;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact-erf GELU: `0.5 * x * (1 + erf(x / sqrt(2)))`.
pub fn gelu(x: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .map(|&v| {
            let v64 = v as f64;
            (0.5 * v64 * (1.0 + libm::erf(v64 * FRAC_1_SQRT_2))) as f32
        })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// `dy/dx = Phi(x) + x * phi(x)` with the standard-normal cdf/pdf.
pub fn gelu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(x.shape(), grad_out.shape());
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| {
            let v64 = v as f64;
            let cdf = 0.5 * (1.0 + libm::erf(v64 * FRAC_1_SQRT_2));
            let pdf = INV_SQRT_2PI * (-0.5 * v64 * v64).exp();
            (g as f64 * (cdf + v64 * pdf)) as f32
        })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// GELU as a caching layer.
#[derive(Debug, Clone, Default)]
pub struct Gelu {
    cache_x: Option<Tensor>,
}

impl Gelu {
    pub fn new() -> Self {
        Gelu::default()
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let y = gelu(x);
        self.cache_x = if train { Some(x.clone()) } else { None };
        y
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| Error::Usage("gelu backward without forward cache".into()))?;
        Ok(gelu_backward(x, grad_out))
    }

    pub fn clear_cache(&mut self) {
        self.cache_x = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(v: f32) -> f32 {
        gelu(&Tensor::from_vec(&[1], vec![v]).unwrap()).data()[0]
    }

    #[test]
    fn zero_is_fixed_point() {
        assert_eq!(g1(0.0), 0.0);
    }

    #[test]
    fn saturates_to_identity() {
        assert!((g1(10.0) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn known_value_at_one() {
        // 0.5 * 1 * (1 + erf(0.7071...)) = 0.841344...
        assert!((g1(1.0) - 0.841_345).abs() < 1e-5);
    }
}
