use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Tensor};

/// 2-D cross-correlation with stride and zero padding.
///
/// Kernels are `[c_out, c_in, k, k]`, inputs `[batch, c_in, h, w]`.
/// There is no pooling or normalization anywhere in the layer set.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub kernels: ParamTensor,
    pub bias: ParamTensor,
    pub stride: usize,
    pub padding: usize,
    cache_x: Option<Tensor>,
}

impl Conv2d {
    pub fn new(kernels: ParamTensor, bias: ParamTensor, stride: usize, padding: usize) -> Result<Self> {
        if kernels.theta.shape().len() != 4 {
            return Err(Error::config("conv kernels must be [c_out, c_in, k, k]"));
        }
        if bias.theta.shape() != [kernels.theta.shape()[0]] {
            return Err(Error::config("conv bias must be [c_out]"));
        }
        if stride == 0 {
            return Err(Error::config("conv stride must be positive"));
        }
        Ok(Conv2d { kernels, bias, stride, padding, cache_x: None })
    }

    pub fn c_out(&self) -> usize {
        self.kernels.theta.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.kernels.theta.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.theta.shape()[2]
    }

    pub fn out_spatial(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel_size();
        let span_h = h + 2 * self.padding;
        let span_w = w + 2 * self.padding;
        if span_h < k || span_w < k {
            return Err(Error::config(format!(
                "conv kernel {k} does not fit input {h}x{w} with padding {}",
                self.padding
            )));
        }
        Ok(((span_h - k) / self.stride + 1, (span_w - k) / self.stride + 1))
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let [batch, c_in, h, w] = shape4(x, "conv input")?;
        if c_in != self.c_in() {
            return Err(Error::config(format!(
                "conv input channels {} != expected {}",
                c_in,
                self.c_in()
            )));
        }
        let (oh, ow) = self.out_spatial(h, w)?;
        let (c_out, k, s, p) = (self.c_out(), self.kernel_size(), self.stride, self.padding);
        let mut y = Tensor::zeros(&[batch, c_out, oh, ow]);
        let kern = self.kernels.theta.data();
        let bias = self.bias.theta.data();
        let xd = x.data();
        let yd = y.data_mut();
        for b in 0..batch {
            for co in 0..c_out {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[co];
                        for ci in 0..c_in {
                            for ky in 0..k {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy as usize >= h {
                                    continue;
                                }
                                for kx in 0..k {
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if ix < 0 || ix as usize >= w {
                                        continue;
                                    }
                                    acc += kern[((co * c_in + ci) * k + ky) * k + kx]
                                        * xd[((b * c_in + ci) * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        yd[((b * c_out + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        y.debug_assert_finite("conv2d_forward");
        self.cache_x = if train { Some(x.clone()) } else { None };
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor, want_grad_in: bool) -> Result<Option<Tensor>> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| Error::Usage("conv backward without forward cache".into()))?;
        let [batch, c_in, h, w] = shape4(x, "conv input")?;
        let (oh, ow) = self.out_spatial(h, w)?;
        let [gb, gc, gh, gw] = shape4(grad_out, "conv grad_out")?;
        if [gb, gc, gh, gw] != [batch, self.c_out(), oh, ow] {
            return Err(Error::config("conv grad_out shape mismatch"));
        }
        let (c_out, k, s, p) = (self.c_out(), self.kernel_size(), self.stride, self.padding);
        let kern = self.kernels.theta.data();
        let xd = x.data();
        let god = grad_out.data();
        let dk = self.kernels.grad.data_mut();
        let db = self.bias.grad.data_mut();
        let mut gx = Tensor::zeros(&[batch, c_in, h, w]);
        let gxd = gx.data_mut();
        for b in 0..batch {
            for co in 0..c_out {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = god[((b * c_out + co) * oh + oy) * ow + ox];
                        if g == 0.0 {
                            continue;
                        }
                        db[co] += g;
                        for ci in 0..c_in {
                            for ky in 0..k {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy as usize >= h {
                                    continue;
                                }
                                for kx in 0..k {
                                    let ix = (ox * s + kx) as isize - p as isize;
                                    if ix < 0 || ix as usize >= w {
                                        continue;
                                    }
                                    let ki = ((co * c_in + ci) * k + ky) * k + kx;
                                    let xi = ((b * c_in + ci) * h + iy as usize) * w + ix as usize;
                                    dk[ki] += g * xd[xi];
                                    if want_grad_in {
                                        gxd[xi] += g * kern[ki];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(if want_grad_in { Some(gx) } else { None })
    }

    pub fn clear_cache(&mut self) {
        self.cache_x = None;
    }
}

fn shape4(t: &Tensor, what: &str) -> Result<[usize; 4]> {
    match t.shape() {
        &[a, b, c, d] => Ok([a, b, c, d]),
        s => Err(Error::config(format!("{what} must be 4-D, got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(c_out: usize, c_in: usize, k: usize, stride: usize, padding: usize) -> Conv2d {
        Conv2d::new(
            ParamTensor::zeros(&[c_out, c_in, k, k]),
            ParamTensor::zeros(&[c_out]),
            stride,
            padding,
        )
        .unwrap()
    }

    #[test]
    fn mnist_output_map_is_6x6() {
        let c = conv(8, 1, 7, 4, 0);
        assert_eq!(c.out_spatial(28, 28).unwrap(), (6, 6));
    }

    #[test]
    fn one_by_one_identity_kernel() {
        let mut c = Conv2d::new(
            ParamTensor::new(Tensor::from_vec(&[1, 1, 1, 1], vec![1.]).unwrap()),
            ParamTensor::zeros(&[1]),
            1,
            0,
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let y = c.forward(&x, false).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_kernels_pass_constant_bias() {
        let mut c = Conv2d::new(
            ParamTensor::zeros(&[2, 1, 3, 3]),
            ParamTensor::new(Tensor::from_vec(&[2], vec![1.5, -2.0]).unwrap()),
            1,
            0,
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|v| v as f32).collect()).unwrap();
        let y = c.forward(&x, false).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 2]);
        assert!(y.data()[..4].iter().all(|&v| v == 1.5));
        assert!(y.data()[4..].iter().all(|&v| v == -2.0));
    }

    #[test]
    fn nonpositive_output_is_config_error() {
        let c = conv(1, 1, 7, 1, 0);
        assert!(c.out_spatial(5, 5).is_err());
    }

    #[test]
    fn identity_kernel_backward_passes_grad() {
        let mut c = Conv2d::new(
            ParamTensor::new(Tensor::from_vec(&[1, 1, 1, 1], vec![1.]).unwrap()),
            ParamTensor::zeros(&[1]),
            1,
            0,
        )
        .unwrap();
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        c.forward(&x, true).unwrap();
        let go = Tensor::from_vec(&[1, 1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let gx = c.backward(&go, true).unwrap().unwrap();
        assert_eq!(gx.data(), go.data());
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut c = conv(2, 1, 3, 1, 1);
        let x = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(|v| v as f32).collect()).unwrap();
        c.forward(&x, true).unwrap();
        let go = Tensor::zeros(&[1, 2, 4, 4]);
        let gx = c.backward(&go, true).unwrap().unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.));
        assert!(c.kernels.grad.data().iter().all(|&v| v == 0.));
    }
}
