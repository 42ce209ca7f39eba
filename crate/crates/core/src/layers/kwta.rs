//! k-winner-take-all with subtraction.
//!
//! Per row, the (k+1)-th highest activation is subtracted from every unit
//! and a ReLU is applied, leaving at most k strictly positive units. For
//! `k == width` there is no (k+1)-th order statistic; the threshold is 0
//! and the op degenerates to a plain ReLU. Entries tied with the threshold
//! map to 0, so the effective winner count can be below k.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Activation density expressed as a percentage of the layer width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KwtaSpec {
    pub density_pct: f64,
}

impl KwtaSpec {
    pub fn new(density_pct: f64) -> Result<Self> {
        if !(density_pct > 0.0 && density_pct <= 100.0) {
            return Err(Error::config(format!(
                "k-WTA density must be in (0, 100], got {density_pct}"
            )));
        }
        Ok(KwtaSpec { density_pct })
    }

    /// `k = round(density/100 * width)` clamped to `[1, width]`.
    pub fn resolve_k(&self, width: usize) -> usize {
        let k = (self.density_pct / 100.0 * width as f64).round() as usize;
        k.clamp(1, width)
    }
}

fn check_k(k: usize, width: usize) -> Result<()> {
    if k < 1 || k > width {
        return Err(Error::config(format!(
            "k-WTA k={k} out of range for width {width}"
        )));
    }
    Ok(())
}

/// Threshold for one row: the (k+1)-th largest value, or 0 when `k == width`.
fn row_threshold(row: &[f32], k: usize, scratch: &mut Vec<f32>) -> f32 {
    if k >= row.len() {
        return 0.0;
    }
    scratch.clear();
    scratch.extend_from_slice(row);
    // element at index k in descending order == (k+1)-th largest
    let (_, t, _) = scratch.select_nth_unstable_by(k, |a, b| b.partial_cmp(a).unwrap());
    *t
}

pub fn kwta_forward(x: &Tensor, k: usize) -> Result<Tensor> {
    let width = x.row_len();
    check_k(k, width)?;
    let mut y = Tensor::zeros(x.shape());
    let mut scratch = Vec::with_capacity(width);
    for r in 0..x.rows() {
        let t = row_threshold(x.row(r), k, &mut scratch);
        for (out, &v) in y.row_mut(r).iter_mut().zip(x.row(r)) {
            *out = (v - t).max(0.0);
        }
    }
    Ok(y)
}

/// Pass-through on winners (`y > 0`), zero elsewhere. The threshold is
/// treated as a constant.
pub fn kwta_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    debug_assert_eq!(y.shape(), grad_out.shape());
    let data = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&yv, &g)| if yv > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(y.shape(), data).expect("same shape")
}

/// k-WTA as a caching layer.
#[derive(Debug, Clone)]
pub struct Kwta {
    pub k: usize,
    cache_y: Option<Tensor>,
}

impl Kwta {
    pub fn new(k: usize) -> Self {
        Kwta { k, cache_y: None }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = kwta_forward(x, self.k)?;
        self.cache_y = if train { Some(y.clone()) } else { None };
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let y = self
            .cache_y
            .as_ref()
            .ok_or_else(|| Error::Usage("kwta backward without forward cache".into()))?;
        Ok(kwta_backward(y, grad_out))
    }

    pub fn clear_cache(&mut self) {
        self.cache_y = None;
    }
}
