//! Sparse pairwise interaction output layer.
//!
//! The layer expands its input into pairwise cross features `x[a] * x[b]`
//! (a < b) and wires a randomly sampled subset of (cross, output) pairs to
//! the logits with one trainable weight each. Crosses may feed multiple
//! outputs when the budget demands it. There is no output bias.
//!
//! Connections are stored sorted by cross id with a CSR-style offset table,
//! so forward/backward only touch crosses whose inputs are active. Because
//! the input normally comes out of a k-WTA layer this skips most of the
//! work; skipping a zero factor never changes any sum.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Tensor};

/// Number of pairwise cross features for input width `d`: `d(d-1)/2`.
pub fn cross_count(d: usize) -> u64 {
    (d as u64) * (d as u64 - 1) / 2
}

fn cross_base(a: u64, d: u64) -> u64 {
    a * (2 * d - a - 1) / 2
}

/// Inverse of `cross_id`: cross index -> `(a, b)` with `a < b`.
fn unrank_cross(c: u64, d: u64) -> (u32, u32) {
    // float guess, then integer fixup
    let df = d as f64 - 0.5;
    let mut a = (df - (df * df - 2.0 * c as f64).max(0.0).sqrt()).floor() as u64;
    a = a.min(d - 2);
    while cross_base(a, d) > c {
        a -= 1;
    }
    while a + 1 <= d - 2 && cross_base(a + 1, d) <= c {
        a += 1;
    }
    let b = a + 1 + (c - cross_base(a, d));
    (a as u32, b as u32)
}

/// Sparse triple table `(a, b, o)` plus per-connection weights.
#[derive(Debug, Clone)]
pub struct PairwiseConnections {
    a: Vec<u32>,
    b: Vec<u32>,
    o: Vec<u32>,
    pub weights: ParamTensor,
    input_width: usize,
    n_outputs: usize,
    /// CSR offsets into the connection arrays, indexed by cross id.
    offsets: Vec<u32>,
    cache_x: Option<Tensor>,
}

impl PairwiseConnections {
    /// Samples `budget` distinct (cross, output) triples uniformly without
    /// replacement; weights are N(0, 0.001^2). Deterministic per seed.
    pub fn sample(d: usize, n_outputs: usize, budget: usize, seed: u64) -> Result<Self> {
        let space = cross_count(d)
            .checked_mul(n_outputs as u64)
            .ok_or_else(|| Error::config("pairwise triple space overflows"))?;
        if budget == 0 || budget as u64 > space {
            return Err(Error::config(format!(
                "pairwise budget {budget} outside (0, {space}] for d={d}, n_outputs={n_outputs}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<u64> = if (budget as u64) * 2 > space {
            // dense case: partial Fisher-Yates over the whole space
            let mut all: Vec<u64> = (0..space).collect();
            for i in 0..budget as u64 {
                let j = rng.gen_range(i..space);
                all.swap(i as usize, j as usize);
            }
            all.truncate(budget);
            all
        } else {
            let mut seen = HashSet::with_capacity(budget * 2);
            let mut out = Vec::with_capacity(budget);
            while out.len() < budget {
                let idx = rng.gen_range(0..space);
                if seen.insert(idx) {
                    out.push(idx);
                }
            }
            out
        };
        picked.sort_unstable();

        let n_out = n_outputs as u64;
        let mut triples = Vec::with_capacity(budget);
        for idx in picked {
            let (a, b) = unrank_cross(idx / n_out, d as u64);
            triples.push((a, b, (idx % n_out) as u32));
        }
        let std = Normal::new(0.0f64, 0.001).expect("valid normal");
        let weights: Vec<f32> = (0..budget).map(|_| std.sample(&mut rng) as f32).collect();
        Self::from_triples(d, n_outputs, triples, weights)
    }

    /// Builds a layer from explicit triples (used by tests and fixed wirings).
    pub fn from_triples(
        d: usize,
        n_outputs: usize,
        mut triples: Vec<(u32, u32, u32)>,
        weights: Vec<f32>,
    ) -> Result<Self> {
        if triples.len() != weights.len() {
            return Err(Error::config("pairwise triple/weight count mismatch"));
        }
        if triples.len() >= u32::MAX as usize {
            return Err(Error::config("pairwise budget too large"));
        }
        let order: Vec<usize> = {
            let mut idx: Vec<usize> = (0..triples.len()).collect();
            idx.sort_by_key(|&i| triples[i]);
            idx
        };
        let weights: Vec<f32> = order.iter().map(|&i| weights[i]).collect();
        triples.sort_unstable();
        let dd = d as u32;
        let mut prev: Option<(u32, u32, u32)> = None;
        for &(a, b, o) in &triples {
            if !(a < b && b < dd) || o as usize >= n_outputs {
                return Err(Error::config(format!(
                    "invalid pairwise triple ({a}, {b}, {o}) for d={d}, n_outputs={n_outputs}"
                )));
            }
            if prev == Some((a, b, o)) {
                return Err(Error::config(format!("duplicate pairwise triple ({a}, {b}, {o})")));
            }
            prev = Some((a, b, o));
        }
        let n_crosses = cross_count(d) as usize;
        let mut offsets = vec![0u32; n_crosses + 1];
        for &(a, b, _) in &triples {
            let c = cross_base(a as u64, d as u64) as usize + (b - a - 1) as usize;
            offsets[c + 1] += 1;
        }
        for i in 0..n_crosses {
            offsets[i + 1] += offsets[i];
        }
        let wlen = weights.len();
        Ok(PairwiseConnections {
            a: triples.iter().map(|t| t.0).collect(),
            b: triples.iter().map(|t| t.1).collect(),
            o: triples.iter().map(|t| t.2).collect(),
            weights: ParamTensor::new(Tensor::from_vec(&[wlen], weights)?),
            input_width: d,
            n_outputs,
            offsets,
            cache_x: None,
        })
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_connections(&self) -> usize {
        self.a.len()
    }

    pub fn triples(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        (0..self.a.len()).map(move |i| (self.a[i], self.b[i], self.o[i]))
    }

    /// `logits[r][o] = sum over connections (a,b,o) of w * x[r][a] * x[r][b]`.
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        if x.row_len() != self.input_width {
            return Err(Error::config(format!(
                "pairwise input width {} != expected {}",
                x.row_len(),
                self.input_width
            )));
        }
        let d = self.input_width as u64;
        let batch = x.rows();
        let mut y = Tensor::zeros(&[batch, self.n_outputs]);
        let w = self.weights.theta.data();
        let mut active: Vec<u32> = Vec::with_capacity(self.input_width);
        for r in 0..batch {
            let row = x.row(r);
            active.clear();
            active.extend(
                row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i as u32),
            );
            let out = y.row_mut(r);
            for (ai, &i) in active.iter().enumerate() {
                let base = cross_base(i as u64, d);
                let xi = row[i as usize];
                for &j in &active[ai + 1..] {
                    let c = (base + (j - i - 1) as u64) as usize;
                    let prod = xi * row[j as usize];
                    for t in self.offsets[c] as usize..self.offsets[c + 1] as usize {
                        out[self.o[t] as usize] += w[t] * prod;
                    }
                }
            }
        }
        y.debug_assert_finite("pairwise_forward");
        self.cache_x = if train { Some(x.clone()) } else { None };
        Ok(y)
    }

    /// Product-rule backward: accumulates weight grads and returns grad_in.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor> {
        let x = self
            .cache_x
            .as_ref()
            .ok_or_else(|| Error::Usage("pairwise backward without forward cache".into()))?;
        let batch = x.rows();
        if grad_out.rows() != batch || grad_out.row_len() != self.n_outputs {
            return Err(Error::config("pairwise grad_out shape mismatch"));
        }
        let d = self.input_width;
        let w = self.weights.theta.data();
        let dw = self.weights.grad.data_mut();
        let mut gx = Tensor::zeros(&[batch, d]);
        let mut active: Vec<u32> = Vec::with_capacity(d);
        for r in 0..batch {
            let row = x.row(r);
            let go = grad_out.row(r);
            let gxr = gx.row_mut(r);
            active.clear();
            active.extend(
                row.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, _)| i as u32),
            );
            // Contributions with at least one active factor; a zero factor
            // contributes nothing, so iterating active-j x all-i is exact.
            for &j in &active {
                let j = j as usize;
                let xj = row[j];
                // crosses (i, j) with i < j: stride d-2-i between ids
                let mut c = j.wrapping_sub(1); // cross_base(0) + (j - 1); unused when j == 0
                for i in 0..j {
                    for t in self.offsets[c] as usize..self.offsets[c + 1] as usize {
                        let g = go[self.o[t] as usize];
                        gxr[i] += g * w[t] * xj;
                        let xi = row[i];
                        if xi != 0.0 {
                            // both factors active: single dw accumulation per cross
                            dw[t] += g * xi * xj;
                        }
                    }
                    c += d - 2 - i;
                }
                // crosses (j, i) with i > j: contiguous block
                let base = cross_base(j as u64, d as u64) as usize;
                for i in j + 1..d {
                    let c = base + (i - j - 1);
                    for t in self.offsets[c] as usize..self.offsets[c + 1] as usize {
                        let g = go[self.o[t] as usize];
                        gxr[i] += g * w[t] * xj;
                    }
                }
            }
        }
        gx.debug_assert_finite("pairwise_backward");
        Ok(gx)
    }

    pub fn clear_cache(&mut self) {
        self.cache_x = None;
    }
}
