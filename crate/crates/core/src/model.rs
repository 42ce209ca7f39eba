//! Network assembly and whole-network forward/backward.
//!
//! Architectures follow a fixed pattern: a backbone of Dense-GELU (or
//! Conv-GELU) blocks, one extra GELU, a single k-WTA immediately before
//! the head, and either a fully connected or a pairwise interaction head.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{Conv2d, Dense, Gelu, Kwta, KwtaSpec, PairwiseConnections};
use crate::seed;
use crate::tensor::{ParamTensor, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Backbone {
    Mlp { widths: Vec<usize> },
    Cnn { layers: Vec<ConvSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Head {
    Pairwise { budget: usize },
    Fc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InputShape {
    Flat(usize),
    Image([usize; 3]),
}

impl InputShape {
    pub fn flat_len(&self) -> usize {
        match self {
            InputShape::Flat(n) => *n,
            InputShape::Image([c, h, w]) => c * h * w,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub backbone: Backbone,
    pub head: Head,
    /// k-WTA density for the pre-head activation, percent of width.
    pub density_pct: f64,
    pub input_shape: InputShape,
    pub n_classes: usize,
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        KwtaSpec::new(self.density_pct)?;
        if self.n_classes == 0 {
            return Err(Error::config("n_classes must be positive"));
        }
        match &self.backbone {
            Backbone::Mlp { widths } => {
                if widths.is_empty() || widths.contains(&0) {
                    return Err(Error::config("MLP widths must be nonempty and positive"));
                }
            }
            Backbone::Cnn { layers } => {
                if layers.is_empty() || layers.iter().any(|l| l.channels == 0 || l.kernel == 0) {
                    return Err(Error::config("CNN layers must be nonempty with positive sizes"));
                }
            }
        }
        Ok(())
    }

    /// Standard 28x28 grayscale MLP architecture.
    pub fn mlp(widths: Vec<usize>, head: Head, density_pct: f64) -> Self {
        ArchitectureSpec {
            backbone: Backbone::Mlp { widths },
            head,
            density_pct,
            input_shape: InputShape::Flat(784),
            n_classes: 10,
        }
    }
}

enum Layer {
    Dense(Dense),
    Conv(Conv2d),
    Gelu(Gelu),
    Kwta(Kwta),
    Pairwise(PairwiseConnections),
    Flatten { cached_shape: Option<Vec<usize>> },
}

/// An assembled network with cached activations from the last training
/// forward pass.
pub struct Network {
    spec: ArchitectureSpec,
    layers: Vec<Layer>,
    cache_live: bool,
    loss_backward_done: bool,
}

fn he_normal(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ParamTensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let dist = Normal::new(0.0f64, std).expect("valid normal");
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| dist.sample(rng) as f32).collect();
    ParamTensor::new(Tensor::from_vec(shape, data).expect("shape matches"))
}

/// Builds a network per the architecture spec. Backbone and FC-head weights
/// are He-normal (fan-in), biases zero; pairwise weights are N(0, 0.001^2).
/// Deterministic per seed.
pub fn build_network(spec: &ArchitectureSpec, net_seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(net_seed, seed::role::INIT));
    let mut layers = Vec::new();
    // width of the k-WTA / head input after the backbone
    let head_width;
    match &spec.backbone {
        Backbone::Mlp { widths } => {
            let mut d_in = spec.input_shape.flat_len();
            for &w in widths {
                layers.push(Layer::Dense(Dense::new(
                    he_normal(&mut rng, &[d_in, w], d_in),
                    ParamTensor::zeros(&[w]),
                )?));
                layers.push(Layer::Gelu(Gelu::new()));
                d_in = w;
            }
            head_width = d_in;
        }
        Backbone::Cnn { layers: convs } => {
            let [mut c, mut h, mut w] = match spec.input_shape {
                InputShape::Image(s) => s,
                InputShape::Flat(_) => {
                    return Err(Error::config("CNN backbone requires an image input shape"))
                }
            };
            for cs in convs {
                let conv = Conv2d::new(
                    he_normal(
                        &mut rng,
                        &[cs.channels, c, cs.kernel, cs.kernel],
                        c * cs.kernel * cs.kernel,
                    ),
                    ParamTensor::zeros(&[cs.channels]),
                    cs.stride,
                    cs.padding,
                )?;
                let (oh, ow) = conv.out_spatial(h, w)?;
                layers.push(Layer::Conv(conv));
                layers.push(Layer::Gelu(Gelu::new()));
                c = cs.channels;
                h = oh;
                w = ow;
            }
            layers.push(Layer::Flatten { cached_shape: None });
            head_width = c * h * w;
        }
    }
    // extra GELU just before k-WTA
    layers.push(Layer::Gelu(Gelu::new()));
    let k = KwtaSpec::new(spec.density_pct)?.resolve_k(head_width);
    layers.push(Layer::Kwta(Kwta::new(k)));
    match spec.head {
        Head::Fc => {
            layers.push(Layer::Dense(Dense::new(
                he_normal(&mut rng, &[head_width, spec.n_classes], head_width),
                ParamTensor::zeros(&[spec.n_classes]),
            )?));
        }
        Head::Pairwise { budget } => {
            let conn_seed = seed::mix(net_seed, seed::role::CONNECTIONS);
            layers.push(Layer::Pairwise(PairwiseConnections::sample(
                head_width,
                spec.n_classes,
                budget,
                conn_seed,
            )?));
        }
    }
    Ok(Network { spec: spec.clone(), layers, cache_live: false, loss_backward_done: false })
}

impl Network {
    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    /// Width of the head input (equals the k-WTA layer width).
    pub fn head_width(&self) -> usize {
        match self.layers.last() {
            Some(Layer::Dense(d)) => d.in_width(),
            Some(Layer::Pairwise(p)) => p.input_width(),
            _ => 0,
        }
    }

    /// Resolved k of the pre-head k-WTA layer.
    pub fn kwta_k(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match l {
                Layer::Kwta(k) => Some(k.k),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Runs the network. With `train = true` intermediates are cached for a
    /// following backward pass; with `train = false` the pass is pure.
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let mut cur = match self.spec.input_shape {
            // MLP path accepts either flat or image batches
            InputShape::Flat(n) => {
                if x.row_len() != n {
                    return Err(Error::config(format!(
                        "input width {} != expected {}",
                        x.row_len(),
                        n
                    )));
                }
                Tensor::from_vec(&[x.rows(), n], x.data().to_vec())?
            }
            InputShape::Image([c, h, w]) => {
                if x.row_len() != c * h * w {
                    return Err(Error::config("input does not match image shape"));
                }
                Tensor::from_vec(&[x.rows(), c, h, w], x.data().to_vec())?
            }
        };
        for layer in &mut self.layers {
            cur = match layer {
                Layer::Dense(l) => l.forward(&cur, train)?,
                Layer::Conv(l) => l.forward(&cur, train)?,
                Layer::Gelu(l) => l.forward(&cur, train),
                Layer::Kwta(l) => l.forward(&cur, train)?,
                Layer::Pairwise(l) => l.forward(&cur, train)?,
                Layer::Flatten { cached_shape } => {
                    let shape = cur.shape().to_vec();
                    let flat = shape[1..].iter().product::<usize>();
                    *cached_shape = if train { Some(shape.clone()) } else { None };
                    Tensor::from_vec(&[shape[0], flat], cur.data().to_vec())?
                }
            };
        }
        self.cache_live = train;
        self.loss_backward_done = false;
        Ok(cur)
    }

    /// Loss backward: fills every `ParamTensor.grad` (overwriting the
    /// previous batch) from `d loss / d logits`. Errors when called twice
    /// without a new training forward.
    pub fn backward(&mut self, grad_logits: &Tensor) -> Result<()> {
        if !self.cache_live {
            return Err(Error::Usage("backward without a training forward".into()));
        }
        if self.loss_backward_done {
            return Err(Error::Usage("backward called twice without a new forward".into()));
        }
        self.backward_impl(grad_logits)?;
        self.loss_backward_done = true;
        Ok(())
    }

    /// Auxiliary backward for importance rules; reuses the same forward
    /// cache and also overwrites the grad buffers. Must run before the
    /// loss backward for the batch.
    pub fn backward_aux(&mut self, upstream: &Tensor) -> Result<()> {
        if !self.cache_live {
            return Err(Error::Usage("auxiliary backward without a training forward".into()));
        }
        self.backward_impl(upstream)
    }

    fn backward_impl(&mut self, grad_logits: &Tensor) -> Result<()> {
        self.for_each_param_mut(|p| p.zero_grad());
        let mut grad = grad_logits.clone();
        let n = self.layers.len();
        for idx in (0..n).rev() {
            // the first parametric layer does not need an input gradient
            let want_grad_in = idx > 0;
            grad = match &mut self.layers[idx] {
                Layer::Dense(l) => match l.backward(&grad, want_grad_in)? {
                    Some(g) => g,
                    None => break,
                },
                Layer::Conv(l) => match l.backward(&grad, want_grad_in)? {
                    Some(g) => g,
                    None => break,
                },
                Layer::Gelu(l) => l.backward(&grad)?,
                Layer::Kwta(l) => l.backward(&grad)?,
                Layer::Pairwise(l) => l.backward(&grad)?,
                Layer::Flatten { cached_shape } => {
                    let shape = cached_shape
                        .as_ref()
                        .ok_or_else(|| Error::Usage("flatten backward without cache".into()))?;
                    Tensor::from_vec(shape, grad.data().to_vec())?
                }
            };
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(l) => {
                    out.push(&l.w);
                    out.push(&l.b);
                }
                Layer::Conv(l) => {
                    out.push(&l.kernels);
                    out.push(&l.bias);
                }
                Layer::Pairwise(l) => out.push(&l.weights),
                _ => {}
            }
        }
        out
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut ParamTensor)) {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(l) => {
                    f(&mut l.w);
                    f(&mut l.b);
                }
                Layer::Conv(l) => {
                    f(&mut l.kernels);
                    f(&mut l.bias);
                }
                Layer::Pairwise(l) => f(&mut l.weights),
                _ => {}
            }
        }
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn clear_caches(&mut self) {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(l) => l.clear_cache(),
                Layer::Conv(l) => l.clear_cache(),
                Layer::Gelu(l) => l.clear_cache(),
                Layer::Kwta(l) => l.clear_cache(),
                Layer::Pairwise(l) => l.clear_cache(),
                Layer::Flatten { cached_shape } => *cached_shape = None,
            }
        }
        self.cache_live = false;
    }

    /// Writes a checkpoint: versioned header, the architecture spec as
    /// JSON, then `theta` and `omega` of every parameter as little-endian
    /// `f32`, in parameter order.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let spec_json = serde_json::to_vec(&self.spec)?;
        let mut write = |buf: &[u8]| f.write_all(buf).map_err(|e| Error::io(path, e));
        write(b"PWCL")?;
        write(&1u32.to_le_bytes())?;
        write(&(spec_json.len() as u64).to_le_bytes())?;
        write(&spec_json)?;
        for p in self.params() {
            for t in [&p.theta, &p.omega] {
                for v in t.data() {
                    write(&v.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    /// Restores a checkpoint written by [`Network::save_checkpoint`].
    pub fn load_checkpoint(path: &Path) -> Result<Network> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        let fail = |msg: &str| Error::Ingest { file: path.to_path_buf(), msg: msg.into() };
        if bytes.len() < 16 || &bytes[0..4] != b"PWCL" {
            return Err(fail("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != 1 {
            return Err(fail("unsupported checkpoint version"));
        }
        let spec_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let spec: ArchitectureSpec = serde_json::from_slice(
            bytes.get(16..16 + spec_len).ok_or_else(|| fail("truncated header"))?,
        )?;
        let mut net = build_network(&spec, 0)?;
        let mut off = 16 + spec_len;
        let mut err = None;
        net.for_each_param_mut(|p| {
            if err.is_some() {
                return;
            }
            for t in [&mut p.theta, &mut p.omega] {
                for v in t.data_mut() {
                    match bytes.get(off..off + 4) {
                        Some(b) => *v = f32::from_le_bytes(b.try_into().unwrap()),
                        None => {
                            err = Some(());
                            return;
                        }
                    }
                    off += 4;
                }
            }
        });
        if err.is_some() {
            return Err(fail("truncated parameter data"));
        }
        if off != bytes.len() {
            return Err(fail("trailing bytes after parameter data"));
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(spec: &ArchitectureSpec) -> usize {
        build_network(spec, 1).unwrap().param_count()
    }

    #[test]
    fn table_param_counts() {
        assert_eq!(count(&ArchitectureSpec::mlp(vec![1000], Head::Fc, 10.0)), 795_010);
        assert_eq!(
            count(&ArchitectureSpec::mlp(vec![700], Head::Pairwise { budget: 244_650 }, 20.0)),
            794_150
        );
        assert_eq!(
            count(&ArchitectureSpec::mlp(vec![1000, 1000, 1000], Head::Fc, 10.0)),
            2_797_010
        );
    }

    #[test]
    fn cnn_param_count() {
        let spec = ArchitectureSpec {
            backbone: Backbone::Cnn {
                layers: vec![ConvSpec { kernel: 7, stride: 4, padding: 0, channels: 8 }],
            },
            head: Head::Fc,
            density_pct: 10.0,
            input_shape: InputShape::Image([1, 28, 28]),
            n_classes: 10,
        };
        // conv: 8*1*7*7 + 8 = 400; head: 288*10 + 10 = 2890
        assert_eq!(count(&spec), 3_290);
    }

    #[test]
    fn same_seed_rebuilds_identically() {
        let spec = ArchitectureSpec::mlp(vec![20], Head::Pairwise { budget: 50 }, 30.0);
        let a = build_network(&spec, 9).unwrap();
        let b = build_network(&spec, 9).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.theta.data(), pb.theta.data());
        }
        let c = build_network(&spec, 10).unwrap();
        assert_ne!(a.params()[0].theta.data(), c.params()[0].theta.data());
    }

    #[test]
    fn zero_input_pairwise_head_gives_zero_logits() {
        let spec = ArchitectureSpec {
            backbone: Backbone::Mlp { widths: vec![8] },
            head: Head::Pairwise { budget: 10 },
            density_pct: 50.0,
            input_shape: InputShape::Flat(4),
            n_classes: 3,
        };
        let mut net = build_network(&spec, 3).unwrap();
        let y = net.forward(&Tensor::zeros(&[2, 4]), false).unwrap();
        // bias-free path: GELU(0)=0, k-WTA of zeros is zeros, products of zeros
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert_eq!(y.shape(), &[2, 3]);
    }

    #[test]
    fn output_shape_contract() {
        let spec = ArchitectureSpec::mlp(vec![32], Head::Fc, 25.0);
        let mut net = build_network(&spec, 0).unwrap();
        let y = net.forward(&Tensor::zeros(&[5, 784]), false).unwrap();
        assert_eq!(y.shape(), &[5, 10]);
    }

    #[test]
    fn double_backward_is_usage_error() {
        let spec = ArchitectureSpec::mlp(vec![8], Head::Fc, 50.0);
        let mut net = build_network(&spec, 0).unwrap();
        let x = Tensor::zeros(&[1, 784]);
        net.forward(&x, true).unwrap();
        let g = Tensor::zeros(&[1, 10]);
        net.backward(&g).unwrap();
        assert!(matches!(net.backward(&g), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_without_forward_is_usage_error() {
        let spec = ArchitectureSpec::mlp(vec![8], Head::Fc, 50.0);
        let mut net = build_network(&spec, 0).unwrap();
        let g = Tensor::zeros(&[1, 10]);
        assert!(matches!(net.backward(&g), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_grad_logits_gives_zero_grads() {
        let spec = ArchitectureSpec::mlp(vec![8], Head::Fc, 50.0);
        let mut net = build_network(&spec, 0).unwrap();
        let x = Tensor::from_vec(&[1, 784], vec![0.5; 784]).unwrap();
        net.forward(&x, true).unwrap();
        net.backward(&Tensor::zeros(&[1, 10])).unwrap();
        for p in net.params() {
            assert!(p.grad.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.pwcl");
        let spec = ArchitectureSpec::mlp(vec![16], Head::Pairwise { budget: 30 }, 25.0);
        let mut net = build_network(&spec, 7).unwrap();
        net.for_each_param_mut(|p| p.omega.data_mut().iter_mut().for_each(|v| *v = 0.5));
        net.save_checkpoint(&path).unwrap();
        let restored = Network::load_checkpoint(&path).unwrap();
        assert_eq!(restored.spec(), net.spec());
        for (a, b) in net.params().iter().zip(restored.params()) {
            assert_eq!(a.theta.data(), b.theta.data());
            assert_eq!(a.omega.data(), b.omega.data());
        }
    }
}
