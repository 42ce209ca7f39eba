//! Dataset ingestion and task-stream construction.
//!
//! Datasets are immutable after load. A [`TaskStream`] is an ordered list
//! of tasks, each a single-pass shuffled batch iterator over a subset (or
//! permuted copy) of the training set, with a per-task class mask and eval
//! subset. The training-path API ([`BatchSource`]) exposes only `(x, y)`
//! batches; task identity and masks live on the evaluation / multi-head
//! surface, and mask reads are counted so tests can assert the single-head
//! training path never touches them.

mod fetch;
mod idx;

use std::cell::Cell;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use fetch::{dataset_files, fetch_datasets, DatasetKind};
pub use idx::load_idx;

use crate::error::{Error, Result};
use crate::layers::ClassMask;
use crate::seed;
use crate::tensor::Tensor;

pub const IMAGE_LEN: usize = 28 * 28;
pub const N_CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images scaled to `[0, 1]` plus labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Tensor,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A fixed pixel permutation.
#[derive(Debug, Clone)]
pub struct Permutation {
    mapping: Vec<u32>,
    pub seed: u64,
}

impl Permutation {
    pub fn identity(len: usize) -> Self {
        Permutation { mapping: (0..len as u32).collect(), seed: 0 }
    }

    pub fn random(len: usize, perm_seed: u64) -> Self {
        let mut mapping: Vec<u32> = (0..len as u32).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        mapping.shuffle(&mut rng);
        Permutation { mapping, seed: perm_seed }
    }

    pub fn mapping(&self) -> &[u32] {
        &self.mapping
    }

    pub fn is_bijection(&self) -> bool {
        let mut sorted = self.mapping.clone();
        sorted.sort_unstable();
        sorted.iter().enumerate().all(|(i, &v)| v == i as u32)
    }

    /// `dst[j] = src[mapping[j]]`.
    pub fn apply(&self, src: &[f32], dst: &mut [f32]) {
        for (out, &m) in dst.iter_mut().zip(&self.mapping) {
            *out = src[m as usize];
        }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0u32; self.mapping.len()];
        for (j, &m) in self.mapping.iter().enumerate() {
            inv[m as usize] = j as u32;
        }
        Permutation { mapping: inv, seed: self.seed }
    }
}

/// One task of a stream. Internal identity is deliberately not exposed on
/// the training path.
pub struct Task {
    train_indices: Vec<u32>,
    eval_indices: Vec<u32>,
    mask: ClassMask,
    perm: Option<Permutation>,
    mask_reads: Cell<u32>,
}

impl Task {
    /// Class mask for multi-head loss/evaluation. Reads are counted.
    pub fn mask(&self) -> &ClassMask {
        self.mask_reads.set(self.mask_reads.get() + 1);
        &self.mask
    }

    pub fn mask_read_count(&self) -> u32 {
        self.mask_reads.get()
    }

    pub fn n_train(&self) -> usize {
        self.train_indices.len()
    }

    pub fn n_eval(&self) -> usize {
        self.eval_indices.len()
    }
}

/// Ordered sequence of tasks over one train/test dataset pair.
///
/// Batches are centered: the per-pixel mean of the training split is
/// subtracted at gather time (before any pixel permutation). Removing the
/// shared mean component keeps the k-WTA winner sets input-specific
/// instead of letting a handful of always-on units dominate every
/// activation pattern. Evaluation batches are centered with the same
/// training-split statistics.
pub struct TaskStream {
    tasks: Vec<Task>,
    center: Vec<f32>,
}

/// Per-pixel mean over all rows of a dataset.
fn pixel_mean(ds: &LabeledDataset) -> Vec<f32> {
    let width = ds.images.row_len();
    let mut sum = vec![0.0f64; width];
    for r in 0..ds.len() {
        for (s, &v) in sum.iter_mut().zip(ds.images.row(r)) {
            *s += v as f64;
        }
    }
    let n = ds.len().max(1) as f64;
    sum.into_iter().map(|s| (s / n) as f32).collect()
}

impl TaskStream {
    pub fn n_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn task(&self, t: usize) -> &Task {
        &self.tasks[t]
    }

    /// Single-pass training batches for task `t`.
    pub fn train_batches<'a>(
        &'a self,
        ds: &'a LabeledDataset,
        t: usize,
        batch_size: usize,
    ) -> GatherBatches<'a> {
        let task = &self.tasks[t];
        GatherBatches {
            ds,
            indices: &task.train_indices,
            perm: task.perm.as_ref(),
            center: &self.center,
            pos: 0,
            batch_size,
        }
    }

    /// Evaluation batches for task `t` over the test split.
    pub fn eval_batches<'a>(
        &'a self,
        ds_test: &'a LabeledDataset,
        t: usize,
        batch_size: usize,
    ) -> GatherBatches<'a> {
        let task = &self.tasks[t];
        GatherBatches {
            ds: ds_test,
            indices: &task.eval_indices,
            perm: task.perm.as_ref(),
            center: &self.center,
            pos: 0,
            batch_size,
        }
    }

    pub fn total_train_samples(&self) -> usize {
        self.tasks.iter().map(|t| t.train_indices.len()).sum()
    }
}

/// Training-path batch access: `(x, y)` only.
pub trait BatchSource {
    fn next_batch(&mut self) -> Option<(Tensor, Vec<u8>)>;
}

/// Gathers shuffled dataset rows into dense batches, applying the task's
/// pixel permutation on the fly (permuted copies are never materialized).
pub struct GatherBatches<'a> {
    ds: &'a LabeledDataset,
    indices: &'a [u32],
    perm: Option<&'a Permutation>,
    center: &'a [f32],
    pos: usize,
    batch_size: usize,
}

impl BatchSource for GatherBatches<'_> {
    fn next_batch(&mut self) -> Option<(Tensor, Vec<u8>)> {
        if self.pos >= self.indices.len() {
            return None;
        }
        // last partial batch is emitted, never dropped
        let end = (self.pos + self.batch_size).min(self.indices.len());
        let idx = &self.indices[self.pos..end];
        self.pos = end;
        let width = self.ds.images.row_len();
        let mut x = Tensor::zeros(&[idx.len(), width]);
        let mut y = Vec::with_capacity(idx.len());
        for (r, &i) in idx.iter().enumerate() {
            let src = self.ds.images.row(i as usize);
            let dst = x.row_mut(r);
            // centering happens in source pixel space, before permutation
            match self.perm {
                Some(p) => {
                    for (out, &m) in dst.iter_mut().zip(p.mapping()) {
                        *out = src[m as usize] - self.center[m as usize];
                    }
                }
                None => {
                    for ((out, &s), &c) in dst.iter_mut().zip(src).zip(self.center) {
                        *out = s - c;
                    }
                }
            }
            y.push(self.ds.labels[i as usize]);
        }
        Some((x, y))
    }
}

impl Iterator for GatherBatches<'_> {
    type Item = (Tensor, Vec<u8>);

    fn next(&mut self) -> Option<Self::Item> {
        self.next_batch()
    }
}

fn check_mnist_like(ds: &LabeledDataset) -> Result<()> {
    if ds.images.row_len() != IMAGE_LEN {
        return Err(Error::config(format!(
            "expected {IMAGE_LEN}-pixel images, got {}",
            ds.images.row_len()
        )));
    }
    Ok(())
}

/// Split protocol: classes partitioned into 5 disjoint pairs
/// `{0,1}..{8,9}`; task order optionally shuffled; within-task sample
/// order shuffled per derived seed.
pub fn make_split_stream(
    train: &LabeledDataset,
    test: &LabeledDataset,
    order_seed: u64,
    shuffle_order: bool,
) -> Result<TaskStream> {
    check_mnist_like(train)?;
    let mut present = [false; N_CLASSES];
    for &l in &train.labels {
        if l as usize >= N_CLASSES {
            return Err(Error::config(format!("label {l} outside 0..{N_CLASSES}")));
        }
        present[l as usize] = true;
    }
    if present.iter().any(|p| !p) {
        return Err(Error::Ingest {
            file: "<dataset>".into(),
            msg: "split protocol requires all 10 classes present".into(),
        });
    }
    let mut pair_order: Vec<usize> = (0..N_CLASSES / 2).collect();
    if shuffle_order {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::sub_seed(order_seed, seed::role::TASK_ORDER, 0));
        pair_order.shuffle(&mut rng);
    }
    let mut tasks = Vec::with_capacity(pair_order.len());
    for (slot, &p) in pair_order.iter().enumerate() {
        let classes = [2 * p as u8, 2 * p as u8 + 1];
        let mut train_indices: Vec<u32> = (0..train.len() as u32)
            .filter(|&i| classes.contains(&train.labels[i as usize]))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed::sub_seed(
            order_seed,
            seed::role::SAMPLE_ORDER,
            slot as u64,
        ));
        train_indices.shuffle(&mut rng);
        let eval_indices: Vec<u32> = (0..test.len() as u32)
            .filter(|&i| classes.contains(&test.labels[i as usize]))
            .collect();
        tasks.push(Task {
            train_indices,
            eval_indices,
            mask: ClassMask::from_classes(&classes, N_CLASSES)?,
            perm: None,
            mask_reads: Cell::new(0),
        });
    }
    Ok(TaskStream { tasks, center: pixel_mean(train) })
}

/// Permuted protocol: `n_tasks` fresh uniformly random pixel permutations
/// (the first task is not identity), each applied to a full pass over the
/// train set; every task evaluates on the whole permuted test set with all
/// classes allowed.
pub fn make_permuted_stream(
    train: &LabeledDataset,
    test: &LabeledDataset,
    n_tasks: usize,
    stream_seed: u64,
) -> Result<TaskStream> {
    check_mnist_like(train)?;
    if n_tasks == 0 {
        return Err(Error::config("permuted protocol needs n_tasks >= 1"));
    }
    let mut tasks = Vec::with_capacity(n_tasks);
    for t in 0..n_tasks {
        let perm = Permutation::random(
            IMAGE_LEN,
            seed::sub_seed(stream_seed, seed::role::PERMUTATION, t as u64),
        );
        let mut train_indices: Vec<u32> = (0..train.len() as u32).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed::sub_seed(
            stream_seed,
            seed::role::SAMPLE_ORDER,
            t as u64,
        ));
        train_indices.shuffle(&mut rng);
        tasks.push(Task {
            train_indices,
            eval_indices: (0..test.len() as u32).collect(),
            mask: ClassMask::full(N_CLASSES),
            perm: Some(perm),
            mask_reads: Cell::new(0),
        });
    }
    Ok(TaskStream { tasks, center: pixel_mean(train) })
}
