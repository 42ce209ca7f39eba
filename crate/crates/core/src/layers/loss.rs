use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Subset of classes the loss/evaluation may consider.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    allowed: Vec<bool>,
}

impl ClassMask {
    pub fn full(n_classes: usize) -> Self {
        ClassMask { allowed: vec![true; n_classes] }
    }

    pub fn from_classes(classes: &[u8], n_classes: usize) -> Result<Self> {
        let mut allowed = vec![false; n_classes];
        for &c in classes {
            if c as usize >= n_classes {
                return Err(Error::config(format!("class {c} outside 0..{n_classes}")));
            }
            allowed[c as usize] = true;
        }
        if classes.is_empty() {
            return Err(Error::config("class mask must allow at least one class"));
        }
        Ok(ClassMask { allowed })
    }

    pub fn allows(&self, class: usize) -> bool {
        self.allowed.get(class).copied().unwrap_or(false)
    }

    pub fn n_classes(&self) -> usize {
        self.allowed.len()
    }

    pub fn allowed(&self) -> &[bool] {
        &self.allowed
    }
}

/// Softmax cross-entropy restricted to the allowed classes.
///
/// Disallowed logits are excluded from the softmax and get zero gradient.
/// Returns the batch-mean loss and `d loss / d logits`.
pub fn masked_softmax_xent(
    logits: &Tensor,
    labels: &[u8],
    mask: &ClassMask,
) -> Result<(f32, Tensor)> {
    let n_classes = logits.row_len();
    let batch = logits.rows();
    if labels.len() != batch {
        return Err(Error::config("label count != batch size"));
    }
    if mask.n_classes() != n_classes {
        return Err(Error::config("mask width != logit width"));
    }
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0f64;
    let inv_b = 1.0 / batch as f32;
    for r in 0..batch {
        let label = labels[r] as usize;
        if !mask.allows(label) {
            return Err(Error::Protocol(format!(
                "label {label} not allowed by the class mask (task stream / mask mismatch)"
            )));
        }
        let row = logits.row(r);
        let max = row
            .iter()
            .enumerate()
            .filter(|(c, _)| mask.allows(*c))
            .map(|(_, &v)| v)
            .fold(f32::NEG_INFINITY, f32::max);
        let mut denom = 0.0f32;
        for (c, &v) in row.iter().enumerate() {
            if mask.allows(c) {
                denom += (v - max).exp();
            }
        }
        loss -= ((row[label] - max).exp() / denom).ln() as f64;
        let grow = grad.row_mut(r);
        for (c, &v) in row.iter().enumerate() {
            if mask.allows(c) {
                let p = (v - max).exp() / denom;
                grow[c] = (p - if c == label { 1.0 } else { 0.0 }) * inv_b;
            }
        }
    }
    Ok(((loss / batch as f64) as f32, grad))
}
