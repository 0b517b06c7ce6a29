//! Dataset ingestion and generation.

pub mod idx;
pub mod synth;

pub use idx::parse_idx;
pub use synth::{
    gen_clusters, gen_hwf_dataset, gen_path_dataset, gen_synthetic_digits, ordered_pairs, HwfSample, PathSample,
};

use crate::tensor::Tensor;

/// Feature rows with one class label each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImages {
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.shape()[1]
    }

    /// Splits off the first `n` rows.
    pub fn split(&self, n: usize) -> (LabeledImages, LabeledImages) {
        let n = n.min(self.len());
        let d = self.dim();
        let (a, b) = self.images.data().split_at(n * d);
        let part = |data: &[f64], labels: &[usize]| LabeledImages {
            images: Tensor::new(vec![labels.len(), d], data.to_vec()).expect("row split"),
            labels: labels.to_vec(),
        };
        (part(a, &self.labels[..n]), part(b, &self.labels[n..]))
    }
}
