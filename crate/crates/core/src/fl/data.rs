//! Dense labelled datasets.

use rand::seq::SliceRandom;
use rand::Rng;

/// Row-major features with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    num_features: usize,
    num_classes: usize,
}

impl Dataset {
    /// Panics if shapes disagree or a label is out of range.
    pub fn new(features: Vec<f64>, labels: Vec<usize>, num_features: usize, num_classes: usize) -> Self {
        assert!(num_features > 0 && num_classes > 0);
        assert_eq!(features.len(), labels.len() * num_features, "feature matrix shape");
        assert!(labels.iter().all(|&y| y < num_classes), "label out of range");
        Dataset {
            features,
            labels,
            num_features,
            num_classes,
        }
    }

    pub fn empty(num_features: usize, num_classes: usize) -> Self {
        Self::new(Vec::new(), Vec::new(), num_features, num_classes)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.num_features..(i + 1) * self.num_features]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.num_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, labels, self.num_features, self.num_classes)
    }

    pub fn push(&mut self, x: &[f64], y: usize) {
        assert_eq!(x.len(), self.num_features);
        assert!(y < self.num_classes);
        self.features.extend_from_slice(x);
        self.labels.push(y);
    }

    /// Shuffles, then cuts consecutive pieces of the given sizes; any
    /// remainder is dropped.
    pub fn split<R: Rng + ?Sized>(&self, sizes: &[usize], rng: &mut R) -> Vec<Dataset> {
        assert!(sizes.iter().sum::<usize>() <= self.len(), "not enough samples");
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(rng);
        let mut start = 0;
        sizes
            .iter()
            .map(|&n| {
                let part = self.subset(&order[start..start + n]);
                start += n;
                part
            })
            .collect()
    }
}
