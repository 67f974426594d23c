//! Datasets for experiments: Gaussian class blobs and MNIST IDX files, split
//! into client shards, the server's root set and a test set.

use std::path::{Path, PathBuf};

use bpfl_core::fl::Dataset;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idx::{read_idx, IdxError, IdxTensor};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("dataset files not found under {0}")]
    Missing(String),
    #[error("dataset shape: {0}")]
    Shape(String),
}

#[derive(Clone, Debug)]
pub struct Partitions {
    pub clients: Vec<Dataset>,
    pub server: Dataset,
    pub test: Dataset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub features: usize,
    /// Training samples per class, pooled and split across clients.
    pub per_class: usize,
    /// Distance between class means in units of the noise deviation.
    pub separation: f64,
    pub test_per_class: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 2,
            features: 31,
            per_class: 250,
            separation: 3.0,
            test_per_class: 250,
        }
    }
}

/// Class means at pairwise distance `separation`: scaled one-hot vectors
/// when there are enough features, random directions otherwise.
fn class_means(spec: &SyntheticSpec, rng: &mut ChaCha20Rng) -> Vec<Vec<f64>> {
    let radius = spec.separation / std::f64::consts::SQRT_2;
    (0..spec.classes)
        .map(|c| {
            if spec.features >= spec.classes {
                let mut m = vec![0.0; spec.features];
                m[c] = radius;
                m
            } else {
                let v: Vec<f64> = (0..spec.features).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.iter().map(|x| x * radius / norm).collect()
            }
        })
        .collect()
}

fn sample(means: &[Vec<f64>], label: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    means[label]
        .iter()
        .map(|m| m + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect()
}

/// Splits `0..total` into `parts` contiguous sizes differing by at most one.
fn even_sizes(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

/// Gaussian blobs with unit noise. The `classes * per_class` training pool is
/// shuffled and split into `num_clients` IID shards; the server set and the
/// test set are drawn separately from the same distribution.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
    num_clients: usize,
    server_samples: usize,
    seed: u64,
) -> Result<Partitions, DataError> {
    if spec.classes < 1 || spec.features < 1 || spec.per_class < 1 || num_clients < 1 || server_samples < 1 {
        return Err(DataError::Shape("all counts must be at least 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let means = class_means(spec, &mut rng);
    let mut pool: Vec<(Vec<f64>, usize)> = (0..spec.classes)
        .flat_map(|c| std::iter::repeat_n(c, spec.per_class))
        .map(|c| (sample(&means, c, &mut rng), c))
        .collect();
    pool.shuffle(&mut rng);
    let mut clients = Vec::with_capacity(num_clients);
    let mut rest = pool.as_slice();
    for size in even_sizes(pool.len(), num_clients) {
        let (head, tail) = rest.split_at(size);
        let mut d = Dataset::empty(spec.features, spec.classes);
        head.iter().for_each(|(x, y)| d.push(x, *y));
        clients.push(d);
        rest = tail;
    }
    let mut server = Dataset::empty(spec.features, spec.classes);
    for _ in 0..server_samples {
        let c = rng.random_range(0..spec.classes);
        server.push(&sample(&means, c, &mut rng), c);
    }
    let mut test = Dataset::empty(spec.features, spec.classes);
    for c in 0..spec.classes {
        for _ in 0..spec.test_per_class {
            test.push(&sample(&means, c, &mut rng), c);
        }
    }
    Ok(Partitions { clients, server, test })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MnistSpec {
    pub dir: PathBuf,
    /// Training images shared out to clients.
    pub subset: usize,
    pub test_subset: usize,
    /// Side of the square average-pooling window; 28 must be a multiple.
    pub pool: usize,
}

impl Default for MnistSpec {
    fn default() -> Self {
        MnistSpec {
            dir: PathBuf::from("data/mnist"),
            subset: 2000,
            test_subset: 2000,
            pool: 4,
        }
    }
}

fn find(dir: &Path, stems: &[&str]) -> Option<PathBuf> {
    stems.iter().map(|s| dir.join(s)).find(|p| p.is_file())
}

const TRAIN_IMAGES: [&str; 2] = ["train-images-idx3-ubyte", "train-images.idx3-ubyte"];
const TRAIN_LABELS: [&str; 2] = ["train-labels-idx1-ubyte", "train-labels.idx1-ubyte"];
const TEST_IMAGES: [&str; 2] = ["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"];
const TEST_LABELS: [&str; 2] = ["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"];

/// Whether all four MNIST files are present in `dir`.
pub fn mnist_available(dir: &Path) -> bool {
    [TRAIN_IMAGES, TRAIN_LABELS, TEST_IMAGES, TEST_LABELS]
        .iter()
        .all(|names| find(dir, names).is_some())
}

fn pooled(images: &IdxTensor, i: usize, pool: usize) -> Vec<f64> {
    let (h, w) = (images.dims[1] as usize, images.dims[2] as usize);
    let px = images.item_scaled(i);
    let (ph, pw) = (h / pool, w / pool);
    let mut out = vec![0.0; ph * pw];
    for r in 0..h {
        for c in 0..w {
            out[(r / pool) * pw + c / pool] += px[r * w + c];
        }
    }
    let area = (pool * pool) as f64;
    out.iter_mut().for_each(|v| *v /= area);
    out
}

fn load_pair(dir: &Path, images: &[&str], labels: &[&str]) -> Result<(IdxTensor, IdxTensor), DataError> {
    let missing = || DataError::Missing(dir.display().to_string());
    let im = read_idx(&find(dir, images).ok_or_else(missing)?)?;
    let lb = read_idx(&find(dir, labels).ok_or_else(missing)?)?;
    if im.rank() != 3 || lb.rank() != 1 || im.len() != lb.len() {
        return Err(DataError::Shape(format!("images {:?} do not match labels {:?}", im.dims, lb.dims)));
    }
    Ok((im, lb))
}

/// Loads MNIST, average-pools the images and partitions a random subset of
/// the training set across clients. The server set is a uniform sample of
/// the remaining training images.
pub fn load_mnist(
    spec: &MnistSpec,
    num_clients: usize,
    server_samples: usize,
    seed: u64,
) -> Result<Partitions, DataError> {
    let (train_im, train_lb) = load_pair(&spec.dir, &TRAIN_IMAGES, &TRAIN_LABELS)?;
    let (test_im, test_lb) = load_pair(&spec.dir, &TEST_IMAGES, &TEST_LABELS)?;
    let side = train_im.dims[1] as usize;
    if spec.pool == 0 || side % spec.pool != 0 || train_im.dims[2] as usize % spec.pool != 0 {
        return Err(DataError::Shape(format!("pool {} does not divide the image side {side}", spec.pool)));
    }
    if spec.subset + server_samples > train_im.len() || spec.test_subset > test_im.len() {
        return Err(DataError::Shape("requested more samples than the files contain".into()));
    }
    let features = (side / spec.pool) * (train_im.dims[2] as usize / spec.pool);
    let classes = 10;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..train_im.len()).collect();
    order.shuffle(&mut rng);
    let to_dataset = |im: &IdxTensor, lb: &IdxTensor, idx: &[usize]| {
        let mut d = Dataset::empty(features, classes);
        for &i in idx {
            d.push(&pooled(im, i, spec.pool), lb.data[i] as usize % classes);
        }
        d
    };
    let mut clients = Vec::with_capacity(num_clients);
    let mut start = 0;
    for size in even_sizes(spec.subset, num_clients) {
        clients.push(to_dataset(&train_im, &train_lb, &order[start..start + size]));
        start += size;
    }
    let server = to_dataset(&train_im, &train_lb, &order[start..start + server_samples]);
    let mut test_order: Vec<usize> = (0..test_im.len()).collect();
    test_order.shuffle(&mut rng);
    let test = to_dataset(&test_im, &test_lb, &test_order[..spec.test_subset]);
    Ok(Partitions { clients, server, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idx::serialize_idx;
    use bpfl_core::fl::{evaluate, train_local, ModelSpec, TrainingTask};

    fn spec(classes: usize, per_class: usize, separation: f64) -> SyntheticSpec {
        SyntheticSpec {
            classes,
            features: 6,
            per_class,
            separation,
            test_per_class: 200,
        }
    }

    #[test]
    fn shard_shapes() {
        let p = generate_synthetic(&spec(2, 100, 3.0), 4, 200, 1).unwrap();
        assert_eq!(p.clients.iter().map(Dataset::len).collect::<Vec<_>>(), vec![50; 4]);
        assert_eq!(p.server.len(), 200);
        assert_eq!(p.test.len(), 400);
        let uneven = generate_synthetic(&spec(3, 7, 3.0), 4, 5, 1).unwrap();
        assert_eq!(uneven.clients.iter().map(Dataset::len).collect::<Vec<_>>(), vec![6, 5, 5, 5]);
        assert!(generate_synthetic(&spec(0, 7, 3.0), 4, 5, 1).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_synthetic(&spec(2, 20, 3.0), 2, 10, 9).unwrap();
        let b = generate_synthetic(&spec(2, 20, 3.0), 2, 10, 9).unwrap();
        let c = generate_synthetic(&spec(2, 20, 3.0), 2, 10, 10).unwrap();
        assert_eq!(a.clients[1].row(3), b.clients[1].row(3));
        assert_eq!(a.test.row(0), b.test.row(0));
        assert_ne!(a.clients[1].row(3), c.clients[1].row(3));
    }

    #[test]
    fn well_separated_blobs_are_learnable() {
        // two means 5 sigma apart: the Bayes error is Phi(-2.5) < 0.7%
        let p = generate_synthetic(&spec(2, 300, 5.0), 1, 10, 4).unwrap();
        let m = ModelSpec::logistic(6, 2);
        let w = train_local(&TrainingTask::new(m), &p.clients[0], &m.initial(0), 1).unwrap();
        assert!(evaluate(&m, &w, &p.test).unwrap() >= 0.95);
        // four classes as well
        let p = generate_synthetic(&spec(4, 300, 5.0), 1, 10, 4).unwrap();
        let m = ModelSpec::logistic(6, 4);
        let w = train_local(&TrainingTask::new(m), &p.clients[0], &m.initial(0), 1).unwrap();
        assert!(evaluate(&m, &w, &p.test).unwrap() >= 0.95);
    }

    #[test]
    fn mnist_from_written_idx_files() {
        let dir = std::env::temp_dir().join(format!("bpfl-idx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let write = |name: &str, dims: Vec<u32>, data: Vec<u8>| {
            std::fs::write(dir.join(name), serialize_idx(&IdxTensor { dims, data })).unwrap();
        };
        let n = 40u32;
        let images: Vec<u8> = (0..n * 784).map(|i| (i % 251) as u8).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        write("train-images-idx3-ubyte", vec![n, 28, 28], images.clone());
        write("train-labels-idx1-ubyte", vec![n], labels.clone());
        write("t10k-images-idx3-ubyte", vec![n, 28, 28], images);
        write("t10k-labels-idx1-ubyte", vec![n], labels);
        assert!(mnist_available(&dir));
        let spec = MnistSpec {
            dir: dir.clone(),
            subset: 20,
            test_subset: 10,
            pool: 4,
        };
        let p = load_mnist(&spec, 3, 5, 0).unwrap();
        assert_eq!(p.clients.iter().map(Dataset::len).sum::<usize>(), 20);
        assert_eq!(p.server.len(), 5);
        assert_eq!(p.test.len(), 10);
        assert_eq!(p.test.num_features(), 49);
        assert!(p.test.row(0).iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(load_mnist(&MnistSpec { pool: 5, ..spec.clone() }, 3, 5, 0).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
        assert!(!mnist_available(&dir));
        assert!(matches!(load_mnist(&spec, 3, 5, 0), Err(DataError::Missing(_))));
    }
}
