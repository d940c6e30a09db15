//! Seeded generators for synthetic tensors, trains and labelled datasets.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::DenseTensor;
use crate::tt::TensorTrain;

pub fn gaussian_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Tensor with i.i.d. standard normal entries.
pub fn random_tensor<R: Rng + ?Sized>(rng: &mut R, dims: &[usize]) -> DenseTensor {
    let n = dims.iter().product();
    DenseTensor::new(dims.to_vec(), gaussian_vec(rng, n)).expect("valid dims")
}

/// Train with Gaussian cores and the given interior ranks.
pub fn random_tt<R: Rng + ?Sized>(rng: &mut R, dims: &[usize], interior: &[usize]) -> TensorTrain {
    assert_eq!(interior.len() + 1, dims.len(), "need d-1 interior ranks");
    let mut ranks = vec![1];
    ranks.extend_from_slice(interior);
    ranks.push(1);
    let cores = dims
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let shape = [ranks[k], n, ranks[k + 1]];
            random_tensor(rng, &shape)
        })
        .collect();
    TensorTrain::new(cores).expect("consistent chain")
}

/// Two-class data rendered as tensors: each class is a Gaussian blob around
/// `+offset` / `-offset` times a fixed random direction.
pub fn gaussian_blobs<R: Rng + ?Sized>(
    rng: &mut R,
    dims: &[usize],
    per_class: usize,
    offset: f64,
    noise: f64,
) -> (Vec<DenseTensor>, Vec<u32>) {
    let n: usize = dims.iter().product();
    let dir = gaussian_vec(rng, n);
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut samples = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for class in 0..2u32 {
        let sign = if class == 0 { 1.0 } else { -1.0 };
        for _ in 0..per_class {
            let e = gaussian_vec(rng, n);
            let data = dir
                .iter()
                .zip(&e)
                .map(|(d, z)| sign * offset * d / norm + noise * z)
                .collect();
            samples.push(DenseTensor::new(dims.to_vec(), data).expect("valid dims"));
            labels.push(class);
        }
    }
    (samples, labels)
}

/// `k`-class data: every class has its own random centre tensor.
pub fn gaussian_classes<R: Rng + ?Sized>(
    rng: &mut R,
    dims: &[usize],
    classes: u32,
    per_class: usize,
    spread: f64,
    noise: f64,
) -> (Vec<DenseTensor>, Vec<u32>) {
    let n: usize = dims.iter().product();
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| gaussian_vec(rng, n).into_iter().map(|x| spread * x).collect())
        .collect();
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (c, centre) in centres.iter().enumerate() {
        for _ in 0..per_class {
            let e = gaussian_vec(rng, n);
            let data = centre.iter().zip(&e).map(|(m, z)| m + noise * z).collect();
            samples.push(DenseTensor::new(dims.to_vec(), data).expect("valid dims"));
            labels.push(c as u32);
        }
    }
    (samples, labels)
}

/// 3-way "image" data `(h, w, channels)` whose class is carried only by a
/// channel mixing direction: class 0 tilts the colour fibre towards
/// `+signal`, class 1 towards `-signal`. Spatial content is shared noise.
pub fn channel_signal<R: Rng + ?Sized>(
    rng: &mut R,
    h: usize,
    w: usize,
    channels: usize,
    per_class: usize,
    signal: f64,
    noise: f64,
) -> (Vec<DenseTensor>, Vec<u32>) {
    let tilt = gaussian_vec(rng, channels);
    let tnorm = tilt.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2u32 {
        let sign = if class == 0 { 1.0 } else { -1.0 };
        for _ in 0..per_class {
            let spatial: Vec<f64> = gaussian_vec(rng, h * w).into_iter().map(|x| 1.0 + 0.3 * x).collect();
            let colour: Vec<f64> = (0..channels)
                .map(|c| 1.0 + sign * signal * tilt[c] / tnorm)
                .collect();
            let e = gaussian_vec(rng, h * w * channels);
            let data = (0..h * w * channels)
                .map(|p| {
                    let c = p / (h * w);
                    let s = p % (h * w);
                    spatial[s] * colour[c] + noise * e[p]
                })
                .collect();
            samples.push(DenseTensor::new(vec![h, w, channels], data).expect("valid dims"));
            labels.push(class);
        }
    }
    (samples, labels)
}
