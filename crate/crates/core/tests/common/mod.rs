//! Helpers shared by the integration tests. The oracle here is written
//! independently of the library evaluators: it walks rank paths with a
//! recursion over modes d..1 and reads core entries by explicit offsets.
#![allow(dead_code)]

use ksttm::kernel::{BaseKernel, Combine, KernelSpec};
use ksttm::synth::{random_tensor, random_tt};
use ksttm::tensor::DenseTensor;
use ksttm::tt::TensorTrain;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rel_diff(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.abs().max(f64::MIN_POSITIVE)
}

pub fn rel_err(x: &DenseTensor, y: &DenseTensor) -> f64 {
    let d: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    d.sqrt() / x.frobenius_norm().max(f64::MIN_POSITIVE)
}

fn base(k: &BaseKernel, x: &[f64], y: &[f64]) -> f64 {
    match *k {
        BaseKernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        BaseKernel::Polynomial { c, degree } => {
            let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
            (dot + c).powi(degree as i32)
        }
        BaseKernel::Rbf { sigma } => {
            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        }
    }
}

/// Fibre `core[a, :, b]` read by explicit first-index-fastest offsets.
fn fibre(core: &DenseTensor, a: usize, b: usize) -> Vec<f64> {
    let d = core.dims();
    (0..d[1]).map(|i| core.data()[a + d[0] * (i + d[1] * b)]).collect()
}

/// Kernel value and the sum of absolute path terms (a cancellation-free scale).
pub fn oracle_kernel(a: &TensorTrain, b: &TensorTrain, spec: &KernelSpec) -> (f64, f64) {
    let d = a.order();
    // cache per-mode fibre kernel tables k[i][(ra, ra', rb, rb')]
    let tables: Vec<Vec<Vec<Vec<f64>>>> = (0..d)
        .map(|i| {
            let ca = a.core(i);
            let cb = b.core(i);
            let (ai, ao) = (ca.dims()[0], ca.dims()[2]);
            let (bi, bo) = (cb.dims()[0], cb.dims()[2]);
            (0..ai)
                .map(|p| {
                    (0..ao)
                        .map(|q| {
                            (0..bi * bo)
                                .map(|s| base(&spec.per_mode[i], &fibre(ca, p, q), &fibre(cb, s % bi, s / bi)))
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    let mut abs_total = 0.0;
    // rank digits indexed by boundary 0..=d; walk from the right end
    let mut ra = vec![0usize; d + 1];
    let mut rb = vec![0usize; d + 1];
    fn walk(
        j: usize,
        a: &TensorTrain,
        b: &TensorTrain,
        spec: &KernelSpec,
        tables: &[Vec<Vec<Vec<f64>>>],
        ra: &mut Vec<usize>,
        rb: &mut Vec<usize>,
        total: &mut f64,
        abs_total: &mut f64,
    ) {
        if j == 0 {
            let d = a.order();
            let mut prod = 1.0;
            let mut sum = 0.0;
            for i in (0..d).rev() {
                let bi = b.core(i).dims()[0];
                let v = tables[i][ra[i]][ra[i + 1]][rb[i] + bi * rb[i + 1]];
                prod *= v;
                sum += v;
            }
            let term = match spec.combine {
                Combine::Prod => prod,
                Combine::Sum => sum,
            };
            *total += term;
            *abs_total += term.abs();
            return;
        }
        if j == a.order() {
            return walk(j - 1, a, b, spec, tables, ra, rb, total, abs_total);
        }
        let na = a.core(j).dims()[0];
        let nb = b.core(j).dims()[0];
        for p in (0..na).rev() {
            for q in 0..nb {
                ra[j] = p;
                rb[j] = q;
                walk(j - 1, a, b, spec, tables, ra, rb, total, abs_total);
            }
        }
        ra[j] = 0;
        rb[j] = 0;
    }
    walk(d, a, b, spec, &tables, &mut ra, &mut rb, &mut total, &mut abs_total);
    (total, abs_total)
}

pub fn random_ranks(rng: &mut ChaCha8Rng, d: usize, max: usize) -> Vec<usize> {
    (0..d.saturating_sub(1)).map(|_| rng.random_range(1..=max)).collect()
}

pub fn random_dims(rng: &mut ChaCha8Rng, d: usize, max: usize) -> Vec<usize> {
    (0..d).map(|_| rng.random_range(1..=max)).collect()
}

pub fn random_base_kernel(rng: &mut ChaCha8Rng) -> BaseKernel {
    match rng.random_range(0..3) {
        0 => BaseKernel::Linear,
        1 => BaseKernel::polynomial(rng.random_range(0.0..2.0), rng.random_range(1..=3)),
        _ => BaseKernel::rbf(rng.random_range(0.5..4.0)),
    }
}

pub fn random_spec(rng: &mut ChaCha8Rng, d: usize, combine: Combine) -> KernelSpec {
    KernelSpec::new((0..d).map(|_| random_base_kernel(rng)).collect(), combine).unwrap()
}

/// Pair of random trains over the same dims with independent rank chains.
pub fn random_pair(rng: &mut ChaCha8Rng, d: usize, max_dim: usize, max_rank: usize) -> (TensorTrain, TensorTrain) {
    let dims = random_dims(rng, d, max_dim);
    let ra = random_ranks(rng, d, max_rank);
    let rb = random_ranks(rng, d, max_rank);
    (random_tt(rng, &dims, &ra), random_tt(rng, &dims, &rb))
}

pub fn random_samples(rng: &mut ChaCha8Rng, dims: &[usize], m: usize) -> Vec<DenseTensor> {
    (0..m).map(|_| random_tensor(rng, dims)).collect()
}

/// Random PSD Gram `X Xᵀ` from `m` points in `dim` dimensions.
pub fn random_gram(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> DMatrix<f64> {
    let x = DMatrix::from_fn(m, dim, |_, _| rng.random_range(-1.0..1.0));
    &x * x.transpose()
}

/// ±1 labels with both classes present.
pub fn random_labels(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut y: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[m - 1] = -1.0;
    y
}
