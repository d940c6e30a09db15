//! Wall-clock comparison of the naive and fast TT kernel evaluators.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{tt_kernel_naive, tt_kernel_prod_fast, tt_kernel_sum_fast, BaseKernel, Combine, KernelSpec};
use crate::synth::random_tt;
use crate::tt::TensorTrain;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub order: usize,
    pub dim: usize,
    pub rank: usize,
    pub pairs: usize,
    pub kernel: BaseKernel,
    pub combine: Combine,
    pub seed: u64,
    /// Skip the naive evaluator.
    pub fast_only: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            order: 3,
            dim: 8,
            rank: 4,
            pairs: 100,
            kernel: BaseKernel::rbf(1.0),
            combine: Combine::Prod,
            seed: 0,
            fast_only: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub fast_seconds: f64,
    /// `None` when skipped.
    pub naive_seconds: Option<f64>,
    /// Largest relative difference between the two evaluators.
    pub max_rel_diff: Option<f64>,
}

impl BenchReport {
    pub fn speedup(&self) -> Option<f64> {
        self.naive_seconds.map(|n| n / self.fast_seconds.max(f64::MIN_POSITIVE))
    }
}

fn random_pairs(cfg: &BenchConfig) -> Vec<(TensorTrain, TensorTrain)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = vec![cfg.dim; cfg.order];
    let interior = vec![cfg.rank; cfg.order - 1];
    (0..cfg.pairs)
        .map(|_| (random_tt(&mut rng, &dims, &interior), random_tt(&mut rng, &dims, &interior)))
        .collect()
}

fn fast(a: &TensorTrain, b: &TensorTrain, spec: &KernelSpec) -> Result<f64> {
    match spec.combine {
        Combine::Prod => tt_kernel_prod_fast(a, b, spec),
        Combine::Sum => tt_kernel_sum_fast(a, b, spec),
    }
}

pub fn run(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.order == 0 || cfg.dim == 0 || cfg.rank == 0 || cfg.pairs == 0 {
        return Err(Error::arg("bench order, dim, rank and pairs must be positive"));
    }
    let spec = KernelSpec::uniform(cfg.kernel, cfg.order, cfg.combine)?;
    let pairs = random_pairs(cfg);

    let t = Instant::now();
    let fast_vals = pairs
        .iter()
        .map(|(a, b)| fast(a, b, &spec))
        .collect::<Result<Vec<_>>>()?;
    let fast_seconds = t.elapsed().as_secs_f64();

    let (naive_seconds, max_rel_diff) = if cfg.fast_only {
        (None, None)
    } else {
        let t = Instant::now();
        let naive_vals = pairs
            .iter()
            .map(|(a, b)| tt_kernel_naive(a, b, &spec))
            .collect::<Result<Vec<_>>>()?;
        let secs = t.elapsed().as_secs_f64();
        let diff = fast_vals
            .iter()
            .zip(&naive_vals)
            .map(|(f, n)| (f - n).abs() / n.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        (Some(secs), Some(diff))
    };
    Ok(BenchReport {
        config: cfg.clone(),
        fast_seconds,
        naive_seconds,
        max_rel_diff,
    })
}

/// Median of `repeats` timings of `f`.
pub fn median_seconds(repeats: usize, mut f: impl FnMut()) -> f64 {
    let mut ts: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    ts.sort_by(f64::total_cmp);
    ts[ts.len() / 2]
}

/// Median wall time per pair of the fast evaluator at each rank.
pub fn fast_time_by_rank(ranks: &[usize], order: usize, dim: usize, pairs: usize, kernel: BaseKernel) -> Result<Vec<f64>> {
    ranks
        .iter()
        .map(|&r| {
            let cfg = BenchConfig {
                order,
                dim,
                rank: r,
                pairs,
                kernel,
                fast_only: true,
                ..BenchConfig::default()
            };
            let spec = KernelSpec::uniform(kernel, order, Combine::Prod)?;
            let ps = random_pairs(&cfg);
            let t = median_seconds(5, || {
                for (a, b) in &ps {
                    std::hint::black_box(tt_kernel_prod_fast(a, b, &spec).expect("valid pair"));
                }
            });
            Ok(t / pairs as f64)
        })
        .collect()
}

/// Median wall time per pair of (naive, fast) at each order.
pub fn time_by_order(orders: &[usize], rank: usize, dim: usize, pairs: usize, kernel: BaseKernel) -> Result<Vec<(f64, f64)>> {
    orders
        .iter()
        .map(|&d| {
            let cfg = BenchConfig {
                order: d,
                dim,
                rank,
                pairs,
                kernel,
                ..BenchConfig::default()
            };
            let spec = KernelSpec::uniform(kernel, d, Combine::Prod)?;
            let ps = random_pairs(&cfg);
            let naive = median_seconds(5, || {
                for (a, b) in &ps {
                    std::hint::black_box(tt_kernel_naive(a, b, &spec).expect("within cap"));
                }
            });
            let fast = median_seconds(5, || {
                for (a, b) in &ps {
                    std::hint::black_box(tt_kernel_prod_fast(a, b, &spec).expect("valid pair"));
                }
            });
            Ok((naive / pairs as f64, fast / pairs as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_bench_agrees() {
        let r = run(&BenchConfig {
            order: 3,
            dim: 3,
            rank: 2,
            pairs: 3,
            ..BenchConfig::default()
        })
        .unwrap();
        assert!(r.max_rel_diff.unwrap() < 1e-10);
        assert!(r.speedup().is_some());
        assert!(run(&BenchConfig {
            pairs: 0,
            ..BenchConfig::default()
        })
        .is_err());
    }
}
