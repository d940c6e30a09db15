//! Browser demo over the `ksttm` core: TT compression of an image, the TT
//! kernel Gram matrix of generated samples, and a binary classifier to probe.
//!
//! Every export returns JSON text; the page parses it. The plain functions
//! carry the logic so they also run natively under `cargo test`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wasm_bindgen::prelude::*;

use ksttm::kernel::{build_gram, BaseKernel, Combine, KernelSpec};
use ksttm::pipeline::{train_binary, Dataset, GridConfig, RankSetting, Split, SvmModel};
use ksttm::tensor::DenseTensor;
use ksttm::tt::{stack_and_decompose, tt_svd, TtSvdConfig};
use ksttm::Result;

/// Side of the generated and drawn images.
pub const SIDE: usize = 8;

/// Split of an 8x8 image into an order-3 tensor (fastest index first).
const DIMS: [usize; 3] = [4, 2, 8];

fn js(e: ksttm::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn tensor(pixels: &[f64], dims: &[usize]) -> Result<DenseTensor> {
    DenseTensor::new(dims.to_vec(), pixels.to_vec())
}

/// TT-SVD of `pixels` reshaped to `dims`, interior ranks capped at `rank`.
pub fn compress_json(pixels: &[f64], dims: &[usize], rank: usize) -> Result<String> {
    let x = tensor(pixels, dims)?;
    let caps = vec![rank.max(1); dims.len().saturating_sub(1)];
    let tt = tt_svd(&x, &TtSvdConfig::fixed_ranks(caps))?;
    let r = tt.reconstruct();
    let err: f64 = x.data().iter().zip(r.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(json!({
        "ranks": tt.ranks(),
        "params": tt.num_params(),
        "dense": x.len(),
        "rel_error": err.sqrt() / x.frobenius_norm().max(f64::MIN_POSITIVE),
        "reconstruction": r.data(),
    })
    .to_string())
}

/// Class +1 draws a horizontal bar, class -1 a vertical bar, over noise.
pub fn bars(n_per_class: usize, noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<i8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(2 * n_per_class);
    let mut ys = Vec::with_capacity(2 * n_per_class);
    for i in 0..2 * n_per_class {
        let horizontal = i % 2 == 0;
        let line = rng.random_range(1..SIDE - 1);
        let mut px = vec![0.0; SIDE * SIDE];
        for (k, p) in px.iter_mut().enumerate() {
            let (row, col) = (k / SIDE, k % SIDE);
            let on = if horizontal { row == line } else { col == line };
            *p = if on { 1.0 } else { 0.0 } + noise * rng.random::<f64>();
        }
        xs.push(px);
        ys.push(if horizontal { 1 } else { -1 });
    }
    (xs, ys)
}

/// Gram matrix of `n` generated samples under an RBF Prod kernel.
pub fn gram_json(n: usize, rank: usize, sigma: f64, noise: f64, seed: u64) -> Result<String> {
    let (xs, ys) = bars(n.div_ceil(2), noise, seed);
    let samples = xs
        .iter()
        .take(n)
        .map(|p| tensor(p, &DIMS))
        .collect::<Result<Vec<_>>>()?;
    let caps = vec![rank.max(1); DIMS.len() - 1];
    let tts = stack_and_decompose(&samples, &TtSvdConfig::fixed_ranks(caps))?;
    let spec = KernelSpec::uniform(BaseKernel::Rbf { sigma }, DIMS.len(), Combine::Prod)?;
    let g = build_gram(&tts, &spec)?;
    let (lo, hi) = g.eigen_extremes();
    Ok(json!({
        "n": samples.len(),
        "labels": &ys[..samples.len()],
        "ranks": tts[0].ranks(),
        "values": g.values.transpose().as_slice(),
        "min_eigenvalue": lo,
        "max_eigenvalue": hi,
    })
    .to_string())
}

/// Binary model trained on generated bars; scores drawn images.
#[wasm_bindgen]
pub struct Explorer {
    model: SvmModel,
    summary: String,
}

impl Explorer {
    pub fn train(c: f64, sigma: f64, rank: usize, noise: f64, seed: u64) -> Result<Self> {
        let (xs, ys) = bars(30, noise, seed);
        let (vx, vy) = bars(10, noise, seed ^ 0x5a);
        let (tx, ty) = bars(50, noise, seed ^ 0xa5);
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        let mut splits = Vec::new();
        for (set, lab, tag) in [(&xs, &ys, Split::Train), (&vx, &vy, Split::Validation), (&tx, &ty, Split::Test)] {
            for (p, y) in set.iter().zip(lab.iter()) {
                samples.push(tensor(p, &DIMS)?);
                // Positive decisions go to the smaller id, so horizontal is 0.
                labels.push(if *y > 0 { 0 } else { 1 });
                splits.push(tag);
            }
        }
        let ds = Dataset::new(samples, labels, splits)?;
        let grid = GridConfig::single(c, sigma, RankSetting::Uniform(rank.max(1)), Combine::Prod);
        let model = train_binary(&ds, &grid)?;
        let (test_x, test_y) = ds.split(Split::Test);
        let test_x: Vec<DenseTensor> = test_x.into_iter().cloned().collect();
        let f = model.decision_function(&test_x)?;
        let hits = f
            .iter()
            .zip(&test_y)
            .filter(|(v, y)| model.label_for(**v) == **y)
            .count();
        let summary = json!({
            "support_vectors": model.support.len(),
            "training_samples": xs.len(),
            "ranks": model.point.ranks,
            "bias": model.bias,
            "validation_accuracy": model.validation_accuracy,
            "test_accuracy": hits as f64 / test_y.len() as f64,
        })
        .to_string();
        Ok(Self { model, summary })
    }

    /// Decision value; positive means horizontal.
    pub fn score(&self, pixels: &[f64]) -> Result<f64> {
        let x = tensor(pixels, &DIMS)?;
        Ok(self.model.decision_function(&[x])?[0])
    }
}

#[wasm_bindgen]
impl Explorer {
    #[wasm_bindgen(constructor)]
    pub fn new(c: f64, sigma: f64, rank: usize, noise: f64, seed: u32) -> std::result::Result<Explorer, JsError> {
        Self::train(c, sigma, rank, noise, seed as u64).map_err(js)
    }

    pub fn decide(&self, pixels: &[f64]) -> std::result::Result<f64, JsError> {
        self.score(pixels).map_err(js)
    }

    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }
}

#[wasm_bindgen]
pub fn compress(pixels: &[f64], dims: &[usize], rank: usize) -> std::result::Result<String, JsError> {
    compress_json(pixels, dims, rank).map_err(js)
}

#[wasm_bindgen]
pub fn gram(n: usize, rank: usize, sigma: f64, noise: f64, seed: u32) -> std::result::Result<String, JsError> {
    gram_json(n, rank, sigma, noise, seed as u64).map_err(js)
}

/// Generated sample `index` of the bars set, for the page's preset buttons.
#[wasm_bindgen]
pub fn sample(index: usize, noise: f64, seed: u32) -> Vec<f64> {
    let (xs, _) = bars(index / 2 + 1, noise, seed as u64);
    xs[index].clone()
}
