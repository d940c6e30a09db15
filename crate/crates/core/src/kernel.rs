//! TT-based kernel functions.
//!
//! Each TT core `(R_k, I_k, R_{k+1})` is viewed as `R_k * R_{k+1}` fibres of
//! length `I_k`. A base kernel compares fibres of the same mode; the product
//! rule multiplies the per-mode values along every pair of rank paths and
//! sums, the sum rule adds them instead. Both rules reduce to per-mode
//! fibre-kernel blocks, which is what the fast evaluators and the Gram
//! builders work from.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;
use crate::tt::TensorTrain;

/// Work cap (fibre-kernel evaluations) for [`tt_kernel_naive`].
pub const NAIVE_TERM_CAP: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BaseKernel {
    Linear,
    Polynomial { c: f64, degree: u32 },
    /// `exp(-|x - y|^2 / (2 sigma^2))`
    Rbf { sigma: f64 },
}

impl BaseKernel {
    pub fn rbf(sigma: f64) -> Self {
        BaseKernel::Rbf { sigma }
    }

    pub fn polynomial(c: f64, degree: u32) -> Self {
        BaseKernel::Polynomial { c, degree }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BaseKernel::Linear => Ok(()),
            BaseKernel::Polynomial { c, degree } => {
                if degree == 0 {
                    Err(Error::arg("polynomial degree must be >= 1"))
                } else if !c.is_finite() {
                    Err(Error::arg("polynomial offset must be finite"))
                } else {
                    Ok(())
                }
            }
            BaseKernel::Rbf { sigma } => {
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::arg(format!("RBF width must be positive, got {sigma}")))
                }
            }
        }
    }

    /// Unchecked evaluation; callers guarantee equal lengths.
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            BaseKernel::Linear => dot(x, y),
            BaseKernel::Polynomial { c, degree } => (dot(x, y) + c).powi(degree as i32),
            BaseKernel::Rbf { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn base_kernel_eval(k: &BaseKernel, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::arg(format!(
            "fibre lengths {} and {} must be equal and non-zero",
            x.len(),
            y.len()
        )));
    }
    k.validate()?;
    Ok(k.eval(x, y))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    Prod,
    Sum,
}

impl std::str::FromStr for Combine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prod" | "product" => Ok(Combine::Prod),
            "sum" => Ok(Combine::Sum),
            other => Err(Error::Config(format!("unknown combine rule '{other}'"))),
        }
    }
}

impl std::fmt::Display for Combine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Combine::Prod => "prod",
            Combine::Sum => "sum",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub per_mode: Vec<BaseKernel>,
    pub combine: Combine,
}

impl KernelSpec {
    pub fn new(per_mode: Vec<BaseKernel>, combine: Combine) -> Result<Self> {
        if per_mode.is_empty() {
            return Err(Error::arg("kernel spec needs one base kernel per mode"));
        }
        for k in &per_mode {
            k.validate()?;
        }
        Ok(Self { per_mode, combine })
    }

    pub fn uniform(kernel: BaseKernel, order: usize, combine: Combine) -> Result<Self> {
        Self::new(vec![kernel; order], combine)
    }

    pub fn order(&self) -> usize {
        self.per_mode.len()
    }

    pub fn with_combine(&self, combine: Combine) -> Self {
        Self {
            per_mode: self.per_mode.clone(),
            combine,
        }
    }
}

fn check_pair(a: &TensorTrain, b: &TensorTrain, spec: &KernelSpec) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::arg(format!(
            "TT kernel of dims {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    if spec.order() != a.order() {
        return Err(Error::arg(format!(
            "kernel spec has {} modes, data has {}",
            spec.order(),
            a.order()
        )));
    }
    for k in &spec.per_mode {
        k.validate()?;
    }
    Ok(())
}

/// All fibres of one core, gathered contiguously.
/// Fibre `(a, b)` starts at `(a * rank_out + b) * len`.
#[derive(Clone, Debug)]
pub struct Fibers {
    rank_in: usize,
    rank_out: usize,
    len: usize,
    data: Vec<f64>,
}

impl Fibers {
    pub fn from_core(core: &DenseTensor) -> Self {
        let [ra, n, rb] = [core.dims()[0], core.dims()[1], core.dims()[2]];
        let src = core.data();
        let mut data = vec![0.0; ra * rb * n];
        for a in 0..ra {
            for b in 0..rb {
                let dst = &mut data[(a * rb + b) * n..(a * rb + b + 1) * n];
                for (i, v) in dst.iter_mut().enumerate() {
                    *v = src[a + ra * (i + n * b)];
                }
            }
        }
        Self {
            rank_in: ra,
            rank_out: rb,
            len: n,
            data,
        }
    }

    #[inline]
    pub fn fiber(&self, a: usize, b: usize) -> &[f64] {
        let s = (a * self.rank_out + b) * self.len;
        &self.data[s..s + self.len]
    }
}

/// Fibre-kernel values for one mode and one pair of trains, laid out as
/// `((a * R̂_a + â) * R_b + b) * R̂_b + b̂`.
#[derive(Clone, Debug)]
pub struct ModeBlock {
    ra: usize,
    rha: usize,
    rb: usize,
    rhb: usize,
    values: Vec<f64>,
}

impl ModeBlock {
    pub fn compute(kernel: &BaseKernel, x: &Fibers, y: &Fibers) -> Self {
        let (ra, rb, rha, rhb) = (x.rank_in, x.rank_out, y.rank_in, y.rank_out);
        let mut values = Vec::with_capacity(ra * rha * rb * rhb);
        for a in 0..ra {
            for ha in 0..rha {
                for b in 0..rb {
                    let fx = x.fiber(a, b);
                    for hb in 0..rhb {
                        values.push(kernel.eval(fx, y.fiber(ha, hb)));
                    }
                }
            }
        }
        Self {
            ra,
            rha,
            rb,
            rhb,
            values,
        }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Left-to-right contraction of product-rule blocks.
fn prod_from_blocks(blocks: &[&ModeBlock]) -> f64 {
    let mut v = vec![1.0];
    for blk in blocks {
        let out_len = blk.rb * blk.rhb;
        let mut next = vec![0.0; out_len];
        for (idx, &w) in v.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let row = &blk.values[idx * out_len..(idx + 1) * out_len];
            for (n, r) in next.iter_mut().zip(row) {
                *n += w * r;
            }
        }
        v = next;
    }
    v[0]
}

/// Sum rule: every mode's block total, weighted by the number of rank paths
/// through the rank positions it does not touch.
fn sum_from_blocks(blocks: &[&ModeBlock]) -> f64 {
    // rank position j in 0..=d has size R_j * R̂_j
    let d = blocks.len();
    let mut pos = Vec::with_capacity(d + 1);
    for blk in blocks {
        pos.push((blk.ra * blk.rha) as f64);
    }
    pos.push(1.0);
    let all: f64 = pos.iter().product();
    blocks
        .iter()
        .enumerate()
        .map(|(i, blk)| {
            let mult = all / (pos[i] * pos[i + 1]);
            mult * blk.total()
        })
        .sum()
}

fn blocks_for_pair(a: &TensorTrain, b: &TensorTrain, spec: &KernelSpec) -> Vec<ModeBlock> {
    a.cores()
        .iter()
        .zip(b.cores())
        .zip(&spec.per_mode)
        .map(|((ca, cb), k)| ModeBlock::compute(k, &Fibers::from_core(ca), &Fibers::from_core(cb)))
        .collect()
}

/// Reference evaluator: explicit summation over every pair of rank paths.
pub fn tt_kernel_naive(a: &TensorTrain, b: &TensorTrain, spec: &KernelSpec) -> Result<f64> {
    tt_kernel_naive_capped(a, b, spec, NAIVE_TERM_CAP)
}

pub fn tt_kernel_naive_capped(
    a: &TensorTrain,
    b: &TensorTrain,
    spec: &KernelSpec,
    cap: u64,
) -> Result<f64> {
    check_pair(a, b, spec)?;
    let d = a.order();
    let ra = a.ranks();
    let rb = b.ranks();
    let mut paths: u64 = 1;
    for j in 1..d {
        paths = paths.saturating_mul((ra[j] * rb[j]) as u64);
    }
    let work = paths.saturating_mul(d as u64);
    if work > cap {
        return Err(Error::Capacity(format!(
            "naive TT kernel needs {work} fibre evaluations, cap is {cap}"
        )));
    }
    let fa: Vec<Fibers> = a.cores().iter().map(|c| Fibers::from_core(c)).collect();
    let fb: Vec<Fibers> = b.cores().iter().map(|c| Fibers::from_core(c)).collect();

    // odometers over r_1..r_{d+1} and r̂_1..r̂_{d+1}; boundary digits stay 0
    let mut r = vec![0usize; d + 1];
    let mut rh = vec![0usize; d + 1];
    let mut total = 0.0;
    loop {
        let mut term = match spec.combine {
            Combine::Prod => 1.0,
            Combine::Sum => 0.0,
        };
        for i in 0..d {
            let kv = spec.per_mode[i].eval(fa[i].fiber(r[i], r[i + 1]), fb[i].fiber(rh[i], rh[i + 1]));
            match spec.combine {
                Combine::Prod => term *= kv,
                Combine::Sum => term += kv,
            }
        }
        total += term;

        // advance r̂ first, then r
        let mut carried = true;
        for j in 1..d {
            rh[j] += 1;
            if rh[j] < rb[j] {
                carried = false;
                break;
            }
            rh[j] = 0;
        }
        if carried {
            for j in 1..d {
                r[j] += 1;
                if r[j] < ra[j] {
                    carried = false;
                    break;
                }
                r[j] = 0;
            }
        }
        if carried {
            break;
        }
    }
    Ok(total)
}

/// Product-rule kernel by chained block contraction.
pub fn tt_kernel_prod_fast(a: &TensorTrain, b: &TensorTrain, spec: &KernelSpec) -> Result<f64> {
    check_pair(a, b, spec)?;
    if spec.combine != Combine::Prod {
        return Err(Error::arg("tt_kernel_prod_fast requires the product rule"));
    }
    let blocks = blocks_for_pair(a, b, spec);
    Ok(prod_from_blocks(&blocks.iter().collect::<Vec<_>>()))
}

/// Sum-rule kernel in closed form from per-mode block totals.
pub fn tt_kernel_sum_fast(a: &TensorTrain, b: &TensorTrain, spec: &KernelSpec) -> Result<f64> {
    check_pair(a, b, spec)?;
    if spec.combine != Combine::Sum {
        return Err(Error::arg("tt_kernel_sum_fast requires the sum rule"));
    }
    let blocks = blocks_for_pair(a, b, spec);
    Ok(sum_from_blocks(&blocks.iter().collect::<Vec<_>>()))
}

/// Fast evaluator for whichever rule `spec` selects.
pub fn tt_kernel(a: &TensorTrain, b: &TensorTrain, spec: &KernelSpec) -> Result<f64> {
    match spec.combine {
        Combine::Prod => tt_kernel_prod_fast(a, b, spec),
        Combine::Sum => tt_kernel_sum_fast(a, b, spec),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GramMatrix {
    pub values: DMatrix<f64>,
    pub sample_ids: Vec<String>,
    pub spec: KernelSpec,
}

impl GramMatrix {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_extremes(&self) -> (f64, f64) {
        eigen_extremes(&self.values)
    }

    /// PSD within `-rel_tol * max eigenvalue`.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let (lo, hi) = self.eigen_extremes();
        lo >= -rel_tol * hi.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn eigen_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(m.clone());
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Per-sample fibre tables; modes whose core is the same allocation for
/// every sample are flagged so their block is computed once.
struct Prepared {
    fibers: Vec<Vec<Arc<Fibers>>>,
}

fn prepare(samples: &[&TensorTrain]) -> Prepared {
    let d = samples[0].order();
    let mut shared_tables: Vec<Option<Arc<Fibers>>> = vec![None; d];
    for (k, slot) in shared_tables.iter_mut().enumerate() {
        let first = &samples[0].cores()[k];
        if samples.iter().all(|s| Arc::ptr_eq(&s.cores()[k], first)) {
            *slot = Some(Arc::new(Fibers::from_core(first)));
        }
    }
    let fibers = samples
        .iter()
        .map(|s| {
            s.cores()
                .iter()
                .enumerate()
                .map(|(k, c)| match &shared_tables[k] {
                    Some(t) => Arc::clone(t),
                    None => Arc::new(Fibers::from_core(c)),
                })
                .collect()
        })
        .collect();
    Prepared { fibers }
}

fn check_set(samples: &[&TensorTrain], spec: &KernelSpec, what: &str) -> Result<()> {
    let first = samples
        .first()
        .ok_or_else(|| Error::arg(format!("{what} set is empty")))?;
    let dims = first.dims();
    let ranks = first.ranks();
    for (i, s) in samples.iter().enumerate() {
        if s.dims() != dims {
            return Err(Error::arg(format!("{what} sample {i} has dims {:?}, expected {dims:?}", s.dims())));
        }
        if s.ranks() != ranks {
            return Err(Error::arg(format!(
                "{what} sample {i} has rank chain {:?}, expected {ranks:?}; \
                 the PSD guarantee needs one shared chain",
                s.ranks()
            )));
        }
    }
    if spec.order() != dims.len() {
        return Err(Error::arg(format!(
            "kernel spec has {} modes, data has {}",
            spec.order(),
            dims.len()
        )));
    }
    for k in &spec.per_mode {
        k.validate()?;
    }
    Ok(())
}

/// Evaluates both rules for rows `rows` against columns `cols`.
/// Blocks for modes where both sides share one core are computed once.
struct PairEngine<'a> {
    per_mode: &'a [BaseKernel],
    rows: Prepared,
    cols: Prepared,
    shared_blocks: Vec<Option<ModeBlock>>,
}

impl<'a> PairEngine<'a> {
    fn new(per_mode: &'a [BaseKernel], rows: &[&TensorTrain], cols: &[&TensorTrain]) -> Self {
        let d = per_mode.len();
        let shared_blocks = (0..d)
            .map(|k| {
                let a0 = &rows[0].cores()[k];
                let b0 = &cols[0].cores()[k];
                let all_rows = rows.iter().all(|s| Arc::ptr_eq(&s.cores()[k], a0));
                let all_cols = cols.iter().all(|s| Arc::ptr_eq(&s.cores()[k], b0));
                (all_rows && all_cols).then(|| {
                    ModeBlock::compute(&per_mode[k], &Fibers::from_core(a0), &Fibers::from_core(b0))
                })
            })
            .collect();
        Self {
            per_mode,
            rows: prepare(rows),
            cols: prepare(cols),
            shared_blocks,
        }
    }

    fn eval(&self, i: usize, j: usize, want: (bool, bool)) -> (f64, f64) {
        let owned: Vec<Option<ModeBlock>> = self
            .shared_blocks
            .iter()
            .enumerate()
            .map(|(k, s)| {
                s.is_none().then(|| {
                    ModeBlock::compute(&self.per_mode[k], &self.rows.fibers[i][k], &self.cols.fibers[j][k])
                })
            })
            .collect();
        let blocks: Vec<&ModeBlock> = self
            .shared_blocks
            .iter()
            .zip(&owned)
            .map(|(s, o)| s.as_ref().or(o.as_ref()).expect("one of shared/owned"))
            .collect();
        let p = if want.0 { prod_from_blocks(&blocks) } else { 0.0 };
        let s = if want.1 { sum_from_blocks(&blocks) } else { 0.0 };
        (p, s)
    }
}

fn upper_triangle(engine: &PairEngine<'_>, n: usize, want: (bool, bool)) -> Vec<Vec<(f64, f64)>> {
    let row = |i: usize| (i..n).map(|j| engine.eval(i, j, want)).collect::<Vec<_>>();
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(row).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(row).collect()
    }
}

fn fill_symmetric(rows: &[Vec<(f64, f64)>], n: usize, pick: impl Fn(&(f64, f64)) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            let j = i + off;
            g[(i, j)] = pick(v);
            g[(j, i)] = pick(v);
        }
    }
    symmetrize(&mut g);
    g
}

/// `(G + G^T) / 2` in place; warns when the input was noticeably asymmetric.
pub fn symmetrize(g: &mut DMatrix<f64>) {
    let n = g.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (g[(i, j)], g[(j, i)]);
            worst = worst.max((a - b).abs());
            let m = 0.5 * (a + b);
            g[(i, j)] = m;
            g[(j, i)] = m;
        }
    }
    if worst > 1e-8 {
        log::warn!("Gram matrix asymmetry {worst:e} before symmetrization");
    }
}

fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

/// Gram matrix of `samples` under `spec`. All samples must share one rank chain.
pub fn build_gram(samples: &[TensorTrain], spec: &KernelSpec) -> Result<GramMatrix> {
    build_gram_with_ids(samples, spec, default_ids(samples.len()))
}

pub fn build_gram_with_ids(
    samples: &[TensorTrain],
    spec: &KernelSpec,
    sample_ids: Vec<String>,
) -> Result<GramMatrix> {
    let refs: Vec<&TensorTrain> = samples.iter().collect();
    check_set(&refs, spec, "training")?;
    if sample_ids.len() != samples.len() {
        return Err(Error::arg("one sample id per sample is required"));
    }
    let n = samples.len();
    let engine = PairEngine::new(&spec.per_mode, &refs, &refs);
    let want = match spec.combine {
        Combine::Prod => (true, false),
        Combine::Sum => (false, true),
    };
    let rows = upper_triangle(&engine, n, want);
    let values = match spec.combine {
        Combine::Prod => fill_symmetric(&rows, n, |v| v.0),
        Combine::Sum => fill_symmetric(&rows, n, |v| v.1),
    };
    Ok(GramMatrix {
        values,
        sample_ids,
        spec: spec.clone(),
    })
}

/// Product- and sum-rule Gram matrices from one pass over the fibre blocks.
pub fn build_gram_both(samples: &[TensorTrain], per_mode: &[BaseKernel]) -> Result<(GramMatrix, GramMatrix)> {
    let prod = KernelSpec::new(per_mode.to_vec(), Combine::Prod)?;
    let refs: Vec<&TensorTrain> = samples.iter().collect();
    check_set(&refs, &prod, "training")?;
    let n = samples.len();
    let engine = PairEngine::new(per_mode, &refs, &refs);
    let rows = upper_triangle(&engine, n, (true, true));
    let gp = GramMatrix {
        values: fill_symmetric(&rows, n, |v| v.0),
        sample_ids: default_ids(n),
        spec: prod.clone(),
    };
    let gs = GramMatrix {
        values: fill_symmetric(&rows, n, |v| v.1),
        sample_ids: default_ids(n),
        spec: prod.with_combine(Combine::Sum),
    };
    Ok((gp, gs))
}

/// `(test.len() x train.len())` matrix of kernel values.
pub fn cross_gram(train: &[TensorTrain], test: &[TensorTrain], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let tr: Vec<&TensorTrain> = train.iter().collect();
    let te: Vec<&TensorTrain> = test.iter().collect();
    cross_gram_refs(&tr, &te, spec)
}

pub fn cross_gram_refs(train: &[&TensorTrain], test: &[&TensorTrain], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    check_set(train, spec, "training")?;
    if test.is_empty() {
        return Ok(DMatrix::zeros(0, train.len()));
    }
    check_set(test, spec, "test")?;
    if test[0].ranks() != train[0].ranks() || test[0].dims() != train[0].dims() {
        return Err(Error::arg(format!(
            "test rank chain {:?} / dims {:?} differ from training {:?} / {:?}",
            test[0].ranks(),
            test[0].dims(),
            train[0].ranks(),
            train[0].dims()
        )));
    }
    let engine = PairEngine::new(&spec.per_mode, test, train);
    let want = match spec.combine {
        Combine::Prod => (true, false),
        Combine::Sum => (false, true),
    };
    let (nt, nr) = (test.len(), train.len());
    let row = |i: usize| -> Vec<f64> {
        (0..nr)
            .map(|j| {
                let (p, s) = engine.eval(i, j, want);
                if want.0 {
                    p
                } else {
                    s
                }
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = (0..nt).into_par_iter().map(row).collect();
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..nt).map(row).collect();
    let mut out = DMatrix::zeros(nt, nr);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}
