//! Training pipeline: splits, grid search over (ranks, sigma, C), binary and
//! one-vs-one models, metrics and the rank sweep.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{build_gram, cross_gram, BaseKernel, Combine, KernelSpec};
use crate::solver::{decision_values, solve_dual, DualProblem, DualSolution, SolverParams};
use crate::tensor::DenseTensor;
use crate::tt::{StackedBasis, TensorTrain, TtSvdConfig};

/// Multipliers at or below this are not support vectors.
pub const SUPPORT_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    samples: Vec<DenseTensor>,
    labels: Vec<u32>,
    splits: Vec<Split>,
}

impl Dataset {
    pub fn new(samples: Vec<DenseTensor>, labels: Vec<u32>, splits: Vec<Split>) -> Result<Self> {
        if samples.len() != labels.len() || samples.len() != splits.len() {
            return Err(Error::arg(format!(
                "{} samples, {} labels, {} split tags",
                samples.len(),
                labels.len(),
                splits.len()
            )));
        }
        if let Some(first) = samples.first() {
            if let Some(i) = samples.iter().position(|s| s.dims() != first.dims()) {
                return Err(Error::arg(format!(
                    "sample {i} has dims {:?}, expected {:?}",
                    samples[i].dims(),
                    first.dims()
                )));
            }
        }
        let ds = Self {
            samples,
            labels,
            splits,
        };
        if ds.classes().len() < 2 {
            return Err(Error::arg("dataset needs at least two classes"));
        }
        Ok(ds)
    }

    /// Concatenate labelled train, validation and test parts.
    pub fn from_parts(
        train: (Vec<DenseTensor>, Vec<u32>),
        validation: (Vec<DenseTensor>, Vec<u32>),
        test: (Vec<DenseTensor>, Vec<u32>),
    ) -> Result<Self> {
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        let mut splits = Vec::new();
        for ((xs, ys), tag) in [(train, Split::Train), (validation, Split::Validation), (test, Split::Test)] {
            if xs.len() != ys.len() {
                return Err(Error::arg(format!("{tag:?} part has {} samples and {} labels", xs.len(), ys.len())));
            }
            splits.extend(std::iter::repeat_n(tag, xs.len()));
            samples.extend(xs);
            labels.extend(ys);
        }
        Self::new(samples, labels, splits)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[DenseTensor] {
        &self.samples
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn dims(&self) -> &[usize] {
        self.samples[0].dims()
    }

    pub fn classes(&self) -> Vec<u32> {
        self.labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn split(&self, which: Split) -> (Vec<&DenseTensor>, Vec<u32>) {
        self.samples
            .iter()
            .zip(&self.labels)
            .zip(&self.splits)
            .filter(|(_, s)| **s == which)
            .map(|((x, y), _)| (x, *y))
            .unzip()
    }

    /// Dataset restricted to samples of the given classes.
    pub fn restrict(&self, classes: &[u32]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| classes.contains(&self.labels[i])).collect();
        Self::new(
            keep.iter().map(|&i| self.samples[i].clone()).collect(),
            keep.iter().map(|&i| self.labels[i]).collect(),
            keep.iter().map(|&i| self.splits[i]).collect(),
        )
    }
}

/// Seeded per-class subsample: the first `n_train` shuffled indices of each
/// class go to training, the next `n_val` to validation.
pub fn holdout_indices(
    labels: &[u32],
    classes: &[u32],
    n_train: usize,
    n_val: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for &c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < n_train + n_val {
            return Err(Error::arg(format!(
                "class {c} has {} samples, {} requested",
                idx.len(),
                n_train + n_val
            )));
        }
        idx.shuffle(&mut rng);
        train.extend_from_slice(&idx[..n_train]);
        val.extend_from_slice(&idx[n_train..n_train + n_val]);
    }
    Ok((train, val))
}

/// Interior-rank choice for one grid axis value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RankSetting {
    /// Every interior rank capped at this value.
    Uniform(usize),
    /// Explicit caps `R_2..R_d`.
    Chain(Vec<usize>),
    /// Relative-error truncation.
    Tolerance(f64),
}

impl RankSetting {
    pub fn to_config(&self, order: usize) -> Result<TtSvdConfig> {
        let cfg = match self {
            RankSetting::Uniform(r) => TtSvdConfig::fixed_ranks(vec![*r; order.saturating_sub(1)]),
            RankSetting::Chain(c) => TtSvdConfig::fixed_ranks(c.clone()),
            RankSetting::Tolerance(eps) => TtSvdConfig::rel_tolerance(*eps),
        };
        cfg.validate(order)?;
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        match self {
            RankSetting::Uniform(r) => r.to_string(),
            RankSetting::Chain(c) => c.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("-"),
            RankSetting::Tolerance(eps) => format!("tol{eps:e}"),
        }
    }
}

/// Per-mode kernel family; RBF widths come from the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModeKernel {
    Linear,
    Rbf,
    Polynomial { c: f64, degree: u32 },
}

impl std::str::FromStr for ModeKernel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let rest = lower.strip_prefix("polynomial").or_else(|| lower.strip_prefix("poly"));
        if let Some(rest) = rest {
            // poly, polynomial, or either followed by :<c>:<degree>
            let parts: Vec<&str> = rest.trim_start_matches(':').split(':').filter(|p| !p.is_empty()).collect();
            let (c, degree) = match parts.as_slice() {
                [] => (1.0, 2),
                [c, d] => (
                    c.parse().map_err(|_| Error::Config(format!("bad polynomial offset in '{s}'")))?,
                    d.parse().map_err(|_| Error::Config(format!("bad polynomial degree in '{s}'")))?,
                ),
                _ => return Err(Error::Config(format!("polynomial kernel is 'poly:<c>:<degree>', got '{s}'"))),
            };
            return Ok(ModeKernel::Polynomial { c, degree });
        }
        match lower.as_str() {
            "linear" => Ok(ModeKernel::Linear),
            "rbf" | "gaussian" => Ok(ModeKernel::Rbf),
            _ => Err(Error::Config(format!("unknown kernel kind '{s}'"))),
        }
    }
}

impl ModeKernel {
    pub fn with_sigma(self, sigma: f64) -> BaseKernel {
        match self {
            ModeKernel::Linear => BaseKernel::Linear,
            ModeKernel::Rbf => BaseKernel::rbf(sigma),
            ModeKernel::Polynomial { c, degree } => BaseKernel::polynomial(c, degree),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Validation {
    Holdout,
    /// Pool train and validation splits, score by k-fold mean accuracy.
    KFold { k: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub c_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub rank_values: Vec<RankSetting>,
    pub combine: Combine,
    /// One entry per mode; empty means RBF everywhere.
    pub per_mode: Vec<ModeKernel>,
    pub validation: Validation,
    pub solver: SolverParams,
    /// Scale every sample to unit Frobenius norm before decomposition.
    pub normalize: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            c_values: (0..=3).map(|e| 10f64.powi(e)).collect(),
            sigma_values: (0..=3).map(|e| 10f64.powi(e)).collect(),
            rank_values: (2..=8).map(RankSetting::Uniform).collect(),
            combine: Combine::Prod,
            per_mode: Vec::new(),
            validation: Validation::Holdout,
            solver: SolverParams::default(),
            normalize: false,
        }
    }
}

impl GridConfig {
    pub fn single(c: f64, sigma: f64, rank: RankSetting, combine: Combine) -> Self {
        Self {
            c_values: vec![c],
            sigma_values: vec![sigma],
            rank_values: vec![rank],
            combine,
            ..Self::default()
        }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if self.c_values.is_empty() || self.sigma_values.is_empty() || self.rank_values.is_empty() {
            return Err(Error::Config("grid lists must be non-empty".into()));
        }
        if self.c_values.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Config("C values must be positive and finite".into()));
        }
        if self.sigma_values.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::Config("sigma values must be positive and finite".into()));
        }
        if !self.per_mode.is_empty() && self.per_mode.len() != order {
            return Err(Error::Config(format!(
                "{} per-mode kernels for order-{order} data",
                self.per_mode.len()
            )));
        }
        if let Validation::KFold { k } = self.validation {
            if k < 2 {
                return Err(Error::Config("k-fold needs k >= 2".into()));
            }
        }
        for r in &self.rank_values {
            r.to_config(order).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn kernel_spec(&self, sigma: f64, order: usize) -> Result<KernelSpec> {
        let kinds: Vec<ModeKernel> = if self.per_mode.is_empty() {
            vec![ModeKernel::Rbf; order]
        } else {
            self.per_mode.clone()
        };
        KernelSpec::new(kinds.into_iter().map(|k| k.with_sigma(sigma)).collect(), self.combine)
    }

    /// Sigma axis actually searched: a single value when no mode is RBF.
    fn sigma_axis(&self) -> &[f64] {
        let any_rbf = self.per_mode.is_empty() || self.per_mode.contains(&ModeKernel::Rbf);
        if any_rbf {
            &self.sigma_values
        } else {
            &self.sigma_values[..1]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub rank: RankSetting,
    /// Interior ranks actually granted by the decomposition.
    pub ranks: Vec<usize>,
    pub c: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub point: GridPoint,
    pub validation_accuracy: f64,
    pub converged: bool,
}

/// Deterministic grid winner: highest accuracy, then smaller rank, C, sigma.
fn better(a: &GridEntry, b: &GridEntry) -> bool {
    use std::cmp::Ordering::*;
    match a.validation_accuracy.total_cmp(&b.validation_accuracy) {
        Greater => return true,
        Less => return false,
        Equal => {}
    }
    let rank_key = |p: &GridPoint| (p.ranks.iter().copied().max().unwrap_or(0), p.ranks.iter().sum::<usize>(), p.ranks.clone());
    match rank_key(&a.point).cmp(&rank_key(&b.point)) {
        Less => return true,
        Greater => return false,
        Equal => {}
    }
    match a.point.c.total_cmp(&b.point.c) {
        Less => return true,
        Greater => return false,
        Equal => {}
    }
    a.point.sigma < b.point.sigma
}

/// Binary kernel SVM over TT-compressed samples.
#[derive(Clone, Debug)]
pub struct SvmModel {
    pub basis: StackedBasis,
    pub support: Vec<TensorTrain>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub spec: KernelSpec,
    pub point: GridPoint,
    pub validation_accuracy: f64,
    /// Class mapped to +1, then the class mapped to -1.
    pub classes: [u32; 2],
    pub normalize: bool,
    /// Dual solution of the final fit over its training samples; not persisted.
    pub solution: Option<DualSolution>,
}

pub fn normalize_unit(x: &DenseTensor) -> DenseTensor {
    let mut out = x.clone();
    let n = x.frobenius_norm();
    if n > 0.0 {
        out.scale(1.0 / n);
    }
    out
}

fn preprocess(samples: &[&DenseTensor], normalize: bool) -> Vec<DenseTensor> {
    samples
        .iter()
        .map(|x| if normalize { normalize_unit(x) } else { (*x).clone() })
        .collect()
}

/// Contiguous folds after an index-order split: sample `i` of the pool goes
/// to fold `rank_within_class(i) % k`, keeping classes balanced.
fn fold_assignment(labels: &[u32], k: usize) -> Vec<usize> {
    let mut seen = std::collections::HashMap::new();
    labels
        .iter()
        .map(|y| {
            let n = seen.entry(*y).or_insert(0usize);
            let f = *n % k;
            *n += 1;
            f
        })
        .collect()
}

fn accuracy(pred: &[f64], truth: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let ok = pred.iter().zip(truth).filter(|(p, t)| (if **p >= 0.0 { 1.0 } else { -1.0 }) == **t).count();
    ok as f64 / pred.len() as f64
}

fn sub_matrix(g: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| g[(rows[i], cols[j])])
}

struct BinaryData {
    classes: [u32; 2],
    pool: Vec<DenseTensor>,
    /// ±1 per pool sample.
    y: Vec<f64>,
    n_train: usize,
}

fn binary_data(ds: &Dataset, normalize: bool) -> Result<BinaryData> {
    let classes = ds.classes();
    if classes.len() != 2 {
        return Err(Error::arg(format!("binary training needs exactly 2 classes, got {classes:?}")));
    }
    let classes = [classes[0], classes[1]];
    let (tr, ytr) = ds.split(Split::Train);
    let (va, yva) = ds.split(Split::Validation);
    let mut refs = tr;
    refs.extend(va);
    let n_train = ytr.len();
    let y: Vec<f64> = ytr
        .iter()
        .chain(&yva)
        .map(|&l| if l == classes[0] { 1.0 } else { -1.0 })
        .collect();
    Ok(BinaryData {
        classes,
        pool: preprocess(&refs, normalize),
        y,
        n_train,
    })
}

fn has_both(y: &[f64]) -> bool {
    y.contains(&1.0) && y.contains(&-1.0)
}

/// Grid search, then retrain at the winner. Returns the model and every scored grid point.
pub fn train_binary_report(ds: &Dataset, grid: &GridConfig) -> Result<(SvmModel, Vec<GridEntry>)> {
    let order = ds.dims().len();
    grid.validate(order)?;
    let data = binary_data(ds, grid.normalize)?;
    let n_train = data.n_train;
    let train_idx: Vec<usize> = (0..n_train).collect();
    let val_idx: Vec<usize> = (n_train..data.pool.len()).collect();
    let kfold = match grid.validation {
        Validation::Holdout => {
            if !has_both(&data.y[..n_train]) || !has_both(&data.y[n_train..]) {
                return Err(Error::arg("both classes must appear in the train and validation splits"));
            }
            None
        }
        Validation::KFold { k } => {
            if !has_both(&data.y) {
                return Err(Error::arg("both classes must appear in the training pool"));
            }
            Some(k)
        }
    };

    let mut entries = Vec::new();
    let mut best: Option<GridEntry> = None;
    for rank in &grid.rank_values {
        let cfg = rank.to_config(order)?;
        let (basis, tts) = StackedBasis::fit(&data.pool, &cfg)?;
        let granted = basis.interior_ranks();
        for &sigma in grid.sigma_axis() {
            let spec = grid.kernel_spec(sigma, order)?;
            let gram = build_gram(&tts, &spec)?.values;
            for &c in &grid.c_values {
                let (acc, converged) = match kfold {
                    None => score_holdout(&gram, &data.y, &train_idx, &val_idx, c, &grid.solver)?,
                    Some(k) => score_kfold(&gram, &data.y, k, c, &grid.solver)?,
                };
                let entry = GridEntry {
                    point: GridPoint {
                        rank: rank.clone(),
                        ranks: granted.clone(),
                        c,
                        sigma,
                    },
                    validation_accuracy: acc,
                    converged,
                };
                log::debug!(
                    "grid rank={} sigma={sigma} C={c}: validation accuracy {acc}",
                    rank.label()
                );
                if best.as_ref().is_none_or(|b| better(&entry, b)) {
                    best = Some(entry.clone());
                }
                entries.push(entry);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Config("empty grid".into()))?;
    let model = retrain(&data, grid, &best, order, kfold.is_some())?;
    Ok((model, entries))
}

pub fn train_binary(ds: &Dataset, grid: &GridConfig) -> Result<SvmModel> {
    train_binary_report(ds, grid).map(|(m, _)| m)
}

fn score_holdout(
    gram: &DMatrix<f64>,
    y: &[f64],
    train: &[usize],
    val: &[usize],
    c: f64,
    params: &SolverParams,
) -> Result<(f64, bool)> {
    let g = sub_matrix(gram, train, train);
    let ytr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let p = DualProblem::new(&g, &ytr, c)?;
    let s = solve_dual(&p, params);
    let coef: Vec<f64> = s.alphas.iter().zip(&ytr).map(|(a, y)| a * y).collect();
    let k = sub_matrix(gram, val, train);
    let v = decision_values(&coef, s.bias, &k)?;
    let yv: Vec<f64> = val.iter().map(|&i| y[i]).collect();
    Ok((accuracy(&v, &yv), s.converged))
}

fn score_kfold(gram: &DMatrix<f64>, y: &[f64], k: usize, c: f64, params: &SolverParams) -> Result<(f64, bool)> {
    let labels: Vec<u32> = y.iter().map(|&v| u32::from(v < 0.0)).collect();
    let folds = fold_assignment(&labels, k);
    let mut total = 0.0;
    let mut used = 0usize;
    let mut converged = true;
    for f in 0..k {
        let held: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
        let rest: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let yr: Vec<f64> = rest.iter().map(|&i| y[i]).collect();
        if held.is_empty() || !has_both(&yr) {
            continue;
        }
        let (acc, conv) = score_holdout(gram, y, &rest, &held, c, params)?;
        total += acc;
        used += 1;
        converged &= conv;
    }
    if used == 0 {
        return Err(Error::arg("no usable fold: too few samples per class for k-fold"));
    }
    Ok((total / used as f64, converged))
}

fn retrain(data: &BinaryData, grid: &GridConfig, best: &GridEntry, order: usize, pooled: bool) -> Result<SvmModel> {
    let cfg = best.point.rank.to_config(order)?;
    let (basis, tts) = StackedBasis::fit(&data.pool, &cfg)?;
    let spec = grid.kernel_spec(best.point.sigma, order)?;
    let fit_n = if pooled { data.pool.len() } else { data.n_train };
    let fit_tts = &tts[..fit_n];
    let fit_y = &data.y[..fit_n];
    let gram = build_gram(fit_tts, &spec)?.values;
    let p = DualProblem::new(&gram, fit_y, best.point.c)?;
    let s = solve_dual(&p, &grid.solver);
    if !s.converged {
        return Err(Error::Numerical(format!(
            "dual solver did not converge at the selected grid point (rank {}, C {}, sigma {}) after {} iterations",
            best.point.rank.label(),
            best.point.c,
            best.point.sigma,
            s.iterations
        )));
    }
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (i, a) in s.alphas.iter().enumerate() {
        if *a > SUPPORT_EPS {
            support.push(fit_tts[i].clone());
            coef.push(a * fit_y[i]);
        }
    }
    Ok(SvmModel {
        basis,
        support,
        coef,
        bias: s.bias,
        spec,
        point: best.point.clone(),
        validation_accuracy: best.validation_accuracy,
        classes: data.classes,
        normalize: grid.normalize,
        solution: Some(s),
    })
}

/// Anything that maps samples to class ids.
pub trait Classifier {
    fn predict(&self, samples: &[DenseTensor]) -> Result<Vec<u32>>;
}

impl SvmModel {
    pub fn dims(&self) -> &[usize] {
        self.basis.dims()
    }

    /// Project samples onto the training basis.
    pub fn encode(&self, samples: &[DenseTensor]) -> Result<Vec<TensorTrain>> {
        samples
            .iter()
            .map(|x| {
                if self.normalize {
                    self.basis.project(&normalize_unit(x))
                } else {
                    self.basis.project(x)
                }
            })
            .collect()
    }

    pub fn decision_function(&self, samples: &[DenseTensor]) -> Result<Vec<f64>> {
        if let Some(x) = samples.iter().find(|x| x.dims() != self.dims()) {
            return Err(Error::arg(format!(
                "sample dims {:?} do not match model dims {:?}",
                x.dims(),
                self.dims()
            )));
        }
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        if self.support.is_empty() {
            return Ok(vec![self.bias; samples.len()]);
        }
        let tts = self.encode(samples)?;
        let k = cross_gram(&self.support, &tts, &self.spec)?;
        decision_values(&self.coef, self.bias, &k)
    }

    pub fn label_for(&self, value: f64) -> u32 {
        if value >= 0.0 {
            self.classes[0]
        } else {
            self.classes[1]
        }
    }
}

impl Classifier for SvmModel {
    fn predict(&self, samples: &[DenseTensor]) -> Result<Vec<u32>> {
        Ok(self
            .decision_function(samples)?
            .into_iter()
            .map(|v| self.label_for(v))
            .collect())
    }
}

/// One binary model per unordered class pair `(a, b)`, `a < b`, in lexicographic order.
#[derive(Clone, Debug)]
pub struct OvoModel {
    pub classes: Vec<u32>,
    pub pairs: Vec<SvmModel>,
}

pub fn train_multiclass_ovo(ds: &Dataset, grid: &GridConfig) -> Result<OvoModel> {
    let classes = ds.classes();
    let mut pairs = Vec::new();
    for (i, &a) in classes.iter().enumerate() {
        for &b in &classes[i + 1..] {
            pairs.push([a, b]);
        }
    }
    let train_pair = |pair: &[u32; 2]| -> Result<SvmModel> { train_binary(&ds.restrict(pair)?, grid) };
    #[cfg(feature = "parallel")]
    let models: Vec<Result<SvmModel>> = pairs.par_iter().map(train_pair).collect();
    #[cfg(not(feature = "parallel"))]
    let models: Vec<Result<SvmModel>> = pairs.iter().map(train_pair).collect();
    Ok(OvoModel {
        classes,
        pairs: models.into_iter().collect::<Result<_>>()?,
    })
}

impl OvoModel {
    /// Decision values per pair model, `[pair][sample]`.
    pub fn pair_decisions(&self, samples: &[DenseTensor]) -> Result<Vec<Vec<f64>>> {
        self.pairs.iter().map(|m| m.decision_function(samples)).collect()
    }

    /// Majority vote; ties go to the largest summed |decision| over won
    /// votes, then to the smallest class id.
    pub fn vote(&self, decisions: &[Vec<f64>], n: usize) -> Vec<u32> {
        (0..n)
            .map(|t| {
                let mut votes = vec![0usize; self.classes.len()];
                let mut strength = vec![0.0f64; self.classes.len()];
                for (m, dv) in self.pairs.iter().zip(decisions) {
                    let winner = m.label_for(dv[t]);
                    let w = self.classes.binary_search(&winner).expect("pair class in class list");
                    votes[w] += 1;
                    strength[w] += dv[t].abs();
                }
                let mut best = 0;
                for c in 1..self.classes.len() {
                    if votes[c] > votes[best] || (votes[c] == votes[best] && strength[c] > strength[best]) {
                        best = c;
                    }
                }
                self.classes[best]
            })
            .collect()
    }
}

impl Classifier for OvoModel {
    fn predict(&self, samples: &[DenseTensor]) -> Result<Vec<u32>> {
        let d = self.pair_decisions(samples)?;
        Ok(self.vote(&d, samples.len()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub classes: Vec<u32>,
    /// `confusion[true][predicted]` over `classes`.
    pub confusion: Vec<Vec<u64>>,
    /// `None` for classes without true samples.
    pub per_class_recall: Vec<Option<f64>>,
    pub total: usize,
}

pub fn evaluate_predictions(predicted: &[u32], truth: &[u32]) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty test split"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let classes: Vec<u32> = truth
        .iter()
        .chain(predicted)
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pos = |c: u32| classes.binary_search(&c).expect("class collected");
    let k = classes.len();
    let mut confusion = vec![vec![0u64; k]; k];
    for (p, t) in predicted.iter().zip(truth) {
        confusion[pos(*t)][pos(*p)] += 1;
    }
    let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let per_class_recall = (0..k)
        .map(|i| {
            let row: u64 = confusion[i].iter().sum();
            (row > 0).then(|| confusion[i][i] as f64 / row as f64)
        })
        .collect();
    Ok(Metrics {
        accuracy: correct as f64 / truth.len() as f64,
        classes,
        confusion,
        per_class_recall,
        total: truth.len(),
    })
}

/// Metrics of `model` on the test split of `ds`.
pub fn evaluate(model: &impl Classifier, ds: &Dataset) -> Result<Metrics> {
    let (xs, ys) = ds.split(Split::Test);
    let owned: Vec<DenseTensor> = xs.into_iter().cloned().collect();
    let pred = model.predict(&owned)?;
    evaluate_predictions(&pred, &ys)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rank: RankSetting,
    pub ranks: Vec<usize>,
    pub c: f64,
    pub sigma: f64,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
}

/// `train_binary` per rank setting, scored on the test split.
pub fn rank_sweep(ds: &Dataset, grid: &GridConfig, ranks: &[RankSetting]) -> Result<Vec<SweepRow>> {
    if ranks.is_empty() {
        return Err(Error::Config("rank sweep needs at least one rank".into()));
    }
    ranks
        .iter()
        .map(|r| {
            let g = GridConfig {
                rank_values: vec![r.clone()],
                ..grid.clone()
            };
            let model = train_binary(ds, &g)?;
            let m = evaluate(&model, ds)?;
            Ok(SweepRow {
                rank: r.clone(),
                ranks: model.point.ranks.clone(),
                c: model.point.c,
                sigma: model.point.sigma,
                validation_accuracy: model.validation_accuracy,
                test_accuracy: m.accuracy,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gaussian_blobs, gaussian_classes};

    fn blob_dataset(seed: u64, dims: &[usize], per: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = gaussian_blobs(&mut rng, dims, 3 * per, 3.0, 0.3);
        let splits = (0..x.len())
            .map(|i| match (i % (3 * per)) / per {
                0 => Split::Train,
                1 => Split::Validation,
                _ => Split::Test,
            })
            .collect();
        Dataset::new(x, y, splits).unwrap()
    }

    #[test]
    fn separable_blobs_full_validation_accuracy() {
        let ds = blob_dataset(1, &[2, 2, 2], 10);
        let grid = GridConfig::single(1.0, 1.0, RankSetting::Uniform(2), Combine::Prod);
        let m = train_binary(&ds, &grid).unwrap();
        assert_eq!(m.validation_accuracy, 1.0);
        assert_eq!(evaluate(&m, &ds).unwrap().accuracy, 1.0);
    }

    #[test]
    fn rejects_single_class_and_bad_grid() {
        let ds = blob_dataset(2, &[2, 2], 4);
        let mut grid = GridConfig::single(1.0, 1.0, RankSetting::Uniform(2), Combine::Sum);
        grid.c_values.clear();
        assert!(train_binary(&ds, &grid).is_err());
        let x = ds.samples().to_vec();
        let n = x.len();
        assert!(Dataset::new(x, vec![0; n], vec![Split::Train; n]).is_err());
    }

    #[test]
    fn dataset_shape_checks() {
        let a = DenseTensor::zeros(vec![2, 2]).unwrap();
        let b = DenseTensor::zeros(vec![4]).unwrap();
        assert!(Dataset::new(vec![a.clone(), b], vec![0, 1], vec![Split::Train; 2]).is_err());
        assert!(Dataset::new(vec![a], vec![0, 1], vec![Split::Train; 2]).is_err());
    }

    #[test]
    fn ovo_builds_every_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, y) = gaussian_classes(&mut rng, &[3, 3], 4, 9, 2.0, 0.2);
        let splits = (0..x.len())
            .map(|i| match i % 9 {
                0..=2 => Split::Train,
                3..=5 => Split::Validation,
                _ => Split::Test,
            })
            .collect();
        let ds = Dataset::new(x, y, splits).unwrap();
        let grid = GridConfig::single(10.0, 3.0, RankSetting::Uniform(2), Combine::Prod);
        let m = train_multiclass_ovo(&ds, &grid).unwrap();
        assert_eq!(m.pairs.len(), 6);
        assert!(m.pairs.iter().all(|p| p.classes[0] < p.classes[1]));
    }

    #[test]
    fn hand_scored_metrics() {
        let truth = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
        let pred = [0, 1, 0, 1, 1, 2, 1, 2, 0, 2];
        let m = evaluate_predictions(&pred, &truth).unwrap();
        assert_eq!(m.accuracy, 0.7);
        assert_eq!(m.confusion, vec![vec![2, 1, 0], vec![0, 3, 1], vec![1, 0, 2]]);
        assert_eq!(m.per_class_recall, vec![Some(2.0 / 3.0), Some(0.75), Some(2.0 / 3.0)]);
        assert!(evaluate_predictions(&[], &[]).is_err());
        let wrong = evaluate_predictions(&[1, 0], &[0, 1]).unwrap();
        assert_eq!(wrong.accuracy, 0.0);
    }

    #[test]
    fn mode_kernel_parsing() {
        assert_eq!("RBF".parse::<ModeKernel>().unwrap(), ModeKernel::Rbf);
        assert_eq!("linear".parse::<ModeKernel>().unwrap(), ModeKernel::Linear);
        assert_eq!(
            "poly:0.5:3".parse::<ModeKernel>().unwrap(),
            ModeKernel::Polynomial { c: 0.5, degree: 3 }
        );
        assert!("cosine".parse::<ModeKernel>().is_err());
    }

    #[test]
    fn holdout_indices_are_disjoint_and_seeded() {
        let labels: Vec<u32> = (0..40).map(|i| i % 2).collect();
        let (a, b) = holdout_indices(&labels, &[0, 1], 5, 5, 7).unwrap();
        let (a2, b2) = holdout_indices(&labels, &[0, 1], 5, 5, 7).unwrap();
        assert_eq!((a.clone(), b.clone()), (a2, b2));
        assert!(a.iter().all(|i| !b.contains(i)));
        assert!(holdout_indices(&labels, &[0, 1], 15, 6, 7).is_err());
    }

    #[test]
    fn kfold_switch_trains() {
        let ds = blob_dataset(3, &[2, 3], 6);
        let mut grid = GridConfig::single(1.0, 1.0, RankSetting::Uniform(2), Combine::Prod);
        grid.validation = Validation::KFold { k: 3 };
        let m = train_binary(&ds, &grid).unwrap();
        assert_eq!(m.validation_accuracy, 1.0);
    }
}
