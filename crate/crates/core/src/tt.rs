//! Tensor trains: TT-SVD, reconstruction, TT inner products and the
//! stacked decomposition used to give a whole sample set one rank chain.
//!
//! Core `k` is a 3-way tensor of shape `(R_k, I_k, R_{k+1})` stored
//! first-index-fastest, so `core.data()` is also the column-major matrix
//! `(R_k * I_k) x R_{k+1}` (left unfolding) and `R_k x (I_k * R_{k+1})`
//! (right unfolding) without copying.

use std::sync::Arc;

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::thin_svd;
use crate::tensor::DenseTensor;

#[derive(Clone, Debug)]
pub struct TensorTrain {
    cores: Vec<Arc<DenseTensor>>,
}

impl TensorTrain {
    /// Validates the rank chain: boundary ranks are 1 and neighbours agree.
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        Self::from_shared(cores.into_iter().map(Arc::new).collect())
    }

    pub fn from_shared(cores: Vec<Arc<DenseTensor>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::arg("tensor train needs at least one core"));
        }
        for (k, c) in cores.iter().enumerate() {
            if c.order() != 3 {
                return Err(Error::arg(format!(
                    "core {k} has order {}, expected 3",
                    c.order()
                )));
            }
        }
        if cores[0].dims()[0] != 1 {
            return Err(Error::arg("first TT rank must be 1"));
        }
        if cores[cores.len() - 1].dims()[2] != 1 {
            return Err(Error::arg("last TT rank must be 1"));
        }
        for k in 0..cores.len() - 1 {
            if cores[k].dims()[2] != cores[k + 1].dims()[0] {
                return Err(Error::arg(format!(
                    "rank mismatch between cores {k} and {}: {} vs {}",
                    k + 1,
                    cores[k].dims()[2],
                    cores[k + 1].dims()[0]
                )));
            }
        }
        Ok(Self { cores })
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[Arc<DenseTensor>] {
        &self.cores
    }

    pub fn core(&self, k: usize) -> &DenseTensor {
        &self.cores[k]
    }

    /// Mode sizes `I_1..I_d`.
    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    /// Full rank chain `R_1..R_{d+1}` including the unit boundary ranks.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.dims()[0]).collect();
        r.push(1);
        r
    }

    /// Interior ranks `R_2..R_d`.
    pub fn interior_ranks(&self) -> Vec<usize> {
        let r = self.ranks();
        r[1..r.len() - 1].to_vec()
    }

    pub fn num_params(&self) -> usize {
        self.cores.iter().map(|c| c.len()).sum()
    }

    pub fn reconstruct(&self) -> DenseTensor {
        reconstruct(self)
    }
}

fn left_unfolding(core: &DenseTensor) -> DMatrixView<'_, f64> {
    let d = core.dims();
    DMatrixView::from_slice(core.data(), d[0] * d[1], d[2])
}

fn right_unfolding(core: &DenseTensor) -> DMatrixView<'_, f64> {
    let d = core.dims();
    DMatrixView::from_slice(core.data(), d[0], d[1] * d[2])
}

/// Truncation rule for TT-SVD.
///
/// `max_ranks` holds the `d - 1` interior ranks; `rel_tol` is the global
/// relative Frobenius error budget. When both are set the tolerance picks a
/// rank first and the cap clamps it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtSvdConfig {
    pub max_ranks: Option<Vec<usize>>,
    pub rel_tol: Option<f64>,
}

impl TtSvdConfig {
    pub fn fixed_ranks(ranks: Vec<usize>) -> Self {
        Self {
            max_ranks: Some(ranks),
            rel_tol: None,
        }
    }

    pub fn rel_tolerance(eps: f64) -> Self {
        Self {
            max_ranks: None,
            rel_tol: Some(eps),
        }
    }

    pub fn with_max_ranks(mut self, ranks: Vec<usize>) -> Self {
        self.max_ranks = Some(ranks);
        self
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if self.max_ranks.is_none() && self.rel_tol.is_none() {
            return Err(Error::arg("TT-SVD config needs ranks, a tolerance, or both"));
        }
        if let Some(eps) = self.rel_tol {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::arg(format!("TT-SVD tolerance must be positive, got {eps}")));
            }
        }
        if let Some(r) = &self.max_ranks {
            if r.len() != order.saturating_sub(1) {
                return Err(Error::arg(format!(
                    "expected {} interior ranks for an order-{order} tensor, got {}",
                    order.saturating_sub(1),
                    r.len()
                )));
            }
            if r.contains(&0) {
                return Err(Error::arg("interior TT ranks must be >= 1"));
            }
        }
        Ok(())
    }
}

/// A requested rank that exceeded what the unfolding could support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankClamp {
    /// Interior rank position, 0-based over `R_2..R_d`.
    pub position: usize,
    pub requested: usize,
    pub granted: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TtSvdReport {
    pub clamps: Vec<RankClamp>,
    /// Norm of all discarded singular values, an upper bound on the absolute error.
    pub discarded_norm: f64,
}

struct Truncated {
    u: DMatrix<f64>,
    s: Vec<f64>,
    vt: DMatrix<f64>,
}

/// SVD of `m` truncated by `cap` and the absolute tail budget `delta`.
/// Returns the factors and the norm of the dropped tail.
fn truncated_svd(m: DMatrix<f64>, cap: Option<usize>, delta: Option<f64>) -> (Truncated, f64) {
    let full = m.nrows().min(m.ncols());
    let svd = thin_svd(&m);
    let s_sorted = svd.s;
    let mut r = full;
    if let Some(delta) = delta {
        // smallest r whose discarded tail stays within the budget
        let mut tail = 0.0;
        r = full;
        for j in (0..full).rev() {
            let next = tail + s_sorted[j] * s_sorted[j];
            if next.sqrt() > delta {
                break;
            }
            tail = next;
            r = j;
        }
    }
    if let Some(cap) = cap {
        r = r.min(cap);
    }
    let r = r.max(1).min(full);
    let dropped = s_sorted[r..].iter().map(|x| x * x).sum::<f64>().sqrt();

    let ur = svd.u.columns(0, r).into_owned();
    let vtr = svd.vt.rows(0, r).into_owned();
    (
        Truncated {
            u: ur,
            s: s_sorted[..r].to_vec(),
            vt: vtr,
        },
        dropped,
    )
}

fn zero_train(dims: &[usize]) -> TensorTrain {
    let cores = dims
        .iter()
        .map(|&n| DenseTensor::zeros(vec![1, n, 1]).expect("non-zero dims"))
        .collect();
    TensorTrain::new(cores).expect("unit rank chain")
}

/// Left-to-right TT-SVD of a dense tensor.
pub fn tt_svd(t: &DenseTensor, cfg: &TtSvdConfig) -> Result<TensorTrain> {
    tt_svd_with_report(t, cfg).map(|(tt, _)| tt)
}

pub fn tt_svd_with_report(t: &DenseTensor, cfg: &TtSvdConfig) -> Result<(TensorTrain, TtSvdReport)> {
    let d = t.order();
    cfg.validate(d)?;
    let dims = t.dims().to_vec();
    let norm = t.frobenius_norm();
    let mut report = TtSvdReport::default();
    if norm == 0.0 {
        return Ok((zero_train(&dims), report));
    }
    if d == 1 {
        let core = DenseTensor::new(vec![1, dims[0], 1], t.data().to_vec())?;
        return Ok((TensorTrain::new(vec![core])?, report));
    }
    let delta = cfg.rel_tol.map(|eps| eps * norm / ((d - 1) as f64).sqrt());

    let mut cores = Vec::with_capacity(d);
    let mut rest: Vec<f64> = t.data().to_vec();
    let mut r_prev = 1;
    let mut dropped_sq = 0.0;
    for k in 0..d - 1 {
        let rows = r_prev * dims[k];
        let cols: usize = dims[k + 1..].iter().product();
        let m = DMatrix::from_vec(rows, cols, rest);
        let cap = cfg.max_ranks.as_ref().map(|r| r[k]);
        let (tr, dropped) = truncated_svd(m, cap, delta);
        let r = tr.s.len();
        if let Some(req) = cap {
            let full = rows.min(cols);
            if req > full {
                report.clamps.push(RankClamp {
                    position: k,
                    requested: req,
                    granted: r,
                });
            }
        }
        dropped_sq += dropped * dropped;
        cores.push(DenseTensor::new(vec![r_prev, dims[k], r], tr.u.as_slice().to_vec())?);
        let mut sv = tr.vt;
        for (i, s) in tr.s.iter().enumerate() {
            sv.row_mut(i).scale_mut(*s);
        }
        rest = sv.as_slice().to_vec();
        r_prev = r;
    }
    cores.push(DenseTensor::new(vec![r_prev, dims[d - 1], 1], rest)?);
    report.discarded_norm = dropped_sq.sqrt();
    Ok((TensorTrain::new(cores)?, report))
}

/// Dense tensor whose entries are the products of core slices.
pub fn reconstruct(tt: &TensorTrain) -> DenseTensor {
    let dims = tt.dims();
    let mut acc = DMatrix::from_column_slice(1, 1, &[1.0]);
    for core in tt.cores() {
        // acc: P x R_k, core: R_k x (I_k R_{k+1}) -> P x (I_k R_{k+1}) == (P I_k) x R_{k+1}
        let prod = &acc * right_unfolding(core);
        let p = prod.nrows() * core.dims()[1];
        let r = core.dims()[2];
        acc = DMatrix::from_vec(p, r, prod.as_slice().to_vec());
    }
    DenseTensor::new(dims, acc.as_slice().to_vec()).expect("reconstruction matches dims")
}

/// `<a, b>` by sequential contraction of the two trains.
pub fn tt_inner_product(a: &TensorTrain, b: &TensorTrain) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::arg(format!(
            "TT inner product of dims {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut v = DMatrix::from_element(1, 1, 1.0);
    for (ca, cb) in a.cores().iter().zip(b.cores()) {
        let n = ca.dims()[1];
        // t = v * right(B): R_a x (I R̂_b), reinterpreted as (R_a I) x R̂_b
        let t = &v * right_unfolding(cb);
        let t = DMatrix::from_vec(ca.dims()[0] * n, cb.dims()[2], t.as_slice().to_vec());
        v = left_unfolding(ca).transpose() * t;
    }
    Ok(v[(0, 0)])
}

/// Shared right-orthonormal basis produced by decomposing a stacked sample set.
///
/// Every sample TT consists of a sample-specific first core followed by the
/// shared cores `2..d`. New samples are expressed in the same basis by
/// [`StackedBasis::project`], which reproduces the training extraction exactly.
#[derive(Clone, Debug)]
pub struct StackedBasis {
    dims: Vec<usize>,
    /// `(S_1, I_1, R_2)` core linking the sample coefficients to mode 1.
    head: Arc<DenseTensor>,
    /// Cores for modes `2..d`, shared by every sample TT.
    tail: Vec<Arc<DenseTensor>>,
}

impl StackedBasis {
    pub fn from_parts(head: Arc<DenseTensor>, tail: Vec<Arc<DenseTensor>>) -> Result<Self> {
        let mut dims = vec![head.dims()[1]];
        dims.extend(tail.iter().map(|c| c.dims()[1]));
        // validate the chain with a probe row
        let probe = Arc::new(DenseTensor::zeros(vec![1, head.dims()[1], head.dims()[2]])?);
        let mut cores = vec![probe];
        cores.extend(tail.iter().cloned());
        TensorTrain::from_shared(cores)?;
        Ok(Self { dims, head, tail })
    }

    /// Decompose the stacked `(M, I_1, .., I_d)` tensor and return the basis and
    /// one TT per sample, in input order.
    pub fn fit(samples: &[DenseTensor], cfg: &TtSvdConfig) -> Result<(Self, Vec<TensorTrain>)> {
        let first = samples
            .first()
            .ok_or_else(|| Error::arg("cannot decompose an empty sample list"))?;
        let dims = first.dims().to_vec();
        if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.dims() != dims.as_slice()) {
            return Err(Error::arg(format!(
                "sample {i} has dims {:?}, expected {:?}",
                s.dims(),
                dims
            )));
        }
        let d = dims.len();
        cfg.validate(d)?;
        let m = samples.len();
        let n: usize = dims.iter().product();

        // sample index is the fastest-varying coordinate of the stacked tensor
        let mut data = vec![0.0; m * n];
        for (s, x) in samples.iter().enumerate() {
            for (j, v) in x.data().iter().enumerate() {
                data[s + m * j] = *v;
            }
        }
        let mut sdims = vec![m];
        sdims.extend_from_slice(&dims);
        let norm = data.iter().map(|x| x * x).sum::<f64>().sqrt();
        let delta = cfg.rel_tol.map(|eps| eps * norm / (d as f64).sqrt());

        // right-to-left sweep; cores 1..=d end up right-orthonormal
        let mut cores_rev: Vec<DenseTensor> = Vec::with_capacity(d);
        let mut rest = data;
        let mut r_next = 1;
        for k in (1..=d).rev() {
            let rows: usize = sdims[..k].iter().product();
            let cols = sdims[k] * r_next;
            let mat = DMatrix::from_vec(rows, cols, rest);
            // split k sits between stacked modes k-1 and k; k >= 2 is a sample interior rank
            let cap = if k >= 2 {
                cfg.max_ranks.as_ref().map(|r| r[k - 2])
            } else {
                None
            };
            let (tr, _) = truncated_svd(mat, cap, delta);
            let r = tr.s.len();
            cores_rev.push(DenseTensor::new(
                vec![r, sdims[k], r_next],
                tr.vt.as_slice().to_vec(),
            )?);
            let mut us = tr.u;
            for (j, s) in tr.s.iter().enumerate() {
                us.column_mut(j).scale_mut(*s);
            }
            rest = us.as_slice().to_vec();
            r_next = r;
        }
        cores_rev.reverse();
        let head = Arc::new(cores_rev.remove(0));
        let tail: Vec<Arc<DenseTensor>> = cores_rev.into_iter().map(Arc::new).collect();
        let basis = Self { dims, head, tail };

        // rest holds the (M x S_1) sample coefficient matrix
        let s1 = r_next;
        let coeffs = DMatrix::from_vec(m, s1, rest);
        let trains = (0..m)
            .map(|i| basis.absorb(coeffs.row(i).iter().copied().collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok((basis, trains))
    }

    fn absorb(&self, coeff: Vec<f64>) -> Result<TensorTrain> {
        let c = DMatrix::from_vec(1, coeff.len(), coeff);
        let row = c * right_unfolding(&self.head);
        let hd = self.head.dims();
        let first = DenseTensor::new(vec![1, hd[1], hd[2]], row.as_slice().to_vec())?;
        let mut cores = vec![Arc::new(first)];
        cores.extend(self.tail.iter().cloned());
        TensorTrain::from_shared(cores)
    }

    /// Express a new sample in this basis, giving it the training rank chain.
    pub fn project(&self, x: &DenseTensor) -> Result<TensorTrain> {
        if x.dims() != self.dims.as_slice() {
            return Err(Error::arg(format!(
                "sample dims {:?} do not match basis dims {:?}",
                x.dims(),
                self.dims
            )));
        }
        // Contract modes d..1 against the right-orthonormal cores.
        let mut rest: Vec<f64> = x.data().to_vec();
        let mut r_next = 1;
        let all: Vec<&DenseTensor> = std::iter::once(self.head.as_ref())
            .chain(self.tail.iter().map(|c| c.as_ref()))
            .collect();
        for k in (0..all.len()).rev() {
            let core = all[k];
            let cols = self.dims[k] * r_next;
            let rows = rest.len() / cols;
            let t = DMatrix::from_vec(rows, cols, rest);
            let out = t * right_unfolding(core).transpose();
            rest = out.as_slice().to_vec();
            r_next = core.dims()[0];
        }
        self.absorb(rest)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn head(&self) -> &Arc<DenseTensor> {
        &self.head
    }

    pub fn tail(&self) -> &[Arc<DenseTensor>] {
        &self.tail
    }

    /// Interior rank chain `R_2..R_d` shared by every sample TT.
    pub fn interior_ranks(&self) -> Vec<usize> {
        std::iter::once(self.head.dims()[2])
            .chain(self.tail.iter().map(|c| c.dims()[2]))
            .take(self.dims.len() - 1)
            .collect()
    }
}

/// Stack samples along a new leading mode, decompose once, and return one TT
/// per sample; all returned trains share the same rank chain.
pub fn stack_and_decompose(samples: &[DenseTensor], cfg: &TtSvdConfig) -> Result<Vec<TensorTrain>> {
    StackedBasis::fit(samples, cfg).map(|(_, tts)| tts)
}
