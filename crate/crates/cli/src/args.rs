//! Flag groups shared by subcommands, applied on top of `--config`.

use std::path::PathBuf;

use clap::Args;
use ksttm::pipeline::RankSetting;
use ksttm::{Result, RunConfig};

#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for the train/validation draw; recorded in every output.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct DataArgs {
    /// Directory holding the four standard MNIST IDX files.
    #[arg(long, value_name = "DIR")]
    pub mnist_dir: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub train_labels: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_images: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub test_labels: Option<PathBuf>,
    /// Sample dims, e.g. 28,28 or 4,7,4,7.
    #[arg(long, value_delimiter = ',', value_name = "DIMS")]
    pub reshape: Option<Vec<usize>>,
    /// Classes to keep, e.g. 1,2.
    #[arg(long, alias = "pair", value_delimiter = ',', value_name = "IDS")]
    pub classes: Option<Vec<u32>>,
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long)]
    pub val_per_class: Option<usize>,
    /// 0 keeps every test sample.
    #[arg(long)]
    pub test_per_class: Option<usize>,
}

impl DataArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let d = &mut cfg.data;
        if let Some(dir) = &self.mnist_dir {
            d.train_images = Some(dir.join("train-images-idx3-ubyte"));
            d.train_labels = Some(dir.join("train-labels-idx1-ubyte"));
            d.test_images = Some(dir.join("t10k-images-idx3-ubyte"));
            d.test_labels = Some(dir.join("t10k-labels-idx1-ubyte"));
        }
        let set = |dst: &mut Option<PathBuf>, src: &Option<PathBuf>| {
            if src.is_some() {
                *dst = src.clone();
            }
        };
        set(&mut d.train_images, &self.train_images);
        set(&mut d.train_labels, &self.train_labels);
        set(&mut d.test_images, &self.test_images);
        set(&mut d.test_labels, &self.test_labels);
        if let Some(r) = &self.reshape {
            d.reshape = r.clone();
        }
        if let Some(c) = &self.classes {
            d.classes = c.clone();
        }
        if let Some(n) = self.train_per_class {
            d.train_per_class = n;
        }
        if let Some(n) = self.val_per_class {
            d.val_per_class = n;
        }
        if let Some(n) = self.test_per_class {
            d.test_per_class = n;
        }
    }
}

#[derive(Args, Debug, Default, Clone)]
pub struct GridArgs {
    /// C values, e.g. 1,10,100.
    #[arg(long = "c", value_delimiter = ',', value_name = "LIST")]
    pub c_values: Option<Vec<f64>>,
    /// RBF widths.
    #[arg(long = "sigma", value_delimiter = ',', value_name = "LIST")]
    pub sigma_values: Option<Vec<f64>>,
    /// Uniform interior ranks, e.g. 2,3,4.
    #[arg(long = "rank", value_delimiter = ',', value_name = "LIST", conflicts_with = "rank_tol")]
    pub rank_values: Option<Vec<usize>>,
    /// Relative-error truncation instead of fixed ranks.
    #[arg(long, value_name = "EPS")]
    pub rank_tol: Option<f64>,
    /// prod or sum.
    #[arg(long)]
    pub combine: Option<String>,
    /// Kernel kind per mode: rbf, linear, poly:<c>:<degree>.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub per_mode: Option<Vec<String>>,
    /// holdout or kfold.
    #[arg(long)]
    pub validation: Option<String>,
    #[arg(long)]
    pub k_folds: Option<usize>,
    /// Solver KKT tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Scale samples to unit Frobenius norm.
    #[arg(long)]
    pub normalize: bool,
}

impl GridArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let g = &mut cfg.grid;
        if let Some(v) = &self.c_values {
            g.c_values = v.clone();
        }
        if let Some(v) = &self.sigma_values {
            g.sigma_values = v.clone();
        }
        if let Some(v) = &self.rank_values {
            g.rank_values = v.iter().copied().map(RankSetting::Uniform).collect();
        }
        if let Some(eps) = self.rank_tol {
            g.rank_values = vec![RankSetting::Tolerance(eps)];
        }
        if let Some(c) = &self.combine {
            g.combine = c.clone();
        }
        if let Some(p) = &self.per_mode {
            g.per_mode = p.clone();
        }
        if let Some(v) = &self.validation {
            g.validation = v.clone();
        }
        if let Some(k) = self.k_folds {
            g.k_folds = k;
        }
        if let Some(t) = self.tol {
            cfg.solver.tol = t;
        }
        if self.max_iter.is_some() {
            cfg.solver.max_iter = self.max_iter;
        }
        if self.normalize {
            cfg.normalize.unit_frobenius = true;
        }
    }
}
