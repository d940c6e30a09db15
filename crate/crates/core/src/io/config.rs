//! TOML run configuration.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! train_images = "data/mnist/train-images-idx3-ubyte"
//! train_labels = "data/mnist/train-labels-idx1-ubyte"
//! test_images = "data/mnist/t10k-images-idx3-ubyte"
//! test_labels = "data/mnist/t10k-labels-idx1-ubyte"
//! reshape = [4, 7, 4, 7]
//! classes = [1, 2]
//! train_per_class = 50
//! val_per_class = 50
//! test_per_class = 0      # 0 keeps every test sample of the selected classes
//!
//! [grid]
//! c_values = [1.0, 10.0, 100.0, 1000.0]
//! sigma_values = [1.0, 10.0, 100.0, 1000.0]
//! rank_values = [2, 3, 4, 5, 6, 7, 8]
//! combine = "prod"
//! per_mode = ["rbf", "rbf", "rbf", "rbf"]
//! validation = "holdout"  # or "kfold" together with k_folds
//! k_folds = 5
//!
//! [solver]
//! tol = 1e-3
//!
//! [normalize]
//! unit_frobenius = false
//! ```
//!
//! Images and labels may be IDX files or, for images, `.ttn` containers;
//! labels may also be plain text with one integer per line.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{idx, ttn};
use crate::kernel::Combine;
use crate::pipeline::{holdout_indices, Dataset, GridConfig, ModeKernel, RankSetting, Split, Validation};
use crate::solver::SolverParams;
use crate::tensor::DenseTensor;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub grid: GridSection,
    pub solver: SolverSection,
    pub normalize: NormalizeSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub reshape: Vec<usize>,
    /// Empty selects every class present.
    pub classes: Vec<u32>,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub test_per_class: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            reshape: vec![4, 7, 4, 7],
            classes: Vec::new(),
            train_per_class: 50,
            val_per_class: 50,
            test_per_class: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub c_values: Vec<f64>,
    pub sigma_values: Vec<f64>,
    pub rank_values: Vec<RankSetting>,
    pub combine: String,
    pub per_mode: Vec<String>,
    pub validation: String,
    pub k_folds: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridConfig::default();
        Self {
            c_values: g.c_values,
            sigma_values: g.sigma_values,
            rank_values: g.rank_values,
            combine: "prod".into(),
            per_mode: Vec::new(),
            validation: "holdout".into(),
            k_folds: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iter: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tol: SolverParams::default().tol,
            max_iter: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalizeSection {
    pub unit_frobenius: bool,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim().replace('\n', " ")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid_config(&self) -> Result<GridConfig> {
        let g = &self.grid;
        let combine: Combine = g.combine.parse()?;
        let per_mode = g
            .per_mode
            .iter()
            .map(|s| s.parse::<ModeKernel>())
            .collect::<Result<Vec<_>>>()?;
        let validation = match g.validation.to_ascii_lowercase().as_str() {
            "holdout" => Validation::Holdout,
            "kfold" | "k-fold" => Validation::KFold { k: g.k_folds },
            other => return Err(Error::Config(format!("unknown validation mode '{other}'"))),
        };
        if self.solver.tol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::Config("solver tol must be positive".into()));
        }
        Ok(GridConfig {
            c_values: g.c_values.clone(),
            sigma_values: g.sigma_values.clone(),
            rank_values: g.rank_values.clone(),
            combine,
            per_mode,
            validation,
            solver: SolverParams {
                tol: self.solver.tol,
                max_iter: self.solver.max_iter,
            },
            normalize: self.normalize.unit_frobenius,
        })
    }

    /// Dataset from the `[data]` section: a seeded per-class train/validation
    /// draw from the training files and the selected classes of the test files.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        let need = |p: &Option<PathBuf>, what: &str| -> Result<PathBuf> {
            p.clone().ok_or_else(|| Error::Config(format!("[data] {what} is not set")))
        };
        let train_x = load_images(&need(&d.train_images, "train_images")?, &d.reshape)?;
        let train_y = load_labels(&need(&d.train_labels, "train_labels")?)?;
        if train_x.len() != train_y.len() {
            return Err(Error::format(format!(
                "{} training images but {} labels",
                train_x.len(),
                train_y.len()
            )));
        }
        let classes = if d.classes.is_empty() {
            let mut c = train_y.clone();
            c.sort_unstable();
            c.dedup();
            c
        } else {
            d.classes.clone()
        };
        let (tr, va) = holdout_indices(&train_y, &classes, d.train_per_class, d.val_per_class, self.seed)?;
        let mut samples: Vec<DenseTensor> = Vec::new();
        let mut labels = Vec::new();
        let mut splits = Vec::new();
        for (idx, tag) in [(&tr, Split::Train), (&va, Split::Validation)] {
            for &i in idx {
                samples.push(train_x[i].clone());
                labels.push(train_y[i]);
                splits.push(tag);
            }
        }
        if let (Some(ti), Some(tl)) = (&d.test_images, &d.test_labels) {
            let test_x = load_images(ti, &d.reshape)?;
            let test_y = load_labels(tl)?;
            if test_x.len() != test_y.len() {
                return Err(Error::format(format!(
                    "{} test images but {} labels",
                    test_x.len(),
                    test_y.len()
                )));
            }
            for i in test_indices(&test_y, &classes, d.test_per_class, self.seed) {
                samples.push(test_x[i].clone());
                labels.push(test_y[i]);
                splits.push(Split::Test);
            }
        }
        Dataset::new(samples, labels, splits)
    }
}

/// Test samples of `classes`, grouped by class in the order given. Classes with
/// more than `per_class` samples get a seeded draw kept in file order; 0 keeps all.
pub fn test_indices(labels: &[u32], classes: &[u32], per_class: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57);
    let mut out = Vec::new();
    for &c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if per_class > 0 && idx.len() > per_class {
            idx.shuffle(&mut rng);
            idx.truncate(per_class);
            idx.sort_unstable();
        }
        out.extend(idx);
    }
    out
}

/// IDX image file or `.ttn` container, detected from the first bytes.
pub fn load_images(path: &Path, reshape: &[usize]) -> Result<Vec<DenseTensor>> {
    let bytes = std::fs::read(path)?;
    if idx::has_magic(&bytes, idx::IMAGES_MAGIC) {
        return idx::images_from_bytes(&bytes, reshape);
    }
    let xs = ttn::decode(&bytes)?;
    if reshape.is_empty() {
        return Ok(xs);
    }
    xs.into_iter().map(|x| x.reshape(reshape.to_vec())).collect()
}

/// IDX label file or text with one integer per line.
pub fn load_labels(path: &Path) -> Result<Vec<u32>> {
    let bytes = std::fs::read(path)?;
    if idx::has_magic(&bytes, idx::LABELS_MAGIC) {
        return idx::labels_from_bytes(&bytes);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::format("label file is neither IDX nor text"))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.parse::<u32>()
                .map_err(|_| Error::format(format!("bad label line '{l}'")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            seed = 7
            [data]
            reshape = [28, 28]
            classes = [1, 2]
            [grid]
            c_values = [1.0, 10.0]
            rank_values = [2, [3, 4, 2], 1e-3]
            combine = "sum"
            per_mode = ["rbf", "linear", "poly:1:2"]
            validation = "kfold"
            k_folds = 4
            [solver]
            tol = 1e-4
        "#;
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.seed, 7);
        let g = cfg.grid_config().unwrap();
        assert_eq!(g.combine, Combine::Sum);
        assert_eq!(
            g.rank_values,
            vec![RankSetting::Uniform(2), RankSetting::Chain(vec![3, 4, 2]), RankSetting::Tolerance(1e-3)]
        );
        assert_eq!(g.validation, Validation::KFold { k: 4 });
        assert_eq!(g.per_mode[2], ModeKernel::Polynomial { c: 1.0, degree: 2 });
        assert_eq!(g.solver.tol, 1e-4);
    }

    #[test]
    fn rejects_unknown_keys_and_values() {
        assert!(matches!(RunConfig::from_toml("[grid]\nc_vals = [1.0]"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("seed = \"x\""), Err(Error::Config(_))));
        let cfg = RunConfig::from_toml("[grid]\ncombine = \"max\"").unwrap();
        assert!(matches!(cfg.grid_config(), Err(Error::Config(_))));
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
