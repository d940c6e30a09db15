use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use ksttm::bench::{self, BenchConfig};
use ksttm::io::config::{load_images, load_labels, test_indices};
use ksttm::io::fmt::{csv_row, g17, to_json};
use ksttm::io::{idx, ttn};
use ksttm::kernel::{build_gram, BaseKernel, Combine, KernelSpec};
use ksttm::pipeline::{
    evaluate_predictions, rank_sweep as sweep, train_binary_report, train_multiclass_ovo, Classifier, Dataset,
    ModeKernel, OvoModel, RankSetting, Split, SvmModel,
};
use ksttm::tensor::DenseTensor;
use ksttm::tt::{reconstruct, stack_and_decompose, tt_svd as decompose, TtSvdConfig};
use ksttm::{load_model, save_model, Error, ModelMeta, Result, RunConfig};

use crate::{
    BenchArgs, EvaluateArgs, GramArgs, GridCmdArgs, InputArgs, PredictArgs, RankSweepArgs, TrainArgs, TtSvdArgs,
};

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{}: no such file", path.display()),
        )))
    }
}

fn is_idx_images(path: &Path) -> Result<bool> {
    let mut head = [0u8; 4];
    let mut f = std::fs::File::open(path)?;
    let n = std::io::Read::read(&mut f, &mut head)?;
    Ok(n == 4 && idx::has_magic(&head, idx::IMAGES_MAGIC))
}

/// IDX files default to their stored image dims.
fn read_samples(input: &InputArgs) -> Result<Vec<DenseTensor>> {
    require(&input.input)?;
    let reshape = match &input.reshape {
        Some(r) => r.clone(),
        None if is_idx_images(&input.input)? => {
            let bytes = std::fs::read(&input.input)?;
            idx::parse_idx(&bytes)?.dims[1..].to_vec()
        }
        None => Vec::new(),
    };
    let mut xs = load_images(&input.input, &reshape)?;
    if let Some(n) = input.limit {
        xs.truncate(n);
    }
    if xs.is_empty() {
        return Err(Error::Argument(format!("{} holds no samples", input.input.display())));
    }
    Ok(xs)
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", to_json(value)?)?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)? + "\n")?;
    Ok(())
}

fn rank_config(eps: Option<f64>, ranks: &Option<Vec<usize>>, order: usize) -> Result<TtSvdConfig> {
    let cfg = match (eps, ranks) {
        (Some(e), Some(r)) => TtSvdConfig::rel_tolerance(e).with_max_ranks(r.clone()),
        (Some(e), None) => TtSvdConfig::rel_tolerance(e),
        (None, Some(r)) => TtSvdConfig::fixed_ranks(r.clone()),
        (None, None) => return Err(Error::Argument("give --eps, --ranks, or both".into())),
    };
    cfg.validate(order)?;
    Ok(cfg)
}

fn rel_err(x: &DenseTensor, y: &DenseTensor) -> f64 {
    let d: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    d.sqrt() / x.frobenius_norm().max(f64::MIN_POSITIVE)
}

pub fn tt_svd(a: TtSvdArgs) -> Result<()> {
    let xs = read_samples(&a.input)?;
    let cfg = rank_config(a.eps, &a.ranks, xs[0].order())?;
    let tts = if a.stacked {
        stack_and_decompose(&xs, &cfg)?
    } else {
        xs.iter().map(|x| decompose(x, &cfg)).collect::<Result<Vec<_>>>()?
    };
    let recon: Vec<DenseTensor> = tts.iter().map(reconstruct).collect();
    let samples: Vec<Value> = xs
        .iter()
        .zip(&tts)
        .zip(&recon)
        .enumerate()
        .map(|(i, ((x, tt), r))| {
            json!({
                "index": i,
                "dims": x.dims(),
                "ranks": tt.ranks(),
                "params": tt.num_params(),
                "rel_error": rel_err(x, r),
            })
        })
        .collect();
    if let Some(out) = &a.output {
        ttn::write_ttn(out, &recon)?;
    }
    print_json(&json!({
        "command": "tt-svd",
        "seed": a.seed,
        "input": a.input.input,
        "mode": if a.stacked { "stacked" } else { "per-sample" },
        "eps": a.eps,
        "samples": samples,
    }))
}

fn parse_kinds(kinds: &[String], sigma: f64, order: usize) -> Result<Vec<BaseKernel>> {
    let parsed = kinds
        .iter()
        .map(|k| k.parse::<ModeKernel>().map(|m| m.with_sigma(sigma)))
        .collect::<Result<Vec<_>>>()?;
    if parsed.len() == 1 {
        return Ok(vec![parsed[0]; order]);
    }
    Ok(parsed)
}

fn spec_from(kernel: &str, per_mode: &Option<Vec<String>>, sigma: f64, combine: &str, order: usize) -> Result<KernelSpec> {
    let kinds = match per_mode {
        Some(p) => p.clone(),
        None => vec![kernel.to_string()],
    };
    let combine: Combine = combine.parse()?;
    KernelSpec::new(parse_kinds(&kinds, sigma, order)?, combine)
}

pub fn gram(a: GramArgs) -> Result<()> {
    let xs = read_samples(&a.input)?;
    let order = xs[0].order();
    let cfg = rank_config(a.eps, &a.ranks, order)?;
    let spec = spec_from(&a.kernel, &a.per_mode, a.sigma, &a.combine, order)?;
    let tts = stack_and_decompose(&xs, &cfg)?;
    let g = build_gram(&tts, &spec)?;
    let mut csv = String::new();
    for i in 0..g.len() {
        let row: Vec<f64> = g.values.row(i).iter().copied().collect();
        csv.push_str(&csv_row(&row));
        csv.push('\n');
    }
    let (lo, hi) = g.eigen_extremes();
    let sidecar = json!({
        "command": "gram",
        "seed": a.seed,
        "input": a.input.input,
        "samples": g.len(),
        "spec": spec,
        "ranks": tts[0].ranks(),
        "min_eigenvalue": lo,
        "max_eigenvalue": hi,
    });
    match &a.output {
        Some(p) => {
            std::fs::write(p, &csv)?;
            let side = a.sidecar.clone().unwrap_or_else(|| {
                let mut s = p.as_os_str().to_owned();
                s.push(".json");
                PathBuf::from(s)
            });
            write_json(&side, &sidecar)?;
        }
        None => {
            std::io::stdout().lock().write_all(csv.as_bytes())?;
            if let Some(side) = &a.sidecar {
                write_json(side, &sidecar)?;
            }
        }
    }
    Ok(())
}

/// Config file plus flag overrides.
fn run_config(
    config: &crate::args::ConfigArgs,
    data: &crate::args::DataArgs,
    grid: Option<&crate::args::GridArgs>,
) -> Result<RunConfig> {
    let mut cfg = config.load()?;
    data.apply(&mut cfg);
    if let Some(g) = grid {
        g.apply(&mut cfg);
    }
    for p in [&cfg.data.train_images, &cfg.data.train_labels, &cfg.data.test_images, &cfg.data.test_labels]
        .into_iter()
        .flatten()
    {
        require(p)?;
    }
    Ok(cfg)
}

fn input_scale(cfg: &RunConfig) -> Result<f64> {
    match &cfg.data.train_images {
        Some(p) if is_idx_images(p)? => Ok(1.0 / 255.0),
        _ => Ok(1.0),
    }
}

fn has_test(ds: &Dataset) -> bool {
    ds.splits().contains(&Split::Test)
}

fn test_samples(ds: &Dataset) -> (Vec<DenseTensor>, Vec<u32>) {
    let (xs, ys) = ds.split(Split::Test);
    (xs.into_iter().cloned().collect(), ys)
}

fn solution_json(m: &SvmModel) -> Value {
    match &m.solution {
        Some(s) => json!({
            "classes": m.classes,
            "alphas": s.alphas,
            "bias": s.bias,
            "objective": s.objective,
            "iterations": s.iterations,
            "converged": s.converged,
        }),
        None => json!({ "classes": m.classes, "solution": null }),
    }
}

fn pair_json(m: &SvmModel) -> Value {
    json!({
        "classes": m.classes,
        "c": m.point.c,
        "sigma": m.point.sigma,
        "rank": m.point.rank,
        "ranks": m.point.ranks,
        "validation_accuracy": m.validation_accuracy,
        "support_vectors": m.support.len(),
    })
}

pub fn train(a: TrainArgs) -> Result<()> {
    let cfg = run_config(&a.config, &a.data, Some(&a.grid))?;
    let grid = cfg.grid_config()?;
    let ds = cfg.load_dataset()?;
    let model = train_multiclass_ovo(&ds, &grid)?;
    let meta = ModelMeta {
        input_scale: input_scale(&cfg)?,
        seed: Some(cfg.seed),
    };
    save_model(&a.output, &model, &meta)?;
    if let Some(p) = &a.dump_solution {
        let pairs: Vec<Value> = model.pairs.iter().map(solution_json).collect();
        write_json(p, &json!({ "seed": cfg.seed, "pairs": pairs }))?;
    }
    let test = if has_test(&ds) {
        let (xs, ys) = test_samples(&ds);
        Some(evaluate_predictions(&model.predict(&xs)?, &ys)?)
    } else {
        None
    };
    print_json(&json!({
        "command": "train",
        "seed": cfg.seed,
        "model": a.output,
        "classes": model.classes,
        "pairs": model.pairs.iter().map(pair_json).collect::<Vec<_>>(),
        "test": test,
    }))
}

fn model_reshape(model: &OvoModel, input: &InputArgs) -> InputArgs {
    InputArgs {
        input: input.input.clone(),
        reshape: input
            .reshape
            .clone()
            .or_else(|| model.pairs.first().map(|m| m.dims().to_vec())),
        limit: input.limit,
    }
}

fn check_scale(path: &Path, meta: &ModelMeta) -> Result<()> {
    let file_scale = if is_idx_images(path)? { 1.0 / 255.0 } else { 1.0 };
    if file_scale != meta.input_scale {
        log::warn!(
            "model was trained with input scale {}, {} is read with scale {}",
            g17(meta.input_scale),
            path.display(),
            g17(file_scale)
        );
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> Result<()> {
    require(&a.model)?;
    let (model, meta) = load_model(&a.model)?;
    let input = model_reshape(&model, &a.input);
    let xs = read_samples(&input)?;
    check_scale(&input.input, &meta)?;
    let decisions = model.pair_decisions(&xs)?;
    let labels = model.vote(&decisions, xs.len());
    if let Some(p) = &a.output {
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        std::fs::write(p, text)?;
    }
    let mut out = json!({
        "command": "predict",
        "seed": a.seed,
        "model_seed": meta.seed,
        "classes": model.classes,
        "labels": labels,
    });
    if a.decisions {
        out["pairs"] = json!(model.pairs.iter().map(|m| m.classes).collect::<Vec<_>>());
        out["decisions"] = json!(decisions);
    }
    print_json(&out)
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    require(&a.model)?;
    let (model, meta) = load_model(&a.model)?;
    let cfg = run_config(&a.config, &a.data, None)?;
    let images = a
        .images
        .clone()
        .or(cfg.data.test_images.clone())
        .ok_or_else(|| Error::Config("no images: pass --images or configure test_images".into()))?;
    let labels = a
        .labels
        .clone()
        .or(cfg.data.test_labels.clone())
        .ok_or_else(|| Error::Config("no labels: pass --labels or configure test_labels".into()))?;
    require(&labels)?;
    let input = model_reshape(
        &model,
        &InputArgs {
            input: images.clone(),
            reshape: a.data.reshape.clone(),
            limit: None,
        },
    );
    let xs = read_samples(&input)?;
    check_scale(&images, &meta)?;
    let ys = load_labels(&labels)?;
    if ys.len() != xs.len() {
        return Err(Error::Format(format!("{} images but {} labels", xs.len(), ys.len())));
    }
    let classes = if cfg.data.classes.is_empty() {
        model.classes.clone()
    } else {
        cfg.data.classes.clone()
    };
    // Same seeded draw as the test split `train` reports on.
    let seed = a.config.seed.or(meta.seed).unwrap_or(cfg.seed);
    let keep = test_indices(&ys, &classes, cfg.data.test_per_class, seed);
    let xs: Vec<DenseTensor> = keep.iter().map(|&i| xs[i].clone()).collect();
    let ys: Vec<u32> = keep.iter().map(|&i| ys[i]).collect();
    let metrics = evaluate_predictions(&model.predict(&xs)?, &ys)?;
    if let Some(p) = &a.csv {
        let mut text = String::from("true\\predicted");
        for c in &metrics.classes {
            text.push_str(&format!(",{c}"));
        }
        text.push('\n');
        for (c, row) in metrics.classes.iter().zip(&metrics.confusion) {
            text.push_str(&c.to_string());
            for v in row {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        std::fs::write(p, text)?;
    }
    print_json(&json!({
        "command": "evaluate",
        "seed": seed,
        "model_seed": meta.seed,
        "metrics": metrics,
    }))
}

fn binary_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let ds = cfg.load_dataset()?;
    let classes = ds.classes();
    if classes.len() != 2 {
        return Err(Error::Config(format!(
            "this command is binary; select two classes with --pair (found {classes:?})"
        )));
    }
    Ok(ds)
}

pub fn grid(a: GridCmdArgs) -> Result<()> {
    let cfg = run_config(&a.config, &a.data, Some(&a.grid))?;
    let grid = cfg.grid_config()?;
    let ds = binary_dataset(&cfg)?;
    let (model, entries) = train_binary_report(&ds, &grid)?;
    let test = if has_test(&ds) {
        let (xs, ys) = test_samples(&ds);
        Some(evaluate_predictions(&model.predict(&xs)?, &ys)?)
    } else {
        None
    };
    if let Some(p) = &a.csv {
        let mut text = String::from("seed,rank,ranks,c,sigma,validation_accuracy,converged\n");
        for e in &entries {
            let ranks: Vec<String> = e.point.ranks.iter().map(|r| r.to_string()).collect();
            text.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                cfg.seed,
                e.point.rank.label(),
                ranks.join("-"),
                g17(e.point.c),
                g17(e.point.sigma),
                g17(e.validation_accuracy),
                e.converged
            ));
        }
        std::fs::write(p, text)?;
    }
    if let Some(p) = &a.output {
        let ovo = OvoModel {
            classes: model.classes.to_vec(),
            pairs: vec![model.clone()],
        };
        let meta = ModelMeta {
            input_scale: input_scale(&cfg)?,
            seed: Some(cfg.seed),
        };
        save_model(p, &ovo, &meta)?;
    }
    if let Some(p) = &a.dump_solution {
        write_json(p, &json!({ "seed": cfg.seed, "pairs": [solution_json(&model)] }))?;
    }
    print_json(&json!({
        "command": "grid",
        "seed": cfg.seed,
        "classes": model.classes,
        "winner": {
            "c": model.point.c,
            "sigma": model.point.sigma,
            "rank": model.point.rank,
            "ranks": model.point.ranks,
        },
        "validation_accuracy": model.validation_accuracy,
        "test_accuracy": test.as_ref().map(|m| m.accuracy),
        "test": test,
        "grid_points": entries.len(),
    }))
}

pub fn rank_sweep(a: RankSweepArgs) -> Result<()> {
    let cfg = run_config(&a.config, &a.data, Some(&a.grid))?;
    let grid = cfg.grid_config()?;
    let ds = binary_dataset(&cfg)?;
    if !has_test(&ds) {
        return Err(Error::Config("rank sweep needs test data".into()));
    }
    let ranks: Vec<RankSetting> = a.ranks.iter().copied().map(RankSetting::Uniform).collect();
    let rows = sweep(&ds, &grid, &ranks)?;
    let mut text = String::from("seed,rank,ranks,c,sigma,validation_accuracy,test_accuracy\n");
    for r in &rows {
        let granted: Vec<String> = r.ranks.iter().map(|x| x.to_string()).collect();
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cfg.seed,
            r.rank.label(),
            granted.join("-"),
            g17(r.c),
            g17(r.sigma),
            g17(r.validation_accuracy),
            g17(r.test_accuracy)
        ));
    }
    match &a.output {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let kernel = a.kernel.parse::<ModeKernel>()?.with_sigma(a.sigma);
    let combine: Combine = a.combine.parse()?;
    let mut rows = Vec::new();
    for &order in &a.orders {
        for &rank in &a.ranks {
            let cfg = BenchConfig {
                order,
                dim: a.dims,
                rank,
                pairs: a.pairs,
                kernel,
                combine,
                seed: a.seed,
                fast_only: a.fast_only,
            };
            let (report, note) = match bench::run(&cfg) {
                Err(Error::Capacity(msg)) => (
                    bench::run(&BenchConfig {
                        fast_only: true,
                        ..cfg.clone()
                    })?,
                    Some(msg),
                ),
                other => (other?, None),
            };
            rows.push(json!({
                "order": order,
                "dim": a.dims,
                "rank": rank,
                "pairs": a.pairs,
                "fast_seconds": report.fast_seconds,
                "naive_seconds": report.naive_seconds,
                "speedup": report.speedup(),
                "max_rel_diff": report.max_rel_diff,
                "naive_skipped": note,
            }));
        }
    }
    print_json(&json!({
        "command": "bench",
        "seed": a.seed,
        "kernel": kernel,
        "combine": combine,
        "rows": rows,
    }))
}
