use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ndarray::Axis;
use serde::Serialize;
use soilspec::dataset::{generate_synthetic, split_indices, Dataset, SplitSpec};
use soilspec::evaluation::{
    cv_table_csv, grid_search, importance_spectrum_export, importance_table_csv, predict_with, r_squared, rmse,
    run_experiment, seed_list, with_jobs, CvSetup, ExperimentConfig, GridSpec, DEFAULT_FOLDS, DEFAULT_HIST_BINS,
    DEFAULT_SEED_COUNT,
};
use soilspec::hyperparams::{HpValue, HyperparameterSet};
use soilspec::preprocess::{PreprocessMode, PreprocessOptions, PreprocessorState, DEFAULT_PCA_COMPONENTS};
use soilspec::regressors::Regressor;
use soilspec::rng::derive_seed;
use soilspec::{ModelKind, SavedModel};

use crate::config::{load_grid, FileConfig};
use crate::output::OutputSet;
use crate::{Cli, Command, EvaluateArgs, GridSearchArgs, ImportanceArgs, ModelArgs, SplitArgs, SynthArgs, TrainArgs};

const DEFAULT_SEED: u64 = 1;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::GridSearch(a) => grid(a),
        Command::Importance(a) => importance(a),
        Command::Synth(a) => synth(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn parse_hp(pairs: &[String]) -> Result<HyperparameterSet> {
    let mut hp = HyperparameterSet::new();
    for p in pairs {
        let (k, v) = p.split_once('=').ok_or_else(|| anyhow!("--hp expects KEY=VALUE, got `{p}`"))?;
        let key = k.trim();
        if key.is_empty() {
            bail!("--hp expects KEY=VALUE, got `{p}`");
        }
        hp.insert(key, HpValue::parse(v));
    }
    Ok(hp)
}

fn required(flag: Option<PathBuf>, file: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(file).ok_or_else(|| anyhow!("--{name} is required (flag or config file)"))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::load_csv(path).with_context(|| format!("cannot load dataset {}", path.display()))
}

/// Settings shared by `train` and `grid-search` after applying precedence.
struct Resolved {
    input: PathBuf,
    out: PathBuf,
    model: ModelKind,
    preprocess: PreprocessMode,
    hyperparameters: HyperparameterSet,
    n_components: usize,
    seed: u64,
    train_count: Option<usize>,
    test_count: Option<usize>,
    jobs: Option<usize>,
    cv_folds: usize,
}

fn resolve(
    io: &crate::IoArgs,
    model: &ModelArgs,
    split: &SplitArgs,
    cv_folds: Option<usize>,
    grid_model: Option<ModelKind>,
    file: &FileConfig,
) -> Result<Resolved> {
    let kind = model.model.or(file.model).or(grid_model).unwrap_or(ModelKind::Et);
    Ok(Resolved {
        input: required(io.input.clone(), file.input.clone(), "input")?,
        out: required(io.out.clone(), file.out.clone(), "out")?,
        model: kind,
        preprocess: model.preprocess.or(file.preprocess).unwrap_or(PreprocessMode::None),
        hyperparameters: file.hyperparameters.merged(&parse_hp(&model.hp)?),
        n_components: model.n_components.or(file.n_components).unwrap_or(DEFAULT_PCA_COMPONENTS),
        seed: split.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        train_count: split.train_count.or(file.train_count),
        test_count: split.test_count.or(file.test_count),
        jobs: split.jobs.or(file.jobs),
        cv_folds: cv_folds.or(file.cv_folds).unwrap_or(DEFAULT_FOLDS),
    })
}

fn train(a: TrainArgs) -> Result<()> {
    let file = FileConfig::load(a.io.config.as_deref())?;
    let grid = match (&a.grid, a.search) {
        (Some(p), _) => Some(load_grid(p)?),
        (None, true) => None,
        (None, false) => file.grid.clone(),
    };
    let r = resolve(&a.io, &a.model, &a.split, a.cv_folds, grid.as_ref().map(|g| g.model), &file)?;
    let grid = if a.search { Some(GridSpec::default_for(r.model)) } else { grid };
    let config = ExperimentConfig {
        model: r.model,
        hyperparameters: r.hyperparameters,
        grid,
        preprocess: r.preprocess,
        n_components: r.n_components,
        train_count: r.train_count,
        test_count: r.test_count,
        seeds: seed_list(r.seed, a.seeds.or(file.seeds).unwrap_or(DEFAULT_SEED_COUNT)),
        resplit_per_seed: if a.fixed_split { false } else { file.resplit_per_seed.unwrap_or(true) },
        cv_folds: r.cv_folds,
        hist_bins: a.hist_bins.or(file.hist_bins).unwrap_or(DEFAULT_HIST_BINS),
        jobs: r.jobs,
    };
    config.validate()?;
    let data = load_dataset(&r.input)?;
    let outcome = run_experiment(&config, &data)?;

    let mut out = OutputSet::default();
    for (name, contents) in outcome.report.files(data.band_axis())? {
        out.add(name, contents);
    }
    for art in &outcome.artifacts {
        out.add(format!("models/model_seed{}.json", art.seed), art.model.to_json()?);
        out.add(format!("models/preprocessor_seed{}.json", art.seed), art.preprocessor.to_json()?);
    }
    let n = out.len();
    out.commit(&r.out)?;
    let agg = &outcome.report.aggregate;
    println!(
        "{} ({}), {} seeds: test R2 {:.4} ± {:.4}, RMSE {:.4} ± {:.4}; {n} files in {}",
        config.model,
        config.preprocess,
        config.seeds.len(),
        agg.test_r2_mean,
        agg.test_r2_std,
        agg.test_rmse_mean,
        agg.test_rmse_std,
        r.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BestHyperparameters<'a> {
    model: ModelKind,
    preprocess: PreprocessMode,
    best_candidate: usize,
    hyperparameters: &'a HyperparameterSet,
    mean_r2: Option<f64>,
    mean_rmse: Option<f64>,
    folds: usize,
    fold_sizes: &'a [usize],
    seed: u64,
}

fn grid(a: GridSearchArgs) -> Result<()> {
    let file = FileConfig::load(a.io.config.as_deref())?;
    let spec = match &a.grid {
        Some(p) => Some(load_grid(p)?),
        None => file.grid.clone(),
    };
    let r = resolve(&a.io, &a.model, &a.split, a.cv_folds, spec.as_ref().map(|g| g.model), &file)?;
    let spec = spec.unwrap_or_else(|| GridSpec::default_for(r.model));
    if spec.model != r.model {
        bail!("grid is for model `{}` but --model is `{}`", spec.model, r.model);
    }
    spec.validate(&r.hyperparameters)?;
    let data = load_dataset(&r.input)?;
    // same split derivation as `train` uses for this seed
    let probe = ExperimentConfig { train_count: r.train_count, test_count: r.test_count, ..Default::default() };
    let (train_count, test_count) = probe.split_counts(data.len())?;
    let (train_idx, _) =
        split_indices(data.len(), &SplitSpec { train_count, test_count, seed: derive_seed(r.seed, "split") })?;
    let (x, y) = data.assemble_features()?;
    let (tx, ty) = (x.select(Axis(0), &train_idx), y.select(Axis(0), &train_idx));
    let setup = CvSetup {
        mode: r.preprocess,
        preprocess: PreprocessOptions { n_components: r.n_components, fit_on_all: false },
        folds: r.cv_folds,
        seed: derive_seed(r.seed, "cv"),
    };
    let result = with_jobs(r.jobs, || grid_search(tx.view(), ty.view(), &spec, &r.hyperparameters, &setup))??;
    let best = &result.table[result.best_candidate];
    let summary = BestHyperparameters {
        model: r.model,
        preprocess: r.preprocess,
        best_candidate: result.best_candidate,
        hyperparameters: &result.best,
        mean_r2: best.mean_r2,
        mean_rmse: best.mean_rmse,
        folds: result.fold_sizes.len(),
        fold_sizes: &result.fold_sizes,
        seed: r.seed,
    };
    let mut out = OutputSet::default();
    out.add("cv_table.csv", cv_table_csv(&result.table));
    out.add("best_hyperparameters.json", serde_json::to_string_pretty(&summary)?);
    out.commit(&r.out)?;
    println!(
        "best of {} candidates: #{} ({}) mean CV R2 {:.4}",
        result.table.len(),
        result.best_candidate,
        result.best.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "),
        best.mean_r2.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<SavedModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read model {}", path.display()))?;
    SavedModel::from_json(&text).with_context(|| format!("cannot parse model {}", path.display()))
}

fn importance(a: ImportanceArgs) -> Result<()> {
    let saved = load_model(&a.model_file)?;
    let imp = saved.model.feature_importance()?;
    let data = load_dataset(&a.input)?;
    let axis = data.band_axis();
    if imp.len() != axis.wavelengths().len() + 1 {
        bail!(
            "model has {} input features; importances map onto bands only for models trained without pca",
            imp.len()
        );
    }
    let (mean, std) = data.feature_mean_std()?;
    let mut out = OutputSet::default();
    out.add("importances.csv", importance_table_csv(&imp, axis)?);
    out.add("spectrum.csv", importance_spectrum_export(&imp, axis, &mean, &std)?);
    out.commit(&a.out)?;
    let peak = imp.iter().enumerate().fold(0, |b, (i, &v)| if v > imp[b] { i } else { b });
    match axis.wavelengths().get(peak) {
        Some(nm) => println!("peak importance at {nm} nm (feature {peak})"),
        None => println!("peak importance at LWIR (feature {peak})"),
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let file = FileConfig::load(a.config.as_deref())?;
    let mut cfg = file.synth.clone().unwrap_or_default();
    if let Some(n) = a.n {
        cfg.n_samples = n;
    }
    if let Some(v) = a.noise {
        cfg.noise = v;
    }
    if let Some(v) = a.target_noise {
        cfg.target_noise = v;
    }
    if let Some(v) = a.lwir_noise {
        cfg.lwir_noise = v;
    }
    let out_dir = required(a.out, file.out, "out")?;
    let seed = a.seed.or(file.seed).unwrap_or(DEFAULT_SEED);
    if Path::new(&a.file_name).components().count() != 1 {
        bail!("--file-name must be a plain file name, got `{}`", a.file_name);
    }
    let data = generate_synthetic(&cfg, seed)?;
    let mut out = OutputSet::default();
    out.add(&a.file_name, data.to_csv_string()?);
    out.commit(&out_dir)?;
    println!("wrote {} samples to {}", data.len(), out_dir.join(&a.file_name).display());
    Ok(())
}

#[derive(Serialize)]
struct EvaluationMetrics {
    model: ModelKind,
    preprocess: PreprocessMode,
    n: usize,
    r_squared: f64,
    rmse_pct: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmse_scaled: Option<f64>,
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let saved = load_model(&a.model_file)?;
    let text = std::fs::read_to_string(&a.preprocessor)
        .with_context(|| format!("cannot read preprocessor {}", a.preprocessor.display()))?;
    let state = PreprocessorState::from_json(&text)
        .with_context(|| format!("cannot parse preprocessor {}", a.preprocessor.display()))?;
    let data = load_dataset(&a.input)?;
    let (x, y) = data.assemble_features()?;
    let z = state.transform_features(x.view()).context("preprocessor does not match the data")?;
    if z.ncols() != saved.model.input_width() {
        bail!("model expects {} features but the preprocessed data has {}", saved.model.input_width(), z.ncols());
    }
    let pred = predict_with(&saved.model, &state, x.view())?;
    let rmse_scaled = match state.mode() {
        PreprocessMode::Scaling => {
            let scaled = saved.model.predict(z.view())?;
            Some(rmse(state.transform_targets(y.view()).view(), scaled.view())?)
        }
        _ => None,
    };
    let metrics = EvaluationMetrics {
        model: saved.model.kind(),
        preprocess: state.mode(),
        n: y.len(),
        r_squared: r_squared(y.view(), pred.view())?,
        rmse_pct: rmse(y.view(), pred.view())?,
        rmse_scaled,
    };
    let mut out = OutputSet::default();
    out.add("metrics.json", serde_json::to_string_pretty(&metrics)?);
    out.commit(&a.out)?;
    println!("R2 {:.4}, RMSE {:.4} on {} rows", metrics.r_squared, metrics.rmse_pct, metrics.n);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hp_pairs_parse() {
        let hp = parse_hp(&["n_estimators=200".into(), "weights=uniform".into(), "hidden_layers=[8;4]".into()]).unwrap();
        assert_eq!(hp.get("n_estimators"), Some(&HpValue::Number(200.0)));
        assert_eq!(hp.get("weights"), Some(&HpValue::Text("uniform".into())));
        assert!(matches!(hp.get("hidden_layers"), Some(HpValue::List(v)) if v.len() == 2));
        assert!(parse_hp(&["novalue".into()]).is_err());
        assert!(parse_hp(&["=3".into()]).is_err());
    }
}
