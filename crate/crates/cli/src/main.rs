use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use spdnet_geo::align::AlignerModel;
use spdnet_geo::classify::Classifier;
use spdnet_geo::data::{load_epochs, save_covariances, synth_generate, CovarianceSet, SynthConfig};
use spdnet_geo::harness::{emit_table, gradcheck_suite, parse_table_csv, run_loso, DataSource, LosoReport, RunConfig};

const SEED_ENV: &str = "SPDNET_GEO_SEED";

#[derive(Parser)]
#[command(name = "spdnet-geo", version, about = "SPD covariance alignment and classification pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Low,
    High,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-subject covariance dataset.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "low")]
        preset: Preset,
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Trials per class and subject.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        rotation: Option<f64>,
        #[arg(long)]
        dispersion: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Estimate trace-normalized covariances from an epoch file.
    Cov {
        #[arg(long)]
        epochs: PathBuf,
        #[arg(long)]
        shrinkage: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit the configured alignment stages on a dataset and write the aligned covariances.
    Align {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
        /// Directory for the fitted stage files.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Fit a full pipeline and save it to a directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Apply a saved pipeline; prints accuracy and writes predictions.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Leave-one-subject-out evaluation.
    Loso {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
    /// Finite-difference check of every differentiable operation and loss.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        instances: usize,
    },
    /// Merge LOSO reports and CSV tables into one comparison table.
    Table {
        /// `report.json` or table CSV files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Writes `<prefix>.txt` and `<prefix>.csv`.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

/// Flag, then config, then the environment, then 0.
fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{SEED_ENV}={v} is not an integer")),
        Err(_) => Ok(0),
    }
}

fn load_run(config: &Path, data: Option<&Path>, seed: Option<u64>) -> Result<(RunConfig, CovarianceSet)> {
    let mut cfg = RunConfig::load(config).with_context(|| format!("reading {}", config.display()))?;
    cfg.seed = Some(resolve_seed(seed, cfg.seed)?);
    if let Some(p) = data {
        cfg.data = Some(DataSource::from_path(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let Some(src) = &cfg.data else {
        bail!("no dataset: pass --data or set `data` in the config");
    };
    let ds = src.load().context("loading dataset")?;
    Ok((cfg, ds))
}

fn load_any(path: &Path) -> Result<CovarianceSet> {
    DataSource::from_path(path)?
        .load()
        .with_context(|| format!("loading {}", path.display()))
}

/// Fits each alignment stage on the (transformed) dataset in turn.
fn fit_stages(cfg: &RunConfig, ds: &CovarianceSet) -> Result<(Vec<AlignerModel>, CovarianceSet)> {
    let mut cur = ds.clone();
    let mut models = Vec::new();
    for step in cfg.effective_align() {
        let fit = step.fit(&cur, cfg.seed)?;
        if let (Some(a), Some(b)) = (fit.initial_loss, fit.final_loss) {
            info!("{}: loss {a:.6} -> {b:.6}", step.name());
        }
        cur = fit.model.apply(&cur)?;
        models.push(fit.model);
    }
    Ok((models, cur))
}

fn save_stages(dir: &Path, models: &[AlignerModel]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, m) in models.iter().enumerate() {
        m.save(dir.join(format!("align_{i}_{}.algn", m.kind())))?;
    }
    Ok(())
}

fn load_stages(dir: &Path) -> Result<Vec<AlignerModel>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "algn"))
        .collect();
    paths.sort_by_key(|p| {
        p.file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.split('_').nth(1))
            .and_then(|i| i.parse::<usize>().ok())
            .unwrap_or(usize::MAX)
    });
    paths
        .iter()
        .map(|p| AlignerModel::load(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn table_inputs(inputs: &[PathBuf]) -> Result<Vec<spdnet_geo::harness::TableColumn>> {
    let mut cols = Vec::new();
    for p in inputs {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        if text.trim_start().starts_with('{') {
            cols.push(LosoReport::from_json(&text)?.column());
        } else {
            cols.extend(parse_table_csv(&text).with_context(|| format!("parsing {}", p.display()))?);
        }
    }
    Ok(cols)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth {
            seed,
            preset,
            subjects,
            classes,
            dim,
            trials,
            rotation,
            dispersion,
            noise,
            out,
        } => {
            let seed = resolve_seed(seed, None)?;
            let mut cfg = match preset {
                Preset::Low => SynthConfig::low_distortion(seed),
                Preset::High => SynthConfig::high_distortion(seed),
            };
            cfg.n_subjects = subjects.unwrap_or(cfg.n_subjects);
            cfg.n_classes = classes.unwrap_or(cfg.n_classes);
            cfg.dim = dim.unwrap_or(cfg.dim);
            cfg.trials_per_class = trials.unwrap_or(cfg.trials_per_class);
            cfg.rotation_scale = rotation.unwrap_or(cfg.rotation_scale);
            cfg.dispersion_range = dispersion.unwrap_or(cfg.dispersion_range);
            cfg.noise = noise.unwrap_or(cfg.noise);
            let ds = synth_generate(&cfg)?;
            save_covariances(&ds, &out)?;
            println!("wrote {} covariances (dim {}) to {}", ds.len(), ds.dim(), out.display());
        }
        Command::Cov { epochs, shrinkage, out } => {
            let ds = load_epochs(&epochs)?.covariances(shrinkage)?;
            save_covariances(&ds, &out)?;
            println!("wrote {} covariances (dim {}) to {}", ds.len(), ds.dim(), out.display());
        }
        Command::Align {
            config,
            data,
            seed,
            out,
            models,
        } => {
            let (cfg, ds) = load_run(&config, data.as_deref(), seed)?;
            let (fitted, aligned) = fit_stages(&cfg, &ds)?;
            save_covariances(&aligned, &out)?;
            if let Some(dir) = models {
                save_stages(&dir, &fitted)?;
            }
            println!("aligned {} covariances with {} stage(s)", aligned.len(), fitted.len());
        }
        Command::Train { config, data, seed, out } => {
            let (cfg, ds) = load_run(&config, data.as_deref(), seed)?;
            let (fitted, aligned) = fit_stages(&cfg, &ds)?;
            let fit = cfg.effective_classifier().fit(&aligned, cfg.seed)?;
            save_stages(&out, &fitted)?;
            fit.model.save(out.join("classifier.clsf"))?;
            fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
            let pred = fit.model.predict(&aligned)?;
            let correct = pred.labels.iter().zip(aligned.labels()).filter(|(p, t)| **p == *t).count();
            println!(
                "trained {} on {} items; training accuracy {:.2}%",
                cfg.label(),
                aligned.len(),
                100.0 * correct as f64 / aligned.len() as f64
            );
        }
        Command::Eval { model, data, out } => {
            let mut stages = load_stages(&model)?;
            let clf = Classifier::load(model.join("classifier.clsf"))?;
            let mut ds = load_any(&data)?;
            for st in &mut stages {
                st.fit_unseen(&ds)?;
                ds = st.apply(&ds)?;
            }
            let pred = clf.predict(&ds)?;
            let truth = ds.labels();
            let correct = pred.labels.iter().zip(&truth).filter(|(p, t)| p == t).count();
            println!("accuracy {:.2}% ({correct}/{})", 100.0 * correct as f64 / truth.len() as f64, truth.len());
            if let Some(path) = out {
                let mut csv = String::from("index,subject,label,predicted\n");
                for (i, (it, p)) in ds.items().iter().zip(&pred.labels).enumerate() {
                    csv.push_str(&format!("{i},{},{},{p}\n", it.subject, it.label));
                }
                fs::write(path, csv)?;
            }
        }
        Command::Loso {
            config,
            data,
            seed,
            out,
            jobs,
        } => {
            let (mut cfg, ds) = load_run(&config, data.as_deref(), seed)?;
            if let Some(o) = out {
                cfg.out_dir = Some(o);
            }
            let res = run_loso(&cfg, &ds, jobs as usize)?;
            if let Some(dir) = &cfg.out_dir {
                res.write_to(dir)?;
            }
            let col = res.report.column();
            if !col.rows.is_empty() {
                print!("{}", emit_table(&[col])?.0);
            }
            if res.failed() {
                eprintln!("failed folds: {:?}", res.report.failed);
                return Ok(ExitCode::from(1));
            }
        }
        Command::Gradcheck { seed, instances } => {
            let rep = gradcheck_suite(seed, instances)?;
            for e in &rep.entries {
                let flag = if e.worst_rel_err < rep.tolerance { "ok" } else { "FAIL" };
                println!("{:<32} {:>10.3e}  {flag}", e.name, e.worst_rel_err);
            }
            if !rep.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Table { inputs, out } => {
            let (text, csv) = emit_table(&table_inputs(&inputs)?)?;
            print!("{text}");
            if let Some(prefix) = out {
                fs::write(prefix.with_extension("txt"), &text)?;
                fs::write(prefix.with_extension("csv"), &csv)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
