//! Command-line front end: `tune`, `generate` and `stats`.
//!
//! Every artifact goes under the output directory. Failures print one JSON
//! error record to stderr and exit nonzero.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ExperimentConfig, TargetSpec};
use crate::dataset::{load_dataset, resolve, Dataset, DatasetItem};
use crate::error::{Error, Result};
use crate::priors::{uniform_prior, JointPrior};
use crate::scene::{write_layout, ObjectClass};
use crate::seed::{derive_seed, stream};
use crate::stats::{class_pixel_proportions, histogram_kl, intensity_histogram, DEFAULT_HISTOGRAM_BINS};
use crate::tuning::{self, TuningReport};

pub const THREADS_ENV: &str = "ADVTUNE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "advtune", version, about = "Adversarial tuning of scene-generator priors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the tuning loop and write the report, trajectories and tables.
    Tune(TuneArgs),
    /// Sample and render a dataset from a prior.
    Generate(GenerateArgs),
    /// Compare the intensity histograms and class proportions of two datasets.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Prior JSON as written by `tune` (final_prior.json). Uniform if absent.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_HISTOGRAM_BINS)]
    pub bins: usize,
    /// Histogram bins for B; defaults to `--bins`. Must match to compare.
    #[arg(long)]
    pub bins_b: Option<usize>,
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<&'a Path>,
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a ExperimentConfig,
    report: &'a TuningReport,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => 0,
        Err(e) => {
            let record = ErrorRecord {
                error: e.kind(),
                message: e.to_string(),
                path: e.path(),
            };
            eprintln!("{}", serde_json::to_string(&record).unwrap_or_else(|_| e.to_string()));
            1
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    // A second call in the same process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tune(a) => cmd_tune(&a),
        Command::Generate(a) => cmd_generate(&a),
        Command::Stats(a) => cmd_stats(&a),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Loads the config, applies the seed override and pins relative paths so
/// the echoed copy reproduces the run from anywhere. `--out` is not echoed:
/// it does not affect results and would make reports differ by location.
fn effective_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let TargetSpec::Directory { path: target } = &mut cfg.target {
        let base = path.parent().unwrap_or(Path::new(""));
        let joined = resolve(base, target);
        *target = std::path::absolute(&joined).map_err(|e| Error::io(&joined, e))?;
    }
    Ok(cfg)
}

fn cmd_tune(args: &TuneArgs) -> Result<()> {
    let cfg = effective_config(&args.config, args.seed)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let target = cfg.build_target(Path::new(""))?;
    let report = tuning::run(&cfg.tuning_config(), &target)?;

    create_dir(&out.join("tables"))?;
    let doc = serde_json::to_string_pretty(&RunReport {
        config: &cfg,
        report: &report,
    })?;
    write_file(&out.join("report.json"), doc.as_bytes())?;
    write_file(&out.join("effective_config.json"), cfg.to_json()?.as_bytes())?;
    write_file(&out.join("final_prior.json"), report.final_prior.to_json()?.as_bytes())?;
    if let Some(q) = &target.known_prior {
        write_file(&out.join("target_prior.json"), q.to_json()?.as_bytes())?;
    }
    write_file(&out.join("trajectory.csv"), trajectory_csv(&report).as_bytes())?;
    if let Some(kl) = kl_csv(&report) {
        write_file(&out.join("kl_to_target.csv"), kl.as_bytes())?;
    }
    let mut prior = uniform_prior(&cfg.space());
    for record in &report.iterations {
        let path = out.join("tables").join(format!("iteration_{:03}.csv", record.iteration));
        write_file(&path, iteration_table_csv(&prior, record).as_bytes())?;
        if record.applied {
            prior = JointPrior::from_tables(prior.space.clone(), record.posterior.clone())?;
        }
    }
    let mut timings = String::from("iteration,seconds\n");
    for r in &report.iterations {
        timings.push_str(&format!("{},{}\n", r.iteration, r.elapsed.as_secs_f64()));
    }
    write_file(&out.join("timings.csv"), timings.as_bytes())?;

    let last_acc = report.iterations.last().map(|r| r.held_out_accuracy);
    println!(
        "{} iteration(s), stop: {:?}, last held-out accuracy: {}",
        report.iterations.len(),
        report.stop_reason,
        last_acc.map_or("n/a".into(), |a| format!("{a:.3}"))
    );
    if let (Some(before), Some(after)) = (&report.initial_kl_to_target, report.iterations.last().and_then(|r| r.kl_to_target.as_ref())) {
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        println!("summed KL(P || Q): {:.4} -> {:.4}", sum(before), sum(after));
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn trajectory_csv(report: &TuningReport) -> String {
    let mut s = String::from("iteration,held_out_accuracy,epochs_run,final_train_loss,mean_generated_score,applied\n");
    for r in &report.iterations {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration, r.held_out_accuracy, r.epochs_run, r.final_train_loss, r.mean_generated_score, r.applied
        ));
    }
    s
}

/// Step 0 is the uniform prior; step i is the prior after iteration i - 1.
fn kl_csv(report: &TuningReport) -> Option<String> {
    let initial = report.initial_kl_to_target.as_ref()?;
    let names: Vec<&str> = report.final_prior.space.dims.iter().map(|d| d.name.as_str()).collect();
    let mut s = format!("step,{}\n", names.join(","));
    let mut row = |step: usize, kl: &[f64]| {
        let cols: Vec<String> = kl.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!("{step},{}\n", cols.join(",")));
    };
    row(0, initial);
    for (i, r) in report.iterations.iter().enumerate() {
        if let Some(kl) = &r.kl_to_target {
            row(i + 1, kl);
        }
    }
    Some(s)
}

fn iteration_table_csv(prior: &JointPrior, record: &tuning::IterationRecord) -> String {
    let mut s = String::from("dimension,bin,lower,upper,prior,likelihood,posterior\n");
    for (d, dim) in prior.space.dims.iter().enumerate() {
        for bin in 0..dim.bins {
            let (lo, hi) = dim.bin_bounds(bin);
            s.push_str(&format!(
                "{},{bin},{lo},{hi},{},{},{}\n",
                dim.name, prior.tables[d].values[bin], record.likelihood[d][bin], record.posterior[d][bin]
            ));
        }
    }
    s
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let cfg = effective_config(&args.config, args.seed)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let prior = match &args.prior {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let prior = JointPrior::from_json(&text).map_err(|e| Error::format(path, e.to_string()))?;
            prior.space.validate_scene()?;
            prior
        }
        None => uniform_prior(&cfg.space()),
    };
    let seed = derive_seed(cfg.seed, stream::EVALUATION, 0);
    let samples = cfg.generator.sample_batch(&prior, seed, stream::GENERATED, args.count)?;

    let layouts = out.join("layouts");
    create_dir(&layouts)?;
    for (i, s) in samples.iter().enumerate() {
        let path = layouts.join(format!("{i:05}.txt"));
        let mut buf = Vec::new();
        write_layout(&mut buf, &s.layout, &cfg.generator.region, derive_seed(seed, stream::GENERATED, i as u64))
            .map_err(|e| Error::io(&path, e))?;
        write_file(&path, &buf)?;
    }
    let names: Vec<String> = prior.space.dims.iter().map(|d| d.name.clone()).collect();
    let dataset = Dataset {
        items: samples
            .into_iter()
            .map(|s| DatasetItem {
                features: s.features,
                labels: Some(s.labels),
                theta: Some(s.theta),
            })
            .collect(),
    };
    crate::dataset::write_dataset(&out, &dataset, &names)?;
    write_file(&out.join("prior.json"), prior.to_json()?.as_bytes())?;
    println!("wrote {} sample(s) to {}", dataset.len(), out.display());
    Ok(())
}

fn cmd_stats(args: &StatsArgs) -> Result<()> {
    let a = load_dataset(&args.a)?;
    let b = load_dataset(&args.b)?;
    let ha = intensity_histogram(&a.images(), args.bins)?;
    let hb = intensity_histogram(&b.images(), args.bins_b.unwrap_or(args.bins))?;
    let kl_ab = histogram_kl(&ha, &hb)?;
    let kl_ba = histogram_kl(&hb, &ha)?;

    create_dir(&args.out)?;
    for (name, h) in [("histogram_a.csv", &ha), ("histogram_b.csv", &hb)] {
        let path = args.out.join(name);
        let mut buf = Vec::new();
        h.write_csv(&mut buf).map_err(|e| Error::io(&path, e))?;
        write_file(&path, &buf)?;
    }
    write_file(
        &args.out.join("kl.csv"),
        format!("direction,kl\na_b,{kl_ab}\nb_a,{kl_ba}\n").as_bytes(),
    )?;

    let mut props = String::from("dataset,all_background");
    for class in ObjectClass::ALL {
        props.push(',');
        props.push_str(class.name());
    }
    props.push('\n');
    for (name, set) in [("a", &a), ("b", &b)] {
        let labels = set.labels();
        if labels.is_empty() {
            continue;
        }
        let p = class_pixel_proportions(&labels)?;
        let cols: Vec<String> = p.fractions.iter().map(|f| f.to_string()).collect();
        props.push_str(&format!("{name},{},{}\n", p.all_background, cols.join(",")));
    }
    write_file(&args.out.join("class_proportions.csv"), props.as_bytes())?;

    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "KL(A || B) = {kl_ab}\nKL(B || A) = {kl_ba}");
    Ok(())
}
