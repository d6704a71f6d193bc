//! `gesture`: feature extraction, training, LOOCV evaluation and synthetic
//! data generation for skeleton-based hand gesture recognition.

mod config;
mod featfile;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gesture_core::dataset::{load_sequence, scan_dataset};
use gesture_core::evaluation::{run_loocv_index, train_model, ClassScheme, Method, PipelineConfig};
use gesture_core::features::{FeatureKind, SequenceFeatures};
use gesture_core::network::{save_checkpoint, Checkpoint};
use gesture_core::synth::{builtin_scripts, export_dhg_tree, generate_dataset, parse_scripts, SynthOptions};
use rayon::prelude::*;

use featfile::{kind_dir, load_feature_set, FeatureFile};

#[derive(Parser)]
#[command(name = "gesture", version, about = "Skeleton-based dynamic hand gesture recognition")]
struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract feature files from a DHG-layout dataset.
    Extract(ExtractArgs),
    /// Train a classifier on extracted feature files.
    Train(TrainArgs),
    /// Leave-one-subject-out evaluation on a DHG-layout dataset.
    Loocv(LoocvArgs),
    /// Generate a synthetic dataset in the DHG layout.
    Synth(SynthArgs),
    /// Print every configuration key with its default value.
    Config,
}

fn parse_kinds(s: &str) -> Result<Vec<FeatureKind>, String> {
    let kinds = s.split(',').map(str::parse).collect::<Result<Vec<FeatureKind>, _>>()?;
    let mut unique = kinds.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != kinds.len() {
        return Err("feature kinds listed twice".into());
    }
    Ok(unique)
}

fn parse_classes(s: &str) -> Result<ClassScheme, String> {
    s.parse::<usize>()
        .ok()
        .and_then(ClassScheme::from_count)
        .ok_or_else(|| format!("'{s}' is not a class count (expected 14 or 28)"))
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of global, finger, skeleton.
    #[arg(long, value_parser = parse_kinds, default_value = "global,finger,skeleton")]
    features: ::std::vec::Vec<FeatureKind>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory written by `extract`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_parser = parse_classes, default_value = "14")]
    classes: ClassScheme,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config file's `method`.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    out: PathBuf,
    /// Epoch log CSV; defaults to `<out>.epochs.csv`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct LoocvArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_parser = parse_classes, default_value = "14")]
    classes: ClassScheme,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 6)]
    subjects: u32,
    #[arg(long, default_value_t = 5)]
    trials: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gesture script file; the built-in scripts are used otherwise.
    #[arg(long)]
    scripts: Option<PathBuf>,
    /// Joint noise standard deviation in meters.
    #[arg(long)]
    noise: Option<f64>,
}

fn pipeline(config: Option<&Path>, method: Option<Method>, scheme: ClassScheme, seed: u64) -> Result<PipelineConfig> {
    let mut c = config::load(config)?;
    if let Some(m) = method {
        c.method = m;
    }
    c.scheme = scheme;
    c.train.seed = seed;
    Ok(c)
}

fn cmd_extract(args: &ExtractArgs) -> Result<()> {
    let config = config::load(args.config.as_deref())?;
    let index = scan_dataset(&args.dataset)?;
    let joints = config.extractor.layout.joint_count();
    for &kind in &args.features {
        fs::create_dir_all(kind_dir(&args.out, kind))?;
    }
    index
        .entries()
        .par_iter()
        .try_for_each(|entry| -> Result<()> {
            let seq = load_sequence(entry, joints)?;
            for &kind in &args.features {
                let values = config
                    .extractor
                    .extract(&seq, kind)
                    .with_context(|| format!("{} features of {}", kind, entry.path.display()))?;
                let file = FeatureFile {
                    meta: seq.meta,
                    kind,
                    values,
                };
                let path = kind_dir(&args.out, kind).join(file.file_name());
                fs::write(&path, file.to_bytes()).with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(())
        })?;
    println!(
        "extracted {} sequences × {} kinds into {}",
        index.len(),
        args.features.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = pipeline(args.config.as_deref(), args.method, args.classes, args.seed)?;
    let features: Vec<SequenceFeatures> = load_feature_set(&args.features, config.method.kinds())?;
    for f in &features {
        config.scheme.class_of(&f.meta)?;
    }
    let refs: Vec<&SequenceFeatures> = features.iter().collect();
    let trained = train_model(&refs, &config, args.seed)?;
    save_checkpoint(
        &args.out,
        &Checkpoint {
            model: trained.model,
            seed: args.seed,
        },
    )
    .with_context(|| format!("writing {}", args.out.display()))?;
    let log_path = args.log.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".epochs.csv");
        PathBuf::from(p)
    });
    let mut log = String::from("epoch,loss,train_accuracy\n");
    for e in &trained.epochs {
        log += &format!("{},{:.6},{:.6}\n", e.epoch, e.loss, e.train_accuracy);
    }
    fs::write(&log_path, log).with_context(|| format!("writing {}", log_path.display()))?;
    if let Some(last) = trained.epochs.last() {
        println!(
            "trained {} epochs on {} sequences: loss {:.4}, train accuracy {:.4}",
            last.epoch,
            features.len(),
            last.loss,
            last.train_accuracy
        );
    }
    Ok(())
}

fn cmd_loocv(args: &LoocvArgs) -> Result<()> {
    let config = pipeline(args.config.as_deref(), args.method, args.classes, args.seed)?;
    let index = scan_dataset(&args.dataset)?;
    let report = run_loocv_index(&index, &config)?;
    report
        .write_to(&args.out)
        .with_context(|| format!("writing report to {}", args.out.display()))?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let scripts = match &args.scripts {
        Some(p) => parse_scripts(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => builtin_scripts(),
    };
    let mut opts = SynthOptions::default();
    if let Some(n) = args.noise {
        if !(n >= 0.0) {
            bail!("noise must be non-negative");
        }
        opts.noise = n;
    }
    let sequences = generate_dataset(&scripts, args.subjects, args.trials, args.seed, &opts)?;
    export_dhg_tree(&sequences, &args.out)?;
    println!("wrote {} sequences to {}", sequences.len(), args.out.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Loocv(a) => cmd_loocv(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Config => {
            print!("{}", config::defaults_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
