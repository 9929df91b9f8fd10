//! `mass`: the sleep staging pipeline CLI.
//!
//! Subcommands: `synth`, `ingest`, `train`, `eval`, `sweep`, `power`,
//! `describe`. Every run logs its resolved configuration and seed next to
//! its outputs; equal inputs and seeds produce identical artifacts.

mod data;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mass_core::eval::{
    default_sweep_grid, eval_report, mask_sweep, sweep_csv, sweep_grid_text,
};
use mass_core::ingest::{parse_edf, save_record, segment_epochs, synth_dataset};
use mass_core::masking::{gen_mask, power_estimate, signal_integrity, AmplifierSpec};
use mass_core::model::MassParams;
use mass_core::nn::load_params;
use mass_core::spectral::{featurize, write_cache};
use mass_core::train::{train, TrainConfig};
use mass_core::{MassError, Real};

#[derive(Parser)]
#[command(name = "mass", version, about = "Mask-aware sleep staging pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset.
    Synth(SynthArgs),
    /// Convert an EDF or CSV recording into dataset records.
    Ingest(IngestArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint at one mask-ratio pair.
    Eval(EvalArgs),
    /// Evaluate a checkpoint over the full mask-ratio grid.
    Sweep(SweepArgs),
    /// Duty-cycled amplifier power at the given mask ratios.
    Power(PowerArgs),
    /// Print per-module parameter counts for a configuration.
    Describe(DescribeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// PRNG seed (falls back to MASS_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 4)]
    records: usize,
    /// Epochs per record.
    #[arg(long, default_value_t = 32)]
    epochs: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write binary feature caches next to the records.
    #[arg(long)]
    cache: bool,
}

#[derive(Args)]
struct IngestArgs {
    /// EDF file, or signal container CSV (then --labels is required).
    #[arg(long)]
    input: PathBuf,
    /// Channel name to extract from an EDF recording.
    #[arg(long)]
    channel: Option<String>,
    /// Labels sidecar when ingesting a CSV container.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Record stem for the outputs (defaults to the input file stem).
    #[arg(long)]
    stem: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the binary feature cache.
    #[arg(long)]
    cache: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `synth` or `ingest`.
    #[arg(long)]
    data: PathBuf,
    /// TOML training configuration; defaults mirror the reference setup.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Seed override (falls back to config, then MASS_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Worker threads; 1 guarantees bit-reproducibility.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    ra: f64,
    #[arg(long, default_value_t = 0.0)]
    re: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Write eval_report.json here in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output format: csv (per-cell rows) or paper (accuracy grid).
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write sweep.csv here in addition to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PowerArgs {
    /// Amplifier name: ads1299-4, ads131a04, or ads1294.
    #[arg(long)]
    amp: String,
    #[arg(long, default_value_t = 0.0)]
    ra: f64,
    #[arg(long, default_value_t = 0.0)]
    re: f64,
}

#[derive(Args)]
struct DescribeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Power(args) => cmd_power(args),
        Command::Describe(args) => cmd_describe(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn is_config_error(err: &anyhow::Error) -> bool {
    for cause in err.chain() {
        if let Some(m) = cause.downcast_ref::<MassError>() {
            if matches!(m, MassError::Config { .. } | MassError::InvalidArg(_)) {
                return true;
            }
        }
        if cause.is::<toml::de::Error>() {
            return true;
        }
    }
    false
}

fn env_seed() -> Option<u64> {
    std::env::var("MASS_SEED").ok().and_then(|s| s.parse().ok())
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> u64 {
    flag.or(config).or_else(env_seed).unwrap_or(0)
}

fn load_train_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let cfg: TrainConfig =
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            Ok(cfg)
        }
    }
}

fn write_run_log(dir: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("run.json"), format!("{:#}\n", value))?;
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let seed = resolve_seed(args.seed, None);
    std::fs::create_dir_all(&args.out)?;
    let records = synth_dataset(seed, args.records, args.epochs);
    for (i, record) in records.iter().enumerate() {
        let stem = format!("record_{i:03}");
        save_record(&args.out, &stem, record)?;
        if args.cache {
            let feats = featurize::<Real>(record)?;
            write_cache(&args.out.join(format!("{stem}.msf")), &feats)?;
        }
    }
    write_run_log(
        &args.out,
        &serde_json::json!({
            "command": "synth",
            "seed": seed,
            "records": args.records,
            "epochs_per_record": args.epochs,
            "cache": args.cache,
        }),
    )?;
    println!(
        "wrote {} records of {} epochs to {} (seed {seed})",
        args.records,
        args.epochs,
        args.out.display()
    );
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out)?;
    let stem = match &args.stem {
        Some(s) => s.clone(),
        None => args
            .input
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .ok_or_else(|| anyhow!("cannot derive a stem from {}", args.input.display()))?,
    };

    let is_edf = args
        .input
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("edf"));
    let (signal, summary) = if is_edf {
        let channel = args
            .channel
            .as_deref()
            .ok_or(MassError::Config { key: "channel".into(), reason: "required for EDF input".into() })?;
        let bytes = std::fs::read(&args.input)
            .with_context(|| format!("reading {}", args.input.display()))?;
        let edf = parse_edf(&bytes)?;
        let recording = edf.to_recording();
        let (signal, stats) = segment_epochs(&recording, channel)?;
        (signal, format!("{stats:?}"))
    } else {
        let labels = args.labels.as_deref().ok_or(MassError::Config {
            key: "labels".into(),
            reason: "required for CSV container input".into(),
        })?;
        let signal = mass_core::ingest::load_record(&args.input, labels)?;
        (signal, "passthrough".to_string())
    };

    save_record(&args.out, &stem, &signal)?;
    if args.cache {
        let feats = featurize::<Real>(&signal)?;
        write_cache(&args.out.join(format!("{stem}.msf")), &feats)?;
    }
    write_run_log(
        &args.out,
        &serde_json::json!({
            "command": "ingest",
            "input": args.input.display().to_string(),
            "stem": stem,
            "epochs": signal.n_epochs(),
            "segment_stats": summary,
            "cache": args.cache,
        }),
    )?;
    println!("ingested {} epochs into {}/{stem}.csv", signal.n_epochs(), args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_train_config(args.config.as_deref())?;
    cfg.seed = resolve_seed(args.seed, Some(cfg.seed));
    if args.max_steps.is_some() {
        cfg.max_steps = args.max_steps;
    }
    cfg.validate()?;
    if args.threads != 1 {
        eprintln!("note: training runs single-threaded; --threads affects eval/sweep only");
    }

    let dataset = data::load_sequences(&args.data, cfg.model.e)?;
    println!(
        "training on {} sequences of {} epochs (seed {})",
        dataset.len(),
        cfg.model.e,
        cfg.seed
    );
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("resolved_config.toml"),
        toml::to_string_pretty(&cfg).expect("config serializes"),
    )?;
    let outcome = train(&dataset, &cfg, Some(&args.out))?;
    let last = outcome.log.last().expect("at least one step");
    write_run_log(
        &args.out,
        &serde_json::json!({
            "command": "train",
            "seed": cfg.seed,
            "data": args.data.display().to_string(),
            "steps": outcome.log.len(),
            "final_loss": last.loss_total,
            "param_count": outcome.params.param_count(),
        }),
    )?;
    println!(
        "done: {} steps, final loss {:.4}, checkpoints and loss_curve.csv in {}",
        outcome.log.len(),
        last.loss_total,
        args.out.display()
    );
    Ok(())
}

fn load_model(ckpt: &Path, config: Option<&Path>) -> Result<(TrainConfig, MassParams<Real>)> {
    let cfg = load_train_config(config)?;
    cfg.model.validate()?;
    let mut params = MassParams::<Real>::init(cfg.model, cfg.seed)?;
    load_params(ckpt, &mut params.store)
        .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    Ok((cfg, params))
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (cfg, params) = load_model(&args.ckpt, args.config.as_deref())?;
    let dataset = data::load_sequences(&args.data, cfg.model.e)?;
    let seed = resolve_seed(args.seed, None);
    let report = eval_report(&params, &dataset, args.ra, args.re, seed)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("eval_report.json"), format!("{json}\n"))?;
        write_run_log(
            dir,
            &serde_json::json!({
                "command": "eval",
                "ckpt": args.ckpt.display().to_string(),
                "r_a": args.ra,
                "r_e": args.re,
                "seed": seed,
            }),
        )?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let (cfg, params) = load_model(&args.ckpt, args.config.as_deref())?;
    let dataset = data::load_sequences(&args.data, cfg.model.e)?;
    let seed = resolve_seed(args.seed, None);
    let (grid_a, grid_e) = default_sweep_grid();
    let reports = mask_sweep(&params, &dataset, &grid_a, &grid_e, seed, args.threads)?;
    let rendered = match args.format.as_str() {
        "csv" => sweep_csv(&reports),
        "paper" => sweep_grid_text(&reports, &grid_a, &grid_e),
        other => {
            return Err(MassError::Config {
                key: "format".into(),
                reason: format!("unknown format {other:?}, expected csv or paper"),
            }
            .into())
        }
    };
    print!("{rendered}");
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.csv"), sweep_csv(&reports))?;
        write_run_log(
            dir,
            &serde_json::json!({
                "command": "sweep",
                "ckpt": args.ckpt.display().to_string(),
                "seed": seed,
                "cells": reports.len(),
                "threads": args.threads,
            }),
        )?;
    }
    Ok(())
}

fn cmd_power(args: PowerArgs) -> Result<()> {
    let amp = AmplifierSpec::by_name(&args.amp).ok_or_else(|| MassError::Config {
        key: "amp".into(),
        reason: format!(
            "unknown amplifier {:?}; expected one of {}",
            args.amp,
            AmplifierSpec::reference_set()
                .iter()
                .map(|a| a.name.clone())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    })?;
    for r in [args.ra, args.re] {
        if !(0.0..1.0).contains(&r) {
            bail!(MassError::Config {
                key: "ra/re".into(),
                reason: format!("mask ratio {r} outside [0, 1)"),
            });
        }
    }
    let integrity = signal_integrity(args.ra, args.re);
    let mw = power_estimate(&amp, integrity);
    println!("{:.2} mW", mw);
    println!(
        "({} at integrity {:.2}: normal {} mW, standby {} mW)",
        amp.name, integrity, amp.p_normal_mw, amp.p_standby_mw
    );
    Ok(())
}

fn cmd_describe(args: DescribeArgs) -> Result<()> {
    let cfg = load_train_config(args.config.as_deref())?;
    cfg.model.validate()?;
    let params = MassParams::<Real>::init(cfg.model, cfg.seed)?;
    println!("configuration: {:?}", cfg.model);
    println!("{:<14} {:>12}", "module", "parameters");
    for (name, count) in params.describe() {
        println!("{name:<14} {count:>12}");
    }
    println!("{:<14} {:>12}", "total", params.param_count());
    // smoke-check that an all-visible mask plan matches the config
    let plan = gen_mask(cfg.model.e, 0.0, 0.0, 0)?;
    println!("sequence length e = {}, full-signal visible patches = {}", cfg.model.e, plan.n_vis());
    Ok(())
}
