//! `surrogate`: data generation, training, evaluation, Monte-Carlo UQ,
//! gradient checks and map export.
//!
//! Every subcommand writes a [`RunManifest`] listing the artifacts it produced
//! with their SHA-256. Failures print one JSON object
//! `{"error": <category>, "message": <text>}` on stderr; usage errors exit
//! with 2, other failures with the codes of [`exit_code`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flowsurrogate::diagnostics::gradcheck_suite;
use flowsurrogate::engine::{BackwardFault, GradCheckOptions, OpKind};
use flowsurrogate::io::{
    append_dataset, default_out_dir, export_maps, read_checkpoint, read_dataset, sample_seeds, write_checkpoint,
    write_dataset, Checkpoint, Dataset, GeneratorConfig, MapFormat, RunManifest,
};
use flowsurrogate::nets::ModelKind;
use flowsurrogate::simulator::{PermSampler, SimConfig};
use flowsurrogate::training::{
    evaluate, normalize_dataset, normalize_with, train, EvalOptions, PhysicsTerm, Split, SplitSizes, TrainConfig,
};
use flowsurrogate::uq::{compare_stats, mcs_run, McsModel};
use flowsurrogate::EnsembleStats;
use serde::Serialize;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] flowsurrogate::Error),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.category(),
            CliError::GradCheck(_) => "gradcheck-failed",
        }
    }
}

/// Process exit code of a failure.
pub fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Usage(_) => 2,
        CliError::GradCheck(_) => 1,
        CliError::Core(e) => match e.category() {
            "config" | "dimension" => 3,
            "io" => 4,
            "truncated" | "length-mismatch" | "hash-mismatch" | "version-mismatch" | "header" | "corruption" => 5,
            "non-finite" => 6,
            _ => 1,
        },
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "surrogate", version, about = "Two-phase flow surrogate pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate permeability realizations into a dataset file.
    GenData(GenDataArgs),
    /// Train a surrogate on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split of a dataset.
    Eval(EvalArgs),
    /// Monte-Carlo moment maps from the simulator or a surrogate.
    Uq(UqArgs),
    /// Gradient check of every primitive and both full models.
    Gradcheck(GradcheckArgs),
    /// Export frames of a dataset sample or UQ moment maps as CSV / PGM.
    ExportMaps(ExportArgs),
}

#[derive(Debug, Args, Serialize)]
struct GenDataArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    grid: usize,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    /// Pore volumes injected over the horizon.
    #[arg(long, default_value_t = 0.8)]
    pvi: f64,
    #[arg(long, default_value_t = 4.0)]
    corr_len: f64,
    #[arg(long, default_value_t = 1.0)]
    log_std: f64,
    /// Geometric-mean permeability in mD.
    #[arg(long, default_value_t = 100.0)]
    mean_perm: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset file (default `$SURROGATE_OUT_DIR/dataset.fsd`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append to an existing dataset instead of replacing it.
    #[arg(long)]
    append: bool,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    #[arg(long)]
    data: PathBuf,
    /// Physics-loss weight; 0 trains on data only.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    #[arg(long, default_value_t = 16)]
    hidden: usize,
    /// Output channels: 1 = saturation, 2 = saturation and pressure
    /// (default 2 when `--lambda > 0`, else 1).
    #[arg(long)]
    channels: Option<usize>,
    /// `train,val,test` sample counts, taken in dataset order.
    #[arg(long, default_value = "300,50,50", value_parser = parse_split)]
    split: SplitSizes,
    /// Output directory (default `$SURROGATE_OUT_DIR/train`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split_name)]
    split: Split,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Report the physics loss even for a model trained without it.
    #[arg(long)]
    physics: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Source {
    Sim,
    Surrogate,
}

#[derive(Debug, Args, Serialize)]
struct UqArgs {
    #[arg(long, value_enum, default_value_t = Source::Sim)]
    source: Source,
    /// Ensemble size.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Frame compared and exported (default: mid-horizon).
    #[arg(long)]
    t: Option<usize>,
    /// Seed of the ensemble's permeability seeds.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Dataset whose generator settings define the ensemble.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trained surrogate (required with `--source surrogate`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    grid: usize,
    #[arg(long, default_value_t = 8)]
    steps: usize,
    /// Also export the mean and variance maps at `t`.
    #[arg(long, value_parser = parse_format)]
    format: Option<MapFormat>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct GradcheckArgs {
    /// Corrupt one op's backward rule, `op` or `op:factor` (factor 1.01).
    #[arg(long)]
    inject_fault: Option<String>,
    /// Entries probed per parameter tensor of the full models.
    #[arg(long, default_value_t = 16)]
    entries: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Field {
    Perm,
    Saturation,
    Pressure,
    Mean,
    Var,
}

#[derive(Debug, Args, Serialize)]
struct ExportArgs {
    /// Dataset to read a sample from.
    #[arg(long, conflicts_with = "stats")]
    data: Option<PathBuf>,
    /// `stats.json` written by `uq`.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    sample: usize,
    #[arg(long, value_enum, default_value_t = Field::Saturation)]
    field: Field,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: MapFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: flowsurrogate::Error| e.to_string())
}

fn parse_split_name(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: flowsurrogate::Error| e.to_string())
}

fn parse_format(s: &str) -> std::result::Result<MapFormat, String> {
    MapFormat::from_str(s).map_err(|e| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<SplitSizes, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| format!("split `{s}`: {e}"))?;
    match parts.as_slice() {
        [train, val, test] => Ok(SplitSizes {
            train: *train,
            val: *val,
            test: *test,
        }),
        _ => Err(format!("split `{s}` must be `train,val,test`")),
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            return report(&CliError::Usage(e.to_string().trim_end().to_string()));
        }
    };
    let command: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, command) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(err: &CliError) -> i32 {
    eprintln!("{}", json!({ "error": err.category(), "message": err.to_string() }));
    exit_code(err)
}

fn dispatch(command: Command, argv: Vec<String>) -> CliResult<()> {
    let start = Instant::now();
    let (mut manifest, path) = match command {
        Command::GenData(a) => gen_data(a, argv)?,
        Command::Train(a) => train_cmd(a, argv)?,
        Command::Eval(a) => eval_cmd(a, argv)?,
        Command::Uq(a) => uq_cmd(a, argv)?,
        Command::Gradcheck(a) => return gradcheck_cmd(a, argv, start),
        Command::ExportMaps(a) => export_cmd(a, argv)?,
    };
    finish(&mut manifest, &path, start)
}

fn finish(manifest: &mut RunManifest, path: &Path, start: Instant) -> CliResult<()> {
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    manifest.write(path)?;
    Ok(())
}

fn out_dir(out: Option<PathBuf>, name: &str) -> PathBuf {
    out.unwrap_or_else(|| default_out_dir().join(name))
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("configuration serializes")
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| flowsurrogate::Error::Io {
            path: dir.into(),
            source: e,
        })?;
    }
    let text = serde_json::to_string_pretty(v).expect("output serializes");
    std::fs::write(path, text).map_err(|e| {
        CliError::Core(flowsurrogate::Error::Io {
            path: path.into(),
            source: e,
        })
    })
}

fn sibling_manifest(file: &Path) -> PathBuf {
    let mut s = file.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn gen_data(a: GenDataArgs, argv: Vec<String>) -> CliResult<(RunManifest, PathBuf)> {
    if a.n == 0 && !a.append {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    if !(a.mean_perm > 0.0) {
        return Err(CliError::Usage("--mean-perm must be positive".into()));
    }
    let gen = GeneratorConfig {
        grid: a.grid,
        corr_len: a.corr_len,
        log_std: a.log_std,
        log_mean: a.mean_perm.ln(),
        seed: a.seed,
        sim: SimConfig {
            steps: a.steps,
            pvi: a.pvi,
            ..SimConfig::default()
        },
    };
    gen.sim.validate()?;
    let out = a.out.clone().unwrap_or_else(|| default_out_dir().join("dataset.fsd"));
    let ds = Dataset::generate(a.n, &gen)?;
    if a.append {
        append_dataset(&out, &ds)?;
    } else {
        write_dataset(&ds, &out)?;
    }
    let mut m = RunManifest::new(argv, json!({ "args": to_value(&a), "generator": to_value(&gen) }), ds.seeds.clone());
    m.record(&out)?;
    m.results = json!({ "samples": ds.samples.len() });
    Ok((m, sibling_manifest(&out)))
}

fn train_cmd(a: TrainArgs, argv: Vec<String>) -> CliResult<(RunManifest, PathBuf)> {
    let channels = a.channels.unwrap_or(if a.lambda > 0.0 { 2 } else { 1 });
    if a.lambda > 0.0 && channels != 2 {
        return Err(CliError::Usage("--lambda > 0 needs --channels 2".into()));
    }
    let ds = read_dataset(&a.data)?;
    let prep = normalize_dataset(&ds, a.split, channels)?;
    let mut cfg = TrainConfig::desk(a.model, channels);
    cfg.model.grid = ds.h;
    cfg.model.steps = ds.steps;
    cfg.model.hidden = a.hidden;
    cfg.model.dropout = a.dropout;
    cfg.lr = a.lr;
    cfg.weight_decay = a.weight_decay;
    cfg.epochs = a.epochs;
    cfg.batch = a.batch;
    cfg.lambda = a.lambda;
    cfg.split = a.split;
    cfg.seed = a.seed;
    cfg.model.seed = a.seed;
    let dir = out_dir(a.out.clone(), "train");
    cfg.dump_dir = Some(dir.clone());
    let physics = if a.lambda > 0.0 {
        let gen = ds
            .generator
            .as_ref()
            .ok_or_else(|| CliError::Usage("--lambda > 0 needs a dataset with generator settings".into()))?;
        Some(PhysicsTerm::new(gen.sim.clone(), prep.stats.clone())?)
    } else {
        None
    };
    let (params, report) = train(&prep, physics.as_ref(), &cfg)?;
    let ck = Checkpoint {
        model: cfg.model.clone(),
        params,
        normalization: prep.stats.clone(),
        lambda: cfg.lambda,
        split: cfg.split,
    };
    let (ckpt, json_path, csv_path) = (dir.join("model.ckpt"), dir.join("losses.json"), dir.join("losses.csv"));
    write_checkpoint(&ck, &ckpt)?;
    report.write_json(&json_path)?;
    report.write_csv(&csv_path)?;
    let mut m = RunManifest::new(argv, json!({ "args": to_value(&a), "train": to_value(&cfg) }), vec![cfg.seed]);
    for p in [&ckpt, &json_path, &csv_path] {
        m.record(p)?;
    }
    m.results = json!({
        "best_epoch": report.best_epoch,
        "parameters": report.parameters,
        "train": report.train,
        "val": report.val,
        "test": report.test,
    });
    Ok((m, dir.join("manifest.json")))
}

fn eval_cmd(a: EvalArgs, argv: Vec<String>) -> CliResult<(RunManifest, PathBuf)> {
    let ck = read_checkpoint(&a.checkpoint)?;
    let ds = read_dataset(&a.data)?;
    let prep = normalize_with(&ds, ck.split, ck.model.out_channels, &ck.normalization)?;
    let want_physics = ck.lambda > 0.0 || a.physics;
    let physics = match (&ds.generator, want_physics) {
        (_, false) => None,
        (Some(gen), true) if ck.model.out_channels == 2 => {
            Some(PhysicsTerm::new(gen.sim.clone(), ck.normalization.clone())?)
        }
        (None, true) => return Err(CliError::Usage("physics loss needs a dataset with generator settings".into())),
        (Some(_), true) => return Err(CliError::Usage("physics loss needs a two-channel model".into())),
    };
    let losses = evaluate(
        &ck.params,
        &ck.model,
        prep.split(a.split),
        physics.as_ref(),
        EvalOptions {
            batch: a.batch,
            dropout_seed: None,
        },
    )?;
    let dir = out_dir(a.out.clone(), "eval");
    let path = dir.join("eval.json");
    let result = json!({ "split": a.split, "model": ck.model.kind, "losses": losses });
    write_json(&path, &result)?;
    let mut m = RunManifest::new(argv, json!({ "args": to_value(&a) }), vec![ck.model.seed]);
    m.record(&path)?;
    m.results = result;
    Ok((m, dir.join("manifest.json")))
}

fn uq_cmd(a: UqArgs, argv: Vec<String>) -> CliResult<(RunManifest, PathBuf)> {
    let ck = match (a.source, &a.checkpoint) {
        (Source::Surrogate, None) => return Err(CliError::Usage("--source surrogate needs --checkpoint".into())),
        (Source::Sim, Some(_)) => return Err(CliError::Usage("--checkpoint only applies to --source surrogate".into())),
        (_, Some(p)) => Some(read_checkpoint(p)?),
        (_, None) => None,
    };
    let gen = match &a.data {
        Some(p) => read_dataset(p)?
            .generator
            .ok_or_else(|| CliError::Usage("dataset has no generator settings".into()))?,
        None => GeneratorConfig {
            grid: a.grid,
            sim: SimConfig {
                steps: a.steps,
                ..SimConfig::default()
            },
            ..GeneratorConfig::default()
        },
    };
    let steps = gen.sim.steps;
    let t = a.t.unwrap_or(steps / 2);
    if t >= steps {
        return Err(CliError::Usage(format!("--t {t} outside {steps} frames")));
    }
    let sampler = PermSampler::new(gen.grid, gen.grid, gen.corr_len, gen.log_std, gen.log_mean)?;
    let seeds = sample_seeds(a.seed, a.n);
    let reference = mcs_run(McsModel::Simulator(&gen.sim), &sampler, &seeds, steps)?;
    let dir = out_dir(a.out.clone(), "uq");
    let mut outputs = Vec::new();
    let (stats, comparison) = match &ck {
        Some(ck) => {
            let model = McsModel::Surrogate {
                params: &ck.params,
                model: &ck.model,
                stats: &ck.normalization,
                batch: 8,
            };
            let s = mcs_run(model, &sampler, &seeds, steps)?;
            let cmp = compare_stats(&reference, &s, t)?;
            let ref_path = dir.join("reference_stats.json");
            write_json(&ref_path, &reference)?;
            outputs.push(ref_path);
            (s, Some(cmp))
        }
        None => (reference, None),
    };
    let stats_path = dir.join("stats.json");
    write_json(&stats_path, &stats)?;
    outputs.push(stats_path);
    if let Some(format) = a.format {
        let at = t * stats.frame_len()..(t + 1) * stats.frame_len();
        outputs.extend(export_maps(&stats.mean[at.clone()], 1, stats.h, stats.w, &dir, &format!("mean_t{t}"), format)?);
        outputs.extend(export_maps(&stats.var[at], 1, stats.h, stats.w, &dir, &format!("var_t{t}"), format)?);
    }
    let mut m = RunManifest::new(argv, json!({ "args": to_value(&a), "generator": to_value(&gen) }), seeds);
    for p in &outputs {
        m.record(p)?;
    }
    m.results = json!({
        "source": stats.source,
        "n": stats.n,
        "step": t,
        "min_variance": stats.var.iter().copied().fold(f64::INFINITY, f64::min),
        "mean_range": [
            stats.mean.iter().copied().fold(f64::INFINITY, f64::min),
            stats.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ],
        "comparison": comparison,
    });
    Ok((m, dir.join("manifest.json")))
}

fn parse_fault(s: &str) -> CliResult<BackwardFault> {
    let (op, factor) = match s.split_once(':') {
        Some((op, f)) => (
            op,
            f.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad fault factor in `{s}`")))?,
        ),
        None => (s, 1.01),
    };
    let op: OpKind = op.parse().map_err(|e: flowsurrogate::Error| CliError::Usage(e.to_string()))?;
    Ok(BackwardFault { op, factor })
}

fn gradcheck_cmd(a: GradcheckArgs, argv: Vec<String>, start: Instant) -> CliResult<()> {
    let fault = a.inject_fault.as_deref().map(parse_fault).transpose()?;
    let opts = GradCheckOptions {
        tolerance: a.tolerance,
        fault,
        ..GradCheckOptions::default()
    };
    let cases = gradcheck_suite(&opts, a.entries)?;
    let rows: Vec<_> = cases
        .iter()
        .map(|c| {
            json!({
                "case": c.name,
                "passed": c.report.passed(),
                "max_rel_error": c.report.max_rel_error(),
                "failures": c.report.failures().map(|f| f.name.clone()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let dir = out_dir(a.out.clone(), "gradcheck");
    let path = dir.join("gradcheck.json");
    write_json(&path, &rows)?;
    let mut m = RunManifest::new(argv, json!({ "args": to_value(&a) }), vec![opts.seed]);
    m.record(&path)?;
    let failed: Vec<&str> = cases.iter().filter(|c| !c.report.passed()).map(|c| c.name.as_str()).collect();
    let worst = cases.iter().map(|c| c.report.max_rel_error()).fold(0.0, f64::max);
    m.results = json!({ "passed": failed.is_empty(), "max_rel_error": worst, "failed": failed });
    finish(&mut m, &dir.join("manifest.json"), start)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::GradCheck(format!("{} (max relative error {worst:.3e})", failed.join(", "))))
    }
}

fn export_cmd(a: ExportArgs, argv: Vec<String>) -> CliResult<(RunManifest, PathBuf)> {
    let dir = out_dir(a.out.clone(), "maps");
    let (frames, steps, h, w, stem) = match (&a.data, &a.stats) {
        (Some(path), None) => {
            let ds = read_dataset(path)?;
            let s = ds
                .samples
                .get(a.sample)
                .ok_or_else(|| CliError::Usage(format!("sample {} outside {} samples", a.sample, ds.samples.len())))?;
            let (values, steps) = match a.field {
                Field::Perm => (&s.perm, 1),
                Field::Saturation => (&s.saturation, ds.steps),
                Field::Pressure => (&s.pressure, ds.steps),
                Field::Mean | Field::Var => {
                    return Err(CliError::Usage("--field mean|var needs --stats".into()));
                }
            };
            let frames: Vec<f64> = values.iter().map(|&v| v as f64).collect();
            let stem = format!("sample{}_{}", a.sample, field_name(a.field));
            (frames, steps, ds.h, ds.w, stem)
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| flowsurrogate::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let stats: EnsembleStats = serde_json::from_str(&text).map_err(|e| flowsurrogate::Error::Header {
                path: path.clone(),
                detail: e.to_string(),
            })?;
            let frames = match a.field {
                Field::Mean => stats.mean.clone(),
                Field::Var => stats.var.clone(),
                _ => return Err(CliError::Usage("--stats exports --field mean or var".into())),
            };
            (frames, stats.steps, stats.h, stats.w, field_name(a.field).to_string())
        }
        _ => return Err(CliError::Usage("export-maps needs exactly one of --data or --stats".into())),
    };
    let files = export_maps(&frames, steps, h, w, &dir, &stem, a.format)?;
    let mut m = RunManifest::new(argv, json!({ "args": to_value(&a) }), Vec::new());
    for f in &files {
        m.record(f)?;
    }
    m.results = json!({ "files": files.len() });
    Ok((m, dir.join("manifest.json")))
}

fn field_name(f: Field) -> &'static str {
    match f {
        Field::Perm => "perm",
        Field::Saturation => "saturation",
        Field::Pressure => "pressure",
        Field::Mean => "mean",
        Field::Var => "var",
    }
}
