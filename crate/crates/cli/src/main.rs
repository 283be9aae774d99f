use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use sfda_core::datasets::make_open_set_variant;
use sfda_core::metrics::SND_TAU;
use sfda_core::{
    adapt, decision_grid, load_csv_dataset, make_twin_moons, metrics_report, pretrain_source,
    sweep_beta, sweep_to_csv, AdaptConfig, BankSpec, Dataset, Domain, Model, ModelDims,
    MoonsConfig, Objective, PretrainConfig,
};

const DEFAULT_TARGET: &str = "moons:rot=30,seed=100";

#[derive(Parser)]
#[command(name = "sfda", version, about = "Source-free domain adaptation by attracting and dispersing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a fresh model on labeled source data.
    Pretrain(PretrainArgs),
    /// Adapt a checkpoint to an unlabeled target set.
    Adapt(AdaptArgs),
    /// Adapt once per (β, seed) and tabulate SND against accuracy.
    Sweep(SweepArgs),
    /// Report accuracy, SND and neighbor agreement as JSON.
    Eval(EvalArgs),
    /// Predicted labels on a regular 2-D grid, as CSV.
    Boundary(BoundaryArgs),
}

/// JSON config file; every section and field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    pretrain: PretrainConfig,
    adapt: AdaptConfig,
    model: ModelWidths,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ModelWidths {
    h1: usize,
    h_feat: usize,
}

impl Default for ModelWidths {
    fn default() -> Self {
        Self { h1: 15, h_feat: 15 }
    }
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

#[derive(Args)]
struct PretrainArgs {
    /// CSV file, or `moons[:n=..,noise=..,rot=..,seed=..,unknown=..]`.
    #[arg(long)]
    data: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    h1: Option<usize>,
    #[arg(long)]
    h_feat: Option<usize>,
}

/// Adaptation settings shared by `adapt` and `sweep`.
#[derive(Args)]
struct AdaptOverrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    objective: Option<Objective>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// `full` or `ring:<capacity>`.
    #[arg(long)]
    bank: Option<BankSpec>,
    #[arg(long)]
    snd_tau: Option<f64>,
}

impl AdaptOverrides {
    fn apply(&self, cfg: &mut AdaptConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        set!(k, epochs, objective, lr, momentum, batch_size, bank, snd_tau);
    }
}

#[derive(Args)]
struct AdaptArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = DEFAULT_TARGET)]
    target: String,
    #[arg(long)]
    out_history: PathBuf,
    #[arg(long)]
    out_ckpt: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    adapt: AdaptOverrides,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated decay exponents.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,5")]
    betas: Vec<f64>,
    /// Number of seeds; runs use seeds 0..N.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long)]
    out: PathBuf,
    /// Starting checkpoint; without one a model is pretrained on `--source`.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, default_value = "moons")]
    source: String,
    #[arg(long, default_value = DEFAULT_TARGET)]
    target: String,
    #[command(flatten)]
    adapt: AdaptOverrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: String,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = SND_TAU)]
    snd_tau: f64,
    /// Reject predictions whose top probability is below this value and
    /// score rows labeled −1 as the unknown class.
    #[arg(long)]
    open_set_threshold: Option<f64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundaryArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    /// `lo,hi`
    #[arg(long, default_value = "-2,3", value_parser = parse_range, allow_hyphen_values = true)]
    x_range: (f64, f64),
    #[arg(long, default_value = "-2,2", value_parser = parse_range, allow_hyphen_values = true)]
    y_range: (f64, f64),
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected lo,hi, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let (lo, hi) = (parse(lo)?, parse(hi)?);
    if lo < hi {
        Ok((lo, hi))
    } else {
        Err(format!("range must have lo < hi, got {lo},{hi}"))
    }
}

/// `moons` with optional `key=value` settings, or a CSV path.
fn load_data(spec: &str, domain: Domain) -> Result<Dataset> {
    let Some(rest) = spec.strip_prefix("moons") else {
        return load_csv_dataset(spec, domain).with_context(|| format!("loading {spec}"));
    };
    let mut cfg = MoonsConfig::default();
    let mut unknown = 0usize;
    let opts = match rest {
        "" => "",
        r => r.strip_prefix(':').with_context(|| format!("bad data spec {spec:?}"))?,
    };
    for kv in opts.split(',').filter(|s| !s.is_empty()) {
        let (key, value) = kv.split_once('=').with_context(|| format!("expected key=value, got {kv:?}"))?;
        let bad = || format!("bad value for {key}: {value:?}");
        match key {
            "n" => cfg.n_per_class = value.parse().with_context(bad)?,
            "noise" => cfg.noise_sigma = value.parse().with_context(bad)?,
            "rot" => cfg.rotation_deg = value.parse().with_context(bad)?,
            "seed" => cfg.seed = value.parse().with_context(bad)?,
            "unknown" => unknown = value.parse().with_context(bad)?,
            _ => bail!("unknown moons option {key:?} (n, noise, rot, seed, unknown)"),
        }
    }
    let mut ds = make_twin_moons(&cfg)?;
    if unknown > 0 {
        ds = make_open_set_variant(&ds, unknown, cfg.seed.wrapping_add(1))?;
    }
    ds.domain = domain;
    Ok(ds)
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pretrain(args: PretrainArgs) -> Result<()> {
    let file = load_config(args.config.as_deref())?;
    let mut cfg = file.pretrain;
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.momentum {
        cfg.momentum = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let source = load_data(&args.data, Domain::Source)?;
    let dims = ModelDims::new(
        source.dim(),
        args.h1.unwrap_or(file.model.h1),
        args.h_feat.unwrap_or(file.model.h_feat),
        source.num_classes,
    )?;
    let mut model = Model::init(dims, cfg.seed)?;
    let report = pretrain_source(&mut model, &source, &cfg)?;
    model.save(&args.out)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run_adapt(args: AdaptArgs) -> Result<()> {
    let mut cfg = load_config(args.adapt.config.as_deref())?.adapt;
    args.adapt.apply(&mut cfg);
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    let mut model = load_model(&args.ckpt)?;
    let target = load_data(&args.target, Domain::Target)?;
    let mut history = adapt(&mut model, &target, &cfg)?;
    if let Some(out) = &args.out_ckpt {
        model.save(out)?;
        history.checkpoint = Some(out.display().to_string());
    }
    write(&args.out_history, &history.to_json()?)?;
    match history.final_accuracy() {
        Some(acc) => eprintln!("final target accuracy {acc:.4}, SND {:.4}", history.final_snd().unwrap_or(f64::NAN)),
        None => eprintln!("final SND {:.4}", history.final_snd().unwrap_or(f64::NAN)),
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    if args.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let file = load_config(args.adapt.config.as_deref())?;
    let mut cfg = file.adapt;
    args.adapt.apply(&mut cfg);
    let model = match &args.ckpt {
        Some(path) => load_model(path)?,
        None => {
            let source = load_data(&args.source, Domain::Source)?;
            let dims = ModelDims::new(source.dim(), file.model.h1, file.model.h_feat, source.num_classes)?;
            let mut model = Model::init(dims, file.pretrain.seed)?;
            let report = pretrain_source(&mut model, &source, &file.pretrain)?;
            eprintln!("pretrained source accuracy {:.4}", report.accuracy);
            model
        }
    };
    let target = load_data(&args.target, Domain::Target)?;
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let rows = sweep_beta(&model, &target, &args.betas, &cfg, &seeds)?;
    write(&args.out, &sweep_to_csv(&rows))?;
    for row in &rows {
        eprintln!(
            "beta {:>5}  snd {:.5}  acc {}{}",
            row.beta,
            row.snd,
            row.accuracy.map_or("-".into(), |a| format!("{a:.4}")),
            if row.selected { "  <- selected" } else { "" }
        );
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.ckpt)?;
    let data = load_data(&args.data, Domain::Target)?;
    let report = metrics_report(&model, &data, args.k, args.snd_tau, args.open_set_threshold)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &args.out {
        Some(path) => write(path, &json),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn boundary(args: BoundaryArgs) -> Result<()> {
    let model = load_model(&args.ckpt)?;
    let grid = decision_grid(
        &model,
        args.x_range,
        args.y_range,
        args.resolution,
    )?;
    let mut out = Vec::new();
    grid.write_csv(&mut out)?;
    fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Pretrain(a) => pretrain(a),
        Command::Adapt(a) => run_adapt(a),
        Command::Sweep(a) => sweep(a),
        Command::Eval(a) => eval(a),
        Command::Boundary(a) => boundary(a),
    }
}
