//! `chebgibbs`: Gibbs-damped Chebyshev filter experiments from the command line.
//!
//! Exit status is 0 on success, 2 for usage errors and 1 for runtime errors;
//! errors are reported on stderr as a single JSON object.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chebgibbs::approx::{
    measure_gibbs, GibbsOptions, TargetFunction, DEFAULT_EXCLUSION, DEFAULT_GRID, DEFAULT_QUADRATURE,
};
use chebgibbs::data::{load_dataset_dir, save_dataset_dir, sbm_generate, SbmConfig};
use chebgibbs::filters::{apply_poly_filter, scalar_response, Damping, FilterSpec};
use chebgibbs::graph::{
    gso_sign, lambda_max_for, node_homophily, renormalized_adjacency, scaled_laplacian, sym_norm_laplacian,
    LambdaMaxMode, TieBreak, DEFAULT_HOMOPHILY_THRESHOLD,
};
use chebgibbs::model::{
    history_csv, run_seed, summarize, CoeffInit, GsoMode, HomophilySource, ModelKind, SplitPolicy, TrainConfig,
};
use chebgibbs::nn::Activation;
use chebgibbs::spectral::{apply_filter_spectral, eigendecompose};
use clap::{Args, Parser, Subcommand, ValueEnum};
use manifest::{write_atomic, ManifestBuilder};
use ndarray::Array2;
use rayon::prelude::*;
use serde_json::json;

/// Largest graph the `filter --oracle` check will eigendecompose.
const FILTER_ORACLE_CAP: usize = 64;

#[derive(Parser, Debug)]
#[command(name = "chebgibbs", version, about = "Chebyshev graph filters with Gibbs damping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measure Gibbs oscillations of damped Chebyshev partial sums.
    Approx(ApproxArgs),
    /// Train ChebGibbsNet (or the ablation network) over several seeds.
    Train(TrainArgs),
    /// Report node homophily and the shift-operator sign it selects.
    Homophily(HomophilyArgs),
    /// Apply a polynomial filter to one feature column.
    Filter(FilterArgs),
    /// Generate a stochastic block model dataset directory.
    Sbm(SbmArgs),
}

#[derive(Args, Debug, serde::Serialize)]
struct ApproxArgs {
    /// step, abs, ramp, inverse-singularity or identity, optionally `name:c`.
    #[arg(long)]
    target: String,
    /// Comma-separated orders.
    #[arg(long = "k", value_delimiter = ',', num_args = 0..)]
    orders: Vec<usize>,
    /// Comma-separated damping kinds: none, jackson, lanczos.
    #[arg(long, value_delimiter = ',', default_value = "none,jackson")]
    damping: Vec<String>,
    #[arg(long, default_value_t = 3)]
    lanczos_m: u32,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value_t = DEFAULT_EXCLUSION)]
    exclusion: f64,
    /// Use `K + 1` quadrature nodes (the interpolant) instead of the series.
    #[arg(long)]
    interpolant: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum LambdaArg {
    Power,
    Fixed2,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum GsoArg {
    Auto,
    Pos,
    Neg,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Chebgibbsnet,
    Chebnet,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum ActivationArg {
    Relu,
    Silu,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum SplitArg {
    /// Use the dataset's split.json.
    Fixed,
    /// Stratified 60/20/20 per seed.
    Random,
    /// 20 training nodes per class, 500 validation, 1000 test.
    Planetoid,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
enum InitArg {
    Ones,
    Identity,
}

#[derive(Args, Debug, serde::Serialize)]
struct TrainArgs {
    /// Dataset directory (edges.txt, features.csv, labels.txt, optional split.json).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "k", default_value_t = 10)]
    order: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    l2: f64,
    #[arg(long, default_value_t = 0.6)]
    dropout: f64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    /// none, jackson or lanczos.
    #[arg(long, default_value = "jackson")]
    damping: String,
    #[arg(long, default_value_t = 3)]
    lanczos_m: u32,
    /// Number of runs; seeds are `seed, seed + 1, ...`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = LambdaArg::Power)]
    lambda_max: LambdaArg,
    #[arg(long, value_enum, default_value_t = GsoArg::Auto)]
    gso: GsoArg,
    #[arg(long, default_value_t = DEFAULT_HOMOPHILY_THRESHOLD)]
    homophily_threshold: f64,
    /// Estimate homophily from training labels only.
    #[arg(long)]
    train_only: bool,
    #[arg(long, value_enum, default_value_t = ModelArg::Chebgibbsnet)]
    model: ModelArg,
    /// Activation of the ablation network's hidden layer.
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    activation: ActivationArg,
    #[arg(long, value_enum, default_value_t = InitArg::Ones)]
    coeff_init: InitArg,
    /// Defaults to `fixed` when the dataset has split.json, else `random`.
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    #[arg(long, default_value_t = 1000)]
    max_epochs: usize,
    #[arg(long, default_value_t = 30)]
    patience: usize,
}

#[derive(Args, Debug, serde::Serialize)]
struct HomophilyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_HOMOPHILY_THRESHOLD)]
    homophily_threshold: f64,
    /// Also write the report (and a manifest) into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum OperatorArg {
    /// Renormalized adjacency with self-loops.
    Adjacency,
    /// Scaled normalized Laplacian.
    Laplacian,
}

#[derive(Args, Debug, serde::Serialize)]
struct FilterArgs {
    #[arg(long)]
    data: PathBuf,
    /// Filter specification JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Feature column to filter.
    #[arg(long, default_value_t = 0)]
    column: usize,
    #[arg(long, value_enum, default_value_t = OperatorArg::Adjacency)]
    operator: OperatorArg,
    #[arg(long, value_enum, default_value_t = LambdaArg::Power)]
    lambda_max: LambdaArg,
    /// Compare against the spectral oracle (graphs with at most 64 nodes).
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, serde::Serialize)]
struct SbmArgs {
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long)]
    p_in: f64,
    #[arg(long)]
    p_out: f64,
    #[arg(long, default_value_t = 2)]
    feature_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    feature_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also store a stratified 60/20/20 split drawn from the seed.
    #[arg(long)]
    with_split: bool,
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Runtime(chebgibbs::Error),
}

impl From<chebgibbs::Error> for CliError {
    fn from(e: chebgibbs::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(chebgibbs::Error::Io { path: path.to_path_buf(), source: e })
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": "usage", "message": msg.trim_end() }));
            return ExitCode::from(2);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("{}", json!({ "error": "usage", "message": e }));
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Approx(a) => cmd_approx(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Homophily(a) => cmd_homophily(&a),
        Command::Filter(a) => cmd_filter(&a),
        Command::Sbm(a) => cmd_sbm(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("{}", json!({ "error": "usage", "message": msg }));
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("{}", json!({ "error": "runtime", "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("CHEBGIBBS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("CHEBGIBBS_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}

fn parse_damping(name: &str, m: u32) -> CliResult<Damping> {
    if m == 0 {
        return Err(CliError::Usage("--lanczos-m must be >= 1".into()));
    }
    Damping::parse_with_m(name, m).map_err(|e| CliError::Usage(format!("--damping: {e}")))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    write_atomic(path, contents.as_bytes()).map_err(|e| io_err(path, e))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn finish(manifest: ManifestBuilder, dir: &Path) -> CliResult<()> {
    manifest.finish(dir).map(|_| ()).map_err(|e| io_err(dir, e))
}

fn config_json<T: serde::Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn cmd_approx(a: &ApproxArgs) -> CliResult<()> {
    if a.orders.is_empty() {
        return Err(CliError::Usage("--k needs at least one order".into()));
    }
    if a.damping.is_empty() {
        return Err(CliError::Usage("--damping needs at least one kind".into()));
    }
    let target = TargetFunction::parse(&a.target).map_err(|e| CliError::Usage(format!("--target: {e}")))?;
    let dampings = a.damping.iter().map(|d| parse_damping(d, a.lanczos_m)).collect::<CliResult<Vec<_>>>()?;
    let quadrature = (!a.interpolant).then_some(DEFAULT_QUADRATURE);
    let opts = GibbsOptions { grid: a.grid, exclusion: a.exclusion, quadrature };
    let mut manifest = ManifestBuilder::new("approx", config_json(a), None);

    let mut csv = String::from("K,damping,sup_error_away,overshoot\n");
    for &order in &a.orders {
        for &damping in &dampings {
            let r = measure_gibbs(&target, order, damping, opts)?;
            csv.push_str(&format!("{},{},{},{}\n", r.order, r.damping, r.sup_error_away, r.overshoot));
        }
    }
    let dir = parent_dir(&a.out);
    create_dir(&dir)?;
    write_file(&a.out, &csv)?;
    manifest.output(&a.out);
    finish(manifest, &dir)
}

fn train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let cfg = TrainConfig {
        model: match a.model {
            ModelArg::Chebgibbsnet => ModelKind::ChebGibbsNet,
            ModelArg::Chebnet => ModelKind::ChebNet {
                activation: match a.activation {
                    ActivationArg::Relu => Activation::Relu,
                    ActivationArg::Silu => Activation::Silu,
                },
            },
        },
        lr: a.lr,
        l2_rate: a.l2,
        dropout_rate: a.dropout,
        hidden_dim: a.hidden,
        order: a.order,
        max_epochs: a.max_epochs,
        patience: a.patience,
        seed: a.seed,
        damping: parse_damping(&a.damping, a.lanczos_m)?,
        lambda_max: match a.lambda_max {
            LambdaArg::Power => LambdaMaxMode::Power,
            LambdaArg::Fixed2 => LambdaMaxMode::Fixed2,
        },
        gso: match a.gso {
            GsoArg::Auto => GsoMode::Auto,
            GsoArg::Pos => GsoMode::Pos,
            GsoArg::Neg => GsoMode::Neg,
        },
        homophily_threshold: a.homophily_threshold,
        tie_break: TieBreak::Homophilous,
        homophily_source: if a.train_only { HomophilySource::Train } else { HomophilySource::All },
        coeff_init: match a.coeff_init {
            InitArg::Ones => CoeffInit::Ones,
            InitArg::Identity => CoeffInit::Identity,
        },
        eta: 1.0,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let cfg = train_config(a)?;
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be >= 1".into()));
    }
    let ds = load_dataset_dir(&a.data)?;
    let policy = match a.split.unwrap_or(if ds.splits.is_some() { SplitArg::Fixed } else { SplitArg::Random }) {
        SplitArg::Fixed => {
            if ds.splits.is_none() {
                return Err(CliError::Usage("--split fixed needs split.json in the dataset directory".into()));
            }
            SplitPolicy::Fixed
        }
        SplitArg::Random => SplitPolicy::default(),
        SplitArg::Planetoid => SplitPolicy::Planetoid { per_class: 20, val: 500, test: 1000 },
    };
    let mut manifest = ManifestBuilder::new("train", config_json(a), Some(a.seed));
    create_dir(&a.out)?;

    let seeds: Vec<u64> = (0..a.seeds).map(|i| a.seed + i).collect();
    let outcomes = seeds
        .par_iter()
        .map(|&seed| run_seed(&ds, &cfg, seed, policy))
        .collect::<chebgibbs::Result<Vec<_>>>()?;
    let mut runs = Vec::with_capacity(outcomes.len());
    for (result, outcome) in outcomes {
        let run_cfg = TrainConfig { seed: result.seed, ..cfg.clone() };
        let ck = a.out.join(format!("checkpoint_seed{}.json", result.seed));
        write_file(&ck, &outcome.checkpoint(&run_cfg).to_json())?;
        let hist = a.out.join(format!("history_seed{}.csv", result.seed));
        write_file(&hist, &history_csv(&outcome.history))?;
        manifest.output(&ck);
        manifest.output(&hist);
        runs.push(result);
    }
    let report = summarize(runs);
    let metrics = json!({
        "dataset": ds.name,
        "accuracy": report.mean_test_acc,
        "accuracy_std": report.std_test_acc,
        "seeds": seeds,
        "runs": report.runs,
        "config": cfg,
    });
    let path = a.out.join("metrics.json");
    write_file(&path, &serde_json::to_string_pretty(&metrics).expect("metrics serialize"))?;
    manifest.output(&path);
    println!("{}", json!({ "accuracy": report.mean_test_acc, "accuracy_std": report.std_test_acc }));
    finish(manifest, &a.out)
}

fn cmd_homophily(a: &HomophilyArgs) -> CliResult<()> {
    let ds = load_dataset_dir(&a.data)?;
    let report = node_homophily(&ds.graph, &ds.labels, None)?;
    let sign = gso_sign(report.h, a.homophily_threshold, TieBreak::Homophilous);
    let out = json!({ "h": report.h, "n_isolated": report.n_isolated, "gso_sign": sign });
    println!("{out}");
    if let Some(dir) = &a.out {
        let mut manifest = ManifestBuilder::new("homophily", config_json(a), None);
        create_dir(dir)?;
        let path = dir.join("homophily.json");
        write_file(&path, &out.to_string())?;
        manifest.output(&path);
        finish(manifest, dir)?;
    }
    Ok(())
}

fn cmd_filter(a: &FilterArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.spec).map_err(|e| io_err(&a.spec, e))?;
    let spec = FilterSpec::from_json(&text).map_err(|e| CliError::Usage(format!("--spec: {e}")))?;
    let ds = load_dataset_dir(&a.data)?;
    if a.oracle && ds.n() > FILTER_ORACLE_CAP {
        return Err(chebgibbs::Error::OracleTooLarge { n: ds.n(), cap: FILTER_ORACLE_CAP }.into());
    }
    if a.column >= ds.num_features() {
        return Err(CliError::Usage(format!(
            "--column {} out of range for {} feature columns",
            a.column,
            ds.num_features()
        )));
    }
    let s = match a.operator {
        OperatorArg::Adjacency => renormalized_adjacency(&ds.graph, 1.0)?,
        OperatorArg::Laplacian => {
            let lap = sym_norm_laplacian(&ds.graph);
            let mode = match a.lambda_max {
                LambdaArg::Power => LambdaMaxMode::Power,
                LambdaArg::Fixed2 => LambdaMaxMode::Fixed2,
            };
            scaled_laplacian(&lap, lambda_max_for(&lap, mode))?
        }
    };
    let x: Array2<f64> = ds.features.column(a.column).to_owned().insert_axis(ndarray::Axis(1));
    let y = apply_poly_filter(&spec, &s, &x.view())?;

    let mut manifest = ManifestBuilder::new("filter", config_json(a), None);
    let mut summary = json!({ "n": ds.n() });
    if a.oracle {
        let es = eigendecompose(&s.to_dense().view(), FILTER_ORACLE_CAP)?;
        let spectral = apply_filter_spectral(
            &es,
            |l| scalar_response(&spec, l.clamp(-1.0, 1.0)).expect("clamped into the domain"),
            &x.view(),
        )?;
        let dev = (&y - &spectral).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        summary["oracle_max_abs_deviation"] = json!(dev);
    }
    println!("{summary}");
    let dir = parent_dir(&a.out);
    create_dir(&dir)?;
    let body: String = y.column(0).iter().map(|v| format!("{v:?}\n")).collect();
    write_file(&a.out, &body)?;
    manifest.output(&a.out);
    finish(manifest, &dir)
}

fn cmd_sbm(a: &SbmArgs) -> CliResult<()> {
    let cfg = SbmConfig {
        n: a.n,
        classes: a.classes,
        p_in: a.p_in,
        p_out: a.p_out,
        feature_dim: a.feature_dim,
        feature_noise: a.feature_noise,
        seed: a.seed,
    };
    let mut ds = sbm_generate(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    if a.with_split {
        ds = chebgibbs::data::random_split(&ds, (0.6, 0.2, 0.2), a.seed)?;
    }
    let mut manifest = ManifestBuilder::new("sbm", config_json(a), Some(a.seed));
    create_dir(&a.out)?;
    save_dataset_dir(&ds, &a.out)?;
    manifest.output(&a.out);
    println!("{}", json!({ "n": ds.n(), "edges": ds.graph.num_edges(), "expected_homophily": cfg.expected_homophily() }));
    finish(manifest, &a.out)
}
