//! Command line front end: flat JSON config loading, flag merging, subcommand
//! dispatch, and report emission with an embedded effective config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::Value;

use crate::bias_lab::{eab_report, EabOptions, NormKind};
use crate::estimators::{
    bayes_estimate_from, ferguson_bayes, ferguson_mle, hybrid_estimate, mle_estimate,
    schwartz_estimators, LogPrior, LossSpec, OptimizerConfig,
};
use crate::expansion_engine::{
    bayes_terms, hybrid_terms, map_terms, mle_terms, ExpansionTerms, PriorDerivatives,
};
use crate::gauss_moments::LossExponents;
use crate::model_kit::models::{
    BvNormal, ExpRate, Ferguson, Gauss1, Gauss2, Mixture3, Mvn, Poisson, Schwartz,
};
use crate::model_kit::{empirical_stats, ingest_csv, Model, ParamSpace};
use crate::prior_forge::{drift_field, example1_premise_check, jeffreys_log_prior, solve_prior};
use crate::sim_bench::{export_report, run_consistency, run_table1, ReportFormat, SimConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable naming the default directory for relative `--out`
/// paths.
pub const OUT_DIR_ENV: &str = "HYBRID_INFER_OUT_DIR";

#[derive(Debug)]
enum CliError {
    /// Bad configuration: exit code 2. The message names the offending key.
    Config(String),
    /// Runtime failure (non-convergence, I/O): exit code 3.
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<crate::EngineError> for CliError {
    fn from(e: crate::EngineError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "hybrid-infer",
    version = VERSION,
    about = "Hybrid Bayes-MLE estimation, expansion diagnostics, matching priors, and simulation benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit an estimator to a CSV data file.
    Estimate {
        #[command(subcommand)]
        which: EstimateCmd,
    },
    /// Higher-order expansion terms at a given parameter point.
    Expand {
        #[command(subcommand)]
        which: ExpandCmd,
    },
    /// Excess asymptotic bias comparison across estimators.
    Eab(EabArgs),
    /// Matching prior construction and diagnostics.
    Prior {
        #[command(subcommand)]
        which: PriorCmd,
    },
    /// Seeded simulation benchmarks.
    Simulate {
        #[command(subcommand)]
        which: SimulateCmd,
    },
    /// Small self-contained demonstrations of the counterexample models.
    Demo {
        #[command(subcommand)]
        which: DemoCmd,
    },
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Flat JSON config file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; written under $HYBRID_INFER_OUT_DIR when relative.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: json or csv.
    #[arg(long)]
    format: Option<String>,
    /// Master seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model name: gauss1, gauss2, mvn, exprate, bvnormal, ferguson, schwartz, mixture3.
    #[arg(long)]
    model: Option<String>,
    /// CSV data file, one observation per row.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated initial parameter vector.
    #[arg(long)]
    init: Option<String>,
    /// Prior spec `name:normal:mean:var`, repeatable.
    #[arg(long)]
    prior: Vec<String>,
    /// Loss: squared, zero-one, or power:a1,a2,...
    #[arg(long)]
    loss: Option<String>,
}

#[derive(Subcommand, Debug)]
enum EstimateCmd {
    Mle(EstimateArgs),
    Bayes(EstimateArgs),
    Hybrid(EstimateArgs),
}

#[derive(Args, Debug, Clone)]
struct ExpandArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated expansion point.
    #[arg(long)]
    theta0: Option<String>,
    #[arg(long)]
    prior: Vec<String>,
    #[arg(long)]
    loss: Option<String>,
}

#[derive(Subcommand, Debug)]
enum ExpandCmd {
    Mle(ExpandArgs),
    Map(ExpandArgs),
    Bayes(ExpandArgs),
    Hybrid(ExpandArgs),
}

#[derive(Args, Debug, Clone)]
struct EabArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    theta0: Option<String>,
    #[arg(long)]
    prior: Vec<String>,
    #[arg(long)]
    loss: Option<String>,
    /// Norm for the verdict: euclidean or max.
    #[arg(long)]
    norm: Option<String>,
    /// Monte Carlo draws for the limit-simulation oracle.
    #[arg(long)]
    oracle_draws: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct PriorArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: Option<String>,
    /// Comma-separated reference parameter point.
    #[arg(long)]
    theta: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    /// Half-width of the evaluation grid around theta.
    #[arg(long)]
    span: Option<f64>,
    /// Grid points per coordinate.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum PriorCmd {
    /// Solve the second-order matching prior along a grid.
    Match(PriorArgs),
    /// Jeffreys log prior at the given point.
    Jeffreys(PriorArgs),
    /// Premise check for the Jeffreys shortcut on a grid.
    Check(PriorArgs),
}

#[derive(Args, Debug, Clone)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated sample sizes.
    #[arg(long)]
    n: Option<String>,
    /// Replications per sample size.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum SimulateCmd {
    Table1(SimulateArgs),
    Consistency(SimulateArgs),
}

#[derive(Args, Debug, Clone)]
struct DemoArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Sample size for the demonstration draw.
    #[arg(long)]
    n: Option<usize>,
    /// True parameter value to simulate from.
    #[arg(long)]
    truth: Option<f64>,
    /// Ferguson kernel exponent.
    #[arg(long)]
    c: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum DemoCmd {
    Ferguson(DemoArgs),
    Schwartz(DemoArgs),
}

/// Parses argv and runs one subcommand; returns the process exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

type Cfg = BTreeMap<String, Value>;

/// Loads a flat JSON object, rejecting duplicate keys; errors carry the
/// line number reported by the JSON parser.
fn load_flat_config(path: &Path) -> Result<Cfg, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("config file {}: {}", path.display(), e)))?;
    if text.trim().is_empty() {
        return Ok(Cfg::new());
    }
    parse_flat_config(&text)
}

fn parse_flat_config(text: &str) -> Result<Cfg, CliError> {
    struct FlatVisitor;

    impl<'de> serde::de::Visitor<'de> for FlatVisitor {
        type Value = Cfg;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a flat JSON object")
        }

        fn visit_map<A: serde::de::MapAccess<'de>>(self, mut access: A) -> Result<Cfg, A::Error> {
            let mut map = Cfg::new();
            while let Some((key, value)) = access.next_entry::<String, Value>()? {
                if value.is_object() {
                    return Err(serde::de::Error::custom(format!(
                        "key \"{key}\" holds a nested object; the config must be flat"
                    )));
                }
                if map.insert(key.clone(), value).is_some() {
                    return Err(serde::de::Error::custom(format!("duplicate key \"{key}\"")));
                }
            }
            Ok(map)
        }
    }

    let mut de = serde_json::Deserializer::from_str(text);
    serde::de::Deserializer::deserialize_map(&mut de, FlatVisitor)
        .map_err(|e| CliError::Config(format!("config parse error: {e}")))
}

fn check_allowed(cfg: &Cfg, allowed: &[&str]) -> Result<(), CliError> {
    for key in cfg.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(CliError::Config(format!("unknown config key \"{key}\"")));
        }
    }
    Ok(())
}

/// Config-file values overlaid with command-line flags; flags win.
fn merged_config(common: &CommonArgs, allowed: &[&str]) -> Result<Cfg, CliError> {
    let mut cfg = match &common.config {
        Some(path) => load_flat_config(path)?,
        None => Cfg::new(),
    };
    check_allowed(&cfg, allowed)?;
    if let Some(out) = &common.out {
        cfg.insert("out".into(), Value::String(out.display().to_string()));
    }
    if let Some(fmt) = &common.format {
        cfg.insert("format".into(), Value::String(fmt.clone()));
    }
    if let Some(seed) = common.seed {
        cfg.insert("seed".into(), Value::from(seed));
    }
    Ok(cfg)
}

fn set_string(cfg: &mut Cfg, key: &str, v: &Option<String>) {
    if let Some(s) = v {
        cfg.insert(key.into(), Value::String(s.clone()));
    }
}

fn set_path(cfg: &mut Cfg, key: &str, v: &Option<PathBuf>) {
    if let Some(p) = v {
        cfg.insert(key.into(), Value::String(p.display().to_string()));
    }
}

fn set_usize(cfg: &mut Cfg, key: &str, v: Option<usize>) {
    if let Some(x) = v {
        cfg.insert(key.into(), Value::from(x as u64));
    }
}

fn set_f64(cfg: &mut Cfg, key: &str, v: Option<f64>) {
    if let Some(x) = v {
        cfg.insert(key.into(), Value::from(x));
    }
}

fn set_string_list(cfg: &mut Cfg, key: &str, v: &[String]) {
    if !v.is_empty() {
        cfg.insert(
            key.into(),
            Value::Array(v.iter().map(|s| Value::String(s.clone())).collect()),
        );
    }
}

fn default_string(cfg: &mut Cfg, key: &str, v: &str) {
    cfg.entry(key.into())
        .or_insert_with(|| Value::String(v.into()));
}

fn req_str(cfg: &Cfg, key: &str) -> Result<String, CliError> {
    match cfg.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(CliError::Config(format!("key \"{key}\" must be a string"))),
        None => Err(CliError::Config(format!("missing required key \"{key}\""))),
    }
}

fn opt_str(cfg: &Cfg, key: &str) -> Result<Option<String>, CliError> {
    match cfg.get(key) {
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(CliError::Config(format!("key \"{key}\" must be a string"))),
        None => Ok(None),
    }
}

fn req_seed(cfg: &Cfg) -> Result<u64, CliError> {
    match cfg.get("seed") {
        Some(v) => v
            .as_u64()
            .ok_or_else(|| CliError::Config("key \"seed\" must be a nonnegative integer".into())),
        None => Err(CliError::Config(
            "missing required key \"seed\" (this subcommand is stochastic)".into(),
        )),
    }
}

fn opt_u64(cfg: &Cfg, key: &str) -> Result<Option<u64>, CliError> {
    match cfg.get(key) {
        Some(v) => v.as_u64().map(Some).ok_or_else(|| {
            CliError::Config(format!("key \"{key}\" must be a nonnegative integer"))
        }),
        None => Ok(None),
    }
}

fn opt_f64(cfg: &Cfg, key: &str) -> Result<Option<f64>, CliError> {
    match cfg.get(key) {
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("key \"{key}\" must be a number"))),
        None => Ok(None),
    }
}

/// Comma-separated string or JSON array of numbers.
fn f64_list(cfg: &Cfg, key: &str) -> Result<Option<Vec<f64>>, CliError> {
    match cfg.get(key) {
        None => Ok(None),
        Some(Value::String(s)) => {
            let parsed: Result<Vec<f64>, _> =
                s.split(',').map(|p| p.trim().parse::<f64>()).collect();
            parsed.map(Some).map_err(|_| {
                CliError::Config(format!("key \"{key}\" must be a comma-separated number list"))
            })
        }
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                out.push(item.as_f64().ok_or_else(|| {
                    CliError::Config(format!("key \"{key}\" must hold numbers only"))
                })?);
            }
            Ok(Some(out))
        }
        Some(_) => Err(CliError::Config(format!(
            "key \"{key}\" must be a number list"
        ))),
    }
}

fn usize_list(cfg: &Cfg, key: &str) -> Result<Option<Vec<usize>>, CliError> {
    match f64_list(cfg, key)? {
        None => Ok(None),
        Some(vals) => {
            let mut out = Vec::with_capacity(vals.len());
            for v in vals {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(CliError::Config(format!(
                        "key \"{key}\" must hold nonnegative integers"
                    )));
                }
                out.push(v as usize);
            }
            Ok(Some(out))
        }
    }
}

fn str_list(cfg: &Cfg, key: &str) -> Result<Vec<String>, CliError> {
    match cfg.get(key) {
        None => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(vec![s.clone()]),
        Some(Value::Array(items)) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                match item {
                    Value::String(s) => out.push(s.clone()),
                    _ => {
                        return Err(CliError::Config(format!(
                            "key \"{key}\" must hold strings only"
                        )))
                    }
                }
            }
            Ok(out)
        }
        Some(_) => Err(CliError::Config(format!(
            "key \"{key}\" must be a string list"
        ))),
    }
}

fn build_model(name: &str) -> Result<Box<dyn Model>, CliError> {
    match name {
        "gauss1" => Ok(Box::new(Gauss1::new(1.0))),
        "gauss2" => Ok(Box::new(Gauss2::new())),
        "mvn" => Ok(Box::new(Mvn::new(2))),
        "exprate" => Ok(Box::new(ExpRate::new())),
        "poisson" => Ok(Box::new(Poisson::new())),
        "bvnormal" => Ok(Box::new(BvNormal::new())),
        "ferguson" => Ok(Box::new(Ferguson::new(3.0))),
        "schwartz" => Ok(Box::new(Schwartz::new())),
        "mixture3" => Ok(Box::new(Mixture3::new())),
        _ => Err(CliError::Config(format!(
            "key \"model\": unknown model \"{name}\" \
             (expected one of gauss1, gauss2, mvn, exprate, poisson, bvnormal, ferguson, schwartz, mixture3)"
        ))),
    }
}

struct PriorTerm {
    index: usize,
    mean: f64,
    var: f64,
}

/// Parses repeatable `name:normal:mean:var` prior specs against the model's
/// parameter names.
fn parse_prior_specs(specs: &[String], space: &ParamSpace) -> Result<Vec<PriorTerm>, CliError> {
    let mut terms = Vec::new();
    for spec in specs {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 4 || parts[1] != "normal" {
            return Err(CliError::Config(format!(
                "key \"prior\": spec \"{spec}\" must look like name:normal:mean:var"
            )));
        }
        let index = space
            .names
            .iter()
            .position(|n| n == parts[0])
            .ok_or_else(|| {
                CliError::Config(format!(
                    "key \"prior\": unknown parameter \"{}\" (model has {:?})",
                    parts[0], space.names
                ))
            })?;
        let mean: f64 = parts[2].parse().map_err(|_| {
            CliError::Config(format!("key \"prior\": bad mean in \"{spec}\""))
        })?;
        let var: f64 = parts[3].parse().map_err(|_| {
            CliError::Config(format!("key \"prior\": bad variance in \"{spec}\""))
        })?;
        if var <= 0.0 {
            return Err(CliError::Config(format!(
                "key \"prior\": variance must be positive in \"{spec}\""
            )));
        }
        if terms.iter().any(|t: &PriorTerm| t.index == index) {
            return Err(CliError::Config(format!(
                "key \"prior\": parameter \"{}\" specified twice",
                parts[0]
            )));
        }
        terms.push(PriorTerm { index, mean, var });
    }
    Ok(terms)
}

fn log_prior_from_terms(terms: Vec<PriorTerm>) -> LogPrior {
    if terms.is_empty() {
        return LogPrior::flat();
    }
    let terms2: Vec<(usize, f64, f64)> = terms.iter().map(|t| (t.index, t.mean, t.var)).collect();
    let terms3 = terms2.clone();
    LogPrior::from_fn_grad(
        move |theta| {
            terms2
                .iter()
                .map(|&(i, m, v)| -0.5 * (theta[i] - m) * (theta[i] - m) / v)
                .sum()
        },
        move |theta| {
            let mut g = DVector::zeros(theta.len());
            for &(i, m, v) in &terms3 {
                g[i] = -(theta[i] - m) / v;
            }
            g
        },
    )
}

/// Derivative tables for the expansion machinery over `dim` coordinates,
/// flat (zero precision) wherever no spec names the coordinate.
fn prior_derivs_from_terms(theta0: &[f64], terms: &[PriorTerm], dim: usize) -> PriorDerivatives {
    let mut mu1 = theta0[..dim].to_vec();
    let mut precisions = vec![0.0; dim];
    for t in terms {
        if t.index < dim {
            mu1[t.index] = t.mean;
            precisions[t.index] = 1.0 / t.var;
        }
    }
    PriorDerivatives::gaussian(&theta0[..dim], &mu1, &precisions)
}

fn parse_loss_spec(text: &str, d: usize) -> Result<LossSpec, CliError> {
    match text {
        "squared" => Ok(LossSpec::Squared),
        "zero-one" => Ok(LossSpec::ZeroOne(0.5)),
        _ => {
            let exps = parse_loss_exponents(text, d)?;
            LossSpec::Power(exps)
                .validate(d)
                .map_err(|e| CliError::Config(format!("key \"loss\": {e}")))?;
            Ok(LossSpec::Power(parse_loss_exponents(text, d)?))
        }
    }
}

fn parse_loss_exponents(text: &str, d: usize) -> Result<LossExponents, CliError> {
    if text == "squared" {
        return Ok(LossExponents::squared(d));
    }
    let rest = text.strip_prefix("power:").ok_or_else(|| {
        CliError::Config(format!(
            "key \"loss\": \"{text}\" must be squared, zero-one, or power:a1,a2,..."
        ))
    })?;
    let exps: Result<Vec<usize>, _> = rest.split(',').map(|p| p.trim().parse::<usize>()).collect();
    let exps =
        exps.map_err(|_| CliError::Config("key \"loss\": power exponents must be integers".into()))?;
    if exps.len() != d {
        return Err(CliError::Config(format!(
            "key \"loss\": expected {d} exponents, got {}",
            exps.len()
        )));
    }
    LossExponents::new(exps).map_err(|e| CliError::Config(format!("key \"loss\": {e}")))
}

fn parse_norm(text: &str) -> Result<NormKind, CliError> {
    match text {
        "euclidean" => Ok(NormKind::Euclidean),
        "max" => Ok(NormKind::Max),
        _ => Err(CliError::Config(format!(
            "key \"norm\": \"{text}\" must be euclidean or max"
        ))),
    }
}

fn default_init(space: &ParamSpace) -> Vec<f64> {
    let mut init: Vec<f64> = space
        .bounds
        .iter()
        .map(|&(lo, hi)| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        })
        .collect();
    space.project(&mut init);
    init
}

#[derive(Serialize)]
struct CliReport<'a> {
    command: String,
    config: &'a Cfg,
    seed: Option<u64>,
    version: &'a str,
    result: Value,
}

fn resolve_out(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            if !dir.is_empty() {
                return PathBuf::from(dir).join(path);
            }
        }
    }
    path.to_path_buf()
}

fn emit(command: &str, cfg: &Cfg, seed: Option<u64>, result: Value) -> Result<(), CliError> {
    let report = CliReport {
        command: command.to_string(),
        config: cfg,
        seed,
        version: VERSION,
        result,
    };
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| CliError::Runtime(format!("report serialization: {e}")))?;
    match opt_str(cfg, "out")? {
        Some(path) => {
            let path = resolve_out(Path::new(&path));
            std::fs::write(&path, format!("{text}\n"))
                .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Runtime(format!("report serialization: {e}")))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Estimate { which } => run_estimate(which),
        Command::Expand { which } => run_expand(which),
        Command::Eab(args) => run_eab(args),
        Command::Prior { which } => run_prior(which),
        Command::Simulate { which } => run_simulate(which),
        Command::Demo { which } => run_demo(which),
    }
}

const ESTIMATE_KEYS: &[&str] = &[
    "out", "format", "seed", "model", "data", "init", "prior", "loss", "tol", "max_iter",
];

fn estimate_cfg(args: &EstimateArgs) -> Result<Cfg, CliError> {
    let mut cfg = merged_config(&args.common, ESTIMATE_KEYS)?;
    set_string(&mut cfg, "model", &args.model);
    set_path(&mut cfg, "data", &args.data);
    set_string(&mut cfg, "init", &args.init);
    set_string_list(&mut cfg, "prior", &args.prior);
    set_string(&mut cfg, "loss", &args.loss);
    Ok(cfg)
}

fn optimizer_from_cfg(cfg: &Cfg, seed: u64) -> Result<OptimizerConfig, CliError> {
    let mut opt = OptimizerConfig::with_seed(seed);
    if let Some(tol) = opt_f64(cfg, "tol")? {
        opt.tol = tol;
    }
    if let Some(mi) = opt_u64(cfg, "max_iter")? {
        opt.max_iter = mi as usize;
    }
    opt.validate()
        .map_err(|e| CliError::Config(format!("key \"tol\"/\"max_iter\": {e}")))?;
    Ok(opt)
}

fn run_estimate(which: EstimateCmd) -> Result<(), CliError> {
    let (label, args) = match &which {
        EstimateCmd::Mle(a) => ("estimate mle", a),
        EstimateCmd::Bayes(a) => ("estimate bayes", a),
        EstimateCmd::Hybrid(a) => ("estimate hybrid", a),
    };
    let mut cfg = estimate_cfg(args)?;
    default_string(&mut cfg, "loss", "squared");
    let model = build_model(&req_str(&cfg, "model")?)?;
    let data = req_str(&cfg, "data")?;
    let sample = ingest_csv(Path::new(&data))?;
    let init = match f64_list(&cfg, "init")? {
        Some(v) => {
            if v.len() != model.space().d() {
                return Err(CliError::Config(format!(
                    "key \"init\": expected {} values, got {}",
                    model.space().d(),
                    v.len()
                )));
            }
            v
        }
        None => default_init(model.space()),
    };
    let terms = parse_prior_specs(&str_list(&cfg, "prior")?, model.space())?;
    let loss_text = req_str(&cfg, "loss")?;

    let (seed, result) = match which {
        EstimateCmd::Mle(_) => {
            let opt = optimizer_from_cfg(&cfg, opt_u64(&cfg, "seed")?.unwrap_or(0))?;
            let est = mle_estimate(model.as_ref(), &sample, &init, &opt)?;
            (opt_u64(&cfg, "seed")?, to_value(&est)?)
        }
        EstimateCmd::Bayes(_) => {
            let seed = req_seed(&cfg)?;
            let opt = optimizer_from_cfg(&cfg, seed)?;
            let loss = parse_loss_spec(&loss_text, model.space().d())?;
            let prior = log_prior_from_terms(terms);
            let est = bayes_estimate_from(model.as_ref(), &sample, &prior, &loss, &init, &opt)?;
            (Some(seed), to_value(&est)?)
        }
        EstimateCmd::Hybrid(_) => {
            let seed = req_seed(&cfg)?;
            let opt = optimizer_from_cfg(&cfg, seed)?;
            let d1 = model.space().d1;
            if let Some(t) = terms.iter().find(|t| t.index >= d1) {
                return Err(CliError::Config(format!(
                    "key \"prior\": parameter \"{}\" is outside the Bayes block \
                     (first {d1} coordinates)",
                    model.space().names[t.index]
                )));
            }
            let loss = parse_loss_spec(&loss_text, d1)?;
            let prior = log_prior_from_terms(terms);
            let est = hybrid_estimate(model.as_ref(), &sample, &prior, &loss, &init, &opt)?;
            (Some(seed), to_value(&est)?)
        }
    };
    emit(label, &cfg, seed, result)
}

const EXPAND_KEYS: &[&str] = &[
    "out", "format", "seed", "model", "data", "theta0", "prior", "loss",
];

fn expansion_result(terms: &ExpansionTerms) -> Value {
    serde_json::json!({
        "terms": terms.terms.iter().map(|t| t.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
        "q1": terms.q1.as_ref().map(|v| v.iter().copied().collect::<Vec<f64>>()),
        "q2": terms.q2.as_ref().map(|v| v.iter().copied().collect::<Vec<f64>>()),
    })
}

fn run_expand(which: ExpandCmd) -> Result<(), CliError> {
    let (label, args) = match &which {
        ExpandCmd::Mle(a) => ("expand mle", a),
        ExpandCmd::Map(a) => ("expand map", a),
        ExpandCmd::Bayes(a) => ("expand bayes", a),
        ExpandCmd::Hybrid(a) => ("expand hybrid", a),
    };
    let mut cfg = merged_config(&args.common, EXPAND_KEYS)?;
    set_string(&mut cfg, "model", &args.model);
    set_path(&mut cfg, "data", &args.data);
    set_string(&mut cfg, "theta0", &args.theta0);
    set_string_list(&mut cfg, "prior", &args.prior);
    set_string(&mut cfg, "loss", &args.loss);
    default_string(&mut cfg, "loss", "squared");

    let model = build_model(&req_str(&cfg, "model")?)?;
    let data = req_str(&cfg, "data")?;
    let sample = ingest_csv(Path::new(&data))?;
    let theta0 = f64_list(&cfg, "theta0")?
        .ok_or_else(|| CliError::Config("missing required key \"theta0\"".into()))?;
    if theta0.len() != model.space().d() {
        return Err(CliError::Config(format!(
            "key \"theta0\": expected {} values, got {}",
            model.space().d(),
            theta0.len()
        )));
    }
    let stats = empirical_stats(model.as_ref(), &sample, &theta0, 3)?;
    let prior_terms = parse_prior_specs(&str_list(&cfg, "prior")?, model.space())?;
    let loss_text = req_str(&cfg, "loss")?;
    let d = model.space().d();
    let d1 = model.space().d1;

    let terms = match which {
        ExpandCmd::Mle(_) => mle_terms(&stats)?,
        ExpandCmd::Map(_) => {
            let prior = prior_derivs_from_terms(&theta0, &prior_terms, d);
            map_terms(&stats, &prior)?
        }
        ExpandCmd::Bayes(_) => {
            let prior = prior_derivs_from_terms(&theta0, &prior_terms, d);
            let loss = parse_loss_exponents(&loss_text, d)?;
            bayes_terms(&stats, &prior, &loss)?
        }
        ExpandCmd::Hybrid(_) => {
            if let Some(t) = prior_terms.iter().find(|t| t.index >= d1) {
                return Err(CliError::Config(format!(
                    "key \"prior\": parameter \"{}\" is outside the Bayes block",
                    model.space().names[t.index]
                )));
            }
            let prior = prior_derivs_from_terms(&theta0, &prior_terms, d1);
            let loss = parse_loss_exponents(&loss_text, d1)?;
            hybrid_terms(&stats, &prior, &loss)?
        }
    };
    emit(label, &cfg, None, expansion_result(&terms))
}

const EAB_KEYS: &[&str] = &[
    "out", "format", "seed", "model", "theta0", "prior", "loss", "norm", "oracle_draws",
];

fn run_eab(args: EabArgs) -> Result<(), CliError> {
    let mut cfg = merged_config(&args.common, EAB_KEYS)?;
    set_string(&mut cfg, "model", &args.model);
    set_string(&mut cfg, "theta0", &args.theta0);
    set_string_list(&mut cfg, "prior", &args.prior);
    set_string(&mut cfg, "loss", &args.loss);
    set_string(&mut cfg, "norm", &args.norm);
    set_usize(&mut cfg, "oracle_draws", args.oracle_draws);
    default_string(&mut cfg, "loss", "squared");
    default_string(&mut cfg, "norm", "euclidean");

    let model = build_model(&req_str(&cfg, "model")?)?;
    let theta0 = f64_list(&cfg, "theta0")?
        .ok_or_else(|| CliError::Config("missing required key \"theta0\"".into()))?;
    if theta0.len() != model.space().d() {
        return Err(CliError::Config(format!(
            "key \"theta0\": expected {} values, got {}",
            model.space().d(),
            theta0.len()
        )));
    }
    let prior_terms = parse_prior_specs(&str_list(&cfg, "prior")?, model.space())?;
    let loss_text = req_str(&cfg, "loss")?;
    let norm = parse_norm(&req_str(&cfg, "norm")?)?;
    let oracle_draws = opt_u64(&cfg, "oracle_draws")?.map(|x| x as usize);
    let seed = if oracle_draws.is_some() {
        Some(req_seed(&cfg)?)
    } else {
        opt_u64(&cfg, "seed")?
    };

    let d = model.space().d();
    let d1 = model.space().d1;
    let with_prior = !prior_terms.is_empty();
    let full_prior = prior_derivs_from_terms(&theta0, &prior_terms, d);
    let full_loss = parse_loss_exponents(&loss_text, d)?;
    let alpha_inputs = if with_prior && d1 >= 1 && d1 < d && prior_terms.iter().all(|t| t.index < d1)
    {
        Some((
            prior_derivs_from_terms(&theta0, &prior_terms, d1),
            parse_loss_exponents("squared", d1)?,
        ))
    } else {
        None
    };
    let opts = EabOptions {
        bayes: if with_prior {
            Some((&full_prior, &full_loss))
        } else {
            None
        },
        hybrid: alpha_inputs.as_ref().map(|(p, l)| (p, l)),
        oracle_draws,
        seed: seed.unwrap_or(0),
        norm,
    };
    let report = eab_report(model.as_ref(), &theta0, &opts)?;
    emit("eab", &cfg, seed, to_value(&report)?)
}

const PRIOR_KEYS: &[&str] = &[
    "out", "format", "seed", "model", "theta", "loss", "span", "points",
];

/// Axis-aligned grid: every coordinate varied one at a time around theta.
fn axis_grid(theta: &[f64], space: &ParamSpace, span: f64, points: usize) -> Vec<Vec<f64>> {
    let mut grid = vec![theta.to_vec()];
    for j in 0..theta.len() {
        for s in 0..points {
            let frac = (s as f64 + 1.0) / points as f64;
            for sign in [-1.0, 1.0] {
                let mut t = theta.to_vec();
                t[j] += sign * frac * span;
                space.project(&mut t);
                if space.contains(&t) && !grid.iter().any(|g| g == &t) {
                    grid.push(t);
                }
            }
        }
    }
    grid
}

fn run_prior(which: PriorCmd) -> Result<(), CliError> {
    let (label, args) = match &which {
        PriorCmd::Match(a) => ("prior match", a),
        PriorCmd::Jeffreys(a) => ("prior jeffreys", a),
        PriorCmd::Check(a) => ("prior check", a),
    };
    let mut cfg = merged_config(&args.common, PRIOR_KEYS)?;
    set_string(&mut cfg, "model", &args.model);
    set_string(&mut cfg, "theta", &args.theta);
    set_string(&mut cfg, "loss", &args.loss);
    set_f64(&mut cfg, "span", args.span);
    set_usize(&mut cfg, "points", args.points);
    default_string(&mut cfg, "loss", "squared");

    let model = build_model(&req_str(&cfg, "model")?)?;
    let theta = f64_list(&cfg, "theta")?
        .ok_or_else(|| CliError::Config("missing required key \"theta\"".into()))?;
    if theta.len() != model.space().d() {
        return Err(CliError::Config(format!(
            "key \"theta\": expected {} values, got {}",
            model.space().d(),
            theta.len()
        )));
    }
    if !model.space().contains(&theta) {
        return Err(CliError::Config(
            "key \"theta\": point is outside the parameter space".into(),
        ));
    }
    let span = opt_f64(&cfg, "span")?.unwrap_or(0.4);
    let points = opt_u64(&cfg, "points")?.unwrap_or(4) as usize;
    if span <= 0.0 || points == 0 {
        return Err(CliError::Config(
            "key \"span\"/\"points\" must be positive".into(),
        ));
    }
    let grid = axis_grid(&theta, model.space(), span, points);

    let result = match which {
        PriorCmd::Match(_) => {
            let loss = parse_loss_exponents(&req_str(&cfg, "loss")?, model.space().d())?;
            let field = drift_field(model.as_ref(), loss)?;
            let solution = solve_prior(&field, theta.clone(), &grid, 1e-6)?;
            let mut table = Vec::new();
            for point in &grid {
                table.push(serde_json::json!({
                    "theta": point,
                    "log_pi": solution.logpi(point)?,
                }));
            }
            serde_json::json!({
                "reference": theta,
                "curl_max_violation": solution.curl_report.max_violation,
                "grid": table,
            })
        }
        PriorCmd::Jeffreys(_) => {
            let mut table = Vec::new();
            for point in &grid {
                table.push(serde_json::json!({
                    "theta": point,
                    "log_pi": jeffreys_log_prior(model.as_ref(), point)?,
                }));
            }
            serde_json::json!({ "grid": table })
        }
        PriorCmd::Check(_) => {
            let report = example1_premise_check(model.as_ref(), &grid, 1e-4)?;
            serde_json::json!({
                "holds": report.holds,
                "max_rel_gap": report.max_rel_gap,
                "worst_ratio": report.worst_ratio,
                "jeffreys_gap": report.jeffreys_gap,
            })
        }
    };
    emit(label, &cfg, None, result)
}

const SIMULATE_KEYS: &[&str] = &["out", "format", "seed", "n", "reps"];

fn run_simulate(which: SimulateCmd) -> Result<(), CliError> {
    let (label, args, table1) = match &which {
        SimulateCmd::Table1(a) => ("simulate table1", a, true),
        SimulateCmd::Consistency(a) => ("simulate consistency", a, false),
    };
    let mut cfg = merged_config(&args.common, SIMULATE_KEYS)?;
    set_string(&mut cfg, "n", &args.n);
    set_usize(&mut cfg, "reps", args.reps);
    let seed = req_seed(&cfg)?;

    let mut sim = if table1 {
        SimConfig::table1(seed)
    } else {
        SimConfig::consistency(seed)
    };
    if let Some(n) = usize_list(&cfg, "n")? {
        sim.n = n;
    }
    if let Some(reps) = opt_u64(&cfg, "reps")? {
        sim.reps = Some(reps as usize);
    }
    sim.validate()?;
    let report = if table1 {
        run_table1(&sim)?
    } else {
        run_consistency(&sim)?
    };
    let format = match opt_str(&cfg, "format")?.as_deref() {
        None | Some("json") => ReportFormat::Json,
        Some("csv") => ReportFormat::Csv,
        Some(other) => {
            return Err(CliError::Config(format!(
                "key \"format\": \"{other}\" must be json or csv"
            )))
        }
    };
    match opt_str(&cfg, "out")? {
        Some(path) => {
            let path = resolve_out(Path::new(&path));
            export_report(&report, &path, format)?;
        }
        None => {
            if format == ReportFormat::Csv {
                return Err(CliError::Config(
                    "key \"out\" is required for csv format".into(),
                ));
            }
            emit(label, &cfg, Some(seed), to_value(&report)?)?;
        }
    }
    Ok(())
}

const DEMO_KEYS: &[&str] = &["out", "format", "seed", "n", "truth", "c"];

fn run_demo(which: DemoCmd) -> Result<(), CliError> {
    let (label, args, ferguson) = match &which {
        DemoCmd::Ferguson(a) => ("demo ferguson", a, true),
        DemoCmd::Schwartz(a) => ("demo schwartz", a, false),
    };
    let mut cfg = merged_config(&args.common, DEMO_KEYS)?;
    set_usize(&mut cfg, "n", args.n);
    set_f64(&mut cfg, "truth", args.truth);
    set_f64(&mut cfg, "c", args.c);
    let seed = req_seed(&cfg)?;
    let n = opt_u64(&cfg, "n")?.unwrap_or(500) as usize;
    if n < 2 {
        return Err(CliError::Config("key \"n\" must be at least 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let result = if ferguson {
        let c = opt_f64(&cfg, "c")?.unwrap_or(3.0);
        let truth = opt_f64(&cfg, "truth")?.unwrap_or(0.5);
        let model = Ferguson::new(c);
        if !model.space().contains(&[truth]) {
            return Err(CliError::Config(
                "key \"truth\" must lie in [0, 1) for ferguson".into(),
            ));
        }
        let sample = model.sample(&[truth], n, &mut rng);
        let mle = ferguson_mle(&sample, c)?;
        let bayes = ferguson_bayes(&sample, c)?;
        serde_json::json!({
            "model": "ferguson", "c": c, "truth": truth, "n": n,
            "mle": mle, "bayes": bayes,
            "note": "the maximum likelihood estimate drifts toward 1 as n grows regardless of the truth; the posterior mean stays near the truth",
        })
    } else {
        let truth = opt_f64(&cfg, "truth")?.unwrap_or(1.0);
        let model = Schwartz::new();
        if !(1.0..2.0).contains(&truth) {
            return Err(CliError::Config(
                "key \"truth\" must lie in [1, 2) for schwartz".into(),
            ));
        }
        let sample = model.sample(&[truth], n, &mut rng);
        let (mle, bayes) = schwartz_estimators(&sample)?;
        serde_json::json!({
            "model": "schwartz", "truth": truth, "n": n,
            "mle": mle, "bayes": bayes,
            "note": "at truth 1 the maximum likelihood estimate is consistent while the flat-prior posterior mean converges to 2",
        })
    };
    emit(label, &cfg, Some(seed), result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> i32 {
        let argv: Vec<String> = std::iter::once("hybrid-infer".to_string())
            .chain(args.iter().map(|s| s.to_string()))
            .collect();
        parse_and_dispatch(argv)
    }

    fn tmpdir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("hybrid_infer_cli_tests").join(name);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    fn write_fixture_csv(dir: &Path) -> PathBuf {
        let path = dir.join("d.csv");
        std::fs::write(&path, "1\n2\n3\n").unwrap();
        path
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(&["--help"]), 0);
        assert_eq!(run(&["estimate", "--help"]), 0);
    }

    #[test]
    fn unknown_subcommand_exits_two() {
        assert_eq!(run(&["frobnicate"]), 2);
    }

    #[test]
    fn missing_seed_on_simulate_names_the_key() {
        assert_eq!(run(&["simulate", "table1", "--n", "60", "--reps", "1"]), 2);
        let cfg = Cfg::new();
        let err = req_seed(&cfg).unwrap_err();
        assert!(err.message().contains("seed"));
    }

    #[test]
    fn estimate_mle_matches_closed_form() {
        let dir = tmpdir("mle");
        let data = write_fixture_csv(&dir);
        let out = dir.join("r.json");
        let code = run(&[
            "estimate",
            "mle",
            "--model",
            "gauss2",
            "--data",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let theta = report["result"]["theta"].as_array().unwrap();
        assert!((theta[0].as_f64().unwrap() - 2.0).abs() < 1e-8);
        assert!((theta[1].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-8);
        assert_eq!(report["version"].as_str().unwrap(), VERSION);
    }

    #[test]
    fn estimate_hybrid_mu_matches_conjugate_closed_form() {
        let dir = tmpdir("hybrid");
        let data = write_fixture_csv(&dir);
        let out = dir.join("r.json");
        let code = run(&[
            "estimate",
            "hybrid",
            "--model",
            "gauss2",
            "--data",
            data.to_str().unwrap(),
            "--prior",
            "mu:normal:0:1",
            "--loss",
            "squared",
            "--seed",
            "1",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let mu = report["result"]["alpha_hat"][0].as_f64().unwrap();
        // Conjugate posterior mean with sigma^2 at the profile value.
        let sigma2 = report["result"]["beta_hat"][0].as_f64().unwrap();
        let expected = (3.0 * 2.0 / sigma2) / (3.0 / sigma2 + 1.0);
        let se = 3.0 * (sigma2 / (3.0 + sigma2)).sqrt() / (report["result"]["iterations"].as_u64().unwrap() as f64).max(1.0).sqrt();
        assert!(
            (mu - expected).abs() < 0.05 + se,
            "mu {mu} expected {expected}"
        );
    }

    #[test]
    fn estimate_bayes_requires_seed() {
        let dir = tmpdir("bayes_seed");
        let data = write_fixture_csv(&dir);
        let code = run(&[
            "estimate",
            "bayes",
            "--model",
            "gauss2",
            "--data",
            data.to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn simulate_table1_is_byte_identical_across_runs() {
        let dir = tmpdir("sim");
        let out1 = dir.join("r1.json");
        let out2 = dir.join("r2.json");
        for out in [&out1, &out2] {
            let code = run(&[
                "simulate",
                "table1",
                "--n",
                "60",
                "--reps",
                "2",
                "--seed",
                "7",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0);
        }
        let a = std::fs::read(&out1).unwrap();
        let b = std::fs::read(&out2).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }

    #[test]
    fn config_file_merges_and_flags_win() {
        let dir = tmpdir("cfgmerge");
        let data = write_fixture_csv(&dir);
        let cfg_path = dir.join("c.json");
        std::fs::write(
            &cfg_path,
            format!(
                "{{\"model\": \"gauss1\", \"data\": \"{}\"}}",
                data.display()
            ),
        )
        .unwrap();
        let out = dir.join("r.json");
        // Flag overrides the model from the file.
        let code = run(&[
            "estimate",
            "mle",
            "--config",
            cfg_path.to_str().unwrap(),
            "--model",
            "gauss2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report["config"]["model"].as_str().unwrap(), "gauss2");
        assert_eq!(report["result"]["theta"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn duplicate_config_key_is_rejected_with_name() {
        let err = parse_flat_config("{\"model\": \"gauss2\", \"model\": \"gauss1\"}").unwrap_err();
        assert_eq!(err.code(), 2);
        assert!(err.message().contains("model"));
    }

    #[test]
    fn config_parse_error_reports_line() {
        let err = parse_flat_config("{\n\"model\": gauss2\n}").unwrap_err();
        assert!(err.message().contains("line 2"), "{}", err.message());
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tmpdir("unknown");
        let cfg_path = dir.join("c.json");
        std::fs::write(&cfg_path, "{\"modle\": \"gauss2\"}").unwrap();
        let code = run(&["estimate", "mle", "--config", cfg_path.to_str().unwrap()]);
        assert_eq!(code, 2);
    }

    #[test]
    fn empty_config_file_plus_flags_works() {
        let dir = tmpdir("emptycfg");
        let data = write_fixture_csv(&dir);
        let cfg_path = dir.join("c.json");
        std::fs::write(&cfg_path, "").unwrap();
        let out = dir.join("r.json");
        let code = run(&[
            "estimate",
            "mle",
            "--config",
            cfg_path.to_str().unwrap(),
            "--model",
            "gauss2",
            "--data",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }

    #[test]
    fn embedded_config_round_trips_as_flat_json() {
        let dir = tmpdir("roundtrip");
        let data = write_fixture_csv(&dir);
        let out = dir.join("r.json");
        let code = run(&[
            "estimate",
            "mle",
            "--model",
            "gauss2",
            "--data",
            data.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let echoed = serde_json::to_string(&report["config"]).unwrap();
        let reparsed = parse_flat_config(&echoed).unwrap();
        let original: Cfg = serde_json::from_value(report["config"].clone()).unwrap();
        assert_eq!(reparsed, original);
        // Re-running from the embedded config reproduces the report byte for byte.
        let cfg_path = dir.join("echo.json");
        std::fs::write(&cfg_path, &echoed).unwrap();
        let out2 = dir.join("r2.json");
        let code = run(&[
            "estimate",
            "mle",
            "--config",
            cfg_path.to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let a = std::fs::read_to_string(&out).unwrap();
        let b = std::fs::read_to_string(&out2).unwrap();
        let va: Value = serde_json::from_str(&a).unwrap();
        let vb: Value = serde_json::from_str(&b).unwrap();
        assert_eq!(va["result"], vb["result"]);
    }

    #[test]
    fn out_dir_env_var_resolves_relative_paths() {
        let dir = tmpdir("envout");
        std::env::set_var(OUT_DIR_ENV, dir.to_str().unwrap());
        let resolved = resolve_out(Path::new("x.json"));
        std::env::remove_var(OUT_DIR_ENV);
        assert_eq!(resolved, dir.join("x.json"));
        assert_eq!(resolve_out(&dir.join("y.json")), dir.join("y.json"));
    }

    #[test]
    fn prior_check_reports_exprate_pass_and_poisson_ratio() {
        let dir = tmpdir("priorcheck");
        let out = dir.join("exprate.json");
        let code = run(&[
            "prior",
            "check",
            "--model",
            "exprate",
            "--theta",
            "1.0",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert!(report["result"]["holds"].as_bool().unwrap());
        let out2 = dir.join("poisson.json");
        let code = run(&[
            "prior",
            "check",
            "--model",
            "poisson",
            "--theta",
            "1.0",
            "--out",
            out2.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&out2).unwrap()).unwrap();
        assert!(!report["result"]["holds"].as_bool().unwrap());
        let ratio = report["result"]["worst_ratio"].as_f64().unwrap();
        assert!((ratio - 2.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn expand_mle_runs_on_fixture() {
        let dir = tmpdir("expand");
        let data = write_fixture_csv(&dir);
        let out = dir.join("r.json");
        let code = run(&[
            "expand",
            "mle",
            "--model",
            "gauss2",
            "--data",
            data.to_str().unwrap(),
            "--theta0",
            "2.0,0.6666666666666666",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report["result"]["terms"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn eab_gauss1_is_zero_vector() {
        let dir = tmpdir("eab");
        let out = dir.join("r.json");
        let code = run(&[
            "eab",
            "--model",
            "gauss1",
            "--theta0",
            "0.5",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let mle = report["result"]["eab_mle"].as_array().unwrap();
        assert!(mle[0].as_f64().unwrap().abs() < 1e-10);
    }

    #[test]
    fn demo_schwartz_is_deterministic_and_near_closed_forms() {
        let dir = tmpdir("demo");
        let out = dir.join("r.json");
        let mut bytes = Vec::new();
        for pass in 0..2 {
            let code = run(&[
                "demo",
                "schwartz",
                "--n",
                "200",
                "--seed",
                "11",
                "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(code, 0);
            bytes.push(std::fs::read(&out).unwrap());
            assert!(!bytes[pass].is_empty());
        }
        assert_eq!(bytes[0], bytes[1]);
        let report: Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        assert!((report["result"]["mle"].as_f64().unwrap() - 1.0).abs() < 0.05);
        assert!(report["result"]["bayes"].as_f64().unwrap() > 1.8);
    }

    #[test]
    fn unknown_model_name_exits_two() {
        let dir = tmpdir("badmodel");
        let data = write_fixture_csv(&dir);
        let code = run(&[
            "estimate",
            "mle",
            "--model",
            "gauss7",
            "--data",
            data.to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn missing_data_file_exits_three() {
        let code = run(&[
            "estimate",
            "mle",
            "--model",
            "gauss2",
            "--data",
            "/nonexistent/never.csv",
        ]);
        assert_eq!(code, 3);
    }
}
