//! Command-line front end. See the README for the full grammar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{
    align_and_split, format_timestamp, parse_bars, parse_time_bound, BarSeries, Frequency,
};
use crate::experiments::{
    run_experiment, run_portfolio, run_prediction, ExperimentConfig, PortfolioPanels,
    PortfolioParams, PredictionParams,
};
use crate::format::{num, round12};
use crate::gaussian::{
    feature_augmented_risk, output_augmented_risk, output_risk_kl, output_risk_w, regret,
    AugmentationMode, RiskDecomposition, RiskKind, TaskPairFile,
};
use crate::portfolio::OptimizerOptions;
use crate::ridge::MetricsReport;
use crate::signature::{coefficient_labels, path_signature, Path as SigPath};

/// Environment variable capping worker threads; `0` or unset means one per core.
pub const THREADS_ENV: &str = "TRANSFER_RISK_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "transfer-risk",
    version,
    about = "Transfer risk for Gaussian, signature-regression and portfolio transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form risks, regret and augmentation risks of a Gaussian task pair.
    GaussianRisk(GaussianRiskArgs),
    /// Truncated signature of a path read from CSV.
    Signature(SignatureArgs),
    /// Signature-feature ridge transfer for next-step return prediction.
    Predict(PredictArgs),
    /// Max-Sharpe portfolio transfer between two asset sets.
    Portfolio(PortfolioArgs),
    /// Run a seeded experiment described by a TOML config.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct GaussianRiskArgs {
    /// JSON file with `source`, `target` and optional `augmentation` blocks.
    #[arg(long)]
    spec: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SignatureArgs {
    /// CSV with a header; the first column is time, the rest are coordinates.
    #[arg(long)]
    input: PathBuf,
    /// Truncation order.
    #[arg(long)]
    order: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Bar CSV(s) of the source stocks; every symbol inside is a source.
    #[arg(long, required = true, num_args = 1..)]
    source: Vec<PathBuf>,
    /// Bar CSV holding exactly one target symbol.
    #[arg(long)]
    target: PathBuf,
    /// Window length of the signature features.
    #[arg(long, default_value_t = 5)]
    lag: usize,
    /// Signature truncation order.
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Ridge penalty of the pooled source fit.
    #[arg(long, default_value_t = 1.0)]
    lambda_s: f64,
    /// Penalty pulling the target fit towards the source coefficients.
    #[arg(long, default_value_t = 5.0)]
    lambda_t: f64,
    /// Ridge penalty of the direct target fit.
    #[arg(long, default_value_t = 1.0)]
    lambda_direct: f64,
    /// Returns closing before this time train the models.
    #[arg(long)]
    train_end: String,
    /// Exclusive end of the test period.
    #[arg(long)]
    test_end: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PortfolioArgs {
    /// Bar CSV of the source assets.
    #[arg(long)]
    source: PathBuf,
    /// Bar CSV of the target assets; matched to the sources by symbol order.
    #[arg(long)]
    target: PathBuf,
    /// Return frequency (1m, 5m, 10m, 30m, 65m, 130m, 1d).
    #[arg(long, default_value = "1d")]
    freq: Frequency,
    /// Source frequency when it differs from --freq.
    #[arg(long)]
    source_freq: Option<Frequency>,
    /// Penalty λ of ‖φ − φ_S‖².
    #[arg(long, default_value_t = 0.2)]
    lambda: f64,
    /// Annualization factor; defaults to the frequency's (252 per day).
    #[arg(long)]
    annualize: Option<f64>,
    /// Drop returns spanning two sessions.
    #[arg(long)]
    no_overnight: bool,
    /// Source and target training returns close before this time.
    #[arg(long)]
    train_end: String,
    /// Exclusive end of the target test period.
    #[arg(long)]
    test_end: Option<String>,
    /// Random starts of the optimizer.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    /// Seed of the random starts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// TOML config; relative paths inside resolve against its directory.
    #[arg(long)]
    config: PathBuf,
}

type CliResult<T> = std::result::Result<T, String>;

fn ctx<E: std::fmt::Display>(what: impl std::fmt::Display) -> impl FnOnce(E) -> String {
    move |e| format!("{what}: {e}")
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit status: 0 on success, 2 on a usage error, 1 on a runtime error.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|_| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(msg) => {
            eprintln!("error: {}", msg.replace('\n', " "));
            1
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a nonnegative integer, got '{raw}'"))?;
    if n > 0 {
        // A pool may already exist when called in-process more than once.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::GaussianRisk(a) => gaussian_risk(a),
        Command::Signature(a) => signature(a),
        Command::Predict(a) => predict(a),
        Command::Portfolio(a) => portfolio(a),
        Command::Experiment(a) => experiment(a),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(ctx(p.display())),
        None => std::io::stdout().write_all(bytes).map_err(ctx("stdout")),
    }
}

fn write_to(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let p = dir.join(name);
    fs::write(&p, bytes).map_err(ctx(p.display()))
}

fn pretty_json<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(v).map_err(ctx("json"))?;
    buf.push(b'\n');
    Ok(buf)
}

#[derive(Serialize)]
struct Decomposition {
    variance_term: f64,
    bias_term: f64,
    total: f64,
}

impl From<RiskDecomposition> for Decomposition {
    fn from(d: RiskDecomposition) -> Self {
        Self {
            variance_term: round12(d.variance_term),
            bias_term: round12(d.bias_term),
            total: round12(d.total),
        }
    }
}

#[derive(Serialize)]
struct AugmentationReport {
    mode: AugmentationMode,
    risk_kl: Decomposition,
    risk_w: Decomposition,
}

#[derive(Serialize)]
struct GaussianReport {
    risk_kl: Decomposition,
    risk_w: Decomposition,
    regret: f64,
    residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    augmentation: Option<AugmentationReport>,
}

fn gaussian_risk(a: GaussianRiskArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.spec).map_err(ctx(a.spec.display()))?;
    let pair: TaskPairFile = serde_json::from_str(&text).map_err(ctx(a.spec.display()))?;
    let source = pair.source.to_task().map_err(ctx("source"))?;
    let target = pair.target.to_task().map_err(ctx("target"))?;
    let reg = regret(&source, &target).map_err(ctx("regret"))?;
    let augmentation = match &pair.augmentation {
        None => None,
        Some(f) => {
            let aug = f
                .to_augmented(target.clone())
                .map_err(ctx("augmentation"))?;
            let risk = |kind| match f.mode {
                AugmentationMode::Feature => feature_augmented_risk(&source, &aug, kind),
                AugmentationMode::Output => {
                    let init = f
                        .init
                        .as_ref()
                        .ok_or_else(|| {
                            crate::gaussian::GaussianError::StructureMismatch(
                                "output mode needs init".into(),
                            )
                        })?
                        .to_model()?;
                    output_augmented_risk(&source, &aug, &init, kind)
                }
            };
            Some(AugmentationReport {
                mode: f.mode,
                risk_kl: risk(RiskKind::Kl).map_err(ctx("augmentation"))?.into(),
                risk_w: risk(RiskKind::W2).map_err(ctx("augmentation"))?.into(),
            })
        }
    };
    let report = GaussianReport {
        risk_kl: output_risk_kl(&source, &target)
            .map_err(ctx("KL risk"))?
            .into(),
        risk_w: output_risk_w(&source, &target)
            .map_err(ctx("W2 risk"))?
            .into(),
        regret: round12(reg.regret),
        residual: round12(reg.residual),
        augmentation,
    };
    emit(a.out.as_deref(), &pretty_json(&report)?)
}

fn signature(a: SignatureArgs) -> CliResult<()> {
    let where_ = a.input.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.input)
        .map_err(ctx(&where_))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(ctx(&where_))?;
        let nums: Vec<f64> = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(ctx(format!("{where_} line {}", i + 2)))?;
        if nums.len() < 2 {
            return Err(format!(
                "{where_} line {}: need a time and at least one coordinate",
                i + 2
            ));
        }
        times.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    let path = SigPath::new(times, values).map_err(ctx(&where_))?;
    let sig = path_signature(&path, a.order).map_err(ctx("signature"))?;
    let labels = coefficient_labels(path.dim(), a.order).map_err(ctx("signature"))?;
    let coeffs = sig.flatten(false);
    let mut out = labels.join(",");
    out.push('\n');
    out.push_str(&coeffs.iter().map(|c| num(*c)).collect::<Vec<_>>().join(","));
    out.push('\n');
    emit(a.out.as_deref(), out.as_bytes())
}

fn read_bars(path: &Path) -> CliResult<Vec<BarSeries>> {
    let f = fs::File::open(path).map_err(ctx(path.display()))?;
    parse_bars(f).map_err(ctx(path.display()))
}

fn time_bound(s: &str) -> CliResult<i64> {
    parse_time_bound(s).map_err(|e| e.to_string())
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(ctx(dir.display()))
}

#[derive(Serialize)]
struct Metrics {
    mse: f64,
    r2: f64,
    corr: f64,
}

impl From<MetricsReport> for Metrics {
    fn from(m: MetricsReport) -> Self {
        Self {
            mse: round12(m.mse),
            r2: round12(m.r2),
            corr: round12(m.corr),
        }
    }
}

#[derive(Serialize)]
struct PredictReport {
    sources: Vec<String>,
    target: String,
    n_test: usize,
    transfer_risk: f64,
    direct: Metrics,
    transfer: Metrics,
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let mut sources = Vec::new();
    for p in &a.source {
        sources.extend(read_bars(p)?);
    }
    let mut targets = read_bars(&a.target)?;
    if targets.len() != 1 {
        return Err(format!(
            "{}: expected exactly one symbol, found {}",
            a.target.display(),
            targets.len()
        ));
    }
    let target = targets.remove(0);
    let params = PredictionParams {
        lag: a.lag,
        order: a.order,
        lambda_s: a.lambda_s,
        lambda_t: a.lambda_t,
        lambda_direct: a.lambda_direct,
        train_end: time_bound(&a.train_end)?,
        test_end: a.test_end.as_deref().map(time_bound).transpose()?,
    };
    let refs: Vec<&BarSeries> = sources.iter().collect();
    let out = run_prediction(&refs, &target, &params).map_err(|e| e.to_string())?;

    create_dir(&a.out)?;
    let report = PredictReport {
        sources: sources.iter().map(|s| s.symbol().to_string()).collect(),
        target: target.symbol().to_string(),
        n_test: out.actual.len(),
        transfer_risk: round12(out.transfer_risk),
        direct: out.direct.into(),
        transfer: out.transfer.into(),
    };
    write_to(&a.out, "metrics.json", &pretty_json(&report)?)?;

    let mut pred = String::from("timestamp,actual,direct,transfer\n");
    for i in 0..out.actual.len() {
        pred.push_str(&format!(
            "{},{},{},{}\n",
            format_timestamp(out.test_timestamps[i]),
            num(out.actual[i]),
            num(out.direct_prediction[i]),
            num(out.transfer_prediction[i])
        ));
    }
    write_to(&a.out, "predictions.csv", pred.as_bytes())?;

    let labels = coefficient_labels(3, a.order).map_err(|e| e.to_string())?;
    let mut coef = String::from("feature,source,direct,transfer\n");
    for (k, &j) in out.transfer_model.kept_features().iter().enumerate() {
        coef.push_str(&format!(
            "{},{},{},{}\n",
            labels[j],
            num(out.source_model.theta[k]),
            num(out.direct_model.theta[k]),
            num(out.transfer_model.theta[k])
        ));
    }
    write_to(&a.out, "coefficients.csv", coef.as_bytes())
}

#[derive(Serialize)]
struct PortfolioReport {
    source_frequency: Frequency,
    target_frequency: Frequency,
    lambda: f64,
    r1: f64,
    r2: f64,
    transfer_risk: f64,
    source_sharpe: f64,
    direct_sharpe: f64,
    transfer_sharpe: f64,
}

fn portfolio(a: PortfolioArgs) -> CliResult<()> {
    let source = read_bars(&a.source)?;
    let target = read_bars(&a.target)?;
    if source.len() != target.len() {
        return Err(format!(
            "source has {} symbols, target has {}",
            source.len(),
            target.len()
        ));
    }
    let train_end = time_bound(&a.train_end)?;
    let test_end = a.test_end.as_deref().map(time_bound).transpose()?;
    let source_freq = a.source_freq.unwrap_or(a.freq);
    let overnight = !a.no_overnight;
    let (source_train, _) =
        align_and_split(&source, source_freq, overnight, train_end, None).map_err(ctx("source"))?;
    let (target_train, target_test) =
        align_and_split(&target, a.freq, overnight, train_end, test_end).map_err(ctx("target"))?;
    let panels = PortfolioPanels {
        source_train,
        target_train,
        target_test,
    };
    let params = PortfolioParams {
        lambda: a.lambda,
        source_annualization: a.annualize,
        target_annualization: a.annualize,
        options: OptimizerOptions {
            restarts: a.restarts,
            seed: a.seed,
            ..OptimizerOptions::default()
        },
    };
    let out = run_portfolio(&panels, &params).map_err(|e| e.to_string())?;

    create_dir(&a.out)?;
    let report = PortfolioReport {
        source_frequency: source_freq,
        target_frequency: a.freq,
        lambda: a.lambda,
        r1: round12(out.risk.r1),
        r2: round12(out.risk.r2),
        transfer_risk: round12(out.risk.total),
        source_sharpe: round12(out.source_sharpe),
        direct_sharpe: round12(out.direct_sharpe),
        transfer_sharpe: round12(out.transfer_sharpe),
    };
    write_to(&a.out, "report.json", &pretty_json(&report)?)?;
    let mut w = String::from("source_symbol,target_symbol,source,direct,transfer\n");
    for i in 0..source.len() {
        w.push_str(&format!(
            "{},{},{},{},{}\n",
            source[i].symbol(),
            target[i].symbol(),
            num(out.phi_source.weights()[i]),
            num(out.phi_direct.weights()[i]),
            num(out.phi_transfer.weights()[i])
        ));
    }
    write_to(&a.out, "weights.csv", w.as_bytes())
}

fn experiment(a: ExperimentArgs) -> CliResult<()> {
    let (config, base) = ExperimentConfig::load(&a.config).map_err(|e| e.to_string())?;
    let report = run_experiment(&config, &base).map_err(|e| e.to_string())?;
    println!(
        "{} trials, {} failed; wrote {}",
        report.rows.len(),
        report.failed(),
        report.output_dir.display()
    );
    Ok(())
}
