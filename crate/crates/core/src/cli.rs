//! Command-line entry point.
//!
//! Every subcommand writes its artifacts under `--out <dir>` together with a
//! `manifest.json` holding the resolved configuration, the seed, sha256
//! digests of the inputs and of every artifact, and the tool version. The
//! manifest carries no timestamps, so identical inputs give identical bytes.
//!
//! Configuration comes from an optional TOML file (`--config`) with the
//! sections `[synth]`, `[model]`, `[train]`, `[split]` and `[backtest]`,
//! whose keys are the fields of the corresponding config structs. Flags
//! override file values.
//!
//! Errors are printed as one line, `error: <kind>: <message>`. Usage errors
//! exit with 2, failed preconditions with 1.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::{run_topk, BacktestConfig, Benchmark};
use crate::dataio::{rolling_splits, MarketPanel, PriorExposure, SplitPlan, SplitSpec, DATE_FORMAT};
use crate::eval::{metric_report, write_ablation_csv, MetricReport, PredictionTable};
use crate::model::{ModelConfig, ModelParams, Variant};
use crate::synthgen::{generate_market, SynthSpec};
use crate::train::{predict_range, run_rolling, TrainConfig, TrainData};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "factorgcl", version, about = "Hypergraph factor model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic market with known factor structure.
    Gen(GenArgs),
    /// Train one model per rolling triple and predict each test range.
    Train(TrainArgs),
    /// Predict a date range from a checkpoint.
    Predict(PredictArgs),
    /// IC/ICIR of a prediction file, or train and compare model variants.
    Eval(EvalArgs),
    /// TopK backtest of a prediction file.
    Backtest(BacktestArgs),
    /// Train across a grid of hidden-factor counts and tabulate test IC.
    SweepHidden(SweepArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for data generation, initialization and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Number of stocks.
    #[arg(long)]
    n: Option<usize>,
    /// Number of trading days.
    #[arg(long)]
    days: Option<usize>,
    /// Number of industries.
    #[arg(long)]
    n_prior: Option<usize>,
    /// Number of hidden factors.
    #[arg(long)]
    n_hidden: Option<usize>,
    /// AR(1) coefficient of the factor returns.
    #[arg(long)]
    persistence: Option<f64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Market panel CSV.
    #[arg(long)]
    panel: PathBuf,
    /// Prior factor exposure CSV.
    #[arg(long)]
    prior: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Training days per epoch, 0 for all.
    #[arg(long)]
    days_per_epoch: Option<usize>,
    /// Validation days per epoch, 0 for all.
    #[arg(long)]
    valid_days: Option<usize>,
    /// Number of hidden factors.
    #[arg(long)]
    n_factors: Option<usize>,
    /// Use only the first N rolling triples.
    #[arg(long)]
    max_triples: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// First anchor date (inclusive), YYYY-MM-DD.
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Last anchor date (inclusive), YYYY-MM-DD.
    #[arg(long)]
    to: Option<NaiveDate>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Prediction CSV to evaluate.
    #[arg(long, conflicts_with = "ablation")]
    predictions: Option<PathBuf>,
    /// `all` or a comma-separated list of variants to train and compare.
    #[arg(long, requires = "panel")]
    ablation: Option<String>,
    #[arg(long, requires = "prior")]
    panel: Option<PathBuf>,
    #[arg(long)]
    prior: Option<PathBuf>,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    panel: PathBuf,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    delta_t: Option<usize>,
    #[arg(long)]
    cost_rate: Option<f64>,
    /// Prediction horizon used for ranking.
    #[arg(long)]
    horizon: Option<usize>,
    /// Benchmark CSV `date,return`; the equal-weighted universe otherwise.
    #[arg(long)]
    benchmark: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated hidden-factor counts.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<usize>,
    #[command(flatten)]
    fit: FitArgs,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub synth: SynthSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub backtest: BacktestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<FileDigest>,
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    msg: String,
}

impl CliError {
    fn new(kind: &'static str, msg: impl std::fmt::Display) -> Self {
        Self {
            kind,
            msg: msg.to_string(),
        }
    }
}

fn fail<E: std::fmt::Display>(kind: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::new(kind, e)
}

type CliResult<T> = Result<T, CliError>;

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
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
    let res = match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Backtest(a) => backtest(a),
        Command::SweepHidden(a) => sweep_hidden(a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.msg.split_whitespace().collect::<Vec<_>>().join(" ");
            eprintln!("error: {}: {msg}", e.kind);
            1
        }
    }
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digest(path: &Path) -> CliResult<FileDigest> {
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// Output directory bound to one subcommand. A directory that already holds
/// a manifest of a different subcommand is refused.
struct OutDir {
    root: PathBuf,
    command: &'static str,
    artifacts: Vec<String>,
}

impl OutDir {
    fn open(root: &Path, command: &'static str) -> CliResult<Self> {
        let manifest = root.join(MANIFEST);
        if manifest.exists() {
            let text = fs::read_to_string(&manifest).map_err(fail("io"))?;
            let prev: RunManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::new("manifest", format!("{}: {e}", manifest.display())))?;
            if prev.command != command {
                return Err(CliError::new(
                    "manifest",
                    format!("{} holds `{}` output, refusing to write `{command}` output", root.display(), prev.command),
                ));
            }
        }
        fs::create_dir_all(root).map_err(|e| CliError::new("io", format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            command,
            artifacts: Vec::new(),
        })
    }

    /// Creates `rel` (and its parent directories) and registers it.
    fn create(&mut self, rel: &str) -> CliResult<BufWriter<File>> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(fail("io"))?;
        }
        self.artifacts.push(rel.to_string());
        let f = File::create(&path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    fn register(&mut self, rel: &str) -> PathBuf {
        self.artifacts.push(rel.to_string());
        self.root.join(rel)
    }

    fn finish(self, seed: Option<u64>, config: impl Serialize, inputs: &[&Path]) -> CliResult<()> {
        let mut artifacts = Vec::with_capacity(self.artifacts.len());
        for rel in &self.artifacts {
            artifacts.push(FileDigest {
                path: rel.clone(),
                sha256: sha256_file(&self.root.join(rel))?,
            });
        }
        let manifest = RunManifest {
            tool: "factorgcl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command.into(),
            seed,
            config: serde_json::to_value(config).map_err(fail("manifest"))?,
            inputs: inputs.iter().map(|p| digest(p)).collect::<CliResult<_>>()?,
            artifacts,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(fail("manifest"))?;
        fs::write(self.root.join(MANIFEST), text + "\n").map_err(fail("io"))
    }
}

fn flush(w: BufWriter<File>) -> CliResult<()> {
    w.into_inner().map_err(|e| CliError::new("io", e.error()))?;
    Ok(())
}

fn gen(a: GenArgs) -> CliResult<()> {
    let mut out = OutDir::open(&a.common.out, "gen")?;
    let mut spec = load_config(a.common.config.as_deref())?.synth;
    if let Some(s) = a.common.seed {
        spec.seed = s;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {$(if let Some(v) = a.$flag { spec.$field = v; })*};
    }
    set!(n => n_stocks, days => days, n_prior => n_prior, n_hidden => n_hidden, persistence => persistence);
    let (panel, prior, truth) = generate_market(&spec).map_err(fail("precondition"))?;
    let p = out.register("panel.csv");
    panel.save(&p).map_err(fail("io"))?;
    let p = out.register("prior.csv");
    prior.save(&p, panel.tickers()).map_err(fail("io"))?;
    let mut w = out.create("truth_loadings.csv")?;
    truth.write_loadings(&mut w, panel.tickers()).map_err(fail("io"))?;
    flush(w)?;
    let mut w = out.create("truth_factor_returns.csv")?;
    truth.write_factor_returns(&mut w, panel.dates()).map_err(fail("io"))?;
    flush(w)?;
    out.finish(Some(spec.seed), &spec, &[])
}

struct Loaded {
    panel: MarketPanel,
    prior: PriorExposure,
}

fn load_data(panel: &Path, prior: &Path) -> CliResult<Loaded> {
    let panel = MarketPanel::load(panel).map_err(fail("data"))?;
    let prior = PriorExposure::load(prior, panel.tickers()).map_err(fail("data"))?;
    Ok(Loaded { panel, prior })
}

fn resolve_fit(cfg: &mut RunConfig, seed: Option<u64>, fit: &FitArgs) {
    if let Some(s) = seed {
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    if let Some(v) = fit.variant {
        cfg.model.variant = v;
    }
    if let Some(v) = fit.n_factors {
        cfg.model.n_factors = v;
    }
    if let Some(v) = fit.epochs {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = fit.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = fit.days_per_epoch {
        cfg.train.days_per_epoch = v;
    }
    if let Some(v) = fit.valid_days {
        cfg.train.valid_days = v;
    }
}

fn plan(panel: &MarketPanel, spec: &SplitSpec, max_triples: Option<usize>) -> CliResult<SplitPlan> {
    let mut plan = rolling_splits(panel.n_dates(), spec).map_err(fail("precondition"))?;
    if let Some(k) = max_triples {
        if k == 0 {
            return Err(CliError::new("precondition", "--max-triples must be at least 1"));
        }
        plan.triples.truncate(k);
    }
    Ok(plan)
}

#[derive(Serialize)]
struct FitSnapshot<'a> {
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    split: &'a SplitSpec,
    max_triples: Option<usize>,
}

fn train(a: TrainArgs) -> CliResult<()> {
    let mut out = OutDir::open(&a.common.out, "train")?;
    let mut cfg = load_config(a.common.config.as_deref())?;
    resolve_fit(&mut cfg, a.common.seed, &a.fit);
    let data = load_data(&a.data.panel, &a.data.prior)?;
    let plan = plan(&data.panel, &cfg.split, a.fit.max_triples)?;
    let td = TrainData::new(&data.panel, &data.prior, &cfg.model.horizons);
    let outcome = run_rolling(&td, &plan, &cfg.model, &cfg.train).map_err(fail("train"))?;
    for (k, run) in outcome.runs.iter().enumerate() {
        let p = out.register(&format!("triple_{k}/checkpoint.json"));
        fs::create_dir_all(p.parent().expect("has parent")).map_err(fail("io"))?;
        run.params.save(&p).map_err(fail("io"))?;
        let mut w = out.create(&format!("triple_{k}/train_log.csv"))?;
        run.log.write_csv(&mut w).map_err(fail("io"))?;
        flush(w)?;
    }
    let p = out.register("predictions.csv");
    outcome.predictions.save(&p).map_err(fail("io"))?;
    let snapshot = FitSnapshot {
        model: &cfg.model,
        train: &cfg.train,
        split: &cfg.split,
        max_triples: a.fit.max_triples,
    };
    out.finish(a.common.seed, snapshot, &[&a.data.panel, &a.data.prior])
}

fn date_bound(panel: &MarketPanel, date: NaiveDate, upper: bool) -> usize {
    let dates = panel.dates();
    if upper {
        dates.partition_point(|d| *d <= date)
    } else {
        dates.partition_point(|d| *d < date)
    }
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let mut out = OutDir::open(&a.common.out, "predict")?;
    let params = ModelParams::load(&a.checkpoint).map_err(fail("checkpoint"))?;
    let data = load_data(&a.data.panel, &a.data.prior)?;
    let from = a.from.map_or(0, |d| date_bound(&data.panel, d, false));
    let to = a.to.map_or(data.panel.n_dates(), |d| date_bound(&data.panel, d, true));
    if from >= to {
        return Err(CliError::new("precondition", "empty date range"));
    }
    let td = TrainData::new(&data.panel, &data.prior, &params.config().horizons);
    let table = predict_range(&params, &td, &(from..to)).map_err(fail("predict"))?;
    if table.days.is_empty() {
        return Err(CliError::new("precondition", "no date in range has a full past window"));
    }
    let p = out.register("predictions.csv");
    table.save(&p).map_err(fail("io"))?;
    #[derive(Serialize)]
    struct Snap {
        from: Option<String>,
        to: Option<String>,
    }
    let fmt = |d: Option<NaiveDate>| d.map(|d| d.format(DATE_FORMAT).to_string());
    let snap = Snap {
        from: fmt(a.from),
        to: fmt(a.to),
    };
    out.finish(None, snap, &[&a.checkpoint, &a.data.panel, &a.data.prior])
}

fn write_report(out: &mut OutDir, report: &MetricReport, prefix: &str) -> CliResult<()> {
    let mut w = out.create(&format!("{prefix}metrics.csv"))?;
    report.write_csv(&mut w).map_err(fail("io"))?;
    flush(w)?;
    let mut w = out.create(&format!("{prefix}daily_ic.csv"))?;
    report.write_daily_csv(&mut w).map_err(fail("io"))?;
    flush(w)
}

fn parse_variants(s: &str) -> CliResult<Vec<Variant>> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    s.split(',')
        .map(|v| v.trim().parse::<Variant>().map_err(|e| CliError::new("usage", e)))
        .collect()
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let mut out = OutDir::open(&a.common.out, "eval")?;
    if let Some(path) = &a.predictions {
        let table = PredictionTable::load(path).map_err(fail("data"))?;
        let report = metric_report(&table, "predictions");
        write_report(&mut out, &report, "")?;
        return out.finish(None, serde_json::Value::Null, &[path]);
    }
    let (Some(spec), Some(panel), Some(prior)) = (a.ablation.as_deref(), &a.panel, &a.prior) else {
        return Err(CliError::new("usage", "eval needs --predictions or --ablation with --panel and --prior"));
    };
    let variants = parse_variants(spec)?;
    let mut cfg = load_config(a.common.config.as_deref())?;
    resolve_fit(&mut cfg, a.common.seed, &a.fit);
    let data = load_data(panel, prior)?;
    let plan = plan(&data.panel, &cfg.split, a.fit.max_triples)?;
    let td = TrainData::new(&data.panel, &data.prior, &cfg.model.horizons);
    let mut reports = Vec::with_capacity(variants.len());
    for v in &variants {
        let mcfg = ModelConfig {
            variant: *v,
            ..cfg.model.clone()
        };
        log::info!("ablation: training {v}");
        let outcome = run_rolling(&td, &plan, &mcfg, &cfg.train).map_err(fail("train"))?;
        reports.push(metric_report(&outcome.predictions, v.name()));
    }
    let mut w = out.create("ablation.csv")?;
    write_ablation_csv(&reports, &mut w).map_err(fail("io"))?;
    flush(w)?;
    for r in &reports {
        write_report(&mut out, r, &format!("{}/", r.tag))?;
    }
    let snapshot = FitSnapshot {
        model: &cfg.model,
        train: &cfg.train,
        split: &cfg.split,
        max_triples: a.fit.max_triples,
    };
    out.finish(a.common.seed, snapshot, &[panel.as_path(), prior.as_path()])
}

fn read_benchmark(path: &Path) -> CliResult<Vec<(NaiveDate, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::new("io", format!("{}: {e}", path.display())))?;
    let mut series = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(fail("data"))?;
        let bad = || CliError::new("data", format!("{} line {}: expected date,return", path.display(), i + 2));
        let date = NaiveDate::parse_from_str(rec.get(0).ok_or_else(bad)?, DATE_FORMAT).map_err(|_| bad())?;
        let ret: f64 = rec.get(1).ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
        series.push((date, ret));
    }
    Ok(series)
}

fn backtest(a: BacktestArgs) -> CliResult<()> {
    let mut out = OutDir::open(&a.common.out, "backtest")?;
    let mut cfg = load_config(a.common.config.as_deref())?.backtest;
    if let Some(v) = a.topk {
        cfg.topk = v;
    }
    if let Some(v) = a.delta_t {
        cfg.delta_t = v;
    }
    if let Some(v) = a.cost_rate {
        cfg.cost_rate = v;
    }
    if a.horizon.is_some() {
        cfg.horizon = a.horizon;
    }
    let mut inputs: Vec<&Path> = vec![&a.predictions, &a.panel];
    if let Some(b) = &a.benchmark {
        cfg.benchmark = Benchmark::External(read_benchmark(b)?);
        inputs.push(b);
    }
    let table = PredictionTable::load(&a.predictions).map_err(fail("data"))?;
    let panel = MarketPanel::load(&a.panel).map_err(fail("data"))?;
    let report = run_topk(&table, &panel, &cfg).map_err(fail("precondition"))?;
    let first = table.days[0].date;
    let mut w = out.create("curves.csv")?;
    report.write_curves_csv(&mut w, first).map_err(fail("io"))?;
    flush(w)?;
    let mut w = out.create("curves_compound.csv")?;
    report.write_compound_csv(&mut w).map_err(fail("io"))?;
    flush(w)?;
    let mut w = out.create("backtest_metrics.csv")?;
    report.write_metrics_csv(&mut w).map_err(fail("io"))?;
    flush(w)?;
    let p = out.register("events.txt");
    let mut events = report.events.join("\n");
    if !events.is_empty() {
        events.push('\n');
    }
    fs::write(p, events).map_err(fail("io"))?;
    // an external benchmark is recorded by digest rather than inline
    if matches!(cfg.benchmark, Benchmark::External(_)) {
        cfg.benchmark = Benchmark::External(Vec::new());
    }
    out.finish(None, &cfg, &inputs)
}

fn sweep_hidden(a: SweepArgs) -> CliResult<()> {
    if a.grid.iter().any(|m| *m == 0) {
        return Err(CliError::new("usage", "--grid values must be at least 1"));
    }
    let mut out = OutDir::open(&a.common.out, "sweep-hidden")?;
    let mut cfg = load_config(a.common.config.as_deref())?;
    resolve_fit(&mut cfg, a.common.seed, &a.fit);
    let data = load_data(&a.data.panel, &a.data.prior)?;
    let plan = plan(&data.panel, &cfg.split, a.fit.max_triples)?;
    let td = TrainData::new(&data.panel, &data.prior, &cfg.model.horizons);
    let mut w = out.create("sweep_hidden.csv")?;
    {
        let mut csv = csv::Writer::from_writer(&mut w);
        let mut header = vec!["n_factors".to_string()];
        header.extend(cfg.model.horizons.iter().map(|h| format!("ic_{h}")));
        header.push("mean_ic".into());
        csv.write_record(&header).map_err(fail("io"))?;
        for &m in &a.grid {
            let mcfg = ModelConfig {
                n_factors: m,
                ..cfg.model.clone()
            };
            log::info!("sweep: training with {m} hidden factors");
            let outcome = run_rolling(&td, &plan, &mcfg, &cfg.train).map_err(fail("train"))?;
            let report = metric_report(&outcome.predictions, &m.to_string());
            let ics: Vec<Option<f64>> = report.horizons.iter().map(|h| h.ic).collect();
            let defined: Vec<f64> = ics.iter().flatten().copied().collect();
            let mean = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
            let opt = |v: Option<f64>| v.map(crate::dataio::format_decimal).unwrap_or_default();
            let mut row = vec![m.to_string()];
            row.extend(ics.iter().map(|v| opt(*v)));
            row.push(opt(mean));
            csv.write_record(&row).map_err(fail("io"))?;
        }
        csv.flush().map_err(fail("io"))?;
    }
    flush(w)?;
    let snapshot = FitSnapshot {
        model: &cfg.model,
        train: &cfg.train,
        split: &cfg.split,
        max_triples: a.fit.max_triples,
    };
    #[derive(Serialize)]
    struct Snap<'a> {
        grid: &'a [usize],
        #[serde(flatten)]
        fit: FitSnapshot<'a>,
    }
    let snap = Snap {
        grid: &a.grid,
        fit: snapshot,
    };
    out.finish(a.common.seed, snap, &[&a.data.panel, &a.data.prior])
}
