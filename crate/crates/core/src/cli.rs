//! The `sjive` command line: simulate, fit, predict, select, benchmark and evaluate.
//!
//! Every subcommand writes into `--out` a set of CSV files, a `manifest.txt`
//! of `key = value` lines (version, seed, the command line, runtime and
//! results) and a `config.toml` with the resolved settings, which can be passed
//! back through `--config` to rerun the command.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::archive::{load_model, load_truth, save_model, save_truth};
use crate::benchmark::{
    run_benchmark, run_dataset_benchmark, BenchmarkSummary, DatasetBenchmarkConfig, EtaChoice,
};
use crate::config::{ConfigFile, EtaSetting, FitSettings, RankSetting, SelectionSettings};
use crate::data::{
    load_csv, standardize, write_csv, LabeledMatrix, MultiSourceDataset, Orientation, Outcome,
    ZeroVariancePolicy,
};
use crate::error::{Error, Result};
use crate::eval::{component_inference, meta_loadings, recovery_error, test_mse};
use crate::linalg::Mat;
use crate::model::{fit, Compression, FitConfig, FitReport, SJiveModel};
use crate::predict::{contributions, estimate_scores, predict_standardized};
use crate::selection::{select_eta, select_eta_and_ranks, select_ranks, CvPlan, SelectionTrace};
use crate::simulate::{eigen_signal_report, generate_study};

#[derive(Parser, Debug)]
#[command(name = "sjive", version, about = "Supervised joint and individual variation explained")]
struct Cli {
    /// Worker threads for CV folds and benchmark replicates (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic blocks, outcome and ground truth.
    Simulate(SimulateArgs),
    /// Fit a model and save it as an archive.
    Fit(FitArgs),
    /// Predict the outcome for new samples with a saved model.
    Predict(PredictArgs),
    /// Choose η and/or ranks by 5-fold cross-validation.
    Select(SelectArgs),
    /// Compare sJIVE with JIVE-predict and PCA regressions over replicates.
    Benchmark(BenchmarkArgs),
    /// Inference, meta-loadings, recovery and plot-ready tables for a saved model.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML file with [simulation], [fit], [selection] and [benchmark] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct FitFlags {
    /// A number in (0, 1] or `auto`.
    #[arg(long)]
    eta: Option<String>,
    /// `rJ,r1,...,rk` or `auto`.
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Drop zero-variance variables instead of failing.
    #[arg(long)]
    drop_constant: bool,
    /// Never replace wide blocks by their n × n SVD scores.
    #[arg(long)]
    no_compress: bool,
}

#[derive(Args, Debug)]
struct DataFlags {
    /// One CSV per block, `id,<sample ids>` header then one row per variable.
    #[arg(long = "x", required = true)]
    x: Vec<PathBuf>,
    /// Outcome CSV with a single variable row.
    #[arg(long)]
    y: PathBuf,
    /// Input files store samples as rows.
    #[arg(long)]
    samples_as_rows: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Model archive written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "x", required = true)]
    x: Vec<PathBuf>,
    /// Optional true outcome; adds the test MSE to the manifest.
    #[arg(long)]
    y: Option<PathBuf>,
    #[arg(long)]
    samples_as_rows: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    fit: FitFlags,
    #[arg(long)]
    reps: Option<usize>,
    /// Benchmark on these blocks (random splits) instead of simulated data.
    #[arg(long = "x")]
    x: Vec<PathBuf>,
    #[arg(long, requires = "x")]
    y: Option<PathBuf>,
    #[arg(long)]
    samples_as_rows: bool,
    /// Held-out fraction per split in dataset mode.
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Training outcome the model was fit to (raw scale).
    #[arg(long)]
    y: PathBuf,
    #[arg(long = "test-x")]
    test_x: Vec<PathBuf>,
    #[arg(long = "test-y", requires = "test_x")]
    test_y: Option<PathBuf>,
    /// Truth archive written by `simulate`, for recovery errors.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    samples_as_rows: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let command_line = argv
        .iter()
        .map(|a| a.to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join(" ");
    let result = match cli.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {t} threads: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cli.command, &command_line))),
        None => dispatch(&cli.command, &command_line),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: &Command, command_line: &str) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a, command_line),
        Command::Fit(a) => fit_cmd(a, command_line),
        Command::Predict(a) => predict_cmd(a, command_line),
        Command::Select(a) => select_cmd(a, command_line),
        Command::Benchmark(a) => benchmark_cmd(a, command_line),
        Command::Evaluate(a) => evaluate_cmd(a, command_line),
    }
}

/// Collects manifest lines and writes outputs into one directory.
struct Output {
    dir: PathBuf,
    manifest: Vec<(String, String)>,
    started: Instant,
}

impl Output {
    fn create(dir: &Path, command: &str, command_line: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            manifest: vec![
                ("tool".into(), "sjive".into()),
                ("version".into(), env!("CARGO_PKG_VERSION").into()),
                ("command".into(), command.into()),
                ("command_line".into(), command_line.into()),
            ],
            started: Instant::now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.manifest.push((key.to_string(), value.to_string()));
    }

    fn table(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(header).map_err(|e| csv_error(&path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    fn config(&self, cfg: &ConfigFile) -> Result<()> {
        let path = self.path("config.toml");
        fs::write(&path, cfg.to_toml()).map_err(|e| Error::io(&path, e))
    }

    fn finish(mut self) -> Result<()> {
        let secs = self.started.elapsed().as_secs_f64();
        self.set("runtime_seconds", format!("{secs:.3}"));
        let text: String = self.manifest.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let path = self.path("manifest.txt");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{}: {other:?}", path.display())),
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn orientation(samples_as_rows: bool) -> Orientation {
    if samples_as_rows {
        Orientation::SamplesAsRows
    } else {
        Orientation::VariablesAsRows
    }
}

fn load_blocks(paths: &[PathBuf], samples_as_rows: bool) -> Result<MultiSourceDataset> {
    let blocks = paths
        .iter()
        .map(|p| load_csv(p, orientation(samples_as_rows)))
        .collect::<Result<Vec<_>>>()?;
    MultiSourceDataset::from_labeled(blocks)
}

/// Loads an outcome and orders it to match `sample_ids`.
fn load_outcome(path: &Path, samples_as_rows: bool, sample_ids: &[String]) -> Result<Outcome> {
    let (y, ids) = Outcome::from_labeled(load_csv(path, orientation(samples_as_rows))?)?;
    if ids == sample_ids {
        return Ok(y);
    }
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(j, id)| (id.as_str(), j)).collect();
    let idx = sample_ids
        .iter()
        .map(|id| {
            pos.get(id.as_str()).copied().ok_or_else(|| {
                Error::Shape(format!("{} has no value for sample '{id}'", path.display()))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if ids.len() != sample_ids.len() {
        return Err(Error::Shape(format!(
            "{} has {} samples, the blocks have {}",
            path.display(),
            ids.len(),
            sample_ids.len()
        )));
    }
    Ok(y.select(&idx))
}

fn load_config(common: &Common) -> Result<ConfigFile> {
    let mut cfg = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(seed) = common.seed {
        cfg.simulation.seed = Some(seed);
        cfg.fit.seed = Some(seed);
        cfg.selection.seed = Some(seed);
    }
    Ok(cfg)
}

/// Resolves fit settings from the config, then applies command-line flags.
fn fit_settings(cfg: &mut ConfigFile, flags: &FitFlags) -> Result<FitSettings> {
    let mut s = cfg.fit()?;
    if let Some(e) = &flags.eta {
        s.eta = e.parse()?;
        if let EtaSetting::Fixed(v) = s.eta {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("--eta must lie in (0, 1], got {v}")));
            }
        }
    }
    if let Some(r) = &flags.ranks {
        s.ranks = r.parse()?;
    }
    if let Some(t) = flags.tol {
        if !(t > 0.0) {
            return Err(Error::Config(format!("--tol must be positive, got {t}")));
        }
        s.tol = t;
    }
    if let Some(m) = flags.max_iter {
        if m == 0 {
            return Err(Error::Config("--max-iter must be positive".into()));
        }
        s.max_iter = m;
    }
    if flags.drop_constant {
        s.drop_constant = true;
    }
    if flags.no_compress {
        s.compression = Compression::Never;
    }
    cfg.set_fit(&s);
    Ok(s)
}

fn policy(s: &FitSettings) -> ZeroVariancePolicy {
    if s.drop_constant {
        ZeroVariancePolicy::Drop
    } else {
        ZeroVariancePolicy::Error
    }
}

fn load_standardized(data: &DataFlags, s: &FitSettings, out: &mut Output) -> Result<(MultiSourceDataset, Outcome)> {
    let raw = load_blocks(&data.x, data.samples_as_rows)?;
    let y = load_outcome(&data.y, data.samples_as_rows, raw.sample_ids())?;
    let (std_data, std_y, report) = standardize(&raw, &y, policy(s))?;
    out.set("samples", std_data.n());
    out.set("block_sizes", join(&std_data.dims()));
    if !report.dropped.is_empty() {
        let dropped: Vec<String> = report.dropped.iter().map(|(b, id)| format!("{}:{id}", b + 1)).collect();
        out.set("dropped_constant_variables", dropped.join(";"));
    }
    Ok((std_data, std_y))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn trace_rows(search: &str, trace: &SelectionTrace) -> Vec<Vec<String>> {
    trace
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![
                search.to_string(),
                r.step.to_string(),
                r.candidate.to_string(),
                num(r.score.mean),
            ];
            row.extend(r.score.per_fold.iter().map(|v| num(*v)));
            row
        })
        .collect()
}

fn write_traces(out: &Output, traces: &[(&str, &SelectionTrace)], folds: usize) -> Result<()> {
    let mut head = header(&["search", "step", "candidate", "mean_mse"]);
    head.extend((1..=folds).map(|f| format!("fold_{f}")));
    let rows: Vec<Vec<String>> = traces.iter().flat_map(|(s, t)| trace_rows(s, t)).collect();
    out.table("selection.csv", &head, &rows)
}

/// Resolves `auto` settings by cross-validation. Returns the concrete config
/// and the traces that were produced.
fn resolve(
    data: &MultiSourceDataset,
    y: &Outcome,
    s: &FitSettings,
    sel: &SelectionSettings,
) -> Result<(FitConfig, Vec<(&'static str, SelectionTrace)>)> {
    let mut cfg = s.base(data.k());
    let needs_cv = s.eta == EtaSetting::Auto || s.ranks == RankSetting::Auto;
    if !needs_cv {
        return Ok((cfg, Vec::new()));
    }
    let plan = CvPlan::new(data.n(), sel.folds, sel.seed)?;
    let mut traces = Vec::new();
    match (&s.eta, &s.ranks) {
        (EtaSetting::Auto, RankSetting::Auto) => {
            let (eta, ranks, rt, et) = select_eta_and_ranks(data, y, &cfg, &sel.eta_grid, &plan)?;
            cfg.eta = eta;
            cfg.ranks = ranks;
            traces.push(("ranks", rt));
            traces.push(("eta", et));
        }
        (EtaSetting::Auto, RankSetting::Fixed(_)) => {
            let (eta, t) = select_eta(data, y, &cfg, &sel.eta_grid, &plan)?;
            cfg.eta = eta;
            traces.push(("eta", t));
        }
        (EtaSetting::Fixed(_), _) => {
            let (ranks, t) = select_ranks(data, y, &cfg, &plan)?;
            cfg.ranks = ranks;
            traces.push(("ranks", t));
        }
    }
    Ok((cfg, traces))
}

fn simulate(a: &SimulateArgs, command_line: &str) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    let sim = cfg.simulation()?;
    cfg.set_simulation(&sim);
    let mut out = Output::create(&a.common.out, "simulate", command_line)?;
    out.set("seed", sim.seed);
    let study = generate_study(&sim)?;
    let write_split = |data: &MultiSourceDataset, y: &Outcome, suffix: &str| -> Result<()> {
        for i in 0..data.k() {
            write_csv(
                out.path(&format!("X{}{suffix}.csv", i + 1)),
                &LabeledMatrix {
                    values: data.block(i).clone(),
                    row_ids: data.variable_ids()[i].clone(),
                    col_ids: data.sample_ids().to_vec(),
                },
            )?;
        }
        write_csv(
            out.path(&format!("y{suffix}.csv")),
            &LabeledMatrix {
                values: Mat::from_row_slice(1, y.len(), y.values.as_slice()),
                row_ids: vec![y.name.clone()],
                col_ids: data.sample_ids().to_vec(),
            },
        )
    };
    write_split(&study.train, &study.train_y, "")?;
    if sim.n_test > 0 {
        write_split(&study.test, &study.test_y, "_test")?;
    }
    save_truth(out.path("truth.tar"), &study.truth)?;
    let eig = eigen_signal_report(&study.truth)?;
    out.set("signal_top_singular_value", num(eig.signal));
    out.set("noise_top_singular_value", num(eig.noise));
    out.config(&cfg)?;
    out.finish()
}

fn fit_report_rows(report: &FitReport) -> Vec<Vec<String>> {
    report
        .objective_trace
        .iter()
        .enumerate()
        .map(|(i, f)| vec![i.to_string(), num(*f)])
        .collect()
}

fn fit_cmd(a: &FitArgs, command_line: &str) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    let s = fit_settings(&mut cfg, &a.fit)?;
    let sel = cfg.selection()?;
    cfg.set_selection(&sel);
    let mut out = Output::create(&a.common.out, "fit", command_line)?;
    out.set("seed", s.seed);
    let (data, y) = load_standardized(&a.data, &s, &mut out)?;
    let (fc, traces) = resolve(&data, &y, &s, &sel)?;
    if !traces.is_empty() {
        let refs: Vec<(&str, &SelectionTrace)> = traces.iter().map(|(n, t)| (*n, t)).collect();
        write_traces(&out, &refs, sel.folds)?;
    }
    let (model, report) = fit(&data, &y, &fc)?;
    save_model(out.path("model.tar"), &model, Some(&report))?;
    out.table("fit_report.csv", &header(&["iteration", "objective"]), &fit_report_rows(&report))?;
    out.set("eta", num(model.eta));
    out.set("ranks", &model.ranks);
    out.set("iterations", report.iterations);
    out.set("converged", report.converged);
    out.set("final_objective", num(report.final_objective));
    out.set("compressed_blocks", join(&report.compressed));
    if !model.zero_components.is_empty() {
        out.set("zero_components", model.zero_components.join(";"));
    }
    out.config(&cfg)?;
    out.finish()
}

/// Puts new raw data on the model's training scale.
fn prepare_new_data(model: &SJiveModel, raw: &MultiSourceDataset) -> Result<MultiSourceDataset> {
    match &model.x_standardization {
        Some(st) => raw.apply_standardization(st),
        None => {
            if raw.variable_ids() != model.variable_ids.as_slice() {
                return Err(Error::Shape("new data variables differ from the model's".into()));
            }
            Ok(raw.clone())
        }
    }
}

fn predict_cmd(a: &PredictArgs, command_line: &str) -> Result<()> {
    let mut out = Output::create(&a.out, "predict", command_line)?;
    let (model, _) = load_model(&a.model)?;
    let raw = load_blocks(&a.x, a.samples_as_rows)?;
    let data = prepare_new_data(&model, &raw)?;
    let scores = estimate_scores(&model, &data)?;
    let parts = contributions(&model, &scores)?;
    let z = parts.total();
    let raw_pred = match model.y_standardization {
        Some(m) => z.map(|v| v * m.sd + m.mean),
        None => z.clone(),
    };
    let mut head = header(&["sample_id", "predicted", "predicted_std", "joint"]);
    head.extend((1..=model.k()).map(|i| format!("indiv_{i}")));
    let rows: Vec<Vec<String>> = (0..data.n())
        .map(|j| {
            let mut row = vec![
                data.sample_ids()[j].clone(),
                num(raw_pred[j]),
                num(z[j]),
                num(parts.joint[j]),
            ];
            row.extend(parts.individual.iter().map(|c| num(c[j])));
            row
        })
        .collect();
    out.table("predictions.csv", &head, &rows)?;
    out.set("model", a.model.display());
    out.set("samples", data.n());
    out.set("score_iterations", scores.iterations);
    out.set("score_converged", scores.converged);
    if let Some(yp) = &a.y {
        let y = load_outcome(yp, a.samples_as_rows, data.sample_ids())?;
        let ys = match model.y_standardization {
            Some(m) => y.apply_standardization(m),
            None => y,
        };
        out.set("test_mse_standardized", num(test_mse(&ys.values, &z)?));
    }
    out.finish()
}

fn select_cmd(a: &SelectArgs, command_line: &str) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    let s = fit_settings(&mut cfg, &a.fit)?;
    let sel = cfg.selection()?;
    cfg.set_selection(&sel);
    let mut out = Output::create(&a.common.out, "select", command_line)?;
    out.set("seed", sel.seed);
    let (data, y) = load_standardized(&a.data, &s, &mut out)?;
    if s.eta != EtaSetting::Auto && s.ranks != RankSetting::Auto {
        return Err(Error::Config("select needs --eta auto or --ranks auto".into()));
    }
    let (fc, traces) = resolve(&data, &y, &s, &sel)?;
    let refs: Vec<(&str, &SelectionTrace)> = traces.iter().map(|(n, t)| (*n, t)).collect();
    write_traces(&out, &refs, sel.folds)?;
    out.set("eta", num(fc.eta));
    out.set("ranks", &fc.ranks);
    out.set("folds", sel.folds);
    out.config(&cfg)?;
    out.finish()
}

fn summary_tables(out: &mut Output, summary: &BenchmarkSummary) -> Result<()> {
    let means = summary.mean_mse();
    let wins = summary.win_rates();
    let reps = summary.replicates.len() as f64;
    let rows: Vec<Vec<String>> = summary
        .methods
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let sd = (summary
                .replicates
                .iter()
                .map(|r| (r.mse[m] - means[m]).powi(2))
                .sum::<f64>()
                / (reps - 1.0).max(1.0))
            .sqrt();
            vec![name.clone(), num(means[m]), num(sd), num(wins[m])]
        })
        .collect();
    out.table(
        "methods.csv",
        &header(&["method", "mean_test_mse", "sd_test_mse", "win_pct"]),
        &rows,
    )?;
    let mut head = header(&["replicate", "seed", "eta", "ranks"]);
    head.extend(summary.methods.iter().map(|m| format!("mse_{m}")));
    head.extend(header(&["signal_top_singular_value", "noise_top_singular_value"]));
    let rows: Vec<Vec<String>> = summary
        .replicates
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = vec![(i + 1).to_string(), r.seed.to_string(), num(r.eta), r.ranks.to_string()];
            row.extend(r.mse.iter().map(|v| num(*v)));
            match r.eigen {
                Some(e) => row.extend([num(e.signal), num(e.noise)]),
                None => row.extend([String::new(), String::new()]),
            }
            row
        })
        .collect();
    out.table("replicates.csv", &head, &rows)?;
    out.set("sjive_win_pct_vs_jive_predict", num(summary.sjive_win_pct()));
    Ok(())
}

fn benchmark_cmd(a: &BenchmarkArgs, command_line: &str) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    let s = fit_settings(&mut cfg, &a.fit)?;
    let sel = cfg.selection()?;
    cfg.set_selection(&sel);
    if let Some(r) = a.reps {
        cfg.benchmark.reps = Some(r);
    }
    let eta = match s.eta {
        EtaSetting::Fixed(e) => EtaChoice::Fixed(e),
        EtaSetting::Auto => EtaChoice::Cv(sel.eta_grid.clone()),
    };
    let mut out = Output::create(&a.common.out, "benchmark", command_line)?;
    if a.x.is_empty() {
        let mut bc = cfg.benchmark()?;
        if a.fit.eta.is_some() {
            bc.eta = eta;
        }
        if let RankSetting::Fixed(r) = &s.ranks {
            if r != &bc.sim.ranks {
                return Err(Error::Config(
                    "simulation benchmarks fit at the true ranks; set r_J and r_A instead of --ranks".into(),
                ));
            }
        }
        cfg.set_simulation(&bc.sim);
        cfg.set_benchmark(&bc);
        out.set("seed", bc.sim.seed);
        out.set("reps", bc.reps);
        let summary = run_benchmark(&bc)?;
        summary_tables(&mut out, &summary)?;
        let means = summary.mean_mse();
        let mean_of = |f: &dyn Fn(&crate::simulate::EigenReport) -> f64| {
            summary.replicates.iter().filter_map(|r| r.eigen.as_ref()).map(f).sum::<f64>() / summary.replicates.len() as f64
        };
        out.table(
            "scenario_summary.csv",
            &header(&[
                "X_err",
                "Y_err",
                "sJIVE_test_mse",
                "JIVE_predict_test_mse",
                "sJIVE_win_pct",
                "signal_top_singular_value",
                "noise_top_singular_value",
            ]),
            &[vec![
                num(bc.sim.x_err),
                num(bc.sim.y_err),
                num(means[0]),
                num(means[1]),
                num(summary.sjive_win_pct()),
                num(mean_of(&|e| e.signal)),
                num(mean_of(&|e| e.noise)),
            ]],
        )?;
        let sj = summary.mean_recovery(true);
        let jv = summary.mean_recovery(false);
        let rows: Vec<Vec<String>> = sj
            .iter()
            .zip(&jv)
            .map(|((c, a), (_, b))| vec![c.clone(), num(*a), num(*b)])
            .collect();
        out.table("recovery.csv", &header(&["component", "sJIVE", "JIVE"]), &rows)?;
    } else {
        let y_path = a
            .y
            .as_ref()
            .ok_or_else(|| Error::Config("dataset benchmarks need --y".into()))?;
        let raw = load_blocks(&a.x, a.samples_as_rows)?;
        let y = load_outcome(y_path, a.samples_as_rows, raw.sample_ids())?;
        let reps = cfg.benchmark.reps.unwrap_or(10);
        let ranks = match &s.ranks {
            RankSetting::Fixed(r) => Some(r.clone()),
            RankSetting::Auto => None,
        };
        let dc = DatasetBenchmarkConfig {
            reps,
            test_fraction: a.test_fraction,
            ranks,
            eta,
            tol: s.tol,
            max_iter: s.max_iter,
            compression: s.compression,
            zero_variance: policy(&s),
            seed: s.seed,
        };
        if reps == 0 {
            return Err(Error::Config("--reps must be at least 1".into()));
        }
        out.set("seed", dc.seed);
        out.set("reps", reps);
        out.set("test_fraction", num(dc.test_fraction));
        let summary = run_dataset_benchmark(&raw, &y, &dc)?;
        summary_tables(&mut out, &summary)?;
    }
    out.config(&cfg)?;
    out.finish()
}

fn evaluate_cmd(a: &EvaluateArgs, command_line: &str) -> Result<()> {
    let mut out = Output::create(&a.out, "evaluate", command_line)?;
    let (model, _) = load_model(&a.model)?;
    let (y_raw, sample_ids) = Outcome::from_labeled(load_csv(&a.y, orientation(a.samples_as_rows))?)?;
    if y_raw.len() != model.n() {
        return Err(Error::Shape(format!(
            "outcome has {} values, the model was fit to {} samples",
            y_raw.len(),
            model.n()
        )));
    }
    let y = match model.y_standardization {
        Some(m) => y_raw.apply_standardization(m),
        None => y_raw.clone(),
    };
    out.set("model", a.model.display());
    out.set("eta", num(model.eta));
    out.set("ranks", &model.ranks);

    let mut metrics: Vec<Vec<String>> = Vec::new();
    if model.theta.is_some() {
        let fitted = model.fitted_outcome()?;
        metrics.push(vec!["train_mse".into(), num(test_mse(&y.values, &fitted)?)]);
        let inf = component_inference(&model, &y.values)?;
        let rows: Vec<Vec<String>> = inf
            .iter()
            .map(|t| {
                vec![
                    t.component.clone(),
                    t.rank.to_string(),
                    num(t.partial_r2),
                    num(t.f_stat),
                    t.df1.to_string(),
                    t.df2.to_string(),
                    num(t.p_value),
                ]
            })
            .collect();
        out.table(
            "inference.csv",
            &header(&["component", "rank", "partial_r2", "f_stat", "df1", "df2", "p_value"]),
            &rows,
        )?;
        let meta = meta_loadings(&model)?;
        let rows: Vec<Vec<String>> = meta
            .iter()
            .enumerate()
            .flat_map(|(i, m)| {
                let ids = &model.variable_ids[i];
                m.iter()
                    .zip(ids)
                    .map(move |(v, id)| vec![(i + 1).to_string(), id.clone(), num(*v)])
            })
            .collect();
        out.table("meta_loadings.csv", &header(&["block", "variable_id", "meta_loading"]), &rows)?;
        let mut scatter: Vec<Vec<String>> = (0..y.len())
            .map(|j| {
                vec![
                    sample_ids[j].clone(),
                    "train".into(),
                    num(y_raw.values[j]),
                    num(y_raw_scale(&model, fitted[j])),
                ]
            })
            .collect();
        if !a.test_x.is_empty() {
            let raw = load_blocks(&a.test_x, a.samples_as_rows)?;
            let data = prepare_new_data(&model, &raw)?;
            let z = predict_standardized(&model, &estimate_scores(&model, &data)?)?;
            let test_truth = match &a.test_y {
                Some(p) => Some(load_outcome(p, a.samples_as_rows, data.sample_ids())?),
                None => None,
            };
            if let Some(t) = &test_truth {
                let ts = match model.y_standardization {
                    Some(m) => t.apply_standardization(m),
                    None => t.clone(),
                };
                metrics.push(vec!["test_mse".into(), num(test_mse(&ts.values, &z)?)]);
            }
            scatter.extend((0..data.n()).map(|j| {
                vec![
                    data.sample_ids()[j].clone(),
                    "test".into(),
                    test_truth.as_ref().map(|t| num(t.values[j])).unwrap_or_default(),
                    num(y_raw_scale(&model, z[j])),
                ]
            }));
        }
        out.table("scatter.csv", &header(&["sample_id", "split", "y_true", "y_pred"]), &scatter)?;
    }

    let stacked_ids: Vec<String> = model
        .variable_ids
        .iter()
        .enumerate()
        .flat_map(|(i, ids)| ids.iter().map(move |id| format!("{}:{id}", i + 1)))
        .collect();
    write_csv(
        out.path("heatmap_joint.csv"),
        &LabeledMatrix {
            values: model.joint_stacked(),
            row_ids: stacked_ids,
            col_ids: sample_ids.clone(),
        },
    )?;
    for i in 0..model.k() {
        write_csv(
            out.path(&format!("heatmap_individual_{}.csv", i + 1)),
            &LabeledMatrix {
                values: model.indiv_part(i),
                row_ids: model.variable_ids[i].clone(),
                col_ids: sample_ids.clone(),
            },
        )?;
    }

    if let Some(tp) = &a.truth {
        let truth = load_truth(tp)?;
        if truth.k() != model.k() || truth.joint_scores.ncols() != model.n() {
            return Err(Error::Shape("truth archive does not match the model's blocks and samples".into()));
        }
        let j = truth.joint_stacked();
        if j.iter().any(|v| *v != 0.0) {
            metrics.push(vec!["recovery_joint".into(), num(recovery_error(&model.joint_stacked(), &j)?)]);
        }
        for i in 0..model.k() {
            let ai = truth.indiv(i);
            if ai.iter().any(|v| *v != 0.0) {
                metrics.push(vec![
                    format!("recovery_individual_{}", i + 1),
                    num(recovery_error(&model.indiv_part(i), &ai)?),
                ]);
            }
        }
    }
    out.table("metrics.csv", &header(&["metric", "value"]), &metrics)?;
    out.finish()
}

fn y_raw_scale(model: &SJiveModel, z: f64) -> f64 {
    match model.y_standardization {
        Some(m) => z * m.sd + m.mean,
        None => z,
    }
}
