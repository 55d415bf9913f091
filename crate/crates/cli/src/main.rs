use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deepload::dataset::{generate_synthetic, write_csv, Series, DEFAULT_HORIZON};
use deepload::harness::{
    cell_seed, manifest_digest, parse_scheme, records_csv, run_experiments, sweep_architecture,
    sweep_csv, sweep_optimizer, with_threads, write_report, Config, Execution, ExperimentResult,
    Forecaster, HarnessError, Manifest, ResultsFile, SweepOutcome, WindowData,
};
use deepload::network::Scheme;
use deepload::optimizers::Algorithm;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(
    name = "deepload",
    version,
    about = "Train and evaluate long-term monthly demand forecasters"
)]
struct Cli {
    /// TOML configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for the experiment grid.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a monthly CSV (plus optional yearly drivers) and print a summary.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Write the merged series as a canonical monthly CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the seeded synthetic series.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        months: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on one window and save a checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Training window length in months.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Checkpoint path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the expanding-window experiment for one model.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Rebuild report tables from a saved results file.
    Report {
        /// Results file written by eval or sweep.
        #[arg(long)]
        results: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Subcommand)]
enum SweepCommand {
    /// Every hidden-layer size in a neuron range.
    Arch {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        min_neurons: Option<usize>,
        #[arg(long)]
        max_neurons: Option<usize>,
        #[arg(long)]
        algorithm: Option<String>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Every training algorithm on one architecture.
    Opt {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        plan: PlanArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long, value_delimiter = ',')]
        hidden: Option<Vec<usize>>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Default)]
struct DataArgs {
    /// Monthly CSV; the synthetic series is used when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    gdp: Option<PathBuf>,
    #[arg(long)]
    population: Option<PathBuf>,
    #[arg(long)]
    co2: Option<PathBuf>,
    /// Yearly driver expansion: step or linear.
    #[arg(long)]
    expansion: Option<String>,
    #[arg(long)]
    synthetic_seed: Option<u64>,
}

#[derive(Args, Default)]
struct PlanArgs {
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<usize>>,
    #[arg(long)]
    window_start: Option<usize>,
    #[arg(long)]
    window_end: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
}

#[derive(Args, Default)]
struct ModelArgs {
    /// Deep preset (deep-MLP1 …) or classical counterpart (MLP1 …).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long, value_delimiter = ',')]
    code_dims: Option<Vec<usize>>,
    #[arg(long)]
    label: Option<String>,
}

#[derive(Args, Default)]
struct TrainArgs {
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    mu_init: Option<f64>,
    /// Autoencoder epoch budget.
    #[arg(long)]
    ae_max_epochs: Option<usize>,
    /// Fine-tuning epoch budget; 0 disables fine-tuning.
    #[arg(long)]
    fine_tune_epochs: Option<usize>,
}

#[derive(Args, Default)]
struct OutputArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, json or both.
    #[arg(long)]
    format: Option<String>,
}

macro_rules! overlay {
    ($($dst:expr => $src:expr),* $(,)?) => { $( if let Some(v) = $src { $dst = Some(v); } )* };
}

impl DataArgs {
    fn apply(self, c: &mut Config) {
        overlay!(
            c.data.path => self.data,
            c.data.gdp => self.gdp,
            c.data.population => self.population,
            c.data.co2 => self.co2,
            c.data.expansion => self.expansion,
            c.data.synthetic_seed => self.synthetic_seed,
        );
    }
}

impl PlanArgs {
    fn apply(self, c: &mut Config) {
        if self.window_start.is_some() || self.window_end.is_some() {
            c.plan.windows = None;
        }
        overlay!(
            c.plan.windows => self.windows,
            c.plan.window_start => self.window_start,
            c.plan.window_end => self.window_end,
            c.plan.horizon => self.horizon,
            c.plan.runs => self.runs,
            c.plan.base_seed => self.base_seed,
        );
    }
}

impl ModelArgs {
    fn apply(self, c: &mut Config) {
        overlay!(
            c.model.preset => self.preset,
            c.model.scheme => self.scheme,
            c.model.hidden => self.hidden,
            c.model.algorithm => self.algorithm,
            c.model.code_dims => self.code_dims,
            c.model.label => self.label,
        );
    }
}

impl TrainArgs {
    fn apply(self, c: &mut Config) {
        overlay!(
            c.train.max_epochs => self.max_epochs,
            c.train.grad_tol => self.grad_tol,
            c.train.lr => self.lr,
            c.train.momentum => self.momentum,
            c.train.mu_init => self.mu_init,
            c.autoencoder.max_epochs => self.ae_max_epochs,
            c.fine_tune.max_epochs => self.fine_tune_epochs,
        );
    }
}

impl OutputArgs {
    fn apply(self, c: &mut Config) {
        overlay!(c.output.dir => self.out, c.output.format => self.format);
    }
}

/// Why the command stopped, mapped onto the process exit code.
enum Failure {
    Harness(HarnessError),
    AllRunsFailed(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Harness(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Harness(
                HarnessError::Config(_)
                | HarnessError::Train(_)
                | HarnessError::Deep(_)
                | HarnessError::Network(_),
            ) => EXIT_USAGE,
            Failure::Harness(_) => EXIT_DATA,
            Failure::AllRunsFailed(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Harness(e) => write!(f, "{e}"),
            Failure::AllRunsFailed(what) => write!(f, "numerical failure in every run of {what}"),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let mut config = match &cli.config {
        Some(p) => Config::load(p).map_err(|e| match e {
            HarnessError::Io { .. } => HarnessError::Config(e.to_string()),
            e => e,
        })?,
        None => Config::default(),
    };
    overlay!(config.run.threads => cli.threads);
    let threads = config.run.threads;
    let body = move || dispatch(cli.command, config);
    match threads {
        Some(n) => with_threads(n, body),
        None => body(),
    }
}

fn dispatch(command: Command, mut config: Config) -> CliResult {
    match command {
        Command::Ingest { data, out } => {
            if data.data.is_none() && config.data.path.is_none() {
                return Err(HarnessError::Config("ingest needs --data or data.path".into()).into());
            }
            data.apply(&mut config);
            ingest(&config, out.as_deref())
        }
        Command::Synth { seed, months, out } => {
            let series = generate_synthetic(
                seed.or(config.data.synthetic_seed).unwrap_or(1),
                months.or(config.data.synthetic_months).unwrap_or(176),
            );
            write_series(&series, &out)?;
            println!("wrote {} months to {}", series.len(), out.display());
            Ok(())
        }
        Command::Train {
            data,
            model,
            train,
            window,
            seed,
            out,
        } => {
            data.apply(&mut config);
            model.apply(&mut config);
            train.apply(&mut config);
            train_one(&config, window, seed, out)
        }
        Command::Eval {
            data,
            plan,
            model,
            train,
            output,
        } => {
            data.apply(&mut config);
            plan.apply(&mut config);
            model.apply(&mut config);
            train.apply(&mut config);
            output.apply(&mut config);
            eval(&config)
        }
        Command::Sweep(SweepCommand::Arch {
            data,
            plan,
            train,
            scheme,
            depth,
            min_neurons,
            max_neurons,
            algorithm,
            output,
        }) => {
            data.apply(&mut config);
            plan.apply(&mut config);
            train.apply(&mut config);
            output.apply(&mut config);
            overlay!(
                config.sweep.scheme => scheme,
                config.sweep.depth => depth,
                config.sweep.min_neurons => min_neurons,
                config.sweep.max_neurons => max_neurons,
                config.sweep.algorithm => algorithm,
            );
            sweep_arch(&config)
        }
        Command::Sweep(SweepCommand::Opt {
            data,
            plan,
            train,
            scheme,
            hidden,
            output,
        }) => {
            data.apply(&mut config);
            plan.apply(&mut config);
            train.apply(&mut config);
            output.apply(&mut config);
            overlay!(config.sweep.scheme => scheme, config.sweep.hidden => hidden);
            sweep_opt(&config)
        }
        Command::Report { results, output } => {
            output.apply(&mut config);
            report(&config, results)
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |e| HarnessError::io(path, e)
}

fn write_series(series: &Series, path: &Path) -> Result<(), HarnessError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    Ok(write_csv(series, file)?)
}

fn ingest(config: &Config, out: Option<&Path>) -> CliResult {
    let series = config.load_series()?;
    let months = series.months();
    println!(
        "{} months, {} to {}, data digest {}",
        series.len(),
        months[0],
        months[months.len() - 1],
        &manifest_digest(&series, "")[..16]
    );
    if let Some(out) = out {
        write_series(&series, out)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn output_dir(config: &Config) -> PathBuf {
    config
        .output
        .dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("deepload-out"))
}

fn train_one(
    config: &Config,
    window: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> CliResult {
    let series = config.load_series()?;
    let plan = config.plan()?;
    let spec = config.model_spec()?;
    let l = window.unwrap_or(plan.window_lengths[0]);
    let seed = seed.unwrap_or_else(|| cell_seed(plan.base_seed, l, 0));
    let data = WindowData::prepare(
        &series,
        l,
        DEFAULT_HORIZON.min(series.len().saturating_sub(l)).max(1),
    )?;
    let (model, reports) = spec.train_model(&data.train, seed)?;
    let out = out.unwrap_or_else(|| output_dir(config).join("model.ckpt"));
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(&out, model.to_checkpoint()).map_err(io_err(&out))?;
    let report_path = out.with_extension("train.json");
    let reports_json = serde_json::to_vec_pretty(&reports).expect("serializable");
    fs::write(&report_path, reports_json).map_err(io_err(&report_path))?;
    for r in &reports {
        println!(
            "{:<5} epochs {:>5}  loss {:.6e}  stop {}",
            r.algorithm.name(),
            r.epochs_run,
            r.final_loss,
            r.stop_reason.name()
        );
    }
    println!(
        "{} on window {l} (seed {seed}) saved to {}",
        spec.label,
        out.display()
    );
    let stages = spec.deep.as_ref().map_or(1, |d| d.code_dims.len() + 1);
    if reports[..stages].iter().any(|r| r.is_failure()) {
        return Err(Failure::AllRunsFailed(spec.label));
    }
    Ok(())
}

fn save_results(
    config: &Config,
    series: &Series,
    results: Vec<ExperimentResult>,
) -> Result<PathBuf, HarnessError> {
    let plan = config.plan()?;
    let text = config.canonical_text();
    let manifest = Manifest::new(
        series,
        &text,
        &plan,
        results.iter().map(|r| r.model.clone()).collect(),
    );
    let dir = output_dir(config);
    write_report(&dir, &results, &manifest, config.report_format()?)?;
    for (i, r) in results.iter().enumerate() {
        let p = dir.join(format!("records_{i:02}.csv"));
        fs::write(&p, records_csv(r)).map_err(io_err(&p))?;
    }
    let path = dir.join("results.json");
    ResultsFile { manifest, results }.save(&path)?;
    Ok(path)
}

fn print_result(r: &ExperimentResult) {
    match r.overall {
        Some(o) => println!(
            "{:<28} MAPE {:>8.3}  RMSE {:>8.4}  MAE {:>8.4}  failed {}/{}",
            r.model,
            o.mape,
            o.rmse_norm,
            o.mae_norm,
            r.failed_runs,
            r.runs.len()
        ),
        None => println!("{:<28} all {} runs failed", r.model, r.runs.len()),
    }
}

fn eval(config: &Config) -> CliResult {
    let series = config.load_series()?;
    let plan = config.plan()?;
    let spec = config.model_spec()?;
    let models: [&dyn Forecaster; 1] = [&spec];
    let results = run_experiments(&series, &plan, &models, Execution::Parallel)?;
    print_result(&results[0]);
    let all_failed = results[0].all_failed();
    let path = save_results(config, &series, results)?;
    println!("results in {}", path.display());
    if all_failed {
        return Err(Failure::AllRunsFailed(spec.label));
    }
    Ok(())
}

fn finish_sweep(config: &Config, series: &Series, outcome: SweepOutcome) -> CliResult {
    for row in &outcome.rows {
        let mape = row.overall.map_or(f64::NAN, |o| o.mape);
        println!(
            "{:>3}. {:<24} MAPE {:>8.3}  failed {}/{}",
            row.rank, row.model, mape, row.failed_runs, row.runs
        );
    }
    let dir = output_dir(config);
    let sweep_path = dir.join("sweep.csv");
    let all_failed = outcome.results.iter().all(ExperimentResult::all_failed);
    save_results(config, series, outcome.results)?;
    fs::write(&sweep_path, sweep_csv(&outcome.rows)).map_err(io_err(&sweep_path))?;
    println!("ranking in {}", sweep_path.display());
    if all_failed {
        return Err(Failure::AllRunsFailed("the sweep".into()));
    }
    Ok(())
}

fn sweep_scheme(config: &Config) -> Result<Scheme, HarnessError> {
    config
        .sweep
        .scheme
        .as_deref()
        .map_or(Ok(Scheme::Mlp), parse_scheme)
}

fn sweep_arch(config: &Config) -> CliResult {
    let series = config.load_series()?;
    let plan = config.plan()?;
    let s = &config.sweep;
    let lo = s.min_neurons.unwrap_or(1);
    let hi = s.max_neurons.unwrap_or(15);
    if lo == 0 || hi < lo {
        return Err(HarnessError::Config(format!("bad neuron range {lo}..{hi}")).into());
    }
    let neurons: Vec<usize> = (lo..=hi).collect();
    let algorithm = match s.algorithm.as_deref().or(config.train.algorithm.as_deref()) {
        Some(a) => a
            .parse()
            .map_err(|e: deepload::optimizers::TrainError| HarnessError::Config(e.to_string()))?,
        None => Algorithm::LM,
    };
    let train = config.train.resolve(algorithm)?;
    let outcome = sweep_architecture(
        &series,
        sweep_scheme(config)?,
        s.depth.unwrap_or(1),
        &neurons,
        &train,
        &plan,
        Execution::Parallel,
    )?;
    finish_sweep(config, &series, outcome)
}

fn sweep_opt(config: &Config) -> CliResult {
    let series = config.load_series()?;
    let plan = config.plan()?;
    let hidden = config.sweep.hidden.clone().unwrap_or_else(|| vec![5]);
    let mut overrides = config.train.clone();
    overrides.algorithm = None;
    // Validate once so the closure below cannot fail.
    overrides.resolve(Algorithm::LM)?;
    let outcome = sweep_optimizer(
        &series,
        sweep_scheme(config)?,
        &hidden,
        &plan,
        Execution::Parallel,
        |c| overrides.resolve(c.algorithm).expect("validated above"),
    )?;
    finish_sweep(config, &series, outcome)
}

fn report(config: &Config, results: Option<PathBuf>) -> CliResult {
    let dir = output_dir(config);
    let path = results.unwrap_or_else(|| dir.join("results.json"));
    let file = ResultsFile::load(&path)?;
    for r in &file.results {
        print_result(r);
    }
    let written = write_report(&dir, &file.results, &file.manifest, config.report_format()?)?;
    println!("wrote {} files to {}", written.len(), dir.display());
    Ok(())
}
