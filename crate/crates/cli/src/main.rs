//! Experiment runner: synthetic instance generation, solver comparison,
//! training runs and report aggregation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver resource
//! cap hit (results for the affected instances carry the best incumbent).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use gmatch_core::diff::{BlackboxSolver, GmsSolver, GmsStarSolver, SinkhornSolver};
use gmatch_core::gen::{generate_pair, GeneratorConfig};
use gmatch_core::graph::TrainSample;
use gmatch_core::io::{from_json_line, to_json_line};
use gmatch_core::learn::{
    compute_similarities, train, SimilarityModel, SolverKind, TrainConfig,
};
use gmatch_core::score::accuracy;
use gmatch_core::sinkhorn::SinkhornConfig;
use gmatch_core::solver::{QualityLevel, SolverResult};
use gmatch_core::{Error as CoreError, Lambda};

/// Results CSV header; fixed interchange contract.
const RESULTS_HEADER: &str = "id,solver,alpha,score,lb,ub,gap,acc,wall_ms,tree_nodes,root_optimal";
/// Metrics CSV header; fixed interchange contract.
const METRICS_HEADER: &str = "epoch,mean_loss,train_acc,test_acc,mean_gap,mean_tree_nodes";
/// The quality-level sweep used by the alpha-sweep training mode.
const ALPHA_SWEEP: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];

#[derive(Parser)]
#[command(
    name = "gmatch",
    about = "Graph matching solvers, synthetic benchmarks and trainable matching pipelines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic matching instances as line-oriented JSON files.
    Generate(GenerateArgs),
    /// Solve instance files and emit one results CSV row per instance.
    Solve(SolveArgs),
    /// Train the bilinear similarity model on synthetic data.
    Train(TrainArgs),
    /// Aggregate metrics CSVs into a comparison table and plot data.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of instances to generate.
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Keypoints per instance (>= 3).
    #[arg(long, default_value_t = 8)]
    points: usize,
    /// Descriptor dimension (defaults to --points, making classes orthonormal).
    #[arg(long)]
    descriptor_dim: Option<usize>,
    /// Gaussian descriptor noise sigma.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Unmatched outlier points added to the second graph.
    #[arg(long, default_value_t = 0)]
    outliers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for instance_NNNN.json files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum)]
    solver: SolverChoice,
    /// Quality level for the branch-and-bound solver.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Results CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Instance files or directories containing *.json instances.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    solver: SolverChoice,
    /// Quality level used by the training-time solver.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Interpolation range of the blackbox backward pass.
    #[arg(long, default_value_t = 80.0)]
    lambda: f64,
    #[arg(long, default_value_t = 8)]
    points: usize,
    #[arg(long)]
    descriptor_dim: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    outliers: usize,
    /// Training set size.
    #[arg(long, default_value_t = 24)]
    train_n: usize,
    /// Held-out test set size.
    #[arg(long, default_value_t = 8)]
    test_n: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Batch size.
    #[arg(long, default_value_t = 8)]
    batch: usize,
    /// Initial learning rate (halved every 3 epochs).
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for metrics CSVs and model files.
    #[arg(long)]
    out: PathBuf,
    /// Run the whole quality-level sweep {0, 0.5, 1, 1.5, 2}, one metrics
    /// CSV and model per alpha (gms solver only).
    #[arg(long, default_value_t = false)]
    alpha_sweep: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Plot-data CSV path (long format: run,epoch,test_acc).
    #[arg(long, default_value = "plot_data.csv")]
    out: PathBuf,
    /// Metrics CSV files produced by `gmatch train`.
    #[arg(required = true)]
    metrics: Vec<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverChoice {
    Gms,
    GmsStar,
    Sinkhorn,
}

impl SolverChoice {
    fn label(self) -> &'static str {
        match self {
            SolverChoice::Gms => "gms",
            SolverChoice::GmsStar => "gms-star",
            SolverChoice::Sinkhorn => "sinkhorn",
        }
    }
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::InvalidConfig(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Data(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => run_generate(&args),
        Command::Solve(args) => run_solve(&args),
        Command::Train(args) => run_train(&args),
        Command::Report(args) => run_report(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn generator_config(
    points: usize,
    descriptor_dim: Option<usize>,
    noise: f64,
    outliers: usize,
    seed: u64,
) -> GeneratorConfig {
    GeneratorConfig {
        n_points: points,
        descriptor_dim: descriptor_dim.unwrap_or(points),
        noise_sigma: noise,
        outlier_count: outliers,
        seed,
    }
}

fn run_generate(args: &GenerateArgs) -> Result<u8, CliError> {
    fs::create_dir_all(&args.out)?;
    let model_dims = args.descriptor_dim.unwrap_or(args.points);
    let model = SimilarityModel::identity(model_dims, model_dims);
    for i in 0..args.n {
        let config = generator_config(
            args.points,
            args.descriptor_dim,
            args.noise,
            args.outliers,
            args.seed.wrapping_add(i as u64),
        );
        let sample = generate_pair(&config)?;
        let instance = compute_similarities(&model, &sample)?;
        let line = to_json_line(&instance, Some(sample.v_gt()));
        let path = args.out.join(format!("instance_{i:04}.json"));
        fs::write(&path, format!("{line}\n"))?;
    }
    println!("wrote {} instances to {}", args.n, args.out.display());
    Ok(0)
}

fn collect_instance_files(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Usage("no instance files found".into()));
    }
    Ok(files)
}

fn run_solve(args: &SolveArgs) -> Result<u8, CliError> {
    let quality =
        QualityLevel::new(args.alpha).map_err(|e| CliError::Usage(e.to_string()))?;
    let files = collect_instance_files(&args.inputs)?;
    let solver: Box<dyn BlackboxSolver> = match args.solver {
        SolverChoice::Gms => Box::new(GmsSolver { quality }),
        SolverChoice::GmsStar => Box::new(GmsStarSolver),
        SolverChoice::Sinkhorn => Box::new(SinkhornSolver::default()),
    };

    let mut rows = vec![RESULTS_HEADER.to_string()];
    let mut failures = 0usize;
    let mut exhausted = false;
    for file in &files {
        let id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.display().to_string());
        let row = match solve_one(file, solver.as_ref(), args.solver, args.alpha) {
            Ok(row) => row,
            Err(SolveOneError::Exhausted(row)) => {
                exhausted = true;
                row
            }
            Err(SolveOneError::Failed(msg)) => {
                eprintln!("{}: {msg}", file.display());
                failures += 1;
                format!("{id},{},{},,,,,,,,", args.solver.label(), args.alpha)
            }
        };
        rows.push(row);
    }
    fs::write(&args.out, rows.join("\n") + "\n")?;
    println!(
        "solved {}/{} instances -> {}",
        files.len() - failures,
        files.len(),
        args.out.display()
    );
    if failures == files.len() {
        return Err(CliError::Data("every instance file failed".into()));
    }
    Ok(if exhausted { 3 } else { 0 })
}

enum SolveOneError {
    Failed(String),
    Exhausted(String),
}

fn solve_one(
    file: &Path,
    solver: &dyn BlackboxSolver,
    choice: SolverChoice,
    alpha: f64,
) -> Result<String, SolveOneError> {
    let id = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file.display().to_string());
    let text = fs::read_to_string(file).map_err(|e| SolveOneError::Failed(e.to_string()))?;
    let stored = from_json_line(&text).map_err(|e| SolveOneError::Failed(e.to_string()))?;

    let started = Instant::now();
    let (result, exhausted) = match solver.solve(&stored.instance) {
        Ok(result) => (result, false),
        Err(CoreError::ResourceExhausted(result)) => (*result, true),
        Err(other) => return Err(SolveOneError::Failed(other.to_string())),
    };
    let wall_ms = started.elapsed().as_millis();

    let acc = match &stored.v_gt {
        Some(gt) => accuracy(gt, result.assignment.v())
            .map(|a| format!("{a}"))
            .unwrap_or_default(),
        None => String::new(),
    };
    let row = format_result_row(&id, choice.label(), alpha, &result, &acc, wall_ms);
    if exhausted {
        Err(SolveOneError::Exhausted(row))
    } else {
        Ok(row)
    }
}

fn format_result_row(
    id: &str,
    solver: &str,
    alpha: f64,
    result: &SolverResult,
    acc: &str,
    wall_ms: u128,
) -> String {
    format!(
        "{id},{solver},{alpha},{score},{lb},{ub},{gap},{acc},{wall_ms},{nodes},{root}",
        score = result.lb,
        lb = result.lb,
        ub = result.ub,
        gap = result.gap,
        nodes = result.tree_nodes_expanded,
        root = result.root_optimal,
    )
}

fn build_dataset(args: &TrainArgs, base_seed: u64, count: usize) -> Result<Vec<TrainSample>, CliError> {
    (0..count)
        .map(|i| {
            let config = generator_config(
                args.points,
                args.descriptor_dim,
                args.noise,
                args.outliers,
                base_seed.wrapping_add(i as u64),
            );
            generate_pair(&config).map_err(CliError::from)
        })
        .collect()
}

fn run_train(args: &TrainArgs) -> Result<u8, CliError> {
    if args.train_n == 0 || args.test_n == 0 {
        return Err(CliError::Usage("train-n and test-n must be >= 1".into()));
    }
    fs::create_dir_all(&args.out)?;
    let train_set = build_dataset(args, args.seed, args.train_n)?;
    let test_set = build_dataset(args, args.seed.wrapping_add(1_000_000), args.test_n)?;

    let alphas: Vec<f64> = if args.alpha_sweep {
        ALPHA_SWEEP.to_vec()
    } else {
        vec![args.alpha]
    };
    for &alpha in &alphas {
        let quality = QualityLevel::new(alpha).map_err(|e| CliError::Usage(e.to_string()))?;
        let kind = match args.solver {
            SolverChoice::Gms => SolverKind::Gms,
            SolverChoice::GmsStar => SolverKind::GmsStar,
            SolverChoice::Sinkhorn => SolverKind::Sinkhorn(SinkhornConfig::default()),
        };
        let config = TrainConfig {
            learning_rate: args.lr,
            batch_size: args.batch,
            epochs: args.epochs,
            lambda: Lambda::new(args.lambda).map_err(|e| CliError::Usage(e.to_string()))?,
            alpha: quality,
            seed: args.seed,
            ..TrainConfig::default()
        };
        let (model, metrics) = train(&train_set, &test_set, &config, &kind)?;

        let suffix = if args.alpha_sweep {
            format!("_alpha_{alpha}")
        } else {
            String::new()
        };
        let mut csv = vec![METRICS_HEADER.to_string()];
        for row in &metrics {
            csv.push(format!(
                "{},{},{},{},{},{}",
                row.epoch, row.mean_loss, row.train_acc, row.test_acc, row.mean_gap, row.mean_tree_nodes
            ));
        }
        let metrics_path = args.out.join(format!("metrics{suffix}.csv"));
        fs::write(&metrics_path, csv.join("\n") + "\n")?;
        let model_path = args.out.join(format!("model{suffix}.json"));
        let serialized = serde_json::to_string(&model)
            .map_err(|e| CliError::Data(format!("model serialization: {e}")))?;
        fs::write(&model_path, serialized + "\n")?;
        let final_acc = metrics.last().map(|m| m.test_acc).unwrap_or(f64::NAN);
        println!(
            "trained solver={} alpha={alpha}: final test acc {final_acc:.4} -> {}",
            args.solver.label(),
            metrics_path.display()
        );
    }
    Ok(0)
}

struct MetricsFile {
    run: String,
    rows: Vec<(usize, f64, f64, f64)>, // epoch, test_acc, train_acc, mean_gap
}

fn parse_metrics_csv(path: &Path) -> Result<MetricsFile, CliError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{}: empty metrics file", path.display())))?;
    if header.trim() != METRICS_HEADER {
        return Err(CliError::Data(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(CliError::Data(format!(
                "{}: malformed row {line:?}",
                path.display()
            )));
        }
        let parse_f = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::Data(format!("{}: bad number {s:?}", path.display())))
        };
        let epoch: usize = fields[0]
            .parse()
            .map_err(|_| CliError::Data(format!("{}: bad epoch {:?}", path.display(), fields[0])))?;
        rows.push((epoch, parse_f(fields[3])?, parse_f(fields[2])?, parse_f(fields[4])?));
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no metric rows",
            path.display()
        )));
    }
    let run = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(MetricsFile { run, rows })
}

fn run_report(args: &ReportArgs) -> Result<u8, CliError> {
    let parsed: Vec<MetricsFile> = args
        .metrics
        .iter()
        .map(|p| parse_metrics_csv(p))
        .collect::<Result<_, _>>()?;

    let name_width = parsed
        .iter()
        .map(|m| m.run.len())
        .chain(["run".len()])
        .max()
        .unwrap_or(3);
    println!(
        "{:<name_width$}  {:>9}  {:>9}  {:>9}  {:>6}",
        "run", "final_test", "final_train", "mean_gap", "epochs"
    );
    for file in &parsed {
        let last = file.rows.last().expect("non-empty verified above");
        println!(
            "{:<name_width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>6}",
            file.run,
            last.1,
            last.2,
            last.3,
            file.rows.len() - 1
        );
    }

    let mut plot = vec!["run,epoch,test_acc".to_string()];
    for file in &parsed {
        for &(epoch, test_acc, _, _) in &file.rows {
            plot.push(format!("{},{epoch},{test_acc}", file.run));
        }
    }
    fs::write(&args.out, plot.join("\n") + "\n")?;
    println!("plot data -> {}", args.out.display());
    Ok(0)
}
