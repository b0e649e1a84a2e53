use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pi_surrogate::buckingham::presets::Strategy;
use pi_surrogate::buckingham::InputArrangement;
use pi_surrogate::dataset::{Dataset, Provenance};
use pi_surrogate::design::{append_constants, default_budget, maximin_lhd, DesignRequest, RangeMode};
use pi_surrogate::dimension::SystemSpec;
use pi_surrogate::fanova::{fanova, DEFAULT_GRID};
use pi_surrogate::gasp::{train, GaspModel, KernelFamily, TrainConfig, TrendKind};
use pi_surrogate::harness::{
    fanova_stage, run_experiment, summarize, write_records_csv, write_summary_json, ExperimentConfig, FanovaStageConfig, Preset,
    TestMode,
};
use pi_surrogate::testbeds::{Testbed, TestbedId};

#[derive(Parser)]
#[command(name = "pi-surrogate", version, about = "Dimensional-analysis GaSP surrogates and their evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a replicated strategy comparison on a testbed.
    Run(RunArgs),
    /// FANOVA of GaSP fits on the original variables, with the recommended basis.
    Fanova(FanovaArgs),
    /// Maximin Latin hypercube designs as CSV.
    Design(DesignArgs),
    /// Train a GaSP model on a CSV file.
    Train(TrainArgs),
    /// Predict with a saved model.
    Predict(PredictArgs),
    /// Print a testbed's system specification as TOML.
    Spec(SpecArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Interpolation,
    Extrapolation,
    Both,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    testbed: TestbedId,
    #[arg(long, default_value = "desk")]
    preset: Preset,
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Input arrangements: raw, log, expanded-log.
    #[arg(long, value_delimiter = ',')]
    inputs: Option<Vec<InputArrangement>>,
    #[arg(long, value_delimiter = ',')]
    trend: Option<Vec<TrendKind>>,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    kernel: Option<KernelFamily>,
    #[arg(long)]
    starts: Option<usize>,
    /// Fix the power-exponential smoothness at 2 instead of estimating it.
    #[arg(long)]
    fixed_power: bool,
    #[arg(long)]
    maximin_budget: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Choose the fanova-da basis by a FANOVA stage at the smallest n.
    #[arg(long)]
    basis_from_fanova: bool,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct FanovaArgs {
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    testbed: Option<TestbedId>,
    /// FANOVA of a saved model instead of fresh fits.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 80)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    kernel: Option<KernelFamily>,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Directory for percentage and effect-curve CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    testbed: Option<TestbedId>,
    /// System specification in TOML.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    maximin_budget: Option<usize>,
    /// Use extrapolation ranges where declared.
    #[arg(long)]
    extrapolation: bool,
    /// Also fill in constants and the testbed output.
    #[arg(long)]
    evaluate: bool,
    /// Directory for design_<replicate>.csv; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output column; every other column is an input.
    #[arg(long)]
    output: String,
    #[arg(long, default_value = "power-exponential")]
    kernel: KernelFamily,
    #[arg(long, default_value = "constant")]
    trend: TrendKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    points: PathBuf,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long)]
    testbed: TestbedId,
}

type CliResult = Result<(), String>;

fn create(path: &Path) -> Result<BufWriter<File>, String> {
    File::create(path).map(BufWriter::new).map_err(|e| format!("{}: {e}", path.display()))
}

fn output_sink(path: Option<&Path>) -> Result<Box<dyn Write>, String> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(args: RunArgs) -> CliResult {
    let mut cfg = ExperimentConfig::preset(args.testbed, args.preset);
    cfg.seed = args.seed;
    cfg.threads = args.threads;
    if let Some(v) = args.strategies {
        cfg.strategies = v;
    }
    if let Some(v) = args.inputs {
        cfg.arrangements = v;
    }
    if let Some(v) = args.trend {
        cfg.trends = v;
    }
    if let Some(v) = args.n {
        cfg.n_values = v;
    }
    if let Some(v) = args.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = args.test_size {
        cfg.test_size = v;
    }
    if let Some(v) = args.kernel {
        cfg.kernel = v;
    }
    if let Some(v) = args.starts {
        cfg.starts = v;
    }
    cfg.estimate_power = !args.fixed_power;
    cfg.maximin_budget = args.maximin_budget;
    cfg.modes = match args.mode {
        ModeArg::Interpolation => vec![TestMode::Interpolation],
        ModeArg::Extrapolation => vec![TestMode::Extrapolation],
        ModeArg::Both => TestMode::ALL.to_vec(),
    };
    cfg.validate().map_err(|e| e.to_string())?;
    if args.basis_from_fanova && cfg.strategies.contains(&Strategy::FanovaDa) {
        let stage = fanova_stage(&FanovaStageConfig::from_experiment(&cfg)).map_err(|e| e.to_string())?;
        eprintln!(
            "FANOVA basis at n = {}: {{{}}}{}",
            stage.n,
            stage.consensus.join(", "),
            if stage.tie_broken { " (tie resolved toward replicate 1)" } else { "" }
        );
        cfg.fanova_basis = Some(stage.consensus);
    }
    let records = run_experiment(&cfg).map_err(|e| e.to_string())?;
    fs::create_dir_all(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    write_records_csv(&records, create(&args.out.join("records.csv"))?).map_err(|e| e.to_string())?;
    write_summary_json(&cfg, &records, create(&args.out.join("summary.json"))?).map_err(|e| e.to_string())?;
    println!("{:<10} {:<13} {:<9} {:<14} {:>5} {:>12} {:>12}", "strategy", "inputs", "trend", "mode", "n", "mean %", "median %");
    for cell in summarize(&records) {
        for s in &cell.sizes {
            println!(
                "{:<10} {:<13} {:<9} {:<14} {:>5} {:>12.5} {:>12.5}{}",
                cell.key.strategy.name(),
                cell.key.arrangement.name(),
                cell.key.trend.to_string(),
                cell.key.mode.to_string(),
                s.n,
                s.mean,
                s.median,
                if s.failures > 0 { format!("  ({} failed)", s.failures) } else { String::new() }
            );
        }
    }
    let failed = records.iter().filter(|r| r.failure.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} records failed; see the failure column", records.len());
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn fanova_cmd(args: FanovaArgs) -> CliResult {
    let reports = if let Some(path) = &args.model {
        let model = GaspModel::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
        vec![fanova(&model, None, args.grid).map_err(|e| e.to_string())?]
    } else {
        let testbed = args.testbed.expect("clap enforces testbed or model");
        let mut cfg = FanovaStageConfig::new(testbed, args.n, args.replicates, args.seed);
        cfg.grid = args.grid;
        cfg.threads = args.threads;
        if let Some(k) = args.kernel {
            cfg.kernel = k;
        }
        let stage = fanova_stage(&cfg).map_err(|e| e.to_string())?;
        for (i, b) in stage.bases.iter().enumerate() {
            println!("replicate {}: basis {{{}}}", i + 1, b.join(", "));
        }
        println!(
            "consensus basis: {{{}}}{}",
            stage.consensus.join(", "),
            if stage.tie_broken { " (tie resolved toward replicate 1)" } else { "" }
        );
        stage.reports
    };
    let names: Vec<String> = reports[0].ranked().into_iter().map(|(n, _)| n).collect();
    println!("{:<24} {:>10} {:>10} {:>10}", "effect", "median %", "min %", "max %");
    for name in names.iter().take(12) {
        let mut v: Vec<f64> = reports.iter().map(|r| r.ranked().into_iter().find(|(n, _)| n == name).map_or(0.0, |x| x.1)).collect();
        v.sort_by(f64::total_cmp);
        let median = pi_surrogate::harness::quantile(&v, 0.5);
        println!("{:<24} {:>10.3} {:>10.3} {:>10.3}", name, median, v[0], v[v.len() - 1]);
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        for (i, r) in reports.iter().enumerate() {
            r.write_csv(create(&dir.join(format!("fanova_{}.csv", i + 1)))?).map_err(|e| e.to_string())?;
            for c in &r.curves {
                c.write_csv(create(&dir.join(format!("effect_{}_{}.csv", i + 1, sanitize(&c.input))))?).map_err(|e| e.to_string())?;
            }
        }
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

fn design(args: DesignArgs) -> CliResult {
    let (spec, testbed) = match (&args.spec, args.testbed) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            (SystemSpec::from_toml(&text).map_err(|e| e.to_string())?, None)
        }
        (None, Some(id)) => (Testbed::new(id).spec, Some(Testbed::new(id))),
        (None, None) => return Err("give --testbed or --spec".into()),
    };
    if args.evaluate && testbed.is_none() {
        return Err("--evaluate needs --testbed".into());
    }
    let vars: Vec<_> = spec.non_constant_inputs().cloned().collect();
    let constants: Vec<_> = spec.constants().cloned().collect();
    let mode = if args.extrapolation { RangeMode::Extrapolation } else { RangeMode::Training };
    let budget = args.maximin_budget.unwrap_or_else(|| default_budget(vars.len()));
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    for rep in 1..=args.replicates {
        let req = DesignRequest::new(args.n, vars.clone(), mode, args.seed ^ rep as u64);
        let d = maximin_lhd(&req, budget).map_err(|e| e.to_string())?;
        let data = match &testbed {
            Some(tb) if args.evaluate => tb.complete_dataset(&d.data).map_err(|e| e.to_string())?,
            _ => {
                let mut data = d.data;
                append_constants(&mut data, &constants).map_err(|e| e.to_string())?;
                data
            }
        };
        let path = args.out.as_ref().map(|dir| dir.join(format!("design_{rep}.csv")));
        data.write_csv(output_sink(path.as_deref())?).map_err(|e| e.to_string())?;
        eprintln!("replicate {rep}: min distance {:.4} (start {:.4})", d.min_distance, d.start_min_distance);
    }
    Ok(())
}

fn train_cmd(args: TrainArgs) -> CliResult {
    let file = File::open(&args.data).map_err(|e| format!("{}: {e}", args.data.display()))?;
    let mut data = Dataset::read_csv(file, Provenance::Training).map_err(|e| e.to_string())?;
    data.mark_output(&args.output).map_err(|e| e.to_string())?;
    let out = data.output_index();
    let keep: Vec<usize> = (0..data.ncols())
        .filter(|&j| {
            let v = data.column_values(j);
            Some(j) == out || v.iter().any(|x| *x != v[0])
        })
        .collect();
    if keep.len() < data.ncols() {
        let dropped: Vec<&str> = (0..data.ncols()).filter(|j| !keep.contains(j)).map(|j| data.columns()[j].name.as_str()).collect();
        eprintln!("dropping constant columns: {}", dropped.join(", "));
        data = data.subset(&keep);
    }
    let cfg = TrainConfig { starts: args.starts, ..TrainConfig::new(args.kernel, args.trend, args.seed) };
    let model = train(&data, &cfg).map_err(|e| e.to_string())?;
    model.save(&args.out).map_err(|e| format!("{}: {e}", args.out.display()))?;
    println!("log-likelihood {:.6}, nugget {:e}", model.log_likelihood, model.nugget);
    for (name, (theta, p)) in model.input_names.iter().zip(model.kernel.theta.iter().zip(&model.kernel.power)) {
        println!("{name:<16} theta {theta:<14.6e} power {p:.4}");
    }
    Ok(())
}

fn predict_cmd(args: PredictArgs) -> CliResult {
    let model = GaspModel::load(&args.model).map_err(|e| format!("{}: {e}", args.model.display()))?;
    let file = File::open(&args.points).map_err(|e| format!("{}: {e}", args.points.display()))?;
    let points = Dataset::read_csv(file, Provenance::Test).map_err(|e| e.to_string())?;
    let p = model.predict(&points).map_err(|e| e.to_string())?;
    let mut w = csv::Writer::from_writer(output_sink(args.out.as_deref())?);
    w.write_record(["mean", "std_error"]).map_err(|e| e.to_string())?;
    for (m, s) in p.mean.iter().zip(&p.std_error) {
        w.write_record([m.to_string(), s.to_string()]).map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn spec_cmd(args: SpecArgs) -> CliResult {
    let text = Testbed::new(args.testbed).spec.to_toml().map_err(|e| e.to_string())?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Fanova(a) => fanova_cmd(a),
        Command::Design(a) => design(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Spec(a) => spec_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
