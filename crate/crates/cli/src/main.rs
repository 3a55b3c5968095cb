use clap::{error::ErrorKind as ClapKind, Parser, Subcommand};
use dae_discovery::benchgen::{recovery_metrics, BenchError, MetricsOptions, SystemSpec};
use dae_discovery::pipeline::{
    emit_report, load_data, load_truth, run_pipeline, run_sweep, sweep_table, ErrorKind,
    PipelineConfig, PipelineError, ReportFormat, CONFIG_SCHEMA,
};
use dae_discovery::timeseries::write_table;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Discover differential-algebraic models from time series.
#[derive(Parser)]
#[command(name = "daedisc", version)]
struct Cli {
    /// Print the JSON schema of the config file and exit.
    #[arg(long)]
    print_schema: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run discovery from a config file.
    Discover {
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory; overrides the config's output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for tie-breaking and generated data.
        #[arg(long)]
        seed: Option<u64>,
        /// Fan out over the config's sweep grid and write sweep.csv.
        #[arg(long)]
        sweep: bool,
        /// Print the JSON report instead of the text one.
        #[arg(long)]
        json: bool,
    },
    /// Simulate a benchmark system to CSV.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the reference model.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compare a discovered model against a reference.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        span_tol: f64,
        #[arg(long, default_value_t = 1e-6)]
        support_tol: f64,
    },
}

fn cli_error(operation: &str, kind: ErrorKind, message: impl Into<String>) -> PipelineError {
    PipelineError::new("cli", operation, kind, message)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| cli_error("write", ErrorKind::Data, format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents)
        .map_err(|e| cli_error("write", ErrorKind::Data, format!("{}: {e}", path.display())))
}

fn stdout(bytes: &[u8]) {
    let _ = std::io::stdout().lock().write_all(bytes);
}

fn discover(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    sweep: bool,
    json: bool,
) -> Result<(), PipelineError> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(seed) = seed {
        cfg = cfg.with_seed(seed);
    }
    let out = out.or_else(|| cfg.output.clone());
    if sweep {
        cfg.validate()?;
        let data = load_data(&cfg)?;
        let table = sweep_table(&run_sweep(&cfg, &data)?);
        if let Some(dir) = &out {
            write_file(&dir.join("sweep.csv"), table.as_bytes())?;
        }
        stdout(table.as_bytes());
        return Ok(());
    }
    let outcome = run_pipeline(&cfg, out.as_deref())?;
    let format = if json {
        ReportFormat::Json
    } else {
        ReportFormat::Text
    };
    stdout(&emit_report(&outcome.model, &outcome.trace, format));
    if let (Some(m), false) = (outcome.metrics_json(), json) {
        stdout(b"\n# metrics\n");
        stdout(m.as_bytes());
    }
    Ok(())
}

fn simulate(spec: &Path, out: &Path, truth: Option<PathBuf>) -> Result<(), PipelineError> {
    let text = std::fs::read_to_string(spec).map_err(|e| {
        cli_error(
            "simulate",
            ErrorKind::Config,
            format!("{}: {e}", spec.display()),
        )
    })?;
    let system: SystemSpec = serde_json::from_str(&text)
        .map_err(|e| cli_error("simulate", ErrorKind::Config, e.to_string()))?;
    let bench = |op: &str, e: BenchError| {
        let kind = match e {
            BenchError::Invalid(_) => ErrorKind::Config,
            BenchError::Table(_) | BenchError::Incomparable(_) => ErrorKind::Data,
            _ => ErrorKind::Numerical,
        };
        PipelineError::new("benchgen", op, kind, e.to_string())
    };
    let table = system.simulate().map_err(|e| bench("simulate", e))?;
    let mut csv = Vec::new();
    write_table(&table, &mut csv).map_err(|e| {
        PipelineError::new("timeseries", "write_table", ErrorKind::Data, e.to_string())
    })?;
    write_file(out, &csv)?;
    if let Some(path) = truth {
        write_file(
            &path,
            system
                .truth()
                .map_err(|e| bench("truth", e))?
                .to_json()
                .as_bytes(),
        )?;
    }
    Ok(())
}

fn score(model: &Path, truth: &Path, span_tol: f64, support_tol: f64) -> Result<(), PipelineError> {
    let opts = MetricsOptions {
        span_tol,
        support_tol,
    };
    let metrics =
        recovery_metrics(&load_truth(model)?, &load_truth(truth)?, &opts).map_err(|e| {
            PipelineError::new(
                "benchgen",
                "recovery_metrics",
                ErrorKind::Data,
                e.to_string(),
            )
        })?;
    let mut text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    text.push('\n');
    stdout(text.as_bytes());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ")
                .to_string();
            eprintln!(
                "{}",
                cli_error("parse_args", ErrorKind::Config, first).to_json_line()
            );
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        _ if cli.print_schema => {
            stdout(CONFIG_SCHEMA.as_bytes());
            Ok(())
        }
        None => Err(cli_error(
            "parse_args",
            ErrorKind::Config,
            "a subcommand or --print-schema is required",
        )),
        Some(Command::Discover {
            config,
            out,
            seed,
            sweep,
            json,
        }) => discover(&config, out, seed, sweep, json),
        Some(Command::Simulate { spec, out, truth }) => simulate(&spec, &out, truth),
        Some(Command::Score {
            model,
            truth,
            span_tol,
            support_tol,
        }) => score(&model, &truth, span_tol, support_tol),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
