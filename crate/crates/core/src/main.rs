use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netcert::certify::{backend_by_name, factorize_agents, solve, CertificationContext, MultiplierMode};
use netcert::sweep::{
    emit_outputs, nominal_gate, report_sizes, run_sweep, sector_at, Model, SweepError, SweepOptions,
};

#[derive(Parser)]
#[command(name = "netcert", version, about = "Partitioned robust stability certificates for networks with uncertain links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition admissibility, ideal-link stability and LMI sizes.
    Check { model: PathBuf },
    /// Certify one sector point for one partition.
    Certify {
        model: PathBuf,
        #[arg(long)]
        partition: String,
        #[arg(long, allow_hyphen_values = true)]
        theta1: f64,
        #[arg(long, allow_hyphen_values = true)]
        theta2: f64,
        #[arg(long, default_value = "free")]
        mode: MultiplierMode,
        /// Write the SDPs in plain-text form to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Sweep the sector grid and write sweep.csv, summary.json and regions.dat.
    Sweep {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to every core.
        #[arg(long)]
        jobs: Option<usize>,
        /// Restrict to these partitions (repeatable).
        #[arg(long)]
        partition: Vec<String>,
        /// Write 0 in the seconds column so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
    },
    /// Identity checks, embedding equivalence and falsification of a sweep.
    Validate {
        model: PathBuf,
        /// Sweep output directory whose certified points are falsified.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("netcert: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(command: Command) -> Result<u8, SweepError> {
    match command {
        Command::Check { model } => {
            let model = Model::load(&model)?;
            let nominal = nominal_gate(&model);
            let reports = report_sizes(&model)?;
            print_json(&serde_json::json!({
                "model": model.file.name,
                "nominal_abscissa": nominal.as_ref().map(|n| n.abscissa).ok(),
                "nominal_stable": nominal.is_ok(),
                "partitions": reports,
            }));
            nominal.map(|_| 0)
        }
        Command::Certify { model, partition, theta1, theta2, mode, dump } => {
            let model = Model::load(&model)?;
            let backend = backend_by_name(&model.file.solver.backend)?;
            nominal_gate(&model)?;
            let named = model
                .partition(&partition)
                .ok_or_else(|| SweepError::UnknownPartition(partition.clone()))?;
            let part = named
                .partition
                .as_ref()
                .map_err(|_| SweepError::Inadmissible(partition.clone()))?;
            let Some(sector) = sector_at(theta1, theta2) else {
                print_json(&serde_json::json!({ "verdict": "not-evaluated" }));
                return Ok(0);
            };
            let factors = factorize_agents(&model.agents)?;
            let ctx = CertificationContext::new(&model.graph, part, &factors)?;
            let problem = ctx.problem(sector, mode, &model.file.solver)?;
            if let Some(path) = dump {
                let io_err = |source| SweepError::Io { path: path.display().to_string(), source };
                let mut file = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io_err)?);
                for sdp in problem.linear_sdps() {
                    sdp.write_text(&mut file).map_err(io_err)?;
                }
            }
            let result = solve(&problem, backend.as_ref())?;
            print_json(&result);
            Ok(0)
        }
        Command::Sweep { model, out, jobs, partition, no_timing } => {
            let model = Model::load(&model)?;
            let opts = SweepOptions {
                jobs,
                partitions: (!partition.is_empty()).then_some(partition),
                ..Default::default()
            };
            let result = run_sweep(&model, &opts)?;
            let files = emit_outputs(&result, &out, !no_timing)?;
            eprintln!("wrote {}", files.csv.display());
            Ok(0)
        }
        Command::Validate { model, sweep, samples, trials, out } => {
            let model = Model::load(&model)?;
            let report = netcert::validate::run_validation(&model, sweep.as_deref(), samples, trials)?;
            let json = serde_json::to_string_pretty(&report).expect("serializable");
            match out {
                Some(path) => std::fs::write(&path, json + "\n")
                    .map_err(|source| SweepError::Io { path: path.display().to_string(), source })?,
                None => println!("{json}"),
            }
            Ok(if report.passed { 0 } else { 1 })
        }
    }
}
