use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dynopt_cli::runner::{run_experiment, summary_text};
use dynopt_cli::spec::ExperimentSpec;
use dynopt_cli::{bundled_spec, CliError, BUNDLED_SPECS};

#[derive(Parser)]
#[command(
    name = "dynopt",
    about = "Run dynamic-optimization experiments from declarative TOML specs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment spec (a path or a bundled name; see `list`).
    Run {
        spec: String,
        /// Output root directory; overrides the spec's output_directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel runs; 0 means one per core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Per-run progress on stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Print the fully resolved configuration without running anything.
    Describe { spec: String },
    /// List the bundled experiment specs.
    List,
}

fn load_spec(arg: &str) -> Result<ExperimentSpec, CliError> {
    let source = if std::path::Path::new(arg).is_file() {
        std::fs::read_to_string(arg)
            .map_err(|e| CliError::Validation(format!("reading {arg}: {e}")))?
    } else if let Some(body) = bundled_spec(arg) {
        body.to_string()
    } else {
        return Err(CliError::Validation(format!(
            "{arg}: not a file and not a bundled spec (try `dynopt list`)"
        )));
    };
    ExperimentSpec::parse(&source)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            spec,
            out,
            jobs,
            verbose,
        } => {
            let parsed = load_spec(&spec)?;
            let out_root = out
                .or_else(|| parsed.output_directory.clone())
                .unwrap_or_else(|| PathBuf::from("runs"));
            let report = run_experiment(&parsed, &out_root, jobs, verbose)?;
            println!(
                "{} run(s) written to {}",
                report.runs,
                report.directory.display()
            );
            print!("{}", summary_text(&report.summaries));
            Ok(())
        }
        Command::Describe { spec } => {
            let parsed = load_spec(&spec)?;
            print!("{}", parsed.describe()?);
            Ok(())
        }
        Command::List => {
            for (name, body) in BUNDLED_SPECS {
                let spec = ExperimentSpec::parse(body)?;
                let dims = spec.problem.dimension.all();
                let competitors = spec.strategies.len() + spec.baselines.len();
                println!(
                    "{name:<22} {} competitor(s), {} seed(s), dimension(s) {:?}, {} iterations",
                    competitors,
                    spec.seeds.len(),
                    dims,
                    spec.framework.total_iterations
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
