mod gen;
mod output;
mod run;
mod simulate;

use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use scenarioforge::ceg::ExportFormat;
use scenarioforge::project::{load_project, Project};
use tracing_subscriber::EnvFilter;

use crate::output::Out;

#[derive(Debug, Parser)]
#[command(name = "scenarioforge", version, about = "Executable scenario specifications")]
struct Cli {
    /// Project manifest.
    #[arg(long, global = true, default_value = "scenarioforge.toml")]
    project: PathBuf,
    /// Directory every output file is written under.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load and validate the project.
    Validate,
    /// Classify the requirements and print the category table.
    Classify {
        /// Requirements file instead of the ones the manifest names.
        #[arg(long)]
        requirements: Option<PathBuf>,
    },
    /// Derive test cases from the causal requirements.
    GenTests {
        #[arg(long)]
        requirements: Option<PathBuf>,
        /// Suite formats to write.
        #[arg(long, value_enum, default_values_t = [SuiteFormat::Tabular, SuiteFormat::Structured])]
        format: Vec<SuiteFormat>,
    },
    /// Run feature scenarios and tests; exits 0 iff every verdict is Pass.
    Run {
        #[arg(long)]
        features: bool,
        #[arg(long)]
        tests: bool,
        #[arg(long)]
        all: bool,
        /// Record per-test seconds in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Play out the project interactively, automatically or as a server.
    Simulate {
        #[arg(long, conflicts_with_all = ["serve", "auto"])]
        repl: bool,
        /// Serve the session protocol on this address.
        #[arg(long, value_name = "ADDR", conflicts_with = "auto")]
        serve: Option<String>,
        #[arg(long)]
        auto: bool,
        /// Write the sequence diagram to this file under --out.
        #[arg(long, value_name = "FILE", num_args = 0..=1, default_missing_value = "sequence.puml")]
        diagram: Option<PathBuf>,
        /// Feature scenario or test whose triggers drive the session.
        #[arg(long)]
        script: Option<String>,
    },
    /// Write the sequence diagram and/or the component graph.
    Diagram {
        #[arg(long, value_enum, default_value_t = DiagramKind::All)]
        kind: DiagramKind,
        #[arg(long)]
        script: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteFormat {
    Tabular,
    Structured,
}

impl From<SuiteFormat> for ExportFormat {
    fn from(f: SuiteFormat) -> Self {
        match f {
            SuiteFormat::Tabular => ExportFormat::Tabular,
            SuiteFormat::Structured => ExportFormat::Structured,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DiagramKind {
    Sequence,
    Component,
    All,
}

/// Exit status: 0 success, 1 a test did not pass, 2 an error.
fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("SCENARIOFORGE_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn project(cli: &Cli) -> anyhow::Result<Project> {
    load_project(&cli.project).map_err(|e| anyhow::anyhow!("{}: {e}", cli.project.display()))
}

fn project_logged(cli: &Cli) -> anyhow::Result<Project> {
    let p = project(cli)?;
    for w in &p.warnings {
        tracing::warn!("{w}");
    }
    Ok(p)
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    let out = Out::new(&cli.out);
    match &cli.command {
        Command::Validate => {
            let p = project(&cli)?;
            for w in &p.warnings {
                println!("{w}");
            }
            println!(
                "{}: {} scenarios, {} test scenarios, {} tests, {} features, {} bindings",
                p.manifest.name,
                p.defs.len(),
                p.test_defs.len(),
                p.tests.len(),
                p.features.len(),
                p.bindings.len()
            );
            Ok(true)
        }
        Command::Classify { requirements } => gen::classify(&cli.project, requirements.as_deref(), &out),
        Command::GenTests { requirements, format } => {
            let formats: Vec<ExportFormat> = format.iter().map(|f| (*f).into()).collect();
            gen::gen_tests(&cli.project, requirements.as_deref(), &formats, &out)
        }
        Command::Run {
            features,
            tests,
            all,
            timings,
        } => {
            let p = project_logged(&cli)?;
            let none = !features && !tests;
            run::run(&p, *features || *all || none, *tests || *all || none, *timings, &out)
        }
        Command::Simulate {
            repl,
            serve,
            auto,
            diagram,
            script,
        } => {
            let p = project_logged(&cli)?;
            if let Some(addr) = serve {
                simulate::serve(p, addr)
            } else if *repl {
                simulate::repl(&p, script.as_deref(), diagram.as_deref(), &out)
            } else if *auto {
                simulate::auto(&p, script.as_deref(), diagram.as_deref(), &out)
            } else {
                anyhow::bail!("choose one of --repl, --serve ADDR or --auto")
            }
        }
        Command::Diagram { kind, script } => {
            let p = project_logged(&cli)?;
            simulate::diagrams(
                &p,
                script.as_deref(),
                matches!(kind, DiagramKind::Sequence | DiagramKind::All),
                matches!(kind, DiagramKind::Component | DiagramKind::All),
                &out,
            )
        }
    }
}
