use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qfi_cli::{config, scenarios, CliError, ExperimentConfig};
use qfi_core::acceptance;

#[derive(Parser)]
#[command(name = "qfi", version, about = "Quantum Fisher information experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config.
    Run { config: PathBuf },
    /// Run the acceptance criteria, one PASS/FAIL line each.
    Verify {
        /// Only these criteria (repeatable); all by default.
        #[arg(short, long = "criterion")]
        criterion: Vec<u8>,
    },
    /// Print the JSON schema of the config file.
    Schema,
}

/// Errors carry the scenario name once the config has parsed.
fn run(cfg_path: &PathBuf) -> Result<(), (Option<&'static str>, CliError)> {
    let cfg = ExperimentConfig::load(cfg_path).map_err(|e| (config::peek_scenario(cfg_path), e))?;
    let name = cfg.scenario.name();
    let table = scenarios::run(&cfg).map_err(|e| (Some(name), e))?;
    table.write(&cfg.output.path, cfg.output.format).map_err(|e| (Some(name), e))?;
    log::info!("wrote {}", cfg.output.path.display());
    Ok(())
}

fn verify(ids: &[u8]) -> Result<bool, CliError> {
    let ids: Vec<u8> = if ids.is_empty() { acceptance::criterion_ids().collect() } else { ids.to_vec() };
    let mut ok = true;
    for id in ids {
        let report = acceptance::run_criterion(id)
            .ok_or_else(|| CliError::Config(format!("no criterion {id}")))?;
        println!("{}", report.line());
        ok &= report.passed;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = qfi_cli::init_threads().map_err(|e| (None, e)).and_then(|()| match &cli.command {
        Command::Run { config } => run(config).map(|()| true),
        Command::Verify { criterion } => verify(criterion).map_err(|e| (None, e)),
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&config::schema()).expect("static schema"));
            Ok(true)
        }
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((scenario, e)) => {
            eprintln!("{}", e.report(scenario));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
