//! Scenario runner and figure-reproduction driver.
//!
//! Exit codes: 0 success, 2 configuration/usage error (with a line-numbered
//! diagnostic for scenario files), 3 runtime failure.

mod scenario_file;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use odnssec::figures::{generate, FigOptions, FigureName};
use odnssec::sim::{event_log_text, run, run_replications, Metrics};

#[derive(Parser)]
#[command(
    name = "odnssec",
    version,
    about = "On-demand DNSSEC defense simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Repeatable key=value override applied after file parsing.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file; writes metrics.csv and events.log.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        /// Independent replications (replication 0 keeps the event log).
        #[arg(long, default_value_t = 1)]
        replications: u64,
    },
    /// Reproduce one figure (fig5..fig11); writes <name>.csv.
    Figure {
        name: String,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Parse and validate a scenario file, printing the resolved settings.
    ValidateConfig { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            scenario,
            common,
            replications,
        } => cmd_simulate(&scenario, &common, replications),
        Command::Figure { name, common } => cmd_figure(&name, &common),
        Command::ValidateConfig { scenario } => cmd_validate(&scenario),
    }
}

fn load_scenario(
    path: &Path,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<odnssec::sim::Scenario, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("{}: cannot read: {e}", path.display()))?;
    let mut raw = scenario_file::parse(&text).map_err(|e| format!("{}:{}", path.display(), e))?;
    for ov in overrides {
        raw.apply_override(ov)
            .map_err(|e| format!("--override {ov}: {e}"))?;
    }
    let mut scenario = raw
        .into_scenario(path.parent().unwrap_or(Path::new(".")))
        .map_err(|e| format!("{}: {e}", path.display()))?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn cmd_simulate(path: &Path, common: &CommonOpts, replications: u64) -> ExitCode {
    let scenario = match load_scenario(path, common.seed, &common.overrides) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if replications == 0 {
        eprintln!("error: --replications must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = fs::create_dir_all(&common.out) {
        eprintln!("error: cannot create {}: {e}", common.out.display());
        return ExitCode::from(2);
    }
    let result = (|| -> Result<(), String> {
        let out = run(scenario.clone()).map_err(|e| e.to_string())?;
        fs::write(common.out.join("events.log"), event_log_text(&out.log))
            .map_err(|e| e.to_string())?;
        let mut csv = String::from("replication,key,value\n");
        push_metrics_rows(&mut csv, 0, &out.metrics);
        if replications > 1 {
            let rest =
                run_replications(&scenario, replications as usize).map_err(|e| e.to_string())?;
            // Replication 0 of run_replications equals the logged run; emit
            // the remaining ones.
            for (i, m) in rest.iter().enumerate().skip(1) {
                push_metrics_rows(&mut csv, i as u64, m);
            }
        }
        fs::write(common.out.join("metrics.csv"), csv).map_err(|e| e.to_string())?;
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn push_metrics_rows(csv: &mut String, replication: u64, metrics: &Metrics) {
    for (k, v) in metrics.to_kv() {
        csv.push_str(&format!("{replication},{k},{v}\n"));
    }
}

fn cmd_figure(name: &str, common: &CommonOpts) -> ExitCode {
    let Some(fig) = FigureName::parse(name) else {
        eprintln!(
            "error: unknown figure `{name}` (expected one of {})",
            FigureName::all().map(|f| f.to_string()).join(", ")
        );
        return ExitCode::from(2);
    };
    let mut opts = FigOptions::default();
    if let Some(seed) = common.seed {
        opts.seed = seed;
    }
    for ov in &common.overrides {
        let Some((k, v)) = ov.split_once('=') else {
            eprintln!("error: --override {ov}: expected key=value");
            return ExitCode::from(2);
        };
        if let Err(e) = opts.set(k.trim(), v.trim()) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if let Err(e) = fs::create_dir_all(&common.out) {
        eprintln!("error: cannot create {}: {e}", common.out.display());
        return ExitCode::from(2);
    }
    match generate(fig, &opts) {
        Ok((file, csv)) => match fs::write(common.out.join(&file), csv) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: cannot write {file}: {e}");
                ExitCode::from(3)
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

fn cmd_validate(path: &Path) -> ExitCode {
    match load_scenario(path, None, &[]) {
        Ok(scenario) => {
            println!("ok: {}", path.display());
            for line in scenario_file::describe(&scenario) {
                println!("  {line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
