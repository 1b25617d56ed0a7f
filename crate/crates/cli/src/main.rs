use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fsde_cli::config::{load, parse_override};
use fsde_cli::{run, CliError, CliResult, CommandKind};

/// Bayesian inference for fOU and fCIR models driven by fractional Brownian
/// motion.
#[derive(Parser)]
#[command(name = "fsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an exact fOU or fine-Euler fCIR path.
    Simulate(Common),
    /// Run a sampler or grid posterior on a series.
    Infer(Common),
    /// Level-0 posterior of H over sliding windows.
    Rolling(Common),
    /// Euler scheme for dX = X dB^H against its exact solution.
    DemoFailure(Common),
    /// ACF, IACT and ESS of a draws CSV.
    Diagnostics(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set leapfrog.eps=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Output directory (output CSV for `simulate`).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// fou or fcir.
    #[arg(long)]
    model: Option<String>,
    /// hmc, gibbs, grid or k0-rejection.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
}

impl Common {
    fn overrides(&self) -> CliResult<Vec<(String, toml::Value)>> {
        let mut out = Vec::new();
        let path = |p: &PathBuf| toml::Value::String(p.to_string_lossy().into_owned());
        let int = |k: &str, v: u64| -> CliResult<(String, toml::Value)> {
            let v = i64::try_from(v).map_err(|_| CliError::Config(format!("{k} {v} is too large")))?;
            Ok((k.to_string(), toml::Value::Integer(v)))
        };
        if let Some(v) = self.seed {
            out.push(int("seed", v)?);
        }
        if let Some(p) = &self.input {
            out.push(("input".into(), path(p)));
        }
        if let Some(p) = &self.output {
            out.push(("output".into(), path(p)));
        }
        if let Some(m) = &self.model {
            out.push(("model".into(), toml::Value::String(m.clone())));
        }
        if let Some(s) = &self.sampler {
            out.push(("sampler".into(), toml::Value::String(s.clone())));
        }
        if let Some(l) = self.level {
            out.push(("level".into(), toml::Value::Integer(l.into())));
        }
        if let Some(n) = self.iterations {
            out.push(int("iterations", n)?);
        }
        if let Some(dt) = self.dt {
            out.push(("dt".into(), toml::Value::Float(dt)));
        }
        for raw in &self.set {
            out.push(parse_override(raw)?);
        }
        Ok(out)
    }
}

fn execute(cmd: CommandKind, args: &Common) -> CliResult<Vec<PathBuf>> {
    let cfg = load(args.config.as_deref(), &args.overrides()?)?;
    run(cmd, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (cmd, args) = match &cli.command {
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::Infer(a) => (CommandKind::Infer, a),
        Command::Rolling(a) => (CommandKind::Rolling, a),
        Command::DemoFailure(a) => (CommandKind::DemoFailure, a),
        Command::Diagnostics(a) => (CommandKind::Diagnostics, a),
    };
    match execute(cmd, args) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fsde {}: {e}", cmd.name());
            ExitCode::from(e.exit_code())
        }
    }
}
