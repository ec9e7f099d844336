//! `srb`: run the coupled cat-map experiments from a TOML config.

mod config;
mod run;

use clap::{Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

#[derive(Parser)]
#[command(name = "srb", version, about = "Coupled cat-map lattice experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// section.key=value override, repeatable.
    #[arg(long = "set", global = true, value_name = "K=V")]
    set: Vec<String>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed (overrides estimator.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel estimators.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Orbit of S_ε in the SRBL binary format.
    Simulate,
    /// Conjugacy residual tables over K and ε.
    Conjugate,
    /// Perturbative against QR unstable spectrum.
    Spectrum,
    /// Markov partition artifact and symbolic codes of random points.
    Encode,
    /// SRB potentials and their decay fit.
    Potentials,
    /// Cluster-expansion pressure on the decimated lattice.
    Pressure,
    /// Contraction-rate fit in ε.
    GreenKubo,
    /// Generating and rate functions of windowed contraction rates.
    Ldp,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Conjugate => "conjugate",
            Command::Spectrum => "spectrum",
            Command::Encode => "encode",
            Command::Potentials => "potentials",
            Command::Pressure => "pressure",
            Command::GreenKubo => "green-kubo",
            Command::Ldp => "ldp",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match config::load(cli.config.as_deref(), &cli.set) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config-invalid: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = cli.seed {
        cfg.estimator.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.to_string_lossy().into_owned();
    }
    if let Err(e) = cfg.validate() {
        eprintln!("config-invalid: {e:#}");
        return ExitCode::from(2);
    }
    if cli.threads == Some(0) {
        eprintln!("config-invalid: --threads must be ≥ 1");
        return ExitCode::from(2);
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().expect("thread pool");
    }
    let out = PathBuf::from(&cfg.output.dir);
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("io: {e}");
        return ExitCode::from(1);
    }
    let hash = cfg.hash();
    let ctx = run::Ctx { cfg: &cfg, hash: &hash, out: &out, seed: cfg.estimator.seed };
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let result = match cli.command {
        Command::Simulate => run::simulate_cmd(&ctx),
        Command::Conjugate => run::conjugate_cmd(&ctx),
        Command::Spectrum => run::spectrum_cmd(&ctx),
        Command::Encode => run::encode_cmd(&ctx),
        Command::Potentials => run::potentials_cmd(&ctx),
        Command::Pressure => run::pressure_cmd(&ctx),
        Command::GreenKubo => run::green_kubo_cmd(&ctx),
        Command::Ldp => run::ldp_cmd(&ctx),
    };
    let (status, error, artifacts, code) = match &result {
        Ok(a) => ("ok", None, a.clone(), ExitCode::SUCCESS),
        Err(e) => {
            eprintln!("{e}");
            ("error", Some(json!({ "name": e.name(), "message": e.to_string() })), vec![], ExitCode::from(1))
        }
    };
    let manifest = json!({
        "subcommand": cli.command.name(),
        "status": status,
        "error": error,
        "config_hash": hash,
        "seed": cfg.estimator.seed,
        "config": cfg,
        "versions": { "srb-cli": env!("CARGO_PKG_VERSION"), "srb-core": srb_core::VERSION },
        "threads": rayon::current_num_threads(),
        "started_unix": started,
        "wall_time_s": clock.elapsed().as_secs_f64(),
        "artifacts": artifacts,
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if let Err(e) = std::fs::write(out.join("manifest.json"), text + "\n") {
        eprintln!("io: {e}");
        return ExitCode::from(1);
    }
    if status == "ok" {
        println!("{}: wrote {} to {}", cli.command.name(), artifacts.join(", "), out.display());
    }
    code
}
