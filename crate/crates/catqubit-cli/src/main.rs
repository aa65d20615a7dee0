//! `catqubit` scenario runner.
//!
//! Exit codes: 0 success, 2 usage or config error, 3 physics error. Errors
//! are reported as one JSON object on stdout.

mod config;
mod run;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use catqubit::circuit::{self, RingParams};
use catqubit::Exec;
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use config::{ConfigError, ScenarioConfig};
use run::RunError;

#[derive(Parser)]
#[command(name = "catqubit", version, about = "Cat-qubit circuit, dynamics and protocol scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for sweeps and grids (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Overrides run.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium and mode-parameter sweep over external flux.
    Circuit,
    /// Run one protocol.
    Run { protocol: String },
}

#[derive(Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    protocol: &'a str,
    config_hash: String,
    seed: u64,
    summary: &'a std::collections::BTreeMap<String, Value>,
    fit: Option<&'a catqubit::protocols::FitResult>,
    outputs: Vec<OutputEntry>,
    /// The only nondeterministic part of the record.
    timing: Value,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial file.
fn write_atomic(path: &Path, data: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("partial");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

fn error_json(kind: &str, e: &dyn std::fmt::Display, detail: Option<String>) -> String {
    json!({ "error": { "kind": kind, "message": e.to_string(), "variant": detail } }).to_string()
}

/// Variant name of a library error, e.g. `Truncation`.
fn variant(e: &catqubit::Error) -> String {
    format!("{e:?}").chars().take_while(|c| c.is_alphanumeric()).collect()
}

fn load(cli: &Cli) -> Result<ScenarioConfig, RunError> {
    let path = cli.config.as_ref().ok_or_else(|| ConfigError::Invalid("--config is required".into()))?;
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    Ok(cfg)
}

fn write_outputs(
    out_dir: &Path,
    protocol: &str,
    cfg: &ScenarioConfig,
    tables: &[(String, String)],
    summary: &std::collections::BTreeMap<String, Value>,
    fit: Option<&catqubit::protocols::FitResult>,
    started: Instant,
) -> Result<(), RunError> {
    fs::create_dir_all(out_dir)?;
    let effective = cfg.effective_toml();
    write_atomic(&out_dir.join("effective_config.toml"), effective.as_bytes())?;
    let mut outputs = Vec::new();
    for (name, body) in tables {
        write_atomic(&out_dir.join(name), body.as_bytes())?;
        outputs.push(OutputEntry { file: name.clone(), sha256: sha256(body.as_bytes()) });
    }
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let record = RunRecord {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        protocol,
        config_hash: sha256(effective.as_bytes()),
        seed: cfg.run.seed,
        summary,
        fit,
        outputs,
        timing: json!({ "timestamp_unix_s": stamp, "wall_time_s": started.elapsed().as_secs_f64() }),
    };
    let mut text = serde_json::to_string_pretty(&record).expect("record serializes");
    text.push('\n');
    write_atomic(&out_dir.join("record.json"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn cmd_circuit(cli: &Cli, cfg: &ScenarioConfig) -> Result<(), RunError> {
    let started = Instant::now();
    let c = ScenarioConfig::require(&cfg.circuit, "circuit")?;
    let (a, b, n) = (c.sweep_start_phi0, c.sweep_stop_phi0, c.sweep_points);
    if n == 0 || b < a || (n > 1 && a == b) {
        return Err(ConfigError::Invalid(format!("empty sweep range [{a}, {b}] with {n} points")).into());
    }
    let fluxes: Vec<f64> = (0..n).map(|k| if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect();
    let ring = RingParams::new(c.e_j_ghz, c.e_w_ghz, c.e_c_ghz, c.phi_ext_phi0)?;
    let mut summary = std::collections::BTreeMap::new();
    summary.insert("beta_J".to_string(), json!(ring.beta_j()));
    let mut tables = Vec::new();
    if ring.beta_j() >= 0.5 {
        // several equilibria per flux: list every branch with its stability
        let mut csv = String::from("phi_ext[phi0],phi_J_bar[rad],phi_W_bar[rad],energy[GHz],stable\n");
        for &phi in &fluxes {
            for br in circuit::enumerate_branches(&ring.at_flux(phi)) {
                csv.push_str(&format!("{phi:.6},{:.9},{:.9},{:.6},{}\n", br.phases.phi_j, br.phases.phi_w, br.energy, br.stable));
            }
        }
        summary.insert("multivalued".to_string(), json!(true));
        tables.push(("branches.csv".to_string(), csv));
    } else {
        let rows = circuit::sweep(&ring, &fluxes, &run_overrides(c), Exec::default())?;
        let mut buf = Vec::new();
        circuit::write_sweep_csv(&rows, &mut buf)?;
        tables.push(("sweep.csv".to_string(), String::from_utf8(buf).expect("ascii csv")));
        if let Ok(s) = circuit::sweet_spot(ring.beta_j()) {
            summary.insert("sweet_spot_phi0".to_string(), json!(s));
        }
    }
    write_outputs(&cli.out, "circuit", cfg, &tables, &summary, None, started)
}

fn run_overrides(c: &config::CircuitSection) -> catqubit::circuit::ModeOverrides {
    catqubit::circuit::ModeOverrides {
        omega_m: c.omega_m_ghz.map(catqubit::ghz),
        omega_b: c.omega_b_ghz.map(catqubit::ghz),
        zpf_m: c.zpf_m,
        zpf_b: c.zpf_b,
    }
}

fn cmd_run(cli: &Cli, cfg: &ScenarioConfig, protocol: &str) -> Result<(), RunError> {
    let started = Instant::now();
    let o = run::run(cfg, protocol)?;
    write_outputs(&cli.out, protocol, cfg, &o.tables, &o.summary, o.fit.as_ref(), started)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| {
        Exec::with_jobs(cli.jobs, || match &cli.command {
            Command::Circuit => cmd_circuit(&cli, &cfg),
            Command::Run { protocol } => cmd_run(&cli, &cfg, protocol),
        })
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Physics(e)) => {
            println!("{}", error_json("physics", &e, Some(variant(&e))));
            ExitCode::from(3)
        }
        Err(e) => {
            println!("{}", error_json("usage", &e, None));
            ExitCode::from(2)
        }
    }
}
