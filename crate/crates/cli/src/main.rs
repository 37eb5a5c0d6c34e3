use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cep_lab::env::{EnvKind, EnvSpec};
use cep_lab::harness::{self, ExperimentConfig, ExperimentReport, Protocol};
use cep_lab::ib::{log_spaced, sweep_frontier, SweepOptions, DEFAULT_BETA_COUNT, DEFAULT_BETA_RANGE, DEFAULT_RESTARTS};
use cep_lab::{Execution, JointTable, LabError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cep-lab", version, about = "Information-bottleneck and exception-dynamics protocols on synthetic environments")]
struct Cli {
    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an environment stream to a text file.
    GenEnv(GenEnv),
    /// Sweep the relevance-rate frontier of a joint table.
    IbFrontier(IbFrontier),
    /// Run a protocol (b2, b3, b4 or b5).
    Run(Run),
    /// Combine reports into the four-row verdict table.
    Falsify {
        /// Output directories holding report.json.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute a report's summary from its per-trial tables.
    Verify { dir: PathBuf },
    /// Write plot-ready CSVs under DIR/plots.
    ExportPlots { dir: PathBuf },
}

#[derive(Args)]
struct GenEnv {
    /// Environment kind; ignored when --config is given.
    #[arg(long, default_value = "rule_exception")]
    kind: String,
    /// JSON environment spec: {"kind": ..., "params": {...}, "seed": ...}.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    length: Option<usize>,
    /// Stream file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IbFrontier {
    /// JSON joint table {"rows": [[...], ...]}.
    #[arg(long, conflicts_with = "env")]
    joint: Option<PathBuf>,
    /// Use the exact joint of a default environment of this kind.
    #[arg(long)]
    env: Option<String>,
    #[arg(long = "z", default_value_t = 3)]
    z_size: usize,
    #[arg(long, default_value_t = DEFAULT_BETA_COUNT)]
    betas: usize,
    #[arg(long, default_value_t = DEFAULT_BETA_RANGE.0)]
    beta_min: f64,
    #[arg(long, default_value_t = DEFAULT_BETA_RANGE.1)]
    beta_max: f64,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for frontier.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Run {
    protocol: String,
    /// JSON experiment config; protocol defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
}

fn exit_code(e: &LabError) -> u8 {
    match e {
        LabError::InsufficientData(_) => 3,
        LabError::Numeric(_) | LabError::ModelCoverage(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    };
    let result = match cli.command {
        Command::GenEnv(a) => gen_env(a),
        Command::IbFrontier(a) => ib_frontier(a, exec),
        Command::Run(a) => run(a, exec),
        Command::Falsify { dirs, out } => falsify(&dirs, out.as_deref()),
        Command::Verify { dir } => verify(&dir),
        Command::ExportPlots { dir } => export_plots(&dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read(path: &Path) -> Result<String, LabError> {
    fs::read_to_string(path).map_err(|e| LabError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), LabError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| LabError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    fs::write(path, bytes).map_err(|e| LabError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn gen_env(a: GenEnv) -> Result<u8, LabError> {
    let mut spec = match &a.config {
        Some(p) => serde_json::from_str::<EnvSpec>(&read(p)?).map_err(|e| LabError::Config(e.to_string()))?,
        None => EnvSpec::default_for(a.kind.parse::<EnvKind>()?, 0),
    };
    if let Some(s) = a.seed {
        spec = spec.with_seed(s);
    }
    if let Some(l) = a.length {
        spec = spec.with_length(l);
    }
    spec.validate()?;
    let text = spec.generate()?.to_text();
    match &a.out {
        Some(p) => write(p, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| LabError::Io {
            path: "<stdout>".into(),
            source: e,
        })?,
    }
    Ok(0)
}

fn ib_frontier(a: IbFrontier, exec: Execution) -> Result<u8, LabError> {
    let joint: JointTable = match (&a.joint, &a.env) {
        (Some(p), _) => serde_json::from_str(&read(p)?).map_err(|e| LabError::Config(e.to_string()))?,
        (None, Some(k)) => EnvSpec::default_for(k.parse::<EnvKind>()?, 0).exact_joint()?,
        (None, None) => return Err(LabError::Config("give --joint FILE or --env KIND".into())),
    };
    if a.betas == 0 || !(a.beta_min > 0.0) || a.beta_max < a.beta_min {
        return Err(LabError::Config("need --betas >= 1 and 0 < --beta-min <= --beta-max".into()));
    }
    let opts = SweepOptions {
        restarts: a.restarts,
        execution: exec,
        ..SweepOptions::default()
    };
    let curve = sweep_frontier(&joint, a.z_size, &log_spaced(a.beta_min, a.beta_max, a.betas), a.seed, opts)?;
    let path = a.out.join("frontier.csv");
    write(&path, curve.to_csv_string().as_bytes())?;
    let converged = curve.converged_points().len();
    println!(
        "{}: {} points, {converged} converged, I(X;Y) = {:.6} bits",
        path.display(),
        curve.points.len(),
        curve.source_ixy
    );
    Ok(0)
}

fn run(a: Run, exec: Execution) -> Result<u8, LabError> {
    let protocol: Protocol = a.protocol.parse()?;
    let cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::new(protocol),
    };
    if cfg.protocol != protocol {
        return Err(LabError::Config(format!(
            "config is for {} but {} was requested",
            cfg.protocol, protocol
        )));
    }
    let cfg = cfg.with_overrides(a.seed, a.out, a.trials);
    let out = harness::run(&cfg, exec)?;
    let path = out.persist(&cfg.output_dir)?;
    let r = &out.report;
    println!("{}: {} ({} tables)", path.display(), r.summary.verdict(), r.per_trial.len());
    println!("{}", r.summary.evidence());
    Ok(0)
}

fn falsify(dirs: &[PathBuf], out: Option<&Path>) -> Result<u8, LabError> {
    let reports = dirs.iter().map(|d| ExperimentReport::load(d)).collect::<Result<Vec<_>, _>>()?;
    let rows = harness::falsification_summary(&reports);
    for r in &rows {
        println!(
            "criterion {}: {:<13} dissent {}  {}",
            r.criterion,
            r.verdict.name(),
            r.dissent,
            r.evidence.join(" | ")
        );
    }
    if let Some(p) = out {
        let text = serde_json::to_string_pretty(&rows).map_err(LabError::from)?;
        write(p, text.as_bytes())?;
    }
    Ok(0)
}

fn verify(dir: &Path) -> Result<u8, LabError> {
    let v = harness::verify(dir)?;
    for m in &v.mismatches {
        println!("mismatch {m}");
    }
    println!("{} values checked, {} mismatches", v.checked, v.mismatches.len());
    Ok(if v.ok() { 0 } else { 4 })
}

fn export_plots(dir: &Path) -> Result<u8, LabError> {
    for p in harness::export_plots(dir)? {
        println!("{}", p.display());
    }
    Ok(0)
}
