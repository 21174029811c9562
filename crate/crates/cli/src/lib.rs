//! Library behind the `kirlab` binary.

pub mod args;
pub mod commands;
pub mod error;
pub mod output;

use std::io::Write;
use std::path::{Path, PathBuf};

use kirlab::acceptance::{run_criterion, AcceptanceOptions, CRITERIA};
use kirlab::division::DEFAULT_SEED;
use rayon::prelude::*;

pub use args::{Cli, Command, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use output::Artifact;

/// Caps rayon's global pool at `KIRLAB_THREADS` when that is set.
pub fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("KIRLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("KIRLAB_THREADS must be a positive integer, got '{v}'")))?;
    // A pool that already exists (tests calling twice) keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Computes one operator subcommand.
pub fn compute(cmd: &Command) -> CliResult<Artifact> {
    match cmd {
        Command::Graph(a) => commands::graph(a),
        Command::Lattice(a) => commands::lattice(a),
        Command::Dyadic(a) => commands::dyadic(a),
        Command::Metric(a) => commands::metric(a),
        Command::Frac(a) => commands::frac(a),
        Command::Hilbert(a) => commands::hilbert(a),
        Command::Coupling(a) => commands::coupling(a),
        Command::Converge(a) => commands::converge(a),
        Command::Run(_) | Command::ReproduceAll(_) => {
            Err(CliError::Usage("run and reproduce-all cannot be nested".into()))
        }
    }
}

/// Reads and validates a config file, then computes it. Nothing is written.
pub fn load_config(path: &Path) -> CliResult<(ExperimentConfig, Artifact)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut art = compute(&cfg.command()?)?;
    art.set("module", cfg.module.clone());
    if let Some(s) = cfg.seed {
        art.set("seed", s);
    }
    Ok((cfg, art))
}

/// Runs a config: 0 on success, 2 on a validation error, 3 on a numerical-contract failure.
pub fn run(config: &Path, out: Option<&Path>, stdout: &mut dyn Write) -> CliResult<()> {
    let (cfg, art) = load_config(config)?;
    let dir: Option<PathBuf> = cfg.output.clone().or_else(|| out.map(Path::to_path_buf));
    art.emit(dir.as_deref(), stdout)
}

/// One row of the reproduce-all table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub fn reproduce_all(a: &args::ReproduceArgs, seed: u64) -> CliResult<Vec<CheckRow>> {
    let opts = AcceptanceOptions {
        seed,
        cs_override: a.inject_cs,
    };
    let ids: Vec<usize> = if a.only.is_empty() { (1..=CRITERIA.len()).collect() } else { a.only.clone() };
    if let Some(bad) = ids.iter().find(|i| **i == 0 || **i > CRITERIA.len()) {
        return Err(CliError::Usage(format!("no criterion {bad} (expected 1..={})", CRITERIA.len())));
    }
    let mut rows: Vec<CheckRow> = ids
        .par_iter()
        .map(|&id| {
            let r = run_criterion(id, &opts);
            CheckRow {
                name: format!("{:>2} {}", r.id, r.name),
                passed: r.passed,
                detail: r.detail,
            }
        })
        .collect();
    if let Some(dir) = &a.config_dir {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for f in files {
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let row = match load_config(&f) {
                Ok((_, art)) => CheckRow {
                    name,
                    passed: true,
                    detail: art.summary_line(),
                },
                Err(e) => CheckRow {
                    name,
                    passed: false,
                    detail: format!("exit {}: {e}", e.exit_code()),
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Entry point shared by the binary and the tests.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    configure_threads()?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Run(r) => run(&r.config, out, stdout),
        Command::ReproduceAll(a) => {
            let rows = reproduce_all(a, cli.seed.unwrap_or(DEFAULT_SEED))?;
            let mut art = Artifact::new("reproduce").header(&["check", "passed", "detail"]);
            for r in &rows {
                writeln!(stdout, "[{}] {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
                art.rows.push(vec![r.name.trim().to_string(), r.passed.to_string(), r.detail.clone()]);
            }
            let failed = rows.iter().filter(|r| !r.passed).count();
            art.set("checks", rows.len());
            art.set("failed", failed);
            if let Some(dir) = out {
                art.emit(Some(dir), &mut std::io::sink())?;
            }
            writeln!(stdout, "{} of {} checks passed", rows.len() - failed, rows.len())?;
            if failed > 0 {
                return Err(CliError::Failed(format!("{failed} check(s) failed")));
            }
            Ok(())
        }
        cmd => compute(cmd)?.emit(out, stdout),
    }
}
