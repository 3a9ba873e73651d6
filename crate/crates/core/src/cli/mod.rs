//! Command-line front end. Every command loads a document, builds an
//! [`ExperimentSpec`] and hands it to the harness.

pub mod document;

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::game::{monotonicity_constant, solve_quadratic_ne};
use crate::graph::{check_support, certify_all, validate_deltas, validate_doubly_stochastic, BALANCE_TOL, DEFAULT_MARGIN};
use crate::harness::{self, fmt_f64, hit_text, ExperimentSpec, SweepAxis};

pub use document::{load, LoadedDocument, RunDocument};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gfnash", version, about = "Gradient-free distributed Nash equilibrium seeking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Experiment document (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `experiment.output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for seeds and sweep points.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Dotted override such as `algo.stepsize.alpha0=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check connectivity, weights, deltas, monotonicity and certificates.
    Validate(Common),
    /// Solve for the interior equilibrium of a quadratic game.
    SolveNe(Common),
    /// Run all seeds and write trajectories plus a summary.
    Run(Common),
    /// Run one experiment per value of a parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// alpha0, N, topology, mode, delta or mu0.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Run both modes with shared seeds and report iterations to rel_err <= 0.1.
    Compare(Common),
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

fn invalid(error: Error) -> Failure {
    Failure {
        code: EXIT_INVALID,
        error,
    }
}

fn runtime(error: Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error,
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Validate(c) => cmd_validate(&c, out),
        Command::SolveNe(c) => cmd_solve_ne(&c, out),
        Command::Run(c) => cmd_run(&c, out),
        Command::Sweep { common, axis, values } => cmd_sweep(&common, &axis, &values, out),
        Command::Compare(c) => cmd_compare(&c, out),
    }
}

fn load_doc(c: &Common) -> std::result::Result<LoadedDocument, Failure> {
    load(&c.config, &c.set).map_err(invalid)
}

fn output_dir(c: &Common, doc: &LoadedDocument) -> PathBuf {
    c.out.clone().unwrap_or_else(|| doc.output_dir())
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> std::result::Result<(), Failure> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| runtime(e.into()))
}

/// One line of the validation report.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

/// Runs every structural check on a document's experiment.
pub fn validation_checks(doc: &LoadedDocument) -> std::result::Result<Vec<Check>, Error> {
    let spec = doc.experiment_spec()?;
    let n = spec.game.n();
    let mut checks = Vec::new();
    let mut push = |name: &str, r: std::result::Result<String, String>| {
        let (ok, detail) = match r {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        checks.push(Check {
            name: name.to_string(),
            ok,
            detail,
        });
    };

    let graph = spec.graph.topology.build(n)?;
    let connected = graph.is_strongly_connected();
    push(
        "strong connectivity",
        if connected { Ok(format!("{} nodes, {} edges", n, graph.edge_count())) } else { Err("graph is not strongly connected".into()) },
    );
    if !connected {
        return Ok(checks);
    }

    let weights = match spec.graph.build(n) {
        Ok((_, w)) => w,
        Err(e) => {
            push("doubly stochastic", Err(e.to_string()));
            return Ok(checks);
        }
    };
    push(
        "weight support",
        check_support(&weights, &graph).map(|_| "matches graph".into()).map_err(|e| e.to_string()),
    );
    push(
        "doubly stochastic",
        validate_doubly_stochastic(&weights, BALANCE_TOL)
            .map(|_| format!("tol {BALANCE_TOL:e}"))
            .map_err(|e| e.to_string()),
    );
    let deltas = spec.algo.delta.expand(n)?;
    let delta_ok = validate_deltas(&weights, &deltas);
    push("delta condition", delta_ok.clone().map(|_| "0 <= delta_l w_li < 2 w_ll".into()).map_err(|e| e.to_string()));

    let q = spec.game.quadratic()?;
    push(
        "strong monotonicity",
        monotonicity_constant(&q).map(|chi| format!("chi = {chi}")).map_err(|e| e.to_string()),
    );

    if delta_ok.is_ok() {
        match certify_all(&weights, &deltas, DEFAULT_MARGIN) {
            Ok(certs) => {
                for c in certs {
                    let msg = format!("rho = {:.6}, gamma = {:.6}", c.rho, c.gamma);
                    push(
                        &format!("spectral certificate player {}", c.player + 1),
                        if c.is_valid() { Ok(msg) } else { Err(msg) },
                    );
                }
            }
            Err(e) => push("spectral certificates", Err(e.to_string())),
        }
    }
    Ok(checks)
}

pub fn cmd_validate(c: &Common, out: &mut dyn Write) -> CmdResult {
    let doc = load_doc(c)?;
    let checks = validation_checks(&doc).map_err(invalid)?;
    let mut all = true;
    for ch in &checks {
        all &= ch.ok;
        say(out, format!("{} {}: {}", if ch.ok { "PASS" } else { "FAIL" }, ch.name, ch.detail))?;
    }
    if all {
        let spec = doc.experiment_spec().map_err(invalid)?;
        let window = spec.prepare().and_then(|prep| {
            let deltas = spec.algo.delta.expand(prep.game.n())?;
            harness::step_window(&prep, &deltas, spec.algo.smoothing.mu0)
        });
        match window {
            Ok(w) => {
                let ivs: Vec<String> = w.intervals.iter().map(|i| format!("({:.6e}, {:.6e})", i.lo, i.hi)).collect();
                say(
                    out,
                    format!(
                        "INFO admissible constant alpha: {} (chi = {}, lhat = {:.6e}, B = {:.6e}, gamma = {:.6}, C = {:.4})",
                        ivs.join(" U "),
                        w.chi,
                        w.lhat,
                        w.bbound,
                        w.gamma,
                        w.c
                    ),
                )?;
            }
            Err(e) => say(out, format!("INFO admissible constant alpha unavailable: {e}"))?,
        }
    }
    Ok(if all { EXIT_OK } else { EXIT_INVALID })
}

/// Fails with exit code 1 unless every validation check passes.
fn require_valid(doc: &LoadedDocument, out: &mut dyn Write) -> std::result::Result<ExperimentSpec, Failure> {
    let checks = validation_checks(doc).map_err(invalid)?;
    if let Some(bad) = checks.iter().find(|c| !c.ok) {
        say(out, format!("FAIL {}: {}", bad.name, bad.detail))?;
        return Err(invalid(Error::Config(format!("validation failed: {}", bad.name))));
    }
    doc.experiment_spec().map_err(invalid)
}

pub fn cmd_solve_ne(c: &Common, out: &mut dyn Write) -> CmdResult {
    let doc = load_doc(c)?;
    let game = doc.game().map_err(invalid)?;
    let q = game.quadratic().map_err(invalid)?;
    let sets = game.sets().map_err(invalid)?;
    let xstar = solve_quadratic_ne(&q, &sets).map_err(runtime)?;
    let total: f64 = xstar.iter().sum();

    let mut header: Vec<String> = (1..=xstar.len()).map(|i| format!("x_{i}")).collect();
    header.push("sum".into());
    let mut row: Vec<String> = xstar.iter().map(|v| fmt_f64(*v)).collect();
    row.push(fmt_f64(total));
    say(out, header.join(","))?;
    say(out, row.join(","))?;

    let dir = output_dir(c, &doc);
    let write = || -> crate::error::Result<()> {
        fs::create_dir_all(&dir)?;
        let mut w = csv::Writer::from_path(dir.join("ne.csv"))?;
        w.write_record(&header)?;
        w.write_record(&row)?;
        w.flush()?;
        Ok(())
    };
    write().map_err(runtime)?;
    Ok(EXIT_OK)
}

pub fn cmd_run(c: &Common, out: &mut dyn Write) -> CmdResult {
    let doc = load_doc(c)?;
    let spec = require_valid(&doc, out)?;
    let dir = output_dir(c, &doc);
    let res = harness::with_jobs(c.jobs, || harness::run_experiment(&spec, Some(&dir)))
        .map_err(invalid)?
        .map_err(runtime)?;
    let last = res.final_row();
    say(out, format!("final k = {}", last.k))?;
    say(out, format!("final mean rel_err = {}", fmt_f64(last.rel_err_mean)))?;
    say(out, format!("final mean consensus_err = {}", fmt_f64(last.cons_mean)))?;
    say(out, format!("artifacts in {}", dir.display()))?;
    Ok(EXIT_OK)
}

pub fn cmd_sweep(c: &Common, axis: &str, values: &[String], out: &mut dyn Write) -> CmdResult {
    let doc = load_doc(c)?;
    let base = require_valid(&doc, out)?;
    let axis: SweepAxis = axis.parse().map_err(invalid)?;
    // Each point must itself be a valid experiment.
    for v in values {
        let spec = axis.apply(&base, v).map_err(invalid)?;
        spec.prepare().map_err(invalid)?;
    }
    let dir = output_dir(c, &doc);
    let points = harness::with_jobs(c.jobs, || harness::sweep(&base, axis, values, Some(&dir)))
        .map_err(invalid)?
        .map_err(runtime)?;
    for p in &points {
        let (rel, cons) = p.result.plateau();
        say(
            out,
            format!(
                "{}={}: final mean rel_err = {}, plateau rel_err = {}, plateau consensus_err = {}",
                axis.name(),
                p.value,
                fmt_f64(p.result.final_row().rel_err_mean),
                fmt_f64(rel),
                fmt_f64(cons)
            ),
        )?;
    }
    say(out, format!("artifacts in {}", dir.display()))?;
    Ok(EXIT_OK)
}

pub fn cmd_compare(c: &Common, out: &mut dyn Write) -> CmdResult {
    let doc = load_doc(c)?;
    let spec = require_valid(&doc, out)?;
    let dir = output_dir(c, &doc);
    let outcomes = harness::with_jobs(c.jobs, || harness::compare(&spec, Some(&dir)))
        .map_err(invalid)?
        .map_err(runtime)?;
    for o in &outcomes {
        say(
            out,
            format!(
                "{}: seed-averaged rel_err <= {} at k = {}",
                o.mode.as_str(),
                harness::HIT_THRESHOLD,
                hit_text(o.hit)
            ),
        )?;
    }
    say(out, format!("artifacts in {}", dir.display()))?;
    Ok(EXIT_OK)
}
