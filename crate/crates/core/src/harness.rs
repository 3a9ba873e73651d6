//! Metrics, multi-seed experiments, parameter sweeps and CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::game::{solve_quadratic_ne, ActionSet, QuadraticGame};
use crate::graph::{
    balance_weights, tilde_matrix, DiGraph, SpectralCertificate, WeightMatrix, BALANCE_MAX_SWEEPS, BALANCE_TOL,
    DEFAULT_MARGIN,
};
use crate::oracle::SmoothingSchedule;
use crate::seeker::{admissible_alpha, run, Interval, Mode, RunConfig, SeekerState, StepSchedule};

/// Relative-error threshold used by comparisons.
pub const HIT_THRESHOLD: f64 = 0.1;

/// Name of the marker written next to partial results when a seed fails.
pub const FAILED_MARKER: &str = "FAILED";

/// 17 significant digits in scientific notation; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `||x - xstar|| / ||xstar||`.
pub fn relative_error(x: &[f64], xstar: &[f64]) -> Result<f64> {
    if x.len() != xstar.len() {
        return Err(Error::DimensionMismatch {
            expected: xstar.len(),
            got: x.len(),
        });
    }
    let norm = xstar.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateReference);
    }
    let diff = x
        .iter()
        .zip(xstar)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(diff / norm)
}

/// `max_{i,l} |x_i - y^l_i|`.
pub fn consensus_error(state: &SeekerState) -> f64 {
    let n = state.n();
    let mut worst = 0.0_f64;
    for l in 0..n {
        for (xi, yi) in state.x.iter().zip(state.estimate(l)) {
            worst = worst.max((xi - yi).abs());
        }
    }
    worst
}

/// One recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub k: usize,
    pub alpha: f64,
    pub mu: f64,
    pub x: Vec<f64>,
    pub consensus_err: f64,
    /// Row-major estimate matrix, kept only on request.
    pub y: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub mode: Mode,
    pub samples: Vec<Sample>,
    pub final_state: SeekerState,
    pub mu_floor_hit: bool,
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn ks(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.k).collect()
    }
}

/// Game family of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum GameSetup {
    Quadratic { game: QuadraticGame, lo: f64, hi: f64 },
    /// HVAC costs with `xr_i = 2 i`; the player count can be swept.
    ScaledHvac { n: usize, lo: f64, hi: f64 },
}

impl GameSetup {
    pub fn n(&self) -> usize {
        match self {
            GameSetup::Quadratic { game, .. } => game.n(),
            GameSetup::ScaledHvac { n, .. } => *n,
        }
    }

    pub fn quadratic(&self) -> Result<QuadraticGame> {
        match self {
            GameSetup::Quadratic { game, .. } => Ok(game.clone()),
            GameSetup::ScaledHvac { n, .. } => QuadraticGame::hvac_scaled(*n),
        }
    }

    pub fn sets(&self) -> Result<Vec<ActionSet>> {
        let (lo, hi) = match self {
            GameSetup::Quadratic { lo, hi, .. } | GameSetup::ScaledHvac { lo, hi, .. } => (*lo, *hi),
        };
        Ok(vec![ActionSet::new(lo, hi)?; self.n()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Ring,
    /// Ring plus `i -> i+2` for the first `chords` nodes.
    RingChords(usize),
    TwoSuccessorCycle,
    Complete,
    Custom(DiGraph),
}

impl Topology {
    pub fn build(&self, n: usize) -> Result<DiGraph> {
        match self {
            Topology::Ring => DiGraph::ring(n),
            Topology::RingChords(c) => DiGraph::ring_with_chords(n, *c),
            Topology::TwoSuccessorCycle => DiGraph::two_successor_cycle(n),
            Topology::Complete => DiGraph::complete(n),
            Topology::Custom(g) if g.n() == n => Ok(g.clone()),
            Topology::Custom(g) => Err(Error::DimensionMismatch {
                expected: n,
                got: g.n(),
            }),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Topology::Ring => "ring".into(),
            Topology::RingChords(c) => format!("ring-chords:{c}"),
            Topology::TwoSuccessorCycle => "two-successor-cycle".into(),
            Topology::Complete => "complete".into(),
            Topology::Custom(_) => "custom".into(),
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(Topology::Ring),
            "two-successor-cycle" => Ok(Topology::TwoSuccessorCycle),
            "complete" => Ok(Topology::Complete),
            _ => match s.strip_prefix("ring-chords:") {
                Some(c) => c
                    .parse()
                    .map(Topology::RingChords)
                    .map_err(|_| Error::Config(format!("bad chord count in {s:?}"))),
                None => Err(Error::Config(format!("unknown topology {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphSetup {
    pub topology: Topology,
    /// `None` balances weights on the topology's support.
    pub weights: Option<WeightMatrix>,
}

impl GraphSetup {
    pub fn auto(topology: Topology) -> Self {
        Self {
            topology,
            weights: None,
        }
    }

    pub fn build(&self, n: usize) -> Result<(DiGraph, WeightMatrix)> {
        let g = self.topology.build(n)?;
        let w = match &self.weights {
            Some(w) => w.clone(),
            None => balance_weights(&g, BALANCE_MAX_SWEEPS, BALANCE_TOL)?,
        };
        Ok((g, w))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeltaSetup {
    Uniform(f64),
    PerPlayer(Vec<f64>),
}

impl DeltaSetup {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            DeltaSetup::Uniform(d) => Ok(vec![*d; n]),
            DeltaSetup::PerPlayer(v) if v.len() == n => Ok(v.clone()),
            DeltaSetup::PerPlayer(v) => Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoSetup {
    pub iters: usize,
    pub schedule: StepSchedule,
    pub smoothing: SmoothingSchedule,
    pub delta: DeltaSetup,
    pub mode: Mode,
    pub record_stride: usize,
    pub record_estimates: bool,
}

impl AlgoSetup {
    /// `alpha_k = 0.1 / sqrt(k + 1)`, `mu_k = 0.01 / (k + 1)`, `delta_i = 0.5`.
    pub fn reference(iters: usize) -> Self {
        Self {
            iters,
            schedule: StepSchedule::diminishing(0.1, 0.5),
            smoothing: SmoothingSchedule::diminishing(1e-2, 1.0),
            delta: DeltaSetup::Uniform(0.5),
            mode: Mode::GradientFree,
            record_stride: 1,
            record_estimates: false,
        }
    }

    pub fn run_config(&self, n: usize, seed: u64) -> Result<RunConfig> {
        Ok(RunConfig {
            iters: self.iters,
            schedule: self.schedule,
            smoothing: self.smoothing,
            deltas: self.delta.expand(n)?,
            seed,
            mode: self.mode,
            record_stride: self.record_stride,
            record_estimates: self.record_estimates,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// Solve the quadratic first-order system.
    Oracle,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub game: GameSetup,
    pub graph: GraphSetup,
    pub algo: AlgoSetup,
    pub seeds: Vec<u64>,
    pub reference: Reference,
}

impl ExperimentSpec {
    /// Five-player HVAC game on `topology` with the reference schedules,
    /// zero initial state and actions in `[0, 50]`.
    pub fn hvac(topology: Topology, iters: usize, seeds: Vec<u64>) -> Self {
        Self {
            game: GameSetup::Quadratic {
                game: QuadraticGame::hvac(),
                lo: 0.0,
                hi: 50.0,
            },
            graph: GraphSetup::auto(topology),
            algo: AlgoSetup::reference(iters),
            seeds,
            reference: Reference::Oracle,
        }
    }

    /// Everything a run needs, built once and shared by all seeds.
    pub fn prepare(&self) -> Result<Prepared> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let n = self.game.n();
        let q = self.game.quadratic()?;
        let sets = self.game.sets()?;
        let (graph, weights) = self.graph.build(n)?;
        let xstar = match &self.reference {
            Reference::Oracle => solve_quadratic_ne(&q, &sets)?,
            Reference::Given(v) => v.clone(),
        };
        if xstar.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: xstar.len(),
            });
        }
        let cfg = self.algo.run_config(n, self.seeds[0])?;
        cfg.validate(&weights)?;
        Ok(Prepared {
            game: q,
            sets,
            graph,
            weights,
            xstar,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub game: QuadraticGame,
    pub sets: Vec<ActionSet>,
    pub graph: DiGraph,
    pub weights: WeightMatrix,
    pub xstar: Vec<f64>,
}

/// Inputs and result of the constant step-size condition for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWindow {
    pub chi: f64,
    pub lhat: f64,
    pub bbound: f64,
    /// Largest certificate bound over players.
    pub gamma: f64,
    /// Largest `sup_k ||A~_i^k||_inf / gamma^k` over players, `k <= 200`.
    pub c: f64,
    pub intervals: Vec<Interval>,
}

/// Admissible constant step sizes for `prep` with constants taken at `mu`.
pub fn step_window(prep: &Prepared, deltas: &[f64], mu: f64) -> Result<StepWindow> {
    let k = prep.game.derived_constants(&prep.sets, mu)?;
    let mut worst = SpectralCertificate::new(0, 0.0, DEFAULT_MARGIN);
    let mut c = 0.0_f64;
    for i in 0..prep.game.n() {
        let cert = SpectralCertificate::for_player(&prep.weights, i, deltas, DEFAULT_MARGIN)?;
        if !cert.is_valid() {
            return Err(Error::InvalidCertificate(cert.gamma));
        }
        let m = tilde_matrix(&prep.weights, i, deltas)?;
        c = c.max(cert.decay_constant(&m, 200));
        if cert.gamma > worst.gamma {
            worst = cert;
        }
    }
    let intervals = admissible_alpha(k.chi, k.lhat, k.bbound, &worst, prep.game.n(), c)?;
    Ok(StepWindow {
        chi: k.chi,
        lhat: k.lhat,
        bbound: k.bbound,
        gamma: worst.gamma,
        c,
        intervals,
    })
}

/// Seed-aggregated metrics at one recorded iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryRow {
    pub k: usize,
    pub rel_err_mean: f64,
    pub rel_err_min: f64,
    pub rel_err_max: f64,
    pub cons_mean: f64,
    pub cons_min: f64,
    pub cons_max: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub xstar: Vec<f64>,
    pub records: Vec<RunRecord>,
    /// `rel_errs[s][t]` belongs to `records[s].samples[t]`.
    pub rel_errs: Vec<Vec<f64>>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentResult {
    pub fn rel_err_curve(&self) -> Vec<(usize, f64)> {
        self.summary.iter().map(|r| (r.k, r.rel_err_mean)).collect()
    }

    pub fn consensus_curve(&self) -> Vec<(usize, f64)> {
        self.summary.iter().map(|r| (r.k, r.cons_mean)).collect()
    }

    pub fn final_row(&self) -> &SummaryRow {
        self.summary.last().expect("summary always holds the initial row")
    }

    /// Mean over `k` in the final 10% of iterations of the seed-averaged curves,
    /// as `(rel_err, consensus)`.
    pub fn plateau(&self) -> (f64, f64) {
        let iters = self.summary.last().map(|r| r.k).unwrap_or(0);
        (
            plateau(&self.rel_err_curve(), iters),
            plateau(&self.consensus_curve(), iters),
        )
    }

    pub fn summary_at(&self, k: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.k == k)
    }
}

/// Mean of `curve` over samples with `k >= iters - iters / 10`.
pub fn plateau(curve: &[(usize, f64)], iters: usize) -> f64 {
    let start = iters - iters / 10;
    let tail: Vec<f64> = curve.iter().filter(|(k, _)| *k >= start).map(|(_, v)| *v).collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Means of `curve` over the decades `[10^d, 10^(d+1))`, for every decade that
/// lies entirely inside the recorded range.
pub fn decade_means(curve: &[(usize, f64)]) -> Vec<(u32, f64)> {
    let last = curve.last().map(|(k, _)| *k).unwrap_or(0);
    let mut out = Vec::new();
    let mut d = 0u32;
    while 10usize.pow(d + 1) <= last + 1 {
        let (lo, hi) = (10usize.pow(d), 10usize.pow(d + 1));
        let vals: Vec<f64> = curve
            .iter()
            .filter(|(k, _)| (lo..hi).contains(k))
            .map(|(_, v)| *v)
            .collect();
        if !vals.is_empty() {
            out.push((d, vals.iter().sum::<f64>() / vals.len() as f64));
        }
        d += 1;
    }
    out
}

/// First recorded `k` with value at or below `threshold`.
pub fn first_hit(curve: &[(usize, f64)], threshold: f64) -> Option<usize> {
    curve.iter().find(|(_, v)| *v <= threshold).map(|(k, _)| *k)
}

fn aggregate(records: &[RunRecord], rel_errs: &[Vec<f64>]) -> Result<Vec<SummaryRow>> {
    let first = &records[0];
    for r in records {
        if r.samples.len() != first.samples.len() {
            return Err(Error::DimensionMismatch {
                expected: first.samples.len(),
                got: r.samples.len(),
            });
        }
    }
    let m = records.len() as f64;
    Ok((0..first.samples.len())
        .map(|t| {
            let rel: Vec<f64> = rel_errs.iter().map(|e| e[t]).collect();
            let cons: Vec<f64> = records.iter().map(|r| r.samples[t].consensus_err).collect();
            let stats = |v: &[f64]| {
                (
                    v.iter().sum::<f64>() / m,
                    v.iter().copied().fold(f64::INFINITY, f64::min),
                    v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            let (rel_err_mean, rel_err_min, rel_err_max) = stats(&rel);
            let (cons_mean, cons_min, cons_max) = stats(&cons);
            SummaryRow {
                k: first.samples[t].k,
                rel_err_mean,
                rel_err_min,
                rel_err_max,
                cons_mean,
                cons_min,
                cons_max,
            }
        })
        .collect())
}

fn run_seed(spec: &ExperimentSpec, prep: &Prepared, seed: u64) -> Result<(RunRecord, Vec<f64>)> {
    let n = prep.game.n();
    let game = prep.game.to_spec(prep.sets.clone())?;
    let cfg = spec.algo.run_config(n, seed)?;
    let rec = run(&game, &prep.weights, &cfg, SeekerState::zeros(n))?;
    let rel = rec
        .samples
        .iter()
        .map(|s| relative_error(&s.x, &prep.xstar))
        .collect::<Result<Vec<_>>>()?;
    Ok((rec, rel))
}

/// Runs every seed in parallel and aggregates in seed-list order.
///
/// With `out` set, writes `trajectory_seed{seed}.csv` per seed and
/// `summary.csv`. If a seed fails, the successful trajectories are still
/// written together with a `FAILED` marker holding the error, and the first
/// error is returned.
pub fn run_experiment(spec: &ExperimentSpec, out: Option<&Path>) -> Result<ExperimentResult> {
    let prep = spec.prepare()?;
    let outcomes: Vec<Result<(RunRecord, Vec<f64>)>> =
        spec.seeds.par_iter().map(|&s| run_seed(spec, &prep, s)).collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut rel_errs = Vec::with_capacity(outcomes.len());
    let mut failure = None;
    for (seed, o) in spec.seeds.iter().zip(outcomes) {
        match o {
            Ok((r, e)) => {
                records.push(r);
                rel_errs.push(e);
            }
            Err(e) => {
                log::error!("seed {seed} failed: {e}");
                failure.get_or_insert((*seed, e));
            }
        }
    }

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        for (r, e) in records.iter().zip(&rel_errs) {
            write_trajectory(&dir.join(format!("trajectory_seed{}.csv", r.seed)), r, e)?;
        }
    }
    if let Some((seed, err)) = failure {
        if let Some(dir) = out {
            fs::write(dir.join(FAILED_MARKER), format!("seed {seed}: {err}\n"))?;
        }
        return Err(err);
    }

    let summary = aggregate(&records, &rel_errs)?;
    if let Some(dir) = out {
        write_summary(&dir.join("summary.csv"), &summary)?;
    }
    Ok(ExperimentResult {
        xstar: prep.xstar,
        records,
        rel_errs,
        summary,
    })
}

fn trajectory_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["k", "alpha", "mu", "rel_err", "consensus_err"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=n).map(|i| format!("x_{i}")));
    h
}

fn trajectory_row(s: &Sample, rel: f64, width: usize) -> Vec<String> {
    let mut row = vec![
        s.k.to_string(),
        fmt_f64(s.alpha),
        fmt_f64(s.mu),
        fmt_f64(rel),
        fmt_f64(s.consensus_err),
    ];
    row.extend(s.x.iter().map(|v| fmt_f64(*v)));
    row.resize(row.len() + width.saturating_sub(s.x.len()), String::new());
    row
}

/// `k,alpha,mu,rel_err,consensus_err,x_1..x_N`.
pub fn write_trajectory(path: &Path, rec: &RunRecord, rel_errs: &[f64]) -> Result<()> {
    let n = rec.final_state.n();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trajectory_header(n))?;
    for (s, e) in rec.samples.iter().zip(rel_errs) {
        w.write_record(trajectory_row(s, *e, n))?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_HEADER: [&str; 7] = [
    "k",
    "rel_err_mean",
    "rel_err_min",
    "rel_err_max",
    "cons_mean",
    "cons_min",
    "cons_max",
];

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            fmt_f64(r.rel_err_mean),
            fmt_f64(r.rel_err_min),
            fmt_f64(r.rel_err_max),
            fmt_f64(r.cons_mean),
            fmt_f64(r.cons_min),
            fmt_f64(r.cons_max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV of numbers with one header row; empty cells become `NaN`.
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|c| {
                if c.is_empty() {
                    Ok(f64::NAN)
                } else {
                    c.parse::<f64>()
                        .map_err(|e| Error::Config(format!("bad number {c:?} in {}: {e}", path.display())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Alpha0,
    N,
    Topology,
    Mode,
    Delta,
    Mu0,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Alpha0 => "alpha0",
            SweepAxis::N => "N",
            SweepAxis::Topology => "topology",
            SweepAxis::Mode => "mode",
            SweepAxis::Delta => "delta",
            SweepAxis::Mu0 => "mu0",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(&self, base: &ExperimentSpec, value: &str) -> Result<ExperimentSpec> {
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("{} expects a number, got {value:?}", self.name())))
        };
        let mut spec = base.clone();
        match self {
            SweepAxis::Alpha0 => spec.algo.schedule.alpha0 = num()?,
            SweepAxis::Mu0 => spec.algo.smoothing.mu0 = num()?,
            SweepAxis::Delta => spec.algo.delta = DeltaSetup::Uniform(num()?),
            SweepAxis::Mode => spec.algo.mode = value.parse()?,
            SweepAxis::Topology => spec.graph = GraphSetup::auto(value.parse()?),
            SweepAxis::N => {
                let n: usize = value
                    .parse()
                    .map_err(|_| Error::Config(format!("N expects a positive integer, got {value:?}")))?;
                match &mut spec.game {
                    GameSetup::ScaledHvac { n: slot, .. } => *slot = n,
                    GameSetup::Quadratic { .. } => {
                        return Err(Error::Config(
                            "sweeping N needs the scaled game family (game.type = \"hvac-scaled\")".into(),
                        ))
                    }
                }
                if spec.graph.weights.is_some() || matches!(spec.graph.topology, Topology::Custom(_)) {
                    return Err(Error::Config("sweeping N needs a builtin topology with automatic weights".into()));
                }
                if matches!(spec.reference, Reference::Given(_)) {
                    return Err(Error::Config("sweeping N needs the oracle reference".into()));
                }
            }
        }
        Ok(spec)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "alpha0" => SweepAxis::Alpha0,
            "N" | "n" => SweepAxis::N,
            "topology" => SweepAxis::Topology,
            "mode" => SweepAxis::Mode,
            "delta" => SweepAxis::Delta,
            "mu0" => SweepAxis::Mu0,
            other => return Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub result: ExperimentResult,
}

/// One experiment per value, in parallel. With `out` set, each point's
/// artifacts go to `out/{axis}={value}/` and the long table to `out/sweep.csv`.
pub fn sweep(base: &ExperimentSpec, axis: SweepAxis, values: &[String], out: Option<&Path>) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let specs = values
        .iter()
        .map(|v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let dirs: Vec<Option<PathBuf>> = values
        .iter()
        .map(|v| out.map(|d| d.join(format!("{}={}", axis.name(), v.replace(['/', '\\'], "_")))))
        .collect();
    let results: Vec<Result<ExperimentResult>> = specs
        .par_iter()
        .zip(&dirs)
        .map(|(s, d)| run_experiment(s, d.as_deref()))
        .collect();
    let points = values
        .iter()
        .zip(results)
        .map(|(v, r)| {
            r.map(|result| SweepPoint {
                value: v.clone(),
                result,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out {
        write_sweep(&dir.join("sweep.csv"), axis, &points)?;
    }
    Ok(points)
}

/// Long format: `axis,value,seed` followed by the trajectory columns, with
/// `x_j` padded to the widest point.
pub fn write_sweep(path: &Path, axis: SweepAxis, points: &[SweepPoint]) -> Result<()> {
    let width = points
        .iter()
        .flat_map(|p| p.result.records.iter().map(|r| r.final_state.n()))
        .max()
        .unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["axis".to_string(), "value".into(), "seed".into()];
    header.extend(trajectory_header(width));
    w.write_record(&header)?;
    for p in points {
        for (rec, rel) in p.result.records.iter().zip(&p.result.rel_errs) {
            for (s, e) in rec.samples.iter().zip(rel) {
                let mut row = vec![axis.name().to_string(), p.value.clone(), rec.seed.to_string()];
                row.extend(trajectory_row(s, *e, width));
                w.write_record(&row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ModeOutcome {
    pub mode: Mode,
    pub result: ExperimentResult,
    /// First `k` where the seed-averaged relative error is at most [`HIT_THRESHOLD`].
    pub hit: Option<usize>,
    /// Per-seed first hits.
    pub seed_hits: Vec<Option<usize>>,
}

/// Runs `base` in both modes with the same seeds. Writes each mode's artifacts
/// under `out/{mode}/` and a `compare.csv` report.
pub fn compare(base: &ExperimentSpec, out: Option<&Path>) -> Result<Vec<ModeOutcome>> {
    let modes = [Mode::GradientFree, Mode::GradientBased];
    let mut outcomes = Vec::new();
    for mode in modes {
        let mut spec = base.clone();
        spec.algo.mode = mode;
        let dir = out.map(|d| d.join(mode.as_str()));
        let result = run_experiment(&spec, dir.as_deref())?;
        let hit = first_hit(&result.rel_err_curve(), HIT_THRESHOLD);
        let seed_hits = result
            .records
            .iter()
            .zip(&result.rel_errs)
            .map(|(r, e)| {
                let curve: Vec<(usize, f64)> = r.samples.iter().map(|s| s.k).zip(e.iter().copied()).collect();
                first_hit(&curve, HIT_THRESHOLD)
            })
            .collect();
        outcomes.push(ModeOutcome {
            mode,
            result,
            hit,
            seed_hits,
        });
    }
    if let Some(dir) = out {
        let mut w = csv::Writer::from_path(dir.join("compare.csv"))?;
        w.write_record(["mode", "seed", "first_hit"])?;
        for o in &outcomes {
            w.write_record([o.mode.as_str(), "mean", &hit_text(o.hit)])?;
            for (r, h) in o.result.records.iter().zip(&o.seed_hits) {
                w.write_record([o.mode.as_str(), &r.seed.to_string(), &hit_text(*h)])?;
            }
        }
        w.flush()?;
    }
    Ok(outcomes)
}

pub fn hit_text(h: Option<usize>) -> String {
    h.map_or_else(|| "not reached".to_string(), |k| k.to_string())
}

/// Runs `f` on a pool of `jobs` threads (`None` keeps rayon's default).
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
