//! Leader-following consensus Nash equilibrium seeking.
//!
//! Every player `i` keeps its action `x_i` and an estimate row `y^i` of all
//! players' actions. One synchronous round, with every right-hand side taken
//! at time `k`:
//!
//! ```text
//! g_i        = oracle for f_i evaluated at the estimate row y^i
//! x_i      <- P_i[x_i - alpha_k g_i]
//! y^i_j    <- sum_l w_il y^l_j + delta_i w_ij (x_j - y^i_j)
//! ```
//!
//! The gradient-free oracle is the two-point smoothing quotient; the
//! gradient-based baseline plugs in the true partial instead.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{project, GameSpec};
use crate::graph::{validate_deltas, SpectralCertificate, WeightMatrix};
use crate::harness::{consensus_error, RunRecord, Sample};
use crate::oracle::{gf_oracle, RandomSource, ScheduleKind, SmoothingSchedule};

/// Actions plus the row-major `N x N` estimate matrix (row `i` is `y^i`).
#[derive(Debug, Clone, PartialEq)]
pub struct SeekerState {
    pub k: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SeekerState {
    pub fn new(x: Vec<f64>, y_rows: &[Vec<f64>]) -> Result<Self> {
        let n = x.len();
        if y_rows.len() != n || y_rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y_rows.len(),
            });
        }
        let y: Vec<f64> = y_rows.iter().flatten().copied().collect();
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("initial state must be finite".into()));
        }
        Ok(Self { k: 0, x, y })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            k: 0,
            x: vec![0.0; n],
            y: vec![0.0; n * n],
        }
    }

    /// Every estimate row equals `x`.
    pub fn consensus(x: Vec<f64>) -> Self {
        let y = x.iter().cycle().take(x.len() * x.len()).copied().collect();
        Self { k: 0, x, y }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// Player `i`'s estimate vector `y^i`.
    pub fn estimate(&self, i: usize) -> &[f64] {
        let n = self.n();
        &self.y[i * n..(i + 1) * n]
    }

    pub fn y_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.estimate(i).to_vec()).collect()
    }
}

/// `alpha_k = alpha0` or `alpha_k = alpha0 / (k + 1)^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub kind: ScheduleKind,
    pub alpha0: f64,
    #[serde(default = "half")]
    pub exponent: f64,
}

fn half() -> f64 {
    0.5
}

impl StepSchedule {
    pub fn constant(alpha0: f64) -> Self {
        Self {
            kind: ScheduleKind::Constant,
            alpha0,
            exponent: 0.0,
        }
    }

    pub fn diminishing(alpha0: f64, exponent: f64) -> Self {
        Self {
            kind: ScheduleKind::Diminishing,
            alpha0,
            exponent,
        }
    }

    /// A zero step is accepted: it freezes the actions and leaves pure mixing.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 >= 0.0 && self.alpha0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha0 must be finite and nonnegative, got {}",
                self.alpha0
            )));
        }
        if self.kind == ScheduleKind::Diminishing && !(self.exponent > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diminishing steps need a positive exponent, got {}",
                self.exponent
            )));
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.alpha0,
            ScheduleKind::Diminishing => self.alpha0 / ((k + 1) as f64).powf(self.exponent),
        }
    }

    /// True when `sum alpha_k = inf` and `sum alpha_k^2 < inf`, i.e. a
    /// diminishing exponent in `(1/2, 1]`.
    pub fn is_square_summable(&self) -> bool {
        self.kind == ScheduleKind::Diminishing
            && self.alpha0 > 0.0
            && self.exponent > 0.5
            && self.exponent <= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GradientFree,
    GradientBased,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::GradientFree => "gradient-free",
            Mode::GradientBased => "gradient-based",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gradient-free" => Ok(Mode::GradientFree),
            "gradient-based" => Ok(Mode::GradientBased),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub iters: usize,
    pub schedule: StepSchedule,
    pub smoothing: SmoothingSchedule,
    pub deltas: Vec<f64>,
    pub seed: u64,
    pub mode: Mode,
    pub record_stride: usize,
    /// Keep the estimate matrix in every recorded sample.
    pub record_estimates: bool,
}

impl RunConfig {
    /// Step and smoothing schedules used for the five-player HVAC study:
    /// `alpha_k = 0.1 / sqrt(k + 1)`, `mu_k = 0.01 / (k + 1)`, `delta = 0.5`.
    pub fn reference(n: usize, iters: usize, seed: u64) -> Self {
        Self {
            iters,
            schedule: StepSchedule::diminishing(0.1, 0.5),
            smoothing: SmoothingSchedule::diminishing(1e-2, 1.0),
            deltas: vec![0.5; n],
            seed,
            mode: Mode::GradientFree,
            record_stride: 1,
            record_estimates: false,
        }
    }

    pub fn validate(&self, w: &WeightMatrix) -> Result<()> {
        self.schedule.validate()?;
        self.smoothing.validate()?;
        validate_deltas(w, &self.deltas)?;
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter("record_stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// What the step used at iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub alpha: f64,
    pub mu: f64,
    pub mu_floored: bool,
}

/// Precomputed sparse mixing rows for repeated synchronous rounds.
struct Mixer<'a> {
    game: &'a GameSpec,
    cfg: &'a RunConfig,
    /// `(l, w_il)` for every in-neighbour `l` of `i`.
    rows: Vec<Vec<(usize, f64)>>,
}

impl<'a> Mixer<'a> {
    fn new(game: &'a GameSpec, w: &'a WeightMatrix, cfg: &'a RunConfig, mode: Mode) -> Result<Self> {
        let n = game.n();
        if w.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w.n(),
            });
        }
        cfg.validate(w)?;
        if mode == Mode::GradientBased && !game.has_gradient() {
            return Err(Error::MissingGradient);
        }
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter_map(|l| {
                        let v = w.get(i, l);
                        (v > 0.0).then_some((l, v))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { game, cfg, rows })
    }

    fn advance(
        &self,
        state: &SeekerState,
        mode: Mode,
        rngs: &mut [RandomSource],
        next: &mut SeekerState,
    ) -> Result<StepInfo> {
        let n = self.game.n();
        if state.n() != n || state.y.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: state.n(),
            });
        }
        let k = state.k;
        let alpha = self.cfg.schedule.at(k);
        let (mu, mu_floored) = self.cfg.smoothing.at(k);
        next.x.resize(n, 0.0);
        next.y.resize(n * n, 0.0);

        for i in 0..n {
            let yi = state.estimate(i);
            let grad = match mode {
                Mode::GradientFree => {
                    let rng = rngs.get_mut(i).ok_or(Error::DimensionMismatch {
                        expected: n,
                        got: i,
                    })?;
                    gf_oracle(self.game, i, yi, mu, rng.next_normal())?
                }
                Mode::GradientBased => self.game.eval_partial(i, yi)?,
            };
            next.x[i] = project(self.game.set(i), state.x[i] - alpha * grad);
        }

        for i in 0..n {
            let delta = self.cfg.deltas[i];
            let out = &mut next.y[i * n..(i + 1) * n];
            out.fill(0.0);
            for &(l, wil) in &self.rows[i] {
                let yl = &state.y[l * n..(l + 1) * n];
                for (o, v) in out.iter_mut().zip(yl) {
                    *o += wil * v;
                }
            }
            for &(j, wij) in &self.rows[i] {
                out[j] += delta * wij * (state.x[j] - state.y[i * n + j]);
            }
        }

        next.k = k + 1;
        if next.x.iter().chain(&next.y).any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow(k));
        }
        Ok(StepInfo {
            alpha,
            mu,
            mu_floored,
        })
    }
}

/// One gradient-free round. Draws one normal variate per player from `rngs`.
pub fn step(
    state: &SeekerState,
    g: &GameSpec,
    w: &WeightMatrix,
    cfg: &RunConfig,
    rngs: &mut [RandomSource],
) -> Result<SeekerState> {
    let mixer = Mixer::new(g, w, cfg, Mode::GradientFree)?;
    let mut next = SeekerState::zeros(g.n());
    mixer.advance(state, Mode::GradientFree, rngs, &mut next)?;
    Ok(next)
}

/// One round with the true partial derivative in place of the oracle.
pub fn gradient_step(
    state: &SeekerState,
    g: &GameSpec,
    w: &WeightMatrix,
    cfg: &RunConfig,
) -> Result<SeekerState> {
    let mixer = Mixer::new(g, w, cfg, Mode::GradientBased)?;
    let mut next = SeekerState::zeros(g.n());
    mixer.advance(state, Mode::GradientBased, &mut [], &mut next)?;
    Ok(next)
}

/// Runs `cfg.iters` rounds in `cfg.mode`, recording every `record_stride`
/// iterations plus the final state. Player `i` draws from stream `i` of
/// `cfg.seed`.
pub fn run(g: &GameSpec, w: &WeightMatrix, cfg: &RunConfig, init: SeekerState) -> Result<RunRecord> {
    let started = Instant::now();
    let n = g.n();
    let mixer = Mixer::new(g, w, cfg, cfg.mode)?;
    if init.n() != n || init.y.len() != n * n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: init.n(),
        });
    }
    let mut rngs = RandomSource::per_player(cfg.seed, n);
    let mut state = init;
    let mut next = state.clone();
    let mut samples = Vec::with_capacity(cfg.iters / cfg.record_stride + 2);
    let mut mu_floor_hit = false;

    let sample = |state: &SeekerState| {
        let k = state.k;
        Sample {
            k,
            alpha: cfg.schedule.at(k),
            mu: cfg.smoothing.at(k).0,
            x: state.x.clone(),
            consensus_err: consensus_error(state),
            y: cfg.record_estimates.then(|| state.y.clone()),
        }
    };

    samples.push(sample(&state));
    for _ in 0..cfg.iters {
        let info = mixer.advance(&state, cfg.mode, &mut rngs, &mut next)?;
        mu_floor_hit |= info.mu_floored;
        std::mem::swap(&mut state, &mut next);
        if state.k % cfg.record_stride == 0 || state.k == cfg.iters {
            samples.push(sample(&state));
        }
    }
    if mu_floor_hit {
        log::warn!("smoothing parameter hit the floor {}", crate::oracle::MU_FLOOR);
    }

    Ok(RunRecord {
        seed: cfg.seed,
        mode: cfg.mode,
        samples,
        final_state: state,
        mu_floor_hit,
        wall_time: started.elapsed(),
    })
}

/// An open interval `(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo < v && v < self.hi
    }
}

/// Constant step sizes with `0 < 2 chi alpha - q alpha^2 < 1`, where
/// `q = lhat (gamma N C B / (1 - gamma) + B)`.
///
/// The analytic decay constant `C` is not known in closed form; pass a
/// numeric stand-in (for instance [`SpectralCertificate::decay_constant`]).
/// With `chi^2 >= q` the set is the union `(0, r-) U (r+, 2 chi / q)` of the
/// two pieces left after removing `[r-, r+]`, the roots of `2 chi a - q a^2 = 1`.
pub fn admissible_alpha(
    chi: f64,
    lhat: f64,
    bbound: f64,
    cert: &SpectralCertificate,
    n: usize,
    c: f64,
) -> Result<Vec<Interval>> {
    if !(chi > 0.0) {
        return Err(Error::NotMonotone(chi));
    }
    if !(cert.gamma < 1.0) {
        return Err(Error::InvalidCertificate(cert.gamma));
    }
    if !(lhat >= 0.0 && bbound >= 0.0 && c >= 0.0) {
        return Err(Error::InvalidParameter("lhat, B and C must be nonnegative".into()));
    }
    let gamma = cert.gamma.max(0.0);
    let q = lhat * (gamma * n as f64 * c * bbound / (1.0 - gamma) + bbound);
    Ok(admissible_for_q(chi, q))
}

fn admissible_for_q(chi: f64, q: f64) -> Vec<Interval> {
    if q == 0.0 {
        return vec![Interval {
            lo: 0.0,
            hi: 0.5 / chi,
        }];
    }
    let top = 2.0 * chi / q;
    let disc = chi * chi - q;
    if disc < 0.0 {
        return vec![Interval { lo: 0.0, hi: top }];
    }
    let root = disc.sqrt();
    // r- r+ = 1 / q
    let lower = 1.0 / (chi + root);
    let upper = (chi + root) / q;
    vec![Interval { lo: 0.0, hi: lower }, Interval { lo: upper, hi: top }]
        .into_iter()
        .filter(|iv| iv.lo < iv.hi)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{ActionSet, QuadraticGame};
    use crate::graph::{balance_weights, DiGraph, BALANCE_MAX_SWEEPS, BALANCE_TOL};
    use approx::assert_abs_diff_eq;

    fn ring5() -> WeightMatrix {
        balance_weights(&DiGraph::ring(5).unwrap(), BALANCE_MAX_SWEEPS, BALANCE_TOL).unwrap()
    }

    fn hvac() -> GameSpec {
        QuadraticGame::hvac()
            .to_spec(vec![ActionSet::new(0.0, 50.0).unwrap(); 5])
            .unwrap()
    }

    fn square_game() -> GameSpec {
        GameSpec::new(vec![ActionSet::new(-10.0, 10.0).unwrap(); 2], |i, x| Ok(x[i] * x[i]))
            .unwrap()
            .with_gradient(|i, x| 2.0 * x[i])
    }

    #[test]
    fn zero_step_only_mixes() {
        let cfg = RunConfig {
            schedule: StepSchedule::constant(0.0),
            ..RunConfig::reference(5, 10, 1)
        };
        let state = SeekerState::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], &vec![vec![0.0; 5]; 5]).unwrap();
        let mut rngs = RandomSource::per_player(1, 5);
        let next = step(&state, &hvac(), &ring5(), &cfg, &mut rngs).unwrap();
        assert_eq!(next.x, state.x);
        assert_eq!(next.k, 1);
        assert!(next.y.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn two_player_hand_computation() {
        let w = WeightMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let g = square_game();
        let cfg = RunConfig {
            schedule: StepSchedule::constant(0.1),
            smoothing: SmoothingSchedule::constant(1.0),
            deltas: vec![0.5, 0.5],
            ..RunConfig::reference(2, 1, 0)
        };
        let mixer = Mixer::new(&g, &w, &cfg, Mode::GradientFree).unwrap();
        let state = SeekerState::consensus(vec![1.0, 1.0]);
        // With xi = 1 the oracle is ((1 + 1)^2 - 1) / 1 = 3, so x' = 1 - 0.3.
        assert_eq!(gf_oracle(&g, 0, state.estimate(0), 1.0, 1.0).unwrap(), 3.0);
        let mut next = SeekerState::zeros(2);
        let mut rngs = RandomSource::per_player(0, 2);
        let xi: Vec<f64> = rngs.iter().map(|r| r.normal_at(0)).collect();
        mixer.advance(&state, Mode::GradientFree, &mut rngs, &mut next).unwrap();
        for i in 0..2 {
            let g_i = ((1.0 + xi[i]).powi(2) - 1.0) * xi[i];
            assert_abs_diff_eq!(next.x[i], 1.0 - 0.1 * g_i, epsilon = 1e-12);
        }
        assert_eq!(next.y, vec![1.0; 4]);
        // deterministic replay of the fixed-xi case
        let fixed = GameSpec::new(vec![ActionSet::new(-10.0, 10.0).unwrap(); 2], |i, x| Ok(x[i] * x[i])).unwrap();
        let x_next: Vec<f64> = (0..2)
            .map(|i| 1.0 - 0.1 * gf_oracle(&fixed, i, state.estimate(i), 1.0, 1.0).unwrap())
            .collect();
        assert_abs_diff_eq!(x_next[0], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(x_next[1], 0.7, epsilon = 1e-15);
    }

    #[test]
    fn consensus_state_is_invariant_under_zero_step() {
        let cfg = RunConfig {
            schedule: StepSchedule::constant(0.0),
            ..RunConfig::reference(5, 50, 3)
        };
        let x = vec![2.0, 7.0, 11.0, 16.0, 21.0];
        let rec = run(&hvac(), &ring5(), &cfg, SeekerState::consensus(x.clone())).unwrap();
        for (a, b) in rec.final_state.y.iter().zip(SeekerState::consensus(x).y.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_steps() {
        let w = WeightMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let cfg = RunConfig {
            schedule: StepSchedule::constant(0.1),
            deltas: vec![0.5, 0.5],
            ..RunConfig::reference(2, 1, 0)
        };
        let next = gradient_step(&SeekerState::consensus(vec![1.0, 1.0]), &square_game(), &w, &cfg).unwrap();
        assert_abs_diff_eq!(next.x[0], 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(next.x[1], 0.8, epsilon = 1e-15);

        let cfg = RunConfig {
            schedule: StepSchedule::constant(0.1),
            ..RunConfig::reference(5, 1, 0)
        };
        let next = gradient_step(&SeekerState::zeros(5), &hvac(), &ring5(), &cfg).unwrap();
        assert_abs_diff_eq!(next.x[0], 1.0, epsilon = 1e-15);

        let no_grad = GameSpec::new(vec![ActionSet::new(0.0, 1.0).unwrap(); 5], |i, x| Ok(x[i])).unwrap();
        assert!(matches!(
            gradient_step(&SeekerState::zeros(5), &no_grad, &ring5(), &cfg),
            Err(Error::MissingGradient)
        ));
    }

    #[test]
    fn invalid_deltas_rejected() {
        let cfg = RunConfig {
            deltas: vec![3.0; 5],
            ..RunConfig::reference(5, 1, 0)
        };
        assert!(matches!(
            run(&hvac(), &ring5(), &cfg, SeekerState::zeros(5)),
            Err(Error::InvalidDelta(_))
        ));
    }

    #[test]
    fn overflow_is_detected() {
        let g = GameSpec::new(vec![ActionSet::new(-1e308, 1e308).unwrap(); 5], |i, x| Ok(1e300 * x[i] * x[i]))
            .unwrap();
        let cfg = RunConfig {
            schedule: StepSchedule::constant(1e10),
            ..RunConfig::reference(5, 100, 0)
        };
        let init = SeekerState::consensus(vec![1.0; 5]);
        assert!(matches!(
            run(&g, &ring5(), &cfg, init),
            Err(Error::NumericOverflow(_)) | Err(Error::EvaluationFailure { .. })
        ));
    }

    #[test]
    fn feasibility_and_record_layout() {
        let cfg = RunConfig {
            schedule: StepSchedule::constant(5.0),
            record_stride: 7,
            ..RunConfig::reference(5, 50, 9)
        };
        let rec = run(&hvac(), &ring5(), &cfg, SeekerState::zeros(5)).unwrap();
        let ks: Vec<usize> = rec.samples.iter().map(|s| s.k).collect();
        assert_eq!(ks, vec![0, 7, 14, 21, 28, 35, 42, 49, 50]);
        for s in &rec.samples {
            assert!(s.x.iter().all(|v| (0.0..=50.0).contains(v)));
        }
        let empty = run(&hvac(), &ring5(), &RunConfig { iters: 0, ..cfg }, SeekerState::zeros(5)).unwrap();
        assert_eq!(empty.samples.len(), 1);
    }

    #[test]
    fn column_sums_conserved_without_correction() {
        let cfg = RunConfig {
            schedule: StepSchedule::constant(0.0),
            deltas: vec![0.0; 5],
            ..RunConfig::reference(5, 100, 0)
        };
        let w = balance_weights(&DiGraph::ring_with_chords(5, 2).unwrap(), BALANCE_MAX_SWEEPS, 1e-14).unwrap();
        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| (i * 5 + j) as f64).collect()).collect();
        let init = SeekerState::new(vec![0.0; 5], &rows).unwrap();
        let col = |s: &SeekerState, j: usize| (0..5).map(|i| s.y[i * 5 + j]).sum::<f64>();
        let before: Vec<f64> = (0..5).map(|j| col(&init, j)).collect();
        let rec = run(&hvac(), &w, &cfg, init).unwrap();
        for j in 0..5 {
            assert_abs_diff_eq!(col(&rec.final_state, j), before[j], epsilon = 1e-9);
        }
    }

    #[test]
    fn estimates_contract_to_fixed_actions() {
        let cfg = RunConfig {
            schedule: StepSchedule::constant(0.0),
            ..RunConfig::reference(5, 500, 0)
        };
        let x = vec![2.0, 7.0, 11.0, 16.0, 21.0];
        let init = SeekerState::new(x.clone(), &vec![vec![0.0; 5]; 5]).unwrap();
        let rec = run(&hvac(), &ring5(), &cfg, init).unwrap();
        assert!(rec.samples.last().unwrap().consensus_err < 1e-8);
    }

    #[test]
    fn update_order_does_not_matter() {
        // Relabel players by a permutation; the permuted run must be the
        // permuted original run.
        let perm = [3usize, 0, 4, 1, 2];
        let q = QuadraticGame::hvac();
        let qp = QuadraticGame::new(
            perm.iter().map(|&p| q.a[p]).collect(),
            q.b,
            q.c,
            perm.iter().map(|&p| q.xr[p]).collect(),
        )
        .unwrap();
        let sets = vec![ActionSet::new(0.0, 50.0).unwrap(); 5];
        let g = DiGraph::ring_with_chords(5, 2).unwrap();
        let w = balance_weights(&g, BALANCE_MAX_SWEEPS, 1e-14).unwrap();
        let wp = WeightMatrix::from_rows(
            &(0..5).map(|i| (0..5).map(|j| w.get(perm[i], perm[j])).collect()).collect::<Vec<_>>(),
        )
        .unwrap();
        let cfg = RunConfig {
            mode: Mode::GradientBased,
            ..RunConfig::reference(5, 30, 0)
        };
        let a = run(&q.to_spec(sets.clone()).unwrap(), &w, &cfg, SeekerState::zeros(5)).unwrap();
        let b = run(&qp.to_spec(sets).unwrap(), &wp, &cfg, SeekerState::zeros(5)).unwrap();
        for i in 0..5 {
            assert_abs_diff_eq!(b.final_state.x[i], a.final_state.x[perm[i]], epsilon = 1e-12);
        }
    }

    #[test]
    fn same_seed_same_record() {
        let cfg = RunConfig::reference(5, 300, 17);
        let a = run(&hvac(), &ring5(), &cfg, SeekerState::zeros(5)).unwrap();
        let b = run(&hvac(), &ring5(), &cfg, SeekerState::zeros(5)).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = run(&hvac(), &ring5(), &RunConfig { seed: 18, ..cfg }, SeekerState::zeros(5)).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn square_summable_schedules() {
        assert!(StepSchedule::diminishing(0.1, 0.6).is_square_summable());
        assert!(!StepSchedule::diminishing(0.1, 0.5).is_square_summable());
        assert!(!StepSchedule::constant(0.1).is_square_summable());
        assert_abs_diff_eq!(StepSchedule::diminishing(0.1, 0.5).at(3), 0.05, epsilon = 1e-15);
    }

    fn direct_condition(chi: f64, q: f64, a: f64) -> bool {
        let p = 2.0 * chi * a - q * a * a;
        0.0 < p && p < 1.0
    }

    #[test]
    fn admissible_small_q_limit() {
        let cert = SpectralCertificate::new(0, 0.5, 1e-3);
        let iv = admissible_alpha(2.1, 0.0, 1.0, &cert, 5, 1.0).unwrap();
        assert_eq!(iv.len(), 1);
        assert_abs_diff_eq!(iv[0].hi, 1.0 / 4.2, epsilon = 1e-15);
        for k in 1..1000 {
            let a = k as f64 * 0.3 / 1000.0;
            assert_eq!(iv.iter().any(|i| i.contains(a)), direct_condition(2.1, 0.0, a));
        }
    }

    #[test]
    fn admissible_both_regimes_match_scan() {
        let cert = SpectralCertificate::new(0, 0.5, 0.0);
        for (chi, lhat, b) in [(2.1, 1.0, 1.0), (2.1, 0.1, 0.5), (1.0, 100.0, 3.0)] {
            let iv = admissible_alpha(chi, lhat, b, &cert, 5, 1.0).unwrap();
            let q = lhat * (0.5 * 5.0 * b / 0.5 + b);
            let top = 2.0 * chi / q;
            let h = 1.2 * top / 10_000.0;
            for k in 1..=10_000 {
                let a = k as f64 * h;
                let near_edge = iv.iter().any(|i| (a - i.lo).abs() < h || (a - i.hi).abs() < h);
                if !near_edge {
                    assert_eq!(iv.iter().any(|i| i.contains(a)), direct_condition(chi, q, a));
                }
            }
        }
    }

    #[test]
    fn admissible_errors() {
        let cert = SpectralCertificate::new(0, 0.5, 1e-3);
        assert!(matches!(admissible_alpha(0.0, 1.0, 1.0, &cert, 5, 1.0), Err(Error::NotMonotone(_))));
        let bad = SpectralCertificate::new(0, 0.9995, 1e-3);
        assert!(matches!(admissible_alpha(2.0, 1.0, 1.0, &bad, 5, 1.0), Err(Error::InvalidCertificate(_))));
    }
}
