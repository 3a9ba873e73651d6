//! Games with scalar interval action sets and black-box costs.
//!
//! [`GameSpec`] is what the seeker sees: per-player intervals and a cost
//! evaluator (plus, optionally, the true partial derivative for the
//! gradient-based baseline). [`QuadraticGame`] is the closed-form energy
//! consumption game
//!
//! ```text
//! f_i(x) = a_i (x_i - r_i)^2 + (b * sum_j x_j + c) * x_i
//! ```
//!
//! with its interior equilibrium solver and the constants that enter the
//! convergence bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` of admissible actions for one player.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSet {
    pub lo: f64,
    pub hi: f64,
}

impl ActionSet {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "action set [{lo}, {hi}] must be a finite non-empty interval"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn project(&self, v: f64) -> f64 {
        project(self, v)
    }
}

/// Euclidean projection onto an interval.
pub fn project(s: &ActionSet, v: f64) -> f64 {
    v.clamp(s.lo, s.hi)
}

pub type CostFn = dyn Fn(usize, &[f64]) -> std::result::Result<f64, String> + Send + Sync;
pub type PartialFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;

/// A game as seen by the players: action sets and black-box costs.
///
/// Cost evaluators must accept points whose own coordinate lies slightly
/// outside the player's interval; the smoothing oracle probes `x_i + mu xi`
/// without projecting.
#[derive(Clone)]
pub struct GameSpec {
    sets: Vec<ActionSet>,
    cost: Arc<CostFn>,
    partial: Option<Arc<PartialFn>>,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("sets", &self.sets)
            .field("has_gradient", &self.partial.is_some())
            .finish()
    }
}

impl GameSpec {
    pub fn new<F>(sets: Vec<ActionSet>, cost: F) -> Result<Self>
    where
        F: Fn(usize, &[f64]) -> std::result::Result<f64, String> + Send + Sync + 'static,
    {
        if sets.is_empty() {
            return Err(Error::InvalidParameter("a game needs at least one player".into()));
        }
        Ok(Self {
            sets,
            cost: Arc::new(cost),
            partial: None,
        })
    }

    /// Attaches the true partial derivative `d f_i / d x_i`.
    pub fn with_gradient<G>(mut self, partial: G) -> Self
    where
        G: Fn(usize, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.partial = Some(Arc::new(partial));
        self
    }

    pub fn n(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, i: usize) -> &ActionSet {
        &self.sets[i]
    }

    pub fn sets(&self) -> &[ActionSet] {
        &self.sets
    }

    pub fn has_gradient(&self) -> bool {
        self.partial.is_some()
    }

    fn check_args(&self, i: usize, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        if i >= self.n() {
            return Err(Error::InvalidParameter(format!("no player {i} in a {}-player game", self.n())));
        }
        Ok(())
    }

    /// `f_i(x)`.
    pub fn eval_cost(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_args(i, x)?;
        let v = (self.cost)(i, x).map_err(|message| Error::EvaluationFailure { player: i, message })?;
        if !v.is_finite() {
            return Err(Error::EvaluationFailure {
                player: i,
                message: format!("cost returned {v}"),
            });
        }
        Ok(v)
    }

    /// `d f_i / d x_i (x)`, if the game carries a gradient.
    pub fn eval_partial(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_args(i, x)?;
        let partial = self.partial.as_ref().ok_or(Error::MissingGradient)?;
        Ok(partial(i, x))
    }
}

/// `f_i(x) = a_i (x_i - xr_i)^2 + (b * sum(x) + c) * x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    pub a: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub xr: Vec<f64>,
}

/// Constants entering the oracle and step-size bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// Lipschitz constant of `f_i` in its own action, uniform over players.
    pub d1: f64,
    /// Lipschitz constant of `f_i` in the other players' actions.
    pub d2: f64,
    /// Oracle second-moment bound `sqrt(n + 4) * d1` with `n = 1`.
    pub bbound: f64,
    /// Strong monotonicity constant of the game mapping.
    pub chi: f64,
    /// `d1 / mu + sqrt(N - 1) * d2 / mu` at the reference smoothing value.
    pub lhat: f64,
}

impl QuadraticGame {
    pub fn new(a: Vec<f64>, b: f64, c: f64, xr: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != xr.len() {
            return Err(Error::InvalidParameter(format!(
                "need one a_i and one xr_i per player (got {} and {})",
                a.len(),
                xr.len()
            )));
        }
        if a.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("every a_i must be positive".into()));
        }
        if !b.is_finite() || !c.is_finite() || xr.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("b, c and xr must be finite".into()));
        }
        Ok(Self { a, b, c, xr })
    }

    /// The five-player HVAC instance: `a_i = 1`, `b = 0.1`, `c = 10`,
    /// `xr = (10, 15, 20, 25, 30)`.
    pub fn hvac() -> Self {
        Self::new(vec![1.0; 5], 0.1, 10.0, vec![10.0, 15.0, 20.0, 25.0, 30.0]).unwrap()
    }

    /// The HVAC game scaled to `n` players with `xr_i = 2 i` (1-based `i`).
    pub fn hvac_scaled(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n], 0.1, 10.0, (1..=n).map(|i| 2.0 * i as f64).collect())
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn cost(&self, i: usize, x: &[f64]) -> f64 {
        let total: f64 = x.iter().sum();
        let d = x[i] - self.xr[i];
        self.a[i] * d * d + (self.b * total + self.c) * x[i]
    }

    /// `d f_i / d x_i = 2 a_i (x_i - xr_i) + b x_i + b sum(x) + c`.
    pub fn partial(&self, i: usize, x: &[f64]) -> f64 {
        let total: f64 = x.iter().sum();
        2.0 * self.a[i] * (x[i] - self.xr[i]) + self.b * x[i] + self.b * total + self.c
    }

    /// The stacked partials `F(x)`.
    pub fn game_mapping(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n()).map(|i| self.partial(i, x)).collect()
    }

    /// Jacobian of the game mapping: `2 a_i + 2 b` on the diagonal, `b` elsewhere.
    pub fn jacobian(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 * self.a[i] + 2.0 * self.b
            } else {
                self.b
            }
        })
    }

    /// Black-box view with the analytic gradient attached.
    pub fn to_spec(&self, sets: Vec<ActionSet>) -> Result<GameSpec> {
        if sets.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: sets.len(),
            });
        }
        let for_cost = self.clone();
        let for_grad = self.clone();
        Ok(GameSpec::new(sets, move |i, x| Ok(for_cost.cost(i, x)))?
            .with_gradient(move |i, x| for_grad.partial(i, x)))
    }

    pub fn derived_constants(&self, sets: &[ActionSet], mu: f64) -> Result<DerivedConstants> {
        if !(mu > 0.0) {
            return Err(Error::DegenerateSmoothing(mu));
        }
        let (d1, d2) = lipschitz_bounds(self, sets)?;
        let chi = monotonicity_constant(self)?;
        let n = self.n() as f64;
        Ok(DerivedConstants {
            d1,
            d2,
            bbound: 5f64.sqrt() * d1,
            chi,
            lhat: d1 / mu + (n - 1.0).sqrt() * d2 / mu,
        })
    }
}

/// Reciprocal condition number below which the first-order system counts as singular.
pub const SINGULAR_RCOND: f64 = 1e-12;

/// Interior Nash equilibrium of a quadratic game.
///
/// Solves the stacked first-order conditions
/// `(2 a_i + 2 b) x_i + b sum_{j != i} x_j = 2 a_i xr_i - c`
/// and rejects solutions that touch or leave an action interval (a
/// boundary equilibrium needs a complementarity solver).
pub fn solve_quadratic_ne(q: &QuadraticGame, sets: &[ActionSet]) -> Result<Vec<f64>> {
    let n = q.n();
    if sets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sets.len(),
        });
    }
    let jac = q.jacobian();
    let sv = jac.singular_values();
    if sv.min() <= SINGULAR_RCOND * sv.max() {
        return Err(Error::SingularSystem);
    }
    let rhs = DVector::from_fn(n, |i, _| 2.0 * q.a[i] * q.xr[i] - q.c);
    let lu = jac.lu();
    let x = lu.solve(&rhs).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    for (player, (&value, s)) in x.iter().zip(sets).enumerate() {
        if !(s.lo < value && value < s.hi) {
            return Err(Error::NotInterior {
                player,
                value,
                lo: s.lo,
                hi: s.hi,
            });
        }
    }
    Ok(x.iter().copied().collect())
}

/// Smallest eigenvalue of the symmetric part of the game-mapping Jacobian.
pub fn monotonicity_constant(q: &QuadraticGame) -> Result<f64> {
    let jac = q.jacobian();
    let sym = (&jac + jac.transpose()) * 0.5;
    let chi = sym.symmetric_eigenvalues().min();
    if chi > 0.0 {
        Ok(chi)
    } else {
        Err(Error::NotMonotone(chi))
    }
}

/// Exact `(d1, d2)` over the box `sets`.
///
/// Both relevant derivatives are affine in `x`, so their extreme values sit
/// at corners; the corner maximum is assembled coordinate by coordinate
/// instead of enumerating all `2^N` corners.
pub fn lipschitz_bounds(q: &QuadraticGame, sets: &[ActionSet]) -> Result<(f64, f64)> {
    let n = q.n();
    if sets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: sets.len(),
        });
    }
    let mut d1 = 0.0_f64;
    let mut d2 = 0.0_f64;
    for i in 0..n {
        // d f_i / d x_i = (2 a_i + 2 b) x_i + b sum_{j != i} x_j + (c - 2 a_i xr_i)
        let mut hi = q.c - 2.0 * q.a[i] * q.xr[i];
        let mut lo = hi;
        for (j, s) in sets.iter().enumerate() {
            let coef = if i == j { 2.0 * q.a[i] + 2.0 * q.b } else { q.b };
            let (p, r) = (coef * s.lo, coef * s.hi);
            hi += p.max(r);
            lo += p.min(r);
        }
        d1 = d1.max(hi.abs()).max(lo.abs());
        // d f_i / d x_j = b x_i for every j != i
        let reach = sets[i].lo.abs().max(sets[i].hi.abs());
        d2 = d2.max(q.b.abs() * reach * ((n - 1) as f64).sqrt());
    }
    Ok((d1, d2))
}
