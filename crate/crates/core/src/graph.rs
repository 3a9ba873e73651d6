//! Directed communication graphs and their mixing weights.
//!
//! Orientation convention: an edge `(j, i)` means player `i` receives
//! information from player `j`, and the weight matrix stores the weight
//! player `i` puts on that information at `[w]_{ij}` (receiver indexes rows).
//! Every graph carries all self-loops.
//!
//! Indices are 0-based in the API. The plain-text graph format and the
//! command line use 1-based indices.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default tolerance for row/column sums after balancing.
pub const BALANCE_TOL: f64 = 1e-10;
/// Default cap on Sinkhorn sweeps.
pub const BALANCE_MAX_SWEEPS: usize = 100_000;
/// Default gap between the estimated spectral radius and the decay rate `gamma`.
pub const DEFAULT_MARGIN: f64 = 1e-3;
/// Default power-iteration budget.
pub const SPECTRAL_MAX_ITERS: usize = 200_000;
/// Default power-iteration accuracy.
pub const SPECTRAL_TOL: f64 = 1e-12;

/// A directed graph on `n` nodes with mandatory self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DiGraph {
    /// Builds a graph from `(from, to)` pairs. Self-loops are added for every node.
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut set: BTreeSet<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for (from, to) in edges {
            if from >= n || to >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({}, {}) has an endpoint outside 1..={n}",
                    from + 1,
                    to + 1
                )));
            }
            set.insert((from, to));
        }
        Ok(Self { n, edges: set })
    }

    /// Directed cycle `i -> i+1 (mod n)`.
    pub fn ring(n: usize) -> Result<Self> {
        Self::new(n, (0..n).map(|i| (i, (i + 1) % n)))
    }

    /// Every ordered pair is an edge.
    pub fn complete(n: usize) -> Result<Self> {
        Self::new(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j))))
    }

    /// Each node sends to its next two successors on the cycle.
    pub fn two_successor_cycle(n: usize) -> Result<Self> {
        Self::new(
            n,
            (0..n).flat_map(|i| [(i, (i + 1) % n), (i, (i + 2) % n)]),
        )
    }

    /// Directed ring plus the first `chords` skip-one chords `i -> i+2`.
    ///
    /// With `chords == n` this coincides with [`DiGraph::two_successor_cycle`].
    pub fn ring_with_chords(n: usize, chords: usize) -> Result<Self> {
        if chords > n {
            return Err(Error::InvalidGraph(format!(
                "at most {n} chords fit on a {n}-ring, asked for {chords}"
            )));
        }
        let ring = (0..n).map(|i| (i, (i + 1) % n));
        let extra = (0..chords).map(|i| (i, (i + 2) % n));
        Self::new(n, ring.chain(extra))
    }

    /// A random strongly connected graph: a Hamiltonian cycle over a random
    /// permutation plus each remaining ordered pair with probability `p`.
    pub fn random_strongly_connected(n: usize, p: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut edges: Vec<(usize, usize)> =
            (0..n).map(|k| (order[k], order[(k + 1) % n])).collect();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Nodes `j` with an edge `j -> i`, including `i` itself.
    pub fn in_neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n).filter(|&j| self.has_edge(j, i)).collect()
    }

    /// True iff every ordered pair of nodes is joined by a directed path.
    pub fn is_strongly_connected(&self) -> bool {
        let mut out = vec![Vec::new(); self.n];
        let mut inc = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            out[a].push(b);
            inc[b].push(a);
        }
        reaches_all(&out) && reaches_all(&inc)
    }

    /// Parses the text format: `n <N>` followed by one `<from> <to>` line
    /// per edge, 1-indexed. Blank lines and `#` comments are ignored.
    pub fn read_text<R: BufRead>(reader: R) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::InvalidGraph(format!("line {}: {msg}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            match (n, fields.as_slice()) {
                (None, ["n", count]) => {
                    n = Some(count.parse::<usize>().map_err(|_| bad("bad node count"))?)
                }
                (None, _) => return Err(bad("expected `n <N>` header")),
                (Some(_), [from, to]) => {
                    let from: usize = from.parse().map_err(|_| bad("bad edge source"))?;
                    let to: usize = to.parse().map_err(|_| bad("bad edge target"))?;
                    if from == 0 || to == 0 {
                        return Err(bad("node indices are 1-based"));
                    }
                    edges.push((from - 1, to - 1));
                }
                (Some(_), _) => return Err(bad("expected `<from> <to>`")),
            }
        }
        let n = n.ok_or_else(|| Error::InvalidGraph("missing `n <N>` header".into()))?;
        Self::new(n, edges)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n {}", self.n)?;
        for &(a, b) in &self.edges {
            writeln!(out, "{} {}", a + 1, b + 1)?;
        }
        Ok(())
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Nonnegative square mixing weights; `[w]_{ij}` is what player `i` applies
/// to information received from player `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    w: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() || w.nrows() == 0 {
            return Err(Error::InvalidParameter(format!(
                "weight matrix must be square and non-empty, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        if let Some(v) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weight matrix entries must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { w })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidParameter("weight rows must all have length N".into()));
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.w.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    /// Reads N rows of N comma-separated decimals.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::InvalidParameter(format!("bad weight entry {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.w.row_iter() {
            wtr.write_record(row.iter().map(|v| crate::harness::fmt_f64(*v)))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Sinkhorn-style alternating row/column normalization restricted to the
/// support of `g`.
///
/// Starts from the 0/1 adjacency pattern. A strongly connected pattern with
/// self-loops is fully indecomposable, so the iteration converges to a
/// doubly-stochastic matrix with exactly the same support.
pub fn balance_weights(g: &DiGraph, max_iters: usize, tol: f64) -> Result<WeightMatrix> {
    if !g.is_strongly_connected() {
        return Err(Error::InvalidGraph("balancing requires a strongly connected graph".into()));
    }
    let n = g.n();
    let mut w = DMatrix::from_fn(n, n, |i, j| if g.has_edge(j, i) { 1.0 } else { 0.0 });
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        for mut row in w.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        for mut col in w.column_iter_mut() {
            let s = col.sum();
            col /= s;
        }
        residual = max_sum_deviation(&w);
        if residual <= tol {
            return Ok(WeightMatrix { w });
        }
    }
    Err(Error::NonConvergence {
        what: "weight balancing",
        iters: max_iters,
        residual,
    })
}

fn max_sum_deviation(w: &DMatrix<f64>) -> f64 {
    let rows = w.row_iter().map(|r| (r.sum() - 1.0).abs());
    let cols = w.column_iter().map(|c| (c.sum() - 1.0).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// Why a weight matrix failed doubly-stochastic validation.
#[derive(Debug, Clone, PartialEq)]
pub enum StochasticViolation {
    Negative { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    ColumnSum { col: usize, sum: f64 },
    Support { row: usize, col: usize, value: f64 },
    Size { expected: usize, got: usize },
}

impl fmt::Display for StochasticViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Negative { row, col, value } => {
                write!(f, "entry ({}, {}) is negative: {value}", row + 1, col + 1)
            }
            Self::RowSum { row, sum } => write!(f, "row {} sums to {sum:.17e}", row + 1),
            Self::ColumnSum { col, sum } => write!(f, "column {} sums to {sum:.17e}", col + 1),
            Self::Support { row, col, value } => write!(
                f,
                "entry ({}, {}) = {value} does not match the graph support",
                row + 1,
                col + 1
            ),
            Self::Size { expected, got } => {
                write!(f, "matrix is {got}x{got} but the graph has {expected} nodes")
            }
        }
    }
}

impl std::error::Error for StochasticViolation {}

/// Checks nonnegativity, then every row sum, then every column sum against
/// `1 ± tol`. Reports the first offender.
pub fn validate_doubly_stochastic(
    w: &WeightMatrix,
    tol: f64,
) -> std::result::Result<(), StochasticViolation> {
    let m = &w.w;
    for ((row, col), value) in m.iter().enumerate().map(|(k, v)| ((k % m.nrows(), k / m.nrows()), *v)) {
        if value < 0.0 {
            return Err(StochasticViolation::Negative { row, col, value });
        }
    }
    for (row, r) in m.row_iter().enumerate() {
        let sum = r.sum();
        if (sum - 1.0).abs() > tol {
            return Err(StochasticViolation::RowSum { row, sum });
        }
    }
    for (col, c) in m.column_iter().enumerate() {
        let sum = c.sum();
        if (sum - 1.0).abs() > tol {
            return Err(StochasticViolation::ColumnSum { col, sum });
        }
    }
    Ok(())
}

/// Checks `[w]_{ij} > 0` exactly when `(j, i)` is an edge of `g`.
pub fn check_support(w: &WeightMatrix, g: &DiGraph) -> std::result::Result<(), StochasticViolation> {
    if w.n() != g.n() {
        return Err(StochasticViolation::Size {
            expected: g.n(),
            got: w.n(),
        });
    }
    for i in 0..w.n() {
        for j in 0..w.n() {
            let value = w.get(i, j);
            if (value > 0.0) != g.has_edge(j, i) {
                return Err(StochasticViolation::Support { row: i, col: j, value });
            }
        }
    }
    Ok(())
}

/// The first `(l, i)` pair breaking `0 <= delta_l [w]_{li} < 2 [w]_{ll}`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeltaViolation {
    #[error("expected {expected} deltas, got {got}")]
    Length { expected: usize, got: usize },
    #[error(
        "delta_{row} * w[{row},{col}] = {product} is outside [0, 2 * w[{row},{row}] = {bound})",
        row = .row + 1,
        col = .col + 1
    )]
    Bound {
        row: usize,
        col: usize,
        product: f64,
        bound: f64,
    },
}

pub fn validate_deltas(w: &WeightMatrix, deltas: &[f64]) -> std::result::Result<(), DeltaViolation> {
    let n = w.n();
    if deltas.len() != n {
        return Err(DeltaViolation::Length {
            expected: n,
            got: deltas.len(),
        });
    }
    for (l, &delta) in deltas.iter().enumerate() {
        let bound = 2.0 * w.get(l, l);
        for i in 0..n {
            let product = delta * w.get(l, i);
            // NaN fails both comparisons.
            if !(product >= 0.0 && product < bound) {
                return Err(DeltaViolation::Bound {
                    row: l,
                    col: i,
                    product,
                    bound,
                });
            }
        }
    }
    Ok(())
}

/// The consensus-error propagation matrix for player `i`: off-diagonal
/// entries of `w`, diagonal `|[w]_{ll} - delta_l [w]_{li}|`.
pub fn tilde_matrix(w: &WeightMatrix, i: usize, deltas: &[f64]) -> Result<DMatrix<f64>> {
    validate_deltas(w, deltas)?;
    if i >= w.n() {
        return Err(Error::DimensionMismatch {
            expected: w.n(),
            got: i,
        });
    }
    let mut m = w.w.clone();
    for l in 0..w.n() {
        m[(l, l)] = (w.get(l, l) - deltas[l] * w.get(l, i)).abs();
    }
    Ok(m)
}

/// Largest eigenvalue magnitude of a nonnegative square matrix.
///
/// Power iteration from a strictly positive pseudo-random start. Each
/// iterate is bracketed by the Collatz-Wielandt bounds
/// `min_k (Mv)_k / v_k <= rho <= max_k (Mv)_k / v_k`; the iteration stops
/// once the bracket is narrower than `2 tol`, or (for reducible matrices
/// whose bracket never closes) once the 1-norm growth estimate changes by
/// less than `tol / 100` between sweeps. A zero diagonal entry triggers a
/// positive shift so periodic patterns still converge.
pub fn spectral_radius(m: &DMatrix<f64>, iters: usize, tol: f64) -> Result<f64> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::InvalidParameter(format!(
            "spectral radius needs a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter(
            "spectral radius expects finite nonnegative entries".into(),
        ));
    }
    let max_row = m.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    if max_row == 0.0 {
        return Ok(0.0);
    }
    let shift = if (0..n).any(|k| m[(k, k)] == 0.0) {
        0.5 * max_row
    } else {
        0.0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_7a11);
    let mut v: Vec<f64> = (0..n).map(|_| 0.5 + rng.random::<f64>()).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);

    let mut u = vec![0.0; n];
    let mut prev = f64::NAN;
    let mut width = f64::INFINITY;
    for _ in 0..iters {
        for (k, uk) in u.iter_mut().enumerate() {
            *uk = m.row(k).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + shift * v[k];
        }
        let growth: f64 = u.iter().sum();
        if growth == 0.0 {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for (uk, vk) in u.iter().zip(&v) {
            if *vk > 0.0 {
                let r = uk / vk;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        width = hi - lo;
        if width <= 2.0 * tol {
            return Ok((0.5 * (lo + hi) - shift).max(0.0));
        }
        if (growth - prev).abs() <= 1e-2 * tol {
            return Ok((growth - shift).max(0.0));
        }
        prev = growth;
        for (vk, uk) in v.iter_mut().zip(&u) {
            *vk = uk / growth;
        }
    }
    Err(Error::NonConvergence {
        what: "power iteration",
        iters,
        residual: width,
    })
}

/// Induced infinity norm (max absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Numeric stand-in for the geometric decay `||M^k|| <= C gamma^k` of a
/// player's consensus-error matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCertificate {
    pub player: usize,
    pub rho: f64,
    pub gamma: f64,
    pub margin: f64,
}

impl SpectralCertificate {
    pub fn new(player: usize, rho: f64, margin: f64) -> Self {
        Self {
            player,
            rho,
            gamma: rho + margin,
            margin,
        }
    }

    /// Certificate for `tilde_matrix(w, player, deltas)`.
    pub fn for_player(w: &WeightMatrix, player: usize, deltas: &[f64], margin: f64) -> Result<Self> {
        if !(margin >= 0.0) {
            return Err(Error::InvalidParameter(format!("margin must be nonnegative, got {margin}")));
        }
        let m = tilde_matrix(w, player, deltas)?;
        let rho = spectral_radius(&m, SPECTRAL_MAX_ITERS, SPECTRAL_TOL)?;
        Ok(Self::new(player, rho, margin))
    }

    pub fn is_valid(&self) -> bool {
        self.gamma < 1.0
    }

    /// `||M^k||_inf / gamma^k` for `k = 1..=kmax`.
    pub fn decay_ratios(&self, m: &DMatrix<f64>, kmax: usize) -> Vec<f64> {
        let mut power = m.clone();
        let mut out = Vec::with_capacity(kmax);
        for k in 1..=kmax {
            if k > 1 {
                power = &power * m;
            }
            out.push(inf_norm(&power) / self.gamma.powi(k as i32));
        }
        out
    }

    /// Smallest `C` with `||M^k||_inf <= C gamma^k` over `k = 1..=kmax`.
    pub fn decay_constant(&self, m: &DMatrix<f64>, kmax: usize) -> f64 {
        self.decay_ratios(m, kmax).into_iter().fold(0.0, f64::max)
    }
}

/// One certificate per player.
pub fn certify_all(w: &WeightMatrix, deltas: &[f64], margin: f64) -> Result<Vec<SpectralCertificate>> {
    (0..w.n())
        .map(|i| SpectralCertificate::for_player(w, i, deltas, margin))
        .collect()
}
