//! Zero-sum matrix games solved exactly by linear programming.
//!
//! After shifting the payoffs to be at least 1, the column player's problem
//! `max 1'q  s.t.  A q <= 1, q >= 0` is in canonical form with the origin
//! feasible. The primal optimum gives the column strategy and the dual
//! prices on the slack columns give the row strategy. The entering column
//! follows Bland's rule; ratio-test ties go to the largest pivot element,
//! which keeps degenerate stage games accurate. Pivoting is deterministic,
//! so the returned mixture is reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible pivot elements, tried in order.
const PIVOT_EPS: [f64; 2] = [1e-9, 1e-7];
/// Ratios this close to the minimum count as tied.
const RATIO_EPS: f64 = 1e-12;
/// Reduced costs above this count as non-negative.
const COST_EPS: f64 = 1e-12;

/// Payoff matrix for the row player (maximizer).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
}

impl MatrixGame {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension("empty payoff matrix".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Dimension("non-finite payoff".into()));
        }
        Ok(MatrixGame { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged payoff matrix".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    /// `-M'`: the same game seen from the column player.
    pub fn transpose_negated(&self) -> MatrixGame {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(-self.get(i, j));
            }
        }
        MatrixGame { rows: self.cols, cols: self.rows, data }
    }

    /// Payoff the row mixture `x` secures against every column.
    pub fn row_guarantee(&self, x: &[f64]) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| x[i] * self.get(i, j)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    /// Payoff the column mixture `y` concedes at most.
    pub fn col_guarantee(&self, y: &[f64]) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * y[j]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max_i (M y)_i - min_j (x' M)_j`, zero exactly at an equilibrium.
    pub fn duality_gap(&self, x: &[f64], y: &[f64]) -> f64 {
        self.col_guarantee(y) - self.row_guarantee(x)
    }
}

/// Solves `max_x min_y x' M y`. Fails if the certified duality gap exceeds
/// `tol`.
///
/// Nearly degenerate stage games can send a single pivot path through a
/// tiny pivot element. The solver therefore tries the game and its
/// transposed negation under two pivot thresholds, keeps the best row and
/// column strategies seen, and stops as soon as the gap is within `tol`.
pub fn solve_matrix_game(m: &MatrixGame, tol: f64) -> Result<MatrixSolution> {
    let mt = m.transpose_negated();
    let mut best_x: Option<(Vec<f64>, f64)> = None;
    let mut best_y: Option<(Vec<f64>, f64)> = None;
    let mut pivots = 0;
    for pivot_eps in PIVOT_EPS {
        for transposed in [false, true] {
            let game = if transposed { &mt } else { m };
            let Some((p, q, k)) = simplex(game, pivot_eps) else { continue };
            pivots += k;
            // for the transposed game the roles of the two mixtures swap
            let (x, y) = if transposed { (q, p) } else { (p, q) };
            let lo = m.row_guarantee(&x);
            let hi = m.col_guarantee(&y);
            if best_x.as_ref().is_none_or(|b| lo > b.1) {
                best_x = Some((x, lo));
            }
            if best_y.as_ref().is_none_or(|b| hi < b.1) {
                best_y = Some((y, hi));
            }
            let gap = best_y.as_ref().unwrap().1 - best_x.as_ref().unwrap().1;
            if gap <= tol {
                let (x, lo) = best_x.unwrap();
                let (y, hi) = best_y.unwrap();
                return Ok(MatrixSolution { value: 0.5 * (lo + hi), row_strategy: x, col_strategy: y });
            }
        }
    }
    let gap = match (&best_x, &best_y) {
        (Some(x), Some(y)) => y.1 - x.1,
        _ => f64::NAN,
    };
    Err(Error::NonConvergence { iterations: pivots, residual: gap, tol })
}

/// Runs the simplex method on the column player's LP. Returns the row
/// mixture (from the duals), the column mixture and the pivot count.
fn simplex(m: &MatrixGame, pivot_eps: f64) -> Option<(Vec<f64>, Vec<f64>, usize)> {
    let (rows, cols) = (m.rows, m.cols);
    let min = m.data.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min;

    // tableau: `rows` constraint rows + objective row;
    // columns: q_0..q_{cols-1}, slack_0..slack_{rows-1}, rhs
    let width = cols + rows + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    for i in 0..rows {
        for j in 0..cols {
            t[i * width + j] = m.get(i, j) + shift;
        }
        t[i * width + cols + i] = 1.0;
        t[i * width + width - 1] = 1.0;
    }
    let obj = rows * width;
    for j in 0..cols {
        t[obj + j] = -1.0;
    }
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    let max_pivots = 50 * (rows + cols) + 100;
    let mut pivots = 0;
    loop {
        // Bland: lowest-index column with negative reduced cost
        let Some(enter) = (0..cols + rows).find(|&j| t[obj + j] < -COST_EPS) else { break };
        // minimum ratio; near-ties go to the largest pivot element for
        // stability, then to the lowest basic variable
        let mut min_ratio = f64::INFINITY;
        for i in 0..rows {
            let a = t[i * width + enter];
            if a > pivot_eps {
                min_ratio = min_ratio.min(t[i * width + width - 1] / a);
            }
        }
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let a = t[i * width + enter];
            if a <= pivot_eps || t[i * width + width - 1] / a > min_ratio + RATIO_EPS {
                continue;
            }
            let better = match leave {
                None => true,
                Some((k, ak)) => a > ak * (1.0 + 1e-9) || (a >= ak * (1.0 - 1e-9) && basis[i] < basis[k]),
            };
            if better {
                leave = Some((i, a));
            }
        }
        let (pr, _) = leave?;
        pivot(&mut t, width, rows + 1, pr, enter);
        basis[pr] = enter;
        pivots += 1;
        if pivots > max_pivots {
            return None;
        }
    }

    let mut q = vec![0.0; cols];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < cols {
            q[bv] = t[i * width + width - 1];
        }
    }
    let p: Vec<f64> = (0..rows).map(|i| t[obj + cols + i]).collect();
    Some((normalize(p)?, normalize(q)?, pivots))
}

fn pivot(t: &mut [f64], width: usize, height: usize, pr: usize, pc: usize) {
    let pv = t[pr * width + pc];
    for j in 0..width {
        t[pr * width + j] /= pv;
    }
    for i in 0..height {
        if i == pr {
            continue;
        }
        let f = t[i * width + pc];
        if f == 0.0 {
            continue;
        }
        for j in 0..width {
            t[i * width + j] -= f * t[pr * width + j];
        }
    }
}

fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
    Some(v)
}
