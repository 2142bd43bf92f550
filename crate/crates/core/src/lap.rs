//! Maximum-weight bipartite matching with optional non-assignment (the
//! `<=`-constrained linear sum assignment problem), plus an exhaustive
//! oracle.
//!
//! The solver reduces the `<=`-constrained maximization on an `n x m` weight
//! matrix to a perfect matching on an `(n+m) x (n+m)` padded square matrix
//! whose dummy rows/columns carry weight zero, then runs a
//! Jonker-Volgenant-style shortest augmenting path algorithm. Because
//! non-assignment costs nothing, no pair with weight `<= 0` is ever part of
//! the returned matching.
//!
//! Tie-breaking: among equal-score optima, [`lap_max`] returns the matching
//! whose binary vector is lowest in the fixed column-wise vectorization
//! order. In particular zero-weight pairs are always left unmatched.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Absolute tolerance for score comparisons.
pub(crate) const SCORE_TOL: f64 = 1e-9;

/// A bipartite matching together with its total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LapSolution {
    /// `row_to_col[i] = Some(k)` iff row `i` is matched to column `k`.
    pub row_to_col: Vec<Option<usize>>,
    /// Sum of the weights of all matched pairs.
    pub score: f64,
}

impl LapSolution {
    fn empty(rows: usize) -> Self {
        LapSolution {
            row_to_col: vec![None; rows],
            score: 0.0,
        }
    }

    /// Binary matching vector in column-wise vectorization order
    /// (pair `(i, k)` at index `k * rows + i`).
    pub fn to_vector(&self, cols: usize) -> Vec<bool> {
        let rows = self.row_to_col.len();
        let mut v = vec![false; rows * cols];
        for (i, &col) in self.row_to_col.iter().enumerate() {
            if let Some(k) = col {
                v[k * rows + i] = true;
            }
        }
        v
    }

    pub fn matched_pairs(&self) -> Vec<(usize, usize)> {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(i, &col)| col.map(|k| (i, k)))
            .collect()
    }
}

/// Maximum-weight matching under row/column sums `<= 1`, with the canonical
/// lexicographic tie-break described in the module docs.
pub fn lap_max(weights: &Matrix) -> Result<LapSolution> {
    if !weights.is_finite() {
        return Err(Error::NonFinite("lap weights"));
    }
    let (n, m) = (weights.rows(), weights.cols());
    if n == 0 || m == 0 {
        return Ok(LapSolution::empty(n));
    }

    let raw = solve_masked(weights, &[], &HashSet::new());
    let opt = raw.score;

    // Decide each pair in vectorization order: prefer "unmatched" whenever an
    // optimal completion without the pair exists. Pairs with weight <= 0 are
    // never part of a lexicographically minimal optimum (dropping one keeps
    // the score and lowers the vector), so only pairs matched by the current
    // witness need a solve.
    let mut forbidden: HashSet<(usize, usize)> = HashSet::new();
    let mut forced: Vec<(usize, usize)> = Vec::new();
    let mut witness = raw.row_to_col;
    for idx in 0..n * m {
        let i = idx % n;
        let k = idx / n;
        if weights.get(i, k) <= 0.0 {
            forbidden.insert((i, k));
            continue;
        }
        if witness[i] != Some(k) {
            forbidden.insert((i, k));
            continue;
        }
        forbidden.insert((i, k));
        let trial = solve_masked(weights, &forced, &forbidden);
        if trial.score >= opt - SCORE_TOL {
            witness = trial.row_to_col;
        } else {
            forbidden.remove(&(i, k));
            forced.push((i, k));
        }
    }

    let mut row_to_col = vec![None; n];
    let mut score = 0.0;
    for &(i, k) in &forced {
        row_to_col[i] = Some(k);
        score += weights.get(i, k);
    }
    Ok(LapSolution { row_to_col, score })
}

/// Deterministic single-pass solve without the lexicographic post-pass.
/// Same optimal score as [`lap_max`]; used inside the branch-and-bound loop
/// where only the value and one optimal witness are needed.
pub(crate) fn lap_max_raw(weights: &Matrix) -> LapSolution {
    solve_masked(weights, &[], &HashSet::new())
}

/// Solves the `<=`-constrained maximum-weight matching with fixations:
/// `forced` pairs are matched unconditionally (their rows and columns leave
/// the problem, their weights join the score even when negative), and
/// `forbidden` pairs are masked out with an infinite penalty.
///
/// Forced pairs must not share rows or columns and must not be forbidden;
/// this is the tree-node invariant upheld by the solver.
pub(crate) fn solve_masked(
    weights: &Matrix,
    forced: &[(usize, usize)],
    forbidden: &HashSet<(usize, usize)>,
) -> LapSolution {
    let (n, m) = (weights.rows(), weights.cols());
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; m];
    let mut base = 0.0;
    for &(i, k) in forced {
        debug_assert!(!row_used[i] && !col_used[k], "conflicting forced pairs");
        debug_assert!(!forbidden.contains(&(i, k)));
        row_used[i] = true;
        col_used[k] = true;
        base += weights.get(i, k);
    }

    let free_rows: Vec<usize> = (0..n).filter(|&i| !row_used[i]).collect();
    let free_cols: Vec<usize> = (0..m).filter(|&k| !col_used[k]).collect();

    let mut row_to_col = vec![None; n];
    for &(i, k) in forced {
        row_to_col[i] = Some(k);
    }

    let (nr, nc) = (free_rows.len(), free_cols.len());
    if nr > 0 && nc > 0 {
        let assignment = padded_max_assignment(nr, nc, |r, c| {
            let (i, k) = (free_rows[r], free_cols[c]);
            if forbidden.contains(&(i, k)) {
                f64::NEG_INFINITY
            } else {
                weights.get(i, k)
            }
        });
        for (r, &col) in assignment.iter().enumerate() {
            if let Some(c) = col {
                let (i, k) = (free_rows[r], free_cols[c]);
                base += weights.get(i, k);
                row_to_col[i] = Some(k);
            }
        }
    }
    LapSolution {
        row_to_col,
        score: base,
    }
}

/// Perfect-matching reduction: pads the `n x m` weight table to an
/// `(n+m) x (n+m)` square with zero-weight dummies and runs a shortest
/// augmenting path search on the negated costs. Matched pairs with weight
/// `<= 0` are dropped afterwards (non-assignment dominates them).
/// `NEG_INFINITY` weights are never matched.
fn padded_max_assignment(
    n: usize,
    m: usize,
    weight: impl Fn(usize, usize) -> f64,
) -> Vec<Option<usize>> {
    let s = n + m;
    let cost = |i: usize, j: usize| -> f64 {
        if i < n && j < m {
            let w = weight(i, j);
            if w == f64::NEG_INFINITY {
                f64::INFINITY
            } else {
                -w
            }
        } else {
            0.0
        }
    };

    // Shortest augmenting paths with potentials (1-based arrays).
    let mut u = vec![0.0f64; s + 1];
    let mut v = vec![0.0f64; s + 1];
    let mut col_to_row = vec![0usize; s + 1]; // 0 = unassigned
    let mut way = vec![0usize; s + 1];
    for i in 1..=s {
        col_to_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; s + 1];
        let mut used = vec![false; s + 1];
        loop {
            used[j0] = true;
            let i0 = col_to_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=s {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            debug_assert!(delta.is_finite(), "augmenting path ran out of finite arcs");
            for j in 0..=s {
                if used[j] {
                    u[col_to_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_to_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_to_row[j0] = col_to_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![None; n];
    for (j, &i) in col_to_row.iter().enumerate().take(m + 1).skip(1) {
        if (1..=n).contains(&i) && weight(i - 1, j - 1) > 0.0 {
            row_to_col[i - 1] = Some(j - 1);
        }
    }
    row_to_col
}

/// Exhaustive maximum over all partial injective matchings; the test oracle
/// for [`lap_max`]. Sizes are capped at 6 on each side.
pub fn lap_bruteforce(weights: &Matrix) -> Result<LapSolution> {
    if !weights.is_finite() {
        return Err(Error::NonFinite("lap weights"));
    }
    let (n, m) = (weights.rows(), weights.cols());
    if n > 6 || m > 6 {
        return Err(Error::SizeLimit(format!(
            "lap_bruteforce enumerates up to 6x6, got {n}x{m}"
        )));
    }

    // score, matching vector, matched pairs
    type Candidate = (f64, Vec<bool>, Vec<(usize, usize)>);

    struct Search<'a> {
        weights: &'a Matrix,
        n: usize,
        m: usize,
        col_used: Vec<bool>,
        pairs: Vec<(usize, usize)>,
        best: Option<Candidate>,
    }

    impl Search<'_> {
        fn vectorize(&self, pairs: &[(usize, usize)]) -> Vec<bool> {
            let mut v = vec![false; self.n * self.m];
            for &(i, k) in pairs {
                v[k * self.n + i] = true;
            }
            v
        }

        fn recurse(&mut self, row: usize, score: f64) {
            if row == self.n {
                let v = self.vectorize(&self.pairs);
                let better = match &self.best {
                    None => true,
                    Some((best_score, best_vector, _)) => {
                        score > best_score + SCORE_TOL
                            || ((score - best_score).abs() <= SCORE_TOL && &v < best_vector)
                    }
                };
                if better {
                    self.best = Some((score, v, self.pairs.clone()));
                }
                return;
            }
            self.recurse(row + 1, score);
            for k in 0..self.m {
                if !self.col_used[k] {
                    self.col_used[k] = true;
                    self.pairs.push((row, k));
                    self.recurse(row + 1, score + self.weights.get(row, k));
                    self.pairs.pop();
                    self.col_used[k] = false;
                }
            }
        }
    }

    let mut search = Search {
        weights,
        n,
        m,
        col_used: vec![false; m],
        pairs: Vec::new(),
        best: None,
    };
    search.recurse(0, 0.0);

    let (_, _, best_pairs) = search.best.expect("at least the empty matching is enumerated");
    let mut row_to_col = vec![None; n];
    let mut score = 0.0;
    for &(i, k) in &best_pairs {
        row_to_col[i] = Some(k);
        score += weights.get(i, k);
    }
    Ok(LapSolution { row_to_col, score })
}
