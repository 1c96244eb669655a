//! Maximum-weight perfect assignment over score matrices.
//!
//! Scores are negated and fed to the classical O(N^3) shortest-augmenting-path
//! Hungarian method. Among all optimal assignments the lexicographically
//! smallest row-to-column mapping is returned: the dual potentials of the
//! solved problem identify every optimal edge, and a greedy pass with
//! alternating-path repair picks the smallest perfect matching over them.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::shuffle::{check_bijection, GridPermutation};

/// Lower bound applied to every score entry.
pub const SCORE_FLOOR: f64 = 1e-8;

// Relative slack (against the largest weight) under which two edges count as tied.
const TIE_SLACK: f64 = 1e-11;

/// Largest matrix the exhaustive solver accepts.
pub const BRUTE_FORCE_MAX: usize = 9;

/// Row-stochastic `N x N` matrix of placement scores.
///
/// Construction clamps entries to [`SCORE_FLOOR`] and normalizes each row to sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        check_weights(n, &entries)?;
        let mut entries = entries;
        for row in entries.chunks_exact_mut(n) {
            for v in row.iter_mut() {
                *v = v.max(SCORE_FLOOR);
            }
            let sum: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v = (*v / sum).max(SCORE_FLOOR);
            }
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::domain("score matrix must be square"));
        }
        Self::new(n, rows.concat())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(n, vec![1.0; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

fn check_weights(n: usize, weights: &[f64]) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("assignment needs N >= 1"));
    }
    if weights.len() != n * n {
        return Err(Error::domain(format!(
            "expected {} entries for N = {n}, got {}",
            n * n,
            weights.len()
        )));
    }
    if let Some(bad) = weights.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::domain(format!(
            "score entries must be finite and nonnegative, found {bad}"
        )));
    }
    Ok(())
}

/// Binary permutation matrix, stored as its row-to-column mapping.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AssignmentMatrix {
    mapping: Vec<usize>,
}

impl AssignmentMatrix {
    pub fn from_mapping(mapping: Vec<usize>) -> Result<Self> {
        if mapping.is_empty() {
            return Err(Error::domain("assignment needs N >= 1"));
        }
        check_bijection(&mapping)?;
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::from_mapping((0..n).collect())
    }

    /// Parse a dense row-major 0/1 matrix; it must hold exactly one 1 per row and column.
    pub fn from_dense(n: usize, entries: &[u8]) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::domain(format!(
                "expected {} entries for N = {n}, got {}",
                n * n,
                entries.len()
            )));
        }
        let mut mapping = Vec::with_capacity(n);
        for (i, row) in entries.chunks_exact(n).enumerate() {
            if row.iter().any(|&v| v > 1) {
                return Err(Error::domain(format!("row {i} has a non-binary entry")));
            }
            let ones: Vec<usize> = row.iter().positions(|&v| v == 1).collect();
            if ones.len() != 1 {
                return Err(Error::domain(format!(
                    "row {i} has {} ones, expected exactly 1",
                    ones.len()
                )));
            }
            mapping.push(ones[0]);
        }
        Self::from_mapping(mapping)
    }

    pub fn n(&self) -> usize {
        self.mapping.len()
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        u8::from(self.mapping[i] == j)
    }

    pub fn to_dense(&self) -> Vec<u8> {
        let n = self.n();
        let mut dense = vec![0u8; n * n];
        for (i, &j) in self.mapping.iter().enumerate() {
            dense[i * n + j] = 1;
        }
        dense
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }
}

/// `sum_i weights[i][mapping[i]]`.
pub fn assignment_score(weights: &[f64], mapping: &[usize]) -> f64 {
    let n = mapping.len();
    mapping
        .iter()
        .enumerate()
        .map(|(i, &j)| weights[i * n + j])
        .sum()
}

/// Optimal assignment for the normalized score matrix.
pub fn hungarian_assign(m: &ScoreMatrix) -> AssignmentMatrix {
    AssignmentMatrix {
        mapping: solve_max(m.n, &m.entries),
    }
}

/// Maximum-weight assignment over raw nonnegative weights (row-major, `n x n`).
pub fn max_weight_assignment(n: usize, weights: &[f64]) -> Result<AssignmentMatrix> {
    check_weights(n, weights)?;
    Ok(AssignmentMatrix {
        mapping: solve_max(n, weights),
    })
}

/// Exhaustive search over all `N!` assignments; `N <= 9`.
pub fn brute_force_assign(m: &ScoreMatrix) -> Result<AssignmentMatrix> {
    brute_force_max_weight(m.n, &m.entries)
}

/// Exhaustive counterpart of [`max_weight_assignment`] with the same tie rule.
pub fn brute_force_max_weight(n: usize, weights: &[f64]) -> Result<AssignmentMatrix> {
    check_weights(n, weights)?;
    if n > BRUTE_FORCE_MAX {
        return Err(Error::domain(format!(
            "refusing exhaustive search for N = {n} (limit {BRUTE_FORCE_MAX})"
        )));
    }
    let slack = tie_slack(weights) * n as f64;
    // `permutations` yields in lexicographic order for sorted input.
    let scored: Vec<(Vec<usize>, f64)> = (0..n)
        .permutations(n)
        .map(|p| {
            let s = assignment_score(weights, &p);
            (p, s)
        })
        .collect();
    let best = scored
        .iter()
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let mapping = scored
        .into_iter()
        .find(|(_, s)| *s >= best - slack)
        .map(|(p, _)| p)
        .expect("at least one permutation");
    Ok(AssignmentMatrix { mapping })
}

/// Row `i` goes to the column holding its 1.
pub fn permutation_from_matrix(m_hat: &AssignmentMatrix) -> Vec<usize> {
    m_hat.mapping.clone()
}

/// Same as [`permutation_from_matrix`], as a patch permutation; `N` must be a perfect square.
pub fn grid_permutation_from_matrix(m_hat: &AssignmentMatrix) -> Result<GridPermutation> {
    let n = m_hat.n();
    let g = (n as f64).sqrt().round() as u32;
    if (g * g) as usize != n {
        return Err(Error::domain(format!(
            "N = {n} is not a square patch count"
        )));
    }
    GridPermutation::new(g, m_hat.mapping.clone())
}

fn tie_slack(weights: &[f64]) -> f64 {
    TIE_SLACK * weights.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
}

fn solve_max(n: usize, weights: &[f64]) -> Vec<usize> {
    let cost = |i: usize, j: usize| -weights[i * n + j];

    // Potentials and matching are 1-indexed; index 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        col_owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
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
            for j in 0..=n {
                if used[j] {
                    u[col_owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            col_owner[j0] = col_owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    let mut col_to_row = vec![0usize; n];
    for j in 1..=n {
        row_to_col[col_owner[j] - 1] = j - 1;
        col_to_row[j - 1] = col_owner[j] - 1;
    }

    // Edges with zero reduced cost are exactly those usable by some optimal assignment.
    let slack = tie_slack(weights);
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| cost(i, j) - u[i + 1] - v[j + 1] <= slack)
                .collect()
        })
        .collect();

    lexicographic_repair(&tight, &mut row_to_col, &mut col_to_row);
    row_to_col
}

// Rewrites a perfect matching over `tight` into the lexicographically smallest one.
fn lexicographic_repair(tight: &[Vec<usize>], row_to_col: &mut [usize], col_to_row: &mut [usize]) {
    let n = row_to_col.len();
    let mut col_locked = vec![false; n];
    for i in 0..n {
        for &j in &tight[i] {
            if col_locked[j] {
                continue;
            }
            let current = row_to_col[i];
            if j == current {
                break;
            }
            // Give `j` to row `i`; its owner must reach `current` by an alternating path.
            let owner = col_to_row[j];
            let mut visited = vec![false; n];
            visited[j] = true;
            let mut path = Vec::new();
            if alternating_path(
                tight,
                col_to_row,
                &col_locked,
                &mut visited,
                owner,
                current,
                &mut path,
            ) {
                for (r, c) in path {
                    row_to_col[r] = c;
                    col_to_row[c] = r;
                }
                row_to_col[i] = j;
                col_to_row[j] = i;
                break;
            }
        }
        col_locked[row_to_col[i]] = true;
    }
}

fn alternating_path(
    tight: &[Vec<usize>],
    col_to_row: &[usize],
    col_locked: &[bool],
    visited: &mut [bool],
    row: usize,
    target: usize,
    path: &mut Vec<(usize, usize)>,
) -> bool {
    for &c in &tight[row] {
        if col_locked[c] || visited[c] {
            continue;
        }
        visited[c] = true;
        if c == target
            || alternating_path(
                tight,
                col_to_row,
                col_locked,
                visited,
                col_to_row[c],
                target,
                path,
            )
        {
            path.push((row, c));
            return true;
        }
    }
    false
}
