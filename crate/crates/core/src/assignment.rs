//! Optimal percept-to-anchor association.
//!
//! Matching tables hold similarities in [0, 1] (higher is better). The
//! Hungarian solver minimises, so it runs on negated values. Rectangular
//! tables are padded to square with zeros and padded pairs are dropped.
//!
//! Among all optimal pairings the solver returns the lexicographically
//! smallest row-sorted pair list. It finds one optimum, then walks rows in
//! order and moves each row to the smallest column that still admits a
//! perfect matching on tight edges of the optimal dual. Every optimal
//! pairing lives on tight edges, so this enumerates exactly the optima.

use crate::error::{Error, Result};
use crate::percepts::AnchorId;

/// Values closer than this are treated as ties.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Largest `min(rows, cols)` accepted by [`solve_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 9;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchingTable {
    row_ids: Vec<String>,
    col_ids: Vec<AnchorId>,
    values: Vec<f64>,
}

impl MatchingTable {
    pub fn new(row_ids: Vec<String>, col_ids: Vec<AnchorId>, values: Vec<f64>) -> Result<Self> {
        if values.len() != row_ids.len() * col_ids.len() {
            return Err(Error::validation(format!(
                "matching table has {} values for a {}x{} shape",
                values.len(),
                row_ids.len(),
                col_ids.len()
            )));
        }
        if let Some((idx, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::validation(format!(
                "matching table entry ({}, {}) = {v} is outside [0, 1]",
                idx / col_ids.len(),
                idx % col_ids.len()
            )));
        }
        Ok(MatchingTable {
            row_ids,
            col_ids,
            values,
        })
    }

    /// Table with placeholder ids, mostly for tests and benchmarks.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::validation("ragged matching table"));
        }
        Self::new(
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            (0..n_cols as u64).map(AnchorId).collect(),
            rows.concat(),
        )
    }

    /// Empty table with `n_rows` rows and no columns (or vice versa).
    pub fn empty(row_ids: Vec<String>, col_ids: Vec<AnchorId>) -> Self {
        assert!(row_ids.is_empty() || col_ids.is_empty());
        MatchingTable {
            row_ids,
            col_ids,
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.col_ids.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols() + col]
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[AnchorId] {
        &self.col_ids
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_cols().max(1)).take(self.n_rows())
    }

    /// Copy with rows (then columns) reordered: new row `i` is old row `row_perm[i]`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for &r in row_perm {
            for &c in col_perm {
                values.push(self.get(r, c));
            }
        }
        MatchingTable {
            row_ids: row_perm.iter().map(|&r| self.row_ids[r].clone()).collect(),
            col_ids: col_perm.iter().map(|&c| self.col_ids[c]).collect(),
            values,
        }
    }
}

/// Row-sorted `(row, col)` pairs of a one-to-one association.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl Assignment {
    pub fn col_for_row(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|(r, _)| *r == row).map(|(_, c)| *c)
    }
}

/// Maximum-total assignment of size `min(rows, cols)`, lexicographically
/// smallest among optima.
pub fn solve(table: &MatchingTable) -> Assignment {
    let (n_rows, n_cols) = (table.n_rows(), table.n_cols());
    if n_rows == 0 || n_cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            total: 0.0,
        };
    }
    let n = n_rows.max(n_cols);
    // Cost of the padded square problem.
    let cost = |i: usize, j: usize| -> f64 {
        if i < n_rows && j < n_cols {
            -table.get(i, j)
        } else {
            0.0
        }
    };

    let (row_pot, col_pot, mut col_of) = hungarian_min(n, &cost);
    let tight = |i: usize, j: usize| cost(i, j) - row_pot[i] - col_pot[j] <= TIE_TOLERANCE;

    let mut row_of = vec![0usize; n];
    for (i, &c) in col_of.iter().enumerate() {
        row_of[c] = i;
    }
    let mut fixed_col = vec![false; n];
    for i in 0..n_rows {
        for c in 0..col_of[i] {
            if fixed_col[c] || !tight(i, c) {
                continue;
            }
            if let Some(path) = reroute(i, c, &col_of, &row_of, &fixed_col, &tight) {
                apply_reroute(i, c, &path, &mut col_of, &mut row_of);
                break;
            }
        }
        fixed_col[col_of[i]] = true;
    }

    let pairs: Vec<(usize, usize)> = (0..n_rows)
        .filter(|&i| col_of[i] < n_cols)
        .map(|i| (i, col_of[i]))
        .collect();
    let total = pairs.iter().map(|&(i, j)| table.get(i, j)).sum();
    Assignment { pairs, total }
}

/// Rows along an alternating path that frees column `target` for row `i`.
///
/// Row `i` takes column `target`; its old column becomes free. The owner of
/// `target` must find another tight, unfixed column, possibly displacing
/// further rows, until the chain ends on the freed column. Returns the
/// sequence of `(row, new_col)` moves after row `i`'s own move.
fn reroute(
    i: usize,
    target: usize,
    col_of: &[usize],
    row_of: &[usize],
    fixed_col: &[bool],
    tight: &impl Fn(usize, usize) -> bool,
) -> Option<Vec<(usize, usize)>> {
    let n = col_of.len();
    let freed = col_of[i];
    let start = row_of[target];
    // BFS over rows; parent[col] = (row that claims col, previous col in chain)
    let mut visited_col = vec![false; n];
    visited_col[target] = true;
    let mut claim: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back((start, target));
    while let Some((row, displaced_from)) = queue.pop_front() {
        for c in 0..n {
            if visited_col[c] || fixed_col[c] || !tight(row, c) {
                continue;
            }
            visited_col[c] = true;
            claim[c] = Some((row, displaced_from));
            if c == freed {
                let mut moves = Vec::new();
                let mut col = c;
                while let Some((r, prev)) = claim[col] {
                    moves.push((r, col));
                    if prev == target {
                        break;
                    }
                    col = prev;
                }
                moves.reverse();
                return Some(moves);
            }
            queue.push_back((row_of[c], c));
        }
    }
    None
}

fn apply_reroute(
    i: usize,
    target: usize,
    moves: &[(usize, usize)],
    col_of: &mut [usize],
    row_of: &mut [usize],
) {
    col_of[i] = target;
    row_of[target] = i;
    for &(r, c) in moves {
        col_of[r] = c;
        row_of[c] = r;
    }
}

/// Classic O(n³) shortest-augmenting-path Hungarian method on an n×n cost
/// matrix. Returns row potentials, column potentials and the column of each
/// row; `cost(i, j) - u[i] - v[j] >= 0` with equality on matched pairs.
fn hungarian_min(n: usize, cost: &impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based internally; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
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
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[owner[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), col_of)
}

/// Exhaustive search with the same optimality and tie-break contract as
/// [`solve`]. Test oracle; limited to `min(rows, cols) <= 9`.
pub fn solve_bruteforce(table: &MatchingTable) -> Result<Assignment> {
    let (n_rows, n_cols) = (table.n_rows(), table.n_cols());
    let k = n_rows.min(n_cols);
    if k > BRUTEFORCE_LIMIT {
        return Err(Error::validation(format!(
            "brute-force assignment limited to min(N, M) <= {BRUTEFORCE_LIMIT}, got {k}"
        )));
    }
    let mut search = Exhaustive {
        table,
        k,
        used: vec![false; n_cols],
        current: Vec::with_capacity(k),
        best_total: f64::NEG_INFINITY,
        floor: None,
        found: None,
    };
    search.visit(0, 0.0);
    let best = search.best_total;
    // Depth-first order is lexicographic order of pair lists, so the first
    // near-optimal leaf is the tie-break winner.
    search.floor = Some(best - TIE_TOLERANCE);
    search.visit(0, 0.0);
    let pairs = search.found.unwrap_or_default();
    let total = pairs.iter().map(|&(i, j)| table.get(i, j)).sum();
    Ok(Assignment { pairs, total })
}

struct Exhaustive<'a> {
    table: &'a MatchingTable,
    k: usize,
    used: Vec<bool>,
    current: Vec<(usize, usize)>,
    best_total: f64,
    floor: Option<f64>,
    found: Option<Vec<(usize, usize)>>,
}

impl Exhaustive<'_> {
    fn visit(&mut self, row: usize, total: f64) {
        if self.found.is_some() {
            return;
        }
        if self.current.len() == self.k {
            match self.floor {
                None => self.best_total = self.best_total.max(total),
                Some(floor) if total >= floor => self.found = Some(self.current.clone()),
                Some(_) => {}
            }
            return;
        }
        let n_rows = self.table.n_rows();
        if row >= n_rows {
            return;
        }
        for c in 0..self.table.n_cols() {
            if self.used[c] {
                continue;
            }
            self.used[c] = true;
            self.current.push((row, c));
            self.visit(row + 1, total + self.table.get(row, c));
            self.current.pop();
            self.used[c] = false;
        }
        let still_needed = self.k - self.current.len();
        if n_rows - row > still_needed {
            self.visit(row + 1, total);
        }
    }
}
