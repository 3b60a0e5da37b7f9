//! Minimum-cost rectangular assignment with gated (infinite) entries.
//!
//! Shortest-augmenting-path Hungarian method with row/column potentials,
//! O(n³) in the padded square size. Gated cells are replaced by a sentinel
//! larger than the sum of all finite costs, so the solver first maximizes
//! the number of finite pairs and then minimizes their total cost; pairs
//! landing on a sentinel are reported as unmatched.

use crate::scalar::Real;

/// Dense `rows × cols` cost matrix; `+∞` marks a forbidden pair.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> CostMatrix<T> {
    /// A matrix with every entry gated.
    pub fn gated(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::infinity(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }
}

/// Solver output: matched `(row, col)` pairs sorted by row, plus leftovers.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost<T: Real>(&self, costs: &CostMatrix<T>) -> T {
        self.pairs.iter().map(|&(r, c)| costs.get(r, c)).sum()
    }
}

/// Solves the assignment problem and dissolves pairs costing more than `max_cost`.
pub fn solve_assignment<T: Real>(costs: &CostMatrix<T>, max_cost: T) -> Assignment {
    let (rows, cols) = (costs.rows(), costs.cols());
    let mut out = Assignment::default();
    let finite_max = costs
        .data
        .iter()
        .filter(|v| v.is_finite())
        .fold(None, |acc: Option<T>, &v| Some(acc.map_or(v.abs(), |a| a.max(v.abs()))));

    let Some(finite_max) = finite_max else {
        out.unmatched_rows = (0..rows).collect();
        out.unmatched_cols = (0..cols).collect();
        return out;
    };

    let n = rows.max(cols);
    let nt = T::from_usize(n).unwrap_or_else(T::max_value);
    let sentinel = (finite_max + T::one()) * (nt + T::one()) * T::two();
    let cell = |r: usize, c: usize| -> T {
        if r < rows && c < cols {
            let v = costs.get(r, c);
            if v.is_finite() {
                v
            } else {
                sentinel
            }
        } else {
            T::zero()
        }
    };

    let col_of_row = hungarian(n, cell);
    let mut col_used = vec![false; cols];
    for (r, &c) in col_of_row.iter().enumerate().take(rows) {
        if c < cols {
            let v = costs.get(r, c);
            if v.is_finite() && v <= max_cost {
                out.pairs.push((r, c));
                col_used[c] = true;
                continue;
            }
        }
        out.unmatched_rows.push(r);
    }
    out.unmatched_cols = (0..cols).filter(|&c| !col_used[c]).collect();
    out
}

/// Square Hungarian method; returns the column assigned to each row.
fn hungarian<T: Real>(n: usize, cost: impl Fn(usize, usize) -> T) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    // p[j]: row (1-based) matched to column j; column 0 is the virtual root.
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
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
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of_row = vec![usize::MAX; n];
    for j in 1..=n {
        if p[j] > 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let a = solve_assignment(&c, f64::MAX);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.total_cost(&c), 2.0);
    }

    #[test]
    fn all_gated() {
        let c = CostMatrix::<f64>::gated(3, 2);
        let a = solve_assignment(&c, 10.0);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_rows, vec![0, 1, 2]);
        assert_eq!(a.unmatched_cols, vec![0, 1]);
    }

    #[test]
    fn empty_dimensions() {
        let a = solve_assignment(&CostMatrix::<f64>::gated(0, 4), 1.0);
        assert_eq!(a.unmatched_cols, vec![0, 1, 2, 3]);
        let a = solve_assignment(&CostMatrix::<f64>::gated(2, 0), 1.0);
        assert_eq!(a.unmatched_rows, vec![0, 1]);
    }

    #[test]
    fn rectangular_and_threshold() {
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(&[vec![0.9, 0.1, inf], vec![0.2, inf, 0.95]]);
        let a = solve_assignment(&c, 0.5);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.unmatched_cols, vec![2]);
        let a = solve_assignment(&c, 0.15);
        assert_eq!(a.pairs, vec![(0, 1)]);
        assert_eq!(a.unmatched_rows, vec![1]);
    }

    #[test]
    fn gating_prefers_more_finite_pairs() {
        // Taking (0,0) alone is cheaper but leaves row 1 gated out.
        let inf = f64::INFINITY;
        let c = CostMatrix::from_rows(&[vec![1.0, 5.0], vec![2.0, inf]]);
        let a = solve_assignment(&c, 100.0);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn works_in_single_precision() {
        let c = CostMatrix::from_rows(&[vec![4.0f32, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]]);
        assert_eq!(solve_assignment(&c, f32::MAX).total_cost(&c), 5.0);
    }
}
