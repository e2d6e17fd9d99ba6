//! Compressed sparse rows and an envelope Cholesky factorization with
//! reverse Cuthill-McKee ordering.

use std::collections::VecDeque;
use std::fmt;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T: Real> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from `(row, col, value)` triplets; duplicates are summed in
    /// input order, columns sorted within each row.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1, k));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = triplets[k];
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        Self { rows, cols, indptr, indices, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let span = self.indptr[r]..self.indptr[r + 1];
        match self.indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).fold(T::zero(), |acc, (c, v)| acc + v * x[c]))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let trip: Vec<(usize, usize, T)> = (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)))
            .collect();
        Self::from_triplets(self.cols, self.rows, &trip)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.cols]; self.rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Principal submatrix with row and column `drop` removed.
    pub fn without_row_col(&self, drop: usize) -> Self {
        let shift = |i: usize| if i > drop { i - 1 } else { i };
        let trip: Vec<(usize, usize, T)> = (0..self.rows)
            .filter(|&r| r != drop)
            .flat_map(|r| self.row(r).filter(|&(c, _)| c != drop).map(move |(c, v)| (shift(r), shift(c), v)))
            .collect();
        Self::from_triplets(self.rows - 1, self.cols - 1, &trip)
    }
}

/// Details reported when a matrix is not numerically positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationDiagnostics {
    pub dimension: usize,
    /// Row of the original matrix where the pivot failed.
    pub failed_row: usize,
    pub pivot: f64,
    pub min_diagonal: f64,
    pub max_diagonal: f64,
}

impl fmt::Display for FactorizationDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "non-positive pivot {:e} at row {} of {}; diagonal range [{:e}, {:e}], diagonal ratio {:e}",
            self.pivot,
            self.failed_row,
            self.dimension,
            self.min_diagonal,
            self.max_diagonal,
            self.max_diagonal / self.min_diagonal.abs().max(f64::MIN_POSITIVE)
        )
    }
}

/// Reverse Cuthill-McKee ordering of a structurally symmetric matrix.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Real>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.rows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|r| a.row(r).map(|(c, _)| c).filter(|&c| c != r).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize| -> (usize, usize) {
        // (eccentricity, a farthest vertex of minimum degree)
        let mut dist = vec![usize::MAX; n];
        dist[start] = 0;
        let mut q = VecDeque::from([start]);
        let mut far = start;
        while let Some(u) = q.pop_front() {
            if dist[u] > dist[far] || (dist[u] == dist[far] && degree[u] < degree[far]) {
                far = u;
            }
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    q.push_back(w);
                }
            }
        }
        (dist[far], far)
    };

    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        // pseudo-peripheral start
        let mut start = seed;
        let (mut ecc, mut far) = bfs_levels(start);
        for _ in 0..8 {
            let (e2, f2) = bfs_levels(far);
            if e2 <= ecc {
                break;
            }
            start = far;
            ecc = e2;
            far = f2;
        }
        visited[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(u) = q.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                q.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// Cholesky factor stored row-wise over the matrix envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky<T: Real> {
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> EnvelopeCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self, FactorizationDiagnostics> {
        assert_eq!(a.rows(), a.cols(), "Cholesky needs a square matrix");
        let n = a.rows();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old_r in 0..n {
            let r = inv[old_r];
            for (old_c, _) in a.row(old_r) {
                let c = inv[old_c];
                if c < r {
                    first[r] = first[r].min(c);
                }
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for (i, &f) in first.iter().enumerate() {
            row_start.push(row_start[i] + (i - f + 1));
        }
        let mut values = vec![T::zero(); row_start[n]];
        for old_r in 0..n {
            let r = inv[old_r];
            for (old_c, v) in a.row(old_r) {
                let c = inv[old_c];
                if c <= r {
                    values[row_start[r] + c - first[r]] = v;
                }
            }
        }

        let diag: Vec<f64> = (0..n).map(|i| a.get(i, i).as_f64()).collect();
        let fail = |row: usize, pivot: T| FactorizationDiagnostics {
            dimension: n,
            failed_row: perm[row],
            pivot: pivot.as_f64(),
            min_diagonal: diag.iter().copied().fold(f64::INFINITY, f64::min),
            max_diagonal: diag.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };

        for i in 0..n {
            let fi = first[i];
            let ri = row_start[i];
            for j in fi..i {
                let fj = first[j];
                let rj = row_start[j];
                let mut s = values[ri + j - fi];
                for k in fi.max(fj)..j {
                    s -= values[ri + k - fi] * values[rj + k - fj];
                }
                values[ri + j - fi] = s / values[rj + j - fj];
            }
            let mut d = values[ri + i - fi];
            for k in fi..i {
                let l = values[ri + k - fi];
                d -= l * l;
            }
            if !(d > T::zero()) {
                return Err(fail(i, d));
            }
            values[ri + i - fi] = d.sqrt();
        }
        Ok(Self { perm, first, row_start, values })
    }

    pub fn dimension(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor, a proxy for fill.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dimension();
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let (fi, ri) = (self.first[i], self.row_start[i]);
            let mut s = y[i];
            for k in fi..i {
                s -= self.values[ri + k - fi] * y[k];
            }
            y[i] = s / self.values[ri + i - fi];
        }
        for i in (0..n).rev() {
            let (fi, ri) = (self.first[i], self.row_start[i]);
            let xi = y[i] / self.values[ri + i - fi];
            y[i] = xi;
            for k in fi..i {
                y[k] -= self.values[ri + k - fi] * xi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> CsrMatrix<f64> {
        // sparse diagonally dominant symmetric matrix
        let mut trip = Vec::new();
        let mut diag = vec![1.0; n];
        for i in 0..n {
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                if j != i {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    trip.push((i, j, v));
                    trip.push((j, i, v));
                    diag[i] += v.abs();
                    diag[j] += v.abs();
                }
            }
        }
        trip.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        CsrMatrix::from_triplets(n, n, &trip)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn rcm_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(60, &mut rng);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn cholesky_solves_random_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 5, 40, 120] {
            let a = random_spd(n, &mut rng);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = a.mul_vec(&x);
            let chol = EnvelopeCholesky::factor(&a).unwrap();
            let got = chol.solve(&b);
            for (g, e) in got.iter().zip(&x) {
                assert!((g - e).abs() < 1e-10, "n={n}");
            }
        }
    }

    #[test]
    fn indefinite_matrix_reports_diagnostics() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        let err = EnvelopeCholesky::factor(&a).unwrap_err();
        assert_eq!(err.dimension, 2);
        assert!(err.pivot <= 0.0);
        assert!(err.to_string().contains("non-positive pivot"));
    }
}
