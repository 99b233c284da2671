//! Symmetric sparse matrices and an envelope (skyline) Cholesky solver.
//!
//! FEM matrices on metric graphs are graph Laplacian-like: after a reverse
//! Cuthill–McKee ordering their profile is narrow, so a profile Cholesky
//! factors them without any fill outside the envelope. The symbolic part
//! (ordering and envelope) depends only on the sparsity pattern and is shared
//! between every shifted matrix `M + tK` built on the same pattern.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix. Symmetric matrices store both triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate `(row, col, value)` entries. Columns are sorted within
    /// each row. Explicit zeros are kept so patterns stay predictable.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<_> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < n && c < n, "triplet ({r},{c}) out of bounds for n={n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.indptr == other.indptr && self.indices == other.indices
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul_vec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &Self, b: f64) -> Self {
        if self.same_pattern(other) {
            let values = self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect();
            return Self {
                values,
                ..self.clone()
            };
        }
        assert_eq!(self.n, other.n);
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            triplets.extend(self.row(i).map(|(j, v)| (i, j, a * v)));
            triplets.extend(other.row(i).map(|(j, v)| (i, j, b * v)));
        }
        Self::from_triplets(self.n, &triplets)
    }

    /// Adds `delta` to the listed diagonal entries, which must be stored.
    pub fn add_to_diagonal(&mut self, entries: &[usize], delta: f64) {
        for &i in entries {
            let range = self.indptr[i]..self.indptr[i + 1];
            let k = self.indices[range.clone()]
                .binary_search(&i)
                .expect("diagonal entry not in pattern");
            self.values[range.start + k] += delta;
        }
    }

    /// Deletes row and column `k`, renumbering the remaining indices.
    pub fn remove_index(&self, k: usize) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in (0..self.n).filter(|&i| i != k) {
            let ri = if i > k { i - 1 } else { i };
            for (j, v) in self.row(i).filter(|&(j, _)| j != k) {
                triplets.push((ri, if j > k { j - 1 } else { j }, v));
            }
        }
        Self::from_triplets(self.n - 1, &triplets)
    }

    /// Symmetric permutation `B[i][j] = A[perm[i]][perm[j]]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut inverse = vec![0; self.n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            triplets.extend(self.row(i).map(|(j, v)| (inverse[i], inverse[j], v)));
        }
        Self::from_triplets(self.n, &triplets)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Reverse Cuthill–McKee ordering; `perm[new] = old`.
    pub fn rcm_ordering(&self) -> Vec<usize> {
        let n = self.n;
        let degree: Vec<usize> = (0..n).map(|i| self.indptr[i + 1] - self.indptr[i]).collect();
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        while order.len() < n {
            let start = (0..n)
                .filter(|&i| !visited[i])
                .min_by_key(|&i| degree[i])
                .unwrap();
            let root = self.pseudo_peripheral(start, &visited);
            visited[root] = true;
            let mut queue = VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                let mut next: Vec<usize> = self
                    .row(v)
                    .map(|(j, _)| j)
                    .filter(|&j| !visited[j])
                    .collect();
                next.sort_by_key(|&j| (degree[j], j));
                for j in next {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
        order.reverse();
        order
    }

    fn pseudo_peripheral(&self, start: usize, blocked: &[bool]) -> usize {
        let mut root = start;
        let mut eccentricity = 0;
        loop {
            let levels = self.bfs_levels(root, blocked);
            let depth = levels.iter().flatten().copied().max().unwrap_or(0);
            if depth <= eccentricity {
                return root;
            }
            eccentricity = depth;
            root = levels
                .iter()
                .enumerate()
                .filter(|(_, l)| **l == Some(depth))
                .map(|(i, _)| i)
                .next()
                .unwrap();
        }
    }

    fn bfs_levels(&self, root: usize, blocked: &[bool]) -> Vec<Option<usize>> {
        let mut level = vec![None; self.n];
        level[root] = Some(0);
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            let lv = level[v].unwrap();
            for (j, _) in self.row(v) {
                if level[j].is_none() && !blocked[j] {
                    level[j] = Some(lv + 1);
                    queue.push_back(j);
                }
            }
        }
        level
    }
}

/// Ordering plus envelope structure of a sparsity pattern.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    inverse: Vec<usize>,
    /// First stored column of each (permuted) row.
    first: Vec<usize>,
    offset: Vec<usize>,
}

impl SymbolicCholesky {
    pub fn analyze(pattern: &CsrMatrix) -> Self {
        let n = pattern.nrows();
        let perm = pattern.rcm_ordering();
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inverse[old];
            for (j_old, _) in pattern.row(old) {
                let j = inverse[j_old];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut offset = vec![0; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        Self {
            n,
            perm,
            inverse,
            first,
            offset,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.offset[self.n]
    }

    pub fn factor(&self, a: &CsrMatrix) -> Result<CholeskyFactor> {
        if a.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: a.nrows(),
            });
        }
        let mut l = vec![0.0; self.envelope_size()];
        for old in 0..self.n {
            let i = self.inverse[old];
            for (j_old, v) in a.row(old) {
                let j = self.inverse[j_old];
                if j <= i {
                    assert!(j >= self.first[i], "entry outside analyzed envelope");
                    l[self.offset[i] + j - self.first[i]] = v;
                }
            }
        }
        for i in 0..self.n {
            let fi = self.first[i];
            let oi = self.offset[i];
            for j in fi..i {
                let fj = self.first[j];
                let oj = self.offset[j];
                let lo = fi.max(fj);
                let mut s = l[oi + j - fi];
                for k in lo..j {
                    s -= l[oi + k - fi] * l[oj + k - fj];
                }
                l[oi + j - fi] = s / l[oj + j - fj];
            }
            let mut d = l[oi + i - fi];
            for k in fi..i {
                d -= l[oi + k - fi] * l[oi + k - fi];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: self.perm[i],
                    value: d,
                });
            }
            l[oi + i - fi] = d.sqrt();
        }
        Ok(CholeskyFactor {
            symbolic: self.clone(),
            l,
        })
    }
}

/// `P A P^T = L L^T` with `L` stored by rows inside the envelope.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: SymbolicCholesky,
    l: Vec<f64>,
}

impl CholeskyFactor {
    /// Analyzes and factors in one step.
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        SymbolicCholesky::analyze(a).factor(a)
    }

    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        let s = &self.symbolic;
        self.l[s.offset[i] + j - s.first[i]]
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        assert_eq!(b.len(), s.n);
        let mut y: Vec<f64> = s.perm.iter().map(|&old| b[old]).collect();
        for i in 0..s.n {
            let fi = s.first[i];
            let oi = s.offset[i];
            let mut acc = y[i];
            for k in fi..i {
                acc -= self.l[oi + k - fi] * y[k];
            }
            y[i] = acc / self.l[oi + i - fi];
        }
        for i in (0..s.n).rev() {
            let fi = s.first[i];
            let oi = s.offset[i];
            y[i] /= self.l[oi + i - fi];
            let xi = y[i];
            for k in fi..i {
                y[k] -= self.l[oi + k - fi] * xi;
            }
        }
        let mut x = vec![0.0; s.n];
        for (new, &old) in s.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    /// `P^T L z`: maps a standard normal vector to one with covariance `A`.
    pub fn mul_factor(&self, z: &[f64]) -> Vec<f64> {
        let s = &self.symbolic;
        assert_eq!(z.len(), s.n);
        let mut x = vec![0.0; s.n];
        for i in 0..s.n {
            let v: f64 = (s.first[i]..=i).map(|k| self.entry(i, k) * z[k]).sum();
            x[s.perm[i]] = v;
        }
        x
    }
}
