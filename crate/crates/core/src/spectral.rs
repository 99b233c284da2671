//! Generalized eigenpairs of the pencil `(K, M)`.
//!
//! Small problems (up to [`DENSE_LIMIT`] dofs) are reduced to a standard
//! symmetric problem with a dense Cholesky factor of `M`. Larger ones use
//! block shift-invert subspace iteration with the envelope Cholesky solver
//! and a Rayleigh–Ritz step in the `M` inner product.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::fem::OperatorPair;
use crate::sparse::{CholeskyFactor, CsrMatrix};

/// Largest problem handled by dense eigensolves.
pub const DENSE_LIMIT: usize = 2000;

/// Relative gap below which neighbouring eigenvalues form one cluster.
pub const CLUSTER_TOL: f64 = 1e-10;

/// Ascending eigenvalues and `M`-orthonormal eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, j: usize) -> DVector<f64> {
        self.vectors.column(j).into_owned()
    }

    /// Index ranges of eigenvalue clusters (relative gap below [`CLUSTER_TOL`]).
    pub fn clusters(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for j in 1..=self.values.len() {
            let split = j == self.values.len() || {
                let (a, b) = (self.values[j - 1], self.values[j]);
                (b - a).abs() > CLUSTER_TOL * a.abs().max(b.abs())
            };
            if split {
                out.push(start..j);
                start = j;
            }
        }
        out
    }

    /// Largest `|e_i^T M e_j - delta_ij|`.
    pub fn orthonormality_defect(&self, mass: &CsrMatrix) -> f64 {
        let m = self.len();
        let mv: Vec<Vec<f64>> = (0..m)
            .map(|j| mass.mul_vec(self.vectors.column(j).as_slice()))
            .collect();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for (j, mvj) in mv.iter().enumerate() {
                let dot: f64 = self.vectors.column(i).iter().zip(mvj).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Largest `||K e_j - lambda_j M e_j|| / lambda_j` (Euclidean norm).
    pub fn max_relative_residual(&self, k: &CsrMatrix, mass: &CsrMatrix) -> f64 {
        (0..self.len())
            .map(|j| {
                let x = self.vectors.column(j);
                let kx = k.mul_vec(x.as_slice());
                let mx = mass.mul_vec(x.as_slice());
                let r: f64 = kx
                    .iter()
                    .zip(&mx)
                    .map(|(a, b)| (a - self.values[j] * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                r / self.values[j].abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Fixes the sign of every column so its largest-magnitude entry is positive.
fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
}

/// Every eigenpair of `(K, M)` by dense reduction.
pub fn dense_pencil_eigs(k: &CsrMatrix, m: &CsrMatrix) -> Result<EigenSystem> {
    let n = k.nrows();
    if n > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            size: n,
            limit: DENSE_LIMIT,
        });
    }
    dense_pencil_eigs_from(&k.to_dense(), &m.to_dense())
}

pub(crate) fn dense_pencil_eigs_from(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<EigenSystem> {
    let n = k.nrows();
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite {
        pivot: 0,
        value: f64::NAN,
    })?;
    let l = chol.l();
    // C = L^{-1} K L^{-T}
    let linv_k = l
        .solve_lower_triangular(k)
        .expect("Cholesky factor is nonsingular");
    let c = l
        .solve_lower_triangular(&linv_k.transpose())
        .expect("Cholesky factor is nonsingular");
    let c = 0.5 * (&c + c.transpose());
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let y = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let mut vectors = l
        .transpose()
        .solve_upper_triangular(&y)
        .expect("Cholesky factor is nonsingular");
    normalize_signs(&mut vectors);
    Ok(EigenSystem { values, vectors })
}

/// The `count` smallest eigenpairs, choosing dense or iterative solves by size.
pub fn pencil_eigs(k: &CsrMatrix, m: &CsrMatrix, count: usize) -> Result<EigenSystem> {
    let n = k.nrows();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "eigenpair count must be in 1..={n}, got {count}"
        )));
    }
    if n <= DENSE_LIMIT {
        let mut es = dense_pencil_eigs(k, m)?;
        es.values.truncate(count);
        es.vectors = es.vectors.columns(0, count).into_owned();
        Ok(es)
    } else {
        subspace_iteration(k, m, count)
    }
}

pub fn generalized_eigs(ops: &OperatorPair, count: usize) -> Result<EigenSystem> {
    pencil_eigs(ops.stiffness(), ops.mass(), count)
}

const SUBSPACE_MAX_ITER: usize = 1000;
const SUBSPACE_TOL: f64 = 1e-10;

/// Block shift-invert subspace iteration for the `count` smallest eigenpairs.
pub fn subspace_iteration(k: &CsrMatrix, m: &CsrMatrix, count: usize) -> Result<EigenSystem> {
    let n = k.nrows();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "eigenpair count must be in 1..={n}, got {count}"
        )));
    }
    let block = n.min((2 * count).max(count + 8));

    // K itself is SPD when the problem is well posed; otherwise move the pole
    // below the spectrum until the shifted matrix factors.
    let mut sigma = 0.0;
    let factor = loop {
        match CholeskyFactor::new(&k.linear_combination(1.0, m, -sigma)) {
            Ok(f) => break f,
            Err(_) if sigma > -1e12 => {
                sigma = if sigma == 0.0 { -1.0 } else { sigma * 10.0 };
            }
            Err(e) => return Err(e),
        }
    };

    let mut rng = ChaCha12Rng::seed_from_u64(0x5eed);
    let mut x = DMatrix::from_fn(n, block, |_, _| {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    });

    let mut residual = f64::INFINITY;
    for _ in 0..SUBSPACE_MAX_ITER {
        let mut y = DMatrix::zeros(n, block);
        for j in 0..block {
            let mx = m.mul_vec(x.column(j).as_slice());
            y.set_column(j, &DVector::from_vec(factor.solve(&mx)));
        }
        m_orthonormalize(&mut y, m, &mut rng);

        let ky = apply_columns(k, &y);
        let reduced = y.transpose() * &ky;
        let reduced = 0.5 * (&reduced + reduced.transpose());
        let eig = SymmetricEigen::new(reduced);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let v = DMatrix::from_fn(block, block, |i, j| eig.eigenvectors[(i, order[j])]);
        x = &y * v;
        let theta: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j]).collect();

        let kx = apply_columns(k, &x.columns(0, count).into_owned());
        let mx = apply_columns(m, &x.columns(0, count).into_owned());
        residual = (0..count)
            .map(|j| {
                let r = kx.column(j) - theta[j] * mx.column(j);
                r.norm() / kx.column(j).norm().max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        if residual < SUBSPACE_TOL {
            let mut vectors = x.columns(0, count).into_owned();
            normalize_signs(&mut vectors);
            let mut es = EigenSystem {
                values: theta[..count].to_vec(),
                vectors,
            };
            reorthonormalize_clusters(&mut es, m);
            return Ok(es);
        }
    }
    Err(Error::EigenConvergence {
        iterations: SUBSPACE_MAX_ITER,
        residual,
    })
}

fn apply_columns(a: &CsrMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for j in 0..x.ncols() {
        out.set_column(j, &DVector::from_vec(a.mul_vec(x.column(j).as_slice())));
    }
    out
}

/// Modified Gram–Schmidt in the `M` inner product; collapsed columns are
/// replaced by fresh random directions.
fn m_orthonormalize(y: &mut DMatrix<f64>, m: &CsrMatrix, rng: &mut ChaCha12Rng) {
    let n = y.nrows();
    for j in 0..y.ncols() {
        for _attempt in 0..3 {
            for _pass in 0..2 {
                for i in 0..j {
                    let mq = m.mul_vec(y.column(i).as_slice());
                    let proj: f64 = y.column(j).iter().zip(&mq).map(|(a, b)| a * b).sum();
                    let qi = y.column(i).into_owned();
                    let mut cj = y.column_mut(j);
                    cj.axpy(-proj, &qi, 1.0);
                }
            }
            let norm = m.bilinear(y.column(j).as_slice(), y.column(j).as_slice()).sqrt();
            if norm > 1e-300 && norm.is_finite() {
                y.column_mut(j).scale_mut(1.0 / norm);
                break;
            }
            let fresh = DVector::from_fn(n, |_, _| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5);
            y.set_column(j, &fresh);
        }
    }
}

/// Re-applies `M`-orthonormalization inside each eigenvalue cluster.
fn reorthonormalize_clusters(es: &mut EigenSystem, m: &CsrMatrix) {
    for range in es.clusters() {
        if range.len() < 2 {
            continue;
        }
        for j in range.clone() {
            for i in range.start..j {
                let mq = m.mul_vec(es.vectors.column(i).as_slice());
                let proj: f64 = es.vectors.column(j).iter().zip(&mq).map(|(a, b)| a * b).sum();
                let qi = es.vectors.column(i).into_owned();
                es.vectors.column_mut(j).axpy(-proj, &qi, 1.0);
            }
            let c = es.vectors.column(j).into_owned();
            let norm = m.bilinear(c.as_slice(), c.as_slice()).sqrt();
            es.vectors.column_mut(j).scale_mut(1.0 / norm);
        }
    }
}

/// `(min, max)` of `lambda_n / n^2` over `n_lo..=n_hi` (1-based indices).
pub fn weyl_check(es: &EigenSystem, n_lo: usize, n_hi: usize) -> Result<(f64, f64)> {
    if n_lo == 0 || n_lo > n_hi || n_hi > es.len() {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= n_lo <= n_hi <= {}, got {n_lo}..{n_hi}",
            es.len()
        )));
    }
    let ratios = (n_lo..=n_hi).map(|n| es.values[n - 1] / (n * n) as f64);
    let (c1, c2) = ratios.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    Ok((c1, c2))
}

/// Condition imposed at the perturbed vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VertexCondition {
    /// Generalized Kirchhoff with this coefficient.
    Kirchhoff(f64),
    /// Homogeneous Dirichlet, the `alpha -> infinity` limit.
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterlacingReport {
    pub holds: bool,
    /// Smallest slack `rhs - lhs` over both inequality chains; negative
    /// values within tolerance still count as holding.
    pub worst_margin: f64,
    pub base: Vec<f64>,
    pub perturbed: Vec<f64>,
}

pub const INTERLACING_TOL: f64 = 1e-8;

/// Compares the spectrum of `ops` with the one obtained by changing the
/// vertex coefficient at `vertex` only, and checks
/// `lambda_n(alpha) <= lambda_n(alpha~) <= lambda_{n+1}(alpha)`.
pub fn interlacing_check(
    ops: &OperatorPair,
    vertex: usize,
    perturbed: VertexCondition,
) -> Result<InterlacingReport> {
    if vertex >= ops.mesh().graph().num_vertices() {
        return Err(Error::InvalidArgument(format!("no vertex with index {vertex}")));
    }
    let base = dense_pencil_eigs(ops.stiffness(), ops.mass())?.values;
    let tilde = match perturbed {
        VertexCondition::Kirchhoff(alpha_tilde) => {
            if alpha_tilde < ops.alpha() {
                return Err(Error::InvalidArgument(format!(
                    "interlacing needs alpha <= alpha~, got {} > {alpha_tilde}",
                    ops.alpha()
                )));
            }
            let mut k = ops.stiffness().clone();
            k.add_to_diagonal(&[vertex], alpha_tilde - ops.alpha());
            dense_pencil_eigs(&k, ops.mass())?.values
        }
        VertexCondition::Dirichlet => {
            let (k, m) = ops.dirichlet_at(vertex)?;
            dense_pencil_eigs(&k, &m)?.values
        }
    };
    Ok(interlacing_margins(base, tilde))
}

/// Checks the interlacing chains for two ascending spectra.
pub fn interlacing_margins(base: Vec<f64>, perturbed: Vec<f64>) -> InterlacingReport {
    let mut holds = true;
    let mut worst = f64::INFINITY;
    for (n, &t) in perturbed.iter().enumerate() {
        if let Some(&lo) = base.get(n) {
            let slack = t - lo;
            holds &= slack >= -INTERLACING_TOL * lo.abs().max(t.abs());
            worst = worst.min(slack);
        }
        if let Some(&hi) = base.get(n + 1) {
            let slack = hi - t;
            holds &= slack >= -INTERLACING_TOL * hi.abs().max(t.abs());
            worst = worst.min(slack);
        }
    }
    InterlacingReport {
        holds,
        worst_margin: worst,
        base,
        perturbed,
    }
}
