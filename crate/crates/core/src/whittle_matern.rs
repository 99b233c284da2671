//! Gaussian white noise in the hat basis, Whittle–Matérn field samples and
//! their covariance matrices.
//!
//! The noise vector `W_i = <W, phi_i>` is `N(0, M)`. It is drawn as `P^T L z`
//! with `P M P^T = L L^T` and `z` standard normal. Draw `d` under seed `s`
//! uses ChaCha12 stream `d` of key `s`, so any subset of draws can be
//! regenerated independently and parallel sampling matches serial sampling.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::OperatorPair;
use crate::fractional::{default_step, ensure_wellposed, FracExponent, ResolventSolver};
use crate::mesh::{Mesh, Transfer};
use crate::sparse::{CholeskyFactor, CsrMatrix};
use crate::spectral::{dense_pencil_eigs, EigenSystem};

/// Recorded with sampled output so runs can be reproduced.
pub const RNG_ALGORITHM: &str = "chacha12-stream-per-draw/box-muller/v1";

/// Standard normal variates from stream `draw` of key `seed`.
pub fn standard_normals(seed: u64, draw: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(draw);
    let mut uniform = move || (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1 = 1.0 - uniform(); // (0, 1]
        let u2 = uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        out.push(r * c);
        out.push(r * s);
    }
    out.truncate(n);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseVector {
    pub values: Vec<f64>,
    pub seed: u64,
    pub draw: u64,
}

/// Draws `N(0, M)` vectors for a fixed mass matrix.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    factor: CholeskyFactor,
    seed: u64,
}

impl NoiseSampler {
    pub fn new(mass: &CsrMatrix, seed: u64) -> Result<Self> {
        Ok(Self {
            factor: CholeskyFactor::new(mass)?,
            seed,
        })
    }

    pub fn draw(&self, index: u64) -> NoiseVector {
        let z = standard_normals(self.seed, index, self.factor.dim());
        NoiseVector {
            values: self.factor.mul_factor(&z),
            seed: self.seed,
            draw: index,
        }
    }

    /// Draws with indices `first..first + n`.
    pub fn draws(&self, first: u64, n: usize) -> Vec<NoiseVector> {
        (first..first + n as u64)
            .into_par_iter()
            .map(|d| self.draw(d))
            .collect()
    }
}

/// `n` noise vectors with draw indices `0..n`.
pub fn sample_white_noise(mass: &CsrMatrix, seed: u64, n: usize) -> Result<Vec<NoiseVector>> {
    Ok(NoiseSampler::new(mass, seed)?.draws(0, n))
}

#[derive(Debug, Clone)]
pub struct FieldSample {
    pub mesh: Arc<Mesh>,
    pub coefficients: Vec<f64>,
    pub beta: f64,
    pub seed: u64,
    pub draw: u64,
    pub step: f64,
}

/// Resolves an optional quadrature step against the default calibration.
pub fn resolve_step(beta: f64, mesh: &Mesh, step: Option<f64>) -> Result<f64> {
    match step {
        Some(k) if k > 0.0 && k.is_finite() => Ok(k),
        Some(k) => Err(Error::InvalidArgument(format!(
            "quadrature step must be positive, got {k}"
        ))),
        None => default_step(beta, mesh.max_step()),
    }
}

/// `n` samples of `u = Q_{k,beta} W` with independent noise draws `0..n`.
pub fn sample_field(
    ops: &OperatorPair,
    beta: f64,
    step: Option<f64>,
    seed: u64,
    n: usize,
) -> Result<Vec<FieldSample>> {
    if !(beta > 0.25 && beta <= 2.0) {
        return Err(Error::InvalidArgument(format!(
            "field sampling needs 1/4 < beta <= 2, got {beta}"
        )));
    }
    ensure_wellposed(ops)?;
    let step = resolve_step(beta, ops.mesh(), step)?;
    let noise = sample_white_noise(ops.mass(), seed, n)?;
    let rhs: Vec<Vec<f64>> = noise.iter().map(|w| w.values.clone()).collect();
    let solver = ResolventSolver::new(ops);
    let fields = solver.apply_fractional_inverse(FracExponent::new(beta)?, &rhs, step)?;
    Ok(fields
        .into_iter()
        .zip(noise)
        .map(|(coefficients, w)| FieldSample {
            mesh: ops.mesh().clone(),
            coefficients,
            beta,
            seed,
            draw: w.draw,
            step,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    /// `sum_j lambda_j^{-2 beta} e_j e_j^T`.
    Eigen,
    /// `sum_j q_{k,2 beta}(lambda_j) e_j e_j^T`.
    Sinc,
}

impl std::str::FromStr for CovarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eigen" => Ok(Self::Eigen),
            "sinc" => Ok(Self::Sinc),
            other => Err(Error::InvalidArgument(format!(
                "covariance mode must be `eigen` or `sinc`, got `{other}`"
            ))),
        }
    }
}

/// Covariance function values at dof locations plus the length measure of
/// each dof, used for `L2(Γ×Γ)` norms.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub values: DMatrix<f64>,
    pub weights: Vec<f64>,
    pub mode: CovarianceMode,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Expresses the covariance at the fine nodes of `transfer`:
    /// `A^T rho A`.
    pub fn prolongate(&self, transfer: &Transfer, fine: &Mesh) -> Result<Self> {
        if transfer.coarse_dofs() != self.dim() || transfer.fine_dofs() != fine.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: transfer.coarse_dofs(),
                actual: self.dim(),
            });
        }
        let p = transfer.prolongation_matrix();
        Ok(Self {
            values: &p * &self.values * p.transpose(),
            weights: fine.lumped_weights(),
            mode: self.mode,
        })
    }

    pub fn max_asymmetry(&self) -> f64 {
        (&self.values - self.values.transpose()).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = 0.5 * (&self.values + self.values.transpose());
        sym.symmetric_eigenvalues().min()
    }
}

/// Covariance of the discrete field from a dense eigendecomposition of the
/// pencil. In sinc mode the exponent `2 beta` must not exceed 2.
pub fn covariance_matrix(
    ops: &OperatorPair,
    beta: f64,
    mode: CovarianceMode,
    step: Option<f64>,
) -> Result<CovarianceMatrix> {
    let es = dense_pencil_eigs(ops.stiffness(), ops.mass())?;
    covariance_from_eigensystem(ops.mesh(), &es, beta, mode, step)
}

pub fn covariance_from_eigensystem(
    mesh: &Mesh,
    es: &EigenSystem,
    beta: f64,
    mode: CovarianceMode,
    step: Option<f64>,
) -> Result<CovarianceMatrix> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let spectrum: Vec<f64> = match mode {
        CovarianceMode::Eigen => es.values.iter().map(|l| l.powf(-2.0 * beta)).collect(),
        CovarianceMode::Sinc => {
            let step = resolve_step(beta, mesh, step)?;
            let g = FracExponent::new(2.0 * beta)?.approx_power(step)?;
            es.values.iter().map(|&l| g(l)).collect()
        }
    };
    Ok(CovarianceMatrix {
        values: spectral_sum(es, &spectrum),
        weights: mesh.lumped_weights(),
        mode,
    })
}

/// `sum_j g_j e_j e_j^T`.
pub(crate) fn spectral_sum(es: &EigenSystem, g: &[f64]) -> DMatrix<f64> {
    let scaled = &es.vectors * DMatrix::from_diagonal(&DVector::from_column_slice(g));
    let out = scaled * es.vectors.transpose();
    0.5 * (&out + out.transpose())
}

/// `sqrt( sum_{i,m} (a_im - b_im)^2 mu_i mu_m )` with `mu` the per-dof
/// length measure: the `L2(Γ×Γ)` distance of the two kernels treated as
/// piecewise constant around each node.
pub fn covariance_l2_error(a: &CovarianceMatrix, b: &CovarianceMatrix) -> Result<f64> {
    if a.dim() != b.dim() || a.weights.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if a
        .weights
        .iter()
        .zip(&b.weights)
        .any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0))
    {
        return Err(Error::InvalidArgument(
            "covariance matrices use different dof measures".into(),
        ));
    }
    let mu = &a.weights;
    let mut sum = 0.0;
    for m in 0..a.dim() {
        for i in 0..a.dim() {
            let d = a.values[(i, m)] - b.values[(i, m)];
            sum += d * d * mu[i] * mu[m];
        }
    }
    Ok(sum.sqrt())
}

/// Mean-square norm of the KL tail after `n` terms:
/// `( sum_{j>n} lambda_j^{-2 beta} )^{1/2}`.
pub fn kl_truncation_error(es: &EigenSystem, beta: f64, n: usize) -> Result<f64> {
    if n > es.len() {
        return Err(Error::InvalidArgument(format!(
            "truncation index {n} exceeds the {} available eigenvalues",
            es.len()
        )));
    }
    Ok(es.values[n..]
        .iter()
        .rev()
        .map(|l| l.powf(-2.0 * beta))
        .sum::<f64>()
        .sqrt())
}
