//! Sinc quadrature for negative fractional powers of the discrete operator.
//!
//! For `0 < beta < 1` the inverse power is approximated by
//!
//! ```text
//! Q_{k,beta} = (2k sin(pi beta) / pi) * sum_{l=-K-}^{K+} e^{2 beta l k} (I + e^{2lk} L_h)^{-1}
//! ```
//!
//! with `K- = ceil(pi^2 / (4 beta k^2))` and `K+ = ceil(pi^2 / (4 (1-beta) k^2))`.
//! In coefficient space, with data entering as a dual vector `b`
//! (`b_i = <f, phi_i>`), each resolvent is the sparse solve `(M + tK) x = b`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{load_vector, CoefficientField, OperatorPair};
use crate::graph::MetricGraph;
use crate::mesh::Mesh;
use crate::sparse::{CholeskyFactor, SymbolicCholesky};
use crate::spectral::dense_pencil_eigs;

/// One quadrature node with shift `t_l = e^{y_l}`, `y_l = 2lk`, and weight
/// `w_l = c e^{beta y_l}`, `c = 2k sin(pi beta) / pi`.
///
/// For large `l` both `t_l` and `w_l` overflow while their useful ratio does
/// not, so nodes keep `y_l` and are applied as
/// `c e^{(beta-1) y} (e^{-y} M + K)^{-1}` when `y > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SincNode {
    pub index: i64,
    pub log_shift: f64,
}

impl SincNode {
    pub fn shift(&self) -> f64 {
        self.log_shift.exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SincRule {
    pub beta: f64,
    pub step: f64,
    pub k_minus: i64,
    pub k_plus: i64,
    /// `2k sin(pi beta) / pi`
    pub scale: f64,
    pub nodes: Vec<SincNode>,
}

/// Builds the sinc rule for `0 < beta < 1` and step `k > 0`.
pub fn plan_sinc(beta: f64, step: f64) -> Result<SincRule> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sinc quadrature needs 0 < beta < 1, got {beta}"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "quadrature step must be positive, got {step}"
        )));
    }
    let k_minus = (PI * PI / (4.0 * beta * step * step)).ceil() as i64;
    let k_plus = (PI * PI / (4.0 * (1.0 - beta) * step * step)).ceil() as i64;
    let scale = 2.0 * step * (PI * beta).sin() / PI;
    let nodes = (-k_minus..=k_plus)
        .map(|l| SincNode {
            index: l,
            log_shift: 2.0 * l as f64 * step,
        })
        .collect();
    Ok(SincRule {
        beta,
        step,
        k_minus,
        k_plus,
        scale,
        nodes,
    })
}

/// The step `k = -1 / (beta ln h)` tying the quadrature error
/// `e^{-pi^2/(2k)}` to the mesh size.
pub fn default_step(beta: f64, max_h: f64) -> Result<f64> {
    if !(max_h > 0.0 && max_h < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "default quadrature step needs 0 < h < 1, got {max_h}"
        )));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    Ok(-1.0 / (beta * max_h.ln()))
}

/// The scale `e^{-pi^2/(2k)}` of the quadrature error.
pub fn quadrature_error_scale(step: f64) -> f64 {
    (-PI * PI / (2.0 * step)).exp()
}

impl SincRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight(&self, node: &SincNode) -> f64 {
        self.scale * (self.beta * node.log_shift).exp()
    }

    /// `q_{k,beta}(x) = sum_l w_l / (1 + t_l x)`.
    pub fn eval(&self, x: f64) -> f64 {
        self.nodes
            .iter()
            .map(|n| {
                let y = n.log_shift;
                if y <= 0.0 {
                    self.scale * (self.beta * y).exp() / (1.0 + y.exp() * x)
                } else {
                    self.scale * ((self.beta - 1.0) * y).exp() / ((-y).exp() + x)
                }
            })
            .sum()
    }
}

/// An exponent `gamma in (0, 2]` split as `m + r` with integer `m` and
/// `0 <= r < 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracExponent {
    gamma: f64,
    integer: u32,
    remainder: f64,
}

impl FracExponent {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "exponent must lie in (0, 2], got {gamma}"
            )));
        }
        let mut integer = gamma.floor();
        let mut remainder = gamma - integer;
        // treat exponents within rounding of an integer as integers
        if remainder < 1e-12 {
            remainder = 0.0;
        } else if 1.0 - remainder < 1e-12 {
            integer += 1.0;
            remainder = 0.0;
        }
        Ok(Self {
            gamma,
            integer: integer as u32,
            remainder,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn integer(&self) -> u32 {
        self.integer
    }

    pub fn remainder(&self) -> f64 {
        self.remainder
    }

    /// Scalar function the quadrature applies to each eigenvalue:
    /// `x^{-m} q_{k,r}(x)`, or `x^{-m}` when `r = 0`.
    pub fn approx_power(&self, step: f64) -> Result<impl Fn(f64) -> f64> {
        let rule = if self.remainder > 0.0 {
            Some(plan_sinc(self.remainder, step)?)
        } else {
            None
        };
        let m = self.integer as i32;
        Ok(move |x: f64| {
            let frac = rule.as_ref().map_or(1.0, |r| r.eval(x));
            frac * x.powi(-m)
        })
    }
}

/// Shifted solves `(M + tK)^{-1}` on a fixed operator pair. The envelope
/// ordering is computed once and reused for every shift.
pub struct ResolventSolver<'a> {
    ops: &'a OperatorPair,
    symbolic: SymbolicCholesky,
    stiffness_factor: OnceLock<std::result::Result<CholeskyFactor, Error>>,
}

/// Number of quadrature nodes factored concurrently before accumulation.
const NODE_CHUNK: usize = 64;

impl<'a> ResolventSolver<'a> {
    pub fn new(ops: &'a OperatorPair) -> Self {
        Self {
            ops,
            symbolic: SymbolicCholesky::analyze(ops.mass()),
            stiffness_factor: OnceLock::new(),
        }
    }

    pub fn ops(&self) -> &OperatorPair {
        self.ops
    }

    /// Factor of `M + tK` for `t <= 1`, of `M/t + K` otherwise, along with
    /// the factor `1` or `1/t` that restores `(M + tK)^{-1}`.
    fn shifted_factor(&self, t: f64) -> Result<(CholeskyFactor, f64)> {
        let (m, k) = (self.ops.mass(), self.ops.stiffness());
        if t <= 1.0 {
            Ok((self.symbolic.factor(&m.linear_combination(1.0, k, t))?, 1.0))
        } else {
            Ok((self.symbolic.factor(&m.linear_combination(1.0 / t, k, 1.0))?, 1.0 / t))
        }
    }

    /// Factor and coefficient of one node's term `w_l (M + t_l K)^{-1}`.
    fn node_factor(&self, rule: &SincRule, node: &SincNode) -> Result<(CholeskyFactor, f64)> {
        let (m, k) = (self.ops.mass(), self.ops.stiffness());
        let y = node.log_shift;
        if y <= 0.0 {
            let f = self.symbolic.factor(&m.linear_combination(1.0, k, y.exp()))?;
            Ok((f, rule.scale * (rule.beta * y).exp()))
        } else {
            let f = self.symbolic.factor(&m.linear_combination((-y).exp(), k, 1.0))?;
            Ok((f, rule.scale * ((rule.beta - 1.0) * y).exp()))
        }
    }

    /// Solves `(M + tK) x = b`.
    pub fn apply_resolvent(&self, t: f64, b: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("shift must be >= 0, got {t}")));
        }
        self.ops.mesh().check_len(b)?;
        let (f, scale) = self.shifted_factor(t)?;
        Ok(f.solve(b).into_iter().map(|x| x * scale).collect())
    }

    fn stiffness_factor(&self) -> Result<&CholeskyFactor> {
        self.stiffness_factor
            .get_or_init(|| self.symbolic.factor(self.ops.stiffness()))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `K^{-1} b`.
    pub fn solve_stiffness(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.ops.mesh().check_len(b)?;
        Ok(self.stiffness_factor()?.solve(b))
    }

    /// `sum_l w_l (M + t_l K)^{-1} b` for every right-hand side.
    pub fn apply_sinc(&self, rule: &SincRule, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.ops.num_dofs();
        for b in rhs {
            self.ops.mesh().check_len(b)?;
        }
        let mut acc = vec![vec![0.0; n]; rhs.len()];
        for chunk in rule.nodes.chunks(NODE_CHUNK) {
            let partial: Vec<Result<Vec<Vec<f64>>>> = chunk
                .par_iter()
                .map(|node| {
                    let (f, w) = self.node_factor(rule, node)?;
                    Ok(rhs
                        .iter()
                        .map(|b| f.solve(b).into_iter().map(|x| w * x).collect())
                        .collect())
                })
                .collect();
            // fixed node order keeps the sum bit-reproducible
            for contribution in partial {
                for (a, c) in acc.iter_mut().zip(contribution?) {
                    for (ai, ci) in a.iter_mut().zip(c) {
                        *ai += ci;
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Approximates `L_h^{-gamma}` applied to each dual vector.
    pub fn apply_fractional_inverse(
        &self,
        gamma: FracExponent,
        rhs: &[Vec<f64>],
        step: f64,
    ) -> Result<Vec<Vec<f64>>> {
        let mut remaining = gamma.integer();
        let mut out = if gamma.remainder() > 0.0 {
            self.apply_sinc(&plan_sinc(gamma.remainder(), step)?, rhs)?
        } else {
            remaining -= 1;
            rhs.iter()
                .map(|b| self.solve_stiffness(b))
                .collect::<Result<_>>()?
        };
        for _ in 0..remaining {
            out = out
                .iter()
                .map(|c| self.solve_stiffness(&self.ops.mass().mul_vec(c)))
                .collect::<Result<_>>()?;
        }
        Ok(out)
    }
}

pub fn apply_resolvent(ops: &OperatorPair, t: f64, b: &[f64]) -> Result<Vec<f64>> {
    ResolventSolver::new(ops).apply_resolvent(t, b)
}

pub fn apply_fractional_inverse(
    ops: &OperatorPair,
    gamma: FracExponent,
    b: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let mut out = ResolventSolver::new(ops).apply_fractional_inverse(gamma, &[b.to_vec()], step)?;
    Ok(out.pop().expect("one right-hand side"))
}

/// `sum_j lambda_j^{-gamma} (e_j^T b) e_j` from a dense eigendecomposition.
/// Any `gamma >= 0` is accepted.
pub fn fractional_eigen_oracle(ops: &OperatorPair, gamma: f64, b: &[f64]) -> Result<Vec<f64>> {
    ops.mesh().check_len(b)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponent must be >= 0, got {gamma}")));
    }
    let es = dense_pencil_eigs(ops.stiffness(), ops.mass())?;
    let b = nalgebra::DVector::from_column_slice(b);
    let coeffs = es.vectors.transpose() * b;
    let scaled: Vec<f64> = coeffs
        .iter()
        .zip(&es.values)
        .map(|(c, lambda)| c * lambda.powf(-gamma))
        .collect();
    let scaled = nalgebra::DVector::from_vec(scaled);
    Ok((es.vectors * scaled).as_slice().to_vec())
}

/// Result of a deterministic fractional solve.
#[derive(Debug, Clone)]
pub struct DeterministicSolution {
    pub ops: OperatorPair,
    pub step: f64,
    pub coefficients: Vec<f64>,
}

/// Parameters for [`solve_deterministic`].
#[derive(Debug, Clone)]
pub struct DeterministicProblem {
    pub coeffs: CoefficientField,
    pub alpha: f64,
    pub beta: f64,
    pub max_h: f64,
    /// Quadrature step; defaults to `-1 / (beta ln h)`.
    pub step: Option<f64>,
}

/// Meshes the graph, forms the load vector of `f` and applies the
/// fractional inverse of order `beta`.
pub fn solve_deterministic(
    graph: Arc<MetricGraph>,
    problem: &DeterministicProblem,
    f: &dyn Fn(usize, f64) -> f64,
) -> Result<DeterministicSolution> {
    let mesh = Arc::new(Mesh::build(graph, problem.max_h)?);
    let ops = OperatorPair::assemble(mesh, problem.coeffs.clone(), problem.alpha)?;
    ensure_wellposed(&ops)?;
    let gamma = FracExponent::new(problem.beta)?;
    let step = match problem.step {
        Some(k) => k,
        None => default_step(problem.beta, ops.mesh().max_step())?,
    };
    let b = load_vector(ops.mesh(), f);
    let coefficients = apply_fractional_inverse(&ops, gamma, &b, step)?;
    Ok(DeterministicSolution {
        ops,
        step,
        coefficients,
    })
}

pub(crate) fn ensure_wellposed(ops: &OperatorPair) -> Result<()> {
    let report = ops.wellposedness();
    if report.passes() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "operator is not known to be well posed: {report:?}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ops(name: &str, h: f64, alpha: f64) -> OperatorPair {
        let mesh = Mesh::build(Arc::new(MetricGraph::builtin(name).unwrap()), h).unwrap();
        OperatorPair::assemble(Arc::new(mesh), CoefficientField::default(), alpha).unwrap()
    }

    #[test]
    fn table_node_counts_spot_checks() {
        let k = default_step(0.5, 0.125).unwrap();
        let r = plan_sinc(0.5, k).unwrap();
        assert_eq!((r.k_minus, r.k_plus, r.len()), (6, 6, 13));
        let r = plan_sinc(3.0 / 8.0, default_step(3.0 / 8.0, 0.125).unwrap()).unwrap();
        assert_eq!((r.k_minus, r.k_plus, r.len()), (5, 3, 9));
        let r = plan_sinc(7.0 / 8.0, default_step(7.0 / 8.0, 1.0 / 64.0).unwrap()).unwrap();
        assert_eq!(r.len(), 301);
    }

    #[test]
    fn symmetric_at_one_half() {
        for k in [0.1, 0.37, 1.0] {
            let r = plan_sinc(0.5, k).unwrap();
            assert_eq!(r.k_minus, r.k_plus);
            assert!(r.nodes.iter().all(|n| n.shift() > 0.0 && r.weight(n) > 0.0));
        }
    }

    #[test]
    fn plan_rejects_bad_input() {
        assert!(plan_sinc(0.0, 0.5).is_err());
        assert!(plan_sinc(1.0, 0.5).is_err());
        assert!(plan_sinc(0.5, 0.0).is_err());
        assert!(default_step(0.5, 1.0).is_err());
    }

    #[test]
    fn scalar_rule_approximates_power() {
        let r = plan_sinc(0.3, 0.2).unwrap();
        for x in [1.0, 10.0, 1e3, 1e5] {
            let err = (r.eval(x) - x.powf(-0.3)).abs();
            assert!(err < 10.0 * quadrature_error_scale(0.2), "x={x}: {err}");
        }
    }

    #[test]
    fn exponent_split() {
        let g = FracExponent::new(1.5).unwrap();
        assert_eq!((g.integer(), g.remainder()), (1, 0.5));
        let g = FracExponent::new(2.0).unwrap();
        assert_eq!((g.integer(), g.remainder()), (2, 0.0));
        let g = FracExponent::new(0.75).unwrap();
        assert_eq!((g.integer(), g.remainder()), (0, 0.75));
        assert!(FracExponent::new(0.0).is_err());
        assert!(FracExponent::new(2.5).is_err());
    }

    #[test]
    fn resolvent_edge_cases() {
        let o = ops("interval", 0.125, 1.0);
        let n = o.num_dofs();
        assert!(apply_resolvent(&o, 0.0, &vec![0.0; n]).unwrap().iter().all(|&x| x == 0.0));
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let x = apply_resolvent(&o, 0.0, &b).unwrap();
        let back = o.mass().mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
        assert!(apply_resolvent(&o, -1.0, &b).is_err());
        assert!(apply_resolvent(&o, 1.0, &b[1..]).is_err());
    }

    #[test]
    fn integer_exponent_is_exact_solve() {
        let o = ops("tadpole", 0.25, 1.0);
        let b: Vec<f64> = (0..o.num_dofs()).map(|i| (i as f64).cos()).collect();
        let c = apply_fractional_inverse(&o, FracExponent::new(1.0).unwrap(), &b, 0.3).unwrap();
        let kc = o.stiffness().mul_vec(&c);
        for (u, v) in kc.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_zero_power_and_single_mode() {
        let o = ops("star4", 0.25, 1.0);
        let n = o.num_dofs();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let c = fractional_eigen_oracle(&o, 0.0, &b).unwrap();
        let mc = o.mass().mul_vec(&c);
        for (u, v) in mc.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
        let es = dense_pencil_eigs(o.stiffness(), o.mass()).unwrap();
        let e1 = es.vector(0);
        let b = o.mass().mul_vec(e1.as_slice());
        let c = fractional_eigen_oracle(&o, 0.7, &b).unwrap();
        let scale = es.values[0].powf(-0.7);
        for (u, v) in c.iter().zip(e1.iter()) {
            assert!((u - scale * v).abs() < 1e-10);
        }
    }

    #[test]
    fn far_nodes_do_not_overflow() {
        // y_l reaches about 2 * 6170 * 0.2, far beyond exp overflow
        let rule = plan_sinc(0.99, 0.2).unwrap();
        assert!(rule.nodes.last().unwrap().shift().is_infinite());
        for x in [1.0, 7.5, 300.0] {
            let q = rule.eval(x);
            assert!((q * x.powf(0.99) - 1.0).abs() < 1e-6, "{x}: {q}");
        }
        let o = ops("interval", 0.25, 1.0);
        let b = vec![1.0; o.num_dofs()];
        let u = ResolventSolver::new(&o).apply_sinc(&rule, &[b.clone()]).unwrap().pop().unwrap();
        let exact = fractional_eigen_oracle(&o, 0.99, &b).unwrap();
        for (a, e) in u.iter().zip(&exact) {
            assert!(a.is_finite() && (a - e).abs() < 1e-6 * e.abs(), "{a} vs {e}");
        }
    }
}
