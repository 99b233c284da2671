//! Convergence studies on dyadic mesh hierarchies with an overkill reference.
//!
//! Level `l` uses maximal element length `2^-l`. Coarse solutions are
//! compared with the overkill solution after nodal prolongation, and the
//! noise on a coarse level is the restriction `A W_ok` of the overkill noise,
//! `A_ij = phi_i(s_j)` with `s_j` the overkill nodes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{load_vector, CoefficientField, OperatorPair, Polynomial};
use crate::fractional::{ensure_wellposed, FracExponent, ResolventSolver};
use crate::graph::MetricGraph;
use crate::mesh::{Mesh, Transfer};
use crate::spectral::{dense_pencil_eigs, EigenSystem, DENSE_LIMIT};
use crate::whittle_matern::{
    covariance_from_eigensystem, covariance_l2_error, resolve_step, CovarianceMode, NoiseSampler,
};

pub const DEFAULT_REPLICATES: usize = 10;
pub const DEFAULT_OVERKILL_OFFSET: u32 = 4;

/// Quadrature step used on each mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `k = -1 / (beta ln h)` for the mesh at hand.
    Default,
    Fixed(f64),
}

impl StepRule {
    fn step(self) -> Option<f64> {
        match self {
            StepRule::Default => None,
            StepRule::Fixed(k) => Some(k),
        }
    }
}

/// Right-hand side of the deterministic study.
#[derive(Debug, Clone, PartialEq)]
pub enum Forcing {
    Zero,
    /// `cos(2 pi t / l_e)` on each edge; continuous across vertices.
    Cosine,
    /// The same polynomial in arc length on every edge.
    Polynomial(Polynomial),
    /// One fixed white-noise realization, draw 0 under `seed`.
    Noise { seed: u64 },
}

impl std::str::FromStr for Forcing {
    type Err = Error;

    /// `zero`, `cos`, `noise[:seed]`, a number, or comma separated
    /// polynomial coefficients `c0,c1,...` (brackets optional).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "zero" => return Ok(Forcing::Zero),
            "cos" | "cosine" => return Ok(Forcing::Cosine),
            "noise" => return Ok(Forcing::Noise { seed: 0 }),
            _ => {}
        }
        if let Some(seed) = s.strip_prefix("noise:") {
            let seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad noise seed in `{s}`")))?;
            return Ok(Forcing::Noise { seed });
        }
        let coeffs = crate::config::parse_number_list(s)?;
        Ok(Forcing::Polynomial(Polynomial::new(&coeffs)?))
    }
}

impl Forcing {
    fn eval(&self, graph: &MetricGraph, edge: usize, t: f64) -> f64 {
        match self {
            Forcing::Zero | Forcing::Noise { .. } => 0.0,
            Forcing::Cosine => (2.0 * std::f64::consts::PI * t / graph.edge(edge).length).cos(),
            Forcing::Polynomial(p) => p.eval(t),
        }
    }

    /// Dual vector `(f, phi_i)` on `mesh`.
    pub fn load(&self, mesh: &Mesh) -> Vec<f64> {
        let graph = mesh.graph().clone();
        load_vector(mesh, &|e, t| self.eval(&graph, e, t))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub graph: Arc<MetricGraph>,
    pub coefficients: CoefficientField,
    pub alpha: f64,
    pub betas: Vec<f64>,
    pub level_lo: u32,
    pub level_hi: u32,
    /// Defaults to `level_hi + 4`.
    pub overkill_level: Option<u32>,
    pub replicates: usize,
    pub seed: u64,
    pub step: StepRule,
    pub forcing: Forcing,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(graph: Arc<MetricGraph>) -> Self {
        Self {
            graph,
            coefficients: CoefficientField::default(),
            alpha: 1.0,
            betas: vec![0.375, 0.5, 0.625, 0.75, 0.875],
            level_lo: 3,
            level_hi: 6,
            overkill_level: None,
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            step: StepRule::Default,
            forcing: Forcing::Cosine,
            output: None,
        }
    }

    pub fn overkill(&self) -> u32 {
        self.overkill_level
            .unwrap_or(self.level_hi + DEFAULT_OVERKILL_OFFSET)
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> {
        self.level_lo..=self.level_hi
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.betas.is_empty() {
            return bad("at least one beta is required".into());
        }
        if let Some(b) = self.betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return bad(format!("beta must be positive, got {b}"));
        }
        if self.level_hi <= self.level_lo {
            return bad(format!(
                "a rate fit needs at least two levels, got {}..{}",
                self.level_lo, self.level_hi
            ));
        }
        if self.overkill() <= self.level_hi {
            return bad(format!(
                "overkill level {} must exceed the finest level {}",
                self.overkill(),
                self.level_hi
            ));
        }
        if self.overkill() > 30 {
            return bad(format!("overkill level {} is too fine", self.overkill()));
        }
        if self.replicates == 0 {
            return bad("at least one replicate is required".into());
        }
        if let StepRule::Fixed(k) = self.step {
            if !(k > 0.0 && k.is_finite()) {
                return bad(format!("quadrature step must be positive, got {k}"));
            }
        }
        self.coefficients.check_edges(&self.graph)
    }

    fn operator(&self, level: u32) -> Result<OperatorPair> {
        let mesh = Mesh::build(self.graph.clone(), level_step(level))?;
        OperatorPair::assemble(Arc::new(mesh), self.coefficients.clone(), self.alpha)
    }
}

pub fn level_step(level: u32) -> f64 {
    (-(level as f64)).exp2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelError {
    pub level: u32,
    pub h: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub beta: f64,
    pub errors: Vec<LevelError>,
    /// `None` when some error is exactly zero.
    pub constant: Option<f64>,
    pub fitted: Option<f64>,
    pub theoretical: f64,
}

impl RateRow {
    fn new(beta: f64, errors: Vec<LevelError>, theoretical: f64) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = errors.iter().map(|e| (e.h, e.error)).collect();
        let fit = if errors.iter().all(|e| e.error > 0.0) {
            Some(fit_rate(&pairs)?)
        } else {
            None
        };
        Ok(Self {
            beta,
            errors,
            constant: fit.map(|f| f.0),
            fitted: fit.map(|f| f.1),
            theoretical,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

impl RateTable {
    /// `beta,level,h,error`
    pub fn errors_csv(&self) -> String {
        let mut s = String::from("beta,level,h,error\n");
        for row in &self.rows {
            for e in &row.errors {
                let _ = writeln!(s, "{},{},{},{}", row.beta, e.level, e.h, e.error);
            }
        }
        s
    }

    /// `beta,fitted,theoretical`
    pub fn rates_csv(&self) -> String {
        let mut s = String::from("beta,fitted,theoretical\n");
        for row in &self.rows {
            let fitted = row.fitted.map_or_else(|| "nan".to_string(), |r| r.to_string());
            let _ = writeln!(s, "{},{},{}", row.beta, fitted, row.theoretical);
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>_rates.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let errors = dir.join(format!("{stem}.csv"));
        let rates = dir.join(format!("{stem}_rates.csv"));
        std::fs::write(&errors, self.errors_csv())?;
        std::fs::write(&rates, self.rates_csv())?;
        Ok((errors, rates))
    }
}

/// Ordinary least squares fit of `ln err = c + r ln h`; returns `(c, r)`.
pub fn fit_rate(pairs: &[(f64, f64)]) -> Result<(f64, f64)> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a rate fit needs at least two points, got {}",
            pairs.len()
        )));
    }
    if let Some(p) = pairs
        .iter()
        .find(|(h, e)| !(*h > 0.0 && *e > 0.0 && h.is_finite() && e.is_finite()))
    {
        return Err(Error::InvalidArgument(format!(
            "rate fit needs positive finite values, got {p:?}"
        )));
    }
    let n = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate fit needs distinct mesh sizes".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let r = sxy / sxx;
    Ok((my - r * mx, r))
}

pub fn strong_rate(beta: f64) -> f64 {
    (2.0 * beta - 0.5).min(2.0)
}

pub fn covariance_rate(beta: f64) -> f64 {
    (4.0 * beta - 0.5).min(2.0)
}

/// Root mean square `L2` distance between overkill and prolongated coarse
/// fields driven by the same noise, for each beta and level.
pub fn run_strong_convergence(cfg: &ExperimentConfig) -> Result<RateTable> {
    cfg.validate()?;
    if let Some(b) = cfg.betas.iter().find(|b| !(**b > 0.25 && **b <= 2.0)) {
        return Err(Error::InvalidArgument(format!(
            "strong convergence needs 1/4 < beta <= 2, got {b}"
        )));
    }
    let fine = cfg.operator(cfg.overkill())?;
    ensure_wellposed(&fine)?;
    let noise = overkill_noise(cfg, &fine)?;
    let coarse: Vec<(u32, OperatorPair, Transfer)> = cfg
        .levels()
        .map(|l| {
            let ops = cfg.operator(l)?;
            let transfer = Transfer::new(ops.mesh(), fine.mesh())?;
            Ok((l, ops, transfer))
        })
        .collect::<Result<_>>()?;

    let rows = cfg
        .betas
        .par_iter()
        .map(|&beta| {
            let gamma = FracExponent::new(beta)?;
            let step = resolve_step(beta, fine.mesh(), cfg.step.step())?;
            let reference = ResolventSolver::new(&fine).apply_fractional_inverse(gamma, &noise, step)?;
            let mut errors = Vec::new();
            for (level, ops, transfer) in &coarse {
                let rhs = restrict_all(transfer, &noise)?;
                let step = resolve_step(beta, ops.mesh(), cfg.step.step())?;
                let approx = ResolventSolver::new(ops).apply_fractional_inverse(gamma, &rhs, step)?;
                let mut sum = 0.0;
                for (u_ok, u_h) in reference.iter().zip(&approx) {
                    sum += mass_norm_sq(&fine, u_ok, &transfer.prolongate(u_h)?);
                }
                errors.push(LevelError {
                    level: *level,
                    h: ops.mesh().max_step(),
                    error: (sum / noise.len() as f64).sqrt(),
                });
            }
            RateRow::new(beta, errors, strong_rate(beta))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateTable { rows })
}

fn overkill_noise(cfg: &ExperimentConfig, fine: &OperatorPair) -> Result<Vec<Vec<f64>>> {
    Ok(NoiseSampler::new(fine.mass(), cfg.seed)?
        .draws(0, cfg.replicates)
        .into_iter()
        .map(|w| w.values)
        .collect())
}

fn restrict_all(transfer: &Transfer, noise: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    noise.iter().map(|w| transfer.restrict(w)).collect()
}

/// The overkill noise replicates of the strong study and the right-hand
/// sides they induce on `level`.
pub fn coupled_noise(cfg: &ExperimentConfig, level: u32) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    cfg.validate()?;
    let fine = cfg.operator(cfg.overkill())?;
    let coarse = cfg.operator(level)?;
    let noise = overkill_noise(cfg, &fine)?;
    let restricted = restrict_all(&Transfer::new(coarse.mesh(), fine.mesh())?, &noise)?;
    Ok((noise, restricted))
}

fn mass_norm_sq(ops: &OperatorPair, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    ops.mass().bilinear(&d, &d)
}

fn dense_eigs(ops: &OperatorPair) -> Result<EigenSystem> {
    if ops.num_dofs() > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            size: ops.num_dofs(),
            limit: DENSE_LIMIT,
        });
    }
    dense_pencil_eigs(ops.stiffness(), ops.mass())
}

/// `L2(Γ×Γ)` distance between the sinc covariance on each coarse level,
/// expressed at the overkill nodes, and the exact-spectrum covariance on the
/// overkill mesh.
pub fn run_covariance_convergence(cfg: &ExperimentConfig) -> Result<RateTable> {
    cfg.validate()?;
    if let Some(b) = cfg.betas.iter().find(|b| **b > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sinc covariance needs beta <= 1, got {b}"
        )));
    }
    let fine = cfg.operator(cfg.overkill())?;
    ensure_wellposed(&fine)?;
    let fine_es = dense_eigs(&fine)?;
    let coarse: Vec<(u32, OperatorPair, Transfer, EigenSystem)> = cfg
        .levels()
        .map(|l| {
            let ops = cfg.operator(l)?;
            let transfer = Transfer::new(ops.mesh(), fine.mesh())?;
            let es = dense_eigs(&ops)?;
            Ok((l, ops, transfer, es))
        })
        .collect::<Result<_>>()?;

    let rows = cfg
        .betas
        .par_iter()
        .map(|&beta| {
            let reference =
                covariance_from_eigensystem(fine.mesh(), &fine_es, beta, CovarianceMode::Eigen, None)?;
            let mut errors = Vec::new();
            for (level, ops, transfer, es) in &coarse {
                let approx = covariance_from_eigensystem(
                    ops.mesh(),
                    es,
                    beta,
                    CovarianceMode::Sinc,
                    cfg.step.step(),
                )?
                .prolongate(transfer, fine.mesh())?;
                errors.push(LevelError {
                    level: *level,
                    h: ops.mesh().max_step(),
                    error: covariance_l2_error(&reference, &approx)?,
                });
            }
            RateRow::new(beta, errors, covariance_rate(beta))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateTable { rows })
}

/// `L2` error of `L_h^{-beta} f` against the overkill solution. Smooth
/// forcings are assigned theoretical rate 2, noise forcing the strong rate.
pub fn run_deterministic_convergence(cfg: &ExperimentConfig) -> Result<RateTable> {
    cfg.validate()?;
    if let Some(b) = cfg.betas.iter().find(|b| **b > 2.0) {
        return Err(Error::InvalidArgument(format!(
            "fractional exponent must be at most 2, got {b}"
        )));
    }
    let fine = cfg.operator(cfg.overkill())?;
    ensure_wellposed(&fine)?;
    let fine_rhs = match cfg.forcing {
        Forcing::Noise { seed } => NoiseSampler::new(fine.mass(), seed)?.draw(0).values,
        _ => cfg.forcing.load(fine.mesh()),
    };
    let coarse: Vec<(u32, OperatorPair, Transfer, Vec<f64>)> = cfg
        .levels()
        .map(|l| {
            let ops = cfg.operator(l)?;
            let transfer = Transfer::new(ops.mesh(), fine.mesh())?;
            let rhs = match cfg.forcing {
                Forcing::Noise { .. } => transfer.restrict(&fine_rhs)?,
                _ => cfg.forcing.load(ops.mesh()),
            };
            Ok((l, ops, transfer, rhs))
        })
        .collect::<Result<_>>()?;

    let rows = cfg
        .betas
        .par_iter()
        .map(|&beta| {
            let gamma = FracExponent::new(beta)?;
            let step = resolve_step(beta, fine.mesh(), cfg.step.step())?;
            let reference = ResolventSolver::new(&fine)
                .apply_fractional_inverse(gamma, std::slice::from_ref(&fine_rhs), step)?
                .pop()
                .expect("one right-hand side");
            let mut errors = Vec::new();
            for (level, ops, transfer, rhs) in &coarse {
                let step = resolve_step(beta, ops.mesh(), cfg.step.step())?;
                let u = ResolventSolver::new(ops)
                    .apply_fractional_inverse(gamma, std::slice::from_ref(rhs), step)?
                    .pop()
                    .expect("one right-hand side");
                let e = mass_norm_sq(&fine, &reference, &transfer.prolongate(&u)?);
                errors.push(LevelError {
                    level: *level,
                    h: ops.mesh().max_step(),
                    error: e.sqrt(),
                });
            }
            let theoretical = match cfg.forcing {
                Forcing::Noise { .. } => strong_rate(beta),
                _ => 2.0,
            };
            RateRow::new(beta, errors, theoretical)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(name: &str) -> ExperimentConfig {
        ExperimentConfig::new(Arc::new(MetricGraph::builtin(name).unwrap()))
    }

    #[test]
    fn exact_power_law() {
        let pairs: Vec<_> = [0.5f64, 0.25, 0.125].iter().map(|h| (*h, h * h)).collect();
        let (c, r) = fit_rate(&pairs).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn two_point_slope() {
        let (_, r) = fit_rate(&[(0.1, 3.0), (0.05, 1.5)]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_synthetic_fit() {
        // deterministic +-1% perturbations
        let noise = [0.01, -0.01, 0.007, -0.004, 0.0];
        let pairs: Vec<_> = (3..8)
            .zip(noise)
            .map(|(l, n)| {
                let h = level_step(l);
                (h, 0.7 * h.powf(1.25) * (1.0 + n))
            })
            .collect();
        let (_, r) = fit_rate(&pairs).unwrap();
        assert!((r - 1.25).abs() < 0.05, "{r}");
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit_rate(&[(0.5, 1.0)]).is_err());
        assert!(fit_rate(&[(0.5, 1.0), (0.25, 0.0)]).is_err());
        assert!(fit_rate(&[(-0.5, 1.0), (0.25, 1.0)]).is_err());
        assert!(fit_rate(&[(0.5, 1.0), (0.5, 2.0)]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = cfg("interval");
        assert!(c.validate().is_ok());
        assert_eq!(c.overkill(), 10);
        c.overkill_level = Some(6);
        assert!(c.validate().is_err());
        c.overkill_level = None;
        c.replicates = 0;
        assert!(c.validate().is_err());
        c.replicates = 1;
        c.level_hi = c.level_lo;
        assert!(c.validate().is_err());
        c.level_hi = 5;
        c.betas.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_forcing_gives_zero_error() {
        let mut c = cfg("tadpole");
        c.betas = vec![1.0, 0.6];
        c.level_lo = 2;
        c.level_hi = 4;
        c.overkill_level = Some(6);
        c.forcing = Forcing::Zero;
        let t = run_deterministic_convergence(&c).unwrap();
        for row in &t.rows {
            assert!(row.errors.iter().all(|e| e.error == 0.0));
            assert_eq!(row.fitted, None);
        }
        assert!(t.rates_csv().contains("nan"));
    }

    #[test]
    fn smooth_forcing_second_order() {
        let mut c = cfg("interval");
        c.betas = vec![1.0];
        c.level_lo = 3;
        c.level_hi = 6;
        let t = run_deterministic_convergence(&c).unwrap();
        let r = t.rows[0].fitted.unwrap();
        assert!((r - 2.0).abs() < 0.2, "{r}");
    }

    #[test]
    fn forcing_parsing() {
        assert_eq!("zero".parse::<Forcing>().unwrap(), Forcing::Zero);
        assert_eq!("cos".parse::<Forcing>().unwrap(), Forcing::Cosine);
        assert_eq!("noise:7".parse::<Forcing>().unwrap(), Forcing::Noise { seed: 7 });
        assert_eq!(
            "[1, 0, 2]".parse::<Forcing>().unwrap(),
            Forcing::Polynomial(Polynomial::new(&[1.0, 0.0, 2.0]).unwrap())
        );
        assert!("banana".parse::<Forcing>().is_err());
    }

    #[test]
    fn csv_schema() {
        let t = RateTable {
            rows: vec![RateRow::new(
                0.5,
                vec![
                    LevelError { level: 1, h: 0.5, error: 0.25 },
                    LevelError { level: 2, h: 0.25, error: 0.0625 },
                ],
                2.0,
            )
            .unwrap()],
        };
        assert_eq!(t.errors_csv(), "beta,level,h,error\n0.5,1,0.5,0.25\n0.5,2,0.25,0.0625\n");
        assert_eq!(t.rates_csv(), "beta,fitted,theoretical\n0.5,2,2\n");
    }
}
