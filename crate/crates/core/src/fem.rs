//! Piecewise-linear finite elements for the bilinear form
//!
//! ```text
//! h_alpha(f, g) = (kappa^2 f, g) + sum_e ∫_e H f' g' + sum_v alpha/d_v <F_f(v), F_g(v)>
//! ```
//!
//! For continuous hat functions every component of `F_f(v)` equals `f(v)`, so
//! the vertex sum collapses to `alpha * f(v) g(v)`: the stiffness matrix is
//! the `alpha = 0` matrix plus `alpha` on every vertex diagonal entry.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{Edge, MetricGraph};
use crate::mesh::{Element, Mesh};
use crate::sparse::{CholeskyFactor, CsrMatrix};

/// Three-point Gauss–Legendre rule on [-1, 1].
pub(crate) const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// Quadrature points `(x, weight)` mapped onto an element.
pub(crate) fn element_quadrature(el: &Element) -> [(f64, f64); 3] {
    GAUSS3.map(|(xi, w)| (el.start + 0.5 * el.length * (1.0 + xi), 0.5 * el.length * w))
}

/// Polynomial of degree at most three in the arc-length parameter of an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Polynomial {
    coeffs: [f64; 4],
}

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Self {
            coeffs: [c, 0.0, 0.0, 0.0],
        }
    }

    pub fn new(coeffs: &[f64]) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > 4 {
            return Err(Error::InvalidArgument(format!(
                "polynomial needs 1 to 4 coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite polynomial coefficient".into()));
        }
        let mut c = [0.0; 4];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(Self { coeffs: c })
    }

    pub fn coeffs(&self) -> &[f64; 4] {
        &self.coeffs
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs[1..].iter().all(|&c| c == 0.0)
    }

    /// Exact minimum over `[0, length]` (endpoints and critical points).
    pub fn min_on(&self, length: f64) -> f64 {
        let [_, c1, c2, c3] = self.coeffs;
        let mut candidates = vec![0.0, length];
        // roots of c1 + 2 c2 t + 3 c3 t^2
        let (a, b, c) = (3.0 * c3, 2.0 * c2, c1);
        if a != 0.0 {
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                candidates.push((-b + sq) / (2.0 * a));
                candidates.push((-b - sq) / (2.0 * a));
            }
        } else if b != 0.0 {
            candidates.push(-c / b);
        }
        candidates
            .into_iter()
            .filter(|t| (0.0..=length).contains(t))
            .map(|t| self.eval(t))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Per-edge polynomial coefficients `kappa^2(t)` and `H(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    kappa2: Polynomial,
    h: Polynomial,
    kappa2_edges: BTreeMap<u64, Polynomial>,
    h_edges: BTreeMap<u64, Polynomial>,
}

impl Default for CoefficientField {
    fn default() -> Self {
        Self::constant(1.0, 1.0)
    }
}

impl CoefficientField {
    pub fn constant(kappa2: f64, h: f64) -> Self {
        Self::new(Polynomial::constant(kappa2), Polynomial::constant(h))
    }

    pub fn new(kappa2: Polynomial, h: Polynomial) -> Self {
        Self {
            kappa2,
            h,
            kappa2_edges: BTreeMap::new(),
            h_edges: BTreeMap::new(),
        }
    }

    /// Overrides `kappa^2` on the edge with the given id.
    pub fn with_edge_kappa2(mut self, edge_id: u64, p: Polynomial) -> Self {
        self.kappa2_edges.insert(edge_id, p);
        self
    }

    pub fn with_edge_h(mut self, edge_id: u64, p: Polynomial) -> Self {
        self.h_edges.insert(edge_id, p);
        self
    }

    pub fn kappa2_on(&self, edge: &Edge) -> &Polynomial {
        self.kappa2_edges.get(&edge.id).unwrap_or(&self.kappa2)
    }

    pub fn h_on(&self, edge: &Edge) -> &Polynomial {
        self.h_edges.get(&edge.id).unwrap_or(&self.h)
    }

    /// Constant `kappa^2` if the field is spatially constant.
    pub fn constant_kappa2(&self) -> Option<f64> {
        (self.kappa2_edges.is_empty() && self.kappa2.is_constant()).then(|| self.kappa2.coeffs[0])
    }

    pub fn check_edges(&self, graph: &MetricGraph) -> Result<()> {
        for id in self.kappa2_edges.keys().chain(self.h_edges.keys()) {
            graph.edge_index(*id)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellposednessReport {
    /// `|alpha| / d_0` with `d_0` the minimal vertex degree.
    pub s: f64,
    pub kappa0_sq: f64,
    pub h0: f64,
    pub l_min: f64,
    pub l_max: f64,
    /// `kappa_0^2 > 4 S / l_min` and `2 S l_max <= H_0`.
    pub assumption1_holds: bool,
    /// `alpha >= 0`.
    pub assumption1alt_holds: bool,
}

impl WellposednessReport {
    pub fn passes(&self) -> bool {
        self.assumption1_holds || self.assumption1alt_holds
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0_sq.max(0.0).sqrt()
    }
}

pub fn check_wellposedness(
    graph: &MetricGraph,
    coeffs: &CoefficientField,
    alpha: f64,
) -> WellposednessReport {
    let kappa0_sq = graph
        .edges()
        .iter()
        .map(|e| coeffs.kappa2_on(e).min_on(e.length))
        .fold(f64::INFINITY, f64::min);
    let h0 = graph
        .edges()
        .iter()
        .map(|e| coeffs.h_on(e).min_on(e.length))
        .fold(f64::INFINITY, f64::min);
    let s = alpha.abs() / graph.min_degree() as f64;
    let l_min = graph.min_edge_length();
    let l_max = graph.max_edge_length();
    let positive = kappa0_sq > 0.0 && h0 > 0.0;
    WellposednessReport {
        s,
        kappa0_sq,
        h0,
        l_min,
        l_max,
        assumption1_holds: positive && kappa0_sq > 4.0 * s / l_min && 2.0 * s * l_max <= h0,
        assumption1alt_holds: positive && alpha >= 0.0,
    }
}

/// Element-level integrals for a single segment, before scattering.
struct ElementMatrices {
    mass: [[f64; 2]; 2],
    stiffness: [[f64; 2]; 2],
}

fn element_matrices(
    mesh: &Mesh,
    el: &Element,
    coeffs: Option<&CoefficientField>,
    check_positive: bool,
) -> Result<ElementMatrices> {
    let mut mass = [[0.0; 2]; 2];
    let mut stiffness = [[0.0; 2]; 2];
    let edge = mesh.graph().edge(el.edge);
    let dphi = [-1.0 / el.length, 1.0 / el.length];
    for (x, w) in element_quadrature(el) {
        let s = (x - el.start) / el.length;
        let phi = [1.0 - s, s];
        let (k2, hx) = match coeffs {
            Some(c) => (c.kappa2_on(edge).eval(x), c.h_on(edge).eval(x)),
            None => (0.0, 0.0),
        };
        if check_positive {
            for (name, value) in [("kappa^2", k2), ("H", hx)] {
                if !(value > 0.0) {
                    return Err(Error::NonPositiveCoefficient {
                        name,
                        edge: edge.id,
                        t: x,
                        value,
                    });
                }
            }
        }
        for p in 0..2 {
            for q in p..2 {
                let m = w * phi[p] * phi[q];
                let k = w * (k2 * phi[p] * phi[q] + hx * dphi[p] * dphi[q]);
                mass[p][q] += m;
                stiffness[p][q] += k;
            }
        }
    }
    mass[1][0] = mass[0][1];
    stiffness[1][0] = stiffness[0][1];
    Ok(ElementMatrices { mass, stiffness })
}

fn scatter(triplets: &mut Vec<(usize, usize, f64)>, dofs: [usize; 2], local: &[[f64; 2]; 2]) {
    for p in 0..2 {
        for q in 0..2 {
            triplets.push((dofs[p], dofs[q], local[p][q]));
        }
    }
}

/// Gram matrix of the hat basis, `M_ij = (phi_i, phi_j)`.
pub fn assemble_mass(mesh: &Mesh) -> CsrMatrix {
    let mut triplets = Vec::with_capacity(4 * mesh.num_elements());
    for el in mesh.elements() {
        let local = element_matrices(mesh, &el, None, false).expect("no coefficient check");
        scatter(&mut triplets, el.dofs, &local.mass);
    }
    CsrMatrix::from_triplets(mesh.num_dofs(), &triplets)
}

/// Matrix of `h_alpha` on the hat basis. Fails if `kappa^2` or `H` is not
/// strictly positive at some quadrature point.
pub fn assemble_stiffness(mesh: &Mesh, coeffs: &CoefficientField, alpha: f64) -> Result<CsrMatrix> {
    stiffness_impl(mesh, coeffs, alpha, true)
}

/// As [`assemble_stiffness`] but without the positivity check. Only meant for
/// tests that need degenerate coefficients (e.g. `kappa^2 = 0`).
#[doc(hidden)]
pub fn assemble_stiffness_unchecked(mesh: &Mesh, coeffs: &CoefficientField, alpha: f64) -> CsrMatrix {
    stiffness_impl(mesh, coeffs, alpha, false).expect("unchecked assembly cannot fail")
}

fn stiffness_impl(
    mesh: &Mesh,
    coeffs: &CoefficientField,
    alpha: f64,
    check: bool,
) -> Result<CsrMatrix> {
    coeffs.check_edges(mesh.graph())?;
    let mut triplets = Vec::with_capacity(4 * mesh.num_elements());
    for el in mesh.elements() {
        let local = element_matrices(mesh, &el, Some(coeffs), check)?;
        scatter(&mut triplets, el.dofs, &local.stiffness);
    }
    let mut k = CsrMatrix::from_triplets(mesh.num_dofs(), &triplets);
    if alpha != 0.0 {
        let vertices: Vec<usize> = (0..mesh.graph().num_vertices()).collect();
        k.add_to_diagonal(&vertices, alpha);
    }
    Ok(k)
}

/// Mass and stiffness matrices of one discretization.
#[derive(Debug, Clone)]
pub struct OperatorPair {
    mesh: Arc<Mesh>,
    coeffs: CoefficientField,
    alpha: f64,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
}

impl OperatorPair {
    pub fn assemble(mesh: Arc<Mesh>, coeffs: CoefficientField, alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be finite, got {alpha}")));
        }
        let mass = assemble_mass(&mesh);
        let stiffness = assemble_stiffness(&mesh, &coeffs, alpha)?;
        debug_assert!(mass.same_pattern(&stiffness));
        Ok(Self {
            mesh,
            coeffs,
            alpha,
            mass,
            stiffness,
        })
    }

    /// Same mesh and coefficients, different vertex coefficient.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::assemble(self.mesh.clone(), self.coeffs.clone(), alpha)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_dofs()
    }

    pub fn wellposedness(&self) -> WellposednessReport {
        check_wellposedness(self.mesh.graph(), &self.coeffs, self.alpha)
    }

    /// `(K, M)` with the dof of `vertex` removed: a homogeneous Dirichlet
    /// condition at that vertex.
    pub fn dirichlet_at(&self, vertex: usize) -> Result<(CsrMatrix, CsrMatrix)> {
        if vertex >= self.mesh.graph().num_vertices() {
            return Err(Error::InvalidArgument(format!("no vertex with index {vertex}")));
        }
        Ok((
            self.stiffness.remove_index(vertex),
            self.mass.remove_index(vertex),
        ))
    }
}

/// `b_i = ∫ f phi_i` via three-point Gauss on every element. `f` is called
/// with (edge index, arc length).
pub fn load_vector(mesh: &Mesh, f: &dyn Fn(usize, f64) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_dofs()];
    for el in mesh.elements() {
        for (x, w) in element_quadrature(&el) {
            let s = (x - el.start) / el.length;
            let fx = f(el.edge, x);
            b[el.dofs[0]] += w * fx * (1.0 - s);
            b[el.dofs[1]] += w * fx * s;
        }
    }
    b
}

/// Coefficients of the L2-orthogonal projection of `f` onto the hat space.
pub fn project_l2(mesh: &Mesh, mass: &CsrMatrix, f: &dyn Fn(usize, f64) -> f64) -> Result<Vec<f64>> {
    if mass.nrows() != mesh.num_dofs() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_dofs(),
            actual: mass.nrows(),
        });
    }
    let b = load_vector(mesh, f);
    Ok(CholeskyFactor::new(mass)?.solve(&b))
}
