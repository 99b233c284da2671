//! Regular per-edge subdivisions of a metric graph with a global numbering
//! of the continuous piecewise-linear (hat) basis.
//!
//! Dof order: all vertices first (in graph vertex order), then the interior
//! nodes of each edge in edge order, from arc-length 0 towards the edge end.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{GraphPoint, MetricGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    graph: Arc<MetricGraph>,
    intervals: Vec<usize>,
    steps: Vec<f64>,
    /// Global dof of every node on each edge, `intervals[e] + 1` entries.
    edge_nodes: Vec<Vec<usize>>,
    num_dofs: usize,
    max_step: f64,
}

impl Mesh {
    /// Subdivides every edge into `max(2, ceil(l_e / max_h))` equal segments.
    pub fn build(graph: Arc<MetricGraph>, max_h: f64) -> Result<Self> {
        if !(max_h.is_finite() && max_h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "max_h must be positive and finite, got {max_h}"
            )));
        }
        let intervals: Vec<usize> = graph
            .edges()
            .iter()
            .map(|e| {
                // shave a few ulps so exact ratios like 1 / 2^-3 stay at 8
                let ratio = e.length / max_h * (1.0 - 4.0 * f64::EPSILON);
                (ratio.ceil() as usize).max(2)
            })
            .collect();
        Ok(Self::with_intervals(graph, intervals))
    }

    /// Builds a mesh with explicit per-edge interval counts (each at least 2).
    pub fn from_intervals(graph: Arc<MetricGraph>, intervals: Vec<usize>) -> Result<Self> {
        if intervals.len() != graph.num_edges() {
            return Err(Error::DimensionMismatch {
                expected: graph.num_edges(),
                actual: intervals.len(),
            });
        }
        if let Some(&n) = intervals.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidArgument(format!(
                "every edge needs at least 2 intervals, got {n}"
            )));
        }
        Ok(Self::with_intervals(graph, intervals))
    }

    fn with_intervals(graph: Arc<MetricGraph>, intervals: Vec<usize>) -> Self {
        let mut next = graph.num_vertices();
        let mut edge_nodes = Vec::with_capacity(graph.num_edges());
        let mut steps = Vec::with_capacity(graph.num_edges());
        for (edge, &n) in graph.edges().iter().zip(&intervals) {
            let mut nodes = Vec::with_capacity(n + 1);
            nodes.push(edge.from);
            nodes.extend(next..next + n - 1);
            next += n - 1;
            nodes.push(edge.to);
            edge_nodes.push(nodes);
            steps.push(edge.length / n as f64);
        }
        let max_step = steps.iter().copied().fold(0.0, f64::max);
        Self {
            graph,
            intervals,
            steps,
            edge_nodes,
            num_dofs: next,
            max_step,
        }
    }

    pub fn graph(&self) -> &Arc<MetricGraph> {
        &self.graph
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    /// The largest segment length over all edges.
    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn intervals(&self, edge: usize) -> usize {
        self.intervals[edge]
    }

    pub fn step(&self, edge: usize) -> f64 {
        self.steps[edge]
    }

    pub fn edge_nodes(&self, edge: usize) -> &[usize] {
        &self.edge_nodes[edge]
    }

    pub fn num_elements(&self) -> usize {
        self.intervals.iter().sum()
    }

    /// Iterates over all elements as `(edge, local index, left dof, right dof)`.
    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        self.edge_nodes.iter().enumerate().flat_map(move |(edge, nodes)| {
            let h = self.steps[edge];
            nodes.windows(2).enumerate().map(move |(j, pair)| Element {
                edge,
                start: j as f64 * h,
                length: h,
                dofs: [pair[0], pair[1]],
            })
        })
    }

    /// A representative location of every dof. Vertex dofs are placed at an
    /// end of the first incident edge.
    pub fn dof_locations(&self) -> Vec<GraphPoint> {
        let mut locs = vec![GraphPoint::new(usize::MAX, 0.0); self.num_dofs];
        for (edge, nodes) in self.edge_nodes.iter().enumerate().rev() {
            let h = self.steps[edge];
            for (j, &dof) in nodes.iter().enumerate() {
                let t = if j + 1 == nodes.len() {
                    self.graph.edge(edge).length
                } else {
                    j as f64 * h
                };
                locs[dof] = GraphPoint::new(edge, t);
            }
        }
        locs
    }

    /// Length measure attributed to each dof: half of every adjacent element.
    /// Equals the row sums of the mass matrix.
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.num_dofs];
        for el in self.elements() {
            w[el.dofs[0]] += 0.5 * el.length;
            w[el.dofs[1]] += 0.5 * el.length;
        }
        w
    }

    /// Nonzero basis functions at a point, as (dof, value) pairs.
    pub fn basis_at(&self, p: GraphPoint) -> Result<[(usize, f64); 2]> {
        self.graph.validate_point(p)?;
        let n = self.intervals[p.edge];
        let h = self.steps[p.edge];
        let nodes = &self.edge_nodes[p.edge];
        let r = p.t / h;
        let nearest = r.round();
        if (r - nearest).abs() < 1e-9 {
            let k = (nearest as usize).min(n);
            let other = if k == n { nodes[k - 1] } else { nodes[k + 1] };
            return Ok([(nodes[k], 1.0), (other, 0.0)]);
        }
        let j = (r.floor() as usize).min(n - 1);
        let s = ((p.t - j as f64 * h) / h).clamp(0.0, 1.0);
        Ok([(nodes[j], 1.0 - s), (nodes[j + 1], s)])
    }

    /// Evaluates the piecewise-linear field with coefficients `c` at `p`.
    pub fn evaluate(&self, c: &[f64], p: GraphPoint) -> Result<f64> {
        self.check_len(c)?;
        Ok(self.basis_at(p)?.iter().map(|&(i, w)| w * c[i]).sum())
    }

    pub(crate) fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.num_dofs {
            return Err(Error::DimensionMismatch {
                expected: self.num_dofs,
                actual: v.len(),
            });
        }
        Ok(())
    }

    /// Rows of `(edge id, t, dof)` for every mesh node along every edge, in
    /// edge order. Vertex dofs appear once per incident edge end.
    pub fn node_table(&self) -> Vec<(u64, f64, usize)> {
        let mut rows = Vec::new();
        for (edge, nodes) in self.edge_nodes.iter().enumerate() {
            let e = self.graph.edge(edge);
            let h = self.steps[edge];
            for (j, &dof) in nodes.iter().enumerate() {
                let t = if j + 1 == nodes.len() { e.length } else { j as f64 * h };
                rows.push((e.id, t, dof));
            }
        }
        rows
    }
}

/// One segment of an edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    pub edge: usize,
    /// Arc-length coordinate of the left node.
    pub start: f64,
    pub length: f64,
    pub dofs: [usize; 2],
}

/// Point-evaluation coupling between a coarse and a fine mesh on one graph:
/// `A[i][j] = phi_i(s_j)` with `phi_i` the coarse hats and `s_j` the fine
/// nodes. Stored column-wise since each fine node sees at most two coarse
/// hats.
#[derive(Debug, Clone)]
pub struct Transfer {
    coarse_dofs: usize,
    columns: Vec<[(usize, f64); 2]>,
}

impl Transfer {
    pub fn new(coarse: &Mesh, fine: &Mesh) -> Result<Self> {
        if !Arc::ptr_eq(coarse.graph(), fine.graph()) && coarse.graph() != fine.graph() {
            return Err(Error::MeshMismatch);
        }
        let columns = fine
            .dof_locations()
            .into_iter()
            .map(|p| coarse.basis_at(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            coarse_dofs: coarse.num_dofs(),
            columns,
        })
    }

    pub fn coarse_dofs(&self) -> usize {
        self.coarse_dofs
    }

    pub fn fine_dofs(&self) -> usize {
        self.columns.len()
    }

    /// `A^T c`: nodal values of the coarse field at the fine nodes.
    pub fn prolongate(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.coarse_dofs {
            return Err(Error::DimensionMismatch {
                expected: self.coarse_dofs,
                actual: c.len(),
            });
        }
        Ok(self
            .columns
            .iter()
            .map(|col| col.iter().map(|&(i, w)| w * c[i]).sum())
            .collect())
    }

    /// `A w`: maps a fine dual vector (pairings with fine hats) to pairings
    /// with coarse hats.
    pub fn restrict(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                actual: w.len(),
            });
        }
        let mut out = vec![0.0; self.coarse_dofs];
        for (col, &wj) in self.columns.iter().zip(w) {
            for &(i, a) in col {
                out[i] += a * wj;
            }
        }
        Ok(out)
    }

    /// Dense `A^T`, fine rows by coarse columns.
    pub fn prolongation_matrix(&self) -> nalgebra::DMatrix<f64> {
        let mut p = nalgebra::DMatrix::zeros(self.columns.len(), self.coarse_dofs);
        for (j, col) in self.columns.iter().enumerate() {
            for &(i, a) in col {
                p[(j, i)] += a;
            }
        }
        p
    }
}

/// Values at mesh nodes of the field interpolated by `c` on `coarse`.
pub fn prolongate(coarse: &Mesh, fine: &Mesh, c: &[f64]) -> Result<Vec<f64>> {
    Transfer::new(coarse, fine)?.prolongate(c)
}
