use std::sync::Arc;

use graphfield::fem::{project_l2, CoefficientField, OperatorPair};
use graphfield::fractional::{plan_sinc, FracExponent, ResolventSolver};
use graphfield::spectral::dense_pencil_eigs;
use graphfield::{GraphPoint, Mesh, MetricGraph};
use nalgebra::DMatrix;
use proptest::prelude::*;

/// Connected graphs with 1..=5 vertices; loops and parallel edges allowed.
fn graph_strategy() -> impl Strategy<Value = Vec<(u64, u64, f64)>> {
    (1u64..=5)
        .prop_flat_map(|nv| {
            let tree = (1..nv)
                .map(|v| (0..v, 0.3f64..2.0).prop_map(move |(p, l)| (p, v, l)))
                .collect::<Vec<_>>();
            let extra = prop::collection::vec((0..nv, 0..nv, 0.3f64..2.0), if nv == 1 { 1..3 } else { 0..3 });
            (tree, extra)
        })
        .prop_map(|(mut tree, extra)| {
            tree.extend(extra);
            tree
        })
}

fn point_strategy(edges: usize) -> impl Strategy<Value = (usize, f64)> {
    (0..edges, 0.0f64..=1.0)
}

/// Vertex distances by enumerating every simple path.
fn brute_vertex_distances(g: &MetricGraph) -> Vec<Vec<f64>> {
    let n = g.num_vertices();
    let mut adj = vec![Vec::new(); n];
    for e in g.edges() {
        let (a, b) = (e.from, e.to);
        adj[a].push((b, e.length));
        adj[b].push((a, e.length));
    }
    fn walk(v: usize, len: f64, adj: &[Vec<(usize, f64)>], seen: &mut Vec<bool>, best: &mut [f64]) {
        best[v] = best[v].min(len);
        for &(w, l) in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                walk(w, len + l, adj, seen, best);
                seen[w] = false;
            }
        }
    }
    (0..n)
        .map(|s| {
            let mut best = vec![f64::INFINITY; n];
            let mut seen = vec![false; n];
            seen[s] = true;
            walk(s, 0.0, &adj, &mut seen, &mut best);
            best
        })
        .collect()
}

fn brute_distance(g: &MetricGraph, d: &[Vec<f64>], x: GraphPoint, y: GraphPoint) -> f64 {
    let ends = |p: GraphPoint| {
        let e = g.edge(p.edge);
        [
            (e.from, p.t),
            (e.to, e.length - p.t),
        ]
    };
    let mut best = f64::INFINITY;
    if x.edge == y.edge {
        best = (x.t - y.t).abs();
    }
    for (a, da) in ends(x) {
        for (b, db) in ends(y) {
            best = best.min(da + d[a][b] + db);
        }
    }
    best
}

fn operator(edges: &[(u64, u64, f64)], h: f64, kappa2: f64, alpha: f64) -> OperatorPair {
    let g = Arc::new(MetricGraph::from_edge_list(edges).unwrap());
    let mesh = Mesh::build(g, h).unwrap();
    OperatorPair::assemble(Arc::new(mesh), CoefficientField::constant(kappa2, 1.0), alpha).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn distance_matches_path_enumeration(
        edges in graph_strategy(),
        px in point_strategy(8),
        py in point_strategy(8),
        pz in point_strategy(8),
    ) {
        let g = MetricGraph::from_edge_list(&edges).unwrap();
        let pt = |(e, s): (usize, f64)| {
            let e = e % g.num_edges();
            GraphPoint { edge: e, t: s * g.edge(e).length }
        };
        let (x, y, z) = (pt(px), pt(py), pt(pz));
        let oracle = brute_vertex_distances(&g);
        let dxy = g.shortest_distance(x, y).unwrap();
        prop_assert!((dxy - brute_distance(&g, &oracle, x, y)).abs() < 1e-12);
        prop_assert!((dxy - g.shortest_distance(y, x).unwrap()).abs() < 1e-12);
        let dxz = g.shortest_distance(x, z).unwrap();
        let dzy = g.shortest_distance(z, y).unwrap();
        prop_assert!(dxy <= dxz + dzy + 1e-12);
        prop_assert_eq!(g.shortest_distance(x, x).unwrap(), 0.0);
    }

    #[test]
    fn mesh_respects_step_and_counts_dofs(edges in graph_strategy(), h in 0.05f64..0.7) {
        let g = Arc::new(MetricGraph::from_edge_list(&edges).unwrap());
        let mesh = Mesh::build(g.clone(), h).unwrap();
        let mut interior = 0;
        for (i, e) in g.edges().iter().enumerate() {
            let n = ((e.length / h).ceil() as usize).max(2);
            prop_assert_eq!(mesh.intervals(i), n);
            prop_assert!(mesh.step(i) <= h * (1.0 + 1e-12));
            interior += n - 1;
        }
        prop_assert_eq!(mesh.num_dofs(), g.num_vertices() + interior);
        prop_assert!(mesh.max_step() <= h * (1.0 + 1e-12));
    }

    #[test]
    fn stiffness_dominates_scaled_mass(
        edges in graph_strategy(),
        kappa2 in 0.1f64..5.0,
        alpha in 0.0f64..3.0,
        x in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let o = operator(&edges, 0.25, kappa2, alpha);
        prop_assert!(o.stiffness().is_symmetric());
        prop_assert!(o.mass().is_symmetric());
        let x: Vec<f64> = (0..o.num_dofs()).map(|i| x[i % x.len()] + 0.01 * i as f64).collect();
        let kx = o.stiffness().bilinear(&x, &x);
        let mx = o.mass().bilinear(&x, &x);
        prop_assert!(kx >= kappa2 * mx * (1.0 - 1e-12), "{kx} < {}", kappa2 * mx);
    }

    #[test]
    fn vertex_term_has_rank_of_vertex_set(edges in graph_strategy(), alpha in 0.1f64..4.0) {
        let o = operator(&edges, 0.3, 1.0, 0.0);
        let d = o.with_alpha(alpha).unwrap().stiffness().to_dense() - o.stiffness().to_dense();
        let rank = d.rank(1e-9 * alpha);
        prop_assert_eq!(rank, o.mesh().graph().num_vertices());
    }

    #[test]
    fn projection_reproduces_finite_element_functions(
        edges in graph_strategy(),
        c in prop::collection::vec(-2.0f64..2.0, 80),
    ) {
        let o = operator(&edges, 0.2, 1.0, 1.0);
        let mesh = o.mesh().clone();
        let c: Vec<f64> = (0..mesh.num_dofs()).map(|i| c[i % c.len()]).collect();
        let p = project_l2(&mesh, o.mass(), &|e, t| mesh.evaluate(&c, GraphPoint { edge: e, t }).unwrap()).unwrap();
        for (a, b) in p.iter().zip(&c) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn spectrum_ignores_edge_order(edges in graph_strategy(), rot in 0usize..8) {
        let mut rotated = edges.clone();
        let r = rot % rotated.len();
        rotated.rotate_left(r);
        let a = operator(&edges, 0.25, 1.5, 0.5);
        let b = operator(&rotated, 0.25, 1.5, 0.5);
        let la = dense_pencil_eigs(a.stiffness(), a.mass()).unwrap().values;
        let lb = dense_pencil_eigs(b.stiffness(), b.mass()).unwrap().values;
        prop_assert_eq!(la.len(), lb.len());
        for (x, y) in la.iter().zip(&lb) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn first_eigenvalue_bounded_by_potential(edges in graph_strategy(), kappa2 in 0.1f64..5.0, alpha in 0.0f64..2.0) {
        let o = operator(&edges, 0.25, kappa2, alpha);
        let l = dense_pencil_eigs(o.stiffness(), o.mass()).unwrap().values;
        prop_assert!(l[0] >= kappa2 * (1.0 - 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sinc_rule_acts_spectrally(beta in 0.1f64..0.9, step in 0.3f64..0.7, j in 0usize..12) {
        let o = operator(&[(0, 0, 2.0), (0, 1, 1.0)], 0.25, 1.0, 1.0);
        let es = dense_pencil_eigs(o.stiffness(), o.mass()).unwrap();
        let rule = plan_sinc(beta, step).unwrap();
        let v: Vec<f64> = es.vector(j).iter().copied().collect();
        let mv = o.mass().mul_vec(&v);
        let q = ResolventSolver::new(&o).apply_sinc(&rule, &[mv]).unwrap().pop().unwrap();
        let expect = rule.eval(es.values[j]);
        for (a, b) in q.iter().zip(&v) {
            prop_assert!((a - expect * b).abs() < 1e-9 * expect.abs().max(1e-3), "{a} vs {}", expect * b);
        }
    }

    #[test]
    fn fractional_inverse_is_symmetric_positive(gamma in 0.1f64..2.0) {
        let o = operator(&[(0, 1, 1.0), (1, 2, 0.5), (1, 3, 0.7)], 0.2, 1.0, 1.0);
        let n = o.num_dofs();
        let unit: Vec<Vec<f64>> = (0..n).map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        }).collect();
        let cols = ResolventSolver::new(&o)
            .apply_fractional_inverse(FracExponent::new(gamma).unwrap(), &unit, 0.3)
            .unwrap();
        let q = DMatrix::from_fn(n, n, |i, j| cols[j][i]);
        let asym = (&q - q.transpose()).abs().max() / q.abs().max();
        prop_assert!(asym < 1e-10, "asymmetry {asym}");
        let sym = 0.5 * (&q + q.transpose());
        prop_assert!(sym.symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn half_powers_compose_to_inverse() {
    let o = operator(&[(0, 0, 2.0), (0, 1, 1.0)], 0.1, 1.0, 1.0);
    let solver = ResolventSolver::new(&o);
    let b: Vec<f64> = (0..o.num_dofs()).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
    let half = FracExponent::new(0.5).unwrap();
    let full = solver.solve_stiffness(&b).unwrap();
    let mut errors = Vec::new();
    for step in [0.5, 0.35, 0.25] {
        let once = solver.apply_fractional_inverse(half, &[b.clone()], step).unwrap().pop().unwrap();
        let twice = solver
            .apply_fractional_inverse(half, &[o.mass().mul_vec(&once)], step)
            .unwrap()
            .pop()
            .unwrap();
        let d: Vec<f64> = twice.iter().zip(&full).map(|(a, b)| a - b).collect();
        errors.push((o.mass().bilinear(&d, &d) / o.mass().bilinear(&full, &full)).sqrt());
    }
    assert!(errors[0] < 1e-2, "{errors:?}");
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
    assert!(errors[2] < 1e-6, "{errors:?}");
}
