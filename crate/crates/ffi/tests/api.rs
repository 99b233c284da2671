use std::ffi::{c_char, CStr, CString};
use std::process::Command;
use std::ptr;

use graphfield_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let needed = unsafe { gf_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(needed <= buf.len());
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

struct Fixture {
    graph: *mut GfGraph,
    mesh: *mut GfMesh,
    op: *mut GfOperator,
    dofs: usize,
}

impl Fixture {
    fn new(name: &str, h: f64) -> Self {
        let name = CString::new(name).unwrap();
        let mut graph = ptr::null_mut();
        let mut mesh = ptr::null_mut();
        let mut op = ptr::null_mut();
        let mut dofs = 0;
        unsafe {
            assert_eq!(gf_graph_builtin(name.as_ptr(), &mut graph), GfStatus::Ok);
            assert_eq!(gf_mesh_new(graph, h, &mut mesh), GfStatus::Ok);
            assert_eq!(gf_mesh_num_dofs(mesh, &mut dofs), GfStatus::Ok);
            let (k, big_h) = ([1.0], [1.0]);
            assert_eq!(gf_operator_new(mesh, k.as_ptr(), 1, big_h.as_ptr(), 1, 1.0, &mut op), GfStatus::Ok);
        }
        Fixture { graph, mesh, op, dofs }
    }
}

impl Drop for Fixture {
    fn drop(&mut self) {
        unsafe {
            gf_operator_free(self.op);
            gf_mesh_free(self.mesh);
            gf_graph_free(self.graph);
        }
    }
}

#[test]
fn graph_queries() {
    let (from, to, len) = ([0u64, 1, 1], [1u64, 2, 3], [1.0, 0.5, 0.5]);
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(gf_graph_from_edges(from.as_ptr(), to.as_ptr(), len.as_ptr(), 3, &mut g), GfStatus::Ok);
        let (mut nv, mut ne) = (0, 0);
        assert_eq!(gf_graph_size(g, &mut nv, &mut ne), GfStatus::Ok);
        assert_eq!((nv, ne), (4, 3));
        let mut d = 0.0;
        assert_eq!(gf_graph_distance(g, 1, 0.5, 2, 0.25, &mut d), GfStatus::Ok);
        assert!((d - 0.75).abs() < 1e-15);
        gf_graph_free(g);

        let text = CString::new("edge 7 0 0 2.0\nedge 8 0 1 1.0\n").unwrap();
        assert_eq!(gf_graph_parse(text.as_ptr(), &mut g), GfStatus::Ok);
        assert_eq!(gf_graph_size(g, &mut nv, &mut ne), GfStatus::Ok);
        assert_eq!((nv, ne), (2, 2));
        gf_graph_free(g);
    }
}

#[test]
fn errors_are_reported() {
    let mut g = ptr::null_mut();
    let bad = CString::new("no-such-graph").unwrap();
    unsafe {
        assert_eq!(gf_graph_builtin(bad.as_ptr(), &mut g), GfStatus::InvalidArgument);
        assert!(g.is_null());
        assert!(last_error().contains("no-such-graph"), "{}", last_error());
        assert_eq!(gf_graph_builtin(ptr::null(), &mut g), GfStatus::NullPointer);
        assert!(last_error().contains("name"));
        let mut n = 0;
        assert_eq!(gf_mesh_num_dofs(ptr::null(), &mut n), GfStatus::NullPointer);
        let mut k = 0.0;
        assert_eq!(gf_default_step(0.5, 2.0, &mut k), GfStatus::InvalidArgument);
        // success clears the message
        assert_eq!(gf_default_step(0.5, 0.1, &mut k), GfStatus::Ok);
        assert_eq!(last_error(), "");
        gf_graph_free(ptr::null_mut());
    }
}

#[test]
fn truncated_error_message_reports_full_size() {
    let mut k = 0.0;
    unsafe {
        assert_eq!(gf_default_step(-1.0, 0.1, &mut k), GfStatus::InvalidArgument);
        let full = gf_last_error_message(ptr::null_mut(), 0);
        let mut small = [0 as c_char; 4];
        assert_eq!(gf_last_error_message(small.as_mut_ptr(), 4), full);
        assert_eq!(CStr::from_ptr(small.as_ptr()).to_bytes().len(), 3);
    }
}

#[test]
fn eigenvalues_of_interval() {
    let f = Fixture::new("interval", 1.0 / 256.0);
    let mut out = [0.0; 3];
    unsafe {
        assert_eq!(gf_operator_eigenvalues(f.op, 3, out.as_mut_ptr(), 3), GfStatus::Ok);
        assert_eq!(gf_operator_eigenvalues(f.op, 3, out.as_mut_ptr(), 2), GfStatus::BufferTooSmall);
    }
    assert!(out[0] > 1.0 && out.windows(2).all(|w| w[0] <= w[1]), "{out:?}");
    let mut ok = false;
    unsafe { assert_eq!(gf_operator_wellposed(f.op, &mut ok), GfStatus::Ok) };
    assert!(ok);
}

#[test]
fn solve_sample_and_covariance() {
    let f = Fixture::new("tadpole", 0.25);
    let n = f.dofs;
    let rhs: Vec<f64> = (0..n).map(|i| 1.0 + (i % 3) as f64).collect();
    let mut u = vec![0.0; n];
    unsafe {
        assert_eq!(gf_fractional_solve(f.op, 1.0, 0.0, rhs.as_ptr(), u.as_mut_ptr(), n), GfStatus::Ok);
        assert_eq!(
            gf_fractional_solve(f.op, 1.0, 0.0, rhs.as_ptr(), u.as_mut_ptr(), n - 1),
            GfStatus::InvalidArgument
        );
    }
    assert!(u.iter().all(|&x| x > 0.0));

    let mut a = vec![0.0; 2 * n];
    let mut b = vec![0.0; 2 * n];
    unsafe {
        assert_eq!(gf_sample_field(f.op, 0.75, 0.0, 9, 2, a.as_mut_ptr(), a.len()), GfStatus::Ok);
        assert_eq!(gf_sample_field(f.op, 0.75, 0.0, 9, 2, b.as_mut_ptr(), b.len()), GfStatus::Ok);
        assert_eq!(gf_sample_field(f.op, 0.75, 0.0, 9, 3, b.as_mut_ptr(), b.len()), GfStatus::BufferTooSmall);
    }
    assert_eq!(a, b);
    assert_ne!(a[..n], a[n..]);

    let mut eig = vec![0.0; n * n];
    let mut sinc = vec![0.0; n * n];
    unsafe {
        assert_eq!(gf_covariance(f.op, 0.75, GfCovarianceMode::Eigen, 0.0, eig.as_mut_ptr(), n * n), GfStatus::Ok);
        assert_eq!(gf_covariance(f.op, 0.75, GfCovarianceMode::Sinc, 0.1, sinc.as_mut_ptr(), n * n), GfStatus::Ok);
    }
    for i in 0..n {
        for j in 0..n {
            assert_eq!(eig[i * n + j], eig[j * n + i]);
            assert!((eig[i * n + j] - sinc[i * n + j]).abs() < 1e-3 * eig[i * n + i]);
        }
    }
}

#[test]
fn quadrature_helpers_and_rate_fit() {
    let (mut k, mut nodes) = (0.0, 0);
    unsafe {
        assert_eq!(gf_default_step(0.5, 0.125, &mut k), GfStatus::Ok);
        assert_eq!(gf_sinc_node_count(0.5, k, &mut nodes), GfStatus::Ok);
        assert_eq!(gf_sinc_node_count(1.5, k, &mut nodes), GfStatus::InvalidArgument);
    }
    assert!((k + 1.0 / (0.5 * 0.125f64.ln())).abs() < 1e-15);
    assert!(nodes > 10);

    let h = [0.5, 0.25, 0.125];
    let e: Vec<f64> = h.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
    let (mut c, mut r) = (0.0, 0.0);
    unsafe { assert_eq!(gf_fit_rate(h.as_ptr(), e.as_ptr(), 3, &mut c, &mut r), GfStatus::Ok) };
    assert!((r - 1.5).abs() < 1e-12 && (c - 3f64.ln()).abs() < 1e-12);
}

#[test]
fn header_is_valid_c() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let header = std::path::Path::new(dir).join("include/graphfield.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["gf_graph_builtin", "gf_fractional_solve", "GF_STATUS_BUFFER_TOO_SMALL", "typedef struct GfOperator"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"graphfield.h\"\nint main(void) { GfGraph *g = 0; return gf_graph_builtin(\"loop\", &g) == GF_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler, skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
