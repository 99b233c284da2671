//! C ABI over `graphfield`.
//!
//! Every function returns a [`GfStatus`]. On failure a message is kept per
//! thread and can be copied out with [`gf_last_error_message`]. Handles are
//! opaque and must be released with the matching `*_free` function.
//! Arrays are caller-allocated; lengths are element counts.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use graphfield::experiments::fit_rate;
use graphfield::fractional::{apply_fractional_inverse, default_step, plan_sinc, FracExponent};
use graphfield::spectral::pencil_eigs;
use graphfield::whittle_matern::{covariance_matrix, resolve_step, sample_field, CovarianceMode};
use graphfield::{CoefficientField, GraphPoint, Mesh, MetricGraph, OperatorPair, Polynomial};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    SolverFailure = 3,
    Panic = 4,
    BufferTooSmall = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GfCovarianceMode {
    Eigen = 0,
    Sinc = 1,
}

pub struct GfGraph(Arc<MetricGraph>);

pub struct GfMesh(Arc<Mesh>);

pub struct GfOperator(OperatorPair);

enum Failure {
    Null(&'static str),
    Buffer { needed: usize, got: usize },
    Core(graphfield::Error),
}

impl From<graphfield::Error> for Failure {
    fn from(e: graphfield::Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard(f: impl FnOnce() -> Outcome) -> GfStatus {
    set_error(String::new());
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GfStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            GfStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { needed, got })) => {
            set_error(format!("buffer holds {got} elements, {needed} needed"));
            GfStatus::BufferTooSmall
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            if e.is_solver_failure() {
                GfStatus::SolverFailure
            } else {
                GfStatus::InvalidArgument
            }
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GfStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize, what: &'static str) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn write<T>(p: *mut T, value: T, what: &'static str) -> Outcome {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Core(graphfield::Error::InvalidArgument(format!("{what} is not UTF-8"))))
}

fn check_len(needed: usize, got: usize) -> Outcome {
    if got < needed {
        Err(Failure::Buffer { needed, got })
    } else {
        Ok(())
    }
}

/// `step <= 0` or NaN selects the default `-1 / (beta ln h)`.
fn step_arg(step: f64) -> Option<f64> {
    (step > 0.0).then_some(step)
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating if needed. Returns the buffer size
/// that would hold the whole message.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn gf_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Builtin graph: `interval`, `loop`, `tadpole`, `star4` or `triangle`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_builtin(name: *const c_char, out: *mut *mut GfGraph) -> GfStatus {
    guard(|| {
        let g = MetricGraph::builtin(string(name, "name")?)?;
        write(out, Box::into_raw(Box::new(GfGraph(Arc::new(g)))), "out")
    })
}

/// Graph from `n` edges; edge `i` joins vertex ids `from[i]` and `to[i]`
/// and has id `i`.
///
/// # Safety
/// The arrays must hold `n` elements and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_from_edges(
    from: *const u64,
    to: *const u64,
    lengths: *const f64,
    n: usize,
    out: *mut *mut GfGraph,
) -> GfStatus {
    guard(|| {
        let (f, t, l) = (slice(from, n, "from")?, slice(to, n, "to")?, slice(lengths, n, "lengths")?);
        let edges: Vec<(u64, u64, f64)> = (0..n).map(|i| (f[i], t[i], l[i])).collect();
        let g = MetricGraph::from_edge_list(&edges)?;
        write(out, Box::into_raw(Box::new(GfGraph(Arc::new(g)))), "out")
    })
}

/// Graph from edge-list text, one `edge <id> <from> <to> <length>` per line.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_parse(text: *const c_char, out: *mut *mut GfGraph) -> GfStatus {
    guard(|| {
        let g = MetricGraph::parse(string(text, "text")?)?;
        write(out, Box::into_raw(Box::new(GfGraph(Arc::new(g)))), "out")
    })
}

/// # Safety
/// `graph` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_free(graph: *mut GfGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_size(
    graph: *const GfGraph,
    num_vertices: *mut usize,
    num_edges: *mut usize,
) -> GfStatus {
    guard(|| {
        let g = &borrow(graph, "graph")?.0;
        write(num_vertices, g.num_vertices(), "num_vertices")?;
        write(num_edges, g.num_edges(), "num_edges")
    })
}

/// Shortest-path distance between the point at arc length `t_x` on edge
/// index `edge_x` and the point `t_y` on `edge_y`.
///
/// # Safety
/// `graph` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_graph_distance(
    graph: *const GfGraph,
    edge_x: usize,
    t_x: f64,
    edge_y: usize,
    t_y: f64,
    out: *mut f64,
) -> GfStatus {
    guard(|| {
        let g = &borrow(graph, "graph")?.0;
        let d = g.shortest_distance(
            GraphPoint { edge: edge_x, t: t_x },
            GraphPoint { edge: edge_y, t: t_y },
        )?;
        write(out, d, "out")
    })
}

/// # Safety
/// `graph` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_mesh_new(graph: *const GfGraph, max_h: f64, out: *mut *mut GfMesh) -> GfStatus {
    guard(|| {
        let g = borrow(graph, "graph")?.0.clone();
        let m = Mesh::build(g, max_h)?;
        write(out, Box::into_raw(Box::new(GfMesh(Arc::new(m)))), "out")
    })
}

/// # Safety
/// `mesh` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gf_mesh_free(mesh: *mut GfMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

/// # Safety
/// `mesh` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_mesh_num_dofs(mesh: *const GfMesh, out: *mut usize) -> GfStatus {
    guard(|| write(out, borrow(mesh, "mesh")?.0.num_dofs(), "out"))
}

/// Mass and stiffness matrices for `kappa^2`, `H` given as polynomial
/// coefficients in arc length (1 to 4 each, lowest degree first, same on
/// every edge) and vertex coefficient `alpha`.
///
/// # Safety
/// `mesh` must be a live handle, the coefficient arrays must hold the given
/// number of elements and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_operator_new(
    mesh: *const GfMesh,
    kappa2: *const f64,
    kappa2_len: usize,
    big_h: *const f64,
    big_h_len: usize,
    alpha: f64,
    out: *mut *mut GfOperator,
) -> GfStatus {
    guard(|| {
        let m = borrow(mesh, "mesh")?.0.clone();
        let k = Polynomial::new(slice(kappa2, kappa2_len, "kappa2")?)?;
        let h = Polynomial::new(slice(big_h, big_h_len, "H")?)?;
        let ops = OperatorPair::assemble(m, CoefficientField::new(k, h), alpha)?;
        write(out, Box::into_raw(Box::new(GfOperator(ops))), "out")
    })
}

/// # Safety
/// `op` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gf_operator_free(op: *mut GfOperator) {
    if !op.is_null() {
        drop(Box::from_raw(op));
    }
}

/// Whether the coefficients satisfy a sufficient well-posedness condition.
///
/// # Safety
/// `op` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gf_operator_wellposed(op: *const GfOperator, out: *mut bool) -> GfStatus {
    guard(|| write(out, borrow(op, "op")?.0.wellposedness().passes(), "out"))
}

/// The `count` smallest eigenvalues in ascending order.
///
/// # Safety
/// `op` must be a live handle and `out` must hold `out_len` elements.
#[no_mangle]
pub unsafe extern "C" fn gf_operator_eigenvalues(
    op: *const GfOperator,
    count: usize,
    out: *mut f64,
    out_len: usize,
) -> GfStatus {
    guard(|| {
        let ops = &borrow(op, "op")?.0;
        check_len(count, out_len)?;
        let out = slice_mut(out, count, "out")?;
        let es = pencil_eigs(ops.stiffness(), ops.mass(), count)?;
        out.copy_from_slice(&es.values[..count]);
        Ok(())
    })
}

/// Number of sinc quadrature nodes for `0 < beta < 1` and step `k`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_sinc_node_count(beta: f64, step: f64, out: *mut usize) -> GfStatus {
    guard(|| write(out, plan_sinc(beta, step)?.len(), "out"))
}

/// `-1 / (beta ln h)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_default_step(beta: f64, max_h: f64, out: *mut f64) -> GfStatus {
    guard(|| write(out, default_step(beta, max_h)?, "out"))
}

/// Applies the approximate `L^{-gamma}`, `0 < gamma <= 2`, to the dual
/// vector `rhs`. `step <= 0` selects the default step.
///
/// # Safety
/// `op` must be a live handle; `rhs` and `out` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn gf_fractional_solve(
    op: *const GfOperator,
    gamma: f64,
    step: f64,
    rhs: *const f64,
    out: *mut f64,
    n: usize,
) -> GfStatus {
    guard(|| {
        let ops = &borrow(op, "op")?.0;
        if n != ops.num_dofs() {
            return Err(graphfield::Error::DimensionMismatch {
                expected: ops.num_dofs(),
                actual: n,
            }
            .into());
        }
        let b = slice(rhs, n, "rhs")?;
        let out = slice_mut(out, n, "out")?;
        let k = resolve_step(gamma, ops.mesh(), step_arg(step))?;
        let u = apply_fractional_inverse(ops, FracExponent::new(gamma)?, &b, k)?;
        out.copy_from_slice(&u);
        Ok(())
    })
}

/// Draws `count` field samples with noise draws `0..count` under `seed`.
/// Sample `s` occupies `out[s * dofs .. (s + 1) * dofs]`.
///
/// # Safety
/// `op` must be a live handle and `out` must hold `out_len` elements.
#[no_mangle]
pub unsafe extern "C" fn gf_sample_field(
    op: *const GfOperator,
    beta: f64,
    step: f64,
    seed: u64,
    count: usize,
    out: *mut f64,
    out_len: usize,
) -> GfStatus {
    guard(|| {
        let ops = &borrow(op, "op")?.0;
        let n = ops.num_dofs();
        check_len(count * n, out_len)?;
        let out = slice_mut(out, count * n, "out")?;
        let samples = sample_field(ops, beta, step_arg(step), seed, count)?;
        for (chunk, s) in out.chunks_mut(n.max(1)).zip(&samples) {
            chunk.copy_from_slice(&s.coefficients);
        }
        Ok(())
    })
}

/// Dense covariance matrix at the dofs, row major, `dofs * dofs` values.
///
/// # Safety
/// `op` must be a live handle and `out` must hold `out_len` elements.
#[no_mangle]
pub unsafe extern "C" fn gf_covariance(
    op: *const GfOperator,
    beta: f64,
    mode: GfCovarianceMode,
    step: f64,
    out: *mut f64,
    out_len: usize,
) -> GfStatus {
    guard(|| {
        let ops = &borrow(op, "op")?.0;
        let n = ops.num_dofs();
        check_len(n * n, out_len)?;
        let out = slice_mut(out, n * n, "out")?;
        let mode = match mode {
            GfCovarianceMode::Eigen => CovarianceMode::Eigen,
            GfCovarianceMode::Sinc => CovarianceMode::Sinc,
        };
        let c = covariance_matrix(ops, beta, mode, step_arg(step))?;
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = c.values[(i, j)];
            }
        }
        Ok(())
    })
}

/// Least squares fit of `ln err = c + r ln h`.
///
/// # Safety
/// `h` and `err` must hold `n` elements; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gf_fit_rate(
    h: *const f64,
    err: *const f64,
    n: usize,
    out_constant: *mut f64,
    out_rate: *mut f64,
) -> GfStatus {
    guard(|| {
        let (h, e) = (slice(h, n, "h")?, slice(err, n, "err")?);
        let pairs: Vec<(f64, f64)> = h.iter().copied().zip(e.iter().copied()).collect();
        let (c, r) = fit_rate(&pairs)?;
        write(out_constant, c, "out_constant")?;
        write(out_rate, r, "out_rate")
    })
}
