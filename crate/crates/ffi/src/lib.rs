//! C ABI for densreach.
//!
//! Objects are exposed as opaque handles ([`DrNet`], [`DrPartition`],
//! [`DrDist`]) created by `dr_*_load` / `dr_*_new` functions and released with
//! the matching `dr_*_free`. Every fallible function returns a [`DrStatus`];
//! on failure a human-readable message is available from
//! [`dr_last_error_message`] on the same thread until the next failing call.
//! Panics never cross the boundary: they are reported as
//! [`DrStatus::Internal`].
//!
//! Arrays are passed as pointer plus length; matrices are row-major.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use densreach::distribution::InitialDistribution;
use densreach::geometry::{HyperRectangle, Polyhedron};
use densreach::net::{load_checkpoint, DensityNet};
use densreach::reach::{forward_reach, query_probability, verify_density_range, ZRange};
use densreach::rpm::{EnumerateOptions, Partition};
use densreach::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument is out of range or malformed (including dimension
    /// mismatches and non-UTF-8 paths).
    InvalidArgument = 2,
    /// Reading or writing a file failed.
    Io = 3,
    /// A file or buffer could not be parsed or has an unsupported version.
    Parse = 4,
    /// A numerical failure: divergence, LP failure, exhausted cell budget or
    /// pathological truncation.
    Numeric = 5,
    /// A bug: a panic was caught at the boundary.
    Internal = 6,
}

/// Trained density network.
pub struct DrNet(DensityNet);

/// Cell partition of a network at one time slice.
pub struct DrPartition(Partition);

/// Initial-state distribution.
pub struct DrDist(InitialDistribution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DrStatus {
    match err {
        Error::Argument(_) | Error::Dimension { .. } | Error::Domain(_) => DrStatus::InvalidArgument,
        Error::Io(_) => DrStatus::Io,
        Error::Parse { .. } | Error::UnsupportedVersion { .. } => DrStatus::Parse,
        _ => DrStatus::Numeric,
    }
}

/// Failure inside a call: a status with its message.
struct Fail(DrStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(DrStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DrStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            DrStatus::Internal
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn path(ptr: *const c_char) -> Result<PathBuf, Fail> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| invalid("path is not valid UTF-8"))
}

unsafe fn get<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Fail> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = value;
    Ok(())
}

unsafe fn rect(lo: *const f64, hi: *const f64, dim: usize) -> Result<HyperRectangle, Fail> {
    let lo = slice(lo, dim, "lo")?.to_vec();
    let hi = slice(hi, dim, "hi")?.to_vec();
    Ok(HyperRectangle::new(lo, hi)?)
}

/// `{x | a·x ≤ b}` from a row-major `rows × dim` matrix.
unsafe fn polyhedron(a: *const f64, b: *const f64, rows: usize, dim: usize) -> Result<Polyhedron, Fail> {
    let a = slice(a, rows * dim, "a")?;
    let b = slice(b, rows, "b")?;
    let rows: Vec<Vec<f64>> = a.chunks(dim.max(1)).map(<[f64]>::to_vec).collect();
    Ok(Polyhedron::new(rows, b.to_vec(), dim)?)
}

/// Message of the last failing call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a network checkpoint from a JSON file.
#[no_mangle]
pub unsafe extern "C" fn dr_net_load(path_utf8: *const c_char, out: *mut *mut DrNet) -> DrStatus {
    guard(|| {
        let bytes = std::fs::read(path(path_utf8)?).map_err(Error::from)?;
        put(out, DrNet(load_checkpoint(&bytes)?))
    })
}

/// Releases a network; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dr_net_free(net: *mut DrNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// State dimension of a network (0 for null).
#[no_mangle]
pub unsafe extern "C" fn dr_net_state_dim(net: *const DrNet) -> usize {
    net.as_ref().map_or(0, |n| n.0.state_dim)
}

/// Evaluates the network at `(x0, t)`: writes `z` to `out_z` and the
/// predicted state (length `dim`) to `out_x`.
#[no_mangle]
pub unsafe extern "C" fn dr_net_eval(
    net: *const DrNet,
    x0: *const f64,
    dim: usize,
    t: f64,
    out_z: *mut f64,
    out_x: *mut f64,
) -> DrStatus {
    guard(|| {
        let net = &get(net, "net")?.0;
        if dim != net.state_dim {
            return Err(Error::Dimension {
                expected: net.state_dim,
                found: dim,
            }
            .into());
        }
        let x0 = slice(x0, dim, "x0")?;
        if out_x.is_null() {
            return Err(null("out_x"));
        }
        let y = net.output(x0, t);
        write(out_z, y[0], "out_z")?;
        std::slice::from_raw_parts_mut(out_x, dim).copy_from_slice(&y[1..]);
        Ok(())
    })
}

/// Enumerates the cells of `net` at time `t` over the box `[lo, hi]`.
/// `budget` 0 uses the default cell budget; `jobs` 0 uses all cores.
#[no_mangle]
pub unsafe extern "C" fn dr_partition_build(
    net: *const DrNet,
    t: f64,
    lo: *const f64,
    hi: *const f64,
    dim: usize,
    budget: usize,
    jobs: usize,
    out: *mut *mut DrPartition,
) -> DrStatus {
    guard(|| {
        let net = &get(net, "net")?.0;
        if !(t.is_finite() && t >= 0.0) {
            return Err(invalid("t must be a non-negative time"));
        }
        let domain = rect(lo, hi, dim)?;
        if dim != net.state_dim {
            return Err(Error::Dimension {
                expected: net.state_dim,
                found: dim,
            }
            .into());
        }
        let mut opts = EnumerateOptions {
            jobs,
            ..Default::default()
        };
        if budget > 0 {
            opts.budget = budget;
        }
        put(
            out,
            DrPartition(Partition::build(net, t, &domain.to_polyhedron(), opts)?),
        )
    })
}

/// Loads a partition cache written by the CLI or [`dr_partition_save`].
#[no_mangle]
pub unsafe extern "C" fn dr_partition_load(path_utf8: *const c_char, out: *mut *mut DrPartition) -> DrStatus {
    guard(|| {
        let bytes = std::fs::read(path(path_utf8)?).map_err(Error::from)?;
        put(out, DrPartition(Partition::from_slice(&bytes)?))
    })
}

/// Writes a partition cache as JSON.
#[no_mangle]
pub unsafe extern "C" fn dr_partition_save(part: *const DrPartition, path_utf8: *const c_char) -> DrStatus {
    guard(|| {
        let part = &get(part, "partition")?.0;
        let mut bytes = Vec::new();
        part.write_json(&mut bytes)?;
        std::fs::write(path(path_utf8)?, bytes).map_err(Error::from)?;
        Ok(())
    })
}

/// Releases a partition; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dr_partition_free(part: *mut DrPartition) {
    if !part.is_null() {
        drop(Box::from_raw(part));
    }
}

/// Number of cells (0 for null).
#[no_mangle]
pub unsafe extern "C" fn dr_partition_cell_count(part: *const DrPartition) -> usize {
    part.as_ref().map_or(0, |p| p.0.cells.len())
}

/// Time slice of a partition (NaN for null).
#[no_mangle]
pub unsafe extern "C" fn dr_partition_time(part: *const DrPartition) -> f64 {
    part.as_ref().map_or(f64::NAN, |p| p.0.t)
}

/// Uniform distribution on `[lo, hi]`.
#[no_mangle]
pub unsafe extern "C" fn dr_dist_uniform(
    lo: *const f64,
    hi: *const f64,
    dim: usize,
    out: *mut *mut DrDist,
) -> DrStatus {
    guard(|| put(out, DrDist(InitialDistribution::uniform(rect(lo, hi, dim)?)?)))
}

/// Gaussian with per-coordinate `mu` and `sigma`, truncated to `[lo, hi]`.
#[no_mangle]
pub unsafe extern "C" fn dr_dist_truncated_gaussian(
    lo: *const f64,
    hi: *const f64,
    mu: *const f64,
    sigma: *const f64,
    dim: usize,
    out: *mut *mut DrDist,
) -> DrStatus {
    guard(|| {
        let support = rect(lo, hi, dim)?;
        let mu = slice(mu, dim, "mu")?.to_vec();
        let sigma = slice(sigma, dim, "sigma")?.to_vec();
        put(
            out,
            DrDist(InitialDistribution::truncated_gaussian(support, mu, sigma)?),
        )
    })
}

/// Releases a distribution; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dr_dist_free(dist: *mut DrDist) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// Density of the distribution at `x`.
#[no_mangle]
pub unsafe extern "C" fn dr_dist_density(dist: *const DrDist, x: *const f64, dim: usize, out: *mut f64) -> DrStatus {
    guard(|| {
        let dist = &get(dist, "dist")?.0;
        if dim != dist.dim() {
            return Err(Error::Dimension {
                expected: dist.dim(),
                found: dim,
            }
            .into());
        }
        write(out, dist.density(slice(x, dim, "x")?), "out")
    })
}

/// Sum of the per-cell probability brackets of the forward reachable set.
#[no_mangle]
pub unsafe extern "C" fn dr_total_probability(
    part: *const DrPartition,
    dist: *const DrDist,
    out_lo: *mut f64,
    out_hi: *mut f64,
) -> DrStatus {
    guard(|| {
        let part = &get(part, "partition")?.0;
        let dist = &get(dist, "dist")?.0;
        let reach = forward_reach(&part.cells, dist)?;
        write(out_lo, reach.iter().map(|c| c.p_lo).sum(), "out_lo")?;
        write(out_hi, reach.iter().map(|c| c.p_hi).sum(), "out_hi")
    })
}

/// Probability bracket that the learned flow maps an initial state into
/// `{x | a·x ≤ b}` (row-major `rows × dim`) with `z` in `[z_min, z_max]`
/// (pass ±infinity for no bound).
#[no_mangle]
pub unsafe extern "C" fn dr_query_probability(
    part: *const DrPartition,
    dist: *const DrDist,
    a: *const f64,
    b: *const f64,
    rows: usize,
    dim: usize,
    z_min: f64,
    z_max: f64,
    out_lo: *mut f64,
    out_hi: *mut f64,
) -> DrStatus {
    guard(|| {
        let part = &get(part, "partition")?.0;
        let dist = &get(dist, "dist")?.0;
        let query = polyhedron(a, b, rows, dim)?;
        let (lo, hi) = query_probability(&part.cells, &query, ZRange::new(z_min, z_max)?, dist)?;
        write(out_lo, lo, "out_lo")?;
        write(out_hi, hi, "out_hi")
    })
}

/// Checks whether any slice's reachable states with absolute density in
/// `[rho_min, rho_max]` meet `{x | a·x ≤ b}`. Writes 1 (safe) or 0 to
/// `out_safe` and the number of LPs solved to `out_lp_calls` (may be null).
#[no_mangle]
pub unsafe extern "C" fn dr_verify_density_range(
    parts: *const *const DrPartition,
    n_parts: usize,
    dist: *const DrDist,
    a: *const f64,
    b: *const f64,
    rows: usize,
    dim: usize,
    rho_min: f64,
    rho_max: f64,
    use_heuristic: bool,
    out_safe: *mut i32,
    out_lp_calls: *mut usize,
) -> DrStatus {
    guard(|| {
        if n_parts > 0 && parts.is_null() {
            return Err(null("parts"));
        }
        let slices: Vec<Partition> = (0..n_parts)
            .map(|i| get(*parts.add(i), "partition").map(|p| p.0.clone()))
            .collect::<Result<_, _>>()?;
        let dist = &get(dist, "dist")?.0;
        let unsafe_set = polyhedron(a, b, rows, dim)?;
        let v = verify_density_range(&slices, &unsafe_set, rho_min, rho_max, dist, use_heuristic)?;
        write(out_safe, i32::from(v.safe), "out_safe")?;
        if !out_lp_calls.is_null() {
            *out_lp_calls = v.stats.lp_calls;
        }
        Ok(())
    })
}
